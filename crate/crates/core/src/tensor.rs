//! Dense order-3 tensors and the multilinear algebra used by the other
//! pipelines.
//!
//! Entries are stored column-major: `(i1, i2, i3)` lives at
//! `i1 + I1 * (i2 + I2 * i3)`. With this layout the mode-1 unfolding is a
//! plain reshape and every unfolding follows the usual index rule
//! `j = Σ_{p≠k} i_p J_p` with `J_p = Π_{q<p, q≠k} I_q` (zero-based).
//! All indices in this module are zero-based.

use crate::error::{invalid, Result};
use crate::Matrix;

/// Mode of an order-3 tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    One,
    Two,
    Three,
}

impl Mode {
    /// Maps a one-based mode number onto a [`Mode`].
    pub fn from_index(k: usize) -> Result<Self> {
        match k {
            1 => Ok(Mode::One),
            2 => Ok(Mode::Two),
            3 => Ok(Mode::Three),
            _ => invalid(format!("mode index {k} outside 1..=3")),
        }
    }

    fn axis(self) -> usize {
        match self {
            Mode::One => 0,
            Mode::Two => 1,
            Mode::Three => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dims: [usize; 3]) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self {
            dims,
            data: vec![0.0; dims.iter().product()],
        })
    }

    /// Wraps column-major data, validating length and finiteness.
    pub fn from_vec(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        check_dims(dims)?;
        let len: usize = dims.iter().product();
        if data.len() != len {
            return invalid(format!(
                "tensor data has {} entries, dims {:?} need {}",
                data.len(),
                dims,
                len
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return invalid("tensor entries must be finite");
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut t = Self::zeros(dims)?;
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let idx = t.offset(i, j, k);
                    t.data[idx] = f(i, j, k);
                }
            }
        }
        if t.data.iter().any(|v| !v.is_finite()) {
            return invalid("tensor entries must be finite");
        }
        Ok(t)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let idx = self.offset(i, j, k);
        self.data[idx] = v;
    }

    /// Frontal slice `X(:, :, k)`.
    pub fn slice(&self, k: usize) -> Matrix {
        let [d0, d1, _] = self.dims;
        Matrix::from_fn(d0, d1, |i, j| self.get(i, j, k))
    }

    pub fn sub(&self, other: &Tensor3) -> Result<Tensor3> {
        same_dims(self, other)?;
        Ok(Tensor3 {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }
}

fn check_dims(dims: [usize; 3]) -> Result<()> {
    if dims.contains(&0) {
        return invalid(format!("tensor dims must be positive, got {dims:?}"));
    }
    Ok(())
}

fn same_dims(a: &Tensor3, b: &Tensor3) -> Result<()> {
    if a.dims != b.dims {
        return invalid(format!("dimension mismatch {:?} vs {:?}", a.dims, b.dims));
    }
    Ok(())
}

/// `u ∘ v ∘ w`.
pub fn outer_product(u: &[f64], v: &[f64], w: &[f64]) -> Result<Tensor3> {
    if u.is_empty() || v.is_empty() || w.is_empty() {
        return invalid("outer product of an empty vector");
    }
    Tensor3::from_fn([u.len(), v.len(), w.len()], |i, j, k| u[i] * v[j] * w[k])
}

pub fn inner_product(a: &Tensor3, b: &Tensor3) -> Result<f64> {
    same_dims(a, b)?;
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum())
}

/// Squared Frobenius norm; bit-identical to `inner_product(a, a)`.
pub fn frobenius_norm_sq(a: &Tensor3) -> f64 {
    a.data.iter().zip(&a.data).map(|(x, y)| x * y).sum()
}

pub fn frobenius_norm(a: &Tensor3) -> f64 {
    frobenius_norm_sq(a).sqrt()
}

/// Mode-k unfolding: an `I_k × Π_{p≠k} I_p` matrix whose columns are the
/// mode-k fibers.
pub fn matricize(a: &Tensor3, mode: Mode) -> Matrix {
    let [d0, d1, d2] = a.dims;
    match mode {
        Mode::One => Matrix::from_column_slice(d0, d1 * d2, &a.data),
        Mode::Two => Matrix::from_fn(d1, d0 * d2, |j, col| {
            let (i, k) = (col % d0, col / d0);
            a.get(i, j, k)
        }),
        Mode::Three => Matrix::from_fn(d2, d0 * d1, |k, col| {
            let (i, j) = (col % d0, col / d0);
            a.get(i, j, k)
        }),
    }
}

/// One-based convenience wrapper over [`matricize`].
pub fn mode_k_matricize(a: &Tensor3, k: usize) -> Result<Matrix> {
    Ok(matricize(a, Mode::from_index(k)?))
}

/// Inverse of [`matricize`] for a tensor of shape `dims`.
pub fn refold(m: &Matrix, mode: Mode, dims: [usize; 3]) -> Result<Tensor3> {
    check_dims(dims)?;
    let [d0, d1, d2] = dims;
    let expect = match mode {
        Mode::One => (d0, d1 * d2),
        Mode::Two => (d1, d0 * d2),
        Mode::Three => (d2, d0 * d1),
    };
    if m.shape() != expect {
        return invalid(format!(
            "unfolding has shape {:?}, expected {:?} for dims {dims:?}",
            m.shape(),
            expect
        ));
    }
    Tensor3::from_fn(dims, |i, j, k| match mode {
        Mode::One => m[(i, j + d1 * k)],
        Mode::Two => m[(j, i + d0 * k)],
        Mode::Three => m[(k, i + d0 * j)],
    })
}

/// Column-wise Kronecker product; row `i * J + j` of column `f` is
/// `A(i, f) * B(j, f)`.
pub fn khatri_rao(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.ncols() != b.ncols() {
        return invalid(format!(
            "khatri-rao needs equal column counts, got {} and {}",
            a.ncols(),
            b.ncols()
        ));
    }
    let rows_b = b.nrows();
    Ok(Matrix::from_fn(a.nrows() * rows_b, a.ncols(), |r, f| {
        a[(r / rows_b, f)] * b[(r % rows_b, f)]
    }))
}

/// `a ×_k m` where `m` is `J × I_k`.
pub fn mode_k_product(a: &Tensor3, mode: Mode, m: &Matrix) -> Result<Tensor3> {
    let axis = mode.axis();
    if m.ncols() != a.dims[axis] {
        return invalid(format!(
            "mode-{} product needs {} columns, matrix has {}",
            axis + 1,
            a.dims[axis],
            m.ncols()
        ));
    }
    let mut dims = a.dims;
    dims[axis] = m.nrows();
    let unfolded = matricize(a, mode);
    let product = m * unfolded;
    refold(&product, mode, dims)
}

/// Rank-k CP model `Σ_f A(:,f) ∘ B(:,f) ∘ C(:,f)`.
pub fn cp_compose(a: &Matrix, b: &Matrix, c: &Matrix) -> Result<Tensor3> {
    let k = a.ncols();
    if b.ncols() != k || c.ncols() != k {
        return invalid("cp factors need equal column counts");
    }
    // X_(1) = A (C ⊙ B)ᵀ
    let kr = khatri_rao(c, b)?;
    let unfolded = a * kr.transpose();
    refold(&unfolded, Mode::One, [a.nrows(), b.nrows(), c.nrows()])
}

/// An `m × m × n` tensor whose frontal slices are symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct PartiallySymmetricTensor3(Tensor3);

impl PartiallySymmetricTensor3 {
    /// Accepts a tensor whose frontal slices are exactly symmetric.
    pub fn new(t: Tensor3) -> Result<Self> {
        let [d0, d1, d2] = t.dims();
        if d0 != d1 {
            return invalid(format!("partially symmetric tensor needs I1 = I2, got {d0} and {d1}"));
        }
        for s in 0..d2 {
            for j in 0..d1 {
                for i in 0..j {
                    if t.get(i, j, s) != t.get(j, i, s) {
                        return invalid(format!("slice {s} is not symmetric at ({i}, {j})"));
                    }
                }
            }
        }
        Ok(Self(t))
    }

    pub fn tensor(&self) -> &Tensor3 {
        &self.0
    }

    pub fn into_inner(self) -> Tensor3 {
        self.0
    }

    /// Number of network nodes `m`.
    pub fn nodes(&self) -> usize {
        self.0.dims()[0]
    }

    /// Number of stacked networks `n`.
    pub fn subjects(&self) -> usize {
        self.0.dims()[2]
    }
}

/// Absolute tolerance under which an input matrix is accepted as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Stacks symmetric `m × m` matrices into an `m × m × n` tensor. Matrices
/// within [`SYMMETRY_TOL`] of symmetric are symmetrized by averaging.
pub fn stack_networks(mats: &[Matrix]) -> Result<PartiallySymmetricTensor3> {
    let Some(first) = mats.first() else {
        return invalid("no networks to stack");
    };
    let m = first.nrows();
    if m == 0 {
        return invalid("empty network matrix");
    }
    for (s, a) in mats.iter().enumerate() {
        if a.nrows() != m || a.ncols() != m {
            return invalid(format!("network {s} has shape {:?}, expected ({m}, {m})", a.shape()));
        }
        for j in 0..m {
            for i in 0..j {
                if (a[(i, j)] - a[(j, i)]).abs() > SYMMETRY_TOL {
                    return invalid(format!("network {s} is not symmetric at ({i}, {j})"));
                }
            }
        }
    }
    let t = Tensor3::from_fn([m, m, mats.len()], |i, j, s| {
        let a = &mats[s];
        if i == j {
            a[(i, i)]
        } else {
            // same expression for (i,j) and (j,i) so the result is exactly symmetric
            let (lo, hi) = if i < j { (i, j) } else { (j, i) };
            0.5 * (a[(lo, hi)] + a[(hi, lo)])
        }
    })?;
    PartiallySymmetricTensor3::new(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, dims: [usize; 3]) -> Tensor3 {
        Tensor3::from_fn(dims, |_, _, _| rng.random_range(-1.0..1.0)).unwrap()
    }

    #[test]
    fn outer_product_examples() {
        let t = outer_product(&[1.0, 2.0], &[3.0, 4.0], &[1.0]).unwrap();
        assert_eq!(t.slice(0), Matrix::from_row_slice(2, 2, &[3.0, 4.0, 6.0, 8.0]));

        let z = outer_product(&[0.0, 0.0], &[5.0, -1.0], &[2.0]).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));

        let t = outer_product(&[1.0, 2.0], &[1.0, 0.0, 1.0], &[2.0, 3.0]).unwrap();
        // one-based (2,3,2)
        assert_eq!(t.get(1, 2, 1), 6.0);

        assert!(outer_product(&[], &[1.0], &[1.0]).is_err());
    }

    #[test]
    fn inner_product_and_norm() {
        let ones = outer_product(&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(inner_product(&ones, &ones).unwrap(), 8.0);
        assert_eq!(frobenius_norm(&ones), 8f64.sqrt());

        let zero = Tensor3::zeros([2, 2, 2]).unwrap();
        assert_eq!(inner_product(&zero, &ones).unwrap(), 0.0);
        assert_eq!(frobenius_norm(&zero), 0.0);

        let mut single = Tensor3::zeros([2, 3, 1]).unwrap();
        single.set(1, 2, 0, 3.0);
        assert_eq!(frobenius_norm(&single), 3.0);

        let other = Tensor3::zeros([2, 2, 3]).unwrap();
        assert!(inner_product(&zero, &other).is_err());
    }

    #[test]
    fn rank_one_inner_product_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let vecs: Vec<Vec<f64>> = [3, 4, 2, 3, 4, 2]
                .iter()
                .map(|&n| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let a = outer_product(&vecs[0], &vecs[1], &vecs[2]).unwrap();
            let b = outer_product(&vecs[3], &vecs[4], &vecs[5]).unwrap();
            let lhs = inner_product(&a, &b).unwrap();
            let rhs = oracle::dot(&vecs[0], &vecs[3]) * oracle::dot(&vecs[1], &vecs[4]) * oracle::dot(&vecs[2], &vecs[5]);
            assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1e-300));
        }
    }

    #[test]
    fn matricize_index_rule() {
        let mut t = Tensor3::zeros([2, 2, 2]).unwrap();
        t.set(0, 1, 0, 5.0);
        let m1 = mode_k_matricize(&t, 1).unwrap();
        assert_eq!(m1[(0, 1)], 5.0);
        assert_eq!(m1.iter().filter(|&&v| v != 0.0).count(), 1);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_tensor(&mut rng, [3, 4, 5]);
        for mode in [Mode::One, Mode::Two, Mode::Three] {
            let m = matricize(&t, mode);
            let brute = oracle::matricize_by_index_rule(&t, mode.axis());
            assert_eq!(m, brute);
            let back = refold(&m, mode, t.dims()).unwrap();
            assert_eq!(back.data(), t.data());
        }
        assert!(mode_k_matricize(&t, 4).is_err());
        assert!(mode_k_matricize(&t, 0).is_err());
    }

    #[test]
    fn rank_one_unfolding_is_khatri_rao() {
        let u = [1.0, -2.0];
        let v = [0.5, 3.0, 1.0];
        let w = [2.0, -1.0];
        let t = outer_product(&u, &v, &w).unwrap();
        let um = Matrix::from_column_slice(2, 1, &u);
        let vm = Matrix::from_column_slice(3, 1, &v);
        let wm = Matrix::from_column_slice(2, 1, &w);
        let factored = &um * khatri_rao(&wm, &vm).unwrap().transpose();
        assert_eq!(matricize(&t, Mode::One), factored);
    }

    #[test]
    fn khatri_rao_examples() {
        let i2 = Matrix::identity(2, 2);
        let kr = khatri_rao(&i2, &i2).unwrap();
        assert_eq!(
            kr,
            Matrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0])
        );
        let a = Matrix::from_column_slice(2, 1, &[1.0, 2.0]);
        let b = Matrix::from_column_slice(2, 1, &[3.0, 4.0]);
        assert_eq!(khatri_rao(&a, &b).unwrap().as_slice(), &[3.0, 4.0, 6.0, 8.0]);
        assert!(khatri_rao(&a, &Matrix::zeros(2, 2)).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = Matrix::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0));
        let b = Matrix::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0));
        let kr = khatri_rao(&a, &b).unwrap();
        let gram = kr.transpose() * &kr;
        let hadamard = (a.transpose() * &a).component_mul(&(b.transpose() * &b));
        assert!((gram - hadamard).abs().max() <= 1e-12);
    }

    #[test]
    fn mode_product_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = random_tensor(&mut rng, [2, 3, 4]);
        for (mode, n) in [(Mode::One, 2), (Mode::Two, 3), (Mode::Three, 4)] {
            let same = mode_k_product(&t, mode, &Matrix::identity(n, n)).unwrap();
            assert_eq!(same.data(), t.data());
        }
        let zero = Tensor3::zeros([2, 3, 4]).unwrap();
        let m = Matrix::from_fn(5, 3, |_, _| rng.random_range(-1.0..1.0));
        let out = mode_k_product(&zero, Mode::Two, &m).unwrap();
        assert_eq!(out.dims(), [2, 5, 4]);
        assert!(out.data().iter().all(|&v| v == 0.0));
        assert!(mode_k_product(&t, Mode::One, &m).is_err());

        // identity core times factors equals the sum of rank-one terms
        let k = 2;
        let b = Matrix::from_fn(3, k, |_, _| rng.random_range(-1.0..1.0));
        let s = Matrix::from_fn(4, k, |_, _| rng.random_range(-1.0..1.0));
        let core = Tensor3::from_fn([k, k, k], |i, j, l| if i == j && j == l { 1.0 } else { 0.0 }).unwrap();
        let via_products = mode_k_product(
            &mode_k_product(&mode_k_product(&core, Mode::One, &b).unwrap(), Mode::Two, &b).unwrap(),
            Mode::Three,
            &s,
        )
        .unwrap();
        let via_sum = oracle::cp_sum_of_outer(&b, &b, &s);
        let diff = via_products.sub(&via_sum).unwrap();
        assert!(frobenius_norm(&diff) <= 1e-12);
        let via_compose = cp_compose(&b, &b, &s).unwrap();
        assert!(frobenius_norm(&via_compose.sub(&via_sum).unwrap()) <= 1e-12);
    }

    #[test]
    fn stack_networks_examples() {
        let t = stack_networks(&[Matrix::identity(2, 2)]).unwrap();
        assert_eq!(t.tensor().get(0, 0, 0), 1.0);
        assert_eq!(t.tensor().get(1, 1, 0), 1.0);
        assert_eq!(t.tensor().get(0, 1, 0), 0.0);

        let a = Matrix::from_row_slice(2, 2, &[0.0, 0.3, 0.3, 1.0]);
        let t = stack_networks(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(t.tensor().slice(0), t.tensor().slice(1));
        assert_eq!(t.tensor().get(0, 1, 1), 0.3);
        assert_eq!(t.tensor().get(1, 0, 1), 0.3);

        let noisy = Matrix::from_row_slice(2, 2, &[0.0, 0.3, 0.3 + 1e-13, 0.0]);
        let t = stack_networks(&[noisy]).unwrap();
        assert_eq!(t.tensor().get(0, 1, 0), t.tensor().get(1, 0, 0));

        let asym = Matrix::from_row_slice(2, 2, &[0.0, 0.3, 0.4, 0.0]);
        assert!(stack_networks(&[asym]).is_err());
        assert!(stack_networks(&[Matrix::identity(2, 2), Matrix::identity(3, 3)]).is_err());
        assert!(stack_networks(&[]).is_err());
    }

    #[test]
    fn norm_squared_matches_inner_product_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let t = random_tensor(&mut rng, [3, 2, 4]);
            assert_eq!(frobenius_norm_sq(&t), inner_product(&t, &t).unwrap());
        }
    }

    proptest::proptest! {
        #[test]
        fn refold_roundtrip(d0 in 1usize..5, d1 in 1usize..5, d2 in 1usize..5, seed in 0u64..1000, k in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = random_tensor(&mut rng, [d0, d1, d2]);
            let mode = Mode::from_index(k).unwrap();
            let back = refold(&matricize(&t, mode), mode, t.dims()).unwrap();
            proptest::prop_assert_eq!(back.data(), t.data());
        }
    }
}
