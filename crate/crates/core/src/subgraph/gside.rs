//! The gSide criterion and its lower bound.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::numkit::kernel::{kernel_matrix, KernelSpec};
use crate::numkit::linalg::laplacian;
use crate::numkit::stats::{t_test_one_tailed, TTestResult};
use crate::Matrix;

/// Side-view pair constraints from a kernel matrix. Pairs at or above the
/// mean kernel value get `1/|H|`, the rest `−1/|L|`.
pub fn build_theta(k: &Matrix) -> Result<Matrix> {
    let n = k.nrows();
    if k.ncols() != n || n == 0 {
        return invalid(format!("kernel matrix must be square and non-empty, got {:?}", k.shape()));
    }
    if k.iter().any(|v| !v.is_finite()) {
        return invalid("kernel matrix has non-finite entries");
    }
    let asym = (k - k.transpose()).abs().max();
    if asym > 1e-12 {
        return invalid(format!("kernel matrix is not symmetric (max asymmetry {asym:.3e})"));
    }
    let mu = k.mean();
    let high = k.iter().filter(|&&v| v >= mu).count();
    let low = n * n - high;
    if high == 0 || low == 0 {
        return Err(Error::Degenerate(format!(
            "kernel splits into {high} similar and {low} dissimilar pairs; both must be non-empty"
        )));
    }
    let (h, l) = (1.0 / high as f64, -1.0 / low as f64);
    Ok(k.map(|v| if v >= mu { h } else { l }))
}

/// Label pair constraints. Ordered pairs are counted, the diagonal belongs to
/// the must-link set, and unlabeled graphs get zero rows and columns. With no
/// labeled graph at all the matrix is zero.
pub fn build_omega(labels: &[Option<f64>]) -> Result<Matrix> {
    let n = labels.len();
    let pos = labels.iter().filter(|&&y| y == Some(1.0)).count();
    let neg = labels.iter().filter(|&&y| y == Some(-1.0)).count();
    if pos + neg == 0 {
        return Ok(Matrix::zeros(n, n));
    }
    let must = pos * pos + neg * neg;
    let cannot = 2 * pos * neg;
    if cannot == 0 {
        return Err(Error::Degenerate(
            "all labeled graphs share one class, so the cannot-link set is empty".into(),
        ));
    }
    let (m, c) = (1.0 / must as f64, -1.0 / cannot as f64);
    Ok(Matrix::from_fn(n, n, |i, j| match (labels[i], labels[j]) {
        (Some(a), Some(b)) if a == b => m,
        (Some(_), Some(_)) => c,
        _ => 0.0,
    }))
}

/// `Φ`, its Laplacian `L` and the entrywise `L̂ = min(0, L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedLaplacian {
    pub phi: Matrix,
    pub l: Matrix,
    pub l_hat: Matrix,
}

pub fn build_phi(omega: &Matrix, thetas: &[Matrix], lambdas: &[f64]) -> Result<SignedLaplacian> {
    if thetas.len() != lambdas.len() {
        return invalid(format!("{} side-view matrices but {} weights", thetas.len(), lambdas.len()));
    }
    let mut phi = omega.clone();
    for (theta, &lambda) in thetas.iter().zip(lambdas) {
        if theta.shape() != omega.shape() {
            return invalid(format!("side-view matrix {:?} vs label matrix {:?}", theta.shape(), omega.shape()));
        }
        if !(lambda >= 0.0) {
            return invalid(format!("side-view weight must be non-negative, got {lambda}"));
        }
        phi += theta * lambda;
    }
    let l = laplacian(&phi)?;
    let l_hat = l.map(|v| v.min(0.0));
    Ok(SignedLaplacian { phi, l, l_hat })
}

/// Sum of `m(p, q)` over supporting pairs, accumulated in index order.
fn quad_indicator(f: &[bool], m: &Matrix) -> f64 {
    let mut total = 0.0;
    for q in 0..f.len() {
        if !f[q] {
            continue;
        }
        for p in 0..f.len() {
            if f[p] {
                total += m[(p, q)];
            }
        }
    }
    total
}

/// `q = fᵀ L f`.
pub fn gside_score(f: &[bool], l: &Matrix) -> f64 {
    quad_indicator(f, l)
}

/// `q̂ = fᵀ L̂ f`. Because both sums run over pairs in the same order and
/// `L̂ ≤ min(0, L)`, floating-point rounding cannot break `q(g′) ≥ q̂(g)`.
pub fn gside_bound(f: &[bool], l_hat: &Matrix) -> f64 {
    quad_indicator(f, l_hat)
}

/// One-tailed test that kernel similarity is higher within a class than
/// across classes. `samples` pairs are drawn from each group (all of the
/// smaller group when `None`).
pub fn side_view_consistency(
    z: &Matrix,
    labels: &[Option<f64>],
    kernel: KernelSpec,
    samples: Option<usize>,
    seed: u64,
) -> Result<TTestResult> {
    if z.nrows() != labels.len() {
        return invalid(format!("side view has {} rows for {} labels", z.nrows(), labels.len()));
    }
    let k = kernel_matrix(z, kernel)?;
    let mut same = Vec::new();
    let mut diff = Vec::new();
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            if let (Some(a), Some(b)) = (labels[i], labels[j]) {
                if a * b > 0.0 {
                    same.push(k[(i, j)]);
                } else {
                    diff.push(k[(i, j)]);
                }
            }
        }
    }
    let cap = same.len().min(diff.len());
    let count = samples.unwrap_or(cap);
    if count < 2 || count > cap {
        return invalid(format!(
            "need 2..={cap} pairs per group, requested {count} ({} same-label, {} cross-label available)",
            same.len(),
            diff.len()
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = |pool: &[f64], rng: &mut ChaCha8Rng| -> Vec<f64> {
        let mut idx = sample(rng, pool.len(), count).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| pool[i]).collect()
    };
    let a = pick(&same, &mut rng);
    let b = pick(&diff, &mut rng);
    t_test_one_tailed(&a, &b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn theta_example() {
        let k = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let t = build_theta(&k).unwrap();
        assert_eq!(t, Matrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]));
        assert!(matches!(build_theta(&Matrix::from_element(3, 3, 0.2)), Err(Error::Degenerate(_))));
    }

    #[test]
    fn theta_sums_and_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = Matrix::from_fn(6, 3, |_, _| rng.random_range(0.0..1.0));
        let k = kernel_matrix(&z, KernelSpec::Rbf).unwrap();
        let t = build_theta(&k).unwrap();
        let mu = k.mean();
        let pos: f64 = t.iter().zip(k.iter()).filter(|(_, &kv)| kv >= mu).map(|(tv, _)| tv).sum();
        let neg: f64 = t.iter().zip(k.iter()).filter(|(_, &kv)| kv < mu).map(|(tv, _)| tv).sum();
        assert!((pos - 1.0).abs() < 1e-12 && (neg + 1.0).abs() < 1e-12);

        let perm = [3, 0, 5, 1, 4, 2];
        let kp = Matrix::from_fn(6, 6, |i, j| k[(perm[i], perm[j])]);
        let tp = build_theta(&kp).unwrap();
        assert_eq!(tp, Matrix::from_fn(6, 6, |i, j| t[(perm[i], perm[j])]));
    }

    #[test]
    fn omega_examples() {
        assert!(matches!(build_omega(&[Some(1.0), Some(1.0)]), Err(Error::Degenerate(_))));
        let o = build_omega(&[Some(1.0), Some(-1.0)]).unwrap();
        assert_eq!(o, Matrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]));
        let o = build_omega(&[Some(1.0), None, Some(-1.0)]).unwrap();
        assert!(o.row(1).iter().chain(o.column(1).iter()).all(|&v| v == 0.0));
        assert_eq!(build_omega(&[None, None]).unwrap(), Matrix::zeros(2, 2));
    }

    #[test]
    fn phi_examples() {
        let omega = build_omega(&[Some(1.0), Some(-1.0), Some(1.0)]).unwrap();
        let theta = build_theta(&Matrix::from_row_slice(3, 3, &[1.0, 0.2, 0.9, 0.2, 1.0, 0.1, 0.9, 0.1, 1.0])).unwrap();
        let s = build_phi(&omega, std::slice::from_ref(&theta), &[0.0]).unwrap();
        assert_eq!(s.phi, omega);
        let s = build_phi(&Matrix::zeros(3, 3), std::slice::from_ref(&theta), &[1.0]).unwrap();
        assert_eq!(s.phi, theta);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Matrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let sym = &a + a.transpose();
        let s = build_phi(&sym, &[], &[]).unwrap();
        for (lh, l) in s.l_hat.iter().zip(s.l.iter()) {
            assert_eq!(*lh, l.min(0.0));
        }
    }

    #[test]
    fn score_and_bound_examples() {
        let l = Matrix::from_row_slice(2, 2, &[0.25, -0.25, -0.25, 0.25]);
        assert_eq!(gside_score(&[false, false], &l), 0.0);
        assert_eq!(gside_score(&[true, false], &l), 0.25);

        // y = [+1, −1], label constraints only
        let s = build_phi(&build_omega(&[Some(1.0), Some(-1.0)]).unwrap(), &[], &[]).unwrap();
        assert_eq!(s.l, Matrix::from_row_slice(2, 2, &[-0.5, 0.5, 0.5, -0.5]));
        assert_eq!(gside_score(&[true, false], &s.l), -0.5);
        assert_eq!(s.l_hat, Matrix::from_row_slice(2, 2, &[-0.5, 0.0, 0.0, -0.5]));
        assert_eq!(gside_bound(&[true, true], &s.l_hat), -1.0);
        assert!(gside_score(&[true, false], &s.l) >= gside_bound(&[true, true], &s.l_hat));

        let nonneg = Matrix::from_element(2, 2, 0.3);
        let lh = nonneg.map(|v: f64| v.min(0.0));
        assert_eq!(gside_bound(&[true, true], &lh), 0.0);
        assert_eq!(gside_bound(&[false, false], &s.l_hat), 0.0);
    }

    #[test]
    fn consistency_detects_label_aligned_view() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let labels: Vec<Option<f64>> = (0..30).map(|i| Some(if i % 2 == 0 { 1.0 } else { -1.0 })).collect();
        let z = Matrix::from_fn(30, 2, |i, _| labels[i].unwrap() + 0.3 * rng.random_range(-1.0..1.0));
        let r = side_view_consistency(&z, &labels, KernelSpec::Rbf, Some(100), 3).unwrap();
        assert!(r.p < 1e-6, "p = {}", r.p);
    }
}
