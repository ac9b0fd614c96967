//! Minimization over `{S : SᵀS = I}` by curvilinear search.
//!
//! Each step follows the Cayley curve
//! `Y(τ) = (I + τ/2 A)⁻¹ (I − τ/2 A) S` with the skew matrix `A = G Sᵀ − S Gᵀ`,
//! which stays on the manifold for every `τ`. The step size starts from a
//! Barzilai–Borwein estimate and is backtracked under a nonmonotone Armijo
//! rule (Zhang–Hager averaging of past objective values). The solve uses the
//! `2k × 2k` Woodbury form since `A = U Vᵀ` with `U = [G, S]`, `V = [S, −G]`.

use crate::error::{invalid, Result};
use crate::Matrix;

/// Feasibility tolerance `‖SᵀS − I‖_F` for accepted iterates.
pub const FEASIBILITY_TOL: f64 = 1e-8;

pub struct StiefelProblem<F, G>
where
    F: Fn(&Matrix) -> f64,
    G: Fn(&Matrix) -> Matrix,
{
    pub objective: F,
    pub gradient: G,
    pub initial: Matrix,
}

#[derive(Debug, Clone, Copy)]
pub struct StiefelOptions {
    pub max_iters: usize,
    /// Stop when `‖G − S Gᵀ S‖_F` falls below this.
    pub tol: f64,
    pub initial_step: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Backtracking factor.
    pub backtrack: f64,
    /// Weight of the running average in the nonmonotone reference value.
    pub nonmonotone: f64,
    pub max_backtracks: usize,
}

impl Default for StiefelOptions {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tol: 1e-6,
            initial_step: 1e-3,
            armijo: 1e-4,
            backtrack: 0.1,
            nonmonotone: 0.85,
            max_backtracks: 30,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StiefelResult {
    pub s: Matrix,
    pub value: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    /// Largest `‖SᵀS − I‖_F` seen over all accepted iterates.
    pub max_infeasibility: f64,
}

pub fn feasibility_error(s: &Matrix) -> f64 {
    let k = s.ncols();
    (s.transpose() * s - Matrix::identity(k, k)).norm()
}

fn projected_gradient(s: &Matrix, g: &Matrix) -> Matrix {
    g - s * (g.transpose() * s)
}

/// Point on the Cayley curve through `s` at step `tau`.
fn cayley_step(s: &Matrix, g: &Matrix, tau: f64) -> Option<Matrix> {
    let k = s.ncols();
    let u = Matrix::from_fn(s.nrows(), 2 * k, |i, j| if j < k { g[(i, j)] } else { s[(i, j - k)] });
    let v = Matrix::from_fn(s.nrows(), 2 * k, |i, j| if j < k { s[(i, j)] } else { -g[(i, j - k)] });
    let mut m = v.transpose() * &u * (tau / 2.0);
    for i in 0..2 * k {
        m[(i, i)] += 1.0;
    }
    let rhs = v.transpose() * s;
    let lu = m.lu();
    let sol = lu.solve(&rhs)?;
    Some(s - u * sol * tau)
}

/// Re-orthonormalizes by a sign-fixed QR when rounding drift accumulates.
fn polish(s: Matrix) -> Matrix {
    if feasibility_error(&s) <= 1e-12 {
        return s;
    }
    let qr = s.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn stiefel_minimize<F, G>(p: &StiefelProblem<F, G>, opts: StiefelOptions) -> Result<StiefelResult>
where
    F: Fn(&Matrix) -> f64,
    G: Fn(&Matrix) -> Matrix,
{
    let s0 = &p.initial;
    if s0.ncols() > s0.nrows() || s0.ncols() == 0 {
        return invalid(format!("stiefel point needs 0 < k ≤ n, got {:?}", s0.shape()));
    }
    let infeasible = feasibility_error(s0);
    if !(infeasible <= FEASIBILITY_TOL) {
        return invalid(format!("initial point is not orthonormal (‖SᵀS − I‖ = {infeasible:.3e})"));
    }

    let mut s = s0.clone();
    let mut f = (p.objective)(&s);
    let mut g = (p.gradient)(&s);
    let mut pg = projected_gradient(&s, &g);
    let mut best = (s.clone(), f);
    let mut max_infeasibility = infeasible;

    // nonmonotone reference
    let mut c_ref = f;
    let mut q_ref = 1.0;
    let mut tau = opts.initial_step;
    let mut iterations = 0;
    let mut grad_norm = pg.norm();

    while iterations < opts.max_iters && grad_norm > opts.tol {
        // slope of f along the curve at τ = 0 is −⟨A S, G⟩
        let a_s = &g * (s.transpose() * &s) - &s * (g.transpose() * &s);
        let deriv = -(a_s.component_mul(&g)).sum();
        if !(deriv < 0.0) {
            break;
        }
        let mut accepted = None;
        let mut step = tau;
        for _ in 0..=opts.max_backtracks {
            if let Some(cand) = cayley_step(&s, &g, step) {
                let fc = (p.objective)(&cand);
                if fc.is_finite() && fc <= c_ref + opts.armijo * step * deriv {
                    accepted = Some((cand, fc));
                    break;
                }
            }
            step *= opts.backtrack;
        }
        let Some((next, f_next)) = accepted else {
            break;
        };
        let polished = polish(next.clone());
        let f_next = if polished == next { f_next } else { (p.objective)(&polished) };
        let next = polished;
        let feas = feasibility_error(&next);
        max_infeasibility = max_infeasibility.max(feas);
        assert!(
            feas <= FEASIBILITY_TOL,
            "curvilinear search left the manifold: ‖SᵀS − I‖ = {feas:.3e}"
        );

        let g_next = (p.gradient)(&next);
        let pg_next = projected_gradient(&next, &g_next);
        let ds = &next - &s;
        let dy = &pg_next - &pg;
        let sy = ds.dot(&dy).abs();
        tau = if iterations % 2 == 0 {
            ds.norm_squared() / sy
        } else {
            sy / dy.norm_squared()
        };
        if !tau.is_finite() || tau <= 0.0 {
            tau = opts.initial_step;
        }
        tau = tau.clamp(1e-20, 1e20);

        let q_next = opts.nonmonotone * q_ref + 1.0;
        c_ref = (opts.nonmonotone * q_ref * c_ref + f_next) / q_next;
        q_ref = q_next;

        s = next;
        f = f_next;
        g = g_next;
        pg = pg_next;
        grad_norm = pg.norm();
        iterations += 1;
        if f < best.1 {
            best = (s.clone(), f);
        }
    }

    let converged = grad_norm <= opts.tol;
    // the nonmonotone rule can end above the best visited point
    let (s_out, value) = if f <= best.1 { (s, f) } else { best };
    let grad_norm = projected_gradient(&s_out, &(p.gradient)(&s_out)).norm();
    Ok(StiefelResult {
        s: s_out,
        value,
        iterations,
        grad_norm,
        converged,
        max_infeasibility,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rotation_converges_to_identity() {
        let eye = Matrix::identity(2, 2);
        let prob = StiefelProblem {
            objective: |s: &Matrix| (s - Matrix::identity(2, 2)).norm_squared(),
            gradient: |s: &Matrix| (s - Matrix::identity(2, 2)) * 2.0,
            initial: Matrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]),
        };
        let res = stiefel_minimize(&prob, StiefelOptions { tol: 1e-10, ..Default::default() }).unwrap();
        assert!((res.s - eye).norm() < 1e-6, "value {}", res.value);
        assert!(res.max_infeasibility <= FEASIBILITY_TOL);
    }

    #[test]
    fn constant_objective_returns_start() {
        let s0 = Matrix::from_row_slice(3, 1, &[0.0, 1.0, 0.0]);
        let prob = StiefelProblem {
            objective: |_: &Matrix| 4.0,
            gradient: |s: &Matrix| Matrix::zeros(s.nrows(), s.ncols()),
            initial: s0.clone(),
        };
        let res = stiefel_minimize(&prob, StiefelOptions::default()).unwrap();
        assert_eq!(res.s, s0);
        assert_eq!(res.iterations, 0);
    }

    #[test]
    fn trace_objective_finds_smallest_eigenvector() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 0.5, 2.0, 1.5]));
        let mut s0 = Matrix::from_fn(4, 1, |_, _| rng.random_range(-1.0..1.0));
        let nrm = s0.norm();
        s0 /= nrm;
        let mm = m.clone();
        let prob = StiefelProblem {
            objective: move |s: &Matrix| (s.transpose() * &m * s).trace(),
            gradient: move |s: &Matrix| &mm * s * 2.0,
            initial: s0,
        };
        let res = stiefel_minimize(&prob, StiefelOptions { tol: 1e-9, max_iters: 5000, ..Default::default() }).unwrap();
        let eig = SymmetricEigen::new(Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 0.5, 2.0, 1.5])));
        let idx = eig.eigenvalues.imin();
        let v = eig.eigenvectors.column(idx);
        let cos = (res.s.column(0).dot(&v)).abs();
        assert!((cos - 1.0).abs() < 1e-8);
    }

    #[test]
    fn infeasible_start_rejected() {
        let prob = StiefelProblem {
            objective: |_: &Matrix| 0.0,
            gradient: |s: &Matrix| s.clone(),
            initial: Matrix::from_row_slice(2, 1, &[1.0, 1.0]),
        };
        assert!(stiefel_minimize(&prob, StiefelOptions::default()).is_err());
    }

    #[test]
    fn objective_never_above_start() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..10 {
            let target = Matrix::from_fn(6, 2, |_, _| rng.random_range(-1.0..1.0));
            let s0 = Matrix::from_fn(6, 2, |_, _| rng.random_range(-1.0..1.0)).qr().q();
            let t2 = target.clone();
            let prob = StiefelProblem {
                objective: move |s: &Matrix| (s - &target).norm_squared(),
                gradient: move |s: &Matrix| (s - &t2) * 2.0,
                initial: s0.clone(),
            };
            let res = stiefel_minimize(&prob, StiefelOptions::default()).unwrap();
            assert!(res.value <= (prob.objective)(&s0));
            assert!(feasibility_error(&res.s) <= FEASIBILITY_TOL);
        }
    }
}
