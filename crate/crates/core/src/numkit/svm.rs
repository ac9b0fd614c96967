//! Binary soft-margin SVM trained in the dual.
//!
//! Pairwise coordinate descent over the dual variables with second-order
//! working-set selection (the maximal-violating-pair family of solvers). Each
//! step moves two multipliers along the equality constraint `Σ α_i y_i = 0`, so
//! that constraint holds to rounding at every iterate. The gradient is kept for
//! all variables; shrinking only narrows the working-set scan, so un-shrinking
//! at the end is free.

use crate::error::{invalid, Error, Result};
use crate::{Matrix, Vector};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct SvmOptions {
    /// Stop when the maximal violating pair gap drops below this.
    pub tol: f64,
    /// Cap on passes, where one pass is `n` pair updates.
    pub max_epochs: usize,
    pub shrinking: bool,
}

impl Default for SvmOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_epochs: 100_000,
            shrinking: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SvmSolution {
    pub alphas: Vector,
    /// Primal weights `Σ α_i y_i x_i`; empty for kernel-only training.
    pub w: Vector,
    pub b: f64,
    pub c: f64,
    /// Final maximal violating pair gap.
    pub residual: f64,
    pub iterations: usize,
}

impl SvmSolution {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + self.b
    }
}

/// Trains a linear SVM on the rows of `x` (`n × d`) with labels `±1`.
pub fn svm_train(x: &Matrix, y: &[f64], c: f64) -> Result<SvmSolution> {
    svm_train_with(x, y, c, SvmOptions::default())
}

pub fn svm_train_with(x: &Matrix, y: &[f64], c: f64, opts: SvmOptions) -> Result<SvmSolution> {
    if x.nrows() != y.len() {
        return invalid(format!("{} rows but {} labels", x.nrows(), y.len()));
    }
    let gram = x * x.transpose();
    let mut sol = svm_train_kernel(&gram, y, c, opts)?;
    let coef = Vector::from_iterator(y.len(), sol.alphas.iter().zip(y).map(|(a, y)| a * y));
    sol.w = x.transpose() * coef;
    Ok(sol)
}

/// Trains on a precomputed kernel matrix.
pub fn svm_train_kernel(k: &Matrix, y: &[f64], c: f64, opts: SvmOptions) -> Result<SvmSolution> {
    let n = y.len();
    if k.nrows() != n || k.ncols() != n {
        return invalid(format!("kernel is {:?} for {n} labels", k.shape()));
    }
    if !(c > 0.0) || !c.is_finite() {
        return invalid(format!("C must be positive, got {c}"));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return invalid("labels must be +1 or -1");
    }
    if !y.contains(&1.0) || !y.contains(&-1.0) {
        return invalid("svm training needs both classes");
    }

    let q = |i: usize, j: usize| y[i] * y[j] * k[(i, j)];
    let qd: Vec<f64> = (0..n).map(|i| k[(i, i)]).collect();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut active: Vec<usize> = (0..n).collect();
    let is_upper = |a: f64| a >= c;
    let is_lower = |a: f64| a <= 0.0;

    let max_iter = opts.max_epochs.saturating_mul(n.max(1));
    let shrink_every = n.clamp(10, 1000);
    let mut iter = 0usize;
    let mut gap;
    loop {
        if opts.shrinking && iter > 0 && iter.is_multiple_of(shrink_every) {
            let (gmax1, gmax2) = violation_extremes(&active, y, &alpha, &grad, c);
            active.retain(|&t| {
                let a = alpha[t];
                let shrink = if is_upper(a) {
                    if y[t] > 0.0 {
                        -grad[t] > gmax1
                    } else {
                        -grad[t] > gmax2
                    }
                } else if is_lower(a) {
                    if y[t] > 0.0 {
                        grad[t] > gmax2
                    } else {
                        grad[t] > gmax1
                    }
                } else {
                    false
                };
                !shrink
            });
        }

        let selected = select_pair(&active, y, &alpha, &grad, &qd, &q, c);
        gap = selected.2;
        if gap < opts.tol {
            if active.len() < n {
                active = (0..n).collect();
                let (_, _, full_gap) = select_pair(&active, y, &alpha, &grad, &qd, &q, c);
                if full_gap < opts.tol {
                    gap = full_gap;
                    break;
                }
                continue;
            }
            break;
        }
        if iter >= max_iter {
            return Err(Error::Convergence {
                iterations: iter,
                residual: gap,
            });
        }
        let (i, j) = (selected.0, selected.1);
        iter += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = q(i, j);
        if y[i] != y[j] {
            let quad = (qd[i] + qd[j] + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (qd[i] + qd[j] - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        for a in [i, j] {
            alpha[a] = alpha[a].clamp(0.0, c);
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
    }

    let b = -compute_rho(y, &alpha, &grad, c);
    Ok(SvmSolution {
        alphas: Vector::from_vec(alpha),
        w: Vector::zeros(0),
        b,
        c,
        residual: gap,
        iterations: iter,
    })
}

/// `(max_{I_up} -y G, max_{I_low} y G)` over the active set.
fn violation_extremes(active: &[usize], y: &[f64], alpha: &[f64], grad: &[f64], c: f64) -> (f64, f64) {
    let mut gmax1 = f64::NEG_INFINITY;
    let mut gmax2 = f64::NEG_INFINITY;
    for &t in active {
        if y[t] > 0.0 {
            if alpha[t] < c {
                gmax1 = gmax1.max(-grad[t]);
            }
            if alpha[t] > 0.0 {
                gmax2 = gmax2.max(grad[t]);
            }
        } else {
            if alpha[t] < c {
                gmax2 = gmax2.max(-grad[t]);
            }
            if alpha[t] > 0.0 {
                gmax1 = gmax1.max(grad[t]);
            }
        }
    }
    (gmax1, gmax2)
}

/// Second-order working set selection. Returns `(i, j, gap)`.
fn select_pair(
    active: &[usize],
    y: &[f64],
    alpha: &[f64],
    grad: &[f64],
    qd: &[f64],
    q: &impl Fn(usize, usize) -> f64,
    c: f64,
) -> (usize, usize, f64) {
    let mut gmax = f64::NEG_INFINITY;
    let mut i_sel = usize::MAX;
    for &t in active {
        if y[t] > 0.0 {
            if alpha[t] < c && -grad[t] >= gmax {
                gmax = -grad[t];
                i_sel = t;
            }
        } else if alpha[t] > 0.0 && grad[t] >= gmax {
            gmax = grad[t];
            i_sel = t;
        }
    }
    if i_sel == usize::MAX {
        return (0, 0, 0.0);
    }
    let i = i_sel;
    let mut gmax2 = f64::NEG_INFINITY;
    let mut j_sel = usize::MAX;
    let mut best = f64::INFINITY;
    for &t in active {
        if y[t] > 0.0 {
            if alpha[t] > 0.0 {
                let grad_diff = gmax + grad[t];
                gmax2 = gmax2.max(grad[t]);
                if grad_diff > 0.0 {
                    let quad = (qd[i] + qd[t] - 2.0 * y[i] * q(i, t)).max(TAU);
                    let obj = -(grad_diff * grad_diff) / quad;
                    if obj <= best {
                        best = obj;
                        j_sel = t;
                    }
                }
            }
        } else if alpha[t] < c {
            let grad_diff = gmax - grad[t];
            gmax2 = gmax2.max(-grad[t]);
            if grad_diff > 0.0 {
                let quad = (qd[i] + qd[t] + 2.0 * y[i] * q(i, t)).max(TAU);
                let obj = -(grad_diff * grad_diff) / quad;
                if obj <= best {
                    best = obj;
                    j_sel = t;
                }
            }
        }
    }
    let gap = gmax + gmax2;
    if j_sel == usize::MAX {
        // no pair with positive gradient difference: optimal
        return (i, i, if gap.is_finite() { gap.max(0.0) } else { 0.0 });
    }
    (i, j_sel, gap)
}

fn compute_rho(y: &[f64], alpha: &[f64], grad: &[f64], c: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free = 0usize;
    let mut sum_free = 0.0;
    for t in 0..y.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    if free > 0 {
        sum_free / free as f64
    } else {
        (ub + lb) / 2.0
    }
}
