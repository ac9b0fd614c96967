//! Late-fusion heads over per-view encoder outputs.

use serde::{Deserialize, Serialize};

use super::gru::glorot;
use crate::error::{invalid, Result};
use crate::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Fc,
    Fm,
    Mvm,
}

impl std::fmt::Display for HeadKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HeadKind::Fc => "fc",
            HeadKind::Fm => "fm",
            HeadKind::Mvm => "mvm",
        })
    }
}

/// Fusion parameters. `d_c` is the concatenated width of all views.
#[derive(Debug, Clone, PartialEq)]
pub enum FusionHead {
    /// `ŷ = W₂ ReLU(W₁ [h; 1])`, `W₁: d_k′ × (d_c+1)`, `W₂: c × d_k′`.
    Fc { w1: Matrix, w2: Matrix },
    /// Per class `a`: `U_a: d_k × d_c` and `w_a: (d_c+1) × 1`.
    Fm { u: Vec<Matrix>, w: Vec<Matrix> },
    /// `u[a][p]: d_k × (width_p + 1)`.
    Mvm { u: Vec<Vec<Matrix>> },
}

/// Number of fusion parameters from the closed-form counts, with `d_k` the
/// FM/MVM width; the FC head uses `c·d_k` hidden units.
pub fn parameter_count(kind: HeadKind, c: usize, d_k: usize, d_c: usize, m: usize) -> usize {
    match kind {
        HeadKind::Mvm => c * d_k * (d_c + m),
        HeadKind::Fm => c * d_k * d_c + c * (d_c + 1),
        HeadKind::Fc => (c * d_k) * (d_c + c + 1),
    }
}

fn with_one(h: &Vector) -> Vector {
    let mut out = Vector::zeros(h.len() + 1);
    out.rows_mut(0, h.len()).copy_from(h);
    out[h.len()] = 1.0;
    out
}

fn concat(views: &[Vector]) -> Vector {
    Vector::from_iterator(views.iter().map(|v| v.len()).sum(), views.iter().flat_map(|v| v.iter().copied()))
}

impl FusionHead {
    /// Zero head, or Glorot-uniform when `rng` is given. `widths` are the
    /// per-view encoder output sizes.
    pub fn new(kind: HeadKind, c: usize, d_k: usize, widths: &[usize], rng: Option<&mut dyn rand::RngCore>) -> Result<Self> {
        if c == 0 || d_k == 0 || widths.is_empty() || widths.contains(&0) {
            return invalid("fusion head needs c, d_k and every view width positive");
        }
        if kind == HeadKind::Mvm && widths.len() < 2 {
            return invalid("the MVM head needs at least two views");
        }
        let d_c: usize = widths.iter().sum();
        let mut rng = rng;
        let mut mat = |r: usize, cols: usize| match rng.as_deref_mut() {
            Some(g) => glorot_dyn(r, cols, g),
            None => Matrix::zeros(r, cols),
        };
        Ok(match kind {
            HeadKind::Fc => {
                let hidden = c * d_k;
                let w1 = mat(hidden, d_c + 1);
                let w2 = mat(c, hidden);
                FusionHead::Fc { w1, w2 }
            }
            HeadKind::Fm => {
                let mut u = Vec::new();
                let mut w = Vec::new();
                for _ in 0..c {
                    u.push(mat(d_k, d_c));
                    w.push(mat(d_c + 1, 1));
                }
                FusionHead::Fm { u, w }
            }
            HeadKind::Mvm => FusionHead::Mvm {
                u: (0..c).map(|_| widths.iter().map(|&wd| mat(d_k, wd + 1)).collect()).collect(),
            },
        })
    }

    pub fn kind(&self) -> HeadKind {
        match self {
            FusionHead::Fc { .. } => HeadKind::Fc,
            FusionHead::Fm { .. } => HeadKind::Fm,
            FusionHead::Mvm { .. } => HeadKind::Mvm,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            FusionHead::Fc { w2, .. } => w2.nrows(),
            FusionHead::Fm { u, .. } => u.len(),
            FusionHead::Mvm { u } => u.len(),
        }
    }

    pub fn matrices(&self) -> Vec<&Matrix> {
        match self {
            FusionHead::Fc { w1, w2 } => vec![w1, w2],
            FusionHead::Fm { u, w } => u.iter().zip(w).flat_map(|(a, b)| [a, b]).collect(),
            FusionHead::Mvm { u } => u.iter().flatten().collect(),
        }
    }

    pub fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            FusionHead::Fc { w1, w2 } => vec![w1, w2],
            FusionHead::Fm { u, w } => u.iter_mut().zip(w.iter_mut()).flat_map(|(a, b)| [a, b]).collect(),
            FusionHead::Mvm { u } => u.iter_mut().flatten().collect(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.matrices().iter().map(|m| m.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for m in z.matrices_mut() {
            m.fill(0.0);
        }
        z
    }

    fn check_widths(&self, views: &[Vector]) -> Result<()> {
        let d_c: usize = views.iter().map(|v| v.len()).sum();
        let ok = match self {
            FusionHead::Fc { w1, .. } => w1.ncols() == d_c + 1,
            FusionHead::Fm { u, .. } => u.iter().all(|ua| ua.ncols() == d_c),
            FusionHead::Mvm { u } => u
                .iter()
                .all(|ua| ua.len() == views.len() && ua.iter().zip(views).all(|(m, h)| m.ncols() == h.len() + 1)),
        };
        if ok {
            Ok(())
        } else {
            invalid("encoder outputs do not match the fusion head widths")
        }
    }

    /// Class scores `ŷ ∈ ℝ^c`.
    pub fn forward(&self, views: &[Vector]) -> Result<Vector> {
        self.check_widths(views)?;
        Ok(match self {
            FusionHead::Fc { w1, w2 } => {
                let pre = w1 * with_one(&concat(views));
                w2 * pre.map(|v| v.max(0.0))
            }
            FusionHead::Fm { u, w } => {
                let h = concat(views);
                let hb = with_one(&h);
                Vector::from_fn(u.len(), |a, _| {
                    let q = &u[a] * &h;
                    q.dot(&q) + w[a].column(0).dot(&hb)
                })
            }
            FusionHead::Mvm { u } => {
                let bars: Vec<Vector> = views.iter().map(with_one).collect();
                Vector::from_fn(u.len(), |a, _| mvm_score(&u[a], &bars))
            }
        })
    }

    /// Parameter gradients and per-view input gradients for upstream
    /// `∂loss/∂ŷ`.
    pub fn backward(&self, views: &[Vector], dy: &Vector) -> (FusionHead, Vec<Vector>) {
        let mut g = self.zeros_like();
        let widths: Vec<usize> = views.iter().map(|v| v.len()).collect();
        let dh_cat = match (self, &mut g) {
            (FusionHead::Fc { w1, w2 }, FusionHead::Fc { w1: g1, w2: g2 }) => {
                let hb = with_one(&concat(views));
                let pre = w1 * &hb;
                let q = pre.map(|v| v.max(0.0));
                *g2 = dy * q.transpose();
                let dq = w2.transpose() * dy;
                let dpre = dq.zip_map(&pre, |d, p| if p > 0.0 { d } else { 0.0 });
                *g1 = &dpre * hb.transpose();
                let dhb = w1.transpose() * dpre;
                dhb.rows(0, hb.len() - 1).into_owned()
            }
            (FusionHead::Fm { u, w }, FusionHead::Fm { u: gu, w: gw }) => {
                let h = concat(views);
                let hb = with_one(&h);
                let mut dh = Vector::zeros(h.len());
                for a in 0..u.len() {
                    let q = &u[a] * &h;
                    gu[a] = &q * h.transpose() * (2.0 * dy[a]);
                    gw[a] = Matrix::from_column_slice(hb.len(), 1, (&hb * dy[a]).as_slice());
                    dh += (u[a].transpose() * &q * 2.0 + w[a].rows(0, h.len()).column(0)) * dy[a];
                }
                dh
            }
            (FusionHead::Mvm { u }, FusionHead::Mvm { u: gu }) => {
                let bars: Vec<Vector> = views.iter().map(with_one).collect();
                let mut dviews: Vec<Vector> = widths.iter().map(|&w| Vector::zeros(w)).collect();
                for a in 0..u.len() {
                    let qs: Vec<Vector> = u[a].iter().zip(&bars).map(|(m, hb)| m * hb).collect();
                    for p in 0..qs.len() {
                        let dq = Vector::from_fn(qs[p].len(), |f, _| {
                            dy[a] * (0..qs.len()).filter(|&o| o != p).map(|o| qs[o][f]).product::<f64>()
                        });
                        gu[a][p] = &dq * bars[p].transpose();
                        let dhb = u[a][p].transpose() * dq;
                        dviews[p] += dhb.rows(0, widths[p]);
                    }
                }
                return (g, dviews);
            }
            _ => unreachable!("gradient head mirrors the parameter head"),
        };
        let mut out = Vec::with_capacity(widths.len());
        let mut offset = 0;
        for w in widths {
            out.push(dh_cat.rows(offset, w).into_owned());
            offset += w;
        }
        (g, out)
    }
}

fn glorot_dyn(rows: usize, cols: usize, mut rng: &mut dyn rand::RngCore) -> Matrix {
    glorot(rows, cols, &mut rng)
}

fn mvm_score(us: &[Matrix], bars: &[Vector]) -> f64 {
    let mut prod = Vector::from_element(us[0].nrows(), 1.0);
    for (m, hb) in us.iter().zip(bars) {
        prod.component_mul_assign(&(m * hb));
    }
    prod.sum()
}

/// `W₂ ReLU(W₁ [h; 1])`.
pub fn fc_head(h: &Vector, head: &FusionHead) -> Result<Vector> {
    match head {
        FusionHead::Fc { .. } => head.forward(std::slice::from_ref(h)),
        _ => invalid("fc_head needs an FC head"),
    }
}

/// `sum(q_a ∗ q_a) + w_aᵀ[h; 1]` with `q_a = U_a h`.
pub fn fm_head(h: &Vector, head: &FusionHead, a: usize) -> Result<f64> {
    match head {
        FusionHead::Fm { u, .. } if a < u.len() => Ok(head.forward(std::slice::from_ref(h))?[a]),
        FusionHead::Fm { .. } => invalid(format!("class {a} out of range")),
        _ => invalid("fm_head needs an FM head"),
    }
}

/// `sum(q_a⁽¹⁾ ∗ ⋯ ∗ q_a⁽ᵐ⁾)` with `q_a⁽ᵖ⁾ = U_a⁽ᵖ⁾[h⁽ᵖ⁾; 1]`.
pub fn mvm_head(h_views: &[Vector], head: &FusionHead, a: usize) -> Result<f64> {
    match head {
        FusionHead::Mvm { u } if a < u.len() => {
            head.check_widths(h_views)?;
            let bars: Vec<Vector> = h_views.iter().map(with_one).collect();
            Ok(mvm_score(&u[a], &bars))
        }
        FusionHead::Mvm { .. } => invalid(format!("class {a} out of range")),
        _ => invalid("mvm_head needs an MVM head"),
    }
}
