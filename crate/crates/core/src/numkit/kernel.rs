use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::Matrix;

/// Similarity kernel over row vectors.
///
/// The RBF width is the dimensionality of the rows it is applied to:
/// `κ(a, b) = exp(-‖a - b‖² / d)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KernelSpec {
    Linear,
    #[default]
    Rbf,
}

impl KernelSpec {
    /// Kernel value for two equal-length vectors, with an explicit RBF width.
    pub fn eval_with_width(self, a: &[f64], b: &[f64], width: f64) -> f64 {
        match self {
            KernelSpec::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            KernelSpec::Rbf => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-d2 / width).exp()
            }
        }
    }
}

/// `n × n` kernel matrix over the rows of `z`.
pub fn kernel_matrix(z: &Matrix, spec: KernelSpec) -> Result<Matrix> {
    let (n, d) = z.shape();
    if n == 0 {
        return invalid("kernel matrix of zero instances");
    }
    if d == 0 {
        return invalid("kernel matrix over zero-dimensional features");
    }
    if z.iter().any(|v| !v.is_finite()) {
        return invalid("kernel input must be finite");
    }
    let rows: Vec<Vec<f64>> = (0..n).map(|i| z.row(i).iter().copied().collect()).collect();
    let width = d as f64;
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = if i == j && spec == KernelSpec::Rbf {
                1.0
            } else {
                spec.eval_with_width(&rows[i], &rows[j], width)
            };
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}
