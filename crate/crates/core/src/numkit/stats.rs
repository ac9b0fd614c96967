use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTestResult {
    pub t: f64,
    pub df: f64,
    /// Upper-tail p-value for `mean(a) > mean(b)`.
    pub p: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch two-sample t-test, one-tailed with alternative `mean(a) > mean(b)`.
///
/// When both samples have zero variance but different means the statistic is
/// infinite and `p` is exactly 0 or 1.
pub fn t_test_one_tailed(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() < 2 || b.len() < 2 {
        return invalid("t-test needs at least two points per sample");
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return invalid("t-test samples must be finite");
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        if ma == mb {
            return Err(Error::Degenerate("both samples are constant with equal means".into()));
        }
        let up = ma > mb;
        return Ok(TTestResult {
            t: if up { f64::INFINITY } else { f64::NEG_INFINITY },
            df: na + nb - 2.0,
            p: if up { 0.0 } else { 1.0 },
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Degenerate(e.to_string()))?;
    Ok(TTestResult { t, df, p: dist.sf(t) })
}
