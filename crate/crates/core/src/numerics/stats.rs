use serde::{Deserialize, Serialize};

use super::{NumericsError, Result};

const PERFECT_SNAP: f64 = 8.0 * f64::EPSILON;

/// Sample Pearson correlation. `Ok(None)` when either input has zero
/// variance, since the coefficient is undefined there. Results within a few
/// ulps of ±1 are snapped to ±1 so that perfectly correlated data reads as
/// such despite rounding in the centered sums.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    if x.len() != y.len() {
        return Err(NumericsError::Shape(format!(
            "pearson of lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(NumericsError::InvalidArgument(format!(
            "pearson needs at least 2 points, got {}",
            x.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    if 1.0 - r.abs() <= PERFECT_SNAP {
        return Ok(Some(r.signum()));
    }
    Ok(Some(r))
}

/// Student t statistic of a correlation coefficient. Perfect correlation has
/// a zero denominator and is flagged as infinite with its sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TStat {
    Finite(f64),
    Infinite { positive: bool },
}

impl TStat {
    pub fn as_f64(self) -> f64 {
        match self {
            TStat::Finite(v) => v,
            TStat::Infinite { positive: true } => f64::INFINITY,
            TStat::Infinite { positive: false } => f64::NEG_INFINITY,
        }
    }
}

/// `t = r · √((n − 2) / (1 − r²))`.
pub fn t_statistic(r: f64, n: usize) -> Result<TStat> {
    if n < 3 {
        return Err(NumericsError::InvalidArgument(format!("t statistic needs n >= 3, got {n}")));
    }
    if !r.is_finite() || r.abs() > 1.0 {
        return Err(NumericsError::InvalidArgument(format!("correlation {r} outside [-1, 1]")));
    }
    let denom = 1.0 - r * r;
    if denom <= 0.0 {
        return Ok(TStat::Infinite { positive: r > 0.0 });
    }
    Ok(TStat::Finite(r * ((n as f64 - 2.0) / denom).sqrt()))
}
