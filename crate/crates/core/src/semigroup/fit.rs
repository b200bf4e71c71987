use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Half-width of the 95% interval for the slope.
    pub ci: f64,
    pub points: usize,
}

/// Least squares of `log norm` against `log(1 + t)` over `t` in `window`.
pub fn fit_rate(t: &[f64], norms: &[f64], window: [f64; 2]) -> Result<RateFit> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (&ti, &ni) in t.iter().zip(norms) {
        if ti < window[0] || ti > window[1] {
            continue;
        }
        if !(ni > 0.0) {
            return Err(Error::NonpositiveNorm { t: ti });
        }
        x.push((1.0 + ti).ln());
        y.push(ni.ln());
    }
    if x.len() < 8 {
        return Err(Error::InvalidConfig(format!("rate fit needs 8 points in [{}, {}], found {}", window[0], window[1], x.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(&y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let se = (sse / (n - 2.0) / sxx).sqrt();
    let q = StudentsT::new(0.0, 1.0, n - 2.0)
        .map_err(|e| Error::InvalidConfig(format!("{e}")))?
        .inverse_cdf(0.975);
    Ok(RateFit { slope, intercept, ci: q * se, points: x.len() })
}
