use serde::Serialize;

use crate::error::{Error, Result};

/// Least-squares line through `(log dt, log error)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Points used in the fit.
    pub points: Vec<(f64, f64)>,
}

/// Fits `log error = intercept + slope log dt`. With `drop_coarsest` the
/// point with the largest `dt` is excluded. At least three points must
/// remain and every error must be positive and finite.
pub fn fit_rate(points: &[(f64, f64)], drop_coarsest: bool) -> Result<RateFit> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    if drop_coarsest && !pts.is_empty() {
        let (i, _) = pts
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, p)| if p.0 > acc.1 { (i, p.0) } else { acc });
        pts.remove(i);
    }
    if pts.len() < 3 {
        return Err(Error::RateFit(format!("need at least 3 points, got {}", pts.len())));
    }
    for &(dt, e) in &pts {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::RateFit(format!("non-positive step {dt}")));
        }
        if !(e > 0.0 && e.is_finite()) {
            return Err(Error::RateFit(format!(
                "error {e} at dt = {dt} is not positive (below the noise floor?)"
            )));
        }
    }
    let n = pts.len() as f64;
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::RateFit("all steps are equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        points: pts,
    })
}
