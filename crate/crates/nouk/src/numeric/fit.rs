//! Weighted ordinary least squares on log-log data, the backbone of every
//! exponent estimate. The two extreme grid points are down-weighted by half
//! to soften boundary effects of quadrature and Monte Carlo error.

use crate::error::{Error, Result};

/// A power-law fit `log y = slope * log x + intercept` with diagnostics.
#[derive(Debug, Clone)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// The (log x, log y) points the fit was computed from.
    pub points: Vec<(f64, f64)>,
    pub residuals: Vec<f64>,
}

/// Fit `log y` against `log x`. Fails with `DegenerateFit` when fewer than
/// two points are given or any ordinate is nonpositive.
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> Result<LogLogFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::DegenerateFit(format!(
            "need >= 2 points, got {}",
            xs.len().min(ys.len())
        )));
    }
    for (&x, &y) in xs.iter().zip(ys) {
        if x <= 0.0 || !x.is_finite() {
            return Err(Error::DegenerateFit(format!("abscissa {x} not positive")));
        }
        if y <= 0.0 || !y.is_finite() {
            return Err(Error::DegenerateFit(format!("ordinate {y} not positive")));
        }
    }
    let n = xs.len();
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).map(|(&x, &y)| (x.ln(), y.ln())).collect();
    let weight = |i: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
    let wsum: f64 = (0..n).map(weight).sum();
    let mx: f64 = pts.iter().enumerate().map(|(i, p)| weight(i) * p.0).sum::<f64>() / wsum;
    let my: f64 = pts.iter().enumerate().map(|(i, p)| weight(i) * p.1).sum::<f64>() / wsum;
    let sxx: f64 = pts
        .iter()
        .enumerate()
        .map(|(i, p)| weight(i) * (p.0 - mx).powi(2))
        .sum();
    let sxy: f64 = pts
        .iter()
        .enumerate()
        .map(|(i, p)| weight(i) * (p.0 - mx) * (p.1 - my))
        .sum();
    if sxx <= 0.0 {
        return Err(Error::DegenerateFit("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = pts.iter().map(|p| p.1 - (slope * p.0 + intercept)).collect();
    let ss_res: f64 = pts
        .iter()
        .enumerate()
        .map(|(i, p)| weight(i) * (p.1 - slope * p.0 - intercept).powi(2))
        .sum();
    let ss_tot: f64 = pts
        .iter()
        .enumerate()
        .map(|(i, p)| weight(i) * (p.1 - my).powi(2))
        .sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(LogLogFit {
        slope,
        intercept,
        r_squared,
        points: pts,
        residuals,
    })
}

/// A geometric grid of `n` points from `lo` to `hi` inclusive.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && lo > 0.0 && hi > 0.0);
    let ratio = (hi / lo).powf(1.0 / (n - 1) as f64);
    (0..n).map(|i| lo * ratio.powi(i as i32)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law_recovered() {
        let xs = geometric_grid(1e-3, 1.0, 9);
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x.powf(-0.5)).collect();
        let fit = loglog_fit(&xs, &ys).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!((fit.intercept - 2.5f64.ln()).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_ordinate_is_degenerate() {
        let r = loglog_fit(&[1.0, 2.0], &[1.0, 0.0]);
        assert!(matches!(r, Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn geometric_grid_endpoints() {
        let g = geometric_grid(0.01, 1.0, 5);
        assert!((g[0] - 0.01).abs() < 1e-15);
        assert!((g[4] - 1.0).abs() < 1e-12);
        assert!((g[2] - 0.1).abs() < 1e-12);
    }
}
