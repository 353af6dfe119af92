//! Log-log rate fitting.
//!
//! Convergence and local-error exponents are estimated the same way
//! everywhere: collect (scale, error) pairs, drop exact zeros (they mean the
//! quantity degenerated to rounding noise, not that the rate is infinite),
//! and least-squares fit log(error) against log(scale).

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// (scale, error) pairs actually used by the fit.
    pub points: Vec<(f64, f64)>,
}

/// Least-squares slope of log(err) vs log(scale). Needs at least two
/// distinct scales with positive errors.
pub fn log_log_fit(pairs: &[(f64, f64)]) -> Result<RateFit> {
    let points: Vec<(f64, f64)> = pairs
        .iter()
        .copied()
        .filter(|&(h, e)| h > 0.0 && e > 0.0)
        .collect();
    if points.len() < 2 {
        return Err(Error::invalid(
            "rate fit needs at least two positive (scale, error) pairs",
        ));
    }
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(h, e) in &points {
        let x = h.ln();
        let y = e.ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return Err(Error::invalid("rate fit scales are all identical"));
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    Ok(RateFit {
        slope,
        intercept,
        points,
    })
}

/// Dyadic window widths spanning [4h, t_span/4], smallest first. This is the
/// range over which two-parameter quantities are trusted: below 4h the grid
/// resolves nothing, above t_span/4 there are too few disjoint windows.
pub fn dyadic_windows(h: f64, t_span: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut w = 4.0 * h;
    while w <= t_span / 4.0 + 1e-12 {
        out.push(w);
        w *= 2.0;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_power_law() {
        let pairs: Vec<(f64, f64)> = (1..=6)
            .map(|k| {
                let h = 0.5_f64.powi(k);
                (h, 3.0 * h * h)
            })
            .collect();
        let fit = log_log_fit(&pairs).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.intercept - 3.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zeros_are_dropped() {
        let pairs = vec![(0.5, 0.25), (0.25, 0.0625), (0.125, 0.0)];
        let fit = log_log_fit(&pairs).unwrap();
        assert_eq!(fit.points.len(), 2);
        assert!((fit.slope - 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_scale_is_rejected() {
        assert!(log_log_fit(&[(0.5, 1.0)]).is_err());
        assert!(log_log_fit(&[(0.5, 1.0), (0.5, 2.0)]).is_err());
    }

    #[test]
    fn windows_cover_trusted_range() {
        let w = dyadic_windows(1.0 / 256.0, 1.0);
        assert_eq!(w.first().copied(), Some(4.0 / 256.0));
        assert!(*w.last().unwrap() <= 0.25 + 1e-12);
        assert_eq!(w.len(), 5); // 1/64, 1/32, 1/16, 1/8, 1/4
    }
}
