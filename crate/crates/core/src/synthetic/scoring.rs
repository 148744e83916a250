use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::{Error, Result};

/// Root mean squared error.
pub fn rmse(pred_mean: &[f64], truth: &[f64]) -> Result<f64> {
    if pred_mean.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: pred_mean.len(),
        });
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let sse: f64 = pred_mean.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    Ok((sse / truth.len() as f64).sqrt())
}

/// CRPS of a `N(mu, sigma^2)` forecast at outcome `y`; `|y - mu|` when
/// `sigma` is zero.
pub fn crps_gaussian(mu: f64, sigma: f64, y: f64) -> f64 {
    if sigma <= 0.0 {
        return (y - mu).abs();
    }
    let w = (y - mu) / sigma;
    let n = Normal::standard();
    sigma * (w * (2.0 * n.cdf(w) - 1.0) + 2.0 * n.pdf(w) - 1.0 / std::f64::consts::PI.sqrt())
}

/// CRPS averaged over points for per-point Gaussian forecasts.
pub fn mean_crps(mean: &[f64], var: &[f64], truth: &[f64]) -> Result<f64> {
    if mean.len() != truth.len() || var.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: mean.len().min(var.len()),
        });
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = mean
        .iter()
        .zip(var)
        .zip(truth)
        .map(|((m, v), y)| crps_gaussian(*m, v.max(0.0).sqrt(), *y))
        .sum();
    Ok(total / truth.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_hand_values() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert!((rmse(&[1.5, 2.5, -0.5], &[1.0, 2.0, -1.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(rmse(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn crps_closed_form_values() {
        assert_eq!(crps_gaussian(2.0, 0.0, 2.0), 0.0);
        assert_eq!(crps_gaussian(2.0, 0.0, -1.0), 3.0);
        assert!((crps_gaussian(0.0, 1.0, 0.0) - 0.233695).abs() < 1e-6);
    }

    fn crps_quadrature(mu: f64, sigma: f64, y: f64) -> f64 {
        // Simpson's rule on a wide window; the integrand is smooth apart from
        // the jump at y, which is placed on a grid node.
        let n = Normal::new(mu, sigma).unwrap();
        let f = |t: f64| {
            let step = if t >= y { 1.0 } else { 0.0 };
            (n.cdf(t) - step).powi(2)
        };
        let simpson = |a: f64, b: f64, k: usize| {
            let h = (b - a) / k as f64;
            let mut s = f(a) + f(b - 1e-14 * (b - a).abs().max(1.0));
            for i in 1..k {
                s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        };
        let lo = (mu - 12.0 * sigma).min(y - 1.0);
        let hi = (mu + 12.0 * sigma).max(y + 1.0);
        simpson(lo, y, 20_000) + simpson(y, hi, 20_000)
    }

    #[test]
    fn crps_matches_quadrature() {
        for &(mu, sigma, y) in &[(0.0, 1.0, 0.3), (1.0, 0.5, -0.7), (-2.0, 3.0, 4.0), (0.2, 0.05, 0.21)] {
            let q = crps_quadrature(mu, sigma, y);
            assert!((crps_gaussian(mu, sigma, y) - q).abs() < 1e-6, "{mu} {sigma} {y}");
        }
    }

    #[test]
    fn crps_minimized_at_zero_spread_when_centred() {
        let vals: Vec<f64> = [0.0, 0.01, 0.1, 0.5, 1.0, 2.0].iter().map(|s| crps_gaussian(1.0, *s, 1.0)).collect();
        assert!(vals.windows(2).all(|w| w[0] < w[1]));
    }
}
