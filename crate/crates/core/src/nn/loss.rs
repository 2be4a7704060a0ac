//! Huber and quantile-Huber losses.

use crate::error::{Error, Result};

/// `½u²` for `|u| ≤ kappa`, `kappa·(|u| − kappa/2)` beyond.
pub fn huber(u: f64, kappa: f64) -> f64 {
    let a = u.abs();
    if a <= kappa {
        0.5 * u * u
    } else {
        kappa * (a - 0.5 * kappa)
    }
}

/// Derivative of [`huber`] with respect to `u`.
pub fn huber_grad(u: f64, kappa: f64) -> f64 {
    u.clamp(-kappa, kappa)
}

/// Quantile fractions at the midpoints `(2i − 1) / 2N`, i = 1..=N.
pub fn quantile_midpoints(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (2 * i + 1) as f64 / (2 * n) as f64)
        .collect()
}

fn check_args(pred: &[f64], target: &[f64], taus: &[f64], kappa: f64) -> Result<()> {
    if target.len() != pred.len() {
        return Err(Error::dim("target quantiles", pred.len(), target.len()));
    }
    if taus.len() != pred.len() {
        return Err(Error::dim("quantile fractions", pred.len(), taus.len()));
    }
    if pred.is_empty() {
        return Err(Error::InvalidArgument("empty quantile set".into()));
    }
    if kappa.is_nan() || kappa <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "kappa must be positive, got {kappa}"
        )));
    }
    if let Some(t) = taus.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        return Err(Error::InvalidArgument(format!("tau {t} outside (0, 1)")));
    }
    if taus.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "taus must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Mean over target samples `j` of the sum over quantiles `i` of
/// `|tau_i − 1{u_ij < 0}| · huber(u_ij, kappa) / kappa`, `u_ij = target_j − pred_i`.
pub fn quantile_huber_loss(pred: &[f64], target: &[f64], taus: &[f64], kappa: f64) -> Result<f64> {
    check_args(pred, target, taus, kappa)?;
    Ok(quantile_huber_unchecked(pred, target, taus, kappa, None))
}

/// Loss plus its gradient with respect to `pred`.
pub fn quantile_huber_loss_grad(
    pred: &[f64],
    target: &[f64],
    taus: &[f64],
    kappa: f64,
) -> Result<(f64, Vec<f64>)> {
    check_args(pred, target, taus, kappa)?;
    let mut grad = vec![0.0; pred.len()];
    let loss = quantile_huber_unchecked(pred, target, taus, kappa, Some(&mut grad));
    Ok((loss, grad))
}

/// Shared kernel; the agents call this directly on pre-validated slices.
pub(crate) fn quantile_huber_unchecked(
    pred: &[f64],
    target: &[f64],
    taus: &[f64],
    kappa: f64,
    mut grad: Option<&mut [f64]>,
) -> f64 {
    let m = target.len() as f64;
    let mut total = 0.0;
    for (i, (&p, &tau)) in pred.iter().zip(taus).enumerate() {
        let mut g = 0.0;
        for &y in target {
            let u = y - p;
            let w = if u < 0.0 { 1.0 - tau } else { tau };
            total += w * huber(u, kappa) / kappa;
            g -= w * huber_grad(u, kappa) / kappa;
        }
        if let Some(grad) = grad.as_deref_mut() {
            grad[i] = g / m;
        }
    }
    total / m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn huber_branches() {
        assert_eq!(huber(0.0, 1.0), 0.0);
        assert_eq!(huber(0.5, 1.0), 0.125);
        assert_eq!(huber(2.0, 1.0), 1.5);
        assert_eq!(huber(-2.0, 1.0), 1.5);
    }

    #[test]
    fn huber_continuous_at_kappa() {
        for kappa in [0.1, 1.0, 3.0] {
            let below = huber(kappa * (1.0 - 1e-12), kappa);
            let above = huber(kappa * (1.0 + 1e-12), kappa);
            assert!((below - above).abs() < 1e-9);
        }
    }

    #[test]
    fn perfect_fit_is_zero() {
        let q = [2.0; 4];
        let taus = quantile_midpoints(4);
        assert_eq!(quantile_huber_loss(&q, &q, &taus, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn single_quantile_hand_value() {
        // 0.5 * huber(2, 1) / 1 = 0.5 * 1.5
        let l = quantile_huber_loss(&[0.0], &[2.0], &[0.5], 1.0).unwrap();
        assert!((l - 0.75).abs() < 1e-15);
    }

    #[test]
    fn asymmetric_weighting() {
        let up = quantile_huber_loss(&[0.0], &[1.0], &[0.9], 1.0).unwrap();
        let down = quantile_huber_loss(&[0.0], &[-1.0], &[0.9], 1.0).unwrap();
        assert!((up / down - 9.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(quantile_huber_loss(&[0.0, 1.0], &[0.0], &[0.25, 0.75], 1.0).is_err());
        assert!(quantile_huber_loss(&[0.0], &[0.0], &[1.0], 1.0).is_err());
        assert!(quantile_huber_loss(&[0.0], &[0.0], &[0.0], 1.0).is_err());
        assert!(quantile_huber_loss(&[0.0, 0.0], &[0.0, 0.0], &[0.75, 0.25], 1.0).is_err());
        assert!(quantile_huber_loss(&[0.0], &[0.0], &[0.5], 0.0).is_err());
    }

    #[test]
    fn midpoints() {
        assert_eq!(quantile_midpoints(1), vec![0.5]);
        assert_eq!(quantile_midpoints(2), vec![0.25, 0.75]);
        assert_eq!(quantile_midpoints(4), vec![0.125, 0.375, 0.625, 0.875]);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let pred = [0.3, -0.4, 1.7];
        let target = [0.1, 2.5, -1.0];
        let taus = quantile_midpoints(3);
        let (_, g) = quantile_huber_loss_grad(&pred, &target, &taus, 1.0).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let mut p = pred;
            p[i] += h;
            let up = quantile_huber_loss(&p, &target, &taus, 1.0).unwrap();
            p[i] -= 2.0 * h;
            let down = quantile_huber_loss(&p, &target, &taus, 1.0).unwrap();
            assert!(((up - down) / (2.0 * h) - g[i]).abs() < 1e-6);
        }
    }
}
