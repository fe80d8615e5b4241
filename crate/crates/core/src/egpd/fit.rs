//! Local and semiregional EGPD estimators.
//!
//! Both match theoretical PWMs of the truncated EGPD to the unbiased sample
//! estimates by root finding in `(ln κ, ln σ, ξ)`; when no root exists in the
//! box (typically `ξ` wants to leave `[0, 0.9]`) they fall back to maximum
//! likelihood with the same box.

use serde::{Deserialize, Serialize};

use super::{Egpd, Truncated};
use crate::error::{Error, Result};
use crate::optimize::{levenberg_marquardt, nelder_mead, Bounds};
use crate::pwm::{pwm_sorted, PwmTriple};

/// Smallest sample accepted for a three-parameter fit.
pub const MIN_FIT_SIZE: usize = 30;
pub const XI_MIN: f64 = 0.0;
pub const XI_MAX: f64 = 0.9;

const KAPPA_MIN: f64 = 0.02;
const KAPPA_MAX: f64 = 100.0;
const ROOT_TOL: f64 = 1e-10;
const ROOT_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Pwm,
    MaxLikelihood,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFit {
    pub dist: Egpd,
    pub method: FitMethod,
    pub iterations: usize,
    pub n: usize,
}

fn prepare(sample: &[f64], threshold: f64, min_size: usize) -> Result<(Vec<f64>, PwmTriple)> {
    if sample.len() < min_size {
        return Err(Error::SampleTooSmall { needed: min_size, got: sample.len() });
    }
    if let Some(&bad) = sample.iter().find(|&&z| !(z > threshold && z.is_finite())) {
        return Err(Error::InvalidArgument(format!("fit sample value {bad} is not above the threshold {threshold}")));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[sorted.len() - 1] {
        return Err(Error::Degenerate("constant sample".into()));
    }
    let pwm = pwm_sorted(&sorted);
    if pwm.omega().is_none() {
        return Err(Error::Degenerate("PWM ratio undefined".into()));
    }
    Ok((sorted, pwm))
}

fn sigma_bounds(alpha0: f64) -> (f64, f64) {
    ((alpha0 * 1e-4).ln(), (alpha0 * 1e4).ln())
}

fn truncated_at(theta_kappa: f64, theta_sigma: f64, xi: f64, threshold: f64) -> Option<Truncated> {
    Egpd::new(theta_kappa.exp(), theta_sigma.exp(), xi).ok()?.truncated(threshold).ok()
}

/// Starting values from GPD PWM estimates on the threshold excesses (κ = 1).
fn gpd_start(pwm: &PwmTriple, threshold: f64) -> (f64, f64) {
    // For excesses Y = Z − u the estimator gives b0 = α0 − u, b1 = α1 − u/2.
    let b0 = pwm.alpha0 - threshold;
    let b1 = pwm.alpha1 - threshold / 2.0;
    let denom = 2.0 * b1 - b0;
    let (mut xi, mut sigma_excess) =
        if denom > 0.0 { (2.0 - b0 / denom, 2.0 * b0 * (b0 - b1) / denom) } else { (0.1, b0) };
    if !xi.is_finite() || !sigma_excess.is_finite() || sigma_excess <= 0.0 {
        xi = 0.1;
        sigma_excess = b0.max(1e-3);
    }
    xi = xi.clamp(0.02, 0.8);
    // GPD above u is GPD with scale σ + ξu.
    let sigma = (sigma_excess - xi * threshold).max(0.1 * sigma_excess);
    (sigma, xi)
}

fn neg_log_likelihood(sorted: &[f64], kappa: f64, sigma: f64, xi: f64, threshold: f64) -> f64 {
    match Egpd::new(kappa, sigma, xi).and_then(|d| d.truncated(threshold)) {
        Ok(t) => {
            let ll = t.log_likelihood(sorted);
            if ll.is_finite() {
                -ll
            } else {
                f64::INFINITY
            }
        }
        Err(_) => f64::INFINITY,
    }
}

/// Fits `(κ, σ, ξ)` to wet-day values above `threshold`.
pub fn fit_local(sample: &[f64], threshold: f64) -> Result<LocalFit> {
    let (sorted, pwm) = prepare(sample, threshold, MIN_FIT_SIZE)?;
    let target = pwm.as_array();
    let (ls_lo, ls_hi) = sigma_bounds(pwm.alpha0);
    let bounds = Bounds { lower: [KAPPA_MIN.ln(), ls_lo, XI_MIN], upper: [KAPPA_MAX.ln(), ls_hi, XI_MAX] };
    let residual = |theta: &[f64; 3]| -> Option<[f64; 3]> {
        let t = truncated_at(theta[0], theta[1], theta[2], threshold)?;
        let a = t.pwm();
        let r = [a[0] / target[0] - 1.0, a[1] / target[1] - 1.0, a[2] / target[2] - 1.0];
        r.iter().all(|v| v.is_finite()).then_some(r)
    };

    let (sigma0, xi0) = gpd_start(&pwm, threshold);
    let mut best: Option<crate::optimize::Solution<3>> = None;
    let mut iterations = 0;
    for &(kappa_start, sigma_factor) in &[(1.0, 1.0), (0.6, 1.5), (2.0, 0.6), (4.0, 0.35), (0.3, 3.0)] {
        let start = [f64::ln(kappa_start), (sigma0 * sigma_factor).ln(), xi0];
        let sol = levenberg_marquardt(residual, start, &bounds, ROOT_TOL, ROOT_MAX_ITER);
        iterations += sol.iterations;
        let better = best.as_ref().is_none_or(|b| sol.value < b.value);
        if better {
            best = Some(sol);
        }
        if sol.converged {
            let dist = Egpd::new(sol.x[0].exp(), sol.x[1].exp(), sol.x[2])?;
            return Ok(LocalFit { dist, method: FitMethod::Pwm, iterations, n: sample.len() });
        }
    }

    // Maximum likelihood from the closest PWM point.
    let start = best.map(|b| b.x).unwrap_or([0.0, sigma0.ln(), xi0]);
    let objective = |theta: &[f64; 3]| neg_log_likelihood(&sorted, theta[0].exp(), theta[1].exp(), theta[2], threshold);
    let sol = nelder_mead(objective, start, [0.3, 0.3, 0.1], &bounds, 1e-12, 4000);
    iterations += sol.iterations;
    if !sol.value.is_finite() || !sol.converged {
        return Err(Error::NoConvergence { iterations, context: "local EGPD fit (PWM and likelihood)".into() });
    }
    let dist = Egpd::new(sol.x[0].exp(), sol.x[1].exp(), sol.x[2])?;
    Ok(LocalFit { dist, method: FitMethod::MaxLikelihood, iterations, n: sample.len() })
}

/// Re-fits `(κ, σ)` with `ξ` frozen, starting from `start` (usually the local fit).
pub fn fit_semiregional(sample: &[f64], threshold: f64, xi: f64, start: Option<&Egpd>) -> Result<LocalFit> {
    if !(XI_MIN..=XI_MAX).contains(&xi) {
        return Err(Error::InvalidParams(format!("frozen xi {xi} outside [{XI_MIN}, {XI_MAX}]")));
    }
    let (sorted, pwm) = prepare(sample, threshold, MIN_FIT_SIZE)?;
    let target = [pwm.alpha0, pwm.alpha1];
    let (ls_lo, ls_hi) = sigma_bounds(pwm.alpha0);
    let bounds = Bounds { lower: [KAPPA_MIN.ln(), ls_lo], upper: [KAPPA_MAX.ln(), ls_hi] };
    let residual = |theta: &[f64; 2]| -> Option<[f64; 2]> {
        let t = truncated_at(theta[0], theta[1], xi, threshold)?;
        let a = t.pwm2();
        let r = [a[0] / target[0] - 1.0, a[1] / target[1] - 1.0];
        r.iter().all(|v| v.is_finite()).then_some(r)
    };

    let (sigma0, _) = gpd_start(&pwm, threshold);
    let mut starts = Vec::new();
    if let Some(d) = start {
        starts.push([d.kappa().ln(), d.sigma().ln()]);
    }
    starts.extend([[0.0, sigma0.ln()], [0.6f64.ln(), (1.5 * sigma0).ln()], [2f64.ln(), (0.6 * sigma0).ln()]]);

    let mut best: Option<crate::optimize::Solution<2>> = None;
    let mut iterations = 0;
    for s in starts {
        let sol = levenberg_marquardt(residual, s, &bounds, ROOT_TOL, ROOT_MAX_ITER);
        iterations += sol.iterations;
        if best.as_ref().is_none_or(|b| sol.value < b.value) {
            best = Some(sol);
        }
        if sol.converged {
            let dist = Egpd::new(sol.x[0].exp(), sol.x[1].exp(), xi)?;
            return Ok(LocalFit { dist, method: FitMethod::Pwm, iterations, n: sample.len() });
        }
    }

    let start = best.map(|b| b.x).unwrap_or([0.0, sigma0.ln()]);
    let objective = |theta: &[f64; 2]| neg_log_likelihood(&sorted, theta[0].exp(), theta[1].exp(), xi, threshold);
    let sol = nelder_mead(objective, start, [0.3, 0.3], &bounds, 1e-12, 3000);
    iterations += sol.iterations;
    if !sol.value.is_finite() || !sol.converged {
        return Err(Error::NoConvergence { iterations, context: "semiregional EGPD fit (PWM and likelihood)".into() });
    }
    let dist = Egpd::new(sol.x[0].exp(), sol.x[1].exp(), xi)?;
    Ok(LocalFit { dist, method: FitMethod::MaxLikelihood, iterations, n: sample.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn draw(kappa: f64, sigma: f64, xi: f64, n: usize, seed: u64) -> Vec<f64> {
        let t = Egpd::new(kappa, sigma, xi).unwrap().truncated(1.0).unwrap();
        t.sample_n(&mut ChaCha8Rng::seed_from_u64(seed), n)
    }

    #[test]
    fn recovers_parameters_on_large_sample() {
        let sample = draw(1.5, 4.0, 0.15, 20_000, 3);
        let fit = fit_local(&sample, 1.0).unwrap();
        assert_eq!(fit.method, FitMethod::Pwm);
        assert!((fit.dist.xi() - 0.15).abs() < 0.04, "{:?}", fit.dist);
        assert!((fit.dist.kappa() - 1.5).abs() < 0.25, "{:?}", fit.dist);
        assert!((fit.dist.sigma() / 4.0 - 1.0).abs() < 0.1, "{:?}", fit.dist);
    }

    #[test]
    fn pwm_fit_matches_sample_moments() {
        let sample = draw(0.8, 6.0, 0.25, 3000, 11);
        let fit = fit_local(&sample, 1.0).unwrap();
        assert_eq!(fit.method, FitMethod::Pwm);
        let theory = fit.dist.truncated(1.0).unwrap().pwm();
        let empirical = crate::pwm::estimate_pwm(&sample).unwrap().as_array();
        for i in 0..3 {
            assert!((theory[i] / empirical[i] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn falls_back_to_likelihood_at_the_xi_boundary() {
        // Light tail: PWM root wants ξ < 0 for many exponential samples.
        let mut fell_back = false;
        for seed in 0..20 {
            let sample = draw(1.0, 5.0, 0.0, 500, seed);
            let fit = fit_local(&sample, 1.0).unwrap();
            assert!(fit.dist.xi() >= 0.0 && fit.dist.xi() <= XI_MAX);
            fell_back |= fit.method == FitMethod::MaxLikelihood;
        }
        assert!(fell_back);
    }

    #[test]
    fn degenerate_and_small_samples() {
        assert!(matches!(fit_local(&[5.0; 40], 1.0), Err(Error::Degenerate(_))));
        assert!(matches!(fit_local(&[2.0, 3.0, 4.0], 1.0), Err(Error::SampleTooSmall { .. })));
        let mut below = draw(1.0, 3.0, 0.1, 40, 1);
        below[3] = 0.5;
        assert!(matches!(fit_local(&below, 1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn equivariance_under_rescaling() {
        // Scaling data and threshold together scales σ and leaves κ, ξ unchanged.
        let sample = draw(1.2, 5.0, 0.2, 2000, 5);
        let base = fit_local(&sample, 1.0).unwrap();
        let c = 3.5;
        let scaled: Vec<f64> = sample.iter().map(|v| v * c).collect();
        let fit = fit_local(&scaled, c).unwrap();
        assert!((fit.dist.kappa() - base.dist.kappa()).abs() < 1e-6);
        assert!((fit.dist.xi() - base.dist.xi()).abs() < 1e-6);
        assert!((fit.dist.sigma() / (c * base.dist.sigma()) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn semiregional_at_own_xi_reproduces_local_fit() {
        let sample = draw(1.5, 4.0, 0.15, 3000, 21);
        let local = fit_local(&sample, 1.0).unwrap();
        assert_eq!(local.method, FitMethod::Pwm);
        let semi = fit_semiregional(&sample, 1.0, local.dist.xi(), Some(&local.dist)).unwrap();
        assert!((semi.dist.kappa() - local.dist.kappa()).abs() < 1e-6);
        assert!((semi.dist.sigma() - local.dist.sigma()).abs() < 1e-6);
        assert_eq!(semi.dist.xi(), local.dist.xi());
    }

    #[test]
    fn semiregional_rejects_out_of_box_xi() {
        let sample = draw(1.5, 4.0, 0.15, 100, 2);
        assert!(fit_semiregional(&sample, 1.0, 0.95, None).is_err());
    }
}
