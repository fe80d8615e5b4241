//! Probability weighted moments and the scale-invariant ratio ω.
//!
//! `α_i = E[Z F(Z)^i]` is estimated with the unbiased order-statistics
//! estimator; ω = (3α₂ − 2α₁) / (2α₁ − α₀) depends only on the shape of the
//! distribution, so sites whose quantile functions are proportional share it.

use crate::error::{Error, Result};

/// Relative guard on `|2α₁ − α₀|` below which ω is reported degenerate.
pub const DEGENERACY_GUARD: f64 = 1e-9;

/// Estimates of the first three PWMs, in the units of the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PwmTriple {
    pub alpha0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
}

impl PwmTriple {
    pub fn as_array(&self) -> [f64; 3] {
        [self.alpha0, self.alpha1, self.alpha2]
    }

    /// ω computed from this triple, or `None` when the denominator is degenerate.
    pub fn omega(&self) -> Option<f64> {
        let denom = 2.0 * self.alpha1 - self.alpha0;
        if !(denom.abs() > DEGENERACY_GUARD * self.alpha0.abs()) {
            return None;
        }
        let w = (3.0 * self.alpha2 - 2.0 * self.alpha1) / denom;
        w.is_finite().then_some(w)
    }
}

/// Order-statistic weights for `α̂_i`: `Π_{l=1..i} (j−l)/(n−l)` at 1-based rank `j`.
pub fn estimator_weights(n: usize, order: usize) -> Vec<f64> {
    (1..=n).map(|j| (1..=order).map(|l| (j as f64 - l as f64) / (n as f64 - l as f64)).product()).collect()
}

fn validate(sample: &[f64]) -> Result<()> {
    if sample.len() < 3 {
        return Err(Error::SampleTooSmall { needed: 3, got: sample.len() });
    }
    if let Some(&bad) = sample.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::NonPositive(bad));
    }
    Ok(())
}

/// Unbiased PWM estimates from an already ascending sample.
pub(crate) fn pwm_sorted(sorted: &[f64]) -> PwmTriple {
    let n = sorted.len() as f64;
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for (idx, &z) in sorted.iter().enumerate() {
        let j = idx as f64 + 1.0;
        let w1 = (j - 1.0) / (n - 1.0);
        let w2 = w1 * (j - 2.0) / (n - 2.0);
        s0 += z;
        s1 += z * w1;
        s2 += z * w2;
    }
    PwmTriple { alpha0: s0 / n, alpha1: s1 / n, alpha2: s2 / n }
}

/// Estimates `(α₀, α₁, α₂)` from a sample of positive values (at least three).
pub fn estimate_pwm(sample: &[f64]) -> Result<PwmTriple> {
    validate(sample)?;
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(pwm_sorted(&sorted))
}

/// The scale-invariant ratio ω of a positive sample.
pub fn omega(sample: &[f64]) -> Result<f64> {
    let triple = estimate_pwm(sample)?;
    triple.omega().ok_or_else(|| Error::Degenerate(format!("|2α₁ − α₀| below guard (α₀ = {})", triple.alpha0)))
}

/// Dissimilarity between two sites: `|ω_i − ω_j|`.
#[inline]
pub fn omega_distance(omega_i: f64, omega_j: f64) -> f64 {
    (omega_i - omega_j).abs()
}

/// Per-site ω estimates. Degenerate sites hold `NaN` and are flagged.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OmegaField {
    pub omega: Vec<f64>,
    pub sample_size: Vec<usize>,
    pub degenerate: Vec<bool>,
}

impl OmegaField {
    /// Builds the field from one sample per site. Samples that are too small
    /// or degenerate are flagged rather than dropped.
    pub fn from_samples<'a, I>(samples: I) -> Self
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut field = OmegaField::default();
        for sample in samples {
            let value = omega(sample).ok();
            field.omega.push(value.unwrap_or(f64::NAN));
            field.sample_size.push(sample.len());
            field.degenerate.push(value.is_none());
        }
        field
    }

    /// Builds a field from precomputed ω values; non-finite entries are flagged.
    pub fn from_values(values: Vec<f64>, sample_size: Vec<usize>) -> Result<Self> {
        if values.len() != sample_size.len() {
            return Err(Error::InvalidArgument(format!(
                "{} omega values but {} sample sizes",
                values.len(),
                sample_size.len()
            )));
        }
        let degenerate = values.iter().map(|v| !v.is_finite()).collect();
        let omega = values.into_iter().map(|v| if v.is_finite() { v } else { f64::NAN }).collect();
        Ok(OmegaField { omega, sample_size, degenerate })
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    /// Indices of sites with a usable ω, in ascending order.
    pub fn valid_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.degenerate[i]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn exponential(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect()
    }

    #[test]
    fn constant_sample() {
        let t = estimate_pwm(&[2.5; 4]).unwrap();
        assert!((t.alpha0 - 2.5).abs() < 1e-15);
        assert!((t.alpha1 - 1.25).abs() < 1e-15);
        assert!((t.alpha2 - 2.5 / 3.0).abs() < 1e-15);
        assert!(t.omega().is_none());
        assert!(matches!(omega(&[2.5; 4]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn weights_are_non_negative_and_sum_to_constant_sample_mass() {
        for n in [3usize, 7, 50] {
            for (order, mass) in [(0, 1.0), (1, 0.5), (2, 1.0 / 3.0)] {
                let w = estimator_weights(n, order);
                assert!(w.iter().all(|&x| x >= 0.0));
                let total: f64 = w.iter().sum::<f64>() / n as f64;
                assert!((total - mass).abs() < 1e-14, "n={n} order={order}: {total}");
            }
        }
    }

    #[test]
    fn exponential_moments() {
        let sample = exponential(100_000, 7);
        let t = estimate_pwm(&sample).unwrap();
        assert!((t.alpha0 - 1.0).abs() < 0.02);
        assert!((t.alpha1 - 0.75).abs() < 0.02);
        assert!((t.alpha2 - 11.0 / 18.0).abs() < 0.02);
        assert!((omega(&sample).unwrap() - 2.0 / 3.0).abs() < 0.02);
    }

    #[test]
    fn errors() {
        assert!(matches!(estimate_pwm(&[1.0, 2.0]), Err(Error::SampleTooSmall { .. })));
        assert!(matches!(estimate_pwm(&[1.0, 0.0, 2.0]), Err(Error::NonPositive(_))));
        assert!(matches!(estimate_pwm(&[1.0, f64::NAN, 2.0]), Err(Error::NonPositive(_))));
    }

    #[test]
    fn distance() {
        assert_eq!(omega_distance(0.5, 0.5), 0.0);
        assert!((omega_distance(0.2, 0.7) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn omega_field_flags_degenerate_sites() {
        let good = exponential(50, 1);
        let flat = vec![3.0; 50];
        let field = OmegaField::from_samples([good.as_slice(), flat.as_slice(), &[1.0][..]]);
        assert_eq!(field.degenerate, vec![false, true, true]);
        assert_eq!(field.valid_indices(), vec![0]);
        assert!(field.omega[1].is_nan());
    }

    proptest! {
        #[test]
        fn homogeneity(sample in prop::collection::vec(0.01f64..500.0, 3..200), c in 1e-3f64..1e3) {
            let base = estimate_pwm(&sample).unwrap();
            let scaled: Vec<f64> = sample.iter().map(|v| v * c).collect();
            let t = estimate_pwm(&scaled).unwrap();
            for (a, b) in t.as_array().iter().zip(base.as_array()) {
                prop_assert!((a - c * b).abs() <= 1e-12 * (c * b).abs());
            }
            if let (Some(w0), Some(w1)) = (base.omega(), t.omega()) {
                prop_assert!((w0 - w1).abs() <= 1e-12 * w0.abs().max(1.0));
            }
        }

        #[test]
        fn ordering_for_distinct_samples(sample in prop::collection::vec(0.01f64..500.0, 3..100)) {
            let mut s = sample.clone();
            s.sort_by(f64::total_cmp);
            s.dedup();
            prop_assume!(s.len() >= 2);
            let t = estimate_pwm(&sample).unwrap();
            prop_assert!(t.alpha0 > t.alpha1 && t.alpha1 > t.alpha2 && t.alpha2 > 0.0);
        }

        #[test]
        fn distance_is_symmetric(a in -5.0f64..5.0, b in -5.0f64..5.0) {
            prop_assert_eq!(omega_distance(a, b), omega_distance(b, a));
        }
    }
}
