//! Extended generalized Pareto distribution with power flexibility function.
//!
//! `F(z) = H(z)^κ` where `H(z) = 1 − (1 + ξz/σ)^(−1/ξ)` is the GPD cdf (the
//! exponential cdf in the `ξ = 0` limit). Observations are wet-day amounts
//! above a threshold `u`, so estimation and return levels work with the
//! distribution left-truncated at `u` ([`Truncated`]).

mod fit;
mod regional;

pub use fit::{fit_local, fit_semiregional, FitMethod, LocalFit, MIN_FIT_SIZE, XI_MAX, XI_MIN};
pub use regional::{
    fit_regional, regional_sigma, unit_truncated_mean, ClusterShape, RegionalFit, RegionalModel, RegionalOptions,
    RegionalSite, SiteSigma,
};

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::integrate_unit;

/// Below this `ξ` the GPD is evaluated by its series about `ξ = 0`.
const XI_SERIES: f64 = 1e-6;

/// Regionalization level of a fitted parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Local,
    Semiregional,
    Regional,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Local, Level::Semiregional, Level::Regional];

    pub fn as_str(&self) -> &'static str {
        match self {
            Level::Local => "local",
            Level::Semiregional => "semiregional",
            Level::Regional => "regional",
        }
    }

    /// Number of free parameters for `n_sites` sites in `n_clusters` clusters.
    pub fn parameter_count(&self, n_sites: usize, n_clusters: usize) -> usize {
        match self {
            Level::Local => 3 * n_sites,
            Level::Semiregional => 2 * n_sites + n_clusters,
            Level::Regional => n_sites + 2 * n_clusters,
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "local" => Ok(Level::Local),
            "semiregional" => Ok(Level::Semiregional),
            "regional" => Ok(Level::Regional),
            other => Err(Error::InvalidArgument(format!("unknown model level `{other}`"))),
        }
    }
}

/// The EGPD with `G(u) = u^κ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Egpd {
    kappa: f64,
    sigma: f64,
    xi: f64,
}

impl Egpd {
    /// `κ > 0`, `σ > 0`, `ξ ≥ 0`.
    pub fn new(kappa: f64, sigma: f64, xi: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidParams(format!("kappa must be positive, got {kappa}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParams(format!("sigma must be positive, got {sigma}")));
        }
        if !(xi >= 0.0 && xi.is_finite()) {
            return Err(Error::InvalidParams(format!("xi must be non-negative, got {xi}")));
        }
        Ok(Egpd { kappa, sigma, xi })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    /// Same shape, scale multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> Result<Self> {
        Egpd::new(self.kappa, self.sigma * factor, self.xi)
    }

    /// `(1/ξ) ln(1 + ξx)`, i.e. minus the log survival of the unit GPD.
    fn gpd_log_sf_neg(&self, x: f64) -> f64 {
        let xi = self.xi;
        if xi < XI_SERIES {
            x - xi * x * x / 2.0 + xi * xi * x * x * x / 3.0
        } else {
            (xi * x).ln_1p() / xi
        }
    }

    /// `ln H(z)`.
    fn ln_gpd_cdf(&self, z: f64) -> f64 {
        let a = self.gpd_log_sf_neg(z / self.sigma);
        (-(-a).exp_m1()).ln()
    }

    /// GPD cdf `H(z)`.
    pub fn gpd_cdf(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        -(-self.gpd_log_sf_neg(z / self.sigma)).exp_m1()
    }

    pub fn cdf(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        if z == f64::INFINITY {
            return 1.0;
        }
        (self.kappa * self.ln_gpd_cdf(z)).exp()
    }

    /// Survival `1 − F(z)`, accurate in the upper tail.
    pub fn sf(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 1.0;
        }
        if z == f64::INFINITY {
            return 0.0;
        }
        -(self.kappa * self.ln_gpd_cdf(z)).exp_m1()
    }

    pub fn ln_pdf(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let x = z / self.sigma;
        let ln_h = -self.sigma.ln() - self.gpd_log_sf_neg(x) - (self.xi * x).ln_1p();
        self.kappa.ln() + (self.kappa - 1.0) * self.ln_gpd_cdf(z) + ln_h
    }

    pub fn pdf(&self, z: f64) -> f64 {
        self.ln_pdf(z).exp()
    }

    /// Quantile from `ln p`.
    fn quantile_ln(&self, ln_p: f64) -> f64 {
        // 1 − p^(1/κ), then L = −ln(1 − p^(1/κ))
        let one_minus_v = -(ln_p / self.kappa).exp_m1();
        let big_l = -one_minus_v.ln();
        let xi = self.xi;
        if xi < XI_SERIES {
            self.sigma * (big_l + xi * big_l * big_l / 2.0 + xi * xi * big_l.powi(3) / 6.0)
        } else {
            self.sigma * (xi * big_l).exp_m1() / xi
        }
    }

    /// `F⁻¹(p) = (σ/ξ)[(1 − p^(1/κ))^(−ξ) − 1]` (or `−σ ln(1 − p^(1/κ))` at `ξ = 0`).
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidArgument(format!("probability must lie in (0, 1), got {p}")));
        }
        Ok(self.quantile_ln(p.ln()))
    }

    /// Quantile at exceedance probability `q = 1 − p`, without forming `1 − q`.
    pub fn quantile_upper(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidArgument(format!("exceedance must lie in (0, 1), got {q}")));
        }
        Ok(self.quantile_ln((-q).ln_1p()))
    }

    /// The distribution conditioned on `Z > threshold`.
    pub fn truncated(&self, threshold: f64) -> Result<Truncated> {
        Truncated::new(*self, threshold)
    }
}

/// Fitted parameters together with the regionalization level that produced them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgpdParams {
    pub kappa: f64,
    pub sigma: f64,
    pub xi: f64,
    pub level: Level,
    pub cluster: Option<usize>,
}

impl EgpdParams {
    pub fn new(dist: Egpd, level: Level, cluster: Option<usize>) -> Self {
        EgpdParams { kappa: dist.kappa, sigma: dist.sigma, xi: dist.xi, level, cluster }
    }

    pub fn dist(&self) -> Result<Egpd> {
        Egpd::new(self.kappa, self.sigma, self.xi)
    }
}

/// EGPD left-truncated at a threshold `u ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncated {
    dist: Egpd,
    threshold: f64,
    cdf_u: f64,
    sf_u: f64,
}

impl Truncated {
    pub fn new(dist: Egpd, threshold: f64) -> Result<Self> {
        if !(threshold >= 0.0 && threshold.is_finite()) {
            return Err(Error::InvalidArgument(format!("threshold must be finite and ≥ 0, got {threshold}")));
        }
        let sf_u = dist.sf(threshold);
        if !(sf_u > 0.0) {
            return Err(Error::InvalidParams(format!("no probability mass above threshold {threshold} for {dist:?}")));
        }
        Ok(Truncated { dist, threshold, cdf_u: dist.cdf(threshold), sf_u })
    }

    pub fn dist(&self) -> &Egpd {
        &self.dist
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// `F̄(u)` of the untruncated distribution.
    pub fn mass_above(&self) -> f64 {
        self.sf_u
    }

    pub fn cdf(&self, z: f64) -> f64 {
        if z <= self.threshold {
            return 0.0;
        }
        1.0 - self.sf(z)
    }

    pub fn sf(&self, z: f64) -> f64 {
        if z <= self.threshold {
            return 1.0;
        }
        (self.dist.sf(z) / self.sf_u).min(1.0)
    }

    pub fn ln_pdf(&self, z: f64) -> f64 {
        if z <= self.threshold {
            return f64::NEG_INFINITY;
        }
        self.dist.ln_pdf(z) - self.sf_u.ln()
    }

    /// Quantile at truncated exceedance probability `q` (`q = 1 − p`).
    fn quantile_upper_unchecked(&self, q: f64) -> f64 {
        let complement = self.sf_u * q;
        let z = self.dist.quantile_ln((-complement).ln_1p());
        z.max(self.threshold)
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidArgument(format!("probability must lie in (0, 1), got {p}")));
        }
        // Lower half via cdf_u + p·sf_u keeps precision when p is tiny.
        if p < 0.5 {
            let w = self.cdf_u + p * self.sf_u;
            return Ok(self.dist.quantile_ln(w.ln()).max(self.threshold));
        }
        Ok(self.quantile_upper_unchecked(1.0 - p))
    }

    pub fn quantile_upper(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidArgument(format!("exceedance must lie in (0, 1), got {q}")));
        }
        Ok(self.quantile_upper_unchecked(q))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // 1 − U in (0, 1]; draw again on the measure-zero endpoint
        loop {
            let q: f64 = 1.0 - rng.random::<f64>();
            if q < 1.0 {
                return self.quantile_upper_unchecked(q);
            }
        }
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.sample(rng)).collect()
    }

    pub fn log_likelihood(&self, sample: &[f64]) -> f64 {
        let ln_sf_u = self.sf_u.ln();
        sample.iter().map(|&z| self.dist.ln_pdf(z)).sum::<f64>() - sample.len() as f64 * ln_sf_u
    }

    /// Theoretical `α_i = E[Z F_u(Z)^i]`, `i = 0, 1, 2`, of the truncated law,
    /// by quadrature of `∫₀¹ Q_u(t) tⁱ dt`.
    pub fn pwm(&self) -> [f64; 3] {
        integrate_unit(
            |t, one_minus_t| {
                let z = self.quantile_upper_unchecked(one_minus_t);
                [z, z * t, z * t * t]
            },
            1e-11,
        )
    }

    /// First two PWMs only.
    pub fn pwm2(&self) -> [f64; 2] {
        integrate_unit(
            |t, one_minus_t| {
                let z = self.quantile_upper_unchecked(one_minus_t);
                [z, z * t]
            },
            1e-11,
        )
    }

    pub fn mean(&self) -> f64 {
        integrate_unit(|_, one_minus_t| [self.quantile_upper_unchecked(one_minus_t)], 1e-12)[0]
    }
}

/// Return level for a return period of `t_years` seasons-years.
///
/// The per-wet-day exceedance probability is `1 / (T · n_wds)`. Wet days are
/// days above `threshold`, so the level solves `F̄(z) = F̄(u) / (T · n_wds)`;
/// with `threshold = 0` this is the plain upper quantile.
pub fn return_level(dist: &Egpd, t_years: f64, n_wds_mean: f64, threshold: f64) -> Result<f64> {
    if !(t_years >= 1.0) {
        return Err(Error::InvalidArgument(format!("return period must be ≥ 1, got {t_years}")));
    }
    if !(n_wds_mean > 0.0 && n_wds_mean.is_finite()) {
        return Err(Error::InvalidArgument(format!("n_wds_mean must be positive, got {n_wds_mean}")));
    }
    let events = t_years * n_wds_mean;
    if !(events > 1.0) {
        return Err(Error::InvalidArgument(format!("T·n_wds must exceed 1, got {events}")));
    }
    let q = 1.0 / events;
    if threshold > 0.0 {
        dist.truncated(threshold)?.quantile_upper(q)
    } else {
        dist.quantile_upper(q)
    }
}
