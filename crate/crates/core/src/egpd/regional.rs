//! Regional EGPD fit: shape `(κ₀, ξ₀)` shared within a cluster, scale per site.
//!
//! `κ₀` and `ξ₀` are the cluster means of the local estimates. Each site's
//! scale is then the fixed point of
//!
//! ```text
//! σ_new = ξ₀ m / ( (κ₀ / F̄(u)) · IB(H_ξ₀(u/σ), 1; κ₀, 1 − ξ₀) − 1 )
//! ```
//!
//! where `m` is the site mean of values above `u`, `F̄(u) = 1 − H_ξ₀(u/σ)^κ₀`
//! and `IB(x, 1; a, b) = ∫ₓ¹ t^(a−1) (1−t)^(b−1) dt`. The right-hand side is
//! `m` divided by the mean of the unit-scale EGPD truncated at `u/σ`, so the
//! fixed point matches the truncated mean of the model to `m`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Egpd, XI_SERIES};
use crate::error::{Error, Result};
use crate::special::beta_upper;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionalOptions {
    /// Stop when successive scales differ by less than this (mm).
    pub eps: f64,
    pub max_iter: usize,
}

impl Default for RegionalOptions {
    fn default() -> Self {
        RegionalOptions { eps: 0.001, max_iter: 500 }
    }
}

/// Cluster-common shape parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterShape {
    pub kappa: f64,
    pub xi: f64,
    /// Number of sites whose local fit entered the means.
    pub n_fitted: usize,
}

impl ClusterShape {
    /// Unweighted means of the local `κ` and `ξ`.
    pub fn from_local<'a, I: IntoIterator<Item = &'a Egpd>>(fits: I) -> Result<Self> {
        let (mut k, mut x, mut n) = (0.0, 0.0, 0usize);
        for d in fits {
            k += d.kappa();
            x += d.xi();
            n += 1;
        }
        if n == 0 {
            return Err(Error::Missing("cluster has no successfully fitted site".into()));
        }
        Ok(ClusterShape { kappa: k / n as f64, xi: x / n as f64, n_fitted: n })
    }
}

/// Converged (or last) scale for one site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiteSigma {
    pub sigma: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Iterations after the third whose step grew relative to the previous one.
    pub contraction_violations: usize,
}

/// One site's input to the regional fit.
#[derive(Debug, Clone, Copy)]
pub struct RegionalSite<'a> {
    pub values: &'a [f64],
    pub local: Option<Egpd>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionalFit {
    pub shape: ClusterShape,
    pub sites: Vec<SiteSigma>,
}

/// `E[Z | Z > c]` for the unit-scale EGPD.
pub fn unit_truncated_mean(kappa: f64, xi: f64, c: f64) -> Result<f64> {
    if xi >= 1.0 {
        return Err(Error::InvalidParams(format!("xi = {xi} ≥ 1: mean is infinite")));
    }
    let unit = Egpd::new(kappa, 1.0, xi)?;
    if xi < XI_SERIES {
        return Ok(unit.truncated(c)?.mean());
    }
    let h = unit.gpd_cdf(c);
    let sf = unit.sf(c);
    Ok(((kappa / sf) * beta_upper(kappa, 1.0 - xi, h) - 1.0) / xi)
}

fn update(sample_mean: f64, threshold: f64, kappa: f64, xi: f64, sigma: f64) -> Result<f64> {
    let c = threshold / sigma;
    if xi < XI_SERIES {
        return Ok(sample_mean / unit_truncated_mean(kappa, xi, c)?);
    }
    let unit = Egpd::new(kappa, 1.0, xi)?;
    let sf_u = unit.sf(c);
    let ib = beta_upper(kappa, 1.0 - xi, unit.gpd_cdf(c));
    Ok(xi * sample_mean / ((kappa / sf_u) * ib - 1.0))
}

/// Iterates the scale update for one site from `sigma_start`.
pub fn regional_sigma(
    sample_mean: f64,
    threshold: f64,
    kappa: f64,
    xi: f64,
    sigma_start: f64,
    options: &RegionalOptions,
) -> Result<SiteSigma> {
    if xi >= 1.0 {
        return Err(Error::InvalidParams(format!("xi0 = {xi} ≥ 1: divergent mean")));
    }
    if !(sample_mean > threshold) {
        return Err(Error::InvalidArgument(format!("site mean {sample_mean} must exceed the threshold {threshold}")));
    }
    let mut sigma = sigma_start;
    let mut previous_step = f64::INFINITY;
    let mut violations = 0;
    for iteration in 1..=options.max_iter {
        let next = update(sample_mean, threshold, kappa, xi, sigma)?;
        if !(next.is_finite() && next > 0.0) {
            return Err(Error::NoConvergence {
                iterations: iteration,
                context: format!("regional scale update produced {next}"),
            });
        }
        let step = (next - sigma).abs();
        if iteration > 3 && step > previous_step {
            violations += 1;
        }
        previous_step = step;
        sigma = next;
        if step < options.eps {
            return Ok(SiteSigma { sigma, iterations: iteration, converged: true, contraction_violations: violations });
        }
    }
    Ok(SiteSigma { sigma, iterations: options.max_iter, converged: false, contraction_violations: violations })
}

/// Regional fit of one cluster. Sites without a local fit still get a scale;
/// sites that do not converge keep their local scale and are flagged.
pub fn fit_regional(sites: &[RegionalSite<'_>], threshold: f64, options: &RegionalOptions) -> Result<RegionalFit> {
    let shape = ClusterShape::from_local(sites.iter().filter_map(|s| s.local.as_ref()))?;
    if shape.xi >= 1.0 {
        return Err(Error::InvalidParams(format!("cluster mean xi {} ≥ 1", shape.xi)));
    }
    let fitted: Result<Vec<SiteSigma>> = sites
        .par_iter()
        .map(|site| {
            if site.values.is_empty() {
                return Err(Error::Missing("regional fit site without data".into()));
            }
            let mean = site.values.iter().sum::<f64>() / site.values.len() as f64;
            let start = site.local.map(|d| d.sigma()).unwrap_or((mean - threshold).max(1e-3));
            let mut result = regional_sigma(mean, threshold, shape.kappa, shape.xi, start, options)?;
            if !result.converged {
                result.sigma = start;
            }
            Ok(result)
        })
        .collect();
    Ok(RegionalFit { shape, sites: fitted? })
}

/// Regional fits of every cluster: shared `(κ₀, ξ₀)` per cluster and one scale
/// per site. Site `s` follows `σ(s) · q` where `q` is its cluster's unit-scale
/// quantile function.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionalModel {
    pub threshold: f64,
    /// Shape of each cluster; `None` when no site of the cluster has a local fit.
    pub shapes: Vec<Option<ClusterShape>>,
    /// Scale of each site; `None` for sites of clusters without a shape.
    pub sites: Vec<Option<SiteSigma>>,
}

impl RegionalModel {
    /// Fits each cluster independently. `labels[i]` is site `i`'s cluster in `0..k`.
    pub fn fit(
        sites: &[RegionalSite<'_>],
        labels: &[usize],
        k: usize,
        threshold: f64,
        options: &RegionalOptions,
    ) -> Result<Self> {
        if labels.len() != sites.len() {
            return Err(Error::SiteMismatch(format!("{} labels for {} sites", labels.len(), sites.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidArgument(format!("cluster label {bad} outside 0..{k}")));
        }
        let mut shapes = vec![None; k];
        let mut out = vec![None; sites.len()];
        for (cluster, shape) in shapes.iter_mut().enumerate() {
            let members: Vec<usize> = (0..sites.len()).filter(|&i| labels[i] == cluster).collect();
            let group: Vec<RegionalSite<'_>> = members.iter().map(|&i| sites[i]).collect();
            if group.iter().all(|s| s.local.is_none()) {
                continue;
            }
            let fit = fit_regional(&group, threshold, options)?;
            *shape = Some(fit.shape);
            for (&i, sigma) in members.iter().zip(fit.sites) {
                out[i] = Some(sigma);
            }
        }
        Ok(RegionalModel { threshold, shapes, sites: out })
    }

    /// Distribution of site `i`, when its cluster has a shape.
    pub fn site_dist(&self, i: usize, label: usize) -> Option<Egpd> {
        let shape = self.shapes.get(label).copied().flatten()?;
        let sigma = self.sites.get(i).copied().flatten()?;
        Egpd::new(shape.kappa, sigma.sigma, shape.xi).ok()
    }
}
