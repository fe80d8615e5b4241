//! k-medoids partitioning of the ω field with greedy BUILD and an eager swap
//! phase that caches each point's nearest and second-nearest medoid.
//!
//! Distances are `|ω_i − ω_j|`, evaluated on the fly over the sorted field.
//! Because the field is one-dimensional, a candidate only interacts with the
//! points lying closer to it than the largest second-nearest distance, which
//! bounds the scan of each swap evaluation without changing its result.

mod validity;

pub use validity::{
    adjusted_rand_index, scan_k, silhouette_scores, validity_indices, ScanResult, ValidityReport, ValidityRow, K_MAX,
    K_MIN,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pwm::OmegaField;

/// Default cap on swap sweeps.
pub const MAX_SWEEPS: usize = 100;

const TIE_TOLERANCE: f64 = 1e-12;

/// Sorted view of the non-degenerate part of the field.
#[derive(Debug, Clone)]
pub(crate) struct Points {
    /// ω values in ascending order.
    pub x: Vec<f64>,
    /// Field index of each sorted position.
    pub id: Vec<usize>,
    /// Sorted position of each field index (`usize::MAX` for degenerate sites).
    pub rank: Vec<usize>,
}

impl Points {
    pub fn from_field(field: &OmegaField) -> Self {
        let mut id = field.valid_indices();
        id.sort_by(|&a, &b| field.omega[a].total_cmp(&field.omega[b]).then(a.cmp(&b)));
        let x = id.iter().map(|&i| field.omega[i]).collect();
        let mut rank = vec![usize::MAX; field.len()];
        for (r, &i) in id.iter().enumerate() {
            rank[i] = r;
        }
        Points { x, id, rank }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn distinct(&self) -> usize {
        let mut count = 0;
        for (i, v) in self.x.iter().enumerate() {
            if i == 0 || *v != self.x[i - 1] {
                count += 1;
            }
        }
        count
    }

    /// Sorted positions whose value lies strictly within `radius` of `center`.
    fn window(&self, center: f64, radius: f64) -> std::ops::Range<usize> {
        let lo = self.x.partition_point(|&v| v <= center - radius);
        let hi = self.x.partition_point(|&v| v < center + radius);
        lo..hi.max(lo)
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if k < 2 {
            return Err(Error::InvalidArgument(format!("k must be at least 2, got {k}")));
        }
        let distinct = self.distinct();
        if k > distinct {
            return Err(Error::TooFewDistinct { k, distinct });
        }
        Ok(())
    }
}

/// Keeps `(score, id)` pairs, preferring the lower score and then the lower id.
fn improves(score: f64, id: usize, best: Option<(f64, usize)>) -> bool {
    match best {
        None => true,
        Some((b, bid)) => {
            let tol = TIE_TOLERANCE * (score.abs().max(b.abs()) + TIE_TOLERANCE);
            score < b - tol || ((score - b).abs() <= tol && id < bid)
        }
    }
}

/// Greedy BUILD over sorted positions; returns `k` positions in selection order.
pub(crate) fn build_positions(points: &Points, k: usize) -> Vec<usize> {
    let n = points.len();
    let x = &points.x;
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in x {
        prefix.push(prefix.last().unwrap() + v);
    }
    let mut best: Option<(f64, usize)> = None;
    let mut first = 0;
    for p in 0..n {
        let below = x[p] * p as f64 - prefix[p];
        let above = (prefix[n] - prefix[p + 1]) - x[p] * (n - p - 1) as f64;
        if improves(below + above, points.id[p], best) {
            best = Some((below + above, points.id[p]));
            first = p;
        }
    }

    let mut chosen = vec![first];
    let mut is_medoid = vec![false; n];
    is_medoid[first] = true;
    let mut nearest: Vec<f64> = x.iter().map(|v| (v - x[first]).abs()).collect();
    while chosen.len() < k {
        let d_max = nearest.iter().copied().fold(0.0, f64::max);
        let best = (0..n)
            .into_par_iter()
            .filter(|&c| !is_medoid[c])
            .map(|c| {
                let xc = x[c];
                let mut gain = 0.0;
                for j in points.window(xc, d_max) {
                    let d = (x[j] - xc).abs();
                    if d < nearest[j] {
                        gain += nearest[j] - d;
                    }
                }
                (-gain, points.id[c], c)
            })
            .reduce_with(|a, b| if improves(b.0, b.1, Some((a.0, a.1))) { b } else { a });
        let Some((_, _, c)) = best else { break };
        chosen.push(c);
        is_medoid[c] = true;
        for (j, d) in nearest.iter_mut().enumerate() {
            *d = d.min((x[j] - x[c]).abs());
        }
    }
    chosen
}

/// Deterministic greedy BUILD. Returns field indices of the `k` initial medoids
/// in selection order.
pub fn pam_build(field: &OmegaField, k: usize) -> Result<Vec<usize>> {
    let points = Points::from_field(field);
    points.check_k(k)?;
    Ok(build_positions(&points, k).into_iter().map(|p| points.id[p]).collect())
}

struct SwapState<'a> {
    points: &'a Points,
    medoids: Vec<usize>,
    near: Vec<usize>,
    near_d: Vec<f64>,
    seco_d: Vec<f64>,
    removal_loss: Vec<f64>,
    seco_max: f64,
}

impl<'a> SwapState<'a> {
    fn new(points: &'a Points, medoids: Vec<usize>) -> Self {
        let n = points.len();
        let mut state = SwapState {
            points,
            medoids,
            near: vec![0; n],
            near_d: vec![0.0; n],
            seco_d: vec![0.0; n],
            removal_loss: Vec::new(),
            seco_max: 0.0,
        };
        state.refresh();
        state
    }

    fn refresh(&mut self) {
        let x = &self.points.x;
        let k = self.medoids.len();
        self.removal_loss = vec![0.0; k];
        self.seco_max = 0.0;
        for j in 0..x.len() {
            let (mut n1, mut d1, mut d2) = (0, f64::INFINITY, f64::INFINITY);
            for (slot, &m) in self.medoids.iter().enumerate() {
                let d = (x[j] - x[m]).abs();
                if d < d1 {
                    d2 = d1;
                    d1 = d;
                    n1 = slot;
                } else if d < d2 {
                    d2 = d;
                }
            }
            self.near[j] = n1;
            self.near_d[j] = d1;
            self.seco_d[j] = d2;
            self.removal_loss[n1] += d2 - d1;
            self.seco_max = self.seco_max.max(d2);
        }
    }

    fn cost(&self) -> f64 {
        self.near_d.iter().sum()
    }

    /// Best medoid to exchange for candidate `c` and the resulting cost change.
    fn best_swap(&self, c: usize, loss: &mut [f64]) -> (f64, usize) {
        let x = &self.points.x;
        let xc = x[c];
        loss.copy_from_slice(&self.removal_loss);
        let mut shared = 0.0;
        for j in self.points.window(xc, self.seco_max) {
            let d = (x[j] - xc).abs();
            if d < self.near_d[j] {
                shared += d - self.near_d[j];
                loss[self.near[j]] += self.near_d[j] - self.seco_d[j];
            } else if d < self.seco_d[j] {
                loss[self.near[j]] += d - self.seco_d[j];
            }
        }
        let mut slot = 0;
        for (i, v) in loss.iter().enumerate() {
            if *v < loss[slot] {
                slot = i;
            }
        }
        (shared + loss[slot], slot)
    }
}

/// Swap-phase diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwapStats {
    pub build_cost: f64,
    pub sweeps: usize,
    pub swaps: usize,
}

/// Runs the swap phase from the given sorted positions; returns final positions.
pub(crate) fn swap_positions(points: &Points, start: Vec<usize>, max_sweeps: usize) -> Result<(Vec<usize>, SwapStats)> {
    let n = points.len();
    let mut state = SwapState::new(points, start);
    let build_cost = state.cost();
    let mut is_medoid = vec![false; n];
    for &m in &state.medoids {
        is_medoid[m] = true;
    }
    let mut cost = build_cost;
    let mut loss = vec![0.0; state.medoids.len()];
    let (mut sweeps, mut swaps) = (0, 0);
    loop {
        if sweeps == max_sweeps {
            return Err(Error::NoConvergence {
                iterations: sweeps,
                context: format!("swap phase still improving after {swaps} swaps, cost {cost}"),
            });
        }
        sweeps += 1;
        let mut improved = false;
        for c in 0..n {
            if is_medoid[c] || state.near_d[c] == 0.0 {
                continue;
            }
            let (delta, slot) = state.best_swap(c, &mut loss);
            if delta < -TIE_TOLERANCE * (cost + TIE_TOLERANCE) {
                is_medoid[state.medoids[slot]] = false;
                is_medoid[c] = true;
                state.medoids[slot] = c;
                state.refresh();
                cost = state.cost();
                swaps += 1;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    Ok((state.medoids, SwapStats { build_cost, sweeps, swaps }))
}

/// A k-medoids partition of the field. Labels are ordered by medoid ω.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub k: usize,
    /// Cluster label per field site; `None` for degenerate sites not yet assigned.
    pub assignment: Vec<Option<usize>>,
    /// Field index of each cluster's medoid, indexed by label.
    pub medoids: Vec<usize>,
    pub total_cost: f64,
    /// Silhouette per field site; `NaN` for degenerate sites.
    pub silhouettes: Vec<f64>,
    /// Sites labelled after clustering because their ω was degenerate.
    pub post_hoc: Vec<bool>,
    pub stats: SwapStats,
}

impl Partition {
    pub(crate) fn from_positions(field: &OmegaField, points: &Points, positions: &[usize], stats: SwapStats) -> Self {
        let mut medoid_pos = positions.to_vec();
        medoid_pos.sort_unstable();
        let k = medoid_pos.len();
        let x = &points.x;
        let mut sorted_labels = vec![0usize; points.len()];
        let mut total_cost = 0.0;
        for (j, label) in sorted_labels.iter_mut().enumerate() {
            let mut best = (f64::INFINITY, 0);
            for (l, &m) in medoid_pos.iter().enumerate() {
                let d = (x[j] - x[m]).abs();
                if d < best.0 {
                    best = (d, l);
                }
            }
            *label = best.1;
            total_cost += best.0;
        }
        let sorted_sil = validity::silhouettes_sorted(x, &sorted_labels, k);

        let mut assignment = vec![None; field.len()];
        let mut silhouettes = vec![f64::NAN; field.len()];
        for (j, &site) in points.id.iter().enumerate() {
            assignment[site] = Some(sorted_labels[j]);
            silhouettes[site] = sorted_sil[j];
        }
        Partition {
            k,
            assignment,
            medoids: medoid_pos.iter().map(|&p| points.id[p]).collect(),
            total_cost,
            silhouettes,
            post_hoc: vec![false; field.len()],
            stats,
        }
    }

    /// Labels of all sites, or `None` while degenerate sites remain unassigned.
    pub fn labels(&self) -> Option<Vec<usize>> {
        self.assignment.iter().copied().collect()
    }

    pub fn is_medoid(&self, site: usize) -> bool {
        self.medoids.contains(&site)
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for l in self.assignment.iter().flatten() {
            sizes[*l] += 1;
        }
        sizes
    }

    /// Mean silhouette over the clustered (non-degenerate) sites.
    pub fn mean_silhouette(&self) -> f64 {
        let valid: Vec<f64> = self.silhouettes.iter().copied().filter(|s| !s.is_nan()).collect();
        valid.iter().sum::<f64>() / valid.len() as f64
    }

    /// Members of one cluster, in field order.
    pub fn members(&self, label: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == Some(label)).collect()
    }

    /// Gives every unassigned site the label of its geographically nearest
    /// clustered site. `coords` holds `(lon, lat)` in degrees per field site.
    pub fn assign_degenerate(&mut self, coords: &[(f64, f64)]) -> Result<()> {
        if coords.len() != self.assignment.len() {
            return Err(Error::SiteMismatch(format!(
                "{} coordinates for {} sites",
                coords.len(),
                self.assignment.len()
            )));
        }
        let clustered: Vec<usize> = (0..coords.len()).filter(|&i| self.assignment[i].is_some()).collect();
        for site in 0..coords.len() {
            if self.assignment[site].is_some() {
                continue;
            }
            let mut best: Option<(f64, usize)> = None;
            for &other in &clustered {
                let d = haversine_km(coords[site], coords[other]);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, other));
                }
            }
            let (_, nearest) = best.ok_or_else(|| Error::Missing("no clustered site to borrow a label from".into()))?;
            self.assignment[site] = self.assignment[nearest];
            self.post_hoc[site] = true;
        }
        Ok(())
    }
}

/// Great-circle distance between `(lon, lat)` points in degrees.
pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    const EARTH_RADIUS_KM: f64 = 6371.0;
    let (lon1, lat1) = (a.0.to_radians(), a.1.to_radians());
    let (lon2, lat2) = (b.0.to_radians(), b.1.to_radians());
    let h = ((lat2 - lat1) / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * ((lon2 - lon1) / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Swap phase from caller-supplied medoids (field indices).
pub fn pam_swap(field: &OmegaField, medoids: &[usize]) -> Result<Partition> {
    pam_swap_with(field, medoids, MAX_SWEEPS)
}

pub fn pam_swap_with(field: &OmegaField, medoids: &[usize], max_sweeps: usize) -> Result<Partition> {
    let points = Points::from_field(field);
    points.check_k(medoids.len())?;
    let mut start = Vec::with_capacity(medoids.len());
    for &m in medoids {
        let p = *points.rank.get(m).ok_or_else(|| Error::InvalidArgument(format!("medoid {m} is not a site")))?;
        if p == usize::MAX {
            return Err(Error::InvalidArgument(format!("medoid {m} has a degenerate omega")));
        }
        if start.iter().any(|&q| points.x[q] == points.x[p]) {
            return Err(Error::InvalidArgument(format!("medoid {m} duplicates another medoid's value")));
        }
        start.push(p);
    }
    let (positions, stats) = swap_positions(&points, start, max_sweeps)?;
    Ok(Partition::from_positions(field, &points, &positions, stats))
}

/// BUILD followed by swap.
pub fn pam(field: &OmegaField, k: usize) -> Result<Partition> {
    let points = Points::from_field(field);
    points.check_k(k)?;
    let start = build_positions(&points, k);
    let (positions, stats) = swap_positions(&points, start, MAX_SWEEPS)?;
    Ok(Partition::from_positions(field, &points, &positions, stats))
}
