//! Silhouettes, the Dunn, Davies–Bouldin, Xie–Beni and S_Dbw indices, a scan
//! over the number of clusters, and the adjusted Rand index.
//!
//! Cluster centres are the medoids throughout.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_positions, swap_positions, Partition, Points, MAX_SWEEPS};
use crate::error::{Error, Result};
use crate::pwm::OmegaField;

pub const K_MIN: usize = 2;
pub const K_MAX: usize = 10;

/// One cluster's values, sorted, with prefix sums for mean absolute distances.
struct Sorted {
    values: Vec<f64>,
    prefix: Vec<f64>,
}

impl Sorted {
    fn new(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        let mut prefix = Vec::with_capacity(values.len() + 1);
        prefix.push(0.0);
        for v in &values {
            prefix.push(prefix.last().unwrap() + v);
        }
        Sorted { values, prefix }
    }

    fn len(&self) -> usize {
        self.values.len()
    }

    /// `Σ |x − v|` over the cluster.
    fn abs_sum(&self, x: f64) -> f64 {
        let m = self.len();
        let i = self.values.partition_point(|&v| v < x);
        let below = x * i as f64 - self.prefix[i];
        let above = (self.prefix[m] - self.prefix[i]) - x * (m - i) as f64;
        (below + above).max(0.0)
    }

    /// Number of members within `radius` of `x` (inclusive).
    fn count_within(&self, x: f64, radius: f64) -> usize {
        let lo = self.values.partition_point(|&v| v < x - radius);
        let hi = self.values.partition_point(|&v| v <= x + radius);
        hi.saturating_sub(lo)
    }

    fn variance(&self) -> f64 {
        let m = self.len() as f64;
        let mean = self.prefix[self.len()] / m;
        self.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m
    }
}

fn group(values: &[f64], labels: &[usize], k: usize) -> Vec<Sorted> {
    let mut members = vec![Vec::new(); k];
    for (v, &l) in values.iter().zip(labels) {
        members[l].push(*v);
    }
    members.into_iter().map(Sorted::new).collect()
}

/// Silhouette of each value: `(b − a) / max(a, b)`, where `a` is the mean distance
/// to the other members of its cluster and `b` the smallest mean distance to
/// another cluster. Members of singleton clusters score 0.
pub(crate) fn silhouettes_sorted(values: &[f64], labels: &[usize], k: usize) -> Vec<f64> {
    let clusters = group(values, labels, k);
    values
        .par_iter()
        .zip(labels.par_iter())
        .map(|(&x, &l)| {
            let own = &clusters[l];
            if own.len() < 2 {
                return 0.0;
            }
            let a = own.abs_sum(x) / (own.len() - 1) as f64;
            let b = clusters
                .iter()
                .enumerate()
                .filter(|(j, c)| *j != l && c.len() > 0)
                .map(|(_, c)| c.abs_sum(x) / c.len() as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 && denom.is_finite() {
                ((b - a) / denom).clamp(-1.0, 1.0)
            } else {
                0.0
            }
        })
        .collect()
}

/// Silhouettes of a partition's clustered sites; `NaN` elsewhere.
pub fn silhouette_scores(field: &OmegaField, partition: &Partition) -> Vec<f64> {
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut sites = Vec::new();
    for (i, label) in partition.assignment.iter().enumerate() {
        if let (Some(l), false) = (label, field.degenerate[i]) {
            values.push(field.omega[i]);
            labels.push(*l);
            sites.push(i);
        }
    }
    let scores = silhouettes_sorted(&values, &labels, partition.k);
    let mut out = vec![f64::NAN; field.len()];
    for (s, i) in scores.into_iter().zip(sites) {
        out[i] = s;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityRow {
    pub k: usize,
    pub mean_silhouette: f64,
    pub dunn: f64,
    pub davies_bouldin: f64,
    pub xie_beni: f64,
    pub s_dbw: f64,
    pub total_cost: f64,
    /// Set when this `k` could not be clustered; the index values are then `NaN`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<String>,
}

impl ValidityRow {
    fn flagged(k: usize, reason: String) -> Self {
        ValidityRow {
            k,
            mean_silhouette: f64::NAN,
            dunn: f64::NAN,
            davies_bouldin: f64::NAN,
            xie_beni: f64::NAN,
            s_dbw: f64::NAN,
            total_cost: f64::NAN,
            flag: Some(reason),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub k_min: usize,
    pub k_max: usize,
    pub rows: Vec<ValidityRow>,
}

impl ValidityReport {
    pub fn row(&self, k: usize) -> Option<&ValidityRow> {
        self.rows.iter().find(|r| r.k == k)
    }
}

/// Indices of one partition over sorted values.
fn indices(values: &[f64], labels: &[usize], centres: &[f64]) -> (f64, f64, f64, f64) {
    let k = centres.len();
    let n = values.len();
    let clusters = group(values, labels, k);

    // Dunn: closest pair in different clusters over the largest diameter.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut separation = f64::INFINITY;
    for w in order.windows(2) {
        if labels[w[0]] != labels[w[1]] {
            separation = separation.min(values[w[1]] - values[w[0]]);
        }
    }
    let diameter =
        clusters.iter().filter(|c| c.len() > 0).map(|c| c.values[c.len() - 1] - c.values[0]).fold(0.0, f64::max);
    let dunn = separation / diameter;

    // Davies–Bouldin with mean distance to the medoid as scatter.
    let scatter: Vec<f64> = clusters.iter().zip(centres).map(|(c, &m)| c.abs_sum(m) / c.len() as f64).collect();
    let mut db = 0.0;
    for i in 0..k {
        let worst = (0..k)
            .filter(|&j| j != i)
            .map(|j| (scatter[i] + scatter[j]) / (centres[i] - centres[j]).abs())
            .fold(f64::NEG_INFINITY, f64::max);
        db += worst;
    }
    let davies_bouldin = db / k as f64;

    // Xie–Beni: squared distances to the own medoid over n times the smallest
    // squared medoid separation.
    let compactness: f64 = values.iter().zip(labels).map(|(v, &l)| (v - centres[l]).powi(2)).sum();
    let mut min_sep = f64::INFINITY;
    for i in 0..k {
        for j in i + 1..k {
            min_sep = min_sep.min((centres[i] - centres[j]).powi(2));
        }
    }
    let xie_beni = compactness / (n as f64 * min_sep);

    // S_Dbw: intra-cluster variance ratio plus inter-cluster density.
    let total_var = Sorted::new(values.to_vec()).variance();
    let variances: Vec<f64> = clusters.iter().map(Sorted::variance).collect();
    let scat = variances.iter().sum::<f64>() / (k as f64 * total_var);
    let stdev = variances.iter().sum::<f64>().sqrt() / k as f64;
    let density =
        |i: usize, j: usize, at: f64| clusters[i].count_within(at, stdev) + clusters[j].count_within(at, stdev);
    let mut dens_bw = 0.0;
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let mid = 0.5 * (centres[i] + centres[j]);
            let denom = density(i, j, centres[i]).max(density(i, j, centres[j]));
            if denom > 0 {
                dens_bw += density(i, j, mid) as f64 / denom as f64;
            }
        }
    }
    let s_dbw = scat + dens_bw / (k * (k - 1)) as f64;

    (dunn, davies_bouldin, xie_beni, s_dbw)
}

fn row_for(k: usize, field: &OmegaField, partition: &Partition) -> ValidityRow {
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, label) in partition.assignment.iter().enumerate() {
        if let (Some(l), false) = (label, field.degenerate[i]) {
            values.push(field.omega[i]);
            labels.push(*l);
        }
    }
    let centres: Vec<f64> = partition.medoids.iter().map(|&m| field.omega[m]).collect();
    let (dunn, davies_bouldin, xie_beni, s_dbw) = indices(&values, &labels, &centres);
    ValidityRow {
        k,
        mean_silhouette: partition.mean_silhouette(),
        dunn,
        davies_bouldin,
        xie_beni,
        s_dbw,
        total_cost: partition.total_cost,
        flag: None,
    }
}

/// Partitions and validity rows for every requested `k`.
#[derive(Debug, Clone)]
pub struct ScanResult {
    pub report: ValidityReport,
    /// Successful partitions, ascending in `k`.
    pub partitions: Vec<Partition>,
}

impl ScanResult {
    pub fn partition(&self, k: usize) -> Option<&Partition> {
        self.partitions.iter().find(|p| p.k == k)
    }
}

/// Clusters the field for each `k` in `k_min..=k_max`. Greedy BUILD is nested in
/// `k`, so it runs once up to `k_max` and each `k` starts from its prefix.
pub fn scan_k(field: &OmegaField, k_min: usize, k_max: usize) -> Result<ScanResult> {
    if k_min < K_MIN || k_max > K_MAX || k_min > k_max {
        return Err(Error::InvalidArgument(format!("k range {k_min}..={k_max} must lie within {K_MIN}..={K_MAX}")));
    }
    let points = Points::from_field(field);
    let reachable = points.distinct().min(k_max);
    let build = if reachable >= k_min { build_positions(&points, reachable) } else { Vec::new() };

    let outcomes: Vec<(ValidityRow, Option<Partition>)> = (k_min..=k_max)
        .into_par_iter()
        .map(|k| {
            if let Err(e) = points.check_k(k) {
                return (ValidityRow::flagged(k, e.to_string()), None);
            }
            match swap_positions(&points, build[..k].to_vec(), MAX_SWEEPS) {
                Ok((positions, stats)) => {
                    let partition = Partition::from_positions(field, &points, &positions, stats);
                    (row_for(k, field, &partition), Some(partition))
                }
                Err(e) => (ValidityRow::flagged(k, e.to_string()), None),
            }
        })
        .collect();

    let mut rows = Vec::new();
    let mut partitions = Vec::new();
    for (row, partition) in outcomes {
        rows.push(row);
        partitions.extend(partition);
    }
    Ok(ScanResult { report: ValidityReport { k_min, k_max, rows }, partitions })
}

/// Validity indices for each `k` in the range.
pub fn validity_indices(field: &OmegaField, k_min: usize, k_max: usize) -> Result<ValidityReport> {
    Ok(scan_k(field, k_min, k_max)?.report)
}

/// Adjusted Rand index between two labelings of the same sites.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::SiteMismatch(format!("labelings of length {} and {}", a.len(), b.len())));
    }
    let n = a.len() as f64;
    let pairs = |c: f64| c * (c - 1.0) / 2.0;
    let mut table: HashMap<(usize, usize), f64> = HashMap::new();
    let mut rows: HashMap<usize, f64> = HashMap::new();
    let mut cols: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *rows.entry(x).or_default() += 1.0;
        *cols.entry(y).or_default() += 1.0;
    }
    let index: f64 = table.values().map(|&c| pairs(c)).sum();
    let sum_rows: f64 = rows.values().map(|&c| pairs(c)).sum();
    let sum_cols: f64 = cols.values().map(|&c| pairs(c)).sum();
    let expected = sum_rows * sum_cols / pairs(n);
    let max_index = 0.5 * (sum_rows + sum_cols);
    if max_index == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max_index - expected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn field(values: Vec<f64>) -> OmegaField {
        let n = values.len();
        OmegaField::from_values(values, vec![100; n]).unwrap()
    }

    fn brute_silhouette(values: &[f64], labels: &[usize], k: usize) -> Vec<f64> {
        (0..values.len())
            .map(|i| {
                let mut sums = vec![0.0; k];
                let mut counts = vec![0usize; k];
                for j in 0..values.len() {
                    if j != i {
                        sums[labels[j]] += (values[i] - values[j]).abs();
                        counts[labels[j]] += 1;
                    }
                }
                let own = labels[i];
                if counts[own] == 0 {
                    return 0.0;
                }
                let a = sums[own] / counts[own] as f64;
                let b = (0..k)
                    .filter(|&c| c != own && counts[c] > 0)
                    .map(|c| sums[c] / counts[c] as f64)
                    .fold(f64::INFINITY, f64::min);
                (b - a) / a.max(b)
            })
            .collect()
    }

    #[test]
    fn silhouette_matches_pairwise_definition() {
        let values = [0.1, 0.4, 0.35, 0.9, 1.0, 0.2, 0.95, 0.5];
        let labels = [0, 1, 1, 2, 2, 0, 2, 1];
        let fast = silhouettes_sorted(&values, &labels, 3);
        let slow = brute_silhouette(&values, &labels, 3);
        for (f, s) in fast.iter().zip(&slow) {
            assert!((f - s).abs() < 1e-12, "{f} vs {s}");
        }
    }

    #[test]
    fn silhouette_limits() {
        let s = silhouettes_sorted(&[1.0, 1.0, 1.0, 9.0, 9.0], &[0, 0, 0, 1, 1], 2);
        assert!(s.iter().all(|&v| v == 1.0));
        let s = silhouettes_sorted(&[0.0, 1.0, 2.0], &[0, 1, 1], 2);
        assert_eq!(s[0], 0.0);
    }

    #[test]
    fn equidistant_point_scores_zero() {
        // Point 1.0: own members {0.0, 2.0} and foreign {0.5, 2.5} both at mean distance 1.
        let s = silhouettes_sorted(&[1.0, 0.0, 2.0, 0.5, 2.5], &[0, 0, 0, 1, 1], 2);
        assert!(s[0].abs() < 1e-12);
    }

    #[test]
    fn two_blobs_prefer_two_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Normal::new(0.65, 0.01).unwrap();
        let b = Normal::new(0.80, 0.01).unwrap();
        let values: Vec<f64> =
            (0..300).map(|i| if i % 2 == 0 { a.sample(&mut rng) } else { b.sample(&mut rng) }).collect();
        let scan = scan_k(&field(values), 2, 5).unwrap();
        let r2 = scan.report.row(2).unwrap();
        assert!(r2.mean_silhouette > 0.7, "{}", r2.mean_silhouette);
        for k in 3..=5 {
            assert!(scan.report.row(k).unwrap().dunn < r2.dunn);
        }
        assert_eq!(scan.report.rows.len(), 4);
    }

    #[test]
    fn single_blob_has_weak_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = Normal::new(0.7, 0.02).unwrap();
        let values: Vec<f64> = (0..400).map(|_| d.sample(&mut rng)).collect();
        let report = validity_indices(&field(values), 2, 10).unwrap();
        assert!(report.row(2).unwrap().mean_silhouette < 0.6);
        assert_eq!(report.rows.len(), 9);
    }

    #[test]
    fn scan_flags_unreachable_k() {
        let report = validity_indices(&field(vec![0.1, 0.1, 0.5, 0.9, 0.9, 0.5]), 2, 4).unwrap();
        assert!(report.row(2).unwrap().flag.is_none());
        assert!(report.row(3).unwrap().flag.is_none());
        assert!(report.row(4).unwrap().flag.is_some());
        assert!(validity_indices(&field(vec![0.1, 0.2]), 1, 3).is_err());
        assert!(validity_indices(&field(vec![0.1, 0.2]), 2, 11).is_err());
    }

    #[test]
    fn scan_matches_direct_pam() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = Normal::new(0.7, 0.05).unwrap();
        let f = field((0..500).map(|_| d.sample(&mut rng)).collect());
        let scan = scan_k(&f, 2, 6).unwrap();
        for k in 2..=6 {
            let direct = super::super::pam(&f, k).unwrap();
            assert_eq!(scan.partition(k).unwrap(), &direct);
        }
    }

    #[test]
    fn index_values_on_a_hand_example() {
        // Clusters {0, 1, 2} (medoid 1) and {10, 12} (medoid 10).
        let values = [0.0, 1.0, 2.0, 10.0, 12.0];
        let labels = [0, 0, 0, 1, 1];
        let (dunn, db, xb, _) = indices(&values, &labels, &[1.0, 10.0]);
        assert!((dunn - 8.0 / 2.0).abs() < 1e-12);
        let s0 = 2.0 / 3.0;
        let s1 = 1.0;
        assert!((db - (s0 + s1) / 9.0).abs() < 1e-12);
        assert!((xb - 6.0 / (5.0 * 81.0)).abs() < 1e-12);
    }

    #[test]
    fn ari_properties() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[5, 5, 2, 2]).unwrap(), 1.0);
        let ari = adjusted_rand_index(&[0, 0, 0, 1, 1, 1], &[0, 1, 0, 1, 0, 1]).unwrap();
        assert!(ari < 0.0);
        // Hand-computed contingency example.
        let a = [0, 0, 0, 1, 1, 1];
        let b = [0, 0, 1, 1, 2, 2];
        let ari = adjusted_rand_index(&a, &b).unwrap();
        // index = 1 + 1 = 2; rows = 3 + 3 = 6; cols = 1 + 1 + 1 = 3; expected = 18/15.
        let expected = 18.0 / 15.0;
        assert!((ari - (2.0 - expected) / (4.5 - expected)).abs() < 1e-12);
        assert!(adjusted_rand_index(&[0], &[0, 1]).is_err());
    }
}
