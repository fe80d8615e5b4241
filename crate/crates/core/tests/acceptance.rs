//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line and then
//! asserts. Tests take a shared lock so wall-clock limits are measured
//! without competing for cores.

use std::io::Write;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use rainfreq::cluster::{adjusted_rand_index, pam, K_MAX, K_MIN};
use rainfreq::egpd::{fit_local, regional_sigma, return_level, Egpd, Level, RegionalOptions, Truncated};
use rainfreq::evaluate::{anderson_darling_test, AdNull, DEFAULT_SIMULATIONS, SIGNIFICANCE};
use rainfreq::ingest::Season;
use rainfreq::pipeline::{
    cluster_season, fit_levels, goodness_of_fit, model_scores, return_level_diffs, return_levels, scan_season,
    GofOptions, LevelFit, SeasonData, SeedPlan,
};
use rainfreq::pwm::{omega, OmegaField};
use rainfreq::synth::{RegionSpec, SynthGrid, SynthSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(id: u32, name: &str, pass: bool, detail: String) -> bool {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "acceptance {id:>2} {verdict} {name}: {detail}");
    pass
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn spec(regions: Vec<RegionSpec>, years: usize) -> SynthSpec {
    SynthSpec {
        regions,
        years,
        start_year: 1979,
        threshold: 1.0,
        band_width: 5.0,
        lat_range: [40.0, 55.0],
        elevation_range: Some([0.0, 2500.0]),
        missing_fraction: 0.0,
    }
}

fn region(sites: usize, kappa: f64, xi: f64) -> RegionSpec {
    RegionSpec { sites, kappa, xi, sigma_min: 3.0, sigma_max: 8.0, wet_fraction: 0.55 }
}

fn season_data(grid: &SynthGrid) -> SeasonData {
    SeasonData::from_sites((0..grid.len()).map(|i| grid.site(i)), Season::Son, 1.0).unwrap()
}

#[test]
fn c01_omega_of_unit_exponential() {
    let _guard = serial();
    let analytic: f64 = (3.0 * 11.0 / 18.0 - 2.0 * 0.75) / (2.0 * 0.75 - 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(20240601);
    let sample: Vec<f64> = (0..100_000).map(|_| Exp1.sample(&mut rng)).collect();
    let start = Instant::now();
    let w = omega(&sample).unwrap();
    let elapsed = start.elapsed();
    let pass = (analytic - 2.0 / 3.0).abs() < 1e-15 && (w - 2.0 / 3.0).abs() < 0.02 && elapsed < Duration::from_secs(1);
    assert!(report(1, "omega oracle", pass, format!("omega = {w:.5} (target 2/3 within 0.02), {}", secs(elapsed))));
}

#[test]
fn c02_scale_invariance() {
    let _guard = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(20240602);
    let samples: Vec<Vec<f64>> = (0..100)
        .map(|_| {
            let d =
                Egpd::new(rng.random_range(0.5..2.0), rng.random_range(1.0..10.0), rng.random_range(0.0..0.5)).unwrap();
            let n = rng.random_range(50..500);
            (0..n).map(|_| d.quantile(rng.random_range(1e-9..1.0 - 1e-9)).unwrap().max(1e-6)).collect()
        })
        .collect();
    let field_at = |c: f64| {
        let values: Vec<f64> =
            samples.iter().map(|s| omega(&s.iter().map(|v| v * c).collect::<Vec<_>>()).unwrap()).collect();
        values
    };
    let base = field_at(1.0);
    let base_partition = pam(&OmegaField::from_values(base.clone(), vec![1; 100]).unwrap(), 3).unwrap();
    let mut worst = 0.0f64;
    let mut same = true;
    for c in [0.01, 1.0, 1000.0] {
        let values = field_at(c);
        for (a, b) in values.iter().zip(&base) {
            worst = worst.max((a - b).abs());
        }
        let p = pam(&OmegaField::from_values(values, vec![1; 100]).unwrap(), 3).unwrap();
        same &= p.assignment == base_partition.assignment && p.medoids == base_partition.medoids;
    }
    let pass = worst <= 1e-12 && same;
    assert!(report(2, "scale invariance", pass, format!("max |Δω| = {worst:.2e}, partitions identical: {same}")));
}

fn medoid_cost(x: &[f64], medoids: &[usize]) -> f64 {
    x.iter().map(|&v| medoids.iter().map(|&m| (v - x[m]).abs()).fold(f64::INFINITY, f64::min)).sum()
}

fn exhaustive_optimum(x: &[f64], k: usize) -> f64 {
    fn go(x: &[f64], k: usize, from: usize, chosen: &mut Vec<usize>, best: &mut f64) {
        if chosen.len() == k {
            *best = best.min(medoid_cost(x, chosen));
            return;
        }
        for i in from..x.len() {
            chosen.push(i);
            go(x, k, i + 1, chosen, best);
            chosen.pop();
        }
    }
    let mut best = f64::INFINITY;
    go(x, k, 0, &mut Vec::new(), &mut best);
    best
}

#[test]
fn c03_pam_against_exhaustive_search() {
    let _guard = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(20240603);
    let start = Instant::now();
    let (mut matched, mut below) = (0, 0);
    for _ in 0..200 {
        let k = rng.random_range(2..=3);
        let n = rng.random_range(k + 1..=12);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let opt = exhaustive_optimum(&x, k);
        let p = pam(&OmegaField::from_values(x.clone(), vec![1; n]).unwrap(), k).unwrap();
        let cost = medoid_cost(&x, &p.medoids);
        if cost < opt - 1e-12 {
            below += 1;
        }
        if (cost - opt).abs() <= 1e-12 * opt.max(1.0) {
            matched += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = below == 0 && matched >= 190 && elapsed < Duration::from_secs(10);
    assert!(report(
        3,
        "PAM optimality",
        pass,
        format!("{matched}/200 match the exhaustive optimum, {below} below it, {}", secs(elapsed))
    ));
}

#[test]
fn c04_region_recovery() {
    let _guard = serial();
    let start = Instant::now();
    let grid =
        SynthGrid::new(spec(vec![region(667, 1.2, 0.05), region(667, 1.2, 0.2), region(666, 1.2, 0.4)], 40), 20240604)
            .unwrap();
    let data = season_data(&grid);
    let partition = cluster_season(&data, &data.omega_field(), 3).unwrap();
    let ari = adjusted_rand_index(&partition.labels().unwrap(), &grid.truth.labels()).unwrap();
    let elapsed = start.elapsed();
    let pass = ari >= 0.9 && elapsed < Duration::from_secs(120);
    assert!(report(4, "region recovery", pass, format!("ARI = {ari:.4} on 2000 sites, {}", secs(elapsed))));
}

#[test]
fn c05_distribution_correctness() {
    let _guard = serial();
    let mut worst_roundtrip = 0.0f64;
    let mut worst_density = 0.0f64;
    for &kappa in &[0.3, 0.8, 1.0, 1.5, 3.0] {
        for &sigma in &[0.5, 2.0, 10.0] {
            for &xi in &[0.0, 1e-8, 0.05, 0.2, 0.5, 0.9] {
                let d = Egpd::new(kappa, sigma, xi).unwrap();
                for &p in &[0.001, 0.01, 0.1, 0.5, 0.9, 0.99, 0.999, 0.9999] {
                    let z = d.quantile(p).unwrap();
                    worst_roundtrip = worst_roundtrip.max((d.cdf(z) - p).abs());
                }
                for &p in &[0.05, 0.3, 0.6, 0.95, 0.995] {
                    let z = d.quantile(p).unwrap();
                    let h = 1e-5 * z.max(1e-3);
                    let fd = (d.cdf(z + h) - d.cdf(z - h)) / (2.0 * h);
                    worst_density = worst_density.max(((d.pdf(z) - fd) / fd).abs());
                }
            }
        }
    }
    let pass = worst_roundtrip < 1e-10 && worst_density < 1e-6;
    assert!(report(
        5,
        "distribution correctness",
        pass,
        format!("max roundtrip error {worst_roundtrip:.2e}, max density relative error {worst_density:.2e}")
    ));
}

#[test]
fn c06_local_fit_recovery() {
    let _guard = serial();
    let truth = Egpd::new(1.5, 4.0, 0.15).unwrap().truncated(1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(20240606);
    let samples: Vec<Vec<f64>> = (0..200).map(|_| truth.sample_n(&mut rng, 3000)).collect();
    let within = samples.iter().filter(|s| (fit_local(s, 1.0).unwrap().dist.xi() - 0.15).abs() <= 0.05).count();
    let pass = within >= 180;
    assert!(report(6, "local fit recovery", pass, format!("xi within ±0.05 on {within}/200 replicates (need 180)")));
}

/// One homogeneous region shared by the pooling, AIC and return-level checks.
struct Homogeneous {
    data: SeasonData,
    fits: Vec<LevelFit>,
}

const HOMOGENEOUS_XI: f64 = 0.1;

fn homogeneous() -> &'static Homogeneous {
    static CELL: OnceLock<Homogeneous> = OnceLock::new();
    CELL.get_or_init(|| {
        let grid = SynthGrid::new(spec(vec![region(300, 1.2, HOMOGENEOUS_XI)], 40), 20240607).unwrap();
        let data = season_data(&grid);
        let labels = vec![0; data.len()];
        let fits = fit_levels(&data, Some(&labels), 1, &Level::ALL, &RegionalOptions::default()).unwrap();
        Homogeneous { data, fits }
    })
}

#[test]
fn c07_regional_fixed_point() {
    let _guard = serial();
    let h = homogeneous();
    let options = RegionalOptions::default();
    let regional = &h.fits[2];
    let shape = regional.shapes[0].unwrap();
    let mut all_converged = true;
    let mut worst_step = 0.0f64;
    let mut max_iter = 0;
    for (site, fit) in h.data.sites.iter().zip(&regional.sites) {
        all_converged &= fit.converged && fit.iterations <= options.max_iter;
        max_iter = max_iter.max(fit.iterations);
        let values = site.wet.fit_values();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let sigma = fit.dist.unwrap().sigma();
        let again = regional_sigma(mean, 1.0, shape.kappa, shape.xi, sigma, &options).unwrap();
        worst_step = worst_step.max((again.sigma - sigma).abs());
    }
    let pooled_error = (shape.xi - HOMOGENEOUS_XI).abs();
    let mut local_errors: Vec<f64> =
        h.fits[0].sites.iter().map(|f| (f.dist.unwrap().xi() - HOMOGENEOUS_XI).abs()).collect();
    local_errors.sort_by(f64::total_cmp);
    let median_local = local_errors[local_errors.len() / 2];
    let pass = all_converged && worst_step < options.eps && pooled_error < median_local;
    assert!(report(
        7,
        "regional fixed point",
        pass,
        format!(
            "all converged: {all_converged} (max {max_iter} iterations), max restart step {worst_step:.1e}, \
             |xi0 - xi| = {pooled_error:.4} vs median local {median_local:.4}"
        )
    ));
}

#[test]
fn c08_anderson_darling_calibration() {
    let _guard = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(20240608);
    let source = Egpd::new(1.2, 5.0, 0.15).unwrap().truncated(1.0).unwrap();
    let fitted: Truncated = fit_local(&source.sample_n(&mut rng, 600), 1.0).unwrap().dist.truncated(1.0).unwrap();
    let null = AdNull::new(rng.random(), DEFAULT_SIMULATIONS);
    let trials = 500;
    let size = |rng: &mut ChaCha8Rng| rng.random_range(100..=700);
    let rejected = (0..trials)
        .filter(|_| {
            let n = size(&mut rng);
            anderson_darling_test(&fitted, &fitted.sample_n(&mut rng, n), &null).unwrap().reject(SIGNIFICANCE)
        })
        .count();
    let d = fitted.dist();
    let shifted = Egpd::new(d.kappa(), d.sigma(), d.xi() + 0.3).unwrap().truncated(1.0).unwrap();
    let detected = (0..trials)
        .filter(|_| {
            anderson_darling_test(&fitted, &shifted.sample_n(&mut rng, 500), &null).unwrap().reject(SIGNIFICANCE)
        })
        .count();
    let rate = rejected as f64 / trials as f64;
    let power = detected as f64 / trials as f64;
    let pass = (rate - 0.05).abs() <= 0.02 && power > 0.5;
    assert!(report(
        8,
        "AD calibration",
        pass,
        format!("rejection {rate:.3} under the null (5% ± 2%), {power:.3} with xi + 0.3 at n = 500")
    ));
}

#[test]
fn c09_aic_ordering() {
    let _guard = serial();
    let h = homogeneous();
    let scores = model_scores(&h.data, &h.fits);
    let n = h.data.len();
    let k = 1;
    let counts = [3 * n, 2 * n + k, n + 2 * k];
    let counts_ok = scores.iter().zip(counts).all(|(s, c)| s.n_params == c && s.n_sites == n);
    let (local, semi, regional) = (scores[0].aic, scores[1].aic, scores[2].aic);
    let pass = counts_ok && regional < semi && semi < local;
    assert!(report(
        9,
        "AIC ordering",
        pass,
        format!(
            "AIC regional {regional:.1} < semiregional {semi:.1} < local {local:.1}; parameter counts ok: {counts_ok}"
        )
    ));
}

#[test]
fn c10_return_level_agreement() {
    let _guard = serial();
    let h = homogeneous();
    let local = return_levels(&h.data, &h.fits[0], &[50.0]).unwrap();
    let regional = return_levels(&h.data, &h.fits[2], &[50.0]).unwrap();
    let diff = &return_level_diffs(&regional, &local).unwrap()[0];

    let grid = SynthGrid::new(spec(vec![region(200, 1.0, 0.0)], 40), 20240610).unwrap();
    let data = season_data(&grid);
    let fits =
        fit_levels(&data, Some(&vec![0; data.len()]), 1, &[Level::Regional], &RegionalOptions::default()).unwrap();
    let periods = [10.0, 50.0, 100.0];
    let fields = return_levels(&data, &fits[0], &periods).unwrap();
    let mut worst = 0.0f64;
    let mut within = 0;
    let mut total = 0;
    for (field, &t) in fields.iter().zip(&periods) {
        for (i, site) in data.sites.iter().enumerate() {
            let sigma = grid.truth.sites[i].sigma;
            let closed = 1.0 + sigma * (t * site.wet.n_wds_mean).ln();
            let exact = return_level(&Egpd::new(1.0, sigma, 0.0).unwrap(), t, site.wet.n_wds_mean, 1.0).unwrap();
            assert!((exact - closed).abs() < 1e-9 * closed);
            let rel = (field.values[i] - closed).abs() / closed;
            worst = worst.max(rel);
            total += 1;
            if rel < 0.05 {
                within += 1;
            }
        }
    }
    let pass = diff.fraction_within_10pct >= 0.6 && worst < 0.05;
    assert!(report(
        10,
        "return-level agreement",
        pass,
        format!(
            "{:.1}% of sites with |regional - local| < 10% at T = 50 (need 60%); exponential rain: \
             {within}/{total} regional levels within 5% of closed form, worst {:.1}%",
            100.0 * diff.fraction_within_10pct,
            100.0 * worst
        )
    ));
}

#[test]
fn c11_scale() {
    let _guard = serial();
    let regions =
        vec![region(5000, 1.1, 0.05), region(5000, 1.1, 0.15), region(5000, 1.1, 0.25), region(5000, 1.1, 0.35)];
    let grid = SynthGrid::new(spec(regions, 40), 20240611).unwrap();

    let start = Instant::now();
    let data = season_data(&grid);
    let field = data.omega_field();
    let ingest = start.elapsed();

    let scan_start = Instant::now();
    let scan = scan_season(&data, &field, K_MIN, K_MAX).unwrap();
    let scan_time = scan_start.elapsed();
    let scan_ok = scan.report.rows.iter().all(|r| r.flag.is_none()) && scan.partitions.len() == K_MAX - K_MIN + 1;

    let rest = Instant::now();
    let partition = cluster_season(&data, &field, 4).unwrap();
    let labels = partition.labels().unwrap();
    let fits = fit_levels(&data, Some(&labels), 4, &Level::ALL, &RegionalOptions::default()).unwrap();
    let scores = model_scores(&data, &fits);
    let fields: Vec<_> = fits.iter().map(|f| return_levels(&data, f, &[10.0, 50.0, 100.0]).unwrap()).collect();
    let _diffs = return_level_diffs(&fields[2], &fields[0]).unwrap();
    let gof =
        goodness_of_fit(&data, &fits, Some(&partition.silhouettes), &GofOptions::default(), &SeedPlan::new(20240611))
            .unwrap();
    let pipeline = ingest + rest.elapsed();

    let fitted = fits.iter().all(|f| f.fitted() == data.len());
    let pass = scan_ok
        && scan_time < Duration::from_secs(300)
        && pipeline < Duration::from_secs(1800)
        && fitted
        && scores.len() == 3
        && gof.rows.len() == 3 * 2500;
    assert!(report(
        11,
        "scale",
        pass,
        format!(
            "k scan 2..10 on 20000 sites {}; single-season pipeline {} (ingest {}), all sites fitted: {fitted}, {} AD tests",
            secs(scan_time),
            secs(pipeline),
            secs(ingest),
            gof.rows.len()
        )
    ));
}
