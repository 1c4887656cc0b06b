//! Exit criteria for the toolkit. Prints one PASS/FAIL line per criterion
//! (with supporting detail underneath) and exits non-zero if any fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use loopmem::analysis::{fit_loss, negativity, negativity_curve, negativity_zero_crossing};
use loopmem::fock::{apply_loss, quadrature_pdf, wigner_radial};
use loopmem::homodyne::{sample_quadratures, DetectionModel};
use loopmem::memory::{
    evolve_rounds, storage_series, sync_probability, sync_rate, theoretical_lifetime, MemoryParams,
    SourceParams, StorageSeries,
};
use loopmem::numeric::integrate;
use loopmem::tomography::{
    bin_dataset, build_response, default_edges, mle_reconstruct, MleOptions, ResponseMatrix,
};
use loopmem::{FockBasisConfig, FockDiagonalState, LossFitOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

mod common;
use common::{analytic_cdf_sorted, ks_statistic, KS_CRITICAL_1PCT};

/// Reconstructions run anywhere in this suite, and how many of them had a
/// decreasing log-likelihood trace.
static RECONSTRUCTIONS: AtomicUsize = AtomicUsize::new(0);
static NON_MONOTONE: AtomicUsize = AtomicUsize::new(0);

struct Outcome {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, summary: impl Into<String>) -> Self {
        Self {
            pass,
            summary: summary.into(),
            details: Vec::new(),
        }
    }

    fn detail(mut self, line: impl Into<String>) -> Self {
        self.details.push(line.into());
        self
    }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn basis() -> FockBasisConfig {
    FockBasisConfig::default()
}

fn state(pops: &[f64]) -> FockDiagonalState {
    FockDiagonalState::new(basis(), pops).expect("valid test state")
}

fn reconstruct(
    truth: &FockDiagonalState,
    det: &DetectionModel,
    response: &ResponseMatrix,
    count: usize,
    seed: u64,
) -> FockDiagonalState {
    let ds = sample_quadratures(truth, det, count, seed).expect("sampling");
    let hist = bin_dataset(&ds, response.edges()).expect("binning");
    let res = mle_reconstruct(&hist, response, &MleOptions::default()).expect("reconstruction");
    RECONSTRUCTIONS.fetch_add(1, Ordering::Relaxed);
    if res.loglik_trace.windows(2).any(|w| w[1] < w[0]) {
        NON_MONOTONE.fetch_add(1, Ordering::Relaxed);
    }
    res.state
}

fn lifetime() -> Outcome {
    let params = MemoryParams::new(0.006, 13.158e-9).unwrap();
    let tau = theoretical_lifetime(&params).unwrap();
    let us = tau * 1e6;
    Outcome::new(
        within(us, 2.19, 0.05) && within(us, 2.2, 0.05),
        format!("tau = {us:.4} us (expected 2.19 +- 0.05 us)"),
    )
}

fn synchronization() -> Outcome {
    let source = SourceParams::from_production_rate(200e3, 76e6).unwrap();
    let base = sync_rate(&source, 57);
    let improved = sync_rate(&source.improved(3.0).unwrap(), 57);
    let p = sync_probability(&source, 57);
    let pass = (0.13..=0.15).contains(&p)
        && within(base.rate, 28e3, 2e3)
        && within(base.enhancement, 53.0, 4.0)
        && (0.34..=0.38).contains(&improved.probability)
        && within(improved.rate, 200e3, 30e3);
    Outcome::new(
        pass,
        format!(
            "P = {:.4}, rate = {:.2} kHz, enhancement = {:.2}; x3 heralding: P = {:.4}, rate = {:.1} kHz",
            p,
            base.rate / 1e3,
            base.enhancement,
            improved.probability,
            improved.rate / 1e3
        ),
    )
}

fn single_photon_negativity() -> Outcome {
    let initial = state(&[0.09, 0.91]);
    let trips: Vec<u32> = (0..=100).step_by(10).collect();
    let truth = MemoryParams::with_loss(0.010).unwrap();
    let series = storage_series(&initial, &truth, &trips).unwrap();
    let fit = fit_loss(&series, &LossFitOptions::default()).unwrap();
    let params = MemoryParams::with_loss(fit.loss_per_trip).unwrap();
    let det = DetectionModel::reference();
    let curve = negativity_curve(&fit.initial_state, &params, &det, &trips).unwrap();
    let start = curve.negativity[0];
    let Some(crossing) = curve.zero_crossing else {
        return Outcome::new(false, "no zero crossing found");
    };
    let oracle = (1.0f64 / (2.0 * 0.91)).ln() / (1.0 - fit.loss_per_trip).ln();
    let (band_lo, band_hi) = crossing.band;
    let pass = within(fit.loss_per_trip, 0.010, 1e-6)
        && within(start, -0.26, 0.03)
        && (53.0..=61.0).contains(&crossing.round_trips)
        && within(crossing.round_trips, oracle, 0.5);
    Outcome::new(
        pass,
        format!(
            "p = {:.6}, W_min(0) = {start:.4}, crossing = {:.2} +- {:.2} trips (analytic root {oracle:.2})",
            fit.loss_per_trip, crossing.round_trips, crossing.uncertainty
        ),
    )
    .detail(format!(
        "eta band crossings: eta-sigma -> {}, eta+sigma -> {}",
        fmt_opt(band_lo),
        fmt_opt(band_hi)
    ))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "none".to_string(), |v| format!("{v:.2}"))
}

fn two_photon_negativity() -> Outcome {
    let params = MemoryParams::with_loss(0.013).unwrap();
    let det = DetectionModel::reference();
    let mut details = Vec::new();
    let mut hit = Vec::new();
    for i in 0..=10 {
        let eps = i as f64 * 0.01;
        let initial = state(&[0.15 - eps, eps, 0.85]);
        let start = negativity(&initial).value;
        let crossing = negativity_zero_crossing(&initial, &params);
        let curve = negativity_curve(&initial, &params, &det, &[0]).unwrap();
        let band = curve.zero_crossing.map(|z| z.band).unwrap_or((None, None));
        if crossing.is_some_and(|n| (40.0..=52.0).contains(&n)) {
            hit.push(eps);
        }
        details.push(format!(
            "eps = {eps:.2}: W_min(0) = {start:.4}, crossing = {} (eta band {} .. {})",
            fmt_opt(crossing),
            fmt_opt(band.0),
            fmt_opt(band.1)
        ));
    }
    let mut out = Outcome::new(
        !hit.is_empty(),
        if hit.is_empty() {
            "no eps in [0, 0.10] puts the crossing inside 46 +- 6 trips".to_string()
        } else {
            format!("crossing inside 46 +- 6 trips for eps in {hit:?}")
        },
    );
    out.details = details;
    out
}

fn statistical_recovery() -> Outcome {
    let det = DetectionModel::reference();
    let response = build_response(basis(), &det, &default_edges()).unwrap();
    let runs = 50u64;
    let single_truth = state(&[0.09, 0.91]);
    let single: Vec<f64> = (0..runs)
        .into_par_iter()
        .map(|s| reconstruct(&single_truth, &det, &response, 50_000, 10_000 + s).population(1))
        .collect();
    let two_truth = state(&[0.06, 0.09, 0.85]);
    let two: Vec<f64> = (0..runs)
        .into_par_iter()
        .map(|s| reconstruct(&two_truth, &det, &response, 10_000, 20_000 + s).population(2))
        .collect();
    let single_ok = single.iter().filter(|&&x| within(x, 0.91, 0.02)).count();
    let two_ok = two.iter().filter(|&&x| within(x, 0.85, 0.04)).count();
    // At least 95% of the runs.
    let need = (0.95 * runs as f64).ceil() as usize;
    let pass = single_ok >= need && two_ok >= need;
    Outcome::new(
        pass,
        format!(
            "rho_11 within 0.02: {single_ok}/{runs}; rho_22 within 0.04: {two_ok}/{runs} (need {need} each)"
        ),
    )
    .detail(format!("single photon: {}", mean_sd(&single, 0.91)))
    .detail(format!("two photon:    {}", mean_sd(&two, 0.85)))
}

fn mean_sd(xs: &[f64], truth: f64) -> String {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    format!("mean {mean:.4} (bias {:+.4}), sd {sd:.4}", mean - truth)
}

fn loss_fit_equivalence() -> Outcome {
    let mut details = Vec::new();
    let mut noiseless_ok = true;
    let cases: [(&[f64], f64, Vec<u32>); 3] = [
        (&[0.0, 1.0], 0.01, (0..=50).step_by(5).collect()),
        (&[0.09, 0.91], 0.01, (0..=100).step_by(10).collect()),
        (&[0.06, 0.09, 0.85], 0.013, (0..=100).step_by(10).collect()),
    ];
    for (pops, p, trips) in &cases {
        let series =
            storage_series(&state(pops), &MemoryParams::with_loss(*p).unwrap(), trips).unwrap();
        let fit = fit_loss(&series, &LossFitOptions::default()).unwrap();
        let err = (fit.loss_per_trip - p).abs();
        noiseless_ok &= err <= 1e-6;
        details.push(format!(
            "noiseless {pops:?}, p = {p}: |p_fit - p| = {err:.2e}"
        ));
    }

    let det = DetectionModel::reference();
    let response = build_response(basis(), &det, &default_edges()).unwrap();
    let initial = state(&[0.09, 0.91]);
    let params = MemoryParams::with_loss(0.010).unwrap();
    let trips: Vec<u32> = (0..=100).step_by(10).collect();
    let pipelines = 10u64;
    let fits: Vec<f64> = (0..pipelines)
        .into_par_iter()
        .map(|k| {
            let states = trips
                .iter()
                .map(|&n| {
                    let stored = evolve_rounds(&initial, &params, n).unwrap();
                    reconstruct(
                        &stored,
                        &det,
                        &response,
                        50_000,
                        100_000 * (k + 1) + n as u64,
                    )
                })
                .collect();
            let series = StorageSeries::new(trips.clone(), states).unwrap();
            fit_loss(&series, &LossFitOptions::default())
                .unwrap()
                .loss_per_trip
        })
        .collect();
    let noisy_ok = fits.iter().all(|&p| within(p, 0.010, 0.001));
    details.push(format!(
        "noisy pipelines: p_fit = [{}]",
        fits.iter()
            .map(|p| format!("{p:.5}"))
            .collect::<Vec<_>>()
            .join(", ")
    ));
    let mut out = Outcome::new(
        noiseless_ok && noisy_ok,
        format!(
            "noiseless recovery to 1e-6: {}; {}/{pipelines} noisy pipelines within 0.010 +- 0.001",
            noiseless_ok,
            fits.iter().filter(|&&p| within(p, 0.010, 0.001)).count()
        ),
    );
    out.details = details;
    out
}

fn random_state(rng: &mut ChaCha8Rng, max_n: usize) -> FockDiagonalState {
    let support = rng.random_range(0..=max_n);
    let w: Vec<f64> = (0..=support).map(|_| rng.random::<f64>()).collect();
    let total: f64 = w.iter().sum();
    if total == 0.0 {
        return FockDiagonalState::vacuum(basis());
    }
    state(&w.iter().map(|x| x / total).collect::<Vec<_>>())
}

fn property_suites() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut loss_failures = 0;
    for _ in 0..1000 {
        let s = random_state(&mut rng, 14);
        let (t1, t2) = (rng.random::<f64>(), rng.random::<f64>());
        let a = apply_loss(&apply_loss(&s, t1).unwrap(), t2).unwrap();
        let b = apply_loss(&s, t1 * t2).unwrap();
        let sum: f64 = a.populations().iter().sum();
        if a.max_abs_diff(&b) > 1e-9 || (sum - 1.0).abs() > 1e-9 {
            loss_failures += 1;
        }
    }

    let mut worst_wigner: f64 = 0.0;
    let mut wigner_states: Vec<FockDiagonalState> = (0..15)
        .map(|n| FockDiagonalState::fock(basis(), n).unwrap())
        .collect();
    wigner_states.extend((0..50).map(|_| random_state(&mut rng, 14)));
    for s in &wigner_states {
        let total = 2.0 * PI * integrate(|r| wigner_radial(s, r) * r, 0.0, 12.0, 1e-12);
        worst_wigner = worst_wigner.max((total - 1.0).abs());
    }

    let worst_pdf = (0..=15)
        .map(|n| (integrate(|x| quadrature_pdf(n, x), -10.0, 10.0, 1e-12) - 1.0).abs())
        .fold(0.0, f64::max);

    let det = DetectionModel::reference();
    let ks_states = [
        FockDiagonalState::vacuum(basis()),
        FockDiagonalState::fock(basis(), 1).unwrap(),
        state(&[0.09, 0.91]),
        state(&[0.06, 0.09, 0.85]),
        state(&[0.1, 0.1, 0.2, 0.3, 0.2, 0.1]),
    ];
    let n = 100_000usize;
    let critical = KS_CRITICAL_1PCT / (n as f64).sqrt();
    let ks_rejections = (0..100u64)
        .into_par_iter()
        .filter(|&seed| {
            let s = &ks_states[seed as usize % ks_states.len()];
            let ds = sample_quadratures(s, &det, n, 900 + seed).unwrap();
            let mut xs = ds.samples().to_vec();
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let detected = apply_loss(s, det.eta()).unwrap();
            ks_statistic(&xs, &analytic_cdf_sorted(&detected, &xs)) > critical
        })
        .count();

    let response = build_response(basis(), &det, &default_edges()).unwrap();
    for seed in 0..20u64 {
        let s = random_state(&mut rng, 5);
        let _ = reconstruct(&s, &det, &response, 5_000, 300 + seed);
    }
    let recon = RECONSTRUCTIONS.load(Ordering::Relaxed);
    let non_monotone = NON_MONOTONE.load(Ordering::Relaxed);

    let pass = non_monotone == 0
        && loss_failures == 0
        && worst_wigner <= 1e-6
        && worst_pdf <= 1e-8
        && ks_rejections <= 3;
    Outcome::new(
        pass,
        format!(
            "EM monotone in {}/{recon} reconstructions; loss map {}/1000 ok; KS rejections {ks_rejections}/100 at 1%",
            recon - non_monotone,
            1000 - loss_failures
        ),
    )
    .detail(format!(
        "max |2 pi int W r dr - 1| = {worst_wigner:.2e} over {} states; max |int pdf - 1| = {worst_pdf:.2e}",
        wigner_states.len()
    ))
}

/// Golden-section minimization, kept separate from the library's optimizer.
fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    while b - a > 1e-12 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

fn wigner_extrema() -> Outcome {
    let one = negativity(&FockDiagonalState::fock(basis(), 1).unwrap());
    let two = negativity(&FockDiagonalState::fock(basis(), 2).unwrap());
    // W for |2> is e^{-r²} L_2(2r²) / π with L_2(x) = 1 - 2x + x²/2.
    let w2 = |r: f64| (-r * r).exp() * (1.0 - 4.0 * r * r + 2.0 * r.powi(4)) / PI;
    let (r_star, w_star) = golden_min(w2, 0.3, 1.5);
    let pass = within(one.value, -1.0 / PI, 1e-6)
        && within(one.radius, 0.0, 1e-3)
        && within(two.value, -0.13179, 1e-5)
        && within(two.radius, 0.8805, 1e-3)
        && within(two.value, w_star, 1e-9)
        && within(two.radius, r_star, 1e-3);
    Outcome::new(
        pass,
        format!(
            "|1>: W_min = {:.8} at r = {:.4}; |2>: W_min = {:.6} at r = {:.5} (oracle {w_star:.6} at {r_star:.5})",
            one.value, one.radius, two.value, two.radius
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("theoretical lifetime", lifetime),
        ("synchronization rates", synchronization),
        ("single-photon negativity", single_photon_negativity),
        ("two-photon negativity", two_photon_negativity),
        ("statistical recovery", statistical_recovery),
        ("loss-fit equivalence", loss_fit_equivalence),
        ("property suites", property_suites),
        ("pure-state Wigner extrema", wigner_extrema),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {} [{name}]: {verdict}: {} ({:.1}s)",
            i + 1,
            outcome.summary,
            start.elapsed().as_secs_f64()
        );
        for line in &outcome.details {
            println!("    {line}");
        }
        if !outcome.pass {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {failed:?}");
        ExitCode::FAILURE
    }
}
