//! The simulate → reconstruct → fit → sync stages. Each stage reads the
//! previous stage's files and writes its own; nothing here prints.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
pub use loopmem::analysis::Lifetime;
use loopmem::analysis::{
    fit_lifetime, fit_loss, negativity, negativity_curve_with_loss_variance, LossFitOptions,
    LossFitResult, NegativityCurve,
};
use loopmem::homodyne::{load_dataset, save_dataset, QuadratureDataset};
use loopmem::memory::{
    evolve_rounds, sync_rate, theoretical_lifetime, MemoryParams, StorageSeries,
};
use loopmem::tomography::{
    bin_dataset, bootstrap_errors, build_response, default_edges, mle_reconstruct,
    ReconstructionReport, ResponseMatrix,
};
use loopmem::{FockBasisConfig, FockDiagonalState, SourceParams};
use rayon::prelude::*;

use crate::config::{derive_seed, Resolved};
use crate::table::{num, opt, Provenance, Table};

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const SUMMARY_FILE: &str = "summary.tsv";
pub const LOSS_FIT_FILE: &str = "loss_fit.tsv";
pub const LIFETIME_FILE: &str = "lifetime.tsv";
pub const NEGATIVITY_FILE: &str = "negativity.tsv";
pub const CROSSING_FILE: &str = "crossing.tsv";
pub const SYNC_FILE: &str = "sync.tsv";
pub const REPORT_FILE: &str = "report.tsv";

pub fn dataset_file_name(round_trips: u32) -> String {
    format!("dataset_N{round_trips:04}.txt")
}

pub fn report_file_name(round_trips: u32) -> String {
    format!("report_N{round_trips:04}.txt")
}

fn provenance(cfg: &Resolved, table: &str) -> Provenance {
    Provenance {
        table: table.to_string(),
        config: cfg.raw.digest(),
        seed: cfg.raw.experiment.seed,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
}

#[derive(Debug)]
pub struct SimulateOutcome {
    pub manifest: PathBuf,
    pub datasets: Vec<PathBuf>,
}

/// Samples one dataset per configured round-trip count and writes the
/// manifest once every dataset is on disk.
pub fn simulate(cfg: &Resolved, out: &Path) -> Result<SimulateOutcome> {
    create_dir(out)?;
    let manifest = out.join(MANIFEST_FILE);
    match std::fs::remove_file(&manifest) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
        Err(e) => return Err(e).with_context(|| format!("removing stale {}", manifest.display())),
    }

    let e = &cfg.raw.experiment;
    let written: Vec<(u32, u64, PathBuf)> = e
        .trips
        .par_iter()
        .map(|&n| -> Result<(u32, u64, PathBuf)> {
            let stored = evolve_rounds(&cfg.initial, &cfg.memory, n)?;
            let seed = derive_seed(e.seed, "dataset", n);
            let mut ds = loopmem::sample_quadratures(&stored, &cfg.detection, e.samples, seed)?;
            ds.metadata.round_trips = n;
            let path = out.join(dataset_file_name(n));
            save_dataset(&ds, &path)?;
            Ok((n, seed, path))
        })
        .collect::<Result<_>>()?;

    let mut table = Table::new(
        provenance(cfg, "manifest"),
        &["round_trips", "seed", "samples", "eta", "file"],
    );
    for (n, seed, path) in &written {
        table.push(vec![
            n.to_string(),
            seed.to_string(),
            e.samples.to_string(),
            num(cfg.detection.eta()),
            path.file_name().unwrap().to_string_lossy().into_owned(),
        ]);
    }
    table.save(&manifest)?;
    Ok(SimulateOutcome {
        manifest,
        datasets: written.into_iter().map(|w| w.2).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub round_trips: u32,
    pub seed: u64,
    pub path: PathBuf,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let table = Table::load(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let trips: Vec<u32> = table.values("round_trips")?;
    let seeds: Vec<u64> = table.values("seed")?;
    let files: Vec<String> = table.values("file")?;
    Ok(trips
        .into_iter()
        .zip(seeds)
        .zip(files)
        .map(|((round_trips, seed), f)| ManifestEntry {
            round_trips,
            seed,
            path: dir.join(f),
        })
        .collect())
}

#[derive(Debug)]
pub struct ReconstructOutcome {
    pub summary: PathBuf,
    pub reports: Vec<(u32, ReconstructionReport)>,
    pub failures: Vec<(PathBuf, anyhow::Error)>,
    /// Round-trip counts whose reconstruction hit the iteration cap.
    pub non_converged: Vec<u32>,
}

impl ReconstructOutcome {
    pub fn is_clean(&self) -> bool {
        self.failures.is_empty() && self.non_converged.is_empty()
    }
}

fn load_entry(entry: &ManifestEntry) -> Result<QuadratureDataset> {
    let ds = load_dataset(&entry.path)?;
    if ds.metadata.round_trips != entry.round_trips {
        bail!(
            "{}: dataset is for N = {}, manifest says {}",
            entry.path.display(),
            ds.metadata.round_trips,
            entry.round_trips
        );
    }
    Ok(ds)
}

/// Reconstructs every dataset in the manifest. Failures are collected per
/// file; the summary covers the datasets that did reconstruct.
pub fn reconstruct(cfg: &Resolved, manifest: &Path, out: &Path) -> Result<ReconstructOutcome> {
    let entries = read_manifest(manifest)?;
    create_dir(out)?;

    let loaded: Vec<(ManifestEntry, Result<QuadratureDataset>)> = entries
        .into_par_iter()
        .map(|e| {
            let ds = load_entry(&e);
            (e, ds)
        })
        .collect();

    // One response matrix per distinct detection model.
    let mut models = BTreeMap::new();
    for (_, ds) in &loaded {
        if let Ok(ds) = ds {
            let d = ds.metadata.detection;
            models.insert(d.eta().to_bits(), d);
        }
    }
    let responses: BTreeMap<u64, ResponseMatrix> = models
        .into_par_iter()
        .map(|(key, d)| Ok((key, build_response(cfg.basis, &d, &default_edges())?)))
        .collect::<Result<_>>()?;

    let master = cfg.raw.experiment.seed;
    let resamples = cfg.raw.experiment.bootstrap;
    let options = cfg.raw.tomography.options();
    let results: Vec<(ManifestEntry, Result<ReconstructionReport>)> = loaded
        .into_par_iter()
        .map(|(entry, ds)| {
            let report = ds.and_then(|ds| {
                let response = &responses[&ds.metadata.detection.eta().to_bits()];
                let hist = bin_dataset(&ds, response.edges())?;
                let mut result = mle_reconstruct(&hist, response, &options)?;
                if resamples >= 2 {
                    let seed = derive_seed(master, "bootstrap", entry.round_trips);
                    result.bootstrap_sigmas =
                        bootstrap_errors(&ds, response, &options, resamples, seed)?;
                }
                let source = entry
                    .path
                    .file_name()
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                Ok(ReconstructionReport::new(
                    &result,
                    &source,
                    entry.round_trips,
                    response.eta(),
                ))
            });
            let report = report.with_context(|| format!("reconstructing {}", entry.path.display()));
            (entry, report)
        })
        .collect();

    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (entry, r) in results {
        match r {
            Ok(rep) => {
                loopmem::io::write_atomic(
                    &out.join(report_file_name(entry.round_trips)),
                    rep.to_text().as_bytes(),
                )?;
                reports.push((entry.round_trips, rep));
            }
            Err(e) => failures.push((entry.path, e)),
        }
    }
    reports.sort_by_key(|r| r.0);
    let non_converged = reports
        .iter()
        .filter(|r| !r.1.converged)
        .map(|r| r.0)
        .collect();

    let dim = cfg.basis.dim();
    let mut columns: Vec<String> = [
        "round_trips",
        "converged",
        "iterations",
        "log_likelihood",
        "eta",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    columns.extend((0..dim).map(|n| format!("rho_{n}")));
    columns.extend((0..dim).map(|n| format!("sigma_{n}")));
    let mut table = Table::with_columns(provenance(cfg, "summary"), columns);
    for (n, r) in &reports {
        let mut row = vec![
            n.to_string(),
            r.converged.to_string(),
            r.iterations.to_string(),
            num(r.log_likelihood),
            num(r.eta),
        ];
        row.extend(r.populations.iter().map(|&p| num(p)));
        row.extend(r.sigmas.iter().map(|&s| num(s)));
        table.push(row);
    }
    let summary = out.join(SUMMARY_FILE);
    table.save(&summary)?;
    Ok(ReconstructOutcome {
        summary,
        reports,
        failures,
        non_converged,
    })
}

/// Reconstructed populations versus round trips, read back from a summary
/// table.
pub fn read_summary(path: &Path, tail_tolerance: f64) -> Result<StorageSeries> {
    let table = Table::load(path)?;
    let dim = table
        .columns
        .iter()
        .filter(|c| c.starts_with("rho_"))
        .count();
    if dim < 3 {
        bail!("{}: expected rho_0 .. rho_n columns", path.display());
    }
    let basis = FockBasisConfig::new(dim - 1, tail_tolerance)?;
    let trips: Vec<u32> = table.values("round_trips")?;
    let columns = (0..dim)
        .map(|n| table.values::<f64>(&format!("rho_{n}")))
        .collect::<Result<Vec<_>>>()?;
    let states = (0..trips.len())
        .map(|i| {
            let pops: Vec<f64> = columns.iter().map(|c| c[i]).collect();
            FockDiagonalState::new(basis, &pops)
                .with_context(|| format!("{}: row for N = {}", path.display(), trips[i]))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StorageSeries::new(trips, states)?)
}

/// Writes a summary table for an already known series (no reconstruction
/// statistics), e.g. a noiseless model run.
pub fn write_series_summary(cfg: &Resolved, series: &StorageSeries, path: &Path) -> Result<()> {
    let dim = series.states()[0].populations().len();
    let mut columns: Vec<String> = vec!["round_trips".into()];
    columns.extend((0..dim).map(|n| format!("rho_{n}")));
    let mut table = Table::with_columns(provenance(cfg, "summary"), columns);
    for (n, s) in series.iter() {
        let mut row = vec![n.to_string()];
        row.extend(s.populations().iter().map(|&p| num(p)));
        table.push(row);
    }
    table.save(path)
}

#[derive(Debug)]
pub struct LevelLifetime {
    pub level: usize,
    pub tau: Lifetime,
    pub f0: f64,
    pub excluded: usize,
}

#[derive(Debug)]
pub struct FitOutcome {
    pub loss: LossFitResult,
    /// Lifetime implied by the fitted loss for a single photon.
    pub lifetime: Lifetime,
    pub levels: Vec<LevelLifetime>,
    pub curve: NegativityCurve,
}

impl FitOutcome {
    pub fn crossing(&self) -> Option<f64> {
        self.curve.zero_crossing.map(|z| z.round_trips)
    }
}

fn lifetime_cell(t: &Lifetime) -> String {
    match t {
        Lifetime::Finite(s) => num(*s),
        Lifetime::Infinite => "inf".into(),
    }
}

/// Loss fit, per-level lifetimes and the negativity curve for a summary.
/// Writes the loss-fit, lifetime, negativity and crossing tables to `out`.
pub fn fit(cfg: &Resolved, summary: &Path, out: &Path) -> Result<FitOutcome> {
    let series = read_summary(summary, cfg.basis.tail_tolerance())?;
    let options = LossFitOptions {
        fix_initial: cfg.raw.fit.fix_initial,
        weights: None,
        max_loss: cfg.raw.fit.max_loss,
    };
    let loss = fit_loss(&series, &options).context("fitting the loss per round trip")?;
    let dt = cfg.memory.round_trip_time();
    let params = MemoryParams::new(loss.loss_per_trip, dt)?;
    let lifetime = match theoretical_lifetime(&params) {
        Ok(t) => Lifetime::Finite(t),
        Err(loopmem::Error::InfiniteLifetime) => Lifetime::Infinite,
        Err(e) => return Err(e.into()),
    };

    let levels = (1..loss.initial_state.populations().len())
        .filter(|&n| series.states()[0].population(n) > 0.01)
        .map(|n| {
            let f = fit_lifetime(&series, n, dt)?;
            Ok(LevelLifetime {
                level: n,
                tau: f.tau,
                f0: f.f0,
                excluded: f.excluded,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let last = *series.round_trips().last().unwrap();
    let trips: Vec<u32> = (0..=last)
        .step_by(cfg.raw.fit.curve_step as usize)
        .collect();
    let curve = negativity_curve_with_loss_variance(
        &loss.initial_state,
        &params,
        &cfg.detection,
        &trips,
        loss.covariance,
    )?;

    create_dir(out)?;
    let mut t = Table::new(
        provenance(cfg, "loss_fit"),
        &[
            "loss_per_trip",
            "std_error",
            "residual",
            "points",
            "fix_initial",
            "lifetime_seconds",
        ],
    );
    t.push(vec![
        num(loss.loss_per_trip),
        num(loss.std_error()),
        num(loss.residual),
        series.len().to_string(),
        options.fix_initial.to_string(),
        lifetime_cell(&lifetime),
    ]);
    t.save(&out.join(LOSS_FIT_FILE))?;

    let mut t = Table::new(
        provenance(cfg, "lifetime"),
        &["level", "tau_seconds", "f0", "excluded_points"],
    );
    for l in &levels {
        t.push(vec![
            l.level.to_string(),
            lifetime_cell(&l.tau),
            num(l.f0),
            l.excluded.to_string(),
        ]);
    }
    t.save(&out.join(LIFETIME_FILE))?;

    let measured: BTreeMap<u32, f64> = series
        .iter()
        .map(|(n, s)| (n, negativity(s).value))
        .collect();
    let mut t = Table::new(
        provenance(cfg, "negativity"),
        &[
            "round_trips",
            "negativity",
            "band_low",
            "band_high",
            "measured",
        ],
    );
    for (i, &n) in curve.round_trips.iter().enumerate() {
        t.push(vec![
            n.to_string(),
            num(curve.negativity[i]),
            num(curve.band_low[i]),
            num(curve.band_high[i]),
            opt(measured.get(&n).copied()),
        ]);
    }
    t.save(&out.join(NEGATIVITY_FILE))?;

    let mut t = Table::new(
        provenance(cfg, "crossing"),
        &[
            "round_trips",
            "uncertainty",
            "eta_minus_sigma",
            "eta_plus_sigma",
        ],
    );
    let z = curve.zero_crossing;
    t.push(vec![
        opt(z.map(|z| z.round_trips)),
        opt(z.map(|z| z.uncertainty)),
        opt(z.and_then(|z| z.band.0)),
        opt(z.and_then(|z| z.band.1)),
    ]);
    t.save(&out.join(CROSSING_FILE))?;

    Ok(FitOutcome {
        loss,
        lifetime,
        levels,
        curve,
    })
}

/// Synchronization probability, rate and enhancement for storage windows
/// `0..=max_trips`, for the configured source and the improved one.
pub fn sync_table(cfg: &Resolved, max_trips: u32) -> Result<Table> {
    let improved = cfg.source.improved(cfg.raw.source.improvement_factor)?;
    let mut t = Table::new(
        provenance(cfg, "sync"),
        &[
            "scenario",
            "heralding_probability",
            "round_trips",
            "probability",
            "rate_hz",
            "enhancement",
        ],
    );
    for (name, src) in [("baseline", &cfg.source), ("improved", &improved)] {
        for n in 0..=max_trips {
            let s = sync_rate(src, n);
            t.push(vec![
                name.to_string(),
                num(src.heralding_probability()),
                n.to_string(),
                num(s.probability),
                num(s.rate),
                num(s.enhancement),
            ]);
        }
    }
    Ok(t)
}

pub fn sync(cfg: &Resolved, max_trips: u32, out: &Path) -> Result<Table> {
    let t = sync_table(cfg, max_trips)?;
    create_dir(out)?;
    t.save(&out.join(SYNC_FILE))?;
    Ok(t)
}

#[derive(Debug)]
pub struct ReportOutcome {
    pub fit: FitOutcome,
    /// Storage window used for the synchronization numbers.
    pub sync_trips: u32,
    pub table: Table,
}

/// Fit plus synchronization, with the storage window set by the measured
/// negativity crossing when there is one.
pub fn report(cfg: &Resolved, summary: &Path, out: &Path) -> Result<ReportOutcome> {
    let fit = fit(cfg, summary, out)?;
    let sync_trips = fit
        .crossing()
        .map(|n| n.floor() as u32)
        .unwrap_or(cfg.raw.source.max_trips);
    sync(cfg, sync_trips, out)?;
    let base = sync_rate(&cfg.source, sync_trips);
    let improved_source: SourceParams = cfg.source.improved(cfg.raw.source.improvement_factor)?;
    let improved = sync_rate(&improved_source, sync_trips);
    let z = fit.curve.zero_crossing;

    let mut t = Table::new(provenance(cfg, "report"), &["quantity", "value"]);
    let rows: Vec<(&str, String)> = vec![
        ("loss_per_trip", num(fit.loss.loss_per_trip)),
        ("loss_std_error", num(fit.loss.std_error())),
        ("lifetime_seconds", lifetime_cell(&fit.lifetime)),
        ("initial_negativity", num(fit.curve.negativity[0])),
        ("crossing_round_trips", opt(z.map(|z| z.round_trips))),
        ("crossing_uncertainty", opt(z.map(|z| z.uncertainty))),
        ("sync_round_trips", sync_trips.to_string()),
        ("sync_probability", num(base.probability)),
        ("sync_rate_hz", num(base.rate)),
        ("enhancement", num(base.enhancement)),
        ("improved_sync_probability", num(improved.probability)),
        ("improved_sync_rate_hz", num(improved.rate)),
    ];
    for (k, v) in rows {
        t.push(vec![k.to_string(), v]);
    }
    t.save(&out.join(REPORT_FILE))?;
    Ok(ReportOutcome {
        fit,
        sync_trips,
        table: t,
    })
}

/// Looks up a `quantity` row of a report table.
pub fn report_value(table: &Table, key: &str) -> Result<String> {
    let q = table.column("quantity")?;
    let v = table.column("value")?;
    table
        .rows
        .iter()
        .find(|r| r[q] == key)
        .map(|r| r[v].clone())
        .ok_or_else(|| anyhow!("report has no `{key}` row"))
}
