//! Maximum-likelihood reconstruction of Fock-diagonal states from
//! phase-averaged homodyne data.
//!
//! The measurement record is a histogram of quadrature values with two
//! extra cells for underflow and overflow, so every sample enters the
//! likelihood. Detection losses are folded into the response matrix
//! (`M[j][n] = Σ_k B(n, k; η) ∫_j |ψ_k|²`), which keeps the estimate on the
//! probability simplex; populations are then refined by the diagonal
//! expectation-maximization iteration
//! `q_n ← q_n Σ_j (f_j / p_j(q)) M[j][n] / Σ_j f_j`.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fock::{
    apply_loss, binomial_pmf, invert_loss, quadrature_pdf, FockBasisConfig, FockDiagonalState,
};
use crate::homodyne::{DetectionModel, QuadratureDataset};
use crate::io::split_key_value;
use crate::numeric::integrate;

/// Absolute tolerance of each bin integral.
pub const BIN_INTEGRAL_TOLERANCE: f64 = 1e-10;

// |ψ_n(x)|² for n ≤ 15 is below 1e-40 beyond this radius.
const TAIL_CUTOFF: f64 = 20.0;

/// Uniform edges over `[-6, 6]` with width 0.1.
pub fn default_edges() -> Vec<f64> {
    uniform_edges(-6.0, 6.0, 120)
}

pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let w = (hi - lo) / bins as f64;
    (0..=bins).map(|i| lo + w * i as f64).collect()
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::param("edges", "need at least two bin edges"));
    }
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param(
            "edges",
            "must be finite and strictly increasing",
        ));
    }
    Ok(())
}

/// Counts per left-closed bin `[e_j, e_{j+1})`, plus everything outside.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedHistogram {
    edges: Vec<f64>,
    counts: Vec<u64>,
    underflow: u64,
    overflow: u64,
}

impl BinnedHistogram {
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn underflow(&self) -> u64 {
        self.underflow
    }

    pub fn overflow(&self) -> u64 {
        self.overflow
    }

    pub fn total(&self) -> u64 {
        self.underflow + self.overflow + self.counts.iter().sum::<u64>()
    }

    /// Likelihood cells in order: underflow, bins, overflow.
    pub fn cells(&self) -> Vec<f64> {
        std::iter::once(self.underflow)
            .chain(self.counts.iter().copied())
            .chain(std::iter::once(self.overflow))
            .map(|c| c as f64)
            .collect()
    }
}

// Cell index: 0 = underflow, 1..=bins, bins + 1 = overflow.
fn cell_of(edges: &[f64], x: f64) -> usize {
    edges.partition_point(|&e| e <= x)
}

pub fn bin_samples(samples: &[f64], edges: &[f64]) -> Result<BinnedHistogram> {
    check_edges(edges)?;
    let bins = edges.len() - 1;
    let mut cells = vec![0u64; bins + 2];
    for &x in samples {
        cells[cell_of(edges, x)] += 1;
    }
    Ok(BinnedHistogram {
        edges: edges.to_vec(),
        underflow: cells[0],
        overflow: cells[bins + 1],
        counts: cells[1..=bins].to_vec(),
    })
}

pub fn bin_dataset(ds: &QuadratureDataset, edges: &[f64]) -> Result<BinnedHistogram> {
    bin_samples(ds.samples(), edges)
}

/// Probability of each likelihood cell given `n` photons before detection.
#[derive(Debug, Clone)]
pub struct ResponseMatrix {
    basis: FockBasisConfig,
    edges: Vec<f64>,
    eta: f64,
    // [cell][k]: probability of the cell for |k⟩ at unit efficiency.
    ideal: Vec<Vec<f64>>,
    // [cell][n]: the same with detection losses folded in.
    folded: Vec<Vec<f64>>,
}

impl ResponseMatrix {
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn basis(&self) -> &FockBasisConfig {
        &self.basis
    }

    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    /// `M[j][n]` for bin `j` (0-based, excluding the tail cells).
    pub fn entry(&self, bin: usize, n: usize) -> f64 {
        self.folded[bin + 1][n]
    }

    pub fn underflow(&self, n: usize) -> f64 {
        self.folded[0][n]
    }

    pub fn overflow(&self, n: usize) -> f64 {
        self.folded[self.folded.len() - 1][n]
    }

    /// All likelihood cells, `[cell][n]`.
    pub fn cells(&self) -> &[Vec<f64>] {
        &self.folded
    }

    /// Bin integral of `|ψ_k|²` at unit efficiency.
    pub fn ideal_entry(&self, bin: usize, k: usize) -> f64 {
        self.ideal[bin + 1][k]
    }

    fn ideal_cells(&self) -> &[Vec<f64>] {
        &self.ideal
    }

    /// Cell probabilities `p_j(q) = Σ_n M[j][n] q_n`.
    pub fn predict(&self, populations: &[f64]) -> Vec<f64> {
        predict(&self.folded, populations)
    }
}

fn predict(cells: &[Vec<f64>], q: &[f64]) -> Vec<f64> {
    cells
        .iter()
        .map(|row| row.iter().zip(q).map(|(m, q)| m * q).sum())
        .collect()
}

pub fn build_response(
    basis: FockBasisConfig,
    det: &DetectionModel,
    edges: &[f64],
) -> Result<ResponseMatrix> {
    check_edges(edges)?;
    let dim = basis.dim();
    let lo = edges[0].min(-TAIL_CUTOFF);
    let hi = edges[edges.len() - 1].max(TAIL_CUTOFF);
    let bounds: Vec<f64> = std::iter::once(lo)
        .chain(edges.iter().copied())
        .chain(std::iter::once(hi))
        .collect();

    let mut ideal: Vec<Vec<f64>> = bounds
        .par_windows(2)
        .map(|w| {
            (0..dim)
                .map(|k| integrate(|x| quadrature_pdf(k, x), w[0], w[1], BIN_INTEGRAL_TOLERANCE))
                .collect()
        })
        .collect();
    // Absorb quadrature round-off so every column is an exact distribution.
    for k in 0..dim {
        let total: f64 = ideal.iter().map(|row| row[k]).sum();
        for row in &mut ideal {
            row[k] /= total;
        }
    }

    let eta = det.eta();
    let mixing: Vec<Vec<f64>> = (0..dim)
        .map(|n| (0..dim).map(|k| binomial_pmf(n, k, eta)).collect())
        .collect();
    let folded = ideal
        .iter()
        .map(|row| {
            (0..dim)
                .map(|n| (0..=n).map(|k| mixing[n][k] * row[k]).sum())
                .collect()
        })
        .collect();

    Ok(ResponseMatrix {
        basis,
        edges: edges.to_vec(),
        eta,
        ideal,
        folded,
    })
}

/// How detection losses are removed from the estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EfficiencyCorrection {
    /// Losses folded into the measurement operators.
    #[default]
    PovmFolded,
    /// Reconstruct the detected state, then invert the loss map. Noise is
    /// amplified and negative populations are clipped.
    InverseMap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOptions {
    /// Stop once the relative log-likelihood change falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub correction: EfficiencyCorrection,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 5_000,
            correction: EfficiencyCorrection::PovmFolded,
        }
    }
}

/// Populations below this are reported as exactly zero.
pub const POPULATION_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    /// Efficiency-corrected state before detection.
    pub state: FockDiagonalState,
    /// The state as the detector saw it.
    pub raw_state: FockDiagonalState,
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Bootstrap standard deviation per population; empty until computed.
    pub bootstrap_sigmas: Vec<f64>,
}

impl ReconstructionResult {
    pub fn log_likelihood(&self) -> f64 {
        *self
            .loglik_trace
            .last()
            .expect("trace holds the initial value")
    }
}

/// `Σ_j f_j ln p_j`, skipping empty cells.
pub fn log_likelihood(freqs: &[f64], probs: &[f64]) -> f64 {
    freqs
        .iter()
        .zip(probs)
        .filter(|(f, _)| **f > 0.0)
        .map(|(f, p)| f * p.ln())
        .sum()
}

/// One expectation-maximization update of the populations `q`.
pub fn em_step(cells: &[Vec<f64>], freqs: &[f64], q: &[f64]) -> Vec<f64> {
    let total: f64 = freqs.iter().sum();
    let probs = predict(cells, q);
    let mut next = vec![0.0; q.len()];
    for ((row, f), p) in cells.iter().zip(freqs).zip(&probs) {
        if *f == 0.0 || *p <= 0.0 {
            continue;
        }
        let w = f / p;
        for (acc, m) in next.iter_mut().zip(row) {
            *acc += w * m;
        }
    }
    next.iter().zip(q).map(|(r, q)| q * r / total).collect()
}

struct EmOutcome {
    populations: Vec<f64>,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

fn run_em(cells: &[Vec<f64>], freqs: &[f64], options: &MleOptions) -> EmOutcome {
    let dim = cells[0].len();
    let mut q = vec![1.0 / dim as f64; dim];
    let mut ll = log_likelihood(freqs, &predict(cells, &q));
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < options.max_iterations {
        q = em_step(cells, freqs, &q);
        iterations += 1;
        let next = log_likelihood(freqs, &predict(cells, &q));
        trace.push(next);
        let change = (next - ll).abs() / ll.abs().max(f64::MIN_POSITIVE);
        ll = next;
        if change < options.tolerance {
            converged = true;
            break;
        }
    }
    EmOutcome {
        populations: q,
        trace,
        iterations,
        converged,
    }
}

fn floored(q: &[f64]) -> Vec<f64> {
    q.iter()
        .map(|&p| if p < POPULATION_FLOOR { 0.0 } else { p })
        .collect()
}

/// Maximum-likelihood populations for a histogram. Running out of
/// iterations is reported through `converged`, not as an error; an estimate
/// that leaves more than the basis tail tolerance at the cutoff is rejected
/// with [`Error::Truncation`] whether or not it converged.
pub fn mle_reconstruct(
    hist: &BinnedHistogram,
    response: &ResponseMatrix,
    options: &MleOptions,
) -> Result<ReconstructionResult> {
    if hist.edges != response.edges {
        return Err(Error::EdgeMismatch);
    }
    if hist.total() == 0 {
        return Err(Error::EmptyHistogram);
    }
    let freqs = hist.cells();
    let basis = response.basis;

    let (state, raw_state, outcome) = match options.correction {
        EfficiencyCorrection::PovmFolded => {
            let outcome = run_em(&response.folded, &freqs, options);
            let state = FockDiagonalState::from_clipped(basis, &floored(&outcome.populations))?;
            let raw = apply_loss(&state, response.eta)?;
            (state, raw, outcome)
        }
        EfficiencyCorrection::InverseMap => {
            let outcome = run_em(response.ideal_cells(), &freqs, options);
            let raw = FockDiagonalState::from_clipped(basis, &floored(&outcome.populations))?;
            let corrected = invert_loss(&raw, response.eta)?;
            let state = FockDiagonalState::from_clipped(basis, &floored(&corrected))?;
            (state, raw, outcome)
        }
    };

    Ok(ReconstructionResult {
        state,
        raw_state,
        loglik_trace: outcome.trace,
        iterations: outcome.iterations,
        converged: outcome.converged,
        bootstrap_sigmas: Vec::new(),
    })
}

/// Per-population bootstrap standard deviations from `n_resamples`
/// resamples (with replacement) of the dataset. Deterministic per `seed`.
pub fn bootstrap_errors(
    ds: &QuadratureDataset,
    response: &ResponseMatrix,
    options: &MleOptions,
    n_resamples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_resamples < 2 {
        return Err(Error::param("n_resamples", "need at least two resamples"));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..n_resamples).map(|_| master.next_u64()).collect();
    bootstrap_errors_with_seeds(ds, response, options, &seeds)
}

/// [`bootstrap_errors`] with one explicit RNG seed per resample.
pub fn bootstrap_errors_with_seeds(
    ds: &QuadratureDataset,
    response: &ResponseMatrix,
    options: &MleOptions,
    seeds: &[u64],
) -> Result<Vec<f64>> {
    if seeds.len() < 2 {
        return Err(Error::param("n_resamples", "need at least two resamples"));
    }
    let edges = response.edges();
    let bins = edges.len() - 1;
    let cell_index: Vec<usize> = ds.samples().iter().map(|&x| cell_of(edges, x)).collect();

    let estimates = seeds
        .par_iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let mut cells = vec![0u64; bins + 2];
            for _ in 0..cell_index.len() {
                cells[cell_index[rng.random_range(0..cell_index.len())]] += 1;
            }
            let hist = BinnedHistogram {
                edges: edges.to_vec(),
                underflow: cells[0],
                overflow: cells[bins + 1],
                counts: cells[1..=bins].to_vec(),
            };
            mle_reconstruct(&hist, response, options).map(|r| r.state.populations().to_vec())
        })
        .collect::<Result<Vec<_>>>()?;

    let dim = response.basis.dim();
    let m = estimates.len() as f64;
    Ok((0..dim)
        .map(|n| {
            let mean = estimates.iter().map(|e| e[n]).sum::<f64>() / m;
            let var = estimates.iter().map(|e| (e[n] - mean).powi(2)).sum::<f64>() / (m - 1.0);
            var.sqrt()
        })
        .collect())
}

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Machine-readable summary of one reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionReport {
    pub source: String,
    pub round_trips: u32,
    pub eta: f64,
    pub iterations: usize,
    pub log_likelihood: f64,
    pub converged: bool,
    pub populations: Vec<f64>,
    pub raw_populations: Vec<f64>,
    pub sigmas: Vec<f64>,
}

impl ReconstructionReport {
    pub fn new(result: &ReconstructionResult, source: &str, round_trips: u32, eta: f64) -> Self {
        let dim = result.state.populations().len();
        let sigmas = if result.bootstrap_sigmas.is_empty() {
            vec![f64::NAN; dim]
        } else {
            result.bootstrap_sigmas.clone()
        };
        Self {
            source: source.to_string(),
            round_trips,
            eta,
            iterations: result.iterations,
            log_likelihood: result.log_likelihood(),
            converged: result.converged,
            populations: result.state.populations().to_vec(),
            raw_populations: result.raw_state.populations().to_vec(),
            sigmas,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# loopmem reconstruction report\n");
        let _ = writeln!(out, "format_version = {REPORT_FORMAT_VERSION}");
        let _ = writeln!(out, "source = {}", self.source);
        let _ = writeln!(out, "round_trips = {}", self.round_trips);
        let _ = writeln!(out, "eta = {}", self.eta);
        let _ = writeln!(out, "iterations = {}", self.iterations);
        let _ = writeln!(out, "log_likelihood = {}", self.log_likelihood);
        let _ = writeln!(out, "converged = {}", self.converged);
        let _ = writeln!(out, "n_max = {}", self.populations.len() - 1);
        for (n, p) in self.populations.iter().enumerate() {
            let _ = writeln!(out, "population.{n} = {p}");
        }
        for (n, s) in self.sigmas.iter().enumerate() {
            let _ = writeln!(out, "sigma.{n} = {s}");
        }
        for (n, p) in self.raw_populations.iter().enumerate() {
            let _ = writeln!(out, "raw_population.{n} = {p}");
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut fields = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let (k, v) = split_key_value(t)
                .ok_or_else(|| err(i + 1, format!("expected `key = value`, got `{t}`")))?;
            fields.push((i + 1, k.to_string(), v.to_string()));
        }
        let get = |key: &str| {
            fields
                .iter()
                .find(|(_, k, _)| k == key)
                .ok_or_else(|| err(0, format!("missing key `{key}`")))
        };
        let version = get("format_version")?;
        if version.2 != REPORT_FORMAT_VERSION.to_string() {
            return Err(Error::Version {
                path: path.to_path_buf(),
                found: version.2.clone(),
                expected: REPORT_FORMAT_VERSION,
            });
        }
        macro_rules! num {
            ($key:expr, $ty:ty) => {{
                let (no, _, v) = get($key)?;
                v.parse::<$ty>()
                    .map_err(|e| err(*no, format!("`{v}`: {e}")))?
            }};
        }
        let n_max = num!("n_max", usize);
        let vector = |prefix: &str| -> Result<Vec<f64>> {
            (0..=n_max)
                .map(|n| {
                    let key = format!("{prefix}.{n}");
                    let (no, _, v) = get(&key)?;
                    v.parse::<f64>()
                        .map_err(|e| err(*no, format!("`{v}`: {e}")))
                })
                .collect()
        };
        Ok(Self {
            source: get("source")?.2.clone(),
            round_trips: num!("round_trips", u32),
            eta: num!("eta", f64),
            iterations: num!("iterations", usize),
            log_likelihood: num!("log_likelihood", f64),
            converged: num!("converged", bool),
            populations: vector("population")?,
            raw_populations: vector("raw_population")?,
            sigmas: vector("sigma")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homodyne::{sample_quadratures, DatasetMetadata};

    fn basis() -> FockBasisConfig {
        FockBasisConfig::default()
    }

    fn dataset(samples: Vec<f64>) -> QuadratureDataset {
        QuadratureDataset::new(
            samples,
            DatasetMetadata {
                state: "vacuum".into(),
                detection: DetectionModel::reference(),
                round_trips: 0,
                seed: 0,
            },
        )
        .unwrap()
    }

    #[test]
    fn binning_examples() {
        let ds = dataset(vec![-1.0, 0.0, 1.0]);
        let h = bin_dataset(&ds, &[-2.0, 0.0, 2.0]).unwrap();
        assert_eq!(h.counts(), &[1, 2]);
        assert_eq!((h.underflow(), h.overflow()), (0, 0));

        let ds = dataset(vec![-5.0, 7.0, 9.0, 2.0]);
        let h = bin_dataset(&ds, &[-2.0, 0.0, 2.0]).unwrap();
        assert_eq!(h.counts(), &[0, 0]);
        assert_eq!(h.underflow(), 1);
        assert_eq!(h.overflow(), 3);
        assert_eq!(h.total(), 4);

        assert!(bin_dataset(&ds, &[]).is_err());
        assert!(bin_dataset(&ds, &[0.0, 0.0]).is_err());
        assert!(bin_dataset(&ds, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn response_examples() {
        let ideal = DetectionModel::from_combined(1.0, 0.0).unwrap();
        let wide = build_response(basis(), &ideal, &[-10.0, 10.0]).unwrap();
        for n in 0..basis().dim() {
            assert!((wide.entry(0, n) - 1.0).abs() < 1e-9, "n={n}");
        }

        let narrow = build_response(basis(), &ideal, &[-0.1, 0.1]).unwrap();
        let oracle = integrate(|x| quadrature_pdf(1, x), -0.1, 0.1, 1e-14);
        assert!((narrow.entry(0, 1) - oracle).abs() < 1e-10);
        // small-bin estimate (2/√π)·(2·0.1³/3) = 7.52e-4, Gaussian factor
        // brings it to 7.4776e-4
        assert!((narrow.entry(0, 1) - 7.4776e-4).abs() < 1e-8);

        let half = DetectionModel::from_combined(0.5, 0.0).unwrap();
        let edges = default_edges();
        let r = build_response(basis(), &half, &edges).unwrap();
        for j in 0..r.bins() {
            let want = 0.5 * r.ideal_entry(j, 1) + 0.5 * r.ideal_entry(j, 0);
            assert!((r.entry(j, 1) - want).abs() < 1e-15);
        }
    }

    #[test]
    fn response_columns_are_distributions() {
        let r = build_response(basis(), &DetectionModel::reference(), &default_edges()).unwrap();
        for n in 0..basis().dim() {
            let total: f64 = r.cells().iter().map(|row| row[n]).sum();
            assert!((total - 1.0).abs() < 1e-6);
            assert!(r.cells().iter().all(|row| row[n] >= 0.0));
        }
    }

    #[test]
    fn fixed_point_of_em() {
        let r = build_response(basis(), &DetectionModel::reference(), &default_edges()).unwrap();
        let truth = FockDiagonalState::new(basis(), &[0.2, 0.5, 0.3]).unwrap();
        let mut q = truth.populations().to_vec();
        // A strictly positive point so no component is pinned at zero.
        for p in &mut q {
            *p = 0.9 * *p + 0.1 / 16.0;
        }
        let freqs: Vec<f64> = r.predict(&q).iter().map(|p| p * 12_345.0).collect();
        let next = em_step(r.cells(), &freqs, &q);
        for (a, b) in next.iter().zip(&q) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn vacuum_reconstruction_and_monotone_trace() {
        let det = DetectionModel::from_combined(0.77, 0.03).unwrap();
        let vac = FockDiagonalState::vacuum(basis());
        let ds = sample_quadratures(&vac, &det, 10_000, 3).unwrap();
        let r = build_response(basis(), &det, &default_edges()).unwrap();
        let h = bin_dataset(&ds, r.edges()).unwrap();
        let res = mle_reconstruct(&h, &r, &MleOptions::default()).unwrap();
        assert!(res.state.population(0) >= 0.99, "{:?}", res.state);
        assert!(res.loglik_trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(
            res.raw_state
                .max_abs_diff(&apply_loss(&res.state, 0.77).unwrap())
                < 1e-9
        );
    }

    #[test]
    fn reconstruction_errors() {
        let det = DetectionModel::reference();
        let r = build_response(basis(), &det, &[-1.0, 0.0, 1.0]).unwrap();
        let empty = BinnedHistogram {
            edges: vec![-1.0, 0.0, 1.0],
            counts: vec![0, 0],
            underflow: 0,
            overflow: 0,
        };
        assert!(matches!(
            mle_reconstruct(&empty, &r, &MleOptions::default()),
            Err(Error::EmptyHistogram)
        ));
        let other = bin_samples(&[0.5], &[-1.0, 1.0]).unwrap();
        assert!(matches!(
            mle_reconstruct(&other, &r, &MleOptions::default()),
            Err(Error::EdgeMismatch)
        ));
    }

    #[test]
    fn iteration_cap_is_flagged_not_raised() {
        let det = DetectionModel::reference();
        let one = FockDiagonalState::fock(basis(), 1).unwrap();
        let ds = sample_quadratures(&one, &det, 2_000, 8).unwrap();
        let r = build_response(basis(), &det, &default_edges()).unwrap();
        let h = bin_dataset(&ds, r.edges()).unwrap();
        let opts = MleOptions {
            max_iterations: 150,
            ..MleOptions::default()
        };
        let res = mle_reconstruct(&h, &r, &opts).unwrap();
        assert!(!res.converged);
        assert_eq!(res.iterations, 150);
        assert_eq!(res.loglik_trace.len(), 151);

        // Stopped so early that uniform start mass still sits at the cutoff.
        let opts = MleOptions {
            max_iterations: 3,
            ..MleOptions::default()
        };
        assert!(matches!(
            mle_reconstruct(&h, &r, &opts),
            Err(Error::Truncation { .. })
        ));
    }

    #[test]
    fn inverse_map_option_agrees_roughly() {
        let det = DetectionModel::reference();
        let s = FockDiagonalState::new(basis(), &[0.09, 0.91]).unwrap();
        let ds = sample_quadratures(&s, &det, 50_000, 21).unwrap();
        let r = build_response(basis(), &det, &default_edges()).unwrap();
        let h = bin_dataset(&ds, r.edges()).unwrap();
        let folded = mle_reconstruct(&h, &r, &MleOptions::default()).unwrap();
        let inverse = mle_reconstruct(
            &h,
            &r,
            &MleOptions {
                correction: EfficiencyCorrection::InverseMap,
                ..MleOptions::default()
            },
        )
        .unwrap();
        assert!((folded.state.population(1) - inverse.state.population(1)).abs() < 0.05);
    }

    #[test]
    fn bootstrap_examples() {
        let det = DetectionModel::reference();
        let r = build_response(basis(), &det, &default_edges()).unwrap();
        let vac = FockDiagonalState::vacuum(basis());
        let ds = sample_quadratures(&vac, &det, 10_000, 4).unwrap();
        let opts = MleOptions::default();

        let same = bootstrap_errors_with_seeds(&ds, &r, &opts, &[7, 7]).unwrap();
        assert!(same.iter().all(|&s| s == 0.0));

        let sig = bootstrap_errors(&ds, &r, &opts, 20, 1).unwrap();
        assert!(sig[0] < 0.01, "{sig:?}");
        assert_eq!(sig, bootstrap_errors(&ds, &r, &opts, 20, 1).unwrap());
        assert!(bootstrap_errors(&ds, &r, &opts, 1, 1).is_err());
    }

    #[test]
    fn report_round_trip() {
        let det = DetectionModel::reference();
        let s = FockDiagonalState::new(basis(), &[0.09, 0.91]).unwrap();
        let ds = sample_quadratures(&s, &det, 5_000, 2).unwrap();
        let r = build_response(basis(), &det, &default_edges()).unwrap();
        let h = bin_dataset(&ds, r.edges()).unwrap();
        let mut res = mle_reconstruct(&h, &r, &MleOptions::default()).unwrap();
        res.bootstrap_sigmas = vec![0.01; 16];
        let report = ReconstructionReport::new(&res, "dataset_0010.txt", 10, det.eta());
        let back = ReconstructionReport::parse(&report.to_text(), Path::new("r.txt")).unwrap();
        assert_eq!(back, report);
    }
}
