//! Synthetic phase-averaged homodyne measurements and the on-disk dataset
//! format.
//!
//! Detection losses are applied to the state as a binomial loss channel at
//! `η = η_PD·η_C`; the detected, phase-averaged quadrature density is then
//! `p(x) = Σ_n ρ'_nn |ψ_n(x)|²` and is sampled by inverse-CDF lookup.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fock::{apply_loss, describe_state, quadrature_pdfs, FockDiagonalState};
use crate::io::{read_to_string, split_key_value, write_atomic};
use crate::numeric::gauss_legendre5;

pub const DATASET_FORMAT_VERSION: u32 = 1;

/// Samples acquired per setting for single-photon runs.
pub const SINGLE_PHOTON_SAMPLES: usize = 50_000;
/// Samples acquired per setting for two-photon runs.
pub const TWO_PHOTON_SAMPLES: usize = 10_000;

/// Homodyne detection chain: photodiode efficiency times mode matching.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionModel {
    eta_pd: f64,
    eta_c: f64,
    eta: f64,
    sigma_eta: f64,
}

impl DetectionModel {
    pub fn new(eta_pd: f64, eta_c: f64, sigma_eta: f64) -> Result<Self> {
        for (name, v) in [("eta_pd", eta_pd), ("eta_c", eta_c)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::param(name, format!("must lie in (0, 1], got {v}")));
            }
        }
        if !(sigma_eta >= 0.0 && sigma_eta.is_finite()) {
            return Err(Error::param(
                "sigma_eta",
                format!("must be non-negative, got {sigma_eta}"),
            ));
        }
        Ok(Self {
            eta_pd,
            eta_c,
            eta: eta_pd * eta_c,
            sigma_eta,
        })
    }

    /// A chain known only through its combined efficiency, booked entirely
    /// on the photodiode side.
    pub fn from_combined(eta: f64, sigma_eta: f64) -> Result<Self> {
        Self::new(eta, 1.0, sigma_eta)
    }

    /// 94% photodiodes and mode matching chosen so that `η = 0.77 ± 0.03`.
    pub fn reference() -> Self {
        Self::new(0.94, 0.77 / 0.94, 0.03).expect("reference efficiencies are valid")
    }

    pub fn eta_pd(&self) -> f64 {
        self.eta_pd
    }

    pub fn eta_c(&self) -> f64 {
        self.eta_c
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn sigma_eta(&self) -> f64 {
        self.sigma_eta
    }

    /// Same chain at a different combined efficiency, keeping `η_PD` and
    /// `σ_η` (used for the `η ± σ_η` re-analysis). Efficiencies above `η_PD`
    /// move onto the photodiode with perfect mode matching.
    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        if eta <= self.eta_pd {
            Self::new(self.eta_pd, eta / self.eta_pd, self.sigma_eta)
        } else {
            Self::new(eta, 1.0, self.sigma_eta)
        }
    }
}

/// State actually seen by the detector.
pub fn detected_state(state: &FockDiagonalState, det: &DetectionModel) -> FockDiagonalState {
    apply_loss(state, det.eta).expect("efficiency lies in (0, 1]")
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMetadata {
    /// Description of the state before detection, e.g. `diag:0.09,0.91`.
    pub state: String,
    pub detection: DetectionModel,
    pub round_trips: u32,
    pub seed: u64,
}

/// Homodyne samples in units where the vacuum variance is 1/2.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureDataset {
    samples: Vec<f64>,
    pub metadata: DatasetMetadata,
}

impl QuadratureDataset {
    pub fn new(samples: Vec<f64>, metadata: DatasetMetadata) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::param("samples", "dataset holds no samples"));
        }
        Ok(Self { samples, metadata })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Inverse-CDF table of a phase-averaged quadrature density.
#[derive(Debug, Clone)]
pub struct QuadratureSampler {
    knots: Vec<f64>,
    cdf: Vec<f64>,
}

impl QuadratureSampler {
    pub const LO: f64 = -8.0;
    pub const HI: f64 = 8.0;
    pub const KNOTS: usize = 1 << 14;
    pub const MAX_TAIL_MASS: f64 = 1e-10;

    /// Tabulates the CDF of `p(x) = Σ_n ρ_nn |ψ_n(x)|²` for a state that
    /// has already been through detection.
    pub fn new(state: &FockDiagonalState) -> Result<Self> {
        let n_max = state.basis().n_max();
        let pops = state.populations();
        let density = |x: f64| -> f64 {
            quadrature_pdfs(n_max, x)
                .iter()
                .zip(pops)
                .map(|(f, p)| f * p)
                .sum()
        };
        let step = (Self::HI - Self::LO) / (Self::KNOTS - 1) as f64;
        let knots: Vec<f64> = (0..Self::KNOTS)
            .map(|i| Self::LO + step * i as f64)
            .collect();
        let mut cdf = Vec::with_capacity(Self::KNOTS);
        let mut acc = 0.0;
        cdf.push(0.0);
        for w in knots.windows(2) {
            acc += gauss_legendre5(density, w[0], w[1]);
            cdf.push(acc);
        }
        let tail_mass = (1.0 - acc).abs();
        if tail_mass >= Self::MAX_TAIL_MASS {
            return Err(Error::TableTail {
                tail_mass,
                lo: Self::LO,
                hi: Self::HI,
            });
        }
        for c in &mut cdf {
            *c /= acc;
        }
        Ok(Self { knots, cdf })
    }

    /// Tabulated CDF, linearly interpolated between knots.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= Self::LO {
            return 0.0;
        }
        if x >= Self::HI {
            return 1.0;
        }
        let i = self
            .knots
            .partition_point(|&k| k <= x)
            .min(self.knots.len() - 1);
        let (x0, x1) = (self.knots[i - 1], self.knots[i]);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        c0 + (c1 - c0) * (x - x0) / (x1 - x0)
    }

    /// Maps a uniform variate `u ∈ [0, 1)` to a quadrature value.
    pub fn quantile(&self, u: f64) -> f64 {
        let i = self
            .cdf
            .partition_point(|&c| c <= u)
            .clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let (x0, x1) = (self.knots[i - 1], self.knots[i]);
        if c1 > c0 {
            x0 + (x1 - x0) * (u - c0) / (c1 - c0)
        } else {
            x0
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}

/// Draws `count` phase-averaged quadrature samples of `state` seen through
/// `det`. Identical arguments give bit-identical datasets.
pub fn sample_quadratures(
    state: &FockDiagonalState,
    det: &DetectionModel,
    count: usize,
    seed: u64,
) -> Result<QuadratureDataset> {
    if count == 0 {
        return Err(Error::param("count", "must be positive"));
    }
    let sampler = QuadratureSampler::new(&detected_state(state, det))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..count).map(|_| sampler.sample(&mut rng)).collect();
    QuadratureDataset::new(
        samples,
        DatasetMetadata {
            state: describe_state(state),
            detection: *det,
            round_trips: 0,
            seed,
        },
    )
}

const SEPARATOR: &str = "---";

/// Serializes a dataset; see the README for the grammar.
pub fn format_dataset(ds: &QuadratureDataset) -> String {
    let m = &ds.metadata;
    let d = &m.detection;
    let mut out = String::with_capacity(ds.samples.len() * 26 + 256);
    out.push_str("# loopmem quadrature dataset\n");
    let _ = writeln!(out, "format_version = {DATASET_FORMAT_VERSION}");
    let _ = writeln!(out, "state = {}", m.state);
    let _ = writeln!(out, "round_trips = {}", m.round_trips);
    let _ = writeln!(out, "seed = {}", m.seed);
    let _ = writeln!(out, "eta_pd = {}", d.eta_pd);
    let _ = writeln!(out, "eta_c = {}", d.eta_c);
    let _ = writeln!(out, "eta = {}", d.eta);
    let _ = writeln!(out, "sigma_eta = {}", d.sigma_eta);
    let _ = writeln!(out, "count = {}", ds.samples.len());
    out.push_str(SEPARATOR);
    out.push('\n');
    for x in &ds.samples {
        // 17 significant digits round-trip every f64 exactly.
        let _ = writeln!(out, "{x:.16e}");
    }
    out
}

pub fn save_dataset(ds: &QuadratureDataset, path: &Path) -> Result<()> {
    write_atomic(path, format_dataset(ds).as_bytes())
}

pub fn load_dataset(path: &Path) -> Result<QuadratureDataset> {
    parse_dataset(&read_to_string(path)?, path)
}

/// Parses the text produced by [`format_dataset`]. `path` only labels errors.
pub fn parse_dataset(text: &str, path: &Path) -> Result<QuadratureDataset> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    let mut fields: Vec<(usize, &str, &str)> = Vec::new();
    let mut saw_separator = false;
    for (no, line) in lines.by_ref() {
        let trimmed = line.trim();
        if trimmed == SEPARATOR {
            saw_separator = true;
            break;
        }
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (k, v) = split_key_value(trimmed)
            .ok_or_else(|| parse_err(no, format!("expected `key = value`, got `{trimmed}`")))?;
        if fields.iter().any(|(_, fk, _)| *fk == k) {
            return Err(parse_err(no, format!("duplicate key `{k}`")));
        }
        fields.push((no, k, v));
    }
    if !saw_separator {
        return Err(parse_err(
            0,
            format!("missing `{SEPARATOR}` before samples"),
        ));
    }

    let version = fields
        .iter()
        .find(|(_, k, _)| *k == "format_version")
        .ok_or_else(|| parse_err(0, "missing key `format_version`".into()))?;
    if version.2 != DATASET_FORMAT_VERSION.to_string() {
        return Err(Error::Version {
            path: path.to_path_buf(),
            found: version.2.to_string(),
            expected: DATASET_FORMAT_VERSION,
        });
    }

    let get = |key: &str| -> Result<(usize, &str)> {
        fields
            .iter()
            .find(|(_, k, _)| *k == key)
            .map(|(no, _, v)| (*no, *v))
            .ok_or_else(|| parse_err(0, format!("missing key `{key}`")))
    };
    fn num<T: std::str::FromStr>(
        (no, v): (usize, &str),
        err: &dyn Fn(usize, String) -> Error,
    ) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        v.parse::<T>().map_err(|e| err(no, format!("`{v}`: {e}")))
    }

    for (no, k, _) in &fields {
        if !matches!(
            *k,
            "format_version"
                | "state"
                | "round_trips"
                | "seed"
                | "eta_pd"
                | "eta_c"
                | "eta"
                | "sigma_eta"
                | "count"
        ) {
            return Err(parse_err(*no, format!("unknown key `{k}`")));
        }
    }

    let state = get("state")?.1.to_string();
    let round_trips: u32 = num(get("round_trips")?, &parse_err)?;
    let seed: u64 = num(get("seed")?, &parse_err)?;
    let eta_pd: f64 = num(get("eta_pd")?, &parse_err)?;
    let eta_c: f64 = num(get("eta_c")?, &parse_err)?;
    let eta_line = get("eta")?;
    let eta: f64 = num(eta_line, &parse_err)?;
    let sigma_eta: f64 = num(get("sigma_eta")?, &parse_err)?;
    let count: usize = num(get("count")?, &parse_err)?;

    let detection = DetectionModel::new(eta_pd, eta_c, sigma_eta)
        .map_err(|e| parse_err(eta_line.0, e.to_string()))?;
    if (detection.eta - eta).abs() > 1e-9 {
        return Err(parse_err(
            eta_line.0,
            format!("eta = {eta} but eta_pd * eta_c = {}", detection.eta),
        ));
    }

    let mut samples = Vec::with_capacity(count);
    for (no, line) in lines {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let x: f64 = trimmed
            .parse()
            .map_err(|_| parse_err(no, format!("non-numeric sample `{trimmed}`")))?;
        if !x.is_finite() {
            return Err(parse_err(no, format!("non-finite sample `{trimmed}`")));
        }
        samples.push(x);
    }
    if samples.is_empty() {
        return Err(Error::Validation {
            path: path.to_path_buf(),
            message: "dataset holds no samples".into(),
        });
    }
    if samples.len() != count {
        return Err(Error::Validation {
            path: path.to_path_buf(),
            message: format!("header declares {count} samples, found {}", samples.len()),
        });
    }
    QuadratureDataset::new(
        samples,
        DatasetMetadata {
            state,
            detection,
            round_trips,
            seed,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::FockBasisConfig;

    fn basis() -> FockBasisConfig {
        FockBasisConfig::default()
    }

    fn variance(xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    }

    #[test]
    fn detected_state_examples() {
        let det = DetectionModel::from_combined(0.77, 0.0).unwrap();
        let one = FockDiagonalState::fock(basis(), 1).unwrap();
        let d = detected_state(&one, &det);
        assert!((d.population(0) - 0.23).abs() < 1e-15);
        assert!((d.population(1) - 0.77).abs() < 1e-15);

        let vac = FockDiagonalState::vacuum(basis());
        for eta in [0.1, 0.5, 1.0] {
            let det = DetectionModel::from_combined(eta, 0.0).unwrap();
            assert_eq!(detected_state(&vac, &det), vac);
        }

        let two = FockDiagonalState::fock(basis(), 2).unwrap();
        let d = detected_state(&two, &det);
        for (n, want) in [0.0529, 0.3542, 0.5929].iter().enumerate() {
            assert!((d.population(n) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn detection_model_invariants() {
        let d = DetectionModel::reference();
        assert!((d.eta() - 0.77).abs() < 1e-12);
        assert!((d.eta() - d.eta_pd() * d.eta_c()).abs() < 1e-15);
        assert!(DetectionModel::new(0.0, 0.5, 0.0).is_err());
        assert!(DetectionModel::new(0.9, 1.1, 0.0).is_err());
        assert!(DetectionModel::new(0.9, 0.9, -0.1).is_err());
        let lo = d.with_eta(0.74).unwrap();
        assert!((lo.eta() - 0.74).abs() < 1e-12);
        assert_eq!(lo.eta_pd(), 0.94);
        let hi = d.with_eta(0.97).unwrap();
        assert!((hi.eta() - 0.97).abs() < 1e-12);
    }

    #[test]
    fn vacuum_variance() {
        let vac = FockDiagonalState::vacuum(basis());
        let det = DetectionModel::from_combined(1.0, 0.0).unwrap();
        let ds = sample_quadratures(&vac, &det, 1_000_000, 11).unwrap();
        assert!((variance(ds.samples()) - 0.5).abs() < 0.002);
    }

    #[test]
    fn single_photon_variances() {
        let one = FockDiagonalState::fock(basis(), 1).unwrap();
        let ideal = DetectionModel::from_combined(1.0, 0.0).unwrap();
        let ds = sample_quadratures(&one, &ideal, 1_000_000, 12).unwrap();
        assert!((variance(ds.samples()) - 1.5).abs() < 0.005);

        let lossy = DetectionModel::from_combined(0.77, 0.0).unwrap();
        let ds = sample_quadratures(&one, &lossy, 1_000_000, 13).unwrap();
        assert!((variance(ds.samples()) - 1.27).abs() < 0.005);
    }

    #[test]
    fn sampling_is_deterministic() {
        let s = FockDiagonalState::new(basis(), &[0.1, 0.3, 0.6]).unwrap();
        let det = DetectionModel::reference();
        let a = sample_quadratures(&s, &det, 1000, 5).unwrap();
        let b = sample_quadratures(&s, &det, 1000, 5).unwrap();
        let c = sample_quadratures(&s, &det, 1000, 6).unwrap();
        assert!(a
            .samples()
            .iter()
            .zip(b.samples())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_ne!(a.samples(), c.samples());
        assert_eq!(a.metadata.state, "diag:0.1,0.3,0.6");
        assert_eq!(a.metadata.seed, 5);
        assert!(sample_quadratures(&s, &det, 0, 5).is_err());
    }

    #[test]
    fn table_covers_high_photon_numbers() {
        let s = FockDiagonalState::fock(basis(), 14).unwrap();
        let sampler = QuadratureSampler::new(&s).unwrap();
        assert_eq!(sampler.cdf(-9.0), 0.0);
        assert_eq!(sampler.cdf(9.0), 1.0);
        assert!((sampler.cdf(0.0) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn dataset_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.txt");
        let ds = QuadratureDataset::new(
            vec![-1.234_567_890_123_456_7, 0.1 + 0.2, 3e-300],
            DatasetMetadata {
                state: "fock:1".into(),
                detection: DetectionModel::reference(),
                round_trips: 40,
                seed: 99,
            },
        )
        .unwrap();
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back, ds);
        assert!(back
            .samples()
            .iter()
            .zip(ds.samples())
            .all(|(a, b)| a.to_bits() == b.to_bits()));

        let mut lines: Vec<String> = format_dataset(&ds).lines().map(String::from).collect();
        lines[13] = "abc".into();
        let text = lines.join("\n");
        match parse_dataset(&text, &path) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 14);
                assert!(message.contains("abc"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }

        let head: String = format_dataset(&ds)
            .lines()
            .take_while(|l| *l != "---")
            .map(|l| format!("{l}\n"))
            .collect::<String>()
            .replace("count = 3", "count = 0");
        let empty = format!("{head}---\n");
        assert!(matches!(
            parse_dataset(&empty, &path),
            Err(Error::Validation { .. })
        ));

        let v2 = format_dataset(&ds).replace("format_version = 1", "format_version = 2");
        assert!(matches!(
            parse_dataset(&v2, &path),
            Err(Error::Version { .. })
        ));

        let unknown = format_dataset(&ds).replace("seed = 99", "seed = 99\ncolour = red");
        assert!(matches!(
            parse_dataset(&unknown, &path),
            Err(Error::Parse { line: 6, .. })
        ));
    }
}
