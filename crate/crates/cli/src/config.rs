//! Run configuration: one TOML file with a table per stage. Every key has a
//! default, so an empty file describes the reference single-photon run.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use loopmem::fock::parse_state_spec;
use loopmem::memory::{DEFAULT_ROUND_TRIP_TIME, REPETITION_RATE_HZ};
use loopmem::tomography::MleOptions;
use loopmem::{DetectionModel, FockBasisConfig, FockDiagonalState, MemoryParams, SourceParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Name of the environment variable holding the default config path.
pub const CONFIG_ENV: &str = "LOOPMEM_CONFIG";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub basis: BasisSection,
    pub memory: MemorySection,
    pub detection: DetectionSection,
    pub source: SourceSection,
    pub experiment: ExperimentSection,
    pub tomography: TomographySection,
    pub fit: FitSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisSection {
    pub n_max: usize,
    pub tail_tolerance: f64,
}

impl Default for BasisSection {
    fn default() -> Self {
        let b = FockBasisConfig::default();
        Self {
            n_max: b.n_max(),
            tail_tolerance: b.tail_tolerance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemorySection {
    pub loss_per_trip: f64,
    /// Seconds.
    pub round_trip_time: f64,
}

impl Default for MemorySection {
    fn default() -> Self {
        Self {
            loss_per_trip: 0.010,
            round_trip_time: DEFAULT_ROUND_TRIP_TIME,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionSection {
    pub eta_pd: f64,
    pub eta_c: f64,
    pub sigma_eta: f64,
}

impl Default for DetectionSection {
    fn default() -> Self {
        let d = DetectionModel::reference();
        Self {
            eta_pd: d.eta_pd(),
            eta_c: d.eta_c(),
            sigma_eta: d.sigma_eta(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSection {
    pub heralding_probability: f64,
    pub pulse_rate: f64,
    /// Storage window used by `sync` unless overridden on the command line.
    pub max_trips: u32,
    /// Heralding-probability multiplier for the improved-source scenario.
    pub improvement_factor: f64,
}

impl Default for SourceSection {
    fn default() -> Self {
        Self {
            heralding_probability: 200e3 / REPETITION_RATE_HZ,
            pulse_rate: REPETITION_RATE_HZ,
            max_trips: 57,
            improvement_factor: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    /// `vacuum`, `fock:N` or `diag:p0,p1,...`
    pub initial_state: String,
    pub trips: Vec<u32>,
    pub samples: usize,
    pub seed: u64,
    /// Bootstrap resamples per reconstruction; 0 disables error bars.
    pub bootstrap: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            initial_state: "diag:0.09,0.91".into(),
            trips: (0..=100).step_by(10).collect(),
            samples: loopmem::homodyne::SINGLE_PHOTON_SAMPLES,
            seed: 1,
            bootstrap: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TomographySection {
    /// Relative log-likelihood change that stops the iteration.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for TomographySection {
    fn default() -> Self {
        let o = MleOptions::default();
        Self {
            tolerance: o.tolerance,
            max_iterations: o.max_iterations,
        }
    }
}

impl TomographySection {
    pub fn options(&self) -> MleOptions {
        MleOptions {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            ..MleOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub fix_initial: bool,
    pub max_loss: f64,
    /// Round-trip spacing of the tabulated negativity curve.
    pub curve_step: u32,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            fix_initial: true,
            max_loss: 0.2,
            curve_step: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("loopmem-out"),
        }
    }
}

/// A configuration whose values have been checked by building the model
/// types from them.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub raw: RunConfig,
    pub basis: FockBasisConfig,
    pub memory: MemoryParams,
    pub detection: DetectionModel,
    pub source: SourceParams,
    pub initial: FockDiagonalState,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn resolve(self) -> Result<Resolved> {
        let basis = FockBasisConfig::new(self.basis.n_max, self.basis.tail_tolerance)?;
        let memory = MemoryParams::new(self.memory.loss_per_trip, self.memory.round_trip_time)?;
        let detection = DetectionModel::new(
            self.detection.eta_pd,
            self.detection.eta_c,
            self.detection.sigma_eta,
        )?;
        let source = SourceParams::new(self.source.heralding_probability, self.source.pulse_rate)?;
        if !(self.source.improvement_factor > 0.0) {
            bail!("source.improvement_factor must be positive");
        }
        let initial = parse_state_spec(basis, &self.experiment.initial_state)?;
        let e = &self.experiment;
        if e.trips.is_empty() {
            bail!("experiment.trips is empty");
        }
        if e.trips.windows(2).any(|w| w[0] >= w[1]) {
            bail!("experiment.trips must be strictly increasing");
        }
        if e.samples == 0 {
            bail!("experiment.samples must be positive");
        }
        if e.bootstrap == 1 {
            bail!("experiment.bootstrap must be 0 or at least 2");
        }
        if !(self.tomography.tolerance > 0.0) || self.tomography.max_iterations == 0 {
            bail!("tomography.tolerance and tomography.max_iterations must be positive");
        }
        if !(self.fit.max_loss > 0.0 && self.fit.max_loss < 1.0) {
            bail!("fit.max_loss must lie in (0, 1)");
        }
        if self.fit.curve_step == 0 {
            bail!("fit.curve_step must be positive");
        }
        Ok(Resolved {
            raw: self,
            basis,
            memory,
            detection,
            source,
            initial,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Short SHA-256 digest of the canonical serialization.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.to_toml().as_bytes());
        hex::encode(&hash[..8])
    }
}

/// Seed for the dataset at `round_trips`, derived from the run seed so it
/// does not depend on which other points are simulated.
pub fn derive_seed(master: u64, label: &str, round_trips: u32) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(label.as_bytes());
    h.update(round_trips.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}
