//! Loop-memory physics: round-trip loss evolution, lifetimes and the
//! statistics of synchronizing heralded photons with the memory.

use crate::error::{Error, Result};
use crate::fock::{apply_loss, FockDiagonalState};

/// Laser repetition rate the cavity round trip is matched to.
pub const REPETITION_RATE_HZ: f64 = 76.0e6;

/// Round-trip duration of the cavity, `1 / 76 MHz`.
pub const DEFAULT_ROUND_TRIP_TIME: f64 = 1.0 / REPETITION_RATE_HZ;

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryParams {
    loss_per_trip: f64,
    round_trip_time: f64,
    pub label: String,
}

impl MemoryParams {
    pub fn new(loss_per_trip: f64, round_trip_time: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&loss_per_trip) {
            return Err(Error::param(
                "loss_per_trip",
                format!("must lie in [0, 1), got {loss_per_trip}"),
            ));
        }
        if !(round_trip_time > 0.0 && round_trip_time.is_finite()) {
            return Err(Error::param(
                "round_trip_time",
                format!("must be positive, got {round_trip_time}"),
            ));
        }
        Ok(Self {
            loss_per_trip,
            round_trip_time,
            label: String::new(),
        })
    }

    /// Cavity at the default 76 MHz round trip.
    pub fn with_loss(loss_per_trip: f64) -> Result<Self> {
        Self::new(loss_per_trip, DEFAULT_ROUND_TRIP_TIME)
    }

    pub fn labeled(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn loss_per_trip(&self) -> f64 {
        self.loss_per_trip
    }

    pub fn round_trip_time(&self) -> f64 {
        self.round_trip_time
    }

    /// Net transmission `(1-p)^N` after `n_trips` round trips.
    pub fn transmission(&self, n_trips: u32) -> f64 {
        (1.0 - self.loss_per_trip).powi(n_trips as i32)
    }

    /// Transmission for a real-valued number of round trips.
    pub fn transmission_continuous(&self, n_trips: f64) -> f64 {
        (1.0 - self.loss_per_trip).powf(n_trips)
    }

    /// Storage time `N·Δt` in seconds.
    pub fn storage_time(&self, n_trips: f64) -> f64 {
        n_trips * self.round_trip_time
    }
}

/// Heralded photon source feeding the memory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceParams {
    heralding_probability: f64,
    pulse_rate: f64,
}

impl SourceParams {
    pub fn new(heralding_probability: f64, pulse_rate: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&heralding_probability) {
            return Err(Error::param(
                "heralding_probability",
                format!("must lie in [0, 1], got {heralding_probability}"),
            ));
        }
        if !(pulse_rate > 0.0 && pulse_rate.is_finite()) {
            return Err(Error::param(
                "pulse_rate",
                format!("must be positive, got {pulse_rate}"),
            ));
        }
        Ok(Self {
            heralding_probability,
            pulse_rate,
        })
    }

    /// Source specified by its heralded production rate, e.g. 200 kHz at
    /// 76 MHz pulses.
    pub fn from_production_rate(production_rate: f64, pulse_rate: f64) -> Result<Self> {
        Self::new(production_rate / pulse_rate, pulse_rate)
    }

    pub fn heralding_probability(&self) -> f64 {
        self.heralding_probability
    }

    pub fn pulse_rate(&self) -> f64 {
        self.pulse_rate
    }

    pub fn production_rate(&self) -> f64 {
        self.heralding_probability * self.pulse_rate
    }

    /// Same source with its heralding probability scaled by `factor`
    /// (capped at 1), e.g. a better heralding detector.
    pub fn improved(&self, factor: f64) -> Result<Self> {
        Self::new(
            (self.heralding_probability * factor).min(1.0),
            self.pulse_rate,
        )
    }
}

/// Fock populations at a set of round-trip counts.
#[derive(Debug, Clone, PartialEq)]
pub struct StorageSeries {
    round_trips: Vec<u32>,
    states: Vec<FockDiagonalState>,
}

impl StorageSeries {
    pub fn new(round_trips: Vec<u32>, states: Vec<FockDiagonalState>) -> Result<Self> {
        if round_trips.len() != states.len() {
            return Err(Error::param(
                "states",
                format!(
                    "{} round-trip counts but {} states",
                    round_trips.len(),
                    states.len()
                ),
            ));
        }
        check_increasing(&round_trips)?;
        Ok(Self {
            round_trips,
            states,
        })
    }

    pub fn round_trips(&self) -> &[u32] {
        &self.round_trips
    }

    pub fn states(&self) -> &[FockDiagonalState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &FockDiagonalState)> {
        self.round_trips.iter().copied().zip(&self.states)
    }
}

fn check_increasing(trips: &[u32]) -> Result<()> {
    if trips.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("round_trips", "must be strictly increasing"));
    }
    Ok(())
}

/// Populations after `n_trips` round trips: the loss map at `T = (1-p)^N`.
pub fn evolve_rounds(
    initial: &FockDiagonalState,
    params: &MemoryParams,
    n_trips: u32,
) -> Result<FockDiagonalState> {
    apply_loss(initial, params.transmission(n_trips))
}

/// [`evolve_rounds`] extended to real-valued `N`.
pub fn evolve_continuous(
    initial: &FockDiagonalState,
    params: &MemoryParams,
    n_trips: f64,
) -> Result<FockDiagonalState> {
    if !(n_trips >= 0.0) {
        return Err(Error::param(
            "n_trips",
            format!("must be non-negative, got {n_trips}"),
        ));
    }
    apply_loss(initial, params.transmission_continuous(n_trips))
}

pub fn storage_series(
    initial: &FockDiagonalState,
    params: &MemoryParams,
    trips: &[u32],
) -> Result<StorageSeries> {
    check_increasing(trips)?;
    let states = trips
        .iter()
        .map(|&n| evolve_rounds(initial, params, n))
        .collect::<Result<Vec<_>>>()?;
    StorageSeries::new(trips.to_vec(), states)
}

/// Time constant of the single-photon population decay, `-Δt / ln(1-p)`.
pub fn theoretical_lifetime(params: &MemoryParams) -> Result<f64> {
    if params.loss_per_trip == 0.0 {
        return Err(Error::InfiniteLifetime);
    }
    Ok(-params.round_trip_time / (1.0 - params.loss_per_trip).ln())
}

/// Probability that a second heralded photon shows up within `max_trips`
/// pulses: `1 - (1-p₁)^N`.
pub fn sync_probability(source: &SourceParams, max_trips: u32) -> f64 {
    1.0 - (1.0 - source.heralding_probability).powi(max_trips as i32)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncRate {
    pub probability: f64,
    /// Synchronized pairs per second.
    pub rate: f64,
    /// Gain over requiring two photons in the same pulse, `P / p₁`.
    pub enhancement: f64,
}

pub fn sync_rate(source: &SourceParams, max_trips: u32) -> SyncRate {
    let probability = sync_probability(source, max_trips);
    let enhancement = if source.heralding_probability > 0.0 {
        probability / source.heralding_probability
    } else {
        // limit of P/p₁ as p₁ → 0
        max_trips as f64
    };
    SyncRate {
        probability,
        rate: source.production_rate() * probability,
        enhancement,
    }
}
