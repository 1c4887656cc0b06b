//! Simulation and estimation toolkit for all-optical loop quantum memories.
//!
//! A stored pulse loses a fraction `p` of its energy on every round trip of
//! the cavity, which acts on Fock-diagonal states as a binomial loss map.
//! The crate models that evolution ([`memory`]), the phase-averaged homodyne
//! measurement of the stored state ([`homodyne`]), its maximum-likelihood
//! reconstruction ([`tomography`]) and the analyses built on top: loss and
//! lifetime fits, Wigner negativity and its zero crossing ([`analysis`]).

pub mod analysis;
pub mod error;
pub mod fock;
pub mod homodyne;
pub mod io;
pub mod memory;
pub mod numeric;
pub mod tomography;

pub use analysis::{
    eta_band, fit_lifetime, fit_loss, negativity, negativity_curve, EtaBand, Lifetime, LifetimeFit,
    LossFitOptions, LossFitResult, Negativity, NegativityCurve, ZeroCrossing,
};
pub use error::{Error, Result};
pub use fock::{
    apply_loss, fidelity, hermite_eval, quadrature_pdf, wigner_radial, FockBasisConfig,
    FockDiagonalState,
};
pub use homodyne::{
    detected_state, load_dataset, sample_quadratures, save_dataset, DatasetMetadata,
    DetectionModel, QuadratureDataset,
};
pub use memory::{
    evolve_rounds, storage_series, sync_probability, sync_rate, theoretical_lifetime, MemoryParams,
    SourceParams, StorageSeries, SyncRate,
};
pub use tomography::{
    bin_dataset, bootstrap_errors, build_response, mle_reconstruct, BinnedHistogram, MleOptions,
    ReconstructionResult, ResponseMatrix,
};
