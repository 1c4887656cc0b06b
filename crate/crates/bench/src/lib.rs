//! Shared fixtures for the criterion benchmarks in `benches/`.

use loopmem::tomography::{
    bin_dataset, build_response, default_edges, BinnedHistogram, ResponseMatrix,
};
use loopmem::{
    sample_quadratures, DetectionModel, FockBasisConfig, FockDiagonalState, QuadratureDataset,
};

pub fn single_photon() -> FockDiagonalState {
    FockDiagonalState::new(FockBasisConfig::default(), &[0.09, 0.91]).unwrap()
}

pub fn two_photon() -> FockDiagonalState {
    FockDiagonalState::new(FockBasisConfig::default(), &[0.06, 0.09, 0.85]).unwrap()
}

pub struct Fixture {
    pub dataset: QuadratureDataset,
    pub response: ResponseMatrix,
    pub histogram: BinnedHistogram,
}

/// Reference-detection dataset of `count` samples with its response matrix.
pub fn fixture(state: &FockDiagonalState, count: usize) -> Fixture {
    let det = DetectionModel::reference();
    let dataset = sample_quadratures(state, &det, count, 1).unwrap();
    let response = build_response(*state.basis(), &det, &default_edges()).unwrap();
    let histogram = bin_dataset(&dataset, response.edges()).unwrap();
    Fixture {
        dataset,
        response,
        histogram,
    }
}
