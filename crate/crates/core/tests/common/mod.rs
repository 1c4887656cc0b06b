#![allow(dead_code)]

use loopmem::fock::{quadrature_pdf, FockDiagonalState};
use loopmem::numeric::{gauss_legendre5, integrate};

/// Asymptotic Kolmogorov critical value at the 1% level, times `sqrt(n)`.
pub const KS_CRITICAL_1PCT: f64 = 1.627_6;

/// CDF of the detected, phase-averaged density at sorted points, by
/// integrating the density between consecutive points.
pub fn analytic_cdf_sorted(state: &FockDiagonalState, sorted: &[f64]) -> Vec<f64> {
    let density = |x: f64| -> f64 {
        state
            .populations()
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(n, p)| p * quadrature_pdf(n, x))
            .sum()
    };
    let mut out = Vec::with_capacity(sorted.len());
    let mut acc = integrate(density, -14.0, sorted[0], 1e-13);
    out.push(acc);
    for w in sorted.windows(2) {
        let (a, b) = (w[0], w[1]);
        acc += if b - a < 0.02 {
            gauss_legendre5(density, a, b)
        } else {
            integrate(density, a, b, 1e-13)
        };
        out.push(acc);
    }
    out
}

pub fn ks_statistic(sorted: &[f64], cdf: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    cdf.iter()
        .enumerate()
        .map(|(i, &f)| (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs()))
        .fold(0.0, f64::max)
}
