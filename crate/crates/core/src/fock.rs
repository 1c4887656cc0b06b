//! Fock-basis mathematics for phase-invariant (Fock-diagonal) states.
//!
//! Quadrature convention: `x = (a + a†)/√2`, so the vacuum has variance 1/2
//! and the Wigner function is normalized to `∫ W d²r = 1` (vacuum peak
//! `1/π`, single-photon minimum `-1/π`).

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Absolute tolerance on the total probability of a state.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Photon-number cutoff and the probability mass admitted at the cutoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FockBasisConfig {
    n_max: usize,
    tail_tolerance: f64,
}

impl FockBasisConfig {
    pub fn new(n_max: usize, tail_tolerance: f64) -> Result<Self> {
        if n_max < 2 {
            return Err(Error::param("n_max", format!("must be >= 2, got {n_max}")));
        }
        if !(tail_tolerance > 0.0 && tail_tolerance < 1.0) {
            return Err(Error::param(
                "tail_tolerance",
                format!("must lie in (0, 1), got {tail_tolerance}"),
            ));
        }
        Ok(Self {
            n_max,
            tail_tolerance,
        })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn tail_tolerance(&self) -> f64 {
        self.tail_tolerance
    }

    /// Number of tracked populations, `n_max + 1`.
    pub fn dim(&self) -> usize {
        self.n_max + 1
    }
}

impl Default for FockBasisConfig {
    fn default() -> Self {
        Self {
            n_max: 15,
            tail_tolerance: 1e-6,
        }
    }
}

/// Diagonal of a density matrix in the photon-number basis.
#[derive(Debug, Clone, PartialEq)]
pub struct FockDiagonalState {
    basis: FockBasisConfig,
    populations: Vec<f64>,
}

impl FockDiagonalState {
    /// Builds a state from `populations[n] = ρ_nn`. Shorter vectors are
    /// zero-padded up to `n_max`. States with too much mass at the cutoff
    /// are rejected, never renormalized.
    pub fn new(basis: FockBasisConfig, populations: &[f64]) -> Result<Self> {
        if populations.len() > basis.dim() {
            return Err(Error::InvalidState(format!(
                "{} populations exceed basis dimension {}",
                populations.len(),
                basis.dim()
            )));
        }
        let mut padded = vec![0.0; basis.dim()];
        padded[..populations.len()].copy_from_slice(populations);
        for (n, &p) in padded.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidState(format!(
                    "population[{n}] = {p} outside [0, 1]"
                )));
            }
        }
        let sum: f64 = padded.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidState(format!(
                "populations sum to {sum}, expected 1"
            )));
        }
        let tail = padded[basis.n_max];
        if tail > basis.tail_tolerance {
            return Err(Error::Truncation {
                n_max: basis.n_max,
                population: tail,
                tolerance: basis.tail_tolerance,
            });
        }
        Ok(Self {
            basis,
            populations: padded,
        })
    }

    pub fn vacuum(basis: FockBasisConfig) -> Self {
        let mut populations = vec![0.0; basis.dim()];
        populations[0] = 1.0;
        Self { basis, populations }
    }

    /// Pure Fock state `|n⟩`; `n` must be strictly below the cutoff.
    pub fn fock(basis: FockBasisConfig, n: usize) -> Result<Self> {
        let mut populations = vec![0.0; basis.dim()];
        if n >= basis.dim() {
            return Err(Error::InvalidState(format!(
                "|{n}> lies outside the basis (n_max = {})",
                basis.n_max
            )));
        }
        populations[n] = 1.0;
        Self::new(basis, &populations)
    }

    /// Clips negative entries to zero and renormalizes. Used for the
    /// outputs of estimators and of the inverse loss map, which may leave
    /// the simplex by rounding or noise amplification.
    pub fn from_clipped(basis: FockBasisConfig, raw: &[f64]) -> Result<Self> {
        let clipped: Vec<f64> = raw.iter().map(|&p| p.max(0.0)).collect();
        let sum: f64 = clipped.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(Error::InvalidState(
                "no positive population left after clipping".into(),
            ));
        }
        let normalized: Vec<f64> = clipped.iter().map(|p| p / sum).collect();
        Self::new(basis, &normalized)
    }

    pub fn basis(&self) -> &FockBasisConfig {
        &self.basis
    }

    pub fn populations(&self) -> &[f64] {
        &self.populations
    }

    /// `ρ_nn`, zero beyond the cutoff.
    pub fn population(&self, n: usize) -> f64 {
        self.populations.get(n).copied().unwrap_or(0.0)
    }

    pub fn mean_photon_number(&self) -> f64 {
        self.populations
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }

    /// Largest `|Δρ_nn|` between two states.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let len = self.populations.len().max(other.populations.len());
        (0..len)
            .map(|n| (self.population(n) - other.population(n)).abs())
            .fold(0.0, f64::max)
    }

    // Only for maps proven to keep the state on the simplex.
    fn from_trusted(basis: FockBasisConfig, populations: Vec<f64>) -> Self {
        debug_assert_eq!(populations.len(), basis.dim());
        Self { basis, populations }
    }
}

/// Parses a textual state description: `vacuum`, `fock:N` or
/// `diag:p0,p1,...`.
pub fn parse_state_spec(basis: FockBasisConfig, spec: &str) -> Result<FockDiagonalState> {
    let spec = spec.trim();
    if spec == "vacuum" {
        return Ok(FockDiagonalState::vacuum(basis));
    }
    let bad = |why: String| Error::InvalidState(format!("state spec `{spec}`: {why}"));
    if let Some(n) = spec.strip_prefix("fock:") {
        let n: usize = n.trim().parse().map_err(|e| bad(format!("{e}")))?;
        return FockDiagonalState::fock(basis, n);
    }
    if let Some(list) = spec.strip_prefix("diag:") {
        let pops = list
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(format!("{e}")))?;
        return FockDiagonalState::new(basis, &pops);
    }
    Err(bad("expected `vacuum`, `fock:N` or `diag:p0,p1,...`".into()))
}

/// Inverse of [`parse_state_spec`], trailing zero populations dropped.
pub fn describe_state(state: &FockDiagonalState) -> String {
    let pops = state.populations();
    let last = pops.iter().rposition(|&p| p != 0.0).unwrap_or(0);
    if last == 0 {
        return "vacuum".into();
    }
    if pops[last] == 1.0 {
        return format!("fock:{last}");
    }
    let body: Vec<String> = pops[..=last].iter().map(|p| format!("{p}")).collect();
    format!("diag:{}", body.join(","))
}

/// `ln n!`; exact running product up to `n = 10`, log-space sum above.
pub fn ln_factorial(n: usize) -> f64 {
    if n <= 10 {
        (1..=n).map(|k| k as f64).product::<f64>().ln()
    } else {
        let base = ln_factorial(10);
        base + (11..=n).map(|k| (k as f64).ln()).sum::<f64>()
    }
}

/// Binomial coefficient as a float.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

/// Probability that `k` of `m` photons survive a channel of transmission `t`.
pub fn binomial_pmf(m: usize, k: usize, t: f64) -> f64 {
    if k > m {
        return 0.0;
    }
    binomial(m, k) * t.powi(k as i32) * (1.0 - t).powi((m - k) as i32)
}

/// Physicists' Hermite polynomial `H_n(x)` by upward recurrence.
pub fn hermite_eval(n: usize, x: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 2.0 * x;
    for k in 1..n {
        let next = 2.0 * x * cur - 2.0 * k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Laguerre polynomial `L_n(x)` by upward recurrence.
pub fn laguerre_eval(n: usize, x: f64) -> f64 {
    laguerre_all(n, x)[n]
}

fn laguerre_all(n: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n >= 1 {
        out.push(1.0 - x);
    }
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 - x) * out[k] - kf * out[k - 1]) / (kf + 1.0);
        out.push(next);
    }
    out
}

fn pdf_from_hermite(n: usize, h: f64, x: f64) -> f64 {
    if h == 0.0 {
        return 0.0;
    }
    let ln_norm = n as f64 * std::f64::consts::LN_2 + ln_factorial(n) + 0.5 * PI.ln();
    (2.0 * h.abs().ln() - x * x - ln_norm).exp()
}

/// `|ψ_n(x)|²` with `ψ_n(x) = H_n(x) e^{-x²/2} / √(2ⁿ n! √π)`.
pub fn quadrature_pdf(n: usize, x: f64) -> f64 {
    pdf_from_hermite(n, hermite_eval(n, x), x)
}

/// `|ψ_n(x)|²` for every `n ≤ n_max` at once.
pub fn quadrature_pdfs(n_max: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max + 1);
    let (mut prev, mut cur) = (1.0, 2.0 * x);
    out.push(pdf_from_hermite(0, prev, x));
    for n in 1..=n_max {
        out.push(pdf_from_hermite(n, cur, x));
        let next = 2.0 * x * cur - 2.0 * n as f64 * prev;
        prev = cur;
        cur = next;
    }
    out
}

/// Phase-averaged quadrature density `p(x) = Σ_n ρ_nn |ψ_n(x)|²`.
pub fn mixture_pdf(state: &FockDiagonalState, x: f64) -> f64 {
    quadrature_pdfs(state.basis.n_max, x)
        .iter()
        .zip(&state.populations)
        .map(|(f, p)| f * p)
        .sum()
}

/// Rotationally symmetric Wigner function at phase-space radius `r`:
/// `W(r) = (1/π) e^{-r²} Σ_n ρ_nn (-1)ⁿ L_n(2r²)`.
pub fn wigner_radial(state: &FockDiagonalState, r: f64) -> f64 {
    let r2 = r * r;
    let lag = laguerre_all(state.basis.n_max, 2.0 * r2);
    let series: f64 = state
        .populations
        .iter()
        .zip(&lag)
        .enumerate()
        .map(|(n, (p, l))| if n % 2 == 0 { p * l } else { -p * l })
        .sum();
    series * (-r2).exp() / PI
}

fn check_transmission(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::param(
            "transmission",
            format!("must lie in [0, 1], got {t}"),
        ));
    }
    Ok(())
}

/// Binomial photon-loss channel with transmission `t`:
/// `out[n] = Σ_i C(n+i, n) tⁿ (1-t)ⁱ in[n+i]`, summed up to the cutoff.
pub fn apply_loss(state: &FockDiagonalState, transmission: f64) -> Result<FockDiagonalState> {
    check_transmission(transmission)?;
    let dim = state.basis.dim();
    let mut out = vec![0.0; dim];
    for (m, &p) in state.populations.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (k, slot) in out.iter_mut().enumerate().take(m + 1) {
            *slot += binomial_pmf(m, k, transmission) * p;
        }
    }
    Ok(FockDiagonalState::from_trusted(state.basis, out))
}

/// Formal inverse of [`apply_loss`]: the same series with `1/t`. The
/// result can leave the probability simplex when the input is noisy, so it
/// is returned as a raw vector.
pub fn invert_loss(state: &FockDiagonalState, transmission: f64) -> Result<Vec<f64>> {
    if !(transmission > 0.0 && transmission <= 1.0) {
        return Err(Error::param(
            "transmission",
            format!("inverse needs t in (0, 1], got {transmission}"),
        ));
    }
    let inv = 1.0 / transmission;
    let dim = state.basis.dim();
    let mut out = vec![0.0; dim];
    for (m, &p) in state.populations.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (k, slot) in out.iter_mut().enumerate().take(m + 1) {
            *slot += binomial(m, k) * inv.powi(k as i32) * (1.0 - inv).powi((m - k) as i32) * p;
        }
    }
    Ok(out)
}

/// Fidelity with the Fock reference `|n⟩`, i.e. `ρ_nn`.
pub fn fidelity(state: &FockDiagonalState, reference_n: usize) -> f64 {
    state.population(reference_n)
}
