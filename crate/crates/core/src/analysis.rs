//! Downstream analyses of storage series: loss-per-trip fits, exponential
//! lifetimes, Wigner negativity and its zero crossing, and detection
//! efficiency uncertainty bands.

use crate::error::{Error, Result};
use crate::fock::{apply_loss, invert_loss, wigner_radial, FockDiagonalState};
use crate::homodyne::DetectionModel;
use crate::memory::{evolve_continuous, evolve_rounds, MemoryParams, StorageSeries};
use crate::numeric::{bisect, minimize_bounded};

const RADIAL_MAX: f64 = 5.0;
const RADIAL_STEP: f64 = 0.01;
const RADIAL_TOL: f64 = 1e-8;

/// Minimum of the (radial) Wigner function and where it is reached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Negativity {
    pub value: f64,
    pub radius: f64,
}

/// Global minimum of `W(r)` on `[0, 5]`: a 0.01 grid scan followed by
/// bounded refinement around the best grid point.
pub fn negativity(state: &FockDiagonalState) -> Negativity {
    let steps = (RADIAL_MAX / RADIAL_STEP).round() as usize;
    let (best_i, best_w) = (0..=steps)
        .map(|i| (i, wigner_radial(state, i as f64 * RADIAL_STEP)))
        .fold(
            (0, f64::INFINITY),
            |acc, (i, w)| if w < acc.1 { (i, w) } else { acc },
        );
    let center = best_i as f64 * RADIAL_STEP;
    let lo = (center - RADIAL_STEP).max(0.0);
    let hi = (center + RADIAL_STEP).min(RADIAL_MAX);
    let m = minimize_bounded(|r| wigner_radial(state, r), lo, hi, RADIAL_TOL);
    if m.value <= best_w {
        Negativity {
            value: m.value,
            radius: m.x,
        }
    } else {
        Negativity {
            value: best_w,
            radius: center,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossFitOptions {
    /// Hold the initial state at the N = 0 point instead of co-fitting it.
    pub fix_initial: bool,
    /// Optional per-point, per-population weights (e.g. `1/σ²`), indexed
    /// like the series states.
    pub weights: Option<Vec<Vec<f64>>>,
    pub max_loss: f64,
}

impl Default for LossFitOptions {
    fn default() -> Self {
        Self {
            fix_initial: true,
            weights: None,
            max_loss: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossFitResult {
    pub loss_per_trip: f64,
    pub initial_state: FockDiagonalState,
    /// Weighted RMS of the population residuals.
    pub residual: f64,
    /// Variance of the fitted loss from the curvature of the objective.
    pub covariance: f64,
}

impl LossFitResult {
    pub fn std_error(&self) -> f64 {
        self.covariance.sqrt()
    }
}

struct FitProblem<'a> {
    series: &'a StorageSeries,
    tracked: usize,
    weights: Vec<Vec<f64>>,
}

impl FitProblem<'_> {
    fn objective(&self, initial: &FockDiagonalState, p: f64) -> f64 {
        let params = MemoryParams::with_loss(p).expect("loss bounded below 1");
        let mut sum = 0.0;
        for ((n, obs), w) in self.series.iter().zip(&self.weights) {
            let model = evolve_rounds(initial, &params, n).expect("valid transmission");
            for k in 0..self.tracked {
                let r = obs.population(k) - model.population(k);
                sum += w[k] * r * r;
            }
        }
        sum
    }

    fn terms(&self) -> usize {
        self.weights
            .iter()
            .map(|w| w[..self.tracked].iter().filter(|&&x| x > 0.0).count())
            .sum()
    }

    /// Simplex-constrained least-squares initial state at fixed loss, by
    /// projected gradient descent.
    fn best_initial(&self, p: f64, start: &FockDiagonalState) -> FockDiagonalState {
        let dim = start.basis().dim();
        let params = MemoryParams::with_loss(p).expect("loss bounded below 1");
        // Loss matrices A_i, with A_i[k][m] = B(m, k; T_i).
        let mats: Vec<Vec<Vec<f64>>> = self
            .series
            .round_trips()
            .iter()
            .map(|&n| {
                let t = params.transmission(n);
                (0..dim)
                    .map(|k| {
                        (0..dim)
                            .map(|m| crate::fock::binomial_pmf(m, k, t))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let lipschitz: f64 = 2.0
            * mats
                .iter()
                .zip(&self.weights)
                .map(|(a, w)| {
                    a.iter()
                        .enumerate()
                        .map(|(k, row)| w[k] * row.iter().map(|x| x * x).sum::<f64>())
                        .sum::<f64>()
                })
                .sum::<f64>();
        let step = 1.0 / lipschitz.max(1e-12);
        let mut x = start.populations().to_vec();
        for _ in 0..2_000 {
            let mut grad = vec![0.0; dim];
            for ((a, w), obs) in mats.iter().zip(&self.weights).zip(self.series.states()) {
                for k in 0..dim {
                    let model: f64 = a[k].iter().zip(&x).map(|(m, q)| m * q).sum();
                    let r = w[k] * (model - obs.population(k));
                    for m in 0..dim {
                        grad[m] += 2.0 * r * a[k][m];
                    }
                }
            }
            let y: Vec<f64> = x.iter().zip(&grad).map(|(x, g)| x - step * g).collect();
            x = project_simplex(&y);
        }
        FockDiagonalState::from_clipped(*start.basis(), &x).unwrap_or_else(|_| start.clone())
    }
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(y: &[f64]) -> Vec<f64> {
    let mut u = y.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    y.iter().map(|v| (v - theta).max(0.0)).collect()
}

/// Least-squares loss per round trip over all tracked populations of a
/// storage series, using the round-trip loss map as the model.
pub fn fit_loss(series: &StorageSeries, options: &LossFitOptions) -> Result<LossFitResult> {
    if series.len() < 3 {
        return Err(Error::param("series", "need at least three time points"));
    }
    if series.round_trips()[0] != 0 {
        return Err(Error::param("series", "first time point must be N = 0"));
    }
    if !(options.max_loss > 0.0 && options.max_loss < 1.0) {
        return Err(Error::param("max_loss", "must lie in (0, 1)"));
    }
    let dim = series.states()[0].basis().dim();
    let weights = match &options.weights {
        Some(w) => {
            if w.len() != series.len() || w.iter().any(|row| row.len() < dim) {
                return Err(Error::param("weights", "shape must match the series"));
            }
            if w.iter().flatten().any(|x| !(*x >= 0.0 && x.is_finite())) {
                return Err(Error::param("weights", "must be finite and non-negative"));
            }
            w.clone()
        }
        None => vec![vec![1.0; dim]; series.len()],
    };
    let tracked = series
        .states()
        .iter()
        .filter_map(|s| s.populations().iter().rposition(|&p| p > 0.0))
        .max()
        .unwrap_or(0)
        + 1;
    let problem = FitProblem {
        series,
        tracked,
        weights,
    };

    let start = series.states()[0].clone();
    // Largest change of any modelled population across the search range.
    let hi = MemoryParams::with_loss(options.max_loss)?;
    let movement = series
        .round_trips()
        .iter()
        .map(|&n| evolve_rounds(&start, &hi, n).map(|s| s.max_abs_diff(&start)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    if movement <= 1e-12 {
        return Err(Error::LossUnidentifiable);
    }

    let initial_for = |p: f64| {
        if options.fix_initial {
            start.clone()
        } else {
            problem.best_initial(p, &start)
        }
    };
    let total = |p: f64| problem.objective(&initial_for(p), p);

    let best = minimize_bounded(total, 0.0, options.max_loss, 1e-10);
    let p_hat = best.x;
    let initial_state = initial_for(p_hat);
    let s_min = problem.objective(&initial_state, p_hat);

    // Second derivative of the objective at the optimum.
    let h = 1e-5;
    let f = |p: f64| problem.objective(&initial_for(p), p);
    let curvature = if p_hat - h >= 0.0 {
        (f(p_hat + h) - 2.0 * s_min + f(p_hat - h)) / (h * h)
    } else {
        (f(p_hat + 2.0 * h) - 2.0 * f(p_hat + h) + s_min) / (h * h)
    };
    let m = problem.terms().max(2);
    let s2 = s_min / (m - 1) as f64;
    let covariance = if curvature > 0.0 {
        2.0 * s2 / curvature
    } else {
        f64::INFINITY
    };

    let residual = (s_min / m as f64).sqrt();
    // No loss in range moves the model further than the scatter of the data.
    let unweighted = FitProblem {
        series,
        tracked,
        weights: vec![vec![1.0; dim]; series.len()],
    };
    let scatter =
        (unweighted.objective(&initial_state, p_hat) / (series.len() * tracked) as f64).sqrt();
    if movement <= scatter {
        return Err(Error::LossUnidentifiable);
    }

    Ok(LossFitResult {
        loss_per_trip: p_hat,
        initial_state,
        residual,
        covariance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lifetime {
    Finite(f64),
    /// No decay resolved: the fitted slope is not negative.
    Infinite,
}

impl Lifetime {
    pub fn seconds(&self) -> Option<f64> {
        match self {
            Lifetime::Finite(t) => Some(*t),
            Lifetime::Infinite => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifetimeFit {
    pub tau: Lifetime,
    /// Fitted population at t = 0.
    pub f0: f64,
    /// Points dropped from the log fit for non-positive populations.
    pub excluded: usize,
}

/// Fits `ρ_nn(t) = F₀ e^{-t/τ}` with `t = N·Δt` by log-linear least squares
/// weighted by `ρ_nn²`.
pub fn fit_lifetime(series: &StorageSeries, n: usize, dt: f64) -> Result<LifetimeFit> {
    if !(dt > 0.0) {
        return Err(Error::param("dt", "must be positive"));
    }
    let first = series
        .states()
        .first()
        .ok_or_else(|| Error::param("series", "empty series"))?;
    if !(first.population(n) > 0.0) {
        return Err(Error::param(
            "series",
            format!("population {n} must be positive at the first point"),
        ));
    }
    let mut excluded = 0;
    let points: Vec<(f64, f64, f64)> = series
        .iter()
        .filter_map(|(trips, s)| {
            let f = s.population(n);
            if f > 0.0 {
                Some((trips as f64 * dt, f.ln(), f * f))
            } else {
                excluded += 1;
                None
            }
        })
        .collect();
    if points.len() < 2 {
        return Err(Error::param(
            "series",
            "need two positive points for a lifetime",
        ));
    }
    let sw: f64 = points.iter().map(|p| p.2).sum();
    let t_bar = points.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let y_bar = points.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = points.iter().map(|p| p.2 * (p.0 - t_bar).powi(2)).sum();
    let sxy: f64 = points
        .iter()
        .map(|p| p.2 * (p.0 - t_bar) * (p.1 - y_bar))
        .sum();
    if sxx == 0.0 {
        return Err(Error::param("series", "all points share one time"));
    }
    let slope = sxy / sxx;
    let intercept = y_bar - slope * t_bar;
    let tau = if slope < 0.0 {
        Lifetime::Finite(-1.0 / slope)
    } else {
        Lifetime::Infinite
    };
    Ok(LifetimeFit {
        tau,
        f0: intercept.exp(),
        excluded,
    })
}

/// Result of re-running an analysis at `η - σ_η`, `η` and `η + σ_η`.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaBand {
    /// The three efficiencies actually used.
    pub etas: [f64; 3],
    pub mid: Vec<f64>,
    /// Entrywise minimum over the three runs.
    pub low: Vec<f64>,
    /// Entrywise maximum over the three runs.
    pub high: Vec<f64>,
}

impl EtaBand {
    pub fn widths(&self) -> Vec<f64> {
        self.high
            .iter()
            .zip(&self.low)
            .map(|(h, l)| h - l)
            .collect()
    }
}

/// Runs `analysis` at the nominal efficiency and one standard deviation on
/// either side (clamped into `(0, 1]`), and reports the envelope.
pub fn eta_band<F>(det: &DetectionModel, analysis: F) -> Result<EtaBand>
where
    F: Fn(&DetectionModel) -> Result<Vec<f64>>,
{
    let eta = det.eta();
    let sigma = det.sigma_eta();
    let etas = [
        (eta - sigma).max(f64::MIN_POSITIVE),
        eta,
        (eta + sigma).min(1.0),
    ];
    let runs = etas
        .iter()
        .map(|&e| analysis(&det.with_eta(e)?))
        .collect::<Result<Vec<_>>>()?;
    let len = runs[1].len();
    if runs.iter().any(|r| r.len() != len) {
        return Err(Error::param("analysis", "runs returned different lengths"));
    }
    let low = (0..len)
        .map(|i| runs.iter().map(|r| r[i]).fold(f64::INFINITY, f64::min))
        .collect();
    let high = (0..len)
        .map(|i| runs.iter().map(|r| r[i]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    Ok(EtaBand {
        etas,
        mid: runs[1].clone(),
        low,
        high,
    })
}

/// Initial state re-corrected for detection efficiency `eta_new`, given a
/// state that was corrected assuming `eta_old`.
pub fn recorrect(
    state: &FockDiagonalState,
    eta_old: f64,
    eta_new: f64,
) -> Result<FockDiagonalState> {
    let measured = apply_loss(state, eta_old)?;
    FockDiagonalState::from_clipped(*state.basis(), &invert_loss(&measured, eta_new)?)
}

/// Round-trip count (real-valued) at which the Wigner minimum of the
/// stored state first reaches zero, or `None` if it starts non-negative or
/// never crosses.
pub fn negativity_zero_crossing(initial: &FockDiagonalState, params: &MemoryParams) -> Option<f64> {
    let g = |n: f64| {
        evolve_continuous(initial, params, n)
            .map(|s| negativity(&s).value)
            .unwrap_or(f64::NAN)
    };
    if !(g(0.0) < 0.0) || params.loss_per_trip() == 0.0 {
        return None;
    }
    // Past this point the state is vacuum to within 1e-12.
    let limit = (1e-12f64.ln() / (1.0 - params.loss_per_trip()).ln()).ceil();
    let mut lo = 0.0;
    let mut hi = 1.0;
    while hi <= limit {
        if g(hi) >= 0.0 {
            return bisect(g, lo, hi, 1e-9);
        }
        lo = hi;
        hi += 1.0;
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroCrossing {
    pub round_trips: f64,
    /// Crossings of the `η ∓ σ_η` re-analyses, when they cross at all.
    pub band: (Option<f64>, Option<f64>),
    /// Quadrature sum of the η half-band and the loss-fit contribution.
    pub uncertainty: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegativityCurve {
    pub round_trips: Vec<u32>,
    pub negativity: Vec<f64>,
    pub band_low: Vec<f64>,
    pub band_high: Vec<f64>,
    pub zero_crossing: Option<ZeroCrossing>,
}

/// Negativity versus round trips for a stored state, with an η band and
/// the zero crossing.
pub fn negativity_curve(
    initial: &FockDiagonalState,
    params: &MemoryParams,
    det: &DetectionModel,
    trips: &[u32],
) -> Result<NegativityCurve> {
    negativity_curve_with_loss_variance(initial, params, det, trips, 0.0)
}

/// [`negativity_curve`] with the variance of a fitted loss folded into the
/// crossing uncertainty.
pub fn negativity_curve_with_loss_variance(
    initial: &FockDiagonalState,
    params: &MemoryParams,
    det: &DetectionModel,
    trips: &[u32],
    loss_variance: f64,
) -> Result<NegativityCurve> {
    if trips.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("round_trips", "must be strictly increasing"));
    }
    let eta = det.eta();
    let curve_at = |d: &DetectionModel| -> Result<Vec<f64>> {
        let state = recorrect(initial, eta, d.eta())?;
        trips
            .iter()
            .map(|&n| evolve_rounds(&state, params, n).map(|s| negativity(&s).value))
            .collect()
    };
    let band = eta_band(det, curve_at)?;

    let zero_crossing = negativity_zero_crossing(initial, params).map(|n_star| {
        let side = |e: f64| {
            recorrect(initial, eta, e)
                .ok()
                .and_then(|s| negativity_zero_crossing(&s, params))
        };
        let low = side(band.etas[0]);
        let high = side(band.etas[2]);
        let half_band = match (low, high) {
            (Some(a), Some(b)) => 0.5 * (a - b).abs(),
            (Some(a), None) | (None, Some(a)) => (a - n_star).abs(),
            (None, None) => 0.0,
        };
        let fit_part = if loss_variance > 0.0 {
            let p = params.loss_per_trip();
            let h = (1e-4 * p).max(1e-7);
            let shifted = MemoryParams::new(p + h, params.round_trip_time())
                .ok()
                .and_then(|q| negativity_zero_crossing(initial, &q));
            shifted.map_or(0.0, |n2| ((n2 - n_star) / h).abs() * loss_variance.sqrt())
        } else {
            0.0
        };
        ZeroCrossing {
            round_trips: n_star,
            band: (low, high),
            uncertainty: half_band.hypot(fit_part),
        }
    });

    Ok(NegativityCurve {
        round_trips: trips.to_vec(),
        negativity: band.mid,
        band_low: band.low,
        band_high: band.high,
        zero_crossing,
    })
}
