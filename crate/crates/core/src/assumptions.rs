//! Executable probes for the hypotheses the convergence analysis rests on:
//! gradient Lipschitz continuity, asymptotic non-flatness, the `(A, B, C)`
//! second-moment bound, local almost-sure boundedness of the stochastic
//! gradient, and uniform noise excitation.
//!
//! Probes certify a declared compact box, not the whole space: the global
//! statements are carried by the closed forms of the zoo objectives, while
//! these estimators guard against implementation drift. Every estimator is a
//! pure function of its inputs and a seed; Monte Carlo work is split into
//! fixed-size chunks with counter-derived streams, so results are identical
//! whether the chunks run sequentially or on a thread pool.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{dot, norm};
use crate::oracle::{NoiseOracle, OracleError};
use crate::rng::{fill_unit_sphere, stream, uniform_in};
use crate::landscape::Objective;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Default verdict thresholds, echoed into every report.
pub const NONFLAT_MIN_GRAD: f64 = 0.1;
pub const ABC_SE_MULTIPLIER: f64 = 4.0;
pub const EXCITATION_SLACK: f64 = 0.02;
pub const LOCAL_BOUND_INFLATION: f64 = 1e-3;

const CHUNK: u64 = 1 << 16;

// Stream indices carved out of the probe seed.
const STREAM_SMOOTH: u64 = 1;
const STREAM_SHELL: u64 = 2;
const STREAM_LOCAL: u64 = 3;
const STREAM_EXC_DIRS: u64 = 4;
const STREAM_ABC_DRAWS: u64 = 1 << 32;
const STREAM_EXC_NOISE: u64 = 2 << 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssumptionsError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("probe box [{lo}, {hi}] is empty or not finite")]
    BadProbeBox { lo: f64, hi: f64 },
    #[error("probe needs at least {need} samples, got {got}")]
    TooFewSamples { got: usize, need: usize },
    #[error("excitation estimate needs at least 16 directions, got {got}")]
    TooFewDirections { got: usize },
    #[error("excitation estimate needs at least 1e5 draws, got {got}")]
    TooFewDraws { got: u64 },
    #[error("shell radii must be strictly increasing")]
    RadiiNotIncreasing,
}

/// The compact region a probe certifies, with its sampling budget and seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionProbe {
    pub lo: f64,
    pub hi: f64,
    pub sample_count: usize,
    pub rng_seed: u64,
}

impl RegionProbe {
    pub fn new(lo: f64, hi: f64, sample_count: usize, rng_seed: u64) -> Result<Self, AssumptionsError> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(AssumptionsError::BadProbeBox { lo, hi });
        }
        if sample_count < 100 {
            return Err(AssumptionsError::TooFewSamples {
                got: sample_count,
                need: 100,
            });
        }
        Ok(Self {
            lo,
            hi,
            sample_count,
            rng_seed,
        })
    }

    fn sample_point(&self, d: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<f64> {
        (0..d).map(|_| uniform_in(rng, self.lo, self.hi)).collect()
    }
}

// ---------------------------------------------------------------------------
// smoothness
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmoothnessProbe {
    /// Largest sampled difference quotient ‖∇f(x) − ∇f(y)‖ / ‖x − y‖.
    pub l_hat: f64,
    /// Violations of the descent inequality
    /// `f(y) ≤ f(x) + ⟨∇f(x), y−x⟩ + L̂/2·‖y−x‖²` on the same pairs.
    pub descent_violations: u64,
}

/// Estimates the gradient Lipschitz constant on the probe box and
/// cross-checks the quadratic upper bound it implies.
pub fn probe_smoothness(obj: &dyn Objective, probe: &RegionProbe) -> SmoothnessProbe {
    let d = obj.dim();
    let mut rng = stream(probe.rng_seed, STREAM_SMOOTH);
    let mut pairs = Vec::with_capacity(probe.sample_count);
    let mut l_hat = 0.0f64;
    for _ in 0..probe.sample_count {
        let x = probe.sample_point(d, &mut rng);
        let y = probe.sample_point(d, &mut rng);
        let dxy = crate::linalg::dist(&x, &y);
        if dxy < 1e-12 {
            continue;
        }
        let gx = obj.grad(&x);
        let gy = obj.grad(&y);
        l_hat = l_hat.max(crate::linalg::dist(&gx, &gy) / dxy);
        pairs.push((x, y, gx));
    }
    let mut descent_violations = 0;
    for (x, y, gx) in &pairs {
        let diff: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
        let rhs = obj.eval(x) + dot(gx, &diff) + 0.5 * l_hat * dot(&diff, &diff);
        if obj.eval(y) > rhs + 1e-9 * rhs.abs().max(1.0) {
            descent_violations += 1;
        }
    }
    SmoothnessProbe {
        l_hat,
        descent_violations,
    }
}

// ---------------------------------------------------------------------------
// non-flatness
// ---------------------------------------------------------------------------

/// Minimum gradient norm over uniformly sampled points of the sphere of each
/// radius. Radii must be strictly increasing.
pub fn probe_nonflatness(
    obj: &dyn Objective,
    radii: &[f64],
    samples_per_shell: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>, AssumptionsError> {
    if radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AssumptionsError::RadiiNotIncreasing);
    }
    let d = obj.dim();
    let mut rng = stream(seed, STREAM_SHELL);
    let mut out = Vec::with_capacity(radii.len());
    let mut u = vec![0.0; d];
    for &r in radii {
        let mut min_grad = f64::INFINITY;
        for _ in 0..samples_per_shell {
            fill_unit_sphere(&mut rng, &mut u);
            let x: Vec<f64> = u.iter().map(|&t| r * t).collect();
            min_grad = min_grad.min(obj.grad_norm(&x));
        }
        out.push((r, min_grad));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// (A, B, C) fit
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AbcFit {
    pub a_hat: f64,
    pub b_hat: f64,
    pub c_hat: f64,
    /// Largest positive violation of the fitted bound on the holdout points.
    pub holdout_residual: f64,
    /// The same violation measured in per-point Monte Carlo standard errors.
    pub max_violation_se: f64,
}

struct AbcPoint {
    regressors: [f64; 3],
    mean_sq: f64,
    se: f64,
}

fn abc_point(oracle: &NoiseOracle, probe: &RegionProbe, idx: u64, draws: u64, fstar: f64) -> AbcPoint {
    let d = oracle.dim();
    let mut rng = stream(probe.rng_seed, STREAM_ABC_DRAWS + idx);
    let x = probe.sample_point(d, &mut rng);
    let mut grad = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..draws {
        oracle.sample_into(&x, &mut rng, &mut grad, &mut g);
        let sq = dot(&g, &g);
        sum += sq;
        sum_sq += sq * sq;
    }
    let mean_sq = sum / draws as f64;
    let var = (sum_sq / draws as f64 - mean_sq * mean_sq).max(0.0);
    let gn = norm(&oracle.base().grad(&x));
    AbcPoint {
        regressors: [oracle.base().eval(&x) - fstar, gn * gn, 1.0],
        mean_sq,
        se: (var / draws as f64).sqrt(),
    }
}

/// Nonnegative least squares of the Monte Carlo estimate of `E‖g‖²` against
/// the regressors `(f − f*, ‖∇f‖², 1)`, with the fitted inequality verified
/// on a disjoint holdout sample.
///
/// Points are weighted by their inverse Monte Carlo variance: the estimates
/// are strongly heteroskedastic (the per-point standard error scales with
/// `‖∇f‖`, which spans orders of magnitude over the box), and an unweighted
/// fit lets the noisiest points drag the slope below the true law.
pub fn fit_abc(
    oracle: &NoiseOracle,
    probe: &RegionProbe,
    draws_per_point: u64,
) -> Result<AbcFit, AssumptionsError> {
    let fstar = oracle
        .base()
        .lower_bound()
        .ok_or_else(|| OracleError::UnboundedBelow(oracle.base().name().to_string()))?;
    let n = probe.sample_count as u64;
    // Points 0..n fit the constants, points n..2n are the holdout.
    let points = run_indexed(2 * n, |i| abc_point(oracle, probe, i, draws_per_point, fstar));
    let (fit_pts, holdout) = points.split_at(n as usize);

    let mut xtx = DMatrix::<f64>::zeros(3, 3);
    let mut xty = DVector::<f64>::zeros(3);
    for p in fit_pts {
        // Guard keeps the weight finite for noiseless oracles, where every
        // point has zero variance and the fit degenerates to unweighted.
        let floor = 1e-9 * (1.0 + p.mean_sq);
        let w = 1.0 / (p.se * p.se + floor * floor);
        for i in 0..3 {
            for j in 0..3 {
                xtx[(i, j)] += w * p.regressors[i] * p.regressors[j];
            }
            xty[i] += w * p.regressors[i] * p.mean_sq;
        }
    }
    let beta = nnls3(&xtx, &xty);

    let mut holdout_residual = 0.0f64;
    let mut max_violation_se = 0.0f64;
    for p in holdout {
        let bound = dot(&beta, &p.regressors);
        let excess = p.mean_sq - bound;
        if excess > holdout_residual {
            holdout_residual = excess;
        }
        if excess > 0.0 && p.se > 0.0 {
            max_violation_se = max_violation_se.max(excess / p.se);
        }
    }
    Ok(AbcFit {
        a_hat: beta[0],
        b_hat: beta[1],
        c_hat: beta[2],
        holdout_residual,
        max_violation_se,
    })
}

/// Exact nonnegative least squares for three regressors: solve the normal
/// equations restricted to every subset of active coefficients and keep the
/// feasible solution with the smallest residual.
fn nnls3(xtx: &DMatrix<f64>, xty: &DVector<f64>) -> [f64; 3] {
    let mut best: Option<([f64; 3], f64)> = None;
    for mask in 0u8..8 {
        let active: Vec<usize> = (0..3).filter(|i| mask & (1 << i) != 0).collect();
        let k = active.len();
        let beta = if k == 0 {
            [0.0; 3]
        } else {
            let mut sub = DMatrix::<f64>::zeros(k, k);
            let mut rhs = DVector::<f64>::zeros(k);
            for (ri, &i) in active.iter().enumerate() {
                rhs[ri] = xty[i];
                for (ci, &j) in active.iter().enumerate() {
                    sub[(ri, ci)] = xtx[(i, j)];
                }
            }
            let Some(sol) = sub.lu().solve(&rhs) else {
                continue;
            };
            let mut beta = [0.0; 3];
            for (ri, &i) in active.iter().enumerate() {
                beta[i] = sol[ri];
            }
            beta
        };
        if beta.iter().any(|&b| b < -1e-12) {
            continue;
        }
        let beta = beta.map(|b| b.max(0.0));
        // Residual sum of squares up to the constant ‖y‖² term, which is
        // shared by all candidates: βᵀXᵀXβ − 2βᵀXᵀy.
        let mut quad = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                quad += beta[i] * xtx[(i, j)] * beta[j];
            }
            quad -= 2.0 * beta[i] * xty[i];
        }
        if best.map_or(true, |(_, q)| quad < q) {
            best = Some((beta, quad));
        }
    }
    best.expect("at least the zero fit is feasible").0
}

// ---------------------------------------------------------------------------
// excitation
// ---------------------------------------------------------------------------

/// Mean positive part of `⟨g(x, ξ) − ∇f(x), v⟩` along one direction.
pub fn excitation_along(
    oracle: &NoiseOracle,
    x: &[f64],
    v: &[f64],
    draws: u64,
    seed: u64,
) -> f64 {
    let d = oracle.dim();
    let grad0 = oracle.base().grad(x);
    let chunks = draws.div_ceil(CHUNK);
    let total: f64 = (0..chunks)
        .map(|ci| {
            let mut rng = stream(seed, STREAM_EXC_NOISE + ci);
            let take = CHUNK.min(draws - ci * CHUNK);
            let mut grad = vec![0.0; d];
            let mut g = vec![0.0; d];
            let mut acc = 0.0;
            for _ in 0..take {
                oracle.sample_into(x, &mut rng, &mut grad, &mut g);
                let mut inner = 0.0;
                for i in 0..d {
                    inner += (g[i] - grad0[i]) * v[i];
                }
                acc += inner.max(0.0);
            }
            acc
        })
        .sum();
    total / draws as f64
}

/// Estimates the uniform excitation constant: the minimum over `directions`
/// random unit vectors of the Monte Carlo mean of `⟨g − ∇f, v⟩⁺`.
///
/// Direction `k` of a larger direction budget extends the smaller one as a
/// prefix, and every direction sees the same noise draws, so the estimate is
/// non-increasing in `directions`.
pub fn estimate_excitation(
    oracle: &NoiseOracle,
    x: &[f64],
    directions: usize,
    draws: u64,
    seed: u64,
) -> Result<f64, AssumptionsError> {
    if directions < 16 {
        return Err(AssumptionsError::TooFewDirections { got: directions });
    }
    if draws < 100_000 {
        return Err(AssumptionsError::TooFewDraws { got: draws });
    }
    let d = oracle.dim();
    let mut dir_rng = stream(seed, STREAM_EXC_DIRS);
    let dirs: Vec<Vec<f64>> = (0..directions)
        .map(|_| {
            let mut v = vec![0.0; d];
            fill_unit_sphere(&mut dir_rng, &mut v);
            v
        })
        .collect();
    let grad0 = oracle.base().grad(x);

    let chunks = draws.div_ceil(CHUNK);
    let partials = run_indexed(chunks, |ci| {
        let mut rng = stream(seed, STREAM_EXC_NOISE + ci);
        let take = CHUNK.min(draws - ci * CHUNK);
        let mut grad = vec![0.0; d];
        let mut g = vec![0.0; d];
        let mut acc = vec![0.0f64; directions];
        for _ in 0..take {
            oracle.sample_into(x, &mut rng, &mut grad, &mut g);
            for i in 0..d {
                g[i] -= grad0[i];
            }
            for (k, v) in dirs.iter().enumerate() {
                acc[k] += dot(&g, v).max(0.0);
            }
        }
        acc
    });
    let mut sums = vec![0.0f64; directions];
    for part in &partials {
        for (s, p) in sums.iter_mut().zip(part) {
            *s += p;
        }
    }
    Ok(sums
        .iter()
        .map(|s| s / draws as f64)
        .fold(f64::INFINITY, f64::min))
}

// ---------------------------------------------------------------------------
// local boundedness
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalBoundProbe {
    /// Max observed ‖g(x, ξ)‖ over sampled points and draws.
    pub observed_max: f64,
    /// Lattice estimate of `max_K ‖∇f‖` plus the model's noise radius.
    pub analytic_limit: f64,
}

/// Samples the stochastic gradient over the box and compares the largest
/// observed norm against the gradient-norm lattice maximum plus the declared
/// noise radius.
pub fn probe_local_bound(oracle: &NoiseOracle, probe: &RegionProbe, draws: u64) -> LocalBoundProbe {
    let d = oracle.dim();
    let grad_max = lattice_grad_max(oracle.base().as_ref(), probe.lo, probe.hi);
    let mut rng = stream(probe.rng_seed, STREAM_LOCAL);
    let mut grad = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut observed: f64 = 0.0;
    for _ in 0..draws {
        let x = probe.sample_point(d, &mut rng);
        oracle.sample_into(&x, &mut rng, &mut grad, &mut g);
        observed = observed.max(norm(&g));
    }
    LocalBoundProbe {
        observed_max: observed,
        analytic_limit: grad_max * (1.0 + LOCAL_BOUND_INFLATION) + oracle.noise_radius(),
    }
}

/// Max gradient norm over an inclusive lattice of roughly 10⁵ points (the
/// box corners are lattice points, which is where the zoo attains it).
fn lattice_grad_max(obj: &dyn Objective, lo: f64, hi: f64) -> f64 {
    let d = obj.dim();
    let per_axis = (1e5f64.powf(1.0 / d as f64).ceil() as usize).max(2);
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    let mut best: f64 = 0.0;
    loop {
        for i in 0..d {
            x[i] = lo + (hi - lo) * idx[i] as f64 / (per_axis - 1) as f64;
        }
        best = best.max(obj.grad_norm(&x));
        let mut i = 0;
        loop {
            if i == d {
                return best;
            }
            idx[i] += 1;
            if idx[i] < per_axis {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

// ---------------------------------------------------------------------------
// aggregate report
// ---------------------------------------------------------------------------

/// Sampling budgets for the aggregate report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeSettings {
    pub abc_draws_per_point: u64,
    pub excitation_directions: usize,
    pub excitation_draws: u64,
    pub shell_radii: Vec<f64>,
    pub shell_samples: usize,
    pub local_bound_draws: u64,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self {
            abc_draws_per_point: 2000,
            excitation_directions: 64,
            excitation_draws: 1_000_000,
            shell_radii: vec![5.0, 10.0, 20.0],
            shell_samples: 1000,
            local_bound_draws: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Verdicts {
    pub smoothness: bool,
    pub nonflatness: bool,
    pub abc: bool,
    pub local_bound: bool,
    pub excitation: bool,
}

impl Verdicts {
    pub fn all_pass(&self) -> bool {
        self.smoothness && self.nonflatness && self.abc && self.local_bound && self.excitation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    pub nonflat_min_grad: f64,
    pub abc_se_multiplier: f64,
    pub excitation_slack: f64,
    pub local_bound_inflation: f64,
}

/// Measured certificates for the five assumptions over one probe region.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub objective: String,
    pub oracle_model: String,
    pub probe: RegionProbe,
    pub smoothness: SmoothnessProbe,
    pub nonflat_shell_minima: Vec<(f64, f64)>,
    /// `None` when the base objective is unbounded below: the bound needs a
    /// finite `f*`, so the fit is refused and the verdict fails.
    pub abc_fit: Option<AbcFit>,
    pub excitation_b_hat: f64,
    pub excitation_analytic: f64,
    /// Note: this is the compact-set bound `C(K)`, distinct from the `C` of
    /// the second-moment fit above.
    pub local_bound: LocalBoundProbe,
    pub thresholds: Thresholds,
    pub verdicts: Verdicts,
}

/// Runs all five probes and assembles the verdict table.
pub fn run_assumption_report(
    oracle: &NoiseOracle,
    probe: &RegionProbe,
    settings: &ProbeSettings,
) -> Result<AssumptionReport, AssumptionsError> {
    let obj = oracle.base().as_ref();
    let smoothness = probe_smoothness(obj, probe);
    let shells = probe_nonflatness(obj, &settings.shell_radii, settings.shell_samples, probe.rng_seed)?;
    let abc_fit = match fit_abc(oracle, probe, settings.abc_draws_per_point) {
        Ok(fit) => Some(fit),
        Err(AssumptionsError::Oracle(OracleError::UnboundedBelow(_))) => None,
        Err(e) => return Err(e),
    };
    let anchor = vec![0.0; obj.dim()];
    let b_hat = estimate_excitation(
        oracle,
        &anchor,
        settings.excitation_directions,
        settings.excitation_draws,
        probe.rng_seed,
    )?;
    let b_analytic = oracle.analytic_excitation();
    let local = probe_local_bound(oracle, probe, settings.local_bound_draws);

    let verdicts = Verdicts {
        smoothness: smoothness.descent_violations == 0 && smoothness.l_hat.is_finite(),
        nonflatness: shells.iter().skip(1).all(|&(_, m)| m >= NONFLAT_MIN_GRAD),
        abc: abc_fit.map_or(false, |f| f.max_violation_se <= ABC_SE_MULTIPLIER),
        local_bound: local.observed_max <= local.analytic_limit,
        excitation: b_analytic > 0.0 && b_hat >= b_analytic - EXCITATION_SLACK,
    };
    Ok(AssumptionReport {
        objective: obj.name().to_string(),
        oracle_model: format!("{:?}", oracle.model()),
        probe: *probe,
        smoothness,
        nonflat_shell_minima: shells,
        abc_fit,
        excitation_b_hat: b_hat,
        excitation_analytic: b_analytic,
        local_bound: local,
        thresholds: Thresholds {
            nonflat_min_grad: NONFLAT_MIN_GRAD,
            abc_se_multiplier: ABC_SE_MULTIPLIER,
            excitation_slack: EXCITATION_SLACK,
            local_bound_inflation: LOCAL_BOUND_INFLATION,
        },
        verdicts,
    })
}

/// Maps `f` over `0..n`, in parallel when the `parallel` feature is active.
/// Results come back in index order either way.
fn run_indexed<T: Send>(n: u64, f: impl Fn(u64) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}
