//! Monte Carlo trial runner and statistical validators: saddle-escape
//! fractions with Wilson intervals, gradient-convergence order statistics,
//! momentum decay-rate fits, and the martingale second-moment check.
//!
//! Every trial draws from its own counter-derived stream
//! (`rng::stream(master_seed, trial_index)`), trials never share mutable
//! state, and aggregation runs in trial order after all trials finish — so a
//! run is bit-identical for any parallelism degree.

use serde::Serialize;
use thiserror::Error;

use crate::linalg::norm;
use crate::optim::{MethodConfig, MethodState, OptimError};
use crate::oracle::NoiseOracle;
use crate::rng::{fill_unit_sphere, stream, uniform01};
use crate::schedule::StepSchedule;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Tail window used for the decay-rate fit inside the aggregate report.
pub const REPORT_TAIL_FRACTION: f64 = 0.5;

const WILSON_Z: f64 = 1.959963984540054;
const RATE_BINS: usize = 20;
const MIN_TAIL_ROWS: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("horizon N = {got} is below the minimum of 1000")]
    HorizonTooShort { got: u64 },
    #[error("record stride must be at least 1")]
    BadStride,
    #[error("classification tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("initial point has dimension {got}, objective expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("need at least {need} trials, got {got}")]
    TooFewTrials { got: u64, need: u64 },
    #[error("need at least {need} recorded rows in the fit window, got {got}")]
    InsufficientData { got: usize, need: usize },
}

/// Where a trial starts: a fixed point, or uniform in a ball around one.
///
/// A ball draw consumes `2⌈d/2⌉ + 1` raw words (sphere direction plus one
/// radius word); a fixed start consumes none.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Fixed(Vec<f64>),
    Ball { center: Vec<f64>, radius: f64 },
}

impl InitialCondition {
    fn dim(&self) -> usize {
        match self {
            InitialCondition::Fixed(p) => p.len(),
            InitialCondition::Ball { center, .. } => center.len(),
        }
    }

    fn draw(&self, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<f64> {
        match self {
            InitialCondition::Fixed(p) => p.clone(),
            InitialCondition::Ball { center, radius } => {
                let d = center.len();
                let mut dir = vec![0.0; d];
                fill_unit_sphere(rng, &mut dir);
                let r = radius * uniform01(rng).powf(1.0 / d as f64);
                center.iter().zip(&dir).map(|(c, u)| c + r * u).collect()
            }
        }
    }
}

/// Full description of one experiment: oracle, method, start, horizon,
/// recording stride, seed, and classification tolerances.
#[derive(Clone)]
pub struct TrialConfig {
    pub oracle: NoiseOracle,
    pub method: MethodConfig,
    pub initial: InitialCondition,
    pub horizon: u64,
    pub record_stride: u64,
    pub master_seed: u64,
    pub delta_saddle: f64,
    pub delta_minimum: f64,
}

impl TrialConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.horizon < 1000 {
            return Err(ExperimentError::HorizonTooShort { got: self.horizon });
        }
        if self.record_stride == 0 {
            return Err(ExperimentError::BadStride);
        }
        for &tol in &[self.delta_saddle, self.delta_minimum] {
            if !(tol > 0.0) {
                return Err(ExperimentError::BadTolerance(tol));
            }
        }
        let d = self.oracle.dim();
        if self.initial.dim() != d {
            return Err(ExperimentError::DimensionMismatch {
                expected: d,
                got: self.initial.dim(),
            });
        }
        Ok(())
    }
}

/// One stride-recorded snapshot of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordedRow {
    pub n: u64,
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub v_norm: f64,
    /// Distance to each annotated component, in annotation order.
    pub component_distances: Vec<f64>,
    /// ‖Σ_{i≤n} αᵢ(∇f(xᵢ) − gᵢ)‖ up to this step.
    pub martingale_norm: f64,
}

/// Terminal classification of a trial against the annotated components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    SaddleComponent(usize),
    MinimumComponent(usize),
    Diverged,
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub trial_index: u64,
    pub horizon: u64,
    pub rows: Vec<RecordedRow>,
    pub final_x: Vec<f64>,
    pub final_grad_norm: f64,
    pub final_v_norm: f64,
    pub classification: Terminal,
    pub diverged_at: Option<u64>,
    /// ‖M_N‖² over the completed steps.
    pub martingale_sq: f64,
}

/// Runs one trial on the stream derived from `(master_seed, trial_index)`.
///
/// The iteration records a row whenever the step index is a multiple of the
/// stride, plus an unconditional terminal row; a non-finite iterate aborts
/// the trial, which is then classified as diverged (never as
/// saddle-convergent) with the last finite state as its snapshot.
pub fn run_trial(cfg: &TrialConfig, trial_index: u64) -> TrialResult {
    let obj = cfg.oracle.base().clone();
    let d = obj.dim();
    let schedule = *cfg.method.schedule();
    let method = cfg.method.method();
    let beta = cfg.method.beta();
    let components = obj.critical_components();

    let mut rng = stream(cfg.master_seed, trial_index);
    let x0 = cfg.initial.draw(&mut rng);
    let mut state = MethodState::init(&x0);
    let mut grad = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut martingale = vec![0.0; d];
    let mut last_finite = x0.clone();
    let mut last_finite_v = vec![0.0; d];
    let mut rows = Vec::new();
    let mut diverged_at = None;

    let record = |rows: &mut Vec<RecordedRow>, state: &MethodState, m: &[f64]| {
        let x = state.x().to_vec();
        rows.push(RecordedRow {
            n: state.n(),
            f: obj.eval(&x),
            grad_norm: obj.grad_norm(&x),
            v_norm: norm(state.v()),
            component_distances: components.iter().map(|c| c.distance(&x)).collect(),
            martingale_norm: norm(m),
            x,
        });
    };

    for _ in 0..cfg.horizon {
        let alpha = schedule.step(state.n());
        cfg.oracle.sample_into(state.x(), &mut rng, &mut grad, &mut g);
        for i in 0..d {
            martingale[i] += alpha * (grad[i] - g[i]);
        }
        match state.advance(method, &g, alpha, beta) {
            Ok(()) => {
                last_finite.copy_from_slice(state.x());
                last_finite_v.copy_from_slice(state.v());
                if state.n() % cfg.record_stride == 0 {
                    record(&mut rows, &state, &martingale);
                }
            }
            Err(OptimError::NonFinite { at_step }) => {
                diverged_at = Some(at_step);
                break;
            }
            Err(_) => unreachable!("stepping only reports non-finite iterates"),
        }
    }

    let (final_x, final_v_norm) = (last_finite, norm(&last_finite_v));
    let final_grad_norm = obj.grad_norm(&final_x);
    let classification = if diverged_at.is_some() {
        Terminal::Diverged
    } else {
        record(&mut rows, &state, &martingale);
        classify_terminal(components, &final_x, cfg.delta_saddle, cfg.delta_minimum)
    };

    TrialResult {
        trial_index,
        horizon: cfg.horizon,
        rows,
        final_x,
        final_grad_norm,
        final_v_norm,
        classification,
        diverged_at,
        martingale_sq: crate::linalg::dot(&martingale, &martingale),
    }
}

/// Saddle components take precedence: a terminal point within `δ_s` of any
/// saddle component is saddle-convergent; otherwise the nearest minimum
/// component within `δ_m` wins; otherwise the trial is unresolved.
fn classify_terminal(
    components: &[crate::landscape::CriticalComponent],
    x: &[f64],
    delta_s: f64,
    delta_m: f64,
) -> Terminal {
    let mut best_saddle: Option<(usize, f64)> = None;
    let mut best_min: Option<(usize, f64)> = None;
    for (k, comp) in components.iter().enumerate() {
        let dist = comp.distance(x);
        if comp.kind.is_saddle() && dist < delta_s {
            if best_saddle.map_or(true, |(_, d0)| dist < d0) {
                best_saddle = Some((k, dist));
            }
        }
        if comp.kind.is_minimum() && dist < delta_m {
            if best_min.map_or(true, |(_, d0)| dist < d0) {
                best_min = Some((k, dist));
            }
        }
    }
    if let Some((k, _)) = best_saddle {
        Terminal::SaddleComponent(k)
    } else if let Some((k, _)) = best_min {
        Terminal::MinimumComponent(k)
    } else {
        Terminal::Unresolved
    }
}

/// Aggregate of a Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EscapeReport {
    pub trials: u64,
    pub saddle_count: u64,
    pub minimum_count: u64,
    pub diverged_count: u64,
    pub unresolved_count: u64,
    /// Terminal count per annotated component label.
    pub per_component: Vec<(String, u64)>,
    pub saddle_fraction: f64,
    pub saddle_wilson_lower: f64,
    pub saddle_wilson_upper: f64,
    /// Order statistics of the final ‖∇f‖ over completed trials.
    pub median_final_grad_norm: Option<f64>,
    pub grad_norm_quartiles: Option<(f64, f64, f64)>,
    /// Pooled log-log envelope fit of ‖v_n‖ over the tail window.
    pub velocity_slope: Option<f64>,
    pub velocity_intercept: Option<f64>,
    pub velocity_stderr: Option<f64>,
    pub martingale: Option<MartingaleCheck>,
}

#[derive(Debug)]
pub struct MonteCarloRun {
    pub results: Vec<TrialResult>,
    pub report: EscapeReport,
}

/// Runs `trials` independent trials and aggregates them. The report is
/// bit-identical for a fixed `(config, trials)` regardless of `parallelism`
/// (0 = default thread count, 1 = in-place sequential).
pub fn run_monte_carlo(
    cfg: &TrialConfig,
    trials: u64,
    parallelism: usize,
) -> Result<MonteCarloRun, ExperimentError> {
    cfg.validate()?;
    if trials < 10 {
        return Err(ExperimentError::TooFewTrials {
            got: trials,
            need: 10,
        });
    }
    let results = map_trials(cfg, trials, parallelism);
    let report = aggregate(cfg, &results);
    Ok(MonteCarloRun { results, report })
}

#[cfg(feature = "parallel")]
fn map_trials(cfg: &TrialConfig, trials: u64, parallelism: usize) -> Vec<TrialResult> {
    match parallelism {
        1 => (0..trials).map(|i| run_trial(cfg, i)).collect(),
        0 => (0..trials).into_par_iter().map(|i| run_trial(cfg, i)).collect(),
        k => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .expect("thread pool construction");
            pool.install(|| (0..trials).into_par_iter().map(|i| run_trial(cfg, i)).collect())
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn map_trials(cfg: &TrialConfig, trials: u64, _parallelism: usize) -> Vec<TrialResult> {
    (0..trials).map(|i| run_trial(cfg, i)).collect()
}

fn aggregate(cfg: &TrialConfig, results: &[TrialResult]) -> EscapeReport {
    let components = cfg.oracle.base().critical_components();
    let mut per_component = vec![0u64; components.len()];
    let (mut saddle, mut minimum, mut diverged, mut unresolved) = (0u64, 0u64, 0u64, 0u64);
    for r in results {
        match r.classification {
            Terminal::SaddleComponent(k) => {
                saddle += 1;
                per_component[k] += 1;
            }
            Terminal::MinimumComponent(k) => {
                minimum += 1;
                per_component[k] += 1;
            }
            Terminal::Diverged => diverged += 1,
            Terminal::Unresolved => unresolved += 1,
        }
    }
    let trials = results.len() as u64;
    let (wl, wu) = wilson95(saddle, trials);

    let summary = gradient_convergence_summary(results).ok();
    let rate = fit_velocity_rate_pooled(results, REPORT_TAIL_FRACTION).ok();
    let martingale = check_martingale(results, &cfg.oracle, cfg.method.schedule()).ok();

    EscapeReport {
        trials,
        saddle_count: saddle,
        minimum_count: minimum,
        diverged_count: diverged,
        unresolved_count: unresolved,
        per_component: components
            .iter()
            .zip(per_component)
            .map(|(c, n)| (c.label.clone(), n))
            .collect(),
        saddle_fraction: saddle as f64 / trials as f64,
        saddle_wilson_lower: wl,
        saddle_wilson_upper: wu,
        median_final_grad_norm: summary.as_ref().map(|s| s.median),
        grad_norm_quartiles: summary.map(|s| (s.q1, s.median, s.q3)),
        velocity_slope: rate.as_ref().map(|r| r.slope),
        velocity_intercept: rate.as_ref().map(|r| r.intercept),
        velocity_stderr: rate.as_ref().map(|r| r.stderr),
        martingale,
    }
}

/// Wilson 95% score interval for a binomial proportion.
pub fn wilson95(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

// ---------------------------------------------------------------------------
// velocity decay rate
// ---------------------------------------------------------------------------

/// A least-squares fit of `log max‖v‖` against `log n` over binned maxima.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope.
    pub stderr: f64,
    /// `(bin center n, max ‖v‖ in bin)` for the nonempty bins.
    pub bins: Vec<(f64, f64)>,
}

impl RateFit {
    /// The fitted envelope value at step `n`.
    pub fn predict(&self, n: f64) -> f64 {
        (self.intercept + self.slope * n.ln()).exp()
    }
}

/// Fits the decay exponent of one trial's velocity tail; see
/// [`fit_velocity_rate_pooled`] for the cross-trial envelope.
pub fn fit_velocity_rate(result: &TrialResult, tail_fraction: f64) -> Result<RateFit, ExperimentError> {
    fit_rows(std::slice::from_ref(result), tail_fraction)
}

/// Bins the recorded steps of the last `tail_fraction` of the horizon into
/// logarithmically spaced bins and fits `log max‖v‖` against `log n`, with
/// the max taken across all trials in each bin.
pub fn fit_velocity_rate_pooled(
    results: &[TrialResult],
    tail_fraction: f64,
) -> Result<RateFit, ExperimentError> {
    fit_rows(results, tail_fraction)
}

fn fit_rows(results: &[TrialResult], tail_fraction: f64) -> Result<RateFit, ExperimentError> {
    let horizon = results.iter().map(|r| r.horizon).max().unwrap_or(0);
    let start = (horizon as f64 * (1.0 - tail_fraction)).ceil().max(1.0);
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    let mut per_trial_rows = 0usize;
    for r in results {
        let mut rows_in_window = 0;
        for row in &r.rows {
            if row.n as f64 >= start {
                lo = lo.min(row.n as f64);
                hi = hi.max(row.n as f64);
                rows_in_window += 1;
            }
        }
        per_trial_rows = per_trial_rows.max(rows_in_window);
    }
    if per_trial_rows < MIN_TAIL_ROWS {
        return Err(ExperimentError::InsufficientData {
            got: per_trial_rows,
            need: MIN_TAIL_ROWS,
        });
    }

    let (llo, lhi) = (lo.ln(), (hi + 1.0).ln());
    let mut maxima = vec![0.0f64; RATE_BINS];
    for r in results {
        for row in &r.rows {
            if (row.n as f64) < start {
                continue;
            }
            let t = ((row.n as f64).ln() - llo) / (lhi - llo);
            let bin = ((t * RATE_BINS as f64) as usize).min(RATE_BINS - 1);
            maxima[bin] = maxima[bin].max(row.v_norm);
        }
    }

    let mut pts = Vec::new();
    for (i, &m) in maxima.iter().enumerate() {
        if m > 0.0 {
            let center = (llo + (i as f64 + 0.5) / RATE_BINS as f64 * (lhi - llo)).exp();
            pts.push((center.ln(), m.ln(), center));
        }
    }
    if pts.len() < 3 {
        return Err(ExperimentError::InsufficientData {
            got: pts.len(),
            need: 3,
        });
    }

    let k = pts.len() as f64;
    let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_x) * (p.0 - mean_x)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let rss: f64 = pts
        .iter()
        .map(|p| {
            let e = p.1 - (intercept + slope * p.0);
            e * e
        })
        .sum();
    let stderr = if pts.len() > 2 {
        (rss / (k - 2.0) / sxx).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(RateFit {
        slope,
        intercept,
        stderr,
        bins: pts.iter().map(|p| (p.2, p.1.exp())).collect(),
    })
}

// ---------------------------------------------------------------------------
// martingale second moment
// ---------------------------------------------------------------------------

/// Result of comparing the empirical `E‖M_N‖²` against its closed form
/// `s²·Σ αᵢ²` for a constant-second-moment noise model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MartingaleCheck {
    pub mean_sq: f64,
    pub expected_sq: f64,
    /// `None` when the expected value is zero (exact oracle).
    pub ratio: Option<f64>,
    pub pass: bool,
}

/// Averages `‖M_N‖²` over completed trials and divides by the exact
/// martingale second moment. Passes when the ratio lands in `[0.7, 1.3]`
/// (or, for a noiseless oracle, when the numerator is exactly zero).
pub fn check_martingale(
    results: &[TrialResult],
    oracle: &NoiseOracle,
    schedule: &StepSchedule,
) -> Result<MartingaleCheck, ExperimentError> {
    let completed: Vec<&TrialResult> = results.iter().filter(|r| r.diverged_at.is_none()).collect();
    if completed.len() < 50 {
        return Err(ExperimentError::TooFewTrials {
            got: completed.len() as u64,
            need: 50,
        });
    }
    let horizon = completed[0].horizon;
    let mean_sq = completed.iter().map(|r| r.martingale_sq).sum::<f64>() / completed.len() as f64;
    let expected_sq = oracle.noise_second_moment() * schedule.partial_sum_sq(horizon);
    let (ratio, pass) = if expected_sq > 0.0 {
        let ratio = mean_sq / expected_sq;
        (Some(ratio), (0.7..=1.3).contains(&ratio))
    } else {
        (None, mean_sq == 0.0)
    };
    Ok(MartingaleCheck {
        mean_sq,
        expected_sq,
        ratio,
        pass,
    })
}

// ---------------------------------------------------------------------------
// gradient convergence
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradSummary {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

/// Order statistics of the final gradient norm over completed trials.
pub fn gradient_convergence_summary(results: &[TrialResult]) -> Result<GradSummary, ExperimentError> {
    let mut finals: Vec<f64> = results
        .iter()
        .filter(|r| r.diverged_at.is_none())
        .map(|r| r.final_grad_norm)
        .collect();
    if finals.len() < 10 {
        return Err(ExperimentError::TooFewTrials {
            got: finals.len() as u64,
            need: 10,
        });
    }
    finals.sort_by(f64::total_cmp);
    let n = finals.len();
    let median = if n % 2 == 0 {
        0.5 * (finals[n / 2 - 1] + finals[n / 2])
    } else {
        finals[n / 2]
    };
    Ok(GradSummary {
        q1: finals[n / 4],
        median,
        q3: finals[(3 * n) / 4],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::double_well_2d;
    use crate::optim::{Method, MethodConfig};
    use crate::oracle::{NoiseModel, NoiseOracle};
    use crate::schedule::StepSchedule;
    use std::sync::Arc;

    fn config(
        model: NoiseModel,
        method: Method,
        beta: f64,
        schedule: (f64, f64),
        x0: Vec<f64>,
        horizon: u64,
        stride: u64,
        seed: u64,
    ) -> TrialConfig {
        let oracle = NoiseOracle::new(Arc::new(double_well_2d()), model).unwrap();
        TrialConfig {
            oracle,
            method: MethodConfig::new(
                method,
                beta,
                StepSchedule::new(schedule.0, schedule.1, 0).unwrap(),
            )
            .unwrap(),
            initial: InitialCondition::Fixed(x0),
            horizon,
            record_stride: stride,
            master_seed: seed,
            delta_saddle: 0.1,
            delta_minimum: 0.1,
        }
    }

    #[test]
    fn validation_gates() {
        let mut cfg = config(
            NoiseModel::Exact,
            Method::Sgd,
            0.0,
            (0.1, 0.7),
            vec![0.0, 0.5],
            10_000,
            100,
            0,
        );
        assert!(cfg.validate().is_ok());
        cfg.horizon = 999;
        assert_eq!(
            cfg.validate().unwrap_err(),
            ExperimentError::HorizonTooShort { got: 999 }
        );
        cfg.horizon = 1000;
        cfg.initial = InitialCondition::Fixed(vec![0.0]);
        assert!(matches!(
            cfg.validate().unwrap_err(),
            ExperimentError::DimensionMismatch { .. }
        ));
    }

    #[test]
    fn deterministic_descent_on_the_stable_axis_reaches_the_saddle() {
        // With the exact oracle and a start on the y-axis the x-coordinate
        // stays exactly zero and the iterate contracts onto the origin
        // saddle. The independent oracle is the decoupled scalar recursion
        // y ← y − α·y.
        let cfg = config(
            NoiseModel::Exact,
            Method::Sgd,
            0.0,
            (0.1, 0.7),
            vec![0.0, 0.5],
            100_000,
            1000,
            42,
        );
        let r = run_trial(&cfg, 0);
        assert_eq!(r.classification, Terminal::SaddleComponent(0));
        assert!(norm(&r.final_x) < 1e-3, "‖x_N‖ = {}", norm(&r.final_x));
        for row in &r.rows {
            assert_eq!(row.x[0], 0.0, "stable axis must be exactly invariant");
        }
        let schedule = StepSchedule::new(0.1, 0.7, 0).unwrap();
        let mut y = 0.5f64;
        for n in 1..=100_000u64 {
            y -= schedule.step(n) * y;
        }
        assert!((r.final_x[1] - y).abs() <= 1e-12 * y.abs().max(1e-300));
    }

    #[test]
    fn stride_rule_row_count() {
        let cfg = config(
            NoiseModel::Exact,
            Method::Sgd,
            0.0,
            (0.1, 0.7),
            vec![0.0, 0.5],
            1000,
            1000,
            0,
        );
        let r = run_trial(&cfg, 0);
        // One stride row at n = 1000 plus the terminal row at n = 1001.
        assert_eq!(r.rows.len(), 2);
        assert_eq!(r.rows[0].n, 1000);
        assert_eq!(r.rows[1].n, 1001);
    }

    #[test]
    fn noise_escapes_the_saddle_where_the_deterministic_run_cannot() {
        let horizon = 20_000;
        let noisy = config(
            NoiseModel::Sphere { sigma: 0.5 },
            Method::Shb,
            0.9,
            (0.5, 0.7),
            vec![0.0, 0.5],
            horizon,
            100,
            7,
        );
        let run = run_monte_carlo(&noisy, 30, 0).unwrap();
        let exact = config(
            NoiseModel::Exact,
            Method::Sgd,
            0.0,
            (0.5, 0.7),
            vec![0.0, 0.5],
            horizon,
            100,
            7,
        );
        let exact_run = run_monte_carlo(&exact, 30, 0).unwrap();
        // The deterministic start on the stable axis converges to the saddle
        // in every trial; noise breaks that in (at least almost) all of them.
        assert_eq!(exact_run.report.saddle_count, 30);
        assert!(run.report.saddle_count < exact_run.report.saddle_count);
        assert!(run.report.minimum_count >= 28, "{:?}", run.report);
        assert_eq!(run.report.diverged_count, 0);
    }

    #[test]
    fn monte_carlo_is_parallelism_invariant() {
        let cfg = config(
            NoiseModel::Sphere { sigma: 0.5 },
            Method::Shb,
            0.9,
            (0.5, 0.7),
            vec![0.0, 0.5],
            2000,
            100,
            3,
        );
        let a = run_monte_carlo(&cfg, 10, 1).unwrap();
        let b = run_monte_carlo(&cfg, 10, 4).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.results, b.results);
    }

    #[test]
    fn too_few_trials_is_rejected() {
        let cfg = config(
            NoiseModel::Exact,
            Method::Sgd,
            0.0,
            (0.1, 0.7),
            vec![0.0, 0.5],
            1000,
            100,
            0,
        );
        assert!(matches!(
            run_monte_carlo(&cfg, 9, 1).unwrap_err(),
            ExperimentError::TooFewTrials { got: 9, need: 10 }
        ));
    }

    fn synthetic_result(v_of_n: impl Fn(u64) -> f64, horizon: u64, stride: u64) -> TrialResult {
        let rows: Vec<RecordedRow> = (1..=horizon / stride)
            .map(|k| {
                let n = k * stride;
                RecordedRow {
                    n,
                    x: vec![0.0, 0.0],
                    f: 0.0,
                    grad_norm: 0.0,
                    v_norm: v_of_n(n),
                    component_distances: vec![],
                    martingale_norm: 0.0,
                }
            })
            .collect();
        TrialResult {
            trial_index: 0,
            horizon,
            rows,
            final_x: vec![0.0, 0.0],
            final_grad_norm: 0.0,
            final_v_norm: 0.0,
            classification: Terminal::Unresolved,
            diverged_at: None,
            martingale_sq: 0.0,
        }
    }

    #[test]
    fn rate_fit_on_synthetic_envelopes() {
        // Exact power law: the fitted slope recovers the exponent up to the
        // stride discretization of the binned maxima.
        let r = synthetic_result(|n| (n as f64).powf(-0.7), 100_000, 100);
        let fit = fit_velocity_rate(&r, 0.5).unwrap();
        assert!((fit.slope + 0.7).abs() < 0.01, "slope {}", fit.slope);
        assert!(fit.stderr < 0.01);

        // Constant records: flat line.
        let r = synthetic_result(|_| 0.25, 100_000, 100);
        let fit = fit_velocity_rate(&r, 0.5).unwrap();
        assert!(fit.slope.abs() < 1e-9);

        // Too few rows in the window.
        let r = synthetic_result(|n| (n as f64).powf(-0.7), 1000, 100);
        assert!(matches!(
            fit_velocity_rate(&r, 0.5).unwrap_err(),
            ExperimentError::InsufficientData { .. }
        ));
    }

    #[test]
    fn rate_fit_sees_superpolynomial_decay_as_a_steep_slope() {
        // Exact oracle near a minimum: v decays faster than any power law,
        // so the log-log fit over the tail is much steeper than −2.
        let cfg = config(
            NoiseModel::Exact,
            Method::Shb,
            0.5,
            (0.1, 0.7),
            vec![2.0, 1.0],
            5000,
            10,
            0,
        );
        let r = run_trial(&cfg, 0);
        assert_eq!(r.classification, Terminal::MinimumComponent(1));
        let fit = fit_velocity_rate(&r, 0.5).unwrap();
        assert!(fit.slope < -2.0, "slope {}", fit.slope);
    }

    #[test]
    fn martingale_single_step_norms_are_exact_for_sphere_noise() {
        // Every step contributes α²σ² exactly, so even a short run has
        // ‖M_N‖² within rounding of σ²·Σα².
        let cfg = config(
            NoiseModel::Sphere { sigma: 0.5 },
            Method::Sgd,
            0.0,
            (0.5, 0.7),
            vec![0.0, 0.5],
            1000,
            1000,
            5,
        );
        let schedule = StepSchedule::new(0.5, 0.7, 0).unwrap();
        let results: Vec<TrialResult> = (0..60).map(|i| run_trial(&cfg, i)).collect();
        let check = check_martingale(&results, &cfg.oracle, &schedule).unwrap();
        assert!(check.ratio.is_some());
        // N = 1000 partial sums fluctuate trial to trial; the mean over 60
        // trials concentrates near 1.
        let ratio = check.ratio.unwrap();
        assert!((0.7..=1.3).contains(&ratio), "ratio {ratio}");
        assert!(check.pass);
    }

    #[test]
    fn martingale_of_the_exact_oracle_is_identically_zero() {
        let cfg = config(
            NoiseModel::Exact,
            Method::Sgd,
            0.0,
            (0.5, 0.7),
            vec![0.0, 0.5],
            1000,
            1000,
            5,
        );
        let schedule = StepSchedule::new(0.5, 0.7, 0).unwrap();
        let results: Vec<TrialResult> = (0..60).map(|i| run_trial(&cfg, i)).collect();
        let check = check_martingale(&results, &cfg.oracle, &schedule).unwrap();
        assert_eq!(check.mean_sq, 0.0);
        assert_eq!(check.ratio, None);
        assert!(check.pass);
    }

    #[test]
    fn gradient_summary_order_statistics() {
        let mut results: Vec<TrialResult> = (0..11)
            .map(|i| {
                let mut r = synthetic_result(|_| 0.0, 1000, 100);
                r.final_grad_norm = i as f64;
                r
            })
            .collect();
        let s = gradient_convergence_summary(&results).unwrap();
        assert_eq!(s.median, 5.0);
        assert_eq!(s.q1, 2.0);
        assert_eq!(s.q3, 8.0);
        results.truncate(9);
        assert!(gradient_convergence_summary(&results).is_err());
        // All-zero gradients give a zero median.
        let zeros: Vec<TrialResult> = (0..10).map(|_| synthetic_result(|_| 0.0, 1000, 100)).collect();
        assert_eq!(gradient_convergence_summary(&zeros).unwrap().median, 0.0);
    }

    #[test]
    fn wilson_interval_values() {
        let (lo, hi) = wilson95(0, 200);
        assert!(lo.abs() < 1e-15, "lower {lo}");
        assert!(hi < 0.02, "upper {hi}");
        let (lo, hi) = wilson95(100, 200);
        assert!(lo < 0.5 && 0.5 < hi);
        let (_, hi_all) = wilson95(200, 200);
        assert_eq!(hi_all, 1.0);
    }

    #[test]
    fn ball_initial_conditions_stay_inside_the_ball() {
        let init = InitialCondition::Ball {
            center: vec![1.0, 2.0],
            radius: 0.5,
        };
        for i in 0..200 {
            let mut rng = stream(9, i);
            let x = init.draw(&mut rng);
            assert!(crate::linalg::dist(&x, &[1.0, 2.0]) <= 0.5 + 1e-12);
        }
    }

    #[test]
    fn divergence_is_reported_not_classified_as_saddle() {
        // A huge step scale on the quartic makes the iterate blow up fast.
        let oracle = NoiseOracle::new(
            Arc::new(double_well_2d()),
            NoiseModel::Sphere { sigma: 0.5 },
        )
        .unwrap();
        let cfg = TrialConfig {
            oracle,
            method: MethodConfig::new(
                Method::Shb,
                0.9,
                StepSchedule::new(1e6, 0.7, 0).unwrap(),
            )
            .unwrap(),
            initial: InitialCondition::Fixed(vec![2.0, 2.0]),
            horizon: 1000,
            record_stride: 1,
            master_seed: 0,
            delta_saddle: 0.1,
            delta_minimum: 0.1,
        };
        let r = run_trial(&cfg, 0);
        assert_eq!(r.classification, Terminal::Diverged);
        assert!(r.diverged_at.is_some());
        assert!(r.final_x.iter().all(|t| t.is_finite()));
    }
}
