//! Power-law step-size sequences `α_n = a · (n + n₀)^(−p)`.
//!
//! The admissible exponent window is `0.5 < p ≤ 1`: exactly the power-law
//! schedules with divergent step sums and summable squared steps, which is
//! what the convergence and avoidance analysis requires. The offset `n₀`
//! tames early steps without changing the asymptotic class `Θ(n^−p)`.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("step scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("exponent p = {0} ≤ 0.5: squared steps are not summable")]
    DivergentSquareSum(f64),
    #[error("exponent p = {0} > 1: the step sum converges")]
    SummableSteps(f64),
}

/// A validated step-size schedule. Immutable after construction; safe to
/// share across concurrent trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepSchedule {
    a: f64,
    p: f64,
    n0: u64,
}

impl StepSchedule {
    /// Validates `(a, p, n₀)` and builds the schedule.
    ///
    /// Succeeds iff `a > 0` and `0.5 < p ≤ 1`; for power laws this is
    /// equivalent to `Σ α_n = ∞` together with `Σ α_n² < ∞`.
    pub fn new(a: f64, p: f64, n0: u64) -> Result<Self, ScheduleError> {
        if !(a > 0.0) {
            return Err(ScheduleError::NonPositiveScale(a));
        }
        if !(p > 0.5) {
            return Err(ScheduleError::DivergentSquareSum(p));
        }
        if p > 1.0 {
            return Err(ScheduleError::SummableSteps(p));
        }
        Ok(Self { a, p, n0 })
    }

    /// The step at index `n ≥ 1`: `a · (n + n₀)^(−p)`.
    #[inline]
    pub fn step(&self, n: u64) -> f64 {
        debug_assert!(n >= 1);
        self.a * ((n + self.n0) as f64).powf(-self.p)
    }

    /// Partial sum `Σ_{n ≤ upto} step(n)`.
    pub fn partial_sum(&self, upto: u64) -> f64 {
        (1..=upto).map(|n| self.step(n)).sum()
    }

    /// Partial sum of squares `Σ_{n ≤ upto} step(n)²`.
    pub fn partial_sum_sq(&self, upto: u64) -> f64 {
        (1..=upto).map(|n| self.step(n) * self.step(n)).sum()
    }

    pub fn scale(&self) -> f64 {
        self.a
    }

    pub fn exponent(&self) -> f64 {
        self.p
    }

    pub fn offset(&self) -> u64 {
        self.n0
    }
}
