//! The three stochastic iterations, in primal and transformed coordinates.
//!
//! Primal heavy-ball update:
//!
//! ```text
//! x⁺ = x − α·g + β·(x − x_prev)
//! ```
//!
//! With `v = x − x_prev` and `z = x + (β/(1−β))·v` this is equivalent to the
//! transformed recursion
//!
//! ```text
//! v⁺ = β·v − α·g,      z⁺ = z − (α/(1−β))·g,
//! ```
//!
//! which exposes `z` as a perturbed gradient step with effective step
//! `α/(1−β)`. Note the plus sign in the transform: it is the unique sign for
//! which the transformed recursion reproduces the primal one, and the two
//! routes are asserted to agree in tests.
//!
//! The Nesterov variant is defined by its transformed recursion
//!
//! ```text
//! v⁺ = β·(v − α·g),    z⁺ = z − (α/(1−β))·g,
//! ```
//!
//! (the only difference from heavy-ball is the extra `β` on the gradient
//! term), with the primal iterate reconstructed through the same transform,
//! `x⁺ = z⁺ + (β/(1−β))·v⁺`. With `β = 0` all three methods coincide with
//! plain SGD, exactly, in floating point.

use serde::Serialize;
use thiserror::Error;

use crate::schedule::StepSchedule;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("momentum β = {0} outside [0, 1)")]
    BetaOutOfRange(f64),
    #[error("iterate became non-finite at step {at_step}")]
    NonFinite { at_step: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sgd,
    Shb,
    Snag,
}

/// A validated method configuration. `Sgd` forces `β = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodConfig {
    method: Method,
    beta: f64,
    schedule: StepSchedule,
}

impl MethodConfig {
    pub fn new(method: Method, beta: f64, schedule: StepSchedule) -> Result<Self, OptimError> {
        if !(0.0..1.0).contains(&beta) {
            return Err(OptimError::BetaOutOfRange(beta));
        }
        let beta = match method {
            Method::Sgd => 0.0,
            _ => beta,
        };
        Ok(Self {
            method,
            beta,
            schedule,
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn schedule(&self) -> &StepSchedule {
        &self.schedule
    }
}

/// Optimizer state carrying both coordinate charts in lockstep: the primal
/// pair `(x, x_prev)` and the transformed pair `(z, v)`.
///
/// Invariants, restored after every step and checked (to `1e-12` relative)
/// in debug builds: `v = x − x_prev` always, and `z − x = (β/(1−β))·v` after
/// SGD and heavy-ball steps. Nesterov steps define the primal iterate
/// through `x = z + (β/(1−β))·v`, so they maintain the mirrored relation
/// `z − x = −(β/(1−β))·v` instead; the sign flip is inherent to taking the
/// transformed recursion as the method's definition.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodState {
    n: u64,
    x: Vec<f64>,
    x_prev: Vec<f64>,
    z: Vec<f64>,
    v: Vec<f64>,
}

impl MethodState {
    /// Initial state with `x = x_prev = x₀`, so `v = 0` and `z = x₀`, at
    /// step index `n = 1`.
    pub fn init(x0: &[f64]) -> Self {
        Self {
            n: 1,
            x: x0.to_vec(),
            x_prev: x0.to_vec(),
            z: x0.to_vec(),
            v: vec![0.0; x0.len()],
        }
    }

    /// State with explicit history, for tests that need nonzero initial
    /// velocity. `v = x − x_prev`, `z = x + (β/(1−β))·v`.
    pub fn with_history(x: &[f64], x_prev: &[f64], beta: f64) -> Self {
        let v: Vec<f64> = x.iter().zip(x_prev).map(|(a, b)| a - b).collect();
        let k = beta / (1.0 - beta);
        let z: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + k * b).collect();
        Self {
            n: 1,
            x: x.to_vec(),
            x_prev: x_prev.to_vec(),
            z,
            v,
        }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn x_prev(&self) -> &[f64] {
        &self.x_prev
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Plain SGD step `x⁺ = x − α·g`; `z` follows `x` and `v = −α·g`.
    pub fn step_sgd(&mut self, g: &[f64], alpha: f64) -> Result<(), OptimError> {
        for i in 0..self.x.len() {
            self.v[i] = -(alpha * g[i]);
            self.x_prev[i] = self.x[i];
            self.x[i] += self.v[i];
            self.z[i] = self.x[i];
        }
        self.finish_step(0.0, 1.0)
    }

    /// Heavy-ball step in primal form; `z` is recomputed from the transform.
    pub fn step_primal_shb(&mut self, g: &[f64], alpha: f64, beta: f64) -> Result<(), OptimError> {
        let k = beta / (1.0 - beta);
        for i in 0..self.x.len() {
            let next = self.x[i] - alpha * g[i] + beta * self.v[i];
            self.v[i] = next - self.x[i];
            self.x_prev[i] = self.x[i];
            self.x[i] = next;
            self.z[i] = next + k * self.v[i];
        }
        self.finish_step(beta, 1.0)
    }

    /// Heavy-ball step in transformed form; `x` integrates the velocity,
    /// `x⁺ = x + v⁺`, which is exact and free of the transform convention.
    pub fn step_transformed_shb(
        &mut self,
        g: &[f64],
        alpha: f64,
        beta: f64,
    ) -> Result<(), OptimError> {
        let eff = alpha / (1.0 - beta);
        for i in 0..self.x.len() {
            self.v[i] = beta * self.v[i] - alpha * g[i];
            self.z[i] -= eff * g[i];
            self.x_prev[i] = self.x[i];
            self.x[i] += self.v[i];
        }
        self.finish_step(beta, 1.0)
    }

    /// Nesterov step: the transformed recursion with the extra `β` on the
    /// gradient term, primal iterate reconstructed through the transform.
    pub fn step_snag(&mut self, g: &[f64], alpha: f64, beta: f64) -> Result<(), OptimError> {
        let eff = alpha / (1.0 - beta);
        let k = beta / (1.0 - beta);
        for i in 0..self.x.len() {
            self.v[i] = beta * (self.v[i] - alpha * g[i]);
            self.z[i] -= eff * g[i];
            self.x[i] = self.z[i] + k * self.v[i];
            self.x_prev[i] = self.x[i] - self.v[i];
        }
        self.finish_step(beta, -1.0)
    }

    /// Dispatches on the configured method (heavy-ball steps in primal form).
    pub fn advance(
        &mut self,
        method: Method,
        g: &[f64],
        alpha: f64,
        beta: f64,
    ) -> Result<(), OptimError> {
        match method {
            Method::Sgd => self.step_sgd(g, alpha),
            Method::Shb => self.step_primal_shb(g, alpha, beta),
            Method::Snag => self.step_snag(g, alpha, beta),
        }
    }

    fn finish_step(&mut self, beta: f64, chart_sign: f64) -> Result<(), OptimError> {
        self.n += 1;
        if !self.x.iter().all(|t| t.is_finite()) {
            return Err(OptimError::NonFinite { at_step: self.n });
        }
        #[cfg(debug_assertions)]
        self.debug_check_charts(beta, chart_sign);
        #[cfg(not(debug_assertions))]
        let _ = (beta, chart_sign);
        Ok(())
    }

    /// Standing consistency assertion between the two charts.
    #[cfg(debug_assertions)]
    fn debug_check_charts(&self, beta: f64, chart_sign: f64) {
        let k = chart_sign * beta / (1.0 - beta);
        let mut err = 0.0f64;
        let mut scale = 1.0f64;
        let mut finite = true;
        for i in 0..self.x.len() {
            let kv = k * self.v[i];
            finite &= self.z[i].is_finite() && kv.is_finite();
            err = err.max((self.z[i] - self.x[i] - kv).abs());
            err = err.max((self.v[i] - (self.x[i] - self.x_prev[i])).abs());
            scale = scale.max(self.z[i].abs()).max(self.x[i].abs()).max(kv.abs());
        }
        if finite {
            debug_assert!(
                err <= 1e-12 * scale,
                "chart consistency drift {err:e} at step {} (scale {scale:e})",
                self.n
            );
        }
    }
}
