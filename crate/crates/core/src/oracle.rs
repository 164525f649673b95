//! Unbiased stochastic gradient oracles `g(x, ξ) = ∇f(x) + ξ` with noise
//! engineered so that the constants in the standard assumptions are known in
//! closed form.
//!
//! Models and their analytic properties (`d` is the ambient dimension):
//!
//! | model          | noise law                       | `E‖g‖²`              | excitation `b`      | radius   |
//! |----------------|---------------------------------|----------------------|---------------------|----------|
//! | `exact`        | `ξ = 0`                         | `‖∇f‖²`              | 0                   | 0        |
//! | `sphere(σ)`    | `σ·U`, `U` uniform on `S^{d−1}` | `‖∇f‖² + σ²`         | `σ·Γ(d/2)/(2√π·Γ((d+1)/2))` | σ |
//! | `rademacher(σ)`| iid `±σ` coordinates            | `‖∇f‖² + dσ²`        | `σ/(2√2)` (Khintchine lower bound) | σ√d |
//! | `finite_sum(c)`| `±c·e_j`, each prob `1/(2d)`    | `‖∇f‖² + c²`         | `c/(2d)`            | c        |
//!
//! `finite_sum(c)` realizes a finite-sum objective concretely: the `2d`
//! component functions `f(x) ± c·x_j` average to `f`, and sampling one of
//! them uniformly perturbs the gradient by `±c·e_j`.
//!
//! Raw `u64` consumption per sample is fixed per model so streams stay
//! aligned: exact 0, sphere `2⌈d/2⌉`, rademacher `d`, finite_sum 1.

use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::sync::Arc;
use thiserror::Error;

use crate::landscape::{Objective, ObjectiveHandle};
use crate::rng::{fill_unit_sphere, random_sign, uniform_index};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("noise scale must be a finite nonnegative number, got {0}")]
    InvalidNoiseScale(f64),
    #[error("objective `{0}` is unbounded below: no finite f* for the second-moment bound")]
    UnboundedBelow(String),
}

/// The noise law attached to an oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    Exact,
    Sphere { sigma: f64 },
    Rademacher { sigma: f64 },
    FiniteSum { c: f64 },
}

impl NoiseModel {
    fn scale(&self) -> f64 {
        match *self {
            NoiseModel::Exact => 0.0,
            NoiseModel::Sphere { sigma } | NoiseModel::Rademacher { sigma } => sigma,
            NoiseModel::FiniteSum { c } => c,
        }
    }
}

/// An objective bundled with a stochastic gradient noise model.
///
/// Immutable; randomness enters only through the explicitly passed per-trial
/// stream, so oracles are freely shared across concurrent trials.
#[derive(Clone)]
pub struct NoiseOracle {
    base: ObjectiveHandle,
    model: NoiseModel,
}

impl NoiseOracle {
    pub fn new(base: ObjectiveHandle, model: NoiseModel) -> Result<Self, OracleError> {
        let s = model.scale();
        if !s.is_finite() || s < 0.0 {
            return Err(OracleError::InvalidNoiseScale(s));
        }
        Ok(Self { base, model })
    }

    pub fn exact(base: ObjectiveHandle) -> Self {
        Self {
            base,
            model: NoiseModel::Exact,
        }
    }

    pub fn base(&self) -> &Arc<dyn Objective> {
        &self.base
    }

    pub fn model(&self) -> NoiseModel {
        self.model
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// Draws one noise vector `ξ` into `out` (independent of `x` for every
    /// model). Consumes the documented number of raw words.
    pub fn noise_into(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        match self.model {
            NoiseModel::Exact => out.fill(0.0),
            NoiseModel::Sphere { sigma } => {
                fill_unit_sphere(rng, out);
                for v in out.iter_mut() {
                    *v *= sigma;
                }
            }
            NoiseModel::Rademacher { sigma } => {
                for v in out.iter_mut() {
                    *v = sigma * random_sign(rng);
                }
            }
            NoiseModel::FiniteSum { c } => {
                out.fill(0.0);
                let idx = uniform_index(rng, 2 * out.len());
                let j = idx >> 1;
                out[j] = if idx & 1 == 0 { c } else { -c };
            }
        }
    }

    /// Evaluates the true gradient into `grad` and a noisy sample into `g`.
    pub fn sample_into(&self, x: &[f64], rng: &mut ChaCha8Rng, grad: &mut [f64], g: &mut [f64]) {
        self.base.grad_into(x, grad);
        self.noise_into(rng, g);
        for i in 0..g.len() {
            g[i] += grad[i];
        }
    }

    /// Convenience allocation-per-call variant of [`Self::sample_into`].
    pub fn sample_gradient(&self, x: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let d = self.dim();
        let mut grad = vec![0.0; d];
        let mut g = vec![0.0; d];
        self.sample_into(x, rng, &mut grad, &mut g);
        g
    }

    /// Declared uniform-excitation constant: a lower bound on
    /// `E[⟨ξ, v⟩⁺]` over unit vectors `v` (the positive part `max(·, 0)`).
    pub fn analytic_excitation(&self) -> f64 {
        let d = self.dim();
        match self.model {
            NoiseModel::Exact => 0.0,
            NoiseModel::Sphere { sigma } => sigma * sphere_mean_abs_coordinate(d) / 2.0,
            NoiseModel::Rademacher { sigma } => sigma / (2.0 * std::f64::consts::SQRT_2),
            NoiseModel::FiniteSum { c } => c / (2.0 * d as f64),
        }
    }

    /// The `(A, B, C)` triple of the expected-smoothness bound
    /// `E‖g‖² ≤ A(f − f*) + B‖∇f‖² + C`, exact for every model here.
    ///
    /// Refused when the base objective has no finite `f*`.
    pub fn analytic_abc(&self) -> Result<(f64, f64, f64), OracleError> {
        if self.base.lower_bound().is_none() {
            return Err(OracleError::UnboundedBelow(self.base.name().to_string()));
        }
        Ok((0.0, 1.0, self.noise_second_moment()))
    }

    /// `E‖ξ‖²`, constant for every model.
    pub fn noise_second_moment(&self) -> f64 {
        let d = self.dim() as f64;
        match self.model {
            NoiseModel::Exact => 0.0,
            NoiseModel::Sphere { sigma } => sigma * sigma,
            NoiseModel::Rademacher { sigma } => d * sigma * sigma,
            NoiseModel::FiniteSum { c } => c * c,
        }
    }

    /// Almost-sure bound on `‖ξ‖` (the noise radius).
    pub fn noise_radius(&self) -> f64 {
        let d = self.dim() as f64;
        match self.model {
            NoiseModel::Exact => 0.0,
            NoiseModel::Sphere { sigma } => sigma,
            NoiseModel::Rademacher { sigma } => sigma * d.sqrt(),
            NoiseModel::FiniteSum { c } => c,
        }
    }
}

/// `E|U₁|` for `U` uniform on `S^{d−1}`: `Γ(d/2) / (√π · Γ((d+1)/2))`,
/// evaluated exactly by the two-step recurrence of the gamma ratio.
fn sphere_mean_abs_coordinate(d: usize) -> f64 {
    assert!(d >= 1);
    // g(d) = Γ(d/2) / Γ((d+1)/2); g(1) = √π, g(2) = 2/√π,
    // g(d) = (d−2)/(d−1) · g(d−2).
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let mut g = if d % 2 == 1 { sqrt_pi } else { 2.0 / sqrt_pi };
    let mut k = if d % 2 == 1 { 1 } else { 2 };
    while k < d {
        k += 2;
        g *= (k - 2) as f64 / (k - 1) as f64;
    }
    g / sqrt_pi
}
