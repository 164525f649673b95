//! A desk-scale numerical laboratory for stochastic gradient methods on
//! non-convex landscapes.
//!
//! The crate provides three stochastic iterations — plain SGD, the stochastic
//! heavy-ball method, and stochastic Nesterov acceleration — in both primal
//! and transformed `(z, v)` coordinates, a zoo of test objectives with
//! closed-form gradients, Hessians, and annotated critical components, noise
//! oracles with known analytic constants, executable probes for the standard
//! smoothness/noise assumptions, and a deterministic Monte Carlo harness that
//! measures saddle escape fractions, gradient convergence, momentum decay
//! rates, and martingale second moments.
//!
//! Trials draw from counter-derived ChaCha streams, so a run is bit-identical
//! whether it executes sequentially or on a rayon pool (the `parallel`
//! feature, on by default).

pub mod assumptions;
pub mod commands;
pub mod config;
pub mod experiment;
pub mod landscape;
pub mod linalg;
pub mod optim;
pub mod oracle;
pub mod rng;
pub mod schedule;
