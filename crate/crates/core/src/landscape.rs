//! Test-function zoo: differentiable objectives with closed-form gradients,
//! Hessians, and annotated critical components.
//!
//! Each objective carries its critical set as a list of
//! [`CriticalComponent`]s — isolated points or circles — with an exact
//! distance function and a declared Hessian eigenvalue signature at the
//! default margins `ε⁻ = ε⁺ = 0.5`. Strict-saddle components have their
//! negative eigenvalues bounded away from zero and their positive
//! eigenvalues bounded below, uniformly along the component; the signature
//! records how many eigenvalues fall below `−ε⁻`, inside `(−ε⁻, ε⁺)`, and
//! above `ε⁺`.
//!
//! The quartic objectives are `L`-smooth on every compact box but not
//! globally (their gradients grow cubically); all experiments start inside
//! `[−3, 3]^d` where iterates stay bounded in practice, and the smoothness
//! probe reports the box it certified.

use nalgebra::DMatrix;
use serde::Serialize;
use std::sync::Arc;
use thiserror::Error;

use crate::linalg::norm;

/// Default classification margins: eigenvalues below `−0.5` count as
/// negative, above `0.5` as positive, anything between as flat.
pub const DEFAULT_MARGIN: f64 = 0.5;

/// Gradient-norm threshold below which a point is accepted as critical.
pub const CRITICAL_GRAD_TOL: f64 = 1e-6;

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LandscapeError {
    #[error("matrix is not symmetric: max |A - Aᵀ| entry is {max_asymmetry}")]
    NonSymmetric { max_asymmetry: f64 },
    #[error("matrix data of length {len} is not a square d×d layout")]
    NotSquare { len: usize },
    #[error("point is not critical: ‖∇f‖ = {grad_norm} ≥ {CRITICAL_GRAD_TOL}")]
    NotCritical { grad_norm: f64 },
}

/// What kind of critical component an annotation describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    IsolatedMinimum,
    IsolatedSaddle,
    SaddleCircle,
    MinimumCircle,
}

impl ComponentKind {
    /// True for components made of strict saddle points.
    pub fn is_saddle(self) -> bool {
        matches!(self, ComponentKind::IsolatedSaddle | ComponentKind::SaddleCircle)
    }

    /// True for components trials are expected to settle on.
    pub fn is_minimum(self) -> bool {
        matches!(self, ComponentKind::IsolatedMinimum | ComponentKind::MinimumCircle)
    }
}

/// Exact geometry of a critical component, with a closed-form distance.
#[derive(Debug, Clone, PartialEq)]
pub enum ComponentGeometry {
    /// A single point.
    Point(Vec<f64>),
    /// The circle `x² + y² = radius²` in the `z = 0` plane of ℝ³.
    CircleXy { radius: f64 },
}

impl ComponentGeometry {
    /// Euclidean distance from `x` to the component (exact closed form).
    pub fn distance(&self, x: &[f64]) -> f64 {
        match self {
            ComponentGeometry::Point(p) => crate::linalg::dist(x, p),
            ComponentGeometry::CircleXy { radius } => {
                let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
                ((r - radius) * (r - radius) + x[2] * x[2]).sqrt()
            }
        }
    }

    /// Dimension of the component as a manifold.
    pub fn manifold_dim(&self) -> usize {
        match self {
            ComponentGeometry::Point(_) => 0,
            ComponentGeometry::CircleXy { .. } => 1,
        }
    }

    /// `k` points spread over the component, for spectral spot checks.
    pub fn sample(&self, k: usize) -> Vec<Vec<f64>> {
        match self {
            ComponentGeometry::Point(p) => vec![p.clone()],
            ComponentGeometry::CircleXy { radius } => (0..k)
                .map(|i| {
                    let theta = std::f64::consts::TAU * i as f64 / k as f64;
                    vec![radius * theta.cos(), radius * theta.sin(), 0.0]
                })
                .collect(),
        }
    }
}

/// An annotated connected component of the critical set.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalComponent {
    /// Short identifier used in reports and CSV column names.
    pub label: String,
    pub kind: ComponentKind,
    pub geometry: ComponentGeometry,
    /// One point of the component.
    pub representative: Vec<f64>,
    /// Declared eigenvalue counts `(below −ε⁻, inside (−ε⁻, ε⁺), above ε⁺)`
    /// of the Hessian anywhere on the component.
    pub hessian_signature: (usize, usize, usize),
    pub eps_minus: f64,
    pub eps_plus: f64,
}

impl CriticalComponent {
    pub fn distance(&self, x: &[f64]) -> f64 {
        self.geometry.distance(x)
    }
}

/// A differentiable objective with closed-form derivatives and annotated
/// critical components. Implementations are immutable value objects, safe
/// for concurrent shared use.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;
    fn name(&self) -> &str;
    fn eval(&self, x: &[f64]) -> f64;
    fn grad_into(&self, x: &[f64], out: &mut [f64]);
    fn hess(&self, x: &[f64]) -> DMatrix<f64>;
    fn critical_components(&self) -> &[CriticalComponent];

    /// The infimum `f*` when finite and known; `None` for objectives that
    /// are unbounded below (indefinite quadratics).
    fn lower_bound(&self) -> Option<f64>;

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.grad_into(x, &mut g);
        g
    }

    fn grad_norm(&self, x: &[f64]) -> f64 {
        norm(&self.grad(x))
    }
}

/// Shared handle to an objective.
pub type ObjectiveHandle = Arc<dyn Objective>;

// ---------------------------------------------------------------------------
// double well
// ---------------------------------------------------------------------------

/// `f(x, y) = x⁴/4 − x²/2 + y²/2`.
///
/// Two minima at `(±1, 0)` with `f = −1/4`, separated by a strict saddle at
/// the origin. The y-axis is the stable manifold of the saddle: the
/// noiseless dynamics started on it never leave it.
#[derive(Debug)]
pub struct DoubleWell2d {
    components: Vec<CriticalComponent>,
}

pub fn double_well_2d() -> DoubleWell2d {
    let e = DEFAULT_MARGIN;
    let point = |label: &str, kind, at: Vec<f64>, sig| CriticalComponent {
        label: label.to_string(),
        kind,
        geometry: ComponentGeometry::Point(at.clone()),
        representative: at,
        hessian_signature: sig,
        eps_minus: e,
        eps_plus: e,
    };
    DoubleWell2d {
        components: vec![
            point("origin", ComponentKind::IsolatedSaddle, vec![0.0, 0.0], (1, 0, 1)),
            point("min_pos", ComponentKind::IsolatedMinimum, vec![1.0, 0.0], (0, 0, 2)),
            point("min_neg", ComponentKind::IsolatedMinimum, vec![-1.0, 0.0], (0, 0, 2)),
        ],
    }
}

impl Objective for DoubleWell2d {
    fn dim(&self) -> usize {
        2
    }

    fn name(&self) -> &str {
        "double_well_2d"
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        0.25 * a.powi(4) - 0.5 * a * a + 0.5 * b * b
    }

    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x[0] * x[0] * x[0] - x[0];
        out[1] = x[1];
    }

    fn hess(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[3.0 * x[0] * x[0] - 1.0, 0.0, 0.0, 1.0])
    }

    fn critical_components(&self) -> &[CriticalComponent] {
        &self.components
    }

    fn lower_bound(&self) -> Option<f64> {
        Some(-0.25)
    }
}

// ---------------------------------------------------------------------------
// saddle circle
// ---------------------------------------------------------------------------

/// `f(x, y, z) = z²/2 + h(x² + y²)` with `h(u) = (u−1)⁴/4 − (u−1)²/2`.
///
/// The critical set has three connected components: the unit circle in the
/// `z = 0` plane — a strict saddle manifold with radial eigenvalue −4, one
/// flat tangential direction, and `z` eigenvalue 1 — the minimum circle of
/// radius √2, and the origin. The origin is a degenerate minimum: `f` grows
/// like `r⁴` in the radial plane, so its Hessian signature is `(0, 2, 1)`.
#[derive(Debug)]
pub struct SaddleCircle3d {
    components: Vec<CriticalComponent>,
}

pub fn saddle_circle_3d() -> SaddleCircle3d {
    let e = DEFAULT_MARGIN;
    SaddleCircle3d {
        components: vec![
            CriticalComponent {
                label: "saddle_circle".to_string(),
                kind: ComponentKind::SaddleCircle,
                geometry: ComponentGeometry::CircleXy { radius: 1.0 },
                representative: vec![1.0, 0.0, 0.0],
                hessian_signature: (1, 1, 1),
                eps_minus: e,
                eps_plus: e,
            },
            CriticalComponent {
                label: "minimum_circle".to_string(),
                kind: ComponentKind::MinimumCircle,
                geometry: ComponentGeometry::CircleXy {
                    radius: std::f64::consts::SQRT_2,
                },
                representative: vec![std::f64::consts::SQRT_2, 0.0, 0.0],
                hessian_signature: (0, 1, 2),
                eps_minus: e,
                eps_plus: e,
            },
            CriticalComponent {
                label: "origin".to_string(),
                kind: ComponentKind::IsolatedMinimum,
                geometry: ComponentGeometry::Point(vec![0.0, 0.0, 0.0]),
                representative: vec![0.0, 0.0, 0.0],
                hessian_signature: (0, 2, 1),
                eps_minus: e,
                eps_plus: e,
            },
        ],
    }
}

impl SaddleCircle3d {
    #[inline]
    fn h_prime(u: f64) -> f64 {
        let t = u - 1.0;
        t * t * t - t
    }

    #[inline]
    fn h_second(u: f64) -> f64 {
        let t = u - 1.0;
        3.0 * t * t - 1.0
    }
}

impl Objective for SaddleCircle3d {
    fn dim(&self) -> usize {
        3
    }

    fn name(&self) -> &str {
        "saddle_circle_3d"
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let u = x[0] * x[0] + x[1] * x[1];
        let t = u - 1.0;
        0.5 * x[2] * x[2] + 0.25 * t.powi(4) - 0.5 * t * t
    }

    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        let u = x[0] * x[0] + x[1] * x[1];
        let hp = Self::h_prime(u);
        out[0] = 2.0 * x[0] * hp;
        out[1] = 2.0 * x[1] * hp;
        out[2] = x[2];
    }

    fn hess(&self, x: &[f64]) -> DMatrix<f64> {
        let u = x[0] * x[0] + x[1] * x[1];
        let hp = Self::h_prime(u);
        let hpp = Self::h_second(u);
        let hxx = 2.0 * hp + 4.0 * x[0] * x[0] * hpp;
        let hyy = 2.0 * hp + 4.0 * x[1] * x[1] * hpp;
        let hxy = 4.0 * x[0] * x[1] * hpp;
        DMatrix::from_row_slice(3, 3, &[hxx, hxy, 0.0, hxy, hyy, 0.0, 0.0, 0.0, 1.0])
    }

    fn critical_components(&self) -> &[CriticalComponent] {
        &self.components
    }

    fn lower_bound(&self) -> Option<f64> {
        Some(-0.25)
    }
}

// ---------------------------------------------------------------------------
// quadratic
// ---------------------------------------------------------------------------

/// `f(x) = xᵀAx / 2` for symmetric `A`; `∇f = Ax`, `∇²f = A`.
///
/// The analytic control case for local escape dynamics. When `A` has a
/// negative eigenvalue the objective is unbounded below, so second-moment
/// checks that need `f*` refuse it.
#[derive(Debug)]
pub struct Quadratic {
    a: DMatrix<f64>,
    components: Vec<CriticalComponent>,
    lower_bound: Option<f64>,
}

/// Builds the quadratic objective, rejecting matrices that deviate from
/// symmetry by more than `1e-12` in any entry.
pub fn quadratic(a: DMatrix<f64>) -> Result<Quadratic, LandscapeError> {
    assert_eq!(a.nrows(), a.ncols(), "quadratic expects a square matrix");
    let mut max_asym = 0.0f64;
    for i in 0..a.nrows() {
        for j in 0..i {
            max_asym = max_asym.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    if max_asym > SYMMETRY_TOL {
        return Err(LandscapeError::NonSymmetric {
            max_asymmetry: max_asym,
        });
    }

    let d = a.nrows();
    let eigs = {
        let mut e: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        e.sort_by(f64::total_cmp);
        e
    };
    let has_negative = eigs[0] < -1e-10;
    let all_positive = eigs[0] > 1e-10;
    let kind = if has_negative {
        ComponentKind::IsolatedSaddle
    } else {
        // Positive semidefinite: the origin is a (possibly weak) minimum.
        ComponentKind::IsolatedMinimum
    };
    let signature = signature_of(&eigs, DEFAULT_MARGIN, DEFAULT_MARGIN);
    let origin = vec![0.0; d];
    let components = vec![CriticalComponent {
        label: "origin".to_string(),
        kind,
        geometry: ComponentGeometry::Point(origin.clone()),
        representative: origin,
        hessian_signature: signature,
        eps_minus: DEFAULT_MARGIN,
        eps_plus: DEFAULT_MARGIN,
    }];
    let lower_bound = if has_negative { None } else { Some(0.0) };
    let _ = all_positive;
    Ok(Quadratic {
        a,
        components,
        lower_bound,
    })
}

/// Convenience constructor from a row-major flat buffer.
pub fn quadratic_from_rows(data: &[f64]) -> Result<Quadratic, LandscapeError> {
    let d = (data.len() as f64).sqrt().round() as usize;
    if d * d != data.len() || d == 0 {
        return Err(LandscapeError::NotSquare { len: data.len() });
    }
    quadratic(DMatrix::from_row_slice(d, d, data))
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn name(&self) -> &str {
        "quadratic"
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim() {
            let mut row = 0.0;
            for j in 0..self.dim() {
                row += self.a[(i, j)] * x[j];
            }
            acc += x[i] * row;
        }
        0.5 * acc
    }

    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.dim() {
            let mut row = 0.0;
            for j in 0..self.dim() {
                row += self.a[(i, j)] * x[j];
            }
            out[i] = row;
        }
    }

    fn hess(&self, _x: &[f64]) -> DMatrix<f64> {
        self.a.clone()
    }

    fn critical_components(&self) -> &[CriticalComponent] {
        &self.components
    }

    fn lower_bound(&self) -> Option<f64> {
        self.lower_bound
    }
}

// ---------------------------------------------------------------------------
// classification
// ---------------------------------------------------------------------------

/// Spectral classification of a critical point at margins `(ε⁻, ε⁺)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    /// `λ_min ≤ −ε⁻`; `flat_directions` eigenvalues lie in `(−ε⁻, ε⁺)`.
    StrictSaddle { flat_directions: usize },
    /// Every eigenvalue is `≥ ε⁺`.
    Minimum,
    /// No eigenvalue below `−ε⁻`, but some inside the flat band.
    Degenerate { flat_directions: usize },
}

/// Sorted Hessian eigenvalues of `obj` at `x`.
pub fn hessian_eigenvalues(obj: &dyn Objective, x: &[f64]) -> Vec<f64> {
    let mut e: Vec<f64> = obj
        .hess(x)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    e.sort_by(f64::total_cmp);
    e
}

/// Counts `(below −ε⁻, inside (−ε⁻, ε⁺), at or above ε⁺)`.
pub fn signature_of(eigs: &[f64], eps_minus: f64, eps_plus: f64) -> (usize, usize, usize) {
    let neg = eigs.iter().filter(|&&l| l <= -eps_minus).count();
    let pos = eigs.iter().filter(|&&l| l >= eps_plus).count();
    (neg, eigs.len() - neg - pos, pos)
}

/// The classification a declared signature predicts.
pub fn classification_from_signature(sig: (usize, usize, usize)) -> Classification {
    let (neg, flat, _pos) = sig;
    if neg > 0 {
        Classification::StrictSaddle {
            flat_directions: flat,
        }
    } else if flat == 0 {
        Classification::Minimum
    } else {
        Classification::Degenerate {
            flat_directions: flat,
        }
    }
}

/// Classifies a critical point of `obj` from its Hessian spectrum.
///
/// Fails with [`LandscapeError::NotCritical`] when `‖∇f(x)‖ ≥ 1e-6`.
pub fn classify_critical_point(
    obj: &dyn Objective,
    x: &[f64],
    eps_minus: f64,
    eps_plus: f64,
) -> Result<Classification, LandscapeError> {
    let grad_norm = obj.grad_norm(x);
    if grad_norm >= CRITICAL_GRAD_TOL {
        return Err(LandscapeError::NotCritical { grad_norm });
    }
    let eigs = hessian_eigenvalues(obj, x);
    Ok(classification_from_signature(signature_of(
        &eigs, eps_minus, eps_plus,
    )))
}
