//! Inner products with geometric measures, and the machinery that turns a
//! first variation into a gradient and certifies it numerically.
//!
//! A discrete energy `E` has an exact raw variation `dE/du_i` (a covector).
//! The gradient with respect to an inner product with per-DOF weights `w_i`
//! is the vector `g` satisfying `sum_i g_i eta_i w_i = dE[eta]` for every
//! direction `eta`, i.e. `g_i = (dE/du_i) / w_i`. Under unit weights this is the
//! plain parameter-space descent; under the arclength, area, or level-set
//! curve measure it is the geometric descent.
//!
//! Closed curves and replicated-boundary grids carry no boundary terms, so the
//! integration by parts behind the raw variation is exact here.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chanvese::heaviside_delta;
use crate::curve::ClosedCurve;
use crate::error::{Error, ProbeSide, Result};
use crate::grid::{one_sided_max_norm, GridSpec, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnerProductKind {
    /// Unit weight per degree of freedom.
    ParameterL2,
    /// Arclength element per curve node.
    GeometricCurve,
    /// Area element `sqrt(det G) dx dy` per pixel.
    GeometricSurface,
    /// Curve measure `delta(phi) |grad phi| dx dy` per pixel, with the same
    /// regularized delta as the level-set energy and an explicit additive guard.
    LevelSetCurveMeasure { eps_delta: f64, eps_grad: f64 },
}

impl InnerProductKind {
    pub fn name(&self) -> &'static str {
        match self {
            InnerProductKind::ParameterL2 => "parameter_l2",
            InnerProductKind::GeometricCurve => "geometric_curve",
            InnerProductKind::GeometricSurface => "geometric_surface",
            InnerProductKind::LevelSetCurveMeasure { .. } => "level_set_curve_measure",
        }
    }
}

/// What a measure is computed from.
#[derive(Debug, Clone, Copy)]
pub enum MeasureInput<'a> {
    Curve(&'a ClosedCurve),
    Grid(&'a GridSpec),
    /// Per-pixel metric determinant.
    Surface(&'a ScalarField),
    /// Level-set function.
    LevelSet(&'a ScalarField),
}

/// Positive integration weights, one per node or pixel. Curve nodes carry two
/// coordinates sharing a weight (`components == 2`).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricWeights {
    weights: Vec<f64>,
    components: usize,
    measure_name: &'static str,
}

impl MetricWeights {
    pub fn new(weights: Vec<f64>, components: usize, measure_name: &'static str) -> Result<Self> {
        if components == 0 {
            return Err(Error::InvalidParameter("components must be positive".into()));
        }
        if let Some(k) = weights.iter().position(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::Degenerate(format!(
                "{measure_name} weight {k} is not positive ({})",
                weights[k]
            )));
        }
        Ok(Self { weights, components, measure_name })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn measure_name(&self) -> &'static str {
        self.measure_name
    }

    /// Number of degrees of freedom these weights apply to.
    pub fn dof(&self) -> usize {
        self.weights.len() * self.components
    }

    #[inline]
    pub fn weight_of_dof(&self, k: usize) -> f64 {
        self.weights[k / self.components]
    }
}

pub fn metric_weights(kind: &InnerProductKind, input: MeasureInput<'_>) -> Result<MetricWeights> {
    let name = kind.name();
    match (kind, input) {
        (InnerProductKind::ParameterL2, MeasureInput::Curve(c)) => MetricWeights::new(vec![1.0; c.len()], 2, name),
        (InnerProductKind::ParameterL2, MeasureInput::Grid(spec)) => MetricWeights::new(vec![1.0; spec.len()], 1, name),
        (InnerProductKind::ParameterL2, MeasureInput::Surface(f) | MeasureInput::LevelSet(f)) => {
            MetricWeights::new(vec![1.0; f.spec().len()], 1, name)
        }
        (InnerProductKind::GeometricCurve, MeasureInput::Curve(c)) => {
            MetricWeights::new(c.geometry()?.node_weights, 2, name)
        }
        (InnerProductKind::GeometricSurface, MeasureInput::Surface(det_g)) => {
            let area = det_g.spec().cell_area();
            let w = det_g.values().iter().map(|g| if *g > 0.0 { g.sqrt() * area } else { *g }).collect();
            MetricWeights::new(w, 1, name)
        }
        (InnerProductKind::LevelSetCurveMeasure { eps_delta, eps_grad }, MeasureInput::LevelSet(phi)) => {
            if !(*eps_delta > 0.0 && *eps_grad > 0.0) {
                return Err(Error::InvalidParameter("level-set measure needs eps_delta > 0 and eps_grad > 0".into()));
            }
            let area = phi.spec().cell_area();
            let grad = one_sided_max_norm(phi);
            let w = phi
                .values()
                .iter()
                .zip(grad.values())
                .map(|(p, g)| (heaviside_delta(*p, *eps_delta).1 * g + eps_grad) * area)
                .collect();
            MetricWeights::new(w, 1, name)
        }
        (kind, input) => Err(Error::InvalidParameter(format!(
            "inner product {} does not apply to {}",
            kind.name(),
            match input {
                MeasureInput::Curve(_) => "a curve",
                MeasureInput::Grid(_) => "a bare grid",
                MeasureInput::Surface(_) => "a metric determinant",
                MeasureInput::LevelSet(_) => "a level-set function",
            }
        ))),
    }
}

/// Gradient of the energy with respect to the weighted inner product:
/// componentwise `raw / w`.
pub fn gradient_from_variation(raw: &[f64], w: &MetricWeights) -> Result<Vec<f64>> {
    if raw.len() != w.dof() {
        return Err(Error::LengthMismatch { expected: w.dof(), got: raw.len() });
    }
    Ok(raw.iter().enumerate().map(|(k, r)| r / w.weight_of_dof(k)).collect())
}

/// Shape of a state vector, used to draw smooth probe directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Layout {
    /// `[x0, y0, x1, y1, ...]` for a closed curve.
    Curve { nodes: usize },
    /// Row-major pixel values.
    Grid(GridSpec),
}

impl Layout {
    pub fn dof(&self) -> usize {
        match self {
            Layout::Curve { nodes } => 2 * nodes,
            Layout::Grid(spec) => spec.len(),
        }
    }
}

/// A discrete energy together with its exact first variation.
pub trait DiscreteFunctional {
    fn evaluate(&self, state: &[f64]) -> f64;

    /// Partial derivatives of [`evaluate`](Self::evaluate) with respect to
    /// every degree of freedom.
    fn raw_variation(&self, state: &[f64]) -> Vec<f64>;

    fn layout(&self, state: &[f64]) -> Layout;

    /// Integration weights of `kind` at `state`.
    fn metric_weights(&self, state: &[f64], kind: &InnerProductKind) -> Result<MetricWeights>;
}

/// Central difference quotient of `f` at `state` along `direction`.
pub fn fd_directional_derivative<F: DiscreteFunctional + ?Sized>(
    f: &F,
    state: &[f64],
    direction: &[f64],
    step: f64,
) -> Result<f64> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {step}")));
    }
    if direction.len() != state.len() {
        return Err(Error::LengthMismatch { expected: state.len(), got: direction.len() });
    }
    let shifted = |sign: f64| -> Vec<f64> { state.iter().zip(direction).map(|(s, d)| s + sign * step * d).collect() };
    let plus = f.evaluate(&shifted(1.0));
    if !plus.is_finite() {
        return Err(Error::NonFiniteProbe(ProbeSide::Plus));
    }
    let minus = f.evaluate(&shifted(-1.0));
    if !minus.is_finite() {
        return Err(Error::NonFiniteProbe(ProbeSide::Minus));
    }
    Ok((plus - minus) / (2.0 * step))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub trials: usize,
    pub seed: u64,
    pub tolerance: f64,
    /// FD step as a fraction of the state's largest absolute entry.
    pub step_scale: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { trials: 20, seed: 0, tolerance: 1e-4, step_scale: 1e-5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeRow {
    pub trial: usize,
    /// Weighted inner product of the gradient with the direction.
    pub lhs: f64,
    /// Finite-difference directional derivative.
    pub rhs: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub measure: &'static str,
    pub rows: Vec<ProbeRow>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradientReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("trial,lhs,rhs,rel_error\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{:e},{:e},{:e}", r.trial, r.lhs, r.rhs, r.rel_error);
        }
        out
    }
}

fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Compares `<gradient, direction>_w` against the FD directional derivative
/// for a single direction.
pub fn probe_direction<F: DiscreteFunctional + ?Sized>(
    f: &F,
    weights: &MetricWeights,
    state: &[f64],
    direction: &[f64],
    step: f64,
    trial: usize,
) -> Result<ProbeRow> {
    let grad = gradient_from_variation(&f.raw_variation(state), weights)?;
    let lhs: f64 = grad
        .iter()
        .zip(direction)
        .enumerate()
        .map(|(k, (g, d))| g * d * weights.weight_of_dof(k))
        .sum();
    if !lhs.is_finite() {
        return Err(Error::Numerical(format!("non-finite gradient pairing in trial {trial}")));
    }
    let rhs = fd_directional_derivative(f, state, direction, step)?;
    Ok(ProbeRow { trial, lhs, rhs, rel_error: relative_error(lhs, rhs) })
}

/// Draws a seeded low-frequency direction for `layout`.
pub fn smooth_direction(layout: &Layout, rng: &mut impl Rng) -> Vec<f64> {
    match *layout {
        Layout::Curve { nodes } => {
            let mut coeffs = [[0.0f64; 8]; 2];
            for c in coeffs.iter_mut() {
                for v in c.iter_mut() {
                    *v = rng.random_range(-1.0..1.0);
                }
            }
            (0..nodes)
                .flat_map(|i| {
                    let t = 2.0 * PI * i as f64 / nodes as f64;
                    let eval = |c: &[f64; 8]| -> f64 {
                        (0..4).map(|k| c[2 * k] * (k as f64 * t).cos() + c[2 * k + 1] * (k as f64 * t).sin()).sum()
                    };
                    [eval(&coeffs[0]), eval(&coeffs[1])]
                })
                .collect()
        }
        Layout::Grid(spec) => {
            let terms: Vec<(f64, f64, f64, f64)> = (0..4)
                .map(|_| {
                    (
                        rng.random_range(-1.0..1.0),
                        rng.random_range(0..=2) as f64,
                        rng.random_range(0..=2) as f64,
                        rng.random_range(0.0..2.0 * PI),
                    )
                })
                .collect();
            let mut out = Vec::with_capacity(spec.len());
            for j in 0..spec.ny {
                for i in 0..spec.nx {
                    let (u, v) = (i as f64 / spec.nx as f64, j as f64 / spec.ny as f64);
                    out.push(terms.iter().map(|(a, kx, ky, ph)| a * (2.0 * PI * (kx * u + ky * v) + ph).cos()).sum());
                }
            }
            out
        }
    }
}

/// Certifies the duality identity `<grad E, eta>_kind = dE[eta]` on `trials`
/// seeded smooth directions.
pub fn check_gradient<F: DiscreteFunctional + ?Sized>(
    f: &F,
    kind: &InnerProductKind,
    state: &[f64],
    config: &GradCheckConfig,
) -> Result<GradientReport> {
    if config.trials == 0 {
        return Err(Error::InvalidParameter("need at least one trial".into()));
    }
    if let Some(k) = state.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(k));
    }
    let weights = f.metric_weights(state, kind)?;
    let layout = f.layout(state);
    let scale = state.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let step = config.step_scale * if scale > 0.0 { scale } else { 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut rows = Vec::with_capacity(config.trials);
    for trial in 0..config.trials {
        let dir = smooth_direction(&layout, &mut rng);
        rows.push(probe_direction(f, &weights, state, &dir, step, trial)?);
    }
    let max_rel_error = rows.iter().map(|r| r.rel_error).fold(0.0, f64::max);
    Ok(GradientReport {
        measure: weights.measure_name(),
        rows,
        max_rel_error,
        tolerance: config.tolerance,
        passed: max_rel_error <= config.tolerance,
    })
}
