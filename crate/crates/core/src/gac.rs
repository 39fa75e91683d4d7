//! Geodesic active contours: the weighted length `sum G(midpoint) |segment|`
//! of a closed polygon in an edge-indicator field, and its descent flows.
//!
//! Under unit weights the descent moves each node by the raw partial
//! derivatives, so dense parts of the polygon move slower than sparse ones.
//! Dividing by the arclength element of each node instead gives the
//! geometric flow `G kappa N - (grad G . N) N + tangential terms`, which does
//! not depend on where the nodes sit.

use std::collections::BTreeMap;

use crate::curve::{cross, norm, sub, ClosedCurve, Point, MIN_EVOLVE_NODES};
use crate::error::{Error, Result};
use crate::grid::{bilinear_gradient, bilinear_sample, gaussian_smooth, gradient, DiffScheme, ScalarField};
use crate::trace::{EvolutionTrace, TraceRow};
use crate::variation::{gradient_from_variation, DiscreteFunctional, InnerProductKind, Layout, MetricWeights};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeIndicatorParams {
    /// Gaussian pre-smoothing width in pixels.
    pub sigma: f64,
    /// Gradient magnitude at which `G` drops to one half.
    pub contrast: f64,
}

impl Default for EdgeIndicatorParams {
    fn default() -> Self {
        Self { sigma: 1.5, contrast: 0.05 }
    }
}

impl EdgeIndicatorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be non-negative, got {}", self.sigma)));
        }
        if !(self.contrast > 0.0 && self.contrast.is_finite()) {
            return Err(Error::InvalidParameter(format!("contrast must be positive, got {}", self.contrast)));
        }
        Ok(())
    }
}

/// `G = 1 / (1 + |grad I_sigma|^2 / contrast^2)` with central differences.
pub fn edge_indicator(image: &ScalarField, params: &EdgeIndicatorParams) -> Result<ScalarField> {
    params.validate()?;
    let smooth = gaussian_smooth(image, params.sigma)?;
    let g = gradient(&smooth, DiffScheme::Central);
    let c2 = params.contrast * params.contrast;
    let values = g
        .u
        .values()
        .iter()
        .zip(g.v.values())
        .map(|(a, b)| 1.0 / (1.0 + (a * a + b * b) / c2))
        .collect();
    ScalarField::new(*image.spec(), values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GacState {
    pub curve: ClosedCurve,
    pub g_field: ScalarField,
}

impl GacState {
    pub fn new(curve: ClosedCurve, g_field: ScalarField) -> Result<Self> {
        if let Some(k) = g_field.values().iter().position(|g| !(*g > 0.0 && *g <= 1.0)) {
            return Err(Error::InvalidParameter(format!(
                "edge indicator must lie in (0, 1], got {} at pixel {k}",
                g_field.values()[k]
            )));
        }
        Ok(Self { curve, g_field })
    }
}

fn midpoint(a: Point, b: Point) -> Point {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

fn energy_of(points: &[Point], g: &ScalarField) -> f64 {
    let n = points.len();
    (0..n)
        .map(|i| {
            let (a, b) = (points[i], points[(i + 1) % n]);
            let m = midpoint(a, b);
            bilinear_sample(g, m[0], m[1]) * norm(sub(b, a))
        })
        .sum()
}

fn raw_variation_of(points: &[Point], g: &ScalarField) -> Vec<Point> {
    let n = points.len();
    let mut raw = vec![[0.0; 2]; n];
    for i in 0..n {
        let j = (i + 1) % n;
        let d = sub(points[j], points[i]);
        let len = norm(d);
        let m = midpoint(points[i], points[j]);
        let gm = bilinear_sample(g, m[0], m[1]);
        let grad = bilinear_gradient(g, m[0], m[1]);
        for c in 0..2 {
            let along = if len > 0.0 { gm * d[c] / len } else { 0.0 };
            let shift = 0.5 * grad[c] * len;
            raw[i][c] += shift - along;
            raw[j][c] += shift + along;
        }
    }
    raw
}

/// `sum_segments G(midpoint) |P_{i+1} - P_i|` with bilinear `G`.
pub fn gac_energy(state: &GacState) -> f64 {
    energy_of(state.curve.points(), &state.g_field)
}

/// Exact partial derivatives of [`gac_energy`] with respect to every node.
pub fn gac_raw_variation(state: &GacState) -> Vec<Point> {
    raw_variation_of(state.curve.points(), &state.g_field)
}

/// Descent velocity: minus the gradient under `kind`, optionally reduced to
/// its component along the node normals.
pub fn gac_velocity(state: &GacState, kind: &InnerProductKind, project_normal: bool) -> Result<Vec<Point>> {
    let weights = match kind {
        InnerProductKind::ParameterL2 | InnerProductKind::GeometricCurve => {
            crate::variation::metric_weights(kind, crate::variation::MeasureInput::Curve(&state.curve))?
        }
        other => {
            return Err(Error::InvalidParameter(format!("{} does not apply to curves", other.name())));
        }
    };
    let raw: Vec<f64> = gac_raw_variation(state).into_iter().flatten().collect();
    let grad = gradient_from_variation(&raw, &weights)?;
    let mut v: Vec<Point> = grad.chunks(2).map(|g| [-g[0], -g[1]]).collect();
    if project_normal {
        let geo = state.curve.geometry()?;
        for (vi, n) in v.iter_mut().zip(&geo.normals) {
            let s = vi[0] * n[0] + vi[1] * n[1];
            *vi = [s * n[0], s * n[1]];
        }
    }
    Ok(v)
}

/// Normal component of each velocity along the inward node normals.
pub fn normal_speeds(curve: &ClosedCurve, velocity: &[Point]) -> Result<Vec<f64>> {
    let geo = curve.geometry()?;
    Ok(velocity.iter().zip(&geo.normals).map(|(v, n)| v[0] * n[0] + v[1] * n[1]).collect())
}

/// The continuum geometric velocity `G kappa N - (grad G . N) N` evaluated
/// with node curvature and bilinear `G`. A cross-check only: the flows use the
/// discrete gradient.
pub fn continuum_velocity(state: &GacState) -> Result<Vec<Point>> {
    let geo = state.curve.geometry()?;
    Ok(state
        .curve
        .points()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let g = bilinear_sample(&state.g_field, p[0], p[1]);
            let dg = bilinear_gradient(&state.g_field, p[0], p[1]);
            let nrm = geo.normals[i];
            let s = g * geo.curvature[i] - (dg[0] * nrm[0] + dg[1] * nrm[1]);
            [s * nrm[0], s * nrm[1]]
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GacEvolveParams {
    pub dt: f64,
    pub steps: usize,
    pub kind: InnerProductKind,
    pub project_normal: bool,
    /// Resample to the initial mean spacing every this many steps; 0 disables.
    pub resample_every: usize,
    /// Keep a snapshot every this many steps; 0 keeps only the first and last.
    pub snapshot_every: usize,
}

impl Default for GacEvolveParams {
    fn default() -> Self {
        Self {
            dt: 0.5,
            steps: 1000,
            kind: InnerProductKind::GeometricCurve,
            project_normal: false,
            resample_every: 20,
            snapshot_every: 0,
        }
    }
}

impl GacEvolveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if self.steps == 0 {
            return Err(Error::InvalidParameter("steps must be at least 1".into()));
        }
        if !matches!(self.kind, InnerProductKind::ParameterL2 | InnerProductKind::GeometricCurve) {
            return Err(Error::InvalidParameter(format!("{} does not apply to curves", self.kind.name())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GacResult {
    pub curve: ClosedCurve,
    pub trace: EvolutionTrace,
    pub snapshots: Vec<(usize, ClosedCurve)>,
    /// Steps actually taken.
    pub steps: usize,
    /// Step at which the curve became too short to carry the minimum node
    /// count at the initial spacing.
    pub collapsed_at: Option<usize>,
    /// The flow stopped because no step size decreased the energy.
    pub stationary: bool,
}

fn max_speed(v: &[Point]) -> f64 {
    v.iter().fold(0.0, |m, p| m.max(p[0].hypot(p[1])))
}

fn trace_row(step: usize, time: f64, energy: f64, vmax: f64, curve: &ClosedCurve, dt: f64) -> TraceRow {
    let mut extras = BTreeMap::new();
    extras.insert("curve_length".to_string(), curve.length());
    extras.insert("nodes".to_string(), curve.len() as f64);
    extras.insert("dt".to_string(), dt);
    TraceRow { step, time, energy, max_velocity: vmax, exempt: false, extras }
}

/// Explicit Euler descent, halving the step until the energy does not
/// increase. Each step starts from `min(dt, 0.4 min_segment / max_speed,
/// 0.25 min_weight min_segment / max G)`; the last bound keeps the explicit
/// scheme stable on the node-to-node oscillation, whose growth rate is about
/// `4 G / (weight * segment)`.
pub fn evolve_gac(state: &GacState, params: &GacEvolveParams) -> Result<GacResult> {
    params.validate()?;
    if state.curve.len() < MIN_EVOLVE_NODES {
        return Err(Error::InvalidCurve(format!("evolution needs at least {MIN_EVOLVE_NODES} nodes")));
    }
    let spacing = state.curve.length() / state.curve.len() as f64;
    let mut current = state.clone();
    let mut energy = gac_energy(&current);
    let mut trace = EvolutionTrace::new();
    trace.push(trace_row(0, 0.0, energy, 0.0, &current.curve, 0.0))?;
    let mut snapshots = vec![(0, current.curve.clone())];
    let mut time = 0.0;
    let mut steps = 0;
    let mut collapsed_at = None;
    let mut stationary = false;

    for step in 1..=params.steps {
        let v = gac_velocity(&current, &params.kind, params.project_normal)?;
        let vmax = max_speed(&v);
        if !vmax.is_finite() {
            return Err(Error::Numerical(format!("non-finite velocity at step {step}")));
        }
        if vmax == 0.0 {
            stationary = true;
            break;
        }
        let min_seg = current.curve.segment_lengths().into_iter().fold(f64::INFINITY, f64::min);
        let min_weight = match params.kind {
            InnerProductKind::ParameterL2 => 1.0,
            _ => current.curve.geometry()?.min_weight(),
        };
        let diffusive = 0.25 * min_weight * min_seg / current.g_field.max();
        let mut dt = params.dt.min(0.4 * min_seg / vmax).min(diffusive);
        let mut accepted = None;
        while dt > 1e-12 {
            if let Ok(next) = current.curve.advanced(&v, dt) {
                let e = energy_of(next.points(), &current.g_field);
                if e.is_finite() && e <= energy {
                    accepted = Some((next, e));
                    break;
                }
            }
            dt *= 0.5;
        }
        let Some((next, e)) = accepted else {
            stationary = true;
            break;
        };
        current.curve = next;
        energy = e;
        time += dt;
        steps = step;

        let count = (current.curve.length() / spacing).round() as usize;
        if count < MIN_EVOLVE_NODES {
            collapsed_at = Some(step);
            trace.push(trace_row(step, time, energy, vmax, &current.curve, dt))?;
            break;
        }
        let mut exempt = false;
        if params.resample_every > 0 && step % params.resample_every == 0 {
            current.curve = current.curve.resample_to_count(count)?;
            energy = gac_energy(&current);
            exempt = true;
        }
        trace.push(trace_row(step, time, energy, vmax, &current.curve, dt).exempt(exempt))?;
        if params.snapshot_every > 0 && step % params.snapshot_every == 0 {
            snapshots.push((step, current.curve.clone()));
        }
    }
    if snapshots.last().map(|s| s.0) != Some(steps) {
        snapshots.push((steps, current.curve.clone()));
    }
    Ok(GacResult { curve: current.curve, trace, snapshots, steps, collapsed_at, stationary })
}

/// [`gac_energy`] as a function of flattened node coordinates.
#[derive(Debug, Clone)]
pub struct GacFunctional {
    pub g_field: ScalarField,
}

fn unflatten(state: &[f64]) -> Vec<Point> {
    state.chunks(2).map(|c| [c[0], c[1]]).collect()
}

impl DiscreteFunctional for GacFunctional {
    fn evaluate(&self, state: &[f64]) -> f64 {
        energy_of(&unflatten(state), &self.g_field)
    }

    fn raw_variation(&self, state: &[f64]) -> Vec<f64> {
        raw_variation_of(&unflatten(state), &self.g_field).into_iter().flatten().collect()
    }

    fn layout(&self, state: &[f64]) -> Layout {
        Layout::Curve { nodes: state.len() / 2 }
    }

    /// Weights are taken from the node order as given, without reorienting.
    fn metric_weights(&self, state: &[f64], kind: &InnerProductKind) -> Result<MetricWeights> {
        let p = unflatten(state);
        let n = p.len();
        match kind {
            InnerProductKind::ParameterL2 => MetricWeights::new(vec![1.0; n], 2, kind.name()),
            InnerProductKind::GeometricCurve => {
                let seg: Vec<f64> = (0..n).map(|i| norm(sub(p[(i + 1) % n], p[i]))).collect();
                let w = (0..n).map(|i| 0.5 * (seg[i] + seg[(i + n - 1) % n])).collect();
                MetricWeights::new(w, 2, kind.name())
            }
            other => Err(Error::InvalidParameter(format!("{} does not apply to curves", other.name()))),
        }
    }
}

/// Largest distance from any node of `a` to the polygon `b`, and vice versa.
pub fn hausdorff_distance(a: &ClosedCurve, b: &ClosedCurve) -> f64 {
    fn one_way(a: &ClosedCurve, b: &ClosedCurve) -> f64 {
        let q = b.points();
        let n = q.len();
        a.points()
            .iter()
            .map(|p| {
                (0..n)
                    .map(|i| {
                        let (s, e) = (q[i], q[(i + 1) % n]);
                        let d = sub(e, s);
                        let t = (((p[0] - s[0]) * d[0] + (p[1] - s[1]) * d[1]) / (d[0] * d[0] + d[1] * d[1])).clamp(0.0, 1.0);
                        norm(sub(*p, [s[0] + t * d[0], s[1] + t * d[1]]))
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }
    one_way(a, b).max(one_way(b, a))
}

/// Signed turning: positive when every corner turns left.
pub fn is_convex(curve: &ClosedCurve) -> bool {
    let p = curve.points();
    let n = p.len();
    (0..n).all(|i| cross(sub(p[i], p[(i + n - 1) % n]), sub(p[(i + 1) % n], p[i])) >= 0.0)
}
