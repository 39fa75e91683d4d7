//! Images as graph surfaces `(x, y, beta I_1, ..., beta I_k)` and the flow
//! of their Polyakov action.
//!
//! With the induced metric `G = Id + beta^2 sum grad I_i grad I_i^T` the action
//! `sum sqrt(g) [tr G^-1 + beta^2 sum grad I_i^T G^-1 grad I_i] hx hy` equals
//! twice the surface area, and the Beltrami operator
//! `(1/sqrt g) div(sqrt g G^-1 grad I)` is the area gradient taken with respect
//! to the area element `sqrt(g) hx hy`, scaled by `-1/beta^2`.

use crate::error::{Error, Result};
use crate::grid::{conservative_divergence, gradient, DiffScheme, DivergenceScheme, GridSpec, ScalarField, VectorField};
use crate::trace::{EvolutionTrace, TraceRow};
use crate::variation::{metric_weights, DiscreteFunctional, InnerProductKind, Layout, MeasureInput, MetricWeights};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMap {
    channels: Vec<ScalarField>,
    beta: f64,
}

impl EmbeddingMap {
    pub fn new(channels: Vec<ScalarField>, beta: f64) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidParameter("an embedding needs at least one channel".into()));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
        }
        let spec = channels[0].spec();
        if channels.iter().any(|c| c.spec() != spec) {
            return Err(Error::SpecMismatch);
        }
        Ok(Self { channels, beta })
    }

    pub fn channels(&self) -> &[ScalarField] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<ScalarField> {
        self.channels
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn spec(&self) -> &GridSpec {
        self.channels[0].spec()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InducedMetric {
    pub g11: ScalarField,
    pub g12: ScalarField,
    pub g22: ScalarField,
    pub det_g: ScalarField,
}

impl InducedMetric {
    /// The flat metric on `spec`.
    pub fn identity(spec: GridSpec) -> Self {
        Self {
            g11: ScalarField::constant(spec, 1.0),
            g12: ScalarField::constant(spec, 0.0),
            g22: ScalarField::constant(spec, 1.0),
            det_g: ScalarField::constant(spec, 1.0),
        }
    }

    /// Builds a metric from its entries, checking positive definiteness.
    pub fn from_entries(g11: ScalarField, g12: ScalarField, g22: ScalarField) -> Result<Self> {
        let spec = *g11.spec();
        if *g12.spec() != spec || *g22.spec() != spec {
            return Err(Error::SpecMismatch);
        }
        let mut det = Vec::with_capacity(spec.len());
        for k in 0..spec.len() {
            let (a, b, c) = (g11.values()[k], g12.values()[k], g22.values()[k]);
            let d = a * c - b * b;
            if !(a > 0.0 && d > 0.0) {
                return Err(Error::Degenerate(format!("metric is not positive definite at pixel {k}")));
            }
            det.push(d);
        }
        Ok(Self { g11, g12, g22, det_g: ScalarField::from_raw(spec, det) })
    }

    pub fn spec(&self) -> &GridSpec {
        self.g11.spec()
    }

    /// `sqrt(g) G^-1 w` at every pixel.
    fn weighted_inverse(&self, w: &VectorField) -> VectorField {
        let spec = *self.spec();
        let mut u = Vec::with_capacity(spec.len());
        let mut v = Vec::with_capacity(spec.len());
        for k in 0..spec.len() {
            let (a, b, c, d) = (self.g11.values()[k], self.g12.values()[k], self.g22.values()[k], self.det_g.values()[k]);
            let (x, y) = (w.u.values()[k], w.v.values()[k]);
            let s = 1.0 / d.sqrt();
            u.push(s * (c * x - b * y));
            v.push(s * (a * y - b * x));
        }
        VectorField { u: ScalarField::from_raw(spec, u), v: ScalarField::from_raw(spec, v) }
    }
}

/// `g_mn = delta_mn + beta^2 sum_i d_m I_i d_n I_i` from central differences.
pub fn induced_metric(e: &EmbeddingMap) -> InducedMetric {
    let spec = *e.spec();
    let b2 = e.beta * e.beta;
    let mut g11 = vec![1.0; spec.len()];
    let mut g12 = vec![0.0; spec.len()];
    let mut g22 = vec![1.0; spec.len()];
    for ch in &e.channels {
        let g = gradient(ch, DiffScheme::Central);
        for k in 0..spec.len() {
            let (x, y) = (g.u.values()[k], g.v.values()[k]);
            g11[k] += b2 * x * x;
            g12[k] += b2 * x * y;
            g22[k] += b2 * y * y;
        }
    }
    let det = (0..spec.len()).map(|k| g11[k] * g22[k] - g12[k] * g12[k]).collect();
    InducedMetric {
        g11: ScalarField::from_raw(spec, g11),
        g12: ScalarField::from_raw(spec, g12),
        g22: ScalarField::from_raw(spec, g22),
        det_g: ScalarField::from_raw(spec, det),
    }
}

fn check_metric(e: &EmbeddingMap, m: &InducedMetric) -> Result<()> {
    if m.spec() != e.spec() {
        return Err(Error::SpecMismatch);
    }
    if let Some(k) = m.det_g.values().iter().position(|d| !(*d > 0.0)) {
        return Err(Error::Degenerate(format!("metric determinant {} at pixel {k}", m.det_g.values()[k])));
    }
    Ok(())
}

fn action_of(channels: &[&[f64]], spec: GridSpec, beta: f64, m: &InducedMetric) -> f64 {
    let b2 = beta * beta;
    let grads: Vec<VectorField> = channels
        .iter()
        .map(|c| gradient(&ScalarField::from_raw(spec, c.to_vec()), DiffScheme::Central))
        .collect();
    let mut total = 0.0;
    for k in 0..spec.len() {
        let (a, b, c, d) = (m.g11.values()[k], m.g12.values()[k], m.g22.values()[k], m.det_g.values()[k]);
        // tr(G^-1) covers the two spatial coordinates
        let mut s = (a + c) / d;
        for g in &grads {
            let (x, y) = (g.u.values()[k], g.v.values()[k]);
            s += b2 * (c * x * x - 2.0 * b * x * y + a * y * y) / d;
        }
        total += d.sqrt() * s;
    }
    total * spec.cell_area()
}

/// The Polyakov action of `e` under metric `m`, counting the two spatial
/// coordinate maps alongside the scaled intensity channels.
pub fn polyakov_action(e: &EmbeddingMap, m: &InducedMetric) -> Result<f64> {
    check_metric(e, m)?;
    let chans: Vec<&[f64]> = e.channels.iter().map(|c| c.values()).collect();
    Ok(action_of(&chans, *e.spec(), e.beta, m))
}

/// `(1/sqrt g) div(sqrt g G^-1 grad I)` for one channel, in flux form with
/// central differences.
pub fn beltrami_operator(e: &EmbeddingMap, m: &InducedMetric, channel: usize) -> Result<ScalarField> {
    check_metric(e, m)?;
    let ch = e
        .channels
        .get(channel)
        .ok_or_else(|| Error::InvalidParameter(format!("no channel {channel}")))?;
    Ok(operator_of(ch, m))
}

fn operator_of(ch: &ScalarField, m: &InducedMetric) -> ScalarField {
    let flux = m.weighted_inverse(&gradient(ch, DiffScheme::Central));
    let div = conservative_divergence(&flux, DivergenceScheme::Central);
    let values = div.values().iter().zip(m.det_g.values()).map(|(v, d)| v / d.sqrt()).collect();
    ScalarField::from_raw(*ch.spec(), values)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeltramiParams {
    pub dt: f64,
    pub steps: usize,
    /// Recompute the induced metric every this many steps.
    pub refreeze_every: usize,
}

impl Default for BeltramiParams {
    fn default() -> Self {
        Self { dt: 0.2, steps: 100, refreeze_every: 1 }
    }
}

impl BeltramiParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if self.refreeze_every == 0 {
            return Err(Error::InvalidParameter("refreeze_every must be at least 1".into()));
        }
        Ok(())
    }

    /// Step actually used: `dt` clamped to `0.2 min(hx, hy)^2`.
    pub fn effective_dt(&self, spec: &GridSpec) -> f64 {
        let h = spec.min_spacing();
        self.dt.min(0.2 * h * h)
    }
}

#[derive(Debug, Clone)]
pub struct BeltramiResult {
    pub embedding: EmbeddingMap,
    pub trace: EvolutionTrace,
    pub time: f64,
}

/// Explicit Euler on the intensity channels, `I <- I + dt * beltrami(I)`,
/// with the spatial coordinates held fixed. The trace records the action
/// under the freshly induced metric; a step that would increase it is retried
/// at half the step size.
pub fn evolve_beltrami(e: &EmbeddingMap, params: &BeltramiParams) -> Result<BeltramiResult> {
    params.validate()?;
    let spec = *e.spec();
    let dt0 = params.effective_dt(&spec);
    let mut channels = e.channels.clone();
    let current_action = |chs: &[ScalarField]| -> f64 {
        let emb = EmbeddingMap { channels: chs.to_vec(), beta: e.beta };
        let m = induced_metric(&emb);
        let refs: Vec<&[f64]> = chs.iter().map(|c| c.values()).collect();
        action_of(&refs, spec, e.beta, &m)
    };
    let mut action = current_action(&channels);
    let mut trace = EvolutionTrace::new();
    trace.push(TraceRow::new(0, 0.0, action, 0.0).with("dt", 0.0))?;
    let mut metric = induced_metric(e);
    let mut time = 0.0;

    for step in 1..=params.steps {
        if (step - 1) % params.refreeze_every == 0 {
            metric = induced_metric(&EmbeddingMap { channels: channels.clone(), beta: e.beta });
        }
        let velocity: Vec<ScalarField> = channels.iter().map(|c| operator_of(c, &metric)).collect();
        let vmax = velocity.iter().map(|v| v.max_abs()).fold(0.0, f64::max);
        if !vmax.is_finite() {
            return Err(Error::Numerical(format!("non-finite velocity at step {step}")));
        }
        let mut dt = dt0;
        loop {
            let trial: Vec<ScalarField> = channels
                .iter()
                .zip(&velocity)
                .map(|(c, v)| {
                    let vals = c.values().iter().zip(v.values()).map(|(a, b)| a + dt * b).collect();
                    ScalarField::from_raw(spec, vals)
                })
                .collect();
            let a = current_action(&trial);
            if !a.is_finite() {
                return Err(Error::Numerical(format!("non-finite action at step {step}")));
            }
            if a <= action || dt < 1e-12 {
                if a <= action {
                    channels = trial;
                    action = a;
                    time += dt;
                } else {
                    dt = 0.0;
                }
                break;
            }
            dt *= 0.5;
        }
        trace.push(TraceRow::new(step, time, action, vmax).with("dt", dt))?;
    }
    Ok(BeltramiResult { embedding: EmbeddingMap { channels, beta: e.beta }, trace, time })
}

/// The action of a single channel under a metric held fixed.
///
/// Its raw variation is `-2 beta^2 hx hy div(sqrt g G^-1 grad I)`, so the
/// gradient under the `sqrt(g) hx hy` weights is `-2 beta^2` times the
/// Beltrami operator.
#[derive(Debug, Clone)]
pub struct FrozenPolyakov {
    pub metric: InducedMetric,
    pub beta: f64,
}

impl DiscreteFunctional for FrozenPolyakov {
    fn evaluate(&self, state: &[f64]) -> f64 {
        action_of(&[state], *self.metric.spec(), self.beta, &self.metric)
    }

    fn raw_variation(&self, state: &[f64]) -> Vec<f64> {
        let spec = *self.metric.spec();
        let ch = ScalarField::from_raw(spec, state.to_vec());
        let flux = self.metric.weighted_inverse(&gradient(&ch, DiffScheme::Central));
        let div = conservative_divergence(&flux, DivergenceScheme::Central);
        let scale = -2.0 * self.beta * self.beta * spec.cell_area();
        div.values().iter().map(|v| scale * v).collect()
    }

    fn layout(&self, _state: &[f64]) -> Layout {
        Layout::Grid(*self.metric.spec())
    }

    fn metric_weights(&self, state: &[f64], kind: &InnerProductKind) -> Result<MetricWeights> {
        match kind {
            InnerProductKind::GeometricSurface => metric_weights(kind, MeasureInput::Surface(&self.metric.det_g)),
            InnerProductKind::ParameterL2 => MetricWeights::new(vec![1.0; state.len()], 1, kind.name()),
            other => Err(Error::InvalidParameter(format!("{} does not apply to surfaces", other.name()))),
        }
    }
}

/// Surface area of a single-channel graph with its own induced metric; half
/// the induced action. Its gradient under the area weights is
/// `-beta^2` times the Beltrami operator.
#[derive(Debug, Clone)]
pub struct GraphArea {
    pub spec: GridSpec,
    pub beta: f64,
}

impl GraphArea {
    fn metric(&self, state: &[f64]) -> InducedMetric {
        let e = EmbeddingMap { channels: vec![ScalarField::from_raw(self.spec, state.to_vec())], beta: self.beta };
        induced_metric(&e)
    }
}

impl DiscreteFunctional for GraphArea {
    fn evaluate(&self, state: &[f64]) -> f64 {
        self.metric(state).det_g.values().iter().map(|d| d.sqrt()).sum::<f64>() * self.spec.cell_area()
    }

    fn raw_variation(&self, state: &[f64]) -> Vec<f64> {
        let m = self.metric(state);
        let ch = ScalarField::from_raw(self.spec, state.to_vec());
        let div = conservative_divergence(&m.weighted_inverse(&gradient(&ch, DiffScheme::Central)), DivergenceScheme::Central);
        let scale = -self.beta * self.beta * self.spec.cell_area();
        div.values().iter().map(|v| scale * v).collect()
    }

    fn layout(&self, _state: &[f64]) -> Layout {
        Layout::Grid(self.spec)
    }

    fn metric_weights(&self, state: &[f64], kind: &InnerProductKind) -> Result<MetricWeights> {
        match kind {
            InnerProductKind::GeometricSurface => {
                metric_weights(kind, MeasureInput::Surface(&self.metric(state).det_g))
            }
            InnerProductKind::ParameterL2 => MetricWeights::new(vec![1.0; state.len()], 1, kind.name()),
            other => Err(Error::InvalidParameter(format!("{} does not apply to surfaces", other.name()))),
        }
    }
}
