//! Two-phase piecewise-constant segmentation on a level-set function.
//!
//! The energy is
//! `sum [(I-c1)^2 H(phi) + (I-c2)^2 H(-phi) + mu delta(phi) |grad+ phi|] hx hy`
//! with the arctan-regularized Heaviside, whose delta has global support. Two
//! descents share the bracket
//! `B = -(I-c1)^2 + (I-c2)^2 + mu div(grad phi / (|grad phi| + eps_grad))`:
//! the classical one moves `delta(phi) B` and is effectively frozen away from
//! the zero level set, while the one taken under the level-set curve measure
//! moves `B / |grad phi|` and acts on every level line.

use std::f64::consts::PI;

use log::debug;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    conservative_divergence, gradient, one_sided_max_norm, DiffScheme, DivergenceScheme, GridSpec, ScalarField,
    VectorField,
};
use crate::trace::{EvolutionTrace, TraceRow};
use crate::variation::{metric_weights, DiscreteFunctional, InnerProductKind, Layout, MeasureInput, MetricWeights};

/// Regularized Heaviside and its derivative at `s`.
pub fn heaviside_delta(s: f64, eps_h: f64) -> (f64, f64) {
    let h = 0.5 * (1.0 + (2.0 / PI) * (s / eps_h).atan());
    let d = eps_h / (PI * (eps_h * eps_h + s * s));
    (h, d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CvMode {
    /// `delta(phi) B`.
    Classical,
    /// `B / (|grad phi| + eps_grad)`.
    Geometric,
}

impl CvMode {
    pub fn name(&self) -> &'static str {
        match self {
            CvMode::Classical => "classical",
            CvMode::Geometric => "geometric",
        }
    }

    pub fn default_reinit_every(&self) -> usize {
        match self {
            CvMode::Classical => 0,
            CvMode::Geometric => 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvParams {
    pub mu: f64,
    pub eps_h: f64,
    pub eps_grad: f64,
    pub dt: f64,
    /// Reinitialize every this many steps; 0 disables.
    pub reinit_every: usize,
    pub max_steps: usize,
    /// Stop once `max |dphi/dt|` falls below this.
    pub tol: f64,
    pub curvature: CurvatureForm,
}

/// Which curvature enters the bracket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurvatureForm {
    /// The upwind stencil `div(grad+ phi / (|grad+ phi| + eps_grad))`.
    Stencil,
    /// The same stencil applied to `H(phi)`, for which `delta(phi) * mu *
    /// curvature` is exactly minus the derivative of the discrete length term.
    /// Pointwise it agrees with the plain stencil only when the delta is
    /// resolved by the grid; for sub-pixel `eps_h` it concentrates on the
    /// interface pixels, as the pixelated length does.
    Consistent,
}

impl Default for CvParams {
    fn default() -> Self {
        Self { mu: 0.05, eps_h: 1.0, eps_grad: 1e-8, dt: 0.5, reinit_every: 10, max_steps: 2000, tol: 1e-4, curvature: CurvatureForm::Stencil }
    }
}

impl CvParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::InvalidParameter(format!("{what} must be positive, got {v}")));
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidParameter(format!("mu must be non-negative, got {}", self.mu)));
        }
        if !(self.eps_h > 0.0 && self.eps_h.is_finite()) {
            return bad("eps_h", self.eps_h);
        }
        if !(self.eps_grad > 0.0 && self.eps_grad.is_finite()) {
            return bad("eps_grad", self.eps_grad);
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt", self.dt);
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidParameter(format!("tol must be non-negative, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionStats {
    /// Mean where `phi > 0`.
    pub c1: f64,
    /// Mean where `phi < 0`.
    pub c2: f64,
}

/// Heaviside-weighted means inside and outside the zero level set.
pub fn region_means(image: &ScalarField, phi: &ScalarField, eps_h: f64) -> Result<RegionStats> {
    if image.spec() != phi.spec() {
        return Err(Error::SpecMismatch);
    }
    if !(eps_h > 0.0) {
        return Err(Error::InvalidParameter(format!("eps_h must be positive, got {eps_h}")));
    }
    let (mut in_mass, mut in_sum, mut out_mass, mut out_sum) = (0.0, 0.0, 0.0, 0.0);
    for (i, p) in image.values().iter().zip(phi.values()) {
        let h_in = heaviside_delta(*p, eps_h).0;
        let h_out = heaviside_delta(-*p, eps_h).0;
        in_mass += h_in;
        in_sum += i * h_in;
        out_mass += h_out;
        out_sum += i * h_out;
    }
    if in_mass < 1e-12 || out_mass < 1e-12 {
        return Err(Error::OneSided(format!("region masses {in_mass:e} inside, {out_mass:e} outside")));
    }
    Ok(RegionStats { c1: in_sum / in_mass, c2: out_sum / out_mass })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetState {
    pub phi: ScalarField,
    pub image: ScalarField,
    pub stats: RegionStats,
}

impl LevelSetState {
    /// Builds a state with the means of `image` on either side of `phi`.
    pub fn new(image: ScalarField, phi: ScalarField, eps_h: f64) -> Result<Self> {
        let stats = region_means(&image, &phi, eps_h)?;
        Ok(Self { phi, image, stats })
    }

    /// Pixels where `phi > 0`.
    pub fn mask(&self) -> Vec<bool> {
        self.phi.values().iter().map(|p| *p > 0.0).collect()
    }
}

/// `H(a) - H(b)` without cancellation when both arguments are far out on
/// the same tail.
fn heaviside_difference(a: f64, b: f64, eps_h: f64) -> f64 {
    let (x, y) = (a / eps_h, b / eps_h);
    if x * y > -1.0 {
        ((x - y) / (1.0 + x * y)).atan() / PI
    } else {
        (x.atan() - y.atan()) / PI
    }
}

/// Forward differences of `H(phi)`.
fn heaviside_gradient(phi: &ScalarField, eps_h: f64) -> VectorField {
    let spec = *phi.spec();
    let (nx, ny) = (spec.nx, spec.ny);
    let mut u = vec![0.0; spec.len()];
    let mut v = vec![0.0; spec.len()];
    for j in 0..ny {
        for i in 0..nx {
            let k = spec.index(i, j);
            let here = phi.values()[k];
            if i + 1 < nx {
                u[k] = heaviside_difference(phi.values()[k + 1], here, eps_h) / spec.hx;
            }
            if j + 1 < ny {
                v[k] = heaviside_difference(phi.values()[k + nx], here, eps_h) / spec.hy;
            }
        }
    }
    VectorField { u: ScalarField::from_raw(spec, u), v: ScalarField::from_raw(spec, v) }
}

fn guarded_norm(g: &VectorField, eps_grad: f64) -> Vec<f64> {
    g.u.values().iter().zip(g.v.values()).map(|(a, b)| (a * a + b * b + eps_grad * eps_grad).sqrt()).collect()
}

fn energy_of(phi: &[f64], spec: &GridSpec, image: &[f64], stats: RegionStats, params: &CvParams) -> f64 {
    let field = ScalarField::from_raw(*spec, phi.to_vec());
    let norm = guarded_norm(&heaviside_gradient(&field, params.eps_h), params.eps_grad);
    let mut e = 0.0;
    for k in 0..phi.len() {
        let h = heaviside_delta(phi[k], params.eps_h).0;
        let (a, b) = (image[k] - stats.c1, image[k] - stats.c2);
        e += a * a * h + b * b * (1.0 - h) + params.mu * norm[k];
    }
    e * spec.cell_area()
}

/// Discrete energy of `state`. The boundary length is the total variation of
/// `H(phi)` with forward differences, `|grad+ H(phi)|` guarded by `eps_grad`;
/// it equals `delta(phi) |grad phi|` up to discretization and stays a length
/// even when `eps_h` is below the pixel size.
pub fn cv_energy(state: &LevelSetState, params: &CvParams) -> f64 {
    energy_of(state.phi.values(), state.phi.spec(), state.image.values(), state.stats, params)
}

/// `div(grad+ phi / (|grad+ phi| + eps_grad))` with the backward divergence
/// adjoint to the forward gradient.
pub fn level_set_curvature(phi: &ScalarField, eps_grad: f64) -> ScalarField {
    let g = gradient(phi, DiffScheme::Forward);
    let scale: Vec<f64> = g
        .u
        .values()
        .iter()
        .zip(g.v.values())
        .map(|(a, b)| 1.0 / (a.hypot(*b) + eps_grad))
        .collect();
    let spec = *phi.spec();
    let n = VectorField {
        u: ScalarField::from_raw(spec, g.u.values().iter().zip(&scale).map(|(a, s)| a * s).collect()),
        v: ScalarField::from_raw(spec, g.v.values().iter().zip(&scale).map(|(a, s)| a * s).collect()),
    };
    conservative_divergence(&n, DivergenceScheme::UpwindPair)
}

/// `div(grad+ H / |grad+ H|)`: curvature of the level sets of `phi` measured
/// through `H(phi)`, the exact companion of the discrete length term.
pub fn consistent_curvature(phi: &ScalarField, eps_h: f64, eps_grad: f64) -> ScalarField {
    let spec = *phi.spec();
    let g = heaviside_gradient(phi, eps_h);
    let norm = guarded_norm(&g, eps_grad);
    let n = VectorField {
        u: ScalarField::from_raw(spec, g.u.values().iter().zip(&norm).map(|(a, s)| a / s).collect()),
        v: ScalarField::from_raw(spec, g.v.values().iter().zip(&norm).map(|(a, s)| a / s).collect()),
    };
    conservative_divergence(&n, DivergenceScheme::UpwindPair)
}

pub fn curvature(phi: &ScalarField, params: &CvParams) -> ScalarField {
    match params.curvature {
        CurvatureForm::Stencil => level_set_curvature(phi, params.eps_grad),
        CurvatureForm::Consistent => consistent_curvature(phi, params.eps_h, params.eps_grad),
    }
}

/// The bracket `-(I-c1)^2 + (I-c2)^2 + mu * curvature` shared by both modes.
pub fn bracket(state: &LevelSetState, params: &CvParams) -> ScalarField {
    let curv = curvature(&state.phi, params);
    let RegionStats { c1, c2 } = state.stats;
    let values = state
        .image
        .values()
        .iter()
        .zip(curv.values())
        .map(|(i, k)| -(i - c1).powi(2) + (i - c2).powi(2) + params.mu * k)
        .collect();
    ScalarField::from_raw(*state.phi.spec(), values)
}

pub fn cv_velocity(state: &LevelSetState, params: &CvParams, mode: CvMode) -> ScalarField {
    let b = bracket(state, params);
    let values = match mode {
        CvMode::Classical => state
            .phi
            .values()
            .iter()
            .zip(b.values())
            .map(|(p, b)| heaviside_delta(*p, params.eps_h).1 * b)
            .collect(),
        CvMode::Geometric => one_sided_max_norm(&state.phi)
            .values()
            .iter()
            .zip(b.values())
            .map(|(g, b)| b / (g + params.eps_grad))
            .collect(),
    };
    ScalarField::from_raw(*state.phi.spec(), values)
}

/// Signed distance to the zero level set of `phi`, by fast sweeping.
///
/// Pixels next to a sign change are seeded with `|phi| / |grad phi|`;
/// every other pixel is solved from the first-order
/// upwind eikonal equation. Signs are preserved pixel by pixel and magnitudes
/// are clamped to `band` (pass infinity for no clamp).
pub fn reinitialize(phi: &ScalarField, band: f64) -> Result<ScalarField> {
    if !(band > 0.0) {
        return Err(Error::InvalidParameter(format!("band must be positive, got {band}")));
    }
    let spec = *phi.spec();
    let (nx, ny, hx, hy) = (spec.nx, spec.ny, spec.hx, spec.hy);
    let p = phi.values();
    if !p.iter().any(|v| *v > 0.0) || !p.iter().any(|v| *v < 0.0) {
        return Err(Error::OneSided("level set has no zero crossing".into()));
    }

    let central = gradient(phi, DiffScheme::Central).norm();
    let one_sided = one_sided_max_norm(phi);
    let mut d = vec![f64::INFINITY; spec.len()];
    let mut fixed = vec![false; spec.len()];
    for j in 0..ny {
        for i in 0..nx {
            let k = spec.index(i, j);
            let here = p[k];
            if here == 0.0 {
                d[k] = 0.0;
                fixed[k] = true;
                continue;
            }
            let near = (i > 0 && here * p[k - 1] <= 0.0)
                || (i + 1 < nx && here * p[k + 1] <= 0.0)
                || (j > 0 && here * p[k - nx] <= 0.0)
                || (j + 1 < ny && here * p[k + nx] <= 0.0);
            if near {
                // phi / |grad phi|, central where it is reliable
                let g = central.values()[k].max(0.5 * one_sided.values()[k]);
                d[k] = here.abs() / g;
                fixed[k] = true;
            }
        }
    }

    let solve = |a: f64, b: f64| -> f64 {
        // ((u - a)/hx)^2 + ((u - b)/hy)^2 = 1 with upwind admissibility
        if !a.is_finite() && !b.is_finite() {
            return f64::INFINITY;
        }
        let ua = a + hx;
        let ub = b + hy;
        let one = ua.min(ub);
        if !a.is_finite() || !b.is_finite() || one <= a.max(b) {
            return one;
        }
        let (wa, wb) = (1.0 / (hx * hx), 1.0 / (hy * hy));
        let s = wa + wb;
        let m = wa * a + wb * b;
        let disc = m * m - s * (wa * a * a + wb * b * b - 1.0);
        (m + disc.max(0.0).sqrt()) / s
    };

    for _ in 0..4 {
        let mut changed = false;
        for order in 0..4 {
            for jj in 0..ny {
                let j = if order & 2 == 0 { jj } else { ny - 1 - jj };
                for ii in 0..nx {
                    let i = if order & 1 == 0 { ii } else { nx - 1 - ii };
                    let k = spec.index(i, j);
                    if fixed[k] {
                        continue;
                    }
                    let a = d[if i > 0 { k - 1 } else { k }].min(d[if i + 1 < nx { k + 1 } else { k }]);
                    let b = d[if j > 0 { k - nx } else { k }].min(d[if j + 1 < ny { k + nx } else { k }]);
                    let u = solve(a, b);
                    if u < d[k] {
                        d[k] = u;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }

    let values = p.iter().zip(&d).map(|(s, dist)| dist.min(band).copysign(*s) * f64::from(u8::from(*s != 0.0))).collect();
    ScalarField::new(spec, values)
}

#[derive(Debug, Clone)]
pub struct CvResult {
    pub state: LevelSetState,
    pub trace: EvolutionTrace,
    pub steps: usize,
    pub converged: bool,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Alternating minimization: means, then a backtracked descent step on `phi`.
///
/// Every step starts from `dt_eff = min(dt, diffusive clamp, 0.5 h / max|v|)`
/// and halves it until the energy at the fresh means does not increase.
/// Reinitialization steps are marked exempt in the trace.
pub fn evolve_cv(image: &ScalarField, phi0: &ScalarField, params: &CvParams, mode: CvMode) -> Result<CvResult> {
    params.validate()?;
    if image.spec() != phi0.spec() {
        return Err(Error::SpecMismatch);
    }
    let p0 = phi0.values();
    if !p0.iter().any(|v| *v > 0.0) || !p0.iter().any(|v| *v < 0.0) {
        return Err(Error::InvalidParameter("initial level set must take both signs".into()));
    }
    let spec = *image.spec();
    let h = spec.min_spacing();
    let mut state = LevelSetState::new(image.clone(), phi0.clone(), params.eps_h)?;
    let mut trace = EvolutionTrace::new();
    let mut time = 0.0;
    trace.push(
        TraceRow::new(0, 0.0, cv_energy(&state, params), 0.0)
            .with("c1", state.stats.c1)
            .with("c2", state.stats.c2)
            .with("dt", 0.0),
    )?;
    let mut converged = false;
    let mut steps = 0;

    for step in 1..=params.max_steps {
        state.stats = region_means(&state.image, &state.phi, params.eps_h)?;
        let energy_before = cv_energy(&state, params);
        let v = cv_velocity(&state, params, mode);
        let vmax = max_abs(v.values());
        if !vmax.is_finite() {
            return Err(Error::Numerical(format!("non-finite velocity at step {step}")));
        }
        if vmax < params.tol {
            converged = true;
            break;
        }

        let mut dt = params.dt.min(0.5 * h / vmax);
        if params.mu > 0.0 {
            let gmin = one_sided_max_norm(&state.phi).values().iter().fold(f64::INFINITY, |m, g| m.min(*g));
            dt = dt.min(0.2 * h * h * (gmin + params.eps_grad) / params.mu);
        }

        let phi = state.phi.values();
        let mut accepted = None;
        while dt > 1e-12 {
            let trial: Vec<f64> = phi.iter().zip(v.values()).map(|(p, w)| p + dt * w).collect();
            let e = energy_of(&trial, &spec, state.image.values(), state.stats, params);
            if e.is_finite() && e <= energy_before {
                accepted = Some(trial);
                break;
            }
            dt *= 0.5;
        }
        let Some(next) = accepted else {
            debug!("step {step}: no descent step found, stopping");
            converged = true;
            break;
        };
        if !next.iter().any(|v| *v > 0.0) || !next.iter().any(|v| *v < 0.0) {
            return Err(Error::OneSided(format!("level set lost a phase at step {step}")));
        }
        state.phi = ScalarField::from_raw(spec, next);
        time += dt;
        steps = step;

        let reinit = params.reinit_every > 0 && step % params.reinit_every == 0;
        if reinit {
            state.phi = reinitialize(&state.phi, f64::INFINITY)?;
        }
        state.stats = region_means(&state.image, &state.phi, params.eps_h)?;
        trace.push(
            TraceRow::new(step, time, cv_energy(&state, params), vmax)
                .exempt(reinit)
                .with("c1", state.stats.c1)
                .with("c2", state.stats.c2)
                .with("dt", dt),
        )?;
    }
    Ok(CvResult { state, trace, steps, converged })
}

/// The Chan-Vese energy as a function of `phi` alone, means held fixed.
///
/// Its variation is `delta(phi) [(I-c1)^2 - (I-c2)^2 - mu * curvature] hx hy`
/// with the curvature chosen by `params.curvature`; with the consistent form
/// it is the exact derivative of [`cv_energy`].
#[derive(Debug, Clone)]
pub struct CvFunctional {
    pub image: ScalarField,
    pub stats: RegionStats,
    pub params: CvParams,
}

impl DiscreteFunctional for CvFunctional {
    fn evaluate(&self, state: &[f64]) -> f64 {
        energy_of(state, self.image.spec(), self.image.values(), self.stats, &self.params)
    }

    fn raw_variation(&self, state: &[f64]) -> Vec<f64> {
        let spec = *self.image.spec();
        let phi = ScalarField::from_raw(spec, state.to_vec());
        let curv = curvature(&phi, &self.params);
        let RegionStats { c1, c2 } = self.stats;
        let area = spec.cell_area();
        (0..state.len())
            .map(|k| {
                let i = self.image.values()[k];
                let data = (i - c1).powi(2) - (i - c2).powi(2);
                heaviside_delta(state[k], self.params.eps_h).1 * (data - self.params.mu * curv.values()[k]) * area
            })
            .collect()
    }

    fn layout(&self, _state: &[f64]) -> Layout {
        Layout::Grid(*self.image.spec())
    }

    fn metric_weights(&self, state: &[f64], kind: &InnerProductKind) -> Result<MetricWeights> {
        let phi = ScalarField::new(*self.image.spec(), state.to_vec())?;
        metric_weights(kind, MeasureInput::LevelSet(&phi))
    }
}
