//! Python bindings. Images and fields cross the boundary as lists of rows.

use std::collections::BTreeMap;

use geovar::beltrami::{self, BeltramiParams, EmbeddingMap};
use geovar::chanvese::{self, CurvatureForm, CvMode, CvParams};
use geovar::curve::ClosedCurve;
use geovar::gac::{self, EdgeIndicatorParams, GacEvolveParams, GacState};
use geovar::grid::{GridSpec, ScalarField};
use geovar::runner::RunConfig;
use geovar::trace::EvolutionTrace;
use geovar::variation::InnerProductKind;
use geovar::{fixtures, pnm, Error};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(format!("{}: {e}", e.code()))
    } else {
        PyRuntimeError::new_err(format!("{}: {e}", e.code()))
    }
}

fn field(rows: Vec<Vec<f64>>) -> PyResult<ScalarField> {
    let ny = rows.len();
    let nx = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != nx) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    let spec = GridSpec::new(nx, ny).map_err(to_py)?;
    ScalarField::new(spec, rows.into_iter().flatten().collect()).map_err(to_py)
}

fn rows(f: &ScalarField) -> Vec<Vec<f64>> {
    f.values().chunks(f.spec().nx).map(|c| c.to_vec()).collect()
}

fn curve_kind(name: &str) -> PyResult<InnerProductKind> {
    match name {
        "geometric" => Ok(InnerProductKind::GeometricCurve),
        "parameter_l2" => Ok(InnerProductKind::ParameterL2),
        other => Err(PyValueError::new_err(format!("unknown inner product '{other}'"))),
    }
}

type TraceRows = Vec<BTreeMap<String, f64>>;

fn trace_rows(t: &EvolutionTrace) -> TraceRows {
    t.rows()
        .iter()
        .map(|r| {
            let mut m = r.extras.clone();
            m.insert("step".into(), r.step as f64);
            m.insert("time".into(), r.time);
            m.insert("energy".into(), r.energy);
            m.insert("max_velocity".into(), r.max_velocity);
            m.insert("exempt".into(), f64::from(u8::from(r.exempt)));
            m
        })
        .collect()
}

/// Closed polygon with counter-clockwise orientation.
#[pyclass(name = "Curve", module = "pygeovar", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyCurve {
    inner: ClosedCurve,
}

#[pymethods]
impl PyCurve {
    #[new]
    fn new(points: Vec<[f64; 2]>) -> PyResult<Self> {
        Ok(Self { inner: ClosedCurve::new(points).map_err(to_py)? })
    }

    #[staticmethod]
    fn circle(center: [f64; 2], radius: f64, nodes: usize) -> PyResult<Self> {
        Ok(Self { inner: ClosedCurve::circle(center, radius, nodes).map_err(to_py)? })
    }

    #[staticmethod]
    fn ellipse(center: [f64; 2], a: f64, b: f64, nodes: usize) -> PyResult<Self> {
        Ok(Self { inner: ClosedCurve::ellipse(center, a, b, nodes).map_err(to_py)? })
    }

    fn points(&self) -> Vec<[f64; 2]> {
        self.inner.points().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn length(&self) -> f64 {
        self.inner.length()
    }

    fn signed_area(&self) -> f64 {
        self.inner.signed_area()
    }

    fn curvature(&self) -> PyResult<Vec<f64>> {
        Ok(self.inner.geometry().map_err(to_py)?.curvature)
    }

    fn resample_to_count(&self, count: usize) -> PyResult<Self> {
        Ok(Self { inner: self.inner.resample_to_count(count).map_err(to_py)? })
    }

    fn __repr__(&self) -> String {
        format!("Curve(nodes={}, length={:.6})", self.inner.len(), self.inner.length())
    }
}

#[pyfunction]
#[pyo3(signature = (n, radius, sigma, seed))]
fn noisy_disk(n: usize, radius: f64, sigma: f64, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(&fixtures::noisy_disk(n, radius, sigma, seed).map_err(to_py)?))
}

#[pyfunction]
fn read_image(path: &str) -> PyResult<Vec<Vec<Vec<f64>>>> {
    let img = pnm::read_image(path).map_err(to_py)?;
    Ok(img.channels().iter().map(rows).collect())
}

#[pyfunction]
#[pyo3(signature = (image, path, maxval = 255))]
fn write_image(image: Vec<Vec<f64>>, path: &str, maxval: u32) -> PyResult<()> {
    pnm::write_image(&field(image)?, path, maxval).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (image, sigma = 1.5, contrast = 0.05))]
fn edge_indicator(image: Vec<Vec<f64>>, sigma: f64, contrast: f64) -> PyResult<Vec<Vec<f64>>> {
    let g = gac::edge_indicator(&field(image)?, &EdgeIndicatorParams { sigma, contrast }).map_err(to_py)?;
    Ok(rows(&g))
}

#[pyfunction]
fn gac_energy(g: Vec<Vec<f64>>, curve: &PyCurve) -> PyResult<f64> {
    let state = GacState::new(curve.inner.clone(), field(g)?).map_err(to_py)?;
    Ok(gac::gac_energy(&state))
}

/// Per-node velocity of the descent flow under `inner_product`.
#[pyfunction]
#[pyo3(signature = (g, curve, inner_product = "geometric", project_normal = false))]
fn gac_velocity(g: Vec<Vec<f64>>, curve: &PyCurve, inner_product: &str, project_normal: bool) -> PyResult<Vec<[f64; 2]>> {
    let state = GacState::new(curve.inner.clone(), field(g)?).map_err(to_py)?;
    gac::gac_velocity(&state, &curve_kind(inner_product)?, project_normal).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (g, curve, dt = 0.5, steps = 1000, inner_product = "geometric", resample_every = 20))]
fn evolve_gac(
    g: Vec<Vec<f64>>,
    curve: &PyCurve,
    dt: f64,
    steps: usize,
    inner_product: &str,
    resample_every: usize,
) -> PyResult<(PyCurve, TraceRows)> {
    let state = GacState::new(curve.inner.clone(), field(g)?).map_err(to_py)?;
    let params = GacEvolveParams {
        dt,
        steps,
        kind: curve_kind(inner_product)?,
        resample_every,
        ..GacEvolveParams::default()
    };
    let out = gac::evolve_gac(&state, &params).map_err(to_py)?;
    Ok((PyCurve { inner: out.curve }, trace_rows(&out.trace)))
}

fn embedding(channels: Vec<Vec<Vec<f64>>>, beta: f64) -> PyResult<EmbeddingMap> {
    let fields = channels.into_iter().map(field).collect::<PyResult<Vec<_>>>()?;
    EmbeddingMap::new(fields, beta).map_err(to_py)
}

/// `(g11, g12, g22, det_g)` of the induced metric.
#[pyfunction]
fn induced_metric(channels: Vec<Vec<Vec<f64>>>, beta: f64) -> PyResult<[Vec<Vec<f64>>; 4]> {
    let m = beltrami::induced_metric(&embedding(channels, beta)?);
    Ok([rows(&m.g11), rows(&m.g12), rows(&m.g22), rows(&m.det_g)])
}

#[pyfunction]
#[pyo3(signature = (channels, beta, channel = 0))]
fn beltrami_operator(channels: Vec<Vec<Vec<f64>>>, beta: f64, channel: usize) -> PyResult<Vec<Vec<f64>>> {
    let e = embedding(channels, beta)?;
    let m = beltrami::induced_metric(&e);
    Ok(rows(&beltrami::beltrami_operator(&e, &m, channel).map_err(to_py)?))
}

#[pyfunction]
fn polyakov_action(channels: Vec<Vec<Vec<f64>>>, beta: f64) -> PyResult<f64> {
    let e = embedding(channels, beta)?;
    beltrami::polyakov_action(&e, &beltrami::induced_metric(&e)).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (channels, beta, dt = 0.2, steps = 50, refreeze_every = 1))]
fn evolve_beltrami(
    channels: Vec<Vec<Vec<f64>>>,
    beta: f64,
    dt: f64,
    steps: usize,
    refreeze_every: usize,
) -> PyResult<(Vec<Vec<Vec<f64>>>, TraceRows)> {
    let e = embedding(channels, beta)?;
    let out = beltrami::evolve_beltrami(&e, &BeltramiParams { dt, steps, refreeze_every }).map_err(to_py)?;
    Ok((out.embedding.channels().iter().map(rows).collect(), trace_rows(&out.trace)))
}

/// Runs a segmentation; returns a dict with `phi`, `mask`, `c1`, `c2`,
/// `steps`, `converged` and `trace`.
#[pyfunction]
#[pyo3(signature = (image, phi, mode = "geometric", mu = 0.05, eps_h = 0.05, dt = 2.0, reinit_every = 10, max_steps = 2000, consistent_curvature = false))]
#[allow(clippy::too_many_arguments)]
fn evolve_chanvese<'py>(
    py: Python<'py>,
    image: Vec<Vec<f64>>,
    phi: Vec<Vec<f64>>,
    mode: &str,
    mu: f64,
    eps_h: f64,
    dt: f64,
    reinit_every: usize,
    max_steps: usize,
    consistent_curvature: bool,
) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    use pyo3::types::PyDict;
    let mode = match mode {
        "geometric" => CvMode::Geometric,
        "classical" => CvMode::Classical,
        other => return Err(PyValueError::new_err(format!("unknown mode '{other}'"))),
    };
    let params = CvParams {
        mu,
        eps_h,
        dt,
        reinit_every,
        max_steps,
        curvature: if consistent_curvature { CurvatureForm::Consistent } else { CurvatureForm::Stencil },
        ..CvParams::default()
    };
    let out = chanvese::evolve_cv(&field(image)?, &field(phi)?, &params, mode).map_err(to_py)?;
    let nx = out.state.phi.spec().nx;
    let mask: Vec<Vec<bool>> = out.state.mask().chunks(nx).map(|c| c.to_vec()).collect();
    let d = PyDict::new(py);
    d.set_item("phi", rows(&out.state.phi))?;
    d.set_item("mask", mask)?;
    d.set_item("c1", out.state.stats.c1)?;
    d.set_item("c2", out.state.stats.c2)?;
    d.set_item("steps", out.steps)?;
    d.set_item("converged", out.converged)?;
    d.set_item("trace", trace_rows(&out.trace))?;
    Ok(d)
}

/// Runs a CLI workflow from a JSON config string with `key=value` overrides
/// and returns the manifest metrics as JSON text.
#[pyfunction]
#[pyo3(signature = (command, config_json = None, overrides = Vec::new()))]
fn run(command: &str, config_json: Option<&str>, overrides: Vec<String>) -> PyResult<String> {
    let mut o = vec![format!("command={command}")];
    o.extend(overrides);
    let cfg = RunConfig::from_json_with_overrides(config_json, &o).map_err(to_py)?;
    let summary = geovar::runner::run(&cfg).map_err(to_py)?;
    Ok(summary.metrics_json())
}

#[pymodule]
fn pygeovar(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCurve>()?;
    m.add_function(wrap_pyfunction!(noisy_disk, m)?)?;
    m.add_function(wrap_pyfunction!(read_image, m)?)?;
    m.add_function(wrap_pyfunction!(write_image, m)?)?;
    m.add_function(wrap_pyfunction!(edge_indicator, m)?)?;
    m.add_function(wrap_pyfunction!(gac_energy, m)?)?;
    m.add_function(wrap_pyfunction!(gac_velocity, m)?)?;
    m.add_function(wrap_pyfunction!(evolve_gac, m)?)?;
    m.add_function(wrap_pyfunction!(induced_metric, m)?)?;
    m.add_function(wrap_pyfunction!(beltrami_operator, m)?)?;
    m.add_function(wrap_pyfunction!(polyakov_action, m)?)?;
    m.add_function(wrap_pyfunction!(evolve_beltrami, m)?)?;
    m.add_function(wrap_pyfunction!(evolve_chanvese, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
