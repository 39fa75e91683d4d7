//! Run configuration and the four workflows behind the command line.
//!
//! A run validates everything it can before touching the output directory,
//! then writes its artifacts and a `manifest.json` holding the config echo,
//! sha256 checksums of every artifact and a few summary metrics.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::beltrami::{evolve_beltrami, induced_metric, BeltramiParams, EmbeddingMap, FrozenPolyakov};
use crate::chanvese::{evolve_cv, region_means, CurvatureForm, CvFunctional, CvMode, CvParams};
use crate::curve::ClosedCurve;
use crate::error::{Error, Result};
use crate::fixtures;
use crate::gac::{edge_indicator, evolve_gac, EdgeIndicatorParams, GacEvolveParams, GacFunctional, GacState};
use crate::grid::{GridSpec, ScalarField};
use crate::io;
use crate::pnm::{self, Image};
use crate::variation::{check_gradient, GradCheckConfig, InnerProductKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Gac,
    Beltrami,
    Chanvese,
    Gradcheck,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gac => "gac",
            Command::Beltrami => "beltrami",
            Command::Chanvese => "chanvese",
            Command::Gradcheck => "gradcheck",
        }
    }
}

/// Synthetic disk image used when no input is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureConfig {
    pub size: usize,
    pub radius: f64,
    pub noise: f64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self { size: 128, radius: 20.0, noise: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveProduct {
    Geometric,
    ParameterL2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GacConfig {
    pub sigma: f64,
    pub contrast: f64,
    pub dt: f64,
    pub steps: usize,
    pub inner_product: CurveProduct,
    pub project_normal: bool,
    pub resample_every: usize,
    pub snapshot_every: usize,
    pub nodes: usize,
    /// Radius of the initial circle; defaults to 0.4 of the smaller side.
    pub init_radius: Option<f64>,
}

impl Default for GacConfig {
    fn default() -> Self {
        Self {
            sigma: 1.5,
            contrast: 0.05,
            dt: 0.5,
            steps: 1000,
            inner_product: CurveProduct::Geometric,
            project_normal: false,
            resample_every: 20,
            snapshot_every: 100,
            nodes: 128,
            init_radius: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeltramiConfig {
    pub beta: f64,
    pub dt: f64,
    pub steps: usize,
    pub refreeze_every: usize,
}

impl Default for BeltramiConfig {
    fn default() -> Self {
        let p = BeltramiParams::default();
        Self { beta: 1.0, dt: p.dt, steps: 50, refreeze_every: p.refreeze_every }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChanveseConfig {
    pub mode: CvMode,
    pub mu: f64,
    pub eps_h: f64,
    pub eps_grad: f64,
    pub dt: f64,
    pub reinit_every: usize,
    pub max_steps: usize,
    pub tol: f64,
    pub curvature: CurvatureForm,
    /// Radius of the initial circle; defaults to 0.3 of the smaller side.
    pub init_radius: Option<f64>,
}

impl Default for ChanveseConfig {
    fn default() -> Self {
        Self {
            mode: CvMode::Geometric,
            mu: 0.05,
            eps_h: 0.05,
            eps_grad: 1e-8,
            dt: 2.0,
            reinit_every: 10,
            max_steps: 2000,
            tol: 1e-4,
            curvature: CurvatureForm::Stencil,
            init_radius: None,
        }
    }
}

impl ChanveseConfig {
    pub fn params(&self) -> CvParams {
        CvParams {
            mu: self.mu,
            eps_h: self.eps_h,
            eps_grad: self.eps_grad,
            dt: self.dt,
            reinit_every: self.reinit_every,
            max_steps: self.max_steps,
            tol: self.tol,
            curvature: self.curvature,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Gac,
    Polyakov,
    Chanvese,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductChoice {
    Geometric,
    ParameterL2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    pub model: Model,
    /// `geometric` picks the model's own measure; the Chan-Vese check is
    /// always run under `parameter_l2`.
    pub kind: ProductChoice,
    pub trials: usize,
    /// Defaults to 1e-4, or 2e-3 for Chan-Vese.
    pub tolerance: Option<f64>,
    pub step_scale: f64,
    /// Curvature used by the Chan-Vese variation under test.
    pub cv_curvature: CurvatureForm,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            model: Model::Gac,
            kind: ProductChoice::Geometric,
            trials: 20,
            tolerance: None,
            step_scale: 1e-5,
            cv_curvature: CurvatureForm::Consistent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub input_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub fixture: FixtureConfig,
    pub gac: GacConfig,
    pub beltrami: BeltramiConfig,
    pub chanvese: ChanveseConfig,
    pub gradcheck: GradcheckConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            input_path: None,
            output_dir: PathBuf::from("out"),
            seed: 0,
            fixture: FixtureConfig::default(),
            gac: GacConfig::default(),
            beltrami: BeltramiConfig::default(),
            chanvese: ChanveseConfig::default(),
            gradcheck: GradcheckConfig::default(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

/// Parses `text` as a JSON scalar, falling back to a bare string.
fn override_value(text: &str) -> Value {
    serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.to_string()))
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(invalid(format!("bad override key '{key}'")));
        }
        let obj = node.as_object_mut().ok_or_else(|| invalid(format!("'{key}' does not name a config field")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

impl RunConfig {
    /// Builds a config from optional JSON text plus `key.path=value`
    /// overrides; overrides win.
    pub fn from_json_with_overrides(text: Option<&str>, overrides: &[String]) -> Result<Self> {
        let mut root = match text {
            Some(t) => serde_json::from_str(t).map_err(|e| invalid(format!("config: {e}")))?,
            None => Value::Object(Default::default()),
        };
        if !root.is_object() {
            return Err(invalid("config must be a JSON object"));
        }
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| invalid(format!("override '{o}' is not key=value")))?;
            set_path(&mut root, k.trim(), override_value(v.trim()))?;
        }
        serde_json::from_value(root).map_err(|e| invalid(format!("config: {e}")))
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => Some(fs::read_to_string(p).map_err(|e| invalid(format!("cannot read config {}: {e}", p.display())))?),
            None => None,
        };
        Self::from_json_with_overrides(text.as_deref(), overrides)
    }

    pub fn validate(&self) -> Result<()> {
        let command = self.command.ok_or_else(|| invalid("no command given"))?;
        if let Some(p) = &self.input_path {
            if !p.is_file() {
                return Err(invalid(format!("input {} does not exist", p.display())));
            }
        }
        let f = &self.fixture;
        if f.size < 8 {
            return Err(invalid(format!("fixture.size must be at least 8, got {}", f.size)));
        }
        if !(f.radius > 0.0 && f.radius.is_finite()) || !(f.noise >= 0.0 && f.noise.is_finite()) {
            return Err(invalid("fixture radius must be positive and noise non-negative"));
        }
        match command {
            Command::Gac => {
                self.edge_params().validate()?;
                self.gac_params().validate()?;
                if self.gac.nodes < crate::curve::MIN_EVOLVE_NODES {
                    return Err(invalid(format!("gac.nodes must be at least {}", crate::curve::MIN_EVOLVE_NODES)));
                }
                check_radius(self.gac.init_radius)?;
            }
            Command::Beltrami => {
                let b = &self.beltrami;
                if !(b.beta > 0.0 && b.beta.is_finite()) {
                    return Err(invalid(format!("beltrami.beta must be positive, got {}", b.beta)));
                }
                self.beltrami_params().validate()?;
            }
            Command::Chanvese => {
                self.chanvese.params().validate()?;
                check_radius(self.chanvese.init_radius)?;
            }
            Command::Gradcheck => {
                let g = &self.gradcheck;
                if g.trials == 0 {
                    return Err(invalid("gradcheck.trials must be at least 1"));
                }
                if !(g.step_scale > 0.0 && g.step_scale.is_finite()) {
                    return Err(invalid("gradcheck.step_scale must be positive"));
                }
                if let Some(t) = g.tolerance {
                    if !(t > 0.0 && t.is_finite()) {
                        return Err(invalid("gradcheck.tolerance must be positive"));
                    }
                }
                match g.model {
                    Model::Gac => self.edge_params().validate()?,
                    Model::Chanvese => self.chanvese.params().validate()?,
                    Model::Polyakov => {
                        if !(self.beltrami.beta > 0.0) {
                            return Err(invalid("beltrami.beta must be positive"));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn edge_params(&self) -> EdgeIndicatorParams {
        EdgeIndicatorParams { sigma: self.gac.sigma, contrast: self.gac.contrast }
    }

    fn gac_params(&self) -> GacEvolveParams {
        GacEvolveParams {
            dt: self.gac.dt,
            steps: self.gac.steps,
            kind: match self.gac.inner_product {
                CurveProduct::Geometric => InnerProductKind::GeometricCurve,
                CurveProduct::ParameterL2 => InnerProductKind::ParameterL2,
            },
            project_normal: self.gac.project_normal,
            resample_every: self.gac.resample_every,
            snapshot_every: self.gac.snapshot_every,
        }
    }

    fn beltrami_params(&self) -> BeltramiParams {
        BeltramiParams { dt: self.beltrami.dt, steps: self.beltrami.steps, refreeze_every: self.beltrami.refreeze_every }
    }
}

fn check_radius(r: Option<f64>) -> Result<()> {
    match r {
        Some(r) if !(r > 0.0 && r.is_finite()) => Err(invalid(format!("init_radius must be positive, got {r}"))),
        _ => Ok(()),
    }
}

/// Exit status for a failed run: 2 for bad input, 3 for a failed computation.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_validation() {
        2
    } else {
        3
    }
}

/// One-line JSON diagnostic for a failed run.
pub fn failure_line(err: &Error) -> String {
    let status = if err.is_validation() { "validation_error" } else { "numerical_failure" };
    json!({ "status": status, "code": err.code(), "reason": err.to_string() }).to_string()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    /// File name to sha256, in name order.
    pub artifacts: BTreeMap<String, String>,
    pub metrics: BTreeMap<String, Value>,
}

impl RunSummary {
    pub fn metrics_json(&self) -> String {
        json!(self.metrics).to_string()
    }
}

/// Inputs loaded and checked before any output is written.
enum Input {
    Gray(ScalarField),
    Rgb([ScalarField; 3]),
}

struct Loaded {
    input: Input,
    /// Ground-truth mask when the input is the synthetic disk.
    truth: Option<Vec<bool>>,
}

fn load_input(cfg: &RunConfig) -> Result<Loaded> {
    if let Some(p) = &cfg.input_path {
        let input = match pnm::read_image(p)? {
            Image::Gray(f) => Input::Gray(f),
            Image::Rgb(c) => Input::Rgb(c),
        };
        return Ok(Loaded { input, truth: None });
    }
    let f = &cfg.fixture;
    let clean = fixtures::noisy_disk(f.size, f.radius, 0.0, cfg.seed)?;
    let truth = clean.values().iter().map(|v| *v > 0.5).collect();
    let image = if f.noise > 0.0 { fixtures::add_noise(&clean, f.noise, cfg.seed)? } else { clean };
    Ok(Loaded { input: Input::Gray(image), truth: Some(truth) })
}

fn gray(input: Input) -> ScalarField {
    match input {
        Input::Gray(f) => f,
        Input::Rgb([r, g, b]) => {
            let vals = r.values().iter().zip(g.values()).zip(b.values()).map(|((r, g), b)| (r + g + b) / 3.0).collect();
            ScalarField::from_raw(*r.spec(), vals)
        }
    }
}

fn center_of(spec: &GridSpec) -> [f64; 2] {
    let (w, h) = spec.extent();
    [w / 2.0, h / 2.0]
}

struct Writer {
    dir: PathBuf,
    artifacts: BTreeMap<String, String>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), artifacts: BTreeMap::new() })
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.artifacts.insert(name.to_string(), hex::encode(Sha256::digest(bytes)));
        Ok(())
    }

    fn finish(self, cfg: &RunConfig, metrics: BTreeMap<String, Value>) -> Result<RunSummary> {
        let manifest = json!({
            "command": cfg.command.map(|c| c.name()),
            "config": cfg,
            "artifacts": self.artifacts,
            "metrics": metrics,
        });
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Numerical(format!("manifest: {e}")))?;
        fs::write(self.dir.join("manifest.json"), text + "\n")?;
        Ok(RunSummary { output_dir: self.dir, artifacts: self.artifacts, metrics })
    }
}

/// Runs a validated config. Validation failures leave the output directory
/// untouched.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let loaded = load_input(cfg)?;
    let command = cfg.command.expect("validated");
    info!("running {} into {}", command.name(), cfg.output_dir.display());
    match command {
        Command::Gac => run_gac(cfg, loaded),
        Command::Beltrami => run_beltrami(cfg, loaded),
        Command::Chanvese => run_chanvese(cfg, loaded),
        Command::Gradcheck => run_gradcheck(cfg, loaded),
    }
}

fn run_gac(cfg: &RunConfig, loaded: Loaded) -> Result<RunSummary> {
    let image = gray(loaded.input);
    let spec = *image.spec();
    let radius = cfg.gac.init_radius.unwrap_or(0.4 * spec.extent().0.min(spec.extent().1));
    let g = edge_indicator(&image, &cfg.edge_params())?;
    let curve = ClosedCurve::circle(center_of(&spec), radius, cfg.gac.nodes)?;
    let state = GacState::new(curve, g.clone())?;
    let result = evolve_gac(&state, &cfg.gac_params())?;

    let mut w = Writer::new(&cfg.output_dir)?;
    w.put("trace.csv", result.trace.to_csv().as_bytes())?;
    w.put("curves.csv", io::curves_to_csv(&result.snapshots).as_bytes())?;
    w.put("edge.pgm", &pnm::encode(&[&g], 255)?)?;
    let mut m = BTreeMap::new();
    m.insert("steps".into(), json!(result.steps));
    m.insert("final_length".into(), json!(result.curve.length()));
    m.insert("final_area".into(), json!(result.curve.signed_area()));
    m.insert("stationary".into(), json!(result.stationary));
    m.insert("collapsed_at".into(), json!(result.collapsed_at));
    let summary = w.finish(cfg, m)?;
    if let Some(step) = result.collapsed_at {
        return Err(Error::Degenerate(format!("curve collapsed at step {step}")));
    }
    Ok(summary)
}

fn run_beltrami(cfg: &RunConfig, loaded: Loaded) -> Result<RunSummary> {
    let channels = match loaded.input {
        Input::Gray(f) => vec![f],
        Input::Rgb(c) => c.to_vec(),
    };
    let e = EmbeddingMap::new(channels, cfg.beltrami.beta)?;
    let result = evolve_beltrami(&e, &cfg.beltrami_params())?;
    let out = result.embedding.channels();
    let mut w = Writer::new(&cfg.output_dir)?;
    w.put("trace.csv", result.trace.to_csv().as_bytes())?;
    if out.len() == 3 {
        w.put("output.ppm", &pnm::encode(&[&out[0], &out[1], &out[2]], 255)?)?;
    } else {
        w.put("output.pgm", &pnm::encode(&[&out[0]], 255)?)?;
    }
    let mut m = BTreeMap::new();
    m.insert("time".into(), json!(result.time));
    m.insert("initial_action".into(), json!(result.trace.rows()[0].energy));
    m.insert("final_action".into(), json!(result.trace.last().map(|r| r.energy)));
    w.finish(cfg, m)
}

fn initial_phi(cfg: &RunConfig, spec: GridSpec) -> Result<ScalarField> {
    let (w, h) = spec.extent();
    let r = cfg.chanvese.init_radius.unwrap_or(0.3 * w.min(h));
    fixtures::circle_distance(spec, center_of(&spec), r)
}

fn run_chanvese(cfg: &RunConfig, loaded: Loaded) -> Result<RunSummary> {
    let image = gray(loaded.input);
    let phi0 = initial_phi(cfg, *image.spec())?;
    let result = evolve_cv(&image, &phi0, &cfg.chanvese.params(), cfg.chanvese.mode)?;
    let mask = result.state.mask();
    let spec = *image.spec();
    let mask_field = ScalarField::from_raw(spec, mask.iter().map(|b| if *b { 1.0 } else { 0.0 }).collect());

    let mut w = Writer::new(&cfg.output_dir)?;
    w.put("trace.csv", result.trace.to_csv().as_bytes())?;
    w.put("mask.pgm", &pnm::encode(&[&mask_field], 255)?)?;
    w.put("phi.txt", io::matrix_to_text(&result.state.phi).as_bytes())?;
    let mut m = BTreeMap::new();
    m.insert("mode".into(), json!(cfg.chanvese.mode.name()));
    m.insert("steps".into(), json!(result.steps));
    m.insert("converged".into(), json!(result.converged));
    m.insert("c1".into(), json!(result.state.stats.c1));
    m.insert("c2".into(), json!(result.state.stats.c2));
    if let Some(truth) = &loaded.truth {
        let hits = mask.iter().zip(truth).filter(|(a, b)| a == b).count();
        m.insert("mask_accuracy".into(), json!(hits as f64 / truth.len() as f64));
    }
    w.finish(cfg, m)
}

fn run_gradcheck(cfg: &RunConfig, loaded: Loaded) -> Result<RunSummary> {
    let g = &cfg.gradcheck;
    let image = gray(loaded.input);
    let spec = *image.spec();
    let mut check = GradCheckConfig { trials: g.trials, seed: cfg.seed, tolerance: 1e-4, step_scale: g.step_scale };
    let report = match g.model {
        Model::Gac => {
            let field = edge_indicator(&image, &cfg.edge_params())?;
            let (w, h) = spec.extent();
            let curve = fixtures::ellipse_curve(&spec, 0.35 * w, 0.25 * h, 256)?;
            let kind = match g.kind {
                ProductChoice::Geometric => InnerProductKind::GeometricCurve,
                ProductChoice::ParameterL2 => InnerProductKind::ParameterL2,
            };
            check.tolerance = g.tolerance.unwrap_or(1e-4);
            check_gradient(&GacFunctional { g_field: field }, &kind, &curve.to_flat(), &check)?
        }
        Model::Polyakov => {
            let e = EmbeddingMap::new(vec![image.clone()], cfg.beltrami.beta)?;
            let f = FrozenPolyakov { metric: induced_metric(&e), beta: cfg.beltrami.beta };
            let kind = match g.kind {
                ProductChoice::Geometric => InnerProductKind::GeometricSurface,
                ProductChoice::ParameterL2 => InnerProductKind::ParameterL2,
            };
            check.tolerance = g.tolerance.unwrap_or(1e-4);
            check_gradient(&f, &kind, image.values(), &check)?
        }
        Model::Chanvese => {
            let params = CvParams { curvature: g.cv_curvature, ..cfg.chanvese.params() };
            let phi = initial_phi(cfg, spec)?;
            let stats = region_means(&image, &phi, params.eps_h)?;
            let f = CvFunctional { image, stats, params };
            check.tolerance = g.tolerance.unwrap_or(2e-3);
            check_gradient(&f, &InnerProductKind::ParameterL2, phi.values(), &check)?
        }
    };
    let mut w = Writer::new(&cfg.output_dir)?;
    w.put("gradcheck.csv", report.to_csv().as_bytes())?;
    let mut m = BTreeMap::new();
    m.insert("measure".into(), json!(report.measure));
    m.insert("max_rel_error".into(), json!(report.max_rel_error));
    m.insert("tolerance".into(), json!(report.tolerance));
    m.insert("passed".into(), json!(report.passed));
    let summary = w.finish(cfg, m)?;
    if !report.passed {
        return Err(Error::Numerical(format!(
            "gradient check failed: max relative error {:e} > {:e}",
            report.max_rel_error, report.tolerance
        )));
    }
    Ok(summary)
}
