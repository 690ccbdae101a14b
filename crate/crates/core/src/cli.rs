//! Experiment configuration, the `run` / `verify` / `sweep` commands and
//! their file outputs.
//!
//! A config is one JSON file. Everything is validated (and every shape is
//! built) before the first output file is touched, so a bad config never
//! leaves partial results behind.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::flow::{self, FlowConfig, FlowTrace, Termination};
use crate::grid::{ParamDomain, Topology};
use crate::immersion::{self, Immersion};
use crate::pinch::{self, PinchPreset, Regime};
use crate::spaceform::SpaceForm;
use crate::verify::{self, DistanceMonitor, DistanceReport, ShrinkerOracle, Suite};

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_PROPERTY: i32 = 4;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub ambient: AmbientConfig,
    pub shape: ShapeConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub pinch: PinchConfig,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub monitors: MonitorConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmbientConfig {
    pub c: f64,
    pub n: usize,
    pub d: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeConfig {
    GeodesicSphere {
        radius: f64,
        /// Flat coordinates of the centre; the model origin by default.
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    PerturbedSphere {
        radius: f64,
        modes: Vec<ModeConfig>,
    },
    Torus {
        major: f64,
        minor: f64,
    },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    pub mode: usize,
    pub amplitude: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Inferred from the shape and `n` when absent.
    #[serde(default)]
    pub topology: Option<Topology>,
    pub resolution: usize,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PinchConfig {
    pub regime: Regime,
    pub epsilon: f64,
    pub sigma: f64,
    pub eps_z: f64,
    /// Floor for `kmin_ratio`.
    pub eps0: f64,
}

impl Default for PinchConfig {
    fn default() -> Self {
        Self {
            regime: Regime::Auto,
            epsilon: 0.1,
            sigma: 0.1,
            eps_z: 0.01,
            eps0: 0.05,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorConfig {
    /// Distance from the model origin to the reference point of the
    /// distance bound (hyperbolic runs only).
    pub distance_point: f64,
    pub distance_margin: f64,
    /// Slack constant `C` in `kato_defect <= C h^2`.
    pub kato_slack: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            distance_point: 2.0,
            distance_margin: 0.1,
            kato_slack: verify::KATO_SLACK,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub trace_csv: Option<PathBuf>,
    pub summary_json: Option<PathBuf>,
    pub frames_dir: Option<PathBuf>,
    /// Overrides `flow.sample_every`.
    pub sample_every: Option<usize>,
}

/// A validated experiment, ready to run.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub space: SpaceForm,
    pub preset: PinchPreset,
    pub flow: FlowConfig,
    pub initial: Immersion,
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn topology(&self) -> Result<Topology> {
        let n = self.ambient.n;
        let inferred = match (&self.shape, n) {
            (ShapeConfig::Torus { .. }, 2) => Topology::Torus2,
            (ShapeConfig::Torus { .. }, _) => return Err(Error::Config("torus shapes need n = 2".into())),
            (_, 2) => Topology::Sphere2,
            (_, 3) => Topology::Sphere3,
            _ => return Err(Error::Config(format!("sphere shapes need n = 2 or 3, got {n}"))),
        };
        match self.grid.topology {
            Some(t) if t != inferred => Err(Error::Config(format!(
                "grid topology {t:?} does not match the shape (expected {inferred:?})"
            ))),
            _ => Ok(inferred),
        }
    }

    /// Checks the whole config and builds the initial immersion.
    pub fn validate(&self) -> Result<Experiment> {
        let AmbientConfig { c, n, d } = self.ambient;
        if n < 2 || d < 1 {
            return Err(Error::Config(format!("need n >= 2 and d >= 1, got n = {n}, d = {d}")));
        }
        let space = SpaceForm::new(c, n + d).map_err(config_err)?;
        let domain = ParamDomain::new(self.topology()?, self.grid.resolution).map_err(config_err)?;
        let p = self.pinch;
        let preset = pinch::preset_with_regime(n, d, c, p.regime, p.epsilon, p.sigma).map_err(config_err)?;
        if !(p.eps_z >= 0.0 && p.eps0 >= 0.0) {
            return Err(Error::Config("eps_z and eps0 must be non-negative".into()));
        }
        let mut flow = self.flow.clone();
        flow.eps_z = p.eps_z;
        if let Some(s) = self.outputs.sample_every {
            flow.sample_every = s;
        }
        flow.validate().map_err(config_err)?;
        let m = self.monitors;
        if !(m.distance_point > 0.0 && m.distance_margin > 0.0 && m.kato_slack >= 0.0) {
            return Err(Error::Config("monitor constants must be positive".into()));
        }
        let initial = match &self.shape {
            ShapeConfig::GeodesicSphere { radius, center } => {
                let origin = space.origin();
                let center = center.clone().unwrap_or_else(|| origin[..space.flat_dim()].to_vec());
                immersion::make_geodesic_sphere(space, domain, &center, *radius)
            }
            ShapeConfig::PerturbedSphere { radius, modes } => {
                let modes: Vec<(usize, f64)> = modes.iter().map(|m| (m.mode, m.amplitude)).collect();
                immersion::make_perturbed_sphere(space, domain, *radius, &modes)
            }
            ShapeConfig::Torus { major, minor } => immersion::make_torus(space, domain, (*major, *minor), d),
        }
        .map_err(config_err)?;
        for path in [&self.outputs.trace_csv, &self.outputs.summary_json].into_iter().flatten() {
            check_parent(path)?;
        }
        if let Some(dir) = &self.outputs.frames_dir {
            if dir.exists() && !dir.is_dir() {
                return Err(Error::Config(format!("{} is not a directory", dir.display())));
            }
            check_parent(dir)?;
        }
        Ok(Experiment {
            config: self.clone(),
            space,
            preset,
            flow,
            initial,
        })
    }
}

/// Missing parent directories are created at write time, so only the
/// nearest existing ancestor has to be a directory.
fn check_parent(path: &Path) -> Result<()> {
    if path.is_dir() {
        return Err(Error::Config(format!("{} is a directory", path.display())));
    }
    let mut parent = path.parent();
    while let Some(p) = parent.filter(|p| !p.as_os_str().is_empty()) {
        if p.exists() {
            if !p.is_dir() {
                return Err(Error::Config(format!("{} is not a directory", p.display())));
            }
            break;
        }
        parent = p.parent();
    }
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

/// Pass/fail of each monitored property; `None` where it does not apply.
#[derive(Clone, Debug, Default, Serialize)]
pub struct PropertyFlags {
    pub initially_pinched: bool,
    pub pinching_violated: bool,
    pub pinching_preserved: Option<bool>,
    pub f_sigma_bounded: Option<bool>,
    pub z_margin_nonnegative: bool,
    pub grad_ratio_bounded: bool,
    pub kmin_ratio_above_eps0: Option<bool>,
    pub kato_within_slack: bool,
    pub distance_bound: Option<bool>,
    pub extinction_time_matches: Option<bool>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Witnesses {
    pub max_q_seen: f64,
    pub initial_max_q: f64,
    pub sup_f_sigma: Option<f64>,
    pub min_z_margin: f64,
    /// Smallest over samples of the largest `eps_z` that held.
    pub z_witness: Option<f64>,
    pub max_grad_ratio: f64,
    pub initial_grad_ratio: f64,
    pub min_kmin_ratio: Option<f64>,
    /// `max kato_defect / h^2`.
    pub kato_defect_over_h2: f64,
    pub final_roundness: f64,
    pub final_umbilicity: Option<f64>,
    pub max_quadric_defect: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    pub termination: Termination,
    #[serde(rename = "T_est")]
    pub t_est: f64,
    pub steps: usize,
    pub samples: usize,
    /// Closed-form extinction time for geodesic spheres.
    #[serde(rename = "T_exact")]
    pub t_exact: Option<f64>,
    pub witnesses: Witnesses,
    pub distance: Option<DistanceSummary>,
    pub properties: PropertyFlags,
    /// Exit status the run maps to.
    pub status: i32,
}

#[derive(Clone, Debug, Serialize)]
pub struct DistanceSummary {
    pub big_r: f64,
    pub t_bound: f64,
    pub min_slack: f64,
    pub holds: bool,
}

impl From<&DistanceReport> for DistanceSummary {
    fn from(r: &DistanceReport) -> Self {
        Self {
            big_r: r.big_r,
            t_bound: r.t_bound,
            min_slack: r.samples.iter().map(|s| s.bound - s.r_max).fold(f64::INFINITY, f64::min),
            holds: r.holds(),
        }
    }
}

/// Result of a run, before anything is written.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub trace: FlowTrace,
    pub distance: Option<DistanceReport>,
    pub summary: Summary,
}

/// Reference point at the given distance from the origin along the first
/// spatial axis.
fn distance_point(space: &SpaceForm, s: f64) -> Vec<f64> {
    let k = (-space.c()).sqrt();
    let mut y = vec![0.0; space.flat_dim()];
    y[0] = (k * s).cosh() / k;
    y[1] = (k * s).sinh() / k;
    y
}

impl Experiment {
    /// Runs the flow, writing frames as they are sampled when a frames
    /// directory is configured.
    pub fn run(&self) -> Result<RunOutcome> {
        let mut monitor = if self.space.c() < 0.0 {
            let m = self.config.monitors;
            let y = distance_point(&self.space, m.distance_point);
            Some(DistanceMonitor::new(self.space, self.config.ambient.n, &y, m.distance_margin)?)
        } else {
            None
        };
        let frames = self.config.outputs.frames_dir.clone();
        if let Some(dir) = &frames {
            fs::create_dir_all(dir)?;
        }
        let trace = flow::run_with(&self.initial, &self.preset, &self.flow, |ev| {
            if !ev.sampled {
                return Ok(());
            }
            if let Some(m) = monitor.as_mut() {
                m.observe(ev.t, ev.imm)?;
            }
            if let Some(dir) = &frames {
                write_frame(&dir.join(format!("frame_{:07}.txt", ev.step)), ev.imm)?;
            }
            Ok(())
        })?;
        let distance = monitor.map(|m| m.finish(trace.t_est)).transpose()?;
        let summary = self.summarize(&trace, distance.as_ref());
        Ok(RunOutcome {
            trace,
            distance,
            summary,
        })
    }

    fn summarize(&self, trace: &FlowTrace, distance: Option<&DistanceReport>) -> Summary {
        let reports: Vec<_> = trace.samples.iter().map(|s| &s.report).collect();
        let first = reports[0];
        let last = reports[reports.len() - 1];
        let tol = self.preset.q_tolerance();
        let h = self.initial.grid().spacing();

        let mut w = Witnesses {
            max_q_seen: trace.max_q_seen.max(reports.iter().map(|r| r.max_q).fold(f64::NEG_INFINITY, f64::max)),
            initial_max_q: first.max_q,
            sup_f_sigma: Some(0.0),
            min_z_margin: f64::INFINITY,
            z_witness: None,
            max_grad_ratio: 0.0,
            initial_grad_ratio: first.grad_ratio,
            min_kmin_ratio: Some(f64::INFINITY),
            kato_defect_over_h2: f64::NEG_INFINITY,
            final_roundness: last.roundness,
            final_umbilicity: last.umbilicity,
            max_quadric_defect: trace.max_quadric_defect,
        };
        for r in &reports {
            w.sup_f_sigma = w.sup_f_sigma.zip(r.sup_f_sigma).map(|(a, b)| a.max(b));
            w.min_z_margin = w.min_z_margin.min(r.z_margin);
            if let Some(z) = r.z_witness {
                w.z_witness = Some(w.z_witness.map_or(z, |m: f64| m.min(z)));
            }
            w.max_grad_ratio = w.max_grad_ratio.max(r.grad_ratio);
            w.min_kmin_ratio = w.min_kmin_ratio.zip(r.kmin_ratio).map(|(a, b)| a.min(b));
            w.kato_defect_over_h2 = w.kato_defect_over_h2.max(r.kato_defect / (h * h));
        }

        let initially_pinched = first.max_q < 0.0;
        let early = (reports.len() / 10).max(1);
        let early_sup = reports[..early]
            .iter()
            .map(|r| r.sup_f_sigma)
            .try_fold(0.0f64, |m, s| s.map(|s| m.max(s)));
        let t_exact = match &self.config.shape {
            ShapeConfig::GeodesicSphere { radius, .. } => ShrinkerOracle::new(self.space.c(), self.config.ambient.n, *radius)
                .ok()
                .map(|o| o.t_exact())
                .filter(|t| t.is_finite()),
            _ => None,
        };
        let properties = PropertyFlags {
            initially_pinched,
            pinching_violated: trace.violation.is_some() || w.max_q_seen > tol,
            pinching_preserved: initially_pinched.then(|| w.max_q_seen <= tol),
            f_sigma_bounded: initially_pinched.then(|| match (w.sup_f_sigma, early_sup) {
                // f_sigma vanishes identically on round spheres, where it is pure discretisation noise
                (Some(s), Some(e)) => s <= (1.05 * e).max(h * h),
                _ => false,
            }),
            z_margin_nonnegative: w.min_z_margin >= 0.0,
            grad_ratio_bounded: w.max_grad_ratio <= 10.0 * w.initial_grad_ratio.max(f64::MIN_POSITIVE),
            kmin_ratio_above_eps0: initially_pinched.then(|| w.min_kmin_ratio.is_some_and(|k| k >= self.config.pinch.eps0)),
            kato_within_slack: w.kato_defect_over_h2 <= self.config.monitors.kato_slack,
            distance_bound: distance.map(DistanceReport::holds),
            extinction_time_matches: t_exact
                .filter(|_| trace.termination == Termination::BlowupResolved)
                .map(|t| ((trace.t_est - t) / t).abs() <= 0.02),
        };
        let violated = properties.pinching_preserved == Some(false) || properties.distance_bound == Some(false);
        Summary {
            schema_version: SCHEMA_VERSION,
            termination: trace.termination,
            t_est: trace.t_est,
            steps: trace.steps,
            samples: trace.samples.len(),
            t_exact,
            witnesses: w,
            distance: distance.map(DistanceSummary::from),
            properties,
            status: if violated { EXIT_PROPERTY } else { EXIT_OK },
        }
    }
}

pub const TRACE_COLUMNS: [&str; 14] = [
    "t",
    "dt",
    "area",
    "min_H2",
    "max_H2",
    "min_A2",
    "max_A2",
    "maxQ",
    "sup_fsigma",
    "z_margin",
    "grad_ratio",
    "roundness",
    "umbilicity",
    "kmin_ratio",
];

fn opt(x: Option<f64>) -> f64 {
    x.unwrap_or(f64::NAN)
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> String {
    let bytes = w.into_inner().expect("in-memory csv writer");
    String::from_utf8(bytes).expect("csv output is utf-8")
}

pub fn trace_csv(trace: &FlowTrace) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_COLUMNS).expect("in-memory csv writer");
    for s in &trace.samples {
        let r = &s.report;
        let row = [
            s.t,
            s.dt,
            r.area,
            r.min_h2,
            r.max_h2,
            r.min_a2,
            r.max_a2,
            r.max_q,
            opt(r.sup_f_sigma),
            r.z_margin,
            r.grad_ratio,
            r.roundness,
            opt(r.umbilicity),
            opt(r.kmin_ratio),
        ];
        w.write_record(row.iter().map(|x| x.to_string())).expect("in-memory csv writer");
    }
    finish_csv(w)
}

/// One node per line, a blank line between patches. Hyperbolic runs are
/// written in Beltrami-Klein coordinates `F^i / F^0`.
pub fn frame_text(imm: &Immersion) -> String {
    let space = imm.space();
    let dim = space.flat_dim();
    let per_patch = imm.len() / imm.grid().topology().patch_count();
    let mut out = String::with_capacity(imm.len() * 24 * dim);
    for (i, p) in imm.coords().iter().enumerate() {
        if i > 0 && i % per_patch == 0 {
            out.push('\n');
        }
        let coords: Vec<f64> = if space.c() < 0.0 {
            p[1..dim].iter().map(|x| x / p[0]).collect()
        } else {
            p[..dim].to_vec()
        };
        for (k, x) in coords.iter().enumerate() {
            if k > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{x}");
        }
        out.push('\n');
    }
    out
}

fn write_frame(path: &Path, imm: &Immersion) -> Result<()> {
    fs::write(path, frame_text(imm))?;
    Ok(())
}

fn write_outputs(exp: &Experiment, outcome: &RunOutcome) -> Result<()> {
    let out = &exp.config.outputs;
    if let Some(p) = &out.trace_csv {
        write_file(p, &trace_csv(&outcome.trace))?;
    }
    if let Some(p) = &out.summary_json {
        let text = serde_json::to_string_pretty(&outcome.summary).map_err(|e| Error::Config(e.to_string()))?;
        write_file(p, &(text + "\n"))?;
    }
    Ok(())
}

/// Maps an error to the exit status of the stage it came from.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::PinchingViolation { .. } => EXIT_PROPERTY,
        _ => EXIT_NUMERICAL,
    }
}

/// `run --config <path>`.
pub fn cmd_run(config: &Path, out: &mut dyn std::io::Write) -> i32 {
    let exp = match ExperimentConfig::load(config).and_then(|c| c.validate()) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let outcome = match exp.run() {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    if let Err(e) = write_outputs(&exp, &outcome) {
        eprintln!("error: {e}");
        return EXIT_NUMERICAL;
    }
    let s = &outcome.summary;
    let _ = writeln!(
        out,
        "termination {:?}, T_est {}, steps {}, max Q {:.6e}",
        s.termination, s.t_est, s.steps, s.witnesses.max_q_seen
    );
    if let Some(t) = s.t_exact {
        let _ = writeln!(out, "T_exact {t} (relative error {:.3e})", (s.t_est - t) / t);
    }
    s.status
}

/// `verify --suite <name>`.
pub fn cmd_verify(suite: &str, out: &mut dyn std::io::Write) -> i32 {
    let suite: Suite = match suite.parse() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let checks = verify::run_suite(suite);
    let mut ok = true;
    for c in &checks {
        ok &= c.passed;
        let _ = writeln!(
            out,
            "{}  {:<52} {:>13.6e}  {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.measured,
            c.tolerance
        );
    }
    let _ = writeln!(out, "{} of {} checks passed", checks.iter().filter(|c| c.passed).count(), checks.len());
    if ok {
        EXIT_OK
    } else {
        EXIT_PROPERTY
    }
}

/// Replaces the value at a dotted path (`shape.radius`, `flow.cfl`, ...).
pub fn set_dotted(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) if last => {
                map.insert(part.to_string(), value);
                return Ok(());
            }
            Value::Object(map) => map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default())),
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| Error::Config(format!("{part:?} in {key:?} is not an array index")))?;
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| Error::Config(format!("index {idx} out of range in {key:?}")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::Config(format!("{key:?} does not address a config field"))),
        };
    }
    Err(Error::Config("empty parameter key".into()))
}

fn parse_value(s: &str) -> Value {
    serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.to_string()))
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub value: String,
    pub status: i32,
    pub termination: Option<Termination>,
    pub t_est: Option<f64>,
    pub t_exact: Option<f64>,
    pub max_q: Option<f64>,
    pub min_z_margin: Option<f64>,
    pub min_kmin_ratio: Option<f64>,
    pub final_roundness: Option<f64>,
    pub error: Option<String>,
}

pub const SWEEP_COLUMNS: [&str; 10] = [
    "value",
    "status",
    "termination",
    "T_est",
    "T_exact",
    "maxQ",
    "min_z_margin",
    "min_kmin_ratio",
    "final_roundness",
    "error",
];

/// Runs one experiment per value. Per-run output files are suppressed; the
/// rows carry the summary columns.
pub fn sweep(base: &Value, key: &str, values: &[String]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let mut rows = Vec::with_capacity(values.len());
    for v in values {
        let mut cfg = base.clone();
        let result = set_dotted(&mut cfg, key, parse_value(v))
            .and_then(|_| serde_json::from_value::<ExperimentConfig>(cfg).map_err(|e| Error::Config(e.to_string())))
            .and_then(|mut c| {
                c.outputs = OutputConfig {
                    sample_every: c.outputs.sample_every,
                    ..OutputConfig::default()
                };
                c.validate()
            });
        let row = match result.and_then(|exp| exp.run()) {
            Ok(o) => {
                let s = o.summary;
                SweepRow {
                    value: v.clone(),
                    status: s.status,
                    termination: Some(s.termination),
                    t_est: Some(s.t_est),
                    t_exact: s.t_exact,
                    max_q: Some(s.witnesses.max_q_seen),
                    min_z_margin: Some(s.witnesses.min_z_margin),
                    min_kmin_ratio: s.witnesses.min_kmin_ratio,
                    final_roundness: Some(s.witnesses.final_roundness),
                    error: None,
                }
            }
            Err(e) => SweepRow {
                value: v.clone(),
                status: exit_code(&e),
                termination: None,
                t_est: None,
                t_exact: None,
                max_q: None,
                min_z_margin: None,
                min_kmin_ratio: None,
                final_roundness: None,
                error: Some(e.to_string()),
            },
        };
        rows.push(row);
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let num = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_COLUMNS).expect("in-memory csv writer");
    for r in rows {
        let term = r
            .termination
            .and_then(|t| serde_json::to_value(t).ok())
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        let record = [
            r.value.clone(),
            r.status.to_string(),
            term,
            num(r.t_est),
            num(r.t_exact),
            num(r.max_q),
            num(r.min_z_margin),
            num(r.min_kmin_ratio),
            num(r.final_roundness),
            r.error.clone().unwrap_or_default(),
        ];
        w.write_record(&record).expect("in-memory csv writer");
    }
    finish_csv(w)
}

/// `sweep --config <path> --param <key> --values <list>`.
pub fn cmd_sweep(config: &Path, key: &str, values: &[String], output: Option<&Path>, out: &mut dyn std::io::Write) -> i32 {
    let base: Value = match fs::read_to_string(config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", config.display())))
        .and_then(|t| serde_json::from_str(&t).map_err(|e| Error::Config(e.to_string())))
    {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let rows = match sweep(&base, key, values) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let csv = sweep_csv(&rows);
    match output {
        Some(p) => {
            if let Err(e) = fs::write(p, &csv) {
                eprintln!("error: cannot write {}: {e}", p.display());
                return EXIT_NUMERICAL;
            }
        }
        None => {
            let _ = out.write_all(csv.as_bytes());
        }
    }
    rows.iter().map(|r| r.status).max().unwrap_or(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPHERE: &str = r#"{
        "ambient": {"c": -1.0, "n": 2, "d": 1},
        "shape": {"kind": "geodesic_sphere", "radius": 0.5},
        "grid": {"resolution": 8},
        "flow": {"integrator": "euler", "sample_every": 5}
    }"#;

    #[test]
    fn parses_and_validates() {
        let cfg = ExperimentConfig::from_json(SPHERE).unwrap();
        let exp = cfg.validate().unwrap();
        assert_eq!(exp.initial.grid().topology(), Topology::Sphere2);
        assert_eq!(exp.flow.sample_every, 5);
    }

    #[test]
    fn rejects_inconsistent_configs() {
        let bad = SPHERE.replace("\"n\": 2", "\"n\": 4");
        assert!(matches!(ExperimentConfig::from_json(&bad).unwrap().validate(), Err(Error::Config(_))));
        let bad = SPHERE.replace("\"resolution\": 8", "\"resolution\": 8, \"topology\": \"torus2\"");
        assert!(ExperimentConfig::from_json(&bad).unwrap().validate().is_err());
        let bad = SPHERE.replace("radius", "radios");
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }

    #[test]
    fn dotted_keys() {
        let mut v: Value = serde_json::from_str(SPHERE).unwrap();
        set_dotted(&mut v, "shape.radius", parse_value("0.3")).unwrap();
        set_dotted(&mut v, "pinch.epsilon", parse_value("0.2")).unwrap();
        let cfg: ExperimentConfig = serde_json::from_value(v.clone()).unwrap();
        assert!(matches!(cfg.shape, ShapeConfig::GeodesicSphere { radius, .. } if radius == 0.3));
        assert_eq!(cfg.pinch.epsilon, 0.2);
        assert!(set_dotted(&mut v, "shape.radius.x", parse_value("1")).is_err());
    }

    #[test]
    fn klein_frame_layout() {
        let exp = ExperimentConfig::from_json(SPHERE).unwrap().validate().unwrap();
        let text = frame_text(&exp.initial);
        let blocks: Vec<&str> = text.split("\n\n").collect();
        assert_eq!(blocks.len(), 6);
        let first: Vec<f64> = text.lines().next().unwrap().split(' ').map(|x| x.parse().unwrap()).collect();
        assert_eq!(first.len(), 3);
        let r = first.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((r - 0.5f64.tanh()).abs() < 1e-12);
    }
}
