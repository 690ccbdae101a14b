//! Explicit time integration of `dF/dt = H`.
//!
//! Nodes move with velocity `H`, optionally plus a tangential gauge term
//! that keeps the parametrisation regular (the surface itself moves the
//! same either way); after every stage the coordinates are projected back
//! onto the model quadric. The run stops once the
//! curvature is no longer resolved by the grid (or has grown by a fixed
//! factor, which is what happens first on self-similar shrinkers), at a
//! time cap, or when the step size underflows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, FlowEval, Gauge};
use crate::immersion::Immersion;
use crate::pinch::{self, PinchPreset, PinchReport};
use crate::spaceform::{FlatVec, MAX_FLAT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Euler,
    #[default]
    Rk4,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    /// Safety factor on the parabolic step bound.
    pub cfl: f64,
    pub t_end: Option<f64>,
    /// Stop when `max |A|^2 h_min^2` exceeds this value.
    pub blowup_a2: f64,
    /// Stop when `max |A|^2` exceeds this multiple of its initial value.
    pub blowup_growth: f64,
    pub dt_min: f64,
    pub integrator: Integrator,
    pub gauge: Gauge,
    pub max_steps: usize,
    /// Full monitor reports are taken every this many steps.
    pub sample_every: usize,
    /// Witness constant for the Z margin.
    pub eps_z: f64,
    /// Track `max Q` after every accepted step.
    pub monitor_pinching: bool,
    /// End the run on the first pinching violation instead of flagging it.
    pub stop_on_violation: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            cfl: 0.2,
            t_end: None,
            blowup_a2: 0.5,
            blowup_growth: 1e3,
            dt_min: 1e-12,
            integrator: Integrator::Rk4,
            gauge: Gauge::DeTurck,
            max_steps: 1_000_000,
            sample_every: 10,
            eps_z: 0.01,
            monitor_pinching: true,
            stop_on_violation: false,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::input(format!("cfl must lie in (0, 1], got {}", self.cfl)));
        }
        if !(self.blowup_a2 > 0.0) || !(self.blowup_growth > 1.0) {
            return Err(Error::input("blowup thresholds must be positive (growth > 1)"));
        }
        if !(self.dt_min > 0.0) {
            return Err(Error::input("dt_min must be positive"));
        }
        if let Some(t) = self.t_end {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::input("t_end must be positive"));
            }
        }
        if self.sample_every == 0 || self.max_steps == 0 {
            return Err(Error::input("sample_every and max_steps must be positive"));
        }
        if !(self.eps_z >= 0.0 && self.eps_z.is_finite()) {
            return Err(Error::input("eps_z must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Curvature reached the resolution limit: the singularity is resolved
    /// as far as the grid allows.
    BlowupResolved,
    TEndReached,
    DtUnderflow,
    PinchingViolated,
    MaxStepsReached,
}

#[derive(Clone, Debug, Serialize)]
pub struct Sample {
    pub step: usize,
    pub t: f64,
    /// Step that will be taken from this state (the last accepted step for
    /// the final sample).
    pub dt: f64,
    pub report: PinchReport,
    /// `max |<F,F> - 1/c|` over nodes.
    pub quadric_defect: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Violation {
    pub step: usize,
    pub t: f64,
    pub max_q: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowTrace {
    pub samples: Vec<Sample>,
    pub termination: Termination,
    /// Last accepted time.
    pub t_est: f64,
    pub steps: usize,
    /// Largest `max Q` over all accepted states.
    pub max_q_seen: f64,
    pub violation: Option<Violation>,
    /// Largest relative area increase over a single step.
    pub max_area_increase: f64,
    pub max_quadric_defect: f64,
}

/// One accepted state, handed to run observers.
pub struct StepEvent<'a> {
    pub step: usize,
    pub t: f64,
    pub imm: &'a Immersion,
    pub sampled: bool,
}

/// Stability-limited step for the current state.
pub fn choose_dt(imm: &Immersion, cfg: &FlowConfig) -> Result<f64> {
    let eval = geometry::flow_eval(imm, Gauge::Normal)?;
    let dt = dt_from_eval(imm, cfg, &eval);
    if dt < cfg.dt_min {
        return Err(Error::StepRejected(format!("dt {dt:e} below dt_min {:e}", cfg.dt_min)));
    }
    Ok(dt)
}

fn h_min_sq(imm: &Immersion, eval: &FlowEval) -> f64 {
    let h = imm.grid().spacing();
    h * h * eval.min_metric_scale
}

fn dt_from_eval(imm: &Immersion, cfg: &FlowConfig, eval: &FlowEval) -> f64 {
    let hm2 = h_min_sq(imm, eval);
    let stiff = eval.max_a2 + imm.intrinsic_dim() as f64 * imm.space().c().abs();
    cfg.cfl * hm2 / (1.0 + stiff * hm2)
}

/// Advances one step of size `dt > 0` in the default gauge.
pub fn step(imm: &Immersion, dt: f64, integrator: Integrator) -> Result<Immersion> {
    step_with_gauge(imm, dt, integrator, Gauge::default())
}

pub fn step_with_gauge(imm: &Immersion, dt: f64, integrator: Integrator, gauge: Gauge) -> Result<Immersion> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::input(format!("dt must be positive, got {dt}")));
    }
    let v = velocity(imm, gauge)?;
    step_from(imm, &v, dt, integrator, gauge)
}

fn velocity(imm: &Immersion, gauge: Gauge) -> Result<Vec<FlatVec>> {
    geometry::flow_eval(imm, gauge)
        .map(|e| e.v)
        .map_err(|e| Error::StepRejected(e.to_string()))
}

fn advance(imm: &Immersion, base: &[FlatVec], k: &[FlatVec], s: f64) -> Result<Immersion> {
    let space = imm.space();
    let mut out = Vec::with_capacity(base.len());
    for (p, v) in base.iter().zip(k) {
        let mut q = *p;
        for c in 0..MAX_FLAT {
            q[c] += s * v[c];
        }
        space
            .project(&mut q)
            .map_err(|e| Error::StepRejected(e.to_string()))?;
        out.push(q);
    }
    Ok(imm.with_coords_unchecked(out))
}

/// Step of signed size `dt` given the velocity at the current state.
pub(crate) fn step_from(
    imm: &Immersion,
    k1: &[FlatVec],
    dt: f64,
    integrator: Integrator,
    gauge: Gauge,
) -> Result<Immersion> {
    let base = imm.coords();
    match integrator {
        Integrator::Euler => advance(imm, base, k1, dt),
        Integrator::Rk4 => {
            let s2 = advance(imm, base, k1, 0.5 * dt)?;
            let k2 = velocity(&s2, gauge)?;
            let s3 = advance(imm, base, &k2, 0.5 * dt)?;
            let k3 = velocity(&s3, gauge)?;
            let s4 = advance(imm, base, &k3, dt)?;
            let k4 = velocity(&s4, gauge)?;
            let mut k = Vec::with_capacity(base.len());
            for i in 0..base.len() {
                let mut v = [0.0; MAX_FLAT];
                for c in 0..MAX_FLAT {
                    v[c] = (k1[i][c] + 2.0 * k2[i][c] + 2.0 * k3[i][c] + k4[i][c]) / 6.0;
                }
                k.push(v);
            }
            advance(imm, base, &k, dt)
        }
    }
}

/// Signed step used by time-derivative probes.
pub(crate) fn step_signed(imm: &Immersion, dt: f64, integrator: Integrator, gauge: Gauge) -> Result<Immersion> {
    let v = velocity(imm, gauge)?;
    step_from(imm, &v, dt, integrator, gauge)
}

pub fn run(imm0: &Immersion, preset: &PinchPreset, cfg: &FlowConfig) -> Result<FlowTrace> {
    run_with(imm0, preset, cfg, |_| Ok(()))
}

/// Runs the flow, calling `observer` on the initial state and after every
/// accepted step.
pub fn run_with(
    imm0: &Immersion,
    preset: &PinchPreset,
    cfg: &FlowConfig,
    mut observer: impl FnMut(&StepEvent) -> Result<()>,
) -> Result<FlowTrace> {
    cfg.validate()?;
    let mut state = imm0.clone();
    let mut eval = geometry::flow_eval(&state, cfg.gauge)?;
    let a2_initial = eval.max_a2.max(f64::MIN_POSITIVE);
    let mut t = 0.0;
    let mut steps = 0usize;
    let mut trace = FlowTrace {
        samples: Vec::new(),
        termination: Termination::MaxStepsReached,
        t_est: 0.0,
        steps: 0,
        max_q_seen: f64::NEG_INFINITY,
        violation: None,
        max_area_increase: f64::NEG_INFINITY,
        max_quadric_defect: state.max_quadric_defect(),
    };
    let tol = preset.q_tolerance();
    let mut last_dt = dt_from_eval(&state, cfg, &eval);

    let sample = |state: &Immersion, step: usize, t: f64, dt: f64| -> Result<Sample> {
        Ok(Sample {
            step,
            t,
            dt,
            report: pinch::report(state, preset, cfg.eps_z)?,
            quadric_defect: state.max_quadric_defect(),
        })
    };

    trace.samples.push(sample(&state, 0, 0.0, last_dt)?);
    observer(&StepEvent {
        step: 0,
        t: 0.0,
        imm: &state,
        sampled: true,
    })?;
    let mut last_sampled = 0usize;

    let termination = loop {
        if cfg.monitor_pinching {
            let q = eval.max_q(preset);
            trace.max_q_seen = trace.max_q_seen.max(q);
            if q > tol && trace.violation.is_none() {
                trace.violation = Some(Violation { step: steps, t, max_q: q });
                if cfg.stop_on_violation {
                    break Termination::PinchingViolated;
                }
            }
        }
        if steps >= cfg.max_steps {
            break Termination::MaxStepsReached;
        }
        let resolved = eval.max_a2 * h_min_sq(&state, &eval);
        if resolved > cfg.blowup_a2 || eval.max_a2 >= cfg.blowup_growth * a2_initial {
            break Termination::BlowupResolved;
        }
        let mut dt = dt_from_eval(&state, cfg, &eval);
        if let Some(te) = cfg.t_end {
            if t >= te * (1.0 - 1e-14) {
                break Termination::TEndReached;
            }
            dt = dt.min(te - t);
        }
        if dt < cfg.dt_min {
            break Termination::DtUnderflow;
        }
        // retry with halved steps when a stage fails
        let next = loop {
            match step_from(&state, &eval.v, dt, cfg.integrator, cfg.gauge)
                .and_then(|s| geometry::flow_eval(&s, cfg.gauge).map(|e| (s, e)))
            {
                Ok(ok) => break Some(ok),
                Err(_) if dt * 0.5 >= cfg.dt_min => dt *= 0.5,
                Err(_) => break None,
            }
        };
        let Some((new_state, new_eval)) = next else {
            break Termination::DtUnderflow;
        };
        trace.max_area_increase = trace
            .max_area_increase
            .max((new_eval.area - eval.area) / eval.area);
        trace.max_quadric_defect = trace.max_quadric_defect.max(new_state.max_quadric_defect());
        state = new_state;
        eval = new_eval;
        t += dt;
        steps += 1;
        last_dt = dt;
        let sampled = steps % cfg.sample_every == 0;
        if sampled {
            trace.samples.push(sample(&state, steps, t, dt)?);
            last_sampled = steps;
        }
        observer(&StepEvent {
            step: steps,
            t,
            imm: &state,
            sampled,
        })?;
    };
    if last_sampled != steps {
        trace.samples.push(sample(&state, steps, t, last_dt)?);
        observer(&StepEvent {
            step: steps,
            t,
            imm: &state,
            sampled: true,
        })?;
    }
    trace.termination = termination;
    trace.t_est = t;
    trace.steps = steps;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{ParamDomain, Topology};
    use crate::immersion::{make_geodesic_sphere, make_torus};
    use crate::spaceform::SpaceForm;

    fn s2(res: usize) -> ParamDomain {
        ParamDomain::new(Topology::Sphere2, res).unwrap()
    }

    #[test]
    fn euclidean_euler_step_shrinks_radius() {
        let space = SpaceForm::new(0.0, 3).unwrap();
        let imm = make_geodesic_sphere(space, s2(24), &[0.0; 3], 1.0).unwrap();
        let next = step(&imm, 1e-3, Integrator::Euler).unwrap();
        for p in next.coords() {
            let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            assert!((1.0 - r - 2e-3).abs() < 2e-5, "{}", 1.0 - r);
        }
    }

    #[test]
    fn hyperbolic_euler_step() {
        let space = SpaceForm::new(-1.0, 3).unwrap();
        let imm = make_geodesic_sphere(space, s2(24), &space.origin()[..4], 0.5).unwrap();
        let next = step(&imm, 1e-3, Integrator::Euler).unwrap();
        let expect = 0.5f64.cosh() * (-2e-3f64).exp();
        for p in next.coords() {
            assert!((p[0] / expect - 1.0).abs() < 2e-5);
        }
        assert!(next.max_quadric_defect() < 1e-12);
    }

    #[test]
    fn equator_is_stationary() {
        let space = SpaceForm::new(1.0, 3).unwrap();
        let imm = make_geodesic_sphere(space, s2(16), &space.origin()[..4], std::f64::consts::FRAC_PI_2).unwrap();
        let next = step(&imm, 1e-3, Integrator::Rk4).unwrap();
        let moved = imm
            .coords()
            .iter()
            .zip(next.coords())
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        assert!(moved < 1e-12);
    }

    #[test]
    fn dt_scales_with_resolution_and_curvature() {
        let space = SpaceForm::new(-1.0, 3).unwrap();
        let cfg = FlowConfig::default();
        let a = make_geodesic_sphere(space, s2(16), &space.origin()[..4], 0.5).unwrap();
        let b = make_geodesic_sphere(space, s2(32), &space.origin()[..4], 0.5).unwrap();
        let ratio = choose_dt(&a, &cfg).unwrap() / choose_dt(&b, &cfg).unwrap();
        assert!((ratio / 4.0 - 1.0).abs() < 0.2, "{ratio}");
        // a large flat torus against a small sphere at equal resolution
        let flat = SpaceForm::new(0.0, 3).unwrap();
        let t = make_torus(flat, ParamDomain::new(Topology::Torus2, 32).unwrap(), (8.0, 4.0), 1).unwrap();
        let small = make_geodesic_sphere(flat, s2(32), &[0.0; 3], 0.2).unwrap();
        assert!(choose_dt(&t, &cfg).unwrap() > choose_dt(&small, &cfg).unwrap());
    }

    #[test]
    fn rejects_bad_inputs() {
        let space = SpaceForm::new(0.0, 3).unwrap();
        let imm = make_geodesic_sphere(space, s2(8), &[0.0; 3], 1.0).unwrap();
        assert!(step(&imm, 0.0, Integrator::Euler).is_err());
        assert!(step(&imm, -1.0, Integrator::Euler).is_err());
        let cfg = FlowConfig { cfl: 0.0, ..FlowConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn t_end_and_step_limits() {
        let space = SpaceForm::new(0.0, 3).unwrap();
        let imm = make_geodesic_sphere(space, s2(8), &[0.0; 3], 1.0).unwrap();
        let preset = crate::pinch::preset(2, 1, 0.0, 0.1, 0.1).unwrap();
        let cfg = FlowConfig { t_end: Some(0.01), sample_every: 3, ..FlowConfig::default() };
        let tr = run(&imm, &preset, &cfg).unwrap();
        assert_eq!(tr.termination, Termination::TEndReached);
        assert!((tr.t_est - 0.01).abs() < 1e-12);
        assert!(tr.samples.windows(2).all(|w| w[1].t > w[0].t && w[1].dt > 0.0));
        let cfg = FlowConfig { max_steps: 5, ..FlowConfig::default() };
        let tr = run(&imm, &preset, &cfg).unwrap();
        assert_eq!(tr.termination, Termination::MaxStepsReached);
        assert_eq!(tr.steps, 5);
        assert!(tr.max_area_increase < 0.0);
    }
}
