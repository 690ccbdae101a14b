//! Independent checks of the numerics: closed-form shrinking spheres (with
//! a scalar ODE cross-check), discrete residuals of the curvature evolution
//! equations and of Simons' identity, the distance comparison bound for
//! hyperbolic runs, and a refinement harness that turns any scalar probe
//! into measured convergence orders.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{self, FlowTrace, Integrator};
use crate::geometry::{self, Gauge, GeometryField};
use crate::grid::ParamDomain;
use crate::immersion::Immersion;
use crate::spaceform::{FlatVec, SpaceForm};

/// Geodesic spheres shrink self-similarly; their radius obeys
/// `dr/dt = -n kappa(r)` with `kappa` the principal curvature of the
/// distance sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ShrinkerOracle {
    pub c: f64,
    pub n: usize,
    pub r0: f64,
}

impl ShrinkerOracle {
    pub fn new(c: f64, n: usize, r0: f64) -> Result<Self> {
        if !c.is_finite() || n == 0 {
            return Err(Error::input("oracle needs finite c and n >= 1"));
        }
        if !(r0 > 0.0 && r0.is_finite()) {
            return Err(Error::input(format!("radius must be positive, got {r0}")));
        }
        if c > 0.0 && c.sqrt() * r0 > std::f64::consts::FRAC_PI_2 + 1e-12 {
            return Err(Error::input("radius beyond the equator of the sphere"));
        }
        Ok(Self { c, n, r0 })
    }

    fn k(&self) -> f64 {
        self.c.abs().sqrt()
    }

    fn rate(&self) -> f64 {
        self.n as f64 * self.c.abs()
    }

    /// Extinction time; infinite for the totally geodesic equator.
    pub fn t_exact(&self) -> f64 {
        if self.c > 0.0 && self.k() * self.r0 >= std::f64::consts::FRAC_PI_2 - 1e-12 {
            return f64::INFINITY;
        }
        self.time_at_radius(0.0)
    }

    /// Radius at time `t`, or `None` past extinction.
    pub fn radius_at(&self, t: f64) -> Option<f64> {
        if t < 0.0 || t > self.t_exact() {
            return None;
        }
        let k = self.k();
        let r = if self.c < 0.0 {
            ((k * self.r0).cosh() * (-self.rate() * t).exp()).max(1.0).acosh() / k
        } else if self.c == 0.0 {
            (self.r0 * self.r0 - 2.0 * self.n as f64 * t).max(0.0).sqrt()
        } else {
            ((k * self.r0).cos() * (self.rate() * t).exp()).min(1.0).acos() / k
        };
        Some(r)
    }

    /// Time at which the sphere has shrunk to radius `r <= r0`.
    pub fn time_at_radius(&self, r: f64) -> f64 {
        let k = self.k();
        if self.c < 0.0 {
            ((k * self.r0).cosh() / (k * r).cosh()).ln() / self.rate()
        } else if self.c == 0.0 {
            (self.r0 * self.r0 - r * r) / (2.0 * self.n as f64)
        } else {
            ((k * r).cos() / (k * self.r0).cos()).ln() / self.rate()
        }
    }

    /// Principal curvature of the distance sphere of radius `r`.
    pub fn principal_curvature(&self, r: f64) -> f64 {
        let k = self.k();
        if self.c < 0.0 {
            k / (k * r).tanh()
        } else if self.c == 0.0 {
            1.0 / r
        } else {
            k / (k * r).tan()
        }
    }

    /// Radius at which the principal curvature equals `kappa`.
    pub fn radius_at_curvature(&self, kappa: f64) -> f64 {
        let k = self.k();
        if self.c < 0.0 {
            (k / kappa).atanh() / k
        } else if self.c == 0.0 {
            1.0 / kappa
        } else {
            (k / kappa).atan() / k
        }
    }

    /// `|A|^2 = n kappa^2` at time `t`.
    pub fn normsq_a_at(&self, t: f64) -> Option<f64> {
        let r = self.radius_at(t)?;
        Some(self.n as f64 * self.principal_curvature(r).powi(2))
    }

    /// Time at which `|A|^2` first reaches `a2`.
    pub fn time_at_normsq_a(&self, a2: f64) -> f64 {
        let kappa = (a2 / self.n as f64).sqrt();
        self.time_at_radius(self.radius_at_curvature(kappa))
    }
}

/// Integrates `dr/dt = -n kappa(r)` from `r0` to `t_end` with an adaptive
/// Dormand-Prince 5(4) pair.
pub fn integrate_shrinker_radius(oracle: &ShrinkerOracle, t_end: f64, tol: f64) -> Result<f64> {
    let o = *oracle;
    dopri5(move |_, r| -(o.n as f64) * o.principal_curvature(r), oracle.r0, 0.0, t_end, tol)
}

/// Scalar Dormand-Prince 5(4) with local error control `|err| <= tol (1 + |y|)`.
pub fn dopri5(f: impl Fn(f64, f64) -> f64, y0: f64, t0: f64, t1: f64, tol: f64) -> Result<f64> {
    const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    if !(tol > 0.0) || !(t1 >= t0) {
        return Err(Error::input("dopri5 needs tol > 0 and t1 >= t0"));
    }
    let (mut t, mut y) = (t0, y0);
    let mut h = ((t1 - t0) * 1e-3).max(1e-12);
    let mut steps = 0usize;
    while t < t1 {
        steps += 1;
        if steps > 10_000_000 {
            return Err(Error::NumericalDomain("dopri5 step budget exhausted".into()));
        }
        h = h.min(t1 - t);
        let mut k = [0.0; 7];
        for s in 0..7 {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(s) {
                ys += h * A[s][j] * kj;
            }
            k[s] = f(t + C[s] * h, ys);
        }
        let y5 = y + h * (0..7).map(|s| B5[s] * k[s]).sum::<f64>();
        let y4 = y + h * (0..7).map(|s| B4[s] * k[s]).sum::<f64>();
        if !y5.is_finite() {
            return Err(Error::NumericalDomain("dopri5 produced a non-finite value".into()));
        }
        let err = (y5 - y4).abs() / (tol * (1.0 + y.abs()));
        if err <= 1.0 {
            t += h;
            y = y5;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < 1e-15 * (1.0 + t.abs()) {
            return Err(Error::NumericalDomain("dopri5 step size underflow".into()));
        }
    }
    Ok(y)
}

/// Identity tested by a residual.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Equation {
    /// `d/dt |H|^2 = Lap |H|^2 - 2|grad H|^2 + 2 R2 + 2nc|H|^2`.
    EvolveH2,
    /// `d/dt |A|^2 = Lap |A|^2 - 2|grad A|^2 + 2 R1 + 4c|H|^2 - 2nc|A|^2`.
    EvolveA2,
    /// `1/2 Lap |Å|^2 = <Å, Hess H> + |grad Å|^2 + Z + nc|Å|^2`.
    Simons,
}

impl Equation {
    pub fn label(self) -> &'static str {
        match self {
            Equation::EvolveH2 => "evolve_H2",
            Equation::EvolveA2 => "evolve_A2",
            Equation::Simons => "simons",
        }
    }
}

/// Both sides of an identity at the sample nodes.
#[derive(Clone, Debug, Serialize)]
pub struct EquationSides {
    pub equation: Equation,
    pub nodes: Vec<usize>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport {
    pub equation: Equation,
    pub resolution: usize,
    pub sample_nodes: usize,
    pub linf: f64,
    pub l2: f64,
    /// `max |lhs|`, to put the residual in scale.
    pub lhs_scale: f64,
    /// Order against the next coarser level, when both succeeded.
    pub measured_order: Option<f64>,
}

/// Sample nodes for residuals: those at least an eighth of a patch away
/// from every patch edge, i.e. a fixed region of the parameter domain.
/// Near edges the nested differences see interpolated ghost values, whose
/// error is of the same order but with a much larger constant.
pub fn residual_sample_nodes(domain: ParamDomain, grid: &crate::grid::Grid) -> Vec<usize> {
    let clearance = domain.resolution / 8;
    (0..grid.len())
        .filter(|&i| grid.boundary_distance(i) >= clearance)
        .collect()
}

fn field_h2_a2(imm: &Immersion) -> Result<(Vec<f64>, Vec<f64>)> {
    let e = geometry::flow_eval(imm, Gauge::Normal)?;
    Ok((e.h2, e.a2))
}

/// Evaluates both sides of `eq` on `imm`. Time derivatives use a central
/// difference of two RK4 steps of size `dt_probe` (default a tenth of the
/// stable step) under pure normal velocity.
pub fn evolution_sides(imm: &Immersion, eq: Equation, dt_probe: Option<f64>) -> Result<EquationSides> {
    let grid = imm.grid();
    let nodes = residual_sample_nodes(imm.domain(), grid);
    let space = *imm.space();
    let n = imm.intrinsic_dim() as f64;
    let c = space.c();
    let reach = if eq == Equation::Simons { 2 } else { 1 };
    let field = GeometryField::new(imm, reach)?;
    let len = field.len();
    let (lhs, rhs) = match eq {
        Equation::EvolveH2 | Equation::EvolveA2 => {
            let dt = match dt_probe {
                Some(dt) if dt > 0.0 && dt.is_finite() => dt,
                Some(dt) => return Err(Error::input(format!("dt_probe must be positive, got {dt}"))),
                None => 0.1 * flow::choose_dt(imm, &flow::FlowConfig::default())?,
            };
            let fwd = flow::step_signed(imm, dt, Integrator::Rk4, Gauge::Normal)?;
            let bwd = flow::step_signed(imm, -dt, Integrator::Rk4, Gauge::Normal)?;
            let (h2p, a2p) = field_h2_a2(&fwd)?;
            let (h2m, a2m) = field_h2_a2(&bwd)?;
            let h2: Vec<f64> = (0..len).map(|i| field.normsq_h(i)).collect();
            let a2: Vec<f64> = (0..len).map(|i| field.normsq_a(i)).collect();
            if eq == Equation::EvolveH2 {
                let lap = field.laplacian(&h2);
                let lhs = nodes.iter().map(|&i| (h2p[i] - h2m[i]) / (2.0 * dt)).collect();
                let rhs = nodes
                    .iter()
                    .map(|&i| {
                        let inv = field.invariants(i);
                        lap[i] - 2.0 * inv.normsq_grad_h + 2.0 * inv.r2 + 2.0 * n * c * h2[i]
                    })
                    .collect();
                (lhs, rhs)
            } else {
                let lap = field.laplacian(&a2);
                let lhs = nodes.iter().map(|&i| (a2p[i] - a2m[i]) / (2.0 * dt)).collect();
                let rhs = nodes
                    .iter()
                    .map(|&i| {
                        let inv = field.invariants(i);
                        lap[i] - 2.0 * inv.normsq_grad_a + 2.0 * inv.r1 + 4.0 * c * h2[i]
                            - 2.0 * n * c * a2[i]
                    })
                    .collect();
                (lhs, rhs)
            }
        }
        Equation::Simons => {
            let ar2: Vec<f64> = (0..len).map(|i| field.normsq_aring(i)).collect();
            let lap = field.laplacian(&ar2);
            let lhs = nodes.iter().map(|&i| 0.5 * lap[i]).collect();
            let rhs = nodes
                .iter()
                .map(|&i| {
                    let inv = field.invariants(i);
                    field.aring_dot_hess_h(i) + field.grad_aring_sq(i) + inv.z + n * c * ar2[i]
                })
                .collect();
            (lhs, rhs)
        }
    };
    Ok(EquationSides { equation: eq, nodes, lhs, rhs })
}

fn report_from_sides(sides: &EquationSides, resolution: usize) -> Result<ResidualReport> {
    let m = sides.nodes.len();
    if m == 0 {
        return Err(Error::input("no residual sample nodes"));
    }
    let mut linf = 0.0f64;
    let mut sq = 0.0;
    let mut scale = 0.0f64;
    for (l, r) in sides.lhs.iter().zip(&sides.rhs) {
        let d = l - r;
        if !d.is_finite() {
            return Err(Error::NumericalDomain(format!("{} residual is not finite", sides.equation.label())));
        }
        linf = linf.max(d.abs());
        sq += d * d;
        scale = scale.max(l.abs());
    }
    Ok(ResidualReport {
        equation: sides.equation,
        resolution,
        sample_nodes: m,
        linf,
        l2: (sq / m as f64).sqrt(),
        lhs_scale: scale,
        measured_order: None,
    })
}

pub fn residual_evolution_h2(imm: &Immersion, dt_probe: Option<f64>) -> Result<ResidualReport> {
    report_from_sides(&evolution_sides(imm, Equation::EvolveH2, dt_probe)?, imm.domain().resolution)
}

pub fn residual_evolution_a2(imm: &Immersion, dt_probe: Option<f64>) -> Result<ResidualReport> {
    report_from_sides(&evolution_sides(imm, Equation::EvolveA2, dt_probe)?, imm.domain().resolution)
}

pub fn residual_simons(imm: &Immersion) -> Result<ResidualReport> {
    report_from_sides(&evolution_sides(imm, Equation::Simons, None)?, imm.domain().resolution)
}

pub fn residual(imm: &Immersion, eq: Equation) -> Result<ResidualReport> {
    match eq {
        Equation::EvolveH2 => residual_evolution_h2(imm, None),
        Equation::EvolveA2 => residual_evolution_a2(imm, None),
        Equation::Simons => residual_simons(imm),
    }
}

fn order(coarse: f64, fine: f64, ratio: f64) -> Option<f64> {
    (coarse > 0.0 && fine > 0.0 && ratio > 1.0).then(|| (coarse / fine).ln() / ratio.ln())
}

/// Residual of `eq` on the shape built by `factory` at each resolution,
/// with orders measured between consecutive levels from the L-infinity
/// norms.
pub fn refinement_residuals(
    eq: Equation,
    factory: impl Fn(ParamDomain) -> Result<Immersion>,
    domains: &[ParamDomain],
) -> Result<Vec<ResidualReport>> {
    let mut out: Vec<ResidualReport> = Vec::with_capacity(domains.len());
    for &d in domains {
        let mut rep = residual(&factory(d)?, eq)?;
        if let Some(prev) = out.last() {
            let ratio = d.resolution as f64 / prev.resolution as f64;
            rep.measured_order = order(prev.linf, rep.linf, ratio);
        }
        out.push(rep);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DistanceSample {
    pub t: f64,
    pub r_max: f64,
    /// `R - (n-1) sqrt(-c) t`.
    pub bound: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DistanceReport {
    pub big_r: f64,
    /// `(n-1) sqrt(-c)`.
    pub rate: f64,
    pub samples: Vec<DistanceSample>,
    pub per_sample_holds: bool,
    /// `R / ((n-1) sqrt(-c))`.
    pub t_bound: f64,
    pub t_est: f64,
    pub t_est_holds: bool,
}

impl DistanceReport {
    pub fn holds(&self) -> bool {
        self.per_sample_holds && self.t_est_holds
    }
}

/// Tracks the largest distance from a fixed point `y` to the evolving
/// submanifold in a hyperbolic ambient. The comparison argument bounds it
/// by `R - (n-1) sqrt(-c) t`, which forces a finite existence time.
#[derive(Clone, Debug)]
pub struct DistanceMonitor {
    space: SpaceForm,
    n: usize,
    y: FlatVec,
    margin: f64,
    frames: Vec<(f64, f64)>,
}

/// Points closer than this to `y` invalidate the monitor.
pub const DISTANCE_CLEARANCE: f64 = 1e-6;

impl DistanceMonitor {
    pub fn new(space: SpaceForm, n: usize, y: &[f64], margin: f64) -> Result<Self> {
        if space.c() >= 0.0 {
            return Err(Error::MonitorInvalid("distance bound needs c < 0".into()));
        }
        if n < 2 {
            return Err(Error::MonitorInvalid("distance bound needs n >= 2".into()));
        }
        if !(margin > 0.0 && margin.is_finite()) {
            return Err(Error::input("distance margin must be positive"));
        }
        let y = space.to_flat(y)?;
        if space.quadric_defect(&y) > 1e-10 * (1.0 + space.dot(&y, &y).abs()) {
            return Err(Error::MonitorInvalid("reference point is off the quadric".into()));
        }
        Ok(Self {
            space,
            n,
            y,
            margin,
            frames: Vec::new(),
        })
    }

    pub fn observe(&mut self, t: f64, imm: &Immersion) -> Result<()> {
        if imm.space() != &self.space {
            return Err(Error::input("immersion lives in a different space form"));
        }
        let mut r_max = 0.0f64;
        let mut r_min = f64::INFINITY;
        for p in imm.coords() {
            let r = self.space.distance(p, &self.y)?;
            r_max = r_max.max(r);
            r_min = r_min.min(r);
        }
        if r_min < DISTANCE_CLEARANCE {
            return Err(Error::MonitorInvalid(format!(
                "reference point lies on the submanifold at t = {t}"
            )));
        }
        self.frames.push((t, r_max));
        Ok(())
    }

    pub fn finish(&self, t_est: f64) -> Result<DistanceReport> {
        let &(_, r0) = self
            .frames
            .first()
            .ok_or_else(|| Error::MonitorInvalid("no frames observed".into()))?;
        let big_r = r0 + self.margin;
        let rate = (self.n as f64 - 1.0) * (-self.space.c()).sqrt();
        let samples: Vec<DistanceSample> = self
            .frames
            .iter()
            .map(|&(t, r_max)| DistanceSample {
                t,
                r_max,
                bound: big_r - rate * t,
            })
            .collect();
        let t_bound = big_r / rate;
        Ok(DistanceReport {
            big_r,
            rate,
            per_sample_holds: samples.iter().all(|s| s.r_max < s.bound),
            samples,
            t_bound,
            t_est,
            t_est_holds: t_est < t_bound,
        })
    }
}

/// Distance bound over a recorded series of `(t, immersion)` frames from the
/// run described by `trace`.
pub fn distance_monitor(
    trace: &FlowTrace,
    frames: &[(f64, &Immersion)],
    y: &[f64],
    margin: f64,
) -> Result<DistanceReport> {
    let first = frames
        .first()
        .ok_or_else(|| Error::MonitorInvalid("no frames".into()))?;
    let mut m = DistanceMonitor::new(*first.1.space(), first.1.intrinsic_dim(), y, margin)?;
    for (t, imm) in frames {
        m.observe(*t, imm)?;
    }
    m.finish(trace.t_est)
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceLevel {
    pub resolution: usize,
    pub value: Option<f64>,
    /// `|value - exact|` when an exact value is known.
    pub error: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceTable {
    pub probe: String,
    pub exact: Option<f64>,
    pub levels: Vec<ConvergenceLevel>,
    /// With an exact value, `orders[k]` compares levels `k` and `k+1`;
    /// otherwise the Richardson ratio of levels `k`, `k+1`, `k+2`.
    pub orders: Vec<Option<f64>>,
}

impl ConvergenceTable {
    /// Smallest measured order, if every order could be measured.
    pub fn min_order(&self) -> Option<f64> {
        if self.orders.is_empty() || self.orders.iter().any(Option::is_none) {
            return None;
        }
        self.orders.iter().flatten().copied().reduce(f64::min)
    }
}

/// Evaluates `probe` at each resolution and measures orders. A failing
/// level is recorded and leaves the orders that need it unmeasured.
pub fn convergence_study(
    probe_name: &str,
    resolutions: &[usize],
    exact: Option<f64>,
    mut probe: impl FnMut(usize) -> Result<f64>,
) -> Result<ConvergenceTable> {
    if resolutions.len() < 2 || (exact.is_none() && resolutions.len() < 3) {
        return Err(Error::input(
            "convergence study needs two levels with an exact value, three without",
        ));
    }
    if resolutions.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::input("resolutions must increase"));
    }
    let levels: Vec<ConvergenceLevel> = resolutions
        .iter()
        .map(|&res| match probe(res) {
            Ok(v) if v.is_finite() => ConvergenceLevel {
                resolution: res,
                value: Some(v),
                error: exact.map(|e| (v - e).abs()),
                failure: None,
            },
            Ok(v) => ConvergenceLevel {
                resolution: res,
                value: None,
                error: None,
                failure: Some(format!("non-finite probe value {v}")),
            },
            Err(e) => ConvergenceLevel {
                resolution: res,
                value: None,
                error: None,
                failure: Some(e.to_string()),
            },
        })
        .collect();
    let orders = if exact.is_some() {
        levels
            .windows(2)
            .map(|w| {
                let ratio = w[1].resolution as f64 / w[0].resolution as f64;
                order(w[0].error?, w[1].error?, ratio)
            })
            .collect()
    } else {
        levels
            .windows(3)
            .map(|w| {
                let ratio = w[1].resolution as f64 / w[0].resolution as f64;
                let d1 = (w[1].value? - w[0].value?).abs();
                let d2 = (w[2].value? - w[1].value?).abs();
                order(d1, d2, ratio)
            })
            .collect()
    };
    Ok(ConvergenceTable {
        probe: probe_name.to_string(),
        exact,
        levels,
        orders,
    })
}

/// Runs the shrinking geodesic sphere to the growth stop and returns the
/// stop time minus the time at which the exact solution reaches the same
/// curvature growth. This isolates the discretisation error of the stop
/// time from the (resolution independent) distance between the stop and
/// the singular time.
pub fn extinction_time_error(
    oracle: &ShrinkerOracle,
    resolution: usize,
    cfg: &flow::FlowConfig,
) -> Result<f64> {
    let space = SpaceForm::new(oracle.c, oracle.n + 1)?;
    let topo = match oracle.n {
        2 => crate::grid::Topology::Sphere2,
        3 => crate::grid::Topology::Sphere3,
        _ => return Err(Error::input("shrinker runs need n = 2 or 3")),
    };
    let domain = ParamDomain::new(topo, resolution)?;
    let imm = crate::immersion::make_geodesic_sphere(space, domain, &space.origin()[..space.flat_dim()], oracle.r0)?;
    let preset = crate::pinch::preset(oracle.n, 1, oracle.c, 0.1, 0.1)?;
    let cfg = flow::FlowConfig {
        monitor_pinching: false,
        sample_every: usize::MAX / 2,
        ..cfg.clone()
    };
    let trace = flow::run(&imm, &preset, &cfg)?;
    if trace.termination != flow::Termination::BlowupResolved {
        return Err(Error::NumericalDomain(format!(
            "shrinker run ended with {:?}",
            trace.termination
        )));
    }
    let a2_0 = oracle
        .normsq_a_at(0.0)
        .ok_or_else(|| Error::input("oracle has no initial state"))?;
    let t_ref = oracle.time_at_normsq_a(cfg.blowup_growth * a2_0);
    Ok(trace.t_est - t_ref)
}

/// One line of a suite table.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: String,
    pub passed: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, measured: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            tolerance: format!("<= {limit:e}"),
            passed: measured <= limit,
        }
    }

    fn at_least(name: impl Into<String>, measured: f64, floor: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            tolerance: format!(">= {floor}"),
            passed: measured >= floor,
        }
    }

    fn failed(name: impl Into<String>, err: &Error) -> Self {
        Self {
            name: name.into(),
            measured: f64::NAN,
            tolerance: format!("error: {err}"),
            passed: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Oracles,
    Residuals,
    Invariants,
    Convergence,
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracles" => Ok(Suite::Oracles),
            "residuals" => Ok(Suite::Residuals),
            "invariants" => Ok(Suite::Invariants),
            "convergence" => Ok(Suite::Convergence),
            other => Err(Error::Config(format!(
                "unknown suite {other:?}; expected oracles, residuals, invariants or convergence"
            ))),
        }
    }
}

pub fn run_suite(suite: Suite) -> Vec<Check> {
    match suite {
        Suite::Oracles => oracle_checks(),
        Suite::Residuals => residual_checks(),
        Suite::Invariants => invariant_checks(),
        Suite::Convergence => convergence_checks(),
    }
}

fn hyperbolic_plane(dim: usize) -> SpaceForm {
    SpaceForm::new(-1.0, dim).expect("valid space form")
}

fn sphere_domain(res: usize) -> ParamDomain {
    ParamDomain::new(crate::grid::Topology::Sphere2, res).expect("valid domain")
}

fn origin_sphere(space: SpaceForm, res: usize, r: f64) -> Result<Immersion> {
    let o = space.origin();
    crate::immersion::make_geodesic_sphere(space, sphere_domain(res), &o[..space.flat_dim()], r)
}

/// Largest deviation between closed-form radius and the scalar ODE over
/// `[0, 0.95 T]`.
pub fn oracle_ode_deviation(oracle: &ShrinkerOracle, samples: usize) -> Result<f64> {
    let t_end = 0.95 * oracle.t_exact();
    let mut worst = 0.0f64;
    for k in 1..=samples {
        let t = t_end * k as f64 / samples as f64;
        let ode = integrate_shrinker_radius(oracle, t, 1e-10)?;
        let exact = oracle
            .radius_at(t)
            .ok_or_else(|| Error::NumericalDomain("oracle past extinction".into()))?;
        worst = worst.max((ode - exact).abs());
    }
    Ok(worst)
}

fn oracle_checks() -> Vec<Check> {
    let mut out = Vec::new();
    for (c, r0) in [(-1.0, 0.5), (0.0, 1.0), (1.0, 1.0)] {
        let name = format!("shrinker c={c} r0={r0}: closed form vs ODE");
        match ShrinkerOracle::new(c, 2, r0).and_then(|o| oracle_ode_deviation(&o, 40)) {
            Ok(d) => out.push(Check::at_most(name, d, 1e-8)),
            Err(e) => out.push(Check::failed(name, &e)),
        }
    }
    let expected = [
        (-1.0, 0.3, 0.022_170_4),
        (-1.0, 0.5, 0.060_057_3),
        (-1.0, 0.8, 0.145_376_8),
        (0.0, 1.0, 0.25),
        (1.0, 1.0, 0.307_813),
    ];
    for (c, r0, t) in expected {
        let o = ShrinkerOracle::new(c, 2, r0).expect("valid oracle");
        out.push(Check::at_most(
            format!("extinction time c={c} r0={r0} vs {t}"),
            (o.t_exact() - t).abs() / t,
            1e-4,
        ));
    }
    let space = hyperbolic_plane(3);
    let p = [1.0, 0.0, 0.0, 0.0];
    let q = [0.5f64.cosh(), 0.5f64.sinh(), 0.0, 0.0];
    match space.geodesic_distance(&p, &q) {
        Ok(d) => out.push(Check::at_most("hyperboloid distance identity", (d - 0.5).abs(), 1e-13)),
        Err(e) => out.push(Check::failed("hyperboloid distance identity", &e)),
    }
    out
}

/// Mean of the two sides of an evolution identity on the geodesic sphere of
/// radius `r` in the hyperbolic plane's 3-dimensional ambient.
pub fn sphere_identity_sides(eq: Equation, res: usize, r: f64) -> Result<(f64, f64)> {
    let imm = origin_sphere(hyperbolic_plane(3), res, r)?;
    let s = evolution_sides(&imm, eq, None)?;
    let m = s.nodes.len() as f64;
    Ok((s.lhs.iter().sum::<f64>() / m, s.rhs.iter().sum::<f64>() / m))
}

fn residual_checks() -> Vec<Check> {
    let mut out = Vec::new();
    let domains: Vec<ParamDomain> = [16, 32, 64].into_iter().map(sphere_domain).collect();
    let space = hyperbolic_plane(3);
    for (eq, floor) in [
        (Equation::EvolveH2, 1.5),
        (Equation::EvolveA2, 1.5),
        (Equation::Simons, 1.0),
    ] {
        let factory = |d| crate::immersion::make_perturbed_sphere(space, d, 0.5, &[(1, 0.02)]);
        match refinement_residuals(eq, factory, &domains) {
            Ok(reps) => {
                for r in reps.iter().skip(1) {
                    out.push(Check::at_least(
                        format!("{} order to res {}", eq.label(), r.resolution),
                        r.measured_order.unwrap_or(f64::NAN),
                        floor,
                    ));
                }
            }
            Err(e) => out.push(Check::failed(format!("{} refinement", eq.label()), &e)),
        }
    }
    for (eq, value) in [(Equation::EvolveH2, 275.930), (Equation::EvolveA2, 137.959)] {
        match sphere_identity_sides(eq, 32, 0.5) {
            Ok((l, r)) => {
                out.push(Check::at_most(format!("{} sphere lhs vs {value}", eq.label()), (l - value).abs() / value, 5e-3));
                out.push(Check::at_most(format!("{} sphere rhs vs {value}", eq.label()), (r - value).abs() / value, 5e-3));
            }
            Err(e) => out.push(Check::failed(format!("{} sphere identity", eq.label()), &e)),
        }
    }
    out
}

fn invariant_checks() -> Vec<Check> {
    let mut out = Vec::new();
    let sphere = origin_sphere(hyperbolic_plane(3), 32, 0.5)
        .and_then(|imm| crate::pinch::preset(2, 1, -1.0, 0.1, 0.1).and_then(|p| crate::pinch::report(&imm, &p, 0.01)));
    match sphere {
        Ok(r) => {
            out.push(Check::at_most("sphere roundness - 1", r.roundness - 1.0, 1e-2));
            out.push(Check::at_most("sphere umbilicity", r.umbilicity.unwrap_or(f64::INFINITY), 1e-4));
            out.push(Check::at_most(
                "sphere kmin_ratio vs 0.196615",
                (r.kmin_ratio.unwrap_or(f64::NAN) - 0.196_615).abs(),
                2e-3,
            ));
            out.push(Check::at_most("sphere maxQ", r.max_q, 0.0));
        }
        Err(e) => out.push(Check::failed("geodesic sphere report", &e)),
    }
    for (d, mode) in [(1usize, 1usize), (2, 5)] {
        let name = format!("perturbed sphere d={d}: kato defect / h^2");
        let rep = SpaceForm::new(-1.0, 2 + d).and_then(|s| {
            let imm = crate::immersion::make_perturbed_sphere(s, sphere_domain(32), 0.5, &[(mode, 0.02)])?;
            let p = crate::pinch::preset(2, d, -1.0, 0.1, 0.1)?;
            crate::pinch::report(&imm, &p, 0.01)
        });
        match rep {
            Ok(r) => {
                let h = std::f64::consts::FRAC_PI_2 / 32.0;
                out.push(Check::at_most(name, r.kato_defect.max(0.0) / (h * h), KATO_SLACK));
                out.push(Check::at_most(format!("perturbed sphere d={d}: maxQ"), r.max_q, 0.0));
            }
            Err(e) => out.push(Check::failed(name, &e)),
        }
    }
    let torus = SpaceForm::new(-1.0, 3).and_then(|s| {
        let domain = ParamDomain::new(crate::grid::Topology::Torus2, 32)?;
        let imm = crate::immersion::make_torus(s, domain, (1.5, 0.3), 1)?;
        crate::pinch::report(&imm, &crate::pinch::preset(2, 1, -1.0, 0.1, 0.1)?, 0.01)
    });
    match torus {
        Ok(r) => out.push(Check {
            name: "torus negative control maxQ".into(),
            measured: r.max_q,
            tolerance: "> 0".into(),
            passed: r.max_q > 0.0,
        }),
        Err(e) => out.push(Check::failed("torus negative control", &e)),
    }
    out
}

/// Slack constant `C` in `kato_defect <= C h^2`.
pub const KATO_SLACK: f64 = 1.0;

/// Largest nodal error of `|H|^2` on the radius-0.5 hyperbolic sphere.
pub fn sphere_h2_error(res: usize) -> Result<f64> {
    let imm = origin_sphere(hyperbolic_plane(3), res, 0.5)?;
    let field = GeometryField::new(&imm, 0)?;
    let exact = 4.0 / 0.5f64.tanh().powi(2);
    Ok((0..field.len())
        .map(|i| (field.normsq_h(i) - exact).abs())
        .fold(0.0, f64::max))
}

/// Largest `|Lap 1|` on the radius-0.5 hyperbolic sphere.
pub fn constant_laplacian(res: usize) -> Result<f64> {
    let imm = origin_sphere(hyperbolic_plane(3), res, 0.5)?;
    let field = GeometryField::new(&imm, 1)?;
    Ok(field
        .laplacian(&vec![1.0; field.len()])
        .into_iter()
        .map(f64::abs)
        .fold(0.0, f64::max))
}

fn table_checks(out: &mut Vec<Check>, table: Result<ConvergenceTable>, floor: f64) {
    match table {
        Ok(t) => {
            for (k, o) in t.orders.iter().enumerate() {
                out.push(Check::at_least(
                    format!("{} order to res {}", t.probe, t.levels[k + 1].resolution),
                    o.unwrap_or(f64::NAN),
                    floor,
                ));
            }
        }
        Err(e) => out.push(Check::failed("convergence table", &e)),
    }
}

fn convergence_checks() -> Vec<Check> {
    let mut out = Vec::new();
    table_checks(&mut out, convergence_study("sphere |H|^2", &[16, 32, 64], Some(0.0), sphere_h2_error), 1.8);
    let oracle = ShrinkerOracle::new(-1.0, 2, 0.5).expect("valid oracle");
    let cfg = flow::FlowConfig {
        integrator: Integrator::Euler,
        blowup_growth: 100.0,
        ..flow::FlowConfig::default()
    };
    table_checks(
        &mut out,
        convergence_study("T_est", &[8, 16, 32], Some(0.0), |res| extinction_time_error(&oracle, res, &cfg)),
        1.5,
    );
    for res in [8, 32] {
        match constant_laplacian(res) {
            Ok(v) => out.push(Check::at_most(format!("constant-field Laplacian res {res}"), v, 1e-9)),
            Err(e) => out.push(Check::failed("constant-field Laplacian", &e)),
        }
    }
    out
}
