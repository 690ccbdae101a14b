//! Pinching constants and the monitors evaluated along the flow.
//!
//! A preset fixes the pinching cone `|A|^2 <= alpha |H|^2 + beta c` and its
//! strict version with slack `eps`, together with the constants of the
//! traceless pinching function
//! `f_sigma = |Å|^2 / (a |H|^2 + beta_eps c)^(1 - sigma)`.
//!
//! Regimes:
//!
//! * `low_dim` (`n = 2, 3`): `alpha = 4/(3n)`, `alpha_eps = 4/(3n + n eps)`,
//!   `a = 1/(3n + n eps)`. The base `beta` is `n/2` for `c < 0` and
//!   `(7n - 4 + sgn(c)(n - 4))/12` otherwise.
//! * `high_dim` (`n >= 4`): `alpha = 1/(n-1)`, `beta = 2`,
//!   `alpha_eps = 1/(n - 1 + eps)`, `a = 1/(n(n - 1 + eps))`.
//! * `hypersurface_n3` (`n = 3, d = 1`): `alpha = 1/2`, `beta = 2`,
//!   `alpha_eps = 1/(2 + eps)`, `a = 1/(3(2 + eps))`.
//!
//! For `c <= 0`, `beta_eps = beta (1 + eps)`; for `c > 0` the slack must
//! shrink the constant term, so `beta_eps = beta (1 - eps)`. In every regime
//! `b = eps a` and `eps_nabla = 3/(n+2) - 1/n - a`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GeometryField, PointGeometry};
use crate::immersion::Immersion;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `low_dim` for `n <= 3`, `high_dim` otherwise.
    #[default]
    Auto,
    LowDim,
    HighDim,
    HypersurfaceN3,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PinchPreset {
    pub n: usize,
    pub d: usize,
    pub c: f64,
    pub regime: Regime,
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub alpha_eps: f64,
    pub beta_eps: f64,
    pub a: f64,
    pub b: f64,
    pub eps_nabla: f64,
    pub sigma: f64,
}

/// Preset with the regime chosen from the dimension.
pub fn preset(n: usize, d: usize, c: f64, epsilon: f64, sigma: f64) -> Result<PinchPreset> {
    preset_with_regime(n, d, c, Regime::Auto, epsilon, sigma)
}

pub fn preset_with_regime(
    n: usize,
    d: usize,
    c: f64,
    regime: Regime,
    epsilon: f64,
    sigma: f64,
) -> Result<PinchPreset> {
    if n < 2 || d < 1 {
        return Err(Error::input(format!("need n >= 2 and d >= 1, got n = {n}, d = {d}")));
    }
    if !c.is_finite() {
        return Err(Error::input("curvature must be finite"));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::input(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::input(format!("sigma must lie in (0, 1), got {sigma}")));
    }
    let regime = match regime {
        Regime::Auto if n <= 3 => Regime::LowDim,
        Regime::Auto => Regime::HighDim,
        Regime::LowDim if n > 3 => {
            return Err(Error::input("low_dim regime needs n = 2 or 3"));
        }
        Regime::HighDim if n <= 3 => {
            return Err(Error::input("high_dim regime needs n >= 4"));
        }
        Regime::HypersurfaceN3 if n != 3 || d != 1 => {
            return Err(Error::input("hypersurface_n3 regime needs n = 3 and d = 1"));
        }
        r => r,
    };
    let nf = n as f64;
    let (alpha, beta, alpha_eps, a) = match regime {
        Regime::LowDim => {
            let beta = if c < 0.0 {
                nf / 2.0
            } else {
                (7.0 * nf - 4.0 + c.signum() * (nf - 4.0)) / 12.0
            };
            (4.0 / (3.0 * nf), beta, 4.0 / (3.0 * nf + nf * epsilon), 1.0 / (3.0 * nf + nf * epsilon))
        }
        Regime::HighDim => (
            1.0 / (nf - 1.0),
            2.0,
            1.0 / (nf - 1.0 + epsilon),
            1.0 / (nf * (nf - 1.0 + epsilon)),
        ),
        Regime::HypersurfaceN3 => (0.5, 2.0, 1.0 / (2.0 + epsilon), 1.0 / (3.0 * (2.0 + epsilon))),
        Regime::Auto => unreachable!(),
    };
    let beta_eps = if c > 0.0 { beta * (1.0 - epsilon) } else { beta * (1.0 + epsilon) };
    let eps_nabla = 3.0 / (nf + 2.0) - 1.0 / nf - a;
    assert!(eps_nabla > 0.0, "eps_nabla = {eps_nabla} for n = {n}");
    Ok(PinchPreset {
        n,
        d,
        c,
        regime,
        alpha,
        beta,
        epsilon,
        alpha_eps,
        beta_eps,
        a,
        b: epsilon * a,
        eps_nabla,
        sigma,
    })
}

impl PinchPreset {
    /// Tolerance on `max Q` that still counts as preserved pinching.
    pub fn q_tolerance(&self) -> f64 {
        1e-6 * self.c.abs().max(1.0)
    }

    pub fn q(&self, normsq_a: f64, normsq_h: f64) -> f64 {
        normsq_a - self.alpha_eps * normsq_h - self.beta_eps * self.c
    }

    /// `a |H|^2 + beta_eps c`.
    pub fn f_sigma_denominator(&self, normsq_h: f64) -> f64 {
        self.a * normsq_h + self.beta_eps * self.c
    }

    fn f_sigma_raw(&self, normsq_aring: f64, normsq_h: f64) -> std::result::Result<f64, f64> {
        let den = self.f_sigma_denominator(normsq_h);
        if den > 0.0 {
            Ok(normsq_aring / den.powf(1.0 - self.sigma))
        } else {
            Err(den)
        }
    }

    fn z_margin_raw(&self, z: f64, normsq_aring: f64, normsq_h: f64, eps_z: f64) -> f64 {
        z + self.n as f64 * self.c * normsq_aring - eps_z * normsq_aring * self.f_sigma_denominator(normsq_h)
    }
}

/// `Q = |A|^2 - alpha_eps |H|^2 - beta_eps c`.
pub fn pinch_q(geom: &PointGeometry, preset: &PinchPreset) -> f64 {
    preset.q(geom.normsq_a, geom.normsq_h)
}

/// `f_sigma` at a node; fails where `a |H|^2 + beta_eps c <= 0`.
pub fn f_sigma(geom: &PointGeometry, preset: &PinchPreset) -> Result<f64> {
    preset
        .f_sigma_raw(geom.normsq_aring, geom.normsq_h)
        .map_err(|den| Error::PinchingViolation { node: 0, denominator: den })
}

/// `Z + n c |Å|^2 - eps_z |Å|^2 (a |H|^2 + beta_eps c)`.
pub fn z_margin(z: f64, geom: &PointGeometry, preset: &PinchPreset, eps_z: f64) -> f64 {
    preset.z_margin_raw(z, geom.normsq_aring, geom.normsq_h, eps_z)
}

/// Node-wise monitors reduced over the grid.
#[derive(Clone, Debug, Serialize)]
pub struct PinchReport {
    pub max_q: f64,
    pub max_q_node: usize,
    /// `max f_sigma`; `None` when the denominator is non-positive somewhere.
    pub sup_f_sigma: Option<f64>,
    /// First node where `a |H|^2 + beta_eps c <= 0`, with that value.
    pub f_sigma_violation: Option<(usize, f64)>,
    /// Smallest `a |H|^2 + beta_eps c - b |H|^2` over nodes.
    pub denominator_slack: f64,
    pub z_margin: f64,
    /// Largest `eps_z` for which the margin is non-negative at every node
    /// with `Å != 0`.
    pub z_witness: Option<f64>,
    pub grad_ratio: f64,
    pub roundness: f64,
    /// `max |Å|^2/|H|^2`; `None` when `|H|` drops below the floor.
    pub umbilicity: Option<f64>,
    pub kmin_ratio: Option<f64>,
    /// `max (3/(n+2) |grad H|^2 - |grad A|^2) / (|H|^4 + 1)`.
    pub kato_defect: f64,
    pub min_h2: f64,
    pub max_h2: f64,
    pub min_a2: f64,
    pub max_a2: f64,
    pub area: f64,
}

impl PinchReport {
    pub fn pinching_violated(&self, preset: &PinchPreset) -> bool {
        self.max_q > preset.q_tolerance() || self.f_sigma_violation.is_some()
    }
}

/// Evaluates every monitor on an immersion.
pub fn report(imm: &Immersion, preset: &PinchPreset, eps_z: f64) -> Result<PinchReport> {
    let field = GeometryField::new(imm, 1)?;
    Ok(report_from_field(&field, imm, preset, eps_z))
}

pub fn report_from_field(
    field: &GeometryField,
    imm: &Immersion,
    preset: &PinchPreset,
    eps_z: f64,
) -> PinchReport {
    let n = imm.intrinsic_dim();
    let c = imm.space().c();
    let floor = crate::geometry::H_FLOOR * c.abs().sqrt().max(1.0);
    let kato = 3.0 / (n as f64 + 2.0);
    let mut r = PinchReport {
        max_q: f64::NEG_INFINITY,
        max_q_node: 0,
        sup_f_sigma: Some(0.0),
        f_sigma_violation: None,
        denominator_slack: f64::INFINITY,
        z_margin: f64::INFINITY,
        z_witness: None,
        grad_ratio: 0.0,
        roundness: 1.0,
        umbilicity: Some(0.0),
        kmin_ratio: Some(f64::INFINITY),
        kato_defect: f64::NEG_INFINITY,
        min_h2: f64::INFINITY,
        max_h2: 0.0,
        min_a2: f64::INFINITY,
        max_a2: 0.0,
        area: field.area(),
    };
    let mut witness = f64::INFINITY;
    let mut h_range = (f64::INFINITY, 0.0f64);
    for node in 0..field.len() {
        let p = field.point(node);
        let inv = p.algebraic_invariants(imm.space(), imm.codim());
        let (h2, a2, ar2) = (p.normsq_h, p.normsq_a, p.normsq_aring);
        r.min_h2 = r.min_h2.min(h2);
        r.max_h2 = r.max_h2.max(h2);
        r.min_a2 = r.min_a2.min(a2);
        r.max_a2 = r.max_a2.max(a2);
        h_range = (h_range.0.min(h2.sqrt()), h_range.1.max(h2.sqrt()));

        let q = preset.q(a2, h2);
        if q > r.max_q {
            r.max_q = q;
            r.max_q_node = node;
        }
        match preset.f_sigma_raw(ar2, h2) {
            Ok(f) => {
                if let Some(s) = r.sup_f_sigma.as_mut() {
                    *s = s.max(f);
                }
            }
            Err(den) => {
                r.sup_f_sigma = None;
                if r.f_sigma_violation.is_none() {
                    r.f_sigma_violation = Some((node, den));
                }
            }
        }
        let den = preset.f_sigma_denominator(h2);
        r.denominator_slack = r.denominator_slack.min(den - preset.b * h2);
        r.z_margin = r.z_margin.min(preset.z_margin_raw(inv.z, ar2, h2, eps_z));
        let react = inv.z + n as f64 * c * ar2;
        if ar2 * den > 0.0 {
            witness = witness.min(react / (ar2 * den));
        }

        let gh = field.grad_h_sq(node);
        let ga = field.grad_a_sq(node);
        let scale = h2 * h2 + 1.0;
        r.grad_ratio = r.grad_ratio.max(gh / scale);
        r.kato_defect = r.kato_defect.max((kato * gh - ga) / scale);

        if h2.sqrt() > floor {
            if let Some(u) = r.umbilicity.as_mut() {
                *u = u.max(ar2 / h2);
            }
            if let Some(k) = r.kmin_ratio.as_mut() {
                *k = k.min(inv.k_min / h2);
            }
        } else {
            r.umbilicity = None;
            r.kmin_ratio = None;
        }
    }
    r.roundness = if h_range.0 > floor { h_range.1 / h_range.0 } else { f64::INFINITY };
    r.z_witness = witness.is_finite().then_some(witness);
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{ParamDomain, Topology};
    use crate::immersion::{make_geodesic_sphere, make_perturbed_sphere, make_torus};
    use crate::spaceform::SpaceForm;
    use approx::assert_relative_eq;

    #[test]
    fn preset_n2() {
        let p = preset(2, 1, -1.0, 0.1, 0.1).unwrap();
        assert_eq!(p.regime, Regime::LowDim);
        assert_relative_eq!(p.alpha_eps, 4.0 / 6.2, max_relative = 1e-15);
        assert_relative_eq!(p.alpha_eps, 0.645161, max_relative = 1e-6);
        assert_relative_eq!(p.beta_eps, 1.1, max_relative = 1e-15);
        assert_relative_eq!(p.a, 0.161290, max_relative = 1e-5);
        assert_relative_eq!(p.b, 0.0161290, max_relative = 1e-5);
        assert_relative_eq!(p.eps_nabla, 0.088710, max_relative = 1e-4);
        assert_relative_eq!(p.alpha, 2.0 / 3.0);
        assert_relative_eq!(p.beta, 1.0);
    }

    #[test]
    fn preset_high_dim_and_hypersurface() {
        let p = preset(4, 1, -1.0, 1e-9, 0.1).unwrap();
        assert_eq!(p.regime, Regime::HighDim);
        assert_relative_eq!(p.alpha, 1.0 / 3.0);
        assert_relative_eq!(p.beta, 2.0);
        assert_relative_eq!(p.alpha_eps, 1.0 / 3.0, max_relative = 1e-8);
        let h = preset_with_regime(3, 1, -1.0, Regime::HypersurfaceN3, 0.1, 0.1).unwrap();
        assert_relative_eq!(h.alpha, 0.5);
        assert_relative_eq!(h.beta, 2.0);
        assert_relative_eq!(h.a, 1.0 / 6.3);
        assert!(h.eps_nabla > 0.0);
        assert!(preset_with_regime(3, 2, -1.0, Regime::HypersurfaceN3, 0.1, 0.1).is_err());
        assert!(preset_with_regime(2, 1, -1.0, Regime::HighDim, 0.1, 0.1).is_err());
        assert!(preset(2, 1, -1.0, 0.0, 0.1).is_err());
        assert!(preset(2, 1, -1.0, 0.1, 1.0).is_err());
    }

    #[test]
    fn base_beta_for_nonnegative_curvature() {
        // n = 2: (14 - 4 - 2)/12 for c > 0, (14 - 4)/12 for c = 0
        assert_relative_eq!(preset(2, 1, 1.0, 0.1, 0.1).unwrap().beta, 2.0 / 3.0);
        assert_relative_eq!(preset(3, 1, 1.0, 0.1, 0.1).unwrap().beta, 16.0 / 12.0);
        let p = preset(2, 1, 1.0, 0.1, 0.1).unwrap();
        assert_relative_eq!(p.beta_eps, p.beta * 0.9);
        // n = 2, c < 0 matches n/2 and the general formula with sgn = -1
        assert_relative_eq!(preset(3, 1, -1.0, 0.1, 0.1).unwrap().beta, 1.5);
        assert_relative_eq!((7.0 * 3.0 - 4.0 - (3.0 - 4.0)) / 12.0, 1.5);
    }

    #[test]
    fn eps_nabla_positive_for_all_regimes() {
        for n in 2..12 {
            for eps in [0.01, 0.5, 0.99] {
                assert!(preset(n, 2, -1.0, eps, 0.1).unwrap().eps_nabla > 0.0);
            }
        }
    }

    fn sphere(res: usize) -> Immersion {
        let space = SpaceForm::new(-1.0, 3).unwrap();
        make_geodesic_sphere(space, ParamDomain::new(Topology::Sphere2, res).unwrap(), &space.origin()[..4], 0.5)
            .unwrap()
    }

    #[test]
    fn q_on_the_round_sphere() {
        let mut p = preset(2, 1, -1.0, 0.1, 0.1).unwrap();
        p.alpha_eps = p.alpha;
        p.beta_eps = p.beta;
        let coth2 = (1.0 / 0.5f64.tanh()).powi(2);
        let q = p.q(2.0 * coth2, 4.0 * coth2);
        assert_relative_eq!(q, -2.12180, max_relative = 1e-5);
        let imm = sphere(32);
        let field = GeometryField::new(&imm, 0).unwrap();
        for i in 0..field.len() {
            assert!((pinch_q(&field.point(i), &p) - q).abs() < 0.05);
        }
    }

    #[test]
    fn f_sigma_arithmetic() {
        let p = preset(2, 1, -1.0, 0.1, 0.1).unwrap();
        let den = p.f_sigma_denominator(18.7308);
        assert_relative_eq!(den, 1.92105, max_relative = 1e-4);
        // 1.92105^0.9 = exp(0.9 ln 1.92105)
        assert_relative_eq!(den.powf(0.9), 1.79968, max_relative = 1e-5);
        assert_relative_eq!(p.f_sigma_raw(0.5, 18.7308).unwrap(), 0.277827, max_relative = 1e-5);
        assert!(p.f_sigma_raw(0.5, 1.0).is_err());
    }

    #[test]
    fn round_sphere_report() {
        let p = preset(2, 1, -1.0, 0.1, 0.1).unwrap();
        let r = report(&sphere(32), &p, 0.01).unwrap();
        assert!(r.max_q < 0.0);
        assert!((r.roundness - 1.0).abs() < 1e-2);
        assert!(r.umbilicity.unwrap() < 1e-4);
        assert!(r.sup_f_sigma.unwrap() < 1e-3);
        assert!((r.kmin_ratio.unwrap() - 0.196615).abs() < 2e-3);
        assert!(r.z_margin.abs() < 1e-3);
        assert!(!r.pinching_violated(&p));
    }

    #[test]
    fn perturbed_sphere_thresholds() {
        let space = SpaceForm::new(-1.0, 3).unwrap();
        let dom = ParamDomain::new(Topology::Sphere2, 24).unwrap();
        let p = preset(2, 1, -1.0, 0.1, 0.1).unwrap();
        let small = make_perturbed_sphere(space, dom, 0.5, &[(0, 0.02)]).unwrap();
        let r = report(&small, &p, 0.01).unwrap();
        assert!(r.max_q < 0.0);
        assert!(r.z_margin >= 0.0);
        assert!(r.denominator_slack >= 0.0);
        assert!(r.grad_ratio > 0.0);
        let neg = report(&small, &p, 10.0).unwrap();
        assert!(neg.z_margin < 0.0);
        let big = make_perturbed_sphere(space, dom, 0.5, &[(0, 0.5)]).unwrap();
        assert!(report(&big, &p, 0.01).unwrap().max_q > 0.0);
    }

    #[test]
    fn torus_is_not_pinched() {
        let space = SpaceForm::new(-1.0, 3).unwrap();
        let dom = ParamDomain::new(Topology::Torus2, 32).unwrap();
        let t = make_torus(space, dom, (1.5, 0.3), 1).unwrap();
        let p = preset(2, 1, -1.0, 0.1, 0.1).unwrap();
        let r = report(&t, &p, 0.01).unwrap();
        assert!(r.max_q > 0.0);
        assert!(r.pinching_violated(&p));
    }

    #[test]
    fn equator_flags_the_h_floor() {
        let space = SpaceForm::new(1.0, 3).unwrap();
        let dom = ParamDomain::new(Topology::Sphere2, 16).unwrap();
        let eq = make_geodesic_sphere(space, dom, &space.origin()[..4], std::f64::consts::FRAC_PI_2).unwrap();
        let p = preset(2, 1, 1.0, 0.1, 0.1).unwrap();
        let r = report(&eq, &p, 0.01).unwrap();
        assert!(r.umbilicity.is_none());
        assert!(r.kmin_ratio.is_none());
        assert!(r.roundness.is_infinite());
    }
}
