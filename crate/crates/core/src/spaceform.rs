//! The ambient space form of constant curvature `c`, realized as a quadric in
//! a flat bilinear space.
//!
//! * `c < 0`: upper sheet of the hyperboloid `<P,P> = 1/c` in Lorentzian
//!   signature `diag(-1, +1, ..., +1)`.
//! * `c = 0`: Euclidean space itself, no constraint.
//! * `c > 0`: round sphere `<P,P> = 1/c` in Euclidean signature.
//!
//! The flat embedding space has `ambient_dim + 1` coordinates when `c != 0`
//! and `ambient_dim` otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest flat embedding dimension supported by the fixed-size vectors.
pub const MAX_FLAT: usize = 8;

/// A vector of the flat embedding space. Entries past `flat_dim` are zero.
pub type FlatVec = [f64; MAX_FLAT];

/// Inputs to `arccosh`/`arccos` within this distance of the domain boundary
/// are clamped; beyond it they are rejected.
pub const DOMAIN_CLAMP: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signature {
    Euclidean,
    Lorentzian,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpaceForm {
    c: f64,
    ambient_dim: usize,
    /// Signature weights, zero past the flat dimension.
    weights: FlatVec,
}

impl SpaceForm {
    pub fn new(c: f64, ambient_dim: usize) -> Result<Self> {
        if !c.is_finite() {
            return Err(Error::input(format!("curvature must be finite, got {c}")));
        }
        if ambient_dim < 2 {
            return Err(Error::input("ambient dimension must be at least 2"));
        }
        let flat = ambient_dim + usize::from(c != 0.0);
        if flat > MAX_FLAT {
            return Err(Error::input(format!(
                "flat embedding dimension {flat} exceeds supported maximum {MAX_FLAT}"
            )));
        }
        let mut weights = [0.0; MAX_FLAT];
        weights[..flat].fill(1.0);
        if c < 0.0 {
            weights[0] = -1.0;
        }
        Ok(Self { c, ambient_dim, weights })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn signature(&self) -> Signature {
        if self.c < 0.0 {
            Signature::Lorentzian
        } else {
            Signature::Euclidean
        }
    }

    /// Number of coordinates of the flat embedding space.
    pub fn flat_dim(&self) -> usize {
        self.ambient_dim + usize::from(self.c != 0.0)
    }

    /// The base point used by the shape generators: `e0/sqrt|c|`, or the
    /// origin of Euclidean space.
    pub fn origin(&self) -> FlatVec {
        let mut o = [0.0; MAX_FLAT];
        if self.c != 0.0 {
            o[0] = 1.0 / self.c.abs().sqrt();
        }
        o
    }

    /// Signature-weighted dot product of two flat vectors.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        self.check_dim(u)?;
        self.check_dim(v)?;
        Ok(self.dot_slice(u, v))
    }

    #[inline]
    pub(crate) fn dot(&self, u: &FlatVec, v: &FlatVec) -> f64 {
        let mut s = 0.0;
        for k in 0..MAX_FLAT {
            s += self.weights[k] * u[k] * v[k];
        }
        s
    }

    #[inline]
    fn dot_slice(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut s = 0.0;
        for k in 0..u.len() {
            s += u[k] * v[k];
        }
        if self.c < 0.0 {
            s -= 2.0 * u[0] * v[0];
        }
        s
    }

    fn check_dim(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.flat_dim() {
            return Err(Error::Dimension {
                expected: self.flat_dim(),
                got: u.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn to_flat(&self, u: &[f64]) -> Result<FlatVec> {
        self.check_dim(u)?;
        let mut out = [0.0; MAX_FLAT];
        out[..u.len()].copy_from_slice(u);
        Ok(out)
    }

    /// `|<p,p> - 1/c|`, or zero for the flat ambient.
    pub(crate) fn quadric_defect(&self, p: &FlatVec) -> f64 {
        if self.c == 0.0 {
            0.0
        } else {
            (self.dot(p, p) - 1.0 / self.c).abs()
        }
    }

    /// Rescales `p` onto the model quadric, keeping its direction. Identity
    /// for `c = 0`.
    pub fn project_to_quadric(&self, p: &[f64]) -> Result<Vec<f64>> {
        let mut q = self.to_flat(p)?;
        self.project(&mut q)?;
        Ok(q[..self.flat_dim()].to_vec())
    }

    pub(crate) fn project(&self, p: &mut FlatVec) -> Result<()> {
        if self.c == 0.0 {
            return Ok(());
        }
        let q = self.dot(p, p);
        let scale: f64 = p.iter().map(|x| x * x).sum();
        if q * self.c <= 0.0 || q.abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::DegeneratePoint(format!(
                "<p,p> = {q:e} cannot be rescaled to 1/c = {:e}",
                1.0 / self.c
            )));
        }
        if self.c < 0.0 && p[0] <= 0.0 {
            return Err(Error::DegeneratePoint(
                "point lies on the lower sheet of the hyperboloid".into(),
            ));
        }
        let f = 1.0 / (q * self.c).sqrt();
        for x in p.iter_mut() {
            *x *= f;
        }
        Ok(())
    }

    /// Removes the position component of `w` relative to a quadric point.
    pub fn tangent_project(&self, base: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        let b = self.to_flat(base)?;
        let w = self.to_flat(w)?;
        Ok(self.tangent(&b, &w)[..self.flat_dim()].to_vec())
    }

    pub(crate) fn tangent(&self, base: &FlatVec, w: &FlatVec) -> FlatVec {
        let mut out = *w;
        if self.c != 0.0 {
            let s = self.c * self.dot(w, base);
            for k in 0..MAX_FLAT {
                out[k] -= s * base[k];
            }
        }
        out
    }

    /// Intrinsic distance between two points of the space form.
    pub fn geodesic_distance(&self, p: &[f64], q: &[f64]) -> Result<f64> {
        let p = self.to_flat(p)?;
        let q = self.to_flat(q)?;
        self.distance(&p, &q)
    }

    pub(crate) fn distance(&self, p: &FlatVec, q: &FlatVec) -> Result<f64> {
        let mut diff = [0.0; MAX_FLAT];
        for k in 0..MAX_FLAT {
            diff[k] = p[k] - q[k];
        }
        let chord_sq = self.dot(&diff, &diff);
        if self.c == 0.0 {
            return Ok(chord_sq.max(0.0).sqrt());
        }
        // The chord form is equivalent to arccosh(c<p,q>) / arccos(c<p,q>) but
        // keeps full precision at short range.
        let x = self.c * self.dot(p, q);
        let k = self.c.abs().sqrt();
        if self.c < 0.0 {
            if x < 1.0 - DOMAIN_CLAMP {
                return Err(Error::NumericalDomain(format!(
                    "arccosh argument {x} below 1"
                )));
            }
            let half = 0.5 * (chord_sq.max(0.0) * -self.c).sqrt();
            Ok(2.0 * half.asinh() / k)
        } else {
            if !(-1.0 - DOMAIN_CLAMP..=1.0 + DOMAIN_CLAMP).contains(&x) {
                return Err(Error::NumericalDomain(format!(
                    "arccos argument {x} outside [-1, 1]"
                )));
            }
            let half = (0.5 * (chord_sq.max(0.0) * self.c).sqrt()).min(1.0);
            Ok(2.0 * half.asin() / k)
        }
    }

    /// Generalized cosine: `cosh(sqrt(-c) s)`, `1`, or `cos(sqrt(c) s)`.
    pub(crate) fn cos_k(&self, s: f64) -> f64 {
        if self.c < 0.0 {
            ((-self.c).sqrt() * s).cosh()
        } else if self.c > 0.0 {
            (self.c.sqrt() * s).cos()
        } else {
            1.0
        }
    }

    /// Generalized sine: `sinh(sqrt(-c) s)/sqrt(-c)`, `s`, or `sin(sqrt(c) s)/sqrt(c)`.
    pub(crate) fn sin_k(&self, s: f64) -> f64 {
        if self.c < 0.0 {
            let k = (-self.c).sqrt();
            (k * s).sinh() / k
        } else if self.c > 0.0 {
            let k = self.c.sqrt();
            (k * s).sin() / k
        } else {
            s
        }
    }

    /// Point reached from `base` along the unit tangent `dir` after arc length `s`.
    pub(crate) fn geodesic_point(&self, base: &FlatVec, dir: &FlatVec, s: f64) -> FlatVec {
        let cb = if self.c == 0.0 { 1.0 } else { self.cos_k(s) };
        let sd = self.sin_k(s);
        let mut out = [0.0; MAX_FLAT];
        for k in 0..MAX_FLAT {
            out[k] = cb * base[k] + sd * dir[k];
        }
        out
    }

    /// Exponential map at `base` applied to a tangent vector `v`.
    pub(crate) fn exp_map(&self, base: &FlatVec, v: &FlatVec) -> FlatVec {
        let s = self.dot(v, v).max(0.0).sqrt();
        if s == 0.0 {
            return *base;
        }
        let mut dir = *v;
        for x in dir.iter_mut() {
            *x /= s;
        }
        self.geodesic_point(base, &dir, s)
    }

    /// Orthonormal basis of the tangent space at `base`, obtained by
    /// Gram-Schmidt on the projected coordinate axes.
    pub(crate) fn tangent_frame(&self, base: &FlatVec) -> Result<Vec<FlatVec>> {
        let mut frame: Vec<FlatVec> = Vec::with_capacity(self.ambient_dim);
        for axis in 0..self.flat_dim() {
            if frame.len() == self.ambient_dim {
                break;
            }
            let mut e = [0.0; MAX_FLAT];
            e[axis] = 1.0;
            let mut v = self.tangent(base, &e);
            for f in &frame {
                let s = self.dot(&v, f);
                for k in 0..MAX_FLAT {
                    v[k] -= s * f[k];
                }
            }
            let nrm = self.dot(&v, &v);
            if nrm > 1e-10 {
                let inv = 1.0 / nrm.sqrt();
                for x in v.iter_mut() {
                    *x *= inv;
                }
                frame.push(v);
            }
        }
        if frame.len() != self.ambient_dim {
            return Err(Error::DegeneratePoint(
                "could not build a tangent frame at the base point".into(),
            ));
        }
        Ok(frame)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn hyp() -> SpaceForm {
        SpaceForm::new(-1.0, 3).unwrap()
    }

    #[test]
    fn bilinear_examples() {
        let s = hyp();
        assert_eq!(s.bilinear(&[1.0, 0.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 0.0]).unwrap(), -1.0);
        let e = SpaceForm::new(1.0, 2).unwrap();
        assert_eq!(e.bilinear(&[0.0, 1.0, 0.0], &[0.0, 1.0, 0.0]).unwrap(), 1.0);
        let u = [0.5f64.cosh(), 0.5f64.sinh(), 0.0, 0.0];
        assert_abs_diff_eq!(s.bilinear(&u, &u).unwrap(), -1.0, epsilon = 1e-15);
        assert!(matches!(
            s.bilinear(&[1.0, 0.0], &u),
            Err(Error::Dimension { expected: 4, got: 2 })
        ));
    }

    #[test]
    fn signature_follows_curvature_sign() {
        assert_eq!(hyp().signature(), Signature::Lorentzian);
        assert_eq!(SpaceForm::new(0.0, 3).unwrap().signature(), Signature::Euclidean);
        assert_eq!(SpaceForm::new(2.0, 3).unwrap().signature(), Signature::Euclidean);
        assert_eq!(SpaceForm::new(0.0, 3).unwrap().flat_dim(), 3);
        assert_eq!(hyp().flat_dim(), 4);
    }

    #[test]
    fn projection_examples() {
        let s = hyp();
        assert_eq!(s.project_to_quadric(&[2.0, 0.0, 0.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        let sph = SpaceForm::new(1.0, 2).unwrap();
        let p = sph.project_to_quadric(&[0.0, 3.0, 4.0]).unwrap();
        assert_abs_diff_eq!(p[1], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(p[2], 0.8, epsilon = 1e-15);

        let (ch, sh) = (0.7f64.cosh(), 0.7f64.sinh());
        let p = s.project_to_quadric(&[1.2 * ch, 1.2 * sh, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(p[0], ch, epsilon = 1e-14);
        assert_abs_diff_eq!(p[1], sh, epsilon = 1e-14);
        assert_abs_diff_eq!(s.bilinear(&p, &p).unwrap(), -1.0, epsilon = 1e-14);
    }

    #[test]
    fn projection_rejects_wrong_sign() {
        let s = hyp();
        // spacelike vector
        assert!(matches!(
            s.project_to_quadric(&[0.0, 1.0, 0.0, 0.0]),
            Err(Error::DegeneratePoint(_))
        ));
        // lower sheet
        assert!(s.project_to_quadric(&[-2.0, 0.0, 0.0, 0.0]).is_err());
        let flat = SpaceForm::new(0.0, 3).unwrap();
        assert_eq!(flat.project_to_quadric(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn tangent_projection_examples() {
        let s = hyp();
        let t = s.tangent_project(&[1.0, 0.0, 0.0, 0.0], &[5.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(t, vec![0.0, 1.0, 0.0, 0.0]);
        let flat = SpaceForm::new(0.0, 3).unwrap();
        assert_eq!(flat.tangent_project(&[1.0, 1.0, 1.0], &[0.3, 0.2, 0.1]).unwrap(), vec![0.3, 0.2, 0.1]);
        let sph = SpaceForm::new(1.0, 2).unwrap();
        let t = sph.tangent_project(&[1.0, 0.0, 0.0], &[0.3, 0.4, 0.0]).unwrap();
        assert_abs_diff_eq!(t[0], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(t[1], 0.4, epsilon = 1e-14);
        assert_abs_diff_eq!(sph.bilinear(&t, &[1.0, 0.0, 0.0]).unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn distance_examples() {
        let s = hyp();
        let d = s
            .geodesic_distance(&[1.0, 0.0, 0.0, 0.0], &[0.5f64.cosh(), 0.5f64.sinh(), 0.0, 0.0])
            .unwrap();
        assert_abs_diff_eq!(d, 0.5, epsilon = 1e-14);
        let flat = SpaceForm::new(0.0, 3).unwrap();
        assert_eq!(flat.geodesic_distance(&[0.0; 3], &[3.0, 4.0, 0.0]).unwrap(), 5.0);
        let sph = SpaceForm::new(1.0, 2).unwrap();
        let d = sph.geodesic_distance(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(d, std::f64::consts::FRAC_PI_2, epsilon = 1e-14);
    }

    #[test]
    fn distance_scales_with_curvature() {
        // sphere of curvature 4 has radius 1/2: quarter great circle = pi/4
        let sph = SpaceForm::new(4.0, 2).unwrap();
        let d = sph.geodesic_distance(&[0.5, 0.0, 0.0], &[0.0, 0.5, 0.0]).unwrap();
        assert_abs_diff_eq!(d, std::f64::consts::FRAC_PI_4, epsilon = 1e-14);
        let h = SpaceForm::new(-4.0, 2).unwrap();
        let p = [0.5, 0.0, 0.0];
        let q = [0.5 * 1.0f64.cosh(), 0.5 * 1.0f64.sinh(), 0.0];
        assert_abs_diff_eq!(h.geodesic_distance(&p, &q).unwrap(), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn distance_domain_errors() {
        let s = hyp();
        // both spacelike: c<p,q> = -1 far below 1
        let err = s.geodesic_distance(&[0.0, 1.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(err, Err(Error::NumericalDomain(_))));
        let sph = SpaceForm::new(1.0, 2).unwrap();
        assert!(sph.geodesic_distance(&[2.0, 0.0, 0.0], &[2.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn exp_map_stays_on_quadric() {
        for c in [-1.0, -0.25, 0.0, 1.0, 3.0] {
            let s = SpaceForm::new(c, 3).unwrap();
            let o = s.origin();
            let frame = s.tangent_frame(&o).unwrap();
            let mut v = [0.0; MAX_FLAT];
            for k in 0..MAX_FLAT {
                v[k] = 0.3 * frame[0][k] - 0.2 * frame[2][k];
            }
            let p = s.exp_map(&o, &v);
            assert!(s.quadric_defect(&p) < 1e-14);
            let d = s.distance(&o, &p).unwrap();
            assert_abs_diff_eq!(d, (0.13f64).sqrt(), epsilon = 1e-13);
        }
    }
}
