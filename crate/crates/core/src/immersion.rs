//! Discrete immersions `F: M -> F^{n+d}(c)` sampled on a parameter grid, and
//! generators for the initial shapes used by the experiments.
//!
//! Perturbation catalogue. With `(x, y, z)` the first three coordinates of
//! the parameter point on the unit sphere `S^n`:
//!
//! | index | `Y_k`               | direction                     |
//! |-------|---------------------|-------------------------------|
//! | 0     | `x y`               | radial                        |
//! | 1     | `(3 z^2 - 1) / 2`   | radial                        |
//! | 2     | `x y z`             | radial                        |
//! | 3     | `x (x^2 - 3 y^2)`   | radial                        |
//! | 4     | `x`                 | radial                        |
//! | 5     | `x y`               | transverse (needs `d >= 2`)   |
//! | 6     | `z`                 | transverse (needs `d >= 2`)   |
//!
//! Radial modes change the geodesic radius to `r (1 + sum eps_k Y_k)`.
//! Transverse modes push the sphere out of its totally geodesic
//! `(n+1)`-slice by `eps_k r Y_k` along the next frame direction.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Grid, ParamDomain, ParamPoint, Topology};
use crate::spaceform::{FlatVec, SpaceForm, MAX_FLAT};

/// Number of entries in the perturbation catalogue.
pub const MODE_COUNT: usize = 7;

#[derive(Clone, Debug)]
pub struct Immersion {
    grid: Arc<Grid>,
    space: SpaceForm,
    codim: usize,
    coords: Vec<FlatVec>,
}

impl Immersion {
    /// Wraps node coordinates, checking dimensions, the quadric constraint
    /// and nondegeneracy of the induced metric.
    pub fn new(space: SpaceForm, grid: Arc<Grid>, coords: Vec<FlatVec>) -> Result<Self> {
        let imm = Self::from_parts(space, grid, coords)?;
        crate::geometry::check_metric(&imm)?;
        Ok(imm)
    }

    pub(crate) fn from_parts(space: SpaceForm, grid: Arc<Grid>, coords: Vec<FlatVec>) -> Result<Self> {
        let n = grid.intrinsic_dim();
        if space.ambient_dim() <= n {
            return Err(Error::input(format!(
                "ambient dimension {} leaves no normal directions for n = {n}",
                space.ambient_dim()
            )));
        }
        if coords.len() != grid.len() {
            return Err(Error::Dimension {
                expected: grid.len(),
                got: coords.len(),
            });
        }
        let scale = if space.c() == 0.0 { 1.0 } else { 1.0 / space.c().abs() };
        for (node, p) in coords.iter().enumerate() {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::DegeneratePoint(format!("non-finite coordinate at node {node}")));
            }
            if p[space.flat_dim()..].iter().any(|&v| v != 0.0) {
                return Err(Error::DegeneratePoint(format!(
                    "node {node} has entries past the flat dimension"
                )));
            }
            if space.quadric_defect(p) > 1e-10 * scale {
                return Err(Error::DegeneratePoint(format!("node {node} is off the quadric")));
            }
        }
        Ok(Self {
            codim: space.ambient_dim() - n,
            grid,
            space,
            coords,
        })
    }

    /// Same grid and ambient, new coordinates (validated).
    pub fn with_coords(&self, coords: Vec<FlatVec>) -> Result<Self> {
        Self::new(self.space, self.grid.clone(), coords)
    }

    pub(crate) fn with_coords_unchecked(&self, coords: Vec<FlatVec>) -> Self {
        Self {
            grid: self.grid.clone(),
            space: self.space,
            codim: self.codim,
            coords,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn domain(&self) -> ParamDomain {
        self.grid.domain()
    }

    pub fn space(&self) -> &SpaceForm {
        &self.space
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.grid.intrinsic_dim()
    }

    pub fn codim(&self) -> usize {
        self.codim
    }

    pub fn coords(&self) -> &[FlatVec] {
        &self.coords
    }

    /// Coordinates of one node truncated to the flat dimension.
    pub fn node(&self, i: usize) -> &[f64] {
        &self.coords[i][..self.space.flat_dim()]
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Largest `|<F,F> - 1/c|` over nodes.
    pub fn max_quadric_defect(&self) -> f64 {
        self.coords
            .iter()
            .map(|p| self.space.quadric_defect(p))
            .fold(0.0, f64::max)
    }

    /// Doubles the resolution by high-order interpolation in parameter space,
    /// followed by projection to the quadric.
    pub fn refine(&self) -> Result<Self> {
        let fine = Arc::new(Grid::new(self.domain().refined())?);
        let mut coords = Vec::with_capacity(fine.len());
        for node in 0..fine.len() {
            let st = self.grid.stencil_at(&fine.node_param(node));
            let mut p = self.grid.apply_stencil(&self.coords, &st);
            self.space.project(&mut p)?;
            coords.push(p);
        }
        Self::new(self.space, fine, coords)
    }
}

fn check_sphere_domain(space: &SpaceForm, domain: ParamDomain) -> Result<()> {
    if !domain.topology.is_sphere() {
        return Err(Error::input("sphere generators need a sphere2 or sphere3 domain"));
    }
    if space.ambient_dim() <= domain.topology.intrinsic_dim() {
        return Err(Error::input(format!(
            "ambient dimension {} is too small for an {}-sphere",
            space.ambient_dim(),
            domain.topology.intrinsic_dim()
        )));
    }
    Ok(())
}

fn check_radius(space: &SpaceForm, radius: f64) -> Result<()> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::input(format!("radius must be positive, got {radius}")));
    }
    if space.c() > 0.0 && radius >= std::f64::consts::PI / space.c().sqrt() {
        return Err(Error::input(format!(
            "radius {radius} reaches the antipode of the ambient sphere"
        )));
    }
    Ok(())
}

fn sphere_param(p: ParamPoint) -> [f64; 4] {
    match p {
        ParamPoint::Sphere(x) => x,
        ParamPoint::Torus(_) => unreachable!("sphere domain yields sphere points"),
    }
}

/// Distance sphere of the given radius about `center`.
pub fn make_geodesic_sphere(
    space: SpaceForm,
    domain: ParamDomain,
    center: &[f64],
    radius: f64,
) -> Result<Immersion> {
    check_sphere_domain(&space, domain)?;
    check_radius(&space, radius)?;
    let center = space.to_flat(center)?;
    let scale = if space.c() == 0.0 { 1.0 } else { 1.0 / space.c().abs() };
    if space.quadric_defect(&center) > 1e-10 * scale {
        return Err(Error::input("center is not on the quadric"));
    }
    let mut c = center;
    space.project(&mut c)?;
    build_sphere(space, domain, &c, radius, &[])
}

/// Perturbed geodesic sphere about the model origin; see the module docs for
/// the mode catalogue.
pub fn make_perturbed_sphere(
    space: SpaceForm,
    domain: ParamDomain,
    radius: f64,
    modes: &[(usize, f64)],
) -> Result<Immersion> {
    check_sphere_domain(&space, domain)?;
    check_radius(&space, radius)?;
    let n = domain.topology.intrinsic_dim();
    for &(k, eps) in modes {
        if k >= MODE_COUNT {
            return Err(Error::input(format!("unknown perturbation mode {k}")));
        }
        if !eps.is_finite() {
            return Err(Error::input("mode amplitude must be finite"));
        }
        if k >= 5 && space.ambient_dim() < n + 2 {
            return Err(Error::input(format!("transverse mode {k} needs codimension >= 2")));
        }
    }
    build_sphere(space, domain, &space.origin(), radius, modes)
}

fn mode_value(k: usize, x: &[f64; 4]) -> f64 {
    let (a, b, z) = (x[0], x[1], x[2]);
    match k {
        0 | 5 => a * b,
        1 => 0.5 * (3.0 * z * z - 1.0),
        2 => a * b * z,
        3 => a * (a * a - 3.0 * b * b),
        4 => a,
        6 => z,
        _ => unreachable!(),
    }
}

fn build_sphere(
    space: SpaceForm,
    domain: ParamDomain,
    center: &FlatVec,
    radius: f64,
    modes: &[(usize, f64)],
) -> Result<Immersion> {
    let grid = Arc::new(Grid::new(domain)?);
    let n = grid.intrinsic_dim();
    let frame = space.tangent_frame(center)?;
    let mut coords = Vec::with_capacity(grid.len());
    for node in 0..grid.len() {
        let x = sphere_param(grid.node_param(node));
        let mut rho = radius;
        let mut lift = 0.0;
        for &(k, eps) in modes {
            if k >= 5 {
                lift += eps * radius * mode_value(k, &x);
            } else {
                rho += eps * radius * mode_value(k, &x);
            }
        }
        if rho <= 0.0 {
            return Err(Error::input("perturbation makes the radial function non-positive"));
        }
        let mut v = [0.0; MAX_FLAT];
        for (j, e) in frame.iter().enumerate().take(n + 1) {
            for k in 0..MAX_FLAT {
                v[k] += rho * x[j] * e[k];
            }
        }
        if lift != 0.0 {
            for k in 0..MAX_FLAT {
                v[k] += lift * frame[n + 1][k];
            }
        }
        let mut p = space.exp_map(center, &v);
        space.project(&mut p)?;
        coords.push(p);
    }
    Immersion::new(space, grid, coords)
}

/// Tube of radius `minor` around a geodesic circle of radius `major`, lying
/// in a totally geodesic 3-dimensional slice through the model origin.
pub fn make_torus(
    space: SpaceForm,
    domain: ParamDomain,
    radii: (f64, f64),
    d: usize,
) -> Result<Immersion> {
    if domain.topology != Topology::Torus2 {
        return Err(Error::input("make_torus needs a torus2 domain"));
    }
    if d == 0 || space.ambient_dim() != 2 + d {
        return Err(Error::input(format!(
            "codimension {d} does not match ambient dimension {}",
            space.ambient_dim()
        )));
    }
    let (major, minor) = radii;
    if !(major > 0.0 && minor > 0.0 && major.is_finite() && minor.is_finite()) {
        return Err(Error::input("torus radii must be positive"));
    }
    if minor >= major {
        return Err(Error::input("torus minor radius must be smaller than the major radius"));
    }
    if space.c() > 0.0 && major + minor >= std::f64::consts::PI / (2.0 * space.c().sqrt()) {
        return Err(Error::input("torus does not fit in a hemisphere of the ambient sphere"));
    }
    let grid = Arc::new(Grid::new(domain)?);
    let o = space.origin();
    let frame = space.tangent_frame(&o)?;
    let c = space.c();
    let mut coords = Vec::with_capacity(grid.len());
    for node in 0..grid.len() {
        let ParamPoint::Torus([u, v]) = grid.node_param(node) else {
            unreachable!()
        };
        let mut w = [0.0; MAX_FLAT];
        for k in 0..MAX_FLAT {
            w[k] = u.cos() * frame[0][k] + u.sin() * frame[1][k];
        }
        let gamma = space.geodesic_point(&o, &w, major);
        let mut n1 = [0.0; MAX_FLAT];
        for k in 0..MAX_FLAT {
            n1[k] = -c * space.sin_k(major) * o[k] + space.cos_k(major) * w[k];
        }
        let mut dir = [0.0; MAX_FLAT];
        for k in 0..MAX_FLAT {
            dir[k] = v.cos() * n1[k] + v.sin() * frame[2][k];
        }
        let mut p = space.geodesic_point(&gamma, &dir, minor);
        space.project(&mut p)?;
        coords.push(p);
    }
    Immersion::new(space, grid, coords)
}
