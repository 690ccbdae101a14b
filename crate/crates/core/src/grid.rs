//! Structured parameter grids for the closed manifold `M` and their ghost
//! layers.
//!
//! Spheres use gnomonic equiangular cube charts: `S^2` is covered by the 6
//! faces of a cube, `S^3` by the 8 cubical cells of a tesseract. Nodes are
//! cell centred, so no node sits on a patch edge. Every patch is padded by
//! [`GHOST`] layers whose values are interpolated from the patch that owns
//! the corresponding point of the parameter sphere. Because a ghost value is
//! the field evaluated at a point of the *extended* chart, finite
//! differences near patch edges use the same smooth chart as in the interior.
//!
//! The torus is doubly periodic and its ghosts are plain copies.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spaceform::{FlatVec, MAX_FLAT};

/// Ghost layers stored around each patch.
pub const GHOST: usize = 3;

/// Largest intrinsic dimension supported by the grids.
pub const MAX_N: usize = 3;

const MAX_STENCIL: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// `S^2` on a cubed sphere (6 patches).
    Sphere2,
    /// Doubly periodic `T^2`.
    Torus2,
    /// `S^3` on a cubed 3-sphere (8 patches).
    Sphere3,
}

impl Topology {
    pub fn intrinsic_dim(self) -> usize {
        match self {
            Topology::Sphere2 | Topology::Torus2 => 2,
            Topology::Sphere3 => 3,
        }
    }

    pub fn patch_count(self) -> usize {
        match self {
            Topology::Sphere2 => 6,
            Topology::Torus2 => 1,
            Topology::Sphere3 => 8,
        }
    }

    pub fn is_sphere(self) -> bool {
        !matches!(self, Topology::Torus2)
    }

    /// Points per axis of the Lagrange interpolation used for ghost values.
    fn interp_points(self) -> usize {
        match self {
            Topology::Sphere2 => 8,
            Topology::Sphere3 => 6,
            Topology::Torus2 => 8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamDomain {
    pub topology: Topology,
    pub resolution: usize,
}

impl ParamDomain {
    pub fn new(topology: Topology, resolution: usize) -> Result<Self> {
        if resolution < 8 {
            return Err(Error::input(format!("resolution must be >= 8, got {resolution}")));
        }
        if resolution > u16::MAX as usize {
            return Err(Error::input("resolution too large"));
        }
        Ok(Self { topology, resolution })
    }

    pub fn refined(&self) -> Self {
        Self {
            topology: self.topology,
            resolution: self.resolution * 2,
        }
    }
}

/// A point of the abstract parameter manifold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ParamPoint {
    /// Unit vector of `R^{n+1}` (entries past `n+1` are zero).
    Sphere([f64; MAX_N + 1]),
    /// Angles in `[0, 2 pi)`.
    Torus([f64; 2]),
}

/// Values that can be stored on grid nodes and interpolated.
pub trait FieldValue: Copy + Default {
    fn add_scaled(&mut self, other: &Self, w: f64);
}

impl FieldValue for f64 {
    #[inline]
    fn add_scaled(&mut self, other: &Self, w: f64) {
        *self += w * other;
    }
}

impl FieldValue for FlatVec {
    #[inline]
    fn add_scaled(&mut self, other: &Self, w: f64) {
        for k in 0..MAX_FLAT {
            self[k] += w * other[k];
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct AxisStencil {
    len: u8,
    idx: [u16; MAX_STENCIL],
    w: [f64; MAX_STENCIL],
}

/// Interpolation stencil: a tensor product of 1-D Lagrange stencils on one
/// patch.
#[derive(Clone, Copy, Debug)]
pub struct Stencil {
    patch: usize,
    axes: [AxisStencil; MAX_N],
}

#[derive(Clone, Debug)]
struct Ghost {
    padded: usize,
    layer: usize,
    stencil: Stencil,
}

#[derive(Debug)]
pub struct Grid {
    domain: ParamDomain,
    n: usize,
    res: usize,
    h: f64,
    interior_padded: Vec<usize>,
    interior_id: Vec<usize>,
    layer: Vec<u8>,
    ghosts: Vec<Ghost>,
    box_offsets: Vec<isize>,
    reference_gamma: OnceLock<Vec<RefGamma>>,
}

/// Christoffel symbols `Gamma^m_ij` of the background metric at a node,
/// symmetric pair index last.
pub(crate) type RefGamma = [[f64; 6]; MAX_N];

impl Grid {
    pub fn new(domain: ParamDomain) -> Result<Self> {
        let domain = ParamDomain::new(domain.topology, domain.resolution)?;
        let topo = domain.topology;
        let n = topo.intrinsic_dim();
        let res = domain.resolution;
        let patches = topo.patch_count();
        let edge = res + 2 * GHOST;
        let mut strides = [0; MAX_N];
        let mut s = 1;
        for k in 0..n {
            strides[k] = s;
            s *= edge;
        }
        let patch_len = s;
        let h = if topo.is_sphere() {
            FRAC_PI_2 / res as f64
        } else {
            2.0 * PI / res as f64
        };

        let mut grid = Self {
            domain,
            n,
            res,
            h,
            interior_padded: Vec::new(),
            interior_id: vec![usize::MAX; patches * patch_len],
            layer: vec![0; patches * patch_len],
            ghosts: Vec::new(),
            box_offsets: Vec::new(),
            reference_gamma: OnceLock::new(),
        };

        let interior_per_patch = res.pow(n as u32);
        grid.interior_padded = (0..patches * interior_per_patch)
            .map(|id| {
                let (p, idx) = grid.split_node(id);
                let mut pi = p * patch_len;
                for k in 0..n {
                    pi += (idx[k] + GHOST) * strides[k];
                }
                pi
            })
            .collect();
        for (id, &pi) in grid.interior_padded.iter().enumerate() {
            grid.interior_id[pi] = id;
        }

        for p in 0..patches {
            for local in 0..patch_len {
                let mut rem = local;
                let mut pidx = [0usize; MAX_N];
                for k in 0..n {
                    pidx[k] = rem % edge;
                    rem /= edge;
                }
                let mut layer = 0;
                for k in 0..n {
                    let i = pidx[k];
                    let d = if i < GHOST {
                        GHOST - i
                    } else if i >= GHOST + res {
                        i + 1 - GHOST - res
                    } else {
                        0
                    };
                    layer = layer.max(d);
                }
                let padded = p * patch_len + local;
                grid.layer[padded] = layer as u8;
                if layer == 0 {
                    continue;
                }
                let mut pos = [0.0; MAX_N];
                for k in 0..n {
                    pos[k] = pidx[k] as f64 - GHOST as f64;
                }
                let point = grid.chart_point(p, &pos);
                let stencil = grid.stencil_at(&point);
                grid.ghosts.push(Ghost { padded, layer, stencil });
            }
        }

        let count = 3usize.pow(n as u32);
        grid.box_offsets = (0..count)
            .map(|b| {
                let mut rem = b;
                let mut off = 0isize;
                for k in 0..n {
                    let o = (rem % 3) as isize - 1;
                    rem /= 3;
                    off += o * strides[k] as isize;
                }
                off
            })
            .collect();
        Ok(grid)
    }

    /// Background connection: the round unit sphere for sphere topologies
    /// (evaluated with the same stencils as the flow), flat for the torus.
    pub(crate) fn reference_christoffel(&self) -> &[RefGamma] {
        self.reference_gamma
            .get_or_init(|| crate::geometry::reference_christoffel(self))
    }

    pub fn domain(&self) -> ParamDomain {
        self.domain
    }

    pub fn topology(&self) -> Topology {
        self.domain.topology
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.n
    }

    pub fn resolution(&self) -> usize {
        self.res
    }

    /// Parameter spacing along every axis.
    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Parameter volume of one cell, `h^n`.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.n as i32)
    }

    /// Number of interior nodes.
    pub fn len(&self) -> usize {
        self.interior_padded.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interior_padded.is_empty()
    }

    pub fn padded_len(&self) -> usize {
        self.layer.len()
    }

    pub(crate) fn padded_index(&self, node: usize) -> usize {
        self.interior_padded[node]
    }

    /// Interior node stored at a padded position, if any.
    pub(crate) fn interior_of(&self, padded: usize) -> Option<usize> {
        let id = self.interior_id[padded];
        (id != usize::MAX).then_some(id)
    }

    /// Chebyshev distance of a padded node from the interior box.
    pub(crate) fn layer_of(&self, padded: usize) -> usize {
        self.layer[padded] as usize
    }

    /// Offsets of the `3^n` box around a padded node; entry
    /// `sum_k (o_k + 1) 3^k` holds the offset for displacement `o`.
    pub(crate) fn box_offsets(&self) -> &[isize] {
        &self.box_offsets
    }

    fn split_node(&self, id: usize) -> (usize, [usize; MAX_N]) {
        let per = self.res.pow(self.n as u32);
        let p = id / per;
        let mut rem = id % per;
        let mut idx = [0; MAX_N];
        for k in 0..self.n {
            idx[k] = rem % self.res;
            rem /= self.res;
        }
        (p, idx)
    }

    fn node_id(&self, patch: usize, idx: &[usize; MAX_N]) -> usize {
        let mut id = 0;
        let mut s = 1;
        for k in 0..self.n {
            id += idx[k] * s;
            s *= self.res;
        }
        patch * self.res.pow(self.n as u32) + id
    }

    /// Distance (in cells) from a node to the nearest patch edge. Unbounded
    /// on the torus.
    pub fn boundary_distance(&self, node: usize) -> usize {
        if !self.topology().is_sphere() {
            return usize::MAX;
        }
        let (_, idx) = self.split_node(node);
        (0..self.n)
            .map(|k| idx[k].min(self.res - 1 - idx[k]))
            .min()
            .unwrap_or(0)
    }

    /// Point of the parameter manifold at a node.
    pub fn node_param(&self, node: usize) -> ParamPoint {
        let (p, idx) = self.split_node(node);
        let mut pos = [0.0; MAX_N];
        for k in 0..self.n {
            pos[k] = idx[k] as f64;
        }
        self.chart_point(p, &pos)
    }

    /// Point of the parameter manifold at fractional index `pos` of patch `p`.
    fn chart_point(&self, p: usize, pos: &[f64; MAX_N]) -> ParamPoint {
        match self.topology() {
            Topology::Torus2 => {
                let wrap = |i: f64| (i * self.h).rem_euclid(2.0 * PI);
                ParamPoint::Torus([wrap(pos[0]), wrap(pos[1])])
            }
            _ => {
                let axis = p / 2;
                let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
                let mut x = [0.0; MAX_N + 1];
                x[axis] = sign;
                for (k, &o) in self.others(axis).iter().enumerate().take(self.n) {
                    let xi = -FRAC_PI_4 + (pos[k] + 0.5) * self.h;
                    x[o] = xi.tan();
                }
                let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                for v in x.iter_mut() {
                    *v /= nrm;
                }
                ParamPoint::Sphere(x)
            }
        }
    }

    fn others(&self, axis: usize) -> [usize; MAX_N] {
        let mut out = [0; MAX_N];
        let mut k = 0;
        for j in 0..=self.n {
            if j != axis {
                out[k] = j;
                k += 1;
            }
        }
        out
    }

    /// Interpolation stencil for an arbitrary parameter point.
    pub fn stencil_at(&self, point: &ParamPoint) -> Stencil {
        let m = self.topology().interp_points();
        let mut axes = [AxisStencil::default(); MAX_N];
        match *point {
            ParamPoint::Torus(theta) => {
                for k in 0..2 {
                    let u = theta[k] / self.h;
                    let near = u.round();
                    if (u - near).abs() < 1e-12 {
                        let i = (near as i64).rem_euclid(self.res as i64) as u16;
                        axes[k].len = 1;
                        axes[k].idx[0] = i;
                        axes[k].w[0] = 1.0;
                    } else {
                        let start = u.floor() as i64 - (m as i64 / 2 - 1);
                        let w = lagrange_weights(u - start as f64, m);
                        axes[k].len = m as u8;
                        for l in 0..m {
                            axes[k].idx[l] = (start + l as i64).rem_euclid(self.res as i64) as u16;
                            axes[k].w[l] = w[l];
                        }
                    }
                }
                Stencil { patch: 0, axes }
            }
            ParamPoint::Sphere(x) => {
                let mut axis = 0;
                for j in 1..=self.n {
                    if x[j].abs() > x[axis].abs() {
                        axis = j;
                    }
                }
                let patch = 2 * axis + usize::from(x[axis] < 0.0);
                let others = self.others(axis);
                for k in 0..self.n {
                    let xi = (x[others[k]] / x[axis].abs()).atan();
                    let u = (xi + FRAC_PI_4) / self.h - 0.5;
                    let start = (u.floor() as i64 - (m as i64 / 2 - 1))
                        .clamp(0, (self.res - m) as i64);
                    let w = lagrange_weights(u - start as f64, m);
                    axes[k].len = m as u8;
                    for l in 0..m {
                        axes[k].idx[l] = (start + l as i64) as u16;
                        axes[k].w[l] = w[l];
                    }
                }
                Stencil { patch, axes }
            }
        }
    }

    /// Evaluates a node field at a stencil.
    pub fn apply_stencil<T: FieldValue>(&self, field: &[T], st: &Stencil) -> T {
        let mut out = T::default();
        let a = &st.axes;
        let mut idx = [0usize; MAX_N];
        match self.n {
            2 => {
                for i in 0..a[0].len as usize {
                    idx[0] = a[0].idx[i] as usize;
                    for j in 0..a[1].len as usize {
                        idx[1] = a[1].idx[j] as usize;
                        let w = a[0].w[i] * a[1].w[j];
                        out.add_scaled(&field[self.node_id(st.patch, &idx)], w);
                    }
                }
            }
            _ => {
                for i in 0..a[0].len as usize {
                    idx[0] = a[0].idx[i] as usize;
                    for j in 0..a[1].len as usize {
                        idx[1] = a[1].idx[j] as usize;
                        for l in 0..a[2].len as usize {
                            idx[2] = a[2].idx[l] as usize;
                            let w = a[0].w[i] * a[1].w[j] * a[2].w[l];
                            out.add_scaled(&field[self.node_id(st.patch, &idx)], w);
                        }
                    }
                }
            }
        }
        out
    }

    /// Copies a node field into padded layout and fills ghost layers up to
    /// `width`.
    pub fn pad<T: FieldValue>(&self, field: &[T], width: usize) -> Vec<T> {
        assert_eq!(field.len(), self.len(), "field length does not match grid");
        assert!(width <= GHOST, "ghost width {width} exceeds {GHOST}");
        let mut out = vec![T::default(); self.padded_len()];
        for (id, &pi) in self.interior_padded.iter().enumerate() {
            out[pi] = field[id];
        }
        for g in &self.ghosts {
            if g.layer <= width {
                out[g.padded] = self.apply_stencil(field, &g.stencil);
            }
        }
        out
    }

    /// Interior node values of a padded field.
    pub fn unpad<T: Copy>(&self, padded: &[T]) -> Vec<T> {
        self.interior_padded.iter().map(|&pi| padded[pi]).collect()
    }
}

/// Lagrange weights for evaluating at fractional position `u` from nodes
/// `0, 1, ..., m-1`.
fn lagrange_weights(u: f64, m: usize) -> [f64; MAX_STENCIL] {
    let mut w = [0.0; MAX_STENCIL];
    for j in 0..m {
        let mut v = 1.0;
        for l in 0..m {
            if l != j {
                v *= (u - l as f64) / (j as f64 - l as f64);
            }
        }
        w[j] = v;
    }
    w
}
