//! Extrinsic differential geometry of a discrete immersion.
//!
//! Every quantity at a node is computed from the `3^n` box of coordinates
//! around it, in the chart of the patch that holds the node. Ghost layers
//! supply the box near patch edges, so nodes close to an edge are treated
//! exactly like interior ones.
//!
//! Conventions: `A_ij` is the normal part of `d_i d_j F` (the tangential
//! part and, for `c != 0`, the position component are removed exactly), and
//! `H = g^ij A_ij`. Gradients of normal-bundle-valued tensors project
//! centred differences onto the normal space at the centre node and apply
//! the Christoffel correction for tangent indices.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Grid, ParamPoint, RefGamma, GHOST, MAX_N};
use crate::immersion::Immersion;
use crate::linalg::{self, Mat, MAX_M};
use crate::spaceform::{FlatVec, SpaceForm, MAX_FLAT};

/// `|H|` below this multiple of `max(1, sqrt|c|)` leaves the splitting of
/// `Å` along `H` undefined.
pub const H_FLOOR: f64 = 1e-8;

pub type Mat3 = [[f64; MAX_N]; MAX_N];

/// Tensor of normal vectors indexed by two tangent indices.
pub type NormalTensor = [[FlatVec; MAX_N]; MAX_N];

const SYM: [[usize; 3]; 3] = [[0, 1, 2], [1, 3, 4], [2, 4, 5]];

#[inline]
fn sym(i: usize, j: usize) -> usize {
    SYM[i][j]
}

#[inline]
fn zero() -> FlatVec {
    [0.0; MAX_FLAT]
}

#[inline(always)]
fn axpy(y: &mut FlatVec, a: f64, x: &FlatVec) {
    for k in 0..MAX_FLAT {
        y[k] += a * x[k];
    }
}

#[inline]
fn diff_scaled(x: &FlatVec, y: &FlatVec, s: f64) -> FlatVec {
    let mut out = [0.0; MAX_FLAT];
    for k in 0..MAX_FLAT {
        out[k] = (x[k] - y[k]) * s;
    }
    out
}

fn to_mat(g: &Mat3, n: usize) -> Mat {
    let mut m = [[0.0; MAX_M]; MAX_M];
    for i in 0..n {
        for j in 0..n {
            m[i][j] = g[i][j];
        }
    }
    m
}

/// Raw per-node data computed from the coordinate box.
#[derive(Clone, Copy, Debug)]
pub(crate) struct NodeGeom {
    pub n: usize,
    pub g: Mat3,
    pub g_inv: Mat3,
    pub sqrt_g: f64,
    pub f: FlatVec,
    pub df: [FlatVec; MAX_N],
    pub d2: [FlatVec; 6],
    /// Dual basis of `{d_1 F, ..., d_n F, F}` (the last only when `c != 0`).
    pub dual: [FlatVec; MAX_M],
    pub nt: usize,
    pub a: [FlatVec; 6],
    pub h: FlatVec,
}

impl NodeGeom {
    #[inline(always)]
    fn tangent(&self, a: usize) -> &FlatVec {
        if a < self.n {
            &self.df[a]
        } else {
            &self.f
        }
    }

    #[inline(always)]
    pub fn normal_project(&self, space: &SpaceForm, v: &FlatVec) -> FlatVec {
        let mut out = *v;
        for a in 0..self.nt {
            let s = space.dot(v, self.tangent(a));
            axpy(&mut out, -s, &self.dual[a]);
        }
        out
    }

    /// `Gamma^m_ki`.
    #[inline]
    pub fn christoffel(&self, space: &SpaceForm, m: usize, k: usize, i: usize) -> f64 {
        space.dot(&self.dual[m], &self.d2[sym(k, i)])
    }

    pub fn aring(&self, i: usize, j: usize) -> FlatVec {
        let mut out = self.a[sym(i, j)];
        axpy(&mut out, -self.g[i][j] / self.n as f64, &self.h);
        out
    }

    pub fn normsq_h(&self, space: &SpaceForm) -> f64 {
        space.dot(&self.h, &self.h)
    }

    /// `g^ik g^jl <T_ij, T_kl>` for a symmetric normal tensor stored by
    /// symmetric pair index.
    #[inline(always)]
    fn contract2(&self, space: &SpaceForm, t: &[FlatVec; 6]) -> f64 {
        match self.n {
            2 => self.contract2_dim::<2>(space, t),
            _ => self.contract2_dim::<3>(space, t),
        }
    }

    #[inline(always)]
    fn contract2_dim<const N: usize>(&self, space: &SpaceForm, t: &[FlatVec; 6]) -> f64 {
        let mut d = [[0.0; 6]; 6];
        for i in 0..N {
            for j in i..N {
                for k in 0..N {
                    for l in k..N {
                        let (p, q) = (sym(i, j), sym(k, l));
                        if q >= p {
                            d[p][q] = space.dot(&t[p], &t[q]);
                            d[q][p] = d[p][q];
                        }
                    }
                }
            }
        }
        let gi = &self.g_inv;
        let mut s = 0.0;
        for i in 0..N {
            for j in 0..N {
                for k in 0..N {
                    for l in 0..N {
                        s += gi[i][k] * gi[j][l] * d[sym(i, j)][sym(k, l)];
                    }
                }
            }
        }
        s
    }

    pub fn a_tensor(&self) -> NormalTensor {
        let mut t = [[zero(); MAX_N]; MAX_N];
        for i in 0..self.n {
            for j in 0..self.n {
                t[i][j] = self.a[sym(i, j)];
            }
        }
        t
    }

    pub fn aring_tensor(&self) -> NormalTensor {
        let mut t = [[zero(); MAX_N]; MAX_N];
        for i in 0..self.n {
            for j in 0..self.n {
                t[i][j] = self.aring(i, j);
            }
        }
        t
    }

    pub fn normsq_a(&self, space: &SpaceForm) -> f64 {
        self.contract2(space, &self.a)
    }

    pub fn normsq_aring(&self, space: &SpaceForm) -> f64 {
        let mut t = self.a;
        for i in 0..self.n {
            for j in i..self.n {
                axpy(&mut t[sym(i, j)], -self.g[i][j] / self.n as f64, &self.h);
            }
        }
        self.contract2(space, &t)
    }

    /// `n / tr(g^-1)`, the harmonic mean of the metric eigenvalues.
    pub fn metric_scale(&self) -> f64 {
        let tr: f64 = (0..self.n).map(|i| self.g_inv[i][i]).sum();
        self.n as f64 / tr
    }
}

impl NodeGeom {
    pub(crate) fn empty() -> Self {
        Self {
            n: 0,
            g: [[0.0; MAX_N]; MAX_N],
            g_inv: [[0.0; MAX_N]; MAX_N],
            sqrt_g: 0.0,
            f: zero(),
            df: [zero(); MAX_N],
            d2: [zero(); 6],
            dual: [zero(); MAX_M],
            nt: 0,
            a: [zero(); 6],
            h: zero(),
        }
    }
}

/// Computes the node data at padded index `pi` from the padded coordinates.
pub(crate) fn node_geom(space: &SpaceForm, grid: &Grid, fp: &[FlatVec], pi: usize) -> Result<NodeGeom> {
    let mut out = NodeGeom::empty();
    node_geom_into(space, grid, fp, pi, &mut out)?;
    Ok(out)
}

/// In-place variant of [`node_geom`]; every field of `geom` is overwritten.
pub(crate) fn node_geom_into(
    space: &SpaceForm,
    grid: &Grid,
    fp: &[FlatVec],
    pi: usize,
    geom: &mut NodeGeom,
) -> Result<()> {
    match grid.intrinsic_dim() {
        2 => node_geom_dim::<2>(space, grid, fp, pi, geom),
        _ => node_geom_dim::<3>(space, grid, fp, pi, geom),
    }
}

#[inline(always)]
fn node_geom_dim<const N: usize>(
    space: &SpaceForm,
    grid: &Grid,
    fp: &[FlatVec],
    pi: usize,
    geom: &mut NodeGeom,
) -> Result<()> {
    let n = N;
    let h = grid.spacing();
    let offs = grid.box_offsets();
    let pw = [1usize, 3, 9, 27];
    let b0 = (pw[n] - 1) / 2;
    let at = |b: usize| &fp[(pi as isize + offs[b]) as usize];
    let f = *at(b0);
    let inv2h = 0.5 / h;
    let invh2 = 1.0 / (h * h);
    let inv4h2 = 0.25 * invh2;
    geom.n = n;
    geom.f = f;
    let df = &mut geom.df;
    let d2 = &mut geom.d2;
    for k in 0..n {
        let p = at(b0 + pw[k]);
        let m = at(b0 - pw[k]);
        for c in 0..MAX_FLAT {
            df[k][c] = (p[c] - m[c]) * inv2h;
            d2[sym(k, k)][c] = (p[c] - 2.0 * f[c] + m[c]) * invh2;
        }
        for l in k + 1..n {
            let pp = at(b0 + pw[k] + pw[l]);
            let pm = at(b0 + pw[k] - pw[l]);
            let mp = at(b0 - pw[k] + pw[l]);
            let mm = at(b0 - pw[k] - pw[l]);
            for c in 0..MAX_FLAT {
                d2[sym(k, l)][c] = (pp[c] - pm[c] - mp[c] + mm[c]) * inv4h2;
            }
        }
    }
    let node = grid.interior_of(pi).unwrap_or(pi);
    let nt = n + usize::from(space.c() != 0.0);
    geom.nt = nt;
    let mut gram = [[0.0; MAX_M]; MAX_M];
    for a in 0..nt {
        for b in a..nt {
            let v = space.dot(geom.tangent(a), geom.tangent(b));
            gram[a][b] = v;
            gram[b][a] = v;
        }
    }
    for i in 0..n {
        for j in 0..n {
            geom.g[i][j] = gram[i][j];
        }
    }
    let gm = to_mat(&geom.g, n);
    let det = linalg::determinant(&gm, n);
    let tr: f64 = (0..n).map(|i| geom.g[i][i]).sum();
    if !(tr > 0.0 && det > 1e-12 * (tr / n as f64).powi(n as i32)) {
        return Err(Error::DegenerateMetric { node });
    }
    let gi = linalg::inverse(&gm, n).ok_or(Error::DegenerateMetric { node })?;
    let gram_inv = linalg::inverse(&gram, nt).ok_or(Error::DegenerateMetric { node })?;
    for i in 0..n {
        for j in 0..n {
            geom.g_inv[i][j] = gi[i][j];
        }
    }
    geom.sqrt_g = det.sqrt();
    for a in 0..nt {
        let mut d = zero();
        for b in 0..nt {
            axpy(&mut d, gram_inv[a][b], geom.tangent(b));
        }
        geom.dual[a] = d;
    }
    let mut hv = zero();
    for i in 0..n {
        for j in i..n {
            let s = sym(i, j);
            let a = geom.normal_project(space, &geom.d2[s]);
            let w = if i == j { geom.g_inv[i][i] } else { 2.0 * geom.g_inv[i][j] };
            axpy(&mut hv, w, &a);
            geom.a[s] = a;
        }
    }
    geom.h = hv;
    Ok(())
}

/// Geometry at one node of the grid.
#[derive(Clone, Debug)]
pub struct PointGeometry {
    pub n: usize,
    pub g: Mat3,
    pub g_inv: Mat3,
    pub area_element: f64,
    pub a_vec: NormalTensor,
    pub h_vec: FlatVec,
    pub a_ring: NormalTensor,
    pub normsq_a: f64,
    pub normsq_h: f64,
    pub normsq_aring: f64,
    /// Second fundamental form in an orthonormal tangent frame.
    pub(crate) a_on: NormalTensor,
}

impl PointGeometry {
    pub(crate) fn from_node(space: &SpaceForm, ng: &NodeGeom) -> Result<Self> {
        let n = ng.n;
        let l = linalg::cholesky(&to_mat(&ng.g, n), n).ok_or(Error::DegenerateMetric { node: 0 })?;
        let li = linalg::lower_inverse(&l, n);
        // e_a = sum_i li[a][i] d_i
        let a_vec = ng.a_tensor();
        let mut a_on = [[zero(); MAX_N]; MAX_N];
        for a in 0..n {
            for b in a..n {
                let mut v = zero();
                for i in 0..=a {
                    for j in 0..=b {
                        axpy(&mut v, li[a][i] * li[b][j], &a_vec[i][j]);
                    }
                }
                a_on[a][b] = v;
                a_on[b][a] = v;
            }
        }
        let mut normsq_a = 0.0;
        let mut trace = zero();
        for a in 0..n {
            axpy(&mut trace, 1.0, &a_on[a][a]);
            for b in 0..n {
                normsq_a += space.dot(&a_on[a][b], &a_on[a][b]);
            }
        }
        let mut normsq_aring = 0.0;
        for a in 0..n {
            for b in 0..n {
                let mut v = a_on[a][b];
                if a == b {
                    axpy(&mut v, -1.0 / n as f64, &trace);
                }
                normsq_aring += space.dot(&v, &v);
            }
        }
        Ok(Self {
            n,
            g: ng.g,
            g_inv: ng.g_inv,
            area_element: ng.sqrt_g,
            a_vec,
            h_vec: ng.h,
            a_ring: ng.aring_tensor(),
            normsq_a,
            normsq_h: ng.normsq_h(space),
            normsq_aring,
            a_on,
        })
    }

    /// Reaction-term invariants, the splitting of `Å` along `H` and the
    /// minimum sectional curvature. Gradient entries are left at zero.
    pub(crate) fn algebraic_invariants(&self, space: &SpaceForm, codim: usize) -> InvariantBundle {
        let n = self.n;
        let a = &self.a_on;
        let dot = |x: &FlatVec, y: &FlatVec| space.dot(x, y);
        let h = &self.h_vec;
        let mut r1 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let v = dot(&a[i][j], &a[k][l]);
                        r1 += v * v;
                    }
                }
            }
        }
        let mut rperp = 0.0;
        if codim > 1 {
            for i in 0..n {
                for j in 0..n {
                    for p in 0..n {
                        for q in 0..n {
                            rperp += 2.0
                                * (dot(&a[i][p], &a[i][q]) * dot(&a[j][p], &a[j][q])
                                    - dot(&a[i][p], &a[j][q]) * dot(&a[j][p], &a[i][q]));
                        }
                    }
                }
            }
            rperp = rperp.max(0.0);
        }
        r1 += rperp;
        let mut r2 = 0.0;
        let mut cubic = 0.0;
        for i in 0..n {
            for j in 0..n {
                let v = dot(h, &a[i][j]);
                r2 += v * v;
                for p in 0..n {
                    cubic += dot(h, &a[i][p]) * dot(&a[i][j], &a[p][j]);
                }
            }
        }
        let z = -r1 + cubic;

        let floor = H_FLOOR * space.c().abs().sqrt().max(1.0);
        let (aring_h_sq, aring_i_sq) = if self.normsq_h.sqrt() > floor {
            let nu_scale = 1.0 / self.normsq_h.sqrt();
            let mut hh = 0.0;
            let mut ii = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let mut ar = a[i][j];
                    if i == j {
                        axpy(&mut ar, -1.0 / n as f64, h);
                    }
                    let s = dot(&ar, h) * nu_scale;
                    hh += s * s;
                    let mut rest = ar;
                    axpy(&mut rest, -s * nu_scale, h);
                    ii += dot(&rest, &rest);
                }
            }
            (Some(hh), Some(ii))
        } else {
            (None, None)
        };

        let sectional = |u: &[f64; 3], v: &[f64; 3]| {
            let form = |x: &[f64; 3], y: &[f64; 3]| {
                let mut out = zero();
                for i in 0..n {
                    for j in 0..n {
                        axpy(&mut out, x[i] * y[j], &a[i][j]);
                    }
                }
                out
            };
            let uv = form(u, v);
            space.c() + dot(&form(u, u), &form(v, v)) - dot(&uv, &uv)
        };
        let k_min = if n == 2 {
            sectional(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0])
        } else {
            let mut best = f64::INFINITY;
            for code in 0..27 {
                let m = [(code % 3) as f64 - 1.0, ((code / 3) % 3) as f64 - 1.0, (code / 9) as f64 - 1.0];
                if m == [0.0; 3] {
                    continue;
                }
                let (u, v) = plane_basis(&m);
                best = best.min(sectional(&u, &v));
            }
            best
        };

        InvariantBundle {
            r1,
            r2,
            rperp_sq: rperp,
            z,
            normsq_grad_h: 0.0,
            normsq_grad_a: 0.0,
            aring_h_sq,
            aring_i_sq,
            k_min,
        }
    }
}

/// Orthonormal basis of the plane orthogonal to `m` in `R^3`.
fn plane_basis(m: &[f64; 3]) -> ([f64; 3], [f64; 3]) {
    let nm = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
    let m = [m[0] / nm, m[1] / nm, m[2] / nm];
    let seed = if m[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let d = seed[0] * m[0] + seed[1] * m[1] + seed[2] * m[2];
    let mut u = [seed[0] - d * m[0], seed[1] - d * m[1], seed[2] - d * m[2]];
    let nu = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
    for x in u.iter_mut() {
        *x /= nu;
    }
    let v = [
        m[1] * u[2] - m[2] * u[1],
        m[2] * u[0] - m[0] * u[2],
        m[0] * u[1] - m[1] * u[0],
    ];
    (u, v)
}

/// Scalar invariants at one node.
#[derive(Clone, Debug, Serialize)]
pub struct InvariantBundle {
    pub r1: f64,
    pub r2: f64,
    pub rperp_sq: f64,
    pub z: f64,
    pub normsq_grad_h: f64,
    pub normsq_grad_a: f64,
    /// `|Å_H|^2`, undefined when `|H|` is below the floor.
    pub aring_h_sq: Option<f64>,
    pub aring_i_sq: Option<f64>,
    pub k_min: f64,
}

/// Geometry over every node of the grid plus ghost nodes up to `reach`
/// layers, which is what derivatives of geometric quantities need:
/// reach 1 for `grad H`, `grad A` and Laplacians of invariants, reach 2 for
/// the Hessian of `H`.
#[derive(Debug)]
pub struct GeometryField {
    grid: Arc<Grid>,
    space: SpaceForm,
    codim: usize,
    reach: usize,
    nodes: Vec<Option<NodeGeom>>,
}

impl GeometryField {
    pub fn new(imm: &Immersion, reach: usize) -> Result<Self> {
        if reach >= GHOST {
            return Err(Error::input(format!("geometry reach must be below {GHOST}")));
        }
        let grid = imm.grid().clone();
        let space = *imm.space();
        let fp = grid.pad(imm.coords(), reach + 1);
        let mut nodes = vec![None; grid.padded_len()];
        for (pi, slot) in nodes.iter_mut().enumerate() {
            if grid.layer_of(pi) <= reach {
                *slot = Some(node_geom(&space, &grid, &fp, pi)?);
            }
        }
        Ok(Self {
            grid,
            space,
            codim: imm.codim(),
            reach,
            nodes,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn reach(&self) -> usize {
        self.reach
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    #[inline]
    fn at(&self, pi: usize) -> &NodeGeom {
        self.nodes[pi]
            .as_ref()
            .expect("geometry requested outside the computed reach")
    }

    pub(crate) fn node(&self, node: usize) -> &NodeGeom {
        self.at(self.grid.padded_index(node))
    }

    fn neighbour(&self, pi: usize, k: usize, sign: isize) -> usize {
        let pw = [1usize, 3, 9, 27];
        let n = self.grid.intrinsic_dim();
        let b0 = (pw[n] - 1) / 2;
        let b = (b0 as isize + sign * pw[k] as isize) as usize;
        (pi as isize + self.grid.box_offsets()[b]) as usize
    }

    pub fn point(&self, node: usize) -> PointGeometry {
        PointGeometry::from_node(&self.space, self.node(node))
            .expect("metric was checked when the field was built")
    }

    pub fn normsq_h(&self, node: usize) -> f64 {
        self.node(node).normsq_h(&self.space)
    }

    pub fn normsq_a(&self, node: usize) -> f64 {
        self.node(node).normsq_a(&self.space)
    }

    pub fn normsq_aring(&self, node: usize) -> f64 {
        self.node(node).normsq_aring(&self.space)
    }

    pub fn area_element(&self, node: usize) -> f64 {
        self.node(node).sqrt_g
    }

    /// `grad_k H` for `k < n` at padded index `pi`.
    fn grad_h_vecs(&self, pi: usize) -> [FlatVec; MAX_N] {
        let c = self.at(pi);
        let s = 0.5 / self.grid.spacing();
        let mut out = [zero(); MAX_N];
        for k in 0..c.n {
            let d = diff_scaled(
                &self.at(self.neighbour(pi, k, 1)).h,
                &self.at(self.neighbour(pi, k, -1)).h,
                s,
            );
            out[k] = c.normal_project(&self.space, &d);
        }
        out
    }

    /// `grad_k T_ij` for a symmetric normal tensor field built node-wise by
    /// `tensor`.
    fn grad_tensor(&self, pi: usize, tensor: impl Fn(&NodeGeom) -> NormalTensor) -> [NormalTensor; MAX_N] {
        let c = self.at(pi);
        let n = c.n;
        let s = 0.5 / self.grid.spacing();
        let here = tensor(c);
        let mut gamma = [[[0.0; MAX_N]; MAX_N]; MAX_N];
        for m in 0..n {
            for k in 0..n {
                for i in 0..n {
                    gamma[m][k][i] = c.christoffel(&self.space, m, k, i);
                }
            }
        }
        let mut out = [[[zero(); MAX_N]; MAX_N]; MAX_N];
        for k in 0..n {
            let tp = tensor(self.at(self.neighbour(pi, k, 1)));
            let tm = tensor(self.at(self.neighbour(pi, k, -1)));
            for i in 0..n {
                for j in i..n {
                    let mut v = c.normal_project(&self.space, &diff_scaled(&tp[i][j], &tm[i][j], s));
                    for m in 0..n {
                        axpy(&mut v, -gamma[m][k][i], &here[m][j]);
                        axpy(&mut v, -gamma[m][k][j], &here[i][m]);
                    }
                    out[k][i][j] = v;
                    out[k][j][i] = v;
                }
            }
        }
        out
    }

    fn contract3(&self, c: &NodeGeom, t: &[NormalTensor; MAX_N]) -> f64 {
        let n = c.n;
        let gi = &c.g_inv;
        let mut s = 0.0;
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut raised = zero();
                    for kk in 0..n {
                        for ii in 0..n {
                            for jj in 0..n {
                                let w = gi[k][kk] * gi[i][ii] * gi[j][jj];
                                if w != 0.0 {
                                    axpy(&mut raised, w, &t[kk][ii][jj]);
                                }
                            }
                        }
                    }
                    s += self.space.dot(&raised, &t[k][i][j]);
                }
            }
        }
        s
    }

    fn require_reach(&self, r: usize) {
        assert!(self.reach >= r, "geometry field reach {} < {r}", self.reach);
    }

    /// `|grad H|^2`.
    pub fn grad_h_sq(&self, node: usize) -> f64 {
        self.require_reach(1);
        let pi = self.grid.padded_index(node);
        let c = self.at(pi);
        let gh = self.grad_h_vecs(pi);
        let mut s = 0.0;
        for k in 0..c.n {
            for l in 0..c.n {
                s += c.g_inv[k][l] * self.space.dot(&gh[k], &gh[l]);
            }
        }
        s
    }

    /// `|grad A|^2`.
    pub fn grad_a_sq(&self, node: usize) -> f64 {
        self.require_reach(1);
        let pi = self.grid.padded_index(node);
        let t = self.grad_tensor(pi, NodeGeom::a_tensor);
        self.contract3(self.at(pi), &t)
    }

    /// `|grad Å|^2`.
    pub fn grad_aring_sq(&self, node: usize) -> f64 {
        self.require_reach(1);
        let pi = self.grid.padded_index(node);
        let t = self.grad_tensor(pi, NodeGeom::aring_tensor);
        self.contract3(self.at(pi), &t)
    }

    /// `<Å_ij, grad_i grad_j H>` with indices raised by the metric.
    pub fn aring_dot_hess_h(&self, node: usize) -> f64 {
        self.require_reach(2);
        let pi = self.grid.padded_index(node);
        let c = self.at(pi);
        let n = c.n;
        let s = 0.5 / self.grid.spacing();
        let here = self.grad_h_vecs(pi);
        let mut hess = [[zero(); MAX_N]; MAX_N];
        for i in 0..n {
            let gp = self.grad_h_vecs(self.neighbour(pi, i, 1));
            let gm = self.grad_h_vecs(self.neighbour(pi, i, -1));
            for j in 0..n {
                let mut v = c.normal_project(&self.space, &diff_scaled(&gp[j], &gm[j], s));
                for m in 0..n {
                    axpy(&mut v, -c.christoffel(&self.space, m, i, j), &here[m]);
                }
                hess[i][j] = v;
            }
        }
        // symmetrise: the continuum Hessian of H is symmetric
        for i in 0..n {
            for j in i + 1..n {
                let mut v = hess[i][j];
                axpy(&mut v, 1.0, &hess[j][i]);
                for x in v.iter_mut() {
                    *x *= 0.5;
                }
                hess[i][j] = v;
                hess[j][i] = v;
            }
        }
        let ar = c.aring_tensor();
        let gi = &c.g_inv;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        total += gi[i][k] * gi[j][l] * self.space.dot(&ar[i][j], &hess[k][l]);
                    }
                }
            }
        }
        total
    }

    pub fn invariants(&self, node: usize) -> InvariantBundle {
        let mut inv = self.point(node).algebraic_invariants(&self.space, self.codim);
        if self.reach >= 1 {
            inv.normsq_grad_h = self.grad_h_sq(node);
            inv.normsq_grad_a = self.grad_a_sq(node);
        }
        inv
    }

    /// Laplace-Beltrami of a padded scalar (valid on the box around `node`).
    pub fn laplacian_padded(&self, fp: &[f64], node: usize) -> f64 {
        self.require_reach(1);
        let pi = self.grid.padded_index(node);
        let c = self.at(pi);
        let n = c.n;
        let h = self.grid.spacing();
        let mut nb = [[0usize; 2]; MAX_N];
        for k in 0..n {
            nb[k] = [self.neighbour(pi, k, 1), self.neighbour(pi, k, -1)];
        }
        let w = |g: &NodeGeom, i: usize, j: usize| g.sqrt_g * g.g_inv[i][j];
        let mut total = 0.0;
        for i in 0..n {
            for (side, sign) in [(0usize, 1.0f64), (1, -1.0)] {
                let q = nb[i][side];
                let gq = self.at(q);
                let mut flux = 0.0;
                for j in 0..n {
                    let wf = 0.5 * (w(c, i, j) + w(gq, i, j));
                    let dj = if j == i {
                        sign * (fp[q] - fp[pi])
                    } else {
                        let qp = self.neighbour(q, j, 1);
                        let qm = self.neighbour(q, j, -1);
                        0.25 * ((fp[nb[j][0]] - fp[nb[j][1]]) + (fp[qp] - fp[qm]))
                    };
                    flux += wf * dj;
                }
                total += sign * flux;
            }
        }
        total / (c.sqrt_g * h * h)
    }

    /// Laplace-Beltrami of a node field.
    pub fn laplacian(&self, field: &[f64]) -> Vec<f64> {
        let fp = self.grid.pad(field, 1);
        (0..self.len()).map(|i| self.laplacian_padded(&fp, i)).collect()
    }

    /// Quadrature `sum f sqrt(g) h^n`.
    pub fn integral(&self, field: &[f64]) -> f64 {
        let vol = self.grid.cell_volume();
        (0..self.len())
            .map(|i| field[i] * self.area_element(i))
            .sum::<f64>()
            * vol
    }

    /// Total area.
    pub fn area(&self) -> f64 {
        let vol = self.grid.cell_volume();
        (0..self.len()).map(|i| self.area_element(i)).sum::<f64>() * vol
    }
}

/// Fails with a degenerate-metric error if any node has a singular induced
/// metric.
pub(crate) fn check_metric(imm: &Immersion) -> Result<()> {
    let grid = imm.grid();
    let fp = grid.pad(imm.coords(), 1);
    for node in 0..grid.len() {
        node_geom(imm.space(), grid, &fp, grid.padded_index(node))?;
    }
    Ok(())
}

/// What the flow needs per evaluation: the mean curvature vector at every
/// node plus the bounds that control the step size.
/// Tangential part of the node velocity. Both choices move the surface
/// identically as a set; they differ in how nodes slide along it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gauge {
    /// Velocity `H` exactly.
    Normal,
    /// `H` plus a tangential term pulling the parametrisation towards the
    /// background (round sphere or flat torus) connection.
    #[default]
    DeTurck,
}

pub(crate) struct FlowEval {
    pub h: Vec<FlatVec>,
    /// Node velocity: `H` plus the gauge term, if any.
    pub v: Vec<FlatVec>,
    pub h2: Vec<f64>,
    pub a2: Vec<f64>,
    pub max_a2: f64,
    /// Smallest `n / tr(g^-1)` over nodes: the squared length of a unit
    /// parameter step in the harmonic-mean sense, which is what bounds the
    /// explicit step.
    pub min_metric_scale: f64,
    pub area: f64,
}

impl FlowEval {
    pub fn max_q(&self, preset: &crate::pinch::PinchPreset) -> f64 {
        self.h2
            .iter()
            .zip(&self.a2)
            .map(|(&h2, &a2)| preset.q(a2, h2))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Background Christoffel symbols for every node of `grid`.
pub(crate) fn reference_christoffel(grid: &Grid) -> Vec<RefGamma> {
    let n = grid.intrinsic_dim();
    let len = grid.len();
    let flat = vec![[[0.0; 6]; MAX_N]; len];
    let Ok(sphere) = SpaceForm::new(1.0, n) else {
        return flat;
    };
    if !grid.topology().is_sphere() {
        return flat;
    }
    let coords: Vec<FlatVec> = (0..len)
        .map(|node| match grid.node_param(node) {
            ParamPoint::Sphere(x) => {
                let mut f = [0.0; MAX_FLAT];
                f[..=n].copy_from_slice(&x[..=n]);
                f
            }
            ParamPoint::Torus(_) => [0.0; MAX_FLAT],
        })
        .collect();
    let fp = grid.pad(&coords, 1);
    (0..len)
        .map(|node| {
            let mut out = [[0.0; 6]; MAX_N];
            // the unit sphere chart is always regular
            if let Ok(g) = node_geom(&sphere, grid, &fp, grid.padded_index(node)) {
                for (m, row) in out.iter_mut().enumerate().take(n) {
                    for i in 0..n {
                        for j in i..n {
                            row[sym(i, j)] = g.christoffel(&sphere, m, i, j);
                        }
                    }
                }
            }
            out
        })
        .collect()
}

/// Tangential term `g^ij (Gamma^m_ij - Gamma_ref^m_ij) d_m F` that turns the
/// degenerate normal flow into a strictly parabolic system with the same
/// geometric evolution.
fn gauge_term(space: &SpaceForm, g: &NodeGeom, reference: &RefGamma) -> FlatVec {
    let n = g.n;
    // g^ij d_i d_j F, whose dual components are g^ij Gamma^m_ij
    let mut lap = zero();
    for i in 0..n {
        for j in i..n {
            let w = if i == j { g.g_inv[i][i] } else { 2.0 * g.g_inv[i][j] };
            axpy(&mut lap, w, &g.d2[sym(i, j)]);
        }
    }
    let mut w = zero();
    for m in 0..n {
        let mut s = space.dot(&g.dual[m], &lap);
        for i in 0..n {
            for j in 0..n {
                s -= g.g_inv[i][j] * reference[m][sym(i, j)];
            }
        }
        axpy(&mut w, s, &g.df[m]);
    }
    w
}

pub(crate) fn flow_eval(imm: &Immersion, gauge: Gauge) -> Result<FlowEval> {
    let grid = imm.grid();
    let space = imm.space();
    let fp = grid.pad(imm.coords(), 1);
    let len = grid.len();
    let reference = match gauge {
        Gauge::Normal => None,
        Gauge::DeTurck => Some(grid.reference_christoffel()),
    };
    let mut out = FlowEval {
        v: Vec::with_capacity(len),
        h: Vec::with_capacity(len),
        h2: Vec::with_capacity(len),
        a2: Vec::with_capacity(len),
        max_a2: 0.0,
        min_metric_scale: f64::INFINITY,
        area: 0.0,
    };
    let mut g = NodeGeom::empty();
    for node in 0..len {
        node_geom_into(space, grid, &fp, grid.padded_index(node), &mut g)?;
        let a2 = g.normsq_a(space);
        out.max_a2 = out.max_a2.max(a2);
        out.min_metric_scale = out.min_metric_scale.min(g.metric_scale());
        out.area += g.sqrt_g;
        out.h2.push(g.normsq_h(space));
        out.a2.push(a2);
        let mut v = g.h;
        if let Some(r) = reference {
            axpy(&mut v, 1.0, &gauge_term(space, &g, &r[node]));
        }
        out.v.push(v);
        out.h.push(g.h);
    }
    out.area *= grid.cell_volume();
    Ok(out)
}

/// Geometry at a single node. Builds the whole field; use
/// [`GeometryField`] for repeated queries.
pub fn point_geometry(imm: &Immersion, node: usize) -> Result<PointGeometry> {
    check_node(imm, node)?;
    Ok(GeometryField::new(imm, 0)?.point(node))
}

pub fn invariants(imm: &Immersion, node: usize) -> Result<InvariantBundle> {
    check_node(imm, node)?;
    Ok(GeometryField::new(imm, 1)?.invariants(node))
}

pub fn grad_h(imm: &Immersion, node: usize) -> Result<f64> {
    check_node(imm, node)?;
    Ok(GeometryField::new(imm, 1)?.grad_h_sq(node))
}

pub fn grad_a(imm: &Immersion, node: usize) -> Result<f64> {
    check_node(imm, node)?;
    Ok(GeometryField::new(imm, 1)?.grad_a_sq(node))
}

pub fn laplace_beltrami(imm: &Immersion, field: &[f64]) -> Result<Vec<f64>> {
    check_field(imm, field)?;
    Ok(GeometryField::new(imm, 1)?.laplacian(field))
}

pub fn surface_integral(imm: &Immersion, field: &[f64]) -> Result<f64> {
    check_field(imm, field)?;
    Ok(GeometryField::new(imm, 0)?.integral(field))
}

fn check_node(imm: &Immersion, node: usize) -> Result<()> {
    if node >= imm.len() {
        return Err(Error::input(format!("node {node} out of range ({} nodes)", imm.len())));
    }
    Ok(())
}

fn check_field(imm: &Immersion, field: &[f64]) -> Result<()> {
    if field.len() != imm.len() {
        return Err(Error::Dimension {
            expected: imm.len(),
            got: field.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{ParamDomain, ParamPoint, Topology};
    use crate::immersion::{make_geodesic_sphere, make_perturbed_sphere, make_torus};

    fn s2(res: usize) -> ParamDomain {
        ParamDomain::new(Topology::Sphere2, res).unwrap()
    }

    fn hyp_sphere(res: usize) -> Immersion {
        let space = SpaceForm::new(-1.0, 3).unwrap();
        make_geodesic_sphere(space, s2(res), &space.origin()[..4], 0.5).unwrap()
    }

    fn max_err(f: &GeometryField, q: impl Fn(&GeometryField, usize) -> f64, exact: f64) -> f64 {
        (0..f.len()).map(|i| (q(f, i) - exact).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn euclidean_unit_sphere() {
        let space = SpaceForm::new(0.0, 3).unwrap();
        let errs: Vec<[f64; 3]> = [32, 64]
            .iter()
            .map(|&r| {
                let imm = make_geodesic_sphere(space, s2(r), &[0.0; 3], 1.0).unwrap();
                let f = GeometryField::new(&imm, 0).unwrap();
                [
                    max_err(&f, |f, i| f.normsq_h(i).sqrt(), 2.0),
                    max_err(&f, GeometryField::normsq_a, 2.0),
                    max_err(&f, GeometryField::normsq_aring, 0.0),
                ]
            })
            .collect();
        for q in 0..3 {
            assert!(errs[1][q] < 1e-2, "{errs:?}");
            assert!(errs[0][q] / errs[1][q] > 3.4, "{errs:?}");
        }
    }

    #[test]
    fn hyperbolic_sphere_closed_forms() {
        let coth2 = (1.0 / 0.5f64.tanh()).powi(2);
        let h2 = 4.0 * coth2;
        let a2 = 2.0 * coth2;
        assert!((h2 - 18.7308).abs() < 1e-4 && (a2 - 9.36538).abs() < 1e-5);
        let k = 1.0 / 0.5f64.sinh().powi(2);
        let errs: Vec<[f64; 4]> = [32, 64]
            .iter()
            .map(|&r| {
                let f = GeometryField::new(&hyp_sphere(r), 1).unwrap();
                let mut e = [0.0f64; 4];
                for i in 0..f.len() {
                    let inv = f.invariants(i);
                    e[0] = e[0].max((f.normsq_h(i) - h2).abs() / h2);
                    e[1] = e[1].max((f.normsq_a(i) - a2).abs() / a2);
                    e[2] = e[2].max((inv.r2 - h2 * a2).abs() / (h2 * a2));
                    e[3] = e[3].max((inv.k_min - k).abs() / k);
                }
                e
            })
            .collect();
        for q in 0..4 {
            assert!(errs[1][q] < 5e-3, "{errs:?}");
            let order = (errs[0][q] / errs[1][q]).log2();
            assert!(order >= 1.8, "quantity {q}: {errs:?}");
        }
    }

    #[test]
    fn equator_is_totally_geodesic() {
        let space = SpaceForm::new(1.0, 3).unwrap();
        let imm = make_geodesic_sphere(space, s2(16), &space.origin()[..4], std::f64::consts::FRAC_PI_2).unwrap();
        let f = GeometryField::new(&imm, 1).unwrap();
        for i in 0..f.len() {
            assert!(f.normsq_h(i) < 1e-20);
            assert!(f.normsq_a(i) < 1e-20);
            let inv = f.invariants(i);
            assert!(inv.aring_h_sq.is_none());
            assert!((inv.k_min - 1.0).abs() < 1e-9);
        }
    }

    fn perturbed(d: usize, res: usize) -> Immersion {
        let space = SpaceForm::new(-1.0, 2 + d).unwrap();
        let mut modes = vec![(0, 0.02), (3, 0.01)];
        if d > 1 {
            modes.push((5, 0.02));
        }
        make_perturbed_sphere(space, s2(res), 0.5, &modes).unwrap()
    }

    #[test]
    fn normality_symmetry_and_identities() {
        for d in [1, 2] {
            let imm = perturbed(d, 16);
            let space = *imm.space();
            let f = GeometryField::new(&imm, 1).unwrap();
            for i in 0..f.len() {
                let ng = f.node(i);
                let p = f.point(i);
                let scale = p.normsq_a.sqrt();
                for a in 0..2 {
                    for b in 0..2 {
                        assert_eq!(p.a_vec[a][b], p.a_vec[b][a]);
                        for k in 0..2 {
                            let t = space.dot(&p.a_vec[a][b], &ng.df[k]);
                            let tn = space.dot(&ng.df[k], &ng.df[k]).sqrt();
                            assert!(t.abs() <= 1e-10 * scale * tn);
                        }
                        let fp = space.dot(&p.a_vec[a][b], &ng.f);
                        assert!(fp.abs() <= 1e-10 * scale);
                    }
                }
                let id = p.normsq_a - p.normsq_h / 2.0;
                assert!((p.normsq_aring - id).abs() <= 1e-12 * p.normsq_a);
                // tensor contraction agrees with the orthonormal-frame value
                assert!((f.normsq_a(i) - p.normsq_a).abs() <= 1e-12 * p.normsq_a);
                let inv = f.invariants(i);
                assert!(inv.r1 >= 0.0 && inv.r2 >= 0.0 && inv.rperp_sq >= 0.0);
                if d == 1 {
                    assert!(inv.rperp_sq == 0.0);
                }
                let split = inv.aring_h_sq.unwrap() + inv.aring_i_sq.unwrap();
                assert!((split - p.normsq_aring).abs() <= 1e-12 * p.normsq_aring.max(1e-300));
            }
        }
    }

    /// Invariants from explicit components `h_ij^alpha` in a rotated normal
    /// frame, following the component formulas directly.
    fn component_invariants(space: &SpaceForm, p: &PointGeometry, ng: &NodeGeom, d: usize, angle: f64) -> [f64; 4] {
        let n = p.n;
        // normal frame by Gram-Schmidt of projected axes
        let mut frame: Vec<FlatVec> = Vec::new();
        for axis in 0..space.flat_dim() {
            let mut e = [0.0; MAX_FLAT];
            e[axis] = 1.0;
            let mut v = ng.normal_project(space, &e);
            for u in &frame {
                let s = space.dot(&v, u);
                axpy(&mut v, -s, u);
            }
            let nv = space.dot(&v, &v);
            if nv > 1e-8 && frame.len() < d {
                for x in v.iter_mut() {
                    *x /= nv.sqrt();
                }
                frame.push(v);
            }
        }
        assert_eq!(frame.len(), d);
        if d == 2 {
            let (c, s) = (angle.cos(), angle.sin());
            let (a, b) = (frame[0], frame[1]);
            for k in 0..MAX_FLAT {
                frame[0][k] = c * a[k] + s * b[k];
                frame[1][k] = -s * a[k] + c * b[k];
            }
        }
        let hc = |i: usize, j: usize, al: usize| space.dot(&p.a_on[i][j], &frame[al]);
        let hv = |al: usize| (0..n).map(|i| hc(i, i, al)).sum::<f64>();
        let mut r1 = 0.0;
        for al in 0..d {
            for be in 0..d {
                let s: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| hc(i, j, al) * hc(i, j, be)).sum();
                r1 += s * s;
            }
        }
        let mut rperp = 0.0;
        for i in 0..n {
            for j in 0..n {
                for al in 0..d {
                    for be in 0..d {
                        let s: f64 = (0..n).map(|q| hc(i, q, al) * hc(j, q, be) - hc(j, q, al) * hc(i, q, be)).sum();
                        rperp += s * s;
                    }
                }
            }
        }
        r1 += rperp;
        let mut r2 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let s: f64 = (0..d).map(|al| hv(al) * hc(i, j, al)).sum();
                r2 += s * s;
            }
        }
        let mut z = -r1;
        for i in 0..n {
            for j in 0..n {
                for q in 0..n {
                    for al in 0..d {
                        for be in 0..d {
                            z += hv(al) * hc(i, q, al) * hc(i, j, be) * hc(q, j, be);
                        }
                    }
                }
            }
        }
        [r1, r2, rperp, z]
    }

    #[test]
    fn invariants_match_component_formulas_in_any_normal_frame() {
        for d in [1, 2] {
            let imm = perturbed(d, 12);
            let space = *imm.space();
            let f = GeometryField::new(&imm, 0).unwrap();
            for i in (0..f.len()).step_by(13) {
                let p = f.point(i);
                let inv = p.algebraic_invariants(&space, d);
                for angle in [0.0, 0.7, 2.3] {
                    let comp = component_invariants(&space, &p, f.node(i), d, angle);
                    let ours = [inv.r1, inv.r2, inv.rperp_sq, inv.z];
                    for q in 0..4 {
                        let scale = ours[q].abs().max(comp[q].abs()).max(1e-6 * inv.r1);
                        assert!((ours[q] - comp[q]).abs() <= 1e-10 * scale, "q {q}: {ours:?} vs {comp:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn umbilical_reaction_terms() {
        let imm = hyp_sphere(16);
        let f = GeometryField::new(&imm, 0).unwrap();
        for i in 0..f.len() {
            let p = f.point(i);
            let inv = p.algebraic_invariants(imm.space(), 1);
            assert!(inv.z.abs() <= 1e-3 * inv.r1, "{} {}", inv.z, inv.r1);
            assert!((inv.r1 - p.normsq_a * p.normsq_a).abs() <= 1e-12 * inv.r1);
        }
    }

    #[test]
    fn gradients_on_spheres_and_kato() {
        // parallel H and A on round spheres: O(h^4) relative to |H|^4
        let gh = |imm: &Immersion| {
            let f = GeometryField::new(imm, 1).unwrap();
            (0..f.len())
                .map(|i| f.grad_h_sq(i).max(f.grad_a_sq(i)) / f.normsq_h(i).powi(2))
                .fold(0.0, f64::max)
        };
        let (g16, g32) = (gh(&hyp_sphere(16)), gh(&hyp_sphere(32)));
        assert!(g32 < 1e-4 && g16 / g32 > 10.0, "{g16} {g32}");

        for d in [1, 2] {
            let imm = perturbed(d, 24);
            let f = GeometryField::new(&imm, 1).unwrap();
            let h = f.grid().spacing();
            let mut worst: f64 = f64::NEG_INFINITY;
            let mut max_gh: f64 = 0.0;
            for i in 0..f.len() {
                let (a, b) = (f.grad_a_sq(i), f.grad_h_sq(i));
                max_gh = max_gh.max(b);
                worst = worst.max((0.75 * b - a) / (f.normsq_h(i).powi(2) + 1.0));
            }
            assert!(max_gh > 1e-3);
            assert!(worst <= h * h, "kato defect {worst}");
        }
    }

    #[test]
    fn laplacian_checks() {
        let space = SpaceForm::new(0.0, 3).unwrap();
        let errs: Vec<f64> = [16, 32]
            .iter()
            .map(|&r| {
                let imm = make_geodesic_sphere(space, s2(r), &[0.0; 3], 1.0).unwrap();
                let f = GeometryField::new(&imm, 1).unwrap();
                let ones = vec![1.0; f.len()];
                assert!(f.laplacian(&ones).iter().all(|v| v.abs() < 1e-10));
                let x: Vec<f64> = (0..f.len())
                    .map(|i| match f.grid().node_param(i) {
                        ParamPoint::Sphere(p) => p[0] + 0.5 * p[2],
                        _ => unreachable!(),
                    })
                    .collect();
                let lap = f.laplacian(&x);
                let total = f.integral(&lap);
                assert!(total.abs() < 0.05, "{total}");
                (0..f.len()).map(|i| (lap[i] + 2.0 * x[i]).abs()).fold(0.0, f64::max)
            })
            .collect();
        assert!(errs[1] < 0.02 && errs[0] / errs[1] > 3.4, "{errs:?}");
    }

    #[test]
    fn areas() {
        let flat = SpaceForm::new(0.0, 3).unwrap();
        let unit = make_geodesic_sphere(flat, s2(32), &[0.0; 3], 1.0).unwrap();
        let a = surface_integral(&unit, &vec![1.0; unit.len()]).unwrap();
        assert!((a / (4.0 * std::f64::consts::PI) - 1.0).abs() < 5e-3);

        let a = GeometryField::new(&hyp_sphere(32), 0).unwrap().area();
        let exact = 4.0 * std::f64::consts::PI * 0.5f64.sinh().powi(2);
        assert!((exact - 3.41229).abs() < 1e-4);
        assert!((a / exact - 1.0).abs() < 5e-3);

        let dom = ParamDomain::new(Topology::Torus2, 64).unwrap();
        let t = make_torus(flat, dom, (2.0, 1.0), 1).unwrap();
        let a = GeometryField::new(&t, 0).unwrap().area();
        let exact = 4.0 * std::f64::consts::PI.powi(2) * 2.0;
        assert!((exact - 78.957).abs() < 1e-3);
        assert!((a / exact - 1.0).abs() < 5e-3);
    }

    #[test]
    fn torus_curvature_changes_sign() {
        let flat = SpaceForm::new(0.0, 3).unwrap();
        let dom = ParamDomain::new(Topology::Torus2, 32).unwrap();
        let t = make_torus(flat, dom, (2.0, 1.0), 1).unwrap();
        let f = GeometryField::new(&t, 0).unwrap();
        let ks: Vec<f64> = (0..f.len()).map(|i| f.point(i).algebraic_invariants(t.space(), 1).k_min).collect();
        assert!(ks.iter().any(|&k| k > 0.1) && ks.iter().any(|&k| k < -0.1));
    }

    #[test]
    fn scaling_in_flat_ambient() {
        let flat = SpaceForm::new(0.0, 3).unwrap();
        let modes = [(1usize, 0.05)];
        let base = make_perturbed_sphere(flat, s2(12), 1.0, &modes).unwrap();
        let lambda = 2.5;
        let scaled = base
            .with_coords(base.coords().iter().map(|p| p.map(|x| lambda * x)).collect())
            .unwrap();
        let f0 = GeometryField::new(&base, 0).unwrap();
        let f1 = GeometryField::new(&scaled, 0).unwrap();
        for i in 0..f0.len() {
            let (h0, h1) = (f0.normsq_h(i), f1.normsq_h(i));
            let (a0, a1) = (f0.normsq_a(i), f1.normsq_a(i));
            assert!((h1 * lambda * lambda - h0).abs() <= 1e-10 * h0);
            assert!((a1 * lambda * lambda - a0).abs() <= 1e-10 * a0);
            let alpha = 2.0 / 3.0;
            assert_eq!((a0 - alpha * h0).signum(), (a1 - alpha * h1).signum());
        }
    }

    #[test]
    fn sphere3_geometry() {
        let space = SpaceForm::new(-1.0, 4).unwrap();
        let dom = ParamDomain::new(Topology::Sphere3, 16).unwrap();
        let imm = make_geodesic_sphere(space, dom, &space.origin()[..5], 0.5).unwrap();
        let f = GeometryField::new(&imm, 0).unwrap();
        let coth = 1.0 / 0.5f64.tanh();
        for i in 0..f.len() {
            let p = f.point(i);
            assert!((p.normsq_h / (9.0 * coth * coth) - 1.0).abs() < 0.03);
            let inv = p.algebraic_invariants(&space, 1);
            let k = 1.0 / 0.5f64.sinh().powi(2);
            assert!((inv.k_min / k - 1.0).abs() < 0.03, "{} {k}", inv.k_min);
        }
        let vol = f.area();
        let exact = 2.0 * std::f64::consts::PI.powi(2) * 0.5f64.sinh().powi(3);
        assert!((vol / exact - 1.0).abs() < 0.01, "{vol} {exact}");
    }

    #[test]
    fn point_queries_validate_input() {
        let imm = hyp_sphere(8);
        assert!(point_geometry(&imm, imm.len()).is_err());
        assert!(laplace_beltrami(&imm, &[1.0]).is_err());
        assert!(grad_h(&imm, 0).unwrap() >= 0.0);
        assert!(grad_a(&imm, 0).unwrap() >= 0.0);
        assert!(invariants(&imm, 0).unwrap().r2 > 0.0);
    }
}
