//! Dense helpers for the tiny matrices that appear per grid node (at most
//! 4x4).

pub(crate) const MAX_M: usize = 4;

pub(crate) type Mat = [[f64; MAX_M]; MAX_M];

/// Inverse of the leading `m x m` block by Gauss-Jordan elimination with
/// partial pivoting. Returns `None` when a pivot vanishes relative to the
/// matrix scale.
#[inline]
pub(crate) fn inverse(a: &Mat, m: usize) -> Option<Mat> {
    let mut w = *a;
    let mut inv = [[0.0; MAX_M]; MAX_M];
    for i in 0..m {
        inv[i][i] = 1.0;
    }
    let mut scale = 0.0f64;
    for row in a.iter().take(m) {
        for v in row.iter().take(m) {
            scale = scale.max(v.abs());
        }
    }
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    if m == 2 || m == 3 {
        return cofactor_inverse(a, m, scale);
    }
    for col in 0..m {
        let piv = (col..m)
            .max_by(|&x, &y| w[x][col].abs().total_cmp(&w[y][col].abs()))
            .unwrap_or(col);
        if w[piv][col].abs() <= 1e-14 * scale {
            return None;
        }
        w.swap(col, piv);
        inv.swap(col, piv);
        let p = 1.0 / w[col][col];
        for j in 0..m {
            w[col][j] *= p;
            inv[col][j] *= p;
        }
        for r in 0..m {
            if r != col {
                let f = w[r][col];
                if f != 0.0 {
                    for j in 0..m {
                        w[r][j] -= f * w[col][j];
                        inv[r][j] -= f * inv[col][j];
                    }
                }
            }
        }
    }
    Some(inv)
}

fn cofactor_inverse(a: &Mat, m: usize, scale: f64) -> Option<Mat> {
    let mut inv = [[0.0; MAX_M]; MAX_M];
    let det = determinant(a, m);
    if !(det.abs() > 1e-14 * scale.powi(m as i32)) {
        return None;
    }
    let r = 1.0 / det;
    if m == 2 {
        inv[0][0] = a[1][1] * r;
        inv[0][1] = -a[0][1] * r;
        inv[1][0] = -a[1][0] * r;
        inv[1][1] = a[0][0] * r;
    } else {
        const NEXT: [(usize, usize); 3] = [(1, 2), (2, 0), (0, 1)];
        for (i, &(c0, c1)) in NEXT.iter().enumerate() {
            for (j, &(r0, r1)) in NEXT.iter().enumerate() {
                inv[i][j] = (a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0]) * r;
            }
        }
    }
    Some(inv)
}

#[inline]
pub(crate) fn determinant(a: &Mat, m: usize) -> f64 {
    match m {
        1 => a[0][0],
        2 => a[0][0] * a[1][1] - a[0][1] * a[1][0],
        3 => {
            a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
                - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
        }
        _ => {
            let mut w = *a;
            let mut det = 1.0;
            for col in 0..m {
                let piv = (col..m)
                    .max_by(|&x, &y| w[x][col].abs().total_cmp(&w[y][col].abs()))
                    .unwrap_or(col);
                if w[piv][col] == 0.0 {
                    return 0.0;
                }
                if piv != col {
                    w.swap(col, piv);
                    det = -det;
                }
                det *= w[col][col];
                for r in col + 1..m {
                    let f = w[r][col] / w[col][col];
                    for j in col..m {
                        w[r][j] -= f * w[col][j];
                    }
                }
            }
            det
        }
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive definite block.
pub(crate) fn cholesky(a: &Mat, m: usize) -> Option<Mat> {
    let mut l = [[0.0; MAX_M]; MAX_M];
    for i in 0..m {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

/// Inverse of a lower-triangular matrix.
pub(crate) fn lower_inverse(l: &Mat, m: usize) -> Mat {
    let mut inv = [[0.0; MAX_M]; MAX_M];
    for i in 0..m {
        inv[i][i] = 1.0 / l[i][i];
        for j in 0..i {
            let mut s = 0.0;
            for k in j..i {
                s += l[i][k] * inv[k][j];
            }
            inv[i][j] = -s / l[i][i];
        }
    }
    inv
}

/// Eigenvalues of a symmetric block by cyclic Jacobi rotations, ascending.
#[cfg(test)]
fn sym_eigenvalues(a: &Mat, m: usize) -> [f64; MAX_M] {
    let mut w = *a;
    for _ in 0..50 {
        let mut off = 0.0;
        for i in 0..m {
            for j in i + 1..m {
                off += w[i][j] * w[i][j];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..m {
            for q in p + 1..m {
                if w[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (w[q][q] - w[p][p]) / (2.0 * w[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                for k in 0..m {
                    let kp = w[k][p];
                    let kq = w[k][q];
                    w[k][p] = cs * kp - sn * kq;
                    w[k][q] = sn * kp + cs * kq;
                }
                for k in 0..m {
                    let pk = w[p][k];
                    let qk = w[q][k];
                    w[p][k] = cs * pk - sn * qk;
                    w[q][k] = sn * pk + cs * qk;
                }
            }
        }
    }
    let mut ev = [0.0; MAX_M];
    for i in 0..m {
        ev[i] = w[i][i];
    }
    ev[..m].sort_by(f64::total_cmp);
    ev
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Mat {
        [
            [4.0, 1.0, 0.5, 0.0],
            [1.0, 3.0, 0.2, 0.1],
            [0.5, 0.2, 2.0, 0.3],
            [0.0, 0.1, 0.3, 1.5],
        ]
    }

    fn mul(a: &Mat, b: &Mat, m: usize) -> Mat {
        let mut c = [[0.0; MAX_M]; MAX_M];
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    c[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        c
    }

    #[test]
    fn inverse_roundtrip() {
        for m in 1..=4 {
            let a = sample();
            let inv = inverse(&a, m).unwrap();
            let p = mul(&a, &inv, m);
            for i in 0..m {
                for j in 0..m {
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert!((p[i][j] - e).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn inverse_of_indefinite_gram() {
        // Lorentzian-type Gram matrix with a negative diagonal entry
        let mut a = [[0.0; MAX_M]; MAX_M];
        a[0][0] = -1.0;
        a[1][1] = 2.0;
        a[2][2] = 3.0;
        let inv = inverse(&a, 3).unwrap();
        assert!((inv[0][0] + 1.0).abs() < 1e-15);
        assert!((inv[2][2] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn singular_is_rejected() {
        let mut a = [[0.0; MAX_M]; MAX_M];
        a[0][0] = 1.0;
        a[0][1] = 2.0;
        a[1][0] = 2.0;
        a[1][1] = 4.0;
        assert!(inverse(&a, 2).is_none());
    }

    #[test]
    fn determinants_agree() {
        let a = sample();
        let ev = sym_eigenvalues(&a, 4);
        let prod: f64 = ev.iter().product();
        assert!((determinant(&a, 4) - prod).abs() < 1e-12);
        let ev3 = sym_eigenvalues(&a, 3);
        assert!((determinant(&a, 3) - ev3[..3].iter().product::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = sample();
        let l = cholesky(&a, 4).unwrap();
        let mut lt = [[0.0; MAX_M]; MAX_M];
        for i in 0..4 {
            for j in 0..4 {
                lt[i][j] = l[j][i];
            }
        }
        let p = mul(&l, &lt, 4);
        let li = lower_inverse(&l, 4);
        let q = mul(&li, &l, 4);
        for i in 0..4 {
            for j in 0..4 {
                assert!((p[i][j] - a[i][j]).abs() < 1e-14);
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((q[i][j] - e).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn eigenvalues_of_diagonal_and_2x2() {
        let mut a = [[0.0; MAX_M]; MAX_M];
        a[0][0] = 2.0;
        a[0][1] = 1.0;
        a[1][0] = 1.0;
        a[1][1] = 2.0;
        let ev = sym_eigenvalues(&a, 2);
        assert!((ev[0] - 1.0).abs() < 1e-14 && (ev[1] - 3.0).abs() < 1e-14);
    }
}
