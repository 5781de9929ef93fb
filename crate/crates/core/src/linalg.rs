//! Small dense linear algebra on stack-allocated vectors and matrices.
//!
//! Every manifold in the catalogue has dimension 2 or 3, so all vectors and
//! matrices are carried in fixed `[f64; 3]` storage with an explicit active
//! dimension. Routines here are deterministic: no pivoting heuristics depend
//! on anything but the input values.

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

pub const ZERO_VEC: Vec3 = [0.0; 3];
pub const ZERO_MAT: Mat3 = [[0.0; 3]; 3];

pub fn dot(dim: usize, a: &Vec3, b: &Vec3) -> f64 {
    (0..dim).map(|i| a[i] * b[i]).sum()
}

pub fn norm(dim: usize, a: &Vec3) -> f64 {
    dot(dim, a, a).sqrt()
}

pub fn scale(dim: usize, a: &Vec3, s: f64) -> Vec3 {
    let mut out = ZERO_VEC;
    for i in 0..dim {
        out[i] = a[i] * s;
    }
    out
}

pub fn add(dim: usize, a: &Vec3, b: &Vec3) -> Vec3 {
    let mut out = ZERO_VEC;
    for i in 0..dim {
        out[i] = a[i] + b[i];
    }
    out
}

pub fn sub(dim: usize, a: &Vec3, b: &Vec3) -> Vec3 {
    let mut out = ZERO_VEC;
    for i in 0..dim {
        out[i] = a[i] - b[i];
    }
    out
}

/// `a + s * b`.
pub fn axpy(dim: usize, a: &Vec3, s: f64, b: &Vec3) -> Vec3 {
    let mut out = ZERO_VEC;
    for i in 0..dim {
        out[i] = a[i] + s * b[i];
    }
    out
}

pub fn matvec(dim: usize, m: &Mat3, v: &Vec3) -> Vec3 {
    let mut out = ZERO_VEC;
    for i in 0..dim {
        for j in 0..dim {
            out[i] += m[i][j] * v[j];
        }
    }
    out
}

/// Inner product `aᵀ G b` for a metric matrix `G`.
pub fn g_dot(dim: usize, g: &Mat3, a: &Vec3, b: &Vec3) -> f64 {
    let gb = matvec(dim, g, b);
    dot(dim, a, &gb)
}

pub fn g_norm(dim: usize, g: &Mat3, a: &Vec3) -> f64 {
    g_dot(dim, g, a, a).max(0.0).sqrt()
}

/// Bilinear form `aᵀ H b`.
pub fn bilinear(dim: usize, h: &Mat3, a: &Vec3, b: &Vec3) -> f64 {
    g_dot(dim, h, a, b)
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order with matching unit eigenvectors as
/// rows of the second component. Input must be symmetric.
pub fn sym_eigen(dim: usize, m: &Mat3) -> (Vec3, Mat3) {
    let mut a = *m;
    let mut v = ZERO_MAT;
    for i in 0..dim {
        v[i][i] = 1.0;
    }
    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..dim {
            for q in (p + 1)..dim {
                off += a[p][q] * a[p][q];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..dim {
            for q in (p + 1)..dim {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..dim {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..dim {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..dim {
                    let vpk = v[p][k];
                    let vqk = v[q][k];
                    v[p][k] = c * vpk - s * vqk;
                    v[q][k] = s * vpk + c * vqk;
                }
            }
        }
    }
    // Sort ascending by eigenvalue; ties keep the original cyclic order.
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| a[i][i].partial_cmp(&a[j][j]).unwrap());
    let mut vals = ZERO_VEC;
    let mut vecs = ZERO_MAT;
    for (slot, &i) in order.iter().enumerate() {
        vals[slot] = a[i][i];
        vecs[slot] = v[i];
    }
    (vals, vecs)
}

/// Solve `m x = b` through the eigendecomposition of the symmetric matrix
/// `m`, truncating eigenvalues with `|λ| <= null_tol` (pseudo-inverse).
pub fn solve_sym_truncated(dim: usize, m: &Mat3, b: &Vec3, null_tol: f64) -> Vec3 {
    let (vals, vecs) = sym_eigen(dim, m);
    let mut x = ZERO_VEC;
    for k in 0..dim {
        if vals[k].abs() <= null_tol {
            continue;
        }
        let coef = dot(dim, &vecs[k], b) / vals[k];
        for i in 0..dim {
            x[i] += coef * vecs[k][i];
        }
    }
    x
}

/// Gram-Schmidt orthonormalization of `vecs` with respect to the inner
/// product matrix `g`. Vectors that become numerically dependent (norm below
/// `1e-10`) are dropped.
pub fn g_orthonormalize(dim: usize, g: &Mat3, vecs: &[Vec3]) -> Vec<Vec3> {
    let mut basis: Vec<Vec3> = Vec::new();
    for v in vecs {
        let mut w = *v;
        for b in &basis {
            let c = g_dot(dim, g, &w, b);
            w = axpy(dim, &w, -c, b);
        }
        let n = g_norm(dim, g, &w);
        if n > 1e-10 {
            basis.push(scale(dim, &w, 1.0 / n));
        }
    }
    basis
}

/// Determinant of a `k x k` matrix given by rows, `k <= 3`.
pub fn det_k(k: usize, m: &[Vec3]) -> f64 {
    match k {
        0 => 1.0,
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        3 => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
        _ => panic!("det_k supports k <= 3"),
    }
}

/// Express each of the `targets` in the given `basis` (both lists of
/// `dim`-vectors, basis of length `k`) by unweighted least squares.
/// Returns the `k x k` coefficient matrix (column `j` expresses target `j`)
/// together with the largest relative residual.
pub fn express_in_basis(dim: usize, basis: &[Vec3], targets: &[Vec3]) -> (Vec<Vec3>, f64) {
    let k = basis.len();
    assert!(k <= 3 && targets.len() == k);
    // Normal equations with the Gram matrix of the basis.
    let mut gram = ZERO_MAT;
    for i in 0..k {
        for j in 0..k {
            gram[i][j] = dot(dim, &basis[i], &basis[j]);
        }
    }
    let mut cols: Vec<Vec3> = Vec::with_capacity(k);
    let mut worst = 0.0f64;
    for t in targets {
        let mut rhs = ZERO_VEC;
        for i in 0..k {
            rhs[i] = dot(dim, &basis[i], t);
        }
        let c = solve_sym_truncated(k, &gram, &rhs, 1e-14);
        let mut recon = ZERO_VEC;
        for i in 0..k {
            recon = axpy(dim, &recon, c[i], &basis[i]);
        }
        let res = norm(dim, &sub(dim, t, &recon));
        let tn = norm(dim, t).max(1e-300);
        worst = worst.max(res / tn);
        cols.push(c);
    }
    (cols, worst)
}
