use super::{Mat, MatError};
use crate::settings::NumericSettings;

/// Solves `A X = B` by Gaussian elimination with partial pivoting.
pub fn lu_solve(a: &Mat, b: &Mat, tol: &NumericSettings) -> Result<Mat, MatError> {
    let n = a.rows();
    if !a.is_square() {
        return Err(MatError::Shape(format!(
            "lu_solve needs a square matrix, got {:?}",
            a.shape()
        )));
    }
    if b.rows() != n {
        return Err(MatError::Shape(format!(
            "right-hand side has {} rows, expected {n}",
            b.rows()
        )));
    }
    let k = b.cols();
    if n == 0 {
        return Ok(Mat::zeros(0, k));
    }
    let floor = tol.lu_pivot_rel * a.norm_fro();

    // Augmented [A | B], eliminated in place.
    let w = n + k;
    let mut m = vec![0.0; n * w];
    for i in 0..n {
        m[i * w..i * w + n].copy_from_slice(a.row(i));
        m[i * w + n..(i + 1) * w].copy_from_slice(b.row(i));
    }

    for col in 0..n {
        let (piv, pmag) = (col..n)
            .map(|r| (r, m[r * w + col].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pmag <= floor || pmag == 0.0 {
            return Err(MatError::Singular {
                pivot: pmag,
                column: col,
            });
        }
        if piv != col {
            for j in 0..w {
                m.swap(piv * w + j, col * w + j);
            }
        }
        let d = m[col * w + col];
        for r in (col + 1)..n {
            let f = m[r * w + col] / d;
            if f == 0.0 {
                continue;
            }
            m[r * w + col] = 0.0;
            for j in (col + 1)..w {
                m[r * w + j] -= f * m[col * w + j];
            }
        }
    }

    let mut x = Mat::zeros(n, k);
    for c in 0..k {
        for i in (0..n).rev() {
            let mut s = m[i * w + n + c];
            for j in (i + 1)..n {
                s -= m[i * w + j] * x[(j, c)];
            }
            x[(i, c)] = s / m[i * w + i];
        }
    }
    Ok(x)
}

pub fn inverse(a: &Mat, tol: &NumericSettings) -> Result<Mat, MatError> {
    lu_solve(a, &Mat::identity(a.rows()), tol)
}

/// Cholesky factor of the symmetric part of `s`.
///
/// Returns `Ok(None)` when the matrix is not positive definite, i.e. some
/// pivot falls at or below `pd_pivot_rel * trace(S) / n`.
pub fn cholesky_pd(s: &Mat, tol: &NumericSettings) -> Result<Option<Mat>, MatError> {
    if !s.is_square() {
        return Err(MatError::Shape(format!(
            "cholesky needs a square matrix, got {:?}",
            s.shape()
        )));
    }
    let n = s.rows();
    if n == 0 {
        return Ok(Some(Mat::zeros(0, 0)));
    }
    let s = s.symmetrize();
    let tr = s.trace();
    if !(tr > 0.0) {
        return Ok(None);
    }
    let floor = tol.pd_pivot_rel * tr / n as f64;
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = s[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > floor) {
            return Ok(None);
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut v = s[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / ljj;
        }
    }
    Ok(Some(l))
}

/// Positive-definiteness test; non-square input counts as "not PD".
pub fn is_positive_definite(s: &Mat, tol: &NumericSettings) -> bool {
    matches!(cholesky_pd(s, tol), Ok(Some(_)))
}

/// Eigendecomposition of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct SymEig {
    /// Nondecreasing.
    pub values: Vec<f64>,
    /// Orthogonal; column `k` pairs with `values[k]`.
    pub vectors: Mat,
}

/// Cyclic Jacobi eigensolver for the symmetric part of `s`.
pub fn sym_eig(s: &Mat, tol: &NumericSettings) -> Result<SymEig, MatError> {
    if !s.is_square() {
        return Err(MatError::Shape(format!(
            "sym_eig needs a square matrix, got {:?}",
            s.shape()
        )));
    }
    let n = s.rows();
    let mut a = s.symmetrize();
    let mut v = Mat::identity(n);
    let target = tol.jacobi_off_rel * a.norm_fro();

    let off = |a: &Mat| {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    acc += a[(i, j)] * a[(i, j)];
                }
            }
        }
        acc.sqrt()
    };

    let mut sweeps = 0;
    while off(&a) >= target && off(&a) > 0.0 {
        if sweeps == tol.jacobi_max_sweeps {
            return Err(MatError::NoConvergence { sweeps });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                // A <- J^T A J with J the (p, q) plane rotation.
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, dst)] = v[(k, src)];
        }
    }
    Ok(SymEig { values, vectors })
}

/// Largest eigenvalue of the symmetric part of `s`.
pub fn sym_max_eig(s: &Mat, tol: &NumericSettings) -> Result<f64, MatError> {
    Ok(sym_eig(s, tol)?.values.last().copied().unwrap_or(f64::NEG_INFINITY))
}
