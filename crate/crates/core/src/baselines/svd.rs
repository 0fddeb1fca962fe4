//! One-sided Jacobi SVD and the low-rank update codec.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::matrix::Matrix;

const JACOBI_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 80;

/// Reshape and truncation settings for SVD-compressed updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvdConfig {
    /// Columns `n` of the reshaped update matrix.
    pub cols: usize,
    /// Kept singular triples `r`.
    pub rank: usize,
    /// Orthogonality regularizer weight for the SVD+ variant.
    pub alpha: f64,
}

impl Default for SvdConfig {
    fn default() -> Self {
        Self {
            cols: 8,
            rank: 5,
            alpha: 0.05,
        }
    }
}

/// `U · diag(s) · Vᵀ` with `U: m×r`, `s: r` descending, `V: n×r`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    /// Parameters on the wire: `m·r + r + n·r`.
    pub fn param_count(&self) -> usize {
        svd_params(self.u.rows(), self.v.rows(), self.rank())
    }

    pub fn reconstruct(&self) -> Matrix {
        let (m, n, r) = (self.u.rows(), self.v.rows(), self.rank());
        let mut out = Matrix::zeros(m, n);
        for i in 0..m {
            for k in 0..r {
                let us = self.u[(i, k)] * self.s[k];
                if us == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += us * self.v[(j, k)];
                }
            }
        }
        out
    }

    pub fn truncate(&self, r: usize) -> SvdFactors {
        let r = r.min(self.rank());
        let take = |m: &Matrix| {
            let mut out = Matrix::zeros(m.rows(), r);
            for i in 0..m.rows() {
                out.row_mut(i).copy_from_slice(&m.row(i)[..r]);
            }
            out
        };
        SvdFactors {
            u: take(&self.u),
            s: self.s[..r].to_vec(),
            v: take(&self.v),
        }
    }
}

pub fn svd_params(m: usize, n: usize, r: usize) -> usize {
    m * r + r + n * r
}

/// Thin SVD of an `m×n` matrix by one-sided Jacobi rotations on its
/// columns. Returns `n` triples sorted by descending singular value. When
/// `m ≥ n`, columns of `U` belonging to zero singular values are completed
/// to an orthonormal set.
pub fn thin_svd(a: &Matrix) -> Result<SvdFactors> {
    ensure!(a.is_finite(), NonFinite, "svd input");
    let (m, n) = (a.rows(), a.cols());
    let mut w = a.clone();
    let mut v = Matrix::identity(n);

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..m {
                    let (x, y) = (w[(i, p)], w[(i, q)]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (w[(i, p)], w[(i, q)]);
                    w[(i, p)] = c * x - s * y;
                    w[(i, q)] = s * x + c * y;
                }
                for i in 0..n {
                    let (x, y) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * x - s * y;
                    v[(i, q)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| w[(i, j)] * w[(i, j)]).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]).then(x.cmp(&y)));

    let largest = order.first().map_or(0.0, |&j| norms[j]);
    let negligible = largest * 1e-13;
    let mut u = Matrix::zeros(m, n);
    let mut vs = Matrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    let mut missing = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        let sigma = norms[j];
        if sigma > negligible && sigma > 0.0 {
            for i in 0..m {
                u[(i, k)] = w[(i, j)] / sigma;
            }
            s.push(sigma);
        } else {
            missing.push(k);
            s.push(0.0);
        }
        for i in 0..n {
            vs[(i, k)] = v[(i, j)];
        }
    }
    if m >= n {
        complete_columns(&mut u, &missing);
    }
    Ok(SvdFactors { u, s, v: vs })
}

/// Fills the listed columns of `u` with unit vectors orthogonal to every
/// other column (Gram–Schmidt over the standard basis).
fn complete_columns(u: &mut Matrix, missing: &[usize]) {
    let (m, n) = (u.rows(), u.cols());
    let mut filled: Vec<bool> = (0..n).map(|k| !missing.contains(&k)).collect();
    let mut basis = 0;
    for &k in missing {
        while basis < m {
            let mut cand = vec![0.0; m];
            cand[basis] = 1.0;
            basis += 1;
            for _ in 0..2 {
                for j in (0..n).filter(|&j| filled[j]) {
                    let dot: f64 = (0..m).map(|i| cand[i] * u[(i, j)]).sum();
                    for (i, c) in cand.iter_mut().enumerate() {
                        *c -= dot * u[(i, j)];
                    }
                }
            }
            let norm = cand.iter().map(|c| c * c).sum::<f64>().sqrt();
            if norm > 1e-8 {
                for (i, c) in cand.iter().enumerate() {
                    u[(i, k)] = c / norm;
                }
                filled[k] = true;
                break;
            }
        }
    }
}

/// Reshapes an update vector row-major into `m×n` and keeps the top `r`
/// singular triples.
pub fn svd_compress(update: &[f64], m: usize, n: usize, r: usize) -> Result<SvdFactors> {
    ensure!(m * n == update.len(), Shape, "{m}x{n} reshape of a length-{} update", update.len());
    ensure!(r >= 1 && r <= n, InvalidArgument, "rank {r} outside 1..={n}");
    let a = Matrix::from_vec(m, n, update.to_vec())?;
    Ok(thin_svd(&a)?.truncate(r))
}

/// `U · diag(s) · Vᵀ` flattened row-major.
pub fn svd_restore(factors: &SvdFactors, m: usize, n: usize) -> Result<Vec<f64>> {
    let r = factors.rank();
    ensure!(
        factors.u.rows() == m && factors.v.rows() == n && factors.u.cols() == r && factors.v.cols() == r,
        Shape,
        "factors U {}x{}, s {}, V {}x{} do not restore a {m}x{n} matrix",
        factors.u.rows(),
        factors.u.cols(),
        r,
        factors.v.rows(),
        factors.v.cols()
    );
    Ok(factors.reconstruct().into_vec())
}

fn gram_minus_identity(x: &Matrix) -> Matrix {
    let k = x.cols();
    let mut g = Matrix::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            let dot: f64 = (0..x.rows()).map(|i| x[(i, a)] * x[(i, b)]).sum();
            g[(a, b)] = dot - if a == b { 1.0 } else { 0.0 };
        }
    }
    g
}

/// `α / n² · (‖UᵀU − I‖²_F + ‖VᵀV − I‖²_F)` with `n = U.cols()`.
pub fn orthogonality_regularizer(u: &Matrix, v: &Matrix, alpha: f64) -> f64 {
    let n = u.cols() as f64;
    let fu = gram_minus_identity(u).frobenius_norm();
    let fv = gram_minus_identity(v).frobenius_norm();
    alpha / (n * n) * (fu * fu + fv * fv)
}

/// The regularizer and its gradients `4α/n² · X(XᵀX − I)` for `X ∈ {U, V}`.
pub fn orthogonality_regularizer_grad(u: &Matrix, v: &Matrix, alpha: f64) -> Result<(f64, Matrix, Matrix)> {
    let n = u.cols() as f64;
    let scale = 4.0 * alpha / (n * n);
    let gu = gram_minus_identity(u);
    let gv = gram_minus_identity(v);
    let mut du = u.matmul(&gu)?;
    let mut dv = v.matmul(&gv)?;
    du.as_mut_slice().iter_mut().for_each(|x| *x *= scale);
    dv.as_mut_slice().iter_mut().for_each(|x| *x *= scale);
    let value = alpha / (n * n) * (gu.frobenius_norm().powi(2) + gv.frobenius_norm().powi(2));
    Ok((value, du, dv))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_parameter_counts() {
        let x: Vec<f64> = (0..256).map(|i| (i as f64 * 0.37).sin()).collect();
        assert_eq!(svd_compress(&x, 32, 8, 5).unwrap().param_count(), 205);
        let y: Vec<f64> = (0..512).map(|i| (i as f64 * 0.11).cos()).collect();
        assert_eq!(svd_compress(&y, 64, 8, 5).unwrap().param_count(), 365);
        assert!(svd_compress(&x, 30, 8, 5).is_err());
        assert!(svd_compress(&x, 32, 8, 9).is_err());
    }

    #[test]
    fn rank_one_exact() {
        let a: Vec<f64> = (0..6).flat_map(|i| (0..4).map(move |j| (i as f64 + 1.0) * (j as f64 - 1.5))).collect();
        let f = svd_compress(&a, 6, 4, 1).unwrap();
        let back = svd_restore(&f, 6, 4).unwrap();
        for (x, y) in a.iter().zip(&back) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn completed_basis_is_orthonormal() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0, 0.0], vec![2.0, 4.0, 0.0], vec![0.0, 0.0, 0.0], vec![1.0, 2.0, 0.0]]).unwrap();
        let f = thin_svd(&a).unwrap();
        let g = gram_minus_identity(&f.u);
        assert!(g.frobenius_norm() < 1e-12);
        assert_eq!(f.s[1], 0.0);
    }

    #[test]
    fn regularizer_values() {
        let v = Matrix::identity(2);
        assert_eq!(orthogonality_regularizer(&Matrix::identity(2), &v, 0.05), 0.0);
        let mut u = Matrix::identity(2);
        u[(0, 0)] = 2.0;
        u[(1, 1)] = 2.0;
        assert!((orthogonality_regularizer(&u, &v, 0.05) - 0.225).abs() < 1e-15);
    }

    #[test]
    fn singular_values_descending_and_zero_input() {
        let f = thin_svd(&Matrix::zeros(4, 3)).unwrap();
        assert!(f.s.iter().all(|&s| s == 0.0));
        let a = Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 5.0], vec![0.0, 0.0]]).unwrap();
        let f = thin_svd(&a).unwrap();
        assert!((f.s[0] - 5.0).abs() < 1e-12 && (f.s[1] - 3.0).abs() < 1e-12);
    }
}
