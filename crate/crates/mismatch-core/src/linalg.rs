//! Dense linear algebra kernels: Householder QR, least squares, one-sided
//! Jacobi SVD.
//!
//! Everything here is single-threaded and has a fixed operation order, so
//! results are bit-reproducible across runs and thread counts.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Relative diagonal threshold below which a QR factor is declared rank
/// deficient (scaled by the Frobenius norm of the input).
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Squared Frobenius norm.
pub fn frob_sq(a: ArrayView2<'_, f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

/// Frobenius norm.
pub fn frob(a: ArrayView2<'_, f64>) -> f64 {
    frob_sq(a).sqrt()
}

/// Euclidean norms of all rows.
pub fn row_norms(a: ArrayView2<'_, f64>) -> Vec<f64> {
    a.rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

/// Row vector times matrix, `x^T B`, with a fixed accumulation order.
///
/// The synthetic generator uses this kernel so that regenerating a response
/// row from stored ground truth reproduces it bit-for-bit.
pub fn row_times_mat(x: ArrayView1<'_, f64>, b: ArrayView2<'_, f64>) -> Array1<f64> {
    let (d, m) = b.dim();
    assert_eq!(x.len(), d, "row_times_mat: length mismatch");
    let mut out = Array1::zeros(m);
    for c in 0..m {
        let mut acc = 0.0;
        for r in 0..d {
            acc += x[r] * b[[r, c]];
        }
        out[c] = acc;
    }
    out
}

/// Thin QR factorization `X = Q R` of an n-by-d matrix with n >= d,
/// computed by Householder reflections. `Q` is n-by-d with orthonormal
/// columns and `R` is d-by-d upper triangular.
#[derive(Debug, Clone)]
pub struct ThinQr {
    q: Array2<f64>,
    r: Array2<f64>,
    frob_x: f64,
}

impl ThinQr {
    pub fn new(x: ArrayView2<'_, f64>) -> Result<Self> {
        let (n, d) = x.dim();
        if n < d {
            return Err(Error::TooFewRows { needed: d, have: n });
        }
        let frob_x = frob(x);
        let mut a = x.to_owned();
        // Householder vectors, one per column, stored densely.
        let mut vs: Vec<Array1<f64>> = Vec::with_capacity(d);
        for k in 0..d {
            let mut v = Array1::zeros(n - k);
            let mut norm_sq = 0.0;
            for i in k..n {
                let val = a[[i, k]];
                v[i - k] = val;
                norm_sq += val * val;
            }
            let norm = norm_sq.sqrt();
            if norm > 0.0 {
                // stable sign choice avoids cancellation
                let alpha = if v[0] >= 0.0 { -norm } else { norm };
                v[0] -= alpha;
                let v_norm_sq: f64 = v.iter().map(|t| t * t).sum();
                if v_norm_sq > 0.0 {
                    // apply I - 2 v v^T / (v^T v) to the trailing block
                    for j in k..d {
                        let mut dot = 0.0;
                        for i in k..n {
                            dot += v[i - k] * a[[i, j]];
                        }
                        let scale = 2.0 * dot / v_norm_sq;
                        for i in k..n {
                            a[[i, j]] -= scale * v[i - k];
                        }
                    }
                }
                a[[k, k]] = alpha;
                for i in (k + 1)..n {
                    a[[i, k]] = 0.0;
                }
                vs.push(v);
            } else {
                vs.push(v);
            }
        }
        let mut r = Array2::<f64>::zeros((d, d));
        for i in 0..d {
            for j in i..d {
                r[[i, j]] = a[[i, j]];
            }
        }
        // accumulate the thin Q by applying the reflectors to I_{n x d}
        let mut q = Array2::<f64>::zeros((n, d));
        for j in 0..d {
            q[[j, j]] = 1.0;
        }
        for k in (0..d).rev() {
            let v = &vs[k];
            let v_norm_sq: f64 = v.iter().map(|t| t * t).sum();
            if v_norm_sq == 0.0 {
                continue;
            }
            for j in 0..d {
                let mut dot = 0.0;
                for i in k..n {
                    dot += v[i - k] * q[[i, j]];
                }
                let scale = 2.0 * dot / v_norm_sq;
                for i in k..n {
                    q[[i, j]] -= scale * v[i - k];
                }
            }
        }
        Ok(ThinQr { q, r, frob_x })
    }

    pub fn q(&self) -> ArrayView2<'_, f64> {
        self.q.view()
    }

    pub fn r(&self) -> ArrayView2<'_, f64> {
        self.r.view()
    }

    /// Errors if any diagonal entry of `R` falls below
    /// `RANK_TOLERANCE * ||X||_F`.
    pub fn check_full_rank(&self) -> Result<()> {
        let threshold = RANK_TOLERANCE * self.frob_x;
        for i in 0..self.r.nrows() {
            let value = self.r[[i, i]].abs();
            if value < threshold || value == 0.0 {
                return Err(Error::RankDeficient {
                    index: i,
                    value,
                    threshold,
                });
            }
        }
        Ok(())
    }

    /// Projection onto range(X): `Q Q^T A`.
    pub fn project(&self, a: ArrayView2<'_, f64>) -> Array2<f64> {
        self.q.dot(&self.q.t().dot(&a))
    }

    /// Projection onto the orthogonal complement of range(X): `A - Q Q^T A`.
    pub fn project_complement(&self, a: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = a.to_owned();
        out -= &self.project(a);
        out
    }

    /// Solves `R B = Q^T A` by back substitution (least-squares coefficients
    /// for the system `X B = A`). Requires a full-rank factor.
    pub fn solve_ls(&self, a: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_full_rank()?;
        let rhs = self.q.t().dot(&a);
        Ok(self.solve_upper(rhs))
    }

    fn solve_upper(&self, mut rhs: Array2<f64>) -> Array2<f64> {
        let d = self.r.nrows();
        let m = rhs.ncols();
        for col in 0..m {
            for i in (0..d).rev() {
                let mut acc = rhs[[i, col]];
                for j in (i + 1)..d {
                    acc -= self.r[[i, j]] * rhs[[j, col]];
                }
                rhs[[i, col]] = acc / self.r[[i, i]];
            }
        }
        rhs
    }
}

/// Exact least-squares solution `argmin_B ||Y - X B||_F` via QR.
pub fn least_squares(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "X has {} rows, Y has {}",
            x.nrows(),
            y.nrows()
        )));
    }
    ThinQr::new(x)?.solve_ls(y)
}

/// Singular value decomposition `A = U diag(s) V^T` by one-sided Jacobi
/// rotations. Returns `(U, s, V)` with `U` a-by-r, `V` b-by-r, r = min(a, b),
/// singular values sorted in non-increasing order.
pub fn svd(a: ArrayView2<'_, f64>) -> (Array2<f64>, Vec<f64>, Array2<f64>) {
    let (rows, cols) = a.dim();
    if rows >= cols {
        svd_tall(a)
    } else {
        let (u, s, v) = svd_tall(a.t());
        (v, s, u)
    }
}

fn svd_tall(a: ArrayView2<'_, f64>) -> (Array2<f64>, Vec<f64>, Array2<f64>) {
    let (n, m) = a.dim();
    debug_assert!(n >= m);
    let mut u = a.to_owned();
    let mut v = Array2::<f64>::eye(m);
    let eps = 1e-14;
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        let mut off = 0.0f64;
        for p in 0..m {
            for q in (p + 1)..m {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for i in 0..n {
                    let up = u[[i, p]];
                    let uq = u[[i, q]];
                    alpha += up * up;
                    beta += uq * uq;
                    gamma += up * uq;
                }
                let denom = (alpha * beta).sqrt();
                if denom == 0.0 || gamma.abs() <= eps * denom {
                    continue;
                }
                off = off.max(gamma.abs() / denom);
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..n {
                    let up = u[[i, p]];
                    let uq = u[[i, q]];
                    u[[i, p]] = c * up - s * uq;
                    u[[i, q]] = s * up + c * uq;
                }
                for i in 0..m {
                    let vp = v[[i, p]];
                    let vq = v[[i, q]];
                    v[[i, p]] = c * vp - s * vq;
                    v[[i, q]] = s * vp + c * vq;
                }
            }
        }
        if off <= eps {
            break;
        }
    }
    let sv: Vec<f64> = (0..m)
        .map(|j| (0..n).map(|i| u[[i, j]] * u[[i, j]]).sum::<f64>().sqrt())
        .collect();
    // normalize columns of U; zero columns keep an arbitrary unit direction
    for j in 0..m {
        if sv[j] > 0.0 {
            for i in 0..n {
                u[[i, j]] /= sv[j];
            }
        } else {
            for i in 0..n {
                u[[i, j]] = if i == j { 1.0 } else { 0.0 };
            }
        }
    }
    // sort by singular value, descending; ties keep original column order
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| sv[j].partial_cmp(&sv[i]).unwrap().then(i.cmp(&j)));
    let mut u_sorted = Array2::<f64>::zeros((n, m));
    let mut v_sorted = Array2::<f64>::zeros((m, m));
    let mut s_sorted = Vec::with_capacity(m);
    for (new_j, &old_j) in order.iter().enumerate() {
        s_sorted.push(sv[old_j]);
        for i in 0..n {
            u_sorted[[i, new_j]] = u[[i, old_j]];
        }
        for i in 0..m {
            v_sorted[[i, new_j]] = v[[i, old_j]];
        }
    }
    (u_sorted, s_sorted, v_sorted)
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(a: ArrayView2<'_, f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let (_, s, _) = svd(a);
    s.first().copied().unwrap_or(0.0)
}
