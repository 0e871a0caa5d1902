//! Convex relaxations over the matching polytope
//! `C = {Theta : Theta_ij in [0,1], row sums <= 1}`.
//!
//! Two programs share the smooth term `f(Theta) = ||P_X^perp Theta Y||_F^2 / (2 n m)`:
//!
//! * the constrained form minimizes `f` over `C_k = {Theta in C : sum_i Theta_ii >= n - k}`;
//! * the penalized form minimizes `f + lambda * sum_i ||row_i((I - Theta) Y)||_2`
//!   over `C`, with the non-smooth penalty replaced by a Huber smoothing
//!   whose parameter decays as `mu_0 / sqrt(t + 1)`.
//!
//! Both are solved by the conditional-gradient (Frank-Wolfe) method. The
//! linear minimization oracle over `C_k` has a closed combinatorial
//! solution: the LP separates across rows once the set of forced diagonals
//! is fixed, each row contributes `min(0, min_j G_ij)` when free, and
//! forcing row i onto its diagonal costs `G_ii - min(0, min_j G_ij) >= 0` —
//! so the optimal forced set is the `n - k` cheapest forcing costs. The
//! brute-force vertex enumeration in the acceptance suite checks this
//! argument numerically.
//!
//! Dense n-by-n matching variables scale poorly; both solvers refuse
//! instances with n above [`DENSE_GUARD`].

use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::{frob_sq, row_norms, ThinQr};
use crate::model::RegressionData;

/// Upper bound on n for the dense relaxation solvers.
pub const DENSE_GUARD: usize = 2000;

#[derive(Debug, Clone)]
pub struct FwOptions {
    pub max_iters: usize,
    /// Diagonal-mass budget of the constrained program.
    pub k: usize,
    /// Penalty level of the regularized program.
    pub lambda: f64,
    /// Initial Huber smoothing parameter of the regularized program.
    pub smoothing_mu0: f64,
    /// Stop once the Frank-Wolfe gap falls below this.
    pub tol: f64,
}

impl FwOptions {
    /// Options for the diagonal-constrained program with budget k.
    pub fn constrained(k: usize) -> Self {
        FwOptions {
            max_iters: 100,
            k,
            lambda: 0.0,
            smoothing_mu0: 1e-2,
            tol: 1e-7,
        }
    }

    /// Options for the group-penalized program with level lambda.
    pub fn regularized(lambda: f64) -> Self {
        FwOptions {
            max_iters: 100,
            k: 0,
            lambda,
            smoothing_mu0: 1e-2,
            tol: 1e-7,
        }
    }
}

/// Result of a relaxation solve: the fractional matching, the coefficient
/// estimate from regressing `Theta Y` on `X`, and solver diagnostics.
#[derive(Debug, Clone)]
pub struct RelaxationFit {
    pub theta: Array2<f64>,
    pub b: Array2<f64>,
    pub objective_trace: Vec<f64>,
    /// Last Frank-Wolfe gap, a bound on the suboptimality of the final
    /// iterate for the objective it was computed on.
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Exact linear minimization oracle over `C_k`: returns the vertex
/// minimizing `tr(Theta^T G)`. Ties break to the smallest column within a
/// row and the smallest row index in the forced-diagonal selection. With
/// `k = n` the diagonal constraint is vacuous and the oracle minimizes over
/// all of `C`.
pub fn lp_oracle_cons(g: ArrayView2<'_, f64>, k: usize) -> Result<Array2<f64>> {
    let n = g.nrows();
    if g.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "gradient must be square, got {}x{}",
            n,
            g.ncols()
        )));
    }
    if k > n {
        return Err(Error::InvalidConfig(format!(
            "diagonal budget k = {k} exceeds n = {n}"
        )));
    }
    // per-row unconstrained optimum: most negative entry, or nothing
    let mut free_col: Vec<Option<usize>> = Vec::with_capacity(n);
    let mut free_gain = Vec::with_capacity(n);
    for i in 0..n {
        let mut best = 0.0f64;
        let mut best_j = None;
        for j in 0..n {
            if g[[i, j]] < best {
                best = g[[i, j]];
                best_j = Some(j);
            }
        }
        free_col.push(best_j);
        free_gain.push(best);
    }
    // cheapest rows to force onto the diagonal
    let force_cost: Vec<f64> = (0..n).map(|i| g[[i, i]] - free_gain[i]).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| force_cost[a].partial_cmp(&force_cost[b]).unwrap().then(a.cmp(&b)));
    let forced: BTreeSet<usize> = order.into_iter().take(n - k).collect();

    let mut theta = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        if forced.contains(&i) {
            theta[[i, i]] = 1.0;
        } else if let Some(j) = free_col[i] {
            theta[[i, j]] = 1.0;
        }
    }
    Ok(theta)
}

fn check_instance(data: &RegressionData) -> Result<ThinQr> {
    let (n, d) = (data.n(), data.d());
    if n > DENSE_GUARD {
        return Err(Error::ProblemTooLarge {
            n,
            limit: DENSE_GUARD,
        });
    }
    if n <= d {
        return Err(Error::TooFewRows { needed: d, have: n });
    }
    let qr = ThinQr::new(data.x())?;
    qr.check_full_rank()?;
    Ok(qr)
}

/// Frank-Wolfe for the diagonal-constrained program, with exact line search
/// clipped to [0, 1]. Iterates start at the identity and stay inside `C_k`;
/// the objective trace is non-increasing.
pub fn fit_ds_cons(data: &RegressionData, opts: &FwOptions) -> Result<RelaxationFit> {
    let qr = check_instance(data)?;
    let (n, m) = (data.n(), data.m());
    if opts.k >= n {
        return Err(Error::InvalidConfig(format!(
            "constrained program needs k < n, got k = {}, n = {}",
            opts.k, n
        )));
    }
    let y = data.y().to_owned();
    let nm = (n * m) as f64;

    let mut theta: Array2<f64> = Array2::<f64>::eye(n);
    let mut pty = qr.project_complement(theta.dot(&y).view());
    let mut f = frob_sq(pty.view()) / (2.0 * nm);
    let mut trace = vec![f];
    let mut gap = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..opts.max_iters {
        iterations += 1;
        let grad = pty.dot(&y.t()).mapv(|v| v / nm);
        let vertex = lp_oracle_cons(grad.view(), opts.k)?;
        let delta = &vertex - &theta;
        gap = -(&delta * &grad).sum();
        if gap < opts.tol {
            converged = true;
            break;
        }
        let w = qr.project_complement(delta.dot(&y).view());
        let den = frob_sq(w.view());
        if den <= 0.0 {
            // direction annihilated by the projector: no progress possible
            break;
        }
        let num = -(&pty * &w).sum();
        let alpha = (num / den).clamp(0.0, 1.0);
        if alpha == 0.0 {
            break;
        }
        theta = &theta + &delta.mapv(|v| v * alpha);
        pty = qr.project_complement(theta.dot(&y).view());
        f = frob_sq(pty.view()) / (2.0 * nm);
        trace.push(f);
    }

    let b = qr.solve_ls(theta.dot(&y).view())?;
    Ok(RelaxationFit {
        theta,
        b,
        objective_trace: trace,
        gap,
        iterations,
        converged,
    })
}

fn huber(t: f64, mu: f64) -> f64 {
    if mu <= 0.0 || t > mu {
        t - mu.max(0.0) / 2.0
    } else {
        t * t / (2.0 * mu)
    }
}

/// Smoothed objective of the penalized program at smoothing level `mu`
/// (`mu = 0` gives the exact non-smooth objective).
pub fn smoothed_objective(
    data: &RegressionData,
    theta: ArrayView2<'_, f64>,
    lambda: f64,
    mu: f64,
) -> Result<f64> {
    let qr = check_instance(data)?;
    let (n, m) = (data.n(), data.m());
    let nm = (n * m) as f64;
    let ty = theta.dot(&data.y());
    let quad = frob_sq(qr.project_complement(ty.view()).view()) / (2.0 * nm);
    let resid = &data.y().to_owned() - &ty;
    let pen: f64 = row_norms(resid.view()).iter().map(|&t| huber(t, mu)).sum();
    Ok(quad + lambda * pen)
}

/// Frank-Wolfe for the group-penalized program over `C` with step size
/// `2/(t+2)` and Huber smoothing `mu_t = mu_0 / sqrt(t+1)`.
///
/// The smoothed objective changes every iteration, so the trace records the
/// exact (non-smoothed) objective of each iterate and the best such iterate
/// is returned.
pub fn fit_ds_reg(data: &RegressionData, opts: &FwOptions) -> Result<RelaxationFit> {
    let qr = check_instance(data)?;
    let (n, m) = (data.n(), data.m());
    if opts.lambda < 0.0 || opts.smoothing_mu0 <= 0.0 {
        return Err(Error::InvalidConfig(
            "regularized program needs lambda >= 0 and smoothing_mu0 > 0".into(),
        ));
    }
    let y = data.y().to_owned();
    let nm = (n * m) as f64;
    let lambda = opts.lambda;

    let exact_objective = |theta: &Array2<f64>| -> f64 {
        let ty = theta.dot(&y);
        let quad = frob_sq(qr.project_complement(ty.view()).view()) / (2.0 * nm);
        let resid = &y - &ty;
        let pen: f64 = row_norms(resid.view()).iter().sum();
        quad + lambda * pen
    };

    let mut theta: Array2<f64> = Array2::<f64>::eye(n);
    let mut f = exact_objective(&theta);
    let mut best_f = f;
    let mut best_theta = theta.clone();
    let mut trace = vec![f];
    let mut gap = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    for t in 0..opts.max_iters {
        iterations += 1;
        let mu = opts.smoothing_mu0 / ((t + 1) as f64).sqrt();
        let ty = theta.dot(&y);
        let pty = qr.project_complement(ty.view());
        let resid = &y - &ty;
        // gradient of the smoothed penalty: rows r_i / max(mu, ||r_i||)
        let norms = row_norms(resid.view());
        let mut w = resid.clone();
        for (i, mut row) in w.rows_mut().into_iter().enumerate() {
            let scale = norms[i].max(mu);
            row.map_inplace(|v| *v /= scale);
        }
        let grad = &pty.dot(&y.t()).mapv(|v| v / nm) - &w.dot(&y.t()).mapv(|v| v * lambda);
        let vertex = lp_oracle_cons(grad.view(), n)?;
        let delta = &vertex - &theta;
        gap = -(&delta * &grad).sum();
        if gap < opts.tol {
            converged = true;
            break;
        }
        let alpha = 2.0 / (t as f64 + 2.0);
        theta = &theta + &delta.mapv(|v| v * alpha);
        f = exact_objective(&theta);
        trace.push(f);
        if f < best_f {
            best_f = f;
            best_theta = theta.clone();
        }
    }

    let b = qr.solve_ls(best_theta.dot(&y).view())?;
    Ok(RelaxationFit {
        theta: best_theta,
        b,
        objective_trace: trace,
        gap,
        iterations,
        converged,
    })
}

/// Checks that a point lies in `C_k` up to `eps`.
pub fn in_polytope(theta: ArrayView2<'_, f64>, k: usize, eps: f64) -> bool {
    let n = theta.nrows();
    if theta.ncols() != n {
        return false;
    }
    for i in 0..n {
        let mut row_sum = 0.0;
        for j in 0..n {
            let v = theta[[i, j]];
            if !(-eps..=1.0 + eps).contains(&v) {
                return false;
            }
            row_sum += v;
        }
        if row_sum > 1.0 + eps {
            return false;
        }
    }
    let diag: f64 = (0..n).map(|i| theta[[i, i]]).sum();
    diag >= (n - k) as f64 - eps
}
