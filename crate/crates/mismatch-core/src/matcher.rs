//! Stage-two correspondence recovery.
//!
//! Given a coefficient estimate `B`, responses are matched against the
//! fitted predictor rows `{B^T x_j}`. Three modes:
//!
//! * thresholded nearest neighbor — per-row argmin with a cutoff `tau`
//!   deciding missing matches;
//! * permutation — exact linear assignment over all bijections, solved by a
//!   deterministic shortest-augmenting-path method (same optima as auction
//!   or Hungarian solvers, no scaling nondeterminism);
//! * constrained — re-matching of an already-linked file, with diagonals
//!   forced inside the noise band and pairings that do not improve the fit
//!   forbidden.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::estimators::{
    estimate_mismatch_set, fit_crr, fit_group_lasso, refit, CrrOptions, GroupLassoOptions,
    MismatchRule,
};
use crate::model::{FitResult, GeneralizedMatch, MatchResult, RegressionData};

/// Forbidden pairings get this multiple of the largest finite cost.
const FORBIDDEN_COST_FACTOR: f64 = 1e12;

/// Exact minimum-cost assignment by shortest augmenting paths, O(n^3).
/// Returns the column assigned to each row and the total cost. Deterministic
/// for any input, including ties.
pub fn solve_assignment(cost: ArrayView2<'_, f64>) -> (Vec<usize>, f64) {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "assignment cost matrix must be square");
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    let inf = f64::INFINITY;
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    let total = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[[i, j]])
        .sum();
    (assignment, total)
}

/// Default threshold from the recovery analysis:
/// `sigma_hat * (sqrt(m) + 2 sqrt(log n)) + slack`, where `slack` is the
/// caller's bound on `max_j ||x_j||_2 ||B* - B_hat||_2` (zero if unknown).
pub fn default_tau(sigma_hat: f64, m: usize, n: usize, slack: f64) -> f64 {
    sigma_hat * ((m as f64).sqrt() + 2.0 * (n as f64).ln().sqrt()) + slack
}

fn fitted_rows(data: &RegressionData, b_hat: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if b_hat.nrows() != data.d() || b_hat.ncols() != data.m() {
        return Err(Error::DimensionMismatch(format!(
            "coefficients are {}x{}, expected {}x{}",
            b_hat.nrows(),
            b_hat.ncols(),
            data.d(),
            data.m()
        )));
    }
    Ok(data.x().dot(&b_hat))
}

fn row_distance_sq(y: ArrayView2<'_, f64>, fitted: &Array2<f64>, i: usize, j: usize) -> f64 {
    let mut acc = 0.0;
    for c in 0..y.ncols() {
        let r = y[[i, c]] - fitted[[j, c]];
        acc += r * r;
    }
    acc
}

/// Thresholded nearest-neighbor matching: each response takes its closest
/// fitted predictor (ties to the smaller index) unless the distance exceeds
/// `tau`, in which case the match is declared missing.
pub fn match_threshold(
    data: &RegressionData,
    b_hat: ArrayView2<'_, f64>,
    tau: f64,
) -> Result<MatchResult> {
    match_threshold_restricted(data, b_hat, tau, None)
}

/// Variant of [`match_threshold`] that re-examines only the rows in
/// `candidates` and keeps `theta(i) = i` for everything else. With
/// `candidates = None` all rows are re-examined. Note that pinned rows keep
/// their diagonal match regardless of distance, so the
/// "missing iff distance exceeds tau" relation holds only for examined rows.
pub fn match_threshold_restricted(
    data: &RegressionData,
    b_hat: ArrayView2<'_, f64>,
    tau: f64,
    candidates: Option<&std::collections::BTreeSet<usize>>,
) -> Result<MatchResult> {
    if tau < 0.0 {
        return Err(Error::InvalidConfig("tau must be nonnegative".into()));
    }
    let fitted = fitted_rows(data, b_hat)?;
    let n = data.n();
    let mut theta = Vec::with_capacity(n);
    let mut distances = Vec::with_capacity(n);
    for i in 0..n {
        if let Some(mask) = candidates {
            if !mask.contains(&i) {
                theta.push(Some(i));
                distances.push(row_distance_sq(data.y(), &fitted, i, i).sqrt());
                continue;
            }
        }
        let mut best_j = 0usize;
        let mut best = row_distance_sq(data.y(), &fitted, i, 0);
        for j in 1..n {
            let d = row_distance_sq(data.y(), &fitted, i, j);
            if d < best {
                best = d;
                best_j = j;
            }
        }
        let dist = best.sqrt();
        theta.push(if dist <= tau { Some(best_j) } else { None });
        distances.push(dist);
    }
    Ok(MatchResult {
        theta_hat: GeneralizedMatch::from_targets(theta)?,
        tau,
        row_distance: distances,
    })
}

/// Exact least-squares matching under the permutation constraint: minimizes
/// `sum_i ||y_i - B^T x_{pi(i)}||^2` over all bijections.
pub fn match_permutation(
    data: &RegressionData,
    b_hat: ArrayView2<'_, f64>,
) -> Result<MatchResult> {
    let fitted = fitted_rows(data, b_hat)?;
    let n = data.n();
    let mut cost = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            cost[[i, j]] = row_distance_sq(data.y(), &fitted, i, j);
        }
    }
    let (assignment, _) = solve_assignment(cost.view());
    let distances: Vec<f64> = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[[i, j]].sqrt())
        .collect();
    Ok(MatchResult {
        theta_hat: GeneralizedMatch::from_targets(assignment.into_iter().map(Some).collect())?,
        tau: f64::INFINITY,
        row_distance: distances,
    })
}

/// Mismatch correction for a pre-linked file: finds the permutation
/// minimizing `||Y - Pi (Theta_pre X) B||_F^2` subject to
///
/// * `Pi_ii = 1` whenever the current pairing fits within the noise band
///   `sqrt(2 m) * sigma_hat`, and
/// * `Pi_ij = 0` (j != i) whenever pairing j does not improve on the current
///   pairing.
///
/// Forced diagonals are removed before solving; forbidden pairings receive a
/// large sentinel cost, and selecting one raises an infeasibility error.
pub fn match_constrained(
    data: &RegressionData,
    theta_pre: &GeneralizedMatch,
    b_hat: ArrayView2<'_, f64>,
    sigma_hat: f64,
) -> Result<MatchResult> {
    if sigma_hat < 0.0 {
        return Err(Error::InvalidConfig("sigma_hat must be nonnegative".into()));
    }
    let n = data.n();
    if theta_pre.len() != n {
        return Err(Error::DimensionMismatch(
            "pre-link correspondence length differs from n".into(),
        ));
    }
    let fitted = fitted_rows(data, b_hat)?;
    // fitted rows of the pre-linked file: row j is B^T x_{theta_pre(j)},
    // zero when the pre-link is missing
    let m = data.m();
    let mut pre_fitted = Array2::<f64>::zeros((n, m));
    for j in 0..n {
        if let Some(t) = theta_pre.target(j) {
            pre_fitted.row_mut(j).assign(&fitted.row(t));
        }
    }
    let dist = |i: usize, j: usize| -> f64 { row_distance_sq(data.y(), &pre_fitted, i, j) };

    let band = (2.0 * m as f64).sqrt() * sigma_hat;
    let forced: Vec<bool> = (0..n).map(|i| dist(i, i).sqrt() <= band).collect();
    let free: Vec<usize> = (0..n).filter(|&i| !forced[i]).collect();

    let mut theta: Vec<Option<usize>> = (0..n).map(Some).collect();
    if !free.is_empty() {
        let r = free.len();
        let mut cost = Array2::<f64>::zeros((r, r));
        let mut max_cost = 0.0f64;
        for (a, &i) in free.iter().enumerate() {
            let current = dist(i, i);
            for (b, &j) in free.iter().enumerate() {
                let c = dist(i, j);
                if i != j && current <= c {
                    cost[[a, b]] = f64::NAN; // forbidden, patched below
                } else {
                    cost[[a, b]] = c;
                    max_cost = max_cost.max(c);
                }
            }
        }
        let sentinel = FORBIDDEN_COST_FACTOR * max_cost.max(1.0);
        cost.map_inplace(|v| {
            if v.is_nan() {
                *v = sentinel;
            }
        });
        let (assignment, _) = solve_assignment(cost.view());
        for (a, &b) in assignment.iter().enumerate() {
            if cost[[a, b]] >= sentinel {
                return Err(Error::InfeasibleMatch { row: free[a] });
            }
            theta[free[a]] = Some(free[b]);
        }
    }
    let distances: Vec<f64> = (0..n).map(|i| dist(i, theta[i].unwrap()).sqrt()).collect();
    Ok(MatchResult {
        theta_hat: GeneralizedMatch::from_targets(theta)?,
        tau: band,
        row_distance: distances,
    })
}

/// Stage-one estimator selection for the combined pipeline.
#[derive(Debug, Clone)]
pub enum StageOneEstimator {
    /// Group-penalized program only.
    GroupLasso(GroupLassoOptions),
    /// Group-penalized program, then least-squares refit after removing the
    /// k rows of largest estimated contamination.
    ProposedPlus { lasso: GroupLassoOptions, k: usize },
    /// Hard-thresholded contamination estimation with known budget.
    Crr(CrrOptions),
}

#[derive(Debug, Clone)]
pub enum MatchMode {
    Threshold { tau: f64 },
    Permutation,
    /// Constrained re-matching against the identity pre-link.
    Constrained { sigma_hat: f64 },
}

/// Runs stage one and stage two back to back and returns both artifacts.
pub fn two_stage(
    data: &RegressionData,
    estimator: &StageOneEstimator,
    mode: &MatchMode,
) -> Result<(FitResult, MatchResult)> {
    let fit = match estimator {
        StageOneEstimator::GroupLasso(opts) => fit_group_lasso(data, opts)?,
        StageOneEstimator::ProposedPlus { lasso, k } => {
            let mut fit = fit_group_lasso(data, lasso)?;
            let suspects = estimate_mismatch_set(&fit, MismatchRule::TopK(*k))?;
            fit.b_hat = refit(data, &suspects)?;
            fit.s_hat = suspects;
            fit
        }
        StageOneEstimator::Crr(opts) => fit_crr(data, opts)?,
    };
    let matched = match mode {
        MatchMode::Threshold { tau } => match_threshold(data, fit.b_hat.view(), *tau)?,
        MatchMode::Permutation => match_permutation(data, fit.b_hat.view())?,
        MatchMode::Constrained { sigma_hat } => match_constrained(
            data,
            &GeneralizedMatch::identity(data.n()),
            fit.b_hat.view(),
            *sigma_hat,
        )?,
    };
    Ok((fit, matched))
}
