//! Stage-one coefficient estimation.
//!
//! The primary estimator solves
//!
//! ```text
//! min_{B, Xi}  1/(2 n m) ||Y - X B - sqrt(n) Xi||_F^2 + lambda * sum_i ||Xi_{i,:}||_2
//! ```
//!
//! by block coordinate descent: the `Xi` block has an exact proximal update
//! (row-wise group thresholding of the residual), the `B` block an exact
//! least-squares update through a QR factorization computed once. Both
//! updates are damped by a back-tracking line search, which accepts the full
//! step whenever it already decreases the objective.
//!
//! Also here: the closed-form tuning levels for `lambda`, the least-squares
//! refit after removing suspected mismatches, and the hard-thresholding
//! competitor that estimates the contamination on the orthogonal complement
//! of the design's column space.

use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::linalg::{row_norms, ThinQr};
use crate::model::{FitResult, GeneralizedMatch, RegressionData};

#[derive(Debug, Clone)]
pub struct GroupLassoOptions {
    pub lambda: f64,
    pub max_iters: usize,
    /// Relative objective-decrease stopping tolerance.
    pub rel_tol: f64,
    /// Multiplicative backtracking factor for the line search.
    pub line_search_shrink: f64,
    /// Sufficient-decrease constant for the line search.
    pub line_search_c: f64,
}

impl GroupLassoOptions {
    pub fn new(lambda: f64) -> Self {
        GroupLassoOptions {
            lambda,
            max_iters: 500,
            rel_tol: 1e-8,
            line_search_shrink: 0.5,
            line_search_c: 1e-4,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.lambda <= 0.0 || self.lambda.is_nan() {
            return Err(Error::InvalidConfig("lambda must be positive".into()));
        }
        if self.rel_tol <= 0.0 || self.rel_tol.is_nan() {
            return Err(Error::InvalidConfig("rel_tol must be positive".into()));
        }
        if !(0.0 < self.line_search_shrink && self.line_search_shrink < 1.0) {
            return Err(Error::InvalidConfig("line_search_shrink must lie in (0, 1)".into()));
        }
        if !(0.0 < self.line_search_c && self.line_search_c < 1.0) {
            return Err(Error::InvalidConfig("line_search_c must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CrrOptions {
    /// Known row-sparsity budget for the contamination matrix.
    pub k: usize,
    pub max_iters: usize,
    pub tol: f64,
}

impl CrrOptions {
    pub fn new(k: usize) -> Self {
        CrrOptions {
            k,
            max_iters: 200,
            tol: 1e-9,
        }
    }
}

/// Row-wise shrinkage `a_i <- a_i * (1 - eta / ||a_i||_2)_+`.
///
/// This is the proximal map of `Z -> eta * sum_i ||Z_{i,:}||_2`; a row is
/// zeroed exactly when its norm is at most `eta`.
pub fn group_threshold(a: ArrayView2<'_, f64>, eta: f64) -> Array2<f64> {
    assert!(eta >= 0.0, "eta must be nonnegative");
    let mut out = a.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= eta {
            row.fill(0.0);
        } else {
            let factor = 1.0 - eta / norm;
            row.map_inplace(|v| *v *= factor);
        }
    }
    out
}

/// The noise level `lambda_0` below which the penalty cannot dominate the
/// noise term:
///
/// ```text
/// lambda_0 = mu_{n,d} sigma / sqrt(n m) * (1 + sqrt(4 log n / m)),
/// mu_{n,d} = min((n - d)/n + sqrt(24 log n / n), 1).
/// ```
///
/// Consistency requires `lambda >= 2 lambda_0`.
pub fn lambda0(n: usize, d: usize, m: usize, sigma: f64) -> Result<f64> {
    if n <= d {
        return Err(Error::TooFewRows { needed: d, have: n });
    }
    if d == 0 || m == 0 {
        return Err(Error::InvalidConfig("d and m must be at least 1".into()));
    }
    let (nf, mf) = (n as f64, m as f64);
    let log_n = nf.ln();
    let mu = ((nf - d as f64) / nf + (24.0 * log_n / nf).sqrt()).min(1.0);
    Ok(mu * sigma / (nf * mf).sqrt() * (1.0 + (4.0 * log_n / mf).sqrt()))
}

/// The practical lower bound `lambda_star = 4 sigma / sqrt(n m)` used as the
/// benchmark default (treats the `sqrt(4 log n / m)` factor as one).
pub fn lambda_star(n: usize, m: usize, sigma: f64) -> f64 {
    4.0 * sigma / ((n * m) as f64).sqrt()
}

/// Tries the full step towards `full` and backtracks along the segment from
/// `cur` until the sufficient-decrease condition holds. Returns the accepted
/// point and its objective, or `None` when no step decreases the objective.
fn damped_step<F>(
    cur: &Array2<f64>,
    full: Array2<f64>,
    f_cur: f64,
    f_full: f64,
    shrink: f64,
    c: f64,
    obj: F,
) -> Option<(Array2<f64>, f64)>
where
    F: Fn(&Array2<f64>) -> f64,
{
    let delta = f_cur - f_full;
    let mut alpha = 1.0f64;
    for trial in 0..60 {
        let (cand, f_new) = if trial == 0 {
            (full.clone(), f_full)
        } else {
            let cand = cur * (1.0 - alpha) + &full * alpha;
            let f_new = obj(&cand);
            (cand, f_new)
        };
        let target = if delta > 0.0 { f_cur - c * alpha * delta } else { f_cur };
        if f_new <= target {
            return Some((cand, f_new));
        }
        alpha *= shrink;
    }
    None
}

/// Block coordinate descent for the group-penalized program.
///
/// Requires `n > d` and a full-column-rank design. The contamination update
/// applies `group_threshold` with level `m * sqrt(n) * lambda` to the
/// current residual (the exact block minimizer); the coefficient update
/// projects the de-contaminated response onto range(X).
pub fn fit_group_lasso(data: &RegressionData, opts: &GroupLassoOptions) -> Result<FitResult> {
    opts.validate()?;
    let (n, d, m) = (data.n(), data.d(), data.m());
    if n <= d {
        return Err(Error::TooFewRows { needed: d, have: n });
    }
    let qr = ThinQr::new(data.x())?;
    qr.check_full_rank()?;

    let y = data.y().to_owned();
    let sqrt_n = (n as f64).sqrt();
    let nm = (n * m) as f64;
    let lambda = opts.lambda;
    let tau = m as f64 * sqrt_n * lambda;

    let objective = |xb: &Array2<f64>, xi: &Array2<f64>| -> f64 {
        let mut fit = 0.0;
        for ((yv, xbv), xiv) in y.iter().zip(xb.iter()).zip(xi.iter()) {
            let r = yv - xbv - sqrt_n * xiv;
            fit += r * r;
        }
        let penalty: f64 = row_norms(xi.view()).iter().sum();
        fit / (2.0 * nm) + lambda * penalty
    };

    let mut xb = qr.project(y.view());
    let mut xi = Array2::<f64>::zeros((n, m));
    let mut f_cur = objective(&xb, &xi);
    let mut trace = vec![f_cur];
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..opts.max_iters {
        iterations += 1;
        let f_outer_prev = f_cur;

        // contamination block: exact prox of the penalty at the residual
        let resid = &y - &xb;
        let mut prox = group_threshold(resid.view(), tau);
        prox.map_inplace(|v| *v /= sqrt_n);
        let f_full = objective(&xb, &prox);
        if let Some((next, f_next)) = damped_step(
            &xi,
            prox,
            f_cur,
            f_full,
            opts.line_search_shrink,
            opts.line_search_c,
            |cand| objective(&xb, cand),
        ) {
            xi = next;
            f_cur = f_next;
        }

        // coefficient block: exact least-squares fit to Y - sqrt(n) Xi
        let decontaminated = &y - &(&xi * sqrt_n);
        let target = qr.project(decontaminated.view());
        let f_full = objective(&target, &xi);
        if let Some((next, f_next)) = damped_step(
            &xb,
            target,
            f_cur,
            f_full,
            opts.line_search_shrink,
            opts.line_search_c,
            |cand| objective(cand, &xi),
        ) {
            xb = next;
            f_cur = f_next;
        }

        trace.push(f_cur);
        if (f_outer_prev - f_cur).abs() <= opts.rel_tol * f_outer_prev.abs().max(1e-30) {
            converged = true;
            break;
        }
    }

    let b_hat = qr.solve_ls(xb.view())?;
    let s_hat = nonzero_rows(xi.view());
    Ok(FitResult {
        b_hat,
        xi_hat: xi,
        s_hat,
        objective_trace: trace,
        iterations,
        converged,
    })
}

fn nonzero_rows(a: ArrayView2<'_, f64>) -> BTreeSet<usize> {
    row_norms(a)
        .iter()
        .enumerate()
        .filter(|(_, &norm)| norm > 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// Rule for turning estimated contamination row norms into a mismatch set.
#[derive(Debug, Clone, Copy)]
pub enum MismatchRule {
    /// All rows with norm at least the threshold.
    Threshold(f64),
    /// Exactly the k rows of largest norm, ties broken by smaller index.
    TopK(usize),
}

/// Default level for the threshold rule, `sqrt(2 m) * sigma0`: rows whose
/// contamination norm clears twice the per-row noise energy.
pub fn default_mismatch_threshold(m: usize, sigma0: f64) -> f64 {
    (2.0 * m as f64).sqrt() * sigma0
}

pub fn estimate_mismatch_set(fit: &FitResult, rule: MismatchRule) -> Result<BTreeSet<usize>> {
    let norms = row_norms(fit.xi_hat.view());
    match rule {
        MismatchRule::Threshold(t) => Ok(norms
            .iter()
            .enumerate()
            .filter(|(_, &norm)| norm >= t)
            .map(|(i, _)| i)
            .collect()),
        MismatchRule::TopK(k) => {
            let n = norms.len();
            if k >= n {
                return Err(Error::InvalidConfig(format!(
                    "top-k rule needs k < n, got k = {k}, n = {n}"
                )));
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap().then(i.cmp(&j)));
            Ok(order.into_iter().take(k).collect())
        }
    }
}

/// Least squares on the rows not in `exclude`.
pub fn refit(data: &RegressionData, exclude: &BTreeSet<usize>) -> Result<Array2<f64>> {
    let (n, d, m) = (data.n(), data.d(), data.m());
    let kept: Vec<usize> = (0..n).filter(|i| !exclude.contains(i)).collect();
    if kept.len() <= d {
        return Err(Error::TooFewRows {
            needed: d,
            have: kept.len(),
        });
    }
    let mut xs = Array2::<f64>::zeros((kept.len(), d));
    let mut ys = Array2::<f64>::zeros((kept.len(), m));
    for (row, &i) in kept.iter().enumerate() {
        xs.row_mut(row).assign(&data.x().row(i));
        ys.row_mut(row).assign(&data.y().row(i));
    }
    let qr = ThinQr::new(xs.view())?;
    qr.solve_ls(ys.view())
}

/// Plain least squares ignoring mismatches.
pub fn naive_least_squares(data: &RegressionData) -> Result<Array2<f64>> {
    refit(data, &BTreeSet::new())
}

/// Least squares with knowledge of the true correspondence: regresses each
/// matched response on its true predictor; missing-match rows are dropped.
pub fn oracle_least_squares(
    data: &RegressionData,
    theta_star: &GeneralizedMatch,
) -> Result<Array2<f64>> {
    let (n, d, m) = (data.n(), data.d(), data.m());
    if theta_star.len() != n {
        return Err(Error::DimensionMismatch(
            "correspondence length differs from n".into(),
        ));
    }
    let matched: Vec<(usize, usize)> = (0..n)
        .filter_map(|i| theta_star.target(i).map(|j| (i, j)))
        .collect();
    if matched.len() <= d {
        return Err(Error::TooFewRows {
            needed: d,
            have: matched.len(),
        });
    }
    let mut xs = Array2::<f64>::zeros((matched.len(), d));
    let mut ys = Array2::<f64>::zeros((matched.len(), m));
    for (row, &(i, j)) in matched.iter().enumerate() {
        xs.row_mut(row).assign(&data.x().row(j));
        ys.row_mut(row).assign(&data.y().row(i));
    }
    let qr = ThinQr::new(xs.view())?;
    qr.solve_ls(ys.view())
}

/// Keeps the k rows of largest Euclidean norm (ties: smaller index) and
/// zeroes the rest.
fn hard_threshold_rows(a: &Array2<f64>, k: usize) -> Array2<f64> {
    let norms = row_norms(a.view());
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap().then(i.cmp(&j)));
    let keep: BTreeSet<usize> = order.into_iter().take(k).collect();
    let mut out = Array2::<f64>::zeros(a.dim());
    for &i in &keep {
        out.row_mut(i).assign(&a.row(i));
    }
    out
}

/// Hard-thresholded contamination estimation: minimizes
/// `||P_X^perp (Y - Phi)||_F^2` over matrices with at most k non-zero rows
/// by projected gradient with unit step (the projector gradient has
/// Lipschitz constant one), then recovers the coefficients by least squares
/// on the cleaned responses.
pub fn fit_crr(data: &RegressionData, opts: &CrrOptions) -> Result<FitResult> {
    let (n, d, m) = (data.n(), data.d(), data.m());
    if n <= d {
        return Err(Error::TooFewRows { needed: d, have: n });
    }
    if opts.k + d >= n {
        return Err(Error::InvalidConfig(format!(
            "hard thresholding needs k < n - d, got k = {}, n = {}, d = {}",
            opts.k, n, d
        )));
    }
    let qr = ThinQr::new(data.x())?;
    qr.check_full_rank()?;
    let y = data.y().to_owned();

    let mut phi: Array2<f64> = Array2::<f64>::zeros((n, m));
    let resid = qr.project_complement((&y - &phi).view());
    let mut f_prev = crate::linalg::frob_sq(resid.view());
    let f0 = f_prev;
    let mut trace = vec![f_prev];
    let mut converged = f_prev <= 1e-20 * f0.max(1e-300);
    let mut iterations = 0;

    if !converged {
        for _ in 0..opts.max_iters {
            iterations += 1;
            let step = &phi + &qr.project_complement((&y - &phi).view());
            phi = hard_threshold_rows(&step, opts.k);
            let f_new =
                crate::linalg::frob_sq(qr.project_complement((&y - &phi).view()).view());
            trace.push(f_new);
            let done = f_new <= 1e-20 * f0.max(1e-300)
                || (f_prev - f_new).abs() <= opts.tol * f_prev.abs().max(1e-300);
            f_prev = f_new;
            if done {
                converged = true;
                break;
            }
        }
    }

    let cleaned = &y - &phi;
    let b_hat = qr.solve_ls(cleaned.view())?;
    let sqrt_n = (n as f64).sqrt();
    let s_hat = nonzero_rows(phi.view());
    let xi_hat = phi.mapv(|v| v / sqrt_n);
    Ok(FitResult {
        b_hat,
        xi_hat,
        s_hat,
        objective_trace: trace,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frob;
    use crate::synth::{generate, SynthConfig};
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn group_threshold_examples() {
        let a = array![[3.0, 4.0]];
        let unchanged = group_threshold(a.view(), 0.0);
        assert_eq!(unchanged, a);

        let shrunk = group_threshold(a.view(), 1.0);
        assert!((shrunk[[0, 0]] - 2.4).abs() < 1e-12);
        assert!((shrunk[[0, 1]] - 3.2).abs() < 1e-12);

        let zeroed = group_threshold(a.view(), 6.0);
        assert_eq!(zeroed, array![[0.0, 0.0]]);
    }

    #[test]
    fn group_threshold_matches_numeric_prox() {
        // golden-section search on the 1-d radial reduction of
        // min_z 0.5 ||z - a||^2 + eta ||z||
        fn numeric_prox_row(a: &[f64], eta: f64) -> Vec<f64> {
            let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            let phi = |t: f64| 0.5 * (t - norm) * (t - norm) + eta * t;
            let (mut lo, mut hi) = (0.0f64, norm + 1.0);
            let gr = (5.0f64.sqrt() - 1.0) / 2.0;
            for _ in 0..200 {
                let c = hi - gr * (hi - lo);
                let d = lo + gr * (hi - lo);
                if phi(c) < phi(d) {
                    hi = d;
                } else {
                    lo = c;
                }
            }
            let t = 0.5 * (lo + hi);
            if norm == 0.0 {
                vec![0.0; a.len()]
            } else {
                a.iter().map(|v| v * t / norm).collect()
            }
        }
        let mut rng = crate::synth::rng_from_seed(21);
        use rand::Rng;
        for _ in 0..50 {
            let m = rng.gen_range(1..6);
            let eta = rng.gen::<f64>() * 3.0;
            let row: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
            let a = Array2::from_shape_vec((1, m), row.clone()).unwrap();
            let ours = group_threshold(a.view(), eta);
            let oracle = numeric_prox_row(&row, eta);
            for c in 0..m {
                assert!((ours[[0, c]] - oracle[c]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn lambda0_closed_form() {
        // mu caps at one for n = 100, d = 10
        let v = lambda0(100, 10, 5, 1.0).unwrap();
        assert!((v - 0.1305600006015697).abs() < 1e-12, "lambda0 = {v}");
        assert_eq!(lambda0(100, 10, 5, 0.0).unwrap(), 0.0);
        let tight = lambda0(11, 10, 3, 1.0).unwrap();
        assert!(tight.is_finite() && tight > 0.0);
        assert!(matches!(lambda0(10, 10, 3, 1.0), Err(Error::TooFewRows { .. })));
    }

    #[test]
    fn lambda_star_closed_form() {
        let v = lambda_star(500, 15, 0.05);
        assert!((v - 0.002309401076758503).abs() < 1e-15, "lambda_star = {v}");
        assert_eq!(lambda_star(500, 15, 0.0), 0.0);
        assert_eq!(lambda_star(1, 1, 1.0), 4.0);
    }

    #[test]
    fn clean_data_recovers_exactly() {
        let cfg = SynthConfig::new(60, 4, 0.0, 0.0, 0.0, 31);
        let (data, truth) = generate(&cfg).unwrap();
        let fit = fit_group_lasso(&data, &GroupLassoOptions::new(0.05)).unwrap();
        assert_eq!(fit.xi_hat, Array2::<f64>::zeros((60, 4)));
        assert!(frob((&fit.b_hat - &truth.b_star).view()) < 1e-8);
        assert!(fit.converged);
    }

    #[test]
    fn bcd_satisfies_decomposition_fixed_point() {
        let cfg = SynthConfig::new(80, 5, 0.15, 0.0, 0.1, 32);
        let (data, _) = generate(&cfg).unwrap();
        let lambda = lambda_star(80, 5, 0.1);
        let fit = fit_group_lasso(&data, &GroupLassoOptions::new(lambda)).unwrap();
        let sqrt_n = (data.n() as f64).sqrt();
        let cleaned = &data.y().to_owned() - &(&fit.xi_hat * sqrt_n);
        let b_ls = crate::linalg::least_squares(data.x(), cleaned.view()).unwrap();
        assert!(frob((&fit.b_hat - &b_ls).view()) < 1e-6);
    }

    #[test]
    fn objective_trace_is_monotone() {
        let cfg = SynthConfig::new(100, 6, 0.2, 0.5, 0.3, 33);
        let (data, _) = generate(&cfg).unwrap();
        let lambda = lambda_star(100, 6, 0.3);
        let fit = fit_group_lasso(&data, &GroupLassoOptions::new(lambda)).unwrap();
        for w in fit.objective_trace.windows(2) {
            assert!(w[1] <= w[0], "objective increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn rank_deficient_design_errors() {
        let x = array![[1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [4.0, 4.0]];
        let y = Array2::<f64>::zeros((4, 2));
        let data = RegressionData::new(x, y).unwrap();
        let res = fit_group_lasso(&data, &GroupLassoOptions::new(0.1));
        assert!(matches!(res, Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn mismatch_set_rules() {
        let fit = FitResult {
            b_hat: Array2::<f64>::zeros((1, 1)),
            xi_hat: array![[0.0], [5.0], [1.0], [5.0]],
            s_hat: BTreeSet::new(),
            objective_trace: vec![],
            iterations: 0,
            converged: true,
        };
        let empty = estimate_mismatch_set(&fit, MismatchRule::Threshold(0.5)).unwrap();
        assert_eq!(empty, BTreeSet::from([1, 2, 3]));
        let zero = FitResult {
            xi_hat: Array2::<f64>::zeros((4, 1)),
            ..fit.clone()
        };
        assert!(estimate_mismatch_set(&zero, MismatchRule::Threshold(0.1))
            .unwrap()
            .is_empty());
        assert!(estimate_mismatch_set(&fit, MismatchRule::TopK(0)).unwrap().is_empty());
        // norms (0, 5, 1, 5): the two largest are rows 2 and 4 (1-based)
        let top2 = estimate_mismatch_set(&fit, MismatchRule::TopK(2)).unwrap();
        assert_eq!(top2, BTreeSet::from([1, 3]));
        assert!(estimate_mismatch_set(&fit, MismatchRule::TopK(4)).is_err());
    }

    #[test]
    fn default_threshold_level() {
        assert!((default_mismatch_threshold(8, 0.5) - 2.0).abs() < 1e-15);
        assert_eq!(default_mismatch_threshold(3, 0.0), 0.0);
    }

    #[test]
    fn refit_matches_naive_and_oracle_limits() {
        let mut cfg = SynthConfig::new(50, 3, 0.2, 0.0, 0.0, 34);
        cfg.sigma = 0.0;
        let (data, truth) = generate(&cfg).unwrap();
        let naive = naive_least_squares(&data).unwrap();
        let empty_refit = refit(&data, &BTreeSet::new()).unwrap();
        assert_eq!(naive, empty_refit);
        // excluding the true mismatch set on noiseless data is exact
        let clean = refit(&data, &truth.s_star()).unwrap();
        assert!(frob((&clean - &truth.b_star).view()) < 1e-10);
    }

    #[test]
    fn refit_needs_enough_rows() {
        let cfg = SynthConfig::new(10, 4, 0.0, 0.0, 0.1, 35);
        let (data, _) = generate(&cfg).unwrap();
        let exclude: BTreeSet<usize> = (0..7).collect();
        assert!(matches!(
            refit(&data, &exclude),
            Err(Error::TooFewRows { .. })
        ));
    }

    #[test]
    fn crr_with_zero_budget_is_naive() {
        let cfg = SynthConfig::new(40, 4, 0.0, 0.0, 0.2, 36);
        let (data, _) = generate(&cfg).unwrap();
        let fit = fit_crr(&data, &CrrOptions::new(0)).unwrap();
        assert_eq!(fit.xi_hat, Array2::<f64>::zeros((40, 4)));
        let naive = naive_least_squares(&data).unwrap();
        assert!(frob((&fit.b_hat - &naive).view()) < 1e-12);
    }

    #[test]
    fn crr_trace_is_monotone() {
        let cfg = SynthConfig::new(80, 5, 0.2, 0.0, 0.3, 37);
        let (data, truth) = generate(&cfg).unwrap();
        let fit = fit_crr(&data, &CrrOptions::new(truth.s_star().len())).unwrap();
        for w in fit.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn group_threshold_shrinks_rows(
            rows in proptest::collection::vec(
                proptest::collection::vec(-10.0f64..10.0, 3), 1..8),
            eta in 0.0f64..5.0,
        ) {
            let n = rows.len();
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            let a = Array2::from_shape_vec((n, 3), flat).unwrap();
            let out = group_threshold(a.view(), eta);
            let before = row_norms(a.view());
            let after = row_norms(out.view());
            for i in 0..n {
                prop_assert!(after[i] <= before[i] + 1e-12);
                prop_assert_eq!(after[i] == 0.0, before[i] <= eta);
            }
        }
    }
}
