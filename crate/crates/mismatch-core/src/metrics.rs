//! Evaluation quantities: separation constants, signal-to-noise ratio,
//! stable rank, Hamming distance, standardized estimation error, relative
//! shuffle-error reduction, and the coefficient of determination.

use std::collections::BTreeSet;

use ndarray::ArrayView2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{frob_sq, spectral_norm};
use crate::model::GeneralizedMatch;

/// Alignment constant for the normalized-SNR axis.
pub const NORMALIZED_SNR_C: f64 = 0.7;

/// Flat record of all evaluation quantities for one estimate. Non-finite
/// entries (missing-match separation with no missing matches, noiseless
/// SNR) serialize to JSON null.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub hamming_frac: f64,
    pub std_err: f64,
    pub r_squared: f64,
    pub rel_reduction: f64,
    pub gamma_sq: f64,
    pub gamma0_sq: f64,
    pub snr: f64,
    pub stable_rank: f64,
    pub normalized_log_snr: f64,
}

/// Minimum squared pairwise separation of the fitted predictor rows,
/// normalized by the squared Frobenius norm of `B`:
/// `min_{i<j} ||B^T (x_i - x_j)||^2 / ||B||_F^2`.
pub fn gamma_sq(x: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<f64> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InvalidConfig("gamma needs at least two rows".into()));
    }
    let b_norm_sq = frob_sq(b);
    if b_norm_sq == 0.0 {
        return Err(Error::InvalidConfig("gamma needs a non-zero B".into()));
    }
    let fitted = x.dot(&b);
    let m = fitted.ncols();
    let mut min_sq = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            let mut acc = 0.0;
            for c in 0..m {
                let r = fitted[[i, c]] - fitted[[j, c]];
                acc += r * r;
            }
            if acc < min_sq {
                min_sq = acc;
            }
        }
    }
    Ok(min_sq / b_norm_sq)
}

/// Minimum squared separation between missing-match responses and all
/// fitted predictor rows, normalized like [`gamma_sq`]. Returns infinity
/// when the missing set is empty, so `min(gamma0_sq, gamma_sq)` reduces to
/// `gamma_sq` in that case.
pub fn gamma0_sq(
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    missing: &BTreeSet<usize>,
) -> Result<f64> {
    if missing.is_empty() {
        return Ok(f64::INFINITY);
    }
    let b_norm_sq = frob_sq(b);
    if b_norm_sq == 0.0 {
        return Err(Error::InvalidConfig("gamma0 needs a non-zero B".into()));
    }
    let fitted = x.dot(&b);
    let (n, m) = fitted.dim();
    let mut min_sq = f64::INFINITY;
    for &i in missing {
        if i >= y.nrows() {
            return Err(Error::InvalidConfig(format!("missing index {i} out of range")));
        }
        for j in 0..n {
            let mut acc = 0.0;
            for c in 0..m {
                let r = y[[i, c]] - fitted[[j, c]];
                acc += r * r;
            }
            if acc < min_sq {
                min_sq = acc;
            }
        }
    }
    Ok(min_sq / b_norm_sq)
}

/// Signal-to-noise ratio `||B||_F^2 / (sigma^2 m)`; zero for `B = 0`,
/// infinite for noiseless non-zero signal.
pub fn snr(b: ArrayView2<'_, f64>, sigma: f64, m: usize) -> f64 {
    let energy = frob_sq(b);
    if energy == 0.0 {
        0.0
    } else if sigma == 0.0 {
        f64::INFINITY
    } else {
        energy / (sigma * sigma * m as f64)
    }
}

/// Stable rank `||B||_F^2 / ||B||_2^2`; NaN for `B = 0`.
pub fn stable_rank(b: ArrayView2<'_, f64>) -> f64 {
    let spec = spectral_norm(b);
    frob_sq(b) / (spec * spec)
}

/// Fraction of rows on which two correspondence maps disagree.
pub fn hamming_frac(theta_hat: &GeneralizedMatch, theta_star: &GeneralizedMatch) -> Result<f64> {
    if theta_hat.len() != theta_star.len() {
        return Err(Error::DimensionMismatch(
            "correspondence maps have different lengths".into(),
        ));
    }
    let n = theta_hat.len();
    let wrong = (0..n)
        .filter(|&i| theta_hat.target(i) != theta_star.target(i))
        .count();
    Ok(wrong as f64 / n as f64)
}

/// Standardized excess estimation error
/// `||B_est - B*||_F / (sigma sqrt(m)) - sqrt(d/n)`; approximately zero in
/// expectation for the oracle estimator. An estimate that recovers the
/// truth to floating-point accuracy (relative to `||B*||_F`) contributes a
/// zero first term even at `sigma = 0`.
pub fn standardized_error(
    b_est: ArrayView2<'_, f64>,
    b_star: ArrayView2<'_, f64>,
    sigma: f64,
    m: usize,
    d: usize,
    n: usize,
) -> f64 {
    let mut diff_sq = 0.0;
    for (a, b) in b_est.iter().zip(b_star.iter()) {
        let r = a - b;
        diff_sq += r * r;
    }
    let diff = diff_sq.sqrt();
    let first = if diff <= 1e-12 * frob_sq(b_star).sqrt().max(1.0) {
        0.0
    } else {
        diff / (sigma * (m as f64).sqrt())
    };
    first - (d as f64 / n as f64).sqrt()
}

/// Relative reduction of shuffle-induced error:
/// `||(Theta_hat - Theta*) Y||_F / ||(I - Theta*) Y||_F`.
/// Zero when the maps agree; one when `Theta_hat` is the identity.
pub fn rel_reduction(
    theta_hat: &GeneralizedMatch,
    theta_star: &GeneralizedMatch,
    y: ArrayView2<'_, f64>,
) -> Result<f64> {
    let n = y.nrows();
    if theta_hat.len() != n || theta_star.len() != n {
        return Err(Error::DimensionMismatch(
            "correspondence maps do not match Y".into(),
        ));
    }
    let m = y.ncols();
    let row = |t: Option<usize>, c: usize| -> f64 { t.map(|j| y[[j, c]]).unwrap_or(0.0) };
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        for c in 0..m {
            let dn = row(theta_hat.target(i), c) - row(theta_star.target(i), c);
            num += dn * dn;
            let dd = y[[i, c]] - row(theta_star.target(i), c);
            den += dd * dd;
        }
    }
    if num == 0.0 {
        Ok(0.0)
    } else if den == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok((num / den).sqrt())
    }
}

/// The normalized-SNR axis `-c / srank * log n - 2 log sigma` along which
/// matching phase transitions align across configurations.
pub fn normalized_log_snr(n: usize, srank: f64, sigma: f64, c: f64) -> f64 {
    -c / srank * (n as f64).ln() - 2.0 * sigma.ln()
}

/// Coefficient of determination with column-centered totals:
/// `1 - ||Y - X B||_F^2 / ||Y - mean(Y)||_F^2`.
pub fn r_squared(
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
) -> Result<f64> {
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch("X and Y row counts differ".into()));
    }
    let fitted = x.dot(&b);
    let (n, m) = y.dim();
    let mut rss = 0.0;
    for i in 0..n {
        for c in 0..m {
            let r = y[[i, c]] - fitted[[i, c]];
            rss += r * r;
        }
    }
    let mut tss = 0.0;
    for c in 0..m {
        let mean = y.column(c).sum() / n as f64;
        for i in 0..n {
            let r = y[[i, c]] - mean;
            tss += r * r;
        }
    }
    Ok(1.0 - rss / tss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::row_times_mat;
    use crate::synth::{generate, make_coefficients, rng_from_seed, SynthConfig};
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    #[test]
    fn gamma_of_duplicate_points_is_zero() {
        let x = array![[1.0, 2.0], [1.0, 2.0], [0.0, 1.0]];
        let b = array![[1.0], [1.0]];
        assert_eq!(gamma_sq(x.view(), b.view()).unwrap(), 0.0);
    }

    #[test]
    fn gamma_of_single_pair() {
        let x = array![[0.0], [3.0]];
        let b = array![[1.0]];
        assert_eq!(gamma_sq(x.view(), b.view()).unwrap(), 9.0);
    }

    #[test]
    fn gamma_matches_independent_scan() {
        let cfg = SynthConfig::new(5, 3, 0.0, 0.5, 0.0, 71);
        let (data, truth) = generate(&cfg).unwrap();
        let ours = gamma_sq(data.x(), truth.b_star.view()).unwrap();
        // re-derive per pair without the precomputed fitted matrix
        let mut best = f64::INFINITY;
        for i in 0..5 {
            for j in (i + 1)..5 {
                let fi = row_times_mat(data.x().row(i), truth.b_star.view());
                let fj = row_times_mat(data.x().row(j), truth.b_star.view());
                let d: f64 = fi.iter().zip(fj.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                best = best.min(d);
            }
        }
        let expected = best / frob_sq(truth.b_star.view());
        assert!((ours - expected).abs() < 1e-12);
    }

    #[test]
    fn gamma0_cases() {
        let x = array![[0.0], [3.0]];
        let b = array![[1.0]];
        let y = array![[5.0], [0.0]];
        // row 1 is missing: distances to fitted rows {0, 3} are {5, 2}
        let missing = BTreeSet::from([0]);
        let v = gamma0_sq(x.view(), y.view(), b.view(), &missing).unwrap();
        assert_eq!(v, 4.0);
        // coincident response gives zero
        let y2 = array![[3.0], [0.0]];
        assert_eq!(gamma0_sq(x.view(), y2.view(), b.view(), &missing).unwrap(), 0.0);
        // empty missing set: infinity sentinel
        assert_eq!(
            gamma0_sq(x.view(), y.view(), b.view(), &BTreeSet::new()).unwrap(),
            f64::INFINITY
        );
    }

    #[test]
    fn gamma0_matches_exhaustive_scan() {
        let mut cfg = SynthConfig::new(6, 2, 0.5, 0.0, 0.4, 72);
        cfg.missing_frac = 0.5;
        let (data, truth) = generate(&cfg).unwrap();
        let missing = truth.missing();
        assert!(!missing.is_empty());
        let ours = gamma0_sq(data.x(), data.y(), truth.b_star.view(), &missing).unwrap();
        let mut best = f64::INFINITY;
        for &i in &missing {
            for j in 0..data.n() {
                let fj = row_times_mat(data.x().row(j), truth.b_star.view());
                let d: f64 = (0..data.m())
                    .map(|c| (data.y()[[i, c]] - fj[c]).powi(2))
                    .sum();
                best = best.min(d);
            }
        }
        assert!((ours - best / frob_sq(truth.b_star.view())).abs() < 1e-12);
    }

    #[test]
    fn snr_cases() {
        let cfg = SynthConfig::new(10, 4, 0.0, 0.0, 0.0, 73);
        let (_, truth) = generate(&cfg).unwrap();
        // ||B||_F^2 = m, so SNR = sigma^{-2}
        let v = snr(truth.b_star.view(), 0.1, 4);
        assert!((v - 100.0).abs() < 1e-8);
        assert_eq!(snr(truth.b_star.view(), f64::INFINITY, 4), 0.0);
        assert_eq!(snr(Array2::<f64>::zeros((3, 3)).view(), 1.0, 3), 0.0);
        assert_eq!(snr(truth.b_star.view(), 0.0, 4), f64::INFINITY);
    }

    #[test]
    fn stable_rank_cases() {
        // orthogonal columns of equal norm: srank = min(d, m)
        let b = array![[2.0, 0.0], [0.0, 2.0], [0.0, 0.0]];
        assert!((stable_rank(b.view()) - 2.0).abs() < 1e-10);
        // rank one
        let r1 = array![[1.0, 2.0], [2.0, 4.0]];
        assert!((stable_rank(r1.view()) - 1.0).abs() < 1e-10);
        // decay exponent one at d = m = 3
        let mut rng = rng_from_seed(74);
        let b = make_coefficients(3, 3, 1.0, &mut rng).unwrap();
        assert!((stable_rank(b.view()) - 49.0 / 36.0).abs() < 1e-8);
    }

    #[test]
    fn hamming_cases() {
        let a = GeneralizedMatch::from_one_based(&[1, 2, 3, 4]).unwrap();
        assert_eq!(hamming_frac(&a, &a).unwrap(), 0.0);
        let b = GeneralizedMatch::from_one_based(&[2, 3, 4, 1]).unwrap();
        assert_eq!(hamming_frac(&a, &b).unwrap(), 1.0);
        let c = GeneralizedMatch::from_one_based(&[1, 2, 3, 1]).unwrap();
        assert_eq!(hamming_frac(&a, &c).unwrap(), 0.25);
    }

    #[test]
    fn standardized_error_cases() {
        let b = array![[1.0, 2.0], [3.0, 4.0]];
        let v = standardized_error(b.view(), b.view(), 0.5, 2, 2, 50);
        assert!((v + (2.0f64 / 50.0).sqrt()).abs() < 1e-14);
        // joint scaling of the difference and sigma leaves the first term fixed
        let b2 = array![[1.1, 2.0], [3.0, 4.0]];
        let e1 = standardized_error(b2.view(), b.view(), 0.5, 2, 2, 50);
        let b3 = array![[1.2, 2.0], [3.0, 4.0]];
        let e2 = standardized_error(b3.view(), b.view(), 1.0, 2, 2, 50);
        assert!((e1 - e2).abs() < 1e-12);
    }

    #[test]
    fn rel_reduction_cases() {
        let cfg = SynthConfig::new(8, 2, 0.5, 0.0, 0.3, 75);
        let (data, truth) = generate(&cfg).unwrap();
        let same = rel_reduction(&truth.theta_star, &truth.theta_star, data.y()).unwrap();
        assert_eq!(same, 0.0);
        let id = GeneralizedMatch::identity(8);
        let ident = rel_reduction(&id, &truth.theta_star, data.y()).unwrap();
        assert!((ident - 1.0).abs() < 1e-12);
        // dense-matrix cross-check
        let hat = GeneralizedMatch::from_one_based(&[2, 1, 3, 4, 5, 6, 7, 8]).unwrap();
        let ours = rel_reduction(&hat, &truth.theta_star, data.y()).unwrap();
        let num = (&hat.to_matrix() - &truth.theta_star.to_matrix()).dot(&data.y());
        let den = (&Array2::<f64>::eye(8) - &truth.theta_star.to_matrix()).dot(&data.y());
        let expected = frob_sq(num.view()).sqrt() / frob_sq(den.view()).sqrt();
        assert!((ours - expected).abs() < 1e-12);
    }

    #[test]
    fn normalized_log_snr_cases() {
        assert_eq!(normalized_log_snr(100, 3.0, 1.0, 0.0), 0.0);
        let base = normalized_log_snr(100, 3.0, 0.2, 0.7);
        let doubled = normalized_log_snr(100, 3.0, 0.4, 0.7);
        assert!((base - doubled - 2.0 * 2.0f64.ln()).abs() < 1e-12);
        let frozen = normalized_log_snr(500, 15.0, 0.05, NORMALIZED_SNR_C);
        assert!((frozen - 5.701449502514946).abs() < 1e-12, "{frozen}");
    }

    #[test]
    fn r_squared_cases() {
        let cfg = SynthConfig::new(20, 3, 0.0, 0.0, 0.0, 76);
        let (data, truth) = generate(&cfg).unwrap();
        let exact = r_squared(data.x(), data.y(), truth.b_star.view()).unwrap();
        assert!((exact - 1.0).abs() < 1e-12);
        // B = 0 on column-centered responses scores zero
        let mut y = data.y().to_owned();
        for c in 0..y.ncols() {
            let mean = y.column(c).sum() / y.nrows() as f64;
            y.column_mut(c).map_inplace(|v| *v -= mean);
        }
        let zero = r_squared(data.x(), y.view(), Array2::<f64>::zeros((3, 3)).view()).unwrap();
        assert!(zero.abs() < 1e-12);
    }

    #[test]
    fn report_serializes_nonfinite_as_null() {
        let report = MetricsReport {
            hamming_frac: 0.0,
            std_err: 0.0,
            r_squared: 1.0,
            rel_reduction: 0.0,
            gamma_sq: 0.1,
            gamma0_sq: f64::INFINITY,
            snr: 100.0,
            stable_rank: 3.0,
            normalized_log_snr: 5.0,
        };
        let json = serde_json::to_value(&report).unwrap();
        assert!(json["gamma0_sq"].is_null());
        assert_eq!(json["stable_rank"], 3.0);
    }

    proptest! {
        #[test]
        fn gamma_is_scale_invariant(scale in 0.1f64..10.0, seed in 0u64..50) {
            let cfg = SynthConfig::new(6, 2, 0.0, 0.3, 0.0, 7000 + seed);
            let (data, truth) = generate(&cfg).unwrap();
            let base = gamma_sq(data.x(), truth.b_star.view()).unwrap();
            let scaled_b = truth.b_star.mapv(|v| v * scale);
            let scaled = gamma_sq(data.x(), scaled_b.view()).unwrap();
            prop_assert!((base - scaled).abs() <= 1e-9 * base.max(1.0));
        }

        #[test]
        fn hamming_lies_in_unit_interval(seed in 0u64..50) {
            let mut cfg = SynthConfig::new(12, 2, 0.5, 0.0, 0.1, 8000 + seed);
            cfg.missing_frac = 0.25;
            let (_, truth) = generate(&cfg).unwrap();
            let id = GeneralizedMatch::identity(12);
            let h = hamming_frac(&id, &truth.theta_star).unwrap();
            prop_assert!((0.0..=1.0).contains(&h));
        }
    }
}
