//! End-to-end behavior of the two-stage pipeline on seeded benchmark data.

use mismatch_core::estimators::{
    fit_group_lasso, lambda_star, GroupLassoOptions,
};
use mismatch_core::linalg::row_norms;
use mismatch_core::matcher::{two_stage, MatchMode, StageOneEstimator};
use mismatch_core::metrics::hamming_frac;
use mismatch_core::synth::{generate, replication_seed, SynthConfig};

fn mean_hamming(sigma: f64, base_seed: u64, reps: u64) -> f64 {
    let mut sum = 0.0;
    for rep in 0..reps {
        let cfg = SynthConfig::new(500, 15, 0.2, 0.0, sigma, replication_seed(base_seed, rep));
        let (data, truth) = generate(&cfg).unwrap();
        let est = StageOneEstimator::ProposedPlus {
            lasso: GroupLassoOptions::new(lambda_star(500, 15, sigma)),
            k: cfg.k(),
        };
        let (_, matched) = two_stage(&data, &est, &MatchMode::Permutation).unwrap();
        sum += hamming_frac(&matched.theta_hat, &truth.theta_star).unwrap();
    }
    sum / reps as f64
}

#[test]
fn two_stage_recovers_correspondence_at_high_snr() {
    let h = mean_hamming(0.01, 1000, 20);
    assert!(h < 0.01, "mean hamming {h} at sigma = 0.01");
}

#[test]
fn two_stage_fails_at_low_snr() {
    let h = mean_hamming(2.0, 1000, 20);
    assert!(h > 0.5, "mean hamming {h} at sigma = 2");
}

#[test]
fn contamination_row_norms_separate_mismatches() {
    // at sigma = 0.01, n = 500, d = m = 15, k/n = 0.1 the smallest estimated
    // contamination norm on the mismatch set exceeds the largest off it in
    // at least 90% of replications
    let (n, m, sigma) = (500usize, 15usize, 0.01);
    let mut ok = 0;
    for rep in 0..20u64 {
        let cfg = SynthConfig::new(n, 15, 0.1, 0.0, sigma, replication_seed(5000, rep));
        let (data, truth) = generate(&cfg).unwrap();
        let fit =
            fit_group_lasso(&data, &GroupLassoOptions::new(lambda_star(n, m, sigma))).unwrap();
        let norms = row_norms(fit.xi_hat.view());
        let s = truth.s_star();
        let min_in = s.iter().map(|&i| norms[i]).fold(f64::INFINITY, f64::min);
        let max_out = (0..n)
            .filter(|i| !s.contains(i))
            .map(|i| norms[i])
            .fold(0.0f64, f64::max);
        if min_in > max_out {
            ok += 1;
        }
    }
    assert!(ok >= 18, "separation held in only {ok}/20 replications");
}

#[test]
fn generated_data_satisfies_model_identity() {
    // S Y = Theta* X B* + sigma S E to machine precision
    let mut cfg = SynthConfig::new(200, 8, 0.3, 0.5, 0.4, 11_000);
    cfg.missing_frac = 0.3;
    let (data, truth) = generate(&cfg).unwrap();
    let theta = truth.theta_star.to_matrix();
    let rhs_signal = theta.dot(&data.x()).dot(&truth.b_star);
    let mut max_err: f64 = 0.0;
    for i in 0..data.n() {
        let s_i = if truth.theta_star.target(i).is_some() { 1.0 } else { 0.0 };
        for c in 0..data.m() {
            let lhs = s_i * data.y()[[i, c]];
            let rhs = rhs_signal[[i, c]] + truth.sigma * s_i * truth.noise[[i, c]];
            max_err = max_err.max((lhs - rhs).abs());
        }
    }
    assert!(max_err < 1e-12, "model identity violated by {max_err:.3e}");
}

#[test]
fn two_stage_with_threshold_flags_missing_matches() {
    // missing matches produce large nearest-neighbor distances; the default
    // threshold keeps genuine matches and rejects the planted missing rows
    let mut cfg = SynthConfig::new(300, 10, 0.1, 0.0, 0.05, 12_000);
    cfg.missing_frac = 0.5;
    let (data, truth) = generate(&cfg).unwrap();
    let est = StageOneEstimator::ProposedPlus {
        lasso: GroupLassoOptions::new(lambda_star(300, 10, 0.05)),
        k: cfg.k(),
    };
    let tau = mismatch_core::matcher::default_tau(0.05, 10, 300, 0.05);
    let (_, matched) = two_stage(&data, &est, &MatchMode::Threshold { tau }).unwrap();
    let missing_true = truth.missing();
    let missing_hat = matched.theta_hat.missing_set();
    assert_eq!(missing_hat, missing_true);
    // everything else matched correctly
    for i in 0..data.n() {
        if !missing_true.contains(&i) {
            assert_eq!(matched.theta_hat.target(i), truth.theta_star.target(i));
        }
    }
}
