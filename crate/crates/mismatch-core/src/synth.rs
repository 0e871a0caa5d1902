//! Seeded synthetic benchmark instances.
//!
//! Data follows the model `y_i = B*^T x_{theta*(i)} + sigma * eps_i` with
//! i.i.d. standard Gaussian predictors and noise. The mismatch map shuffles
//! the first k indices uniformly at random and fixes the rest; optional
//! extensions turn a fraction of the shuffled block into missing matches
//! (`theta*(i) = 0`) or one-to-many matches (targets already in use).
//!
//! # Reproducibility
//!
//! All randomness comes from a `ChaCha20` counter-mode stream cipher seeded
//! through `rand`'s `seed_from_u64` (SplitMix64 expansion), with standard
//! normals drawn by the `rand_distr` ziggurat. The draw order is fixed:
//! `X` row-major, then the coefficient construction, then the mismatch map,
//! then the noise matrix row-major, then fresh predictors for missing rows
//! in increasing row order. Per-replication substreams use
//! `seed XOR replication_index`. Identical seeds give bit-identical
//! instances.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{write_match_csv, write_matrix_csv};
use crate::linalg::{frob_sq, row_times_mat, svd};
use crate::model::{GeneralizedMatch, GroundTruth, RegressionData};

/// The pinned generator type; see the module docs for the stream layout.
pub type SynthRng = ChaCha20Rng;

/// Derives the substream seed for one replication.
pub fn replication_seed(base_seed: u64, replication: u64) -> u64 {
    base_seed ^ replication
}

pub fn rng_from_seed(seed: u64) -> SynthRng {
    SynthRng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub d: usize,
    /// Response dimension; the benchmark default is m = d.
    pub m: usize,
    /// Mismatch fraction k/n; the shuffled block has size floor(k_frac * n).
    pub k_frac: f64,
    /// Singular-value decay exponent of the coefficient matrix.
    pub q: f64,
    pub sigma: f64,
    /// Fraction of the shuffled block assigned a missing match.
    #[serde(default)]
    pub missing_frac: f64,
    /// Fraction of the shuffled block re-mapped onto already-used targets.
    #[serde(default)]
    pub many_to_one_frac: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(n: usize, d: usize, k_frac: f64, q: f64, sigma: f64, seed: u64) -> Self {
        SynthConfig {
            n,
            d,
            m: d,
            k_frac,
            q,
            sigma,
            missing_frac: 0.0,
            many_to_one_frac: 0.0,
            seed,
        }
    }

    /// Size of the shuffled block.
    pub fn k(&self) -> usize {
        (self.k_frac * self.n as f64).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 || self.m == 0 {
            return Err(Error::InvalidConfig("n, d, m must be at least 1".into()));
        }
        if self.d < self.m {
            return Err(Error::InvalidConfig(format!(
                "coefficient construction needs d >= m, got d = {}, m = {}",
                self.d, self.m
            )));
        }
        if !(0.0..1.0).contains(&self.k_frac) {
            return Err(Error::InvalidConfig("k_frac must lie in [0, 1)".into()));
        }
        if self.sigma < 0.0 || self.q < 0.0 {
            return Err(Error::InvalidConfig("sigma and q must be nonnegative".into()));
        }
        for (name, v) in [
            ("missing_frac", self.missing_frac),
            ("many_to_one_frac", self.many_to_one_frac),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.missing_frac + self.many_to_one_frac > 1.0 {
            return Err(Error::InvalidConfig(
                "missing_frac + many_to_one_frac must not exceed 1".into(),
            ));
        }
        Ok(())
    }
}

/// Coefficient matrix with prescribed singular-value decay.
///
/// Draws a d-by-m standard Gaussian matrix, replaces its singular values by
/// `j^(-q)`, and rescales so that `||B||_F^2 = m`. The stable rank then
/// ranges from m (q = 0) down towards 1 (q large).
pub fn make_coefficients(d: usize, m: usize, q: f64, rng: &mut SynthRng) -> Result<Array2<f64>> {
    if d < m || m == 0 {
        return Err(Error::InvalidConfig(format!(
            "make_coefficients needs d >= m >= 1, got d = {d}, m = {m}"
        )));
    }
    let g = Array2::from_shape_fn((d, m), |_| rng.sample::<f64, _>(StandardNormal));
    let (u, _, v) = svd(g.view());
    let mut b = Array2::<f64>::zeros((d, m));
    for j in 0..m {
        let s = ((j + 1) as f64).powf(-q);
        for row in 0..d {
            for col in 0..m {
                b[[row, col]] += u[[row, j]] * s * v[[col, j]];
            }
        }
    }
    let scale = (m as f64 / frob_sq(b.view())).sqrt();
    b.map_inplace(|x| *x *= scale);
    Ok(b)
}

/// Mismatch map: a uniformly random shuffle of the first k indices (which
/// may fix some points, so |S*| <= k), identity elsewhere, with optional
/// missing and one-to-many extensions applied inside the shuffled block.
pub fn make_mismatch(
    n: usize,
    k: usize,
    missing_frac: f64,
    many_to_one_frac: f64,
    rng: &mut SynthRng,
) -> Result<GeneralizedMatch> {
    if k > n {
        return Err(Error::InvalidConfig(format!("k = {k} exceeds n = {n}")));
    }
    if missing_frac + many_to_one_frac > 1.0 {
        return Err(Error::InvalidConfig(
            "missing_frac + many_to_one_frac must not exceed 1".into(),
        ));
    }
    let mut theta: Vec<Option<usize>> = (0..n).map(Some).collect();
    if k == 0 {
        return GeneralizedMatch::from_targets(theta);
    }
    let mut perm: Vec<usize> = (0..k).collect();
    perm.shuffle(rng);
    for (i, &j) in perm.iter().enumerate() {
        theta[i] = Some(j);
    }
    let n_missing = (missing_frac * k as f64).floor() as usize;
    let n_many = (many_to_one_frac * k as f64).floor() as usize;
    if n_missing + n_many > 0 {
        let mut pick: Vec<usize> = (0..k).collect();
        pick.shuffle(rng);
        let mut missing: Vec<usize> = pick[..n_missing].to_vec();
        let mut many: Vec<usize> = pick[n_missing..n_missing + n_many].to_vec();
        missing.sort_unstable();
        many.sort_unstable();
        for &i in &missing {
            theta[i] = None;
        }
        if !many.is_empty() {
            let special: BTreeSet<usize> = missing.iter().chain(many.iter()).copied().collect();
            // targets already claimed by rows that keep their match
            let pool: Vec<usize> = (0..n)
                .filter(|i| !special.contains(i))
                .filter_map(|i| theta[i])
                .collect();
            if pool.is_empty() {
                return Err(Error::InvalidConfig(
                    "no matched targets left for one-to-many assignment".into(),
                ));
            }
            for &i in &many {
                theta[i] = Some(pool[rng.gen_range(0..pool.len())]);
            }
        }
    }
    GeneralizedMatch::from_targets(theta)
}

/// Generates one instance. Deterministic given the config (including seed).
pub fn generate(cfg: &SynthConfig) -> Result<(RegressionData, GroundTruth)> {
    cfg.validate()?;
    let mut rng = rng_from_seed(cfg.seed);
    let (n, d, m) = (cfg.n, cfg.d, cfg.m);
    let x = Array2::from_shape_fn((n, d), |_| rng.sample::<f64, _>(StandardNormal));
    let b_star = make_coefficients(d, m, cfg.q, &mut rng)?;
    let theta_star = make_mismatch(
        n,
        cfg.k(),
        cfg.missing_frac,
        cfg.many_to_one_frac,
        &mut rng,
    )?;
    let noise = Array2::from_shape_fn((n, m), |_| rng.sample::<f64, _>(StandardNormal));
    let mut y = Array2::<f64>::zeros((n, m));
    let mut unmatched_x: Vec<(usize, Array1<f64>)> = Vec::new();
    for i in 0..n {
        let fitted = match theta_star.target(i) {
            Some(j) => row_times_mat(x.row(j), b_star.view()),
            None => {
                // fresh predictor, independent of X, so the row keeps the
                // same scale as matched responses
                let xt = Array1::from_shape_fn(d, |_| rng.sample::<f64, _>(StandardNormal));
                let fitted = row_times_mat(xt.view(), b_star.view());
                unmatched_x.push((i, xt));
                fitted
            }
        };
        for c in 0..m {
            y[[i, c]] = fitted[c] + cfg.sigma * noise[[i, c]];
        }
    }
    let data = RegressionData::new(x, y)?;
    let truth = GroundTruth {
        b_star,
        theta_star,
        sigma: cfg.sigma,
        noise,
        unmatched_x,
    };
    Ok((data, truth))
}

/// Reconstructs the response matrix from predictors and ground truth using
/// the same kernels as [`generate`]; the result is bit-identical to the
/// generated `Y`.
pub fn reconstruct_responses(data: &RegressionData, truth: &GroundTruth) -> Array2<f64> {
    let n = data.n();
    let m = truth.noise.ncols();
    let mut y = Array2::<f64>::zeros((n, m));
    let mut fresh = truth.unmatched_x.iter();
    for i in 0..n {
        let fitted = match truth.theta_star.target(i) {
            Some(j) => row_times_mat(data.x().row(j), truth.b_star.view()),
            None => {
                let (row, xt) = fresh.next().expect("missing fresh predictor row");
                debug_assert_eq!(*row, i);
                row_times_mat(xt.view(), truth.b_star.view())
            }
        };
        for c in 0..m {
            y[[i, c]] = fitted[c] + truth.sigma * truth.noise[[i, c]];
        }
    }
    y
}

/// Writes `X.csv`, `Y.csv`, `theta_star.csv`, `B_star.csv`, and `meta.json`
/// into a directory.
pub fn dump<P: AsRef<Path>>(
    dir: P,
    cfg: &SynthConfig,
    data: &RegressionData,
    truth: &GroundTruth,
) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_matrix_csv(dir.join("X.csv"), data.x())?;
    write_matrix_csv(dir.join("Y.csv"), data.y())?;
    write_matrix_csv(dir.join("B_star.csv"), truth.b_star.view())?;
    write_match_csv(dir.join("theta_star.csv"), &truth.theta_star)?;
    let meta = serde_json::json!({
        "config": cfg,
        "seed": cfg.seed,
        "rng": "ChaCha20 via seed_from_u64; substream = seed XOR replication",
        "k": cfg.k(),
    });
    std::fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::InvalidConfig(format!("json: {e}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::spectral_norm;

    #[test]
    fn coefficients_are_normalized_and_flat_spectrum_at_q0() {
        let mut rng = rng_from_seed(1);
        let b = make_coefficients(5, 5, 0.0, &mut rng).unwrap();
        assert!((frob_sq(b.view()) - 5.0).abs() < 1e-10);
        let (_, s, _) = svd(b.view());
        for v in &s {
            assert!((*v - s[0]).abs() < 1e-10, "singular values not equal: {s:?}");
        }
        let srank = frob_sq(b.view()) / (spectral_norm(b.view()).powi(2));
        assert!((srank - 5.0).abs() < 1e-8);
    }

    #[test]
    fn scalar_coefficient_is_plus_minus_one() {
        for seed in 0..8 {
            let mut rng = rng_from_seed(seed);
            let b = make_coefficients(1, 1, 0.0, &mut rng).unwrap();
            assert!((b[[0, 0]].abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn decay_exponent_one_gives_known_stable_rank() {
        // singular values proportional to (1, 1/2, 1/3):
        // srank = (1 + 1/4 + 1/9) / 1 = 49/36
        let mut rng = rng_from_seed(2);
        let b = make_coefficients(3, 3, 1.0, &mut rng).unwrap();
        let srank = frob_sq(b.view()) / spectral_norm(b.view()).powi(2);
        assert!((srank - 49.0 / 36.0).abs() < 1e-8, "srank = {srank}");
    }

    #[test]
    fn mismatch_block_structure() {
        let mut rng = rng_from_seed(3);
        let gm = make_mismatch(1000, 200, 0.0, 0.0, &mut rng).unwrap();
        for i in 200..1000 {
            assert_eq!(gm.target(i), Some(i));
        }
        assert!(gm.is_permutation());
        assert!(gm.support().len() <= 200);
        assert!(gm.support().iter().all(|&i| i < 200));
    }

    #[test]
    fn mismatch_edge_cases() {
        let mut rng = rng_from_seed(4);
        let id = make_mismatch(10, 0, 0.0, 0.0, &mut rng).unwrap();
        assert_eq!(id, GeneralizedMatch::identity(10));

        let all_missing = make_mismatch(6, 6, 1.0, 0.0, &mut rng).unwrap();
        assert_eq!(all_missing.missing_set().len(), 6);

        assert!(make_mismatch(5, 9, 0.0, 0.0, &mut rng).is_err());
    }

    #[test]
    fn one_to_many_targets_are_already_used() {
        let mut rng = rng_from_seed(5);
        let gm = make_mismatch(40, 20, 0.2, 0.3, &mut rng).unwrap();
        assert_eq!(gm.missing_set().len(), 4);
        let mut counts = std::collections::HashMap::new();
        for t in gm.targets().iter().flatten() {
            *counts.entry(*t).or_insert(0usize) += 1;
        }
        let duplicated = counts.values().filter(|&&c| c > 1).count();
        assert!(duplicated >= 1, "expected at least one shared target");
    }

    #[test]
    fn noiseless_identity_data_is_exact() {
        let mut cfg = SynthConfig::new(30, 4, 0.0, 0.0, 0.0, 11);
        cfg.sigma = 0.0;
        let (data, truth) = generate(&cfg).unwrap();
        for i in 0..data.n() {
            let fitted = row_times_mat(data.x().row(i), truth.b_star.view());
            for c in 0..data.m() {
                assert_eq!(data.y()[[i, c]], fitted[c]);
            }
        }
    }

    #[test]
    fn reconstruction_is_bit_identical() {
        let mut cfg = SynthConfig::new(50, 6, 0.3, 0.5, 0.7, 12);
        cfg.missing_frac = 0.4;
        cfg.many_to_one_frac = 0.2;
        let (data, truth) = generate(&cfg).unwrap();
        let y = reconstruct_responses(&data, &truth);
        assert_eq!(data.y(), y.view());
    }

    #[test]
    fn snr_is_deterministic_given_normalization() {
        let cfg = SynthConfig::new(500, 15, 0.2, 0.0, 0.1, 13);
        let (_, truth) = generate(&cfg).unwrap();
        let snr = frob_sq(truth.b_star.view()) / (cfg.sigma * cfg.sigma * cfg.m as f64);
        assert!((snr - 100.0).abs() < 1e-8);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let mut cfg = SynthConfig::new(40, 5, 0.25, 1.0, 0.3, 99);
        cfg.missing_frac = 0.5;
        let (d1, t1) = generate(&cfg).unwrap();
        let (d2, t2) = generate(&cfg).unwrap();
        assert_eq!(d1.x(), d2.x());
        assert_eq!(d1.y(), d2.y());
        assert_eq!(t1.theta_star, t2.theta_star);
        assert_eq!(t1.b_star, t2.b_star);
    }

    #[test]
    fn column_statistics_concentrate() {
        let cfg = SynthConfig::new(20_000, 3, 0.0, 0.0, 0.0, 14);
        let (data, _) = generate(&cfg).unwrap();
        let n = data.n() as f64;
        for col in data.x().columns() {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            assert!(mean.abs() < 6.0 / n.sqrt(), "column mean {mean}");
            assert!((var - 1.0).abs() < 6.0 * (2.0 / n).sqrt(), "column var {var}");
        }
    }
}
