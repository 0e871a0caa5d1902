//! Core data model: paired samples, generalized matches, ground truth, and
//! solver outputs.
//!
//! All types are immutable after construction and safe to share across
//! threads.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::row_times_mat;

/// The two samples to be reconciled: predictors `X` (n-by-d) and responses
/// `Y` (n-by-m). Row i of `Y` may or may not correspond to row i of `X`.
#[derive(Debug, Clone)]
pub struct RegressionData {
    x: Array2<f64>,
    y: Array2<f64>,
}

impl RegressionData {
    pub fn new(x: Array2<f64>, y: Array2<f64>) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "X has {} rows, Y has {}",
                x.nrows(),
                y.nrows()
            )));
        }
        if x.nrows() == 0 {
            return Err(Error::InvalidConfig("need at least one row".into()));
        }
        if x.ncols() == 0 || y.ncols() == 0 {
            return Err(Error::InvalidConfig(
                "predictor and response dimensions must be at least 1".into(),
            ));
        }
        Ok(RegressionData { x, y })
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn y(&self) -> ArrayView2<'_, f64> {
        self.y.view()
    }

    /// Number of paired rows n.
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Predictor dimension d.
    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    /// Response dimension m.
    pub fn m(&self) -> usize {
        self.y.ncols()
    }
}

/// A generalized correspondence map from response rows to predictor rows.
///
/// Internally each entry is `Some(j)` (response i matches predictor j,
/// 0-based) or `None` (missing match). Several responses may map to the same
/// predictor (one-to-many), so this strictly generalizes permutations. In
/// file formats the map is a single integer column, 1-based, with 0 reserved
/// for missing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneralizedMatch {
    theta: Vec<Option<usize>>,
}

impl GeneralizedMatch {
    /// The identity correspondence of length n.
    pub fn identity(n: usize) -> Self {
        GeneralizedMatch {
            theta: (0..n).map(Some).collect(),
        }
    }

    /// Builds from 0-based targets, validating that targets are in range.
    pub fn from_targets(theta: Vec<Option<usize>>) -> Result<Self> {
        let n = theta.len();
        for (i, t) in theta.iter().enumerate() {
            if let Some(j) = t {
                if *j >= n {
                    return Err(Error::InvalidConfig(format!(
                        "match target {} of row {} out of range (n = {})",
                        j + 1,
                        i + 1,
                        n
                    )));
                }
            }
        }
        Ok(GeneralizedMatch { theta })
    }

    /// Builds from the 1-based encoding used in files: values in {0, ..., n}
    /// with 0 meaning "missing".
    pub fn from_one_based(values: &[usize]) -> Result<Self> {
        let theta = values
            .iter()
            .map(|&v| if v == 0 { None } else { Some(v - 1) })
            .collect();
        Self::from_targets(theta)
    }

    /// 1-based encoding, 0 for missing.
    pub fn to_one_based(&self) -> Vec<usize> {
        self.theta
            .iter()
            .map(|t| t.map(|j| j + 1).unwrap_or(0))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// 0-based target of row i, `None` if the match is missing.
    pub fn target(&self, i: usize) -> Option<usize> {
        self.theta[i]
    }

    pub fn targets(&self) -> &[Option<usize>] {
        &self.theta
    }

    /// The mismatch support S = {i : theta(i) != i} (includes missing rows).
    pub fn support(&self) -> BTreeSet<usize> {
        self.theta
            .iter()
            .enumerate()
            .filter(|(i, t)| **t != Some(*i))
            .map(|(i, _)| i)
            .collect()
    }

    /// The set of missing matches N = {i : theta(i) = 0}.
    pub fn missing_set(&self) -> BTreeSet<usize> {
        self.theta
            .iter()
            .enumerate()
            .filter(|(_, t)| t.is_none())
            .map(|(i, _)| i)
            .collect()
    }

    /// True when the map is a bijection of {1..n}.
    pub fn is_permutation(&self) -> bool {
        let n = self.theta.len();
        let mut seen = vec![false; n];
        for t in &self.theta {
            match t {
                Some(j) if !seen[*j] => seen[*j] = true,
                _ => return false,
            }
        }
        true
    }

    /// The n-by-n 0/1 matrix form: `M[i, j] = 1` iff row i maps to column j.
    /// Every row sums to at most one; missing matches give all-zero rows.
    pub fn to_matrix(&self) -> Array2<f64> {
        let n = self.theta.len();
        let mut m = Array2::<f64>::zeros((n, n));
        for (i, t) in self.theta.iter().enumerate() {
            if let Some(j) = t {
                m[[i, *j]] = 1.0;
            }
        }
        m
    }

    /// Inverse of [`Self::to_matrix`]; errors if the matrix is not 0/1 with
    /// row sums at most one.
    pub fn from_matrix(m: ArrayView2<'_, f64>) -> Result<Self> {
        let (rows, cols) = m.dim();
        if rows != cols {
            return Err(Error::DimensionMismatch(format!(
                "match matrix must be square, got {rows}x{cols}"
            )));
        }
        let mut theta = Vec::with_capacity(rows);
        for i in 0..rows {
            let mut target = None;
            for j in 0..cols {
                let v = m[[i, j]];
                if v == 1.0 {
                    if target.is_some() {
                        return Err(Error::InvalidConfig(format!(
                            "row {} of match matrix has more than one unit entry",
                            i + 1
                        )));
                    }
                    target = Some(j);
                } else if v != 0.0 {
                    return Err(Error::InvalidConfig(format!(
                        "match matrix entry ({}, {}) is {v}, expected 0 or 1",
                        i + 1,
                        j + 1
                    )));
                }
            }
            theta.push(target);
        }
        Ok(GeneralizedMatch { theta })
    }
}

/// Ground truth of a synthetic instance. Only available for generated data.
///
/// `noise` and `unmatched_x` record the realized noise rows and the fresh
/// predictors used for missing matches, so the response matrix can be
/// reconstructed bit-for-bit from this struct plus `X`.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub b_star: Array2<f64>,
    pub theta_star: GeneralizedMatch,
    pub sigma: f64,
    pub noise: Array2<f64>,
    pub unmatched_x: Vec<(usize, Array1<f64>)>,
}

impl GroundTruth {
    /// The mismatch support S* = {i : theta*(i) != i}.
    pub fn s_star(&self) -> BTreeSet<usize> {
        self.theta_star.support()
    }

    /// The set of missing matches.
    pub fn missing(&self) -> BTreeSet<usize> {
        self.theta_star.missing_set()
    }
}

/// Output of a stage-one fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// Estimated coefficient matrix, d-by-m.
    pub b_hat: Array2<f64>,
    /// Estimated (rescaled) contamination matrix, n-by-m.
    pub xi_hat: Array2<f64>,
    /// Rows with non-zero estimated contamination (0-based).
    pub s_hat: BTreeSet<usize>,
    /// Objective value per iteration; non-increasing for the block
    /// coordinate descent and hard-thresholding solvers.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Output of a stage-two match.
#[derive(Debug, Clone)]
pub struct MatchResult {
    pub theta_hat: GeneralizedMatch,
    /// Threshold in effect; infinity when no threshold applies.
    pub tau: f64,
    /// Euclidean distance between each response row and its matched fitted
    /// predictor row (the row-wise minimum in threshold mode).
    pub row_distance: Vec<f64>,
}

/// The contamination matrix `Phi*` implied by the model: row i equals
/// `y_i - B*^T x_i` for missing matches, `B*^T x_{theta(i)} - B*^T x_i` for
/// mismatches, and zero for correctly matched rows. It has at most |S*|
/// non-zero rows.
pub fn contamination_view(data: &RegressionData, truth: &GroundTruth) -> Result<Array2<f64>> {
    let n = data.n();
    let (d, m) = truth.b_star.dim();
    if truth.theta_star.len() != n || d != data.d() || m != data.m() {
        return Err(Error::DimensionMismatch(
            "ground truth does not match data dimensions".into(),
        ));
    }
    let mut phi = Array2::<f64>::zeros((n, m));
    for i in 0..n {
        match truth.theta_star.target(i) {
            Some(j) if j == i => {}
            Some(j) => {
                let fitted_j = row_times_mat(data.x().row(j), truth.b_star.view());
                let fitted_i = row_times_mat(data.x().row(i), truth.b_star.view());
                for c in 0..m {
                    phi[[i, c]] = fitted_j[c] - fitted_i[c];
                }
            }
            None => {
                let fitted_i = row_times_mat(data.x().row(i), truth.b_star.view());
                for c in 0..m {
                    phi[[i, c]] = data.y()[[i, c]] - fitted_i[c];
                }
            }
        }
    }
    Ok(phi)
}

/// The rescaled contamination `Xi* = Phi* / sqrt(n)` targeted by the
/// group-penalized program.
pub fn contamination_scaled(data: &RegressionData, truth: &GroundTruth) -> Result<Array2<f64>> {
    let mut phi = contamination_view(data, truth)?;
    let scale = (data.n() as f64).sqrt();
    phi.map_inplace(|v| *v /= scale);
    Ok(phi)
}
