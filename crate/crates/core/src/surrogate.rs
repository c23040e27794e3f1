//! Additive surrogate `g(S) = sum_{i in S} theta_i` fitted by least squares
//! to sampled multitask performances.
//!
//! The fit accumulates the `k x k` normal equations `I^T I theta = I^T f`
//! (counts are exact integers, the right-hand side uses compensated sums) and
//! solves them by Cholesky, so the cost in `n` is a single streaming pass.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, CompensatedSum, Matrix};
use crate::metrics;
use crate::subset::{DesignMatrix, PerformanceRecord, Subset};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Optional Tikhonov term added to `I^T I`; `0` keeps the plain least-squares fit.
    pub ridge: f64,
    /// Seed that produced the training subsets, carried as provenance.
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { ridge: 0.0, seed: 0 }
    }
}

/// Fitted relevance scores plus fit metadata. Lower scores mean more helpful tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    theta: Vec<f64>,
    alpha: usize,
    n: usize,
    train_mse: f64,
    seed: u64,
    ridge: f64,
    condition_estimate: f64,
}

impl SurrogateModel {
    /// Reassembles a model from stored fields (used by deserializers).
    pub fn from_parts(
        theta: Vec<f64>,
        alpha: usize,
        n: usize,
        train_mse: f64,
        seed: u64,
        ridge: f64,
        condition_estimate: f64,
    ) -> Result<Self> {
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("theta entries must be finite"));
        }
        if train_mse.is_nan() || train_mse < 0.0 || ridge.is_nan() || ridge < 0.0 {
            return Err(Error::invalid("train_mse and ridge must be non-negative"));
        }
        Ok(Self { theta, alpha, n, train_mse, seed, ridge, condition_estimate })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn k(&self) -> usize {
        self.theta.len()
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn train_mse(&self) -> f64 {
        self.train_mse
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// `(max L_jj / min L_jj)^2` of the Cholesky factor of `I^T I`; a cheap
    /// lower estimate of its condition number.
    pub fn condition_estimate(&self) -> f64 {
        self.condition_estimate
    }

    /// Predicted multitask performance of `subset`.
    pub fn predict(&self, subset: &Subset) -> Result<f64> {
        subset.check_range(self.k())?;
        let mut s = CompensatedSum::default();
        for t in subset.members() {
            s.add(self.theta[t.column()]);
        }
        Ok(s.value())
    }
}

/// Streaming accumulator of `I^T I` and `I^T f`.
///
/// Partial accumulators over disjoint row ranges can be merged in any order;
/// the Gram part is exact and the right-hand side is compensated.
#[derive(Debug, Clone)]
pub struct NormalEquations {
    k: usize,
    gram: Vec<f64>,
    rhs: Vec<CompensatedSum>,
    n: usize,
    alpha: Option<usize>,
}

impl NormalEquations {
    pub fn new(k: usize) -> Self {
        Self { k, gram: vec![0.0; k * k], rhs: vec![CompensatedSum::default(); k], n: 0, alpha: None }
    }

    pub fn add_row(&mut self, columns: &[usize], value: f64) {
        for &a in columns {
            self.rhs[a].add(value);
            for &b in columns {
                self.gram[a * self.k + b] += 1.0;
            }
        }
        self.n += 1;
        self.alpha.get_or_insert(columns.len());
    }

    /// Accumulates rows `range` of `design` with their values.
    pub fn accumulate(&mut self, design: &DesignMatrix, values: &[f64], range: core::ops::Range<usize>) {
        let mut cols = Vec::with_capacity(self.k);
        for i in range {
            cols.clear();
            cols.extend(design.row_columns(i));
            self.add_row(&cols, values[i]);
        }
    }

    pub fn merge(&mut self, other: &NormalEquations) {
        assert_eq!(self.k, other.k, "merging accumulators of different k");
        for (a, b) in self.gram.iter_mut().zip(&other.gram) {
            *a += b;
        }
        for (a, b) in self.rhs.iter_mut().zip(&other.rhs) {
            a.merge(b);
        }
        self.n += other.n;
        if self.alpha.is_none() {
            self.alpha = other.alpha;
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gram(&self) -> Matrix {
        Matrix::from_row_major(self.k, self.k, self.gram.clone()).expect("k x k")
    }

    /// `v = I^T f`.
    pub fn rhs(&self) -> Vec<f64> {
        self.rhs.iter().map(CompensatedSum::value).collect()
    }

    /// Solves `(I^T I + ridge * Id) theta = I^T f`, returning theta and the
    /// condition estimate.
    pub fn solve(&self, ridge: f64) -> Result<(Vec<f64>, f64)> {
        if self.n < self.k {
            log::warn!("n={} sampled subsets is below k={}; the design cannot have full rank", self.n, self.k);
        }
        let mut g = self.gram();
        for i in 0..self.k {
            g[(i, i)] += ridge;
        }
        let chol = Cholesky::factor(&g).map_err(|cols| Error::SingularDesign {
            context: "normal equations",
            columns: cols.into_iter().map(|c| c + 1).collect(),
        })?;
        let theta = chol.solve(&self.rhs());
        Ok((theta, chol_condition(&chol)))
    }
}

fn chol_condition(chol: &Cholesky) -> f64 {
    let d = chol.diagonal();
    let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = d.iter().copied().fold(0.0, f64::max);
    if d.is_empty() {
        1.0
    } else {
        (hi / lo) * (hi / lo)
    }
}

fn check_values(design: &DesignMatrix, values: &[f64]) -> Result<()> {
    if values.len() != design.rows() {
        return Err(Error::invalid(alloc::format!(
            "{} values for a design with {} rows",
            values.len(),
            design.rows()
        )));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(alloc::format!("value {i} is not finite")));
    }
    Ok(())
}

/// Least-squares fit of the surrogate with default options.
pub fn fit(design: &DesignMatrix, values: &[f64]) -> Result<SurrogateModel> {
    fit_with(design, values, &FitOptions::default())
}

pub fn fit_with(design: &DesignMatrix, values: &[f64], opts: &FitOptions) -> Result<SurrogateModel> {
    if design.rows() < 1 {
        return Err(Error::invalid("fit needs at least one sampled subset"));
    }
    check_values(design, values)?;
    let mut ne = NormalEquations::new(design.cols());
    ne.accumulate(design, values, 0..design.rows());
    fit_from_normal_equations(&ne, design, values, opts)
}

/// Finishes a fit from an already accumulated (possibly merged) set of
/// normal equations. `design`/`values` are only used for the training MSE.
pub fn fit_from_normal_equations(
    ne: &NormalEquations,
    design: &DesignMatrix,
    values: &[f64],
    opts: &FitOptions,
) -> Result<SurrogateModel> {
    if !opts.ridge.is_finite() || opts.ridge < 0.0 {
        return Err(Error::invalid("ridge must be finite and non-negative"));
    }
    check_values(design, values)?;
    let (theta, condition_estimate) = ne.solve(opts.ridge)?;
    let mut sq = CompensatedSum::default();
    for i in 0..design.rows() {
        let g: f64 = design.row_columns(i).map(|j| theta[j]).sum();
        let r = g - values[i];
        sq.add(r * r);
    }
    let n = design.rows();
    Ok(SurrogateModel {
        theta,
        alpha: ne.alpha.unwrap_or(0),
        n,
        train_mse: sq.value() / n as f64,
        seed: opts.seed,
        ridge: opts.ridge,
        condition_estimate,
    })
}

/// Free-function form of [`SurrogateModel::predict`].
pub fn predict(model: &SurrogateModel, subset: &Subset) -> Result<f64> {
    model.predict(subset)
}

/// `v = I^T f`: entry `i` sums the performances of every sampled subset containing task `i`.
pub fn task_vector(design: &DesignMatrix, values: &[f64]) -> Result<Vec<f64>> {
    if values.len() != design.rows() {
        return Err(Error::invalid("values length does not match design rows"));
    }
    let mut v = vec![CompensatedSum::default(); design.cols()];
    for (i, f) in values.iter().enumerate() {
        for j in design.row_columns(i) {
            v[j].add(*f);
        }
    }
    Ok(v.iter().map(CompensatedSum::value).collect())
}

/// A `dim x dim` matrix of the form `identity * Id + ones * e e^T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityPlusRankOne {
    pub dim: usize,
    pub identity: f64,
    pub ones: f64,
}

impl IdentityPlusRankOne {
    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_fn(self.dim, self.dim, |i, j| {
            if i == j {
                self.identity + self.ones
            } else {
                self.ones
            }
        })
    }

    /// `identity * v + ones * (sum v) * e`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut total = CompensatedSum::default();
        v.iter().for_each(|x| total.add(*x));
        let shift = self.ones * total.value();
        v.iter().map(|x| self.identity * x + shift).collect()
    }

    /// Sherman-Morrison inverse of `c Id + q e e^T`:
    /// `(1/c) Id - q / (c (c + dim q)) e e^T`.
    pub fn inverse(&self) -> Result<Self> {
        let c = self.identity;
        let denom = c + self.dim as f64 * self.ones;
        if c == 0.0 || denom == 0.0 {
            return Err(Error::SingularMatrix(alloc::format!(
                "identity-plus-rank-one matrix with c={c}, c+dim*q={denom}"
            )));
        }
        Ok(Self { dim: self.dim, identity: 1.0 / c, ones: -self.ones / (c * denom) })
    }
}

fn check_population(k: usize, alpha: usize) -> Result<()> {
    if alpha < 1 || alpha > k {
        return Err(Error::invalid(alloc::format!("alpha={alpha} must lie in 1..={k}")));
    }
    Ok(())
}

/// `E[1_S 1_S^T]` for `S` uniform over size-`alpha` subsets as identity plus rank one.
///
/// Inclusion probability is `alpha/k` and pairwise co-inclusion is
/// `alpha(alpha-1)/(k(k-1))`, so the identity coefficient is their difference
/// `alpha(k-alpha)/(k(k-1))`.
pub fn population_covariance_structure(k: usize, alpha: usize) -> Result<IdentityPlusRankOne> {
    check_population(k, alpha)?;
    let (kf, af) = (k as f64, alpha as f64);
    if k == 1 {
        return Ok(IdentityPlusRankOne { dim: 1, identity: 0.0, ones: 1.0 });
    }
    Ok(IdentityPlusRankOne {
        dim: k,
        identity: af * (kf - af) / (kf * (kf - 1.0)),
        ones: af * (af - 1.0) / (kf * (kf - 1.0)),
    })
}

pub fn population_covariance(k: usize, alpha: usize) -> Result<Matrix> {
    Ok(population_covariance_structure(k, alpha)?.to_matrix())
}

pub fn population_covariance_inverse_structure(k: usize, alpha: usize) -> Result<IdentityPlusRankOne> {
    check_population(k, alpha)?;
    if alpha == k {
        return Err(Error::SingularMatrix(alloc::format!(
            "population covariance is rank one when alpha = k = {k}"
        )));
    }
    population_covariance_structure(k, alpha)?.inverse()
}

pub fn population_covariance_inverse(k: usize, alpha: usize) -> Result<Matrix> {
    Ok(population_covariance_inverse_structure(k, alpha)?.to_matrix())
}

/// Out-of-sample quality of a fitted surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    pub holdout_mse: f64,
    /// `None` when the rank correlation is undefined (fewer than two records or a constant side).
    pub spearman_rho: Option<f64>,
    pub spearman_error: Option<String>,
    pub condition_estimate: f64,
    pub holdout_n: usize,
}

pub fn holdout_diagnostics(model: &SurrogateModel, holdout: &[PerformanceRecord]) -> Result<FitDiagnostics> {
    if holdout.is_empty() {
        return Err(Error::invalid("holdout set is empty"));
    }
    let predicted = holdout.iter().map(|r| model.predict(&r.subset)).collect::<Result<Vec<_>>>()?;
    let actual: Vec<f64> = holdout.iter().map(|r| r.value).collect();
    let series = metrics::PairedSeries::new(predicted, actual)?;
    let holdout_mse = metrics::mse(&series);
    let (spearman_rho, spearman_error) = match metrics::spearman(&series) {
        Ok(rho) => (Some(rho), None),
        Err(e) => (None, Some(alloc::format!("{e}"))),
    };
    Ok(FitDiagnostics {
        holdout_mse,
        spearman_rho,
        spearman_error,
        condition_estimate: model.condition_estimate(),
        holdout_n: holdout.len(),
    })
}
