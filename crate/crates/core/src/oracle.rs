//! Brute-force ground truth: exhaustive subset search, the population-level
//! surrogate, and direct numerical checks of the score gap structure.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::subset::{binomial, enumerate_all_subsets, DesignMatrix, Subset};
use crate::surrogate::{population_covariance_inverse_structure, task_vector, SurrogateModel};
use crate::synthworld::SyntheticWorld;

/// Anything that can measure the multitask performance `f(S)` (lower is better).
pub trait PerformanceOracle {
    fn evaluate(&self, subset: &Subset) -> Result<f64>;

    /// Batch form; implementations may evaluate concurrently but must return
    /// results in input order.
    fn evaluate_many(&self, subsets: &[Subset]) -> Vec<Result<f64>> {
        subsets.iter().map(|s| self.evaluate(s)).collect()
    }
}

impl<F> PerformanceOracle for F
where
    F: Fn(&Subset) -> Result<f64>,
{
    fn evaluate(&self, subset: &Subset) -> Result<f64> {
        self(subset)
    }
}

/// At most `2^22` evaluated subsets in an exhaustive search.
pub const EXHAUSTIVE_LIMIT: u128 = 1 << 22;
/// At most `2 * 10^5` subsets in a population-level fit.
pub const POPULATION_LIMIT: u128 = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveReport {
    pub best_subset: Subset,
    pub best_value: f64,
    /// Every evaluated subset, in enumeration order (by size, then lexicographic).
    pub table: Vec<(Subset, f64)>,
    pub naive_all_value: f64,
    pub stl_value: f64,
}

/// Subsets covered by [`exhaustive_search`]: every size up to `max_alpha`
/// (all sizes when `None`), plus the full set.
pub fn exhaustive_scope(k: usize, max_alpha: Option<usize>) -> Result<Vec<Subset>> {
    let top = max_alpha.unwrap_or(k).min(k);
    let mut total: u128 = (0..=top).map(|a| binomial(k, a)).fold(0u128, |s, c| s.saturating_add(c));
    if top < k {
        total += 1;
    }
    if total > EXHAUSTIVE_LIMIT {
        return Err(Error::EnumerationGuard { requested: total, limit: EXHAUSTIVE_LIMIT });
    }
    let mut scope = Vec::with_capacity(total as usize);
    for a in 0..=top {
        scope.extend(enumerate_all_subsets(k, a)?);
    }
    if top < k {
        scope.push(Subset::full(k));
    }
    Ok(scope)
}

/// Evaluates every subset in scope once and returns the minimizer; ties go to
/// the earliest subset in enumeration order, so `∅` wins a constant oracle.
pub fn exhaustive_search<O: PerformanceOracle + ?Sized>(
    oracle: &O,
    k: usize,
    max_alpha: Option<usize>,
) -> Result<ExhaustiveReport> {
    let scope = exhaustive_scope(k, max_alpha)?;
    let values = oracle.evaluate_many(&scope);
    let mut table = Vec::with_capacity(scope.len());
    for (s, v) in scope.into_iter().zip(values) {
        let v = v?;
        if !v.is_finite() {
            return Err(Error::Evaluation { subset: alloc::format!("{s}"), message: alloc::format!("non-finite value {v}") });
        }
        table.push((s, v));
    }
    let mut best = 0;
    for (i, (_, v)) in table.iter().enumerate() {
        if *v < table[best].1 {
            best = i;
        }
    }
    let stl_value = table[0].1;
    let naive_all_value = table.last().expect("scope contains the empty set").1;
    Ok(ExhaustiveReport {
        best_subset: table[best].0.clone(),
        best_value: table[best].1,
        table,
        naive_all_value,
        stl_value,
    })
}

/// Least-squares surrogate over the complete enumeration of `alpha`-subsets.
///
/// Uses the closed-form population inverse: with `N = C(k, alpha)` rows the
/// Gram matrix is exactly `N E[1_S 1_S^T]`, so `theta* = E[..]^{-1} v / N`.
/// This route never forms or factorizes a Gram matrix.
pub fn population_theta<O: PerformanceOracle + ?Sized>(oracle: &O, k: usize, alpha: usize) -> Result<Vec<f64>> {
    let count = binomial(k, alpha);
    if count > POPULATION_LIMIT {
        return Err(Error::EnumerationGuard { requested: count, limit: POPULATION_LIMIT });
    }
    let inverse = population_covariance_inverse_structure(k, alpha)?;
    let subsets = enumerate_all_subsets(k, alpha)?;
    let values = oracle.evaluate_many(&subsets).into_iter().collect::<Result<Vec<f64>>>()?;
    let design = crate::subset::indicator_matrix(&subsets, k)?;
    let v = task_vector(&design, &values)?;
    let n = subsets.len() as f64;
    Ok(inverse.apply(&v).into_iter().map(|x| x / n).collect())
}

/// Largest pairwise deviation between fitted score gaps and the gaps implied
/// by the population inverse applied to `v = I^T f`:
///
/// `max_{i<j} | (theta_i - theta_j) - c (v_i - v_j) / n |`
///
/// where `c` is the identity coefficient of the exact population inverse. The
/// rank-one part of that inverse shifts every score equally and cancels in
/// differences, so the residual vanishes when the design is the complete
/// enumeration and otherwise shrinks like `n^{-1/2}`.
pub fn gap_lemma_residual(model: &SurrogateModel, design: &DesignMatrix, values: &[f64]) -> Result<f64> {
    let k = model.k();
    if design.cols() != k || design.rows() != values.len() || design.rows() == 0 {
        return Err(Error::invalid("model, design and values disagree in shape"));
    }
    let inverse = population_covariance_inverse_structure(k, model.alpha())?;
    let v = task_vector(design, values)?;
    let n = design.rows() as f64;
    let theta = model.theta();
    let mut worst = 0.0f64;
    for i in 0..k {
        for j in i + 1..k {
            let r = (theta[i] - theta[j]) - inverse.identity * (v[i] - v[j]) / n;
            worst = worst.max(r.abs());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Separation {
    pub separated: bool,
    /// `min_bad theta - max_good theta`; `+inf` when one group is empty.
    pub margin: f64,
    /// True when the world has no good or no bad tasks.
    pub vacuous: bool,
}

/// Whether every good task scores strictly below every bad one.
pub fn separation_check(world: &SyntheticWorld, model: &SurrogateModel) -> Result<Separation> {
    scores_separation(world.good_mask(), model.theta())
}

pub fn scores_separation(good_mask: &[bool], theta: &[f64]) -> Result<Separation> {
    if good_mask.len() != theta.len() {
        return Err(Error::invalid("model and world disagree on k"));
    }
    let mut max_good = f64::NEG_INFINITY;
    let mut min_bad = f64::INFINITY;
    for (g, t) in good_mask.iter().zip(theta) {
        if *g {
            max_good = max_good.max(*t);
        } else {
            min_bad = min_bad.min(*t);
        }
    }
    if max_good == f64::NEG_INFINITY || min_bad == f64::INFINITY {
        return Ok(Separation { separated: true, margin: f64::INFINITY, vacuous: true });
    }
    let margin = min_bad - max_good;
    Ok(Separation { separated: margin > 0.0, margin, vacuous: false })
}
