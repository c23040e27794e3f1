//! Thresholding relevance scores into a source-task subset.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::oracle::PerformanceOracle;
use crate::subset::Subset;

/// Default threshold grid: `-0.5, -0.4, ..., 0.5`.
pub fn default_gamma_grid() -> Vec<f64> {
    (-5..=5).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransferLabel {
    Positive,
    Negative,
}

/// Outcome of the thresholding step.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub gamma: f64,
    pub selected: Subset,
    pub scores: Vec<f64>,
    pub stl_baseline: f64,
}

/// `{ i : scores_i < gamma }` (1-based, strict).
pub fn select_tasks(scores: &[f64], gamma: f64) -> Subset {
    let ids = scores.iter().enumerate().filter(|(_, s)| **s < gamma).map(|(i, _)| i + 1);
    Subset::new(ids).expect("indices are distinct and non-zero")
}

/// Best threshold found on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchOutcome {
    pub gamma: f64,
    pub selected: Subset,
    pub best_value: f64,
    /// Each distinct induced subset with the smallest grid gamma producing it
    /// and its evaluated value, in ascending gamma order.
    pub candidates: Vec<(f64, Subset, f64)>,
}

/// Distinct subsets induced by `grid`, each paired with the smallest gamma producing it.
pub fn induced_subsets(scores: &[f64], grid: &[f64]) -> Vec<(f64, Subset)> {
    let mut sorted: Vec<f64> = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out: Vec<(f64, Subset)> = Vec::new();
    for g in sorted {
        let s = select_tasks(scores, g);
        if !out.iter().any(|(_, t)| *t == s) {
            out.push((g, s));
        }
    }
    out
}

/// Evaluates each distinct induced subset once and keeps the lowest value.
///
/// Ties prefer fewer selected tasks, then the smaller gamma.
pub fn grid_search_gamma<O: PerformanceOracle + ?Sized>(
    scores: &[f64],
    oracle: &O,
    grid: &[f64],
) -> Result<GridSearchOutcome> {
    if grid.is_empty() {
        return Err(Error::invalid("gamma grid is empty"));
    }
    if grid.iter().any(|g| g.is_nan()) || scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("scores must be finite and the grid free of NaN"));
    }
    let induced = induced_subsets(scores, grid);
    let subsets: Vec<Subset> = induced.iter().map(|(_, s)| s.clone()).collect();
    let values = oracle.evaluate_many(&subsets);
    let mut candidates = Vec::with_capacity(induced.len());
    for ((g, s), v) in induced.into_iter().zip(values) {
        let v = v.map_err(|e| Error::AtGamma { gamma: g, source: Box::new(e) })?;
        if !v.is_finite() {
            return Err(Error::AtGamma {
                gamma: g,
                source: Box::new(Error::invalid(alloc::format!("non-finite value {v}"))),
            });
        }
        candidates.push((g, s, v));
    }
    let best = candidates
        .iter()
        .min_by(|a, b| {
            a.2.total_cmp(&b.2).then(a.1.alpha().cmp(&b.1.alpha())).then(a.0.total_cmp(&b.0))
        })
        .expect("grid is non-empty");
    let (gamma, selected, best_value) = (best.0, best.1.clone(), best.2);
    Ok(GridSearchOutcome { gamma, selected, best_value, candidates })
}

/// Positive iff `value` is strictly below the single-task baseline.
pub fn classify_transfer(value: f64, stl_baseline: f64) -> Result<TransferLabel> {
    if value.is_nan() || stl_baseline.is_nan() {
        return Err(Error::invalid("transfer classification of NaN"));
    }
    Ok(if value < stl_baseline { TransferLabel::Positive } else { TransferLabel::Negative })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;

    fn s(ids: &[usize]) -> Subset {
        Subset::new(ids.iter().copied()).unwrap()
    }

    #[test]
    fn select_examples() {
        assert_eq!(select_tasks(&[0.1, -0.2, 0.5], 0.0), s(&[2]));
        assert_eq!(select_tasks(&[0.1, -0.2, 0.5], 0.51), Subset::full(3));
        assert_eq!(select_tasks(&[0.1, -0.2, 0.5], -0.2), Subset::empty());
        // equality is excluded
        assert_eq!(select_tasks(&[0.1, 0.2], 0.2), s(&[1]));
    }

    #[test]
    fn default_grid_has_eleven_points() {
        let g = default_gamma_grid();
        assert_eq!(g.len(), 11);
        assert_eq!(g[0], -0.5);
        assert_eq!(g[10], 0.5);
        assert_eq!(g[5], 0.0);
    }

    #[test]
    fn degenerate_grid_returns_empty_subset() {
        let scores = [1.0, 2.0];
        let f = |x: &Subset| -> Result<f64> { Ok(10.0 + x.alpha() as f64) };
        let out = grid_search_gamma(&scores, &f, &default_gamma_grid()).unwrap();
        assert_eq!(out.gamma, -0.5);
        assert_eq!(out.selected, Subset::empty());
        assert_eq!(out.best_value, 10.0);
        assert_eq!(out.candidates.len(), 1);
    }

    #[test]
    fn constant_oracle_prefers_fewest_tasks() {
        let scores = [-0.3, 0.2];
        let f = |_: &Subset| -> Result<f64> { Ok(1.0) };
        let out = grid_search_gamma(&scores, &f, &default_gamma_grid()).unwrap();
        assert_eq!(out.selected, Subset::empty());
        assert_eq!(out.gamma, -0.5);
    }

    #[test]
    fn duplicate_subsets_are_evaluated_once() {
        use core::cell::Cell;
        let calls = Cell::new(0);
        let f = |x: &Subset| -> Result<f64> {
            calls.set(calls.get() + 1);
            Ok(-(x.alpha() as f64))
        };
        let out = grid_search_gamma(&[-0.3, 0.2], &f, &default_gamma_grid()).unwrap();
        // induced: {} at -0.5, {1} at -0.2, {1,2} at 0.3
        assert_eq!(calls.get(), 3);
        assert_eq!(out.selected, s(&[1, 2]));
        assert!((out.gamma - 0.3).abs() < 1e-12);
    }

    #[test]
    fn evaluation_failure_carries_gamma() {
        let f = |x: &Subset| -> Result<f64> {
            if x.is_empty() {
                Ok(1.0)
            } else {
                Err(Error::Evaluation { subset: format!("{x}"), message: "boom".into() })
            }
        };
        match grid_search_gamma(&[-0.3, 0.2], &f, &[-0.5, 0.0]) {
            Err(Error::AtGamma { gamma, .. }) => assert_eq!(gamma, 0.0),
            other => panic!("{other:?}"),
        }
        assert!(grid_search_gamma(&[0.0], &f, &[]).is_err());
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify_transfer(0.5, 0.6).unwrap(), TransferLabel::Positive);
        assert_eq!(classify_transfer(0.6, 0.6).unwrap(), TransferLabel::Negative);
        assert_eq!(classify_transfer(0.7, 0.6).unwrap(), TransferLabel::Negative);
        assert!(classify_transfer(f64::NAN, 0.6).is_err());
    }
}
