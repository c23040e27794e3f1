//! Test-only oracles, independent of the crate's own solvers.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use tasksel_core::subset::{enumerate_all_subsets, Subset};
use tasksel_core::synthworld::SyntheticWorld;

/// Least squares by SVD on the raw `rows x cols` system.
pub fn svd_least_squares(rows: usize, cols: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let m = DMatrix::from_row_slice(rows, cols, a);
    let rhs = DVector::from_column_slice(b);
    let svd = m.svd(true, true);
    svd.solve(&rhs, 1e-12).expect("svd solve").iter().copied().collect()
}

/// Surrogate fit routed through the dense 0/1 design and SVD.
pub fn surrogate_by_svd(subsets: &[Subset], k: usize, values: &[f64]) -> Vec<f64> {
    let mut a = vec![0.0; subsets.len() * k];
    for (i, s) in subsets.iter().enumerate() {
        for id in s.ids() {
            a[i * k + id - 1] = 1.0;
        }
    }
    svd_least_squares(subsets.len(), k, &a, values)
}

/// Pooled coefficients from the concatenated rows of `subset ∪ {target}`.
pub fn pooled_by_concatenation(world: &SyntheticWorld, subset: &Subset, rows: usize) -> Vec<f64> {
    let p = world.params().p;
    let mut a = Vec::new();
    let mut b = Vec::new();
    for t in std::iter::once(0).chain(subset.ids()) {
        let task = world.task(t);
        for r in 0..rows {
            a.extend_from_slice(task.x.row(r));
            b.push(task.y[r]);
        }
    }
    svd_least_squares(b.len(), p, &a, &b)
}

/// Validation MSE computed from scratch.
pub fn validation_mse_naive(world: &SyntheticWorld, coef: &[f64]) -> f64 {
    let v = world.validation();
    let mut total = 0.0;
    for r in 0..v.rows() {
        let pred: f64 = v.x.row(r).iter().zip(coef).map(|(x, c)| x * c).sum();
        total += (pred - v.y[r]).powi(2);
    }
    total / v.rows() as f64
}

pub fn f_by_concatenation(world: &SyntheticWorld, subset: &Subset) -> f64 {
    let coef = pooled_by_concatenation(world, subset, world.params().d);
    validation_mse_naive(world, &coef)
}

/// `E[1_S 1_S^T]` by averaging over every `alpha`-subset.
pub fn covariance_by_enumeration(k: usize, alpha: usize) -> Vec<f64> {
    let all = enumerate_all_subsets(k, alpha).unwrap();
    let mut c = vec![0.0; k * k];
    for s in &all {
        for i in s.ids() {
            for j in s.ids() {
                c[(i - 1) * k + j - 1] += 1.0;
            }
        }
    }
    let n = all.len() as f64;
    c.iter().map(|x| x / n).collect()
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}
