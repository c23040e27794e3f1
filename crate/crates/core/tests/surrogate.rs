mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tasksel_core::linalg::{symmetric_spectral_norm, Matrix};
use tasksel_core::subset::{enumerate_all_subsets, indicator_matrix, sample_subsets, Subset};
use tasksel_core::surrogate::{
    fit, fit_from_normal_equations, population_covariance, population_covariance_inverse,
    population_covariance_inverse_structure, task_vector, FitOptions, NormalEquations,
};

use common::{covariance_by_enumeration, median, surrogate_by_svd};

fn random_weights(k: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k).map(|_| rng.random_range(-2.0..2.0)).collect()
}

fn linear_values(subsets: &[Subset], w: &[f64]) -> Vec<f64> {
    subsets.iter().map(|s| s.ids().map(|i| w[i - 1]).sum()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn linear_set_functions_are_recovered(k in 2usize..=64, frac in 0.0f64..0.5, seed: u64) {
        let alpha = 1 + ((k - 1) as f64 * frac) as usize;
        let alpha = alpha.min(k - 1);
        let subsets = sample_subsets(k, alpha, 3 * k + 40, seed).unwrap();
        let design = indicator_matrix(&subsets, k).unwrap();
        let w = random_weights(k, seed ^ 0xabc);
        match fit(&design, &linear_values(&subsets, &w)) {
            Ok(m) => {
                for (t, w) in m.theta().iter().zip(&w) {
                    prop_assert!((t - w).abs() <= 1e-8, "{} vs {}", t, w);
                }
            }
            // a random draw can leave a column empty for tiny n/k ratios;
            // the error must then name a real column
            Err(tasksel_core::Error::SingularDesign { columns, .. }) => {
                prop_assert!(columns.iter().all(|c| (1..=k).contains(c)));
                prop_assert!(design.column_sums().contains(&0));
            }
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn residuals_are_orthogonal_to_the_design(k in 3usize..20, seed: u64) {
        let alpha = (k / 3).max(1);
        let subsets = sample_subsets(k, alpha, 6 * k, seed).unwrap();
        let design = indicator_matrix(&subsets, k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..subsets.len()).map(|_| rng.random_range(0.0..3.0)).collect();
        if let Ok(m) = fit(&design, &values) {
            let resid: Vec<f64> = subsets
                .iter()
                .zip(&values)
                .map(|(s, f)| m.predict(s).unwrap() - f)
                .collect();
            let orth = task_vector(&design, &resid).unwrap();
            let scale = task_vector(&design, &values).unwrap().iter().fold(1.0f64, |a, b| a.max(b.abs()));
            for o in orth {
                prop_assert!(o.abs() <= 1e-8 * scale);
            }
        }
    }

    #[test]
    fn relabeling_tasks_permutes_scores(k in 3usize..15, seed: u64) {
        let alpha = 2.min(k - 1);
        let subsets = sample_subsets(k, alpha, 8 * k, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..subsets.len()).map(|_| rng.random_range(0.0..1.0)).collect();
        // pi(i) = k + 1 - i
        let permuted: Vec<Subset> = subsets
            .iter()
            .map(|s| Subset::new(s.ids().map(|i| k + 1 - i)).unwrap())
            .collect();
        let a = fit(&indicator_matrix(&subsets, k).unwrap(), &values);
        let b = fit(&indicator_matrix(&permuted, k).unwrap(), &values);
        if let (Ok(a), Ok(b)) = (a, b) {
            for i in 0..k {
                prop_assert!((a.theta()[i] - b.theta()[k - 1 - i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn merge_order_does_not_change_the_fit(k in 3usize..12, chunks in 1usize..7, seed: u64) {
        let subsets = sample_subsets(k, 2, 10 * k, seed).unwrap();
        let design = indicator_matrix(&subsets, k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..subsets.len()).map(|_| rng.random_range(-1e3..1e3)).collect();
        let n = subsets.len();
        let step = n.div_ceil(chunks);
        let parts: Vec<NormalEquations> = (0..n)
            .step_by(step)
            .map(|start| {
                let mut ne = NormalEquations::new(k);
                ne.accumulate(&design, &values, start..(start + step).min(n));
                ne
            })
            .collect();
        let mut forward = NormalEquations::new(k);
        parts.iter().for_each(|p| forward.merge(p));
        let mut backward = NormalEquations::new(k);
        parts.iter().rev().for_each(|p| backward.merge(p));
        let opts = FitOptions::default();
        let a = fit_from_normal_equations(&forward, &design, &values, &opts);
        let b = fit_from_normal_equations(&backward, &design, &values, &opts);
        if let (Ok(a), Ok(b)) = (a, b) {
            for (x, y) in a.theta().iter().zip(b.theta()) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }
    }
}

#[test]
fn fit_agrees_with_svd_least_squares() {
    for seed in 0..5u64 {
        let k = 12;
        let subsets = sample_subsets(k, 4, 90, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..subsets.len()).map(|_| rng.random_range(0.0..2.0)).collect();
        let ours = fit(&indicator_matrix(&subsets, k).unwrap(), &values).unwrap();
        let oracle = surrogate_by_svd(&subsets, k, &values);
        for (a, b) in ours.theta().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }
}

#[test]
fn covariance_matches_enumeration_for_small_k() {
    for k in 1..=12 {
        for alpha in 1..=k {
            let exact = population_covariance(k, alpha).unwrap();
            let brute = covariance_by_enumeration(k, alpha);
            for (a, b) in exact.as_slice().iter().zip(&brute) {
                assert!((a - b).abs() <= 1e-12, "k={k} alpha={alpha}: {a} vs {b}");
            }
            if alpha < k {
                let inv = population_covariance_inverse(k, alpha).unwrap();
                let prod = exact.matmul(&inv);
                let err = prod.sub(&Matrix::identity(k)).max_abs();
                assert!(err <= 1e-10, "k={k} alpha={alpha}: {err}");
            }
        }
    }
}

#[test]
fn inverse_three_choose_two_against_enumeration() {
    let brute = Matrix::from_row_major(3, 3, covariance_by_enumeration(3, 2)).unwrap();
    // 3 Id - (3/4) e e^T
    let claimed = Matrix::from_fn(3, 3, |i, j| if i == j { 3.0 - 0.75 } else { -0.75 });
    assert!(brute.matmul(&claimed).sub(&Matrix::identity(3)).max_abs() < 1e-12);
    assert!(population_covariance_inverse(3, 2).unwrap().sub(&claimed).max_abs() < 1e-12);
}

#[test]
fn inverse_applied_to_v_is_a_scaling_plus_shared_shift() {
    let (k, alpha) = (9, 4);
    let inv = population_covariance_inverse_structure(k, alpha).unwrap();
    let dense = population_covariance_inverse(k, alpha).unwrap();
    let v = random_weights(k, 77);
    let total: f64 = v.iter().sum();
    let by_matrix = dense.matvec(&v);
    for (i, x) in by_matrix.iter().enumerate() {
        let structured = inv.identity * v[i] + inv.ones * total;
        assert!((x - structured).abs() < 1e-12);
    }
    // the shift is common to all coordinates: differences only see the scaling
    for i in 1..k {
        let d = (by_matrix[i] - by_matrix[0]) - inv.identity * (v[i] - v[0]);
        assert!(d.abs() < 1e-12);
    }
}

#[test]
fn complete_enumeration_design_equals_population_covariance() {
    let (k, alpha) = (7, 3);
    let all = enumerate_all_subsets(k, alpha).unwrap();
    let design = indicator_matrix(&all, k).unwrap();
    let mut ne = NormalEquations::new(k);
    ne.accumulate(&design, &vec![0.0; all.len()], 0..all.len());
    let emp = ne.gram().scale(1.0 / all.len() as f64);
    assert!(emp.sub(&population_covariance(k, alpha).unwrap()).max_abs() < 1e-15);
}

#[test]
fn empirical_covariance_error_shrinks_at_root_n() {
    let (k, alpha) = (10, 3);
    let exact = population_covariance(k, alpha).unwrap();
    let err = |n: usize, seed: u64| {
        let subsets = sample_subsets(k, alpha, n, seed).unwrap();
        let mut ne = NormalEquations::new(k);
        ne.accumulate(&indicator_matrix(&subsets, k).unwrap(), &vec![0.0; n], 0..n);
        symmetric_spectral_norm(&ne.gram().scale(1.0 / n as f64).sub(&exact))
    };
    let small = median((0..20).map(|s| err(1_000, s)).collect());
    let large = median((0..20).map(|s| err(4_000, 100 + s)).collect());
    assert!(large <= 0.5 * small * 1.5, "{small} -> {large}");
    assert!(large < small);
}
