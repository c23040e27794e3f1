mod common;

use tasksel_core::linalg::Matrix;
use tasksel_core::subset::{sample_holdout, sample_subsets, indicator_matrix, Subset};
use tasksel_core::surrogate::{fit, holdout_diagnostics};
use tasksel_core::synthworld::{
    coefficient_error, evaluate_f, generate_world, pooled_fit, stl_baseline, OffsetLayout, SyntheticWorld,
    TaskData, WorldParams,
};
use tasksel_core::PerformanceRecord;

use common::{f_by_concatenation, median, pooled_by_concatenation};

fn golden_world() -> SyntheticWorld {
    generate_world(&WorldParams { k: 10, p: 5, d: 500, m: 500, sigma: 0.1, seed: 42, ..Default::default() }).unwrap()
}

#[test]
fn pooled_fit_matches_concatenated_least_squares() {
    let w = golden_world();
    for ids in [vec![], vec![1, 2, 3], vec![4, 9], (1..=10).collect()] {
        let s = Subset::new(ids).unwrap();
        let ours = pooled_fit(&w, &s).unwrap();
        let oracle = pooled_by_concatenation(&w, &s, 500);
        for (a, b) in ours.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10, "{s}: {a} vs {b}");
        }
    }
}

#[test]
fn downsampled_fit_matches_prefix_oracle() {
    let w = golden_world();
    let s = Subset::new([2, 5]).unwrap();
    // ceil(0.4 * 500) = 200 rows per task
    let oracle = pooled_by_concatenation(&w, &s, 200);
    let coef = w.evaluator(0.4).unwrap().pooled_fit(&s).unwrap();
    for (a, b) in coef.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-10);
    }
    assert_eq!(w.rows_for(0.4).unwrap(), 200);
    assert_eq!(w.rows_for(0.001).unwrap(), 1);
}

#[test]
fn golden_values_from_concatenation_oracle() {
    let w = golden_world();
    let s = Subset::new([1, 2]).unwrap();
    let f12 = evaluate_f(&w, &s, 1.0).unwrap();
    assert!((f12 - f_by_concatenation(&w, &s)).abs() < 1e-12);
    assert!((f12 - 0.012072648169081514).abs() < 1e-12, "{f12}");
    let stl = stl_baseline(&w).unwrap();
    assert!((stl - 0.01035980852712762).abs() < 1e-12, "{stl}");
    assert_eq!(w.good_mask(), &[true, true, true, false, false, false, true, false, true, false]);
}

#[test]
fn reference_holdout_spearman() {
    // k=25, n=200, 100 unseen holdout subsets; value produced by the SVD route
    let w = generate_world(&WorldParams { k: 25, seed: 7, ..Default::default() }).unwrap();
    let oracle = w.evaluator(1.0).unwrap();
    let train = sample_subsets(25, 5, 200, 7).unwrap();
    let values: Vec<f64> = train.iter().map(|s| oracle.evaluate_f(s).unwrap()).collect();
    let model = fit(&indicator_matrix(&train, 25).unwrap(), &values).unwrap();
    let holdout: Vec<PerformanceRecord> = sample_holdout(25, 5, 100, 7, &train)
        .unwrap()
        .into_iter()
        .map(|s| {
            let v = oracle.evaluate_f(&s).unwrap();
            PerformanceRecord::new(s, v, "synthetic").unwrap()
        })
        .collect();
    let diag = holdout_diagnostics(&model, &holdout).unwrap();
    assert!((diag.spearman_rho.unwrap() - 0.9953795379537954).abs() < 1e-12, "{:?}", diag.spearman_rho);
}

#[test]
fn identical_designs_average_coefficients() {
    let (p, d) = (3, 8);
    let base = generate_world(&WorldParams { k: 1, p, d, m: 4, sigma: 0.0, seed: 1, ..Default::default() }).unwrap();
    let x = base.task(0).x.clone();
    let b0 = vec![1.0, -2.0, 0.5];
    let b1 = vec![3.0, 0.0, -1.5];
    let labels = |b: &[f64]| -> Vec<f64> { (0..d).map(|r| x.row(r).iter().zip(b).map(|(a, c)| a * c).sum()).collect() };
    let params = WorldParams { k: 1, p, d, m: 4, a: 0.0, b: 10.0, sigma: 0.0, ..Default::default() };
    let val = TaskData::new(Matrix::identity(4).matmul(&Matrix::from_fn(4, p, |i, j| (i + j) as f64)), vec![0.0; 4]).unwrap();
    let w = SyntheticWorld::from_parts(
        params,
        vec![b0.clone(), b1.clone()],
        vec![TaskData::new(x.clone(), labels(&b0)).unwrap(), TaskData::new(x.clone(), labels(&b1)).unwrap()],
        val,
        vec![false],
    )
    .unwrap();
    let coef = pooled_fit(&w, &Subset::new([1]).unwrap()).unwrap();
    for i in 0..p {
        assert!((coef[i] - 0.5 * (b0[i] + b1[i])).abs() < 1e-9);
    }
    let alone = pooled_fit(&w, &Subset::empty()).unwrap();
    for i in 0..p {
        assert!((alone[i] - b0[i]).abs() < 1e-9);
    }
}

#[test]
fn noiseless_fidelity() {
    for layout in [OffsetLayout::Collinear, OffsetLayout::Isotropic] {
        let params = WorldParams { k: 6, p: 4, d: 30, m: 40, a: 0.0, sigma: 0.0, frac_good: 0.5, layout, seed: 5, ..Default::default() };
        let w = generate_world(&params).unwrap();
        let good = w.good_tasks();
        assert!(evaluate_f(&w, &good, 1.0).unwrap() < 1e-12);
        for id in good.ids() {
            assert!(evaluate_f(&w, &Subset::new([id]).unwrap(), 1.0).unwrap() < 1e-12);
        }
        for id in (1..=6).filter(|i| !good.contains(*i)) {
            let with_bad = Subset::new(good.ids().chain([id])).unwrap();
            assert!(evaluate_f(&w, &with_bad, 1.0).unwrap() > 1e-6);
        }
    }
}

#[test]
fn bad_tasks_contaminate_more_than_good_ones() {
    for layout in [OffsetLayout::Collinear, OffsetLayout::Isotropic] {
        let (mut good_f, mut bad_f) = (Vec::new(), Vec::new());
        for seed in 0..20 {
            let w = generate_world(&WorldParams { k: 6, a: 0.1, b: 1.0, layout, seed, ..Default::default() }).unwrap();
            let g = w.good_mask().iter().position(|x| *x).unwrap() + 1;
            let b = w.good_mask().iter().position(|x| !*x).unwrap() + 1;
            good_f.push(evaluate_f(&w, &Subset::new([g]).unwrap(), 1.0).unwrap());
            bad_f.push(evaluate_f(&w, &Subset::new([b]).unwrap(), 1.0).unwrap());
        }
        assert!(median(bad_f) > median(good_f));
    }
}

#[test]
fn f_is_a_set_function() {
    let w = golden_world();
    let a = evaluate_f(&w, &Subset::new([3, 1, 7]).unwrap(), 1.0).unwrap();
    let b = evaluate_f(&w, &Subset::new([7, 3, 1]).unwrap(), 1.0).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
}

#[test]
fn full_downsample_is_bit_identical() {
    let w = golden_world();
    let s = Subset::new([2, 4, 6]).unwrap();
    let direct = w.evaluator(1.0).unwrap().evaluate_f(&s).unwrap();
    assert_eq!(evaluate_f(&w, &s, 1.0).unwrap().to_bits(), direct.to_bits());
}

#[test]
fn validation_loss_tracks_coefficient_error() {
    // E[f] = ||B - beta||^2 + sigma^2; the validation average deviates by O(1/sqrt(m))
    let w = generate_world(&WorldParams { k: 8, m: 4000, seed: 3, ..Default::default() }).unwrap();
    let sigma2 = w.params().sigma.powi(2);
    for ids in [vec![], vec![1], vec![2, 3], vec![1, 4, 5, 8]] {
        let s = Subset::new(ids).unwrap();
        let f = evaluate_f(&w, &s, 1.0).unwrap();
        let expected = coefficient_error(&w, &s).unwrap() + sigma2;
        let tol = 6.0 * expected * (2.0 / 4000f64).sqrt();
        assert!((f - expected).abs() < tol, "{s}: f={f} expected={expected}");
    }
}
