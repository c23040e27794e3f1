use proptest::prelude::*;
use tasksel::format::{
    exhaustive_to_string, model_to_string, parse_exhaustive_table, parse_model, parse_selection, parse_subsets,
    parse_world, selection_to_string, subsets_to_string, world_to_string, SelectionFile,
};
use tasksel_core::oracle::ExhaustiveReport;
use tasksel_core::synthworld::{OffsetLayout, WorldParams};
use tasksel_core::{SelectionResult, Subset, SurrogateModel};

fn subset(k: usize) -> impl Strategy<Value = Subset> {
    prop::collection::btree_set(1..=k, 0..=k).prop_map(|s| Subset::new(s).unwrap())
}

fn finite() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO
}

proptest! {
    #[test]
    fn models_round_trip_bit_exactly(theta in prop::collection::vec(finite(), 1..40), mse in 0.0f64..1e6, seed: u64) {
        let m = SurrogateModel::from_parts(theta.clone(), 3, 77, mse, seed, 0.0, 12.5).unwrap();
        let back = parse_model(&model_to_string(&m)).unwrap();
        prop_assert_eq!(
            back.theta().iter().map(|t| t.to_bits()).collect::<Vec<_>>(),
            theta.iter().map(|t| t.to_bits()).collect::<Vec<_>>()
        );
        prop_assert_eq!(back.train_mse().to_bits(), mse.to_bits());
        prop_assert_eq!((back.alpha(), back.n(), back.seed()), (3, 77, seed));
    }

    #[test]
    fn subsets_round_trip(subsets in prop::collection::vec(subset(30), 0..50)) {
        prop_assert_eq!(parse_subsets(&subsets_to_string(&subsets)).unwrap(), subsets);
    }

    #[test]
    fn world_params_round_trip(k in 1usize..100, a in 0.0f64..1.0, gap in 1e-6f64..5.0, sigma in 0.0f64..2.0, seed: u64, iso: bool) {
        let p = WorldParams {
            k, a, b: a + gap, sigma, seed,
            layout: if iso { OffsetLayout::Isotropic } else { OffsetLayout::Collinear },
            ..Default::default()
        };
        prop_assert_eq!(parse_world(&world_to_string(&p)).unwrap(), p);
    }

    #[test]
    fn selections_round_trip(scores in prop::collection::vec(finite(), 1..20), gamma in -1.0f64..1.0, stl in 0.0f64..10.0, cands in prop::collection::vec((-1.0f64..1.0, subset(19), finite()), 0..6)) {
        let selected = tasksel_core::selection::select_tasks(&scores, gamma);
        let file = SelectionFile { selection: SelectionResult { gamma, selected, scores, stl_baseline: stl }, candidates: cands };
        prop_assert_eq!(parse_selection(&selection_to_string(&file)).unwrap(), file);
    }

    #[test]
    fn exhaustive_tables_round_trip(rows in prop::collection::vec((subset(10), finite()), 1..30)) {
        let report = ExhaustiveReport {
            best_subset: rows[0].0.clone(),
            best_value: rows[0].1,
            table: rows.clone(),
            naive_all_value: 0.0,
            stl_value: 0.0,
        };
        prop_assert_eq!(parse_exhaustive_table(&exhaustive_to_string(&report)).unwrap(), rows);
    }
}

#[test]
fn reject_wrong_headers_and_gaps() {
    assert!(parse_model("#tasksel-surrogate v2\nk\t1\n").is_err());
    assert!(parse_subsets("#tasksel-subsets v1\n1\t1 2\n3\t2\n").is_err());
    let m = SurrogateModel::from_parts(vec![1.0, 2.0], 1, 2, 0.0, 0, 0.0, 1.0).unwrap();
    let truncated: String = model_to_string(&m).lines().filter(|l| !l.starts_with("theta\t2")).map(|l| format!("{l}\n")).collect();
    assert!(parse_model(&truncated).is_err());
}
