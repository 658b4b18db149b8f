mod common;

use foodsignal::features::AggregateColumns;
use foodsignal::modeling::{cross_validate, grouped_folds, ridge_fit, CvOptions, DesignMatrix, ModelKind, ModelSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn problem(seed: u64, n: usize, p: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|j| rng.random_range(-1.0..1.0) * (j + 1) as f64 + j as f64).collect()).collect();
    let y = rows.iter().map(|r| r.iter().zip(&beta).map(|(x, b)| x * b).sum::<f64>() + rng.random_range(-1.0..1.0)).collect();
    (rows, y)
}

fn design(rows: &[Vec<f64>], y: &[f64], columns: &[&str]) -> DesignMatrix {
    let n = rows.len();
    DesignMatrix::from_rows(
        (0..n).map(|i| format!("r{i:04}")).collect(),
        columns.iter().map(|c| c.to_string()).collect(),
        rows,
        (0..n).map(|i| format!("s{:02}", i % 12)).collect(),
        y.to_vec(),
    )
    .unwrap()
}

const COLS: [&str; 5] = ["a", "b", "c", "d", "e"];

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|b| b * b).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn closed_form_matches_gradient_descent(seed in any::<u64>(), lambda in prop::sample::select(vec![0.01, 0.1, 1.0, 10.0, 100.0])) {
        let (rows, y) = problem(seed, 50, 5);
        let model = ridge_fit(&design(&rows, &y, &COLS), lambda).unwrap();
        let oracle = common::gd_ridge(&rows, &y, lambda);
        for (a, b) in model.standardized.iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-6, "{} vs {}", a, b);
        }
    }

    #[test]
    fn predictions_survive_affine_rescaling(seed in any::<u64>(), col in 0usize..5, a in 0.01f64..100.0, b in -1e3f64..1e3) {
        let (rows, y) = problem(seed, 40, 5);
        let base = ridge_fit(&design(&rows, &y, &COLS), 1.0).unwrap();
        let scaled_rows: Vec<Vec<f64>> = rows.iter().map(|r| {
            let mut r = r.clone();
            r[col] = a * r[col] + b;
            r
        }).collect();
        let scaled = ridge_fit(&design(&scaled_rows, &y, &COLS), 1.0).unwrap();
        for (r, s) in rows.iter().zip(&scaled_rows) {
            prop_assert!((base.predict_row(r) - scaled.predict_row(s)).abs() < 1e-9);
        }
    }

    #[test]
    fn penalty_shrinks_the_standardized_norm(seed in any::<u64>()) {
        let (rows, y) = problem(seed, 50, 5);
        let d = design(&rows, &y, &COLS);
        let norms: Vec<f64> = [0.01, 0.1, 1.0, 10.0, 100.0].iter().map(|&l| norm(&ridge_fit(&d, l).unwrap().standardized)).collect();
        prop_assert!(norms.windows(2).all(|w| w[0] >= w[1]), "{:?}", norms);
    }

    #[test]
    fn folds_partition_by_group(groups in prop::collection::vec(0u8..30, 10..200), k in 2usize..6, seed in any::<u64>()) {
        let labels: Vec<String> = groups.iter().map(|g| format!("{g:02}")).collect();
        let distinct = labels.iter().collect::<std::collections::BTreeSet<_>>().len();
        prop_assume!(distinct >= k);
        let folds = grouped_folds(&labels, k, seed).unwrap();
        prop_assert_eq!(folds.len(), labels.len());
        let mut fold_of = std::collections::BTreeMap::new();
        for (l, f) in labels.iter().zip(&folds) {
            prop_assert!(*f < k);
            prop_assert_eq!(*fold_of.entry(l).or_insert(*f), *f);
        }
    }
}

#[test]
fn cross_validation_ignores_row_order() {
    let (rows, y) = problem(3, 60, 5);
    let cols = AggregateColumns { foods: COLS.iter().map(|c| c.to_string()).collect(), ..Default::default() };
    let food_cols: Vec<String> = COLS.iter().map(|c| format!("food:{c}")).collect();
    let names: Vec<&str> = food_cols.iter().map(String::as_str).collect();
    let d = design(&rows, &y, &names);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.reverse();
    let shuffled = d.select_rows(&order);
    let opts = CvOptions { k: 4, seed: 8, ..Default::default() };
    let spec = ModelSpec::new(ModelKind::Food);
    let a = cross_validate(&spec, &d, &cols, "obesity", &opts).unwrap();
    let b = cross_validate(&spec, &shuffled, &cols, "obesity", &opts).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.fold_r.len(), 4);
    assert!((a.mean_r - a.fold_r.iter().sum::<f64>() / 4.0).abs() < 1e-15);
}

#[test]
fn wide_designs_use_the_dual_and_agree() {
    // More columns than rows takes the dual path; its predictions on the
    // training rows must equal a primal fit of the same problem.
    let (rows, y) = problem(21, 8, 5);
    let wide: Vec<Vec<f64>> = rows.iter().enumerate().map(|(i, r)| {
        let mut r = r.clone();
        r.extend((0..6).map(|j| ((i * 7 + j * 3) % 5) as f64 + j as f64 * 0.1 * i as f64));
        r
    }).collect();
    let names: Vec<String> = (0..11).map(|j| format!("c{j}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let m = ridge_fit(&design(&wide, &y, &refs), 2.0).unwrap();
    let oracle = common::gd_ridge(&wide, &y, 2.0);
    for (a, b) in m.standardized.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}
