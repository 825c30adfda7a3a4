mod oracles;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vocabdiff::data_model::Language;
use vocabdiff::ensemble::{fit_stack, make_folds, oof_predictions, predict_stack, Columns};
use vocabdiff::evaluation::{rmse, statistical_optimum_at, RankedCorpus};
use vocabdiff::features::FeatureRow;
use vocabdiff::gbtree::GbtParams;

#[test]
fn stack_matches_explicit_inverse() {
    let es: Language = "es".parse().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let n = rng.gen_range(6..60);
        let p = rng.gen_range(1..=3);
        let cols: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let y: Vec<f64> = (0..n).map(|i| cols.iter().map(|c| c[i]).sum::<f64>() + rng.gen_range(-1.0..1.0)).collect();
        let named: Columns = cols.iter().enumerate().map(|(j, c)| (format!("c{j}"), c.clone())).collect();
        let model = fit_stack(&named, &y, &es).unwrap();
        let (b0, b) = oracles::linalg::ols(&cols, &y);
        assert!((model.intercept - b0).abs() < 1e-8);
        for (got, want) in model.coefficients.values().zip(&b) {
            assert!((got - want).abs() < 1e-8);
        }
        let fitted = predict_stack(&model, &named).unwrap();
        let resid: Vec<f64> = fitted.iter().zip(&y).map(|(f, t)| t - f).collect();
        for c in &cols {
            let dot: f64 = c.iter().zip(&resid).map(|(a, r)| a * r).sum();
            assert!(dot.abs() < 1e-6);
        }
        let stack_rmse = rmse(&fitted, &y).unwrap();
        for c in &cols {
            assert!(stack_rmse <= rmse(c, &y).unwrap() + 1e-12);
        }
    }
}

#[test]
fn no_leakage_across_folds() {
    let n = 40;
    let rows: Vec<FeatureRow> = (0..n)
        .map(|i| FeatureRow {
            item_id: format!("i{i}"),
            values: [("x".to_string(), Some((i % 7) as f64)), ("z".to_string(), Some(i as f64 / 3.0))]
                .into_iter()
                .collect(),
        })
        .collect();
    let ids: Vec<String> = rows.iter().map(|r| r.item_id.clone()).collect();
    let y: Vec<f64> = (0..n).map(|i| ((i * 37) % 11) as f64 / 5.0).collect();
    let plan = make_folds(&ids, 5, 4).unwrap();
    let params = GbtParams { n_estimators: 20, ..GbtParams::default() };
    let base = oof_predictions(&params, &rows, &y, &plan).unwrap();
    let mut perturbed = y.clone();
    for (i, id) in ids.iter().enumerate() {
        if plan.fold_of(id) == Some(2) {
            perturbed[i] += 10.0;
        }
    }
    let after = oof_predictions(&params, &rows, &perturbed, &plan).unwrap();
    for (i, id) in ids.iter().enumerate() {
        if plan.fold_of(id) == Some(2) {
            assert_eq!(base[i], after[i]);
        } else {
            assert_ne!(base[i], after[i]);
        }
    }
}

#[test]
fn optimum_matches_window_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..30 {
        let n = rng.gen_range(1..=200);
        let items: Vec<(String, f64)> = (0..n)
            .map(|i| (format!("i{i}"), (rng.gen_range(-20..20) as f64) / 4.0))
            .collect();
        let corpus = RankedCorpus::new(&items).unwrap();
        let ids: Vec<String> = items.iter().map(|(id, _)| id.clone()).collect();
        let gold: Vec<f64> = items.iter().map(|(_, s)| *s).collect();
        let mut last = 0.0;
        for w in [0, 1, 3, 10, 50, 300] {
            let sim = statistical_optimum_at(&corpus, &ids, w).unwrap();
            for (id, s) in ids.iter().zip(&sim) {
                let r = corpus.rank_of(id).unwrap() - 1;
                assert_eq!(*s, oracles::optimum_scan(corpus.scores(), r, w));
            }
            let e = rmse(&sim, &gold).unwrap();
            if w == 0 {
                assert_eq!(e, 0.0);
            }
            assert!(e >= last);
            last = e;
        }
    }
}
