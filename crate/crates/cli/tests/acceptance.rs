//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Criterion 7 also checks reference optimum values when the complete item
//! table is supplied through `VOCABDIFF_KVL_ITEMS` (canonical item TSV) and
//! `VOCABDIFF_KVL_EVAL` (TSV whose first column lists the evaluated ids).

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vocabdiff::data_model::{make_clue, parse_items, Language, TestItem};
use vocabdiff::ensemble::{fit_stack, predict_stack, Columns};
use vocabdiff::evaluation::{rmse, statistical_optimum, statistical_optimum_at, CiWidths, RankedCorpus};
use vocabdiff::features::{l1_similarity, levenshtein};
use vocabdiff::gbtree::{explain_dense, fit_dense, Branch, Explanation, GbtParams, ShapFlavor, Tree, TreeNode, GAIN_TIE_TOLERANCE, MIN_SPLIT_GAIN};
use vocabdiff::prompting::{render, Bindings, TemplateId};
use vocabdiff::soft_target::{
    build_soft_target, prob_weighted_mean, soft_ce_grad_logits, soft_cross_entropy_logits, ScaleTokens, TokenDistribution,
};
use vocabdiff::toy_rater::{rmse_on, synthetic_benchmark, train, InferenceMode, LossMode, TrainConfig};

use oracles::{edit_distance, greedy, numeric_gradient, optimum_scan, shapley};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn soft_target_identity() -> Outcome {
    let scale = ScaleTokens::one_to_five();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let y: f64 = rng.gen_range(1.0..=5.0);
        let t = build_soft_target(y, &scale).map_err(|e| e.to_string())?;
        let dist = TokenDistribution::new(t.to_dense(scale.vocab_size())).map_err(|e| e.to_string())?;
        let back = prob_weighted_mean(&dist, &scale).map_err(|e| e.to_string())?;
        worst = worst.max((back - y).abs());
    }
    ensure(worst <= 1e-12, || format!("max error {worst:e}"))?;
    Ok(format!("max error {worst:e}"))
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.gen_range(2..=7);
        let extra = rng.gen_range(0..=4);
        let scale = ScaleTokens::contiguous(1, k, extra).map_err(|e| e.to_string())?;
        let y = rng.gen_range(1.0..=k as f64);
        let target = build_soft_target(y, &scale).map_err(|e| e.to_string())?;
        let logits: Vec<f64> = (0..scale.vocab_size()).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let analytic = soft_ce_grad_logits(&target, &logits);
        let numeric = numeric_gradient(|z| soft_cross_entropy_logits(&target, z), &logits, 1e-5);
        let diff = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let norm_a = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        let norm_n = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
        let rel = diff / norm_a.max(norm_n).max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
    }
    ensure(worst < 1e-5, || format!("max relative error {worst:e}"))?;
    Ok(format!("max relative error {worst:e}"))
}

fn ablation_direction() -> Outcome {
    let train_set = synthetic_benchmark(512, 100);
    let eval_set = synthetic_benchmark(512, 101);
    let run = |loss_mode, inference_mode| -> Result<f64, String> {
        let cfg = TrainConfig {
            seed: 7,
            loss_mode,
            inference_mode,
            ..TrainConfig::default()
        };
        let model = train(&train_set, 5, 3, &cfg).map_err(|e| e.to_string())?;
        rmse_on(&model, &eval_set, inference_mode).map_err(|e| e.to_string())
    };
    let soft = run(LossMode::Soft, InferenceMode::Weighted)?;
    let hard_weighted = run(LossMode::Hard, InferenceMode::Weighted)?;
    let hard_argmax = run(LossMode::Hard, InferenceMode::Argmax)?;
    let summary = format!("soft+weighted {soft:.4}, hard+weighted {hard_weighted:.4}, hard+argmax {hard_argmax:.4}");
    ensure(hard_weighted - soft > 0.01 && hard_argmax - hard_weighted > 0.01, || summary.clone())?;
    Ok(summary)
}

fn random_data(rng: &mut ChaCha8Rng, n: usize, p: usize, missing: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..p)
                .map(|_| {
                    if rng.gen_bool(missing) {
                        f64::NAN
                    } else {
                        rng.gen_range(0..8) as f64 * 0.5
                    }
                })
                .collect()
        })
        .collect();
    let y = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    (x, y)
}

fn names(p: usize) -> Vec<String> {
    (0..p).map(|i| format!("f{i}")).collect()
}

fn shap_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_phi: f64 = 0.0;
    let mut worst_add: f64 = 0.0;
    let mut checked = 0;
    for _ in 0..100 {
        let p = rng.gen_range(1..=8);
        let (x, y) = random_data(&mut rng, 60, p, 0.1);
        let params = GbtParams {
            max_depth: rng.gen_range(1..=4),
            n_estimators: rng.gen_range(1..=20),
            learning_rate: 0.3,
            ..GbtParams::default()
        };
        let model = fit_dense(names(p), &x, &y, &params).map_err(|e| e.to_string())?;
        let background = &x[..10];
        for row in &x[50..] {
            let cases: [(Explanation, (f64, Vec<f64>)); 2] = [
                (
                    explain_dense(&model, "r", row, background, ShapFlavor::Interventional),
                    shapley::interventional(&model, row, background),
                ),
                (
                    explain_dense(&model, "r", row, &[], ShapFlavor::TreePathDependent),
                    shapley::path_dependent(&model, row),
                ),
            ];
            for (e, (base, phi)) in cases {
                worst_phi = worst_phi.max((e.base_value - base).abs());
                for (a, b) in e.phis.values().zip(&phi) {
                    worst_phi = worst_phi.max((a - b).abs());
                }
                worst_add = worst_add.max(e.additivity_error());
                worst_add = worst_add.max((e.prediction - shapley::eval_model(&model, row)).abs());
                checked += 1;
            }
        }
    }
    let summary = format!("{checked} explanations, max phi error {worst_phi:e}, max additivity error {worst_add:e}");
    ensure(worst_phi <= 1e-6 && worst_add <= 1e-9, || summary.clone())?;
    Ok(summary)
}

fn preorder(tree: &Tree) -> Vec<(usize, f64, bool)> {
    fn go(t: &Tree, n: usize, out: &mut Vec<(usize, f64, bool)>) {
        if let TreeNode::Split {
            feature,
            threshold,
            default_branch,
            left,
            right,
            ..
        } = &t.nodes[n]
        {
            out.push((*feature, *threshold, *default_branch == Branch::Left));
            go(t, *left, out);
            go(t, *right, out);
        }
    }
    let mut out = Vec::new();
    go(tree, 0, &mut out);
    out
}

fn gbt_oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..50 {
        let n = rng.gen_range(2..=16);
        let p = rng.gen_range(1..=4);
        let (x, y) = random_data(&mut rng, n, p, if case % 3 == 0 { 0.2 } else { 0.0 });
        let params = GbtParams {
            max_depth: 1 + case % 2,
            learning_rate: 0.5,
            n_estimators: 3,
            ..GbtParams::default()
        };
        let model = fit_dense(names(p), &x, &y, &params).map_err(|e| e.to_string())?;
        let oracle = greedy::boost(
            &x,
            &y,
            params.n_estimators,
            params.learning_rate,
            &greedy::Params {
                max_depth: params.max_depth,
                lambda: params.lambda,
                min_child_weight: params.min_child_weight,
                min_gain: MIN_SPLIT_GAIN,
                tie_tolerance: GAIN_TIE_TOLERANCE,
            },
        );
        for (t, o) in model.trees.iter().zip(&oracle.trees) {
            let mut want = Vec::new();
            o.splits(&mut want);
            ensure(preorder(t) == want, || format!("instance {case}: splits differ"))?;
        }
        for row in &x {
            let (a, b) = (model.predict_dense(row), oracle.predict(row));
            ensure((a - b).abs() < 1e-12, || format!("instance {case}: prediction {a} vs {b}"))?;
        }
    }
    Ok("50 instances".into())
}

fn stacking_optimality() -> Outcome {
    let es = Language::new("es").map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_coef: f64 = 0.0;
    for case in 0..100 {
        let n = rng.gen_range(8..80);
        let p = rng.gen_range(1..=4);
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let cols: Vec<Vec<f64>> = (0..p)
            .map(|_| y.iter().map(|t| t * rng.gen_range(0.3..1.2) + rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let named: Columns = cols.iter().enumerate().map(|(j, c)| (format!("m{j}"), c.clone())).collect();
        let model = fit_stack(&named, &y, &es).map_err(|e| e.to_string())?;
        let fitted = predict_stack(&model, &named).map_err(|e| e.to_string())?;
        let stack_rmse = rmse(&fitted, &y).map_err(|e| e.to_string())?;
        let best_single = cols.iter().map(|c| rmse(c, &y).unwrap()).fold(f64::INFINITY, f64::min);
        ensure(stack_rmse <= best_single, || {
            format!("instance {case}: stack {stack_rmse} above best input {best_single}")
        })?;
        let (b0, b) = oracles::linalg::ols(&cols, &y);
        worst_coef = worst_coef.max((model.intercept - b0).abs());
        for (got, want) in model.coefficients.values().zip(&b) {
            worst_coef = worst_coef.max((got - want).abs());
        }
    }
    ensure(worst_coef < 1e-8, || format!("max coefficient error {worst_coef:e}"))?;
    Ok(format!("max coefficient error {worst_coef:e}"))
}

fn optimum_on_reference_data() -> Result<Option<String>, String> {
    let (Ok(items_path), Ok(eval_path)) = (std::env::var("VOCABDIFF_KVL_ITEMS"), std::env::var("VOCABDIFF_KVL_EVAL")) else {
        return Ok(None);
    };
    let items = parse_items(fs::File::open(&items_path).map_err(|e| e.to_string())?, None).map_err(|e| e.to_string())?;
    let eval_text = fs::read_to_string(&eval_path).map_err(|e| e.to_string())?;
    let eval_ids: std::collections::HashSet<&str> =
        eval_text.lines().skip(1).filter_map(|l| l.split('\t').next()).collect();
    let widths = CiWidths::kvl();
    let mut parts = Vec::new();
    for (code, expected) in [("zh", 0.321), ("de", 0.304), ("es", 0.205)] {
        let l1 = Language::new(code).map_err(|e| e.to_string())?;
        let subset: Vec<&TestItem> = items.iter().filter(|i| i.l1 == l1).collect();
        let corpus = RankedCorpus::new(&subset.iter().map(|i| (i.item_id.clone(), i.gold_score)).collect::<Vec<_>>())
            .map_err(|e| e.to_string())?;
        let targets: Vec<&&TestItem> = subset.iter().filter(|i| eval_ids.contains(i.item_id.as_str())).collect();
        let ids: Vec<String> = targets.iter().map(|i| i.item_id.clone()).collect();
        let gold: Vec<f64> = targets.iter().map(|i| i.gold_score).collect();
        let sim = statistical_optimum(&corpus, &ids, &widths, &l1).map_err(|e| e.to_string())?;
        let e = rmse(&sim, &gold).map_err(|e| e.to_string())?;
        ensure((e - expected).abs() <= 0.005, || format!("{code}: {e:.3} vs reference {expected}"))?;
        parts.push(format!("{code} {e:.3}"));
    }
    Ok(Some(parts.join(", ")))
}

fn statistical_optimum_sim() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..50 {
        let n = rng.gen_range(1..=200);
        let items: Vec<(String, f64)> = (0..n)
            .map(|i| (format!("i{i}"), rng.gen_range(-16..16) as f64 / 4.0 + rng.gen_range(0.0..0.1)))
            .collect();
        let corpus = RankedCorpus::new(&items).map_err(|e| e.to_string())?;
        let ids: Vec<String> = items.iter().map(|(id, _)| id.clone()).collect();
        let gold: Vec<f64> = items.iter().map(|(_, s)| *s).collect();
        let mut last = 0.0;
        for w in [0, 1, 2, 5, 17, 69, 95, 108, 250] {
            let sim = statistical_optimum_at(&corpus, &ids, w).map_err(|e| e.to_string())?;
            for (id, s) in ids.iter().zip(&sim) {
                let r = corpus.rank_of(id).expect("ranked") - 1;
                let want = optimum_scan(corpus.scores(), r, w);
                ensure(*s == want, || format!("instance {case}, w {w}: {s} vs oracle {want}"))?;
            }
            let e = rmse(&sim, &gold).map_err(|e| e.to_string())?;
            ensure(w != 0 || e == 0.0, || format!("instance {case}: w = 0 gives {e}"))?;
            ensure(e >= last, || format!("instance {case}: RMSE drops at w {w}"))?;
            last = e;
        }
    }
    Ok(match optimum_on_reference_data()? {
        Some(s) => format!("50 synthetic corpora; reference data {s}"),
        None => "50 synthetic corpora; reference-data check skipped (no data supplied)".into(),
    })
}

fn table_item() -> Result<TestItem, String> {
    Ok(TestItem {
        l1: Language::new("es").map_err(|e| e.to_string())?,
        l1_word: "casa".into(),
        l1_context: "Vivo en una casa grande que tiene tres dormitorios.".into(),
        en_word: "house".into(),
        pos: "noun".into(),
        clue: make_clue("house").map_err(|e| e.to_string())?,
        gold_score: 3.07,
        item_id: "es-casa".into(),
    })
}

fn prompt_goldens() -> Outcome {
    let goldens = manifest_dir().join("../core/tests/goldens");
    let item = table_item()?;
    ensure(item.clue == "h _ _ _ _", || format!("clue is `{}`", item.clue))?;
    let extras: Bindings = serde_json::from_str(&fs::read_to_string(goldens.join("bindings.json")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    for id in TemplateId::ALL {
        let want = fs::read(goldens.join(format!("{id}.txt"))).map_err(|e| e.to_string())?;
        let got = render(id, &item, &extras).map_err(|e| e.to_string())?;
        ensure(got.as_bytes() == want.as_slice(), || format!("{id} differs from its golden"))?;
    }
    let out = Command::new(env!("CARGO_BIN_EXE_vocabdiff"))
        .args(["render-prompt", "--template", "short", "--items", "data/table1.tsv"])
        .current_dir(manifest_dir())
        .output()
        .map_err(|e| e.to_string())?;
    let mut want = fs::read(goldens.join("short.txt")).map_err(|e| e.to_string())?;
    want.push(b'\n');
    ensure(out.status.success() && out.stdout == want, || "CLI short prompt differs from its golden".into())?;
    Ok(format!("{} templates plus the CLI short prompt", TemplateId::ALL.len()))
}

fn random_word(rng: &mut ChaCha8Rng) -> String {
    const ALPHABET: &[char] = &['a', 'b', 'c', 'd', 'e', 'A', 'E', 'r', 's'];
    let len = rng.gen_range(1..=12);
    (0..len).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())]).collect()
}

fn feature_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..1000 {
        let (a, b) = (random_word(&mut rng), random_word(&mut rng));
        let (ca, cb): (Vec<char>, Vec<char>) = (a.to_lowercase().chars().collect(), b.to_lowercase().chars().collect());
        let d = edit_distance(&ca, &cb);
        ensure(levenshtein(&ca, &cb) == d, || format!("distance for {a}/{b}"))?;
        // the exact fraction 1 - d/m, rounded once
        let m = ca.len().max(cb.len());
        let want = (m - d) as f64 / m as f64;
        let got = l1_similarity(&a, &b).map_err(|e| e.to_string())?;
        ensure(got == want, || format!("similarity for {a}/{b}: {got} vs {want}"))?;
    }
    let casa = l1_similarity("house", "casa").map_err(|e| e.to_string())?;
    let musik = l1_similarity("music", "Musik").map_err(|e| e.to_string())?;
    ensure(casa == 0.2 && musik == 0.8, || format!("casa/house {casa}, Musik/music {musik}"))?;
    Ok("1000 pairs; casa/house 0.2, Musik/music 0.8".into())
}

fn vocabdiff(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_vocabdiff"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("`{}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr))
    })
}

const PIPELINE_OUTPUTS: [&str; 8] = [
    "items.tsv",
    "features.csv",
    "model.json",
    "predictions.tsv",
    "explanations.jsonl",
    "importance.json",
    "report.html",
    "eval.json",
];

fn run_pipeline(dir: &Path) -> Result<(), String> {
    let data = manifest_dir().join("data");
    let d = |f: &str| data.join(f).display().to_string();
    vocabdiff(dir, &["ingest", "--items", &d("items.tsv"), "--out", "items.tsv"])?;
    vocabdiff(
        dir,
        &[
            "features",
            "--items",
            "items.tsv",
            "--schema",
            &d("schema.json"),
            "--frequency",
            &format!("freq={}", d("frequency.tsv")),
            "--cefr",
            &format!("cefr={}", d("cefr.tsv")),
            "--numeric",
            &format!("concreteness={}", d("concreteness.tsv")),
            "--out",
            "features.csv",
        ],
    )?;
    vocabdiff(
        dir,
        &["train-gbt", "--features", "features.csv", "--items", "items.tsv", "--seed", "42", "--out", "model.json"],
    )?;
    vocabdiff(dir, &["predict", "--model", "model.json", "--features", "features.csv", "--out", "predictions.tsv"])?;
    vocabdiff(
        dir,
        &[
            "explain",
            "--model",
            "model.json",
            "--features",
            "features.csv",
            "--groups",
            &d("groups.json"),
            "--out",
            "explanations.jsonl",
            "--importance",
            "importance.json",
            "--html",
            "report.html",
        ],
    )?;
    vocabdiff(dir, &["eval", "--predictions", "predictions.tsv", "--gold", "items.tsv", "--out", "eval.json"])
}

fn end_to_end_determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_pipeline(a.path())?;
    run_pipeline(b.path())?;
    for f in PIPELINE_OUTPUTS {
        let (x, y) = (fs::read(a.path().join(f)).map_err(|e| e.to_string())?, fs::read(b.path().join(f)).map_err(|e| e.to_string())?);
        ensure(x == y, || format!("{f} differs between runs"))?;
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(a.path().join("model.json.manifest.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    ensure(manifest["seed"] == 42, || "training manifest lacks the seed".into())?;

    let preds = fs::read_to_string(a.path().join("predictions.tsv")).map_err(|e| e.to_string())?;
    let expls = fs::read_to_string(a.path().join("explanations.jsonl")).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for (pred_line, expl_line) in preds.lines().skip(1).zip(expls.lines()) {
        let e: Explanation = serde_json::from_str(expl_line).map_err(|e| e.to_string())?;
        let fields: Vec<&str> = pred_line.split('\t').collect();
        let p: f64 = fields[1].parse().map_err(|_| "bad prediction".to_string())?;
        ensure(fields[0] == e.item_id, || format!("row order differs at {}", e.item_id))?;
        worst = worst.max(e.additivity_error()).max((e.prediction - p).abs());
        n += 1;
    }
    ensure(n == 200, || format!("{n} explained items, expected 200"))?;
    ensure(worst <= 1e-9, || format!("additivity error {worst:e}"))?;
    Ok(format!("{} files identical; {n} items, max additivity error {worst:e}", PIPELINE_OUTPUTS.len()))
}

struct Criterion {
    name: &'static str,
    budget: Duration,
    check: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { name: "soft-target identity", budget: Duration::from_secs(1), check: soft_target_identity },
        Criterion { name: "gradient checks", budget: Duration::from_secs(5), check: gradient_check },
        Criterion { name: "ablation direction", budget: Duration::from_secs(30), check: ablation_direction },
        Criterion { name: "SHAP correctness", budget: Duration::from_secs(120), check: shap_correctness },
        Criterion { name: "GBT oracle equivalence", budget: Duration::from_secs(30), check: gbt_oracle_equivalence },
        Criterion { name: "stacking optimality", budget: Duration::from_secs(10), check: stacking_optimality },
        Criterion { name: "statistical optimum", budget: Duration::from_secs(30), check: statistical_optimum_sim },
        Criterion { name: "prompt goldens", budget: Duration::from_secs(1), check: prompt_goldens },
        Criterion { name: "feature oracles", budget: Duration::from_secs(5), check: feature_oracles },
        Criterion { name: "end-to-end determinism", budget: Duration::from_secs(60), check: end_to_end_determinism },
    ];
    let mut failed = 0;
    for (i, c) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = (c.check)();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > c.budget => Err(format!("{detail}; took {elapsed:.2?}, budget {:?}", c.budget)),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {} ({elapsed:.2?}): {detail}", i + 1, c.name),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {} ({elapsed:.2?}): {why}", i + 1, c.name);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
