use std::collections::{HashMap, HashSet};

use vocabdiff::data_model::{Language, TestItem};
use vocabdiff::evaluation::{
    aggregate, evaluate_report, render_table, statistical_optimum_at, CiWidths, MetricReport, RankedCorpus,
};

use crate::args::{EvalArgs, SimulateArgs};
use crate::failure::{user, At, CliResult};
use crate::output::{manifest_path, print_stdout, Run};
use crate::tables::{format_predictions, parse_language, parse_predictions, read_id_column, read_items, read_predictions, Prediction};

/// Languages in order of first appearance.
fn languages<'a>(l1s: impl IntoIterator<Item = &'a Language>) -> Vec<Language> {
    let mut out: Vec<Language> = Vec::new();
    for l in l1s {
        if !out.contains(l) {
            out.push(l.clone());
        }
    }
    out
}

pub fn eval(a: &EvalArgs) -> CliResult<()> {
    let mut run = Run::new("eval");
    let preds = read_predictions(&mut run, &a.predictions)?;
    let gold_text = run.read_text(&a.gold)?;
    let header = gold_text.lines().next().unwrap_or_default();

    // item id -> (language, gold score)
    let gold: HashMap<String, (Language, f64)> = if header.split('\t').any(|c| c == "gold_score") {
        let items = vocabdiff::data_model::parse_items(gold_text.as_bytes(), parse_language(&a.l1)?.as_ref())
            .at(a.gold.display())?;
        items.into_iter().map(|i| (i.item_id, (i.l1, i.gold_score))).collect()
    } else {
        let l1 = parse_language(&a.l1)?
            .ok_or_else(|| user("--l1 is required when the gold file is a prediction file"))?;
        parse_predictions(&gold_text, &a.gold)?
            .into_iter()
            .map(|p| (p.item_id, (l1.clone(), p.value)))
            .collect()
    };

    let mut rows = Vec::with_capacity(preds.len());
    for p in &preds {
        let (l1, g) = gold
            .get(&p.item_id)
            .ok_or_else(|| user(format!("no gold score for item `{}`", p.item_id)))?;
        rows.push((l1, p.value, *g));
    }
    let mut reports: Vec<MetricReport> = Vec::new();
    for l1 in languages(rows.iter().map(|r| r.0)) {
        let (pred, gold): (Vec<f64>, Vec<f64>) = rows.iter().filter(|r| *r.0 == l1).map(|r| (r.1, r.2)).unzip();
        reports.push(evaluate_report(&pred, &gold, &l1).at(&l1)?);
    }
    let system = a.system.clone().unwrap_or_else(|| {
        a.predictions
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "system".into())
    });
    let report = aggregate(&system, reports).at("eval")?;
    print_stdout(&render_table(std::slice::from_ref(&report)))?;
    run.write_json(&a.out, &report)?;
    run.note("rmse_mean", report.mean.rmse);
    run.note("pcc_mean", report.mean.pcc);
    run.finish(a, None, &manifest_path(&a.common.manifest, Some(&a.out), "eval"))
}

pub fn simulate_optimum(a: &SimulateArgs) -> CliResult<()> {
    let mut run = Run::new("simulate-optimum");
    let items = read_items(&mut run, &a.items, None)?;
    let eval_ids: Option<HashSet<String>> = a
        .eval
        .as_ref()
        .map(|p| read_id_column(&mut run, p).map(|ids| ids.into_iter().collect()))
        .transpose()?;
    let widths = CiWidths::kvl();

    if let Some(ids) = &eval_ids {
        let known: HashSet<&str> = items.iter().map(|i| i.item_id.as_str()).collect();
        let mut missing: Vec<&String> = ids.iter().filter(|id| !known.contains(id.as_str())).collect();
        missing.sort();
        if let Some(m) = missing.first() {
            return Err(user(format!("eval item `{m}` is not in the corpus")));
        }
    }
    let mut reports = Vec::new();
    let mut preds = Vec::new();
    let mut used_widths = std::collections::BTreeMap::new();
    for l1 in languages(items.iter().map(|i| &i.l1)) {
        let subset: Vec<&TestItem> = items.iter().filter(|i| i.l1 == l1).collect();
        let corpus_items: Vec<(String, f64)> = subset.iter().map(|i| (i.item_id.clone(), i.gold_score)).collect();
        let corpus = RankedCorpus::new(&corpus_items).at(&l1)?;
        let targets: Vec<&TestItem> = match &eval_ids {
            Some(ids) => subset.iter().copied().filter(|i| ids.contains(&i.item_id)).collect(),
            None => subset.clone(),
        };
        if targets.is_empty() {
            continue;
        }
        let width = match a.width {
            Some(w) => w,
            None => widths.width(&l1).at(format!("{l1} (pass --width for other languages)"))?,
        };
        used_widths.insert(l1.code().to_string(), width);
        let ids: Vec<String> = targets.iter().map(|i| i.item_id.clone()).collect();
        let sim = statistical_optimum_at(&corpus, &ids, width).at(&l1)?;
        let gold: Vec<f64> = targets.iter().map(|i| i.gold_score).collect();
        reports.push(evaluate_report(&sim, &gold, &l1).at(&l1)?);
        preds.extend(ids.into_iter().zip(sim).map(|(item_id, value)| Prediction {
            item_id,
            value,
            extrapolated: false,
        }));
    }
    let report = aggregate("Statistical Optimum", reports).at("simulate-optimum")?;
    print_stdout(&render_table(std::slice::from_ref(&report)))?;
    run.write_json(&a.out, &report)?;
    if let Some(path) = &a.predictions {
        run.write(path, &format_predictions(&preds))?;
    }
    run.note("widths", used_widths);
    run.finish(a, None, &manifest_path(&a.common.manifest, Some(&a.out), "simulate-optimum"))
}
