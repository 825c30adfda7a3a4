//! Reading and writing the tabular files shared by several subcommands.

use std::collections::HashMap;
use std::path::Path;

use vocabdiff::data_model::{parse_items, Language, TestItem};
use vocabdiff::features::{read_feature_csv, FeatureRow};

use crate::failure::{user, At, CliResult};
use crate::output::Run;

pub fn read_items(run: &mut Run, path: &Path, l1: Option<&Language>) -> CliResult<Vec<TestItem>> {
    let bytes = run.read(path)?;
    parse_items(bytes.as_slice(), l1).at(path.display())
}

pub fn read_features(run: &mut Run, path: &Path) -> CliResult<Vec<FeatureRow>> {
    let bytes = run.read(path)?;
    let rows = read_feature_csv(bytes.as_slice()).at(path.display())?;
    if rows.is_empty() {
        return Err(user(format!("`{}` has no rows", path.display())));
    }
    Ok(rows)
}

pub fn parse_language(code: &Option<String>) -> CliResult<Option<Language>> {
    code.as_deref()
        .map(|c| c.parse::<Language>().at("--l1"))
        .transpose()
}

/// Gold scores for `ids`, in the same order.
pub fn gold_for(items: &[TestItem], ids: impl IntoIterator<Item = impl AsRef<str>>) -> CliResult<Vec<f64>> {
    let by_id: HashMap<&str, f64> = items.iter().map(|i| (i.item_id.as_str(), i.gold_score)).collect();
    ids.into_iter()
        .map(|id| {
            let id = id.as_ref();
            by_id
                .get(id)
                .copied()
                .ok_or_else(|| user(format!("no gold score for item `{id}`")))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub item_id: String,
    pub value: f64,
    pub extrapolated: bool,
}

pub const PREDICTION_HEADER: &str = "item_id\tprediction\tflag";

/// Prediction TSV; `flag` is 1 when the value lies outside the training
/// score range.
pub fn format_predictions(preds: &[Prediction]) -> Vec<u8> {
    let mut out = String::from(PREDICTION_HEADER);
    out.push('\n');
    for p in preds {
        out.push_str(&format!("{}\t{}\t{}\n", p.item_id, p.value, u8::from(p.extrapolated)));
    }
    out.into_bytes()
}

pub fn parse_predictions(text: &str, origin: &Path) -> CliResult<Vec<Prediction>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let cols: Vec<&str> = header.split('\t').collect();
    if cols.first() != Some(&"item_id") || cols.get(1) != Some(&"prediction") {
        return Err(user(format!(
            "`{}` is not a prediction file (expected header `{PREDICTION_HEADER}`)",
            origin.display()
        )));
    }
    let mut out = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| user(format!("{} row {}: {msg}", origin.display(), idx + 1));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != cols.len() {
            return Err(bad(format!("expected {} fields, found {}", cols.len(), f.len())));
        }
        let value: f64 = f[1]
            .parse()
            .map_err(|_| bad(format!("`{}` is not numeric", f[1])))?;
        if !value.is_finite() {
            return Err(bad("prediction is not finite".into()));
        }
        out.push(Prediction {
            item_id: f[0].to_string(),
            value,
            extrapolated: f.get(2).is_some_and(|v| *v == "1"),
        });
    }
    Ok(out)
}

pub fn read_predictions(run: &mut Run, path: &Path) -> CliResult<Vec<Prediction>> {
    let text = run.read_text(path)?;
    parse_predictions(&text, path)
}

/// First tab-separated column of every data row.
pub fn read_id_column(run: &mut Run, path: &Path) -> CliResult<Vec<String>> {
    let text = run.read_text(path)?;
    let mut lines = text.lines();
    if lines.next().map(|h| h.split('\t').next()) != Some(Some("item_id")) {
        return Err(user(format!("`{}` must start with an `item_id` column", path.display())));
    }
    Ok(lines
        .filter(|l| !l.is_empty())
        .map(|l| l.split('\t').next().unwrap_or_default().to_string())
        .collect())
}
