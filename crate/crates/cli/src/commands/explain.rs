use vocabdiff::features::FeatureRow;
use vocabdiff::gbtree::{explain_all, global_importance, group_shap, Explanation, GlobalImportance, Grouping, ShapFlavor};

use crate::args::{ExplainArgs, FlavorArg};
use crate::commands::train::SavedModel;
use crate::failure::{internal, user, At, CliResult};
use crate::output::{manifest_path, Run};
use crate::tables::read_features;

/// Largest accepted `|base + sum(phi) - prediction|`.
pub const ADDITIVITY_TOLERANCE: f64 = 1e-9;

/// Evenly spaced subset of at most `size` rows, first row included.
fn thin(rows: Vec<FeatureRow>, size: usize) -> Vec<FeatureRow> {
    if rows.len() <= size {
        return rows;
    }
    let n = rows.len();
    let keep: Vec<usize> = (0..size).map(|i| i * n / size).collect();
    rows.into_iter()
        .enumerate()
        .filter(|(i, _)| keep.binary_search(i).is_ok())
        .map(|(_, r)| r)
        .collect()
}

pub fn explain(a: &ExplainArgs) -> CliResult<()> {
    let mut run = Run::new("explain");
    let SavedModel::Gbt(model) = run.read_json::<SavedModel>(&a.model)? else {
        return Err(user("explain needs a gradient-boosted tree model"));
    };
    let rows = read_features(&mut run, &a.features)?;
    let flavor = match a.flavor {
        FlavorArg::Interventional => ShapFlavor::Interventional,
        FlavorArg::TreePathDependent => ShapFlavor::TreePathDependent,
    };
    let background = match (&a.background, flavor) {
        (_, ShapFlavor::TreePathDependent) => Vec::new(),
        (Some(path), _) => thin(read_features(&mut run, path)?, a.background_size),
        (None, _) => thin(rows.clone(), a.background_size),
    };
    if flavor == ShapFlavor::Interventional && background.is_empty() {
        return Err(user("--background-size must be positive"));
    }
    let grouping: Grouping = match &a.groups {
        Some(p) => run.read_json(p)?,
        None => Grouping::new(),
    };

    let mut expls = explain_all(&model, &rows, &background, flavor).at("explain")?;
    for e in &mut expls {
        e.groups = group_shap(e, &grouping).at("groups")?;
    }
    let worst = expls.iter().map(Explanation::additivity_error).fold(0.0, f64::max);
    if let Some(bad) = expls.iter().find(|e| !(e.additivity_error() <= ADDITIVITY_TOLERANCE)) {
        return Err(internal(format!(
            "additivity violated for item `{}`: error {:e}",
            bad.item_id,
            bad.additivity_error()
        )));
    }
    let importance = global_importance(&expls).at("importance")?;

    let mut lines = Vec::new();
    for e in &expls {
        serde_json::to_writer(&mut lines, e).map_err(internal)?;
        lines.push(b'\n');
    }
    run.write(&a.out, &lines)?;
    run.write_json(&a.importance, &importance)?;
    if let Some(path) = &a.html {
        run.write(path, render_html(&expls, &importance).as_bytes())?;
    }
    run.note("rows", expls.len());
    run.note("background_rows", background.len());
    run.note("max_additivity_error", worst);
    run.finish(a, None, &manifest_path(&a.common.manifest, Some(&a.out), "explain"))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn importance_table<'a>(title: &str, values: impl IntoIterator<Item = (&'a String, &'a f64)>) -> String {
    let mut rows: Vec<(&String, &f64)> = values.into_iter().collect();
    rows.sort_by(|a, b| b.1.total_cmp(a.1).then_with(|| a.0.cmp(b.0)));
    let mut out = format!("<h2>{}</h2>\n<table>\n<tr><th>name</th><th>mean |SHAP|</th></tr>\n", escape(title));
    for (name, v) in rows {
        out.push_str(&format!("<tr><td>{}</td><td>{v:.6}</td></tr>\n", escape(name)));
    }
    out.push_str("</table>\n");
    out
}

/// Static page with the global importance and one row of group
/// contributions per item.
pub fn render_html(expls: &[Explanation], importance: &GlobalImportance) -> String {
    let mut out = String::from(
        "<!DOCTYPE html>\n<html>\n<head><meta charset=\"utf-8\"><title>SHAP report</title>\n\
         <style>table{border-collapse:collapse}td,th{border:1px solid #999;padding:2px 6px;text-align:right}</style>\n\
         </head>\n<body>\n",
    );
    out.push_str(&importance_table("Groups", &importance.groups));
    out.push_str(&importance_table("Features", &importance.features));
    out.push_str("<h2>Items</h2>\n<table>\n<tr><th>item</th><th>prediction</th><th>base</th>");
    for g in importance.groups.keys() {
        out.push_str(&format!("<th>{}</th>", escape(g)));
    }
    out.push_str("</tr>\n");
    for e in expls {
        out.push_str(&format!(
            "<tr><td>{}</td><td>{:.4}</td><td>{:.4}</td>",
            escape(&e.item_id),
            e.prediction,
            e.base_value
        ));
        for v in e.groups.values() {
            out.push_str(&format!("<td>{v:+.4}</td>"));
        }
        out.push_str("</tr>\n");
    }
    out.push_str("</table>\n</body>\n</html>\n");
    out
}
