use serde::{Deserialize, Serialize};
use vocabdiff::data_model::{fit_scale, Language, ScaleMap, ScaleMode, TestItem};
use vocabdiff::ensemble::{average_ensemble, fit_stack, make_folds, oof_predictions, predict_stack, Columns, StackModel};
use vocabdiff::features::FeatureRow;
use vocabdiff::gbtree::{self, GbtModel, GbtParams};
use vocabdiff::toy_rater::{self, rmse_on, InferenceMode, LossMode, RaterModel, TrainConfig};

use crate::args::{InferenceArg, LossArg, PredictArgs, StackArgs, TrainGbtArgs, TrainToyArgs};
use crate::failure::{user, At, CliResult};
use crate::output::{manifest_path, Run};
use crate::tables::{format_predictions, gold_for, read_features, read_items, read_predictions, Prediction};

/// Rater model plus what is needed to map its output back to raw scores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyArtifact {
    pub feature_schema: Vec<String>,
    /// Absent for synthetic training data, whose targets live on the scale.
    pub scale: Option<ScaleMap>,
    pub inference: InferenceMode,
    pub rater: RaterModel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SavedModel {
    Gbt(GbtModel),
    Toy(ToyArtifact),
}

pub fn targets(rows: &[FeatureRow], items: &[TestItem]) -> CliResult<Vec<f64>> {
    gold_for(items, rows.iter().map(|r| &r.item_id))
}

pub fn train_gbt(a: &TrainGbtArgs) -> CliResult<()> {
    let mut run = Run::new("train-gbt");
    let rows = read_features(&mut run, &a.features)?;
    let items = read_items(&mut run, &a.items, None)?;
    let y = targets(&rows, &items)?;
    let params = GbtParams {
        max_depth: a.max_depth,
        learning_rate: a.learning_rate,
        n_estimators: a.n_estimators,
        min_child_weight: a.min_child_weight,
        lambda: a.lambda,
        seed: a.seed,
    };
    let model = gbtree::fit(&rows, &y, &params).at("train-gbt")?;

    if let Some(path) = &a.oof {
        let ids: Vec<String> = rows.iter().map(|r| r.item_id.clone()).collect();
        let plan = make_folds(&ids, a.folds, a.seed).at("folds")?;
        let oof = oof_predictions(&params, &rows, &y, &plan).at("out-of-fold predictions")?;
        let preds: Vec<Prediction> = ids
            .into_iter()
            .zip(oof)
            .map(|(item_id, value)| Prediction {
                item_id,
                extrapolated: model.is_extrapolated(value),
                value,
            })
            .collect();
        run.write(path, &format_predictions(&preds))?;
        run.note("fold_sizes", plan.fold_sizes());
    }

    let train_pred: Vec<f64> = rows.iter().map(|r| model.predict(r)).collect::<vocabdiff::Result<_>>().at("predict")?;
    run.note("train_rmse", vocabdiff::evaluation::rmse(&train_pred, &y).at("rmse")?);
    run.note("trees", model.trees.len());
    run.write_json(&a.out, &SavedModel::Gbt(model))?;
    run.finish(a, Some(a.seed), &manifest_path(&a.common.manifest, Some(&a.out), "train-gbt"))
}

fn complete_row(row: &FeatureRow) -> CliResult<Vec<f64>> {
    row.values
        .iter()
        .map(|(name, v)| v.ok_or_else(|| user(format!("item `{}` has no value for `{name}`", row.item_id))))
        .collect()
}

pub fn train_toy(a: &TrainToyArgs) -> CliResult<()> {
    let mut run = Run::new("train-toy");
    let cfg = TrainConfig {
        epochs: a.epochs,
        learning_rate: a.learning_rate,
        seed: a.seed,
        loss_mode: match a.loss {
            LossArg::Soft => LossMode::Soft,
            LossArg::Hard => LossMode::Hard,
        },
        inference_mode: match a.inference {
            InferenceArg::Weighted => InferenceMode::Weighted,
            InferenceArg::Argmax => InferenceMode::Argmax,
        },
    };

    let (data, schema, scale) = match (&a.features, a.synthetic) {
        (Some(fpath), None) => {
            let rows = read_features(&mut run, fpath)?;
            let ipath = a.items.as_ref().ok_or_else(|| user("--features needs --items"))?;
            let items = read_items(&mut run, ipath, None)?;
            let gold = targets(&rows, &items)?;
            let scale = match &a.scale {
                Some(p) => run.read_json::<ScaleMap>(p)?,
                None => fit_scale(&gold, a.k as u32, ScaleMode::Linear).at("scale")?,
            };
            if scale.k as usize != a.k {
                return Err(user(format!("scale map has {} points but --k is {}", scale.k, a.k)));
            }
            let mut data = Vec::with_capacity(rows.len());
            for (row, g) in rows.iter().zip(&gold) {
                let y = scale.to_scale(*g);
                if scale.is_extrapolated(*g) {
                    return Err(user(format!("gold score of `{}` lies outside the scale map", row.item_id)));
                }
                data.push((complete_row(row)?, y.clamp(1.0, a.k as f64)));
            }
            let schema = rows[0].values.keys().cloned().collect();
            (data, schema, Some(scale))
        }
        (None, Some(n)) => {
            if a.k != 5 {
                return Err(user("the synthetic benchmark uses a 5-point scale"));
            }
            (toy_rater::synthetic_benchmark(n, a.seed), vec!["x".to_string()], None)
        }
        _ => return Err(user("give either --features with --items, or --synthetic")),
    };

    let rater = toy_rater::train(&data, a.k, a.distractors, &cfg).at("train-toy")?;
    run.note("train_rmse_scale", rmse_on(&rater, &data, cfg.inference_mode).at("rmse")?);
    if a.synthetic.is_some() {
        let eval = toy_rater::synthetic_benchmark(data.len(), a.seed.wrapping_add(1));
        run.note("eval_rmse_scale", rmse_on(&rater, &eval, cfg.inference_mode).at("rmse")?);
    }
    let artifact = ToyArtifact {
        feature_schema: schema,
        scale,
        inference: cfg.inference_mode,
        rater,
    };
    run.write_json(&a.out, &SavedModel::Toy(artifact))?;
    run.finish(a, Some(a.seed), &manifest_path(&a.common.manifest, Some(&a.out), "train-toy"))
}

pub fn predict_rows(model: &SavedModel, rows: &[FeatureRow]) -> CliResult<Vec<Prediction>> {
    rows.iter()
        .map(|row| {
            let (value, extrapolated) = match model {
                SavedModel::Gbt(m) => {
                    let v = m.predict(row).at(&row.item_id)?;
                    (v, m.is_extrapolated(v))
                }
                SavedModel::Toy(t) => {
                    let x: Vec<f64> = t
                        .feature_schema
                        .iter()
                        .map(|name| match row.values.get(name) {
                            Some(Some(v)) => Ok(*v),
                            _ => Err(user(format!("item `{}` has no value for `{name}`", row.item_id))),
                        })
                        .collect::<CliResult<_>>()?;
                    let scaled = t.rater.predict(&x, t.inference).at(&row.item_id)?;
                    match &t.scale {
                        Some(s) => {
                            let raw = s.from_scale(scaled);
                            (raw, s.is_extrapolated(raw))
                        }
                        None => (scaled, false),
                    }
                }
            };
            Ok(Prediction {
                item_id: row.item_id.clone(),
                value,
                extrapolated,
            })
        })
        .collect()
}

pub fn predict(a: &PredictArgs) -> CliResult<()> {
    let mut run = Run::new("predict");
    let model: SavedModel = run.read_json(&a.model)?;
    let rows = read_features(&mut run, &a.features)?;
    let preds = predict_rows(&model, &rows)?;
    run.note("rows", preds.len());
    run.note("extrapolated", preds.iter().filter(|p| p.extrapolated).count());
    run.write(&a.out, &format_predictions(&preds))?;
    run.finish(a, None, &manifest_path(&a.common.manifest, Some(&a.out), "predict"))
}

/// Stack inputs restricted to `ids`, in that order.
fn input_columns(names: &[String], sources: &[std::collections::HashMap<String, f64>], ids: &[&str]) -> CliResult<Columns> {
    let mut cols = Columns::new();
    for (name, src) in names.iter().zip(sources) {
        let col = ids
            .iter()
            .map(|id| {
                src.get(*id)
                    .copied()
                    .ok_or_else(|| user(format!("input `{name}` has no value for item `{id}`")))
            })
            .collect::<CliResult<Vec<f64>>>()?;
        cols.insert(name.clone(), col);
    }
    Ok(cols)
}

pub fn stack(a: &StackArgs) -> CliResult<()> {
    let mut run = Run::new("stack");
    let items = read_items(&mut run, &a.items, None)?;
    let mut names = Vec::new();
    let mut sources = Vec::new();
    for n in &a.inputs {
        let preds = read_predictions(&mut run, &n.path)?;
        names.push(n.name.clone());
        sources.push(preds.into_iter().map(|p| (p.item_id, p.value)).collect());
    }
    if let Some(path) = &a.features {
        let rows = read_features(&mut run, path)?;
        for col in &a.feature_columns {
            let mut src = std::collections::HashMap::new();
            for r in &rows {
                match r.values.get(col) {
                    Some(Some(v)) => {
                        src.insert(r.item_id.clone(), *v);
                    }
                    Some(None) => return Err(user(format!("feature `{col}` is missing for item `{}`", r.item_id))),
                    None => return Err(user(format!("no feature column `{col}`"))),
                }
            }
            names.push(col.clone());
            sources.push(src);
        }
    }

    let existing: Option<Vec<StackModel>> = a.model.as_ref().map(|p| run.read_json(p)).transpose()?;
    if existing.is_none() && !a.average && a.out.is_none() {
        return Err(user("fitting a stack needs --out"));
    }
    if (existing.is_some() || a.average) && a.predictions.is_none() {
        return Err(user("applying or averaging needs --predictions"));
    }

    let mut langs: Vec<&Language> = Vec::new();
    for i in &items {
        if !langs.contains(&&i.l1) {
            langs.push(&i.l1);
        }
    }
    let mut fitted = Vec::new();
    let mut preds = Vec::with_capacity(items.len());
    for l1 in langs {
        let subset: Vec<&TestItem> = items.iter().filter(|i| &i.l1 == l1).collect();
        let ids: Vec<&str> = subset.iter().map(|i| i.item_id.as_str()).collect();
        let cols = input_columns(&names, &sources, &ids)?;
        let values = if a.average {
            average_ensemble(&cols.values().cloned().collect::<Vec<_>>()).at(l1)?
        } else if let Some(models) = &existing {
            let m = models
                .iter()
                .find(|m| &m.l1 == l1)
                .ok_or_else(|| user(format!("stack model has no entry for {l1}")))?;
            predict_stack(m, &cols).at(l1)?
        } else {
            let gold: Vec<f64> = subset.iter().map(|i| i.gold_score).collect();
            let m = fit_stack(&cols, &gold, l1).at(l1)?;
            let v = predict_stack(&m, &cols).at(l1)?;
            fitted.push(m);
            v
        };
        preds.extend(subset.iter().zip(values).map(|(i, value)| Prediction {
            item_id: i.item_id.clone(),
            value,
            extrapolated: false,
        }));
    }

    if let Some(out) = &a.out {
        if existing.is_none() && !a.average {
            run.write_json(out, &fitted)?;
        }
    }
    if let Some(path) = &a.predictions {
        run.write(path, &format_predictions(&preds))?;
    }
    run.note("inputs", &names);
    let primary = a.out.as_deref().or(a.predictions.as_deref());
    run.finish(a, None, &manifest_path(&a.common.manifest, primary, "stack"))
}
