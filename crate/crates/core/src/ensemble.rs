//! Cross-validated out-of-fold predictions and linear stacking.

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::Language;
use crate::error::{Error, Result};
use crate::features::FeatureRow;
use crate::gbtree::{self, GbtModel, GbtParams};

/// Ridge added to the diagonal of the centered normal equations.
pub const STACK_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// Fold index per item, in input order.
    pub assignment: IndexMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, item_id: &str) -> Option<usize> {
        self.assignment.get(item_id).copied()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Shuffles items with a seeded ChaCha8 stream and deals them round-robin,
/// so fold sizes differ by at most one.
pub fn make_folds(item_ids: &[String], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::invalid("need at least two folds"));
    }
    if k > item_ids.len() {
        return Err(Error::invalid(format!(
            "{k} folds requested for {} items",
            item_ids.len()
        )));
    }
    let mut order: Vec<usize> = (0..item_ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; item_ids.len()];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    let mut assignment = IndexMap::with_capacity(item_ids.len());
    for (id, f) in item_ids.iter().zip(fold) {
        if assignment.insert(id.clone(), f).is_some() {
            return Err(Error::invalid(format!("duplicate item id `{id}`")));
        }
    }
    Ok(FoldPlan { k, seed, assignment })
}

/// A deterministic fit/predict pair used for cross-validation.
pub trait Trainer: Sync {
    type Model: Send;
    fn fit(&self, rows: &[FeatureRow], targets: &[f64]) -> Result<Self::Model>;
    fn predict(&self, model: &Self::Model, rows: &[FeatureRow]) -> Result<Vec<f64>>;
}

impl Trainer for GbtParams {
    type Model = GbtModel;

    fn fit(&self, rows: &[FeatureRow], targets: &[f64]) -> Result<GbtModel> {
        gbtree::fit(rows, targets, self)
    }

    fn predict(&self, model: &GbtModel, rows: &[FeatureRow]) -> Result<Vec<f64>> {
        rows.iter().map(|r| model.predict(r)).collect()
    }
}

/// Predicts every item with a model trained on the other folds. Output is
/// aligned with `rows`; folds are trained in parallel.
pub fn oof_predictions<T: Trainer>(
    trainer: &T,
    rows: &[FeatureRow],
    targets: &[f64],
    plan: &FoldPlan,
) -> Result<Vec<f64>> {
    if rows.len() != targets.len() {
        return Err(Error::Dimension {
            expected: rows.len(),
            got: targets.len(),
        });
    }
    let folds: Vec<usize> = rows
        .iter()
        .map(|r| {
            plan.fold_of(&r.item_id)
                .ok_or_else(|| Error::invalid(format!("item `{}` is not in the fold plan", r.item_id)))
        })
        .collect::<Result<_>>()?;
    let per_fold: Vec<Result<Vec<(usize, f64)>>> = (0..plan.k)
        .into_par_iter()
        .map(|fold| {
            let tag = |e: Error| Error::Fold {
                fold,
                message: e.to_string(),
            };
            let mut train_rows = Vec::new();
            let mut train_targets = Vec::new();
            let mut held = Vec::new();
            for (i, (row, &f)) in rows.iter().zip(&folds).enumerate() {
                if f == fold {
                    held.push(i);
                } else {
                    train_rows.push(row.clone());
                    train_targets.push(targets[i]);
                }
            }
            if held.is_empty() {
                return Ok(Vec::new());
            }
            let model = trainer.fit(&train_rows, &train_targets).map_err(tag)?;
            let held_rows: Vec<FeatureRow> = held.iter().map(|&i| rows[i].clone()).collect();
            let preds = trainer.predict(&model, &held_rows).map_err(tag)?;
            if preds.len() != held.len() {
                return Err(tag(Error::Dimension {
                    expected: held.len(),
                    got: preds.len(),
                }));
            }
            Ok(held.into_iter().zip(preds).collect())
        })
        .collect();
    let mut out = vec![f64::NAN; rows.len()];
    for fold in per_fold {
        for (i, p) in fold? {
            out[i] = p;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackModel {
    pub l1: Language,
    pub intercept: f64,
    pub coefficients: IndexMap<String, f64>,
}

/// Named input columns for stacking.
pub type Columns = IndexMap<String, Vec<f64>>;

fn column_length(inputs: &Columns) -> Result<usize> {
    let n = inputs
        .values()
        .next()
        .map(Vec::len)
        .ok_or_else(|| Error::invalid("no input columns"))?;
    for (name, col) in inputs {
        if col.len() != n {
            return Err(Error::invalid(format!(
                "column `{name}` has {} values, expected {n}",
                col.len()
            )));
        }
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("column `{name}` has non-finite values")));
        }
    }
    Ok(n)
}

/// Ordinary least squares with an unpenalized intercept, solved on centered
/// normal equations with a small ridge on the slopes.
pub fn fit_stack(inputs: &Columns, targets: &[f64], l1: &Language) -> Result<StackModel> {
    let n = column_length(inputs)?;
    let p = inputs.len();
    if targets.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: targets.len(),
        });
    }
    if n < p + 1 {
        return Err(Error::invalid(format!("{n} rows cannot fit {p} columns plus intercept")));
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("targets must be finite"));
    }
    let cols: Vec<&Vec<f64>> = inputs.values().collect();
    if cols.iter().all(|c| c.iter().all(|v| *v == c[0])) {
        return Err(Error::invalid("every input column is constant"));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let x_mean: Vec<f64> = cols.iter().map(|c| mean(c)).collect();
    let y_mean = mean(targets);
    let xc = DMatrix::from_fn(n, p, |i, j| cols[j][i] - x_mean[j]);
    let yc = DVector::from_iterator(n, targets.iter().map(|t| t - y_mean));
    let mut gram = xc.transpose() * &xc;
    for j in 0..p {
        gram[(j, j)] += STACK_RIDGE;
    }
    let rhs = xc.transpose() * yc;
    let beta = gram
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| gram.lu().solve(&rhs))
        .ok_or_else(|| Error::invalid("normal equations are singular"))?;
    let intercept = y_mean - beta.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>();
    if !intercept.is_finite() || beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::invalid("stack solve produced non-finite parameters"));
    }
    Ok(StackModel {
        l1: l1.clone(),
        intercept,
        coefficients: inputs.keys().cloned().zip(beta.iter().copied()).collect(),
    })
}

/// Applies a stack to full-data base-model outputs. Column names must match
/// the training inputs exactly; order does not matter.
pub fn predict_stack(model: &StackModel, inputs: &Columns) -> Result<Vec<f64>> {
    let n = column_length(inputs)?;
    if inputs.len() != model.coefficients.len() {
        return Err(Error::Dimension {
            expected: model.coefficients.len(),
            got: inputs.len(),
        });
    }
    let mut out = vec![model.intercept; n];
    for (name, coef) in &model.coefficients {
        let col = inputs
            .get(name)
            .ok_or_else(|| Error::invalid(format!("stack input `{name}` missing")))?;
        for (o, v) in out.iter_mut().zip(col) {
            *o += coef * v;
        }
    }
    Ok(out)
}

/// Element-wise mean of prediction vectors.
pub fn average_ensemble(predictions: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = predictions
        .first()
        .ok_or_else(|| Error::invalid("no predictions to average"))?;
    if let Some(bad) = predictions.iter().find(|p| p.len() != first.len()) {
        return Err(Error::Dimension {
            expected: first.len(),
            got: bad.len(),
        });
    }
    let m = predictions.len() as f64;
    Ok((0..first.len())
        .map(|i| predictions.iter().map(|p| p[i]).sum::<f64>() / m)
        .collect())
}
