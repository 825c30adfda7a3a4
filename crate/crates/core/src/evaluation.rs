//! Metrics, per-language reports and the statistical-optimum simulation.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data_model::Language;
use crate::error::{Error, Result};

fn check_aligned(pred: &[f64], gold: &[f64]) -> Result<()> {
    if pred.len() != gold.len() {
        return Err(Error::Dimension {
            expected: gold.len(),
            got: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::invalid("empty prediction vector"));
    }
    Ok(())
}

pub fn rmse(pred: &[f64], gold: &[f64]) -> Result<f64> {
    check_aligned(pred, gold)?;
    let sse: f64 = pred.iter().zip(gold).map(|(p, g)| (p - g) * (p - g)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

/// Pearson product-moment correlation, clamped to [-1, 1].
pub fn pearson(pred: &[f64], gold: &[f64]) -> Result<f64> {
    check_aligned(pred, gold)?;
    if pred.len() < 2 {
        return Err(Error::invalid("correlation needs at least two points"));
    }
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<f64>() / n;
    let mg = gold.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (p, g) in pred.iter().zip(gold) {
        let (dp, dg) = (p - mp, g - mg);
        sxy += dp * dg;
        sxx += dp * dp;
        syy += dg * dg;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::invalid("correlation undefined for zero variance"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Items ordered by score, highest (easiest) first. Equal scores keep their
/// input order.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedCorpus {
    ids: Vec<String>,
    scores: Vec<f64>,
    rank_of: HashMap<String, usize>,
}

impl RankedCorpus {
    pub fn new(items: &[(String, f64)]) -> Result<Self> {
        if let Some((id, _)) = items.iter().find(|(_, s)| !s.is_finite()) {
            return Err(Error::invalid(format!("non-finite score for `{id}`")));
        }
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.sort_by(|&a, &b| items[b].1.total_cmp(&items[a].1));
        let mut rank_of = HashMap::with_capacity(items.len());
        for (rank, &i) in order.iter().enumerate() {
            if rank_of.insert(items[i].0.clone(), rank + 1).is_some() {
                return Err(Error::invalid(format!("duplicate item id `{}`", items[i].0)));
            }
        }
        Ok(RankedCorpus {
            ids: order.iter().map(|&i| items[i].0.clone()).collect(),
            scores: order.iter().map(|&i| items[i].1).collect(),
            rank_of,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Scores in rank order.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// 1-based rank of an item.
    pub fn rank_of(&self, item_id: &str) -> Option<usize> {
        self.rank_of.get(item_id).copied()
    }
}

/// Confidence-interval widths in ranks, per language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CiWidths {
    pub per_l1: BTreeMap<Language, usize>,
}

impl CiWidths {
    /// Published KVL rank widths: Spanish 69, Chinese 95, German 108.
    pub fn kvl() -> Self {
        let per_l1 = [("es", 69), ("zh", 95), ("de", 108)]
            .into_iter()
            .map(|(code, w)| (code.parse().expect("valid code"), w))
            .collect();
        CiWidths { per_l1 }
    }

    pub fn width(&self, l1: &Language) -> Result<usize> {
        self.per_l1
            .get(l1)
            .copied()
            .ok_or_else(|| Error::invalid(format!("no confidence width for {l1}")))
    }
}

/// Simulated predictions that stay within `±width` ranks of each item but
/// take the score farthest from its gold value. Equal distances resolve to
/// the lower score.
pub fn statistical_optimum(
    corpus: &RankedCorpus,
    eval_ids: &[String],
    widths: &CiWidths,
    l1: &Language,
) -> Result<Vec<f64>> {
    statistical_optimum_at(corpus, eval_ids, widths.width(l1)?)
}

pub fn statistical_optimum_at(corpus: &RankedCorpus, eval_ids: &[String], width: usize) -> Result<Vec<f64>> {
    let last = corpus.len().saturating_sub(1);
    eval_ids
        .iter()
        .map(|id| {
            let r = corpus
                .rank_of(id)
                .ok_or_else(|| Error::invalid(format!("item `{id}` not in corpus")))?
                - 1;
            let s = corpus.scores[r];
            // scores descend with rank, so the extremes sit at the window ends
            let high = corpus.scores[r.saturating_sub(width)];
            let low = corpus.scores[(r + width).min(last)];
            Ok(if s - low >= high - s { low } else { high })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub l1: Language,
    pub n: usize,
    pub rmse: f64,
    pub pcc: f64,
}

pub fn evaluate_report(pred: &[f64], gold: &[f64], l1: &Language) -> Result<MetricReport> {
    Ok(MetricReport {
        l1: l1.clone(),
        n: pred.len(),
        rmse: rmse(pred, gold)?,
        pcc: pearson(pred, gold)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub rmse: f64,
    pub pcc: f64,
}

/// One system's per-language metrics plus their unweighted mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemReport {
    pub system: String,
    pub per_l1: Vec<MetricReport>,
    pub mean: MeanMetrics,
}

pub fn aggregate(system: &str, per_l1: Vec<MetricReport>) -> Result<SystemReport> {
    if per_l1.is_empty() {
        return Err(Error::invalid("no per-language reports"));
    }
    let m = per_l1.len() as f64;
    let mean = MeanMetrics {
        rmse: per_l1.iter().map(|r| r.rmse).sum::<f64>() / m,
        pcc: per_l1.iter().map(|r| r.pcc).sum::<f64>() / m,
    };
    Ok(SystemReport {
        system: system.to_string(),
        per_l1,
        mean,
    })
}

/// Aligned text table: one row per system, RMSE and PCC per language and
/// for the mean.
pub fn render_table(systems: &[SystemReport]) -> String {
    let mut langs: Vec<Language> = Vec::new();
    for s in systems {
        for r in &s.per_l1 {
            if !langs.contains(&r.l1) {
                langs.push(r.l1.clone());
            }
        }
    }
    let mut header = vec!["System".to_string()];
    for l in &langs {
        header.push(format!("{} RMSE", l.name()));
        header.push(format!("{} PCC", l.name()));
    }
    header.push("Mean RMSE".into());
    header.push("Mean PCC".into());
    let mut rows = vec![header];
    for s in systems {
        let mut row = vec![s.system.clone()];
        for l in &langs {
            match s.per_l1.iter().find(|r| &r.l1 == l) {
                Some(r) => {
                    row.push(format!("{:.3}", r.rmse));
                    row.push(format!("{:.3}", r.pcc));
                }
                None => row.extend(["-".to_string(), "-".to_string()]),
            }
        }
        row.push(format!("{:.3}", s.mean.rmse));
        row.push(format!("{:.3}", s.mean.pcc));
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            if c == 0 {
                let _ = write!(line, "{cell:<w$}", w = widths[c]);
            } else {
                let _ = write!(line, "  {cell:>w$}", w = widths[c]);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}
