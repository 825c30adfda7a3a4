//! Gradient-boosted regression trees with exact SHAP attributions.
//!
//! Boosting uses the squared-error objective with second-order leaf weights
//! (hessian 1 per row), L2 leaf regularization `lambda` and a
//! `min_child_weight` constraint, as in XGBoost's regressor. Splits are
//! found by exact enumeration of midpoints between consecutive distinct
//! values; a row goes left when `x < threshold`. Missing values (`None`, or
//! NaN internally) follow the split's default branch, which is the side that
//! gave the larger gain during training (left when equal or when the node saw
//! no missing values).
//!
//! Ties between equally good splits go to the lowest feature index, then the
//! lowest threshold, then missing-left, so fitting is deterministic even
//! though the per-feature search runs in parallel.
//!
//! Two SHAP flavors are available. The interventional one (default) explains
//! `f(x)` against a background set: `base_value` is the mean prediction over
//! the background and each background row contributes the exact Shapley
//! values of the game `v(S) = f(x_S, z_rest)`, computed per tree by walking
//! only the paths where `x` and `z` disagree. The tree-path-dependent flavor
//! uses the training covers stored in the trees instead of a background.

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureRow;

/// Minimum loss reduction for a split to be kept.
pub const MIN_SPLIT_GAIN: f64 = 1e-10;

/// Relative margin a split's gain must exceed the incumbent's by to replace
/// it. Splits that induce the same partition can differ in gain by rounding
/// alone; this keeps such ties with the earlier candidate.
pub const GAIN_TIE_TOLERANCE: f64 = 1e-12;

fn beats(gain: f64, incumbent: Option<&SplitCandidate>) -> bool {
    incumbent.is_none_or(|b| gain > b.gain + GAIN_TIE_TOLERANCE * b.gain.abs().max(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub max_depth: usize,
    pub learning_rate: f64,
    pub n_estimators: usize,
    pub min_child_weight: f64,
    pub lambda: f64,
    /// Recorded for provenance; fitting itself has no random component.
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            max_depth: 3,
            learning_rate: 0.1,
            n_estimators: 200,
            min_child_weight: 1.0,
            lambda: 1.0,
            seed: 0,
        }
    }
}

impl GbtParams {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(self.lambda >= 0.0 && self.min_child_weight >= 0.0) {
            return Err(Error::invalid("lambda and min_child_weight must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreeNode {
    Leaf {
        value: f64,
        cover: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        default_branch: Branch,
        left: usize,
        right: usize,
        cover: f64,
    },
}

impl TreeNode {
    pub fn cover(&self) -> f64 {
        match self {
            TreeNode::Leaf { cover, .. } | TreeNode::Split { cover, .. } => *cover,
        }
    }
}

/// A tree stored as a node array with the root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    /// Index of the child `row` descends into at split `node`.
    fn child(&self, node: usize, row: &[f64]) -> usize {
        match &self.nodes[node] {
            TreeNode::Split {
                feature,
                threshold,
                default_branch,
                left,
                right,
                ..
            } => {
                let v = row[*feature];
                let go_left = if v.is_nan() {
                    *default_branch == Branch::Left
                } else {
                    v < *threshold
                };
                if go_left {
                    *left
                } else {
                    *right
                }
            }
            TreeNode::Leaf { .. } => unreachable!("leaf has no children"),
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut node = 0;
        loop {
            match &self.nodes[node] {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Split { .. } => node = self.child(node, row),
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, n: usize) -> usize {
            match &t.nodes[n] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub base_score: f64,
    pub learning_rate: f64,
    pub feature_schema: Vec<String>,
    pub trees: Vec<Tree>,
    pub params: GbtParams,
    /// Smallest and largest training target.
    pub target_range: (f64, f64),
}

/// Dense rows with NaN for missing values, in schema order.
pub fn dense_rows(schema: &[String], rows: &[FeatureRow]) -> Result<Vec<Vec<f64>>> {
    rows.iter().map(|r| dense_row(schema, r)).collect()
}

fn dense_row(schema: &[String], row: &FeatureRow) -> Result<Vec<f64>> {
    if row.values.len() != schema.len() {
        return Err(Error::invalid(format!(
            "row {} has {} features, model expects {}",
            row.item_id,
            row.values.len(),
            schema.len()
        )));
    }
    schema
        .iter()
        .map(|name| match row.values.get(name) {
            Some(v) => Ok(v.unwrap_or(f64::NAN)),
            None => Err(Error::invalid(format!(
                "row {} lacks feature `{name}`",
                row.item_id
            ))),
        })
        .collect()
}

/// Mean with one refinement pass so constant inputs come back exactly.
fn exact_mean(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    m + values.iter().map(|v| v - m).sum::<f64>() / n
}

#[derive(Debug, Clone, Copy)]
struct SplitCandidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    default_branch: Branch,
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    grad: &'a [f64],
    params: &'a GbtParams,
    nodes: Vec<TreeNode>,
}

fn score(g: f64, h: f64, lambda: f64) -> f64 {
    g * g / (h + lambda)
}

impl TreeBuilder<'_> {
    fn best_split_for_feature(&self, feature: usize, rows: &[usize], g_total: f64, h_total: f64) -> Option<SplitCandidate> {
        let lambda = self.params.lambda;
        let mcw = self.params.min_child_weight;
        let mut present: Vec<(f64, usize)> = Vec::with_capacity(rows.len());
        let (mut g_miss, mut h_miss) = (0.0, 0.0);
        for &r in rows {
            let v = self.x[r][feature];
            if v.is_nan() {
                g_miss += self.grad[r];
                h_miss += 1.0;
            } else {
                present.push((v, r));
            }
        }
        present.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let parent = score(g_total, h_total, lambda);
        let mut best: Option<SplitCandidate> = None;
        let (mut gl, mut hl) = (0.0, 0.0);
        for i in 0..present.len().saturating_sub(1) {
            gl += self.grad[present[i].1];
            hl += 1.0;
            let (lo, hi) = (present[i].0, present[i + 1].0);
            if lo == hi {
                continue;
            }
            let mut threshold = lo + (hi - lo) / 2.0;
            if threshold <= lo {
                threshold = hi;
            }
            let gr = g_total - g_miss - gl;
            let hr = h_total - h_miss - hl;
            let options: &[Branch] = if h_miss > 0.0 {
                &[Branch::Left, Branch::Right]
            } else {
                &[Branch::Left]
            };
            for &default_branch in options {
                let (gl2, hl2, gr2, hr2) = match default_branch {
                    Branch::Left => (gl + g_miss, hl + h_miss, gr, hr),
                    Branch::Right => (gl, hl, gr + g_miss, hr + h_miss),
                };
                if hl2 < mcw || hr2 < mcw {
                    continue;
                }
                let gain = 0.5 * (score(gl2, hl2, lambda) + score(gr2, hr2, lambda) - parent);
                if beats(gain, best.as_ref()) {
                    best = Some(SplitCandidate {
                        gain,
                        feature,
                        threshold,
                        default_branch,
                    });
                }
            }
        }
        best
    }

    fn build(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let g: f64 = rows.iter().map(|&r| self.grad[r]).sum();
        let h = rows.len() as f64;
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            value: -g / (h + self.params.lambda),
            cover: h,
        });
        if depth >= self.params.max_depth {
            return id;
        }
        let n_features = self.x.first().map_or(0, Vec::len);
        let per_feature: Vec<Option<SplitCandidate>> = (0..n_features)
            .into_par_iter()
            .map(|f| self.best_split_for_feature(f, &rows, g, h))
            .collect();
        let mut best: Option<SplitCandidate> = None;
        for cand in per_feature.into_iter().flatten() {
            if beats(cand.gain, best.as_ref()) {
                best = Some(cand);
            }
        }
        let Some(split) = best.filter(|b| b.gain > MIN_SPLIT_GAIN) else {
            return id;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| {
            let v = self.x[r][split.feature];
            if v.is_nan() {
                split.default_branch == Branch::Left
            } else {
                v < split.threshold
            }
        });
        let left = self.build(left_rows, depth + 1);
        let right = self.build(right_rows, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            default_branch: split.default_branch,
            left,
            right,
            cover: h,
        };
        id
    }
}

/// Fits on dense rows (NaN = missing) with the given feature names.
pub fn fit_dense(schema: Vec<String>, x: &[Vec<f64>], targets: &[f64], params: &GbtParams) -> Result<GbtModel> {
    params.validate()?;
    if x.len() != targets.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            got: targets.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::invalid("boosting needs at least two rows"));
    }
    if let Some(bad) = x.iter().find(|r| r.len() != schema.len()) {
        return Err(Error::Dimension {
            expected: schema.len(),
            got: bad.len(),
        });
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("targets must be finite"));
    }
    let base_score = exact_mean(targets);
    let mut preds = vec![base_score; x.len()];
    let mut trees = Vec::with_capacity(params.n_estimators);
    for _ in 0..params.n_estimators {
        let grad: Vec<f64> = preds.iter().zip(targets).map(|(p, y)| p - y).collect();
        let mut builder = TreeBuilder {
            x,
            grad: &grad,
            params,
            nodes: Vec::new(),
        };
        builder.build((0..x.len()).collect(), 0);
        let tree = Tree {
            nodes: builder.nodes,
        };
        for (p, row) in preds.iter_mut().zip(x) {
            *p += params.learning_rate * tree.predict(row);
        }
        trees.push(tree);
    }
    let lo = targets.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = targets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(GbtModel {
        base_score,
        learning_rate: params.learning_rate,
        feature_schema: schema,
        trees,
        params: params.clone(),
        target_range: (lo, hi),
    })
}

/// Fits on feature rows; the schema is taken from the first row and every
/// row must share it.
pub fn fit(rows: &[FeatureRow], targets: &[f64], params: &GbtParams) -> Result<GbtModel> {
    let schema: Vec<String> = rows
        .first()
        .ok_or_else(|| Error::invalid("no training rows"))?
        .values
        .keys()
        .cloned()
        .collect();
    let x = dense_rows(&schema, rows)?;
    fit_dense(schema, &x, targets, params)
}

impl GbtModel {
    pub fn predict_dense(&self, row: &[f64]) -> f64 {
        self.base_score
            + self.learning_rate * self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    pub fn predict(&self, row: &FeatureRow) -> Result<f64> {
        Ok(self.predict_dense(&dense_row(&self.feature_schema, row)?))
    }

    pub fn is_extrapolated(&self, prediction: f64) -> bool {
        prediction < self.target_range.0 || prediction > self.target_range.1
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapFlavor {
    #[default]
    Interventional,
    TreePathDependent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub item_id: String,
    pub base_value: f64,
    pub prediction: f64,
    pub phis: IndexMap<String, f64>,
    pub groups: IndexMap<String, f64>,
}

impl Explanation {
    /// `|base_value + sum(phis) - prediction|`.
    pub fn additivity_error(&self) -> f64 {
        (self.base_value + self.phis.values().sum::<f64>() - self.prediction).abs()
    }
}

/// `(a-1)! b! / (a+b)!`, the Shapley weight of a member of the
/// "must be present" set of size `a` when `b` players must be absent.
fn coalition_weight(a: usize, b: usize) -> f64 {
    // (a-1)! b! / (a+b)! = 1 / (a * C(a+b, b))
    let mut binom = 1.0;
    for i in 0..b {
        binom = binom * (a + b - i) as f64 / (i + 1) as f64;
    }
    1.0 / (a as f64 * binom)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Free,
    Foreground,
    Background,
}

struct InterventionalWalk<'a> {
    tree: &'a Tree,
    x: &'a [f64],
    z: &'a [f64],
    side: Vec<Side>,
    fg: Vec<usize>,
    bg: Vec<usize>,
    phi: &'a mut [f64],
    scale: f64,
}

impl InterventionalWalk<'_> {
    fn walk(&mut self, node: usize) {
        let feature = match &self.tree.nodes[node] {
            TreeNode::Leaf { value, .. } => {
                let v = value * self.scale;
                let (a, b) = (self.fg.len(), self.bg.len());
                if a > 0 {
                    let w = coalition_weight(a, b);
                    for &i in &self.fg {
                        self.phi[i] += v * w;
                    }
                }
                if b > 0 {
                    let w = coalition_weight(b, a);
                    for &j in &self.bg {
                        self.phi[j] -= v * w;
                    }
                }
                return;
            }
            TreeNode::Split { feature, .. } => *feature,
        };
        let cx = self.tree.child(node, self.x);
        let cz = self.tree.child(node, self.z);
        if cx == cz {
            return self.walk(cx);
        }
        match self.side[feature] {
            Side::Foreground => self.walk(cx),
            Side::Background => self.walk(cz),
            Side::Free => {
                self.side[feature] = Side::Foreground;
                self.fg.push(feature);
                self.walk(cx);
                self.fg.pop();
                self.side[feature] = Side::Background;
                self.bg.push(feature);
                self.walk(cz);
                self.bg.pop();
                self.side[feature] = Side::Free;
            }
        }
    }
}

fn interventional_phis(model: &GbtModel, x: &[f64], background: &[Vec<f64>]) -> (f64, Vec<f64>) {
    let n = model.feature_schema.len();
    let mut phi = vec![0.0; n];
    let mut base = 0.0;
    for z in background {
        base += model.predict_dense(z);
        for tree in &model.trees {
            let mut walk = InterventionalWalk {
                tree,
                x,
                z,
                side: vec![Side::Free; n],
                fg: Vec::new(),
                bg: Vec::new(),
                phi: &mut phi,
                scale: model.learning_rate,
            };
            walk.walk(0);
        }
    }
    let m = background.len() as f64;
    phi.iter_mut().for_each(|p| *p /= m);
    (base / m, phi)
}

#[derive(Clone, Copy, Default)]
struct PathElement {
    feature: Option<usize>,
    zero_fraction: f64,
    one_fraction: f64,
    pweight: f64,
}

fn extend_path(path: &mut Vec<PathElement>, zero_fraction: f64, one_fraction: f64, feature: Option<usize>) {
    let depth = path.len();
    path.push(PathElement {
        feature,
        zero_fraction,
        one_fraction,
        pweight: if depth == 0 { 1.0 } else { 0.0 },
    });
    for i in (0..depth).rev() {
        path[i + 1].pweight += one_fraction * path[i].pweight * (i + 1) as f64 / (depth + 1) as f64;
        path[i].pweight = zero_fraction * path[i].pweight * (depth - i) as f64 / (depth + 1) as f64;
    }
}

fn unwind_path(path: &mut Vec<PathElement>, index: usize) {
    let depth = path.len() - 1;
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let mut next = path[depth].pweight;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = path[i].pweight;
            path[i].pweight = next * (depth + 1) as f64 / ((i + 1) as f64 * one);
            next = tmp - path[i].pweight * zero * (depth - i) as f64 / (depth + 1) as f64;
        } else {
            path[i].pweight = path[i].pweight * (depth + 1) as f64 / (zero * (depth - i) as f64);
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
    path.pop();
}

fn unwound_sum(path: &[PathElement], index: usize) -> f64 {
    let depth = path.len() - 1;
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let mut next = path[depth].pweight;
    let mut total = 0.0;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = next * (depth + 1) as f64 / ((i + 1) as f64 * one);
            total += tmp;
            next = path[i].pweight - tmp * zero * (depth - i) as f64 / (depth + 1) as f64;
        } else {
            total += path[i].pweight / zero * (depth + 1) as f64 / (depth - i) as f64;
        }
    }
    total
}

#[allow(clippy::too_many_arguments)]
fn tree_path_walk(
    tree: &Tree,
    x: &[f64],
    node: usize,
    mut path: Vec<PathElement>,
    zero_fraction: f64,
    one_fraction: f64,
    feature: Option<usize>,
    phi: &mut [f64],
    scale: f64,
) {
    extend_path(&mut path, zero_fraction, one_fraction, feature);
    match &tree.nodes[node] {
        TreeNode::Leaf { value, .. } => {
            for i in 1..path.len() {
                let w = unwound_sum(&path, i);
                let el = path[i];
                phi[el.feature.expect("non-root element")] +=
                    w * (el.one_fraction - el.zero_fraction) * value * scale;
            }
        }
        TreeNode::Split {
            feature: split_feature,
            left,
            right,
            cover,
            ..
        } => {
            let hot = tree.child(node, x);
            let cold = if hot == *left { *right } else { *left };
            let mut incoming_zero = 1.0;
            let mut incoming_one = 1.0;
            if let Some(k) = (1..path.len()).find(|&k| path[k].feature == Some(*split_feature)) {
                incoming_zero = path[k].zero_fraction;
                incoming_one = path[k].one_fraction;
                unwind_path(&mut path, k);
            }
            let hot_zero = tree.nodes[hot].cover() / cover;
            let cold_zero = tree.nodes[cold].cover() / cover;
            tree_path_walk(
                tree,
                x,
                hot,
                path.clone(),
                hot_zero * incoming_zero,
                incoming_one,
                Some(*split_feature),
                phi,
                scale,
            );
            tree_path_walk(
                tree,
                x,
                cold,
                path,
                cold_zero * incoming_zero,
                0.0,
                Some(*split_feature),
                phi,
                scale,
            );
        }
    }
}

/// Cover-weighted mean leaf value.
fn expected_value(tree: &Tree, node: usize) -> f64 {
    match &tree.nodes[node] {
        TreeNode::Leaf { value, .. } => *value,
        TreeNode::Split {
            left, right, cover, ..
        } => {
            (tree.nodes[*left].cover() * expected_value(tree, *left)
                + tree.nodes[*right].cover() * expected_value(tree, *right))
                / cover
        }
    }
}

fn path_dependent_phis(model: &GbtModel, x: &[f64]) -> (f64, Vec<f64>) {
    let mut phi = vec![0.0; model.feature_schema.len()];
    let mut base = model.base_score;
    for tree in &model.trees {
        base += model.learning_rate * expected_value(tree, 0);
        tree_path_walk(tree, x, 0, Vec::new(), 1.0, 1.0, None, &mut phi, model.learning_rate);
    }
    (base, phi)
}

/// Exact SHAP values for one row. `background` is required (and must be
/// nonempty) for the interventional flavor and ignored otherwise.
pub fn shap_values(
    model: &GbtModel,
    row: &FeatureRow,
    background: &[FeatureRow],
    flavor: ShapFlavor,
) -> Result<Explanation> {
    let x = dense_row(&model.feature_schema, row)?;
    let bg = match flavor {
        ShapFlavor::Interventional => {
            if background.is_empty() {
                return Err(Error::invalid("background set is empty"));
            }
            dense_rows(&model.feature_schema, background)?
        }
        ShapFlavor::TreePathDependent => Vec::new(),
    };
    Ok(explain_dense(model, &row.item_id, &x, &bg, flavor))
}

/// Like [`shap_values`] on already densified rows.
pub fn explain_dense(model: &GbtModel, item_id: &str, x: &[f64], background: &[Vec<f64>], flavor: ShapFlavor) -> Explanation {
    let (base_value, phi) = match flavor {
        ShapFlavor::Interventional => interventional_phis(model, x, background),
        ShapFlavor::TreePathDependent => path_dependent_phis(model, x),
    };
    Explanation {
        item_id: item_id.to_string(),
        base_value,
        prediction: model.predict_dense(x),
        phis: model.feature_schema.iter().cloned().zip(phi).collect(),
        groups: IndexMap::new(),
    }
}

/// Explains many rows in parallel; output order follows `rows`.
pub fn explain_all(
    model: &GbtModel,
    rows: &[FeatureRow],
    background: &[FeatureRow],
    flavor: ShapFlavor,
) -> Result<Vec<Explanation>> {
    let x = dense_rows(&model.feature_schema, rows)?;
    let bg = match flavor {
        ShapFlavor::Interventional => {
            if background.is_empty() {
                return Err(Error::invalid("background set is empty"));
            }
            dense_rows(&model.feature_schema, background)?
        }
        ShapFlavor::TreePathDependent => Vec::new(),
    };
    Ok(rows
        .par_iter()
        .zip(x.par_iter())
        .map(|(r, xr)| explain_dense(model, &r.item_id, xr, &bg, flavor))
        .collect())
}

/// Feature groups: group name to member features.
pub type Grouping = IndexMap<String, Vec<String>>;

/// Sums phis within each group. Features outside every group pass through
/// as singleton groups named after the feature.
pub fn group_shap(expl: &Explanation, grouping: &Grouping) -> Result<IndexMap<String, f64>> {
    let mut owner: std::collections::HashMap<&str, &str> = std::collections::HashMap::new();
    for (group, members) in grouping {
        for m in members {
            if let Some(prev) = owner.insert(m, group) {
                return Err(Error::invalid(format!(
                    "feature `{m}` belongs to both `{prev}` and `{group}`"
                )));
            }
            if !expl.phis.contains_key(m) {
                return Err(Error::invalid(format!("group `{group}` names unknown feature `{m}`")));
            }
        }
    }
    let mut out: IndexMap<String, f64> = IndexMap::new();
    for (feature, phi) in &expl.phis {
        let key = owner.get(feature.as_str()).copied().unwrap_or(feature);
        *out.entry(key.to_string()).or_insert(0.0) += phi;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalImportance {
    pub features: IndexMap<String, f64>,
    pub groups: IndexMap<String, f64>,
}

/// Mean absolute SHAP value per feature and per group.
pub fn global_importance(expls: &[Explanation]) -> Result<GlobalImportance> {
    let first = expls
        .first()
        .ok_or_else(|| Error::invalid("no explanations to aggregate"))?;
    let mut features: IndexMap<String, f64> = first.phis.keys().map(|k| (k.clone(), 0.0)).collect();
    let mut groups: IndexMap<String, f64> = first.groups.keys().map(|k| (k.clone(), 0.0)).collect();
    for e in expls {
        if e.phis.len() != features.len()
            || e.groups.len() != groups.len()
            || !e.phis.keys().all(|k| features.contains_key(k))
            || !e.groups.keys().all(|k| groups.contains_key(k))
        {
            return Err(Error::invalid(format!(
                "explanation {} has a different schema",
                e.item_id
            )));
        }
        for (k, v) in &e.phis {
            features[k] += v.abs();
        }
        for (k, v) in &e.groups {
            groups[k] += v.abs();
        }
    }
    let n = expls.len() as f64;
    features.values_mut().for_each(|v| *v /= n);
    groups.values_mut().for_each(|v| *v /= n);
    Ok(GlobalImportance { features, groups })
}
