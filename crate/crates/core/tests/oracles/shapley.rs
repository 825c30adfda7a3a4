//! Shapley values by enumerating all 2^n coalitions.

use vocabdiff::gbtree::{Branch, GbtModel, Tree, TreeNode};

fn next(tree: &Tree, node: usize, x: &[f64]) -> usize {
    match &tree.nodes[node] {
        TreeNode::Split {
            feature,
            threshold,
            default_branch,
            left,
            right,
            ..
        } => {
            let v = x[*feature];
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
        TreeNode::Leaf { .. } => unreachable!(),
    }
}

pub fn eval_tree(tree: &Tree, x: &[f64]) -> f64 {
    let mut n = 0;
    loop {
        match &tree.nodes[n] {
            TreeNode::Leaf { value, .. } => return *value,
            _ => n = next(tree, n, x),
        }
    }
}

pub fn eval_model(m: &GbtModel, x: &[f64]) -> f64 {
    m.base_score + m.trees.iter().map(|t| m.learning_rate * eval_tree(t, x)).sum::<f64>()
}

/// Conditional expectation of a tree given the features in `mask`, with
/// unknown features averaged by training cover.
fn cover_expectation(tree: &Tree, node: usize, x: &[f64], mask: u32) -> f64 {
    match &tree.nodes[node] {
        TreeNode::Leaf { value, .. } => *value,
        TreeNode::Split {
            feature,
            left,
            right,
            cover,
            ..
        } => {
            if mask & (1 << feature) != 0 {
                cover_expectation(tree, next(tree, node, x), x, mask)
            } else {
                (tree.nodes[*left].cover() * cover_expectation(tree, *left, x, mask)
                    + tree.nodes[*right].cover() * cover_expectation(tree, *right, x, mask))
                    / cover
            }
        }
    }
}

fn shapley_from_values(n: usize, v: &[f64]) -> Vec<f64> {
    let fact: Vec<f64> = (0..=n).scan(1.0, |acc, i| {
        if i > 0 {
            *acc *= i as f64;
        }
        Some(*acc)
    }).collect();
    (0..n)
        .map(|i| {
            let bit = 1usize << i;
            (0..v.len())
                .filter(|s| s & bit == 0)
                .map(|s| {
                    let size = s.count_ones() as usize;
                    fact[size] * fact[n - size - 1] / fact[n] * (v[s | bit] - v[s])
                })
                .sum()
        })
        .collect()
}

/// Interventional game: coalition features from `x`, the rest from a
/// background row, averaged over the background.
pub fn interventional(m: &GbtModel, x: &[f64], background: &[Vec<f64>]) -> (f64, Vec<f64>) {
    let n = x.len();
    let values: Vec<f64> = (0..1usize << n)
        .map(|s| {
            background
                .iter()
                .map(|z| {
                    let hybrid: Vec<f64> = (0..n).map(|i| if s & (1 << i) != 0 { x[i] } else { z[i] }).collect();
                    eval_model(m, &hybrid)
                })
                .sum::<f64>()
                / background.len() as f64
        })
        .collect();
    (values[0], shapley_from_values(n, &values))
}

/// Tree-path-dependent game using training covers.
pub fn path_dependent(m: &GbtModel, x: &[f64]) -> (f64, Vec<f64>) {
    let n = x.len();
    let values: Vec<f64> = (0..1u32 << n)
        .map(|s| {
            m.base_score
                + m.trees
                    .iter()
                    .map(|t| m.learning_rate * cover_expectation(t, 0, x, s))
                    .sum::<f64>()
        })
        .collect();
    (values[0], shapley_from_values(n, &values))
}
