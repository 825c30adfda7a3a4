//! Boosted greedy trees built by re-scanning every candidate split with
//! filtered sums.

pub enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        missing_left: bool,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Node::Leaf(v) => *v,
            Node::Split {
                feature,
                threshold,
                missing_left,
                left,
                right,
            } => {
                let v = x[*feature];
                let go_left = if v.is_nan() { *missing_left } else { v < *threshold };
                if go_left {
                    left.eval(x)
                } else {
                    right.eval(x)
                }
            }
        }
    }

    /// Splits in preorder as (feature, threshold, missing_left).
    pub fn splits(&self, out: &mut Vec<(usize, f64, bool)>) {
        if let Node::Split {
            feature,
            threshold,
            missing_left,
            left,
            right,
        } = self
        {
            out.push((*feature, *threshold, *missing_left));
            left.splits(out);
            right.splits(out);
        }
    }
}

pub struct Params {
    pub max_depth: usize,
    pub lambda: f64,
    pub min_child_weight: f64,
    pub min_gain: f64,
    pub tie_tolerance: f64,
}

fn goes_left(x: &[f64], feature: usize, threshold: f64, missing_left: bool) -> bool {
    let v = x[feature];
    if v.is_nan() {
        missing_left
    } else {
        v < threshold
    }
}

fn objective(rows: &[usize], grad: &[f64], lambda: f64) -> f64 {
    let g: f64 = rows.iter().map(|&r| grad[r]).sum();
    g * g / (rows.len() as f64 + lambda)
}

pub fn build(x: &[Vec<f64>], grad: &[f64], rows: &[usize], depth: usize, p: &Params) -> Node {
    let g: f64 = rows.iter().map(|&r| grad[r]).sum();
    let leaf = Node::Leaf(-g / (rows.len() as f64 + p.lambda));
    if depth == p.max_depth {
        return leaf;
    }
    let parent = objective(rows, grad, p.lambda);
    let mut best: Option<(f64, usize, f64, bool)> = None;
    for feature in 0..x[0].len() {
        let mut values: Vec<f64> = rows.iter().map(|&r| x[r][feature]).filter(|v| !v.is_nan()).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let mut threshold = w[0] + (w[1] - w[0]) / 2.0;
            if threshold <= w[0] {
                threshold = w[1];
            }
            for missing_left in [true, false] {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&i| goes_left(&x[i], feature, threshold, missing_left));
                if (l.len() as f64) < p.min_child_weight || (r.len() as f64) < p.min_child_weight {
                    continue;
                }
                let gain = 0.5 * (objective(&l, grad, p.lambda) + objective(&r, grad, p.lambda) - parent);
                if best.is_none_or(|b| gain > b.0 + p.tie_tolerance * b.0.abs().max(1.0)) {
                    best = Some((gain, feature, threshold, missing_left));
                }
            }
        }
    }
    match best {
        Some((gain, feature, threshold, missing_left)) if gain > p.min_gain => {
            let (l, r): (Vec<usize>, Vec<usize>) =
                rows.iter().partition(|&&i| goes_left(&x[i], feature, threshold, missing_left));
            Node::Split {
                feature,
                threshold,
                missing_left,
                left: Box::new(build(x, grad, &l, depth + 1, p)),
                right: Box::new(build(x, grad, &r, depth + 1, p)),
            }
        }
        _ => leaf,
    }
}

pub struct Boosted {
    pub base: f64,
    pub lr: f64,
    pub trees: Vec<Node>,
}

impl Boosted {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.base + self.trees.iter().map(|t| self.lr * t.eval(x)).sum::<f64>()
    }
}

pub fn boost(x: &[Vec<f64>], y: &[f64], n_trees: usize, lr: f64, p: &Params) -> Boosted {
    let n = y.len() as f64;
    let m = y.iter().sum::<f64>() / n;
    let base = m + y.iter().map(|v| v - m).sum::<f64>() / n;
    let mut pred = vec![base; y.len()];
    let rows: Vec<usize> = (0..y.len()).collect();
    let mut trees = Vec::new();
    for _ in 0..n_trees {
        let grad: Vec<f64> = pred.iter().zip(y).map(|(p, t)| p - t).collect();
        let tree = build(x, &grad, &rows, 0, p);
        for (pi, xi) in pred.iter_mut().zip(x) {
            *pi += lr * tree.eval(xi);
        }
        trees.push(tree);
    }
    Boosted { base, lr, trees }
}
