//! Soft-target cross-entropy over the tokens of a discrete rating scale and
//! probability-weighted decoding back to a continuous value.
//!
//! A continuous target `y` in `[min S, max S]` is spread over the two nearest
//! scale points `a` and `a + 1` with weights `(a + 1) - y` and `y - a`, so the
//! probability-weighted mean of the target is exactly `y`. Decoding takes the
//! model's distribution restricted to the scale tokens, renormalizes it and
//! returns its mean.

use crate::error::{Error, Result};

/// Discrete scale `S = {min..=max}` and the token id that spells each point.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScaleTokens {
    min_point: i64,
    token_of: Vec<usize>,
    vocab_size: usize,
}

impl ScaleTokens {
    /// `token_of[j]` is the token for point `min_point + j`.
    pub fn new(min_point: i64, token_of: Vec<usize>, vocab_size: usize) -> Result<Self> {
        if token_of.len() < 2 {
            return Err(Error::invalid("a scale needs at least two points"));
        }
        let mut seen = vec![false; vocab_size];
        for &t in &token_of {
            if t >= vocab_size {
                return Err(Error::invalid(format!(
                    "token {t} outside vocabulary of size {vocab_size}"
                )));
            }
            if std::mem::replace(&mut seen[t], true) {
                return Err(Error::invalid(format!("token {t} used for two scale points")));
            }
        }
        Ok(ScaleTokens {
            min_point,
            token_of,
            vocab_size,
        })
    }

    /// Points `min_point..min_point + k` on tokens `0..k`, followed by
    /// `extra_tokens` tokens that are not on the scale.
    pub fn contiguous(min_point: i64, k: usize, extra_tokens: usize) -> Result<Self> {
        ScaleTokens::new(min_point, (0..k).collect(), k + extra_tokens)
    }

    /// The usual 1..=5 difficulty scale with no extra tokens.
    pub fn one_to_five() -> Self {
        ScaleTokens::contiguous(1, 5, 0).expect("valid scale")
    }

    /// The {0, 1} scale used by yes/no prompts.
    pub fn binary() -> Self {
        ScaleTokens::contiguous(0, 2, 0).expect("valid scale")
    }

    pub fn len(&self) -> usize {
        self.token_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_of.is_empty()
    }

    pub fn min_point(&self) -> i64 {
        self.min_point
    }

    pub fn max_point(&self) -> i64 {
        self.min_point + self.token_of.len() as i64 - 1
    }

    pub fn points(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.token_of.len() as i64).map(move |j| self.min_point + j)
    }

    pub fn token(&self, point: i64) -> Option<usize> {
        let j = point.checked_sub(self.min_point)?;
        usize::try_from(j).ok().and_then(|j| self.token_of.get(j).copied())
    }

    pub fn tokens(&self) -> &[usize] {
        &self.token_of
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Midpoint of the scale, the limit of decoding a uniform distribution.
    pub fn midpoint(&self) -> f64 {
        (self.min_point + self.max_point()) as f64 / 2.0
    }
}

/// Target distribution with support on (at most) two adjacent scale tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftTarget {
    /// `(token, probability)`; the lower point first.
    probs: [(usize, f64); 2],
}

impl SoftTarget {
    pub fn entries(&self) -> &[(usize, f64)] {
        &self.probs
    }

    pub fn prob(&self, token: usize) -> f64 {
        self.probs
            .iter()
            .filter(|(t, _)| *t == token)
            .map(|(_, p)| p)
            .sum()
    }

    /// Dense expansion over the vocabulary.
    pub fn to_dense(&self, vocab_size: usize) -> Vec<f64> {
        let mut dense = vec![0.0; vocab_size];
        for &(t, p) in &self.probs {
            dense[t] += p;
        }
        dense
    }
}

/// Builds the two-point soft target whose weighted mean equals `y`.
/// The lower point is `a = min(floor(y), max S - 1)`.
pub fn build_soft_target(y: f64, scale: &ScaleTokens) -> Result<SoftTarget> {
    let lo = scale.min_point() as f64;
    let hi = scale.max_point() as f64;
    if !(lo..=hi).contains(&y) {
        return Err(Error::OutOfRange { value: y, lo, hi });
    }
    let a = (y.floor() as i64).min(scale.max_point() - 1);
    let af = a as f64;
    let lower = scale.token(a).expect("a is on the scale");
    let upper = scale.token(a + 1).expect("a + 1 is on the scale");
    Ok(SoftTarget {
        probs: [(lower, (af + 1.0) - y), (upper, y - af)],
    })
}

/// One-hot target on a single scale point (the discretized baseline).
pub fn hard_target(point: i64, scale: &ScaleTokens) -> Result<SoftTarget> {
    let token = scale.token(point).ok_or(Error::OutOfRange {
        value: point as f64,
        lo: scale.min_point() as f64,
        hi: scale.max_point() as f64,
    })?;
    Ok(SoftTarget {
        probs: [(token, 1.0), (token, 0.0)],
    })
}

/// Round-half-up discretization onto the scale.
pub fn discretize(y: f64, scale: &ScaleTokens) -> i64 {
    ((y + 0.5).floor() as i64).clamp(scale.min_point(), scale.max_point())
}

/// Predicted distribution over the whole vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution {
    probs: Vec<f64>,
}

impl TokenDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid("probabilities must be finite and nonnegative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        Ok(TokenDistribution { probs })
    }

    pub fn from_logits(logits: &[f64]) -> Self {
        TokenDistribution {
            probs: softmax(logits),
        }
    }

    pub fn uniform(vocab_size: usize) -> Self {
        TokenDistribution {
            probs: vec![1.0 / vocab_size as f64; vocab_size],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Total probability on the scale tokens; the rest is what decoding
    /// discards by renormalization.
    pub fn scale_mass(&self, scale: &ScaleTokens) -> f64 {
        scale.tokens().iter().map(|&t| self.probs[t]).sum()
    }
}

/// Numerically stable softmax; `-inf` entries get probability 0.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![f64::NAN; logits.len()];
    }
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `-sum_i p(i) log q(i)` over the target's support. A zero predicted
/// probability on a supported token gives `+inf`.
pub fn soft_cross_entropy(target: &SoftTarget, pred: &TokenDistribution) -> f64 {
    target
        .entries()
        .iter()
        .filter(|(_, p)| *p > 0.0)
        .map(|&(t, p)| {
            let q = pred.probs[t];
            if q <= 0.0 {
                f64::INFINITY
            } else {
                -p * q.ln()
            }
        })
        .sum()
}

/// The same loss computed directly from logits via log-sum-exp.
pub fn soft_cross_entropy_logits(target: &SoftTarget, logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    target
        .entries()
        .iter()
        .filter(|(_, p)| *p > 0.0)
        .map(|&(t, p)| p * (lse - logits[t]))
        .sum()
}

/// Gradient of the soft cross-entropy with respect to the logits:
/// `softmax(logits) - p`.
pub fn soft_ce_grad_logits(target: &SoftTarget, logits: &[f64]) -> Vec<f64> {
    let mut grad = softmax(logits);
    for &(t, p) in target.entries() {
        grad[t] -= p;
    }
    grad
}

/// Mean scale point under `pred`, renormalized over the scale tokens.
pub fn prob_weighted_mean(pred: &TokenDistribution, scale: &ScaleTokens) -> Result<f64> {
    weighted_mean_over_points(
        scale.points().map(|s| (s, pred.probs[scale.token(s).expect("on scale")])),
    )
}

fn weighted_mean_over_points(pairs: impl Iterator<Item = (i64, f64)>) -> Result<f64> {
    let (mut mass, mut acc) = (0.0, 0.0);
    for (s, p) in pairs {
        mass += p;
        acc += p * s as f64;
    }
    if !(mass > 0.0) {
        return Err(Error::invalid("no probability mass on scale tokens"));
    }
    Ok(acc / mass)
}

/// Scale point of the most probable scale token; ties go to the lower point.
pub fn argmax_point(pred: &TokenDistribution, scale: &ScaleTokens) -> i64 {
    let mut best = (scale.min_point(), f64::NEG_INFINITY);
    for s in scale.points() {
        let p = pred.probs[scale.token(s).expect("on scale")];
        if p > best.1 {
            best = (s, p);
        }
    }
    best.0
}

/// Temperature-scaled softmax over per-point log-probabilities followed by
/// the probability-weighted mean. `logprobs[j]` belongs to point
/// `min S + j`; `-inf` marks a point the model never proposed.
pub fn gscale(logprobs: &[f64], temperature: f64, scale: &ScaleTokens) -> Result<f64> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::invalid(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if logprobs.len() != scale.len() {
        return Err(Error::Dimension {
            expected: scale.len(),
            got: logprobs.len(),
        });
    }
    let scaled: Vec<f64> = logprobs.iter().map(|lp| lp / temperature).collect();
    let probs = softmax(&scaled);
    weighted_mean_over_points(scale.points().zip(probs))
}

/// Temperatures searched by [`fit_gscale_temperature`]: `2^j` for `j = -4..=8`.
pub fn default_temperature_grid() -> Vec<f64> {
    (-4..=8).map(|j| 2f64.powi(j)).collect()
}

/// Picks the grid temperature with the lowest mean out-of-fold squared error.
/// No parameter is fitted inside a fold, so the criterion is the average of
/// per-fold mean squared errors; folds are assigned round-robin by index.
/// Ties keep the smaller temperature.
pub fn fit_gscale_temperature(
    prompted_logprobs: &[Vec<f64>],
    targets: &[f64],
    folds: usize,
    scale: &ScaleTokens,
    grid: &[f64],
) -> Result<f64> {
    if prompted_logprobs.len() != targets.len() {
        return Err(Error::Dimension {
            expected: prompted_logprobs.len(),
            got: targets.len(),
        });
    }
    if folds < 1 || targets.len() < folds {
        return Err(Error::invalid(format!(
            "{} examples cannot be split into {folds} folds",
            targets.len()
        )));
    }
    if grid.is_empty() {
        return Err(Error::invalid("empty temperature grid"));
    }
    let mut best: Option<(f64, f64)> = None;
    for &t in grid {
        let mut fold_sse = vec![0.0; folds];
        let mut fold_n = vec![0usize; folds];
        for (i, (lp, y)) in prompted_logprobs.iter().zip(targets).enumerate() {
            let err = gscale(lp, t, scale)? - y;
            fold_sse[i % folds] += err * err;
            fold_n[i % folds] += 1;
        }
        let loss = fold_sse
            .iter()
            .zip(&fold_n)
            .map(|(s, &n)| s / n as f64)
            .sum::<f64>()
            / folds as f64;
        if best.is_none_or(|(_, l)| loss < l) {
            best = Some((t, loss));
        }
    }
    Ok(best.expect("grid is nonempty").0)
}
