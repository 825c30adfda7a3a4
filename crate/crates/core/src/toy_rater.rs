//! A small linear-softmax rater used to compare training losses and decoding
//! rules in isolation.
//!
//! The model maps a feature vector to logits over the scale tokens plus a few
//! distractor tokens that are not on the scale. Training is full-batch
//! gradient descent on the mean cross-entropy, either against soft two-point
//! targets or against one-hot targets on the rounded value.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::soft_target::{
    argmax_point, build_soft_target, discretize, hard_target, prob_weighted_mean,
    ScaleTokens, SoftTarget, TokenDistribution,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    Soft,
    Hard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InferenceMode {
    Weighted,
    Argmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub loss_mode: LossMode,
    pub inference_mode: InferenceMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5000,
            learning_rate: 5.0,
            seed: 0,
            loss_mode: LossMode::Soft,
            inference_mode: InferenceMode::Weighted,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning rate must be positive"));
        }
        Ok(())
    }
}

/// Linear map from features to logits; row `t` of `weights` scores token `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterModel {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub scale: ScaleTokens,
    pub distractor_count: usize,
    /// Configuration the model was trained with, if any.
    pub config: Option<TrainConfig>,
}

impl RaterModel {
    /// Scale points `1..=k` on tokens `0..k`, distractors after them.
    pub fn zeros(k: usize, distractor_count: usize, feature_dim: usize) -> Result<Self> {
        let scale = ScaleTokens::contiguous(1, k, distractor_count)?;
        let vocab = scale.vocab_size();
        Ok(RaterModel {
            weights: vec![vec![0.0; feature_dim]; vocab],
            bias: vec![0.0; vocab],
            scale,
            distractor_count,
            config: None,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn logits(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.feature_dim() {
            return Err(Error::Dimension {
                expected: self.feature_dim(),
                got: features.len(),
            });
        }
        Ok(self
            .weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(features).map(|(w, x)| w * x).sum::<f64>())
            .collect())
    }

    pub fn distribution(&self, features: &[f64]) -> Result<TokenDistribution> {
        Ok(TokenDistribution::from_logits(&self.logits(features)?))
    }

    pub fn predict(&self, features: &[f64], mode: InferenceMode) -> Result<f64> {
        let dist = self.distribution(features)?;
        match mode {
            InferenceMode::Weighted => prob_weighted_mean(&dist, &self.scale),
            InferenceMode::Argmax => Ok(argmax_point(&dist, &self.scale) as f64),
        }
    }

    fn params(&self) -> Vec<f64> {
        self.weights
            .iter()
            .flatten()
            .chain(&self.bias)
            .copied()
            .collect()
    }

    /// Overwrites all parameters from a flat vector laid out as `weights`
    /// row-major followed by `bias`.
    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        let dim = self.feature_dim();
        let vocab = self.bias.len();
        if flat.len() != vocab * (dim + 1) {
            return Err(Error::Dimension {
                expected: vocab * (dim + 1),
                got: flat.len(),
            });
        }
        for (t, row) in self.weights.iter_mut().enumerate() {
            row.copy_from_slice(&flat[t * dim..(t + 1) * dim]);
        }
        self.bias.copy_from_slice(&flat[vocab * dim..]);
        Ok(())
    }
}

fn targets_for(data: &[(Vec<f64>, f64)], scale: &ScaleTokens, mode: LossMode) -> Result<Vec<SoftTarget>> {
    data.iter()
        .map(|(_, y)| match mode {
            LossMode::Soft => build_soft_target(*y, scale),
            LossMode::Hard => {
                if !(scale.min_point() as f64..=scale.max_point() as f64).contains(y) {
                    return Err(Error::OutOfRange {
                        value: *y,
                        lo: scale.min_point() as f64,
                        hi: scale.max_point() as f64,
                    });
                }
                hard_target(discretize(*y, scale), scale)
            }
        })
        .collect()
}

/// Mean training loss and its gradient, flattened like [`RaterModel::set_params`].
pub fn objective_and_gradient(
    model: &RaterModel,
    data: &[(Vec<f64>, f64)],
    mode: LossMode,
) -> Result<(f64, Vec<f64>)> {
    let targets = targets_for(data, &model.scale, mode)?;
    objective_with_targets(model, data, &targets)
}

fn objective_with_targets(
    model: &RaterModel,
    data: &[(Vec<f64>, f64)],
    targets: &[SoftTarget],
) -> Result<(f64, Vec<f64>)> {
    let dim = model.feature_dim();
    let vocab = model.bias.len();
    let n = data.len() as f64;
    let mut grad = vec![0.0; vocab * (dim + 1)];
    let mut probs = vec![0.0; vocab];
    let mut logits = vec![0.0; vocab];
    let mut loss = 0.0;
    for ((x, _), target) in data.iter().zip(targets) {
        if x.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: x.len(),
            });
        }
        let mut max = f64::NEG_INFINITY;
        for (t, z) in logits.iter_mut().enumerate() {
            *z = model.bias[t] + model.weights[t].iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            max = max.max(*z);
        }
        let mut total = 0.0;
        for (p, z) in probs.iter_mut().zip(&logits) {
            *p = (z - max).exp();
            total += *p;
        }
        let log_total = total.ln();
        for p in probs.iter_mut() {
            *p /= total;
        }
        for &(t, q) in target.entries() {
            if q > 0.0 {
                loss += q * (log_total - (logits[t] - max));
            }
            probs[t] -= q;
        }
        for (t, g) in probs.iter().enumerate() {
            let row = &mut grad[t * dim..(t + 1) * dim];
            for (r, v) in row.iter_mut().zip(x) {
                *r += g * v / n;
            }
            grad[vocab * dim + t] += g / n;
        }
    }
    Ok((loss / n, grad))
}

/// Full-batch gradient descent from a seeded small random initialization.
pub fn train(data: &[(Vec<f64>, f64)], k: usize, distractor_count: usize, cfg: &TrainConfig) -> Result<RaterModel> {
    cfg.validate()?;
    let dim = data
        .first()
        .map(|(x, _)| x.len())
        .ok_or_else(|| Error::invalid("training data is empty"))?;
    if let Some((x, _)) = data.iter().find(|(x, _)| x.len() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            got: x.len(),
        });
    }
    let mut model = RaterModel::zeros(k, distractor_count, dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init: Vec<f64> = (0..model.params().len())
        .map(|_| rng.gen_range(-0.01..0.01))
        .collect();
    model.set_params(&init)?;
    let targets = targets_for(data, &model.scale, cfg.loss_mode)?;

    let mut params = init;
    let (initial_loss, _) = objective_with_targets(&model, data, &targets)?;
    for epoch in 0..cfg.epochs {
        let (loss, grad) = objective_with_targets(&model, data, &targets)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= cfg.learning_rate * g;
        }
        model.set_params(&params)?;
    }
    let (final_loss, _) = objective_with_targets(&model, data, &targets)?;
    if !final_loss.is_finite() || final_loss > initial_loss {
        return Err(Error::Diverged {
            epoch: cfg.epochs,
            loss: final_loss,
        });
    }
    model.config = Some(cfg.clone());
    Ok(model)
}

/// Noise-free benchmark `y = 1 + 4x` with `x ~ U[0, 1]`.
pub fn synthetic_benchmark(n: usize, seed: u64) -> Vec<(Vec<f64>, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x: f64 = rng.gen_range(0.0..=1.0);
            (vec![x], 1.0 + 4.0 * x)
        })
        .collect()
}

pub fn rmse_on(model: &RaterModel, data: &[(Vec<f64>, f64)], mode: InferenceMode) -> Result<f64> {
    let mut sse = 0.0;
    for (x, y) in data {
        let e = model.predict(x, mode)? - y;
        sse += e * e;
    }
    Ok((sse / data.len() as f64).sqrt())
}
