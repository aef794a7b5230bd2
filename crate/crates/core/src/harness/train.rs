//! Batch objectives and the SGD training loop.

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::baselines::traditional_mil_cost_and_grad;
use crate::error::{Error, Result};
use crate::gradient::log_likelihood_and_logit_grad;
use crate::harness::model::{backward_trace, forward_trace, Architecture, ModelParams, ParamGrads};
use crate::harness::scene::{generate_scenes, GlyphSet, SceneSample, DEFAULT_CANVAS, DEFAULT_GLYPH_SIZE};
use crate::rng::{stream_rng, Stream};

/// Training loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// `-log Prb(L | softmax(logits))` with the per-location softmax.
    Exact,
    /// Max-pooling MIL cost over the globally normalized logits.
    TraditionalMil,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Rate for the first half of the epochs.
    pub learning_rate: f64,
    /// Rate for the second half.
    pub final_learning_rate: f64,
    /// Heavy-ball coefficient; zero gives plain SGD.
    pub momentum: f64,
    pub train_size: usize,
    pub glyphs_per_scene: usize,
    pub num_classes: usize,
    pub glyph_size: usize,
    pub height: usize,
    pub width: usize,
    pub feature_channels: Vec<usize>,
    pub objective: Objective,
    /// Fill `wall_ms` in the epoch log. Off by default so logs are
    /// reproducible byte for byte.
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            epochs: 20,
            batch_size: 64,
            learning_rate: 0.01,
            final_learning_rate: 0.001,
            momentum: 0.9,
            train_size: 6000,
            glyphs_per_scene: 2,
            num_classes: 5,
            glyph_size: DEFAULT_GLYPH_SIZE,
            height: DEFAULT_CANVAS,
            width: DEFAULT_CANVAS,
            feature_channels: vec![16, 32],
            objective: Objective::Exact,
            record_wall_time: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.epochs < 2 {
            return bad("at least two epochs are required");
        }
        if self.batch_size == 0 || self.train_size == 0 {
            return bad("batch and training set sizes must be positive");
        }
        if !(self.learning_rate > 0.0 && self.final_learning_rate > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.learning_rate.is_infinite() || self.final_learning_rate.is_infinite() {
            return bad("learning rates must be finite");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        self.architecture().validate()?;
        if self.architecture().output_size(self.height, self.width).is_none() {
            return Err(Error::InputTooSmall { height: self.height, width: self.width });
        }
        Ok(())
    }

    pub fn architecture(&self) -> Architecture {
        Architecture::new(self.num_classes, self.feature_channels.clone())
    }

    /// Rate of a 1-based epoch: epochs starting before the halfway point use
    /// the initial rate.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        if ((epoch - 1) as f64) < 0.5 * self.epochs as f64 {
            self.learning_rate
        } else {
            self.final_learning_rate
        }
    }

    pub fn glyphs(&self) -> Result<GlyphSet> {
        GlyphSet::from_seed(self.seed, self.num_classes, self.glyph_size)
    }

    pub fn training_scenes(&self, glyphs: &GlyphSet) -> Result<Vec<SceneSample>> {
        generate_scenes(
            self.seed,
            Stream::TrainScenes,
            glyphs,
            self.train_size,
            self.glyphs_per_scene,
            self.height,
            self.width,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sample training loss over the epoch, taken as each batch is
    /// visited.
    pub mean_nll: f64,
    pub lr: f64,
    pub wall_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub params: ModelParams,
    pub log: Vec<EpochRecord>,
}

/// Sum of per-sample losses and their summed parameter gradients, scaled by
/// `weight`. `sample_grad` returns the loss and its logit gradient.
fn accumulate<F>(params: &ModelParams, batch: &[SceneSample], weight: f64, mut sample_grad: F) -> Result<(f64, ParamGrads)>
where
    F: FnMut(usize, &SceneSample, &crate::tensor::LogitTensor) -> Result<(f64, Vec<f64>)>,
{
    let mut total = 0.0;
    let mut grads = ParamGrads::zeros_like(params);
    for (index, sample) in batch.iter().enumerate() {
        let trace = forward_trace(params, &sample.image)?;
        let (loss, mut dlogits) = sample_grad(index, sample, &trace.logits()?)?;
        dlogits.iter_mut().for_each(|g| *g *= weight);
        total += loss;
        grads.add_assign(&backward_trace(params, &trace, &dlogits)?);
    }
    Ok((total, grads))
}

/// Mean over the batch of `-log Prb(L | softmax(model(image)))` and its
/// parameter gradient.
pub fn nll_objective(params: &ModelParams, batch: &[SceneSample]) -> Result<(f64, ParamGrads)> {
    batch_objective(Objective::Exact, params, batch)
}

/// Mean traditional MIL cost over the batch and its parameter gradient.
pub fn mil_objective(params: &ModelParams, batch: &[SceneSample]) -> Result<(f64, ParamGrads)> {
    batch_objective(Objective::TraditionalMil, params, batch)
}

pub fn batch_objective(objective: Objective, params: &ModelParams, batch: &[SceneSample]) -> Result<(f64, ParamGrads)> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    let weight = 1.0 / batch.len() as f64;
    let (total, grads) = match objective {
        Objective::Exact => accumulate(params, batch, weight, |index, sample, logits| {
            let (r, g) = log_likelihood_and_logit_grad(&sample.labels, logits).map_err(|e| match e {
                Error::ZeroProbability => Error::ZeroProbabilitySample { index },
                other => other,
            })?;
            Ok((-r.log_prob, g.data.into_iter().map(|v| -v).collect()))
        })?,
        Objective::TraditionalMil => accumulate(params, batch, weight, |_, sample, logits| {
            let (cost, g) = traditional_mil_cost_and_grad(&sample.labels, logits)?;
            Ok((cost, g.data))
        })?,
    };
    Ok((total * weight, grads))
}

fn check_divergence(epoch: usize, value: f64, initial: f64) -> Result<()> {
    if !value.is_finite() || value > 10.0 * initial {
        return Err(Error::DivergedObjective { epoch, value, initial });
    }
    Ok(())
}

/// [`train_with`] without a per-epoch callback.
pub fn train(config: &TrainConfig) -> Result<Trained> {
    train_with(config, |_| {})
}

/// Minibatch SGD with heavy-ball momentum (`v = momentum * v + g`,
/// `params -= lr * v`) over a reshuffled training set each epoch. The initial
/// objective is the first batch's loss before any update; an epoch mean
/// above ten times that value aborts training.
pub fn train_with<F: FnMut(&EpochRecord)>(config: &TrainConfig, mut on_epoch: F) -> Result<Trained> {
    config.validate()?;
    let glyphs = config.glyphs()?;
    let scenes = config.training_scenes(&glyphs)?;
    let mut params = ModelParams::init(config.architecture(), &mut stream_rng(config.seed, Stream::Init))?;
    let mut velocity = ParamGrads::zeros_like(&params);
    let mut shuffle_rng = stream_rng(config.seed, Stream::Shuffle);
    let mut order: Vec<usize> = (0..scenes.len()).collect();
    let mut batch = Vec::with_capacity(config.batch_size);
    let mut initial = None;
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let lr = config.learning_rate_at(epoch);
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| scenes[i].clone()));
            let (loss, grads) = batch_objective(config.objective, &params, &batch)?;
            let initial = *initial.get_or_insert(loss);
            if !loss.is_finite() {
                return Err(Error::DivergedObjective { epoch, value: loss, initial });
            }
            total += loss * chunk.len() as f64;
            velocity.decay_add(config.momentum, &grads);
            params.sgd_step(&velocity, lr);
        }
        let mean_nll = total / scenes.len() as f64;
        check_divergence(epoch, mean_nll, initial.expect("at least one batch"))?;
        let wall_ms = config.record_wall_time.then(|| start.elapsed().as_millis() as u64);
        let record = EpochRecord { epoch, mean_nll, lr, wall_ms };
        on_epoch(&record);
        log.push(record);
    }
    Ok(Trained { params, log })
}
