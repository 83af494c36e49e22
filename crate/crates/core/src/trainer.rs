//! Momentum-SGD training of the embedding network over sampled triplet epochs.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use crate::dataset::{Corpus, Partition};
use crate::error::{Error, Result};
use crate::model::ModelFile;
use crate::network::{batch_gradient, Gradients, LossConfig, NetworkParams, TripletInput};
use crate::sampler::{check_triplet, SamplerConfig, Strategy, TripletSampler};
use crate::transform::{fit_zscore, ZScoreStats};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub triplets_per_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub margin: f64,
    pub seed: u64,
    pub strategy: Strategy,
    pub allow_fallback: bool,
    /// Feed z-scored (TRAIN statistics) features to the network.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            triplets_per_epoch: 512,
            batch_size: 32,
            learning_rate: 0.01,
            momentum: 0.9,
            margin: 1.0,
            seed: 0,
            strategy: Strategy::Random,
            allow_fallback: true,
            standardize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Data(m));
        if self.triplets_per_epoch == 0 {
            return fail("triplets_per_epoch must be at least 1".into());
        }
        if self.batch_size == 0 || self.batch_size > self.triplets_per_epoch {
            return fail(format!(
                "batch_size must lie in [1, {}], got {}",
                self.triplets_per_epoch, self.batch_size
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return fail(format!("margin must be positive, got {}", self.margin));
        }
        Ok(())
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            strategy: self.strategy,
            seed: self.seed,
            allow_fallback: self.allow_fallback,
        }
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig { margin: self.margin }
    }

    pub fn total_triplets(&self) -> usize {
        self.epochs * self.triplets_per_epoch
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub fallbacks: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
}

impl TrainLog {
    pub fn total_fallbacks(&self) -> usize {
        self.epochs.iter().map(|e| e.fallbacks).sum()
    }

    /// `epoch\tmean_loss\tfallbacks\tseconds`, one row per completed epoch.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "epoch\tmean_loss\tfallbacks\tseconds")?;
        for e in &self.epochs {
            writeln!(out, "{}\t{}\t{}\t{:.6}", e.epoch, e.mean_loss, e.fallbacks, e.seconds)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    pub zscore: Option<ZScoreStats>,
    pub log: TrainLog,
}

impl TrainOutcome {
    pub fn into_model(self, config: &TrainConfig) -> ModelFile {
        ModelFile {
            margin: config.margin,
            zscore: self.zscore,
            config: Some(*config),
            epochs_completed: Some(config.epochs),
            params: self.params,
        }
    }
}

/// Z-score statistics over TRAIN tracks.
pub fn fit_train_zscore(corpus: &Corpus) -> Result<ZScoreStats> {
    let train = corpus.indices_in(Partition::Train);
    fit_zscore(train.iter().map(|&i| corpus.record(i).features.as_slice()))
}

/// Trains from a fresh initialization for `config.epochs` epochs.
pub fn train(corpus: &Corpus, config: &TrainConfig) -> Result<TrainOutcome> {
    let params = NetworkParams::init(corpus.dim(), config.seed)?;
    train_from(corpus, config, params, 0)
}

/// Continues training `params` over epochs `start_epoch..config.epochs`. Momentum
/// restarts from zero.
pub fn train_from(
    corpus: &Corpus,
    config: &TrainConfig,
    mut params: NetworkParams,
    start_epoch: usize,
) -> Result<TrainOutcome> {
    config.validate()?;
    params.validate()?;
    if params.dim != corpus.dim() {
        return Err(Error::Data(format!(
            "network dim {} does not match corpus dim {}",
            params.dim,
            corpus.dim()
        )));
    }
    let zscore = if config.standardize {
        Some(fit_train_zscore(corpus)?)
    } else {
        None
    };
    let mut log = TrainLog::default();
    if start_epoch >= config.epochs {
        return Ok(TrainOutcome { params, zscore, log });
    }

    let inputs: Vec<Vec<f64>> = corpus
        .records()
        .iter()
        .map(|r| match &zscore {
            Some(stats) => stats.apply(&r.features),
            None => Ok(r.features.clone()),
        })
        .collect::<Result<_>>()?;
    let sampler = TripletSampler::new(corpus, config.sampler_config())?;
    let loss_config = config.loss_config();
    let mut velocity = Gradients::zeros(params.dim);

    for epoch in start_epoch..config.epochs {
        let started = Instant::now();
        let sample = sampler.sample_epoch(epoch as u64, config.triplets_per_epoch)?;
        let mut loss_sum = 0.0;
        for batch in sample.triplets.chunks(config.batch_size) {
            let mut inputs_batch = Vec::with_capacity(batch.len());
            for t in batch {
                check_triplet(corpus, t).map_err(|e| Error::Training {
                    epoch,
                    message: e.to_string(),
                })?;
                inputs_batch.push(TripletInput {
                    anchor: &inputs[t.anchor],
                    positive: &inputs[t.positive],
                    negative: &inputs[t.negative],
                });
            }
            let grads = batch_gradient(&params, &inputs_batch, &loss_config)?;
            loss_sum += grads.loss;
            let scale = 1.0 / batch.len() as f64;
            for ((p, v), g) in params
                .tensors_mut()
                .into_iter()
                .zip(velocity.tensors_mut())
                .zip(grads.tensors())
            {
                for ((p, v), g) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                    *v = config.momentum * *v + g * scale;
                    *p -= config.learning_rate * *v;
                }
            }
        }
        let mean_loss = loss_sum / sample.triplets.len() as f64;
        check_finite(epoch, mean_loss, &params)?;
        log.epochs.push(EpochStats {
            epoch,
            mean_loss,
            fallbacks: sample.fallbacks,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok(TrainOutcome { params, zscore, log })
}

fn check_finite(epoch: usize, mean_loss: f64, params: &NetworkParams) -> Result<()> {
    if !mean_loss.is_finite() || !params.is_finite() {
        return Err(Error::Training {
            epoch,
            message: format!("non-finite loss or parameters (mean loss {mean_loss})"),
        });
    }
    Ok(())
}

/// Writes a resumable model file.
pub fn checkpoint(model: &ModelFile, path: impl AsRef<Path>) -> Result<()> {
    model.save(path)
}

/// Loads params and the training config from a checkpoint.
pub fn resume(path: impl AsRef<Path>) -> Result<(NetworkParams, TrainConfig, usize)> {
    let path = path.as_ref();
    let model = ModelFile::load(path)?;
    let config = model
        .config
        .ok_or_else(|| Error::Format(format!("{}: model file has no training config", path.display())))?;
    Ok((model.params, config, model.epochs_completed.unwrap_or(0)))
}
