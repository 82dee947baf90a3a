//! Channel-in-the-loop training with per-batch SNR sampling and
//! validation-based model selection.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelConfig, ChannelKind, ChannelRealization};
use crate::embedding_io::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::experiment::{semantic_accuracy, EvalConfig, Scheme};
use crate::knowledge_base::KnowledgeBase;
use crate::rng::{rng_for, stream_id, Purpose};

use super::adam::{Adam, AdamConfig};
use super::matrix::Matrix;
use super::network::{Mode, Network};
use super::{CodecParams, FEATURE_DIM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub k: usize,
    pub snr_grid_db: Vec<f64>,
    pub channel_kind: ChannelKind,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub bn_momentum: f64,
    pub seed: u64,
    /// Channel realizations per validation item.
    pub val_trials: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 128,
            snr_grid_db: vec![-7.0, -4.0, 0.0, 4.0, 7.0],
            channel_kind: ChannelKind::Awgn,
            batch_size: 256,
            epochs: 100,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            bn_momentum: 0.1,
            seed: 0,
            val_trials: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.batch_size < 2 {
            return bad(format!("batch_size {} < 2", self.batch_size));
        }
        if self.epochs < 1 {
            return bad("epochs must be >= 1".into());
        }
        if self.snr_grid_db.is_empty()
            || self
                .snr_grid_db
                .iter()
                .any(|s| s.is_nan() || *s == f64::NEG_INFINITY)
        {
            return bad("SNR grid must be a nonempty list of valid SNRs".into());
        }
        if self.learning_rate.is_nan()
            || self.learning_rate <= 0.0
            || !(0.0..=1.0).contains(&self.bn_momentum)
        {
            return bad("learning rate must be positive and bn momentum within [0, 1]".into());
        }
        if self.val_trials < 1 {
            return bad("val_trials must be >= 1".into());
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }

    /// Middle entry of the sorted grid (lower middle for even lengths).
    pub fn validation_snr_db(&self) -> f64 {
        let mut grid = self.snr_grid_db.clone();
        grid.sort_by(f64::total_cmp);
        grid[(grid.len() - 1) / 2]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub k: usize,
    pub train_loss: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    /// 1-based epoch whose parameters were returned.
    pub selected_epoch: usize,
    pub val_snr_db: f64,
    pub epoch_seconds: Vec<f64>,
}

/// Identifies the random draws of one training step.
#[derive(Debug, Clone, Copy)]
pub struct StepRng {
    pub seed: u64,
    pub step: u64,
}

impl StepRng {
    fn snr(&self, grid: &[f64]) -> f64 {
        let mut rng = rng_for(self.seed, Purpose::SnrPick, &[self.step]);
        grid[rng.random_range(0..grid.len())]
    }

    fn realizations(&self, n: usize, k: usize, cfg: &ChannelConfig) -> Vec<ChannelRealization> {
        (0..n)
            .map(|i| {
                let stream = stream_id(Purpose::TrainChannel, &[self.step, i as u64]);
                ChannelRealization::draw(k / 2, cfg, stream)
            })
            .collect()
    }
}

/// One optimizer step: forward through encoder, power normalization,
/// channel and decoder, MSE backward, Adam update, running-stat update.
/// Returns the batch loss.
pub fn train_step(
    net: &mut Network,
    batch: &Matrix,
    cfg: &TrainConfig,
    adam: &mut Adam,
    rng: StepRng,
) -> Result<f64> {
    if batch.rows < 2 {
        return Err(Error::InvalidArgument(
            "training batch needs at least 2 samples".into(),
        ));
    }
    let channel = ChannelConfig::new(cfg.channel_kind, rng.snr(&cfg.snr_grid_db), rng.seed)?;
    let realizations = rng.realizations(batch.rows, net.k, &channel);
    let out = net.pipeline_grad(batch, Some(&realizations), Mode::Train, cfg.bn_momentum)?;
    if !out.loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            step: rng.step as usize,
        });
    }
    adam.step(&mut net.params, &out.grads);
    net.running_mean = out.running_mean;
    net.running_var = out.running_var;
    Ok(out.loss)
}

/// Working state of a training run.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    pub network: Network,
    pub adam: Adam,
    pub step: u64,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let network = CodecParams::init(config.k, config.seed)?.to_network();
        let adam = Adam::new(config.k, config.adam());
        Ok(Self {
            config,
            network,
            adam,
            step: 0,
        })
    }

    pub fn step(&mut self, batch: &Matrix) -> Result<f64> {
        let rng = StepRng {
            seed: self.config.seed,
            step: self.step,
        };
        let loss = train_step(&mut self.network, batch, &self.config, &mut self.adam, rng)?;
        self.step += 1;
        Ok(loss)
    }

    /// One pass over `data` in a seeded shuffled order. Returns the mean
    /// batch loss. A trailing batch of a single sample is skipped.
    pub fn epoch(&mut self, data: &EmbeddingDataset, epoch: usize) -> Result<f64> {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng_for(
            self.config.seed,
            Purpose::Shuffle,
            &[epoch as u64],
        ));
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(self.config.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let rows: Vec<&[f32]> = chunk
                .iter()
                .map(|&i| data.records[i].vector.as_slice())
                .collect();
            total += self.step(&Matrix::from_f32_rows(&rows))?;
            batches += 1;
        }
        if batches == 0 {
            return Err(Error::InvalidArgument(
                "training set yields no batch of >= 2 samples".into(),
            ));
        }
        Ok(total / batches as f64)
    }
}

/// Trains a codec and returns the parameters of the epoch with the best
/// validation accuracy (earliest on ties) together with the run report.
pub fn train(
    train_set: &EmbeddingDataset,
    val_transmit: &EmbeddingDataset,
    val_kb: &KnowledgeBase,
    config: &TrainConfig,
) -> Result<(CodecParams, TrainReport)> {
    config.validate()?;
    if train_set.is_empty() || val_transmit.is_empty() {
        return Err(Error::InvalidDataset(
            "training and validation sets must be nonempty".into(),
        ));
    }
    for ds in [train_set, val_transmit] {
        if ds.dim != FEATURE_DIM {
            return Err(Error::DimensionMismatch {
                expected: FEATURE_DIM,
                actual: ds.dim,
            });
        }
    }
    if val_transmit.class_names != val_kb.class_names() {
        return Err(Error::InvalidDataset(
            "validation transmit set and KB have different class spaces".into(),
        ));
    }

    let val_snr = config.validation_snr_db();
    let eval_cfg = EvalConfig::new(
        ChannelConfig::new(config.channel_kind, val_snr, config.seed)?,
        config.val_trials,
    )?;
    let mut trainer = Trainer::new(config.clone())?;
    let mut report = TrainReport {
        k: config.k,
        train_loss: Vec::with_capacity(config.epochs),
        val_accuracy: Vec::with_capacity(config.epochs),
        selected_epoch: 0,
        val_snr_db: val_snr,
        epoch_seconds: Vec::with_capacity(config.epochs),
    };
    let mut best: Option<(f64, CodecParams)> = None;

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let loss = trainer.epoch(train_set, epoch)?;
        let snapshot = CodecParams::from_network(&trainer.network);
        let acc =
            semantic_accuracy(Scheme::Codec(&snapshot), val_transmit, val_kb, &eval_cfg)?.accuracy;
        report.train_loss.push(loss);
        report.val_accuracy.push(acc);
        report.epoch_seconds.push(started.elapsed().as_secs_f64());
        if best.as_ref().is_none_or(|(b, _)| acc > *b) {
            best = Some((acc, snapshot));
            report.selected_epoch = epoch + 1;
        }
    }
    let (_, params) = best.expect("at least one epoch");
    Ok((params, report))
}
