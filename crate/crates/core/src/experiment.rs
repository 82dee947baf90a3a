//! Evaluation protocol: semantic accuracy, the uncompressed baseline, the
//! CBR × SNR × channel sweep and the per-stage latency harness.
//!
//! Channel draws for transmitted item `image_id` in trial `t` come from the
//! stream `(seed, EvalChannel, image_id, t)`. The stream does not depend on
//! the SNR, the model or the thread count, so sweep cells share noise shapes
//! (only the scale changes) and any execution order gives the same bytes.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use num_rational::Ratio;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::channel::{
    cbr, equalize, format_snr_db, normalize_power, to_complex, to_real, transmit, ChannelConfig,
    ChannelKind,
};
use crate::codec::{CodecParams, Matrix, Network, FEATURE_DIM};
use crate::embedding_io::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::knowledge_base::KnowledgeBase;
use crate::rng::{rng_for, stream_id, Purpose};

/// Items processed together by one parallel task.
const EVAL_CHUNK: usize = 64;

pub const DEFAULT_TRIALS_PER_ITEM: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalConfig {
    /// Channel kind, SNR and the root seed of all per-item streams.
    pub channel: ChannelConfig,
    pub trials_per_item: u32,
}

impl EvalConfig {
    pub fn new(channel: ChannelConfig, trials_per_item: u32) -> Result<Self> {
        if trials_per_item < 1 {
            return Err(Error::InvalidArgument(
                "trials_per_item must be >= 1".into(),
            ));
        }
        Ok(Self {
            channel,
            trials_per_item,
        })
    }
}

/// What sits between the embedding and the channel.
#[derive(Debug, Clone, Copy)]
pub enum Scheme<'a> {
    Codec(&'a CodecParams),
    /// Raw embedding sent as `dim/2` symbols; the receiver undoes the
    /// transmitter's power scaling.
    Baseline,
}

impl Scheme<'_> {
    pub fn model_id(&self) -> String {
        match self {
            Scheme::Codec(p) => model_id(p),
            Scheme::Baseline => "baseline".to_string(),
        }
    }
}

/// Short content hash of a codec, e.g. `k128-3fa2c81b09de`.
pub fn model_id(params: &CodecParams) -> String {
    let digest = Sha256::digest(params.to_bytes().unwrap_or_default());
    let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
    format!("k{}-{hex}", params.k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AccuracyReport {
    pub accuracy: f64,
    pub successes: u64,
    pub n_items: usize,
    pub trials: u32,
    /// Channel symbols per transmitted item.
    pub symbols_per_item: usize,
    pub clamped_gains: u64,
}

fn check_spaces(transmit: &EmbeddingDataset, kb: &KnowledgeBase) -> Result<()> {
    if transmit.dim != kb.dim() {
        return Err(Error::DimensionMismatch {
            expected: kb.dim(),
            actual: transmit.dim,
        });
    }
    if transmit.class_names != kb.class_names() {
        return Err(Error::InvalidDataset(
            "transmit set and knowledge base have different class spaces".into(),
        ));
    }
    if transmit.is_empty() {
        return Err(Error::InvalidDataset("empty transmit set".into()));
    }
    Ok(())
}

/// Fraction of transmissions whose retrieved KB entry has the transmitted
/// item's label, over every item and `trials_per_item` channel draws.
pub fn semantic_accuracy(
    scheme: Scheme<'_>,
    transmit_set: &EmbeddingDataset,
    kb: &KnowledgeBase,
    cfg: &EvalConfig,
) -> Result<AccuracyReport> {
    check_spaces(transmit_set, kb)?;
    let network = match scheme {
        Scheme::Codec(p) => {
            if transmit_set.dim != FEATURE_DIM {
                return Err(Error::DimensionMismatch {
                    expected: FEATURE_DIM,
                    actual: transmit_set.dim,
                });
            }
            Some(p.to_network())
        }
        Scheme::Baseline => {
            if !transmit_set.dim.is_multiple_of(2) {
                return Err(Error::InvalidArgument(
                    "baseline needs an even dimension".into(),
                ));
            }
            None
        }
    };
    let symbols_per_item = network.as_ref().map_or(transmit_set.dim, |n| n.k) / 2;

    let partials: Vec<(u64, u64)> = transmit_set
        .records
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| eval_chunk(network.as_ref(), chunk, kb, cfg))
        .collect::<Result<_>>()?;
    let successes: u64 = partials.iter().map(|p| p.0).sum();
    let clamped_gains: u64 = partials.iter().map(|p| p.1).sum();
    let n_items = transmit_set.len();
    let total = n_items as u64 * cfg.trials_per_item as u64;
    Ok(AccuracyReport {
        accuracy: successes as f64 / total as f64,
        successes,
        n_items,
        trials: cfg.trials_per_item,
        symbols_per_item,
        clamped_gains,
    })
}

fn eval_chunk(
    network: Option<&Network>,
    chunk: &[crate::embedding_io::EmbeddingRecord],
    kb: &KnowledgeBase,
    cfg: &EvalConfig,
) -> Result<(u64, u64)> {
    let inputs = Matrix::from_f32_rows(
        &chunk
            .iter()
            .map(|r| r.vector.as_slice())
            .collect::<Vec<_>>(),
    );
    let channel_in = match network {
        Some(net) => net.encode_eval(&inputs)?,
        None => inputs,
    };
    let mut signals = Vec::with_capacity(chunk.len());
    for i in 0..chunk.len() {
        signals.push(normalize_power(&to_complex(channel_in.row(i))?)?);
    }

    let mut successes = 0u64;
    let mut clamped = 0u64;
    for trial in 0..cfg.trials_per_item {
        let mut received = Matrix::zeros(chunk.len(), channel_in.cols);
        for (i, (record, (signal, scale))) in chunk.iter().zip(&signals).enumerate() {
            let stream = stream_id(
                Purpose::EvalChannel,
                &[record.image_id as u64, trial as u64],
            );
            let (rx, realization) = transmit(signal, &cfg.channel, stream)?;
            let (eq, stats) = equalize(&rx, &realization)?;
            clamped += stats.clamped as u64;
            let row = received.row_mut(i);
            for (o, v) in row.iter_mut().zip(to_real(&eq)) {
                *o = match network {
                    Some(_) => v,
                    None => v / scale,
                };
            }
        }
        let reconstructed = match network {
            Some(net) => net.decode(&received)?,
            None => received,
        };
        for (i, record) in chunk.iter().enumerate() {
            let hit = kb.retrieve(&reconstructed.row_f32(i))?;
            if hit.label == record.label {
                successes += 1;
            }
        }
    }
    Ok((successes, clamped))
}

/// Accuracy of sending the raw 512-dim embedding as 256 symbols.
pub fn baseline_uncompressed(
    transmit_set: &EmbeddingDataset,
    kb: &KnowledgeBase,
    cfg: &EvalConfig,
) -> Result<AccuracyReport> {
    if transmit_set.dim != FEATURE_DIM {
        return Err(Error::DimensionMismatch {
            expected: FEATURE_DIM,
            actual: transmit_set.dim,
        });
    }
    semantic_accuracy(Scheme::Baseline, transmit_set, kb, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub channel: ChannelKind,
    pub cbr_num: u64,
    pub cbr_den: u64,
    pub k: usize,
    #[serde(serialize_with = "serialize_snr")]
    pub snr_db: f64,
    #[serde(serialize_with = "serialize_accuracy")]
    pub accuracy: f64,
    pub n_items: usize,
    pub trials: u32,
    pub model_id: String,
    pub seed: u64,
}

fn serialize_snr<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format_snr_db(*v))
}

fn serialize_accuracy<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{v:.6}"))
}

impl SweepRow {
    pub fn cbr(&self) -> Ratio<u64> {
        Ratio::new(self.cbr_num, self.cbr_den)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// CSV with header
    /// `channel,cbr_num,cbr_den,k,snr_db,accuracy,n_items,trials,model_id,seed`.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        for row in &self.rows {
            w.serialize(row)?;
        }
        if self.rows.is_empty() {
            w.write_record([
                "channel", "cbr_num", "cbr_den", "k", "snr_db", "accuracy", "n_items", "trials",
                "model_id", "seed",
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_csv(&mut out)?;
        Ok(out)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_bytes()?)?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub snr_list: Vec<f64>,
    pub channels: Vec<ChannelKind>,
    pub trials_per_item: u32,
    pub seed: u64,
    pub include_baseline: bool,
}

/// Evaluates every model (plus the baseline when enabled) at every SNR on
/// every channel kind. Rows are sorted by channel, CBR, SNR, model id.
pub fn run_sweep(
    models: &[CodecParams],
    transmit_set: &EmbeddingDataset,
    kb: &KnowledgeBase,
    cfg: &SweepConfig,
) -> Result<SweepResult> {
    if models.is_empty() && !cfg.include_baseline {
        return Err(Error::InvalidArgument(
            "sweep needs at least one model".into(),
        ));
    }
    let mut seen = BTreeSet::new();
    for m in models {
        if !seen.insert(m.k) {
            return Err(Error::InvalidArgument(format!(
                "two models share k = {}",
                m.k
            )));
        }
    }
    let mut snrs = cfg.snr_list.clone();
    snrs.sort_by(f64::total_cmp);
    snrs.dedup();
    let channels: BTreeSet<ChannelKind> = cfg.channels.iter().copied().collect();

    let mut schemes: Vec<(Scheme<'_>, usize, String)> = models
        .iter()
        .map(|m| (Scheme::Codec(m), m.k, model_id(m)))
        .collect();
    if cfg.include_baseline {
        schemes.push((Scheme::Baseline, transmit_set.dim, "baseline".to_string()));
    }

    let mut cells = Vec::new();
    for &channel in &channels {
        for (scheme, k, id) in &schemes {
            for &snr in &snrs {
                cells.push((channel, *scheme, *k, id.clone(), snr));
            }
        }
    }
    let (h, w, c) = (
        transmit_set.image_height as u64,
        transmit_set.image_width as u64,
        transmit_set.image_channels as u64,
    );
    let mut rows: Vec<SweepRow> = cells
        .into_par_iter()
        .map(|(channel, scheme, k, model_id, snr_db)| {
            let eval = EvalConfig::new(
                ChannelConfig::new(channel, snr_db, cfg.seed)?,
                cfg.trials_per_item,
            )?;
            let report = semantic_accuracy(scheme, transmit_set, kb, &eval)?;
            let ratio = cbr(k as u64, h, w, c)?;
            Ok(SweepRow {
                channel,
                cbr_num: *ratio.numer(),
                cbr_den: *ratio.denom(),
                k,
                snr_db,
                accuracy: report.accuracy,
                n_items: report.n_items,
                trials: report.trials,
                model_id,
                seed: cfg.seed,
            })
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| {
        a.channel
            .cmp(&b.channel)
            .then(a.cbr().cmp(&b.cbr()))
            .then(a.snr_db.total_cmp(&b.snr_db))
            .then(a.model_id.cmp(&b.model_id))
    });
    Ok(SweepResult { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageStats {
    pub name: String,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub total_ms: f64,
}

impl StageStats {
    fn from_samples(name: &str, mut samples: Vec<f64>) -> Self {
        let total_ms = samples.iter().sum();
        samples.sort_by(f64::total_cmp);
        let pick = |q: f64| {
            let idx = ((samples.len() as f64 - 1.0) * q).round() as usize;
            samples[idx]
        };
        Self {
            name: name.to_string(),
            median_ms: pick(0.5),
            p95_ms: pick(0.95),
            total_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyReport {
    pub n_queries: usize,
    pub kb_size: usize,
    pub k: usize,
    /// Embedding extraction; absent when embeddings are read from files.
    pub clip: Option<StageStats>,
    /// Encoder plus decoder forward, one query at a time.
    pub net: StageStats,
    /// Exact nearest-neighbor retrieval.
    pub kb: StageStats,
    /// Sum of the per-stage medians.
    pub median_sum_ms: f64,
    /// Wall-clock over every timed query, all stages.
    pub total_ms: f64,
}

/// Times the codec and retrieval stages on `n_queries` single-item queries
/// drawn from the KB. Warm-up iterations are excluded from the statistics.
pub fn bench_latency(
    params: &CodecParams,
    kb: &KnowledgeBase,
    n_queries: usize,
    seed: u64,
) -> Result<LatencyReport> {
    if n_queries < 100 {
        return Err(Error::InvalidArgument(
            "bench needs at least 100 queries".into(),
        ));
    }
    if kb.dim() != FEATURE_DIM {
        return Err(Error::DimensionMismatch {
            expected: FEATURE_DIM,
            actual: kb.dim(),
        });
    }
    let net = params.to_network();
    let mut rng = rng_for(seed, Purpose::Bench, &[]);
    let picks: Vec<usize> = (0..n_queries)
        .map(|_| rng.random_range(0..kb.len()))
        .collect();

    let run = |index: usize| -> Result<(f64, f64)> {
        let y = Matrix::from_f32_rows(&[kb.entry(index)]);
        let t0 = Instant::now();
        let z = net.encode_eval(&y)?;
        let y_hat = net.decode(&z)?;
        let t1 = Instant::now();
        std::hint::black_box(kb.retrieve(&y_hat.row_f32(0))?);
        let t2 = Instant::now();
        Ok(((t1 - t0).as_secs_f64() * 1e3, (t2 - t1).as_secs_f64() * 1e3))
    };
    for &i in picks.iter().take(10) {
        run(i)?;
    }
    let mut net_ms = Vec::with_capacity(n_queries);
    let mut kb_ms = Vec::with_capacity(n_queries);
    for &i in &picks {
        let (a, b) = run(i)?;
        net_ms.push(a);
        kb_ms.push(b);
    }
    let net_stats = StageStats::from_samples("net", net_ms);
    let kb_stats = StageStats::from_samples("kb", kb_ms);
    Ok(LatencyReport {
        n_queries,
        kb_size: kb.len(),
        k: params.k,
        clip: None,
        median_sum_ms: net_stats.median_ms + kb_stats.median_ms,
        total_ms: net_stats.total_ms + kb_stats.total_ms,
        net: net_stats,
        kb: kb_stats,
    })
}
