//! The `semlink` command line.
//!
//! Every subcommand accepts `--config <file>`: a flat `key = value` file whose
//! keys are long flag names. Flags given on the command line replace the
//! config-file value of the same key. Each run writes a JSON manifest next to
//! its primary output holding the effective arguments, the resolved
//! configuration, input digests and the tool version.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::channel::{parse_snr_db, ChannelConfig, ChannelKind};
use crate::codec::{train, CodecParams, TrainConfig};
use crate::embedding_io::{
    load_dataset_file, save_dataset_file, split_train_val, split_transmit_kb, SplitSpec,
    SyntheticSource,
};
use crate::error::{Error, Result};
use crate::experiment::{
    bench_latency, run_sweep, semantic_accuracy, EvalConfig, Scheme, SweepConfig,
    DEFAULT_TRIALS_PER_ITEM,
};
use crate::knowledge_base::KnowledgeBase;

#[derive(Debug, Parser, Serialize)]
#[command(name = "semlink", version = crate::VERSION, about = "Semantic embedding transmission simulator")]
pub struct Cli {
    /// Worker threads for evaluation (results do not depend on it).
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    /// Where to write the run manifest (default: beside the primary output).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    /// Flat `key = value` file of default flag values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate clustered synthetic embeddings.
    GenSynthetic(GenArgs),
    /// Class-stratified dataset split.
    Split(SplitArgs),
    /// Build a knowledge-base file from a dataset.
    BuildKb(BuildKbArgs),
    /// Train a codec with the channel in the loop.
    Train(TrainArgs),
    /// Semantic accuracy of one model (or the baseline) at one SNR.
    Eval(EvalArgs),
    /// Accuracy sweep over models, SNRs and channel kinds, written as CSV.
    Sweep(SweepArgs),
    /// Per-stage latency of codec and retrieval.
    Bench(BenchArgs),
}

#[derive(Debug, clap::Args, Serialize)]
pub struct GenArgs {
    #[arg(long, default_value_t = 20)]
    pub classes: usize,
    #[arg(long, default_value_t = 50)]
    pub per_class: usize,
    #[arg(long, default_value_t = 512)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.05)]
    pub spread: f64,
    /// Seed of the class centroids.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Seed of the per-record noise (defaults to --seed).
    #[arg(long)]
    pub sample_seed: Option<u64>,
    /// Image id of the first record.
    #[arg(long, default_value_t = 0)]
    pub first_id: u32,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    /// `floor(fraction · n_c)` per class to the first output.
    TrainVal,
    /// `ceil(n_c / 2)` per class to the first (transmit) output.
    TransmitKb,
}

#[derive(Debug, clap::Args, Serialize)]
pub struct SplitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitMode::TrainVal)]
    pub mode: SplitMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    /// Training (or transmit) output.
    #[arg(long)]
    pub first: PathBuf,
    /// Validation (or knowledge-base) output.
    #[arg(long)]
    pub second: PathBuf,
}

#[derive(Debug, clap::Args, Serialize)]
pub struct BuildKbArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

fn parse_kind(s: &str) -> std::result::Result<ChannelKind, String> {
    s.trim().parse().map_err(|e: Error| e.to_string())
}

fn parse_snr(s: &str) -> std::result::Result<f64, String> {
    parse_snr_db(s).map_err(|e| e.to_string())
}

#[derive(Debug, clap::Args, Serialize)]
pub struct TrainArgs {
    #[arg(long = "train")]
    pub train_set: PathBuf,
    #[arg(long)]
    pub val_transmit: PathBuf,
    #[arg(long)]
    pub val_kb: PathBuf,
    #[arg(long, default_value_t = 128)]
    pub k: usize,
    #[arg(long, value_parser = parse_kind, default_value = "awgn")]
    pub channel: ChannelKind,
    #[arg(
        long,
        value_parser = parse_snr,
        value_delimiter = ',',
        default_value = "-7,-4,0,4,7",
        allow_hyphen_values = true
    )]
    pub snr_grid: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0.1)]
    pub bn_momentum: f64,
    #[arg(long, default_value_t = 10)]
    pub val_trials: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
    /// Write the training report here instead of standard output.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, clap::Args, Serialize)]
pub struct EvalArgs {
    /// Codec file; omit together with --baseline to evaluate the raw embedding.
    #[arg(long, required_unless_present = "baseline")]
    pub model: Option<PathBuf>,
    #[arg(long, conflicts_with = "model")]
    pub baseline: bool,
    #[arg(long)]
    pub transmit: PathBuf,
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long, value_parser = parse_kind, default_value = "awgn")]
    pub channel: ChannelKind,
    #[arg(long, value_parser = parse_snr, default_value = "10", allow_hyphen_values = true)]
    pub snr_db: f64,
    #[arg(long, default_value_t = DEFAULT_TRIALS_PER_ITEM)]
    pub trials: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON result file.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, clap::Args, Serialize)]
pub struct SweepArgs {
    /// Codec files (repeatable).
    #[arg(long = "model")]
    pub models: Vec<PathBuf>,
    /// Also evaluate the uncompressed baseline.
    #[arg(long)]
    pub baseline: bool,
    #[arg(long)]
    pub transmit: PathBuf,
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(
        long,
        value_parser = parse_snr,
        value_delimiter = ',',
        default_value = "-7,-6,-5,-4,-2,0,2,4,5,6,7,10",
        allow_hyphen_values = true
    )]
    pub snr_list: Vec<f64>,
    #[arg(long, value_parser = parse_kind, value_delimiter = ',', default_value = "awgn,rayleigh")]
    pub channels: Vec<ChannelKind>,
    #[arg(long, default_value_t = DEFAULT_TRIALS_PER_ITEM)]
    pub trials: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV output.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, clap::Args, Serialize)]
pub struct BenchArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub n_queries: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON report file.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Effective argument list (config file merged); rerunning `semlink`
    /// with it reproduces the run.
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub root_seed: Option<u64>,
    /// SHA-256 of every input file.
    pub inputs: BTreeMap<String, String>,
    pub tool_version: String,
}

fn digest_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

/// Reads `key = value` lines and turns them into flag arguments. Keys that
/// also appear in `explicit` are dropped.
fn config_args(
    path: &Path,
    subcommand: &str,
    explicit: &BTreeSet<String>,
) -> Result<Vec<OsString>> {
    let text = fs::read_to_string(path).map_err(|e| {
        Error::InvalidArgument(format!("cannot read config {}: {e}", path.display()))
    })?;
    let root = Cli::command();
    let sub = root
        .find_subcommand(subcommand)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown subcommand {subcommand}")))?;
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InvalidArgument(format!(
                "{}:{}: expected key = value",
                path.display(),
                n + 1
            ))
        })?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let value = value.trim();
        if explicit.contains(&key) || key == "config" {
            continue;
        }
        let arg = sub
            .get_arguments()
            .chain(root.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| {
                Error::InvalidArgument(format!("{}:{}: unknown key {key:?}", path.display(), n + 1))
            })?;
        if arg.get_action().takes_values() {
            out.push(OsString::from(format!("--{key}")));
            out.push(OsString::from(value));
        } else if matches!(value, "true" | "1" | "yes") {
            out.push(OsString::from(format!("--{key}")));
        }
    }
    Ok(out)
}

/// Splices config-file arguments in right after the subcommand name.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let strs: Vec<String> = args
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let mut config = None;
    let mut explicit = BTreeSet::new();
    for (i, a) in strs.iter().enumerate() {
        if let Some(p) = a.strip_prefix("--config=") {
            config = Some(PathBuf::from(p));
        } else if a == "--config" {
            config = strs.get(i + 1).map(PathBuf::from);
        }
        if let Some(flag) = a.strip_prefix("--") {
            explicit.insert(flag.split('=').next().unwrap_or(flag).to_string());
        }
    }
    let Some(config) = config else {
        return Ok(args);
    };
    let names: Vec<String> = Cli::command()
        .get_subcommands()
        .map(|s| s.get_name().to_string())
        .collect();
    let Some(pos) = strs.iter().position(|a| names.contains(a)) else {
        return Ok(args);
    };
    let extra = config_args(&config, &strs[pos], &explicit)?;
    let mut merged = args[..=pos].to_vec();
    merged.extend(extra);
    merged.extend_from_slice(&args[pos + 1..]);
    // the manifest already records the merged flags
    let mut cleaned = Vec::with_capacity(merged.len());
    let mut skip = false;
    for a in merged {
        if skip {
            skip = false;
            continue;
        }
        let s = a.to_string_lossy();
        if s == "--config" {
            skip = true;
            continue;
        }
        if s.starts_with("--config=") {
            continue;
        }
        cleaned.push(a);
    }
    Ok(cleaned)
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code: 0 success, 1 usage error, 2 data error, 3 numeric
/// failure.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if cli.threads == 0 {
        eprintln!("error: --threads must be at least 1");
        return 1;
    }
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return 1;
        }
    };
    let effective: Vec<String> = args
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match pool.install(|| dispatch(&cli, effective)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn write_manifest(
    cli: &Cli,
    args: Vec<String>,
    primary: Option<&Path>,
    seed: Option<u64>,
    inputs: &[&Path],
) -> Result<()> {
    let (subcommand, config) = match serde_json::to_value(&cli.command)? {
        serde_json::Value::Object(map) if map.len() == 1 => {
            let (k, v) = map.into_iter().next().expect("one entry");
            (k, v)
        }
        other => ("unknown".to_string(), other),
    };
    let mut digests = BTreeMap::new();
    for p in inputs {
        digests.insert(p.display().to_string(), digest_file(p)?);
    }
    let path = match (&cli.manifest, primary) {
        (Some(m), _) => m.clone(),
        (None, Some(p)) => {
            let mut s = p.as_os_str().to_owned();
            s.push(".manifest.json");
            PathBuf::from(s)
        }
        (None, None) => PathBuf::from(format!("semlink-{subcommand}.manifest.json")),
    };
    let manifest = RunManifest {
        subcommand,
        args,
        config: serde_json::json!({ "threads": cli.threads, "command": config }),
        root_seed: seed,
        inputs: digests,
        tool_version: crate::VERSION.to_string(),
    };
    fs::write(path, serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn load_kb(path: &Path) -> Result<KnowledgeBase> {
    KnowledgeBase::build(&load_dataset_file(path)?)
}

fn dispatch(cli: &Cli, args: Vec<String>) -> Result<()> {
    match &cli.command {
        Command::GenSynthetic(a) => {
            let sample_seed = a.sample_seed.unwrap_or(a.seed);
            let ds = SyntheticSource::new(a.classes, a.dim, a.seed)?.sample(
                a.per_class,
                a.spread,
                sample_seed,
                a.first_id,
            )?;
            save_dataset_file(&ds, &a.output)?;
            eprintln!("wrote {} records to {}", ds.len(), a.output.display());
            write_manifest(cli, args, Some(&a.output), Some(a.seed), &[])
        }
        Command::Split(a) => {
            let ds = load_dataset_file(&a.input)?;
            let (first, second) = match a.mode {
                SplitMode::TrainVal => {
                    split_train_val(&ds, SplitSpec::new(a.seed, a.train_fraction)?)?
                }
                SplitMode::TransmitKb => split_transmit_kb(&ds, a.seed)?,
            };
            save_dataset_file(&first, &a.first)?;
            save_dataset_file(&second, &a.second)?;
            eprintln!(
                "split {} records into {} + {}",
                ds.len(),
                first.len(),
                second.len()
            );
            write_manifest(cli, args, Some(&a.first), Some(a.seed), &[&a.input])
        }
        Command::BuildKb(a) => {
            let ds = load_dataset_file(&a.input)?;
            let kb = KnowledgeBase::build(&ds)?;
            save_dataset_file(&kb.to_dataset(&ds), &a.output)?;
            eprintln!("knowledge base with {} entries", kb.len());
            write_manifest(cli, args, Some(&a.output), None, &[&a.input])
        }
        Command::Train(a) => {
            let train_set = load_dataset_file(&a.train_set)?;
            let val_tx = load_dataset_file(&a.val_transmit)?;
            let val_kb = load_kb(&a.val_kb)?;
            let cfg = TrainConfig {
                k: a.k,
                snr_grid_db: a.snr_grid.clone(),
                channel_kind: a.channel,
                batch_size: a.batch_size,
                epochs: a.epochs,
                learning_rate: a.learning_rate,
                bn_momentum: a.bn_momentum,
                seed: a.seed,
                val_trials: a.val_trials,
                ..TrainConfig::default()
            };
            let (params, report) = train(&train_set, &val_tx, &val_kb, &cfg)?;
            params.save(&a.output)?;
            write_json(&report, a.report.as_deref())?;
            write_manifest(
                cli,
                args,
                Some(&a.output),
                Some(a.seed),
                &[&a.train_set, &a.val_transmit, &a.val_kb],
            )
        }
        Command::Eval(a) => {
            let tx = load_dataset_file(&a.transmit)?;
            let kb = load_kb(&a.kb)?;
            let cfg = EvalConfig::new(ChannelConfig::new(a.channel, a.snr_db, a.seed)?, a.trials)?;
            let params = a.model.as_deref().map(CodecParams::load).transpose()?;
            let scheme = match &params {
                Some(p) => Scheme::Codec(p),
                None => Scheme::Baseline,
            };
            let report = semantic_accuracy(scheme, &tx, &kb, &cfg)?;
            let out = serde_json::json!({
                "model_id": scheme.model_id(),
                "channel": a.channel,
                "snr_db": crate::channel::format_snr_db(a.snr_db),
                "report": report,
            });
            println!("accuracy={:.6}", report.accuracy);
            if let Some(p) = &a.output {
                write_json(&out, Some(p))?;
            }
            let mut inputs: Vec<&Path> = vec![&a.transmit, &a.kb];
            if let Some(m) = &a.model {
                inputs.push(m);
            }
            write_manifest(cli, args, a.output.as_deref(), Some(a.seed), &inputs)
        }
        Command::Sweep(a) => {
            let tx = load_dataset_file(&a.transmit)?;
            let kb = load_kb(&a.kb)?;
            let models = a
                .models
                .iter()
                .map(CodecParams::load)
                .collect::<Result<Vec<_>>>()?;
            let cfg = SweepConfig {
                snr_list: a.snr_list.clone(),
                channels: a.channels.clone(),
                trials_per_item: a.trials,
                seed: a.seed,
                include_baseline: a.baseline,
            };
            let result = run_sweep(&models, &tx, &kb, &cfg)?;
            result.save_csv(&a.output)?;
            eprintln!("wrote {} rows to {}", result.rows.len(), a.output.display());
            let mut inputs: Vec<&Path> = vec![&a.transmit, &a.kb];
            inputs.extend(a.models.iter().map(PathBuf::as_path));
            write_manifest(cli, args, Some(&a.output), Some(a.seed), &inputs)
        }
        Command::Bench(a) => {
            let params = CodecParams::load(&a.model)?;
            let kb = load_kb(&a.kb)?;
            let report = bench_latency(&params, &kb, a.n_queries, a.seed)?;
            write_json(&report, a.output.as_deref())?;
            if a.output.is_some() {
                eprintln!(
                    "net median {:.3} ms, kb median {:.3} ms",
                    report.net.median_ms, report.kb.median_ms
                );
            }
            write_manifest(
                cli,
                args,
                a.output.as_deref(),
                Some(a.seed),
                &[&a.model, &a.kb],
            )
        }
    }
}
