//! Acceptance run. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Run with `cargo test -p semlink --test acceptance`.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use num_rational::Ratio;
use rand::Rng;
use rand_distr::StandardNormal;
use semlink::channel::{
    cbr, snr_to_noise_variance, ChannelConfig, ChannelKind, ChannelRealization,
};
use semlink::codec::{train, CodecParams, TrainConfig};
use semlink::embedding_io::{
    generate_synthetic, save_dataset_file, split_train_val, split_transmit_kb, EmbeddingDataset,
    EmbeddingRecord, SplitSpec, SyntheticSource,
};
use semlink::experiment::{bench_latency, semantic_accuracy, EvalConfig, Scheme};
use semlink::knowledge_base::KnowledgeBase;
use semlink::rng::{rng_for, Purpose};

/// Test grid of the sweep, plus a deep-fade point for the chance floor.
const SWEEP_SNRS: [f64; 12] = [
    -7.0, -6.0, -5.0, -4.0, -2.0, 0.0, 2.0, 4.0, 5.0, 6.0, 7.0, 10.0,
];
const FLOOR_SNR: f64 = -40.0;
const SEED: u64 = 1;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

struct Criterion {
    name: &'static str,
    budget: Duration,
}

fn report(c: &Criterion, started: Instant, result: Result<Outcome, String>) -> bool {
    let elapsed = started.elapsed();
    let (pass, detail) = match result {
        Ok(o) => (o.pass && elapsed <= c.budget, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    println!(
        "{} {:<22} {} [{:.1} s / {} s]",
        if pass { "PASS" } else { "FAIL" },
        c.name,
        detail,
        elapsed.as_secs_f64(),
        c.budget.as_secs()
    );
    pass
}

fn gaussian_set(n: usize, dim: usize, seed: u64, first_id: u32) -> EmbeddingDataset {
    let mut rng = rng_for(seed, Purpose::Sample, &[]);
    let records = (0..n)
        .map(|i| EmbeddingRecord {
            image_id: first_id + i as u32,
            label: (i % 100) as u32,
            vector: (0..dim)
                .map(|_| rng.sample::<f32, _>(StandardNormal))
                .collect(),
        })
        .collect();
    EmbeddingDataset::empty(dim, (0..100).map(|c| format!("c{c}")).collect()).with_records(records)
}

fn check_cbr() -> Result<Outcome, String> {
    let want = [(128, 48), (256, 24), (512, 12), (1024, 6), (2048, 3)];
    let mut got = Vec::new();
    let mut pass = true;
    for (k, den) in want {
        let r = cbr(k, 32, 32, 3).map_err(|e| e.to_string())?;
        pass &= r == Ratio::new(1, den);
        got.push(format!("{}/{}", r.numer(), r.denom()));
    }
    Ok(outcome(pass, format!("k=128..2048 -> {}", got.join(", "))))
}

fn check_retrieval() -> Result<Outcome, String> {
    let kb = KnowledgeBase::build(&gaussian_set(5000, 512, 11, 0)).map_err(|e| e.to_string())?;
    let queries: Vec<Vec<f32>> = gaussian_set(1000, 512, 12, 0)
        .records
        .into_iter()
        .map(|r| r.vector)
        .collect();
    let fast = kb.search_batch(&queries, 10).map_err(|e| e.to_string())?;
    let mut mismatches = 0;
    for (q, got) in queries.iter().zip(&fast) {
        if *got != kb.brute_force_search(q, 10).map_err(|e| e.to_string())? {
            mismatches += 1;
        }
    }
    Ok(outcome(
        mismatches == 0,
        format!("1000 queries x 5000 x 512, top-10 ids and distances, {mismatches} mismatches"),
    ))
}

fn check_channel() -> Result<Outcome, String> {
    const N: usize = 1_000_000;
    let mut worst: f64 = 0.0;
    for (i, snr) in [-7.0, 0.0, 10.0].into_iter().enumerate() {
        let cfg = ChannelConfig::new(ChannelKind::Awgn, snr, 5).map_err(|e| e.to_string())?;
        let r = ChannelRealization::draw(N, &cfg, i as u64);
        let power = r.noise.iter().map(|c| c.norm_sqr()).sum::<f64>() / N as f64;
        worst = worst.max((power / snr_to_noise_variance(snr) - 1.0).abs());
    }
    let cfg = ChannelConfig::new(ChannelKind::Rayleigh, 0.0, 5).map_err(|e| e.to_string())?;
    let r = ChannelRealization::draw(N, &cfg, 9);
    let gain = r.gains.iter().map(|h| h.norm_sqr()).sum::<f64>() / N as f64;
    let gain_err = (gain - 1.0).abs();
    Ok(outcome(
        worst < 0.01 && gain_err < 0.01,
        format!(
            "1e6 symbols: noise power rel err {:.4}% (max over -7/0/10 dB), E|H|^2 = {gain:.5}",
            worst * 100.0
        ),
    ))
}

fn check_gradients() -> Result<Outcome, String> {
    let y = common::batch(4);
    let mut worst = (String::new(), 0.0f64);
    let mut record = |results: Vec<(String, f64)>, tag: &str| {
        for (name, rel) in results {
            if rel >= worst.1 {
                worst = (format!("{tag}/{name}"), rel);
            }
        }
    };
    record(common::check(&common::network(128), &y, None), "noiseless");
    for (kind, snr, tag) in [
        (ChannelKind::Awgn, 0.0, "awgn"),
        (ChannelKind::Rayleigh, 4.0, "rayleigh"),
    ] {
        let cfg = ChannelConfig::new(kind, snr, 3).map_err(|e| e.to_string())?;
        let ch: Vec<_> = (0..4)
            .map(|i| ChannelRealization::draw(32, &cfg, i))
            .collect();
        record(common::check(&common::network(64), &y, Some(&ch)), tag);
    }
    Ok(outcome(
        worst.1 < common::TOLERANCE,
        format!(
            "batch 4, all 10 tensors, noiseless + frozen noise; worst {} = {:.2e} (< {:.0e})",
            worst.0,
            worst.1,
            common::TOLERANCE
        ),
    ))
}

struct Synthetic {
    params: CodecParams,
    transmit: EmbeddingDataset,
    kb_set: EmbeddingDataset,
}

/// Train on a 20 x 50 pool and evaluate on a fresh draw around the same
/// class centroids, split into transmit and KB halves.
fn synthetic_run() -> Result<(Synthetic, Outcome), String> {
    let e = |e: semlink::Error| e.to_string();
    let source = SyntheticSource::new(20, 512, SEED).map_err(e)?;
    let pool = source.sample(50, 0.05, SEED, 0).map_err(e)?;
    let fresh = source.sample(50, 0.05, SEED + 1000, 100_000).map_err(e)?;
    let (train_set, val) =
        split_train_val(&pool, SplitSpec::new(SEED, 0.8).map_err(e)?).map_err(e)?;
    let (val_tx, val_kb) = split_transmit_kb(&val, SEED).map_err(e)?;
    let (transmit, kb_set) = split_transmit_kb(&fresh, SEED).map_err(e)?;

    let cfg = TrainConfig {
        k: 128,
        epochs: 30,
        seed: SEED,
        ..TrainConfig::default()
    };
    let (params, report) = train(
        &train_set,
        &val_tx,
        &KnowledgeBase::build(&val_kb).map_err(e)?,
        &cfg,
    )
    .map_err(e)?;
    let kb = KnowledgeBase::build(&kb_set).map_err(e)?;
    let accuracy = |snr: f64| -> Result<f64, String> {
        let eval = EvalConfig::new(
            ChannelConfig::new(ChannelKind::Awgn, snr, SEED).map_err(e)?,
            10,
        )
        .map_err(e)?;
        Ok(
            semantic_accuracy(Scheme::Codec(&params), &transmit, &kb, &eval)
                .map_err(e)?
                .accuracy,
        )
    };
    let floor = accuracy(FLOOR_SNR)?;
    let curve: Vec<f64> = SWEEP_SNRS
        .iter()
        .map(|&s| accuracy(s))
        .collect::<Result<_, _>>()?;
    let at10 = curve[SWEEP_SNRS.len() - 1];
    let mut points = vec![floor];
    points.extend(&curve);
    let dips: Vec<f64> = points.windows(2).map(|w| (w[0] - w[1]).max(0.0)).collect();
    let worst_dip = dips.iter().cloned().fold(0.0, f64::max);

    let pass = at10 >= 0.90 && worst_dip <= 0.01 && (floor - 0.05).abs() <= 0.03;
    let detail = format!(
        "acc@10dB {:.3} (>= 0.90), largest dip {:.2} pt over -40 + {}-pt grid (<= 1), acc@-40dB {:.3} (0.05 +/- 0.03), epoch {} of 30",
        at10,
        worst_dip * 100.0,
        SWEEP_SNRS.len(),
        floor,
        report.selected_epoch
    );
    Ok((
        Synthetic {
            params,
            transmit,
            kb_set,
        },
        outcome(pass, detail),
    ))
}

fn semlink(dir: &Path, args: &[String]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_semlink"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

/// Sweeps through the binary at 1 and 8 threads and replays each run from
/// its manifest; every CSV must be byte-identical.
fn check_determinism(run: &Synthetic) -> Result<Outcome, String> {
    let e = |e: semlink::Error| e.to_string();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    run.params.save(dir.join("k128.scdc")).map_err(e)?;
    save_dataset_file(&run.transmit, dir.join("transmit.semb")).map_err(e)?;
    save_dataset_file(&run.kb_set, dir.join("kb.semb")).map_err(e)?;

    let snrs: Vec<String> = SWEEP_SNRS.iter().map(|s| s.to_string()).collect();
    let mut outputs = Vec::new();
    for threads in ["1", "8"] {
        let first = format!("sweep-t{threads}.csv");
        let args: Vec<String> = [
            "--threads",
            threads,
            "sweep",
            "--model",
            "k128.scdc",
            "--baseline",
            "--transmit",
            "transmit.semb",
            "--kb",
            "kb.semb",
            "--channels",
            "awgn,rayleigh",
            "--trials",
            "3",
            "--seed",
            "42",
            "--output",
            &first,
        ]
        .iter()
        .map(|s| s.to_string())
        .chain([format!("--snr-list={}", snrs.join(","))])
        .collect();
        semlink(dir, &args)?;
        outputs.push(std::fs::read(dir.join(&first)).map_err(|e| e.to_string())?);

        let manifest: serde_json::Value = serde_json::from_slice(
            &std::fs::read(dir.join(format!("{first}.manifest.json")))
                .map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;
        let mut replay: Vec<String> = manifest["args"]
            .as_array()
            .ok_or("manifest without args")?
            .iter()
            .filter_map(|v| v.as_str().map(String::from))
            .collect();
        let out = replay
            .iter()
            .position(|a| a == "--output")
            .ok_or("no --output")?;
        replay[out + 1] = format!("replay-t{threads}.csv");
        semlink(dir, &replay)?;
        outputs.push(std::fs::read(dir.join(&replay[out + 1])).map_err(|e| e.to_string())?);
    }
    let rows = outputs[0].iter().filter(|&&b| b == b'\n').count() - 1;
    let identical = outputs.windows(2).all(|w| w[0] == w[1]);
    Ok(outcome(
        identical && rows == 2 * 2 * SWEEP_SNRS.len(),
        format!("{rows}-row CSV identical across 2 runs x threads 1/8: {identical}"),
    ))
}

fn check_latency(run: &Synthetic) -> Result<Outcome, String> {
    let e = |e: semlink::Error| e.to_string();
    let kb_set = generate_synthetic(20, 250, 512, 0.05, SEED + 7).map_err(e)?;
    let kb = KnowledgeBase::build(&kb_set).map_err(e)?;
    let r = bench_latency(&run.params, &kb, 1000, SEED).map_err(e)?;
    let sane = r.kb_size == 5000
        && r.net.median_ms > 0.0
        && r.kb.median_ms > 0.0
        && r.median_sum_ms >= r.net.median_ms.max(r.kb.median_ms);
    Ok(outcome(
        sane,
        format!(
            "M=5000, 1000 queries: net median {:.3} ms (ref 1.0), kb median {:.3} ms (ref 1.2), sum {:.3} ms",
            r.net.median_ms, r.kb.median_ms, r.median_sum_ms
        ),
    ))
}

type Check = fn() -> Result<Outcome, String>;
type DependentCheck = fn(&Synthetic) -> Result<Outcome, String>;

fn main() {
    let secs = Duration::from_secs;
    let mut all = true;

    let simple: [(Criterion, Check); 4] = [
        (
            Criterion {
                name: "cbr-arithmetic",
                budget: secs(1),
            },
            check_cbr,
        ),
        (
            Criterion {
                name: "retrieval-oracle",
                budget: secs(30),
            },
            check_retrieval,
        ),
        (
            Criterion {
                name: "channel-calibration",
                budget: secs(10),
            },
            check_channel,
        ),
        (
            Criterion {
                name: "gradient-check",
                budget: secs(60),
            },
            check_gradients,
        ),
    ];
    for (c, f) in simple {
        let t = Instant::now();
        all &= report(&c, t, f());
    }

    let c = Criterion {
        name: "synthetic-end-to-end",
        budget: secs(600),
    };
    let t = Instant::now();
    let run = match synthetic_run() {
        Ok((run, o)) => {
            all &= report(&c, t, Ok(o));
            Some(run)
        }
        Err(err) => {
            all &= report(&c, t, Err(err));
            None
        }
    };

    let dependent: [(Criterion, DependentCheck); 2] = [
        (
            Criterion {
                name: "sweep-determinism",
                budget: secs(300),
            },
            check_determinism,
        ),
        (
            Criterion {
                name: "latency-harness",
                budget: secs(60),
            },
            check_latency,
        ),
    ];
    for (c, f) in dependent {
        let t = Instant::now();
        let result = match &run {
            Some(r) => f(r),
            None => Err("needs the trained synthetic model".into()),
        };
        all &= report(&c, t, result);
    }

    if !all {
        std::process::exit(1);
    }
}
