//! The `semlink` binary driven end to end on synthetic data.

use std::path::Path;
use std::process::{Command, Output};

fn semlink(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semlink"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn semlink")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = semlink(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn gen_split_build_train_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(
        d,
        &[
            "gen-synthetic",
            "--classes",
            "5",
            "--per-class",
            "20",
            "--seed",
            "3",
            "--output",
            "pool.semb",
        ],
    );
    ok(
        d,
        &[
            "split",
            "--input",
            "pool.semb",
            "--seed",
            "1",
            "--first",
            "train.semb",
            "--second",
            "val.semb",
        ],
    );
    ok(
        d,
        &[
            "split",
            "--input",
            "val.semb",
            "--mode",
            "transmit-kb",
            "--seed",
            "2",
            "--first",
            "vtx.semb",
            "--second",
            "vkb.semb",
        ],
    );
    ok(
        d,
        &["build-kb", "--input", "vkb.semb", "--output", "kb.semb"],
    );
    ok(
        d,
        &[
            "train",
            "--train",
            "train.semb",
            "--val-transmit",
            "vtx.semb",
            "--val-kb",
            "kb.semb",
            "--k",
            "16",
            "--epochs",
            "2",
            "--batch-size",
            "16",
            "--seed",
            "4",
            "--output",
            "model.scdc",
            "--report",
            "report.json",
        ],
    );
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["val_accuracy"].as_array().unwrap().len(), 2);

    let stdout = ok(
        d,
        &[
            "eval",
            "--model",
            "model.scdc",
            "--transmit",
            "vtx.semb",
            "--kb",
            "kb.semb",
            "--snr-db",
            "4",
            "--output",
            "eval.json",
        ],
    );
    let acc: f64 = stdout
        .trim()
        .strip_prefix("accuracy=")
        .unwrap()
        .parse()
        .unwrap();
    assert!((0.0..=1.0).contains(&acc));

    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("eval.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "eval");
    let inputs = manifest["inputs"].as_object().unwrap();
    assert_eq!(inputs.len(), 3);
    assert!(inputs.values().all(|v| v.as_str().unwrap().len() == 64));

    let baseline = ok(
        d,
        &[
            "eval",
            "--baseline",
            "--transmit",
            "vtx.semb",
            "--kb",
            "kb.semb",
            "--snr-db",
            "inf",
            "--output",
            "b.json",
        ],
    );
    assert_eq!(baseline.trim(), "accuracy=1.000000");
}

#[test]
fn sweep_is_thread_count_invariant_and_replayable() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(
        d,
        &[
            "gen-synthetic",
            "--classes",
            "4",
            "--per-class",
            "10",
            "--seed",
            "8",
            "--output",
            "pool.semb",
        ],
    );
    ok(
        d,
        &[
            "split",
            "--input",
            "pool.semb",
            "--mode",
            "transmit-kb",
            "--first",
            "tx.semb",
            "--second",
            "kb.semb",
        ],
    );
    let sweep = |threads: &str, out: &str| {
        ok(
            d,
            &[
                "--threads",
                threads,
                "sweep",
                "--baseline",
                "--transmit",
                "tx.semb",
                "--kb",
                "kb.semb",
                "--snr-list=-4,0,4",
                "--trials",
                "3",
                "--seed",
                "6",
                "--output",
                out,
            ],
        );
        std::fs::read(d.join(out)).unwrap()
    };
    let one = sweep("1", "a.csv");
    let four = sweep("4", "b.csv");
    assert_eq!(one, four);
    let text = String::from_utf8(one.clone()).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 3);
    assert!(text
        .starts_with("channel,cbr_num,cbr_den,k,snr_db,accuracy,n_items,trials,model_id,seed\n"));

    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("a.csv.manifest.json")).unwrap()).unwrap();
    let mut args: Vec<String> = manifest["args"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    let out = args.iter().position(|a| a == "--output").unwrap();
    args[out + 1] = "c.csv".into();
    ok(d, &args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(std::fs::read(d.join("c.csv")).unwrap(), one);
}

#[test]
fn config_file_supplies_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(
        d.join("gen.conf"),
        "# synthetic pool\nclasses = 3\nper-class = 4\ndim = 8\noutput = from-config.semb\n",
    )
    .unwrap();
    ok(
        d,
        &["gen-synthetic", "--config", "gen.conf", "--per-class", "5"],
    );
    let ds = semlink::embedding_io::load_dataset_file(d.join("from-config.semb")).unwrap();
    assert_eq!(ds.num_classes(), 3);
    assert_eq!(ds.len(), 15);
    assert_eq!(ds.dim, 8);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(semlink(d, &["sweep", "--help"]).status.code(), Some(0));
    assert_eq!(
        semlink(d, &["eval", "--no-such-flag"]).status.code(),
        Some(1)
    );
    assert_eq!(
        semlink(
            d,
            &["build-kb", "--input", "missing.semb", "--output", "x.semb"]
        )
        .status
        .code(),
        Some(2)
    );
    std::fs::write(d.join("bad.semb"), b"SEMX\x01\x00\x00\x00").unwrap();
    let out = semlink(
        d,
        &["build-kb", "--input", "bad.semb", "--output", "x.semb"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("magic"));
}
