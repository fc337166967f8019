//! End-to-end tests of the `scdm` binary: pipeline plumbing, exit codes,
//! manifests, and idempotency.

use std::path::Path;
use std::process::{Command, Output};

fn scdm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scdm"))
        .args(args)
        .env("SCDM_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = scdm(args);
    assert!(
        out.status.success(),
        "scdm {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

fn mini_config(dir: &Path) -> String {
    let path = dir.join("mini.toml");
    std::fs::write(
        &path,
        "[gen]\neeg_samples = 128\nfnirs_samples = 64\n\n\
         [schedule]\nt = 10\nbeta_start = 0.2\nbeta_end = 0.7\n\n\
         [train]\nbase_channels = 4\nbatch_size = 8\nepochs = 1\n",
    )
    .unwrap();
    path.display().to_string()
}

fn sha(path: &Path) -> String {
    use std::io::Read;
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .unwrap()
        .read_to_end(&mut bytes)
        .unwrap();
    format!("{:x}", md5ish(&bytes))
}

// tiny deterministic digest; only used to compare files within this test
fn md5ish(bytes: &[u8]) -> u128 {
    let mut h: u128 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u128;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[test]
fn pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let cfg = mini_config(root);
    let p = |s: &str| root.join(s).display().to_string();

    // gen: two epoch-set files + manifest
    ok(&["gen", "--seed", "7", "--trials", "40", "--out", &p("d"), "--config", &cfg]);
    for f in ["eeg.epochs", "fnirs.epochs", "ground_truth.json", "manifest.json"] {
        assert!(root.join("d").join(f).exists(), "missing {f}");
    }

    // idempotency: rerun into the same dir, outputs byte-identical,
    // manifest differs only in the timestamp field
    let before: Vec<String> = ["eeg.epochs", "fnirs.epochs", "ground_truth.json"]
        .iter()
        .map(|f| sha(&root.join("d").join(f)))
        .collect();
    let manifest_before: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.join("d/manifest.json")).unwrap())
            .unwrap();
    ok(&["gen", "--seed", "7", "--trials", "40", "--out", &p("d"), "--config", &cfg]);
    let after: Vec<String> = ["eeg.epochs", "fnirs.epochs", "ground_truth.json"]
        .iter()
        .map(|f| sha(&root.join("d").join(f)))
        .collect();
    assert_eq!(before, after);
    let mut m1 = manifest_before;
    let mut m2: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.join("d/manifest.json")).unwrap())
            .unwrap();
    m1.as_object_mut().unwrap().remove("timestamp_unix");
    m2.as_object_mut().unwrap().remove("timestamp_unix");
    assert_eq!(m1, m2);

    // corr
    ok(&[
        "corr",
        "--eeg",
        &p("d/eeg.epochs"),
        "--fnirs",
        &p("d/fnirs.epochs"),
        "--out",
        &p("c"),
    ]);
    let csv = std::fs::read_to_string(root.join("c/most_correlated.csv")).unwrap();
    assert!(csv.lines().count() > 1);

    // schedule-search: argmin flag matches an exhaustive scan
    ok(&[
        "schedule-search",
        "--eeg",
        &p("d/eeg.epochs"),
        "--fnirs",
        &p("d/fnirs.epochs"),
        "--grid",
        "default",
        "--seed",
        "3",
        "--out",
        &p("s"),
    ]);
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.join("s/schedule_search.json")).unwrap())
            .unwrap();
    let totals: Vec<f64> = doc["report"]["candidates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["total"].as_f64().unwrap())
        .collect();
    let argmin = totals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap()
        .0;
    assert_eq!(doc["argmin"].as_u64().unwrap() as usize, argmin);

    // train -> synthesize -> evaluate -> export-plots
    ok(&[
        "train",
        "--eeg",
        &p("d/eeg.epochs"),
        "--fnirs",
        &p("d/fnirs.epochs"),
        "--maps",
        &p("c/maps.json"),
        "--config",
        &cfg,
        "--out",
        &p("t"),
    ]);
    assert!(root.join("t/ckpt_final.scdm").exists());
    assert!(root.join("t/loss_curve.csv").exists());

    ok(&[
        "synthesize",
        "--eeg",
        &p("d/eeg.epochs"),
        "--ckpt",
        &p("t/ckpt_final.scdm"),
        "--maps",
        &p("c/maps.json"),
        "--like",
        &p("d/fnirs.epochs"),
        "--out",
        &p("y"),
    ]);
    assert!(root.join("y/synthetic.epochs").exists());

    ok(&[
        "evaluate",
        "--eeg",
        &p("d/eeg.epochs"),
        "--real",
        &p("d/fnirs.epochs"),
        "--synthetic",
        &p("y/synthetic.epochs"),
        "--windows",
        "0:2,2:4,4:6",
        "--out",
        &p("e"),
    ]);
    let table = std::fs::read_to_string(root.join("e/evaluation.csv")).unwrap();
    assert!(table.starts_with("combo,ratio,"));
    // three combos x seven ratios
    assert_eq!(table.lines().count(), 1 + 3 * 7);
    assert!(root.join("e/curve_rms.json").exists());
    assert!(root.join("e/topography_synthetic_rmi.json").exists());

    ok(&["export-plots", "--data", &p("e"), "--out", &p("plots")]);
    let svg_count = std::fs::read_dir(root.join("plots"))
        .unwrap()
        .filter(|f| {
            f.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|e| e == "svg")
        })
        .count();
    assert!(svg_count >= 4, "only {svg_count} SVGs");
    let one = std::fs::read_to_string(root.join("plots/curves_real_lmi.svg")).unwrap();
    assert!(one.starts_with("<svg"));
    assert!(one.trim_end().ends_with("</svg>"));
}

#[test]
fn ablate_writes_table_shaped_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let cfg = mini_config(root);
    let p = |s: &str| root.join(s).display().to_string();
    ok(&["gen", "--seed", "9", "--trials", "48", "--out", &p("d"), "--config", &cfg]);
    ok(&[
        "ablate",
        "--data",
        &p("d"),
        "--config",
        &cfg,
        "--hemo",
        "HbR",
        "--out",
        &p("a"),
    ]);
    let csv = std::fs::read_to_string(root.join("a/ablation.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 7);
    assert_eq!(lines[0], "hemo,variant,acc,spe,pre,sen,error");
    let variants: Vec<&str> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(
        variants,
        [
            "ATTN+COV",
            "ATTN+MTR",
            "SCG(EEG)+COV",
            "SCG(EEG)+MTR",
            "SCG(fNIRS)+COV",
            "SCG(fNIRS)+MTR"
        ]
    );
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |s: &str| tmp.path().join(s).display().to_string();

    // unknown subcommand: usage text, exit 1
    let out = scdm(&["frobnicate"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    // validation error: bad variant name
    let out = scdm(&["gen", "--seed", "1", "--trials", "8", "--out", &p("d")]);
    assert_eq!(code(&out), 0);
    let out = scdm(&[
        "train",
        "--eeg",
        &p("d/eeg.epochs"),
        "--fnirs",
        &p("d/fnirs.epochs"),
        "--maps",
        &p("d/ground_truth.json"),
        "--variant",
        "NOPE",
        "--out",
        &p("t"),
    ]);
    assert_eq!(code(&out), 1);

    // runtime failure: missing input file
    let out = scdm(&[
        "corr",
        "--eeg",
        &p("missing.epochs"),
        "--fnirs",
        &p("missing.epochs"),
        "--out",
        &p("c"),
    ]);
    assert_eq!(code(&out), 2);
}
