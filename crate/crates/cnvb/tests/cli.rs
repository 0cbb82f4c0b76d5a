use std::path::Path;
use std::process::{Command, Output};

use cnvb::snapshot::{write_snapshot, Snapshot};
use cnvb_core::bounds::{theorem1_bounds, BoundInput};
use cnvb_core::convspec::kernel_operator_norm;
use cnvb_core::network::{Activation, NetworkConfig};
use cnvb_core::norms::{sigma_dist, InitPair};
use cnvb_core::rng::SeededRng;
use cnvb_core::train::init_params;

fn cnvb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cnvb")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Basic-setting snapshot; `moved` perturbs the current parameters away from the initialization.
fn snapshot(dir: &Path, name: &str, moved: bool) -> (String, Snapshot) {
    let config = NetworkConfig::basic(6, 2, 3, 2, Activation::Relu);
    let mut rng = SeededRng::new(21);
    let init = init_params(&config, &mut rng).unwrap();
    let mut cur = init.clone();
    if moved {
        for v in cur.trainable_mut() {
            *v += 0.5 * rng.gaussian();
        }
    }
    let snap = Snapshot::new(config, cur, Some(init)).unwrap();
    let path = dir.join(name);
    write_snapshot(&path, &snap).unwrap();
    (path.to_str().unwrap().to_string(), snap)
}

#[test]
fn unknown_flag_is_usage_error() {
    let o = cnvb(&["verify", "--suite", "opnorm", "--trials", "3", "--seed", "1", "--bogus"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(code(&cnvb(&["frobnicate"])), 2);
    assert_eq!(code(&cnvb(&["--help"])), 0);
}

#[test]
fn randomized_suites_require_a_seed() {
    assert_eq!(code(&cnvb(&["verify", "--suite", "cover", "--trials", "10"])), 2);
}

#[test]
fn dist_of_initialization_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let (p, _) = snapshot(dir.path(), "a.cnvb", false);
    for norm in ["sigma", "n", "l1"] {
        let o = cnvb(&["dist", "--snapshot", &p, "--norm", norm]);
        assert_eq!(code(&o), 0);
        assert_eq!(stdout(&o).trim(), format!("{norm}\t0"));
    }
}

#[test]
fn dist_matches_library_and_accepts_separate_init() {
    let dir = tempfile::tempdir().unwrap();
    let (moved, snap) = snapshot(dir.path(), "m.cnvb", true);
    let (init, _) = snapshot(dir.path(), "i.cnvb", false);
    let want = sigma_dist(&InitPair::new(&snap.params, snap.initial.as_ref().unwrap()).unwrap()).unwrap();
    let out = dir.path().join("d.json");
    let o = cnvb(&["dist", "--snapshot", &moved, "--init", &init, "--norm", "sigma", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&out)["distance"].as_f64().unwrap().to_bits(), want.to_bits());
}

#[test]
fn opnorm_reports_layer_norm() {
    let dir = tempfile::tempdir().unwrap();
    let (p, snap) = snapshot(dir.path(), "m.cnvb", true);
    let out = dir.path().join("o.json");
    let o = cnvb(&["opnorm", "--snapshot", &p, "--layer", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let want = kernel_operator_norm(&snap.params.conv[1], 6).unwrap();
    assert_eq!(json(&out)["operator_norm"].as_f64().unwrap(), want);
    assert_eq!(code(&cnvb(&["opnorm", "--snapshot", &p, "--layer", "7"])), 2);
}

#[test]
fn bound_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let (p, snap) = snapshot(dir.path(), "m.cnvb", true);
    let out = dir.path().join("b.json");
    let o = cnvb(&[
        "bound", "--snapshot", &p, "--theorem", "1", "--n", "1000", "--delta", "0.05", "--lambda", "2", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let beta = sigma_dist(&InitPair::new(&snap.params, snap.initial.as_ref().unwrap()).unwrap()).unwrap();
    let want = theorem1_bounds(&BoundInput {
        beta,
        params: 36.0 * 2.0,
        n: 1000.0,
        delta: 0.05,
        lambda: 2.0,
        depth: 2,
        ..BoundInput::default()
    })
    .unwrap();
    let got = json(&out);
    for (i, r) in want.iter().enumerate() {
        assert_eq!(got["reports"][i]["value"].as_f64().unwrap(), r.value);
    }
    assert!(stdout(&o).contains("theorem1/sqrt"));
    let o = cnvb(&["bound", "--snapshot", &p, "--theorem", "3", "--n", "1", "--delta", "0.1", "--lambda", "1"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn compare_hadamard_shows_unit_norms() {
    let o = cnvb(&["compare", "--scenario", "hadamard", "--dims", "D=4,L=3"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let row = text.lines().find(|l| l.starts_with("op_norm")).unwrap();
    assert!(row.ends_with("2.000000000000"), "{row}");
    assert_eq!(code(&cnvb(&["compare", "--scenario", "hadamard", "--dims", "D=3,L=3"])), 2);
    assert_eq!(code(&cnvb(&["compare", "--scenario", "conv-eps", "--dims", "c=2,d=8"])), 2);
}

#[test]
fn verify_opnorm_passes_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for p in [&a, &b] {
        let o = cnvb(&["verify", "--suite", "opnorm", "--trials", "200", "--seed", "7", "--out", p.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
    }
    assert!(json(&a)["rows"][0]["value"].as_f64().unwrap() <= 1e-9);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn verification_failure_exits_one() {
    // a single repetition is far too noisy for the rate window
    let o = cnvb(&["verify", "--suite", "mc-rate", "--trials", "1", "--seed", "3"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn malformed_snapshot_is_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("junk.cnvb");
    std::fs::write(&p, b"not a snapshot").unwrap();
    let o = cnvb(&["dist", "--snapshot", p.to_str().unwrap(), "--norm", "sigma"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("format error"));
    let o = cnvb(&["dist", "--snapshot", dir.path().join("missing").to_str().unwrap(), "--norm", "sigma"]);
    assert_eq!(code(&o), 2);
}

const TINY: &str = r#"
[train]
learning_rate = 0.1
schedule = "constant"
batch_size = 8
epochs = 2
seed = 0
lambda = 2.0
widths = [2, 3]

[sweep]
input_size = 4
depth = 1
kernel_size = 2
activation = "relu"
readout = "ones"
seeds = [1]

[data]
seed = 3
n_train = 16
n_test = 16
"#;

#[test]
fn train_writes_reports_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let outs = [dir.path().join("r1"), dir.path().join("r2")];
    for out in &outs {
        let o = cnvb(&["train", "--config", cfg.to_str().unwrap(), "--data", "synth", "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["records.csv", "records.json", "gap_vs_w_beta.csv", "gap_vs_w.csv", "beta_vs_w.csv", "median_beta_vs_w.csv"] {
        let a = std::fs::read(outs[0].join(f)).unwrap();
        assert_eq!(a, std::fs::read(outs[1].join(f)).unwrap(), "{f}");
    }
    let csv = std::fs::read_to_string(outs[0].join("records.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("width,W,seed,train_err,test_err,gap,beta,W_times_beta"));
    let o = cnvb(&["train", "--config", cfg.to_str().unwrap(), "--data", "mnist", "--out", "x"]);
    assert_eq!(code(&o), 2);
}
