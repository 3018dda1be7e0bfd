use std::path::Path;
use std::process::Command;

use echolab::acoustics::{MultichannelWave, WaveRole};
use echolab::scenario::Scenario;
use echolab_cli::store::DatasetManifest;

const TOY: &str = r#"
[data]
use_surrogate = true
[data.sampler]
duration_s = 0.5
[ssdoa]
channels = 3
[iscrn]
channels = 3
pre_units = 1
post_units = 1
s4d_state = 2
[train.ssdoa]
epochs = 1
[train.aec]
epochs = 1
"#;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn echolab(dir: &Path, args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_echolab"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let r = echolab(dir, args);
    assert_eq!(r.code, 0, "echolab {args:?} failed: {}", r.stderr);
    r.stdout
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("toy.toml"), TOY).unwrap();
    dir
}

fn synth_toy(dir: &Path, out: &str, split: &str, count: usize, policy: &str) {
    ok(
        dir,
        &["--config", "toy.toml", "synth", "--out", out, "--split", split, "--count", &count.to_string(), "--policy", policy],
    );
}

#[test]
fn synth_writes_scenario_directories() {
    let ws = workspace();
    synth_toy(ws.path(), "data", "train", 3, "matched");
    let m = DatasetManifest::read(&ws.path().join("data")).unwrap();
    let entries = m.entries(echolab_cli::store::Split::Train);
    assert_eq!(entries.len(), 3);
    for e in entries {
        let d = ws.path().join("data").join(&e.path);
        for f in ["y.wav", "x.wav", "s_d.wav", "e.wav", "labels.bin", "labels.json", "scenario.json"] {
            assert!(d.join(f).is_file(), "{} missing from {}", f, d.display());
        }
        let y = MultichannelWave::read_wav(&d.join("y.wav"), WaveRole::Mixture).unwrap();
        assert_eq!(y.num_channels(), 6);
        assert_eq!(y.len(), 8000);
    }
}

#[test]
fn talker_moves_manifests_hold_two_segments() {
    let ws = workspace();
    ok(
        ws.path(),
        &["--config", "toy.toml", "synth", "--out", "moves", "--count", "2", "--policy", "talker_moves", "--duration", "3.5"],
    );
    let m = DatasetManifest::read(&ws.path().join("moves")).unwrap();
    for e in m.entries(echolab_cli::store::Split::Train) {
        let text = std::fs::read_to_string(ws.path().join("moves").join(&e.path).join("scenario.json")).unwrap();
        let scn = Scenario::from_json(&text).unwrap();
        assert_eq!(scn.talker.len(), 2);
        assert!(scn.talker_moves());
    }
}

#[test]
fn same_seed_gives_identical_manifests() {
    let ws = workspace();
    synth_toy(ws.path(), "a", "test", 2, "grid_1deg");
    synth_toy(ws.path(), "b", "test", 2, "grid_1deg");
    let read = |d: &str, f: &str| std::fs::read(ws.path().join(d).join(f)).unwrap();
    assert_eq!(read("a", "manifest.json"), read("b", "manifest.json"));
    let rel = "test/grid_1deg-test-000001";
    for f in ["scenario.json", "y.wav", "labels.bin"] {
        assert_eq!(read("a", &format!("{rel}/{f}")), read("b", &format!("{rel}/{f}")), "{f}");
    }
}

#[test]
fn missing_speech_source_is_a_config_error() {
    let ws = workspace();
    let r = echolab(ws.path(), &["synth", "--out", "d", "--count", "1"]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert!(r.stderr.contains("speech"));
}

#[test]
fn verify_accepts_fresh_data_and_flags_tampering() {
    let ws = workspace();
    synth_toy(ws.path(), "data", "train", 1, "matched");
    let out = ok(ws.path(), &["verify", "--data", "data"]);
    assert!(out.contains("reproducible"));
    let y = ws.path().join("data/train/matched-train-000000/y.wav");
    let mut bytes = std::fs::read(&y).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x40;
    std::fs::write(&y, bytes).unwrap();
    let r = echolab(ws.path(), &["verify", "--data", "data"]);
    assert_eq!(r.code, 3);
    assert!(r.stdout.contains("y.wav") && r.stdout.contains("DIFFERS"));
}

#[test]
fn aec_stage_without_ssdoa_checkpoint_is_a_config_error() {
    let ws = workspace();
    synth_toy(ws.path(), "data", "train", 1, "matched");
    let r = echolab(
        ws.path(),
        &["--config", "toy.toml", "train", "--stage", "aec", "--mode", "ET", "--data", "data", "--out", "runs"],
    );
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert!(r.stderr.contains("SS-DOA"));
}

#[test]
fn resumed_training_reproduces_the_next_epoch() {
    let ws = workspace();
    synth_toy(ws.path(), "data", "train", 2, "matched");
    let train = |out: &str, epochs: &str, resume: bool| {
        let mut args = vec!["--config", "toy.toml", "train", "--stage", "ssdoa", "--data", "data", "--out", out, "--epochs", epochs];
        if resume {
            args.push("--resume");
        }
        ok(ws.path(), &args);
    };
    train("straight", "2", false);
    train("split", "1", false);
    train("split", "2", true);
    let log = |d: &str| std::fs::read_to_string(ws.path().join(d).join("ssdoa.jsonl")).unwrap();
    assert_eq!(log("straight"), log("split"));
    assert_eq!(log("split").lines().count(), 2);
    // Headers embed the invoking config, which differs in `epochs`; the
    // weights must not.
    let weights = |d: &str| {
        let bytes = std::fs::read(ws.path().join(d).join("ssdoa.ckpt")).unwrap();
        echolab::nn::checkpoint::decode(&bytes).unwrap().1
    };
    assert_eq!(weights("straight"), weights("split"));
}

/// synth → train (both stages, every mode) → infer → eval over the four
/// test-set policies.
#[test]
fn full_pipeline_fills_the_mode_by_test_set_grid() {
    let ws = workspace();
    let dir = ws.path();
    synth_toy(dir, "data", "train", 2, "matched");
    let sets = ["matched", "talker_moves", "grid_1deg", "co_directional"];
    for p in sets {
        let mut args = vec!["--config", "toy.toml", "synth", "--out", p, "--split", "test", "--count", "1", "--policy", p];
        if p == "talker_moves" {
            args.extend(["--duration", "3.5"]);
        }
        ok(dir, &args);
    }
    ok(dir, &["--config", "toy.toml", "train", "--stage", "ssdoa", "--data", "data", "--out", "runs"]);
    let modes = ["none", "B", "E", "ET", "ETA"];
    for m in modes {
        ok(dir, &["--config", "toy.toml", "train", "--stage", "aec", "--mode", m, "--data", "data", "--out", "runs"]);
    }
    let rec = ok(
        dir,
        &[
            "infer",
            "--checkpoint",
            "runs/aec-eta.ckpt",
            "--ssdoa",
            "runs/ssdoa.ckpt",
            "--scenario",
            "matched/test/matched-test-000000",
            "--out",
            "inf",
            "--doa-jsonl",
            "inf/doa.jsonl",
        ],
    );
    let rec: serde_json::Value = serde_json::from_str(rec.trim()).unwrap();
    assert_eq!(rec["mode"], "ETA");
    assert!(rec["rtf"].as_f64().unwrap() > 0.0);
    let frames = rec["frames"].as_u64().unwrap() as usize;
    assert_eq!(std::fs::read_to_string(dir.join("inf/doa.jsonl")).unwrap().lines().count(), frames);
    assert!(dir.join("inf/s_hat.wav").is_file());

    let ckpts: Vec<String> = modes.iter().map(|m| format!("runs/aec-{}.ckpt", m.to_lowercase())).collect();
    let mut args = vec!["eval", "--ssdoa", "runs/ssdoa.ckpt", "--out", "ev", "--report", "macs", "--checkpoints"];
    args.extend(ckpts.iter().map(String::as_str));
    args.push("--test-sets");
    args.extend(sets);
    let table = ok(dir, &args);
    assert!(table.contains("ISCRN ETA") && table.contains("SS-DOA"));
    let summary = std::fs::read_to_string(dir.join("ev/summary.csv")).unwrap();
    let mut cells: Vec<(String, String)> = summary
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].to_string())
        })
        .collect();
    cells.sort();
    cells.dedup();
    assert_eq!(cells.len(), 20, "{summary}");
    let metrics = std::fs::read_to_string(dir.join("ev/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 20);
}

#[test]
fn ssdoa_checkpoint_is_rejected_as_an_aec_model() {
    let ws = workspace();
    synth_toy(ws.path(), "data", "train", 1, "matched");
    synth_toy(ws.path(), "test", "test", 1, "matched");
    ok(ws.path(), &["--config", "toy.toml", "train", "--stage", "ssdoa", "--data", "data", "--out", "runs"]);
    let r = echolab(ws.path(), &["eval", "--checkpoints", "runs/ssdoa.ckpt", "--test-sets", "test", "--out", "ev"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("expected aec"), "{}", r.stderr);
}

#[test]
fn report_prints_complexity_against_published_sizes() {
    let ws = workspace();
    let out = ok(ws.path(), &["report", "macs"]);
    assert!(out.contains("SS-DOA") && out.contains("92.8k") && out.contains("3.640 G"), "{out}");
    let cfg = ok(ws.path(), &["--config", "toy.toml", "report", "config"]);
    let back: echolab_cli::ExperimentConfig = toml::from_str(&cfg).unwrap();
    assert_eq!(back.ssdoa.channels, 3);
}

#[test]
fn bad_config_exits_with_code_two() {
    let ws = workspace();
    std::fs::write(ws.path().join("bad.toml"), "mode = \"XYZ\"\n").unwrap();
    let r = echolab(ws.path(), &["--config", "bad.toml", "report", "macs"]);
    assert_eq!(r.code, 2);
}
