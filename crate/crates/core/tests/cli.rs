use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ppad::imaging::{intensity_to_byte, read_image};
use ppad::toy::ToyBenchmark;

fn ppad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ppad"))
        .args(args)
        .env_remove("PPAD_CONFIG")
        .output()
        .expect("binary runs")
}

fn code(args: &[&str]) -> i32 {
    ppad(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &str = "image_size = 32\npatch_size = 8\nembed_dim = 16\nfeature_dim = 16\nshots = 6\nepochs = 3\n";

/// A 32×32 toy dataset plus a config file sized for it.
fn fixture() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    ToyBenchmark::generate(8, 6, 32, 5).unwrap().write(dir.path()).unwrap();
    let conf = dir.path().join("small.conf");
    fs::write(&conf, SMALL).unwrap();
    (dir, conf)
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn usage_errors_exit_two_and_help_exits_zero() {
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&[]), 2);
    assert_eq!(code(&["fly"]), 2);
    for sub in ["synth", "train", "eval", "viz"] {
        assert_eq!(code(&[sub, "--help"]), 0, "{sub} --help");
        assert_eq!(code(&[sub]), 2, "{sub} without required flags");
        assert_eq!(code(&[sub, "--bogus", "x"]), 2, "{sub} with an unknown flag");
    }
}

#[test]
fn runtime_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing");
    let out = dir.path().join("out");
    assert_eq!(code(&["synth", "--input", s(&missing), "--output", s(&out)]), 1);
    assert_eq!(code(&["train", "--data", s(&missing), "--out", s(&out)]), 1);
    assert_eq!(code(&["eval", "--data", s(&missing), "--checkpoint", s(&missing)]), 1);
    assert_eq!(code(&["viz", "--input", s(&missing.join("a.pgm")), "--out-dir", s(&out)]), 1);
    let bad_conf = dir.path().join("bad.conf");
    fs::write(&bad_conf, "epochs = 0\n").unwrap();
    assert_eq!(code(&["train", "--data", s(dir.path()), "--config", s(&bad_conf)]), 1);
}

#[test]
fn synth_is_deterministic_and_preserves_outside_pixels() {
    let (dir, _) = fixture();
    let input = dir.path().join("test/normal");
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for (out, seed) in [(&a, "3"), (&b, "3"), (&c, "4")] {
        let o = ppad(&["synth", "--input", s(&input), "--output", s(out), "--seed", seed, "--count", "4"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let files = read_dir_bytes(&a);
    assert_eq!(files.len(), 8);
    assert_eq!(files, read_dir_bytes(&b));
    assert_ne!(files, read_dir_bytes(&c));

    let src = read_image(&input.join("0000.pgm")).unwrap();
    let out = read_image(&a.join("0000_synth.pgm")).unwrap();
    let mask = read_image(&a.join("0000_mask.pgm")).unwrap();
    let mut changed_inside = false;
    for k in 0..src.as_slice().len() {
        let (x, y) = (k % 32, k / 32);
        if mask.get(x, y) == 0.0 {
            assert_eq!(intensity_to_byte(src.get(x, y)), intensity_to_byte(out.get(x, y)));
        } else {
            changed_inside |= src.get(x, y) != out.get(x, y);
        }
    }
    assert!(changed_inside);
}

#[test]
fn train_then_eval_round_trip() {
    let (dir, conf) = fixture();
    let data = dir.path().join("train");
    let runs: Vec<(PathBuf, Vec<u8>, String)> = ["one", "two"]
        .iter()
        .map(|name| {
            let ck = dir.path().join(format!("{name}.ppad"));
            let log = dir.path().join(format!("{name}.csv"));
            let o = ppad(&["train", "--data", s(&data), "--config", s(&conf), "--seed", "2", "--out", s(&ck), "--log", s(&log)]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            (ck.clone(), fs::read(&ck).unwrap(), fs::read_to_string(&log).unwrap())
        })
        .collect();
    assert_eq!(runs[0].1, runs[1].1);
    assert_eq!(runs[0].2, runs[1].2);
    assert!(runs[0].1.starts_with(b"PPAD"));
    let log_lines: Vec<&str> = runs[0].2.lines().collect();
    assert_eq!(log_lines[0], "epoch,mean_loss");
    assert_eq!(log_lines.len(), 4);
    assert!(log_lines[1].starts_with("1,"));

    let report = dir.path().join("report.json");
    let o = ppad(&["eval", "--data", s(&dir.path().join("test")), "--checkpoint", s(&runs[0].0), "--out", s(&report)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = String::from_utf8(o.stdout).unwrap();
    for metric in ["ACC", "AUC", "F1", "AP"] {
        assert!(table.contains(metric));
    }
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["scores"].as_array().unwrap().len(), 12);
    for metric in ["acc", "auc", "f1", "ap"] {
        let v = json[metric].as_f64().unwrap();
        assert!((0.0..=100.0).contains(&v));
    }
    let first = &json["scores"][0];
    assert_eq!(first["views"].as_array().unwrap().len(), 5);
    assert!(first["label"] == "normal" || first["label"] == "abnormal");
}

#[test]
fn env_config_is_a_fallback() {
    let (dir, conf) = fixture();
    let ck = dir.path().join("env.ppad");
    let o = Command::new(env!("CARGO_BIN_EXE_ppad"))
        .args(["train", "--data", s(&dir.path().join("train")), "--epochs", "1", "--out", s(&ck)])
        .env("PPAD_CONFIG", &conf)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let loaded = ppad::trainer::Checkpoint::load(&ck).unwrap();
    assert_eq!((loaded.config.image_size, loaded.config.shots, loaded.config.epochs), (32, 6, 1));
}

#[test]
fn viz_writes_deterministic_panels() {
    let (dir, _) = fixture();
    let input = dir.path().join("test/normal/0001.pgm");
    let (a, b) = (dir.path().join("va"), dir.path().join("vb"));
    for out in [&a, &b] {
        assert_eq!(code(&["viz", "--input", s(&input), "--out-dir", s(out), "--seed", "8"]), 0);
    }
    let files = read_dir_bytes(&a);
    assert_eq!(files, read_dir_bytes(&b));
    let names: Vec<&str> = files.iter().map(|f| f.0.as_str()).collect();
    let mut expected = ppad::cli::VIZ_PANELS.to_vec();
    expected.sort();
    assert_eq!(names, expected);

    let src = read_image(&input).unwrap();
    let mask = read_image(&a.join("mask.pgm")).unwrap();
    let gamma = read_image(&a.join("gamma.pgm")).unwrap();
    let synth = read_image(&a.join("synth.pgm")).unwrap();
    assert!(mask.as_slice().contains(&1.0));
    for y in 0..32 {
        for x in 0..32 {
            if mask.get(x, y) == 0.0 {
                assert_eq!(intensity_to_byte(gamma.get(x, y)), 128);
                assert_eq!(intensity_to_byte(src.get(x, y)), intensity_to_byte(synth.get(x, y)));
            } else {
                assert_ne!(intensity_to_byte(gamma.get(x, y)), 128);
            }
        }
    }
}
