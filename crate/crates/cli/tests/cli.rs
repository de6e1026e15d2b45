use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_palsyfuse"));
    c.env_remove("PALSYFUSE_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn golden(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn synth(dir: &Path, seed: &str) -> Output {
    let out = dir.to_str().unwrap();
    run(&["synth", "--subjects", "3", "--palsy-fraction", "0.34", "--frames", "3", "--seed", seed, "--out", out])
}

#[test]
fn help_matches_golden_files() {
    let out = run(&["--help"]);
    assert!(out.status.success());
    assert_eq!(text(&out.stdout), golden("help.txt"));
    for cmd in ["synth", "extract", "train", "eval", "report"] {
        let out = run(&[cmd, "--help"]);
        assert!(out.status.success(), "{cmd}");
        assert_eq!(text(&out.stdout), golden(&format!("{cmd}.txt")), "{cmd} --help");
    }
}

#[test]
fn help_lists_every_flag() {
    let flags: &[(&str, &[&str])] = &[
        ("synth", &["--subjects", "--palsy-fraction", "--frames", "--seed", "--jitter", "--out"]),
        (
            "extract",
            &["--frames", "--roles", "--contours", "--out-features", "--out-images", "--modalities", "--image-size"],
        ),
        ("train", &["--config", "--model", "--out-weights"]),
        ("eval", &["--config", "--out-report"]),
        ("report", &["--report", "--format"]),
    ];
    for (cmd, names) in flags {
        let help = text(&run(&[cmd, "--help"]).stdout);
        for name in *names {
            assert!(help.contains(name), "{cmd} --help lacks {name}");
        }
        assert!(help.contains("--threads"), "{cmd}");
    }
}

#[test]
fn unknown_flags_and_missing_arguments_exit_1() {
    for args in
        [&["synth", "--bogus"][..], &["eval"], &["frobnicate"], &["report", "--report", "r.json", "--format", "xml"]]
    {
        let out = run(args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(text(&out.stderr).contains("error"), "{args:?}");
    }
}

#[test]
fn synth_is_idempotent_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert!(synth(&a, "9").status.success());
    assert!(synth(&b, "9").status.success());
    assert!(synth(&c, "10").status.success());
    for file in ["frames.jsonl", "manifest.json"] {
        let read = |d: &Path| std::fs::read(d.join(file)).unwrap();
        assert_eq!(read(&a), read(&b), "{file}");
        assert_ne!(read(&a), read(&c), "{file}");
    }
    assert_eq!(std::fs::read_to_string(a.join("frames.jsonl")).unwrap().lines().count(), 9);
}

#[test]
fn extract_writes_features_and_images_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(synth(&data, "4").status.success());
    let frames = data.join("frames.jsonl");
    let mut outputs = Vec::new();
    for k in 0..2 {
        let feats = dir.path().join(format!("features{k}"));
        let images = dir.path().join(format!("images{k}"));
        let out = run(&[
            "extract",
            "--frames",
            frames.to_str().unwrap(),
            "--out-features",
            feats.to_str().unwrap(),
            "--out-images",
            images.to_str().unwrap(),
            "--image-size",
            "32",
        ]);
        assert!(out.status.success(), "{}", text(&out.stderr));
        outputs.push((feats, images));
    }
    let (f0, i0) = &outputs[0];
    let (f1, i1) = &outputs[1];
    for m in ["handcrafted", "expression", "coordinates"] {
        let csv = std::fs::read_to_string(f0.join(format!("{m}.csv"))).unwrap();
        assert_eq!(csv.lines().count(), 10, "{m}: header plus 9 rows");
        assert_eq!(csv, std::fs::read_to_string(f1.join(format!("{m}.csv"))).unwrap());
    }
    let rgb = i0.join("rgb/P01/f00000.ppm");
    let bnw = i0.join("bnw/H01/f00002.pgm");
    assert!(std::fs::read(&rgb).unwrap().starts_with(b"P6\n32 32\n255\n"));
    assert!(std::fs::read(&bnw).unwrap().starts_with(b"P5\n32 32\n255\n"));
    assert_eq!(std::fs::read(&rgb).unwrap(), std::fs::read(i1.join("rgb/P01/f00000.ppm")).unwrap());
}

#[test]
fn extract_reports_a_missing_roles_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(synth(&data, "4").status.success());
    let missing = dir.path().join("nowhere/roles.json");
    let out = run(&[
        "extract",
        "--frames",
        data.join("frames.jsonl").to_str().unwrap(),
        "--roles",
        missing.to_str().unwrap(),
        "--out-features",
        dir.path().to_str().unwrap(),
        "--modalities",
        "handcrafted",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("nowhere/roles.json"), "{}", text(&out.stderr));
}

#[test]
fn extract_needs_an_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(synth(&data, "4").status.success());
    let out = run(&["extract", "--frames", data.join("frames.jsonl").to_str().unwrap(), "--modalities", "bnw"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("--out-images"));
}

#[test]
fn eval_train_and_report_on_the_smoke_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = workspace().join("configs/smoke.json");
    let report = dir.path().join("run/report.json");
    let out = run(&["eval", "--config", config.to_str().unwrap(), "--out-report", report.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert_eq!(text(&out.stderr).matches(": complete").count(), 2);

    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["folds"].as_array().unwrap().len(), 2);
    assert_eq!(json["complete"], true);
    for name in ["handcrafted", "expression", "mixer_rgb", "late", "early"] {
        assert!(json["averages"][name]["f1"].is_number(), "{name}");
        let csv = dir.path().join(format!("run/predictions/fold00_{name}.csv"));
        let body = std::fs::read_to_string(&csv).unwrap();
        assert!(body.starts_with("subject_id,frame_id,probability,label\n"), "{name}");
    }
    assert!(dir.path().join("run/report.md").exists());

    // A second run reproduces the report byte for byte, whatever the pool size.
    let again = dir.path().join("again/report.json");
    let out = bin()
        .env("PALSYFUSE_THREADS", "2")
        .args(["eval", "--config", config.to_str().unwrap(), "--out-report", again.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(std::fs::read(&report).unwrap(), std::fs::read(&again).unwrap());

    let md = run(&["report", "--report", report.to_str().unwrap()]);
    assert!(md.status.success());
    let md = text(&md.stdout);
    assert!(md.starts_with("# Palsy detection results"));
    assert!(md.contains("| Data Modality | Model | Average F1 | Average Precision | Average Recall |"));
    assert_eq!(md, std::fs::read_to_string(dir.path().join("run/report.md")).unwrap());
    let js = run(&["report", "--report", report.to_str().unwrap(), "--format", "json"]);
    assert_eq!(js.stdout, std::fs::read(&report).unwrap());

    let weights = dir.path().join("hc.nnw");
    let out = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--model",
        "handcrafted",
        "--out-weights",
        weights.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(std::fs::read(&weights).unwrap().starts_with(b"NNW1"));
}

#[test]
fn train_rejects_an_unknown_model() {
    let dir = tempfile::tempdir().unwrap();
    let config = workspace().join("configs/smoke.json");
    let out = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--model",
        "nope",
        "--out-weights",
        dir.path().join("w").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("nope"));
}

#[test]
fn bad_configs_and_reports_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    std::fs::write(&config, r#"{"seed": 1, "surprise": true}"#).unwrap();
    let out = run(&["eval", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let report = dir.path().join("report.json");
    std::fs::write(&report, r#"{"format_version": "other/9"}"#).unwrap();
    assert_eq!(run(&["report", "--report", report.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn thread_settings_are_validated() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .env("PALSYFUSE_THREADS", "many")
        .args(["synth", "--subjects", "1", "--frames", "1", "--seed", "1", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("PALSYFUSE_THREADS"));
    assert_eq!(
        run(&[
            "--threads",
            "0",
            "synth",
            "--subjects",
            "1",
            "--frames",
            "1",
            "--seed",
            "1",
            "--out",
            dir.path().to_str().unwrap()
        ])
        .status
        .code(),
        Some(1)
    );
    let out = bin()
        .env("PALSYFUSE_THREADS", "1")
        .args(["--threads", "0", "synth", "--subjects", "1", "--frames", "1", "--seed", "1", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "the environment overrides the flag");
}
