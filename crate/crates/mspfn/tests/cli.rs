//! Contract tests for the `mspfn` binary: exit codes, required flags,
//! deterministic outputs, dimension preservation, and report formats.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mspfn::data::{load_image, save_image, synthetic_clean};
use mspfn::model::{make_variant, param_count, ModelConfig, ParamStore};
use mspfn::rng::Rng;
use mspfn::train::{save_checkpoint, Checkpoint};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mspfn"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary should spawn")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no exit code")
}

/// Write a fresh randomly initialized checkpoint for `variant`.
fn write_checkpoint(path: &Path, cfg: &ModelConfig, zero_rm: bool) {
    let mut params = ParamStore::<f32>::init(cfg, 5).unwrap();
    if zero_rm {
        let names: Vec<String> = params
            .iter()
            .filter(|(name, _)| name.starts_with("rm."))
            .map(|(name, _)| name.to_string())
            .collect();
        for name in names {
            let len = params.get(&name).unwrap().numel();
            params.update(&name, vec![0.0; len]).unwrap();
        }
    }
    let ckpt = Checkpoint {
        model: cfg.clone(),
        step: 0,
        rng_state: Rng::seed_from_u64(0).state(),
        params,
        adam: None,
    };
    save_checkpoint(&ckpt, path).unwrap();
}

/// `synth --gen-clean` fixture: returns (out_dir, manifest path as String).
fn make_fixture(root: &Path, count: usize, seed: u64) -> String {
    let clean = root.join("clean");
    let data = root.join("data");
    let out = run(&[
        "synth",
        "--clean-dir",
        clean.to_str().unwrap(),
        "--gen-clean",
        "2",
        "--size",
        "64x64",
        "--out",
        data.to_str().unwrap(),
        "--count",
        &count.to_string(),
        "--seed",
        &seed.to_string(),
    ]);
    assert_eq!(code(&out), 0, "synth failed: {}", stderr(&out));
    data.join("manifest.json").to_str().unwrap().to_string()
}

#[test]
fn help_exits_zero_for_every_subcommand() {
    for args in [
        vec!["--help"],
        vec!["synth", "--help"],
        vec!["train", "--help"],
        vec!["derain", "--help"],
        vec!["eval", "--help"],
        vec!["inspect", "--help"],
    ] {
        let out = run(&args);
        assert_eq!(code(&out), 0, "{args:?}");
        assert!(stdout(&out).contains("Usage"), "{args:?}");
    }
}

#[test]
fn unknown_flags_and_missing_required_flags_exit_one() {
    let out = run(&["synth", "--bogus", "x"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--bogus"));

    let out = run(&["synth", "--out", "/tmp/nowhere"]);
    assert_eq!(code(&out), 1);
    let err = stderr(&out);
    assert!(err.contains("--clean-dir"), "{err}");
    assert!(err.contains("Usage"), "{err}");

    // eval demands exactly one of --ckpt / --pairs
    let out = run(&["eval", "--manifest", "m.json"]);
    assert_eq!(code(&out), 1);
    let out = run(&["eval", "--manifest", "m.json", "--ckpt", "c.ckpt", "--pairs"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn runtime_failures_exit_two_and_name_the_path() {
    let out = run(&["eval", "--manifest", "/tmp/definitely_missing_manifest.json", "--pairs"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("/tmp/definitely_missing_manifest.json"));

    let out = run(&["train", "--manifest", "/tmp/missing_too.json", "--out", "/tmp/x"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("/tmp/missing_too.json"));
}

#[test]
fn synth_writes_the_promised_files_and_is_seed_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let manifest_a = make_fixture(&dir.path().join("a"), 4, 11);
    let manifest_b = make_fixture(&dir.path().join("b"), 4, 11);

    let data_a = Path::new(&manifest_a).parent().unwrap();
    let mut names: Vec<String> = fs::read_dir(data_a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let expected: Vec<String> = (0..4)
        .flat_map(|i| [format!("clean_{i:04}.png"), format!("rain_{i:04}.png")])
        .chain(["manifest.json".to_string()])
        .collect();
    let mut expected_sorted = expected.clone();
    expected_sorted.sort();
    assert_eq!(names, expected_sorted);

    // Same seed in a different directory: every artifact byte-identical.
    for name in &expected {
        let a = fs::read(data_a.join(name)).unwrap();
        let b = fs::read(Path::new(&manifest_b).parent().unwrap().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between same-seed runs");
    }
}

#[test]
fn train_runs_and_paper_defaults_appear_in_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = make_fixture(dir.path(), 4, 3);
    let out_dir = dir.path().join("run");
    let out = run(&[
        "train",
        "--manifest",
        &manifest,
        "--variant",
        "tiny",
        "--paper-defaults",
        "--steps",
        "2",
        "--patch",
        "16",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    for needle in ["lr=2e-4", "batch=8", "epochs=30"] {
        assert!(text.contains(needle), "header missing {needle}: {text}");
    }
    let ckpt = out_dir.join("checkpoint_final.ckpt");
    assert!(ckpt.exists());
    let loaded = mspfn::train::load_checkpoint(&ckpt).unwrap();
    assert_eq!(loaded.step, 2);
    assert_eq!(loaded.model, ModelConfig::tiny());
    assert!(out_dir.join("train_log.jsonl").exists());
}

#[test]
fn derain_preserves_dimensions_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("model.ckpt");
    write_checkpoint(&ckpt, &ModelConfig::tiny(), false);

    // 100 wide × 75 tall: not a multiple of the size divisor in either dim.
    let input = dir.path().join("input.png");
    save_image(&synthetic_clean(75, 100, 21), &input).unwrap();

    let out_a = dir.path().join("derained_a.png");
    let out_b = dir.path().join("derained_b.png");
    for out_path in [&out_a, &out_b] {
        let out = run(&[
            "derain",
            "--ckpt",
            ckpt.to_str().unwrap(),
            "--in",
            input.to_str().unwrap(),
            "--out",
            out_path.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    let img = load_image(&out_a).unwrap();
    assert_eq!((img.width(), img.height()), (100, 75));
    assert_eq!(
        fs::read(&out_a).unwrap(),
        fs::read(&out_b).unwrap(),
        "derain is not deterministic"
    );
}

#[test]
fn zero_residual_checkpoint_reproduces_the_input() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("zero_rm.ckpt");
    write_checkpoint(&ckpt, &ModelConfig::tiny(), true);

    let input = dir.path().join("input.png");
    save_image(&synthetic_clean(48, 64, 33), &input).unwrap();
    let output = dir.path().join("output.png");
    let out = run(&[
        "derain",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--in",
        input.to_str().unwrap(),
        "--out",
        output.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    // Zero reconstruction weights mean zero predicted residual, so the
    // derained image is the input exactly; after 8-bit quantization the
    // decoded pixels must match bit for bit.
    let a = load_image(&input).unwrap();
    let b = load_image(&output).unwrap();
    assert_eq!(a.rgb(), b.rgb());
}

#[test]
fn eval_scores_identical_pairs_as_infinite_psnr() {
    let dir = tempfile::tempdir().unwrap();
    let img_path = dir.path().join("same.png");
    save_image(&synthetic_clean(32, 32, 8), &img_path).unwrap();
    let manifest_path = dir.path().join("manifest.json");
    fs::write(
        &manifest_path,
        r#"[{"clean": "same.png", "rain": "same.png", "split": "test"}]"#,
    )
    .unwrap();

    let json_path = dir.path().join("report.json");
    let out = run(&[
        "eval",
        "--manifest",
        manifest_path.to_str().unwrap(),
        "--pairs",
        "--json",
        json_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("inf"), "{text}");
    assert!(text.contains("1.0000"), "{text}");

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&json_path).unwrap()).unwrap();
    assert_eq!(report["mean_psnr"], serde_json::json!("inf"));
    assert_eq!(report["entries"][0]["psnr"], serde_json::json!("inf"));
    let ssim = report["mean_ssim"].as_f64().unwrap();
    assert!((ssim - 1.0).abs() < 1e-12);
}

#[test]
fn eval_respects_the_split_filter() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = make_fixture(dir.path(), 4, 9);
    // The fixture is all-train; asking for the test split is a runtime error.
    let out = run(&["eval", "--manifest", &manifest, "--pairs", "--split", "test"]);
    assert_eq!(code(&out), 2);
    let out = run(&["eval", "--manifest", &manifest, "--pairs", "--split", "train"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    let report: serde_json::Value =
        serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(report["count"], serde_json::json!(4));
}

#[test]
fn inspect_reports_configuration_and_parameter_breakdown() {
    let out = run(&["inspect", "--variant", "final_m17n1"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("m: 17"), "{text}");
    assert!(text.contains("n: 1"), "{text}");
    let report: serde_json::Value =
        serde_json::from_str(text.lines().last().unwrap()).unwrap();
    let expected = param_count(&make_variant("final_m17n1").unwrap()).unwrap();
    assert_eq!(report["param_count"], serde_json::json!(expected));

    // The no-FFM ablation reports zero FFM parameters.
    let out = run(&["inspect", "--variant", "model3"]);
    let text = stdout(&out);
    let report: serde_json::Value =
        serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(report["modules"]["ffm"], serde_json::json!(0));

    // --list names every registry variant.
    let out = run(&["inspect", "--list"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    for name in mspfn::model::VARIANT_NAMES {
        assert!(text.lines().any(|l| l.trim().starts_with(name)), "{name}");
    }

    // Unknown variants point at --list and fail at runtime.
    let out = run(&["inspect", "--variant", "modelx"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("inspect --list"));
}

#[test]
fn thread_cap_env_var_is_honored_and_validated() {
    let out = bin()
        .args(["inspect", "--list"])
        .env("MSPFN_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);

    let out = bin()
        .args(["inspect", "--list"])
        .env("MSPFN_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("MSPFN_THREADS"));
}
