//! CLI command flows exercised through the library entry points, plus
//! argument-parsing checks.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;

use bgestim::cli::{
    run_estimate, run_evaluate, run_segment, run_synth, Cli, Command, EstimateArgs, EvaluateArgs,
    SegmentArgs, SynthArgs,
};
use bgestim::frame_io::{read_image, LoadOptions};

const SYNTH_SPEC: &str = r#"{
    "width": 96, "height": 64, "frame_count": 40,
    "background": {"kind": "waves"},
    "noise_sigma": 1.0,
    "occluders": [{
        "rect": {"x": 32, "y": 16, "width": 32, "height": 32},
        "fill": {"kind": "waves", "mean": 40.0, "amplitude": 30.0},
        "dwell": {"from": 1, "to": 30}
    }]
}"#;

fn synth_into(dir: &Path) -> PathBuf {
    let spec_path = dir.join("spec.json");
    fs::write(&spec_path, SYNTH_SPEC).unwrap();
    let out = dir.join("data");
    let args = SynthArgs {
        spec: spec_path,
        out: out.clone(),
        seed: 7,
        report: None,
    };
    let report = run_synth(&args).unwrap();
    assert_eq!(report.command, "synth");
    out
}

fn parse(args: &[&str]) -> Cli {
    Cli::try_parse_from(args).unwrap()
}

#[test]
fn synth_writes_frames_masks_truth_and_spec() {
    let dir = tempfile::tempdir().unwrap();
    let out = synth_into(dir.path());
    assert!(out.join("truth.pgm").is_file());
    assert!(out.join("spec.json").is_file());
    for idx in [1, 40] {
        assert!(out.join(format!("frames/frame_{idx:04}.pgm")).is_file());
        assert!(out.join(format!("masks/mask_{idx:04}.pgm")).is_file());
    }
    let seq =
        bgestim::frame_io::load_sequence(&out.join("frames"), &LoadOptions::default()).unwrap();
    assert_eq!(seq.frame_count(), 40);
    assert_eq!((seq.width(), seq.height()), (96, 64));
}

#[test]
fn estimate_then_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_into(dir.path());
    let background = dir.path().join("background.pgm");
    let model = dir.path().join("scene.bgsm");
    let report_path = dir.path().join("estimate.json");

    let cli = parse(&[
        "bgestim",
        "estimate",
        "--in",
        data.join("frames").to_str().unwrap(),
        "--out",
        background.to_str().unwrap(),
        "--save-model",
        model.to_str().unwrap(),
        "--report",
        report_path.to_str().unwrap(),
    ]);
    let Command::Estimate(args) = cli.command else {
        panic!("expected estimate")
    };
    let report = run_estimate(&args).unwrap();
    assert!(background.is_file() && model.is_file());
    assert!(report.frames_per_second.unwrap() > 0.0);
    assert!(report.peak_model_bytes.unwrap() > 0);

    // The written report is valid JSON and echoes the configuration.
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["command"], "estimate");
    assert_eq!(json["config"]["block_size"], 16);
    assert_eq!(json["stats"]["grid_cols"], 6);
    assert_eq!(json["stats"]["grid_rows"], 4);
    assert!(json["stats"]["t2"].as_f64().unwrap() > 0.0);
    assert!(json["runtime_ms"].as_f64().unwrap() >= 0.0);
    // No truth was given, so no quality metrics appear.
    assert!(json.get("age").is_none());

    // Scoring the estimate against the synthetic truth: near-perfect.
    let cli = parse(&[
        "bgestim",
        "evaluate",
        "--estimate",
        background.to_str().unwrap(),
        "--truth",
        data.join("truth.pgm").to_str().unwrap(),
    ]);
    let Command::Evaluate(args) = cli.command else {
        panic!("expected evaluate")
    };
    let report = run_evaluate(&args).unwrap();
    assert!(report.age.unwrap() < 2.0, "age {}", report.age.unwrap());
    assert_eq!(report.cep.unwrap(), 0.0);
    let line = report.summary_line();
    assert!(line.contains("age="), "summary: {line}");
}

#[test]
fn evaluate_sequence_with_splits_averages_chunks() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_into(dir.path());
    let args = EvaluateArgs {
        estimate: None,
        input: Some(data.join("frames")),
        width: None,
        height: None,
        truth: data.join("truth.pgm"),
        splits: 2,
        estimator: Default::default(),
        report: None,
    };
    let report = run_evaluate(&args).unwrap();
    let splits = report.splits.as_ref().expect("per-split metrics present");
    assert_eq!(splits.len(), 2);
    assert_eq!(splits.iter().map(|s| s.frames).sum::<usize>(), 40);
    let mean_age = (splits[0].age + splits[1].age) / 2.0;
    assert!((report.age.unwrap() - mean_age).abs() < 1e-12);
    // The occluder covers every frame of the first chunk, so that chunk
    // never observes the background behind it and scores worse.
    assert!(splits[0].age >= splits[1].age);
}

#[test]
fn evaluate_rejects_contradictory_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_into(dir.path());
    // Neither input nor estimate.
    let args = EvaluateArgs {
        estimate: None,
        input: None,
        width: None,
        height: None,
        truth: data.join("truth.pgm"),
        splits: 1,
        estimator: Default::default(),
        report: None,
    };
    assert!(run_evaluate(&args).is_err());

    // Splits only applies to sequences.
    let args = EvaluateArgs {
        estimate: Some(data.join("truth.pgm")),
        input: None,
        width: None,
        height: None,
        truth: data.join("truth.pgm"),
        splits: 2,
        estimator: Default::default(),
        report: None,
    };
    assert!(run_evaluate(&args).is_err());

    // Split count limited to 1, 2, or 4.
    let args = EvaluateArgs {
        estimate: None,
        input: Some(data.join("frames")),
        width: None,
        height: None,
        truth: data.join("truth.pgm"),
        splits: 3,
        estimator: Default::default(),
        report: None,
    };
    assert!(run_evaluate(&args).is_err());

    // The flag conflict is also enforced at parse time.
    assert!(Cli::try_parse_from([
        "bgestim",
        "evaluate",
        "--estimate",
        "a.pgm",
        "--in",
        "frames",
        "--truth",
        "t.pgm",
    ])
    .is_err());
}

#[test]
fn segment_writes_masks_and_scores_both_modes() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_into(dir.path());
    let model = dir.path().join("scene.bgsm");

    let estimate = EstimateArgs {
        input: bgestim::cli::InputFlags {
            input: data.join("frames"),
            width: None,
            height: None,
        },
        estimator: Default::default(),
        out: dir.path().join("bg.pgm"),
        save_model: Some(model.clone()),
        report: None,
    };
    run_estimate(&estimate).unwrap();

    let masks_out = dir.path().join("segmented");
    let args = SegmentArgs {
        input: bgestim::cli::InputFlags {
            input: data.join("frames"),
            width: None,
            height: None,
        },
        model,
        out_dir: masks_out.clone(),
        truth_masks: Some(data.join("masks")),
        k: None,
        var_floor: None,
        config: None,
        fps: None,
        report: None,
    };
    let report = run_segment(&args).unwrap();
    assert!(masks_out.join("mrf_0001.pgm").is_file());
    assert!(masks_out.join("direct_0001.pgm").is_file());
    assert!(masks_out.join("mrf_0040.pgm").is_file());

    let mrf = report.similarity.expect("mrf similarity");
    let direct = report.similarity_direct.expect("direct similarity");
    assert!((0.0..=1.0).contains(&mrf));
    assert!((0.0..=1.0).contains(&direct));
    // The occluder is easy for the model-based segmenter on this fixture.
    assert!(mrf > 0.5, "mrf similarity {mrf}");

    // Masks are binary images.
    let mask = read_image(&masks_out.join("mrf_0001.pgm")).unwrap();
    assert!(mask.data().iter().all(|&v| v == 0 || v == 255));
}

#[test]
fn estimate_rejects_unknown_output_format() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_into(dir.path());
    let args = EstimateArgs {
        input: bgestim::cli::InputFlags {
            input: data.join("frames"),
            width: None,
            height: None,
        },
        estimator: Default::default(),
        out: dir.path().join("bg.jpg"),
        save_model: None,
        report: None,
    };
    let err = run_estimate(&args).unwrap_err();
    assert!(err.to_string().contains("format"), "got: {err}");
}

#[test]
fn estimate_accepts_png_output_and_raw_input() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_into(dir.path());

    // Re-encode the frames as one raw planar file.
    let seq =
        bgestim::frame_io::load_sequence(&data.join("frames"), &LoadOptions::default()).unwrap();
    let mut raw = Vec::new();
    for f in 0..seq.frame_count() {
        raw.extend_from_slice(seq.frame(f).data());
    }
    let raw_path = dir.path().join("frames.raw");
    fs::write(&raw_path, raw).unwrap();

    let out = dir.path().join("bg.png");
    let cli = parse(&[
        "bgestim",
        "estimate",
        "--in",
        raw_path.to_str().unwrap(),
        "--width",
        "96",
        "--height",
        "64",
        "--out",
        out.to_str().unwrap(),
    ]);
    let Command::Estimate(args) = cli.command else {
        panic!("expected estimate")
    };
    run_estimate(&args).unwrap();
    let png = read_image(&out).unwrap();
    assert_eq!((png.width(), png.height()), (96, 64));

    // Raw input without geometry is rejected.
    let cli = parse(&["bgestim", "estimate", "--in", raw_path.to_str().unwrap()]);
    let Command::Estimate(args) = cli.command else {
        panic!("expected estimate")
    };
    assert!(run_estimate(&args).is_err());
}

#[test]
fn binary_exits_zero_on_success_and_nonzero_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_into(dir.path());
    let bin = env!("CARGO_BIN_EXE_bgestim");
    let out = dir.path().join("bg.pgm");

    let ok = std::process::Command::new(bin)
        .arg("estimate")
        .arg("--in")
        .arg(data.join("frames"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        ok.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&ok.stderr)
    );
    assert!(out.is_file());
    let stdout = String::from_utf8_lossy(&ok.stdout);
    assert!(stdout.contains("command=estimate"), "stdout: {stdout}");

    let missing = std::process::Command::new(bin)
        .arg("estimate")
        .arg("--in")
        .arg(dir.path().join("does_not_exist"))
        .output()
        .unwrap();
    assert!(!missing.status.success());
    let stderr = String::from_utf8_lossy(&missing.stderr);
    assert!(stderr.contains("error"), "stderr: {stderr}");
}

#[test]
fn config_file_flows_through_the_estimate_command() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_into(dir.path());
    let conf = dir.path().join("run.conf");
    fs::write(&conf, "block_size=8\nicm_iterations=1\n").unwrap();

    let cli = parse(&[
        "bgestim",
        "estimate",
        "--in",
        data.join("frames").to_str().unwrap(),
        "--config",
        conf.to_str().unwrap(),
        "--out",
        dir.path().join("bg.pgm").to_str().unwrap(),
    ]);
    let Command::Estimate(args) = cli.command else {
        panic!("expected estimate")
    };
    let report = run_estimate(&args).unwrap();
    assert_eq!(report.config["block_size"], 8);
    assert_eq!(report.config["icm_iterations"], 1);
}
