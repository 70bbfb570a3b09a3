//! Command-line front end. The `run_*` functions are plain library calls so
//! integration tests can exercise them without spawning a process.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_key_values, EstimatorConfig};
use crate::error::{Error, Result};
use crate::eval::{
    age, clustered_error_pixels, crop_to_grid, error_pixels, gaussian_segment, model_mean_map,
    model_variance_map, pixel_stats, similarity, Mask, SegmentationScore,
};
use crate::frame_io::{
    load_sequence, read_image, write_image, FrameSequence, ImageFormat, LoadOptions, Raster,
};
use crate::mrf::estimate_background;
use crate::report::{RunReport, SplitReport, StageCounters};
use crate::snapshot;
use crate::synth::{synth_sequence, SynthSpec};

#[derive(Debug, Parser)]
#[command(
    name = "bgestim",
    version,
    about = "Static background estimation for cluttered greyscale sequences"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the static background of a sequence
    Estimate(EstimateArgs),
    /// Score an estimate, or estimate a sequence and score it, against truth
    Evaluate(EvaluateArgs),
    /// Segment foreground per frame against a saved scene model
    Segment(SegmentArgs),
    /// Generate a synthetic sequence with known background and masks
    Synth(SynthArgs),
}

/// Input selection shared by commands that read a sequence.
#[derive(Debug, Clone, Args)]
pub struct InputFlags {
    /// Directory of numbered .pgm/.png frames, or one raw planar 8-bit file
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    /// Frame width in pixels (raw input only)
    #[arg(long, value_name = "PX")]
    pub width: Option<u32>,
    /// Frame height in pixels (raw input only)
    #[arg(long, value_name = "PX")]
    pub height: Option<u32>,
}

impl InputFlags {
    fn load(&self, fps: f64) -> Result<FrameSequence> {
        let raw_geometry = match (self.width, self.height) {
            (Some(w), Some(h)) => Some((w, h)),
            (None, None) => None,
            _ => {
                return Err(Error::Config(
                    "raw input needs both --width and --height".to_string(),
                ))
            }
        };
        load_sequence(&self.input, &LoadOptions { fps, raw_geometry })
    }
}

/// Estimator tuning shared by estimate and evaluate. Unset flags fall back
/// to the config file, then to built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct EstimatorFlags {
    /// Key=value settings file applied before other flags
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Block edge length in pixels
    #[arg(long, value_name = "N")]
    pub block_size: Option<u32>,
    /// Correlation threshold for representative matching, in (0, 1)
    #[arg(long, value_name = "T")]
    pub t1: Option<f64>,
    /// Fixed difference threshold; skips automatic noise estimation
    #[arg(long, value_name = "T")]
    pub t2: Option<f64>,
    /// Cap on the neighbour-count exponent of the prior
    #[arg(long, value_name = "N")]
    pub eta: Option<u32>,
    /// Softmax temperature divisor for the prior
    #[arg(long, value_name = "TAU")]
    pub tau: Option<f64>,
    /// Evidence cap in seconds of observation
    #[arg(long, value_name = "SECS")]
    pub w_max_seconds: Option<f64>,
    /// ICM refinement iteration cap (0 disables refinement)
    #[arg(long, value_name = "N")]
    pub icm_iterations: Option<u32>,
    /// Nominal frame rate of the input
    #[arg(long, value_name = "FPS")]
    pub fps: Option<f64>,
    /// Absolute grey-level difference beyond which a pixel is an error
    #[arg(long, value_name = "LEVELS")]
    pub ep_threshold: Option<u8>,
    /// Use the multi-threaded clustering and refinement paths
    #[arg(long)]
    pub parallel: bool,
}

/// Effective settings after merging defaults, config file, and flags.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub estimator: EstimatorConfig,
    pub fps: f64,
    pub ep_threshold: u8,
    /// Segmentation threshold in standard deviations.
    pub k: f64,
    /// Variance floor for the segmentation test.
    pub var_floor: f64,
}

impl Default for RunSettings {
    fn default() -> RunSettings {
        RunSettings {
            estimator: EstimatorConfig::default(),
            fps: 25.0,
            ep_threshold: 20,
            k: 2.5,
            var_floor: 4.0,
        }
    }
}

impl RunSettings {
    fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (key, value) in parse_key_values(&text)? {
            self.apply_setting(&key, &value).map_err(|e| {
                let msg = match e {
                    Error::Config(msg) => msg,
                    other => other.to_string(),
                };
                Error::Config(format!("{}: {msg}", path.display()))
            })?;
        }
        Ok(())
    }

    fn apply_setting(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
        }
        match key {
            "block_size" => self.estimator.block_size = parse(key, value)?,
            "t1" => self.estimator.t1 = parse(key, value)?,
            "t2" => self.estimator.t2_override = Some(parse(key, value)?),
            "eta" => self.estimator.gibbs.eta_cap = parse(key, value)?,
            "tau" => self.estimator.gibbs.tau = parse(key, value)?,
            "w_max_seconds" => self.estimator.gibbs.w_max_seconds = parse(key, value)?,
            "icm_iterations" => self.estimator.gibbs.icm_iterations = parse(key, value)?,
            "parallel" => {
                self.estimator.parallel = match value {
                    "true" | "1" => true,
                    "false" | "0" => false,
                    other => {
                        return Err(Error::Config(format!(
                            "invalid value {other:?} for parallel (use true/false)"
                        )))
                    }
                }
            }
            "fps" => self.fps = parse(key, value)?,
            "ep_threshold" => self.ep_threshold = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "var_floor" => self.var_floor = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown setting {other:?}"))),
        }
        Ok(())
    }

    /// Defaults, then the config file, then explicit flags.
    pub fn resolve(flags: &EstimatorFlags) -> Result<RunSettings> {
        let mut settings = RunSettings::default();
        if let Some(path) = &flags.config {
            settings.apply_file(path)?;
        }
        if let Some(v) = flags.block_size {
            settings.estimator.block_size = v;
        }
        if let Some(v) = flags.t1 {
            settings.estimator.t1 = v;
        }
        if let Some(v) = flags.t2 {
            settings.estimator.t2_override = Some(v);
        }
        if let Some(v) = flags.eta {
            settings.estimator.gibbs.eta_cap = v;
        }
        if let Some(v) = flags.tau {
            settings.estimator.gibbs.tau = v;
        }
        if let Some(v) = flags.w_max_seconds {
            settings.estimator.gibbs.w_max_seconds = v;
        }
        if let Some(v) = flags.icm_iterations {
            settings.estimator.gibbs.icm_iterations = v;
        }
        if flags.parallel {
            settings.estimator.parallel = true;
        }
        if let Some(v) = flags.fps {
            settings.fps = v;
        }
        if let Some(v) = flags.ep_threshold {
            settings.ep_threshold = v;
        }
        if !settings.fps.is_finite() || settings.fps <= 0.0 {
            return Err(Error::Config(format!(
                "fps must be positive, got {}",
                settings.fps
            )));
        }
        settings.estimator.validate()?;
        Ok(settings)
    }

    fn echo_into(&self, report: &mut RunReport) {
        report.set_config("block_size", self.estimator.block_size);
        report.set_config("t1", self.estimator.t1);
        match self.estimator.t2_override {
            Some(t2) => report.set_config("t2", t2),
            None => report.set_config("t2", serde_json::Value::Null),
        }
        report.set_config("eta", self.estimator.gibbs.eta_cap);
        report.set_config("tau", self.estimator.gibbs.tau);
        report.set_config("w_max_seconds", self.estimator.gibbs.w_max_seconds);
        report.set_config("icm_iterations", self.estimator.gibbs.icm_iterations);
        report.set_config("parallel", self.estimator.parallel);
        report.set_config("fps", self.fps);
        report.set_config("ep_threshold", self.ep_threshold);
    }
}

#[derive(Debug, Parser)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub input: InputFlags,
    #[command(flatten)]
    pub estimator: EstimatorFlags,
    /// Output background image (.pgm or .png)
    #[arg(long, value_name = "FILE", default_value = "background.pgm")]
    pub out: PathBuf,
    /// Write the scene model snapshot here for later segmentation
    #[arg(long, value_name = "FILE")]
    pub save_model: Option<PathBuf>,
    /// Write the JSON run report here
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Parser)]
pub struct EvaluateArgs {
    /// Score this pre-computed estimate image instead of running estimation
    #[arg(long, value_name = "FILE", conflicts_with = "input")]
    pub estimate: Option<PathBuf>,
    /// Sequence to estimate and score
    #[arg(long = "in", value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Frame width in pixels (raw input only)
    #[arg(long, value_name = "PX")]
    pub width: Option<u32>,
    /// Frame height in pixels (raw input only)
    #[arg(long, value_name = "PX")]
    pub height: Option<u32>,
    /// True background image
    #[arg(long, value_name = "FILE")]
    pub truth: PathBuf,
    /// Split the sequence into this many parts and average their metrics
    #[arg(long, default_value_t = 1)]
    pub splits: u32,
    #[command(flatten)]
    pub estimator: EstimatorFlags,
    /// Write the JSON run report here
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Parser)]
pub struct SegmentArgs {
    #[command(flatten)]
    pub input: InputFlags,
    /// Scene model snapshot written by estimate --save-model
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Directory receiving mrf_NNNN.pgm and direct_NNNN.pgm masks
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    /// Directory of numbered truth masks to score against
    #[arg(long, value_name = "DIR")]
    pub truth_masks: Option<PathBuf>,
    /// Foreground threshold in standard deviations
    #[arg(long, value_name = "K")]
    pub k: Option<f64>,
    /// Variance floor for the segmentation test
    #[arg(long, value_name = "VAR")]
    pub var_floor: Option<f64>,
    /// Key=value settings file
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Nominal frame rate of the input
    #[arg(long, value_name = "FPS")]
    pub fps: Option<f64>,
    /// Write the JSON run report here
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Parser)]
pub struct SynthArgs {
    /// JSON spec describing the sequence
    #[arg(long, value_name = "FILE")]
    pub spec: PathBuf,
    /// Output directory (frames/, masks/, truth.pgm, spec.json)
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Noise generator seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the JSON run report here
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<RunReport> {
    match cli.command {
        Command::Estimate(args) => run_estimate(&args),
        Command::Evaluate(args) => run_evaluate(&args),
        Command::Segment(args) => run_segment(&args),
        Command::Synth(args) => run_synth(&args),
    }
}

fn format_for(path: &Path) -> Result<ImageFormat> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("pgm") => Ok(ImageFormat::Pgm),
        Some("png") => Ok(ImageFormat::Png),
        _ => Err(Error::Config(format!(
            "cannot infer image format from {:?} (use .pgm or .png)",
            path.display()
        ))),
    }
}

fn finish_report(report: &mut RunReport, started: Instant, path: Option<&Path>) -> Result<()> {
    report.runtime_ms = started.elapsed().as_secs_f64() * 1e3;
    if let Some(path) = path {
        fs::write(path, report.to_json()).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn run_estimate(args: &EstimateArgs) -> Result<RunReport> {
    let started = Instant::now();
    let settings = RunSettings::resolve(&args.estimator)?;
    let format = format_for(&args.out)?;
    let frames = args.input.load(settings.fps)?;
    let outcome = estimate_background(&frames, &settings.estimator)?;

    write_image(&outcome.background, &args.out, format)?;
    let mut report = RunReport::new("estimate");
    settings.echo_into(&mut report);
    report.set_config("t2_effective", outcome.stats.t2);
    report.outputs.push(args.out.display().to_string());
    if let Some(model_path) = &args.save_model {
        snapshot::save_model(&outcome.model, &outcome.labels, model_path)?;
        report.outputs.push(model_path.display().to_string());
    }
    report.stats = Some(StageCounters::from_stats(&outcome.stats));
    report.peak_model_bytes = Some(outcome.stats.peak_model_bytes as u64);
    report.frames_per_second = Some(frames.frame_count() as f64 / started.elapsed().as_secs_f64());
    finish_report(&mut report, started, args.report.as_deref())?;
    Ok(report)
}

/// Aligns a truth image with an estimate that may be cropped to whole
/// blocks: exact match passes through, a larger truth is cropped.
fn align_truth(truth: &Raster, estimate: &Raster) -> Result<Raster> {
    if truth.width() == estimate.width() && truth.height() == estimate.height() {
        return Ok(truth.clone());
    }
    if truth.width() >= estimate.width() && truth.height() >= estimate.height() {
        return Ok(Raster::from_fn(
            estimate.width(),
            estimate.height(),
            |x, y| truth.get(x, y),
        ));
    }
    Err(Error::Geometry(format!(
        "truth is {}x{} but the estimate is {}x{}",
        truth.width(),
        truth.height(),
        estimate.width(),
        estimate.height()
    )))
}

pub fn run_evaluate(args: &EvaluateArgs) -> Result<RunReport> {
    let started = Instant::now();
    let settings = RunSettings::resolve(&args.estimator)?;
    let truth = read_image(&args.truth)?;
    let mut report = RunReport::new("evaluate");
    settings.echo_into(&mut report);
    report.set_config("splits", args.splits);

    match (&args.estimate, &args.input) {
        (Some(estimate_path), None) => {
            if args.splits != 1 {
                return Err(Error::Config(
                    "--splits requires a sequence input, not --estimate".to_string(),
                ));
            }
            let estimate = read_image(estimate_path)?;
            let truth = align_truth(&truth, &estimate)?;
            let (ep, mask) = error_pixels(&estimate, &truth, settings.ep_threshold);
            report.age = Some(age(&estimate, &truth));
            report.ep = Some(ep as f64);
            report.cep = Some(clustered_error_pixels(&mask) as f64);
        }
        (None, Some(input)) => {
            if !matches!(args.splits, 1 | 2 | 4) {
                return Err(Error::Config(format!(
                    "splits must be 1, 2, or 4, got {}",
                    args.splits
                )));
            }
            let input_flags = InputFlags {
                input: input.clone(),
                width: args.width,
                height: args.height,
            };
            let frames = input_flags.load(settings.fps)?;
            let k = args.splits as usize;
            if frames.frame_count() < 2 * k {
                return Err(Error::InsufficientFrames(format!(
                    "{} frames cannot form {k} splits of at least 2",
                    frames.frame_count()
                )));
            }
            let mut splits = Vec::with_capacity(k);
            let base = frames.frame_count() / k;
            let remainder = frames.frame_count() % k;
            let mut start = 0;
            for c in 0..k {
                let len = base + usize::from(c < remainder);
                let chunk = frames.slice(start, start + len);
                start += len;
                let outcome = estimate_background(&chunk, &settings.estimator)?;
                let truth = align_truth(&truth, &outcome.background)?;
                let (ep, mask) = error_pixels(&outcome.background, &truth, settings.ep_threshold);
                splits.push(SplitReport {
                    frames: len,
                    age: age(&outcome.background, &truth),
                    ep: ep as u64,
                    cep: clustered_error_pixels(&mask) as u64,
                });
            }
            let n = splits.len() as f64;
            report.age = Some(splits.iter().map(|s| s.age).sum::<f64>() / n);
            report.ep = Some(splits.iter().map(|s| s.ep as f64).sum::<f64>() / n);
            report.cep = Some(splits.iter().map(|s| s.cep as f64).sum::<f64>() / n);
            report.frames_per_second =
                Some(frames.frame_count() as f64 / started.elapsed().as_secs_f64());
            if k > 1 {
                report.splits = Some(splits);
            }
        }
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "--estimate and --in are mutually exclusive".to_string(),
            ))
        }
        (None, None) => {
            return Err(Error::Config(
                "evaluate needs either --estimate or --in".to_string(),
            ))
        }
    }

    finish_report(&mut report, started, args.report.as_deref())?;
    Ok(report)
}

/// Loads a directory of truth masks ordered like a frame directory.
fn load_truth_masks(dir: &Path, expected: usize) -> Result<Vec<Raster>> {
    let seq = load_sequence(dir, &LoadOptions::default())?;
    if seq.frame_count() != expected {
        return Err(Error::Geometry(format!(
            "{} truth masks for {expected} frames",
            seq.frame_count()
        )));
    }
    Ok(seq.frames().to_vec())
}

pub fn run_segment(args: &SegmentArgs) -> Result<RunReport> {
    let started = Instant::now();
    let mut settings = RunSettings::default();
    if let Some(path) = &args.config {
        settings.apply_file(path)?;
    }
    if let Some(v) = args.k {
        settings.k = v;
    }
    if let Some(v) = args.var_floor {
        settings.var_floor = v;
    }
    if let Some(v) = args.fps {
        settings.fps = v;
    }
    if !settings.k.is_finite() || settings.k <= 0.0 {
        return Err(Error::Config(format!(
            "k must be positive, got {}",
            settings.k
        )));
    }
    if !settings.var_floor.is_finite() || settings.var_floor < 0.0 {
        return Err(Error::Config(format!(
            "var_floor must be non-negative, got {}",
            settings.var_floor
        )));
    }

    let (model, labels) = snapshot::load_model(&args.model)?;
    if !labels.is_complete() {
        return Err(Error::Estimation(
            "model snapshot carries no background labels; run estimate first".to_string(),
        ));
    }
    let frames = args.input.load(settings.fps)?;
    let grid = model.grid();
    if frames.width() < grid.covered_width() || frames.height() < grid.covered_height() {
        return Err(Error::Geometry(format!(
            "frames are {}x{} but the model covers {}x{}",
            frames.width(),
            frames.height(),
            grid.covered_width(),
            grid.covered_height()
        )));
    }

    let mean_map = model_mean_map(&model, &labels);
    let var_map = model_variance_map(&model, &labels);
    let cropped: Vec<Raster> = frames
        .frames()
        .iter()
        .map(|f| crop_to_grid(f, grid))
        .collect();
    let cropped_seq = FrameSequence::from_frames(cropped, settings.fps)?;
    let (direct_mean, direct_var) = pixel_stats(&cropped_seq);

    fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let truth = match &args.truth_masks {
        Some(dir) => Some(load_truth_masks(dir, frames.frame_count())?),
        None => None,
    };

    let mut mrf_score = SegmentationScore::zero();
    let mut direct_score = SegmentationScore::zero();
    for (idx, frame) in cropped_seq.frames().iter().enumerate() {
        let mrf_mask = gaussian_segment(frame, &mean_map, &var_map, settings.k, settings.var_floor);
        let direct_mask = gaussian_segment(
            frame,
            &direct_mean,
            &direct_var,
            settings.k,
            settings.var_floor,
        );
        let mrf_path = args.out_dir.join(format!("mrf_{:04}.pgm", idx + 1));
        let direct_path = args.out_dir.join(format!("direct_{:04}.pgm", idx + 1));
        write_image(&mrf_mask.to_raster(), &mrf_path, ImageFormat::Pgm)?;
        write_image(&direct_mask.to_raster(), &direct_path, ImageFormat::Pgm)?;
        if let Some(truth) = &truth {
            let truth_mask = Mask::from_raster(&crop_to_grid(&truth[idx], grid));
            mrf_score.accumulate(similarity(&mrf_mask, &truth_mask));
            direct_score.accumulate(similarity(&direct_mask, &truth_mask));
        }
    }

    let mut report = RunReport::new("segment");
    report.set_config("k", settings.k);
    report.set_config("var_floor", settings.var_floor);
    report.set_config("fps", settings.fps);
    report.outputs.push(args.out_dir.display().to_string());
    if truth.is_some() {
        report.similarity = Some(mrf_score.similarity());
        report.similarity_direct = Some(direct_score.similarity());
    }
    report.frames_per_second = Some(frames.frame_count() as f64 / started.elapsed().as_secs_f64());
    finish_report(&mut report, started, args.report.as_deref())?;
    Ok(report)
}

pub fn run_synth(args: &SynthArgs) -> Result<RunReport> {
    let started = Instant::now();
    let text = fs::read_to_string(&args.spec).map_err(|e| Error::io(&args.spec, e))?;
    let spec = SynthSpec::from_json(&text)?;
    let output = synth_sequence(&spec, args.seed)?;

    let frames_dir = args.out.join("frames");
    let masks_dir = args.out.join("masks");
    fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    fs::create_dir_all(&masks_dir).map_err(|e| Error::io(&masks_dir, e))?;
    for (idx, frame) in output.frames.frames().iter().enumerate() {
        let path = frames_dir.join(format!("frame_{:04}.pgm", idx + 1));
        write_image(frame, &path, ImageFormat::Pgm)?;
    }
    for (idx, mask) in output.masks.iter().enumerate() {
        let path = masks_dir.join(format!("mask_{:04}.pgm", idx + 1));
        write_image(&mask.to_raster(), &path, ImageFormat::Pgm)?;
    }
    let truth_path = args.out.join("truth.pgm");
    write_image(&output.background, &truth_path, ImageFormat::Pgm)?;
    let spec_path = args.out.join("spec.json");
    fs::write(
        &spec_path,
        serde_json::to_string_pretty(&spec).expect("spec serializes"),
    )
    .map_err(|e| Error::io(&spec_path, e))?;

    let mut report = RunReport::new("synth");
    report.set_config("seed", args.seed);
    report.set_config("width", spec.width);
    report.set_config("height", spec.height);
    report.set_config("frame_count", spec.frame_count);
    report.set_config("noise_sigma", spec.noise_sigma);
    report.set_config("fps", spec.fps);
    report.outputs.push(args.out.display().to_string());
    finish_report(&mut report, started, args.report.as_deref())?;
    Ok(report)
}
