//! Command-line surface: `synth`, `train`, `derain`, `eval`, and `inspect`
//! subcommands over the library, with deterministic outputs for fixed seeds.
//!
//! Exit codes: 0 success, 1 usage error (bad flags), 2 runtime failure.
//! `MSPFN_THREADS` caps the worker-thread pool for the parallel paths.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::data::{
    crop, load_image, make_dataset, pad_reflect, synthetic_clean, DatasetManifest, ImageF,
    ParamRanges, Split,
};
use crate::error::{Error, Result};
use crate::loss::LossConfig;
use crate::metrics::{luma, psnr, ssim};
use crate::model::{
    make_variant, mspfn_forward, param_schema, ModelConfig, ParamStore, VARIANT_NAMES,
};
use crate::tensor::{numel, Tape, Tensor};
use crate::train::{load_checkpoint, Checkpoint, TrainConfig};

#[derive(Debug, Parser)]
#[command(
    name = "mspfn",
    version,
    about = "Multi-scale progressive fusion deraining: synthesize data, train, derain, evaluate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize rainy/clean training pairs and a dataset manifest
    Synth(SynthArgs),
    /// Train a model on a dataset manifest
    Train(TrainArgs),
    /// Remove rain from one image using a trained checkpoint
    Derain(DerainArgs),
    /// Score PSNR/SSIM over a manifest, raw pairs or through a checkpoint
    Eval(EvalArgs),
    /// Print a model variant's configuration and parameter breakdown
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Directory of clean source images (.ppm/.png)
    #[arg(long)]
    clean_dir: PathBuf,
    /// Output directory for the generated dataset
    #[arg(long)]
    out: PathBuf,
    /// Number of rainy/clean pairs to generate
    #[arg(long, default_value_t = 4)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Assign every k-th pair to the test split (0 = all train)
    #[arg(long, default_value_t = 0)]
    test_every: usize,
    /// Streak angle range, degrees from vertical
    #[arg(long, default_value_t = -30.0)]
    angle_min: f64,
    #[arg(long, default_value_t = 30.0)]
    angle_max: f64,
    /// Streak length range in pixels
    #[arg(long, default_value_t = 7)]
    length_min: usize,
    #[arg(long, default_value_t = 15)]
    length_max: usize,
    /// Streak seed density range (fraction of pixels)
    #[arg(long, default_value_t = 0.01)]
    density_min: f64,
    #[arg(long, default_value_t = 0.03)]
    density_max: f64,
    /// Streak brightness range
    #[arg(long, default_value_t = 0.4)]
    intensity_min: f64,
    #[arg(long, default_value_t = 0.8)]
    intensity_max: f64,
    /// First generate this many synthetic clean images into --clean-dir
    #[arg(long)]
    gen_clean: Option<usize>,
    /// Size of generated clean images, HxW
    #[arg(long, default_value = "96x96")]
    size: String,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset manifest produced by `mspfn synth`
    #[arg(long)]
    manifest: PathBuf,
    /// Model variant name (see `mspfn inspect --list`)
    #[arg(long, default_value = "baseline_m10n3")]
    variant: String,
    /// Output directory for checkpoints and the JSONL log
    #[arg(long)]
    out: PathBuf,
    /// Total optimization steps (overrides --epochs when set)
    #[arg(long)]
    steps: Option<u64>,
    /// Step budget as full passes over the training pairs
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    /// Initial learning rate
    #[arg(long)]
    lr: Option<f64>,
    /// Halve the learning rate every this many steps
    #[arg(long)]
    lr_half_every: Option<u64>,
    #[arg(long)]
    lr_floor: Option<f64>,
    /// Square training crop size (must be divisible by the model's size divisor)
    #[arg(long)]
    patch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Edge-loss weight
    #[arg(long)]
    lambda: Option<f64>,
    /// Charbonnier smoothing epsilon
    #[arg(long)]
    epsilon: Option<f64>,
    /// Save a checkpoint every this many steps (0 = only at the end)
    #[arg(long)]
    checkpoint_every: Option<u64>,
    /// Resume from an existing checkpoint
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Use the published regime: batch 8, lr 2e-4, 30 epochs
    #[arg(long)]
    paper_defaults: bool,
}

#[derive(Debug, Args)]
struct DerainArgs {
    /// Trained checkpoint
    #[arg(long)]
    ckpt: PathBuf,
    /// Input image (.ppm/.png), any size
    #[arg(long = "in")]
    input: PathBuf,
    /// Output image path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Train,
    Test,
    All,
}

impl SplitArg {
    fn to_filter(self) -> Option<Split> {
        match self {
            SplitArg::Train => Some(Split::Train),
            SplitArg::Test => Some(Split::Test),
            SplitArg::All => None,
        }
    }
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Dataset manifest to score
    #[arg(long)]
    manifest: PathBuf,
    /// Derain each rainy image with this checkpoint before scoring
    #[arg(long, conflicts_with = "pairs", required_unless_present = "pairs")]
    ckpt: Option<PathBuf>,
    /// Score the raw rainy/clean pairs without a model
    #[arg(long)]
    pairs: bool,
    /// Compute metrics on the luminance channel instead of RGB
    #[arg(long)]
    luma: bool,
    /// Also write the JSON report to this file
    #[arg(long)]
    json: Option<PathBuf>,
    /// Which split of the manifest to score
    #[arg(long, value_enum, default_value_t = SplitArg::All)]
    split: SplitArg,
}

#[derive(Debug, Args)]
struct InspectArgs {
    /// Model variant name
    #[arg(long, required_unless_present = "list")]
    variant: Option<String>,
    /// List all variant names and exit
    #[arg(long)]
    list: bool,
}

/// Parse arguments from the process environment and run one subcommand.
pub fn run() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage_ok = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if usage_ok { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match init_threads().and_then(|()| dispatch(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth(args) => cmd_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Derain(args) => cmd_derain(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Inspect(args) => cmd_inspect(args),
    }
}

/// Cap the worker pool from `MSPFN_THREADS` (unset = rayon's default).
fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var("MSPFN_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| {
            Error::invalid(
                "MSPFN_THREADS",
                format!("expected a positive integer, got {raw:?}"),
            )
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::invalid("MSPFN_THREADS", e.to_string()))
}

/// Resolve a variant name: the published registry plus `tiny`, a desk-scale
/// configuration for quick smoke runs.
fn cli_variant(name: &str) -> Result<ModelConfig> {
    if name == "tiny" {
        Ok(ModelConfig::tiny())
    } else {
        make_variant(name)
    }
}

fn parse_size(s: &str) -> Result<(usize, usize)> {
    let err = || Error::invalid("--size", format!("expected HxW (e.g. 96x128), got {s:?}"));
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(err)?;
    let h: usize = h.trim().parse().map_err(|_| err())?;
    let w: usize = w.trim().parse().map_err(|_| err())?;
    if h == 0 || w == 0 {
        return Err(err());
    }
    Ok((h, w))
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    if let Some(n) = args.gen_clean {
        if n == 0 {
            return Err(Error::invalid("--gen-clean", "count must be >= 1"));
        }
        let (h, w) = parse_size(&args.size)?;
        std::fs::create_dir_all(&args.clean_dir).map_err(|e| Error::io(&args.clean_dir, e))?;
        for i in 0..n {
            let img = synthetic_clean(h, w, args.seed.wrapping_add(i as u64));
            crate::data::save_image(&img, args.clean_dir.join(format!("gen_{i:04}.png")))?;
        }
        println!(
            "generated {n} clean {h}x{w} images in {}",
            args.clean_dir.display()
        );
    }
    let ranges = ParamRanges {
        angle_deg: (args.angle_min, args.angle_max),
        streak_length_px: (args.length_min, args.length_max),
        density: (args.density_min, args.density_max),
        intensity: (args.intensity_min, args.intensity_max),
    };
    let manifest = make_dataset(
        &args.clean_dir,
        &args.out,
        args.count,
        &ranges,
        args.seed,
        args.test_every,
    )?;
    let manifest_path = args.out.join("manifest.json");
    let (train_n, test_n) = (manifest.count(Split::Train), manifest.count(Split::Test));
    println!(
        "wrote {} pairs ({train_n} train, {test_n} test) to {}",
        manifest.entries.len(),
        args.out.display()
    );
    println!("manifest: {}", manifest_path.display());
    println!(
        "{}",
        json!({
            "manifest": manifest_path.display().to_string(),
            "pairs": manifest.entries.len(),
            "train": train_n,
            "test": test_n,
        })
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let model_cfg = cli_variant(&args.variant)?;
    let mut cfg = if args.paper_defaults {
        TrainConfig::paper_defaults()
    } else {
        TrainConfig::default()
    };
    if let Some(v) = args.steps {
        cfg.steps = v;
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
        if args.steps.is_none() {
            cfg.steps = 0;
        }
    }
    if let Some(v) = args.batch {
        cfg.batch_size = v;
    }
    if let Some(v) = args.lr {
        cfg.lr_init = v;
    }
    if let Some(v) = args.lr_half_every {
        cfg.lr_half_every = v;
    }
    if let Some(v) = args.lr_floor {
        cfg.lr_floor = v;
    }
    if let Some(v) = args.patch {
        cfg.patch = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.checkpoint_every {
        cfg.checkpoint_every = v;
    }
    let mut loss = LossConfig::default();
    if let Some(v) = args.lambda {
        loss.lambda = v;
    }
    if let Some(v) = args.epsilon {
        loss.epsilon = v;
    }
    cfg.loss = loss;

    let manifest = DatasetManifest::load(&args.manifest)?.resolved(&args.manifest);
    let entries = manifest.select(Some(Split::Train));
    if entries.is_empty() {
        return Err(Error::invalid(
            "train",
            format!("{} has no train entries", args.manifest.display()),
        ));
    }
    let pairs = crate::data::load_pair_tensors::<f32>(&entries)?;
    let resume = args.resume.as_ref().map(load_checkpoint).transpose()?;

    println!(
        "mspfn train: variant={} params={} pairs={}",
        args.variant,
        crate::model::param_count(&model_cfg)?,
        pairs.len()
    );
    println!(
        "config: lr={:e} batch={} epochs={} steps={} patch={} lambda={} epsilon={} seed={}",
        cfg.lr_init,
        cfg.batch_size,
        cfg.epochs,
        cfg.steps,
        cfg.patch,
        cfg.loss.lambda,
        cfg.loss.epsilon,
        cfg.seed
    );
    if let Some(path) = &args.resume {
        println!("resuming from {}", path.display());
    }

    let outcome = crate::train::train(&model_cfg, &cfg, &pairs, &args.out, resume)?;
    let last = outcome.log.last().expect("at least one step ran");
    println!(
        "done: step={} loss={:.6} psnr={:.2}",
        last.step, last.loss, last.psnr
    );
    println!("checkpoint: {}", outcome.checkpoint_path.display());
    println!("log: {}", outcome.log_path.display());
    println!(
        "{}",
        json!({
            "checkpoint": outcome.checkpoint_path.display().to_string(),
            "log": outcome.log_path.display().to_string(),
            "steps": last.step,
            "final_loss": last.loss,
            "final_psnr": json_f64(last.psnr),
        })
    );
    Ok(())
}

/// Pad (reflect) to the model's size divisor, run the network, crop back.
fn derain_tensor(
    params: &ParamStore<f32>,
    cfg: &ModelConfig,
    rain: &Tensor<f32>,
) -> Result<Tensor<f32>> {
    let [_, _, h, w] = rain.shape();
    let div = cfg.size_divisor();
    let (ph, pw) = (h.div_ceil(div) * div, w.div_ceil(div) * div);
    let padded = if (ph, pw) == (h, w) {
        rain.clone()
    } else {
        pad_reflect(rain, ph, pw)?
    };
    let mut tape = Tape::new();
    let out = mspfn_forward(&mut tape, &padded, params, cfg)?;
    if (ph, pw) == (h, w) {
        Ok(out.derained)
    } else {
        crop(&out.derained, 0, 0, h, w)
    }
}

fn cmd_derain(args: DerainArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.ckpt)?;
    let img = load_image(&args.input)?;
    let rain = img.to_tensor::<f32>();
    let derained = derain_tensor(&ckpt.params, &ckpt.model, &rain)?;
    let out_img = ImageF::from_tensor(&derained)?;
    crate::data::save_image(&out_img, &args.out)?;
    println!(
        "wrote {} ({}x{})",
        args.out.display(),
        out_img.width(),
        out_img.height()
    );
    Ok(())
}

/// A PSNR/SSIM pair; PSNR may be +inf for identical images.
struct Score {
    name: String,
    psnr: f64,
    ssim: f64,
}

fn score_pair(rain: &Tensor<f32>, clean: &Tensor<f32>, on_luma: bool) -> Result<(f64, f64)> {
    if on_luma {
        let (a, b) = (luma(rain)?, luma(clean)?);
        Ok((psnr(&a, &b, 1.0)?, ssim(&a, &b)?))
    } else {
        Ok((psnr(rain, clean, 1.0)?, ssim(rain, clean)?))
    }
}

fn fmt_psnr(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        "inf".to_string()
    }
}

/// JSON value for a possibly-infinite metric (JSON has no Inf literal).
fn json_f64(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!("inf")
    }
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let ckpt: Option<Checkpoint> = args.ckpt.as_ref().map(load_checkpoint).transpose()?;
    let manifest = DatasetManifest::load(&args.manifest)?.resolved(&args.manifest);
    let entries = manifest.select(args.split.to_filter());
    if entries.is_empty() {
        return Err(Error::invalid(
            "eval",
            format!("{} has no entries in the requested split", args.manifest.display()),
        ));
    }

    // Score in parallel; `collect` keeps manifest order for the report.
    let scores: Vec<Score> = entries
        .par_iter()
        .map(|entry| {
            let rain = load_image(&entry.rain)?.to_tensor::<f32>();
            let clean = load_image(&entry.clean)?.to_tensor::<f32>();
            let candidate = match &ckpt {
                Some(c) => derain_tensor(&c.params, &c.model, &rain)?,
                None => rain,
            };
            let (psnr_v, ssim_v) = score_pair(&candidate, &clean, args.luma)?;
            let name = entry
                .rain
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| entry.rain.display().to_string());
            Ok(Score {
                name,
                psnr: psnr_v,
                ssim: ssim_v,
            })
        })
        .collect::<Result<_>>()?;

    let n = scores.len() as f64;
    let mean_psnr = scores.iter().map(|s| s.psnr).sum::<f64>() / n;
    let mean_ssim = scores.iter().map(|s| s.ssim).sum::<f64>() / n;

    let name_w = scores
        .iter()
        .map(|s| s.name.len())
        .chain(["image".len(), "mean".len()])
        .max()
        .unwrap();
    println!("{:<name_w$}  {:>10}  {:>8}", "image", "psnr", "ssim");
    for s in &scores {
        println!(
            "{:<name_w$}  {:>10}  {:>8.4}",
            s.name,
            fmt_psnr(s.psnr),
            s.ssim
        );
    }
    println!(
        "{:<name_w$}  {:>10}  {:>8.4}",
        "mean",
        fmt_psnr(mean_psnr),
        mean_ssim
    );

    let report = json!({
        "mode": if ckpt.is_some() { "ckpt" } else { "pairs" },
        "luma": args.luma,
        "count": scores.len(),
        "entries": scores
            .iter()
            .map(|s| json!({"image": s.name, "psnr": json_f64(s.psnr), "ssim": s.ssim}))
            .collect::<Vec<_>>(),
        "mean_psnr": json_f64(mean_psnr),
        "mean_ssim": mean_ssim,
    });
    if let Some(path) = &args.json {
        let mut bytes = serde_json::to_vec_pretty(&report)
            .map_err(|e| Error::invalid("eval", format!("report serialization: {e}")))?;
        bytes.push(b'\n');
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    }
    println!("{report}");
    Ok(())
}

fn cmd_inspect(args: InspectArgs) -> Result<()> {
    if args.list {
        for name in VARIANT_NAMES {
            println!("{name}");
        }
        println!("tiny (desk-scale extra)");
        return Ok(());
    }
    let name = args.variant.as_deref().expect("clap enforces --variant");
    let cfg = cli_variant(name)?;
    let schema = param_schema(&cfg)?;
    let total: usize = schema.iter().map(|s| numel(s.shape)).sum();

    // Group parameters by stage: the schema prefix before the first '.',
    // digits stripped so ffm0..ffmN aggregate into one row.
    let mut modules: BTreeMap<String, usize> = ["init", "cfm", "ffm", "rm"]
        .into_iter()
        .map(|k| (k.to_string(), 0))
        .collect();
    for spec in &schema {
        let prefix = spec.name.split('.').next().unwrap_or(&spec.name);
        let key: String = prefix.chars().filter(|c| !c.is_ascii_digit()).collect();
        *modules.entry(key).or_insert(0) += numel(spec.shape);
    }

    println!("variant: {name}");
    println!("levels: {}", cfg.levels);
    println!(
        "scale_channels: [{}]",
        cfg.scale_channels
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    );
    println!("m: {}", cfg.m);
    println!("n: {}", cfg.n);
    println!("t: {}", cfg.t);
    println!("urab_sampling_pairs: {}", cfg.urab_sampling_pairs);
    println!("kernel_size: {}", cfg.kernel_size);
    println!("attention_reduction: {}", cfg.attention_reduction);
    println!("size_divisor: {}", cfg.size_divisor());
    println!("param_count: {total}");
    println!("modules:");
    for (key, count) in &modules {
        let pct = if total > 0 {
            100.0 * *count as f64 / total as f64
        } else {
            0.0
        };
        println!("  {key:<6} {count:>12}  {pct:>5.1}%");
    }
    println!(
        "{}",
        json!({
            "variant": name,
            "config": cfg,
            "param_count": total,
            "modules": modules,
        })
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_strings_parse_or_reject() {
        assert_eq!(parse_size("96x128").unwrap(), (96, 128));
        assert_eq!(parse_size("64X64").unwrap(), (64, 64));
        assert!(parse_size("96").is_err());
        assert!(parse_size("0x64").is_err());
        assert!(parse_size("axb").is_err());
    }

    #[test]
    fn variant_lookup_covers_the_registry_and_tiny() {
        for name in VARIANT_NAMES {
            assert!(cli_variant(name).is_ok(), "{name}");
        }
        let tiny = cli_variant("tiny").unwrap();
        assert_eq!(tiny.scale_channels, vec![8, 16, 32]);
        let err = cli_variant("nope").unwrap_err().to_string();
        assert!(err.contains("inspect --list"), "{err}");
    }

    #[test]
    fn infinite_metrics_serialize_as_strings() {
        assert_eq!(json_f64(f64::INFINITY), json!("inf"));
        assert_eq!(json_f64(31.5), json!(31.5));
        assert_eq!(fmt_psnr(f64::INFINITY), "inf");
        assert_eq!(fmt_psnr(28.25), "28.2500");
    }

    #[test]
    fn derain_preserves_arbitrary_input_dimensions() {
        let cfg = ModelConfig {
            levels: 2,
            scale_channels: vec![4, 6],
            m: 1,
            n: 1,
            t: 1,
            urab_sampling_pairs: 1,
            kernel_size: 3,
            attention_reduction: 2,
            variant: crate::model::Variant::Full,
        };
        let params = ParamStore::<f32>::init(&cfg, 3).unwrap();
        assert_eq!(cfg.size_divisor(), 4);
        let img = synthetic_clean(75, 50, 9);
        let out = derain_tensor(&params, &cfg, &img.to_tensor()).unwrap();
        assert_eq!(out.shape(), [1, 3, 75, 50]);
    }

    #[test]
    fn cli_rejects_unknown_flags_and_accepts_help() {
        let err = Cli::try_parse_from(["mspfn", "synth", "--bogus", "x"]).unwrap_err();
        assert_ne!(err.kind(), clap::error::ErrorKind::DisplayHelp);
        let help = Cli::try_parse_from(["mspfn", "train", "--help"]).unwrap_err();
        assert_eq!(help.kind(), clap::error::ErrorKind::DisplayHelp);
        assert!(Cli::try_parse_from(["mspfn", "synth"]).is_err(), "--clean-dir and --out required");
        // eval needs exactly one of --ckpt / --pairs.
        assert!(Cli::try_parse_from(["mspfn", "eval", "--manifest", "m.json"]).is_err());
        assert!(Cli::try_parse_from([
            "mspfn", "eval", "--manifest", "m.json", "--ckpt", "c", "--pairs"
        ])
        .is_err());
        assert!(Cli::try_parse_from(["mspfn", "eval", "--manifest", "m.json", "--pairs"]).is_ok());
    }
}
