//! `ggea` command-line interface.
//!
//! Machine-readable JSON goes to stdout, diagnostics to stderr. Exit codes:
//! 0 success, 1 usage error, 2 data error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ggea_core::dataset::{scan_flat_pairs, scan_scenes, scene_frames};
use ggea_core::edge_weight::{weight_map, WeightVariant};
use ggea_core::image_io::{load_image, save_image, save_pfm};
use ggea_core::losses::{gradcheck_ggea, total_loss, GgeaNormalization, LossConfig};
use ggea_core::metrics::{score_directory, SsimChannels, SsimOptions, DEFAULT_SSIM_KERNEL};
use ggea_core::pipeline::{
    average_frames, ensemble_directories, restore_one, EnsembleConfig, ReferenceRestorer, FRAME_PAD_MULTIPLE,
};
use ggea_core::train::{lr_at, ScheduleConfig, TrainConfig};
use ggea_core::Error;

/// Passing threshold for `gradcheck`.
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

/// Environment variable holding the worker thread count for directory
/// commands.
pub const THREADS_ENV: &str = "GGEA_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "ggea",
    version,
    about = "Edge-aware restoration losses, metrics and ensembling"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute a Sobel block weight map from an image.
    Weightmap(WeightmapArgs),
    /// Evaluate the training loss terms on an image pair.
    Loss(LossArgs),
    /// Score restored images against ground truth (PSNR / SSIM).
    Score(ScoreArgs),
    /// Fuse two directories of model outputs with fixed weights.
    Ensemble(EnsembleArgs),
    /// Average the frames of one scene folder.
    Avg(AvgArgs),
    /// Check the analytic edge-loss gradient against finite differences.
    Gradcheck(GradcheckArgs),
    /// List samples found in a dataset layout.
    Scan(ScanArgs),
    /// Print the learning-rate schedule.
    Schedule(ScheduleArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum VariantArg {
    Ggea,
    Diffbir,
}

impl From<VariantArg> for WeightVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Ggea => WeightVariant::Ggea,
            VariantArg::Diffbir => WeightVariant::DiffBir,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum MapFormat {
    Pfm,
    Png,
}

#[derive(Debug, Args)]
pub struct WeightmapArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "ggea")]
    pub variant: VariantArg,
    /// Defaults to the extension of --out, falling back to pfm.
    #[arg(long, value_enum)]
    pub format: Option<MapFormat>,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_ssim: f64,
    #[arg(long, default_value_t = 7)]
    pub ms_kernel: usize,
    /// Skip the MS-SSIM term (and its minimum-size requirement).
    #[arg(long)]
    pub no_ms_ssim: bool,
    /// Divide the edge loss by N·C·H·W instead of N·H·W.
    #[arg(long)]
    pub per_element: bool,
}

impl LossArgs {
    pub fn config(&self) -> LossConfig {
        LossConfig {
            lambda_ssim: self.lambda_ssim,
            ms_ssim_kernel: self.ms_kernel,
            ms_ssim_enabled: !self.no_ms_ssim,
            ggea_normalization: if self.per_element {
                GgeaNormalization::PerElement
            } else {
                GgeaNormalization::PerPixel
            },
            ..LossConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub restored: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SSIM_KERNEL)]
    pub ssim_kernel: usize,
    /// Compute SSIM on luma instead of averaging over RGB channels.
    #[arg(long)]
    pub luma: bool,
}

impl ScoreArgs {
    pub fn options(&self) -> SsimOptions {
        SsimOptions {
            kernel: self.ssim_kernel,
            peak: 1.0,
            channels: if self.luma {
                SsimChannels::Luma
            } else {
                SsimChannels::Mean
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, default_value_t = 0.4)]
    pub wa: f64,
    #[arg(long, default_value_t = 0.6)]
    pub wb: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AvgArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = FRAME_PAD_MULTIPLE)]
    pub pad: usize,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 16)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    pub eps: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum Layout {
    /// `GT_all/` and `LQ_all/` paired by filename.
    Flat,
    /// Scene folders with `gt.png` and `degraded_*.png`.
    Scenes,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[arg(long)]
    pub root: PathBuf,
    #[arg(long, value_enum)]
    pub layout: Layout,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    /// TOML training config; defaults to the 40-epoch fine-tuning setup.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub steps_per_epoch: Option<usize>,
    /// Print every k-th step.
    #[arg(long, default_value_t = 1)]
    pub every: usize,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::ImageTooSmall { .. } => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report types serialize")
}

fn extension(p: &Path) -> Option<String> {
    p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase())
}

pub fn cmd_weightmap(args: &WeightmapArgs, out: &mut dyn Write) -> CliResult<()> {
    let format = args.format.unwrap_or(match extension(&args.out).as_deref() {
        Some("png") => MapFormat::Png,
        _ => MapFormat::Pfm,
    });
    let img = load_image(&args.gt)?;
    if img.shape().c != 3 {
        return Err(CliError::Data(format!("{}: expected an RGB image", args.gt.display())));
    }
    let map = weight_map(&img, args.variant.into())?;
    let t = map.tensor();
    match format {
        MapFormat::Pfm => save_pfm(t, &args.out)?,
        MapFormat::Png => save_image(t, &args.out)?,
    }
    let d = t.data();
    let summary = serde_json::json!({
        "out": args.out.display().to_string(),
        "variant": WeightVariant::from(args.variant),
        "height": t.shape().h,
        "width": t.shape().w,
        "min": d.iter().copied().fold(f32::INFINITY, f32::min),
        "max": d.iter().copied().fold(f32::NEG_INFINITY, f32::max),
        "mean": d.iter().map(|&v| v as f64).sum::<f64>() / d.len() as f64,
    });
    writeln!(out, "{}", to_json(&summary)).map_err(|e| CliError::Data(e.to_string()))
}

pub fn cmd_loss(args: &LossArgs, out: &mut dyn Write) -> CliResult<()> {
    let cfg = args.config();
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let pred = load_image(&args.pred)?;
    let gt = load_image(&args.gt)?;
    let report = total_loss(&pred, &gt, &cfg)?;
    writeln!(out, "{}", to_json(&report)).map_err(|e| CliError::Data(e.to_string()))
}

pub fn cmd_score(args: &ScoreArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let opts = args.options();
    if opts.kernel.is_multiple_of(2) {
        return Err(CliError::Usage(format!(
            "--ssim-kernel must be odd, got {}",
            opts.kernel
        )));
    }
    let summary = score_directory(&args.restored, &args.gt, &opts)?;
    for issue in &summary.issues {
        let _ = writeln!(err, "warning: {}: {}", issue.name, issue.reason);
    }
    if let Some(csv_path) = &args.csv {
        let text = summary.to_csv()?;
        std::fs::write(csv_path, text).map_err(|e| CliError::Data(format!("{}: {e}", csv_path.display())))?;
    }
    writeln!(out, "{}", to_json(&summary)).map_err(|e| CliError::Data(e.to_string()))
}

pub fn cmd_ensemble(args: &EnsembleArgs, out: &mut dyn Write) -> CliResult<()> {
    let cfg = EnsembleConfig::new(args.wa, args.wb).map_err(|e| CliError::Usage(e.to_string()))?;
    let written = ensemble_directories(&args.a, &args.b, &cfg, &args.out)?;
    let files: Vec<String> = written.iter().map(|p| p.display().to_string()).collect();
    let summary = serde_json::json!({ "w_a": cfg.w_a, "w_b": cfg.w_b, "written": files });
    writeln!(out, "{}", to_json(&summary)).map_err(|e| CliError::Data(e.to_string()))
}

pub fn cmd_avg(args: &AvgArgs, out: &mut dyn Write) -> CliResult<()> {
    if args.pad == 0 {
        return Err(CliError::Usage("--pad must be positive".into()));
    }
    let frames = scene_frames(&args.scene)?;
    if frames.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no frames to average",
            args.scene.display()
        )));
    }
    let restored = frames
        .iter()
        .map(|p| Ok(restore_one(&ReferenceRestorer::Identity, &load_image(p)?, args.pad)?))
        .collect::<CliResult<Vec<_>>>()?;
    let mean = average_frames(&restored)?;
    save_image(&mean, &args.out)?;
    let names: Vec<String> = frames.iter().map(|p| p.display().to_string()).collect();
    let summary = serde_json::json!({ "out": args.out.display().to_string(), "frames": names });
    writeln!(out, "{}", to_json(&summary)).map_err(|e| CliError::Data(e.to_string()))
}

/// Returns whether the check passed.
pub fn cmd_gradcheck(args: &GradcheckArgs, out: &mut dyn Write) -> CliResult<bool> {
    if !(args.eps > 0.0 && args.eps.is_finite()) {
        return Err(CliError::Usage(format!("--eps must be positive, got {}", args.eps)));
    }
    if args.size == 0 {
        return Err(CliError::Usage("--size must be positive".into()));
    }
    let report = gradcheck_ggea(args.size, args.seed, args.eps)?;
    let pass = report.max_abs_err < GRADCHECK_TOLERANCE;
    let mut v = serde_json::to_value(&report).expect("report serializes");
    v["tolerance"] = GRADCHECK_TOLERANCE.into();
    v["pass"] = pass.into();
    writeln!(out, "{}", to_json(&v)).map_err(|e| CliError::Data(e.to_string()))?;
    Ok(pass)
}

pub fn cmd_scan(args: &ScanArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let (json, warnings) = match args.layout {
        Layout::Flat => {
            let scan = scan_flat_pairs(&args.root)?;
            (to_json(&scan.items), scan.warnings)
        }
        Layout::Scenes => {
            let scan = scan_scenes(&args.root)?;
            (to_json(&scan.items), scan.warnings)
        }
    };
    for w in warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    writeln!(out, "{json}").map_err(|e| CliError::Data(e.to_string()))
}

pub fn cmd_schedule(args: &ScheduleArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut cfg: ScheduleConfig = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
            TrainConfig::from_toml(&text)
                .map_err(|e| CliError::Usage(e.to_string()))?
                .schedule
        }
        None => TrainConfig::finetune().schedule,
    };
    if let Some(s) = args.steps_per_epoch {
        cfg.steps_per_epoch = s;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if args.every == 0 {
        return Err(CliError::Usage("--every must be positive".into()));
    }
    let total = cfg.total_steps();
    let mut steps: Vec<usize> = (0..=total).step_by(args.every).collect();
    if steps.last() != Some(&total) {
        steps.push(total);
    }
    let mut text = String::from("step,lr\n");
    for s in steps {
        text.push_str(&format!("{s},{:e}\n", lr_at(s, &cfg)?));
    }
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Data(e.to_string()))
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        // a pool may already exist when called twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Runs one invocation and returns its exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{rendered}");
            } else {
                let _ = write!(out, "{rendered}");
            }
            return code;
        }
    };
    configure_threads();
    let result = match &cli.command {
        Command::Weightmap(a) => cmd_weightmap(a, out),
        Command::Loss(a) => cmd_loss(a, out),
        Command::Score(a) => cmd_score(a, out, err),
        Command::Ensemble(a) => cmd_ensemble(a, out),
        Command::Avg(a) => cmd_avg(a, out),
        Command::Gradcheck(a) => match cmd_gradcheck(a, out) {
            Ok(true) => Ok(()),
            Ok(false) => Err(CliError::Data(format!(
                "gradient check failed: error above {GRADCHECK_TOLERANCE}"
            ))),
            Err(e) => Err(e),
        },
        Command::Scan(a) => cmd_scan(a, out, err),
        Command::Schedule(a) => cmd_schedule(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.exit_code()
        }
    }
}
