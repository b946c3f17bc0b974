//! Command-line front end: training, reconstruction, evaluation, parameter
//! accounting and oracle verification.
//!
//! Exit codes are 0 on success, 1 on a domain error (bad data, unreadable
//! files, divergence) and 2 on a usage error (bad flags or configuration).

pub mod config;
pub mod verify;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use msdcnn::io::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use msdcnn::io::image::{load_grayscale, save_grayscale};
use msdcnn::io::manifest::{DatasetManifest, Split};
use msdcnn::io::write_atomic;
use msdcnn::metrics::{image_quality, ImageScore, QualityReport};
use msdcnn::train::{train_on_images, TrainHistory};
use msdcnn::{count_parameters, Error, Network, ParamScope, PatternPreset, Scalar, Tensor};

pub use config::{Overrides, Precision, RunConfig};

/// Bad flags, configuration or argument combinations. Maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Exit code for an error returned by one of the commands.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.chain().any(|e| e.is::<UsageError>()) {
        EXIT_USAGE
    } else {
        EXIT_DOMAIN
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "msdcnn",
    version,
    about = "Multi-scale dilated CNN for block compressive sensing"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Run-configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Measurement rate.
    #[arg(long, global = true)]
    pub mr: Option<f64>,
    /// Number of MFE channels.
    #[arg(long, global = true)]
    pub channels: Option<usize>,
    /// Output path (checkpoint, image or report, depending on the command).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network and write its checkpoint and per-epoch history.
    Train(TrainArgs),
    /// Reconstruct one image through a trained network.
    Reconstruct(ReconstructArgs),
    /// Score a manifest split and print a quality report.
    Eval(EvalArgs),
    /// Print the parameter count implied by a configuration.
    CountParams(CountArgs),
    /// Run the bundled oracle suites.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Manifest with the `train` split.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Manifest with the `val` split (defaults to --manifest).
    #[arg(long)]
    pub val_manifest: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub precision: Option<Precision>,
}

#[derive(Debug, Clone, Args)]
pub struct ReconstructArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// PGM or PPM image.
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub precision: Option<Precision>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
    #[arg(long, value_enum)]
    pub precision: Option<Precision>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scope {
    /// MFE weights only, biases excluded.
    Mfe,
    /// Every trainable scalar.
    All,
}

#[derive(Debug, Clone, Args)]
pub struct CountArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value = "alternating")]
    pub pattern: PatternPreset,
    #[arg(long, value_enum, default_value = "mfe")]
    pub scope: Scope,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: Common,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            log::error!("{e:#}");
            exit_code(&e)
        }
    }
}

pub fn dispatch(command: &Command) -> Result<()> {
    match command {
        Command::Train(a) => cmd_train(a).map(drop),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Eval(a) => {
            let report = cmd_eval(a)?;
            print!("{}", report.to_text());
            Ok(())
        }
        Command::CountParams(a) => {
            println!("{}", group_thousands(cmd_count_params(a)?));
            Ok(())
        }
        Command::Verify(a) => cmd_verify(a, verify::default_suites()),
    }
}

/// Loads the config file, applies the flags and validates the result.
fn effective_config(common: &Common, extra: Overrides) -> Result<RunConfig> {
    let file = RunConfig::load_or_default(common.config.as_deref())
        .map_err(|e| usage(format!("{e:#}")))?;
    let overrides = Overrides {
        seed: common.seed,
        measurement_rate: common.mr,
        channels: common.channels,
        ..extra
    };
    let cfg = file.apply(&overrides);
    cfg.network.validate().map_err(|e| usage(e.to_string()))?;
    cfg.train.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn echo_config(command: &str, cfg: &RunConfig) {
    log::info!(
        "{command}: seed {}, effective configuration:\n{}",
        cfg.train.seed,
        cfg.to_toml().trim_end()
    );
}

/// Artifacts written by [`cmd_train`].
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub checkpoint: PathBuf,
    pub history: PathBuf,
}

/// History log written next to a checkpoint.
pub fn history_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.file_name().unwrap_or_default().to_os_string();
    name.push(".history.tsv");
    checkpoint.with_file_name(name)
}

pub fn cmd_train(args: &TrainArgs) -> Result<TrainOutput> {
    let cfg = effective_config(
        &args.common,
        Overrides {
            epochs: args.epochs,
            manifest: args.manifest.clone(),
            val_manifest: args.val_manifest.clone(),
            precision: args.precision,
            ..Overrides::default()
        },
    )?;
    echo_config("train", &cfg);
    let manifest_path = cfg
        .manifest
        .clone()
        .ok_or_else(|| usage("train needs a manifest (--manifest or `manifest` in the config)"))?;
    let val_path = cfg
        .val_manifest
        .clone()
        .unwrap_or_else(|| manifest_path.clone());
    let out = args
        .common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("msdcnn.ckpt"));
    let history = history_path(&out);

    let train_manifest = DatasetManifest::load(&manifest_path)?;
    let val_manifest = if val_path == manifest_path {
        train_manifest.clone()
    } else {
        DatasetManifest::load(&val_path)?
    };
    let result = match cfg.precision {
        Precision::F32 => train_with::<f32>(&cfg, &train_manifest, &val_manifest),
        Precision::F64 => train_with::<f64>(&cfg, &train_manifest, &val_manifest),
    };
    let (ckpt, log) = match result {
        Ok(done) => done,
        Err(Error::Diverged {
            epoch,
            step,
            loss,
            last_good,
        }) => {
            save_checkpoint(&last_good, &out)?;
            anyhow::bail!(
                "training diverged at epoch {epoch}, step {step} (loss {loss}); last good weights saved to {}",
                out.display()
            );
        }
        Err(e) => return Err(e.into()),
    };
    save_checkpoint(&ckpt, &out)?;
    write_atomic(&history, log.to_log().as_bytes())?;
    log::info!("wrote {} and {}", out.display(), history.display());
    Ok(TrainOutput {
        checkpoint: out,
        history,
    })
}

fn load_images<T: Scalar>(m: &DatasetManifest, split: Split) -> msdcnn::Result<Vec<Tensor<T>>> {
    let images: Vec<Tensor<T>> = m.load_split(split)?.into_iter().map(|(_, t)| t).collect();
    if images.is_empty() {
        return Err(Error::Validation(format!(
            "manifest has no {split} entries"
        )));
    }
    Ok(images)
}

fn train_with<T: Scalar>(
    cfg: &RunConfig,
    train: &DatasetManifest,
    val: &DatasetManifest,
) -> msdcnn::Result<(Checkpoint, TrainHistory)> {
    let train_images = load_images::<T>(train, Split::Train)?;
    let val_images = load_images::<T>(val, Split::Val)?;
    log::info!(
        "{} training and {} validation images",
        train_images.len(),
        val_images.len()
    );
    let outcome = train_on_images(&cfg.network, &cfg.train, &train_images, &val_images)?;
    Ok((outcome.checkpoint, outcome.history))
}

/// Loads a checkpoint, warning when flags disagree with its configuration.
fn open_checkpoint(path: &Path, common: &Common) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(path)?;
    if common
        .mr
        .is_some_and(|mr| mr != ckpt.config.measurement_rate)
        || common
            .channels
            .is_some_and(|c| c != ckpt.config.mfe_channels)
    {
        log::warn!("--mr/--channels ignored: the checkpoint's configuration governs");
    }
    log::info!(
        "checkpoint {} (epoch {}, seed {}), configuration:\n{}",
        path.display(),
        ckpt.epoch,
        ckpt.seed,
        toml::to_string(&ckpt.config).unwrap_or_default().trim_end()
    );
    Ok(ckpt)
}

fn precision_of(common: &Common, flag: Option<Precision>) -> Result<Precision> {
    let file = RunConfig::load_or_default(common.config.as_deref())
        .map_err(|e| usage(format!("{e:#}")))?;
    Ok(flag.unwrap_or(file.precision))
}

pub fn cmd_reconstruct(args: &ReconstructArgs) -> Result<()> {
    let ckpt = open_checkpoint(&args.checkpoint, &args.common)?;
    let precision = precision_of(&args.common, args.precision)?;
    let out = args.common.out.clone().unwrap_or_else(|| {
        let stem = args.input.file_stem().unwrap_or_default().to_string_lossy();
        args.input.with_file_name(format!("{stem}.recon.pgm"))
    });
    let (psnr, ssim) = match precision {
        Precision::F32 => reconstruct_with::<f32>(&ckpt, &args.input, &out)?,
        Precision::F64 => reconstruct_with::<f64>(&ckpt, &args.input, &out)?,
    };
    log::info!(
        "wrote {}: psnr {psnr:.4} dB, ssim {ssim:.6} against the input",
        out.display()
    );
    Ok(())
}

fn reconstruct_with<T: Scalar>(ckpt: &Checkpoint, input: &Path, out: &Path) -> Result<(f64, f64)> {
    let net: Network<T> = ckpt.to_network()?;
    let image: Tensor<T> = load_grayscale(input)?;
    let recon = net.reconstruct(&image)?;
    save_grayscale(&recon, out)?;
    Ok(image_quality(&recon, &image)?)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<QualityReport> {
    let ckpt = open_checkpoint(&args.checkpoint, &args.common)?;
    let precision = precision_of(&args.common, args.precision)?;
    let manifest = DatasetManifest::load(&args.manifest)?;
    let report = match precision {
        Precision::F32 => eval_with::<f32>(&ckpt, &manifest, args.split)?,
        Precision::F64 => eval_with::<f64>(&ckpt, &manifest, args.split)?,
    };
    if let Some(out) = &args.common.out {
        write_atomic(out, report.to_text().as_bytes())?;
    }
    Ok(report)
}

fn eval_with<T: Scalar>(
    ckpt: &Checkpoint,
    manifest: &DatasetManifest,
    split: Split,
) -> Result<QualityReport> {
    let net: Network<T> = ckpt.to_network()?;
    let mut report = QualityReport::default();
    for (name, image) in manifest.load_split::<T>(split)? {
        let start = Instant::now();
        let recon = net.reconstruct(&image)?;
        let millis = start.elapsed().as_secs_f64() * 1e3;
        let (psnr, ssim) = image_quality(&recon, &image)?;
        log::info!("{name}: psnr {psnr:.4} dB, ssim {ssim:.6}, {millis:.1} ms");
        report.push(ImageScore {
            name,
            measurement_rate: ckpt.config.measurement_rate,
            psnr,
            ssim,
            millis,
        });
    }
    if report.rows.is_empty() {
        return Err(Error::Validation(format!("manifest has no {split} entries")).into());
    }
    Ok(report)
}

pub fn cmd_count_params(args: &CountArgs) -> Result<usize> {
    let mut cfg = effective_config(&args.common, Overrides::default())?;
    cfg.network = cfg.network.with_pattern(args.pattern);
    echo_config("count-params", &cfg);
    let scope = match args.scope {
        Scope::Mfe => ParamScope::MfeOnly,
        Scope::All => ParamScope::Full,
    };
    count_parameters(&cfg.network, scope).map_err(|e| usage(e.to_string()))
}

/// Runs `suites`, printing one line per suite to stdout. Fails unless all pass.
pub fn cmd_verify(args: &VerifyArgs, suites: Vec<verify::Suite>) -> Result<()> {
    let cfg = effective_config(&args.common, Overrides::default())?;
    echo_config("verify", &cfg);
    let mut report = Vec::new();
    let passed = verify::run_suites(&suites, &mut report);
    print!("{}", String::from_utf8_lossy(&report));
    if let Some(out) = &args.common.out {
        fs::write(out, &report).with_context(|| format!("cannot write {}", out.display()))?;
    }
    anyhow::ensure!(passed, "one or more verification suites failed");
    Ok(())
}

/// `88640` → `"88,640"`.
pub fn group_thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thousands() {
        assert_eq!(group_thousands(0), "0");
        assert_eq!(group_thousands(999), "999");
        assert_eq!(group_thousands(88_640), "88,640");
        assert_eq!(group_thousands(1_234_567), "1,234,567");
    }

    #[test]
    fn history_sits_beside_the_checkpoint() {
        assert_eq!(
            history_path(Path::new("out/m.ckpt")),
            Path::new("out/m.ckpt.history.tsv")
        );
    }

    #[test]
    fn usage_errors_map_to_two() {
        assert_eq!(exit_code(&usage("x")), EXIT_USAGE);
        assert_eq!(exit_code(&usage("x").context("outer")), EXIT_USAGE);
        assert_eq!(exit_code(&anyhow::anyhow!("io")), EXIT_DOMAIN);
    }

    #[test]
    fn bad_flags_exit_two() {
        assert_eq!(
            run(["msdcnn", "count-params", "--pattern", "spiral"]),
            EXIT_USAGE
        );
        assert_eq!(run(["msdcnn", "frobnicate"]), EXIT_USAGE);
    }
}
