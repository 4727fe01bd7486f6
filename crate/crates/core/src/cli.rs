//! The `ppad` command line: `synth`, `train`, `eval` and `viz`.
//!
//! Settings resolve as flags > config file > defaults. The config file is
//! `--config <file>`, or `$PPAD_CONFIG` when the flag is absent. Exit codes:
//! 0 success, 1 runtime error, 2 usage error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::Rng as _;

use crate::imaging::{list_images, read_image, save_image, BinaryMask, GrayImage};
use crate::inference::evaluate;
use crate::maskgen::{generate_mask_traced, MaskSpec, Point2D};
use crate::rng;
use crate::synth::{apply_gamma, gamma_field};
use crate::trainer::{train, write_loss_log, Checkpoint, TrainConfig};
use crate::{Error, Result};

pub const CONFIG_ENV: &str = "PPAD_CONFIG";

#[derive(Debug, Parser)]
#[command(name = "ppad", version, about = "Position-guided prompt learning and structure-preserving anomaly synthesis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Insert one synthetic anomaly into every input image.
    Synth(SynthArgs),
    /// Train the text and image prompts on normal images.
    Train(TrainArgs),
    /// Evaluate a checkpoint on `<data>/normal` and `<data>/abnormal`.
    Eval(EvalArgs),
    /// Write the intermediate panels of one synthesis.
    Viz(VizArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// `key = value` config file (falls back to $PPAD_CONFIG).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Process at most this many images (sorted by name).
    #[arg(long)]
    pub count: Option<usize>,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub shots: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, default_value = "checkpoint.ppad")]
    pub out: PathBuf,
    /// Loss log (CSV); defaults to `<out>.loss.csv`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "report.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VizArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub config: ConfigArg,
}

pub fn parse_args<I, T>(argv: I) -> std::result::Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    Cli::try_parse_from(argv)
}

/// Defaults, then the config file, then `overrides` (flags).
pub fn resolve_config(
    config_path: Option<&Path>,
    env_path: Option<&Path>,
    overrides: &[(&str, String)],
) -> Result<TrainConfig> {
    let mut config = TrainConfig::default();
    if let Some(path) = config_path.or(env_path) {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        config.apply_text(&text)?;
    }
    for (key, value) in overrides {
        config.set(key, value)?;
    }
    config.validate()?;
    Ok(config)
}

fn env_config() -> Option<PathBuf> {
    std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

fn overrides(pairs: &[(&'static str, Option<String>)]) -> Vec<(&'static str, String)> {
    pairs.iter().filter_map(|(k, v)| v.clone().map(|v| (*k, v))).collect()
}

impl TrainArgs {
    pub fn resolve(&self, env_path: Option<&Path>) -> Result<TrainConfig> {
        let o = overrides(&[
            ("shots", self.shots.map(|v| v.to_string())),
            ("epochs", self.epochs.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("learning_rate", self.learning_rate.map(|v| format!("{v:?}"))),
            ("eta", self.eta.map(|v| format!("{v:?}"))),
        ]);
        resolve_config(self.config.config.as_deref(), env_path, &o)
    }
}

fn seed_override(seed: Option<u64>) -> Vec<(&'static str, String)> {
    overrides(&[("seed", seed.map(|v| v.to_string()))])
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match parse_args(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli.command, env_config().as_deref()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn execute(command: &Command, env_path: Option<&Path>) -> Result<()> {
    match command {
        Command::Synth(a) => {
            let config = resolve_config(a.config.config.as_deref(), env_path, &seed_override(a.seed))?;
            let written = run_synth(&a.input, &a.output, &config, a.count)?;
            println!("wrote {written} synthetic image/mask pairs to {}", a.output.display());
        }
        Command::Train(a) => {
            let config = a.resolve(env_path)?;
            let outcome = train(&a.data, &config)?;
            outcome.checkpoint.save(&a.out)?;
            let log = a.log.clone().unwrap_or_else(|| {
                let mut p = a.out.clone().into_os_string();
                p.push(".loss.csv");
                PathBuf::from(p)
            });
            write_loss_log(&log, &outcome.epoch_losses)?;
            let first = outcome.epoch_losses.first().copied().unwrap_or(f64::NAN);
            let last = outcome.epoch_losses.last().copied().unwrap_or(f64::NAN);
            println!(
                "trained {} epochs on {} shots: mean loss {first:.4} -> {last:.4}; checkpoint {}",
                config.epochs,
                config.shots,
                a.out.display()
            );
        }
        Command::Eval(a) => {
            let ck = Checkpoint::load(&a.checkpoint)?;
            let report = evaluate(&a.data, &ck)?;
            fs::write(&a.out, report.to_json())?;
            print!("{}", report.table());
        }
        Command::Viz(a) => {
            let config = resolve_config(a.config.config.as_deref(), env_path, &seed_override(a.seed))?;
            run_viz(&a.input, &a.out_dir, &config)?;
            println!("wrote panels to {}", a.out_dir.display());
        }
    }
    Ok(())
}

/// Writes `<stem>_synth.pgm` and `<stem>_mask.pgm` for each input image.
/// Every image gets an anomaly; its weight and mask come from
/// `config.seed` and the image's index.
pub fn run_synth(input: &Path, output: &Path, config: &TrainConfig, count: Option<usize>) -> Result<usize> {
    let mut paths = list_images(input)?;
    if let Some(n) = count {
        paths.truncate(n);
    }
    fs::create_dir_all(output)?;
    for (i, path) in paths.iter().enumerate() {
        let img = read_image(path)?;
        let mut r = rng::derived(config.seed, i as u64);
        let weights = &config.synth.weight_choices;
        let w = weights[r.random_range(0..weights.len())];
        let region = BinaryMask::full(img.width(), img.height());
        let out = crate::synth::insert_anomaly(&img, &region, w, &config.synth.mask, r.random())?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
        save_image(&out.image, &output.join(format!("{stem}_synth.pgm")))?;
        save_image(&out.mask.to_image(), &output.join(format!("{stem}_mask.pgm")))?;
    }
    Ok(paths.len())
}

fn stamp(img: &mut GrayImage, p: Point2D, radius: i64) {
    let (cx, cy) = (p.x.floor() as i64, p.y.floor() as i64);
    for y in cy - radius..=cy + radius {
        for x in cx - radius..=cx + radius {
            if x >= 0 && y >= 0 && (x as usize) < img.width() && (y as usize) < img.height() {
                img.set(x as usize, y as usize, 1.0);
            }
        }
    }
}

fn draw_closed(img: &mut GrayImage, poly: &[Point2D]) {
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        let steps = ((b.x - a.x).abs().max((b.y - a.y).abs()).ceil() as usize).max(1);
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            stamp(img, Point2D::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t), 0);
        }
    }
}

/// File names written by [`run_viz`], in pipeline order.
pub const VIZ_PANELS: [&str; 6] = ["points.pgm", "hull.pgm", "curve.pgm", "mask.pgm", "gamma.pgm", "synth.pgm"];

/// One synthesis over the whole image, saving every intermediate panel.
pub fn run_viz(input: &Path, out_dir: &Path, config: &TrainConfig) -> Result<()> {
    let img = read_image(input)?;
    let mut r = rng::derived(config.seed, 0);
    let weights = &config.synth.weight_choices;
    let w = weights[r.random_range(0..weights.len())];
    let region = BinaryMask::full(img.width(), img.height());
    let spec = MaskSpec::new(region, r.random()).with_params(config.synth.mask.clone());
    let trace = generate_mask_traced(&spec)?;
    let field = gamma_field(&trace.mask, w)?;
    let synth = apply_gamma(&img, &field)?;

    let mut points = img.clone();
    for &p in &trace.points {
        stamp(&mut points, p, 1);
    }
    let mut hull = points.clone();
    draw_closed(&mut hull, &trace.hull);
    let mut curve = points.clone();
    draw_closed(&mut curve, &trace.curve);

    fs::create_dir_all(out_dir)?;
    let panels = [points, hull, curve, trace.mask.to_image(), field.to_display(), synth];
    for (name, panel) in VIZ_PANELS.iter().zip(&panels) {
        save_image(panel, &out_dir.join(name))?;
    }
    Ok(())
}
