//! Pipeline driver: simulate datasets, calibrate/invert PSD features, train
//! the conditional model, and run the evaluation, sensitivity, and
//! embedding-statistics experiments. Every seeded subcommand is
//! bit-reproducible: identical invocations write byte-identical files.
//!
//! Exit codes: 0 success, 1 validation error (bad flags, config, or input
//! files), 2 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use bcgan::config::Config;
use bcgan::conditioning::{Conditioning, StrategyKind, DEFAULT_EMBEDDING_DIM};
use bcgan::dataset::{
    generate_dataset, load_dataset, temperature_grid, DatasetConfig, EPSILON_TEMPERATURE,
};
use bcgan::eval::{run_evaluation_sweep, run_sensitivity};
use bcgan::gan::{encode_loss_log, LossKind, LossLog, TrainConfig, Trainer};
use bcgan::image::read_pgm;
use bcgan::ising::critical_temperature;
use bcgan::nn::AdamConfig;
use bcgan::psd::{build_response_map, loglog_fit_range, power_spectrum, radial_average, ResponseMap};
use bcgan::rng::Rng;
use bcgan::stats::{boxplot_stats, dead_fraction, encode_stats_csv, sweep_activations};
use bcgan::Error;

#[derive(Parser)]
#[command(name = "bcgan", version, about = "Ising microstructure synthesis pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled Ising microstructure dataset (PGM images + manifest)
    Simulate(SimulateArgs),
    /// PSD feature tools
    #[command(subcommand)]
    Features(FeaturesCommand),
    /// Train the conditional generator/discriminator pair
    Train(TrainArgs),
    /// Conditioning sweep: generate, fingerprint, invert, aggregate
    Evaluate(EvaluateArgs),
    /// Label-sensitivity experiment with diff-map images
    Sensitivity(SensitivityArgs),
    /// Embedding activity statistics and dead-neuron fraction
    EmbedStats(EmbedStatsArgs),
}

#[derive(Subcommand)]
enum FeaturesCommand {
    /// Build the temperature -> (slope, intercept) response map from a dataset
    Calibrate(CalibrateArgs),
    /// Invert a fingerprint (or an image) back to a temperature estimate
    Invert(InvertArgs),
}

/// Flags shared by every subcommand. Config-file keys use the flag names
/// with underscores (e.g. `per_temp = 8`); explicit flags win over the file.
#[derive(Args)]
struct Common {
    /// Flat key = value config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed for all derived random streams
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Output dataset directory
    #[arg(long)]
    out: PathBuf,
    /// Number of temperatures on the uniform grid over [0.01, 2*T_c]
    #[arg(long)]
    temps: Option<usize>,
    /// Images per temperature
    #[arg(long)]
    per_temp: Option<usize>,
    /// Lattice side length
    #[arg(long)]
    size: Option<usize>,
    /// Metropolis steps per simulation (default n^3)
    #[arg(long)]
    max_steps: Option<u64>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    common: Common,
    /// Dataset directory (images + manifest.csv)
    #[arg(long)]
    dataset: PathBuf,
    /// Output response-map CSV
    #[arg(long)]
    out: PathBuf,
    /// Lower fit-range bound on the radial wavenumber
    #[arg(long)]
    kmin: Option<f64>,
    /// Upper fit-range bound on the radial wavenumber
    #[arg(long)]
    kmax: Option<f64>,
}

#[derive(Args)]
struct InvertArgs {
    #[command(flatten)]
    common: Common,
    /// Response-map CSV from `features calibrate`
    #[arg(long)]
    map: PathBuf,
    /// PGM image to fingerprint and invert
    #[arg(long, conflicts_with_all = ["slope", "intercept"])]
    image: Option<PathBuf>,
    /// Fingerprint slope (with --intercept, instead of --image)
    #[arg(long, requires = "intercept", allow_negative_numbers = true)]
    slope: Option<f64>,
    /// Fingerprint intercept
    #[arg(long, requires = "slope", allow_negative_numbers = true)]
    intercept: Option<f64>,
    #[arg(long)]
    kmin: Option<f64>,
    #[arg(long)]
    kmax: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Dataset directory to train on
    #[arg(long)]
    dataset: PathBuf,
    /// Output checkpoint path
    #[arg(long)]
    out: PathBuf,
    /// Loss-log CSV path (step,d_loss,g_loss)
    #[arg(long)]
    loss_log: Option<PathBuf>,
    /// Resume from an existing checkpoint instead of a fresh init
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Total training steps (resume continues toward this target)
    #[arg(long)]
    steps: Option<u64>,
    /// Conditioning strategy: class-bin | normalized-scalar | binary-bits
    #[arg(long)]
    strategy: Option<String>,
    /// Loss: hinge | bce
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    noise_dim: Option<usize>,
    #[arg(long)]
    embedding_dim: Option<usize>,
    #[arg(long)]
    hidden_g: Option<usize>,
    #[arg(long)]
    hidden_d: Option<usize>,
    #[arg(long)]
    d_steps_per_g: Option<usize>,
    #[arg(long)]
    lr: Option<f32>,
    #[arg(long)]
    beta1: Option<f32>,
    #[arg(long)]
    beta2: Option<f32>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    /// Trained checkpoint
    #[arg(long)]
    checkpoint: PathBuf,
    /// Response-map CSV for inversion
    #[arg(long)]
    map: PathBuf,
    /// Output report CSV
    #[arg(long)]
    out: PathBuf,
    /// Number of conditioning temperatures on the sweep grid
    #[arg(long)]
    temps: Option<usize>,
    /// Generated samples per temperature
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args)]
struct SensitivityArgs {
    #[command(flatten)]
    common: Common,
    /// Trained checkpoint
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output directory for the report CSV and diff images
    #[arg(long)]
    out_dir: PathBuf,
    /// Base conditioning temperature (default T_c)
    #[arg(long)]
    base_temp: Option<f32>,
    /// Comma-separated label perturbations
    #[arg(long)]
    epsilons: Option<String>,
    /// Number of fixed-noise seeds
    #[arg(long)]
    noise_seeds: Option<usize>,
}

#[derive(Args)]
struct EmbedStatsArgs {
    #[command(flatten)]
    common: Common,
    /// Read the trained generator-side embedder from this checkpoint
    #[arg(long, conflicts_with = "strategy")]
    checkpoint: Option<PathBuf>,
    /// Sweep a freshly initialized strategy instead of a checkpoint
    #[arg(long)]
    strategy: Option<String>,
    /// Embedding dim for --strategy (ignored with --checkpoint)
    #[arg(long)]
    embedding_dim: Option<usize>,
    /// Sweep samples over the working range
    #[arg(long)]
    samples: Option<usize>,
    /// Dead-neuron range tolerance
    #[arg(long)]
    tau: Option<f64>,
    /// Output per-neuron stats CSV
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 1 for anything the user can fix in flags, config, or input files;
/// 2 for failures of the run itself.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::InvalidTemperature(_)
        | Error::TemperatureOutOfRange(..)
        | Error::NonFiniteFloat(_)
        | Error::PgmFormat(_)
        | Error::ManifestFormat(_)
        | Error::CheckpointFormat(_)
        | Error::CheckpointVersion { .. }
        | Error::InsufficientCalibration
        | Error::DegenerateMap => 1,
        _ => 2,
    }
}

/// Flag value if given, else config-file key, else default.
fn resolve<T>(flag: Option<T>, cfg: &Option<Config>, key: &str, default: T) -> Result<T, Error>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    if let Some(v) = flag {
        return Ok(v);
    }
    if let Some(cfg) = cfg {
        if let Some(v) = cfg.get_parsed::<T>(key)? {
            return Ok(v);
        }
    }
    Ok(default)
}

fn load_config(common: &Common) -> Result<Option<Config>, Error> {
    common.config.as_deref().map(Config::load).transpose()
}

/// Like [`resolve`], for settings with no default (absent means "off").
fn resolve_opt<T>(flag: Option<T>, cfg: &Option<Config>, key: &str) -> Result<Option<T>, Error>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    if flag.is_some() {
        return Ok(flag);
    }
    match cfg {
        Some(cfg) => cfg.get_parsed::<T>(key),
        None => Ok(None),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Features(FeaturesCommand::Calibrate(args)) => calibrate(args),
        Command::Features(FeaturesCommand::Invert(args)) => invert(args),
        Command::Train(args) => train(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Sensitivity(args) => sensitivity(args),
        Command::EmbedStats(args) => embed_stats(args),
    }
}

fn simulate(args: SimulateArgs) -> Result<(), Error> {
    let cfg = load_config(&args.common)?;
    let temps = resolve(args.temps, &cfg, "temps", 16)?;
    let per_temp = resolve(args.per_temp, &cfg, "per_temp", 4)?;
    let n = resolve(args.size, &cfg, "size", 32)?;
    let seed = resolve(args.common.seed, &cfg, "seed", 0)?;
    let max_steps = resolve_opt(args.max_steps, &cfg, "max_steps")?;
    let config = DatasetConfig {
        temperatures: temperature_grid(temps, EPSILON_TEMPERATURE),
        per_temperature: per_temp,
        n,
        base_seed: seed,
        max_steps,
    };
    let manifest = generate_dataset(&config, &args.out)?;
    println!(
        "wrote {} images ({} temps x {} each, n = {}) to {}",
        manifest.entries.len(),
        temps,
        per_temp,
        n,
        args.out.display()
    );
    Ok(())
}

/// Fingerprint every dataset image. Constant images (fully saturated
/// low-temperature lattices) have zero spectral power and are skipped;
/// returns the fingerprints plus the skipped count.
fn fingerprints(
    dir: &Path,
    kmin: Option<f64>,
    kmax: Option<f64>,
) -> Result<(Vec<(f32, bcgan::psd::PsdParams)>, usize), Error> {
    let ds = load_dataset(dir)?;
    let mut out = Vec::with_capacity(ds.images.len());
    let mut skipped = 0;
    for (img, &t) in ds.images.iter().zip(&ds.labels) {
        let spectrum = power_spectrum(img)?;
        let curve = radial_average(&spectrum, img.n())?;
        match loglog_fit_range(&curve, kmin, kmax) {
            Ok(p) => out.push((t, p)),
            Err(Error::TooFewFitPoints(_)) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((out, skipped))
}

fn calibrate(args: CalibrateArgs) -> Result<(), Error> {
    let cfg = load_config(&args.common)?;
    let kmin = resolve_opt(args.kmin, &cfg, "kmin")?;
    let kmax = resolve_opt(args.kmax, &cfg, "kmax")?;
    let (mut samples, skipped) = fingerprints(&args.dataset, kmin, kmax)?;
    // a temperature left with fewer than two fingerprints cannot be a knot
    let counts = |s: &[(f32, bcgan::psd::PsdParams)], t: f32| {
        s.iter().filter(|(st, _)| *st == t).count()
    };
    let thin: Vec<f32> = samples
        .iter()
        .map(|&(t, _)| t)
        .filter(|&t| counts(&samples, t) < 2)
        .collect();
    samples.retain(|(t, _)| !thin.contains(t));
    let map = build_response_map(&samples)?;
    map.write_csv(&args.out)?;
    if skipped > 0 {
        eprintln!("skipped {skipped} constant images with no fingerprint");
    }
    println!(
        "calibrated {} knots over [{}, {}] -> {}",
        map.temperatures.len(),
        map.temperatures.first().unwrap(),
        map.temperatures.last().unwrap(),
        args.out.display()
    );
    Ok(())
}

fn invert(args: InvertArgs) -> Result<(), Error> {
    let map = ResponseMap::read_csv(&args.map)?;
    let params = match (&args.image, args.slope, args.intercept) {
        (Some(path), None, None) => {
            let img = read_pgm(path)?;
            let spectrum = power_spectrum(&img)?;
            let curve = radial_average(&spectrum, img.n())?;
            loglog_fit_range(&curve, args.kmin, args.kmax)?
        }
        (None, Some(slope), Some(intercept)) => bcgan::psd::PsdParams { slope, intercept },
        _ => {
            return Err(Error::Config(
                "provide either --image or both --slope and --intercept".into(),
            ))
        }
    };
    let t_hat = map.invert_temperature(params)?;
    println!("slope = {}, intercept = {}, t_hat = {t_hat}", params.slope, params.intercept);
    Ok(())
}

fn train(args: TrainArgs) -> Result<(), Error> {
    let cfg = load_config(&args.common)?;
    let defaults = TrainConfig::default();
    let strategy = resolve(args.strategy, &cfg, "strategy", defaults.strategy.to_string())?
        .parse::<StrategyKind>()?;
    let loss = match resolve(args.loss, &cfg, "loss", "hinge".into())?.as_str() {
        "hinge" => LossKind::Hinge,
        "bce" => LossKind::Bce,
        other => return Err(Error::Config(format!("unknown loss {other:?}"))),
    };
    let data = bcgan::gan::TrainData::from_dataset(&load_dataset(&args.dataset)?);
    let config = TrainConfig {
        image_size: data.n,
        noise_dim: resolve(args.noise_dim, &cfg, "noise_dim", defaults.noise_dim)?,
        embedding_dim: resolve(args.embedding_dim, &cfg, "embedding_dim", defaults.embedding_dim)?,
        hidden_g: resolve(args.hidden_g, &cfg, "hidden_g", defaults.hidden_g)?,
        hidden_d: resolve(args.hidden_d, &cfg, "hidden_d", defaults.hidden_d)?,
        batch_size: resolve(args.batch_size, &cfg, "batch_size", defaults.batch_size)?,
        steps: resolve(args.steps, &cfg, "steps", defaults.steps)?,
        d_steps_per_g: resolve(args.d_steps_per_g, &cfg, "d_steps_per_g", defaults.d_steps_per_g)?,
        strategy,
        loss,
        adam: AdamConfig {
            lr: resolve(args.lr, &cfg, "lr", defaults.adam.lr)?,
            beta1: resolve(args.beta1, &cfg, "beta1", defaults.adam.beta1)?,
            beta2: resolve(args.beta2, &cfg, "beta2", defaults.adam.beta2)?,
            ..defaults.adam
        },
        seed: resolve(args.common.seed, &cfg, "seed", defaults.seed)?,
    };
    let target_steps = config.steps;
    let mut trainer = match &args.resume {
        Some(path) => Trainer::load(path)?,
        None => Trainer::new(config)?,
    };
    let mut log: LossLog = Vec::new();
    trainer.train_until(&data, target_steps, &mut log)?;
    trainer.save(&args.out)?;
    if let Some(path) = &args.loss_log {
        std::fs::write(path, encode_loss_log(&log))?;
    }
    let (d, g) = log.last().map(|&(_, d, g)| (d, g)).unwrap_or((f32::NAN, f32::NAN));
    println!(
        "trained {} -> step {} (d_loss = {d}, g_loss = {g}), checkpoint {}",
        trainer.config.strategy,
        trainer.step,
        args.out.display()
    );
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<(), Error> {
    let cfg = load_config(&args.common)?;
    let temps = resolve(args.temps, &cfg, "temps", 16)?;
    let samples = resolve(args.samples, &cfg, "samples", 100)?;
    let seed = resolve(args.common.seed, &cfg, "seed", 0)?;
    let trainer = Trainer::load(&args.checkpoint)?;
    let map = ResponseMap::read_csv(&args.map)?;
    let grid = temperature_grid(temps, EPSILON_TEMPERATURE);
    let report = run_evaluation_sweep(&trainer.generator, &map, &grid, samples, seed)?;
    std::fs::write(&args.out, report.encode_csv())?;
    println!(
        "evaluated {} temps x {} samples, correlation(T, t_hat) = {:.4} -> {}",
        temps,
        samples,
        report.conditioning_correlation(),
        args.out.display()
    );
    Ok(())
}

fn sensitivity(args: SensitivityArgs) -> Result<(), Error> {
    let cfg = load_config(&args.common)?;
    let base_temp = resolve(args.base_temp, &cfg, "base_temp", critical_temperature() as f32)?;
    let noise_seeds = resolve(args.noise_seeds, &cfg, "noise_seeds", 16)?;
    let seed = resolve(args.common.seed, &cfg, "seed", 0)?;
    let eps_spec = resolve(args.epsilons, &cfg, "epsilons", "1e-6,1e-3,1e-1".into())?;
    let epsilons: Vec<f32> = eps_spec
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f32>()
                .map_err(|e| Error::Config(format!("bad epsilon {s:?}: {e}")))
        })
        .collect::<Result<_, _>>()?;
    let trainer = Trainer::load(&args.checkpoint)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let report = run_sensitivity(
        &trainer.generator,
        base_temp,
        &epsilons,
        noise_seeds,
        seed,
        Some(&args.out_dir),
    )?;
    std::fs::write(args.out_dir.join("sensitivity.csv"), report.encode_csv())?;
    for &eps in &epsilons {
        println!(
            "eps = {eps:e}: mean changed fraction = {:.6}",
            report.mean_changed_fraction(eps)
        );
    }
    println!("{} diff images -> {}", report.diff_image_paths.len(), args.out_dir.display());
    Ok(())
}

fn embed_stats(args: EmbedStatsArgs) -> Result<(), Error> {
    let cfg = load_config(&args.common)?;
    let samples = resolve(args.samples, &cfg, "samples", 1000)?;
    let tau = resolve(args.tau, &cfg, "tau", bcgan::stats::DEFAULT_DEAD_TOLERANCE)?;
    let strategy = match (&args.checkpoint, &args.strategy) {
        (Some(path), None) => Trainer::load(path)?.generator.conditioning,
        (None, spec) => {
            let kind = spec
                .as_deref()
                .unwrap_or("binary-bits")
                .parse::<StrategyKind>()?;
            let dim = resolve(args.embedding_dim, &cfg, "embedding_dim", DEFAULT_EMBEDDING_DIM)?;
            let seed = resolve(args.common.seed, &cfg, "seed", 0)?;
            Conditioning::init(kind, dim, &mut Rng::seed_from_u64(seed))
        }
        _ => unreachable!("clap conflicts_with"),
    };
    let matrix = sweep_activations(&strategy, samples)?;
    let stats = boxplot_stats(&matrix)?;
    std::fs::write(&args.out, encode_stats_csv(&stats, &matrix, tau))?;
    println!(
        "{}: dead fraction = {} at tau = {tau} ({} neurons x {} samples) -> {}",
        strategy.kind(),
        dead_fraction(&matrix, tau),
        matrix.neurons,
        matrix.samples,
        args.out.display()
    );
    Ok(())
}
