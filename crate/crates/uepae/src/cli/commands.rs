//! Subcommand implementations and CSV emission.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical divergence,
//! 4 I/O failure. Outputs are written atomically (temp file + rename).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use super::checkpoint::{load_checkpoint, save_checkpoint};
use super::config_file::ExperimentConfig;
use crate::bounds::{
    achievable_region, converse_region, default_p1_grid, linear_grid, BoundInput, RegionCurve,
};
use crate::codec::train_model_with;
use crate::eval::{estimate_error_probs, evaluate_trial_range, sweep_lambda, ErrorPoint,
    EvalOptions, TrialCounts};
use crate::{Error, Result};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(
    name = "uepae",
    version,
    about = "Train, evaluate, and bound superposition-autoencoder UEP codes over AWGN"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit converse/achievable error-probability region curves as CSV.
    Bounds(BoundsArgs),
    /// Train a codec from a config file and write a checkpoint.
    Train(TrainArgs),
    /// Monte Carlo evaluation of a trained checkpoint.
    Eval(EvalArgs),
    /// Train and evaluate one codec per lambda; emit points plus bounds.
    Sweep(SweepArgs),
}

#[derive(clap::Args)]
struct BoundsArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k1: usize,
    #[arg(long)]
    k2: usize,
    #[arg(long)]
    snr_db: f64,
    #[arg(long, value_enum)]
    region: RegionChoice,
    #[arg(long)]
    out: PathBuf,
    /// Grid resolution (P1 points for the converse, per-axis for the
    /// achievable region).
    #[arg(long, default_value_t = 512)]
    grid: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegionChoice {
    Converse,
    Achievable,
    Both,
}

#[derive(clap::Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    snr_db: f64,
    #[arg(long)]
    max_trials: u64,
    /// Early stop once both classes reach this many errors (0 disables).
    #[arg(long)]
    target_errors: u64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Total shard count; values above 1 evaluate only this shard's trial
    /// range with the stopping rule disabled.
    #[arg(long, default_value_t = 1)]
    shards: u64,
    #[arg(long, default_value_t = 0)]
    shard_id: u64,
    /// Debug switch: transmit with zero noise.
    #[arg(long, default_value_t = false)]
    noiseless: bool,
}

#[derive(clap::Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Inclusive range `start:end:step`, e.g. `0.1:0.9:0.1`.
    #[arg(long)]
    lambdas: String,
    #[arg(long)]
    out: PathBuf,
}

/// Parses arguments from the environment and runs; the binary's whole
/// main.
pub fn run() -> ExitCode {
    crate::configure_threads_from_env();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Bounds(args) => cmd_bounds(args).map(|()| ExitCode::SUCCESS),
        Command::Train(args) => cmd_train(args).map(|()| ExitCode::SUCCESS),
        Command::Eval(args) => cmd_eval(args).map(|()| ExitCode::SUCCESS),
        Command::Sweep(args) => cmd_sweep(args),
    }
}

/// Writes via a sibling temp file and rename, so re-runs replace outputs
/// atomically.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp~");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn region_csv(curves: &[RegionCurve], input: &BoundInput, snr_db: f64, grid: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# uepae bounds v{VERSION}");
    let _ = writeln!(
        s,
        "# n={} k1={} k2={} snr_db={} grid={}",
        input.n, input.k1, input.k2, snr_db, grid
    );
    let _ = writeln!(s, "region,P1,P2");
    for curve in curves {
        for &(p1, p2) in &curve.points {
            let _ = writeln!(s, "{},{p1:e},{p2:e}", curve.kind.name());
        }
    }
    s
}

fn compute_curves(
    input: &BoundInput,
    choice: RegionChoice,
    grid: usize,
) -> Result<Vec<RegionCurve>> {
    let mut curves = Vec::new();
    if matches!(choice, RegionChoice::Converse | RegionChoice::Both) {
        curves.push(converse_region(input, &default_p1_grid(input, grid))?);
    }
    if matches!(choice, RegionChoice::Achievable | RegionChoice::Both) {
        let axis = linear_grid(grid.max(2));
        curves.push(achievable_region(input, &axis, &axis)?);
    }
    Ok(curves)
}

fn cmd_bounds(args: BoundsArgs) -> Result<()> {
    let input = BoundInput::from_db(args.n, args.k1, args.k2, args.snr_db)?;
    let curves = compute_curves(&input, args.region, args.grid)?;
    write_atomic(
        &args.out,
        region_csv(&curves, &input, args.snr_db, args.grid).as_bytes(),
    )?;
    for curve in &curves {
        println!("{}: {} points", curve.kind.name(), curve.points.len());
    }
    Ok(())
}

const EVAL_CSV_HEADER: &str =
    "lambda,gamma_db,trials,errors1,errors2,p1,p2,ci1_lo,ci1_hi,ci2_lo,ci2_hi";

fn eval_csv_row(p: &ErrorPoint) -> String {
    format!(
        "{},{},{},{},{},{:e},{:e},{:e},{:e},{:e},{:e}",
        p.lambda,
        p.gamma_db,
        p.trials,
        p.errors1,
        p.errors2,
        p.p1_hat,
        p.p2_hat,
        p.ci1.0,
        p.ci1.1,
        p.ci2.0,
        p.ci2.1
    )
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut experiment = ExperimentConfig::load(&args.config)?;
    experiment.codec.seed = args.seed;
    let mut log = String::from("epoch,loss,val_loss\n");
    println!("epoch,loss,val_loss");
    let trained = train_model_with::<f32>(&experiment.codec, |rec| {
        println!("{},{},{}", rec.epoch, rec.train_loss, rec.val_loss);
        let _ = writeln!(log, "{},{},{}", rec.epoch, rec.train_loss, rec.val_loss);
    })?;
    save_checkpoint(&args.out, &trained)?;
    write_atomic(&args.out.with_extension("train.csv"), log.as_bytes())?;
    println!(
        "trained {} epochs, best val loss {:.6}; checkpoint: {}",
        trained.history.len(),
        trained
            .history
            .iter()
            .map(|r| r.val_loss)
            .fold(f64::INFINITY, f64::min),
        args.out.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    if args.shards == 0 || args.shard_id >= args.shards {
        return Err(Error::InvalidConfig(format!(
            "shard_id {} out of range for {} shards",
            args.shard_id, args.shards
        )));
    }
    let trained = load_checkpoint(&args.model)?;
    let point = if args.shards == 1 {
        let opts = EvalOptions {
            gamma_db: args.snr_db,
            max_trials: args.max_trials,
            target_errors: args.target_errors,
            seed: args.seed,
            noiseless: args.noiseless,
        };
        estimate_error_probs(&trained.model, &opts)?
    } else {
        // contiguous trial range for this shard; merging shard counts
        // reproduces an unsharded run with the stopping rule disabled
        let per = args.max_trials / args.shards;
        let lo = args.shard_id * per;
        let hi = if args.shard_id == args.shards - 1 {
            args.max_trials
        } else {
            lo + per
        };
        let counts: TrialCounts = evaluate_trial_range(
            &trained.model,
            args.snr_db,
            args.noiseless,
            args.seed,
            lo,
            hi,
        )?;
        ErrorPoint {
            lambda: trained.model.config().lambda,
            gamma_db: args.snr_db,
            trials: counts.trials,
            errors1: counts.errors1,
            errors2: counts.errors2,
            p1_hat: counts.errors1 as f64 / counts.trials as f64,
            p2_hat: counts.errors2 as f64 / counts.trials as f64,
            ci1: crate::eval::wilson_interval(counts.errors1, counts.trials),
            ci2: crate::eval::wilson_interval(counts.errors2, counts.trials),
        }
    };
    let csv = format!("{EVAL_CSV_HEADER}\n{}\n", eval_csv_row(&point));
    write_atomic(&args.out, csv.as_bytes())?;
    println!(
        "P1 = {:.4e} [{:.4e}, {:.4e}], P2 = {:.4e} [{:.4e}, {:.4e}] over {} trials",
        point.p1_hat, point.ci1.0, point.ci1.1, point.p2_hat, point.ci2.0, point.ci2.1,
        point.trials
    );
    Ok(())
}

fn parse_lambda_range(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::InvalidConfig(format!(
            "lambda range `{spec}` must be start:end:step"
        )));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| {
            p.parse::<f64>().map_err(|_| {
                Error::InvalidConfig(format!("cannot parse `{p}` in lambda range"))
            })
        })
        .collect::<Result<_>>()?;
    let (start, end, step) = (nums[0], nums[1], nums[2]);
    if step <= 0.0 || end < start {
        return Err(Error::InvalidConfig(format!(
            "empty lambda range `{spec}`"
        )));
    }
    let count = ((end - start) / step + 1e-9).floor() as usize + 1;
    let lambdas: Vec<f64> = (0..count)
        .map(|i| {
            // keep printable values like 0.30 free of float dust
            let v = start + i as f64 * step;
            (v * 1e9).round() / 1e9
        })
        .collect();
    for &l in &lambdas {
        if !(l > 0.0 && l < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "lambda {l} outside (0, 1)"
            )));
        }
    }
    Ok(lambdas)
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode> {
    let experiment = ExperimentConfig::load(&args.config)?;
    let lambdas = parse_lambda_range(&args.lambdas)?;
    let opts = EvalOptions {
        gamma_db: experiment.gamma_eval_db,
        max_trials: experiment.max_trials,
        target_errors: experiment.target_errors,
        seed: experiment.codec.seed,
        noiseless: false,
    };
    let result = sweep_lambda(&experiment.codec, &lambdas, &opts, |event| {
        println!("{event}");
    })?;

    let mut csv = String::from(EVAL_CSV_HEADER);
    csv.push('\n');
    for point in &result.points {
        csv.push_str(&eval_csv_row(point));
        csv.push('\n');
    }
    write_atomic(&args.out, csv.as_bytes())?;

    // bounds overlay for the same operating point
    let input = BoundInput::from_db(
        experiment.codec.n,
        experiment.codec.k1,
        experiment.codec.k2,
        experiment.gamma_eval_db,
    )?;
    let conv = converse_region(&input, &default_p1_grid(&input, experiment.converse_grid))?;
    let axis = linear_grid(experiment.achievable_grid);
    let achv = achievable_region(&input, &axis, &axis)?;
    let overlay = region_csv(
        &[conv, achv],
        &input,
        experiment.gamma_eval_db,
        experiment.converse_grid,
    );
    let bounds_path = sweep_bounds_path(&args.out);
    write_atomic(&bounds_path, overlay.as_bytes())?;
    println!(
        "{} points -> {}; bounds overlay -> {}",
        result.points.len(),
        args.out.display(),
        bounds_path.display()
    );

    for (lambda, diag) in &result.failures {
        eprintln!("lambda {lambda} failed: {diag}");
    }
    if result.failures.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        // partial success: divergence exit code, outputs still written
        Ok(ExitCode::from(3))
    }
}

/// `sweep.csv` -> `sweep.bounds.csv` next to it.
fn sweep_bounds_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().unwrap_or_default().to_string_lossy();
    out.with_file_name(format!("{stem}.bounds.csv"))
}
