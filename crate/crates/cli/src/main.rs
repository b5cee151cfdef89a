use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use latent_rom::commands::{self, EvaluateOptions};
use latent_rom::greedy::{AxisSpec, GridSpec};
use latent_rom::Error;

#[derive(Parser)]
#[command(name = "latent-rom", version, about = "Latent-space ROM for parametric 1D Burgers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the full-order model and write the snapshot matrix.
    Fom {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        a: f64,
        #[arg(long, allow_hyphen_values = true)]
        w: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train with greedy sampling; writes checkpoints and report.jsonl.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sampled prediction at one parameter.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        a: f64,
        #[arg(long, allow_hyphen_values = true)]
        w: f64,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Error and standard-deviation heatmaps over a parameter grid.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Directory of cached FOM solutions.
        #[arg(long)]
        fom_cache: PathBuf,
        /// Grid as `a_min,a_max,n_a,w_min,w_max,n_w`; defaults to the training grid.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fail instead of solving FOM points missing from the cache.
        #[arg(long)]
        no_solve: bool,
    },
    /// Time the FOM against the mean-coefficient ROM path.
    Bench {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        a: f64,
        #[arg(long, allow_hyphen_values = true)]
        w: f64,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
}

fn parse_grid(s: &str) -> Result<GridSpec, Error> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || Error::Config(format!("bad grid spec {s:?}; expected a_min,a_max,n_a,w_min,w_max,n_w"));
    if parts.len() != 6 {
        return Err(bad());
    }
    let f = |i: usize| parts[i].parse::<f64>().map_err(|_| bad());
    let n = |i: usize| parts[i].parse::<usize>().map_err(|_| bad());
    Ok(GridSpec {
        a: AxisSpec { min: f(0)?, max: f(1)?, count: n(2)? },
        w: AxisSpec { min: f(3)?, max: f(4)?, count: n(5)? },
        initial: None,
    })
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Fom { config, a, w, out } => {
            let u = commands::cmd_fom(&config, a, w, &out)?;
            println!("wrote {} ({} x {})", out.display(), u.nrows(), u.ncols());
        }
        Command::Train { config, out, seed } => {
            let report = commands::cmd_train(&config, &out, seed)?;
            println!(
                "{} epochs, {} acquisitions, {} training points; final loss {:.6e}",
                report.history.len(),
                report.acquisitions.len(),
                report.sampled.len(),
                report.history.last().map_or(f64::NAN, |r| r.loss.total)
            );
        }
        Command::Predict { checkpoint, a, w, samples, seed, out } => {
            let p = commands::cmd_predict(&checkpoint, a, w, samples, seed, &out)?;
            let max_std = p.variance.iter().fold(0.0f64, |m, &v| m.max(v)).sqrt();
            println!("wrote {}; max std {max_std:.4e}, {} diverged samples", out.display(), p.diverged);
        }
        Command::Evaluate { checkpoint, out, fom_cache, grid, samples, seed, no_solve } => {
            let grid = grid.as_deref().map(parse_grid).transpose()?;
            let opts = EvaluateOptions {
                grid,
                cache_dir: fom_cache,
                out_dir: out.clone(),
                n_samples: samples,
                seed,
                no_solve,
            };
            let ev = commands::cmd_evaluate(&checkpoint, &opts)?;
            let grid = latent_rom::greedy::ParamGrid::new(ev.summary.a_values.clone(), ev.summary.w_values.clone())?;
            print!("{}", commands::render_heatmap(&ev.error, &grid, &ev.summary.training_points));
            println!(
                "worst error {:.3}% at grid index {}, median {:.3}%, max std {:.4e}",
                ev.summary.worst_error_percent, ev.summary.worst_index, ev.summary.median_error_percent, ev.summary.max_std
            );
        }
        Command::Bench { checkpoint, a, w, repeats } => {
            let r = commands::cmd_bench(&checkpoint, a, w, repeats)?;
            println!(
                "fom {:.6} s, rom {:.6} s, speedup {:.1}x (median of {})",
                r.fom_seconds, r.rom_seconds, r.speedup, r.repeats
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 1 } else { 2 })
        }
    }
}
