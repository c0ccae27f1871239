//! Command-line front end.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bandit::{write_decision_log, PriorSpec};
use crate::config::FileConfig;
use crate::env::{
    impute_effect_sizes, population_effect_stats, read_models_file, write_models_file, ModelRecord,
    PopulationEffectStats,
};
use crate::error::{Error, Result};
use crate::fit::{fit_user_model, load_sessions, user_observations, ColumnMap, FitConfig};
use crate::sim::{
    mean_cumulative_quality, percentile25_cumulative_quality, run_trial, stream_rng,
    write_user_summary,
};
use crate::sweep::{emit_all_heatmaps, read_trials, run_sweep, write_outputs, Criterion, TRIALS_FILE};
use crate::synthetic::synthetic_pool;

macro_rules! say {
    ($quiet:expr, $($arg:tt)*) => {
        if !$quiet {
            println!($($arg)*);
        }
    };
}

#[derive(Debug, Parser)]
#[command(
    name = "brushbandit",
    version,
    about = "Fit brushing environments, simulate bandit studies and sweep the burden-cost weights"
)]
struct Cli {
    /// Master seed for every random draw (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Suppress the summary lines normally printed to stdout.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one zero-inflated Poisson model per user from a session CSV.
    FitEnv {
        /// Session CSV with user, day, time of day, brushing and pressure durations.
        csv: PathBuf,
        /// Column names as key=column pairs, e.g.
        /// "user_id=uid,day=day,time_of_day=tod,duration=brush,pressure=press,weekend=we".
        #[arg(long)]
        column_map: Option<String>,
        /// Optimizer restarts per user (the first starts from zero).
        #[arg(long, default_value_t = 50)]
        restarts: usize,
        /// BFGS iterations per restart.
        #[arg(long, default_value_t = 1000)]
        max_iterations: usize,
        /// Output model file.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Attach per-user treatment effect sizes to a model file.
    ImputeEffects {
        /// Model file written by fit-env.
        models: PathBuf,
        /// Use the published population statistics instead of estimating them
        /// from the models.
        #[arg(long)]
        default_stats: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Simulate one study and print a summary line.
    RunStudy {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        xi1: Option<f64>,
        #[arg(long)]
        xi2: Option<f64>,
        /// Habituation shrink factor.
        #[arg(long = "E", visible_alias = "e")]
        e: Option<f64>,
        /// Replicate index; distinct trials use independent random streams.
        #[arg(long, default_value_t = 0)]
        trial: u64,
        /// Directory for decisions.csv and users.csv.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the Monte Carlo grid sweep and write per-trial values and heatmaps.
    Sweep {
        #[command(flatten)]
        inputs: Inputs,
        /// Override the number of trials per cell.
        #[arg(long)]
        trials: Option<usize>,
        /// Worker threads.
        #[arg(long)]
        workers: Option<usize>,
        /// Seed every cell independently instead of sharing per-trial seeds.
        #[arg(long)]
        no_common_random_numbers: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Re-emit heatmap CSVs and SVGs from a sweep directory's trials.csv.
    Report {
        dir: PathBuf,
    },
}

#[derive(Debug, Args)]
struct Inputs {
    /// TOML config (see the config module docs for the schema).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model file; required unless --synthetic is given.
    #[arg(long, required_unless_present = "synthetic")]
    models: Option<PathBuf>,
    /// Use the built-in 13-model synthetic pool.
    #[arg(long, conflicts_with = "models")]
    synthetic: bool,
}

impl Inputs {
    fn file_config(&self) -> Result<FileConfig> {
        match &self.config {
            Some(p) => FileConfig::load(p),
            None => Ok(FileConfig::default()),
        }
    }

    fn pool(&self, seed: u64) -> Result<Vec<ModelRecord>> {
        match &self.models {
            Some(p) => {
                let pool = read_models_file(p)?;
                if pool.is_empty() {
                    return Err(Error::InsufficientData(format!(
                        "{} contains no models",
                        p.display()
                    )));
                }
                Ok(pool)
            }
            None => Ok(synthetic_pool(seed)),
        }
    }
}

/// Parse `argv` (including the program name) and run; returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            1
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let quiet = cli.quiet;
    match cli.command {
        Command::FitEnv {
            csv,
            column_map,
            restarts,
            max_iterations,
            output,
        } => fit_env(&csv, column_map, restarts, max_iterations, cli.seed.unwrap_or(0), &output, quiet),
        Command::ImputeEffects {
            models,
            default_stats,
            output,
        } => impute_effects(&models, default_stats, cli.seed.unwrap_or(0), &output, quiet),
        Command::RunStudy {
            inputs,
            xi1,
            xi2,
            e,
            trial,
            output,
        } => {
            let mut study = inputs.file_config()?.study_config()?;
            if let Some(seed) = cli.seed {
                study.master_seed = seed;
            }
            if let Some(x) = xi1 {
                study.cost_params.xi1 = x;
            }
            if let Some(x) = xi2 {
                study.cost_params.xi2 = x;
            }
            if let Some(e) = e {
                study.effect_shrink = e;
            }
            let pool = inputs.pool(study.master_seed)?;
            let result = run_trial(&study, &pool, &PriorSpec::default(), trial)?;
            say!(quiet, 
                "users={} decisions={} mean_quality={} mean_surrogate_reward={} mean_cumulative_quality={} p25_cumulative_quality={} send_rate={}",
                result.users.len(),
                result.log.len(),
                result.mean_quality(),
                result.mean_surrogate_reward(),
                mean_cumulative_quality(&result),
                percentile25_cumulative_quality(&result),
                result.send_rate(),
            );
            if let Some(dir) = output {
                fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                write_decision_log(create(&dir.join("decisions.csv"))?, &result.log)?;
                write_user_summary(create(&dir.join("users.csv"))?, &result)?;
            }
            Ok(())
        }
        Command::Sweep {
            inputs,
            trials,
            workers,
            no_common_random_numbers,
            output,
        } => {
            let mut sweep = inputs.file_config()?.sweep_config()?;
            if let Some(seed) = cli.seed {
                sweep.study.master_seed = seed;
            }
            if let Some(t) = trials {
                sweep.mc_trials = t;
            }
            if workers.is_some() {
                sweep.workers = workers;
            }
            if no_common_random_numbers {
                sweep.common_random_numbers = false;
            }
            let pool = inputs.pool(sweep.study.master_seed)?;
            let result = run_sweep(&sweep, &pool, &PriorSpec::default())?;
            let paths = write_outputs(&result, &output)?;
            print_argmax(&result, quiet);
            say!(quiet, "wrote {} files to {}", paths.len(), output.display());
            Ok(())
        }
        Command::Report { dir } => {
            let result = read_trials(&dir.join(TRIALS_FILE))?;
            let paths = emit_all_heatmaps(&result, &dir)?;
            print_argmax(&result, quiet);
            say!(quiet, "wrote {} files to {}", paths.len(), dir.display());
            Ok(())
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn print_argmax(result: &crate::sweep::SweepResult, quiet: bool) {
    for &e in &result.e_values {
        for c in Criterion::ALL {
            if let Some((xi1, xi2)) = result.argmax(e, c) {
                let est = result.cell(e, xi1, xi2).expect("argmax cell").estimate(c);
                say!(quiet, 
                    "E={e} criterion={} best xi1={xi1} xi2={xi2} mean={} se={}",
                    c.slug(),
                    est.mean,
                    est.std_error
                );
            }
        }
    }
}

fn fit_env(
    csv: &Path,
    column_map: Option<String>,
    restarts: usize,
    max_iterations: usize,
    seed: u64,
    output: &Path,
    quiet: bool,
) -> Result<()> {
    let columns = match column_map {
        Some(s) => s.parse()?,
        None => ColumnMap::default(),
    };
    let users = load_sessions(csv, &columns)?;
    if users.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no sessions parsed from {}",
            csv.display()
        )));
    }
    let config = FitConfig {
        restarts,
        max_iterations,
        ..FitConfig::default()
    };
    let mut records = Vec::with_capacity(users.len());
    for (i, (id, sessions)) in users.iter().enumerate() {
        let obs = user_observations(sessions);
        let mut rng = stream_rng(seed, 0, i as u64);
        let fit = fit_user_model(&obs, &config, &mut rng).map_err(|e| {
            Error::InvalidArgument(format!("fitting user {id:?}: {e}"))
        })?;
        say!(quiet, 
            "user={id} sessions={} log_posterior={} converged_restarts={}/{}",
            obs.len(),
            fit.log_posterior,
            fit.converged_restarts,
            restarts
        );
        records.push(ModelRecord {
            id: id.clone(),
            w_b: fit.w_b,
            w_p: fit.w_p,
            effects: None,
        });
    }
    write_models_file(output, &records)?;
    Ok(())
}

fn impute_effects(
    models: &Path,
    default_stats: bool,
    seed: u64,
    output: &Path,
    quiet: bool,
) -> Result<()> {
    let mut records = read_models_file(models)?;
    let stats = if default_stats {
        PopulationEffectStats::default()
    } else {
        let weights: Vec<_> = records.iter().map(|r| (r.w_b, r.w_p)).collect();
        population_effect_stats(&weights)?
    };
    say!(quiet, 
        "delta_b={} delta_n={} sigma_b={} sigma_n={}",
        stats.delta_b_mean, stats.delta_n_mean, stats.sigma_b, stats.sigma_n
    );
    let mut rng = stream_rng(seed, 0, 0);
    for r in &mut records {
        r.effects = Some(impute_effect_sizes(&stats, &mut rng)?);
    }
    write_models_file(output, &records)
}
