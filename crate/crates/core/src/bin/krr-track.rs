use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use krr_track::acquisition::{read_dataset_csv, Pairing};
use krr_track::config::{Experiment, ExperimentConfig};
use krr_track::error::{Error, Result};
use krr_track::krr::{Dataset, KrrModel};
use krr_track::pipeline::{self, Variant};

/// Learning-based tracking control with kernel ridge regression.
#[derive(Parser)]
#[command(name = "krr-track", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment configuration (JSON). Defaults to the built-in reproduction setup.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run data acquisition and write the dataset CSV plus a JSON sidecar.
    Collect {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Pair each auxiliary state with the same-index target instead of the next one.
        #[arg(long)]
        strict_paper_pairing: bool,
    },
    /// Fit a KRR model to a dataset.
    Train {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthesize gains and print the stability certificate as JSON.
    Analyze {
        #[command(flatten)]
        cfg: ConfigArg,
        /// Trained model; the zero-data model is used when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        grid_per_dim: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run closed-loop simulations and write traces with summaries.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArg,
        /// Runs the learning variant with this model.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Runs the variant without a learned model.
        #[arg(long)]
        no_learning: bool,
        /// Runs the exact-cancellation baseline.
        #[arg(long)]
        exact: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        grid_per_dim: Option<usize>,
    },
    /// Run the full experiment and write the artifact bundle.
    ReproducePaper {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        grid_per_dim: Option<usize>,
    },
}

fn load_experiment(arg: &ConfigArg) -> Result<Experiment> {
    let config = match &arg.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::paper(),
    };
    config.resolve()
}

fn load_model(path: &Path) -> Result<KrrModel> {
    KrrModel::load(path)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(|e| Error::io(path, e))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Collect {
            cfg,
            out,
            seed,
            strict_paper_pairing,
        } => {
            let exp = load_experiment(&cfg)?;
            let seed = seed.unwrap_or(exp.config.acquisition.seed);
            let pairing = if strict_paper_pairing {
                Pairing::Literal
            } else {
                exp.config.acquisition.pairing
            };
            let (collection, sidecar) = pipeline::collect(&exp, seed, pairing)?;
            pipeline::write_collection(&out, &collection, &sidecar)?;
            println!(
                "samples N = {}, w_bar = {}, episodes = {}",
                collection.dataset.len(),
                exp.w_bar,
                collection.episodes.len()
            );
        }
        Command::Train { cfg, dataset, out } => {
            let exp = load_experiment(&cfg)?;
            let data: Dataset = read_dataset_csv(&dataset, exp.plant.order, exp.w_bar)?;
            let model = pipeline::train(&exp, &data)?;
            model.save(&out)?;
            println!(
                "samples N = {}, beta = {}, fit residual = {:e}",
                model.len(),
                model.beta(),
                model.fit_residual()
            );
        }
        Command::Analyze {
            cfg,
            model,
            grid_per_dim,
            out,
        } => {
            let exp = load_experiment(&cfg)?;
            let model = match model {
                Some(p) => load_model(&p)?,
                None => pipeline::train(&exp, &Dataset::empty(exp.plant.order, exp.w_bar)?)?,
            };
            let report = pipeline::analyze(&exp, &model, grid_per_dim.unwrap_or(exp.config.grid_per_dim))?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if let Some(out) = out {
                write_json(&out, &report)?;
            }
        }
        Command::Simulate {
            cfg,
            model,
            no_learning,
            exact,
            out,
            seed,
            steps,
            grid_per_dim,
        } => {
            let exp = load_experiment(&cfg)?;
            let model = model.as_deref().map(load_model).transpose()?;
            let mut variants = Vec::new();
            if no_learning {
                variants.push(Variant::WithoutKrr);
            }
            if model.is_some() {
                variants.push(Variant::WithKrr);
            }
            if exact {
                variants.push(Variant::Exact);
            }
            if variants.is_empty() {
                return Err(Error::Config {
                    field: "--model/--no-learning/--exact".into(),
                    message: "select at least one variant".into(),
                });
            }
            let steps = steps.unwrap_or(exp.config.simulation.steps);
            if steps == 0 {
                return Err(Error::Config {
                    field: "--steps".into(),
                    message: "must be at least 1".into(),
                });
            }
            let seeds = seed.map_or_else(|| exp.config.simulation.seeds.clone(), |s| vec![s]);
            let bound = match &model {
                Some(m) => {
                    pipeline::analyze(&exp, m, grid_per_dim.unwrap_or(exp.config.grid_per_dim))?
                        .certificate
                        .tracking_bound
                }
                None => None,
            };
            create_dir(&out)?;
            let window = exp.config.simulation.steady_window_steps;
            let mut faulted = None;
            for &variant in &variants {
                for &s in &seeds {
                    let trace = pipeline::simulate(&exp, variant, model.as_ref(), s, steps)?;
                    let summary = trace.summarize(window, bound);
                    pipeline::write_trace(&out, &trace, &summary)?;
                    println!(
                        "{} seed {}: steps = {}, steady median |e| = {:.6e}, |e_hat| = {:.6e}",
                        variant.name(),
                        s,
                        trace.len(),
                        summary.median_e_norm,
                        summary.median_e_hat_norm
                    );
                    if let Some(f) = trace.fault {
                        faulted.get_or_insert(f);
                    }
                }
            }
            if let Some(f) = faulted {
                return Err(Error::Fault(f));
            }
        }
        Command::ReproducePaper { cfg, out, grid_per_dim } => {
            let mut exp = load_experiment(&cfg)?;
            if let Some(g) = grid_per_dim {
                exp.config.grid_per_dim = g;
                exp = exp.config.resolve()?;
            }
            let rep = pipeline::reproduce(&exp)?;
            create_dir(&out)?;
            pipeline::write_bundle(&out, &exp, &rep)?;
            print!("{}", rep.summary.table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
