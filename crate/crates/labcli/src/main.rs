use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use actlab::nn::Optimizer;
use actlab_cli::commands::{self, execute};
use actlab_cli::config::{
    self, parse_range_count, parse_suite, CommandConfig, Common, EvalConfig, EvolveRunConfig, ExportConfig,
    HistogramConfig, Probe, Sampling, SweepSpec, DEFAULT_EVAL_SET,
};
use actlab_cli::record::{self, RunRecord};
use actlab_cli::CliError;

#[derive(Parser)]
#[command(name = "actlab", version, about = "Search, train with and benchmark activation functions")]
struct Cli {
    /// Base seed; every random draw derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Parent directory for run directories.
    #[arg(long, global = true, default_value = "runs")]
    out_dir: PathBuf,
    /// Maximum FLOPs per element for candidates.
    #[arg(long, global = true, default_value_t = 64)]
    budget: u64,
    /// Comma-separated dataset families, or `all`.
    #[arg(long, global = true, default_value = "all")]
    suite: String,
    /// Training steps per MLP.
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// `adam` or `sgd`.
    #[arg(long, global = true, default_value = "adam")]
    optimizer: Optimizer,
    /// External proposer command line (JSON lines over stdin/stdout).
    #[arg(long, global = true)]
    proposer_cmd: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and test activations on the dataset suite.
    Eval {
        /// Zoo names or DSL expressions; defaults to the reference set.
        activations: Vec<String>,
        /// Training seeds per dataset.
        #[arg(long, default_value_t = 3)]
        seeds: usize,
    },
    /// Evolve activations starting from ReLU.
    Evolve(EvolveArgs),
    /// Evaluate a one-constant family over sampled values of that constant.
    Sweep(SweepArgs),
    /// Histogram hidden-layer pre-activations of a trained model.
    Histogram {
        activation: String,
        #[arg(long, default_value_t = 80)]
        bins: usize,
        #[arg(long, default_value_t = -4.0, allow_hyphen_values = true)]
        lo: f64,
        #[arg(long, default_value_t = 4.0, allow_hyphen_values = true)]
        hi: f64,
        /// Index into the suite.
        #[arg(long, default_value_t = 0)]
        dataset: usize,
        #[arg(long, value_enum, default_value_t = Probe::Test)]
        probe: Probe,
    },
    /// Write realized datasets as CSV.
    ExportDataset {
        /// Indices into the suite.
        #[arg(long = "index", default_values_t = [0])]
        indices: Vec<usize>,
        /// Every dataset in the suite.
        #[arg(long, conflicts_with = "indices")]
        all: bool,
    },
    /// Re-run a recorded run and check it reproduces bit for bit.
    Replay {
        /// Run directory or its record.json.
        path: PathBuf,
    },
    /// The built-in activation zoo.
    Zoo {
        #[command(subcommand)]
        action: ZooAction,
    },
}

#[derive(Subcommand)]
enum ZooAction {
    List,
}

#[derive(Args)]
struct EvolveArgs {
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    proposals: Option<usize>,
    #[arg(long)]
    parents: Option<usize>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    eval_seeds: Option<usize>,
    /// Keep batch-statistic nodes out of mutations.
    #[arg(long)]
    no_batch_stats: bool,
    /// Seconds to wait for each external proposal.
    #[arg(long)]
    proposer_timeout: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    /// DSL text containing one `$alpha`.
    #[arg(long, conflicts_with = "preset")]
    template: Option<String>,
    /// `gelusine` or `gelusinc`.
    #[arg(long)]
    preset: Option<String>,
    /// Evenly spaced values `lo:hi:n`.
    #[arg(long, conflicts_with = "uniform", allow_hyphen_values = true)]
    grid: Option<String>,
    /// Uniform random values `lo:hi:n`.
    #[arg(long, allow_hyphen_values = true)]
    uniform: Option<String>,
    /// Values to rank against the samples; the preset's own constant by default.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    reference: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    seeds: usize,
}

fn sweep_spec(common: Common, a: SweepArgs) -> Result<SweepSpec, CliError> {
    let (template, preset_ref) = match (a.template, a.preset.as_deref()) {
        (Some(t), _) => (t, None),
        (None, Some("gelusine")) => (config::GELUSINE_TEMPLATE.to_string(), Some(0.1)),
        (None, Some("gelusinc")) => (config::GELUSINC_TEMPLATE.to_string(), Some(0.5)),
        (None, Some(p)) => return Err(CliError::Invalid(format!("unknown preset `{p}`"))),
        (None, None) => return Err(CliError::Invalid("sweep needs --template or --preset".into())),
    };
    let range = |s: &str| parse_range_count(s).map_err(CliError::Invalid);
    let sampling = match (a.grid, a.uniform) {
        (Some(g), _) => {
            let (lo, hi, count) = range(&g)?;
            Sampling::Grid { lo, hi, count }
        }
        (None, Some(u)) => {
            let (lo, hi, count) = range(&u)?;
            Sampling::Uniform { lo, hi, count }
        }
        (None, None) => Sampling::Uniform {
            lo: 0.0,
            hi: 1.0,
            count: 16,
        },
    };
    let reference = if a.reference.is_empty() {
        preset_ref.into_iter().collect()
    } else {
        a.reference
    };
    let spec = SweepSpec {
        common,
        template,
        sampling,
        reference,
        seeds: a.seeds,
    };
    spec.validate()?;
    Ok(spec)
}

fn build_config(cli: &Cli, common: Common, command: Command) -> Result<CommandConfig, CliError> {
    Ok(match command {
        Command::Eval { activations, seeds } => CommandConfig::Eval(EvalConfig {
            common,
            activations: if activations.is_empty() {
                DEFAULT_EVAL_SET.iter().map(|s| s.to_string()).collect()
            } else {
                activations
            },
            seeds,
        }),
        Command::Evolve(a) => {
            let mut c = EvolveRunConfig::new(common);
            c.generations = a.generations.unwrap_or(c.generations);
            c.proposals_per_generation = a.proposals.unwrap_or(c.proposals_per_generation);
            c.parents_per_prompt = a.parents.unwrap_or(c.parents_per_prompt);
            c.top_k = a.top_k.unwrap_or(c.top_k);
            c.eval_seeds = a.eval_seeds.unwrap_or(c.eval_seeds);
            c.allow_batch_stats = !a.no_batch_stats;
            c.proposer_timeout_secs = a.proposer_timeout.unwrap_or(c.proposer_timeout_secs);
            c.proposer_cmd = cli.proposer_cmd.clone();
            CommandConfig::Evolve(c)
        }
        Command::Sweep(a) => CommandConfig::Sweep(sweep_spec(common, a)?),
        Command::Histogram {
            activation,
            bins,
            lo,
            hi,
            dataset,
            probe,
        } => CommandConfig::Histogram(HistogramConfig {
            common,
            activation,
            bins,
            lo,
            hi,
            dataset,
            probe,
        }),
        Command::ExportDataset { indices, all } => {
            let indices = if all {
                (0..common.suite_specs().len()).collect()
            } else {
                indices
            };
            CommandConfig::ExportDataset(ExportConfig { common, indices })
        }
        Command::Replay { .. } | Command::Zoo { .. } => unreachable!("handled before building a config"),
    })
}

fn run(mut cli: Cli) -> Result<bool, CliError> {
    let command = std::mem::replace(&mut cli.command, Command::Zoo { action: ZooAction::List });
    let mut progress = |line: &str| eprintln!("{line}");
    match command {
        Command::Zoo { action: ZooAction::List } => {
            print!("{}", commands::zoo_table());
            return Ok(true);
        }
        Command::Replay { path } => {
            let r = record::replay(&path, &mut progress)?;
            print!("{}", r.outcome.report);
            for (file, hash) in &r.matched {
                println!("match  {file}  {hash}");
            }
            println!(
                "replay OK: {} artifacts and the results block reproduced ({} on-disk files verified)",
                r.matched.len(),
                r.on_disk_checked
            );
            return Ok(true);
        }
        _ => {}
    }
    let mut common = Common {
        seed: cli.seed,
        budget: cli.budget,
        suite: parse_suite(&cli.suite).map_err(CliError::Invalid)?,
        optimizer: cli.optimizer,
        ..Common::default()
    };
    if let Some(s) = cli.steps {
        common.steps = s;
    }
    let cfg = build_config(&cli, common, command)?;
    let datasets = cfg.datasets()?;
    let outcome = execute(&cfg, &datasets, &mut progress)?;
    let record = RunRecord::new(cfg, datasets, &outcome);
    let dir = record::persist(&cli.out_dir, &record, &outcome)?;
    print!("{}", outcome.report);
    println!("run written to {}", dir.display());
    if let Some(f) = &outcome.failure {
        eprintln!("error: run stopped early: {f}");
        return Ok(false);
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
