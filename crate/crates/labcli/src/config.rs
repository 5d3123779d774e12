//! Command configurations. A [`CommandConfig`] is the full snapshot stored in
//! a run record, and is everything `replay` needs besides the dataset specs.

use serde::{Deserialize, Serialize};

use actlab::datagen::{suite_for, DatasetSpec, Family};
use actlab::evolve::{EvolveConfig, MutatorKind, TrainSettings};
use actlab::exprlang::FlopBudget;
use actlab::nn::Optimizer;
use actlab::tensor::SeededRng;

use crate::CliError;

/// Placeholder for the swept constant in a sweep template.
pub const ALPHA_SLOT: &str = "$alpha";

pub const GELUSINE_TEMPLATE: &str = "(add (gelu x) (mul $alpha (sin x)))";
pub const GELUSINC_TEMPLATE: &str = "(mul (gelu x) (add 1 (mul $alpha (sinc x))))";

/// The activations `eval` compares when none are named.
pub const DEFAULT_EVAL_SET: [&str; 6] = ["relu", "gelu", "gelusine", "gelusinc", "gmtu", "turbulent"];

/// Flags shared by every numeric command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Common {
    pub seed: u64,
    pub budget: u64,
    /// Families drawn from the default suite; empty means all of them.
    pub suite: Vec<Family>,
    pub steps: usize,
    pub optimizer: Optimizer,
}

impl Default for Common {
    fn default() -> Self {
        let t = TrainSettings::default();
        Self {
            seed: 0,
            budget: FlopBudget::DEFAULT.max_flops_per_element,
            suite: Vec::new(),
            steps: t.train_steps,
            optimizer: t.optimizer,
        }
    }
}

impl Common {
    pub fn train_settings(&self) -> TrainSettings {
        TrainSettings {
            train_steps: self.steps,
            optimizer: self.optimizer,
            ..TrainSettings::default()
        }
    }

    pub fn suite_specs(&self) -> Vec<DatasetSpec> {
        suite_for(self.seed, &self.suite)
    }
}

/// Parse `poly1d,sin_product`; `all` or `default` selects every family.
pub fn parse_suite(text: &str) -> Result<Vec<Family>, String> {
    match text.trim() {
        "all" | "default" | "" => Ok(Vec::new()),
        list => list.split(',').map(|s| s.trim().parse()).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub common: Common,
    /// Zoo names or DSL expressions.
    pub activations: Vec<String>,
    /// Training seeds per dataset.
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveRunConfig {
    pub common: Common,
    pub generations: usize,
    pub proposals_per_generation: usize,
    pub parents_per_prompt: usize,
    pub top_k: usize,
    pub eval_seeds: usize,
    pub allow_batch_stats: bool,
    /// Command line of an external proposer; the grammar mutator when absent.
    pub proposer_cmd: Option<String>,
    pub proposer_timeout_secs: f64,
    pub instruction: String,
}

impl EvolveRunConfig {
    pub fn new(common: Common) -> Self {
        let d = EvolveConfig::new(Vec::new(), common.seed);
        Self {
            common,
            generations: d.generations,
            proposals_per_generation: d.proposals_per_generation,
            parents_per_prompt: d.parents_per_prompt,
            top_k: d.top_k,
            eval_seeds: d.eval_seeds,
            allow_batch_stats: d.allow_batch_stats,
            proposer_cmd: None,
            proposer_timeout_secs: d.proposer_timeout_secs,
            instruction: d.instruction,
        }
    }

    pub fn evolve_config(&self, datasets: Vec<DatasetSpec>) -> EvolveConfig {
        let mut cfg = EvolveConfig::new(datasets, self.common.seed);
        cfg.generations = self.generations;
        cfg.proposals_per_generation = self.proposals_per_generation;
        cfg.parents_per_prompt = self.parents_per_prompt;
        cfg.top_k = self.top_k;
        cfg.eval_seeds = self.eval_seeds;
        cfg.allow_batch_stats = self.allow_batch_stats;
        cfg.budget = FlopBudget::new(self.common.budget);
        cfg.train = self.common.train_settings();
        cfg.instruction = self.instruction.clone();
        cfg.proposer_timeout_secs = self.proposer_timeout_secs;
        cfg.mutator = if self.proposer_cmd.is_some() {
            MutatorKind::External
        } else {
            MutatorKind::Grammar
        };
        cfg
    }
}

/// How α values are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Sampling {
    /// `count` evenly spaced values from `lo` to `hi` inclusive.
    Grid { lo: f64, hi: f64, count: usize },
    /// `count` draws from the open interval `(lo, hi)`.
    Uniform { lo: f64, hi: f64, count: usize },
}

impl Sampling {
    pub fn count(&self) -> usize {
        match *self {
            Sampling::Grid { count, .. } | Sampling::Uniform { count, .. } => count,
        }
    }

    /// The α values this rule yields under `seed`.
    pub fn draw(&self, seed: u64) -> Result<Vec<f64>, CliError> {
        Ok(match *self {
            Sampling::Grid { lo, hi, count } => (0..count)
                .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
                .collect(),
            Sampling::Uniform { lo, hi, count } => {
                let mut rng = SeededRng::new(seed).substream("sweep/alpha");
                let mut out = Vec::with_capacity(count);
                while out.len() < count {
                    let v = rng
                        .uniform(lo, hi)
                        .map_err(|e| CliError::Invalid(e.to_string()))?;
                    if v > lo {
                        out.push(v);
                    }
                }
                out
            }
        })
    }
}

/// Parse `lo:hi:count`.
pub fn parse_range_count(text: &str) -> Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = text.split(':').collect();
    let [lo, hi, n] = parts[..] else {
        return Err(format!("expected lo:hi:count, got `{text}`"));
    };
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("`{s}`: {e}"));
    let count = n.trim().parse::<usize>().map_err(|e| format!("`{n}`: {e}"))?;
    Ok((num(lo)?, num(hi)?, count))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub common: Common,
    /// DSL text with exactly one `$alpha`.
    pub template: String,
    pub sampling: Sampling,
    /// Values always evaluated and whose rank is reported.
    pub reference: Vec<f64>,
    pub seeds: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), CliError> {
        let slots = self.template.matches(ALPHA_SLOT).count();
        if slots != 1 {
            return Err(CliError::Invalid(format!(
                "sweep template needs exactly one {ALPHA_SLOT}, found {slots}"
            )));
        }
        if self.sampling.count() < 2 {
            return Err(CliError::Invalid("a sweep needs at least 2 samples".into()));
        }
        let (lo, hi) = match self.sampling {
            Sampling::Grid { lo, hi, .. } | Sampling::Uniform { lo, hi, .. } => (lo, hi),
        };
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(CliError::Invalid(format!("bad α interval ({lo}, {hi})")));
        }
        if self.seeds == 0 {
            return Err(CliError::Invalid("seeds must be at least 1".into()));
        }
        Ok(())
    }

    /// Template with `alpha` substituted.
    pub fn instantiate(&self, alpha: f64) -> String {
        self.template.replace(ALPHA_SLOT, &alpha.to_string())
    }
}

/// Which split's inputs are pushed through the trained model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Probe {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramConfig {
    pub common: Common,
    pub activation: String,
    pub bins: usize,
    pub lo: f64,
    pub hi: f64,
    /// Index into the selected suite.
    pub dataset: usize,
    pub probe: Probe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportConfig {
    pub common: Common,
    /// Indices into the selected suite.
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum CommandConfig {
    Eval(EvalConfig),
    Evolve(EvolveRunConfig),
    Sweep(SweepSpec),
    Histogram(HistogramConfig),
    ExportDataset(ExportConfig),
}

impl CommandConfig {
    pub fn name(&self) -> &'static str {
        match self {
            CommandConfig::Eval(_) => "eval",
            CommandConfig::Evolve(_) => "evolve",
            CommandConfig::Sweep(_) => "sweep",
            CommandConfig::Histogram(_) => "histogram",
            CommandConfig::ExportDataset(_) => "export-dataset",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            CommandConfig::Eval(c) => &c.common,
            CommandConfig::Evolve(c) => &c.common,
            CommandConfig::Sweep(c) => &c.common,
            CommandConfig::Histogram(c) => &c.common,
            CommandConfig::ExportDataset(c) => &c.common,
        }
    }

    /// Training seeds per dataset, where the command trains at all.
    pub fn eval_seeds(&self) -> usize {
        match self {
            CommandConfig::Eval(c) => c.seeds,
            CommandConfig::Evolve(c) => c.eval_seeds,
            CommandConfig::Sweep(c) => c.seeds,
            CommandConfig::Histogram(_) => 1,
            CommandConfig::ExportDataset(_) => 0,
        }
    }

    /// The dataset specs this command runs on.
    pub fn datasets(&self) -> Result<Vec<DatasetSpec>, CliError> {
        let suite = self.common().suite_specs();
        let pick = |i: usize| {
            suite.get(i).cloned().ok_or_else(|| {
                CliError::Invalid(format!("dataset index {i} out of range (suite has {})", suite.len()))
            })
        };
        match self {
            CommandConfig::Histogram(h) => Ok(vec![pick(h.dataset)?]),
            CommandConfig::ExportDataset(e) => e.indices.iter().map(|&i| pick(i)).collect(),
            _ => Ok(suite),
        }
    }
}
