//! Evolutionary search over activation expressions.
//!
//! Each generation samples parents from the top of a [`CandidateDb`], asks a
//! [`Proposer`] for children, rejects anything over the FLOP budget, and
//! scores the rest as negative mean OOD test MSE of freshly trained MLPs.

pub mod mutate;
pub mod proposer;

use std::cmp::Ordering;
use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::datagen::{realize, DataError, DatasetSpec, SampleSet};
use crate::exprlang::{self, parse, CompiledExpr, CostModel, Expr, FlopBudget};
use crate::nn::{self, Activation, MlpConfig, NnError, Optimizer};
use crate::tensor::SeededRng;

pub use mutate::{grammar_mutate, grammar_mutate_with, MutationSettings};
pub use proposer::{
    ParentRecord, ProposalRequest, ProposalResponse, ProposerChannel, ProposerError,
    DEFAULT_INSTRUCTION, PROTOCOL_VERSION,
};

/// OOD MSE charged for a diverged or non-finite run.
pub const DIVERGENCE_MSE: f64 = 1e6;
pub const DEFAULT_TOP_K: usize = 16;
pub const DEFAULT_PROPOSALS: usize = 8;
pub const DEFAULT_PARENTS: usize = 2;
pub const DEFAULT_EVAL_SEEDS: usize = 3;
pub const DEFAULT_GENERATIONS: usize = 200;
pub const PARENT_TEMPERATURE: f64 = 1.0;
/// Proposer failures in a row after which the run stops.
pub const MAX_PROPOSER_FAILURES: usize = 3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvolveError {
    #[error("invalid evolve config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Proposer(#[from] ProposerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pending,
    Scored,
    RejectedBudget,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: usize,
    /// Canonical print when the proposal parsed, the raw text otherwise.
    pub expr_text: String,
    pub expr: Option<Expr>,
    pub fitness: Option<f64>,
    pub flop_cost: Option<u64>,
    pub parents: Vec<usize>,
    pub generation: usize,
    pub eval_seed: u64,
    pub status: Status,
    pub error: Option<String>,
}

impl Candidate {
    fn pending(expr_text: String, parents: Vec<usize>, generation: usize, eval_seed: u64) -> Self {
        Self {
            id: 0,
            expr_text,
            expr: None,
            fitness: None,
            flop_cost: None,
            parents,
            generation,
            eval_seed,
            status: Status::Pending,
            error: None,
        }
    }

    fn fail(mut self, reason: String) -> Self {
        self.status = Status::Failed;
        self.error = Some(reason);
        self
    }
}

/// Ranking used by the top-K index: fitness descending, then FLOP cost
/// ascending, then id ascending.
pub fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    let fa = a.fitness.unwrap_or(f64::NEG_INFINITY);
    let fb = b.fitness.unwrap_or(f64::NEG_INFINITY);
    fb.total_cmp(&fa)
        .then(a.flop_cost.cmp(&b.flop_cost))
        .then(a.id.cmp(&b.id))
}

/// Append-only candidate log with a top-K index over scored entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateDb {
    log: Vec<Candidate>,
    top: Vec<usize>,
    k: usize,
}

impl CandidateDb {
    pub fn new(k: usize) -> Self {
        Self {
            log: Vec::new(),
            top: Vec::new(),
            k: k.max(1),
        }
    }

    /// Append `c`, assigning it the next id. Returns that id.
    pub fn insert(&mut self, mut c: Candidate) -> usize {
        let id = self.log.len();
        c.id = id;
        let scored = c.status == Status::Scored && c.fitness.is_some_and(f64::is_finite);
        self.log.push(c);
        if scored {
            let pos = self
                .top
                .partition_point(|&i| rank(&self.log[i], &self.log[id]) == Ordering::Less);
            if pos < self.k {
                self.top.insert(pos, id);
                self.top.truncate(self.k);
            }
        }
        id
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.log
    }

    pub fn get(&self, id: usize) -> Option<&Candidate> {
        self.log.get(id)
    }

    pub fn len(&self) -> usize {
        self.log.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn top_k(&self) -> Vec<&Candidate> {
        self.top.iter().map(|&i| &self.log[i]).collect()
    }

    pub fn best(&self) -> Option<&Candidate> {
        self.top.first().map(|&i| &self.log[i])
    }

    pub fn best_fitness(&self) -> Option<f64> {
        self.best().and_then(|c| c.fitness)
    }
}

/// Training hyperparameters shared by every fitness evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub hidden_layers: usize,
    pub width: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub train_steps: usize,
    pub optimizer: Optimizer,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let d = MlpConfig::lab_defaults(1);
        Self {
            hidden_layers: d.hidden_layers,
            width: d.width,
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
            train_steps: d.train_steps,
            optimizer: d.optimizer,
        }
    }
}

impl TrainSettings {
    pub fn mlp_config(&self, input_dim: usize) -> MlpConfig {
        MlpConfig {
            hidden_layers: self.hidden_layers,
            width: self.width,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            train_steps: self.train_steps,
            optimizer: self.optimizer,
            ..MlpConfig::lab_defaults(input_dim)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MutatorKind {
    Grammar,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveConfig {
    pub generations: usize,
    pub proposals_per_generation: usize,
    pub parents_per_prompt: usize,
    pub top_k: usize,
    pub budget: FlopBudget,
    pub cost_model: CostModel,
    pub datasets: Vec<DatasetSpec>,
    /// Independent training seeds per dataset; fitness averages over them.
    pub eval_seeds: usize,
    pub seed: u64,
    pub train: TrainSettings,
    pub mutator: MutatorKind,
    pub allow_batch_stats: bool,
    pub instruction: String,
    pub proposer_timeout_secs: f64,
}

impl EvolveConfig {
    pub fn new(datasets: Vec<DatasetSpec>, seed: u64) -> Self {
        Self {
            generations: DEFAULT_GENERATIONS,
            proposals_per_generation: DEFAULT_PROPOSALS,
            parents_per_prompt: DEFAULT_PARENTS,
            top_k: DEFAULT_TOP_K,
            budget: FlopBudget::DEFAULT,
            cost_model: CostModel::default(),
            datasets,
            eval_seeds: DEFAULT_EVAL_SEEDS,
            seed,
            train: TrainSettings::default(),
            mutator: MutatorKind::Grammar,
            allow_batch_stats: true,
            instruction: DEFAULT_INSTRUCTION.to_string(),
            proposer_timeout_secs: proposer::DEFAULT_TIMEOUT.as_secs_f64(),
        }
    }

    pub fn validate(&self) -> Result<(), EvolveError> {
        let counts = [
            ("proposals_per_generation", self.proposals_per_generation),
            ("parents_per_prompt", self.parents_per_prompt),
            ("top_k", self.top_k),
            ("eval_seeds", self.eval_seeds),
            ("datasets", self.datasets.len()),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(EvolveError::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        if !(self.proposer_timeout_secs > 0.0) {
            return Err(EvolveError::InvalidConfig("proposer timeout must be positive".into()));
        }
        Ok(())
    }

    pub fn mutation_settings(&self) -> MutationSettings {
        MutationSettings {
            allow_batch_stats: self.allow_batch_stats,
            ..MutationSettings::default()
        }
    }

    pub fn proposer_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.proposer_timeout_secs)
    }
}

/// Outcome of training on one dataset with one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetScore {
    /// Over the whole training split; `None` when not measured.
    pub train_mse: Option<f64>,
    /// Capped at [`DIVERGENCE_MSE`]; exactly that value when training diverged.
    pub ood_mse: f64,
    pub diverged: bool,
    pub wall_time_secs: f64,
}

/// Train a fresh MLP on `set.train` and measure OOD MSE on `set.test`, plus
/// the MSE over the whole training split when `measure_train` is set.
pub fn train_and_test(
    activation: &dyn Activation,
    set: &SampleSet,
    settings: &TrainSettings,
    rng: &SeededRng,
    measure_train: bool,
) -> Result<DatasetScore, NnError> {
    let cfg = settings.mlp_config(set.input_dim());
    let (params, report) = nn::fit(&cfg, activation, &set.train, rng, measure_train)?;
    let train_mse = measure_train.then_some(report.final_train_mse);
    let ood_mse = if report.diverged() {
        DIVERGENCE_MSE
    } else {
        let ood = nn::evaluate(&params, activation, &set.test);
        if ood.is_finite() {
            ood.min(DIVERGENCE_MSE)
        } else {
            DIVERGENCE_MSE
        }
    };
    let diverged = report.diverged() || ood_mse >= DIVERGENCE_MSE;
    Ok(DatasetScore {
        train_mse,
        ood_mse,
        diverged,
        wall_time_secs: report.wall_time_secs,
    })
}

/// Training stream for dataset `index` under evaluation seed `seed_index`.
pub fn training_rng(seed: u64, index: usize, seed_index: usize) -> SeededRng {
    SeededRng::new(seed).substream(&format!("train/{index}/{seed_index}"))
}

/// Realized datasets plus everything needed to score an activation on them.
#[derive(Debug, Clone)]
pub struct FitnessHarness {
    pub sets: Vec<SampleSet>,
    pub train: TrainSettings,
    pub seed: u64,
    pub eval_seeds: usize,
}

impl FitnessHarness {
    pub fn new(
        datasets: &[DatasetSpec],
        train: TrainSettings,
        seed: u64,
        eval_seeds: usize,
    ) -> Result<Self, EvolveError> {
        let sets = datasets.iter().map(realize).collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            sets,
            train,
            seed,
            eval_seeds,
        })
    }

    pub fn from_config(cfg: &EvolveConfig) -> Result<Self, EvolveError> {
        Self::new(&cfg.datasets, cfg.train.clone(), cfg.seed, cfg.eval_seeds)
    }

    /// Scores indexed `[dataset][seed]`.
    pub fn evaluate(
        &self,
        activation: &dyn Activation,
        measure_train: bool,
    ) -> Result<Vec<Vec<DatasetScore>>, NnError> {
        self.sets
            .iter()
            .enumerate()
            .map(|(i, set)| {
                (0..self.eval_seeds)
                    .map(|s| {
                        let rng = training_rng(self.seed, i, s);
                        train_and_test(activation, set, &self.train, &rng, measure_train)
                    })
                    .collect()
            })
            .collect()
    }

    /// Negative mean OOD MSE over datasets and seeds.
    pub fn fitness(&self, activation: &dyn Activation) -> Result<f64, NnError> {
        let scores = self.evaluate(activation, false)?;
        let all: Vec<f64> = scores.iter().flatten().map(|s| s.ood_mse).collect();
        Ok(-all.iter().sum::<f64>() / all.len() as f64)
    }
}

/// Fitness of `expr` under `cfg`: realize every dataset, train with each
/// evaluation seed, and negate the mean OOD MSE.
pub fn score(expr: &Expr, cfg: &EvolveConfig) -> Result<f64, EvolveError> {
    cfg.validate()?;
    let harness = FitnessHarness::from_config(cfg)?;
    Ok(harness.fitness(&CompiledExpr::new(expr))?)
}

/// What a proposer handed back.
#[derive(Debug, Clone, PartialEq)]
pub enum Proposal {
    Expr(Expr),
    Text(String),
    /// The proposer answered with an error record.
    Declined(String),
}

pub trait Proposer {
    fn propose(&mut self, parents: &[&Candidate], rng: &mut SeededRng) -> Result<Proposal, ProposerError>;
}

/// Built-in mutation operators; no external process.
#[derive(Debug, Clone, Default)]
pub struct GrammarProposer {
    pub settings: MutationSettings,
}

impl Proposer for GrammarProposer {
    fn propose(&mut self, parents: &[&Candidate], rng: &mut SeededRng) -> Result<Proposal, ProposerError> {
        let exprs: Vec<&Expr> = parents.iter().filter_map(|c| c.expr.as_ref()).collect();
        if exprs.is_empty() {
            return Err(ProposerError::Protocol("no parsed parents to mutate".into()));
        }
        Ok(Proposal::Expr(grammar_mutate_with(&exprs, rng, &self.settings)))
    }
}

/// Send one request over `channel` and decode the reply.
pub fn propose_external(
    parents: &[ParentRecord],
    instruction: &str,
    budget: FlopBudget,
    cost_model: &CostModel,
    channel: &mut dyn ProposerChannel,
    timeout: Duration,
) -> Result<Proposal, ProposerError> {
    let request = ProposalRequest {
        protocol_version: PROTOCOL_VERSION,
        instruction: instruction.to_string(),
        parents: parents.to_vec(),
        budget: budget.max_flops_per_element,
        grammar_reference: proposer::grammar_reference(cost_model),
    };
    let line = channel.exchange(&request.to_line(), timeout)?;
    Ok(match ProposalResponse::parse_line(&line)? {
        ProposalResponse::Proposal { expr_text } => Proposal::Text(expr_text),
        ProposalResponse::Error { error } => Proposal::Declined(error),
    })
}

pub struct ExternalProposer<C> {
    pub channel: C,
    pub instruction: String,
    pub budget: FlopBudget,
    pub cost_model: CostModel,
    pub timeout: Duration,
}

impl<C: ProposerChannel> ExternalProposer<C> {
    pub fn new(channel: C, cfg: &EvolveConfig) -> Self {
        Self {
            channel,
            instruction: cfg.instruction.clone(),
            budget: cfg.budget,
            cost_model: cfg.cost_model.clone(),
            timeout: cfg.proposer_timeout(),
        }
    }
}

impl<C: ProposerChannel> Proposer for ExternalProposer<C> {
    fn propose(&mut self, parents: &[&Candidate], _rng: &mut SeededRng) -> Result<Proposal, ProposerError> {
        let records: Vec<ParentRecord> = parents
            .iter()
            .map(|c| ParentRecord {
                expr_text: c.expr_text.clone(),
                fitness: c.fitness.unwrap_or(-DIVERGENCE_MSE),
                flop_cost: c.flop_cost.unwrap_or(0),
            })
            .collect();
        propose_external(
            &records,
            &self.instruction,
            self.budget,
            &self.cost_model,
            &mut self.channel,
            self.timeout,
        )
    }
}

/// Per-generation progress.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub generation: usize,
    pub best_fitness: f64,
    pub best_expr: String,
    pub scored: usize,
    pub rejected_budget: usize,
    pub failed: usize,
    pub db_size: usize,
    pub wall_time_secs: f64,
}

/// Search state bound to one configuration: realized datasets and a cache
/// of fitness by canonical expression text.
pub struct Evolution {
    pub cfg: EvolveConfig,
    harness: FitnessHarness,
    cache: HashMap<String, Result<f64, String>>,
}

impl Evolution {
    pub fn new(cfg: EvolveConfig) -> Result<Self, EvolveError> {
        cfg.validate()?;
        let harness = FitnessHarness::from_config(&cfg)?;
        Ok(Self {
            cfg,
            harness,
            cache: HashMap::new(),
        })
    }

    pub fn harness(&self) -> &FitnessHarness {
        &self.harness
    }

    /// Database holding only the scored ReLU seed.
    pub fn seed_db(&mut self) -> CandidateDb {
        let mut db = CandidateDb::new(self.cfg.top_k);
        let relu = parse("(relu x)").expect("seed parses");
        let c = self.admit(Proposal::Expr(relu), vec![], 0);
        db.insert(c);
        db
    }

    fn fitness_of(&mut self, expr: &Expr, text: &str) -> Result<f64, String> {
        if let Some(hit) = self.cache.get(text) {
            return hit.clone();
        }
        let result = self
            .harness
            .fitness(&CompiledExpr::new(expr))
            .map_err(|e| e.to_string());
        self.cache.insert(text.to_string(), result.clone());
        result
    }

    /// Turn a proposal into a candidate: parse, validate, budget-check, score.
    pub fn admit(&mut self, proposal: Proposal, parents: Vec<usize>, generation: usize) -> Candidate {
        let seed = self.cfg.seed;
        let expr = match proposal {
            Proposal::Declined(msg) => {
                return Candidate::pending(String::new(), parents, generation, seed)
                    .fail(format!("proposer error: {msg}"))
            }
            Proposal::Text(text) => match parse(&text) {
                Ok(e) => e,
                Err(e) => {
                    return Candidate::pending(text, parents, generation, seed)
                        .fail(format!("SyntaxError: {e}"))
                }
            },
            Proposal::Expr(e) => e,
        };
        let text = expr.to_string();
        let mut c = Candidate::pending(text.clone(), parents, generation, seed);
        if let Err(e) = expr.validate() {
            return c.fail(e.to_string());
        }
        if !self.cfg.allow_batch_stats && expr.has_batch_stat() {
            return c.fail("batch statistics are disabled".into());
        }
        let flops = exprlang::cost(&expr, &self.cfg.cost_model);
        c.flop_cost = Some(flops);
        c.expr = Some(expr.clone());
        if flops > self.cfg.budget.max_flops_per_element {
            c.status = Status::RejectedBudget;
            return c;
        }
        match self.fitness_of(&expr, &text) {
            Ok(f) => {
                c.fitness = Some(f);
                c.status = Status::Scored;
                c
            }
            Err(e) => c.fail(e),
        }
    }

    /// Up to `parents_per_prompt` distinct parents from the top-K, drawn
    /// with probability proportional to `exp(fitness / T)`.
    pub fn sample_parents(&self, db: &CandidateDb, rng: &mut SeededRng) -> Vec<usize> {
        let pool: Vec<&Candidate> = db.top_k();
        let mut ids: Vec<usize> = pool.iter().map(|c| c.id).collect();
        let fmax = pool
            .iter()
            .filter_map(|c| c.fitness)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut weights: Vec<f64> = pool
            .iter()
            .map(|c| ((c.fitness.unwrap_or(fmax) - fmax) / PARENT_TEMPERATURE).exp())
            .collect();
        let mut chosen = Vec::new();
        while chosen.len() < self.cfg.parents_per_prompt && !ids.is_empty() {
            let i = rng.weighted_index(&weights);
            chosen.push(ids.remove(i));
            weights.remove(i);
        }
        chosen
    }

    /// Run `cfg.generations` generations, appending to `db`. `on_generation`
    /// sees a report after each one. Stops with an error after
    /// [`MAX_PROPOSER_FAILURES`] proposer failures in a row; `db` keeps
    /// everything recorded up to that point.
    pub fn run(
        &mut self,
        db: &mut CandidateDb,
        proposer: &mut dyn Proposer,
        on_generation: &mut dyn FnMut(&GenerationReport),
    ) -> Result<(), EvolveError> {
        let root = SeededRng::new(self.cfg.seed).substream("evolve");
        let start_gen = db.candidates().iter().map(|c| c.generation + 1).max().unwrap_or(1);
        let mut proposer_failures = 0;
        for g in start_gen..start_gen + self.cfg.generations {
            let elapsed = nn::stopwatch();
            let mut rng = root.substream(&format!("generation/{g}"));
            let (mut scored, mut rejected, mut failed) = (0, 0, 0);
            for _ in 0..self.cfg.proposals_per_generation {
                let parent_ids = self.sample_parents(db, &mut rng);
                let parents: Vec<&Candidate> = parent_ids.iter().filter_map(|&i| db.get(i)).collect();
                let candidate = match proposer.propose(&parents, &mut rng) {
                    Ok(p) => {
                        proposer_failures = 0;
                        self.admit(p, parent_ids, g)
                    }
                    Err(e) => {
                        proposer_failures += 1;
                        let c = Candidate::pending(String::new(), parent_ids, g, self.cfg.seed).fail(e.to_string());
                        if proposer_failures >= MAX_PROPOSER_FAILURES {
                            db.insert(c);
                            return Err(e.into());
                        }
                        c
                    }
                };
                match candidate.status {
                    Status::Scored => scored += 1,
                    Status::RejectedBudget => rejected += 1,
                    _ => failed += 1,
                }
                db.insert(candidate);
            }
            let best = db.best();
            on_generation(&GenerationReport {
                generation: g,
                best_fitness: best.and_then(|c| c.fitness).unwrap_or(f64::NEG_INFINITY),
                best_expr: best.map(|c| c.expr_text.clone()).unwrap_or_default(),
                scored,
                rejected_budget: rejected,
                failed,
                db_size: db.len(),
                wall_time_secs: elapsed(),
            });
        }
        Ok(())
    }
}

/// Fresh database holding the scored ReLU seed.
pub fn seed_db(cfg: &EvolveConfig) -> Result<CandidateDb, EvolveError> {
    Ok(Evolution::new(cfg.clone())?.seed_db())
}

/// Seed if `db` is empty, then run every generation with `proposer`.
pub fn run(
    cfg: &EvolveConfig,
    mut db: CandidateDb,
    proposer: &mut dyn Proposer,
    on_generation: &mut dyn FnMut(&GenerationReport),
) -> Result<CandidateDb, EvolveError> {
    let mut evo = Evolution::new(cfg.clone())?;
    if db.is_empty() {
        db = evo.seed_db();
    }
    evo.run(&mut db, proposer, on_generation)?;
    Ok(db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{FamilyParams, RangePattern};

    fn tiny_cfg() -> EvolveConfig {
        let spec = DatasetSpec::with_pattern(
            FamilyParams::Poly1d {
                degree: 2,
                coefficients: Some(vec![0.2, 0.5, 0.3]),
            },
            RangePattern::LowToHigh,
            11,
        )
        .unwrap();
        let mut cfg = EvolveConfig::new(vec![spec], 5);
        cfg.eval_seeds = 1;
        cfg.train.train_steps = 5;
        cfg.train.width = 8;
        cfg.generations = 2;
        cfg.proposals_per_generation = 3;
        cfg
    }

    fn scored(id: usize, fitness: f64, flops: u64) -> Candidate {
        let mut c = Candidate::pending("x".into(), vec![], 0, 0);
        c.id = id;
        c.fitness = Some(fitness);
        c.flop_cost = Some(flops);
        c.status = Status::Scored;
        c
    }

    #[test]
    fn top_k_order_and_ties() {
        let mut db = CandidateDb::new(3);
        db.insert(scored(0, -1.0, 5));
        db.insert(scored(0, -0.5, 9));
        db.insert(scored(0, -0.5, 2));
        db.insert(scored(0, -0.5, 2));
        db.insert(scored(0, -3.0, 1));
        let top: Vec<usize> = db.top_k().iter().map(|c| c.id).collect();
        assert_eq!(top, vec![2, 3, 1]);
        assert_eq!(db.len(), 5);
        let mut rejected = scored(0, 0.0, 100);
        rejected.status = Status::RejectedBudget;
        db.insert(rejected);
        assert_eq!(db.best().unwrap().id, 2);
    }

    #[test]
    fn seed_db_is_relu() {
        let db = seed_db(&tiny_cfg()).unwrap();
        assert_eq!(db.len(), 1);
        let c = &db.candidates()[0];
        assert_eq!(c.expr_text, "(relu x)");
        assert_eq!(c.status, Status::Scored);
        assert_eq!(db.best_fitness(), c.fitness);
        assert_eq!(db.top_k().len(), 1);
    }

    #[test]
    fn single_candidate_is_always_the_parent() {
        let mut evo = Evolution::new(tiny_cfg()).unwrap();
        let db = evo.seed_db();
        let mut rng = SeededRng::new(1);
        for _ in 0..20 {
            assert_eq!(evo.sample_parents(&db, &mut rng), vec![0]);
        }
    }

    #[test]
    fn zero_generations_leave_db_unchanged() {
        let mut cfg = tiny_cfg();
        cfg.generations = 0;
        let db = seed_db(&cfg).unwrap();
        let after = run(&cfg, db.clone(), &mut GrammarProposer::default(), &mut |_| {}).unwrap();
        assert_eq!(after, db);
    }

    #[test]
    fn echo_and_garbage_proposers() {
        let cfg = tiny_cfg();
        let mut evo = Evolution::new(cfg.clone()).unwrap();
        let mut db = evo.seed_db();
        let mut echo = ExternalProposer::new(proposer::echo_channel(), &cfg);
        evo.run(&mut db, &mut echo, &mut |_| {}).unwrap();
        for c in &db.candidates()[1..] {
            assert_eq!(c.expr_text, "(relu x)");
            assert_eq!(c.fitness, db.candidates()[0].fitness);
        }

        let garbage = proposer::FnChannel(|_: &str| {
            Ok(ProposalResponse::Proposal {
                expr_text: "not-an-expr".into(),
            }
            .to_line())
        });
        let mut p = ExternalProposer::new(garbage, &cfg);
        let before = db.len();
        evo.run(&mut db, &mut p, &mut |_| {}).unwrap();
        for c in &db.candidates()[before..] {
            assert_eq!(c.status, Status::Failed);
            assert!(c.error.as_deref().unwrap().starts_with("SyntaxError"));
        }
    }

    #[test]
    fn repeated_timeouts_propagate() {
        let cfg = tiny_cfg();
        let mut evo = Evolution::new(cfg.clone()).unwrap();
        let mut db = evo.seed_db();
        let mut calls = 0;
        let flaky = proposer::FnChannel(|_: &str| {
            calls += 1;
            Err(ProposerError::Timeout(Duration::from_millis(1)))
        });
        let mut p = ExternalProposer::new(flaky, &cfg);
        let err = evo.run(&mut db, &mut p, &mut |_| {}).unwrap_err();
        assert!(matches!(err, EvolveError::Proposer(ProposerError::Timeout(_))));
        assert_eq!(db.len(), 1 + MAX_PROPOSER_FAILURES);
    }

    #[test]
    fn budget_rejections_are_not_scored() {
        let mut cfg = tiny_cfg();
        cfg.budget = FlopBudget::new(4);
        let mut evo = Evolution::new(cfg).unwrap();
        let c = evo.admit(Proposal::Text("(gelu x)".into()), vec![], 1);
        assert_eq!(c.status, Status::RejectedBudget);
        assert_eq!(c.flop_cost, Some(8));
        assert!(c.fitness.is_none());
    }

    #[test]
    fn grammar_runs_replay_identically() {
        let cfg = tiny_cfg();
        let a = run(&cfg, CandidateDb::new(cfg.top_k), &mut GrammarProposer::default(), &mut |_| {}).unwrap();
        let b = run(&cfg, CandidateDb::new(cfg.top_k), &mut GrammarProposer::default(), &mut |_| {}).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 1 + 2 * 3);
    }

    #[test]
    fn identity_fits_constant_target() {
        let spec = DatasetSpec::with_pattern(
            FamilyParams::Poly1d {
                degree: 0,
                coefficients: Some(vec![0.7]),
            },
            RangePattern::LowToHigh,
            2,
        )
        .unwrap();
        let mut cfg = EvolveConfig::new(vec![spec], 1);
        cfg.eval_seeds = 1;
        cfg.train.train_steps = 300;
        cfg.train.learning_rate = 1e-2;
        let f = score(&Expr::x(), &cfg).unwrap();
        assert!(f < 0.0 && f > -1e-3, "{f}");
    }
}
