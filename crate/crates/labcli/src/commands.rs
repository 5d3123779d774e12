//! The numeric commands. Each turns a config plus dataset specs into CSV
//! artifacts, a JSON results block and a printable report, without touching
//! the filesystem.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use actlab::datagen::{realize, to_csv, DatasetSpec};
use actlab::evolve::proposer::ChildProcessChannel;
use actlab::evolve::{
    training_rng, CandidateDb, DatasetScore, Evolution, ExternalProposer, FitnessHarness, GenerationReport,
    GrammarProposer, Proposer, Status,
};
use actlab::exprlang::{self, parse, CompiledExpr, CostModel};
use actlab::nn::{self, Activation};
use actlab::zoo;

use crate::config::{CommandConfig, EvalConfig, EvolveRunConfig, ExportConfig, HistogramConfig, Probe, SweepSpec};
use crate::histogram::Histogram;
use crate::table::Table;
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub results: serde_json::Value,
    pub wall_times: BTreeMap<String, f64>,
    /// Human-readable summary for stdout.
    pub report: String,
    /// Set when the command stopped early but still produced output.
    pub failure: Option<String>,
}

/// Run `cfg` on `datasets`. `progress` receives one line at a time.
pub fn execute(
    cfg: &CommandConfig,
    datasets: &[DatasetSpec],
    progress: &mut dyn FnMut(&str),
) -> Result<Outcome, CliError> {
    match cfg {
        CommandConfig::Eval(c) => eval(c, datasets, progress),
        CommandConfig::Evolve(c) => evolve(c, datasets, progress),
        CommandConfig::Sweep(c) => sweep(c, datasets, progress),
        CommandConfig::Histogram(c) => histogram(c, datasets),
        CommandConfig::ExportDataset(c) => export(c, datasets),
    }
}

/// A zoo entry or a parsed expression, ready to train with.
pub struct Resolved {
    pub label: String,
    pub activation: Box<dyn Activation>,
    pub flop_cost: Option<u64>,
}

pub fn resolve(text: &str) -> Result<Resolved, CliError> {
    let model = CostModel::default();
    if let Ok(entry) = zoo::builtin(text) {
        return Ok(Resolved {
            label: text.to_string(),
            flop_cost: entry.flop_cost(&model),
            activation: Box::new(entry),
        });
    }
    let expr = parse(text).map_err(|e| CliError::Invalid(format!("`{text}` is neither a zoo name nor a valid expression: {e}")))?;
    Ok(Resolved {
        label: text.to_string(),
        flop_cost: Some(exprlang::cost(&expr, &model)),
        activation: Box::new(CompiledExpr::new(&expr)),
    })
}

fn csv_text<R: Serialize>(rows: &[R]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-seed means over datasets, reduced to mean and sample sd across seeds.
fn across_seeds(scores: &[Vec<DatasetScore>], field: impl Fn(&DatasetScore) -> f64) -> (f64, f64) {
    let seeds = scores.first().map_or(0, Vec::len);
    let per_seed: Vec<f64> = (0..seeds)
        .map(|s| scores.iter().map(|d| field(&d[s])).sum::<f64>() / scores.len() as f64)
        .collect();
    mean_sd(&per_seed)
}

fn sci(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4e}")
    } else {
        v.to_string()
    }
}

#[derive(Serialize)]
struct EvalRow {
    activation: String,
    flop_cost: Option<u64>,
    within_budget: Option<bool>,
    train_mse_mean: Option<f64>,
    train_mse_sd: Option<f64>,
    ood_mse_mean: Option<f64>,
    ood_mse_sd: Option<f64>,
    diverged_runs: usize,
    error: Option<String>,
}

#[derive(Serialize)]
struct EvalRunRow<'a> {
    activation: &'a str,
    dataset: usize,
    family: String,
    seed_index: usize,
    train_mse: f64,
    ood_mse: f64,
    diverged: bool,
}

fn eval(cfg: &EvalConfig, datasets: &[DatasetSpec], progress: &mut dyn FnMut(&str)) -> Result<Outcome, CliError> {
    let t0 = Instant::now();
    let harness = FitnessHarness::new(datasets, cfg.common.train_settings(), cfg.common.seed, cfg.seeds)?;
    let mut wall_times = BTreeMap::from([("realize".to_string(), t0.elapsed().as_secs_f64())]);
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for text in &cfg.activations {
        let t = Instant::now();
        let scored = resolve(text).and_then(|r| {
            let s = harness.evaluate(r.activation.as_ref(), true).map_err(CliError::from)?;
            Ok((r, s))
        });
        let row = match scored {
            Ok((r, scores)) => {
                let (train_mean, train_sd) = across_seeds(&scores, |s| s.train_mse.unwrap_or(f64::INFINITY));
                let (ood_mean, ood_sd) = across_seeds(&scores, |s| s.ood_mse);
                for (i, per) in scores.iter().enumerate() {
                    for (s, sc) in per.iter().enumerate() {
                        runs.push(EvalRunRow {
                            activation: text,
                            dataset: i,
                            family: datasets[i].params.family().to_string(),
                            seed_index: s,
                            train_mse: sc.train_mse.unwrap_or(f64::INFINITY),
                            ood_mse: sc.ood_mse,
                            diverged: sc.diverged,
                        });
                    }
                }
                EvalRow {
                    activation: r.label,
                    flop_cost: r.flop_cost,
                    within_budget: r.flop_cost.map(|c| c <= cfg.common.budget),
                    train_mse_mean: Some(train_mean),
                    train_mse_sd: Some(train_sd),
                    ood_mse_mean: Some(ood_mean),
                    ood_mse_sd: Some(ood_sd),
                    diverged_runs: scores.iter().flatten().filter(|s| s.diverged).count(),
                    error: None,
                }
            }
            Err(e) => EvalRow {
                activation: text.clone(),
                flop_cost: None,
                within_budget: None,
                train_mse_mean: None,
                train_mse_sd: None,
                ood_mse_mean: None,
                ood_mse_sd: None,
                diverged_runs: 0,
                error: Some(e.to_string()),
            },
        };
        wall_times.insert(format!("eval/{text}"), t.elapsed().as_secs_f64());
        progress(&format!("{text}: done in {:.1}s", t.elapsed().as_secs_f64()));
        rows.push(row);
    }
    let mut table = Table::new(["activation", "flops", "train MSE", "test MSE", "diverged"]);
    for r in &rows {
        let pm = |m: Option<f64>, s: Option<f64>| match (m, s) {
            (Some(m), Some(s)) => format!("{} ± {}", sci(m), sci(s)),
            _ => "-".into(),
        };
        table.row([
            r.activation.clone(),
            r.flop_cost.map_or("-".into(), |c| c.to_string()),
            pm(r.train_mse_mean, r.train_mse_sd),
            r.error.clone().map_or_else(|| pm(r.ood_mse_mean, r.ood_mse_sd), |e| format!("failed: {e}")),
            r.diverged_runs.to_string(),
        ]);
    }
    let results = json!({
        "activations": rows.iter().map(|r| json!({
            "activation": r.activation,
            "flop_cost": r.flop_cost,
            "train_mse_mean": r.train_mse_mean,
            "train_mse_sd": r.train_mse_sd,
            "ood_mse_mean": r.ood_mse_mean,
            "ood_mse_sd": r.ood_mse_sd,
            "diverged_runs": r.diverged_runs,
            "error": r.error,
        })).collect::<Vec<_>>(),
    });
    Ok(Outcome {
        artifacts: vec![
            Artifact {
                name: "eval.csv".into(),
                contents: csv_text(&rows),
            },
            Artifact {
                name: "eval_runs.csv".into(),
                contents: csv_text(&runs),
            },
        ],
        results,
        wall_times,
        report: table.render(),
        failure: None,
    })
}

#[derive(Serialize)]
struct GenerationRow {
    generation: usize,
    best_fitness: f64,
    best_expr: String,
    scored: usize,
    rejected_budget: usize,
    failed: usize,
    db_size: usize,
}

impl From<&GenerationReport> for GenerationRow {
    fn from(r: &GenerationReport) -> Self {
        Self {
            generation: r.generation,
            best_fitness: r.best_fitness,
            best_expr: r.best_expr.clone(),
            scored: r.scored,
            rejected_budget: r.rejected_budget,
            failed: r.failed,
            db_size: r.db_size,
        }
    }
}

#[derive(Serialize)]
struct CandidateRow<'a> {
    id: usize,
    generation: usize,
    status: &'static str,
    fitness: Option<f64>,
    flop_cost: Option<u64>,
    parents: String,
    expr_text: &'a str,
    error: Option<&'a str>,
}

fn status_name(s: Status) -> &'static str {
    match s {
        Status::Pending => "pending",
        Status::Scored => "scored",
        Status::RejectedBudget => "rejected-budget",
        Status::Failed => "failed",
    }
}

fn split_command(cmd: &str) -> Result<(String, Vec<String>), CliError> {
    let mut parts = cmd.split_whitespace().map(str::to_string);
    let program = parts
        .next()
        .ok_or_else(|| CliError::Invalid("empty --proposer-cmd".into()))?;
    Ok((program, parts.collect()))
}

fn evolve(cfg: &EvolveRunConfig, datasets: &[DatasetSpec], progress: &mut dyn FnMut(&str)) -> Result<Outcome, CliError> {
    let t0 = Instant::now();
    let ecfg = cfg.evolve_config(datasets.to_vec());
    let mut evo = Evolution::new(ecfg.clone())?;
    let mut db: CandidateDb = evo.seed_db();
    let seed = db.best().expect("seeded").clone();
    let relu_fitness = seed.fitness.unwrap_or(f64::NEG_INFINITY);
    let mut generations = vec![GenerationRow {
        generation: 0,
        best_fitness: relu_fitness,
        best_expr: seed.expr_text.clone(),
        scored: 1,
        rejected_budget: 0,
        failed: 0,
        db_size: 1,
    }];
    progress(&format!("generation 0: best {relu_fitness:.6} {}", seed.expr_text));
    let mut proposer: Box<dyn Proposer> = match &cfg.proposer_cmd {
        Some(cmd) => {
            let (program, args) = split_command(cmd)?;
            Box::new(ExternalProposer::new(ChildProcessChannel::new(program, args), &ecfg))
        }
        None => Box::new(GrammarProposer {
            settings: ecfg.mutation_settings(),
        }),
    };
    let run = evo.run(&mut db, proposer.as_mut(), &mut |r| {
        progress(&format!(
            "generation {}: best {:.6} {} ({} scored, {} over budget, {} failed)",
            r.generation, r.best_fitness, r.best_expr, r.scored, r.rejected_budget, r.failed
        ));
        generations.push(r.into());
    });
    let failure = run.err().map(|e| e.to_string());
    let best = db.best().expect("seeded").clone();
    let best_fitness = best.fitness.unwrap_or(f64::NEG_INFINITY);
    let improvement = (best_fitness - relu_fitness) / relu_fitness.abs();
    let candidates: Vec<CandidateRow> = db
        .candidates()
        .iter()
        .map(|c| CandidateRow {
            id: c.id,
            generation: c.generation,
            status: status_name(c.status),
            fitness: c.fitness,
            flop_cost: c.flop_cost,
            parents: c.parents.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(" "),
            expr_text: &c.expr_text,
            error: c.error.as_deref(),
        })
        .collect();
    let count = |s: Status| db.candidates().iter().filter(|c| c.status == s).count();
    let results = json!({
        "relu_fitness": relu_fitness,
        "best_fitness": best_fitness,
        "best_expr": best.expr_text,
        "best_flop_cost": best.flop_cost,
        "relative_improvement": improvement,
        "generations_completed": generations.len() - 1,
        "candidates": db.len(),
        "scored": count(Status::Scored),
        "rejected_budget": count(Status::RejectedBudget),
        "failed": count(Status::Failed),
        "best_trace": generations.iter().map(|g| g.best_fitness).collect::<Vec<_>>(),
        "stopped": failure,
    });
    let mut table = Table::new(["rank", "fitness", "flops", "expression"]);
    for (i, c) in db.top_k().iter().enumerate() {
        table.row([
            (i + 1).to_string(),
            c.fitness.map_or("-".into(), |f| format!("{f:.6}")),
            c.flop_cost.map_or("-".into(), |f| f.to_string()),
            c.expr_text.clone(),
        ]);
    }
    let report = format!(
        "{}\nReLU fitness {relu_fitness:.6}; best {best_fitness:.6} ({:+.1}%)\n",
        table.render(),
        100.0 * improvement
    );
    Ok(Outcome {
        artifacts: vec![
            Artifact {
                name: "generations.csv".into(),
                contents: csv_text(&generations),
            },
            Artifact {
                name: "candidates.csv".into(),
                contents: csv_text(&candidates),
            },
            Artifact {
                name: "best_expr.txt".into(),
                contents: format!("{}\n", best.expr_text),
            },
        ],
        results,
        wall_times: BTreeMap::from([("evolve".to_string(), t0.elapsed().as_secs_f64())]),
        report,
        failure,
    })
}

#[derive(Serialize)]
struct SweepRow {
    alpha: f64,
    expr: String,
    ood_mse_mean: Option<f64>,
    ood_mse_sd: Option<f64>,
    rank: Option<usize>,
    reference: bool,
    error: Option<String>,
}

/// α values in ascending order: the drawn samples plus the references.
pub fn sweep_alphas(spec: &SweepSpec) -> Result<Vec<f64>, CliError> {
    let mut alphas = spec.sampling.draw(spec.common.seed)?;
    alphas.extend(spec.reference.iter().copied());
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    Ok(alphas)
}

fn sweep(spec: &SweepSpec, datasets: &[DatasetSpec], progress: &mut dyn FnMut(&str)) -> Result<Outcome, CliError> {
    spec.validate()?;
    let t0 = Instant::now();
    let harness = FitnessHarness::new(datasets, spec.common.train_settings(), spec.common.seed, spec.seeds)?;
    let alphas = sweep_alphas(spec)?;
    let mut rows: Vec<SweepRow> = Vec::new();
    for &alpha in &alphas {
        let text = spec.instantiate(alpha);
        let scored = parse(&text)
            .map_err(|e| CliError::Invalid(format!("`{text}`: {e}")))
            .and_then(|e| {
                harness
                    .evaluate(&CompiledExpr::new(&e), false)
                    .map_err(CliError::from)
            });
        let (mean, sd, error) = match scored {
            Ok(scores) => {
                let (m, s) = across_seeds(&scores, |s| s.ood_mse);
                (Some(m), Some(s), None)
            }
            Err(e) => (None, None, Some(e.to_string())),
        };
        progress(&format!("alpha {alpha}: {}", mean.map_or("failed".into(), sci)));
        rows.push(SweepRow {
            alpha,
            expr: text,
            ood_mse_mean: mean,
            ood_mse_sd: sd,
            rank: None,
            reference: spec.reference.contains(&alpha),
            error,
        });
    }
    let mut order: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].ood_mse_mean.is_some()).collect();
    order.sort_by(|&a, &b| {
        rows[a]
            .ood_mse_mean
            .unwrap()
            .total_cmp(&rows[b].ood_mse_mean.unwrap())
            .then(rows[a].alpha.total_cmp(&rows[b].alpha))
    });
    for (r, &i) in order.iter().enumerate() {
        rows[i].rank = Some(r + 1);
    }
    // Rank of each reference among the drawn samples only: 1 + samples that beat it.
    let references: Vec<serde_json::Value> = spec
        .reference
        .iter()
        .map(|&a| {
            let me = rows.iter().find(|r| r.alpha == a).and_then(|r| r.ood_mse_mean);
            let beaten_by = me.map(|m| {
                rows.iter()
                    .filter(|r| r.alpha != a && !spec.reference.contains(&r.alpha))
                    .filter(|r| r.ood_mse_mean.is_some_and(|o| o < m))
                    .count()
            });
            json!({
                "alpha": a,
                "ood_mse_mean": me,
                "rank_among_samples": beaten_by.map(|b| b + 1),
                "samples": spec.sampling.count(),
            })
        })
        .collect();
    let mut table = Table::new(["rank", "alpha", "test MSE", "ref"]);
    for &i in &order {
        let r = &rows[i];
        table.row([
            r.rank.unwrap().to_string(),
            format!("{:.4}", r.alpha),
            format!("{} ± {}", sci(r.ood_mse_mean.unwrap()), sci(r.ood_mse_sd.unwrap())),
            if r.reference { "*".into() } else { String::new() },
        ]);
    }
    for r in rows.iter().filter(|r| r.error.is_some()) {
        table.row(["-".into(), format!("{:.4}", r.alpha), format!("failed: {}", r.error.as_ref().unwrap()), String::new()]);
    }
    let mut report = table.render();
    for r in &references {
        report.push_str(&format!(
            "reference alpha {}: rank {} among {} samples\n",
            r["alpha"], r["rank_among_samples"], r["samples"]
        ));
    }
    let results = json!({
        "alphas": rows.iter().map(|r| json!({
            "alpha": r.alpha, "ood_mse_mean": r.ood_mse_mean, "ood_mse_sd": r.ood_mse_sd,
            "rank": r.rank, "error": r.error,
        })).collect::<Vec<_>>(),
        "references": references,
    });
    Ok(Outcome {
        artifacts: vec![Artifact {
            name: "sweep.csv".into(),
            contents: csv_text(&rows),
        }],
        results,
        wall_times: BTreeMap::from([("sweep".to_string(), t0.elapsed().as_secs_f64())]),
        report,
        failure: None,
    })
}

fn histogram(cfg: &HistogramConfig, datasets: &[DatasetSpec]) -> Result<Outcome, CliError> {
    let t0 = Instant::now();
    let spec = datasets
        .first()
        .ok_or_else(|| CliError::Invalid("histogram needs one dataset".into()))?;
    let set = realize(spec)?;
    let act = resolve(&cfg.activation)?;
    let mlp = cfg.common.train_settings().mlp_config(set.input_dim());
    let (params, report) = nn::train(&mlp, act.activation.as_ref(), &set.train, &training_rng(cfg.common.seed, cfg.dataset, 0))?;
    let probe = match cfg.probe {
        Probe::Train => &set.train.x,
        Probe::Test => &set.test.x,
    };
    let values = nn::collect_preactivations(&params, act.activation.as_ref(), probe)?;
    let h = Histogram::build(&values, cfg.bins, cfg.lo, cfg.hi)?;
    let outside = values.iter().filter(|v| v.abs() > 1.0).count();
    let results = json!({
        "samples": values.len(),
        "underflow": h.underflow,
        "overflow": h.overflow,
        "outside_unit_fraction": outside as f64 / values.len() as f64,
        "final_train_mse": report.final_train_mse,
        "diverged": report.diverged(),
    });
    let summary = format!(
        "{} pre-activations from {} {} rows; {:.1}% outside [-1, 1]; {} below {}, {} above {}\n",
        values.len(),
        probe.rows(),
        match cfg.probe {
            Probe::Train => "train",
            Probe::Test => "test",
        },
        100.0 * outside as f64 / values.len() as f64,
        h.underflow,
        cfg.lo,
        h.overflow,
        cfg.hi
    );
    Ok(Outcome {
        artifacts: vec![Artifact {
            name: "histogram.csv".into(),
            contents: h.to_csv(),
        }],
        results,
        wall_times: BTreeMap::from([("histogram".to_string(), t0.elapsed().as_secs_f64())]),
        report: summary,
        failure: None,
    })
}

fn export(cfg: &ExportConfig, datasets: &[DatasetSpec]) -> Result<Outcome, CliError> {
    let t0 = Instant::now();
    let mut artifacts = Vec::new();
    let mut table = Table::new(["index", "family", "file", "train rows", "test rows"]);
    let mut listed = Vec::new();
    for (&idx, spec) in cfg.indices.iter().zip(datasets) {
        let set = realize(spec)?;
        let name = format!("dataset-{idx:02}-{}.csv", spec.params.family());
        table.row([
            idx.to_string(),
            spec.params.family().to_string(),
            name.clone(),
            set.train.x.rows().to_string(),
            set.test.x.rows().to_string(),
        ]);
        listed.push(json!({"index": idx, "file": name, "target": set.target}));
        artifacts.push(Artifact {
            name,
            contents: to_csv(&set),
        });
    }
    Ok(Outcome {
        artifacts,
        results: json!({ "datasets": listed }),
        wall_times: BTreeMap::from([("export".to_string(), t0.elapsed().as_secs_f64())]),
        report: table.render(),
        failure: None,
    })
}

/// `zoo list` as a table; computes nothing worth recording.
pub fn zoo_table() -> String {
    let model = CostModel::default();
    let mut table = Table::new(["name", "kind", "training", "flops", "found on", "description"]);
    for e in zoo::all() {
        table.row([
            e.name.to_string(),
            e.kind.to_string(),
            e.trainability.to_string(),
            e.flop_cost(&model).map_or("-".into(), |c| c.to_string()),
            e.source_dataset.unwrap_or("-").to_string(),
            e.note.to_string(),
        ]);
    }
    table.render()
}
