#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use actlab::datagen::{DatasetSpec, Family};
use actlab_cli::commands::{execute, Outcome};
use actlab_cli::config::{
    CommandConfig, Common, EvalConfig, EvolveRunConfig, ExportConfig, HistogramConfig, Probe, Sampling, SweepSpec,
    GELUSINE_TEMPLATE,
};
use actlab_cli::record::{RunRecord, RECORD_FILE};

pub fn golden_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/records")
}

pub fn common(families: &[Family]) -> Common {
    Common {
        seed: 7,
        steps: 40,
        suite: families.to_vec(),
        ..Common::default()
    }
}

/// First `n` specs the config selects, shrunk so debug-speed tests stay quick.
pub fn small_datasets(cfg: &CommandConfig, n: usize) -> Vec<DatasetSpec> {
    cfg.datasets()
        .unwrap()
        .into_iter()
        .take(n)
        .map(|mut d| {
            d.n_train = 256;
            d.n_test = 64;
            d
        })
        .collect()
}

pub fn run(cfg: &CommandConfig, datasets: &[DatasetSpec]) -> Outcome {
    execute(cfg, datasets, &mut |_| {}).unwrap()
}

/// The small runs kept as golden records, by directory name.
pub fn golden_configs() -> Vec<(&'static str, CommandConfig, usize)> {
    let mut evolve = EvolveRunConfig::new(common(&[Family::Poly1d]));
    evolve.generations = 3;
    evolve.proposals_per_generation = 3;
    evolve.eval_seeds = 1;
    vec![
        (
            "eval",
            CommandConfig::Eval(EvalConfig {
                common: common(&[Family::Poly1d, Family::SinProduct]),
                activations: vec!["relu".into(), "gelusinc".into(), "(mul x (sigmoid x))".into()],
                seeds: 2,
            }),
            2,
        ),
        (
            "sweep",
            CommandConfig::Sweep(SweepSpec {
                common: common(&[Family::SinProduct]),
                template: GELUSINE_TEMPLATE.into(),
                sampling: Sampling::Uniform {
                    lo: 0.0,
                    hi: 1.0,
                    count: 3,
                },
                reference: vec![0.1],
                seeds: 2,
            }),
            1,
        ),
        (
            "histogram",
            CommandConfig::Histogram(HistogramConfig {
                common: common(&[]),
                activation: "gelusine".into(),
                bins: 16,
                lo: -3.0,
                hi: 3.0,
                dataset: 0,
                probe: Probe::Test,
            }),
            1,
        ),
        (
            "export-dataset",
            CommandConfig::ExportDataset(ExportConfig {
                common: common(&[]),
                indices: vec![0, 40],
            }),
            2,
        ),
        ("evolve", CommandConfig::Evolve(evolve), 1),
    ]
}

/// Write `record.json` plus artifacts into `dir`, replacing what was there.
pub fn write_record(dir: &Path, cfg: CommandConfig, datasets: Vec<DatasetSpec>) {
    let outcome = run(&cfg, &datasets);
    let record = RunRecord::new(cfg, datasets, &outcome);
    let _ = fs::remove_dir_all(dir);
    fs::create_dir_all(dir).unwrap();
    for a in &outcome.artifacts {
        fs::write(dir.join(&a.name), &a.contents).unwrap();
    }
    let json = serde_json::to_string_pretty(&record).unwrap();
    fs::write(dir.join(RECORD_FILE), json + "\n").unwrap();
}
