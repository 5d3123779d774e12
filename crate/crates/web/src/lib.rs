//! wasm-bindgen entry points for `www/index.html`. Everything returns JSON
//! text so the page needs no generated type glue beyond strings.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use actlab::datagen::{realize, suite_for, Family};
use actlab::evolve::{training_rng, TrainSettings, DIVERGENCE_MSE};
use actlab::exprlang::{self, parse, CompiledExpr, CostModel};
use actlab::nn::{self, Activation};
use actlab::tensor::Tensor2;
use actlab::zoo;

// Logic lives in plain functions with String errors so it also runs natively;
// only the exported wrappers touch JsError. Seeds cross the boundary as u32
// because u64 would surface as BigInt in JS.
fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn js<T>(r: Result<T, String>) -> Result<T, JsError> {
    r.map_err(|e| JsError::new(&e))
}

struct Named {
    act: Box<dyn Activation>,
    flops: Option<u64>,
    pointwise: bool,
}

fn resolve(text: &str) -> Result<Named, String> {
    let model = CostModel::default();
    if let Ok(e) = zoo::builtin(text.trim()) {
        return Ok(Named {
            flops: e.flop_cost(&model),
            pointwise: e.is_pointwise(),
            act: Box::new(e),
        });
    }
    let expr = parse(text).map_err(err)?;
    Ok(Named {
        flops: Some(exprlang::cost(&expr, &model)),
        pointwise: !expr.has_batch_stat(),
        act: Box::new(CompiledExpr::new(&expr)),
    })
}

#[derive(Serialize)]
struct Curve {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Derivative where the activation provides one in a single pass.
    dys: Option<Vec<f64>>,
    flops: Option<u64>,
    /// Batch-statistic activations depend on the whole row, which here is the grid.
    pointwise: bool,
}

/// Sample a zoo name or DSL expression on `n` points of `[lo, hi]`.
#[wasm_bindgen]
pub fn activation_curve(text: &str, lo: f64, hi: f64, n: usize) -> Result<String, JsError> {
    js(activation_curve_impl(text, lo, hi, n))
}

fn activation_curve_impl(text: &str, lo: f64, hi: f64, n: usize) -> Result<String, String> {
    if !(lo < hi) || !(2..=10_000).contains(&n) {
        return Err("need lo < hi and 2 <= n <= 10000".into());
    }
    let a = resolve(text)?;
    let xs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let x = Tensor2::from_vec(1, n, xs.clone()).map_err(err)?;
    let (y, d) = a.act.apply_with_derivative(&x).map_err(err)?;
    let curve = Curve {
        xs,
        ys: y.into_vec(),
        dys: d.map(Tensor2::into_vec),
        flops: a.flops,
        pointwise: a.pointwise,
    };
    Ok(serde_json::to_string(&curve).expect("curve serializes"))
}

#[derive(Serialize)]
struct ZooRow {
    name: &'static str,
    kind: String,
    training: String,
    flops: Option<u64>,
    expr: Option<String>,
    note: &'static str,
}

/// The zoo as a JSON array.
#[wasm_bindgen]
pub fn zoo_listing() -> String {
    let model = CostModel::default();
    let rows: Vec<ZooRow> = zoo::all()
        .iter()
        .map(|e| ZooRow {
            name: e.name,
            kind: e.kind.to_string(),
            training: e.trainability.to_string(),
            flops: e.flop_cost(&model),
            expr: e.expr().map(exprlang::print),
            note: e.note,
        })
        .collect();
    serde_json::to_string(&rows).expect("zoo serializes")
}

#[derive(Serialize)]
struct Preview {
    family: String,
    target: serde_json::Value,
    input_dim: usize,
    id_range: (f64, f64),
    ood_range: (f64, f64),
    /// `(x0, y)` pairs; the first input column only.
    train: Vec<(f64, f64)>,
    test: Vec<(f64, f64)>,
}

fn first_column(split: &actlab::datagen::Split, rows: usize) -> Vec<(f64, f64)> {
    let step = (split.x.rows() / rows.max(1)).max(1);
    (0..split.x.rows())
        .step_by(step)
        .map(|r| (split.x.get(r, 0), split.y.get(r, 0)))
        .collect()
}

fn dataset(family: &str, seed: u64, index: usize) -> Result<actlab::datagen::SampleSet, String> {
    let family: Family = family.parse()?;
    let suite = suite_for(seed, &[family]);
    let spec = suite
        .get(index)
        .ok_or_else(|| format!("{family} has {} datasets", suite.len()))?;
    realize(spec).map_err(err)
}

/// Up to `rows` points of each split of dataset `index` of `family`.
#[wasm_bindgen]
pub fn dataset_preview(family: &str, seed: u32, index: usize, rows: usize) -> Result<String, JsError> {
    js(dataset_preview_impl(family, seed.into(), index, rows))
}

fn dataset_preview_impl(family: &str, seed: u64, index: usize, rows: usize) -> Result<String, String> {
    let set = dataset(family, seed, index)?;
    let p = Preview {
        family: set.spec.params.family().to_string(),
        target: serde_json::to_value(&set.target).expect("target serializes"),
        input_dim: set.input_dim(),
        id_range: (set.spec.id_range[0].lo, set.spec.id_range[0].hi),
        ood_range: (set.spec.ood_range[0].lo, set.spec.ood_range[0].hi),
        train: first_column(&set.train, rows),
        test: first_column(&set.test, rows),
    };
    Ok(serde_json::to_string(&p).expect("preview serializes"))
}

#[derive(Serialize)]
struct TrainResult {
    loss_trace: Vec<f64>,
    train_mse: f64,
    ood_mse: f64,
    diverged: bool,
    /// `(x0, prediction)` on the test split, for 1-D datasets.
    predictions: Vec<(f64, f64)>,
}

/// Train the lab MLP with `activation` on one dataset and report test error.
#[wasm_bindgen]
pub fn train_once(activation: &str, family: &str, seed: u32, index: usize, steps: usize) -> Result<String, JsError> {
    js(train_once_impl(activation, family, seed.into(), index, steps))
}

fn train_once_impl(activation: &str, family: &str, seed: u64, index: usize, steps: usize) -> Result<String, String> {
    if steps == 0 || steps > 2000 {
        return Err("steps must be in 1..=2000".into());
    }
    let a = resolve(activation)?;
    let set = dataset(family, seed, index)?;
    let cfg = TrainSettings {
        train_steps: steps,
        ..TrainSettings::default()
    }
    .mlp_config(set.input_dim());
    let (params, report) = nn::train(&cfg, a.act.as_ref(), &set.train, &training_rng(seed, index, 0)).map_err(err)?;
    let ood = nn::evaluate(&params, a.act.as_ref(), &set.test);
    let predictions = match nn::forward_mlp(&params, a.act.as_ref(), &set.test.x) {
        Ok((pred, _)) if set.input_dim() == 1 => {
            let mut pts: Vec<(f64, f64)> = (0..pred.rows()).map(|r| (set.test.x.get(r, 0), pred.get(r, 0))).collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            pts
        }
        _ => Vec::new(),
    };
    let r = TrainResult {
        diverged: report.diverged() || !(ood < DIVERGENCE_MSE),
        loss_trace: report.loss_trace,
        train_mse: report.final_train_mse,
        ood_mse: ood.min(DIVERGENCE_MSE),
        predictions,
    };
    Ok(serde_json::to_string(&r).expect("result serializes"))
}
