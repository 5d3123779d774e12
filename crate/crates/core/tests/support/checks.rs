//! Checks shared by the unit-level tests and the acceptance run. Failures
//! come back as messages so the acceptance binary can report them.
#![allow(dead_code)]

use actlab::datagen::{target_eval, Interval, SampleSet, Split};
use actlab::exprlang::{forward, vjp, BatchStat, BinaryOp, Expr, UnaryOp};
use actlab::nn::{forward_mlp, init_params, loss_and_grads, Activation, MlpConfig, MlpParams};
use actlab::tensor::{SeededRng, Tensor2};
use actlab::zoo::ZooEntry;
use proptest::prelude::*;

/// Containment in `own`, exclusion from `other`, bit-exact targets, and
/// coverage of `own` to within 1% of its width once there are 1000+ rows.
pub fn check_split(split: &Split, own: &[Interval], other: &[Interval], set: &SampleSet, what: &str) -> Result<(), String> {
    let n = split.x.rows();
    for r in 0..n {
        let row = split.x.row(r);
        for (d, &v) in row.iter().enumerate() {
            if !own[d].contains(v) {
                return Err(format!("{what} value {v} outside {:?}", own[d]));
            }
            if other[d].contains(v) {
                return Err(format!("{what} value {v} inside {:?}", other[d]));
            }
        }
        let want = target_eval(&set.target, row).map_err(|e| e.to_string())?;
        if want.to_bits() != split.y.get(r, 0).to_bits() {
            return Err(format!("{what} row {r}: stored {} recomputed {want}", split.y.get(r, 0)));
        }
    }
    if n >= 1000 {
        for (d, iv) in own.iter().enumerate() {
            let (lo, hi) = (0..n)
                .map(|r| split.x.get(r, d))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            let slack = 0.01 * iv.width();
            if lo - iv.lo > slack || iv.hi - hi > slack {
                return Err(format!("{what} dim {d}: [{lo}, {hi}] vs {iv:?}"));
            }
        }
    }
    Ok(())
}

/// Both splits of a realized spec.
pub fn check_set(set: &SampleSet) -> Result<(), String> {
    let spec = &set.spec;
    if set.train.x.rows() != spec.n_train || set.test.x.rows() != spec.n_test {
        return Err("row counts differ from the spec".into());
    }
    check_split(&set.train, &spec.id_range, &spec.ood_range, set, "train")?;
    check_split(&set.test, &spec.ood_range, &spec.id_range, set, "test")
}

fn any_const() -> impl Strategy<Value = f64> {
    prop_oneof![
        (-1000i32..1000).prop_map(|v| v as f64 / 100.0),
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        Just(0.1),
        Just(-0.0),
        Just(1e-300),
    ]
}

pub fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![Just(Expr::x()), any_const().prop_map(Expr::c)];
    leaf.prop_recursive(8, 64, 2, |inner| {
        prop_oneof![
            (0..UnaryOp::ALL.len(), inner.clone()).prop_map(|(i, c)| Expr::unary(UnaryOp::ALL[i], c)),
            (0..6usize, inner.clone(), inner.clone())
                .prop_map(|(i, l, r)| Expr::binary(BinaryOp::ALL[i], l, r)),
            (inner.clone(), any_const()).prop_map(|(b, e)| Expr::binary(BinaryOp::Pow, b, Expr::c(e))),
            (0..2usize, inner).prop_map(|(i, c)| Expr::batch(BatchStat::ALL[i], c)),
        ]
    })
}

pub const MALFORMED: [&str; 30] = [
    "",
    " ",
    "(",
    ")",
    "()",
    "(add x)",
    "(add x x x)",
    "(relu)",
    "(relu x x)",
    "(frobnicate x)",
    "(add x (mul 2 x)",
    "(add x x))",
    "x x",
    "1e",
    "--1",
    "(pow x (sin x))",
    "(pow x)",
    "(batch-mean)",
    "(batch-std x x)",
    "nan",
    "inf",
    "(add x NaN)",
    "(relu y)",
    "(RELU x)",
    "((relu x))",
    "(1 x)",
    "(add x 1e400)",
    "\u{00e9}",
    "(sin x) trailing",
    "(mul 0.1. x)",
];

pub fn small_cfg() -> MlpConfig {
    MlpConfig {
        hidden_layers: 2,
        width: 4,
        batch_size: 5,
        ..MlpConfig::lab_defaults(1)
    }
}

fn loss_at(p: &MlpParams, act: &dyn Activation, x: &Tensor2, y: &Tensor2) -> f64 {
    let (pred, _) = forward_mlp(p, act, x).unwrap();
    actlab::nn::mse(&pred, y)
}

/// Central difference of `sum(upstream * f(x))` with respect to element `i`.
fn fd_directional(e: &Expr, x: &Tensor2, upstream: &Tensor2, i: usize, h: f64) -> f64 {
    let dot = |t: &Tensor2| -> f64 {
        let y = forward(e, t).unwrap();
        y.data().iter().zip(upstream.data()).map(|(a, b)| a * b).sum()
    };
    let mut plus = x.clone();
    plus.data_mut()[i] += h;
    let mut minus = x.clone();
    minus.data_mut()[i] -= h;
    (dot(&plus) - dot(&minus)) / (2.0 * h)
}

/// Reverse-mode VJP of a DSL entry against central differences (h = 1e-5) at
/// `points` random inputs in [-3, 3] away from 0, in batches of 50.
pub fn expr_matches_fd(entry: &ZooEntry, points: usize, seed: u64) -> Result<(), String> {
    let expr = entry.expr().ok_or_else(|| format!("{} is not a DSL entry", entry.name))?;
    let mut rng = SeededRng::new(seed);
    for _ in 0..points.div_ceil(50) {
        let data: Vec<f64> = (0..50)
            .map(|_| loop {
                let v = rng.uniform(-3.0, 3.0).unwrap();
                if v.abs() > 1e-3 {
                    break v;
                }
            })
            .collect();
        let x = Tensor2::from_vec(10, 5, data).unwrap();
        let upstream = Tensor2::rand_uniform(&mut rng, 10, 5, -1.0, 1.0).unwrap();
        let (_, ad) = vjp(expr, &x, &upstream).map_err(|e| e.to_string())?;
        for i in 0..x.len() {
            let fd = fd_directional(expr, &x, &upstream, i, 1e-5);
            let a = ad.data()[i];
            if (a - fd).abs() / a.abs().max(1.0) >= 1e-4 {
                return Err(format!("{}: x={} ad={a} fd={fd}", entry.name, x.data()[i]));
            }
        }
    }
    Ok(())
}

/// Every weight and bias gradient of a 2-hidden-layer, width-4 MLP against
/// central differences, with random biases so no unit sits exactly at 0.
pub fn full_model_gradient_check(entry: &ZooEntry) -> Result<(), String> {
    let h = 1e-5;
    let mut rng = SeededRng::new(31);
    let mut p = init_params(&small_cfg(), &mut rng).unwrap();
    for l in &mut p.layers {
        l.bias = Tensor2::rand_normal(&mut rng, 1, l.bias.cols(), 0.0, 0.3).unwrap();
    }
    let x = Tensor2::rand_uniform(&mut rng, 5, 1, -2.0, 2.0).unwrap();
    let y = Tensor2::rand_uniform(&mut rng, 5, 1, -1.0, 1.0).unwrap();
    let (_, grads) = loss_and_grads(&p, entry, &x, &y).map_err(|e| e.to_string())?;
    for li in 0..p.layers.len() {
        for bias in [false, true] {
            let n = if bias { p.layers[li].bias.len() } else { p.layers[li].weight.len() };
            for k in 0..n {
                let bump = |delta: f64| {
                    let mut q = p.clone();
                    let t = if bias { &mut q.layers[li].bias } else { &mut q.layers[li].weight };
                    t.data_mut()[k] += delta;
                    loss_at(&q, entry, &x, &y)
                };
                let fd = (bump(h) - bump(-h)) / (2.0 * h);
                let g = &grads.layers[li];
                let ad = if bias { g.bias.data()[k] } else { g.weight.data()[k] };
                let scale = ad.abs().max(fd.abs()).max(1e-6);
                if (ad - fd).abs() / scale >= 1e-4 {
                    return Err(format!(
                        "{} layer {li} {} {k}: ad={ad} fd={fd}",
                        entry.name,
                        if bias { "bias" } else { "weight" }
                    ));
                }
            }
        }
    }
    Ok(())
}
