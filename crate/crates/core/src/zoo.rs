//! Reference implementations of the ten studied activation functions.
//!
//! Six are plain DSL expressions and share the [`crate::exprlang`] evaluator.
//! `quaternion` and `pler` are native scalar maps trained through finite
//! differences; `fisg` and `spf` read across the feature axis and are
//! forward-only.

use std::f64::consts::PI;
use std::fmt;

use serde::Serialize;

use crate::exprlang::{self, sigmoid, sign, CompiledExpr, CostModel, Expr};
use crate::nn::{Activation, ActivationError};
use crate::tensor::Tensor2;

pub const NAMES: [&str; 10] = [
    "relu",
    "gelu",
    "gelusine",
    "gelusinc",
    "gmtu",
    "turbulent",
    "quaternion",
    "pler",
    "fisg",
    "spf",
];

pub const DEFAULT_FD_STEP: f64 = 1e-5;
pub const FISG_MIN_COLS: usize = 4;

const GELUSINE: &str = "(add (gelu x) (mul 0.1 (sin x)))";
const GELUSINC: &str = "(mul (gelu x) (add 1 (mul 0.5 (sinc x))))";
const GMTU: &str = "(add (mul (mul 1 (tanh (mul 1.5 x))) (exp (mul -0.2 (pow x 2)))) (mul 0.1 x))";
const TURBULENT: &str = "(add (mul (sign x) (log1p (mul 0.5 (abs x)))) \
     (mul (mul 0.2 (exp (mul -0.5 (pow (div (sub x (batch-mean x)) (batch-std x)) 2)))) \
     (sin (mul 2 x))))";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ZooError {
    #[error("unknown activation `{0}`")]
    UnknownActivation(String),
    #[error("{name} needs at least {min} feature columns, got {cols}")]
    ShapeTooSmall {
        name: &'static str,
        cols: usize,
        min: usize,
    },
    #[error("{0} produced a non-finite value")]
    NonFiniteOutput(&'static str),
    #[error("{0} is not pointwise")]
    NotPointwise(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZooKind {
    DslExpressible,
    NativePointwise,
    NativeTensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trainability {
    ExactAd,
    FiniteDifference,
    ForwardOnly,
}

impl fmt::Display for ZooKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ZooKind::DslExpressible => "dsl-expressible",
            ZooKind::NativePointwise => "native-pointwise",
            ZooKind::NativeTensor => "native-tensor",
        })
    }
}

impl fmt::Display for Trainability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Trainability::ExactAd => "exact-AD",
            Trainability::FiniteDifference => "finite-difference",
            Trainability::ForwardOnly => "forward-only",
        })
    }
}

#[derive(Debug, Clone)]
pub enum Evaluator {
    Dsl { expr: Expr, compiled: CompiledExpr },
    Pointwise(fn(f64) -> f64),
    Tensor(fn(&Tensor2) -> Tensor2),
}

#[derive(Debug, Clone)]
pub struct ZooEntry {
    pub name: &'static str,
    pub kind: ZooKind,
    pub trainability: Trainability,
    pub evaluator: Evaluator,
    pub note: &'static str,
    /// Dataset family the function was found on; `None` for the baselines.
    pub source_dataset: Option<&'static str>,
}

impl ZooEntry {
    pub fn expr(&self) -> Option<&Expr> {
        match &self.evaluator {
            Evaluator::Dsl { expr, .. } => Some(expr),
            _ => None,
        }
    }

    pub fn flop_cost(&self, model: &CostModel) -> Option<u64> {
        self.expr().map(|e| exprlang::cost(e, model))
    }

    pub fn is_pointwise(&self) -> bool {
        match &self.evaluator {
            Evaluator::Dsl { expr, .. } => !expr.has_batch_stat(),
            Evaluator::Pointwise(_) => true,
            Evaluator::Tensor(_) => false,
        }
    }
}

fn dsl(text: &str) -> Evaluator {
    let expr = exprlang::parse(text).expect("zoo expressions parse");
    let compiled = CompiledExpr::new(&expr);
    Evaluator::Dsl { expr, compiled }
}

pub fn builtin(name: &str) -> Result<ZooEntry, ZooError> {
    use Trainability::*;
    use ZooKind::*;
    let (name, kind, trainability, evaluator, note, source) = match name {
        "relu" => ("relu", DslExpressible, ExactAd, dsl("(relu x)"), "max(0, x); search seed", None),
        "gelu" => ("gelu", DslExpressible, ExactAd, dsl("(gelu x)"), "tanh-approximated GELU", None),
        "gelusine" => (
            "gelusine",
            DslExpressible,
            ExactAd,
            dsl(GELUSINE),
            "GELU(x) + 0.1 sin(x)",
            Some("sin product"),
        ),
        "gelusinc" => (
            "gelusinc",
            DslExpressible,
            ExactAd,
            dsl(GELUSINC),
            "GELU(x) (1 + 0.5 sinc(x))",
            Some("polynomials"),
        ),
        "gmtu" => (
            "gmtu",
            DslExpressible,
            ExactAd,
            dsl(GMTU),
            "tanh(1.5x) exp(-0.2x^2) + 0.1x",
            Some("sin product"),
        ),
        "turbulent" => (
            "turbulent",
            DslExpressible,
            ExactAd,
            dsl(TURBULENT),
            "sign(x) log1p(|x|/2) + batch-standardized Gaussian ripple",
            Some("Feynman equations"),
        ),
        "quaternion" => (
            "quaternion",
            NativePointwise,
            FiniteDifference,
            Evaluator::Pointwise(quaternion),
            "x times a four-component hypercomplex gate",
            Some("Feynman equations"),
        ),
        "pler" => (
            "pler",
            NativePointwise,
            FiniteDifference,
            Evaluator::Pointwise(pler),
            "x times a gate from 10 steps of coupled logistic maps",
            Some("spherical harmonics"),
        ),
        "fisg" => (
            "fisg",
            NativeTensor,
            ForwardOnly,
            Evaluator::Tensor(fisg_unchecked),
            "per-row spectral gate blending x with its phase-conjugated high band",
            Some("Feynman equations"),
        ),
        "spf" => (
            "spf",
            NativeTensor,
            ForwardOnly,
            Evaluator::Tensor(spf),
            "phase-flipped chaotic states coupled to cyclic feature neighbours",
            Some("polynomials"),
        ),
        other => return Err(ZooError::UnknownActivation(other.to_string())),
    };
    Ok(ZooEntry {
        name,
        kind,
        trainability,
        evaluator,
        note,
        source_dataset: source,
    })
}

pub fn all() -> Vec<ZooEntry> {
    NAMES.iter().map(|n| builtin(n).expect("listed names resolve")).collect()
}

pub fn eval_entry(entry: &ZooEntry, x: &Tensor2) -> Result<Tensor2, ZooError> {
    let out = match &entry.evaluator {
        Evaluator::Dsl { compiled, .. } => compiled
            .forward(x)
            .map_err(|_| ZooError::NonFiniteOutput(entry.name))?,
        Evaluator::Pointwise(f) => x.map(*f),
        Evaluator::Tensor(f) => {
            if entry.name == "fisg" && x.cols() < FISG_MIN_COLS {
                return Err(ZooError::ShapeTooSmall {
                    name: "fisg",
                    cols: x.cols(),
                    min: FISG_MIN_COLS,
                });
            }
            f(x)
        }
    };
    if out.all_finite() {
        Ok(out)
    } else {
        Err(ZooError::NonFiniteOutput(entry.name))
    }
}

/// Elementwise central difference `(f(x+h) - f(x-h)) / 2h`.
pub fn fd_gradient(entry: &ZooEntry, x: &Tensor2, h: f64) -> Result<Tensor2, ZooError> {
    if !entry.is_pointwise() {
        return Err(ZooError::NotPointwise(entry.name));
    }
    let plus = eval_entry(entry, &x.map(|v| v + h))?;
    let minus = eval_entry(entry, &x.map(|v| v - h))?;
    let data = plus
        .data()
        .iter()
        .zip(minus.data())
        .map(|(p, m)| (p - m) / (2.0 * h))
        .collect();
    Ok(Tensor2::from_vec(x.rows(), x.cols(), data).expect("same shape"))
}

fn to_activation_error(e: ZooError) -> ActivationError {
    match e {
        ZooError::NonFiniteOutput(_) => ActivationError::NonFinite,
        other => ActivationError::Invalid(other.to_string()),
    }
}

impl Activation for ZooEntry {
    fn apply(&self, x: &Tensor2) -> Result<Tensor2, ActivationError> {
        eval_entry(self, x).map_err(to_activation_error)
    }

    fn apply_vjp(
        &self,
        x: &Tensor2,
        upstream: &Tensor2,
    ) -> Result<(Tensor2, Tensor2), ActivationError> {
        match (&self.evaluator, self.trainability) {
            (Evaluator::Dsl { compiled, .. }, _) => compiled.apply_vjp(x, upstream),
            (_, Trainability::FiniteDifference) => {
                let out = self.apply(x)?;
                let d = fd_gradient(self, x, DEFAULT_FD_STEP).map_err(to_activation_error)?;
                let data = d.data().iter().zip(upstream.data()).map(|(a, b)| a * b).collect();
                let grad = Tensor2::from_vec(x.rows(), x.cols(), data)
                    .map_err(|e| ActivationError::Invalid(e.to_string()))?;
                Ok((out, grad))
            }
            _ => Err(ActivationError::NotDifferentiable(self.name.to_string())),
        }
    }

    fn apply_with_derivative(&self, x: &Tensor2) -> Result<(Tensor2, Option<Tensor2>), ActivationError> {
        match (&self.evaluator, self.trainability) {
            (Evaluator::Dsl { compiled, .. }, _) => compiled.apply_with_derivative(x),
            (_, Trainability::FiniteDifference) => {
                let out = self.apply(x)?;
                let d = fd_gradient(self, x, DEFAULT_FD_STEP).map_err(to_activation_error)?;
                Ok((out, Some(d)))
            }
            _ => Ok((self.apply(x)?, None)),
        }
    }
}

pub fn quaternion(x: f64) -> f64 {
    let a = 0.1 + 0.05 * (4.0 * x).cos();
    let b_freq = 2.5;
    let b = 0.5 + 0.2 * (b_freq * x + 2.0 * a).sin();
    let y_chaos = ((2.1 * x).sin() * (1.3 * x).cos() + 1.0) / 2.0;

    let c_freq = 2.0;
    let c_amp = 0.05 + 0.1 * y_chaos;
    let u = (c_freq * x).tanh();
    let cr = 0.1 + c_amp * (8.0 * u.powi(4) - 8.0 * u.powi(2) + 1.0);

    let ci_amp = 0.2 + 0.4 * (1.0 - y_chaos);
    let ui = (2.0 * x).tanh();
    let ci = ci_amp * (4.0 * ui.powi(3) - 3.0 * ui);

    let magnitude = a * x * x * (-b * (x - cr).powi(2)).exp();
    let phase = 2.0 * b * ci * (x - cr);
    let q_w = magnitude * phase.cos();
    let q_i = magnitude * phase.sin();

    let d_amp = 0.1 + 0.2 * y_chaos;
    let ud = (1.5 * x).tanh();
    let d_shift = d_amp * (2.0 * ud * ud - 1.0);
    let q_j = 0.5 * a * x * x * (-b * (x - d_shift).powi(2)).exp() * (c_freq * x + ci).sin();
    let q_k = 0.5 * b * x * x * (-a * (x + d_shift).powi(2)).exp() * (b_freq * x - cr).cos();

    let gate = 1.0 - (q_w - 0.2 * q_i - 0.15 * q_j - 0.15 * q_k);
    x * gate
}

pub fn pler(x: f64) -> f64 {
    let x2 = x * x;
    let r = 2.5 + 1.5 * (x2 / 4.0).tanh();
    let alpha = 0.1 * (x2 / 16.0).tanh();
    let (r_ref, alpha_ref) = (3.9, 0.05);
    let beta = 0.1 * (1.0 - 2.0 * (x2 / 8.0).tanh());
    let omega_ref = (x * 2.5).cos();
    let resonance_gate = (-25.0 * omega_ref * omega_ref).exp();

    let mut y = 0.5 + 0.49 * (x / 4.0).tanh();
    let mut z = 0.5 - 0.49 * (x / 4.0).tanh();
    let (mut y_ref, mut z_ref, mut c): (f64, f64, f64) = (0.2, 0.8, 0.0);

    for _ in 0..10 {
        let beta_eff = beta - 0.2 * (c * 4.0).tanh();
        let is_ood = 1.0 / (1.0 + (beta_eff * 50.0).exp());

        let coupling = alpha * (z - y);
        let mut y_dyn = r * y * (1.0 - y) + coupling;
        let mut z_dyn = r * z * (1.0 - z) - coupling;
        y_dyn -= is_ood * 0.5 * y;
        z_dyn -= is_ood * 0.5 * z;

        let gamma = is_ood * (c * 4.0).tanh();
        let mut y_next = y_dyn * (1.0 - gamma);
        let mut z_next = z_dyn * (1.0 - gamma);
        y_next += resonance_gate * 0.6 * (0.5 - y_next);
        z_next += resonance_gate * 0.6 * (0.5 - z_next);

        let coupling_ref = alpha_ref * (z_ref - y_ref);
        let mut y_ref_next = r_ref * y_ref * (1.0 - y_ref) + coupling_ref;
        let z_ref_next = r_ref * z_ref * (1.0 - z_ref) - coupling_ref;

        let c_next = 0.8 * c + 0.2 * (y_next - z_next).abs();

        let ood_modulation = 1.0 + (beta_eff.abs() * 5.0).tanh() * z * z;
        let ood_amplification = 1.0 + (c_next * 2.0).tanh();
        let coupling_sync = beta_eff * (y_ref - y) * ood_modulation * ood_amplification;
        y_next += coupling_sync;
        y_ref_next -= (1.0 - is_ood) * coupling_sync;

        y = y_next.clamp(0.0, 1.0);
        z = z_next.clamp(0.0, 1.0);
        y_ref = y_ref_next.clamp(0.0, 1.0);
        z_ref = z_ref_next.clamp(0.0, 1.0);
        c = c_next;
    }
    x * (y + z) / 2.0
}

/// `sum_t x_t e^{-2 pi i k t / n}` for `k = 0..=n/2`, as `(re, im)` pairs.
pub fn real_dft(x: &[f64]) -> Vec<(f64, f64)> {
    let n = x.len();
    (0..=n / 2)
        .map(|k| {
            x.iter().enumerate().fold((0.0, 0.0), |(re, im), (t, &v)| {
                let ang = -2.0 * PI * ((k * t) % n) as f64 / n as f64;
                (re + v * ang.cos(), im + v * ang.sin())
            })
        })
        .collect()
}

/// Inverse of [`real_dft`] for a length-`n` real signal; the imaginary parts
/// of the zero and Nyquist bins are ignored.
pub fn inverse_real_dft(spec: &[(f64, f64)], n: usize) -> Vec<f64> {
    (0..n)
        .map(|t| {
            let mut acc = spec[0].0;
            for (k, &(re, im)) in spec.iter().enumerate().skip(1) {
                if 2 * k == n {
                    acc += if t % 2 == 0 { re } else { -re };
                } else {
                    let ang = 2.0 * PI * ((k * t) % n) as f64 / n as f64;
                    acc += 2.0 * (re * ang.cos() - im * ang.sin());
                }
            }
            acc / n as f64
        })
        .collect()
}

fn fisg_row(x: &[f64], out: &mut [f64]) {
    let (sensitivity, split_fraction, epsilon) = (2.0, 0.25, 1e-7);
    let n = x.len();
    let mut spec = real_dft(x);
    let split = (spec.len() as f64 * split_fraction) as usize;
    let mags: Vec<f64> = spec.iter().map(|(re, im)| re.hypot(*im)).collect();
    let high: f64 = mags[split..].iter().sum();
    let total: f64 = mags.iter().sum();
    let gate = (-sensitivity * (high / (total + epsilon))).exp();
    for bin in &mut spec[split..] {
        bin.1 = -bin.1;
    }
    let modified = inverse_real_dft(&spec, n);
    for ((o, &xi), m) in out.iter_mut().zip(x).zip(modified) {
        *o = gate * xi + (1.0 - gate) * m;
    }
}

fn fisg_unchecked(x: &Tensor2) -> Tensor2 {
    let mut out = x.map(|_| 0.0);
    let cols = x.cols();
    for r in 0..x.rows() {
        fisg_row(x.row(r), &mut out.data_mut()[r * cols..(r + 1) * cols]);
    }
    out
}

/// Spectral gate over each row; rows need at least [`FISG_MIN_COLS`] features.
pub fn fisg(x: &Tensor2) -> Result<Tensor2, ZooError> {
    eval_entry(&builtin("fisg")?, x)
}

fn spf_element(x: f64, x_prev: f64, x_next: f64) -> f64 {
    let (m, c, beta, freq, chirp_k) = (10.0, 10.0, 2.0, 1.0, 0.5);
    let (a_disrupt, freq_disrupt, coupling_strength) = (0.2, 15.0, 2.0);
    let (a_agitated, freq_agitated, k_blend, laplacian_strength, k_decay) = (0.8, 40.0, 2.0, 5.0, 2.0);
    let (freq_switch, power_switch, a_switch, freq_switch_disrupt) = (50.0, 3.0, 0.5, 25.0);
    let gamma_meta = 2.0;

    let u = (x / c).powi(2);
    let meta = 1.0 + gamma_meta * u * (-u / 1.5).exp();
    let amplitude = beta * u * (-u / 2.0).exp();
    let phase_base = freq * x + chirp_k * x * x * sign(x) / c;

    let energy = x * x + 0.25 * (x_prev * x_prev + x_next * x_next);
    let laplacian = x - 0.5 * (x_prev + x_next);
    let ood_metric = k_blend * (energy - c * c) / (c * c) + laplacian_strength * (laplacian / c).powi(2);
    let alpha = sigmoid(ood_metric);

    let calm = a_disrupt * (freq_disrupt * x).sin();
    let agitated = a_agitated * (freq_agitated * x + laplacian_strength * laplacian).sin();
    let disruption = (1.0 - alpha) * calm + alpha * agitated;
    let coupling = coupling_strength * (0.5 * x_prev - x_next) / c;

    let detail = amplitude * (phase_base + disruption + coupling).sin();
    let g = (-(x.abs() / (k_decay * c)).powi(4)).exp();
    let switch_phase = freq_switch * (x / c).powf(power_switch) + a_switch * (freq_switch_disrupt * x / c).sin();
    let s = if switch_phase.cos() > 0.0 { 1.0 } else { -1.0 };
    m * ((g * x + s * meta * detail) / m).tanh()
}

/// Symmetric phase-flipped activation; neighbours wrap around each row.
pub fn spf(x: &Tensor2) -> Tensor2 {
    let cols = x.cols();
    let mut out = x.map(|_| 0.0);
    for r in 0..x.rows() {
        let row = x.row(r);
        for i in 0..cols {
            let prev = row[(i + cols - 1) % cols];
            let next = row[(i + 1) % cols];
            out.data_mut()[r * cols + i] = spf_element(row[i], prev, next);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprlang::{gelu, sinc};

    fn probe() -> Tensor2 {
        Tensor2::from_vec(5, 5, (0..25).map(|i| -3.0 + 0.25 * i as f64).collect()).unwrap()
    }

    #[test]
    fn names_and_metadata() {
        let entries = all();
        assert_eq!(entries.len(), 10);
        for e in &entries {
            if let Some(expr) = e.expr() {
                assert_eq!(exprlang::parse(&expr.to_string()).unwrap(), *expr);
                assert!(e.flop_cost(&CostModel::default()).unwrap() <= 64);
            }
        }
        assert_eq!(builtin("gelusine").unwrap().expr().unwrap().to_string(), GELUSINE);
        assert!(matches!(builtin("swish"), Err(ZooError::UnknownActivation(_))));
        assert!(!builtin("turbulent").unwrap().is_pointwise());
        assert!(builtin("pler").unwrap().is_pointwise());
    }

    #[test]
    fn zero_at_origin() {
        let z = Tensor2::zeros(3, 4).unwrap();
        for name in ["gelusine", "gelusinc", "gmtu", "turbulent", "pler", "quaternion"] {
            let out = eval_entry(&builtin(name).unwrap(), &z).unwrap();
            assert!(out.data().iter().all(|&v| v == 0.0), "{name}");
        }
    }

    #[test]
    fn gelusinc_half() {
        let e = builtin("gelusinc").unwrap();
        let v = eval_entry(&e, &Tensor2::filled(1, 1, 0.5).unwrap()).unwrap().get(0, 0);
        let want = gelu(0.5) * (1.0 + 1.0 / PI);
        assert!((v - want).abs() < 1e-14);
        assert!((v - 0.45575).abs() < 1e-4);
    }

    #[test]
    fn decompositions() {
        let x = probe();
        let gs = eval_entry(&builtin("gelusine").unwrap(), &x).unwrap();
        let gc = eval_entry(&builtin("gelusinc").unwrap(), &x).unwrap();
        for (i, &v) in x.data().iter().enumerate() {
            assert!((gs.data()[i] - gelu(v) - 0.1 * v.sin()).abs() < 1e-15);
            if gelu(v) != 0.0 {
                let ratio = gc.data()[i] / gelu(v);
                assert!((0.5..=1.5).contains(&ratio));
                assert!((ratio - 1.0 - 0.5 * sinc(v)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gmtu_leak_dominates() {
        let e = builtin("gmtu").unwrap();
        for x in [50.0, -80.0, 1e3] {
            let v = eval_entry(&e, &Tensor2::filled(1, 1, x).unwrap()).unwrap().get(0, 0);
            assert!((v / x - 0.1).abs() < 1e-9);
        }
    }

    #[test]
    fn dft_round_trip() {
        for n in [4, 5, 8, 13] {
            let x: Vec<f64> = (0..n).map(|i| ((i * 7 % 5) as f64) - 1.3).collect();
            let back = inverse_real_dft(&real_dft(&x), n);
            for (a, b) in x.iter().zip(&back) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fisg_shape_rules() {
        let e = builtin("fisg").unwrap();
        assert!(matches!(
            eval_entry(&e, &Tensor2::zeros(2, 3).unwrap()),
            Err(ZooError::ShapeTooSmall { cols: 3, .. })
        ));
        let constant = Tensor2::filled(2, 8, 1.7).unwrap();
        let out = eval_entry(&e, &constant).unwrap();
        for (a, b) in out.data().iter().zip(constant.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(eval_entry(&e, &probe()).unwrap().shape(), (5, 5));
    }

    #[test]
    fn spf_is_bounded_and_shape_preserving() {
        let out = spf(&probe());
        assert_eq!(out.shape(), (5, 5));
        assert!(out.data().iter().all(|v| v.abs() <= 10.0));
        // near-identity for small, smooth inputs
        let small = Tensor2::filled(1, 6, 0.01).unwrap();
        let s = spf(&small);
        assert!(s.data().iter().all(|v| (v - 0.01).abs() < 1e-3));
    }

    #[test]
    fn fd_gradient_checks() {
        let x = Tensor2::from_vec(1, 6, vec![-2.5, -1.0, -0.3, 0.4, 1.1, 2.9]).unwrap();
        let relu = builtin("relu").unwrap();
        let fd = fd_gradient(&relu, &x, DEFAULT_FD_STEP).unwrap();
        let (_, ad) = exprlang::forward_backward(relu.expr().unwrap(), &x).unwrap();
        for (a, b) in fd.data().iter().zip(ad.data()) {
            assert!((a - b).abs() < 1e-7);
        }
        let sin = ZooEntry {
            evaluator: Evaluator::Pointwise(f64::sin),
            ..builtin("pler").unwrap()
        };
        let fd = fd_gradient(&sin, &x, DEFAULT_FD_STEP).unwrap();
        for (g, v) in fd.data().iter().zip(x.data()) {
            assert!((g - v.cos()).abs() < 1e-7);
        }
        // second-order convergence on tanh
        let tanh = ZooEntry {
            evaluator: Evaluator::Pointwise(f64::tanh),
            ..builtin("pler").unwrap()
        };
        let p = Tensor2::filled(1, 1, 0.7).unwrap();
        let exact = 1.0 - 0.7f64.tanh().powi(2);
        let err = |h: f64| (fd_gradient(&tanh, &p, h).unwrap().get(0, 0) - exact).abs();
        let (e1, e2) = (err(1e-2), err(5e-3));
        assert!(e2 < e1 && (e1 / e2 - 4.0).abs() < 0.2);
        assert!(matches!(
            fd_gradient(&builtin("spf").unwrap(), &x, 1e-5),
            Err(ZooError::NotPointwise("spf"))
        ));
    }

    #[test]
    fn forward_only_entries_refuse_backward() {
        let e = builtin("fisg").unwrap();
        let x = Tensor2::zeros(2, 8).unwrap();
        assert!(matches!(
            e.apply_vjp(&x, &x),
            Err(ActivationError::NotDifferentiable(_))
        ));
        let q = builtin("quaternion").unwrap();
        let (out, g) = q.apply_vjp(&probe(), &Tensor2::filled(5, 5, 1.0).unwrap()).unwrap();
        assert_eq!(out, eval_entry(&q, &probe()).unwrap());
        assert!(g.all_finite());
    }
}
