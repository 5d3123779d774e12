//! Small MLP with a pluggable activation, trained by reverse-mode gradients
//! on mean squared error.

use serde::{Deserialize, Serialize};

use crate::datagen::Split;
use crate::exprlang::{CompiledExpr, EvalError, Expr};
use crate::tensor::{ElemOp, Operand, SeededRng, Tensor2, TensorError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ActivationError {
    #[error("activation produced a non-finite value")]
    NonFinite,
    #[error("activation `{0}` has no backward pass")]
    NotDifferentiable(String),
    #[error("activation cannot be applied: {0}")]
    Invalid(String),
}

impl From<EvalError> for ActivationError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::NonFiniteOutput { .. } => ActivationError::NonFinite,
            other => ActivationError::Invalid(other.to_string()),
        }
    }
}

/// Anything the MLP can use between its hidden layers.
pub trait Activation {
    fn apply(&self, x: &Tensor2) -> Result<Tensor2, ActivationError>;

    /// Output and `Jᵀ · upstream`.
    fn apply_vjp(&self, x: &Tensor2, upstream: &Tensor2)
        -> Result<(Tensor2, Tensor2), ActivationError>;

    /// Output plus the elementwise derivative, for pointwise activations that
    /// can produce both in one pass. `None` means callers must use
    /// [`Activation::apply_vjp`].
    fn apply_with_derivative(&self, x: &Tensor2) -> Result<(Tensor2, Option<Tensor2>), ActivationError> {
        Ok((self.apply(x)?, None))
    }
}

impl Activation for CompiledExpr {
    fn apply(&self, x: &Tensor2) -> Result<Tensor2, ActivationError> {
        Ok(self.forward(x)?)
    }

    fn apply_vjp(
        &self,
        x: &Tensor2,
        upstream: &Tensor2,
    ) -> Result<(Tensor2, Tensor2), ActivationError> {
        Ok(self.vjp(x, upstream)?)
    }

    fn apply_with_derivative(&self, x: &Tensor2) -> Result<(Tensor2, Option<Tensor2>), ActivationError> {
        match self.value_and_derivative(x) {
            Some(r) => {
                let (out, d) = r?;
                Ok((out, Some(d)))
            }
            None => Ok((self.forward(x)?, None)),
        }
    }
}

impl Activation for Expr {
    fn apply(&self, x: &Tensor2) -> Result<Tensor2, ActivationError> {
        CompiledExpr::new(self).apply(x)
    }

    fn apply_vjp(
        &self,
        x: &Tensor2,
        upstream: &Tensor2,
    ) -> Result<(Tensor2, Tensor2), ActivationError> {
        CompiledExpr::new(self).apply_vjp(x, upstream)
    }

    fn apply_with_derivative(&self, x: &Tensor2) -> Result<(Tensor2, Option<Tensor2>), ActivationError> {
        CompiledExpr::new(self).apply_with_derivative(x)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("need at least {need} training rows, have {have}")]
    NotEnoughRows { need: usize, have: usize },
    #[error("input has {got} columns, model expects {want}")]
    InputWidth { got: usize, want: usize },
    #[error(transparent)]
    Activation(#[from] ActivationError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Adam,
    Sgd,
}

impl std::str::FromStr for Optimizer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "adam" => Ok(Optimizer::Adam),
            "sgd" => Ok(Optimizer::Sgd),
            other => Err(format!("unknown optimizer `{other}` (adam|sgd)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitScheme {
    /// Weights ~ N(0, 2 / fan_in), biases zero.
    He,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub width: usize,
    pub output_dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub train_steps: usize,
    pub optimizer: Optimizer,
    pub init: InitScheme,
}

impl MlpConfig {
    /// Three hidden layers of 64, lr 1e-3, batch 128, 50 steps, Adam.
    pub fn lab_defaults(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_layers: 3,
            width: 64,
            output_dim: 1,
            learning_rate: 1e-3,
            batch_size: 128,
            train_steps: 50,
            optimizer: Optimizer::Adam,
            init: InitScheme::He,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let dims = [
            ("input_dim", self.input_dim),
            ("hidden_layers", self.hidden_layers),
            ("width", self.width),
            ("output_dim", self.output_dim),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(NnError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(NnError::InvalidConfig(format!(
                "learning_rate {} must be finite and nonnegative",
                self.learning_rate
            )));
        }
        Ok(())
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![(self.input_dim, self.width)];
        for _ in 1..self.hidden_layers {
            dims.push((self.width, self.width));
        }
        dims.push((self.width, self.output_dim));
        dims
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `fan_in x fan_out`.
    pub weight: Tensor2,
    /// `1 x fan_out`.
    pub bias: Tensor2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AdamState {
    m: Vec<Layer>,
    v: Vec<Layer>,
    t: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
    adam: Option<AdamState>,
}

impl MlpParams {
    pub fn from_layers(layers: Vec<Layer>) -> Self {
        Self { layers, adam: None }
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.all_finite() && l.bias.all_finite())
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Same layer shapes, every entry zero.
    pub fn zeros_like(&self) -> MlpParams {
        MlpParams::from_layers(zero_layers(&self.layers))
    }
}

fn zero_layers(layers: &[Layer]) -> Vec<Layer> {
    layers
        .iter()
        .map(|l| Layer {
            weight: l.weight.map(|_| 0.0),
            bias: l.bias.map(|_| 0.0),
        })
        .collect()
}

pub fn init_params(cfg: &MlpConfig, rng: &mut SeededRng) -> Result<MlpParams, NnError> {
    cfg.validate()?;
    let mut layers = Vec::new();
    for (fan_in, fan_out) in cfg.layer_dims() {
        let sd = (2.0 / fan_in as f64).sqrt();
        layers.push(Layer {
            weight: Tensor2::rand_normal(rng, fan_in, fan_out, 0.0, sd)?,
            bias: Tensor2::zeros(1, fan_out)?,
        });
    }
    Ok(MlpParams::from_layers(layers))
}

/// Intermediate values of a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer (the network input, then each hidden activation).
    pub layer_inputs: Vec<Tensor2>,
    /// Pre-activation of each hidden layer.
    pub pre_activations: Vec<Tensor2>,
    /// Elementwise activation derivative per hidden layer, when the
    /// activation supplied one during a training pass.
    pub derivatives: Vec<Option<Tensor2>>,
}

pub fn forward_mlp(
    params: &MlpParams,
    activation: &dyn Activation,
    x: &Tensor2,
) -> Result<(Tensor2, ForwardCache), NnError> {
    forward_impl(params, activation, x, false)
}

fn forward_impl(
    params: &MlpParams,
    activation: &dyn Activation,
    x: &Tensor2,
    training: bool,
) -> Result<(Tensor2, ForwardCache), NnError> {
    let want = params.layers[0].weight.rows();
    if x.cols() != want {
        return Err(NnError::InputWidth { got: x.cols(), want });
    }
    let mut layer_inputs = Vec::with_capacity(params.layers.len());
    let mut pre_activations = Vec::with_capacity(params.layers.len() - 1);
    let mut derivatives = Vec::with_capacity(params.layers.len() - 1);
    let mut h = x.clone();
    let last = params.layers.len() - 1;
    for (i, layer) in params.layers.iter().enumerate() {
        let z = h.matmul(&layer.weight)?.add_row_bias(&layer.bias)?;
        layer_inputs.push(h);
        if i == last {
            h = z;
        } else if training {
            let (out, d) = activation.apply_with_derivative(&z)?;
            h = out;
            derivatives.push(d);
            pre_activations.push(z);
        } else {
            h = activation.apply(&z)?;
            pre_activations.push(z);
        }
    }
    Ok((
        h,
        ForwardCache {
            layer_inputs,
            pre_activations,
            derivatives,
        },
    ))
}

pub fn mse(pred: &Tensor2, target: &Tensor2) -> f64 {
    let n = pred.len() as f64;
    pred.data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n
}

/// MSE over the batch and its gradient with respect to every parameter.
pub fn loss_and_grads(
    params: &MlpParams,
    activation: &dyn Activation,
    x: &Tensor2,
    y: &Tensor2,
) -> Result<(f64, MlpParams), NnError> {
    let (pred, cache) = forward_impl(params, activation, x, true)?;
    let loss = mse(&pred, y);
    let n = pred.len() as f64;
    let dpred = pred.with_data(
        pred.data()
            .iter()
            .zip(y.data())
            .map(|(p, t)| 2.0 * (p - t) / n)
            .collect(),
    );
    let mut grads = zero_layers(&params.layers);
    let mut upstream = dpred;
    for i in (0..params.layers.len()).rev() {
        let layer = &params.layers[i];
        grads[i].weight = cache.layer_inputs[i].t_matmul(&upstream)?;
        grads[i].bias = upstream.sum_rows();
        if i == 0 {
            break;
        }
        let d_hidden = upstream.matmul_t(&layer.weight)?;
        upstream = match &cache.derivatives[i - 1] {
            Some(d) => d_hidden.elementwise(Operand::Tensor(d), ElemOp::Mul)?,
            None => activation.apply_vjp(&cache.pre_activations[i - 1], &d_hidden)?.1,
        };
    }
    Ok((loss, MlpParams::from_layers(grads)))
}

fn apply_update(params: &mut MlpParams, grads: &MlpParams, cfg: &MlpConfig) {
    let lr = cfg.learning_rate;
    match cfg.optimizer {
        Optimizer::Sgd => {
            for (p, g) in params.layers.iter_mut().zip(&grads.layers) {
                for (w, gw) in p.weight.data_mut().iter_mut().zip(g.weight.data()) {
                    *w -= lr * gw;
                }
                for (b, gb) in p.bias.data_mut().iter_mut().zip(g.bias.data()) {
                    *b -= lr * gb;
                }
            }
        }
        Optimizer::Adam => {
            let state = params.adam.get_or_insert_with(|| AdamState {
                m: zero_layers(&grads.layers),
                v: zero_layers(&grads.layers),
                t: 0,
            });
            state.t += 1;
            let c1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
            let c2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
            let step = |theta: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64]| {
                for i in 0..theta.len() {
                    m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                    v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                    let m_hat = m[i] / c1;
                    let v_hat = v[i] / c2;
                    theta[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                }
            };
            for (i, g) in grads.layers.iter().enumerate() {
                let p = &mut params.layers[i];
                step(
                    p.weight.data_mut(),
                    state.m[i].weight.data_mut(),
                    state.v[i].weight.data_mut(),
                    g.weight.data(),
                );
                step(
                    p.bias.data_mut(),
                    state.m[i].bias.data_mut(),
                    state.v[i].bias.data_mut(),
                    g.bias.data(),
                );
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// MSE over the whole training split after the last step; `+inf` when diverged.
    pub final_train_mse: f64,
    pub loss_trace: Vec<f64>,
    pub steps: usize,
    pub wall_time_secs: f64,
    /// Step at which the loss (or the activation) went non-finite.
    pub diverged_at: Option<usize>,
}

impl TrainReport {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }
}

#[cfg(not(target_arch = "wasm32"))]
pub(crate) fn stopwatch() -> impl Fn() -> f64 {
    let start = std::time::Instant::now();
    move || start.elapsed().as_secs_f64()
}

#[cfg(target_arch = "wasm32")]
pub(crate) fn stopwatch() -> impl Fn() -> f64 {
    || 0.0
}

/// Train from a fresh initialization for exactly `cfg.train_steps` steps on
/// minibatches drawn with replacement from `data`.
///
/// A non-finite loss stops training and is reported through
/// [`TrainReport::diverged_at`]; it is not an error. Errors are reserved for
/// bad configurations, short datasets, and activations without a backward pass.
pub fn train(
    cfg: &MlpConfig,
    activation: &dyn Activation,
    data: &Split,
    rng: &SeededRng,
) -> Result<(MlpParams, TrainReport), NnError> {
    fit(cfg, activation, data, rng, true)
}

/// [`train`], optionally skipping the full pass over the training split at
/// the end. When `measure_train` is false the report's `final_train_mse` is
/// the loss of the last minibatch instead.
pub fn fit(
    cfg: &MlpConfig,
    activation: &dyn Activation,
    data: &Split,
    rng: &SeededRng,
    measure_train: bool,
) -> Result<(MlpParams, TrainReport), NnError> {
    cfg.validate()?;
    if data.x.rows() < cfg.batch_size {
        return Err(NnError::NotEnoughRows {
            need: cfg.batch_size,
            have: data.x.rows(),
        });
    }
    if data.x.cols() != cfg.input_dim {
        return Err(NnError::InputWidth {
            got: data.x.cols(),
            want: cfg.input_dim,
        });
    }
    let elapsed = stopwatch();
    let mut params = init_params(cfg, &mut rng.substream("init"))?;
    let mut batches = rng.substream("minibatch");
    let mut trace = Vec::with_capacity(cfg.train_steps);
    let mut diverged_at = None;
    let rows = data.x.rows();
    let mut idx = vec![0usize; cfg.batch_size];
    for step in 0..cfg.train_steps {
        for i in idx.iter_mut() {
            *i = batches.below(rows);
        }
        let xb = data.x.select_rows(&idx)?;
        let yb = data.y.select_rows(&idx)?;
        let (loss, grads) = match loss_and_grads(&params, activation, &xb, &yb) {
            Ok(v) => v,
            Err(NnError::Activation(ActivationError::NonFinite)) => {
                diverged_at = Some(step);
                break;
            }
            Err(e) => return Err(e),
        };
        if !loss.is_finite() || !grads.all_finite() {
            diverged_at = Some(step);
            break;
        }
        trace.push(loss);
        apply_update(&mut params, &grads, cfg);
        if !params.all_finite() {
            diverged_at = Some(step);
            break;
        }
    }
    let final_train_mse = if diverged_at.is_some() {
        f64::INFINITY
    } else if measure_train {
        evaluate(&params, activation, data)
    } else {
        trace.last().copied().unwrap_or_else(|| evaluate(&params, activation, data))
    };
    if diverged_at.is_none() && !final_train_mse.is_finite() {
        diverged_at = Some(cfg.train_steps);
    }
    let steps = trace.len();
    Ok((
        params,
        TrainReport {
            final_train_mse,
            loss_trace: trace,
            steps,
            wall_time_secs: elapsed(),
            diverged_at,
        },
    ))
}

/// Mean squared error of the model on `split`; `+inf` if anything is non-finite.
pub fn evaluate(params: &MlpParams, activation: &dyn Activation, split: &Split) -> f64 {
    match forward_mlp(params, activation, &split.x) {
        Ok((pred, _)) => {
            let v = mse(&pred, &split.y);
            if v.is_finite() {
                v
            } else {
                f64::INFINITY
            }
        }
        Err(_) => f64::INFINITY,
    }
}

/// Every hidden-layer pre-activation value, layer by layer.
pub fn collect_preactivations(
    params: &MlpParams,
    activation: &dyn Activation,
    x: &Tensor2,
) -> Result<Vec<f64>, NnError> {
    let (_, cache) = forward_mlp(params, activation, x)?;
    Ok(cache
        .pre_activations
        .into_iter()
        .flat_map(|t| t.into_vec())
        .collect())
}
