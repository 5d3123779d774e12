//! Tape evaluation of expressions with exact reverse-mode derivatives.
//!
//! Each node is evaluated over the whole flattened tensor. Pointwise nodes
//! have diagonal Jacobians; batch-stat nodes couple every element, and the
//! backward pass carries the full vector-Jacobian product through them.

use std::f64::consts::PI;

use super::{BatchStat, BinaryOp, Expr, UnaryOp};
use crate::tensor::Tensor2;

/// Added to the population standard deviation by `batch-std`.
pub const STD_EPSILON: f64 = 1e-6;
/// Magnitude added to a division's denominator, keeping its sign.
pub const DIV_GUARD: f64 = 1e-12;
/// Lower clamp applied to the argument of `log1p`.
pub const LOG1P_FLOOR: f64 = -1.0 + 1e-12;

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044_715;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    /// `node` is the pre-order id of the first node that went non-finite.
    #[error("non-finite value produced at node {node}")]
    NonFiniteOutput { node: usize },
    #[error("shape mismatch: input {input:?}, upstream {upstream:?}")]
    ShapeMismatch {
        input: (usize, usize),
        upstream: (usize, usize),
    },
}

/// `(1 + tanh(u)) / 2` of the tanh-form GELU, computed as a logistic of
/// `2u` (one `exp` instead of a `tanh`).
#[inline]
fn gelu_gate(x: f64) -> f64 {
    1.0 / (1.0 + (-2.0 * GELU_K * (x + GELU_C * x * x * x)).exp())
}

#[inline]
pub fn gelu(x: f64) -> f64 {
    x * gelu_gate(x)
}

#[inline]
pub fn gelu_grad(x: f64) -> f64 {
    gelu_dual(x).1
}

#[inline]
fn gelu_dual(x: f64) -> (f64, f64) {
    let s = gelu_gate(x);
    let du = GELU_K * (1.0 + 3.0 * GELU_C * x * x);
    (x * s, s + 2.0 * x * s * (1.0 - s) * du)
}

/// Normalized sinc, `sin(pi x) / (pi x)`, with `sinc(0) = 1`.
#[inline]
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

#[inline]
pub fn sinc_grad(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        // series: -pi^2 x / 3 + pi^4 x^3 / 30
        let p2 = PI * PI;
        -p2 * x / 3.0 + p2 * p2 * x * x * x / 30.0
    } else {
        ((PI * x).cos() - sinc(x)) / x
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Sign with `sign(0) = 0`.
#[inline]
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `a^b`, by repeated multiplication when `b` is a small integer.
#[inline]
fn pow(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= 16.0 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

#[inline]
fn guarded_denominator(d: f64) -> f64 {
    if d < 0.0 {
        d - DIV_GUARD
    } else {
        d + DIV_GUARD
    }
}

#[inline]
pub(crate) fn unary_value(op: UnaryOp, x: f64) -> f64 {
    match op {
        UnaryOp::Neg => -x,
        UnaryOp::Abs => x.abs(),
        UnaryOp::Sign => sign(x),
        UnaryOp::Sin => x.sin(),
        UnaryOp::Cos => x.cos(),
        UnaryOp::Tanh => x.tanh(),
        UnaryOp::Exp => x.exp(),
        UnaryOp::Log1p => x.max(LOG1P_FLOOR).ln_1p(),
        UnaryOp::Sqrt => x.max(0.0).sqrt(),
        UnaryOp::Relu => {
            if x > 0.0 {
                x
            } else {
                0.0
            }
        }
        UnaryOp::Gelu => gelu(x),
        UnaryOp::Sinc => sinc(x),
        UnaryOp::Sigmoid => sigmoid(x),
    }
}

/// d op / dx at `x`, given the already computed output `y`.
#[inline]
fn unary_grad(op: UnaryOp, x: f64, y: f64) -> f64 {
    match op {
        UnaryOp::Neg => -1.0,
        UnaryOp::Abs => sign(x),
        UnaryOp::Sign => 0.0,
        UnaryOp::Sin => x.cos(),
        UnaryOp::Cos => -x.sin(),
        UnaryOp::Tanh => 1.0 - y * y,
        UnaryOp::Exp => y,
        UnaryOp::Log1p => {
            if x > LOG1P_FLOOR {
                1.0 / (1.0 + x)
            } else {
                0.0
            }
        }
        UnaryOp::Sqrt => {
            if x > 0.0 {
                0.5 / y
            } else {
                0.0
            }
        }
        UnaryOp::Relu => {
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        UnaryOp::Gelu => gelu_grad(x),
        UnaryOp::Sinc => sinc_grad(x),
        UnaryOp::Sigmoid => y * (1.0 - y),
    }
}

/// Value and derivative together, sharing the expensive part.
#[inline]
fn unary_dual(op: UnaryOp, x: f64) -> (f64, f64) {
    match op {
        UnaryOp::Sin => {
            let (s, c) = x.sin_cos();
            (s, c)
        }
        UnaryOp::Cos => {
            let (s, c) = x.sin_cos();
            (c, -s)
        }
        UnaryOp::Gelu => gelu_dual(x),
        UnaryOp::Sinc if x.abs() >= 1e-4 => {
            let (s, c) = (PI * x).sin_cos();
            let y = s / (PI * x);
            (y, (c - y) / x)
        }
        _ => {
            let y = unary_value(op, x);
            (y, unary_grad(op, x, y))
        }
    }
}

#[inline]
pub(crate) fn binary_value(op: BinaryOp, a: f64, b: f64) -> f64 {
    match op {
        BinaryOp::Add => a + b,
        BinaryOp::Sub => a - b,
        BinaryOp::Mul => a * b,
        BinaryOp::Div => a / guarded_denominator(b),
        // ties resolve to the left operand
        BinaryOp::Min => {
            if a <= b {
                a
            } else {
                b
            }
        }
        BinaryOp::Max => {
            if a >= b {
                a
            } else {
                b
            }
        }
        BinaryOp::Pow => pow(a, b),
    }
}

/// Partial derivatives (d/da, d/db). The exponent of `pow` is constant, so
/// its partial is reported as zero.
#[inline]
fn binary_grad(op: BinaryOp, a: f64, b: f64) -> (f64, f64) {
    match op {
        BinaryOp::Add => (1.0, 1.0),
        BinaryOp::Sub => (1.0, -1.0),
        BinaryOp::Mul => (b, a),
        BinaryOp::Div => {
            let d = guarded_denominator(b);
            (1.0 / d, -a / (d * d))
        }
        BinaryOp::Min => {
            if a <= b {
                (1.0, 0.0)
            } else {
                (0.0, 1.0)
            }
        }
        BinaryOp::Max => {
            if a >= b {
                (1.0, 0.0)
            } else {
                (0.0, 1.0)
            }
        }
        BinaryOp::Pow => {
            if b == 0.0 {
                (0.0, 0.0)
            } else {
                (b * pow(a, b - 1.0), 0.0)
            }
        }
    }
}

/// Block length for pointwise interpretation.
const CHUNK: usize = 256;

#[inline(always)]
fn lane<const ON: bool>(buf: &[f64], slot: usize, m: usize) -> &[f64] {
    if ON {
        &buf[slot * CHUNK..slot * CHUNK + m]
    } else {
        &[]
    }
}

#[inline(always)]
fn map_block<const DERIV: bool>(
    f: impl Fn(f64) -> (f64, f64),
    g: impl Fn(f64) -> f64,
    x: &[f64],
    dx: &[f64],
    v: &mut [f64],
    d: &mut [f64],
) {
    if DERIV {
        for i in 0..x.len() {
            let (y, dy) = f(x[i]);
            v[i] = y;
            d[i] = dy * dx[i];
        }
    } else {
        for (o, &xi) in v.iter_mut().zip(x) {
            *o = g(xi);
        }
    }
}

fn unary_block<const DERIV: bool>(op: UnaryOp, x: &[f64], dx: &[f64], v: &mut [f64], d: &mut [f64]) {
    macro_rules! dispatch {
        ($($name:ident),*) => {
            match op {
                $(UnaryOp::$name => map_block::<DERIV>(
                    |t| unary_dual(UnaryOp::$name, t),
                    |t| unary_value(UnaryOp::$name, t),
                    x, dx, v, d,
                ),)*
            }
        };
    }
    dispatch!(Neg, Abs, Sign, Sin, Cos, Tanh, Exp, Log1p, Sqrt, Relu, Gelu, Sinc, Sigmoid)
}

fn binary_block<const DERIV: bool>(
    op: BinaryOp,
    (a, da): (&[f64], &[f64]),
    (b, db): (&[f64], &[f64]),
    v: &mut [f64],
    d: &mut [f64],
) {
    macro_rules! dispatch {
        ($($name:ident),*) => {
            match op {
                $(BinaryOp::$name => {
                    if DERIV {
                        for i in 0..a.len() {
                            v[i] = binary_value(BinaryOp::$name, a[i], b[i]);
                            let (ga, gb) = binary_grad(BinaryOp::$name, a[i], b[i]);
                            d[i] = ga * da[i] + gb * db[i];
                        }
                    } else {
                        for i in 0..a.len() {
                            v[i] = binary_value(BinaryOp::$name, a[i], b[i]);
                        }
                    }
                })*
            }
        };
    }
    dispatch!(Add, Sub, Mul, Div, Min, Max, Pow)
}

#[derive(Debug, Clone, Copy)]
enum Instr {
    Input,
    Const(f64),
    Unary(UnaryOp, usize),
    Binary(BinaryOp, usize, usize),
    Batch(BatchStat, usize),
}

/// An expression flattened into post-order instructions over value slots.
#[derive(Debug, Clone)]
pub struct CompiledExpr {
    instrs: Vec<Instr>,
    /// Pre-order node id for each instruction.
    node_ids: Vec<usize>,
    pointwise: bool,
}

/// Values of every slot from a forward pass, kept for the backward pass.
struct Tape {
    values: Vec<Vec<f64>>,
    /// Population std (without epsilon) and mean, per batch-std slot.
    std_parts: Vec<Option<(f64, f64)>>,
}

impl CompiledExpr {
    pub fn new(expr: &Expr) -> Self {
        let mut instrs = Vec::new();
        let mut node_ids = Vec::new();
        let mut next_id = 0usize;
        fn emit(
            e: &Expr,
            instrs: &mut Vec<Instr>,
            ids: &mut Vec<usize>,
            next_id: &mut usize,
        ) -> usize {
            let my_id = *next_id;
            *next_id += 1;
            let instr = match e {
                Expr::Input => Instr::Input,
                Expr::Const(v) => Instr::Const(*v),
                Expr::Unary(op, c) => Instr::Unary(*op, emit(c, instrs, ids, next_id)),
                Expr::Batch(s, c) => Instr::Batch(*s, emit(c, instrs, ids, next_id)),
                Expr::Binary(op, l, r) => {
                    let li = emit(l, instrs, ids, next_id);
                    let ri = emit(r, instrs, ids, next_id);
                    Instr::Binary(*op, li, ri)
                }
            };
            instrs.push(instr);
            ids.push(my_id);
            instrs.len() - 1
        }
        emit(expr, &mut instrs, &mut node_ids, &mut next_id);
        let pointwise = !instrs.iter().any(|i| matches!(i, Instr::Batch(..)));
        Self {
            instrs,
            node_ids,
            pointwise,
        }
    }

    fn run(&self, input: &[f64]) -> Tape {
        let n = input.len();
        let mut values: Vec<Vec<f64>> = Vec::with_capacity(self.instrs.len());
        let mut std_parts = vec![None; self.instrs.len()];
        for (slot, instr) in self.instrs.iter().enumerate() {
            let v = match *instr {
                Instr::Input => input.to_vec(),
                Instr::Const(c) => vec![c; n],
                Instr::Unary(op, c) => values[c].iter().map(|&x| unary_value(op, x)).collect(),
                Instr::Binary(op, l, r) => values[l]
                    .iter()
                    .zip(&values[r])
                    .map(|(&a, &b)| binary_value(op, a, b))
                    .collect(),
                Instr::Batch(stat, c) => {
                    let child = &values[c];
                    let mean = child.iter().sum::<f64>() / n as f64;
                    match stat {
                        BatchStat::Mean => vec![mean; n],
                        BatchStat::Std => {
                            let var =
                                child.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
                            let sd = var.sqrt();
                            std_parts[slot] = Some((sd, mean));
                            vec![sd + STD_EPSILON; n]
                        }
                    }
                }
            };
            values.push(v);
        }
        Tape { values, std_parts }
    }

    fn first_non_finite(&self, tape: &Tape) -> Option<usize> {
        tape.values
            .iter()
            .position(|v| v.iter().any(|x| !x.is_finite()))
            .map(|slot| self.node_ids[slot])
    }

    fn check_output(&self, tape: &Tape) -> Result<(), EvalError> {
        let out = tape.values.last().expect("nonempty program");
        if out.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(EvalError::NonFiniteOutput {
                node: self.first_non_finite(tape).unwrap_or(0),
            })
        }
    }

    /// Interpretation of a pointwise program over blocks of [`CHUNK`]
    /// elements; with `DERIV` the derivative is carried forward alongside
    /// each value.
    fn run_pointwise<const DERIV: bool>(&self, input: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let k = self.instrs.len();
        let mut out = Vec::with_capacity(input.len());
        let mut dout = Vec::with_capacity(if DERIV { input.len() } else { 0 });
        let mut vals = vec![0.0; k * CHUNK];
        let mut ders = vec![0.0; if DERIV { k * CHUNK } else { 0 }];
        for block in input.chunks(CHUNK) {
            let m = block.len();
            for (slot, instr) in self.instrs.iter().enumerate() {
                let (done, rest) = vals.split_at_mut(slot * CHUNK);
                let v = &mut rest[..m];
                let (ddone, drest) = ders.split_at_mut(if DERIV { slot * CHUNK } else { 0 });
                let d = &mut drest[..if DERIV { m } else { 0 }];
                match *instr {
                    Instr::Input => {
                        v.copy_from_slice(block);
                        d.fill(1.0);
                    }
                    Instr::Const(c) => {
                        v.fill(c);
                        d.fill(0.0);
                    }
                    Instr::Unary(op, c) => {
                        unary_block::<DERIV>(op, &done[c * CHUNK..c * CHUNK + m], lane::<DERIV>(ddone, c, m), v, d)
                    }
                    Instr::Binary(op, l, r) => binary_block::<DERIV>(
                        op,
                        (&done[l * CHUNK..l * CHUNK + m], lane::<DERIV>(ddone, l, m)),
                        (&done[r * CHUNK..r * CHUNK + m], lane::<DERIV>(ddone, r, m)),
                        v,
                        d,
                    ),
                    Instr::Batch(..) => unreachable!("pointwise program"),
                }
            }
            out.extend_from_slice(&vals[(k - 1) * CHUNK..(k - 1) * CHUNK + m]);
            if DERIV {
                dout.extend_from_slice(&ders[(k - 1) * CHUNK..(k - 1) * CHUNK + m]);
            }
        }
        (out, dout)
    }

    /// Output and elementwise derivative of a pointwise program in one pass;
    /// `None` when the program reads batch statistics.
    pub fn value_and_derivative(&self, input: &Tensor2) -> Option<Result<(Tensor2, Tensor2), EvalError>> {
        if !self.pointwise {
            return None;
        }
        let (out, d) = self.run_pointwise::<true>(input.data());
        if out.iter().chain(&d).any(|v| !v.is_finite()) {
            let tape = self.run(input.data());
            return Some(Err(EvalError::NonFiniteOutput {
                node: self.first_non_finite(&tape).unwrap_or(0),
            }));
        }
        Some(Ok((input.with_data(out), input.with_data(d))))
    }

    /// True when no node reads batch statistics.
    pub fn is_pointwise(&self) -> bool {
        self.pointwise
    }

    pub fn forward(&self, input: &Tensor2) -> Result<Tensor2, EvalError> {
        if self.pointwise {
            let (out, _) = self.run_pointwise::<false>(input.data());
            if out.iter().all(|v| v.is_finite()) {
                return Ok(input.with_data(out));
            }
        }
        let mut tape = self.run(input.data());
        self.check_output(&tape)?;
        let out = tape.values.pop().expect("nonempty program");
        Ok(input.with_data(out))
    }

    /// Output and the vector-Jacobian product `Jᵀ · upstream`.
    pub fn vjp(&self, input: &Tensor2, upstream: &Tensor2) -> Result<(Tensor2, Tensor2), EvalError> {
        if input.shape() != upstream.shape() {
            return Err(EvalError::ShapeMismatch {
                input: input.shape(),
                upstream: upstream.shape(),
            });
        }
        let tape = self.run(input.data());
        self.check_output(&tape)?;
        let n = input.len();
        let last = self.instrs.len() - 1;
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; self.instrs.len()];
        adj[last] = Some(upstream.data().to_vec());
        let mut grad_input = vec![0.0; n];

        fn acc(slot: &mut Option<Vec<f64>>, n: usize) -> &mut Vec<f64> {
            slot.get_or_insert_with(|| vec![0.0; n])
        }

        for slot in (0..self.instrs.len()).rev() {
            let Some(g) = adj[slot].take() else { continue };
            match self.instrs[slot] {
                Instr::Input => {
                    for (gi, gv) in grad_input.iter_mut().zip(&g) {
                        *gi += gv;
                    }
                }
                Instr::Const(_) => {}
                Instr::Unary(op, c) => {
                    let xs = &tape.values[c];
                    let ys = &tape.values[slot];
                    let target = acc(&mut adj[c], n);
                    for i in 0..n {
                        target[i] += g[i] * unary_grad(op, xs[i], ys[i]);
                    }
                }
                Instr::Binary(op, l, r) => {
                    let (a, b) = (&tape.values[l], &tape.values[r]);
                    let mut ga = vec![0.0; n];
                    let mut gb = vec![0.0; n];
                    for i in 0..n {
                        let (da, db) = binary_grad(op, a[i], b[i]);
                        ga[i] = g[i] * da;
                        gb[i] = g[i] * db;
                    }
                    for (t, v) in acc(&mut adj[l], n).iter_mut().zip(ga) {
                        *t += v;
                    }
                    for (t, v) in acc(&mut adj[r], n).iter_mut().zip(gb) {
                        *t += v;
                    }
                }
                Instr::Batch(stat, c) => {
                    let total: f64 = g.iter().sum();
                    match stat {
                        BatchStat::Mean => {
                            let share = total / n as f64;
                            for t in acc(&mut adj[c], n).iter_mut() {
                                *t += share;
                            }
                        }
                        BatchStat::Std => {
                            let (sd, mean) = tape.std_parts[slot].expect("std slot recorded");
                            if sd > 0.0 {
                                let xs = &tape.values[c];
                                let scale = total / (n as f64 * sd);
                                let target = acc(&mut adj[c], n);
                                for i in 0..n {
                                    target[i] += scale * (xs[i] - mean);
                                }
                            }
                        }
                    }
                }
            }
        }
        if grad_input.iter().any(|v| !v.is_finite()) {
            return Err(EvalError::NonFiniteOutput {
                node: self.first_non_finite(&tape).unwrap_or(0),
            });
        }
        let out = tape.values[last].clone();
        Ok((input.with_data(out), input.with_data(grad_input)))
    }
}

pub fn forward(expr: &Expr, input: &Tensor2) -> Result<Tensor2, EvalError> {
    CompiledExpr::new(expr).forward(input)
}

/// Output and `d output / d input` contracted with an all-ones upstream; for
/// pointwise expressions this is the elementwise derivative.
pub fn forward_backward(expr: &Expr, input: &Tensor2) -> Result<(Tensor2, Tensor2), EvalError> {
    let ones = input.map(|_| 1.0);
    CompiledExpr::new(expr).vjp(input, &ones)
}

pub fn vjp(expr: &Expr, input: &Tensor2, upstream: &Tensor2) -> Result<(Tensor2, Tensor2), EvalError> {
    CompiledExpr::new(expr).vjp(input, upstream)
}
