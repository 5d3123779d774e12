//! The activation-function expression language.
//!
//! An [`Expr`] is a tree over a single tensor input `x`. Pointwise nodes act
//! elementwise; `batch-mean` / `batch-std` reduce over every element of the
//! tensor and broadcast the scalar back. Text form is an s-expression:
//!
//! ```text
//! (add (gelu x) (mul 0.1 (sin x)))
//! ```

mod cost;
mod eval;
mod parse;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use cost::{check_budget, cost, CostModel, CostModelError, FlopBudget};
pub use eval::{
    forward, forward_backward, gelu, gelu_grad, sigmoid, sign, sinc, sinc_grad, vjp, CompiledExpr,
    EvalError, STD_EPSILON,
};
pub use parse::{parse, ParseError, MAX_NESTING};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UnaryOp {
    Neg,
    Abs,
    Sign,
    Sin,
    Cos,
    Tanh,
    Exp,
    Log1p,
    Sqrt,
    Relu,
    Gelu,
    Sinc,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Min,
    Max,
    /// Exponent must be a constant.
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BatchStat {
    Mean,
    Std,
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 13] = [
        UnaryOp::Neg,
        UnaryOp::Abs,
        UnaryOp::Sign,
        UnaryOp::Sin,
        UnaryOp::Cos,
        UnaryOp::Tanh,
        UnaryOp::Exp,
        UnaryOp::Log1p,
        UnaryOp::Sqrt,
        UnaryOp::Relu,
        UnaryOp::Gelu,
        UnaryOp::Sinc,
        UnaryOp::Sigmoid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "neg",
            UnaryOp::Abs => "abs",
            UnaryOp::Sign => "sign",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Tanh => "tanh",
            UnaryOp::Exp => "exp",
            UnaryOp::Log1p => "log1p",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Relu => "relu",
            UnaryOp::Gelu => "gelu",
            UnaryOp::Sinc => "sinc",
            UnaryOp::Sigmoid => "sigmoid",
        }
    }
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 7] = [
        BinaryOp::Add,
        BinaryOp::Sub,
        BinaryOp::Mul,
        BinaryOp::Div,
        BinaryOp::Min,
        BinaryOp::Max,
        BinaryOp::Pow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
            BinaryOp::Min => "min",
            BinaryOp::Max => "max",
            BinaryOp::Pow => "pow",
        }
    }
}

impl BatchStat {
    pub const ALL: [BatchStat; 2] = [BatchStat::Mean, BatchStat::Std];

    pub fn name(self) -> &'static str {
        match self {
            BatchStat::Mean => "batch-mean",
            BatchStat::Std => "batch-std",
        }
    }
}

/// Activation-function AST.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Input,
    Const(f64),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Batch(BatchStat, Box<Expr>),
}

/// Structural problem found by [`Expr::validate`].
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ValidationError {
    #[error("pow exponent must be a constant")]
    NonConstExponent,
    #[error("constant {0} is not finite")]
    NonFiniteConst(f64),
}

impl Expr {
    pub fn x() -> Expr {
        Expr::Input
    }

    pub fn c(value: f64) -> Expr {
        Expr::Const(value)
    }

    pub fn unary(op: UnaryOp, child: Expr) -> Expr {
        Expr::Unary(op, Box::new(child))
    }

    pub fn binary(op: BinaryOp, left: Expr, right: Expr) -> Expr {
        Expr::Binary(op, Box::new(left), Box::new(right))
    }

    pub fn batch(stat: BatchStat, child: Expr) -> Expr {
        Expr::Batch(stat, Box::new(child))
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Input | Expr::Const(_) => vec![],
            Expr::Unary(_, c) | Expr::Batch(_, c) => vec![c],
            Expr::Binary(_, l, r) => vec![l, r],
        }
    }

    /// Number of nodes.
    pub fn size(&self) -> usize {
        1 + self.children().iter().map(|c| c.size()).sum::<usize>()
    }

    /// Depth of the tree; a leaf has depth 1.
    pub fn depth(&self) -> usize {
        1 + self.children().iter().map(|c| c.depth()).max().unwrap_or(0)
    }

    pub fn has_batch_stat(&self) -> bool {
        matches!(self, Expr::Batch(..)) || self.children().iter().any(|c| c.has_batch_stat())
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        match self {
            Expr::Input => Ok(()),
            Expr::Const(v) if !v.is_finite() => Err(ValidationError::NonFiniteConst(*v)),
            Expr::Const(_) => Ok(()),
            Expr::Binary(BinaryOp::Pow, _, r) if !matches!(**r, Expr::Const(_)) => {
                Err(ValidationError::NonConstExponent)
            }
            _ => self.children().iter().try_for_each(|c| c.validate()),
        }
    }

    /// Nodes in pre-order; index in this list is the node id used by errors.
    pub fn preorder(&self) -> Vec<&Expr> {
        let mut out = Vec::with_capacity(self.size());
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            out.push(node);
            let children = node.children();
            stack.extend(children.into_iter().rev());
        }
        out
    }

    /// Mutable reference to the node with pre-order id `target`.
    pub fn node_mut(&mut self, target: usize) -> Option<&mut Expr> {
        fn walk<'a>(e: &'a mut Expr, target: usize, next: &mut usize) -> Option<&'a mut Expr> {
            if *next == target {
                return Some(e);
            }
            *next += 1;
            match e {
                Expr::Input | Expr::Const(_) => None,
                Expr::Unary(_, c) | Expr::Batch(_, c) => walk(c, target, next),
                Expr::Binary(_, l, r) => {
                    if let Some(found) = walk(l, target, next) {
                        return Some(found);
                    }
                    walk(r, target, next)
                }
            }
        }
        let mut next = 0;
        walk(self, target, &mut next)
    }

    /// Pre-order depth of each node (root = 1), aligned with [`Expr::preorder`].
    pub fn node_depths(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.size());
        let mut stack = vec![(self, 1usize)];
        while let Some((node, d)) = stack.pop() {
            out.push(d);
            for c in node.children().into_iter().rev() {
                stack.push((c, d + 1));
            }
        }
        out
    }
}

pub(crate) fn format_number(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Input => f.write_str("x"),
            Expr::Const(v) => f.write_str(&format_number(*v)),
            Expr::Unary(op, c) => write!(f, "({} {})", op.name(), c),
            Expr::Binary(op, l, r) => write!(f, "({} {} {})", op.name(), l, r),
            Expr::Batch(stat, c) => write!(f, "({} {})", stat.name(), c),
        }
    }
}

/// Canonical text form; `parse(&print(e)) == e`.
pub fn print(expr: &Expr) -> String {
    expr.to_string()
}
