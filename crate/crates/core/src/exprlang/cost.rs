use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{BatchStat, BinaryOp, Expr, UnaryOp};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CostModelError {
    #[error("cost table has no entry for `{0}`")]
    MissingOp(String),
    #[error("cost for `{0}` must be at least 1")]
    ZeroCost(String),
}

/// Per-element FLOP charge for each operator, keyed by its DSL name.
/// Leaves (`x`, constants) are free.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, u64>", into = "BTreeMap<String, u64>")]
pub struct CostModel {
    table: BTreeMap<String, u64>,
}

fn op_names() -> impl Iterator<Item = &'static str> {
    UnaryOp::ALL
        .iter()
        .map(|o| o.name())
        .chain(BinaryOp::ALL.iter().map(|o| o.name()))
        .chain(BatchStat::ALL.iter().map(|o| o.name()))
}

impl CostModel {
    pub fn new(table: BTreeMap<String, u64>) -> Result<Self, CostModelError> {
        for name in op_names() {
            match table.get(name) {
                None => return Err(CostModelError::MissingOp(name.into())),
                Some(0) => return Err(CostModelError::ZeroCost(name.into())),
                Some(_) => {}
            }
        }
        Ok(Self { table })
    }

    pub fn op_cost(&self, name: &str) -> u64 {
        self.table[name]
    }

    pub fn table(&self) -> &BTreeMap<String, u64> {
        &self.table
    }
}

impl Default for CostModel {
    fn default() -> Self {
        let table = [
            ("add", 1),
            ("sub", 1),
            ("mul", 1),
            ("neg", 1),
            ("abs", 1),
            ("sign", 1),
            ("min", 1),
            ("max", 1),
            ("relu", 1),
            ("div", 4),
            ("sin", 4),
            ("cos", 4),
            ("tanh", 4),
            ("sigmoid", 4),
            ("exp", 4),
            ("log1p", 4),
            ("sqrt", 4),
            ("gelu", 8),
            ("sinc", 6),
            ("pow", 8),
            ("batch-mean", 2),
            ("batch-std", 4),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self::new(table).expect("default table is complete")
    }
}

impl TryFrom<BTreeMap<String, u64>> for CostModel {
    type Error = CostModelError;

    fn try_from(table: BTreeMap<String, u64>) -> Result<Self, Self::Error> {
        Self::new(table)
    }
}

impl From<CostModel> for BTreeMap<String, u64> {
    fn from(m: CostModel) -> Self {
        m.table
    }
}

/// Hard per-element FLOP cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopBudget {
    pub max_flops_per_element: u64,
}

impl FlopBudget {
    pub const DEFAULT: FlopBudget = FlopBudget {
        max_flops_per_element: 64,
    };

    pub fn new(max_flops_per_element: u64) -> Self {
        Self {
            max_flops_per_element,
        }
    }
}

impl Default for FlopBudget {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// FLOPs per element: the sum of the table entries over every node.
pub fn cost(expr: &Expr, model: &CostModel) -> u64 {
    expr.preorder()
        .into_iter()
        .map(|node| match node {
            Expr::Input | Expr::Const(_) => 0,
            Expr::Unary(op, _) => model.op_cost(op.name()),
            Expr::Binary(op, _, _) => model.op_cost(op.name()),
            Expr::Batch(stat, _) => model.op_cost(stat.name()),
        })
        .sum()
}

pub fn check_budget(expr: &Expr, budget: FlopBudget, model: &CostModel) -> bool {
    cost(expr, model) <= budget.max_flops_per_element
}
