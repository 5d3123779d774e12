use crate::exprlang::{BatchStat, BinaryOp, Expr, UnaryOp};
use crate::tensor::SeededRng;

pub const MAX_DEPTH: usize = 12;
pub const MAX_ATTEMPTS: usize = 20;
/// Sd of the log-normal factor applied by constant perturbation.
pub const CONST_LOG_SD: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    PointOp,
    PerturbConst,
    InsertWrapper,
    DeleteNode,
    Crossover,
}

impl Mutation {
    pub const ALL: [Mutation; 5] = [
        Mutation::PointOp,
        Mutation::PerturbConst,
        Mutation::InsertWrapper,
        Mutation::DeleteNode,
        Mutation::Crossover,
    ];
    pub const WEIGHTS: [f64; 5] = [0.25, 0.25, 0.2, 0.15, 0.15];
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MutationSettings {
    pub max_depth: usize,
    pub allow_batch_stats: bool,
}

impl Default for MutationSettings {
    fn default() -> Self {
        Self {
            max_depth: MAX_DEPTH,
            allow_batch_stats: true,
        }
    }
}

/// Mutate `parents[0]` (crossover takes its donor subtree from `parents[1]`
/// when there is one). Falls back to a copy of `parents[0]` after
/// [`MAX_ATTEMPTS`] invalid results.
///
/// # Panics
/// If `parents` is empty.
pub fn grammar_mutate(parents: &[&Expr], rng: &mut SeededRng) -> Expr {
    grammar_mutate_with(parents, rng, &MutationSettings::default())
}

pub fn grammar_mutate_with(parents: &[&Expr], rng: &mut SeededRng, settings: &MutationSettings) -> Expr {
    assert!(!parents.is_empty(), "grammar_mutate needs a parent");
    let base = parents[0];
    for _ in 0..MAX_ATTEMPTS {
        let kind = Mutation::ALL[rng.weighted_index(&Mutation::WEIGHTS)];
        if let Some(child) = apply(kind, parents, rng, settings) {
            let ok = child.validate().is_ok()
                && child.depth() <= settings.max_depth
                && (settings.allow_batch_stats || !child.has_batch_stat());
            if ok {
                return child;
            }
        }
    }
    base.clone()
}

pub fn apply(kind: Mutation, parents: &[&Expr], rng: &mut SeededRng, settings: &MutationSettings) -> Option<Expr> {
    let mut child = parents[0].clone();
    let nodes = child.preorder();
    let n = nodes.len();
    match kind {
        Mutation::PointOp => {
            let interior: Vec<usize> = (0..n).filter(|&i| !nodes[i].children().is_empty()).collect();
            if interior.is_empty() {
                return None;
            }
            let id = interior[rng.below(interior.len())];
            match child.node_mut(id)? {
                Expr::Unary(op, _) => *op = pick_other(&UnaryOp::ALL, *op, rng)?,
                Expr::Binary(op, _, _) => *op = pick_other(&BinaryOp::ALL, *op, rng)?,
                Expr::Batch(stat, _) => *stat = pick_other(&BatchStat::ALL, *stat, rng)?,
                _ => return None,
            }
        }
        Mutation::PerturbConst => {
            let consts: Vec<usize> = (0..n).filter(|&i| matches!(nodes[i], Expr::Const(_))).collect();
            if consts.is_empty() {
                return None;
            }
            let id = consts[rng.below(consts.len())];
            let factor = rng.normal(0.0, CONST_LOG_SD).exp();
            if let Expr::Const(v) = child.node_mut(id)? {
                *v *= factor;
            }
        }
        Mutation::InsertWrapper => {
            let id = rng.below(n);
            let node = child.node_mut(id)?;
            let inner = std::mem::replace(node, Expr::Input);
            *node = wrap(inner, rng, settings);
        }
        Mutation::DeleteNode => {
            let interior: Vec<usize> = (0..n).filter(|&i| !nodes[i].children().is_empty()).collect();
            if interior.is_empty() {
                return None;
            }
            let id = interior[rng.below(interior.len())];
            let node = child.node_mut(id)?;
            let kids: Vec<Expr> = node.children().into_iter().cloned().collect();
            *node = kids[rng.below(kids.len())].clone();
        }
        Mutation::Crossover => {
            let donor = parents[parents.len().min(2) - 1];
            let donor_nodes = donor.preorder();
            let graft = donor_nodes[rng.below(donor_nodes.len())].clone();
            *child.node_mut(rng.below(n))? = graft;
        }
    }
    Some(child)
}

fn pick_other<T: Copy + PartialEq>(all: &[T], current: T, rng: &mut SeededRng) -> Option<T> {
    let others: Vec<T> = all.iter().copied().filter(|o| *o != current).collect();
    (!others.is_empty()).then(|| others[rng.below(others.len())])
}

/// A short random constant such as `0.37` or `-1.2`.
fn random_const(rng: &mut SeededRng) -> f64 {
    let v = (rng.normal(0.0, 1.0) * 100.0).round() / 100.0;
    if v == 0.0 {
        0.1
    } else {
        v
    }
}

fn wrap(inner: Expr, rng: &mut SeededRng, settings: &MutationSettings) -> Expr {
    let roll = rng.unit();
    if roll < 0.5 {
        Expr::unary(UnaryOp::ALL[rng.below(UnaryOp::ALL.len())], inner)
    } else if roll < 0.95 || !settings.allow_batch_stats {
        let op = BinaryOp::ALL[rng.below(BinaryOp::ALL.len())];
        if op == BinaryOp::Pow {
            let exponent = [2.0, 3.0, 0.5][rng.below(3)];
            return Expr::binary(op, inner, Expr::c(exponent));
        }
        let other = if rng.unit() < 0.5 {
            Expr::c(random_const(rng))
        } else {
            Expr::x()
        };
        if rng.unit() < 0.5 {
            Expr::binary(op, inner, other)
        } else {
            Expr::binary(op, other, inner)
        }
    } else {
        Expr::batch(BatchStat::ALL[rng.below(BatchStat::ALL.len())], inner)
    }
}
