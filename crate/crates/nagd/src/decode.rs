//! Argmax decoding: expand goals level by level until every slot is a
//! leaf, then assemble and validate the MTree. Every failure mode is an
//! explicit outcome — the decoder never returns a malformed tree.

use mtree_core::expr::{Origin, Quantity};
use mtree_core::mtree::{eval_mtree, MOp, MTree};
use ndarray::Array2;
use num::BigRational;

use crate::error::NagdError;
use crate::model::{
    build_bank, decompose_level, encode, insert_params, BankEntry, NagdModel, FORMS,
};
use crate::tensor::Graph;

/// Hard ceiling on operator nodes per decode.
pub const NODE_BUDGET: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeFailure {
    /// The very first slot of a goal predicted N_b.
    EmptyGoal,
    /// Goals were still pending after `depth_cap` levels.
    DepthCap,
    /// More than [`NODE_BUDGET`] operator nodes.
    NodeBudget,
    /// Assembled tree violates MTree arity rules.
    Malformed,
    /// Assembled tree does not evaluate (reciprocal of zero).
    Eval,
}

impl std::fmt::Display for DecodeFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let label = match self {
            DecodeFailure::EmptyGoal => "empty_goal",
            DecodeFailure::DepthCap => "depth_cap",
            DecodeFailure::NodeBudget => "node_budget",
            DecodeFailure::Malformed => "malformed",
            DecodeFailure::Eval => "eval",
        };
        f.write_str(label)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecodeOutcome {
    Tree(MTree),
    Failure(DecodeFailure),
}

impl DecodeOutcome {
    pub fn tree(self) -> Option<MTree> {
        match self {
            DecodeOutcome::Tree(t) => Some(t),
            DecodeOutcome::Failure(_) => None,
        }
    }
}

/// Argmax token choice per slot, cut at the first N_b. Slots after the
/// terminator are ignored by construction.
pub fn select_slots(omega: &Array2<f64>, nb_index: usize) -> Vec<usize> {
    let mut picks = Vec::new();
    for row in omega.rows() {
        let (best, _) = row
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, v)| {
                if *v > bv {
                    (i, *v)
                } else {
                    (bi, bv)
                }
            });
        if best == nb_index {
            break;
        }
        picks.push(best);
    }
    picks
}

fn argmax_row(values: &Array2<f64>, row: usize) -> usize {
    let r = values.row(row);
    let mut best = 0;
    for (i, v) in r.iter().enumerate() {
        if *v > r[best] {
            best = i;
        }
    }
    best
}

enum Slot {
    Leaf(MTree),
    Node(usize),
}

struct Pending {
    op: MOp,
    slots: Vec<Slot>,
}

enum Dest {
    Root,
    Arena(usize),
}

/// Decode one problem with argmax pointer selection. The root goal's
/// slots become children of an implicit `+` node; a single slot collapses
/// to that child alone.
pub fn decode_tree(
    model: &NagdModel,
    token_ids: &[usize],
    number_positions: &[usize],
    quantities: &[BigRational],
) -> Result<DecodeOutcome, NagdError> {
    let hyper = &model.hyper;
    let mut g = Graph::new();
    let ids = insert_params(&mut g, model, false);
    let (e_s, e_v) = encode(&mut g, &ids, hyper, token_ids, number_positions)?;
    let (bank, layout) = build_bank(&mut g, &ids, e_v, model.constants.len());

    let mut arena: Vec<Pending> = Vec::new();
    let mut root_slots: Vec<Slot> = Vec::new();
    // (goal, destination); None destination = dummy goal
    let mut tasks = vec![(e_s, Some(Dest::Root))];
    let mut level = 0;

    while !tasks.is_empty() {
        if level == hyper.depth_cap {
            return Ok(DecodeOutcome::Failure(DecodeFailure::DepthCap));
        }
        let goals: Vec<_> = tasks.iter().map(|(g, _)| *g).collect();
        let outs = decompose_level(&mut g, &ids, hyper, &goals, bank, hyper.cross_goal)?;
        let mut next = Vec::new();
        for ((_, dest), out) in tasks.iter().zip(&outs) {
            let Some(dest) = dest else { continue };
            let picks = select_slots(g.value(out.omega), layout.nb_index());
            if picks.is_empty() {
                return Ok(DecodeOutcome::Failure(DecodeFailure::EmptyGoal));
            }
            let type_values = g.value(out.type_logits).clone();
            let mut slots = Vec::with_capacity(picks.len());
            for (i, pick) in picks.iter().enumerate() {
                match layout.classify(*pick) {
                    BankEntry::Operator(op) => {
                        if arena.len() == NODE_BUDGET {
                            return Ok(DecodeOutcome::Failure(DecodeFailure::NodeBudget));
                        }
                        arena.push(Pending { op, slots: Vec::new() });
                        let idx = arena.len() - 1;
                        slots.push(Slot::Node(idx));
                        let goal = g.slice_rows(out.e_hat, i, i + 1);
                        next.push((goal, Some(Dest::Arena(idx))));
                    }
                    BankEntry::Constant(c) => {
                        let form = FORMS[argmax_row(&type_values, i)];
                        let q = Quantity { value: model.constants[c].clone(), origin: Origin::Constant };
                        slots.push(Slot::Leaf(MTree::leaf(q, form)));
                        push_dummy(&mut next, &mut g, out, i, hyper.cross_goal);
                    }
                    BankEntry::Number(k) => {
                        let form = FORMS[argmax_row(&type_values, i)];
                        let q = Quantity {
                            value: quantities[k].clone(),
                            origin: Origin::Problem(k),
                        };
                        slots.push(Slot::Leaf(MTree::leaf(q, form)));
                        push_dummy(&mut next, &mut g, out, i, hyper.cross_goal);
                    }
                    BankEntry::Terminator => unreachable!("select_slots stops at N_b"),
                }
            }
            match dest {
                Dest::Root => root_slots = slots,
                Dest::Arena(i) => arena[*i].slots = slots,
            }
        }
        if next.iter().all(|(_, d)| d.is_none()) {
            next.clear();
        }
        tasks = next;
        level += 1;
    }

    let children = match realize_all(&arena, root_slots) {
        Ok(c) => c,
        Err(f) => return Ok(DecodeOutcome::Failure(f)),
    };
    let tree = if children.len() == 1 {
        children.into_iter().next().unwrap()
    } else {
        MTree::node(MOp::Add, children)
    };
    if eval_mtree(&tree).is_err() {
        return Ok(DecodeOutcome::Failure(DecodeFailure::Eval));
    }
    Ok(DecodeOutcome::Tree(tree))
}

fn push_dummy(
    next: &mut Vec<(crate::tensor::Tid, Option<Dest>)>,
    g: &mut Graph,
    out: &crate::model::GoalOut,
    slot: usize,
    cross_goal: bool,
) {
    if cross_goal {
        let goal = g.slice_rows(out.e_hat, slot, slot + 1);
        next.push((goal, None));
    }
}

fn realize_all(arena: &[Pending], root: Vec<Slot>) -> Result<Vec<MTree>, DecodeFailure> {
    root.into_iter().map(|s| realize_slot(arena, s)).collect()
}

fn realize_slot(arena: &[Pending], slot: Slot) -> Result<MTree, DecodeFailure> {
    match slot {
        Slot::Leaf(t) => Ok(t),
        Slot::Node(i) => realize_node(arena, i),
    }
}

fn realize_node(arena: &[Pending], i: usize) -> Result<MTree, DecodeFailure> {
    let pending = &arena[i];
    let mut children = Vec::with_capacity(pending.slots.len());
    for slot in &pending.slots {
        let child = match slot {
            Slot::Leaf(t) => t.clone(),
            Slot::Node(j) => realize_node(arena, *j)?,
        };
        children.push(child);
    }
    // arity rules: ≥2 children, except the ×−(+/ …) escape
    let valid = match children.len() {
        0 => false,
        1 => {
            pending.op == MOp::MulNeg
                && matches!(&children[0], MTree::Node { op: MOp::RecipAdd, .. })
        }
        _ => true,
    };
    if !valid {
        return Err(DecodeFailure::Malformed);
    }
    Ok(MTree::node(pending.op, children))
}
