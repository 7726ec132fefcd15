//! Teacher-forced training: pseudo-order target alignment, pointer and
//! focal type losses over every gold goal, and the Adam update.

use std::collections::BTreeMap;

use mtree_core::corpus::SyntheticSample;
use mtree_core::expr::Quantity;
use mtree_core::mtree::{MOp, MTree};
use ndarray::Array2;
use num::BigRational;

use crate::error::NagdError;
use crate::model::{
    build_bank, decompose_level, encode, form_class, insert_params, BankLayout, GoalOut,
    ModelIds, NagdModel, MAX_LEN,
};
use crate::tensor::{Graph, Tid};

/// One problem ready for the model: token ids, the token position of each
/// problem quantity, the quantity values, and the gold tree.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub token_ids: Vec<usize>,
    pub number_positions: Vec<usize>,
    pub quantities: Vec<BigRational>,
    pub gold: MTree,
}

/// Map a synthetic sample onto the closed vocabulary. The position of
/// quantity k is the first occurrence of its `N{k}` placeholder token.
pub fn prepare_sample(
    vocab: &crate::model::Vocab,
    s: &SyntheticSample,
) -> Result<TrainSample, NagdError> {
    let token_ids = s
        .tokens
        .iter()
        .map(|t| vocab.id(t))
        .collect::<Result<Vec<_>, _>>()?;
    let mut number_positions = Vec::with_capacity(s.quantities.len());
    for k in 0..s.quantities.len() {
        let tag = format!("N{k}");
        let pos = s
            .tokens
            .iter()
            .position(|t| *t == tag)
            .ok_or(NagdError::MissingPlaceholder(k))?;
        number_positions.push(pos);
    }
    Ok(TrainSample {
        token_ids,
        number_positions,
        quantities: s.quantities.clone(),
        gold: s.tree.clone(),
    })
}

/// Union vocabulary over a corpus.
pub fn vocab_from_samples(samples: &[SyntheticSample]) -> crate::model::Vocab {
    crate::model::Vocab::from_tokens(samples.iter().flat_map(|s| s.tokens.iter().cloned()))
}

/// What one slot must predict.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SlotKind {
    /// Bank index of the operator row.
    Operator(usize),
    /// Bank index of the number/constant row, plus the leaf-form class.
    Leaf { bank: usize, form: usize },
    /// The N_b row.
    Terminator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotTarget {
    pub kind: SlotKind,
    /// Gold subtree for operator slots (the child goal to force).
    pub child: Option<MTree>,
}

/// The sub-goals a goal decomposes into: an Add root contributes its
/// children directly (the root `+` is implicit); anything else is a single
/// sub-goal.
pub fn goal_children(tree: &MTree) -> Vec<&MTree> {
    match tree {
        MTree::Node { op: MOp::Add, children } => children.iter().collect(),
        other => vec![other],
    }
}

/// Order gold children into the pseudo order [operators, constants,
/// operands in problem order], then append the terminator when fewer than
/// 8 slots are used.
pub fn align_targets(
    children: &[&MTree],
    quantities: &[BigRational],
    constants: &[BigRational],
    layout: &BankLayout,
) -> Result<Vec<SlotTarget>, NagdError> {
    if children.len() > MAX_LEN {
        return Err(NagdError::TooManyChildren(children.len()));
    }
    let mut ops = Vec::new();
    // sort key: constants before operands, each by index
    let mut leaves: Vec<(usize, usize, SlotTarget)> = Vec::new();
    for child in children {
        match child {
            MTree::Node { op, .. } => ops.push(SlotTarget {
                kind: SlotKind::Operator(layout.op_index(*op)),
                child: Some((*child).clone()),
            }),
            MTree::Leaf { quantity, form } => {
                let target = leaf_target(quantity, *form, quantities, constants, layout)?;
                let key = match target.kind {
                    SlotKind::Leaf { bank, .. } if bank < layout.number_index(0) => {
                        (0, bank)
                    }
                    SlotKind::Leaf { bank, .. } => (1, bank),
                    _ => unreachable!(),
                };
                leaves.push((key.0, key.1, target));
            }
        }
    }
    leaves.sort_by_key(|(a, b, _)| (*a, *b));
    let mut targets = ops;
    targets.extend(leaves.into_iter().map(|(_, _, t)| t));
    if targets.len() < MAX_LEN {
        targets.push(SlotTarget { kind: SlotKind::Terminator, child: None });
    }
    Ok(targets)
}

fn leaf_target(
    quantity: &Quantity,
    form: mtree_core::mtree::LeafForm,
    quantities: &[BigRational],
    constants: &[BigRational],
    layout: &BankLayout,
) -> Result<SlotTarget, NagdError> {
    // value lookup mirrors the corpus placeholder rule: first matching
    // problem quantity wins, then the constant list
    let bank = if let Some(k) = quantities.iter().position(|v| *v == quantity.value) {
        layout.number_index(k)
    } else if let Some(c) = constants.iter().position(|v| *v == quantity.value) {
        layout.const_index(c)
    } else {
        return Err(NagdError::UnmappedLeaf(quantity.value.to_string()));
    };
    Ok(SlotTarget { kind: SlotKind::Leaf { bank, form: form_class(form) }, child: None })
}

/// Pointer and type losses of one decomposed goal against its targets.
/// Slots at or beyond `targets.len()` never enter either sum — that is
/// the N_b mask.
pub fn goal_loss(
    g: &mut Graph,
    out: &GoalOut,
    targets: &[SlotTarget],
    layout: &BankLayout,
    focal_gamma: f64,
) -> (Tid, Option<Tid>) {
    let ptr_coords: Vec<(usize, usize)> = targets
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let col = match t.kind {
                SlotKind::Operator(bank) => bank,
                SlotKind::Leaf { bank, .. } => bank,
                SlotKind::Terminator => layout.nb_index(),
            };
            (i, col)
        })
        .collect();
    let lp = g.log_softmax_rows(out.omega);
    let picked = g.gather_entries(lp, &ptr_coords);
    let summed = g.sum_all(picked);
    let ptr_loss = g.scale(summed, -1.0);

    let type_coords: Vec<(usize, usize)> = targets
        .iter()
        .enumerate()
        .filter_map(|(i, t)| match t.kind {
            SlotKind::Leaf { form, .. } => Some((i, form)),
            _ => None,
        })
        .collect();
    if type_coords.is_empty() {
        return (ptr_loss, None);
    }
    // focal loss: −(1−p)^γ·ln p per classified leaf
    let tl = g.log_softmax_rows(out.type_logits);
    let lt = g.gather_entries(tl, &type_coords);
    let p = g.exp(lt);
    let one_minus = g.rsub_const(1.0, p);
    let w = g.pow_const(one_minus, focal_gamma);
    let weighted = g.mul(w, lt);
    let summed = g.sum_all(weighted);
    (ptr_loss, Some(g.scale(summed, -1.0)))
}

/// Decompose levels the decoder would need for this gold tree. An Add
/// root is decomposed implicitly at level 0; any other root occupies a
/// slot first and costs one extra level.
pub fn levels_needed(tree: &MTree) -> usize {
    match tree {
        MTree::Node { op: MOp::Add, .. } => tree.depth() - 1,
        MTree::Node { .. } => tree.depth(),
        MTree::Leaf { .. } => 1,
    }
}

struct Task {
    goal: Tid,
    /// `None` marks a dummy goal: it joins cross-goal attention but has
    /// no loss and spawns nothing.
    targets: Option<Vec<SlotTarget>>,
}

/// Teacher-forced loss of one sample: every gold goal is decomposed with
/// gold child goals, level-synchronously so siblings share cross-goal
/// attention. Leaf siblings contribute dummy goals when cross-goal
/// attention is on.
pub fn sample_loss(
    g: &mut Graph,
    ids: &ModelIds,
    model: &NagdModel,
    sample: &TrainSample,
) -> Result<Tid, NagdError> {
    let hyper = &model.hyper;
    let needed = levels_needed(&sample.gold);
    if needed > hyper.depth_cap {
        return Err(NagdError::DepthExceeded { depth: needed, cap: hyper.depth_cap });
    }
    let (e_s, e_v) = encode(g, ids, hyper, &sample.token_ids, &sample.number_positions)?;
    let (bank, layout) = build_bank(g, ids, e_v, model.constants.len());

    let root_targets = align_targets(
        &goal_children(&sample.gold),
        &sample.quantities,
        &model.constants,
        &layout,
    )?;
    let mut tasks = vec![Task { goal: e_s, targets: Some(root_targets) }];
    let mut losses: Vec<Tid> = Vec::new();

    while !tasks.is_empty() {
        let goals: Vec<Tid> = tasks.iter().map(|t| t.goal).collect();
        let outs = decompose_level(g, ids, hyper, &goals, bank, hyper.cross_goal)?;
        let mut next = Vec::new();
        for (task, out) in tasks.iter().zip(&outs) {
            let Some(targets) = &task.targets else { continue };
            let (ptr, typ) = goal_loss(g, out, targets, &layout, hyper.focal_gamma);
            losses.push(ptr);
            if let Some(typ) = typ {
                losses.push(g.scale(typ, hyper.type_loss_weight));
            }
            for (i, target) in targets.iter().enumerate() {
                match &target.kind {
                    SlotKind::Operator(_) => {
                        let child = target.child.as_ref().expect("operator slot has a child");
                        let child_children = match child {
                            MTree::Node { children, .. } => children.iter().collect::<Vec<_>>(),
                            MTree::Leaf { .. } => unreachable!("operator slot points at a node"),
                        };
                        let child_targets = align_targets(
                            &child_children,
                            &sample.quantities,
                            &model.constants,
                            &layout,
                        )?;
                        let goal = g.slice_rows(out.e_hat, i, i + 1);
                        next.push(Task { goal, targets: Some(child_targets) });
                    }
                    SlotKind::Leaf { .. } if hyper.cross_goal => {
                        let goal = g.slice_rows(out.e_hat, i, i + 1);
                        next.push(Task { goal, targets: None });
                    }
                    SlotKind::Leaf { .. } | SlotKind::Terminator => {}
                }
            }
        }
        // a level of pure dummies has nothing left to train
        if next.iter().all(|t| t.targets.is_none()) {
            next.clear();
        }
        tasks = next;
    }

    let mut total = losses[0];
    for l in &losses[1..] {
        total = g.add(total, *l);
    }
    Ok(total)
}

/// Build the averaged batch loss graph without updating anything.
pub fn batch_loss_graph(
    model: &NagdModel,
    batch: &[TrainSample],
) -> Result<(Graph, ModelIds, Tid), NagdError> {
    assert!(!batch.is_empty(), "empty batch");
    let mut g = Graph::new();
    let ids = insert_params(&mut g, model, true);
    let mut total: Option<Tid> = None;
    for sample in batch {
        let l = sample_loss(&mut g, &ids, model, sample)?;
        total = Some(match total {
            Some(t) => g.add(t, l),
            None => l,
        });
    }
    let loss = g.scale(total.unwrap(), 1.0 / batch.len() as f64);
    Ok((g, ids, loss))
}

/// Evaluate the batch loss value only.
pub fn batch_loss_value(model: &NagdModel, batch: &[TrainSample]) -> Result<f64, NagdError> {
    let (g, _, loss) = batch_loss_graph(model, batch)?;
    Ok(g.value(loss)[[0, 0]])
}

/// Adam optimizer state wrapped around a model.
pub struct Trainer {
    pub model: NagdModel,
    m: BTreeMap<String, Array2<f64>>,
    v: BTreeMap<String, Array2<f64>>,
    t: u64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Trainer {
    pub fn new(model: NagdModel) -> Self {
        let m = model.params.iter().map(|(k, p)| (k.clone(), Array2::zeros(p.dim()))).collect();
        let v = model.params.iter().map(|(k, p)| (k.clone(), Array2::zeros(p.dim()))).collect();
        Trainer { model, m, v, t: 0 }
    }

    /// One teacher-forced step over `batch`; returns the pre-update loss.
    pub fn step(&mut self, batch: &[TrainSample]) -> Result<f64, NagdError> {
        let (mut g, ids, loss) = batch_loss_graph(&self.model, batch)?;
        let value = g.value(loss)[[0, 0]];
        if !value.is_finite() {
            return Err(NagdError::NonFiniteLoss { step: self.t, loss: value });
        }
        g.backward(loss);
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        let lr = self.model.hyper.lr;
        for (name, param) in self.model.params.iter_mut() {
            let zero = Array2::zeros(param.dim());
            let grad = g.grad(ids.get(name)).unwrap_or(&zero);
            let m = self.m.get_mut(name).unwrap();
            let v = self.v.get_mut(name).unwrap();
            for ((p, (m, v)), grad) in
                param.iter_mut().zip(m.iter_mut().zip(v.iter_mut())).zip(grad.iter())
            {
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * grad;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * grad * grad;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *p -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
            }
        }
        Ok(value)
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }
}
