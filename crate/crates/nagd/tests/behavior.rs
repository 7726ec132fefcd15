//! Behavioral contracts: cross-goal reach, N_b masking, determinism,
//! descent, decode integration, and the single-sample overfit oracle.

use mtree_core::corpus::{generate_synthetic, render_sample, SynthConfig, SyntheticSample};
use mtree_core::expr::{Origin, Quantity};
use mtree_core::mtree::{eval_mtree, mtree_equal, LeafForm, MOp, MTree};
use nagd::{
    align_targets, batch_loss_graph, checkpoint, decode_tree, decompose_level, goal_loss,
    insert_params, prepare_sample, sample_loss, vocab_from_samples, BankLayout, DecodeOutcome,
    GoalOut, Graph, HyperParams, NagdError, NagdModel, SlotKind, SlotTarget, Trainer,
};
use ndarray::Array2;
use num::{BigInt, BigRational};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rat(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn lit_leaf(v: i64, form: LeafForm) -> MTree {
    MTree::leaf(Quantity { value: rat(v), origin: Origin::Literal }, form)
}

fn figure_tree() -> MTree {
    MTree::node(
        MOp::Add,
        vec![
            MTree::node(MOp::Mul, vec![lit_leaf(13, LeafForm::Plain), lit_leaf(10, LeafForm::Plain)]),
            MTree::node(MOp::Mul, vec![lit_leaf(13, LeafForm::Plain), lit_leaf(3, LeafForm::Plain)]),
            lit_leaf(40, LeafForm::Negated),
        ],
    )
}

fn sample_of(tree: MTree, id: &str) -> SyntheticSample {
    let (tokens, quantities) = render_sample(&tree);
    SyntheticSample { id: id.to_string(), tree, tokens, quantities }
}

fn toy_model(seed: u64, cross_goal: bool, corpus: &[SyntheticSample]) -> NagdModel {
    let hyper = HyperParams {
        d_k: 16,
        heads: 2,
        cross_goal,
        lr: 5e-3,
        ..HyperParams::default()
    };
    NagdModel::new(hyper, vocab_from_samples(corpus), vec![], seed).unwrap()
}

// ---- cross-goal attention ----

/// With cross-goal attention off, goal B is invisible to goal A: the
/// Jacobian of A's outputs w.r.t. B's goal vector is exactly zero. With
/// it on, gradient flows.
#[test]
fn cross_goal_jacobian_zero_iff_disabled() {
    let corpus = vec![sample_of(figure_tree(), "fig")];
    let model = toy_model(3, true, &corpus);
    let d = model.hyper.d_k;

    let run = |cross: bool| {
        let mut g = Graph::new();
        let ids = insert_params(&mut g, &model, false);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mk = |rng: &mut ChaCha8Rng| {
            let mut v = Array2::zeros((1, d));
            v.iter_mut().for_each(|x| *x = rng.random_range(-0.5..0.5));
            v
        };
        let goal_a = g.param(mk(&mut rng));
        let goal_b = g.param(mk(&mut rng));
        let mut bank_rows = Array2::zeros((6, d));
        bank_rows.iter_mut().for_each(|x| *x = rng.random_range(-0.5..0.5));
        let bank = g.constant(bank_rows);
        let outs =
            decompose_level(&mut g, &ids, &model.hyper, &[goal_a, goal_b], bank, cross).unwrap();
        let probe = g.sum_all(outs[0].e_hat);
        g.backward(probe);
        g.grad(goal_b).cloned()
    };

    let off = run(false);
    assert!(
        off.is_none() || off.unwrap().iter().all(|x| *x == 0.0),
        "goal B leaked into goal A without cross-goal attention"
    );
    let on = run(true).expect("cross-goal must propagate gradient");
    assert!(on.iter().any(|x| *x != 0.0), "cross-goal Jacobian is all zero");
}

/// Value-level form of the same contract: zeroing goal B's vector leaves
/// goal A's slots bit-identical only when cross-goal attention is off.
#[test]
fn sibling_perturbation_reaches_outputs_only_with_cross_goal() {
    let corpus = vec![sample_of(figure_tree(), "fig")];
    let model = toy_model(3, true, &corpus);
    let d = model.hyper.d_k;
    let run = |cross: bool, zero_b: bool| {
        let mut g = Graph::new();
        let ids = insert_params(&mut g, &model, false);
        let mut a = Array2::zeros((1, d));
        a.iter_mut().enumerate().for_each(|(i, x)| *x = (i as f64 * 0.37).sin());
        let b = if zero_b {
            Array2::zeros((1, d))
        } else {
            a.mapv(|x| 1.0 - x)
        };
        let ga = g.constant(a);
        let gb = g.constant(b);
        let mut bank = Array2::zeros((5, d));
        bank.iter_mut().enumerate().for_each(|(i, x)| *x = (i as f64 * 0.13).cos());
        let bank = g.constant(bank);
        let outs = decompose_level(&mut g, &ids, &model.hyper, &[ga, gb], bank, cross).unwrap();
        g.value(outs[0].e_hat).clone()
    };
    assert_eq!(run(false, false), run(false, true));
    assert_ne!(run(true, false), run(true, true));
}

// ---- N_b masking ----

/// Loss is bitwise invariant to pointer scores and type logits in slots
/// at or beyond the terminator.
#[test]
fn nb_masking_is_bitwise() {
    let layout = BankLayout { n_consts: 0, n_numbers: 3 };
    let m = layout.total();
    let targets = vec![
        SlotTarget { kind: SlotKind::Operator(1), child: None },
        SlotTarget { kind: SlotKind::Leaf { bank: layout.number_index(0), form: 2 }, child: None },
        SlotTarget { kind: SlotKind::Terminator, child: None },
    ];
    let loss_with = |post_nb_value: f64| {
        let mut g = Graph::new();
        let mut omega = Array2::zeros((8, m));
        omega.iter_mut().enumerate().for_each(|(i, x)| *x = (i as f64 * 0.11).sin());
        let mut types = Array2::zeros((8, 4));
        types.iter_mut().enumerate().for_each(|(i, x)| *x = (i as f64 * 0.07).cos());
        // rows 3..8 are beyond the terminator slot
        for r in 3..8 {
            for c in 0..m {
                omega[[r, c]] = post_nb_value * (r * m + c) as f64;
            }
            for c in 0..4 {
                types[[r, c]] = -post_nb_value * (r * 4 + c) as f64;
            }
        }
        let e_hat = g.constant(Array2::zeros((8, 4)));
        let omega = g.constant(omega);
        let types = g.constant(types);
        let out = GoalOut { e_hat, omega, type_logits: types };
        let (ptr, typ) = goal_loss(&mut g, &out, &targets, &layout, 2.0);
        let typ = typ.expect("one leaf slot");
        let total = g.add(ptr, typ);
        g.value(total)[[0, 0]]
    };
    let a = loss_with(0.0);
    let b = loss_with(123.456);
    assert_eq!(a.to_bits(), b.to_bits(), "post-N_b slots leaked into the loss");
}

// ---- determinism ----

#[test]
fn fixed_seed_fixes_the_training_trajectory() {
    let cfg = SynthConfig { depth: 2, ..SynthConfig::default() };
    let corpus = generate_synthetic(8, 5, &cfg);
    let run = || {
        let model = toy_model(11, true, &corpus);
        let batch: Vec<_> =
            corpus.iter().map(|s| prepare_sample(&model.vocab, s).unwrap()).collect();
        let mut tr = Trainer::new(model);
        let mut losses = Vec::new();
        for _ in 0..5 {
            losses.push(tr.step(&batch).unwrap());
        }
        (losses, tr)
    };
    let (l1, tr1) = run();
    let (l2, tr2) = run();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&l1), bits(&l2));

    let dir = tempfile::tempdir().unwrap();
    let p1 = dir.path().join("a.ckpt");
    let p2 = dir.path().join("b.ckpt");
    checkpoint::save(&tr1.model, &p1).unwrap();
    checkpoint::save(&tr2.model, &p2).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
}

#[test]
fn argmax_decode_is_deterministic() {
    let cfg = SynthConfig::default();
    let corpus = generate_synthetic(4, 77, &cfg);
    let model = toy_model(9, true, &corpus);
    for s in &corpus {
        let ts = prepare_sample(&model.vocab, s).unwrap();
        let a = decode_tree(&model, &ts.token_ids, &ts.number_positions, &ts.quantities).unwrap();
        let b = decode_tree(&model, &ts.token_ids, &ts.number_positions, &ts.quantities).unwrap();
        assert_eq!(a, b);
    }
}

// ---- training behavior ----

#[test]
fn loss_decreases_on_a_fixed_batch() {
    let cfg = SynthConfig { depth: 2, ..SynthConfig::default() };
    let corpus = generate_synthetic(8, 21, &cfg);
    let model = toy_model(31, true, &corpus);
    let batch: Vec<_> = corpus.iter().map(|s| prepare_sample(&model.vocab, s).unwrap()).collect();
    let mut tr = Trainer::new(model);
    let first = tr.step(&batch).unwrap();
    let mut last = first;
    for _ in 0..49 {
        last = tr.step(&batch).unwrap();
    }
    assert!(last < first, "loss did not descend: {first} → {last}");
}

/// Overfitting the single three-branch example must reproduce its MTree
/// exactly through argmax decode.
#[test]
fn overfit_reproduces_the_figure_tree() {
    let sample = sample_of(figure_tree(), "fig");
    let corpus = vec![sample.clone()];
    let hyper = HyperParams {
        d_k: 32,
        heads: 2,
        lr: 3e-3,
        cross_goal: true,
        ..HyperParams::default()
    };
    let model = NagdModel::new(hyper, vocab_from_samples(&corpus), vec![], 13).unwrap();
    let batch = vec![prepare_sample(&model.vocab, &sample).unwrap()];
    let mut tr = Trainer::new(model);
    let mut loss = f64::INFINITY;
    for _ in 0..1000 {
        loss = tr.step(&batch).unwrap();
        if loss < 5e-3 {
            break;
        }
    }
    assert!(loss < 5e-2, "failed to overfit, final loss {loss}");
    let out = decode_tree(&tr.model, &batch[0].token_ids, &batch[0].number_positions, &batch[0].quantities)
        .unwrap();
    let tree = out.tree().expect("decode failed after overfit");
    assert!(mtree_equal(&tree, &sample.tree), "decoded {} ≠ gold {}", tree.render(), sample.tree.render());
    assert_eq!(eval_mtree(&tree).unwrap(), rat(129));
}

// ---- decode integration ----

/// Any decode outcome is either a tree that evaluates or an explicit
/// failure — across random inits and samples.
#[test]
fn decode_never_yields_a_malformed_tree() {
    let cfg = SynthConfig::default();
    let corpus = generate_synthetic(6, 313, &cfg);
    for seed in [1u64, 2] {
        let model = toy_model(seed, seed % 2 == 0, &corpus);
        for s in &corpus {
            let ts = prepare_sample(&model.vocab, s).unwrap();
            match decode_tree(&model, &ts.token_ids, &ts.number_positions, &ts.quantities).unwrap()
            {
                DecodeOutcome::Tree(t) => {
                    eval_mtree(&t).expect("decoded tree must evaluate");
                }
                DecodeOutcome::Failure(_) => {}
            }
        }
    }
}

#[test]
fn gold_deeper_than_the_cap_is_rejected() {
    let mut tree = MTree::node(
        MOp::RecipAdd,
        vec![lit_leaf(2, LeafForm::Plain), lit_leaf(3, LeafForm::Plain)],
    );
    for v in 4..10 {
        tree = MTree::node(MOp::RecipAdd, vec![tree, lit_leaf(v, LeafForm::Plain)]);
    }
    let sample = sample_of(tree, "deep");
    let vocab = vocab_from_samples(&[sample.clone()]);
    let hyper = HyperParams { d_k: 8, heads: 2, ..HyperParams::default() };
    let model = NagdModel::new(hyper, vocab, vec![], 2).unwrap();
    let ts = prepare_sample(&model.vocab, &sample).unwrap();
    let mut g = Graph::new();
    let ids = insert_params(&mut g, &model, true);
    match sample_loss(&mut g, &ids, &model, &ts) {
        Err(NagdError::DepthExceeded { .. }) => {}
        other => panic!("expected DepthExceeded, got {other:?}"),
    }
}

#[test]
fn teacher_forcing_covers_dummy_goals() {
    // one sample with both operator and leaf children under the root:
    // with cross-goal on, the second level mixes a real goal and dummies
    let corpus = vec![sample_of(figure_tree(), "fig")];
    let model = toy_model(4, true, &corpus);
    let batch: Vec<_> = corpus.iter().map(|s| prepare_sample(&model.vocab, s).unwrap()).collect();
    let (g, _, loss) = batch_loss_graph(&model, &batch).unwrap();
    assert!(g.value(loss)[[0, 0]].is_finite());
}

#[test]
fn eight_wide_goal_omits_terminator_in_training() {
    let children: Vec<MTree> = (2..10).map(|v| lit_leaf(v, LeafForm::Plain)).collect();
    let tree = MTree::node(MOp::Add, children);
    let sample = sample_of(tree, "wide");
    let model = toy_model(6, true, &[sample.clone()]);
    let ts = prepare_sample(&model.vocab, &sample).unwrap();
    let layout = BankLayout { n_consts: 0, n_numbers: ts.quantities.len() };
    let children: Vec<&MTree> = nagd::goal_children(&ts.gold);
    let targets = align_targets(&children, &ts.quantities, &model.constants, &layout).unwrap();
    assert_eq!(targets.len(), 8);
    assert!(targets.iter().all(|t| t.kind != SlotKind::Terminator));
    // and the loss graph still builds
    let (g, _, loss) = batch_loss_graph(&model, &[ts]).unwrap();
    assert!(g.value(loss)[[0, 0]].is_finite());
}
