//! Acceptance gate: one test per criterion, named a01..a10. Each prints a
//! `[aNN] PASS` line with its measured numbers (visible with
//! `--nocapture`); the cargo pass/fail line per test is the verdict.
//!
//! Budgets asserted here: a01 < 60 s, a06 < 30 s, a08 < 600 s.

use std::time::Instant;

use mtree_core::canonicalize;
use mtree_core::corpus::{generate_synthetic, SynthConfig};
use mtree_core::expr::{eval_exact, parse, to_infix, Origin, Quantity};
use mtree_core::gen::{control_pair, equivalent_pair, random_valid_expr, GenConfig};
use mtree_core::metrics::{mtree_iou, score_sample};
use mtree_core::mtree::{
    branch_number, build_mtree, eval_mtree, mtree_equal, mtree_paths, to_refmtree, LeafForm,
    MOp, MPath, MTree, PathMultiset,
};
use nagd::{
    batch_loss_graph, batch_loss_value, decompose_level, goal_loss, insert_params,
    prepare_sample, run_toy, vocab_from_samples, BankLayout, GoalOut, Graph, HyperParams,
    NagdModel, RunOptions, SlotKind, SlotTarget, ToyConfig, Trainer,
};
use ndarray::Array2;
use num::{BigInt, BigRational, One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rat(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn frac(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn tree_of(text: &str) -> MTree {
    build_mtree(&canonicalize(&parse(text, None).unwrap()).unwrap())
}

/// Unification soundness: equivalence rewrites always collapse to the same
/// MTree; value-distinct controls never do. ≥10,000 pairs each, < 60 s.
#[test]
fn a01_unification_soundness() {
    let start = Instant::now();
    let cfg = GenConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let n = 10_000;
    for i in 0..n {
        let (a, b) = equivalent_pair(&mut rng, &cfg);
        let ta = build_mtree(&canonicalize(&a).unwrap());
        let tb = build_mtree(&canonicalize(&b).unwrap());
        assert!(
            mtree_equal(&ta, &tb),
            "equivalent pair {i} disagreed: {} vs {}",
            to_infix(&a),
            to_infix(&b)
        );
        let (a, b) = control_pair(&mut rng, &cfg);
        let ta = build_mtree(&canonicalize(&a).unwrap());
        let tb = build_mtree(&canonicalize(&b).unwrap());
        assert!(
            !mtree_equal(&ta, &tb),
            "value-distinct pair {i} unified: {} vs {}",
            to_infix(&a),
            to_infix(&b)
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 60, "budget exceeded: {elapsed:?}");
    println!(
        "[a01] PASS — {n} equivalent pairs unified, {n} control pairs kept distinct in {elapsed:?}"
    );
}

/// Value preservation: the canonical MTree evaluates exactly to the raw
/// expression's value, ≥10,000 expressions.
#[test]
fn a02_value_preservation() {
    let cfg = GenConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(72);
    let n = 10_000;
    for _ in 0..n {
        let e = random_valid_expr(&mut rng, &cfg);
        let direct = eval_exact(&e).unwrap();
        let through = eval_mtree(&build_mtree(&canonicalize(&e).unwrap())).unwrap();
        assert_eq!(direct, through, "value diverged for {}", to_infix(&e));
    }
    println!("[a02] PASS — eval_mtree∘build∘canonicalize = eval_exact on {n} expressions");
}

fn expand_paths(p: &PathMultiset) -> Vec<MPath> {
    let mut out = Vec::new();
    for (path, count) in p.iter() {
        for _ in 0..count {
            out.push(path.clone());
        }
    }
    out
}

/// Independent IoU oracle: greedy multiset matching over expanded path
/// lists; |A∩B| by removal, |A∪B| = |A|+|B|−|A∩B|.
fn brute_force_iou(a: &[MPath], b: &[MPath]) -> BigRational {
    let mut b_left: Vec<&MPath> = b.iter().collect();
    let mut inter = 0usize;
    for p in a {
        if let Some(i) = b_left.iter().position(|q| *q == p) {
            b_left.swap_remove(i);
            inter += 1;
        }
    }
    let union = a.len() + b.len() - inter;
    BigRational::new(BigInt::from(inter), BigInt::from(union))
}

/// IoU equals the brute-force counter on ≥1,000 random tree pairs, and the
/// two worked error cases score 4/6 and 3/6 with the right ordering.
#[test]
fn a03_iou_oracle_and_worked_cases() {
    let corpus = generate_synthetic(1001, 73, &SynthConfig::default());
    let mut pairs = 0;
    for w in corpus.windows(2) {
        let pa = mtree_paths(&w[0].tree);
        let pb = mtree_paths(&w[1].tree);
        let fast = mtree_iou(&pa, &pb);
        let brute = brute_force_iou(&expand_paths(&pa), &expand_paths(&pb));
        assert_eq!(fast, brute, "IoU mismatch: {} vs {}", w[0].tree, w[1].tree);
        assert_eq!(mtree_iou(&pa, &pa), BigRational::one());
        pairs += 1;
    }
    assert!(pairs >= 1000);

    let gold = tree_of("13*10+13*3-40");
    let wrong_sign = tree_of("13*(10+3)+40");
    let wrong_structure = tree_of("13*10+3-40");
    let iou_sign = mtree_iou(&mtree_paths(&wrong_sign), &mtree_paths(&gold));
    let iou_structure = mtree_iou(&mtree_paths(&wrong_structure), &mtree_paths(&gold));
    assert_eq!(iou_sign, frac(4, 6));
    assert_eq!(iou_structure, frac(3, 6));
    assert!(iou_sign > iou_structure, "worse error must score lower");
    println!(
        "[a03] PASS — oracle equality on {pairs} pairs; worked cases {iou_sign} > {iou_structure}"
    );
}

/// Metric ordering: exp_acc ⇒ mtree_acc ⇒ val_acc, and mtree_acc ⇒ IoU 1,
/// with zero violations over a mixed property corpus.
#[test]
fn a04_metric_ordering() {
    let cfg = GenConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(74);
    let zero_tol = BigRational::zero();
    let n = 3_000;
    for i in 0..n {
        let (gold, pred) = match i % 3 {
            0 => {
                let e = random_valid_expr(&mut rng, &cfg);
                (e.clone(), e)
            }
            1 => equivalent_pair(&mut rng, &cfg),
            _ => control_pair(&mut rng, &cfg),
        };
        let answer = eval_exact(&gold).unwrap();
        let s =
            score_sample(&to_infix(&pred), &to_infix(&gold), None, &answer, &zero_tol).unwrap();
        assert!(!s.exp_acc || s.mtree_acc, "exp_acc without mtree_acc at {i}");
        assert!(!s.mtree_acc || s.val_acc, "mtree_acc without val_acc at {i}");
        assert!(
            !s.mtree_acc || s.mtree_iou == BigRational::one(),
            "mtree_acc with IoU < 1 at {i}"
        );
    }
    println!("[a04] PASS — exp⇒mtree⇒val and mtree⇒IoU=1 held on {n} scored samples");
}

/// RefMTree preserves values on 100% of ≥10,000 generated trees.
#[test]
fn a05_refmtree_value_preservation() {
    let corpus = generate_synthetic(10_000, 75, &SynthConfig::default());
    for s in &corpus {
        let direct = eval_mtree(&s.tree).unwrap();
        let through = to_refmtree(&s.tree).eval().unwrap();
        assert_eq!(direct, through, "RefMTree value diverged for {}", s.tree);
    }
    println!("[a05] PASS — RefMTree eval matched on {} trees", corpus.len());
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

fn gradient_fixture() -> (NagdModel, Vec<nagd::TrainSample>) {
    let mut corpus = generate_synthetic(2, 91, &SynthConfig::default());
    let fig = figure_tree();
    let (tokens, quantities) = mtree_core::corpus::render_sample(&fig);
    corpus.push(mtree_core::corpus::SyntheticSample {
        id: "fig".to_string(),
        tree: fig,
        tokens,
        quantities,
    });
    let hyper = HyperParams { d_k: 8, heads: 2, ..HyperParams::default() };
    let model =
        NagdModel::new(hyper, vocab_from_samples(&corpus), vec![rat(1)], 23).unwrap();
    let batch = corpus.iter().map(|s| prepare_sample(&model.vocab, s).unwrap()).collect();
    (model, batch)
}

/// Every parameter's analytic gradient matches central finite differences
/// to relative error < 1e−4 on a d_k ≤ 16 model, in < 30 s.
#[test]
fn a06_gradient_check() {
    let start = Instant::now();
    let (model, batch) = gradient_fixture();
    let (mut g, ids, loss) = batch_loss_graph(&model, &batch).unwrap();
    g.backward(loss);

    let h = 1e-5;
    let mut checked = 0usize;
    let mut max_rel = 0.0f64;
    for (name, value) in &model.params {
        let grad = g
            .grad(ids.get(name))
            .unwrap_or_else(|| panic!("parameter '{name}' received no gradient"))
            .clone();
        let len = value.len();
        let probes: Vec<usize> = if len <= 10 {
            (0..len).collect()
        } else {
            let mut p: Vec<usize> = (0..7).map(|k| k * len / 7).collect();
            p.push(len - 1);
            p
        };
        for flat in probes {
            let (rows, cols) = value.dim();
            let idx = (flat / cols, flat % cols);
            assert!(idx.0 < rows);
            let mut plus = model.clone();
            plus.params.get_mut(name).unwrap()[idx] += h;
            let mut minus = model.clone();
            minus.params.get_mut(name).unwrap()[idx] -= h;
            let numeric = (batch_loss_value(&plus, &batch).unwrap()
                - batch_loss_value(&minus, &batch).unwrap())
                / (2.0 * h);
            let analytic = grad[idx];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4);
            assert!(
                rel < 1e-4,
                "{name}[{idx:?}]: analytic {analytic} vs numeric {numeric} (rel {rel:.2e})"
            );
            max_rel = max_rel.max(rel);
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 30, "budget exceeded: {elapsed:?}");
    println!(
        "[a06] PASS — {checked} probed entries across {} parameters, max rel err {max_rel:.2e}, {elapsed:?}",
        model.params.len()
    );
}

/// Cross-goal reach: the Jacobian block from sibling goal B into goal A's
/// slots is exactly zero with cross-goal attention off and non-zero with
/// it on.
#[test]
fn a07_cross_goal_reach() {
    let corpus = generate_synthetic(2, 77, &SynthConfig::default());
    let hyper = HyperParams { d_k: 16, heads: 2, ..HyperParams::default() };
    let model = NagdModel::new(hyper, vocab_from_samples(&corpus), vec![], 3).unwrap();
    let d = model.hyper.d_k;

    let run = |cross: bool| {
        let mut g = Graph::new();
        let ids = insert_params(&mut g, &model, false);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut mk = |rows: usize| {
            let mut v = Array2::zeros((rows, d));
            v.iter_mut().for_each(|x| *x = rng.random_range(-0.5..0.5));
            v
        };
        let goal_a = g.param(mk(1));
        let goal_b = g.param(mk(1));
        let bank = g.constant(mk(6));
        let outs =
            decompose_level(&mut g, &ids, &model.hyper, &[goal_a, goal_b], bank, cross).unwrap();
        let probe = g.sum_all(outs[0].e_hat);
        g.backward(probe);
        g.grad(goal_b).cloned()
    };

    let off = run(false);
    assert!(
        off.is_none() || off.as_ref().unwrap().iter().all(|x| *x == 0.0),
        "goal B reached goal A with cross-goal attention off"
    );
    let on = run(true).expect("cross-goal on: gradient must flow");
    let nonzero = on.iter().filter(|x| **x != 0.0).count();
    assert!(nonzero > 0, "cross-goal on: Jacobian block is all zero");
    println!(
        "[a07] PASS — cross-block exactly zero when off; {nonzero}/{} entries non-zero when on",
        on.len()
    );
}

/// Toy learning: 200 synthetic samples (branch ≤ 4, depth ≤ 2) reach ≥95%
/// train value accuracy within 10 minutes; 2,000-sample held-out accuracy
/// is reported with the cross-goal ablation (directional, not asserted).
#[test]
fn a08_toy_learning() {
    let start = Instant::now();
    let cfg = ToyConfig {
        d_k: 32,
        heads: 2,
        lr: 3e-3,
        steps: 6000,
        batch_size: 16,
        train_samples: 200,
        eval_samples: 2000,
        depth: 2,
        branch_dist: vec![(2, 0.4), (3, 0.4), (4, 0.2)],
        seed: 42,
        ..ToyConfig::default()
    };
    let opts = RunOptions {
        target_train_val_acc: Some(0.95),
        check_every: 250,
        ..RunOptions::default()
    };
    let (_, report) = run_toy(&cfg, &opts, None).unwrap();
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 600, "budget exceeded: {elapsed:?}");
    assert!(
        report.train.val_acc() >= 0.95,
        "train value accuracy {:.3} < 0.95 after {} steps",
        report.train.val_acc(),
        report.steps_run
    );

    let ablation_opts = RunOptions { cross_goal: Some(false), ..opts.clone() };
    let (_, ablation) = run_toy(&cfg, &ablation_opts, None).unwrap();

    // depth-2 corpora decompose one goal per level, so the ablation ties
    // there by construction; a depth-3 pair shows cross-goal attention live
    let deep_cfg = ToyConfig { depth: 3, steps: 1500, ..cfg.clone() };
    let deep_opts = RunOptions::default();
    let (_, deep_cross) = run_toy(&deep_cfg, &deep_opts, None).unwrap();
    let deep_ablation_opts = RunOptions { cross_goal: Some(false), ..RunOptions::default() };
    let (_, deep_vanilla) = run_toy(&deep_cfg, &deep_ablation_opts, None).unwrap();

    println!(
        "[a08] PASS — train val {:.1}% at step {} in {elapsed:?}; held-out (2000): \
         cross-goal val {:.1}% / mtree {:.1}%, ablation val {:.1}% / mtree {:.1}% \
         (tie expected at depth 2); depth-3 reported: cross-goal val {:.1}% vs vanilla val {:.1}%",
        report.train.val_acc() * 100.0,
        report.steps_run,
        report.eval.val_acc() * 100.0,
        report.eval.mtree_acc() * 100.0,
        ablation.eval.val_acc() * 100.0,
        ablation.eval.mtree_acc() * 100.0,
        deep_cross.eval.val_acc() * 100.0,
        deep_vanilla.eval.val_acc() * 100.0,
    );
}

/// Branch-cap statistic: the synthetic generator configured like the toy
/// corpus keeps ≥99% of samples below branch number 8, and the fraction is
/// printed.
#[test]
fn a09_branch_cap_statistic() {
    let corpus = generate_synthetic(10_000, 79, &SynthConfig::default());
    let below: usize =
        corpus.iter().filter(|s| branch_number(&s.tree) < 8).count();
    let fraction = below as f64 / corpus.len() as f64;
    assert!(fraction >= 0.99, "branch<8 fraction {fraction:.4} below 0.99");
    println!(
        "[a09] PASS — {below}/{} samples ({:.2}%) have branch number < 8",
        corpus.len(),
        fraction * 100.0
    );
}

/// N_b masking: the loss is bitwise invariant to pointer scores and type
/// logits in slots at or beyond the terminator.
#[test]
fn a10_nb_masking() {
    let layout = BankLayout { n_consts: 0, n_numbers: 3 };
    let m = layout.total();
    let targets = vec![
        SlotTarget { kind: SlotKind::Operator(1), child: None },
        SlotTarget {
            kind: SlotKind::Leaf { bank: layout.number_index(0), form: 2 },
            child: None,
        },
        SlotTarget { kind: SlotKind::Terminator, child: None },
    ];
    let loss_with = |post_nb_value: f64| {
        let mut g = Graph::new();
        let mut omega = Array2::zeros((8, m));
        omega.iter_mut().enumerate().for_each(|(i, x)| *x = (i as f64 * 0.11).sin());
        let mut types = Array2::zeros((8, 4));
        types.iter_mut().enumerate().for_each(|(i, x)| *x = (i as f64 * 0.07).cos());
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
    let clean = loss_with(0.0);
    let perturbed = loss_with(987.654);
    assert_eq!(
        clean.to_bits(),
        perturbed.to_bits(),
        "post-terminator slots leaked into the loss"
    );
    println!("[a10] PASS — loss bits identical under post-terminator perturbation ({clean})");
}

/// The training loop itself stays deterministic under the acceptance
/// config — two short runs agree bitwise on the loss sequence.
#[test]
fn toy_determinism_spot_check() {
    let cfg = ToyConfig {
        d_k: 8,
        steps: 5,
        batch_size: 4,
        train_samples: 6,
        eval_samples: 4,
        ..ToyConfig::default()
    };
    let run = || {
        let synth = cfg.synth();
        let corpus = generate_synthetic(cfg.train_samples, cfg.seed, &synth);
        let model =
            NagdModel::new(cfg.hyper(), vocab_from_samples(&corpus), vec![], cfg.seed).unwrap();
        let batch: Vec<_> =
            corpus.iter().map(|s| prepare_sample(&model.vocab, s).unwrap()).collect();
        let mut tr = Trainer::new(model);
        (0..5).map(|_| tr.step(&batch).unwrap().to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}
