//! Desk-scale training runs over the synthetic corpus: generate, train,
//! and score decoded trees against gold, with an optional early-stop
//! target on train value accuracy.

use mtree_core::corpus::{generate_synthetic, SyntheticSample};
use mtree_core::mtree::{eval_mtree, mtree_equal};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ToyConfig;
use crate::decode::{decode_tree, DecodeOutcome};
use crate::error::NagdError;
use crate::model::NagdModel;
use crate::train::{prepare_sample, vocab_from_samples, TrainSample, Trainer};

/// Seed offset separating the held-out corpus stream from training.
const EVAL_SEED_OFFSET: u64 = 1;
/// Seed offset separating batch shuffling from model initialization.
const SHUFFLE_SEED_OFFSET: u64 = 2;

/// Decode-and-match accuracy of one split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SplitReport {
    pub samples: usize,
    /// Decoded tree evaluates to the gold tree's exact value.
    pub val_correct: usize,
    /// Decoded tree equals the gold MTree.
    pub mtree_correct: usize,
    /// Decodes that ended in an explicit failure outcome.
    pub decode_failures: usize,
}

impl SplitReport {
    pub fn val_acc(&self) -> f64 {
        self.val_correct as f64 / self.samples as f64
    }

    pub fn mtree_acc(&self) -> f64 {
        self.mtree_correct as f64 / self.samples as f64
    }
}

/// Outcome of a toy run: what was trained and how both splits score.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyReport {
    pub cross_goal: bool,
    pub steps_run: usize,
    pub final_loss: f64,
    pub train: SplitReport,
    pub eval: SplitReport,
}

/// Decode every sample and compare against its gold tree. MTree equality
/// implies value equality (both sides evaluate exactly); failures of any
/// kind count as wrong, never abort.
pub fn evaluate_split(model: &NagdModel, samples: &[SyntheticSample]) -> SplitReport {
    let mut report = SplitReport { samples: samples.len(), ..SplitReport::default() };
    for sample in samples {
        let Ok(ts) = prepare_sample(&model.vocab, sample) else {
            report.decode_failures += 1;
            continue;
        };
        let outcome =
            match decode_tree(model, &ts.token_ids, &ts.number_positions, &ts.quantities) {
                Ok(o) => o,
                Err(_) => {
                    report.decode_failures += 1;
                    continue;
                }
            };
        let tree = match outcome {
            DecodeOutcome::Tree(t) => t,
            DecodeOutcome::Failure(_) => {
                report.decode_failures += 1;
                continue;
            }
        };
        let gold_value = eval_mtree(&sample.tree).expect("gold trees evaluate");
        if eval_mtree(&tree).is_ok_and(|v| v == gold_value) {
            report.val_correct += 1;
        }
        if mtree_equal(&tree, &sample.tree) {
            report.mtree_correct += 1;
        }
    }
    report
}

/// Knobs of one run beyond the config file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the config's cross-goal flag (the ablation switch).
    pub cross_goal: Option<bool>,
    /// Stop early once train value accuracy reaches this fraction.
    pub target_train_val_acc: Option<f64>,
    /// How often (in steps) to check the early-stop target; 0 disables.
    pub check_every: usize,
}

/// Observer for training progress; called after every step.
pub type Progress<'a> = &'a mut dyn FnMut(usize, f64);

/// Generate both corpora, train for `cfg.steps` (or until the early-stop
/// target), and score both splits by decoding. The vocabulary covers both
/// splits so held-out scoring never fails on an unseen token. Everything
/// is deterministic in `cfg.seed`.
pub fn run_toy(
    cfg: &ToyConfig,
    opts: &RunOptions,
    mut progress: Option<Progress<'_>>,
) -> Result<(Trainer, ToyReport), NagdError> {
    let synth = cfg.synth();
    let train_set = generate_synthetic(cfg.train_samples, cfg.seed, &synth);
    let eval_set =
        generate_synthetic(cfg.eval_samples, cfg.seed.wrapping_add(EVAL_SEED_OFFSET), &synth);

    let mut all = train_set.clone();
    all.extend(eval_set.iter().cloned());
    let vocab = vocab_from_samples(&all);

    let mut hyper = cfg.hyper();
    if let Some(cross) = opts.cross_goal {
        hyper.cross_goal = cross;
    }
    let cross_goal = hyper.cross_goal;
    let model = NagdModel::new(hyper, vocab, cfg.constants.clone(), cfg.seed)?;
    let prepared: Vec<TrainSample> = train_set
        .iter()
        .map(|s| prepare_sample(&model.vocab, s))
        .collect::<Result<_, _>>()?;

    let mut trainer = Trainer::new(model);
    let mut shuffle_rng =
        ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(SHUFFLE_SEED_OFFSET));
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut cursor = order.len();

    let mut final_loss = f64::NAN;
    let mut steps_run = 0;
    for step in 1..=cfg.steps {
        if cursor + cfg.batch_size > order.len() {
            order.shuffle(&mut shuffle_rng);
            cursor = 0;
        }
        let take = cfg.batch_size.min(order.len());
        let batch: Vec<TrainSample> =
            order[cursor..cursor + take].iter().map(|i| prepared[*i].clone()).collect();
        cursor += take;

        final_loss = trainer.step(&batch)?;
        steps_run = step;
        if let Some(p) = progress.as_deref_mut() {
            p(step, final_loss);
        }
        if let (Some(target), check) = (opts.target_train_val_acc, opts.check_every) {
            if check > 0 && step % check == 0 {
                let r = evaluate_split(&trainer.model, &train_set);
                if r.val_acc() >= target {
                    break;
                }
            }
        }
    }

    let report = ToyReport {
        cross_goal,
        steps_run,
        final_loss,
        train: evaluate_split(&trainer.model, &train_set),
        eval: evaluate_split(&trainer.model, &eval_set),
    };
    Ok((trainer, report))
}

/// Regenerate the held-out corpus for `cfg` and score a loaded model on
/// it — the evaluation half of [`run_toy`], for checkpointed models.
pub fn eval_heldout(model: &NagdModel, cfg: &ToyConfig) -> SplitReport {
    let eval_set = generate_synthetic(
        cfg.eval_samples,
        cfg.seed.wrapping_add(EVAL_SEED_OFFSET),
        &cfg.synth(),
    );
    evaluate_split(model, &eval_set)
}
