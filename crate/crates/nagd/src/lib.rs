//! Goal-driven non-autoregressive decoding over unified MTrees.
//!
//! A small trainable encoder turns a tokenized problem into a problem
//! vector (the root goal) and one vector per problem number. Each goal is
//! decomposed non-autoregressively into up to 8 sub-goal slots: the goal
//! vector is fused with sinusoidal position encodings, self-attended
//! (optionally jointly across sibling goals — cross-goal attention),
//! matched against a candidate bank by inter-attention, and pointed at
//! candidates (operators, constants, problem numbers, or the `N_b`
//! terminator). Leaf slots get a form in {n, 1/n, −n, −1/n} from a small
//! classifier trained with focal loss. Training is teacher-forced over
//! gold MTrees; decoding is level-synchronous argmax with explicit
//! failure outcomes.
//!
//! The numeric substrate is a minimal reverse-mode tape over 2-D `f64`
//! tensors in [`tensor`]; everything is deterministic for a fixed seed in
//! single-threaded use.

pub mod checkpoint;
pub mod config;
pub mod decode;
pub mod error;
pub mod model;
pub mod tensor;
pub mod toy;
pub mod train;

pub use config::{parse_branch_dist, parse_config, parse_constants, ToyConfig};
pub use decode::{decode_tree, select_slots, DecodeFailure, DecodeOutcome, NODE_BUDGET};
pub use error::NagdError;
pub use model::{
    build_bank, decompose_level, encode, form_class, insert_params, param_specs,
    positional_encoding, BankEntry, BankLayout, GoalOut, HyperParams, ModelIds, NagdModel, Vocab,
    FORMS, MAX_LEN,
};
pub use tensor::{softmax_rows_value, Graph, Tid};
pub use toy::{eval_heldout, evaluate_split, run_toy, RunOptions, SplitReport, ToyReport};
pub use train::{
    align_targets, batch_loss_graph, batch_loss_value, goal_children, goal_loss, levels_needed,
    prepare_sample, sample_loss, vocab_from_samples, SlotKind, SlotTarget, TrainSample, Trainer,
};
