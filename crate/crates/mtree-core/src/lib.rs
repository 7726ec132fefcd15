//! Canonical expression trees and structural metrics for arithmetic
//! solution expressions.
//!
//! The pipeline runs in three stages:
//!
//! 1. [`expr`] parses solver output (infix text, optionally with `N<k>`
//!    placeholders) into an exact-rational expression tree.
//! 2. [`canon`] rewrites that tree into a canonical sum of signed products,
//!    erasing the order- and grouping-level variation between equivalent
//!    solutions without merging terms or folding constants.
//! 3. [`mtree`] folds the canonical sum into the unified multi-branch tree
//!    (MTree) whose nodes `{+, *, *-, +/}` have unordered children, and
//!    [`metrics`] scores predictions against gold trees with expression
//!    accuracy, value accuracy, MTree accuracy, and MTree IoU.
//!
//! [`corpus`] reads datasets and writes score reports; [`gen`] produces
//! synthetic expression corpora and equivalence-rewritten pairs for tests
//! and toy training.

pub mod canon;
pub mod corpus;
pub mod error;
pub mod expr;
pub mod gen;
pub mod metrics;
pub mod mtree;

pub use canon::{canonicalize, CanonicalSum, Factor, FactorBase, Sign, Term, EXPANSION_LIMIT};
pub use corpus::{
    extract_numbers, generate_synthetic, load_dataset, load_predictions, render_exclusions,
    Dialect, Exclusion, ExclusionReason, IngestOptions, ProblemRecord, SynthConfig,
    SyntheticSample,
};
pub use error::{CanonError, CorpusError, ExprError, GoldError, MTreeError, MetricsError};
pub use expr::{eval_exact, parse, to_infix, BinOp, Expr, Origin, Quantity, MAX_EXPONENT};
pub use metrics::{
    aggregate, mtree_iou, normalize_expression_text, score_sample, AggregateReport, BranchBin,
    FailureReason, SampleScore,
};
pub use mtree::{
    branch_number, build_mtree, build_refmtree, eval_mtree, mtree_equal, mtree_paths,
    to_refmtree, LeafForm, MOp, MPath, MTree, PathMultiset, RefMTree,
};
