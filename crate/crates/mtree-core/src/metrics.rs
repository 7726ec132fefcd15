//! The four evaluation metrics over (prediction, gold) expression pairs:
//! expression accuracy, value accuracy, MTree accuracy, and MTree IoU.

use std::collections::BTreeMap;

use num::{BigInt, BigRational, Signed, ToPrimitive, Zero};

use crate::canon::canonicalize;
use crate::error::{GoldError, MetricsError};
use crate::expr::parse;
use crate::mtree::{branch_number, build_mtree, eval_mtree, mtree_paths, PathMultiset};

/// Why a prediction scored zero across the board.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureReason {
    ParseError,
    CanonError,
    EvalError,
}

impl FailureReason {
    pub fn label(self) -> &'static str {
        match self {
            FailureReason::ParseError => "parse_error",
            FailureReason::CanonError => "canon_error",
            FailureReason::EvalError => "eval_error",
        }
    }
}

/// Per-sample result. Any recorded failure forces all booleans false and
/// IoU zero; `mtree_acc` true implies IoU exactly one.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleScore {
    pub exp_acc: bool,
    pub val_acc: bool,
    pub mtree_acc: bool,
    pub mtree_iou: BigRational,
    pub failure: Option<FailureReason>,
    /// Branch number of the gold MTree, for the branch-binned report.
    pub gold_branch: usize,
}

impl SampleScore {
    fn failed(reason: FailureReason, gold_branch: usize) -> Self {
        SampleScore {
            exp_acc: false,
            val_acc: false,
            mtree_acc: false,
            mtree_iou: BigRational::zero(),
            failure: Some(reason),
            gold_branch,
        }
    }
}

/// Multiset IoU of two path multisets: per distinct path, intersection takes
/// the minimum of the two counts and union the maximum.
pub fn mtree_iou(p: &PathMultiset, g: &PathMultiset) -> BigRational {
    let mut inter = 0usize;
    let mut union = 0usize;
    for key in p.merged_keys(g) {
        let cp = p.count(key);
        let cg = g.count(key);
        inter += cp.min(cg);
        union += cp.max(cg);
    }
    assert!(union > 0, "path multisets are never empty");
    BigRational::new(BigInt::from(inter), BigInt::from(union))
}

/// Expression-accuracy normalization: strip all whitespace and a leading
/// `x=` / `X=`; no other rewriting.
pub fn normalize_expression_text(s: &str) -> String {
    let stripped: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    stripped
        .strip_prefix("x=")
        .or_else(|| stripped.strip_prefix("X="))
        .unwrap_or(&stripped)
        .to_string()
}

/// Score one prediction against a gold expression and answer.
///
/// The gold side must parse, canonicalize, and evaluate — failures there are
/// errors (such samples are excluded at ingestion). Prediction-side failures
/// are captured in the score, never fatal. `numbers` resolves `N<k>`
/// placeholders on both sides.
pub fn score_sample(
    pred_text: &str,
    gold_text: &str,
    numbers: Option<&[BigRational]>,
    gold_answer: &BigRational,
    tol: &BigRational,
) -> Result<SampleScore, GoldError> {
    let gold_norm = normalize_expression_text(gold_text);
    let pred_norm = normalize_expression_text(pred_text);

    let gold_expr = parse(&gold_norm, numbers)?;
    let gold_tree = build_mtree(&canonicalize(&gold_expr)?);
    eval_mtree(&gold_tree)?;
    let gold_branch = branch_number(&gold_tree);

    let pred_expr = match parse(&pred_norm, numbers) {
        Ok(e) => e,
        Err(_) => return Ok(SampleScore::failed(FailureReason::ParseError, gold_branch)),
    };
    let pred_sum = match canonicalize(&pred_expr) {
        Ok(c) => c,
        Err(_) => return Ok(SampleScore::failed(FailureReason::CanonError, gold_branch)),
    };
    let pred_tree = build_mtree(&pred_sum);
    let pred_value = match eval_mtree(&pred_tree) {
        Ok(v) => v,
        Err(_) => return Ok(SampleScore::failed(FailureReason::EvalError, gold_branch)),
    };

    let exp_acc = pred_norm == gold_norm;
    let val_acc = (&pred_value - gold_answer).abs() <= *tol;
    let mtree_acc = pred_tree == gold_tree;
    let iou = mtree_iou(&mtree_paths(&pred_tree), &mtree_paths(&gold_tree));
    Ok(SampleScore {
        exp_acc,
        val_acc,
        mtree_acc,
        mtree_iou: iou,
        failure: None,
        gold_branch,
    })
}

/// Value-accuracy counts within one gold-branch-number bin.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BranchBin {
    pub val_correct: usize,
    pub total: usize,
}

/// Corpus-level aggregate of per-sample scores.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub samples: usize,
    pub exp_correct: usize,
    pub val_correct: usize,
    pub mtree_correct: usize,
    pub iou_sum: BigRational,
    pub parse_failures: usize,
    pub canon_failures: usize,
    pub eval_failures: usize,
    pub branch_bins: BTreeMap<usize, BranchBin>,
}

impl AggregateReport {
    pub fn exp_acc(&self) -> f64 {
        self.exp_correct as f64 / self.samples as f64
    }

    pub fn val_acc(&self) -> f64 {
        self.val_correct as f64 / self.samples as f64
    }

    pub fn mtree_acc(&self) -> f64 {
        self.mtree_correct as f64 / self.samples as f64
    }

    /// Arithmetic mean of per-sample IoU, kept exact.
    pub fn corpus_iou(&self) -> BigRational {
        &self.iou_sum / BigRational::from_integer(BigInt::from(self.samples))
    }

    /// Fraction of samples whose gold MTree has branch number below `cap`.
    pub fn branch_below(&self, cap: usize) -> f64 {
        let n: usize = self
            .branch_bins
            .iter()
            .filter(|(&b, _)| b < cap)
            .map(|(_, bin)| bin.total)
            .sum();
        n as f64 / self.samples as f64
    }

    /// Human-readable aligned table.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("samples     {:>8}\n", self.samples));
        out.push_str(&format!("Exp Acc     {:>8.2}%\n", self.exp_acc() * 100.0));
        out.push_str(&format!("Val Acc     {:>8.2}%\n", self.val_acc() * 100.0));
        out.push_str(&format!("MTree Acc   {:>8.2}%\n", self.mtree_acc() * 100.0));
        out.push_str(&format!(
            "MTree IoU   {:>8.2}%\n",
            self.corpus_iou().to_f64().unwrap_or(f64::NAN) * 100.0
        ));
        out.push_str(&format!(
            "failures    parse={} canon={} eval={}\n",
            self.parse_failures, self.canon_failures, self.eval_failures
        ));
        out.push_str("val acc by gold branch number:\n");
        for (branch, bin) in &self.branch_bins {
            out.push_str(&format!(
                "  branch {:>2}  {:>6}/{:<6} {:>7.2}%\n",
                branch,
                bin.val_correct,
                bin.total,
                bin.val_correct as f64 / bin.total as f64 * 100.0
            ));
        }
        out.push_str(&format!(
            "branch < 8  {:>8.2}%\n",
            self.branch_below(8) * 100.0
        ));
        out
    }

    /// Machine-readable `key=value` lines, one metric per line.
    pub fn render_kv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("samples={}\n", self.samples));
        out.push_str(&format!("exp_acc={:.6}\n", self.exp_acc()));
        out.push_str(&format!("val_acc={:.6}\n", self.val_acc()));
        out.push_str(&format!("mtree_acc={:.6}\n", self.mtree_acc()));
        out.push_str(&format!(
            "mtree_iou={:.6}\n",
            self.corpus_iou().to_f64().unwrap_or(f64::NAN)
        ));
        out.push_str(&format!("failures_parse={}\n", self.parse_failures));
        out.push_str(&format!("failures_canon={}\n", self.canon_failures));
        out.push_str(&format!("failures_eval={}\n", self.eval_failures));
        for (branch, bin) in &self.branch_bins {
            out.push_str(&format!(
                "branch{}_val_acc={:.6}\n",
                branch,
                bin.val_correct as f64 / bin.total as f64
            ));
            out.push_str(&format!("branch{}_total={}\n", branch, bin.total));
        }
        out.push_str(&format!("branch_below_8={:.6}\n", self.branch_below(8)));
        out
    }
}

/// Fold sample scores into the corpus report. Errors on an empty list.
pub fn aggregate(scores: &[SampleScore]) -> Result<AggregateReport, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::EmptyAggregate);
    }
    let mut report = AggregateReport {
        samples: scores.len(),
        exp_correct: 0,
        val_correct: 0,
        mtree_correct: 0,
        iou_sum: BigRational::zero(),
        parse_failures: 0,
        canon_failures: 0,
        eval_failures: 0,
        branch_bins: BTreeMap::new(),
    };
    for s in scores {
        report.exp_correct += s.exp_acc as usize;
        report.val_correct += s.val_acc as usize;
        report.mtree_correct += s.mtree_acc as usize;
        report.iou_sum += &s.mtree_iou;
        match s.failure {
            Some(FailureReason::ParseError) => report.parse_failures += 1,
            Some(FailureReason::CanonError) => report.canon_failures += 1,
            Some(FailureReason::EvalError) => report.eval_failures += 1,
            None => {}
        }
        let bin = report.branch_bins.entry(s.gold_branch).or_default();
        bin.total += 1;
        bin.val_correct += s.val_acc as usize;
    }
    Ok(report)
}
