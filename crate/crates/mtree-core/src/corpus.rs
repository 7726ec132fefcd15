//! Dataset ingestion (Math23K / MAWPS dialects), number extraction, and
//! synthetic corpus generation for the toy decoder.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num::{BigInt, BigRational, One, Signed, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use crate::canon::{canonicalize, CanonicalSum, Factor, Sign, Term};
use crate::error::CorpusError;
use crate::expr::{eval_exact, parse, to_infix, Expr, Origin, Quantity};
use crate::mtree::{branch_number, build_mtree, eval_mtree, MTree};

/// One validated problem: placeholder-rewritten text tokens, the extracted
/// quantities they point to, and the placeholder-form gold equation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemRecord {
    pub id: String,
    pub tokens: Vec<String>,
    pub quantities: Vec<BigRational>,
    /// The dataset's equation string exactly as read (any `x=` prefix kept),
    /// the reference text for expression accuracy.
    pub equation: String,
    /// Infix form with every literal mapped to its `N<k>` placeholder;
    /// whitelisted constants stay literal. Parses against `quantities`.
    pub equation_mapped: String,
    pub answer: BigRational,
}

/// Why a record was discarded at ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExclusionReason {
    ParseError,
    CanonError,
    EvalError,
    AnswerMismatch,
    BranchCap,
    UnmappedLiteral,
}

impl ExclusionReason {
    pub fn label(self) -> &'static str {
        match self {
            ExclusionReason::ParseError => "parse_error",
            ExclusionReason::CanonError => "canon_error",
            ExclusionReason::EvalError => "eval_error",
            ExclusionReason::AnswerMismatch => "answer_mismatch",
            ExclusionReason::BranchCap => "branch_cap",
            ExclusionReason::UnmappedLiteral => "unmapped_literal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exclusion {
    pub id: String,
    pub reason: ExclusionReason,
}

impl fmt::Display for Exclusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}", self.id, self.reason.label())
    }
}

/// Exclusion report: one `id<TAB>reason` line per discarded record.
pub fn render_exclusions(exclusions: &[Exclusion]) -> String {
    let mut out = String::new();
    for e in exclusions {
        out.push_str(&format!("{e}\n"));
    }
    out
}

/// Input schema of a dataset file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dialect {
    /// Entries with `id` / `original_text` / `equation` (with `x=` prefix) /
    /// `ans` fields.
    Math23k,
    /// Entries with `iIndex` / `sQuestion` / `lEquations` / `lSolutions`.
    Mawps,
}

impl FromStr for Dialect {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "math23k" => Ok(Dialect::Math23k),
            "mawps" => Ok(Dialect::Mawps),
            other => Err(format!("unknown dialect '{other}' (expected math23k or mawps)")),
        }
    }
}

/// Ingestion knobs.
#[derive(Debug, Clone)]
pub struct IngestOptions {
    /// Records whose gold MTree exceeds this branch number are excluded.
    pub max_branch: usize,
    /// |gold equation value − stated answer| tolerance.
    pub tol: BigRational,
    /// Whitelisted constants an equation may use beyond problem numbers.
    pub constants: Vec<BigRational>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            max_branch: 8,
            tol: BigRational::new(BigInt::from(1), BigInt::from(10_000)),
            constants: vec![
                BigRational::one(),
                BigRational::from_integer(BigInt::from(100)),
            ],
        }
    }
}

/// Load and validate a dataset file. Per-record failures go to the
/// exclusion report; only file-level problems are errors. Accepted records
/// plus exclusions always add up to the number of entries read.
pub fn load_dataset(
    path: &Path,
    dialect: Dialect,
    opts: &IngestOptions,
) -> Result<(Vec<ProblemRecord>, Vec<Exclusion>), CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    let entries = parse_entries(&text, path)?;
    let mut records = Vec::new();
    let mut exclusions = Vec::new();
    for (index, entry) in entries.iter().enumerate() {
        let raw = RawRecord::from_value(entry, dialect, index, path)?;
        match validate_record(&raw, opts) {
            Ok(record) => records.push(record),
            Err(reason) => exclusions.push(Exclusion { id: raw.id.clone(), reason }),
        }
    }
    Ok((records, exclusions))
}

/// Load a prediction file: one `id<TAB>expression` pair per line, blank
/// lines skipped. Later lines for the same id win.
pub fn load_predictions(path: &Path) -> Result<Vec<(String, String)>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    let mut out: Vec<(String, String)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, expr) = line.split_once('\t').ok_or_else(|| CorpusError::Schema {
            path: path.display().to_string(),
            msg: format!("line {}: expected id<TAB>expression", lineno + 1),
        })?;
        let id = id.trim().to_string();
        let expr = expr.trim().to_string();
        match out.iter_mut().find(|(existing, _)| *existing == id) {
            Some(slot) => slot.1 = expr,
            None => out.push((id, expr)),
        }
    }
    Ok(out)
}

/// A dataset file is either one JSON array or JSON-lines.
fn parse_entries(text: &str, path: &Path) -> Result<Vec<Value>, CorpusError> {
    if let Ok(Value::Array(entries)) = serde_json::from_str::<Value>(text) {
        return Ok(entries);
    }
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(line).map_err(|e| CorpusError::Json {
            path: path.display().to_string(),
            msg: format!("line {}: {e}", lineno + 1),
        })?;
        entries.push(v);
    }
    Ok(entries)
}

struct RawRecord {
    id: String,
    text: String,
    equation: String,
    answer: String,
}

impl RawRecord {
    fn from_value(
        v: &Value,
        dialect: Dialect,
        index: usize,
        path: &Path,
    ) -> Result<RawRecord, CorpusError> {
        let schema_err = |msg: String| CorpusError::Schema {
            path: path.display().to_string(),
            msg: format!("entry {index}: {msg}"),
        };
        let field = |name: &str| -> Result<&Value, CorpusError> {
            v.get(name).ok_or_else(|| schema_err(format!("missing field '{name}'")))
        };
        let as_text = |value: &Value, name: &str| -> Result<String, CorpusError> {
            match value {
                Value::String(s) => Ok(s.clone()),
                Value::Number(n) => Ok(n.to_string()),
                _ => Err(schema_err(format!("field '{name}' is not a string or number"))),
            }
        };
        match dialect {
            Dialect::Math23k => Ok(RawRecord {
                id: as_text(field("id")?, "id")?,
                text: as_text(field("original_text")?, "original_text")?,
                equation: as_text(field("equation")?, "equation")?,
                answer: as_text(field("ans")?, "ans")?,
            }),
            Dialect::Mawps => {
                let first = |name: &str| -> Result<Value, CorpusError> {
                    match field(name)? {
                        Value::Array(items) if !items.is_empty() => Ok(items[0].clone()),
                        Value::Array(_) => Err(schema_err(format!("field '{name}' is empty"))),
                        other => Ok(other.clone()),
                    }
                };
                Ok(RawRecord {
                    id: as_text(field("iIndex")?, "iIndex")?,
                    text: as_text(field("sQuestion")?, "sQuestion")?,
                    equation: as_text(&first("lEquations")?, "lEquations")?,
                    answer: as_text(&first("lSolutions")?, "lSolutions")?,
                })
            }
        }
    }
}

fn validate_record(
    raw: &RawRecord,
    opts: &IngestOptions,
) -> Result<ProblemRecord, ExclusionReason> {
    let tokens: Vec<String> = raw.text.split_whitespace().map(str::to_string).collect();
    let (quantities, tokens) = extract_numbers(&tokens);

    let answer_text = raw.answer.trim();
    let answer = parse(answer_text, None)
        .and_then(|e| eval_exact(&e))
        .map_err(|_| ExclusionReason::ParseError)?;

    let equation_text = strip_equation_prefix(&raw.equation);
    let expr = parse(equation_text, Some(&quantities))
        .map_err(|_| ExclusionReason::ParseError)?;
    let expr =
        map_literals(&expr, &quantities, &opts.constants).ok_or(ExclusionReason::UnmappedLiteral)?;

    let sum = canonicalize(&expr).map_err(|_| ExclusionReason::CanonError)?;
    let tree = build_mtree(&sum);
    let value = eval_mtree(&tree).map_err(|_| ExclusionReason::EvalError)?;
    if (&value - &answer).abs() > opts.tol {
        return Err(ExclusionReason::AnswerMismatch);
    }
    if branch_number(&tree) > opts.max_branch {
        return Err(ExclusionReason::BranchCap);
    }

    Ok(ProblemRecord {
        id: raw.id.clone(),
        tokens,
        quantities,
        equation: raw.equation.trim().to_string(),
        equation_mapped: to_infix(&expr),
        answer,
    })
}

fn strip_equation_prefix(equation: &str) -> &str {
    let eq = equation.trim();
    eq.strip_prefix("x=")
        .or_else(|| eq.strip_prefix("X="))
        .unwrap_or(eq)
        .trim()
}

/// Rewrite literal leaves to problem placeholders by exact value match
/// (first occurrence wins); leave whitelisted constants in place. `None`
/// when some literal maps to neither.
fn map_literals(
    e: &Expr,
    quantities: &[BigRational],
    constants: &[BigRational],
) -> Option<Expr> {
    let mut first_index: BTreeMap<BigRational, usize> = BTreeMap::new();
    for (k, v) in quantities.iter().enumerate() {
        first_index.entry(v.clone()).or_insert(k);
    }
    map_literals_walk(e, &first_index, constants)
}

fn map_literals_walk(
    e: &Expr,
    first_index: &BTreeMap<BigRational, usize>,
    constants: &[BigRational],
) -> Option<Expr> {
    match e {
        Expr::Leaf(q) => match q.origin {
            Origin::Problem(_) => Some(Expr::Leaf(q.clone())),
            _ => {
                if let Some(&k) = first_index.get(&q.value) {
                    Some(Expr::Leaf(Quantity::problem(k, q.value.clone())))
                } else if constants.contains(&q.value) {
                    Some(Expr::Leaf(Quantity::constant(q.value.clone())))
                } else {
                    None
                }
            }
        },
        Expr::Neg(x) => Some(Expr::neg(map_literals_walk(x, first_index, constants)?)),
        Expr::Bin(op, l, r) => {
            let l = map_literals_walk(l, first_index, constants)?;
            let r = map_literals_walk(r, first_index, constants)?;
            Some(Expr::bin(*op, l, r))
        }
    }
}

/// Replace numeric tokens with `N<k>` placeholders in reading order, keeping
/// duplicates distinct. Returns the extracted values and rewritten tokens.
pub fn extract_numbers(tokens: &[String]) -> (Vec<BigRational>, Vec<String>) {
    let mut quantities = Vec::new();
    let mut rewritten = Vec::with_capacity(tokens.len());
    for tok in tokens {
        if let Some(value) = numeric_token_value(tok) {
            rewritten.push(format!("N{}", quantities.len()));
            quantities.push(value);
        } else {
            rewritten.push(tok.clone());
        }
    }
    (quantities, rewritten)
}

/// Value of a purely numeric token: integer, decimal, percent (`30%`), or
/// fraction (`3/4`, `(3/4)`). Anything else is text.
pub fn numeric_token_value(token: &str) -> Option<BigRational> {
    let tok = token
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .unwrap_or(token);
    if tok.is_empty() {
        return None;
    }
    let (tok, percent) = match tok.strip_suffix('%') {
        Some(t) => (t, true),
        None => (tok, false),
    };
    let value = if let Some((n, d)) = tok.split_once('/') {
        let n = BigInt::from_str(n).ok()?;
        let d = BigInt::from_str(d).ok()?;
        if d.is_zero() {
            return None;
        }
        BigRational::new(n, d)
    } else if let Some((whole, frac)) = tok.split_once('.') {
        if !whole.chars().all(|c| c.is_ascii_digit())
            || !frac.chars().all(|c| c.is_ascii_digit())
            || frac.is_empty()
        {
            return None;
        }
        let whole = if whole.is_empty() { BigInt::zero() } else { BigInt::from_str(whole).ok()? };
        let scale = BigInt::from(10u32).pow(frac.len() as u32);
        let frac = BigInt::from_str(frac).ok()?;
        BigRational::new(whole * &scale + frac, scale)
    } else {
        if !tok.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
        BigRational::from_integer(BigInt::from_str(tok).ok()?)
    };
    Some(if percent {
        value / BigRational::from_integer(BigInt::from(100))
    } else {
        value
    })
}

/// One synthetic problem: a gold MTree plus a token rendering the encoder
/// can learn from (operator-hint tokens interleaved with `N<k>` number
/// tokens) and the quantity list those tokens point at.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticSample {
    pub id: String,
    pub tree: MTree,
    pub tokens: Vec<String>,
    pub quantities: Vec<BigRational>,
}

/// Shape of a synthetic corpus.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    /// Root child-count distribution, e.g. `[(2, 0.5), (3, 0.5)]`.
    pub branch_dist: Vec<(usize, f64)>,
    /// Maximum tree depth (a bare leaf has depth 1); capped at 6.
    pub depth: usize,
    /// Inclusive leaf value range.
    pub leaf_min: i64,
    pub leaf_max: i64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            branch_dist: vec![(2, 0.4), (3, 0.4), (4, 0.2)],
            depth: 3,
            leaf_min: 2,
            leaf_max: 12,
        }
    }
}

/// Deterministically generate `count` synthetic samples from `seed`. Every
/// sample's tree is a canonical-image MTree (built through [`build_mtree`])
/// that evaluates without a reciprocal-of-zero.
pub fn generate_synthetic(count: usize, seed: u64, cfg: &SynthConfig) -> Vec<SyntheticSample> {
    assert!(count > 0, "count must be positive");
    assert!(
        (1..=6).contains(&cfg.depth),
        "synthetic depth must be within 1..=6"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let tree = loop {
            let candidate = random_tree(&mut rng, cfg);
            if eval_mtree(&candidate).is_ok() {
                break candidate;
            }
        };
        debug_assert!(branch_number(&tree) <= 8);
        debug_assert!(tree.depth() <= cfg.depth);
        let (tokens, quantities) = render_sample(&tree);
        samples.push(SyntheticSample { id: format!("syn{i}"), tree, tokens, quantities });
    }
    samples
}

fn sample_root_arity<R: Rng>(rng: &mut R, dist: &[(usize, f64)]) -> usize {
    let total: f64 = dist.iter().map(|(_, w)| w).sum();
    let mut x = rng.random_range(0.0..total.max(f64::MIN_POSITIVE));
    for (arity, w) in dist {
        if x < *w {
            return (*arity).min(8);
        }
        x -= w;
    }
    dist.last().map(|(a, _)| *a).unwrap_or(2).min(8)
}

/// Random canonical-image tree: a random canonical sum is drawn through the
/// canonical grammar (terms of signed factors, reciprocal sums recursing),
/// then folded with [`build_mtree`] so every structural invariant holds.
fn random_tree<R: Rng>(rng: &mut R, cfg: &SynthConfig) -> MTree {
    let arity = sample_root_arity(rng, &cfg.branch_dist);
    // depth budget below the root + node; depth 1 forces a bare leaf root.
    if cfg.depth == 1 {
        let sum = CanonicalSum { terms: vec![random_term(rng, cfg, 1)] };
        return build_mtree(&normalized(sum));
    }
    let terms = (0..arity).map(|_| random_term(rng, cfg, cfg.depth - 1)).collect();
    build_mtree(&normalized(CanonicalSum { terms }))
}

fn normalized(mut sum: CanonicalSum) -> CanonicalSum {
    sum.normalize();
    sum
}

fn random_quantity<R: Rng>(rng: &mut R, cfg: &SynthConfig) -> Quantity {
    Quantity::literal(BigRational::from_integer(BigInt::from(
        rng.random_range(cfg.leaf_min..=cfg.leaf_max),
    )))
}

fn random_number_factor<R: Rng>(rng: &mut R, cfg: &SynthConfig) -> Factor {
    let q = random_quantity(rng, cfg);
    if rng.random_bool(0.25) {
        Factor::inverted_number(q)
    } else {
        Factor::number(q)
    }
}

/// `budget` is how many tree levels this term's node may occupy, counting
/// itself. A negated single-reciprocal-sum term costs one extra level for
/// its arity-1 `*-` wrapper, so that shape needs budget ≥ 3.
fn random_term<R: Rng>(rng: &mut R, cfg: &SynthConfig, budget: usize) -> Term {
    let sign = if rng.random_bool(0.3) { Sign::Minus } else { Sign::Plus };
    if budget <= 1 {
        return Term { sign, factors: vec![random_number_factor(rng, cfg)] };
    }
    match rng.random_range(0u32..10) {
        // single number leaf
        0..=3 => Term { sign, factors: vec![random_number_factor(rng, cfg)] },
        // product of 2-3 factors
        4..=7 => {
            let n = rng.random_range(2..=3usize);
            let factors = (0..n)
                .map(|_| {
                    if budget > 2 && rng.random_bool(0.2) {
                        Factor::recip_sum(random_inner_sum(rng, cfg, budget - 2))
                    } else {
                        random_number_factor(rng, cfg)
                    }
                })
                .collect();
            Term { sign, factors }
        }
        // single reciprocal-sum factor
        _ => {
            if sign == Sign::Minus && budget >= 3 {
                Term {
                    sign,
                    factors: vec![Factor::recip_sum(random_inner_sum(rng, cfg, budget - 2))],
                }
            } else {
                Term {
                    sign: Sign::Plus,
                    factors: vec![Factor::recip_sum(random_inner_sum(rng, cfg, budget - 1))],
                }
            }
        }
    }
}

fn random_inner_sum<R: Rng>(rng: &mut R, cfg: &SynthConfig, budget: usize) -> CanonicalSum {
    let n = rng.random_range(2..=3usize);
    let terms = (0..n).map(|_| random_term(rng, cfg, budget)).collect();
    normalized(CanonicalSum { terms })
}

/// Render the tree as learner-facing tokens: pre-order, each node emitting
/// its operator symbol plus bracket tokens, each leaf emitting a form-hint
/// token (when not plain) and the `N<k>` token of its value. Values are
/// deduplicated — repeated values share one placeholder, first occurrence
/// wins — so duplicate leaves exercise repeated pointer targets.
pub fn render_sample(tree: &MTree) -> (Vec<String>, Vec<BigRational>) {
    let mut tokens = Vec::new();
    let mut quantities: Vec<BigRational> = Vec::new();
    render_walk(tree, &mut tokens, &mut quantities);
    (tokens, quantities)
}

fn render_walk(t: &MTree, tokens: &mut Vec<String>, quantities: &mut Vec<BigRational>) {
    match t {
        MTree::Leaf { quantity, form } => {
            use crate::mtree::LeafForm;
            match form {
                LeafForm::Plain => {}
                LeafForm::Reciprocal => tokens.push("inv".to_string()),
                LeafForm::Negated => tokens.push("neg".to_string()),
                LeafForm::NegatedReciprocal => tokens.push("neginv".to_string()),
            }
            let k = match quantities.iter().position(|v| *v == quantity.value) {
                Some(k) => k,
                None => {
                    quantities.push(quantity.value.clone());
                    quantities.len() - 1
                }
            };
            tokens.push(format!("N{k}"));
        }
        MTree::Node { op, children } => {
            tokens.push(op.symbol().to_string());
            tokens.push("(".to_string());
            for c in children {
                render_walk(c, tokens, quantities);
            }
            tokens.push(")".to_string());
        }
    }
}
