//! The unified multi-branch expression tree (MTree) and its form-tag-free
//! variant (RefMTree).
//!
//! An MTree node is one of the four operators `+`, `*`, `*-` (negated
//! product), `+/` (reciprocal of sum); a leaf is a quantity tagged with one
//! of the four forms `n`, `1/n`, `-n`, `-1/n`. Children are unordered:
//! [`build_mtree`] stores them sorted by the canonical key realized by this
//! type's `Ord`, so structural equality coincides with
//! permutation-equality. The ordering deliberately ignores a quantity's
//! [`Origin`], making trees built from literal text and from placeholder
//! text with the same values identical.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use num::{BigRational, Signed, Zero};

use crate::canon::{CanonicalSum, Factor, FactorBase, Sign, Term};
use crate::error::MTreeError;
use crate::expr::{rational_literal, Quantity};

/// MTree operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MOp {
    /// Sum of children.
    Add,
    /// Product of children.
    Mul,
    /// Negated product of children; with one child, plain negation.
    MulNeg,
    /// Reciprocal of the sum of children.
    RecipAdd,
}

impl MOp {
    pub fn symbol(self) -> &'static str {
        match self {
            MOp::Add => "+",
            MOp::Mul => "*",
            MOp::MulNeg => "*-",
            MOp::RecipAdd => "+/",
        }
    }

    pub const ALL: [MOp; 4] = [MOp::Add, MOp::Mul, MOp::MulNeg, MOp::RecipAdd];
}

impl fmt::Display for MOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Leaf form tag: how the stored (non-negative) quantity enters the tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LeafForm {
    /// `n`
    Plain,
    /// `1/n`
    Reciprocal,
    /// `-n`
    Negated,
    /// `-1/n`
    NegatedReciprocal,
}

impl LeafForm {
    pub fn tag(self) -> &'static str {
        match self {
            LeafForm::Plain => "n",
            LeafForm::Reciprocal => "1/n",
            LeafForm::Negated => "-n",
            LeafForm::NegatedReciprocal => "-1/n",
        }
    }
}

/// Unified multi-branch expression tree.
#[derive(Debug, Clone)]
pub enum MTree {
    Leaf { quantity: Quantity, form: LeafForm },
    Node { op: MOp, children: Vec<MTree> },
}

impl MTree {
    pub fn leaf(quantity: Quantity, form: LeafForm) -> Self {
        MTree::Leaf { quantity, form }
    }

    /// Build an operator node, sorting children into canonical order.
    pub fn node(op: MOp, mut children: Vec<MTree>) -> Self {
        children.sort();
        MTree::Node { op, children }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            MTree::Leaf { .. } => 1,
            MTree::Node { children, .. } => children.iter().map(MTree::leaf_count).sum(),
        }
    }

    /// Number of levels; a bare leaf has depth 1.
    pub fn depth(&self) -> usize {
        match self {
            MTree::Leaf { .. } => 1,
            MTree::Node { children, .. } => {
                1 + children.iter().map(MTree::depth).max().unwrap_or(0)
            }
        }
    }

    pub fn eval(&self) -> Result<BigRational, MTreeError> {
        eval_mtree(self)
    }

    pub fn paths(&self) -> PathMultiset {
        mtree_paths(self)
    }

    pub fn branch_number(&self) -> usize {
        branch_number(self)
    }

    /// Parenthesized prefix rendering, e.g. `+(*(3,13),*(10,13),-40)`.
    /// Origin-blind: placeholder leaves render as their resolved values.
    pub fn render(&self) -> String {
        match self {
            MTree::Leaf { quantity, form } => leaf_token(&quantity.value, *form),
            MTree::Node { op, children } => {
                let inner: Vec<String> = children.iter().map(MTree::render).collect();
                format!("{}({})", op.symbol(), inner.join(","))
            }
        }
    }

    /// Nested-array rendering for golden files: a leaf is its token string,
    /// a node is `[symbol, child, ...]`.
    pub fn to_nested(&self) -> serde_json::Value {
        match self {
            MTree::Leaf { quantity, form } => {
                serde_json::Value::String(leaf_token(&quantity.value, *form))
            }
            MTree::Node { op, children } => {
                let mut arr = Vec::with_capacity(children.len() + 1);
                arr.push(serde_json::Value::String(op.symbol().to_string()));
                arr.extend(children.iter().map(MTree::to_nested));
                serde_json::Value::Array(arr)
            }
        }
    }
}

fn leaf_token(value: &BigRational, form: LeafForm) -> String {
    let lit = rational_literal(value);
    match form {
        LeafForm::Plain => lit,
        LeafForm::Reciprocal => format!("1/{lit}"),
        LeafForm::Negated => format!("-{lit}"),
        LeafForm::NegatedReciprocal => format!("-1/{lit}"),
    }
}

impl fmt::Display for MTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

// Canonical key: operator nodes sort before leaves; nodes by (op, children),
// leaves by (value, form). Origin is deliberately excluded so equality and
// ordering are value-structural.
impl Ord for MTree {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (
                MTree::Node { op: a, children: ca },
                MTree::Node { op: b, children: cb },
            ) => a.cmp(b).then_with(|| ca.cmp(cb)),
            (MTree::Node { .. }, MTree::Leaf { .. }) => Ordering::Less,
            (MTree::Leaf { .. }, MTree::Node { .. }) => Ordering::Greater,
            (
                MTree::Leaf { quantity: qa, form: fa },
                MTree::Leaf { quantity: qb, form: fb },
            ) => qa.value.cmp(&qb.value).then_with(|| fa.cmp(fb)),
        }
    }
}

impl PartialOrd for MTree {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for MTree {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for MTree {}

/// Form-tag-free tree: leaves are all plain; negation and reciprocal appear
/// only as `*-` / `+/` nodes, which may here have a single child.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct RefMTree(pub MTree);

impl RefMTree {
    pub fn eval(&self) -> Result<BigRational, MTreeError> {
        eval_mtree(&self.0)
    }

    /// Paths with no form component.
    pub fn paths(&self) -> PathMultiset {
        let mut out = PathMultiset::default();
        collect_paths(&self.0, &mut Vec::new(), false, &mut out);
        out
    }

    pub fn render(&self) -> String {
        self.0.render()
    }
}

impl fmt::Display for RefMTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.render())
    }
}

/// One root-to-leaf path: the operator chain above the leaf, the leaf's
/// exact value, and (for MTree paths) its form tag.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct MPath {
    pub ops: Vec<MOp>,
    pub value: BigRational,
    pub form: Option<LeafForm>,
}

impl fmt::Display for MPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for op in &self.ops {
            write!(f, "{op},")?;
        }
        write!(f, ";{}", rational_literal(&self.value))?;
        if let Some(form) = self.form {
            write!(f, ",{}", form.tag())?;
        }
        write!(f, ")")
    }
}

/// Multiset of root-leaf paths; duplicates keep their multiplicity.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PathMultiset {
    counts: BTreeMap<MPath, usize>,
    total: usize,
}

impl PathMultiset {
    pub fn insert(&mut self, path: MPath) {
        *self.counts.entry(path).or_insert(0) += 1;
        self.total += 1;
    }

    /// Number of paths counted with multiplicity; equals the tree's leaf count.
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn count(&self, path: &MPath) -> usize {
        self.counts.get(path).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MPath, usize)> {
        self.counts.iter().map(|(p, &c)| (p, c))
    }

    /// Distinct paths in both multisets, in key order.
    pub fn merged_keys<'a>(&'a self, other: &'a PathMultiset) -> Vec<&'a MPath> {
        let mut keys: Vec<&MPath> = self.counts.keys().chain(other.counts.keys()).collect();
        keys.sort();
        keys.dedup();
        keys
    }
}

/// Fold a canonical sum into its unified MTree.
///
/// The root is `+` over the terms' nodes, except that a single-term sum
/// collapses to that term's node. A multi-factor term becomes `*` (or `*-`
/// when negative) over its factors; a single-quantity term becomes a leaf
/// whose form carries the term's sign and the factor's inversion; a
/// reciprocal-sum factor becomes a `+/` node over the inner terms; and a
/// negative single-reciprocal-sum term uses the arity-1 escape `*-(+/ ...)`.
pub fn build_mtree(c: &CanonicalSum) -> MTree {
    let nodes: Vec<MTree> = c.terms.iter().map(term_node).collect();
    if nodes.len() == 1 {
        nodes.into_iter().next().unwrap()
    } else {
        MTree::node(MOp::Add, nodes)
    }
}

fn term_node(t: &Term) -> MTree {
    if t.factors.len() == 1 {
        let f = &t.factors[0];
        match (&f.base, t.sign) {
            (FactorBase::Number(q), Sign::Plus) => MTree::leaf(
                q.clone(),
                if f.inverted { LeafForm::Reciprocal } else { LeafForm::Plain },
            ),
            (FactorBase::Number(q), Sign::Minus) => MTree::leaf(
                q.clone(),
                if f.inverted { LeafForm::NegatedReciprocal } else { LeafForm::Negated },
            ),
            (FactorBase::RecipSum(s), Sign::Plus) => recip_node(s),
            (FactorBase::RecipSum(s), Sign::Minus) => {
                MTree::node(MOp::MulNeg, vec![recip_node(s)])
            }
        }
    } else {
        let op = match t.sign {
            Sign::Plus => MOp::Mul,
            Sign::Minus => MOp::MulNeg,
        };
        MTree::node(op, t.factors.iter().map(factor_node).collect())
    }
}

fn factor_node(f: &Factor) -> MTree {
    match &f.base {
        FactorBase::Number(q) => MTree::leaf(
            q.clone(),
            if f.inverted { LeafForm::Reciprocal } else { LeafForm::Plain },
        ),
        FactorBase::RecipSum(s) => recip_node(s),
    }
}

fn recip_node(s: &CanonicalSum) -> MTree {
    MTree::node(MOp::RecipAdd, s.terms.iter().map(term_node).collect())
}

/// Convenience: canonical sum straight to the form-tag-free tree.
pub fn build_refmtree(c: &CanonicalSum) -> RefMTree {
    to_refmtree(&build_mtree(c))
}

/// Strip form tags by inserting unary `*-` / `+/` nodes above tagged leaves.
pub fn to_refmtree(t: &MTree) -> RefMTree {
    RefMTree(detag(t))
}

fn detag(t: &MTree) -> MTree {
    match t {
        MTree::Node { op, children } => {
            MTree::node(*op, children.iter().map(detag).collect())
        }
        MTree::Leaf { quantity, form } => {
            let plain = MTree::leaf(quantity.clone(), LeafForm::Plain);
            match form {
                LeafForm::Plain => plain,
                LeafForm::Reciprocal => MTree::node(MOp::RecipAdd, vec![plain]),
                LeafForm::Negated => MTree::node(MOp::MulNeg, vec![plain]),
                LeafForm::NegatedReciprocal => MTree::node(
                    MOp::MulNeg,
                    vec![MTree::node(MOp::RecipAdd, vec![plain])],
                ),
            }
        }
    }
}

/// Exact evaluation. Fails only on a reciprocal of zero, which the
/// canonicalizer cannot rule out when placeholders hide a zero sum.
pub fn eval_mtree(t: &MTree) -> Result<BigRational, MTreeError> {
    match t {
        MTree::Leaf { quantity, form } => {
            let v = &quantity.value;
            match form {
                LeafForm::Plain => Ok(v.clone()),
                LeafForm::Negated => Ok(-v.clone()),
                LeafForm::Reciprocal | LeafForm::NegatedReciprocal => {
                    if v.is_zero() {
                        return Err(MTreeError::ReciprocalOfZero);
                    }
                    let r = v.recip();
                    if *form == LeafForm::NegatedReciprocal {
                        Ok(-r)
                    } else {
                        Ok(r)
                    }
                }
            }
        }
        MTree::Node { op, children } => {
            let mut vals = Vec::with_capacity(children.len());
            for c in children {
                vals.push(eval_mtree(c)?);
            }
            match op {
                MOp::Add => Ok(vals.into_iter().sum()),
                MOp::Mul => Ok(vals.into_iter().product()),
                MOp::MulNeg => Ok(-vals.into_iter().product::<BigRational>()),
                MOp::RecipAdd => {
                    let s: BigRational = vals.into_iter().sum();
                    if s.is_zero() {
                        Err(MTreeError::ReciprocalOfZero)
                    } else {
                        Ok(s.recip())
                    }
                }
            }
        }
    }
}

/// Root-leaf path multiset with form tags (use [`RefMTree::paths`] for the
/// untagged variant).
pub fn mtree_paths(t: &MTree) -> PathMultiset {
    let mut out = PathMultiset::default();
    collect_paths(t, &mut Vec::new(), true, &mut out);
    out
}

fn collect_paths(t: &MTree, prefix: &mut Vec<MOp>, tagged: bool, out: &mut PathMultiset) {
    match t {
        MTree::Leaf { quantity, form } => out.insert(MPath {
            ops: prefix.clone(),
            value: quantity.value.clone(),
            form: if tagged { Some(*form) } else { None },
        }),
        MTree::Node { op, children } => {
            prefix.push(*op);
            for c in children {
                collect_paths(c, prefix, tagged, out);
            }
            prefix.pop();
        }
    }
}

/// Structural equality; children are key-sorted, so this is
/// permutation-invariant equality.
pub fn mtree_equal(a: &MTree, b: &MTree) -> bool {
    a == b
}

/// Maximum child count over operator nodes; 1 for a bare leaf.
pub fn branch_number(t: &MTree) -> usize {
    match t {
        MTree::Leaf { .. } => 1,
        MTree::Node { children, .. } => children
            .iter()
            .map(branch_number)
            .fold(children.len(), usize::max),
    }
}

/// True when every leaf quantity resolves to a non-negative value and forms
/// are the only sign/reciprocal carriers — the RefMTree leaf invariant.
pub fn leaves_untagged(t: &MTree) -> bool {
    match t {
        MTree::Leaf { quantity, form } => {
            *form == LeafForm::Plain && !quantity.value.is_negative()
        }
        MTree::Node { children, .. } => children.iter().all(leaves_untagged),
    }
}
