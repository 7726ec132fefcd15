//! Canonical sum-of-terms normal form.
//!
//! [`canonicalize`] rewrites an [`Expr`] into a [`CanonicalSum`]: a flat sum
//! of signed products of atomic factors. Subtraction becomes addition of
//! negated terms, division becomes multiplication by inverted factors (or by
//! a reciprocal-of-sum for compound divisors), integer powers unroll into
//! repeated factors, and products distribute fully over sums. Like terms are
//! never combined and numeric constants are never folded; the only rewrite
//! that drops a leaf is eliding a literal factor `1` from a product, which
//! keeps `1/x` and `x` canonically identical to their bare-factor forms.
//!
//! Terms and factors are kept sorted under a total order, so two expressions
//! related by commutativity, associativity, distributivity, or the sign and
//! reciprocal identities end up bit-identical here.

use num::{BigRational, One, Zero};

use crate::error::CanonError;
use crate::expr::{rational_literal, BinOp, Expr, Origin, Quantity};

/// Hard cap on the number of terms produced by multilinear expansion.
pub const EXPANSION_LIMIT: usize = 4096;

/// Sign of a term; the single place a term's sign lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    fn combine(self, other: Sign) -> Sign {
        if self == other {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

/// Base of an atomic factor: a number, or the reciprocal of a canonical sum.
///
/// Derived ordering puts numbers before reciprocal sums; numbers order by
/// (value, origin) and reciprocal sums lexicographically by their terms.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum FactorBase {
    Number(Quantity),
    /// Contributes `1 / (sum of terms)`. The inner sum always has at least
    /// two terms: single-term divisors invert factor-by-factor instead.
    RecipSum(CanonicalSum),
}

/// One multiplicand of a term.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Factor {
    pub base: FactorBase,
    /// For a [`FactorBase::Number`] base, `true` means the factor
    /// contributes `1/n`. Always `false` for reciprocal sums.
    pub inverted: bool,
}

impl Factor {
    pub fn number(q: Quantity) -> Self {
        Factor { base: FactorBase::Number(q), inverted: false }
    }

    pub fn inverted_number(q: Quantity) -> Self {
        Factor { base: FactorBase::Number(q), inverted: true }
    }

    pub fn recip_sum(sum: CanonicalSum) -> Self {
        Factor { base: FactorBase::RecipSum(sum), inverted: false }
    }

    /// Exact value of this factor.
    pub fn eval(&self) -> Result<BigRational, CanonError> {
        match &self.base {
            FactorBase::Number(q) => {
                if self.inverted {
                    if q.value.is_zero() {
                        return Err(CanonError::ZeroDenominator);
                    }
                    Ok(q.value.recip())
                } else {
                    Ok(q.value.clone())
                }
            }
            FactorBase::RecipSum(sum) => {
                let s = sum.eval()?;
                if s.is_zero() {
                    return Err(CanonError::ZeroDenominatorSum);
                }
                Ok(s.recip())
            }
        }
    }

    fn is_unit_literal(&self) -> bool {
        match &self.base {
            FactorBase::Number(q) => !matches!(q.origin, Origin::Problem(_)) && q.value.is_one(),
            FactorBase::RecipSum(_) => false,
        }
    }

    fn contains_problem_quantity(&self) -> bool {
        match &self.base {
            FactorBase::Number(q) => matches!(q.origin, Origin::Problem(_)),
            FactorBase::RecipSum(sum) => sum.contains_problem_quantity(),
        }
    }
}

/// A signed product of factors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    pub sign: Sign,
    pub factors: Vec<Factor>,
}

impl Term {
    pub fn eval(&self) -> Result<BigRational, CanonError> {
        let mut acc = BigRational::one();
        for f in &self.factors {
            acc *= f.eval()?;
        }
        if self.sign == Sign::Minus {
            acc = -acc;
        }
        Ok(acc)
    }

    fn contains_problem_quantity(&self) -> bool {
        self.factors.iter().any(Factor::contains_problem_quantity)
    }

    /// Drop literal-1 factors, keeping one if the term would empty out.
    fn normalize(&mut self) {
        if self.factors.len() > 1 {
            self.factors.retain(|f| !f.is_unit_literal());
            if self.factors.is_empty() {
                self.factors.push(Factor::number(Quantity::literal(BigRational::one())));
            }
        }
        self.factors.sort();
    }
}

// Term order: factor list first, then sign (positive before negative).
impl Ord for Term {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.factors
            .cmp(&other.factors)
            .then_with(|| self.sign.cmp(&other.sign))
    }
}

impl PartialOrd for Term {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Sign-expanded sum of terms; the canonical normal form.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CanonicalSum {
    pub terms: Vec<Term>,
}

impl CanonicalSum {
    /// Exact value, folding the canonical form with rational arithmetic.
    pub fn eval(&self) -> Result<BigRational, CanonError> {
        let mut acc = BigRational::zero();
        for t in &self.terms {
            acc += t.eval()?;
        }
        Ok(acc)
    }

    pub fn contains_problem_quantity(&self) -> bool {
        self.terms.iter().any(Term::contains_problem_quantity)
    }

    pub(crate) fn normalize(&mut self) {
        for t in &mut self.terms {
            t.normalize();
        }
        self.terms.sort();
    }

    /// Stable text rendering: terms joined with signs, factors joined with
    /// `*` or `/` in canonical order, reciprocal sums as `1/(...)`. The
    /// output re-parses and re-canonicalizes to the same value.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, t) in self.terms.iter().enumerate() {
            match (i, t.sign) {
                (0, Sign::Plus) => {}
                (0, Sign::Minus) => out.push('-'),
                (_, Sign::Plus) => out.push_str(" + "),
                (_, Sign::Minus) => out.push_str(" - "),
            }
            out.push_str(&render_term_factors(t));
        }
        out
    }
}

fn render_term_factors(t: &Term) -> String {
    let mut out = String::new();
    for (i, f) in t.factors.iter().enumerate() {
        let atom = match &f.base {
            FactorBase::Number(q) => match q.origin {
                Origin::Problem(k) => format!("N{k}"),
                _ => rational_literal(&q.value),
            },
            FactorBase::RecipSum(sum) => format!("({})", sum.render()),
        };
        let inverted = f.inverted || matches!(f.base, FactorBase::RecipSum(_));
        match (i, inverted) {
            (0, false) => out.push_str(&atom),
            (0, true) => {
                out.push_str("1/");
                out.push_str(&atom);
            }
            (_, false) => {
                out.push('*');
                out.push_str(&atom);
            }
            (_, true) => {
                out.push('/');
                out.push_str(&atom);
            }
        }
    }
    out
}

/// Rewrite an expression into its canonical sum form.
pub fn canonicalize(e: &Expr) -> Result<CanonicalSum, CanonError> {
    let mut sum = expand(e)?;
    sum.normalize();
    Ok(sum)
}

fn expand(e: &Expr) -> Result<CanonicalSum, CanonError> {
    match e {
        Expr::Leaf(q) => Ok(CanonicalSum {
            terms: vec![Term { sign: Sign::Plus, factors: vec![Factor::number(q.clone())] }],
        }),
        Expr::Neg(x) => Ok(negate(expand(x)?)),
        Expr::Bin(op, l, r) => match op {
            BinOp::Add => {
                let mut sum = expand(l)?;
                sum.terms.extend(expand(r)?.terms);
                check_limit(sum.terms.len())?;
                Ok(sum)
            }
            BinOp::Sub => {
                let mut sum = expand(l)?;
                sum.terms.extend(negate(expand(r)?).terms);
                check_limit(sum.terms.len())?;
                Ok(sum)
            }
            BinOp::Mul => multiply(&expand(l)?, &expand(r)?),
            BinOp::Div => multiply(&expand(l)?, &reciprocal(expand(r)?)?),
            BinOp::Pow => {
                let exponent_value = crate::expr::eval_exact(r).map_err(CanonError::Expr)?;
                let exponent = crate::expr::integer_exponent(&exponent_value)?;
                let base = expand(l)?;
                power(base, exponent)
            }
        },
    }
}

fn check_limit(n: usize) -> Result<(), CanonError> {
    if n > EXPANSION_LIMIT {
        Err(CanonError::ExpansionTooLarge { limit: EXPANSION_LIMIT })
    } else {
        Ok(())
    }
}

fn negate(mut sum: CanonicalSum) -> CanonicalSum {
    for t in &mut sum.terms {
        t.sign = t.sign.flip();
    }
    sum
}

/// Multilinear expansion of a product of two sums.
fn multiply(a: &CanonicalSum, b: &CanonicalSum) -> Result<CanonicalSum, CanonError> {
    check_limit(a.terms.len().saturating_mul(b.terms.len()))?;
    let mut terms = Vec::with_capacity(a.terms.len() * b.terms.len());
    for ta in &a.terms {
        for tb in &b.terms {
            let mut factors = Vec::with_capacity(ta.factors.len() + tb.factors.len());
            factors.extend(ta.factors.iter().cloned());
            factors.extend(tb.factors.iter().cloned());
            terms.push(Term { sign: ta.sign.combine(tb.sign), factors });
        }
    }
    Ok(CanonicalSum { terms })
}

/// Reciprocal of a canonical sum.
///
/// A single-term divisor inverts factor by factor: numbers flip their
/// `inverted` flag and reciprocal sums flip back into plain sums, which are
/// then distributed. A multi-term divisor becomes one [`FactorBase::RecipSum`]
/// factor; when it is placeholder-free and sums to zero, that is an error
/// here rather than later at evaluation.
fn reciprocal(sum: CanonicalSum) -> Result<CanonicalSum, CanonError> {
    if sum.terms.len() == 1 {
        let term = &sum.terms[0];
        let mut acc = CanonicalSum {
            terms: vec![Term { sign: term.sign, factors: Vec::new() }],
        };
        for f in &term.factors {
            match &f.base {
                FactorBase::Number(q) => {
                    if !f.inverted && q.value.is_zero() {
                        return Err(CanonError::ZeroDenominator);
                    }
                    let inverted = Factor { base: f.base.clone(), inverted: !f.inverted };
                    for t in &mut acc.terms {
                        t.factors.push(inverted.clone());
                    }
                }
                FactorBase::RecipSum(inner) => {
                    // 1/(1/S) = S: distribute the plain sum.
                    acc = multiply(&acc, inner)?;
                }
            }
        }
        Ok(acc)
    } else {
        if !sum.contains_problem_quantity() {
            match sum.eval() {
                Ok(v) if v.is_zero() => return Err(CanonError::ZeroDenominatorSum),
                _ => {}
            }
        }
        let mut inner = sum;
        inner.normalize();
        Ok(CanonicalSum {
            terms: vec![Term { sign: Sign::Plus, factors: vec![Factor::recip_sum(inner)] }],
        })
    }
}

/// Integer power as an `|exponent|`-fold product, reciprocated when negative.
fn power(base: CanonicalSum, exponent: i32) -> Result<CanonicalSum, CanonError> {
    if exponent == 0 {
        return Ok(CanonicalSum {
            terms: vec![Term {
                sign: Sign::Plus,
                factors: vec![Factor::number(Quantity::literal(BigRational::one()))],
            }],
        });
    }
    let unit = if exponent < 0 { reciprocal(base)? } else { base };
    let mut acc = unit.clone();
    for _ in 1..exponent.unsigned_abs() {
        acc = multiply(&acc, &unit)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{eval_exact, parse};
    use num::BigInt;

    fn canon(text: &str) -> CanonicalSum {
        canonicalize(&parse(text, None).unwrap()).unwrap()
    }

    fn rat(n: i64) -> BigRational {
        BigRational::from_integer(BigInt::from(n))
    }

    fn plain(n: i64) -> Factor {
        Factor::number(Quantity::from_int(n))
    }

    #[test]
    fn distributes_and_splits_terms() {
        let c = canon("13*(10+3)-40");
        let expected = CanonicalSum {
            terms: vec![
                Term { sign: Sign::Plus, factors: vec![plain(3), plain(13)] },
                Term { sign: Sign::Plus, factors: vec![plain(10), plain(13)] },
                Term { sign: Sign::Minus, factors: vec![plain(40)] },
            ],
        };
        assert_eq!(c, expected);
    }

    #[test]
    fn single_number_is_single_term() {
        let c = canon("7");
        assert_eq!(
            c,
            CanonicalSum { terms: vec![Term { sign: Sign::Plus, factors: vec![plain(7)] }] }
        );
    }

    #[test]
    fn compound_divisor_becomes_recip_sum() {
        let c = canon("2/(3+4)");
        let inner = CanonicalSum {
            terms: vec![
                Term { sign: Sign::Plus, factors: vec![plain(3)] },
                Term { sign: Sign::Plus, factors: vec![plain(4)] },
            ],
        };
        let expected = CanonicalSum {
            terms: vec![Term {
                sign: Sign::Plus,
                factors: vec![plain(2), Factor::recip_sum(inner)],
            }],
        };
        assert_eq!(c, expected);
        assert_eq!(c.eval().unwrap(), BigRational::new(BigInt::from(2), BigInt::from(7)));
    }

    #[test]
    fn atomic_divisor_inverts_in_place() {
        let c = canon("5/6");
        assert_eq!(
            c.terms[0].factors,
            vec![plain(5), Factor::inverted_number(Quantity::from_int(6))]
        );
    }

    #[test]
    fn unit_numerator_is_elided() {
        assert_eq!(canon("1/3"), {
            CanonicalSum {
                terms: vec![Term {
                    sign: Sign::Plus,
                    factors: vec![Factor::inverted_number(Quantity::from_int(3))],
                }],
            }
        });
        // But a lone 1 survives.
        assert_eq!(
            canon("1"),
            CanonicalSum { terms: vec![Term { sign: Sign::Plus, factors: vec![plain(1)] }] }
        );
        assert_eq!(canon("1*1").terms[0].factors.len(), 1);
    }

    #[test]
    fn canonical_order_examples() {
        // {13,3} sorts before {13,10} because factors order by value.
        let a = Term { sign: Sign::Plus, factors: vec![plain(3), plain(13)] };
        let b = Term { sign: Sign::Plus, factors: vec![plain(10), plain(13)] };
        assert!(a < b);
        // Positive sign sorts before negative at equal factors.
        let p = Term { sign: Sign::Plus, factors: vec![plain(40)] };
        let m = Term { sign: Sign::Minus, factors: vec![plain(40)] };
        assert!(p < m);
        // Reflexivity.
        assert_eq!(a.cmp(&a), std::cmp::Ordering::Equal);
    }

    #[test]
    fn like_terms_are_not_combined() {
        let c = canon("2+2");
        assert_eq!(c.terms.len(), 2);
        let c = canon("(2+3)^2");
        assert_eq!(c.terms.len(), 4, "no merging of the two cross terms");
    }

    #[test]
    fn powers_unroll_into_products() {
        let c = canon("2^3");
        assert_eq!(c.terms[0].factors, vec![plain(2), plain(2), plain(2)]);
        let c = canon("2^-2");
        assert_eq!(
            c.terms[0].factors,
            vec![
                Factor::inverted_number(Quantity::from_int(2)),
                Factor::inverted_number(Quantity::from_int(2)),
            ]
        );
        let c = canon("(2+3)^-2");
        assert_eq!(c.terms.len(), 1);
        assert_eq!(c.terms[0].factors.len(), 2, "two reciprocal-sum copies");
        assert_eq!(c.eval().unwrap(), BigRational::new(BigInt::from(1), BigInt::from(25)));
    }

    #[test]
    fn value_preserved_on_samples() {
        for s in [
            "13*(10+3)-40",
            "2/(3+4)",
            "1/(2+3)",
            "-(2*3)",
            "(1+2)*(3+4)/(5+6)",
            "5-3/(1+2)",
            "2^-3*8",
            "10%*50",
            "3/(1/(2+5))",
        ] {
            let e = parse(s, None).unwrap();
            let c = canonicalize(&e).unwrap();
            assert_eq!(c.eval().unwrap(), eval_exact(&e).unwrap(), "value drift for {s}");
        }
    }

    #[test]
    fn reciprocal_of_reciprocal_distributes() {
        // 3/(1/(2+5)) = 3*(2+5) = 21, expanded to two terms.
        let c = canon("3/(1/(2+5))");
        assert_eq!(c.terms.len(), 2);
        assert_eq!(c.eval().unwrap(), rat(21));
    }

    #[test]
    fn zero_denominators_are_rejected() {
        assert_eq!(
            canonicalize(&parse("1/0", None).unwrap()),
            Err(CanonError::ZeroDenominator)
        );
        assert_eq!(
            canonicalize(&parse("1/(2-2)", None).unwrap()),
            Err(CanonError::ZeroDenominatorSum)
        );
        // With a placeholder the compound divisor is accepted.
        let numbers = vec![rat(2)];
        let e = parse("1/(N0-2)", Some(&numbers)).unwrap();
        assert!(canonicalize(&e).is_ok());
    }

    #[test]
    fn expansion_limit_guards_blowup() {
        // (1+1+...+1)^k grows multiplicatively; 9 terms ^ 4 = 6561 > 4096.
        let nine = "(1+1+1+1+1+1+1+1+1)";
        let e = parse(&format!("{nine}^4"), None).unwrap();
        assert_eq!(
            canonicalize(&e),
            Err(CanonError::ExpansionTooLarge { limit: EXPANSION_LIMIT })
        );
    }

    #[test]
    fn render_reparses_to_same_sum() {
        for s in [
            "13*(10+3)-40",
            "2/(3+4)",
            "-(2*3)",
            "5/6",
            "1/3",
            "-1/(3+4)",
            "(1+2)*(3+4)/(5+6)",
            "0.5+30%",
        ] {
            let c = canon(s);
            let rendered = c.render();
            let back = canonicalize(&parse(&rendered, None).unwrap()).unwrap();
            assert_eq!(c, back, "render round-trip failed for {s} via {rendered}");
        }
    }

    #[test]
    fn render_examples() {
        assert_eq!(canon("13*(10+3)-40").render(), "3*13 + 10*13 - 40");
        assert_eq!(canon("2/(3+4)").render(), "2/(3 + 4)");
        assert_eq!(canon("1/3").render(), "1/3");
        assert_eq!(canon("-(2*3)").render(), "-2*3");
    }
}
