//! Infix arithmetic expressions: tokenizer, parser, exact evaluator, printer.
//!
//! The grammar (EBNF, also documented in the guide):
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := unary (("*" | "/") unary)*
//! unary   := "-" unary | power
//! power   := atom ("^" atom)*            (left-associative)
//! atom    := number | placeholder | "(" expr ")"
//! number  := digits ["." digits] ["%"]
//! placeholder := "N" digits
//! ```
//!
//! Precedence: `^` > unary `-` > `*` `/` > `+` `-`, all binary operators
//! left-associative. `n%` is the rational `n/100`. `N<k>` resolves through
//! the caller-supplied number map.

use std::fmt;

use num::{BigInt, BigRational, One, Signed, ToPrimitive, Zero};

use crate::error::ExprError;

/// Largest `|exponent|` accepted by [`eval_exact`].
pub const MAX_EXPONENT: u32 = 12;

/// Where a quantity came from.
///
/// The ordering (problem numbers first, then constants, then literals) is
/// part of the canonical total order used to sort factors and terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Origin {
    /// Index into the problem's extracted number list.
    Problem(usize),
    /// A whitelisted constant (from the candidate configuration).
    Constant,
    /// A literal written directly in the expression.
    Literal,
}

/// An exact rational quantity together with its origin.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Quantity {
    pub value: BigRational,
    pub origin: Origin,
}

impl Quantity {
    pub fn literal(value: BigRational) -> Self {
        Quantity { value, origin: Origin::Literal }
    }

    pub fn problem(index: usize, value: BigRational) -> Self {
        Quantity { value, origin: Origin::Problem(index) }
    }

    pub fn constant(value: BigRational) -> Self {
        Quantity { value, origin: Origin::Constant }
    }

    pub fn from_int(n: i64) -> Self {
        Quantity::literal(BigRational::from_integer(BigInt::from(n)))
    }
}

/// Binary operators of the surface grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

/// Binary abstract syntax tree of a parsed infix expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Leaf(Quantity),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn leaf(q: Quantity) -> Self {
        Expr::Leaf(q)
    }

    pub fn int(n: i64) -> Self {
        Expr::Leaf(Quantity::from_int(n))
    }

    pub fn neg(e: Expr) -> Self {
        Expr::Neg(Box::new(e))
    }

    pub fn bin(op: BinOp, l: Expr, r: Expr) -> Self {
        Expr::Bin(op, Box::new(l), Box::new(r))
    }

    /// Number of leaves in the tree.
    pub fn leaf_count(&self) -> usize {
        match self {
            Expr::Leaf(_) => 1,
            Expr::Neg(x) => x.leaf_count(),
            Expr::Bin(_, l, r) => l.leaf_count() + r.leaf_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(BigRational),
    Placeholder(usize),
    LParen,
    RParen,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let pos = i;
        match bytes[i] {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'(' => {
                toks.push((Tok::LParen, pos));
                i += 1;
            }
            b')' => {
                toks.push((Tok::RParen, pos));
                i += 1;
            }
            b'+' => {
                toks.push((Tok::Plus, pos));
                i += 1;
            }
            b'-' => {
                toks.push((Tok::Minus, pos));
                i += 1;
            }
            b'*' => {
                toks.push((Tok::Star, pos));
                i += 1;
            }
            b'/' => {
                toks.push((Tok::Slash, pos));
                i += 1;
            }
            b'^' => {
                toks.push((Tok::Caret, pos));
                i += 1;
            }
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let mut denom = BigInt::one();
                let mut digits = text[start..i].to_string();
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    let frac_start = i;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                    if i == frac_start {
                        return Err(ExprError::Syntax {
                            pos: i,
                            msg: "expected digits after decimal point".into(),
                        });
                    }
                    digits.push_str(&text[frac_start..i]);
                    denom = BigInt::from(10u32).pow((i - frac_start) as u32);
                }
                let numer: BigInt = digits.parse().expect("digit run parses as integer");
                let mut value = BigRational::new(numer, denom);
                if i < bytes.len() && bytes[i] == b'%' {
                    i += 1;
                    value /= BigRational::from_integer(BigInt::from(100));
                }
                toks.push((Tok::Num(value), pos));
            }
            b'N' => {
                i += 1;
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i == start {
                    return Err(ExprError::Syntax {
                        pos,
                        msg: "expected digits after placeholder 'N'".into(),
                    });
                }
                let index: usize = text[start..i].parse().map_err(|_| ExprError::Syntax {
                    pos,
                    msg: "placeholder index out of range".into(),
                })?;
                toks.push((Tok::Placeholder(index), pos));
            }
            c => {
                return Err(ExprError::Syntax {
                    pos,
                    msg: format!("unexpected character '{}'", c as char),
                });
            }
        }
    }
    Ok(toks)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    cursor: usize,
    numbers: Option<&'a [BigRational]>,
    end: usize,
}

// Binding powers: (left, right); left-associative pairs use right = left + 1.
const BP_ADD: (u8, u8) = (20, 21);
const BP_MUL: (u8, u8) = (30, 31);
const BP_UNARY: u8 = 40;
const BP_POW: (u8, u8) = (50, 51);

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.cursor).map(|(t, _)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.cursor).map(|&(_, p)| p).unwrap_or(self.end)
    }

    fn advance(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.cursor).map(|(t, _)| t.clone());
        self.cursor += 1;
        t
    }

    fn expr(&mut self, min_bp: u8) -> Result<Expr, ExprError> {
        let mut lhs = self.prefix()?;
        loop {
            let (op, (l_bp, r_bp)) = match self.peek() {
                Some(Tok::Plus) => (BinOp::Add, BP_ADD),
                Some(Tok::Minus) => (BinOp::Sub, BP_ADD),
                Some(Tok::Star) => (BinOp::Mul, BP_MUL),
                Some(Tok::Slash) => (BinOp::Div, BP_MUL),
                Some(Tok::Caret) => (BinOp::Pow, BP_POW),
                _ => break,
            };
            if l_bp < min_bp {
                break;
            }
            self.advance();
            let rhs = self.expr(r_bp)?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<Expr, ExprError> {
        let pos = self.pos();
        match self.advance() {
            Some(Tok::Num(v)) => Ok(Expr::Leaf(Quantity::literal(v))),
            Some(Tok::Placeholder(index)) => {
                let numbers = self
                    .numbers
                    .ok_or(ExprError::UnknownPlaceholder { index })?;
                let value = numbers
                    .get(index)
                    .ok_or(ExprError::UnknownPlaceholder { index })?;
                Ok(Expr::Leaf(Quantity::problem(index, value.clone())))
            }
            Some(Tok::Minus) => Ok(Expr::neg(self.expr(BP_UNARY)?)),
            Some(Tok::LParen) => {
                let inner = self.expr(0)?;
                match self.advance() {
                    Some(Tok::RParen) => Ok(inner),
                    _ => Err(ExprError::Syntax {
                        pos: self.end,
                        msg: "unclosed parenthesis".into(),
                    }),
                }
            }
            Some(_) => Err(ExprError::Syntax {
                pos,
                msg: "expected a number, placeholder, '-', or '('".into(),
            }),
            None => Err(ExprError::Syntax {
                pos,
                msg: "unexpected end of input".into(),
            }),
        }
    }
}

/// Parse an infix expression. `numbers`, when given, resolves `N<k>`
/// placeholders; the resulting leaves carry [`Origin::Problem`].
pub fn parse(text: &str, numbers: Option<&[BigRational]>) -> Result<Expr, ExprError> {
    let toks = tokenize(text)?;
    if toks.is_empty() {
        return Err(ExprError::Empty);
    }
    let mut parser = Parser { toks, cursor: 0, numbers, end: text.len() };
    let e = parser.expr(0)?;
    if parser.cursor != parser.toks.len() {
        return Err(ExprError::Syntax {
            pos: parser.pos(),
            msg: "trailing input after expression".into(),
        });
    }
    Ok(e)
}

/// Exact rational value of an expression.
///
/// Fails on division by zero and on `^` whose exponent subtree does not
/// evaluate to an integer with magnitude at most [`MAX_EXPONENT`].
pub fn eval_exact(e: &Expr) -> Result<BigRational, ExprError> {
    match e {
        Expr::Leaf(q) => Ok(q.value.clone()),
        Expr::Neg(x) => Ok(-eval_exact(x)?),
        Expr::Bin(op, l, r) => {
            let rv = eval_exact(r)?;
            match op {
                BinOp::Pow => {
                    let exponent = integer_exponent(&rv)?;
                    let base = eval_exact(l)?;
                    pow_exact(&base, exponent)
                }
                _ => {
                    let lv = eval_exact(l)?;
                    match op {
                        BinOp::Add => Ok(lv + rv),
                        BinOp::Sub => Ok(lv - rv),
                        BinOp::Mul => Ok(lv * rv),
                        BinOp::Div => {
                            if rv.is_zero() {
                                Err(ExprError::DivisionByZero)
                            } else {
                                Ok(lv / rv)
                            }
                        }
                        BinOp::Pow => unreachable!(),
                    }
                }
            }
        }
    }
}

/// Validate and extract an integer exponent from its exact value.
pub(crate) fn integer_exponent(v: &BigRational) -> Result<i32, ExprError> {
    if !v.is_integer() {
        return Err(ExprError::NonIntegerExponent { got: v.to_string() });
    }
    let n = v.to_integer();
    if n.abs() > BigInt::from(MAX_EXPONENT) {
        return Err(ExprError::ExponentOutOfRange { exponent: n, limit: MAX_EXPONENT });
    }
    Ok(n.to_i32().expect("bounded exponent fits i32"))
}

pub(crate) fn pow_exact(base: &BigRational, exponent: i32) -> Result<BigRational, ExprError> {
    if exponent < 0 && base.is_zero() {
        return Err(ExprError::DivisionByZero);
    }
    Ok(num::pow::Pow::pow(base.clone(), exponent))
}

/// Render a rational as a single numeric token.
///
/// Integers print bare; values with a 10-smooth denominator print as exact
/// decimals; anything else falls back to "p/q", which re-tokenizes as a
/// division rather than one literal.
pub fn rational_literal(v: &BigRational) -> String {
    if v.is_integer() {
        return v.numer().to_string();
    }
    let sign = if v.is_negative() { "-" } else { "" };
    let v = v.abs();
    let denom = v.denom();
    let (twos, rest) = factor_out(denom, 2u32);
    let (fives, rest) = factor_out(&rest, 5u32);
    if rest.is_one() {
        let scale = twos.max(fives);
        let scaled = v.numer() * BigInt::from(10u32).pow(scale) / denom;
        let digits = scaled.to_string();
        let scale = scale as usize;
        if digits.len() > scale {
            let (int_part, frac_part) = digits.split_at(digits.len() - scale);
            format!("{sign}{int_part}.{frac_part}")
        } else {
            format!("{sign}0.{digits:0>scale$}")
        }
    } else {
        format!("{sign}{}/{}", v.numer(), v.denom())
    }
}

fn factor_out(n: &BigInt, p: u32) -> (u32, BigInt) {
    let p = BigInt::from(p);
    let mut n = n.clone();
    let mut count = 0;
    while (&n % &p).is_zero() && !n.is_zero() {
        n /= &p;
        count += 1;
    }
    (count, n)
}

/// Fully parenthesized infix rendering. `Origin::Problem` leaves print as
/// `N<k>`, so re-parsing with the same number map reproduces the AST.
pub fn to_infix(e: &Expr) -> String {
    match e {
        Expr::Leaf(q) => match q.origin {
            Origin::Problem(k) => format!("N{k}"),
            _ => {
                if q.value.is_negative() {
                    // Negative leaves never come from `parse`; keep the
                    // output grammatical anyway.
                    format!("(0-{})", rational_literal(&q.value.abs()))
                } else {
                    rational_literal(&q.value)
                }
            }
        },
        Expr::Neg(x) => format!("(-{})", to_infix(x)),
        Expr::Bin(op, l, r) => format!("({}{}{})", to_infix(l), op.symbol(), to_infix(r)),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&to_infix(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(n: i64) -> BigRational {
        BigRational::from_integer(BigInt::from(n))
    }

    fn ratio(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn parses_sum_of_products_shape() {
        let e = parse("13*10+13*3-40", None).unwrap();
        let expected = Expr::bin(
            BinOp::Sub,
            Expr::bin(
                BinOp::Add,
                Expr::bin(BinOp::Mul, Expr::int(13), Expr::int(10)),
                Expr::bin(BinOp::Mul, Expr::int(13), Expr::int(3)),
            ),
            Expr::int(40),
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn parses_single_literal() {
        assert_eq!(parse("5", None).unwrap(), Expr::int(5));
    }

    #[test]
    fn resolves_placeholders() {
        let numbers = vec![rat(13), rat(10), rat(3)];
        let e = parse("N0*(N1+N2)", Some(&numbers)).unwrap();
        let expected = Expr::bin(
            BinOp::Mul,
            Expr::Leaf(Quantity::problem(0, rat(13))),
            Expr::bin(
                BinOp::Add,
                Expr::Leaf(Quantity::problem(1, rat(10))),
                Expr::Leaf(Quantity::problem(2, rat(3))),
            ),
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn evaluates_examples_exactly() {
        let e = parse("13*(10+3)-40", None).unwrap();
        assert_eq!(eval_exact(&e).unwrap(), rat(129));
        let e = parse("1/(2+3)", None).unwrap();
        assert_eq!(eval_exact(&e).unwrap(), ratio(1, 5));
        let e = parse("0*7", None).unwrap();
        assert_eq!(eval_exact(&e).unwrap(), rat(0));
    }

    #[test]
    fn percent_is_hundredth() {
        let e = parse("30%", None).unwrap();
        assert_eq!(eval_exact(&e).unwrap(), ratio(3, 10));
        let e = parse("12.5%", None).unwrap();
        assert_eq!(eval_exact(&e).unwrap(), ratio(1, 8));
    }

    #[test]
    fn unary_minus_binds_between_pow_and_mul() {
        let e = parse("-2^2", None).unwrap();
        assert_eq!(eval_exact(&e).unwrap(), rat(-4));
        let e = parse("-2*3", None).unwrap();
        assert_eq!(eval_exact(&e).unwrap(), rat(-6));
        let e = parse("2^-3", None).unwrap();
        assert_eq!(eval_exact(&e).unwrap(), ratio(1, 8));
    }

    #[test]
    fn pow_is_left_associative() {
        let e = parse("2^3^2", None).unwrap();
        assert_eq!(eval_exact(&e).unwrap(), rat(64));
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(parse("", None), Err(ExprError::Empty));
        assert_eq!(parse("   ", None), Err(ExprError::Empty));
        assert!(matches!(parse("13*(10+3", None), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("1+*2", None), Err(ExprError::Syntax { pos: 2, .. })));
        assert!(matches!(parse("2 3", None), Err(ExprError::Syntax { .. })));
        assert_eq!(
            parse("N0+1", None),
            Err(ExprError::UnknownPlaceholder { index: 0 })
        );
        let numbers = vec![rat(1)];
        assert_eq!(
            parse("N7", Some(&numbers)),
            Err(ExprError::UnknownPlaceholder { index: 7 })
        );
    }

    #[test]
    fn eval_errors() {
        let e = parse("1/(2-2)", None).unwrap();
        assert_eq!(eval_exact(&e), Err(ExprError::DivisionByZero));
        let e = parse("2^(1/2)", None).unwrap();
        assert!(matches!(eval_exact(&e), Err(ExprError::NonIntegerExponent { .. })));
        let e = parse("2^13", None).unwrap();
        assert!(matches!(eval_exact(&e), Err(ExprError::ExponentOutOfRange { .. })));
        let e = parse("0^-1", None).unwrap();
        assert_eq!(eval_exact(&e), Err(ExprError::DivisionByZero));
    }

    #[test]
    fn print_reparse_is_structural_identity() {
        let numbers = vec![rat(13), rat(10), rat(3)];
        for s in ["13*10+13*3-40", "N0*(N1+N2)", "30%+0.5", "-2^2", "1/(2+3)", "2^-3"] {
            let e = parse(s, Some(&numbers)).unwrap();
            let printed = to_infix(&e);
            let back = parse(&printed, Some(&numbers)).unwrap();
            assert_eq!(e, back, "round-trip failed for {s} via {printed}");
        }
    }

    #[test]
    fn rational_literal_rendering() {
        assert_eq!(rational_literal(&rat(13)), "13");
        assert_eq!(rational_literal(&ratio(3, 10)), "0.3");
        assert_eq!(rational_literal(&ratio(1, 8)), "0.125");
        assert_eq!(rational_literal(&ratio(1, 3)), "1/3");
        assert_eq!(rational_literal(&ratio(-7, 2)), "-3.5");
    }
}
