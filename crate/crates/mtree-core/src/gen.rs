//! Random expression generation for property suites: valid random
//! expressions, equivalence-preserving rewrites, and value-distinct control
//! pairs. All randomness flows through the caller's RNG, so corpora are
//! reproducible from a seed.

use num::{BigInt, BigRational};
use rand::Rng;

use crate::canon::canonicalize;
use crate::expr::{eval_exact, BinOp, Expr, Quantity};

/// Shape parameters for [`random_valid_expr`].
#[derive(Debug, Clone)]
pub struct GenConfig {
    /// Maximum nesting depth of the raw expression tree.
    pub max_depth: usize,
    /// Inclusive range of integer leaf values.
    pub leaf_min: i64,
    pub leaf_max: i64,
    /// Allow `^` with small integer exponents.
    pub allow_pow: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig { max_depth: 4, leaf_min: 2, leaf_max: 12, allow_pow: true }
    }
}

fn random_leaf<R: Rng>(rng: &mut R, cfg: &GenConfig) -> Expr {
    Expr::int(rng.random_range(cfg.leaf_min..=cfg.leaf_max))
}

fn random_raw<R: Rng>(rng: &mut R, cfg: &GenConfig, depth: usize) -> Expr {
    if depth == 0 || rng.random_bool(0.25) {
        return random_leaf(rng, cfg);
    }
    match rng.random_range(0u32..100) {
        0..=24 => Expr::bin(
            BinOp::Add,
            random_raw(rng, cfg, depth - 1),
            random_raw(rng, cfg, depth - 1),
        ),
        25..=44 => Expr::bin(
            BinOp::Sub,
            random_raw(rng, cfg, depth - 1),
            random_raw(rng, cfg, depth - 1),
        ),
        45..=69 => Expr::bin(
            BinOp::Mul,
            random_raw(rng, cfg, depth - 1),
            random_raw(rng, cfg, depth - 1),
        ),
        70..=86 => Expr::bin(
            BinOp::Div,
            random_raw(rng, cfg, depth - 1),
            random_raw(rng, cfg, depth - 1),
        ),
        87..=93 => Expr::neg(random_raw(rng, cfg, depth - 1)),
        _ if cfg.allow_pow => Expr::bin(
            BinOp::Pow,
            random_raw(rng, cfg, depth.saturating_sub(2)),
            Expr::int(*[-2, -1, 2, 3].get(rng.random_range(0..4)).unwrap()),
        ),
        _ => Expr::bin(
            BinOp::Mul,
            random_raw(rng, cfg, depth - 1),
            random_raw(rng, cfg, depth - 1),
        ),
    }
}

/// A random expression that evaluates exactly and canonicalizes without
/// error. Rejection-samples raw trees; the fallback leaf keeps this total.
pub fn random_valid_expr<R: Rng>(rng: &mut R, cfg: &GenConfig) -> Expr {
    for _ in 0..1000 {
        let e = random_raw(rng, cfg, cfg.max_depth);
        if eval_exact(&e).is_ok() && canonicalize(&e).is_ok() {
            return e;
        }
    }
    random_leaf(rng, cfg)
}

/// One pass of random equivalence-preserving rewrites: commutation,
/// re-association, distribution, sign identities (`a-b = a+(-b)`,
/// `a-b = -(b-a)`, double negation), `a/b = a*(1/b)`, and `e = e*1`.
/// The canonical sum of the result is identical to the input's.
pub fn equivalent_rewrite<R: Rng>(rng: &mut R, e: &Expr) -> Expr {
    let rebuilt = match e {
        Expr::Leaf(q) => Expr::Leaf(q.clone()),
        Expr::Neg(x) => {
            let x = equivalent_rewrite(rng, x);
            match (&x, rng.random_range(0u32..3)) {
                // -(-a) = a
                (Expr::Neg(inner), 0) => (**inner).clone(),
                // -(a-b) = b-a
                (Expr::Bin(BinOp::Sub, a, b), 1) => {
                    Expr::bin(BinOp::Sub, (**b).clone(), (**a).clone())
                }
                _ => Expr::neg(x),
            }
        }
        Expr::Bin(op, l, r) => {
            let l = equivalent_rewrite(rng, l);
            let r = equivalent_rewrite(rng, r);
            rewrite_bin(rng, *op, l, r)
        }
    };
    // Occasional identity wrappers exercise literal-1 elision and double
    // negation at arbitrary positions.
    match rng.random_range(0u32..20) {
        0 => Expr::bin(BinOp::Mul, rebuilt, Expr::int(1)),
        1 => Expr::bin(BinOp::Mul, Expr::int(1), rebuilt),
        2 => Expr::neg(Expr::neg(rebuilt)),
        _ => rebuilt,
    }
}

fn rewrite_bin<R: Rng>(rng: &mut R, op: BinOp, l: Expr, r: Expr) -> Expr {
    let roll = rng.random_range(0u32..4);
    match op {
        BinOp::Add => match roll {
            // b+a
            0 => Expr::bin(BinOp::Add, r, l),
            // (a+b)+c = a+(b+c)
            1 => match l {
                Expr::Bin(BinOp::Add, a, b) => {
                    Expr::bin(BinOp::Add, *a, Expr::bin(BinOp::Add, *b, r))
                }
                other => Expr::bin(BinOp::Add, other, r),
            },
            // a+(b+c) = (a+b)+c
            2 => match r {
                Expr::Bin(BinOp::Add, b, c) => {
                    Expr::bin(BinOp::Add, Expr::bin(BinOp::Add, l, *b), *c)
                }
                other => Expr::bin(BinOp::Add, l, other),
            },
            _ => Expr::bin(BinOp::Add, l, r),
        },
        BinOp::Sub => match roll {
            // a-b = a+(-b)
            0 => Expr::bin(BinOp::Add, l, Expr::neg(r)),
            // a-b = -(b-a)
            1 => Expr::neg(Expr::bin(BinOp::Sub, r, l)),
            _ => Expr::bin(BinOp::Sub, l, r),
        },
        BinOp::Mul => match roll {
            // b*a
            0 => Expr::bin(BinOp::Mul, r, l),
            // (a*b)*c = a*(b*c)
            1 => match l {
                Expr::Bin(BinOp::Mul, a, b) => {
                    Expr::bin(BinOp::Mul, *a, Expr::bin(BinOp::Mul, *b, r))
                }
                other => Expr::bin(BinOp::Mul, other, r),
            },
            // a*(b±c) = a*b ± a*c
            2 => match r {
                Expr::Bin(inner_op @ (BinOp::Add | BinOp::Sub), b, c) => Expr::bin(
                    inner_op,
                    Expr::bin(BinOp::Mul, l.clone(), *b),
                    Expr::bin(BinOp::Mul, l, *c),
                ),
                other => Expr::bin(BinOp::Mul, l, other),
            },
            // (a±b)*c = a*c ± b*c
            _ => match l {
                Expr::Bin(inner_op @ (BinOp::Add | BinOp::Sub), a, b) => Expr::bin(
                    inner_op,
                    Expr::bin(BinOp::Mul, *a, r.clone()),
                    Expr::bin(BinOp::Mul, *b, r),
                ),
                other => Expr::bin(BinOp::Mul, other, r),
            },
        },
        BinOp::Div => match roll {
            // a/b = a*(1/b)
            0 => Expr::bin(BinOp::Mul, l, Expr::bin(BinOp::Div, Expr::int(1), r)),
            // (a±b)/c = a/c ± b/c
            1 => match l {
                Expr::Bin(inner_op @ (BinOp::Add | BinOp::Sub), a, b) => Expr::bin(
                    inner_op,
                    Expr::bin(BinOp::Div, *a, r.clone()),
                    Expr::bin(BinOp::Div, *b, r),
                ),
                other => Expr::bin(BinOp::Div, other, r),
            },
            _ => Expr::bin(BinOp::Div, l, r),
        },
        BinOp::Pow => Expr::bin(BinOp::Pow, l, r),
    }
}

/// A pair of distinct-looking, exactly equivalent expressions.
pub fn equivalent_pair<R: Rng>(rng: &mut R, cfg: &GenConfig) -> (Expr, Expr) {
    let e = random_valid_expr(rng, cfg);
    let mut rewritten = equivalent_rewrite(rng, &e);
    for _ in 0..rng.random_range(0..2) {
        rewritten = equivalent_rewrite(rng, &rewritten);
    }
    (e, rewritten)
}

/// A pair of valid expressions with different exact values: the second is
/// the first with one leaf value perturbed (re-drawn until the value moves
/// and the result stays valid).
pub fn control_pair<R: Rng>(rng: &mut R, cfg: &GenConfig) -> (Expr, Expr) {
    loop {
        let e = random_valid_expr(rng, cfg);
        let value = eval_exact(&e).expect("validated");
        for _ in 0..50 {
            let delta = rng.random_range(1i64..=3);
            let target = rng.random_range(0..e.leaf_count());
            let perturbed = perturb_leaf(&e, target, delta);
            if let (Ok(v), Ok(_)) = (eval_exact(&perturbed), canonicalize(&perturbed)) {
                if v != value {
                    return (e, perturbed);
                }
            }
        }
    }
}

/// Rebuild `e` with leaf number `target` (in-order) shifted by `delta`.
fn perturb_leaf(e: &Expr, target: usize, delta: i64) -> Expr {
    fn walk(e: &Expr, seen: &mut usize, target: usize, delta: i64) -> Expr {
        match e {
            Expr::Leaf(q) => {
                let hit = *seen == target;
                *seen += 1;
                if hit {
                    let value = &q.value + BigRational::from_integer(BigInt::from(delta));
                    Expr::Leaf(Quantity { value, origin: q.origin })
                } else {
                    Expr::Leaf(q.clone())
                }
            }
            Expr::Neg(x) => Expr::neg(walk(x, seen, target, delta)),
            Expr::Bin(op, l, r) => {
                let l = walk(l, seen, target, delta);
                let r = walk(r, seen, target, delta);
                Expr::bin(*op, l, r)
            }
        }
    }
    walk(e, &mut 0, target, delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::to_infix;
    use crate::mtree::build_mtree;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generation_is_deterministic() {
        let cfg = GenConfig::default();
        let mut a = ChaCha8Rng::seed_from_u64(11);
        let mut b = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            assert_eq!(
                to_infix(&random_valid_expr(&mut a, &cfg)),
                to_infix(&random_valid_expr(&mut b, &cfg))
            );
        }
    }

    #[test]
    fn equivalent_pairs_collapse_to_one_canonical_sum() {
        let cfg = GenConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..300 {
            let (a, b) = equivalent_pair(&mut rng, &cfg);
            assert_eq!(eval_exact(&a).unwrap(), eval_exact(&b).unwrap());
            let ca = canonicalize(&a).unwrap();
            let cb = canonicalize(&b).unwrap();
            assert_eq!(ca, cb, "canonical mismatch:\n  {}\n  {}", a, b);
            assert_eq!(build_mtree(&ca), build_mtree(&cb));
        }
    }

    #[test]
    fn control_pairs_differ_in_value_and_tree() {
        let cfg = GenConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..300 {
            let (a, b) = control_pair(&mut rng, &cfg);
            assert_ne!(eval_exact(&a).unwrap(), eval_exact(&b).unwrap());
            let ta = build_mtree(&canonicalize(&a).unwrap());
            let tb = build_mtree(&canonicalize(&b).unwrap());
            assert_ne!(ta, tb, "value-distinct pair built equal trees");
        }
    }

    #[test]
    fn rewriter_preserves_validity() {
        let cfg = GenConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..200 {
            let (_, b) = equivalent_pair(&mut rng, &cfg);
            assert!(eval_exact(&b).is_ok());
            assert!(canonicalize(&b).is_ok());
        }
    }
}
