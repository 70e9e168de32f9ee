//! Small exact-arithmetic helpers shared across the crate.

use num_bigint::BigUint;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

/// Truncated subtraction on naturals: `a ∸ b = max(0, a - b)`.
pub fn dotminus(a: &BigUint, b: &BigUint) -> BigUint {
    if a >= b {
        a - b
    } else {
        BigUint::zero()
    }
}

/// `1/(n+1)` as an exact rational.
pub fn inv_succ(n: &BigUint) -> BigRational {
    let num = BigRational::one();
    let den = int_to_rational(&(n + 1u32));
    num / den
}

pub fn int_to_rational(n: &BigUint) -> BigRational {
    BigRational::from_integer(n.clone().into())
}

/// Exact ceiling of a nonnegative rational, as a natural number.
///
/// Panics on negative input; all callers feed values that are nonnegative
/// by construction.
pub fn ceil_rational(q: &BigRational) -> BigUint {
    assert!(!q.is_negative(), "ceil_rational: negative argument {q}");
    let c = q.ceil();
    c.to_integer().to_biguint().expect("nonnegative ceiling")
}

/// Smallest natural `t` with `t^p * den >= num`, i.e. the exact ceiling of
/// the `p`-th root of the nonnegative rational `num/den`.
pub fn nat_root_ceil(num: &BigUint, den: &BigUint, p: u32) -> BigUint {
    assert!(p >= 1);
    assert!(!den.is_zero());
    if num.is_zero() {
        return BigUint::zero();
    }
    // floor(num/den) and the true root differ by less than one, so the
    // integer nth root is off by at most one step in either direction.
    let mut t = (num / den).nth_root(p);
    while t.pow(p) * den < *num {
        t += 1u32;
    }
    while !t.is_zero() && (&t - 1u32).pow(p) * den >= *num {
        t -= 1u32;
    }
    t
}

/// Smallest natural `t` with `t^p >= s^p * d^(p-1)`, i.e. the exact value of
/// `ceil(s * d^((p-1)/p))` for a nonnegative rational `s` and naturals `d, p`.
///
/// For `p = 2` this is `ceil(s * sqrt(d))`; the irrational factor is never
/// evaluated in floating point.
pub fn ceil_root_scaled(s: &BigRational, d: u64, p: u32) -> BigUint {
    assert!(p >= 1);
    assert!(!s.is_negative());
    if s.is_zero() || d == 0 {
        return BigUint::zero();
    }
    // t^p >= s^p * d^(p-1)  <=>  t^p * den >= num  for s^p * d^(p-1) = num/den.
    let sp = pow_rational(s, p);
    let target = sp * BigRational::from_integer(BigUint::from(d).pow(p - 1).into());
    let num = target.numer().to_biguint().expect("nonnegative");
    let den = target.denom().to_biguint().expect("positive");
    nat_root_ceil(&num, &den, p)
}

fn pow_rational(q: &BigRational, p: u32) -> BigRational {
    let mut acc = BigRational::one();
    for _ in 0..p {
        acc *= q;
    }
    acc
}

/// Parse a rational from either `"p/q"` or a plain integer/decimal string.
pub fn parse_rational(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let n: num_bigint::BigInt = num.trim().parse().ok()?;
        let d: num_bigint::BigInt = den.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(BigRational::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let negative = int.starts_with('-');
        let int = int.trim_start_matches(['-', '+']);
        let digits = frac.len() as u32;
        let int: num_bigint::BigInt = if int.is_empty() { 0.into() } else { int.parse().ok()? };
        let frac_n: num_bigint::BigInt = frac.parse().ok()?;
        if frac_n.is_negative() {
            return None;
        }
        let scale = num_bigint::BigInt::from(10u32).pow(digits);
        let magnitude = &int * &scale + frac_n;
        let adjusted = if negative { -magnitude } else { magnitude };
        return Some(BigRational::new(adjusted, scale));
    }
    let n: num_bigint::BigInt = s.parse().ok()?;
    Some(BigRational::from_integer(n))
}

/// Floor of `a/b` on naturals with `b > 0`.
pub fn div_floor_nat(a: &BigUint, b: &BigUint) -> BigUint {
    a.div_floor(b)
}

/// Ceiling of `a/b` on naturals with `b > 0`.
pub fn div_ceil_nat(a: &BigUint, b: &BigUint) -> BigUint {
    Integer::div_ceil(a, b)
}

/// Splits a positive rational into `(numerator, denominator)` naturals.
pub fn split_pos_rational(q: &BigRational) -> (BigUint, BigUint) {
    assert!(q > &BigRational::zero(), "expected a positive rational, got {q}");
    (
        q.numer().to_biguint().expect("positive numerator"),
        q.denom().to_biguint().expect("positive denominator"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::FromPrimitive;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn dotminus_truncates() {
        assert_eq!(dotminus(&3u32.into(), &5u32.into()), BigUint::zero());
        assert_eq!(dotminus(&5u32.into(), &3u32.into()), BigUint::from(2u32));
    }

    #[test]
    fn ceil_root_matches_hand_values() {
        // ceil(2 * sqrt(2)) = 3, so the d=2 box modulus at k=0, M=1 is 9.
        assert_eq!(ceil_root_scaled(&q(2, 1), 2, 2), BigUint::from(3u32));
        assert_eq!(ceil_root_scaled(&q(2, 1), 1, 2), BigUint::from(2u32));
        // ceil(64 * sqrt(2)) = 91.
        assert_eq!(ceil_root_scaled(&q(64, 1), 2, 2), BigUint::from(91u32));
        // Exact boundary: ceil(3 * sqrt(4)) = 6 exactly, not 7.
        assert_eq!(ceil_root_scaled(&q(3, 1), 4, 2), BigUint::from(6u32));
    }

    #[test]
    fn ceil_root_large_inputs_stay_exact() {
        // Beyond f64 precision: s = 10^30, d = 2, p = 2.
        let s = BigRational::from_integer(BigUint::from(10u32).pow(30).into());
        let t = ceil_root_scaled(&s, 2, 2);
        let two = BigUint::from(2u32);
        let num = BigUint::from(10u32).pow(60) * &two;
        assert!(t.pow(2) >= num);
        assert!((&t - 1u32).pow(2) < num);
    }

    #[test]
    fn parse_rational_forms() {
        assert_eq!(parse_rational("1/2"), Some(q(1, 2)));
        assert_eq!(parse_rational("3.18"), Some(q(318, 100)));
        assert_eq!(parse_rational("7"), Some(q(7, 1)));
        assert_eq!(parse_rational("1/0"), None);
        assert_eq!(
            parse_rational("-0.25"),
            Some(BigRational::from_f64(-0.25).unwrap())
        );
    }

    #[test]
    fn inv_succ_value() {
        assert_eq!(inv_succ(&BigUint::from(3u32)), q(1, 4));
    }
}
