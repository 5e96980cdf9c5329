//! Small number-theoretic helpers shared by the evaluator, the oracle and
//! the series assembly.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::polyring::Rational;

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

pub fn primes_up_to(n: u64) -> Vec<u64> {
    (2..=n).filter(|&k| is_prime(k)).collect()
}

/// p-adic valuation of a nonzero integer; `None` for zero.
pub fn vp_int(x: &BigInt, p: u64) -> Option<u32> {
    if x.is_zero() {
        return None;
    }
    let p = BigInt::from(p);
    let mut x = x.abs();
    let mut v = 0;
    loop {
        let (q, r) = x.div_rem(&p);
        if !r.is_zero() {
            return Some(v);
        }
        x = q;
        v += 1;
    }
}

/// p-adic valuation of a nonzero rational; `None` for zero.
pub fn vp_rat(x: &Rational, p: u64) -> Option<i64> {
    let n = vp_int(x.numer(), p)?;
    let d = vp_int(x.denom(), p).unwrap_or(0);
    Some(n as i64 - d as i64)
}

/// Whether `x` lies in the localisation Z_(p).
pub fn is_p_integral(x: &Rational, p: u64) -> bool {
    vp_int(x.denom(), p).unwrap_or(0) == 0
}

pub fn pow_u64(p: u64, e: u32) -> u64 {
    p.checked_pow(e).expect("prime power overflows u64")
}

pub fn pow_rat(p: u64, e: i64) -> Rational {
    let base = BigInt::from(p).pow(e.unsigned_abs() as u32);
    if e >= 0 {
        Rational::from_integer(base)
    } else {
        Rational::new(BigInt::one(), base)
    }
}

/// Factorisation `n = prod p^k` with primes ascending.
pub fn factorize(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut d = 2u64;
    while d * d <= n {
        let mut k = 0;
        while n % d == 0 {
            n /= d;
            k += 1;
        }
        if k > 0 {
            out.push((d, k));
        }
        d += 1;
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

/// Largest k with p^k <= n (n >= 1).
pub fn ilog(p: u64, n: u64) -> u32 {
    let mut k = 0;
    let mut q = 1u64;
    while let Some(next) = q.checked_mul(p) {
        if next > n {
            break;
        }
        q = next;
        k += 1;
    }
    k
}

/// Inverse of `a` modulo `m` for gcd(a, m) = 1.
pub fn inv_mod(a: &BigInt, m: &BigInt) -> Option<BigInt> {
    let e = a.mod_floor(m).extended_gcd(m);
    if !e.gcd.is_one() {
        return None;
    }
    Some(e.x.mod_floor(m))
}
