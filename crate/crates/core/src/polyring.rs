//! Sparse multivariate polynomials with exact rational coefficients.
//!
//! A [`Polynomial`] lives in a ring described by an ordered list of variable
//! names ([`Vars`]). Terms are keyed by exponent vectors of the same arity;
//! zero coefficients are never stored, so two polynomials over the same
//! variable list are equal exactly when their term maps are equal.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Rational = BigRational;

/// Ordered list of indeterminate names shared by all polynomials of a ring.
pub type Vars = Arc<[String]>;

pub fn vars<S: AsRef<str>>(names: &[S]) -> Vars {
    names.iter().map(|s| s.as_ref().to_string()).collect::<Vec<_>>().into()
}

pub fn rat(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn format_rational(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::Structural(format!("malformed rational {s:?}"));
    match s.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().map_err(|_| bad())?;
            let d: BigInt = d.trim().parse().map_err(|_| bad())?;
            if d.is_zero() {
                return Err(bad());
            }
            Ok(Rational::new(n, d))
        }
        None => Ok(Rational::from_integer(s.parse().map_err(|_| bad())?)),
    }
}

pub type Monomial = Vec<u32>;

#[derive(Clone, PartialEq, Eq)]
pub struct Polynomial {
    vars: Vars,
    terms: BTreeMap<Monomial, Rational>,
}

/// One serialized term: `{"exponents": [..], "coeff": "num/den"}`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TermJson {
    pub exponents: Vec<u32>,
    pub coeff: String,
}

pub type PolyJson = Vec<TermJson>;

impl Polynomial {
    pub fn zero(vars: &Vars) -> Self {
        Polynomial { vars: vars.clone(), terms: BTreeMap::new() }
    }

    pub fn constant(vars: &Vars, c: Rational) -> Self {
        let mut p = Self::zero(vars);
        if !c.is_zero() {
            p.terms.insert(vec![0; vars.len()], c);
        }
        p
    }

    pub fn int(vars: &Vars, c: i64) -> Self {
        Self::constant(vars, rat(c))
    }

    pub fn one(vars: &Vars) -> Self {
        Self::int(vars, 1)
    }

    /// The indeterminate at position `i`.
    pub fn var(vars: &Vars, i: usize) -> Self {
        assert!(i < vars.len(), "variable index {i} out of range");
        let mut e = vec![0; vars.len()];
        e[i] = 1;
        Self::monomial(vars, e, Rational::one())
    }

    pub fn var_named(vars: &Vars, name: &str) -> Result<Self> {
        let i = vars
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| Error::Structural(format!("unknown variable {name}")))?;
        Ok(Self::var(vars, i))
    }

    pub fn monomial(vars: &Vars, exponents: Monomial, c: Rational) -> Self {
        assert_eq!(exponents.len(), vars.len(), "exponent arity mismatch");
        let mut p = Self::zero(vars);
        if !c.is_zero() {
            p.terms.insert(exponents, c);
        }
        p
    }

    pub fn from_terms<I>(vars: &Vars, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Monomial, Rational)>,
    {
        let mut p = Self::zero(vars);
        for (e, c) in terms {
            if e.len() != vars.len() {
                return Err(Error::Structural(format!(
                    "exponent vector of arity {} in a ring of {} variables",
                    e.len(),
                    vars.len()
                )));
            }
            p.add_term(e, c);
        }
        Ok(p)
    }

    fn add_term(&mut self, e: Monomial, c: Rational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(e) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = o.get() + c;
                if s.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn vars(&self) -> &Vars {
        &self.vars
    }

    pub fn nvars(&self) -> usize {
        self.vars.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Rational)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(|e| e.iter().all(|&k| k == 0))
    }

    /// Value of a constant polynomial, `None` otherwise.
    pub fn constant_value(&self) -> Option<Rational> {
        if !self.is_constant() {
            return None;
        }
        Some(self.terms.values().next().cloned().unwrap_or_else(Rational::zero))
    }

    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn degree_in(&self, i: usize) -> u32 {
        self.terms.keys().map(|e| e[i]).max().unwrap_or(0)
    }

    pub fn mentions(&self, i: usize) -> bool {
        self.terms.keys().any(|e| e[i] > 0)
    }

    /// Indices of variables with a positive exponent somewhere.
    pub fn support(&self) -> Vec<usize> {
        (0..self.nvars()).filter(|&i| self.mentions(i)).collect()
    }

    /// Componentwise minimum exponent over all terms (the largest monomial
    /// dividing every term). Zero polynomial gives all zeros.
    pub fn monomial_content(&self) -> Monomial {
        let mut it = self.terms.keys();
        let Some(first) = it.next() else {
            return vec![0; self.nvars()];
        };
        let mut m = first.clone();
        for e in it {
            for (a, b) in m.iter_mut().zip(e) {
                *a = (*a).min(*b);
            }
        }
        m
    }

    /// Divide every term by the monomial `m`; every term must be divisible.
    pub fn div_monomial(&self, m: &[u32]) -> Self {
        let mut out = Self::zero(&self.vars);
        for (e, c) in &self.terms {
            let q: Monomial = e
                .iter()
                .zip(m)
                .map(|(a, b)| a.checked_sub(*b).expect("monomial does not divide term"))
                .collect();
            out.terms.insert(q, c.clone());
        }
        out
    }

    pub fn mul_monomial(&self, m: &[u32]) -> Self {
        let mut out = Self::zero(&self.vars);
        for (e, c) in &self.terms {
            let q: Monomial = e.iter().zip(m).map(|(a, b)| a + b).collect();
            out.terms.insert(q, c.clone());
        }
        out
    }

    pub fn scale(&self, c: &Rational) -> Self {
        if c.is_zero() {
            return Self::zero(&self.vars);
        }
        Polynomial {
            vars: self.vars.clone(),
            terms: self.terms.iter().map(|(e, a)| (e.clone(), a * c)).collect(),
        }
    }

    /// Coefficient of the lexicographically largest exponent vector.
    pub fn leading_coeff(&self) -> Option<&Rational> {
        self.terms.iter().next_back().map(|(_, c)| c)
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::one(&self.vars);
        let mut base = self.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                acc = &acc * &base;
            }
            k >>= 1;
            if k > 0 {
                base = &base * &base;
            }
        }
        acc
    }

    fn check_arity(&self, n: usize, what: &str) -> Result<()> {
        if n != self.nvars() {
            return Err(Error::Structural(format!(
                "{what}: expected {} values, got {n}",
                self.nvars()
            )));
        }
        Ok(())
    }

    /// Exact value at a rational point.
    pub fn eval(&self, point: &[Rational]) -> Result<Rational> {
        self.check_arity(point.len(), "evaluation point")?;
        let mut total = Rational::zero();
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for (x, &k) in point.iter().zip(e) {
                if k > 0 {
                    t *= num_traits::pow(x.clone(), k as usize);
                }
            }
            total += t;
        }
        Ok(total)
    }

    pub fn eval_int(&self, point: &[BigInt]) -> Result<Rational> {
        let pt: Vec<Rational> = point.iter().cloned().map(Rational::from_integer).collect();
        self.eval(&pt)
    }

    /// Substitute `subst[i]` for variable `i`. All substituted polynomials
    /// must share one ambient ring, which becomes the ring of the result.
    pub fn compose(&self, subst: &[Polynomial]) -> Result<Polynomial> {
        self.check_arity(subst.len(), "substitution")?;
        let target = match subst.first() {
            Some(s) => s.vars.clone(),
            None => {
                // a polynomial in zero variables is a constant
                return Err(Error::Structural(
                    "substitution into a ring without variables needs a target ring".into(),
                ));
            }
        };
        if subst.iter().any(|s| s.vars != target) {
            return Err(Error::Structural(
                "substituted polynomials live in different rings".into(),
            ));
        }
        self.compose_into(&target, subst)
    }

    pub fn compose_into(&self, target: &Vars, subst: &[Polynomial]) -> Result<Polynomial> {
        self.check_arity(subst.len(), "substitution")?;
        let mut powers: Vec<Vec<Polynomial>> = subst
            .iter()
            .map(|s| vec![Polynomial::one(target), s.clone()])
            .collect();
        let mut out = Polynomial::zero(target);
        for (e, c) in &self.terms {
            let mut t = Polynomial::constant(target, c.clone());
            for (i, &k) in e.iter().enumerate() {
                if k == 0 {
                    continue;
                }
                let k = k as usize;
                while powers[i].len() <= k {
                    let next = &powers[i][powers[i].len() - 1] * &subst[i];
                    powers[i].push(next);
                }
                t = &t * &powers[i][k];
                if t.is_zero() {
                    break;
                }
            }
            out = &out + &t;
        }
        Ok(out)
    }

    /// Move into another ring: variable `i` becomes `target` variable
    /// `mapping[i]`.
    pub fn embed(&self, target: &Vars, mapping: &[usize]) -> Result<Polynomial> {
        self.check_arity(mapping.len(), "embedding")?;
        let mut out = Polynomial::zero(target);
        for (e, c) in &self.terms {
            let mut f = vec![0; target.len()];
            for (i, &k) in e.iter().enumerate() {
                let j = *mapping.get(i).filter(|&&j| j < target.len()).ok_or_else(|| {
                    Error::Structural(format!("embedding target {} out of range", mapping[i]))
                })?;
                f[j] += k;
            }
            out.add_term(f, c.clone());
        }
        Ok(out)
    }

    /// `(d * self, d)` with `d` the lcm of the coefficient denominators.
    pub fn clear_denominators(&self) -> (Polynomial, BigInt) {
        let d = self.terms.values().fold(BigInt::one(), |acc, c| acc.lcm(c.denom()));
        let scaled = self.scale(&Rational::from_integer(d.clone()));
        (scaled, d)
    }

    pub fn has_integer_coeffs(&self) -> bool {
        self.terms.values().all(|c| c.is_integer())
    }

    /// Primes dividing some coefficient denominator.
    pub fn denominator_primes(&self) -> Vec<u64> {
        let (_, d) = self.clear_denominators();
        let d: u64 = d.try_into().unwrap_or(u64::MAX);
        crate::arith::factorize(d).into_iter().map(|(p, _)| p).collect()
    }

    pub fn to_json(&self) -> PolyJson {
        self.terms
            .iter()
            .map(|(e, c)| TermJson { exponents: e.clone(), coeff: format_rational(c) })
            .collect()
    }

    pub fn from_json(vars: &Vars, json: &[TermJson]) -> Result<Polynomial> {
        let terms = json
            .iter()
            .map(|t| Ok((t.exponents.clone(), parse_rational(&t.coeff)?)))
            .collect::<Result<Vec<_>>>()?;
        Polynomial::from_terms(vars, terms)
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (n, (e, c)) in self.terms.iter().rev().enumerate() {
            let neg = c.is_negative();
            let a = c.abs();
            if n == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { '-' } else { '+' })?;
            }
            let mono: Vec<String> = e
                .iter()
                .enumerate()
                .filter(|(_, &k)| k > 0)
                .map(|(i, &k)| {
                    if k == 1 {
                        self.vars[i].clone()
                    } else {
                        format!("{}^{}", self.vars[i], k)
                    }
                })
                .collect();
            if mono.is_empty() {
                write!(f, "{a}")?;
            } else if a.is_one() {
                write!(f, "{}", mono.join("*"))?;
            } else {
                write!(f, "{a}*{}", mono.join("*"))?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Polynomial({self})")
    }
}

fn same_ring(a: &Polynomial, b: &Polynomial) {
    assert!(
        Arc::ptr_eq(&a.vars, &b.vars) || a.vars == b.vars,
        "arithmetic between polynomials of different rings"
    );
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        same_ring(self, rhs);
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), c.clone());
        }
        out
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        same_ring(self, rhs);
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), -c.clone());
        }
        out
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(&-Rational::one())
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        same_ring(self, rhs);
        let mut out = Polynomial::zero(&self.vars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &rhs.terms {
                let e: Monomial = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }
}

macro_rules! owned_ops {
    ($tr:ident, $m:ident) => {
        impl $tr for Polynomial {
            type Output = Polynomial;
            fn $m(self, rhs: Polynomial) -> Polynomial {
                (&self).$m(&rhs)
            }
        }
    };
}
owned_ops!(Add, add);
owned_ops!(Sub, sub);
owned_ops!(Mul, mul);
