//! Mal'cev presentations of finitely generated torsion-free nilpotent groups.
//!
//! An element is its coordinate vector `a` with respect to a fixed Mal'cev
//! basis, `x^a = x_1^{a_1} ... x_h^{a_h}`. Multiplication, powers and
//! commutators are polynomial maps `f`, `g`, `c` on coordinates.

use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polyring::{rat, ratio, PolyJson, Polynomial, Rational, Vars};

/// Coordinates of a group element.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupElement(pub Vec<BigInt>);

impl GroupElement {
    pub fn identity(h: usize) -> Self {
        GroupElement(vec![BigInt::zero(); h])
    }

    pub fn from_i64(v: &[i64]) -> Self {
        GroupElement(v.iter().map(|&x| BigInt::from(x)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().all(Zero::is_zero)
    }
}

/// `X1..Xh, Y1..Yh`
pub fn xy_vars(h: usize) -> Vars {
    let names: Vec<String> =
        (1..=h).map(|i| format!("X{i}")).chain((1..=h).map(|i| format!("Y{i}"))).collect();
    names.into()
}

/// `X1..Xh, W`
pub fn xw_vars(h: usize) -> Vars {
    let names: Vec<String> = (1..=h).map(|i| format!("X{i}")).chain(std::iter::once("W".into())).collect();
    names.into()
}

/// `X1..Xh`
pub fn x_vars(h: usize) -> Vars {
    let names: Vec<String> = (1..=h).map(|i| format!("X{i}")).collect();
    names.into()
}

#[derive(Clone, Debug)]
pub struct MalcevPresentation {
    name: String,
    h: usize,
    class: u32,
    f: Vec<Polynomial>,
    g: Vec<Polynomial>,
    c: Vec<Polynomial>,
    bad_primes: BTreeSet<u64>,
}

fn to_rat(v: &[BigInt]) -> Vec<Rational> {
    v.iter().cloned().map(Rational::from_integer).collect()
}

fn integral(v: Vec<Rational>, what: &str) -> Result<GroupElement> {
    v.into_iter()
        .map(|r| {
            if r.is_integer() {
                Ok(r.to_integer())
            } else {
                Err(Error::Integrality(format!("{what} produced non-integral coordinate {r}")))
            }
        })
        .collect::<Result<Vec<_>>>()
        .map(GroupElement)
}

impl MalcevPresentation {
    /// Build from `f` and `g`; the commutator polynomials are derived as
    /// `f(f(f(g(X,-1), g(Y,-1)), X), Y)` when not supplied.
    pub fn new(
        name: impl Into<String>,
        class: u32,
        f: Vec<Polynomial>,
        g: Vec<Polynomial>,
        c: Option<Vec<Polynomial>>,
    ) -> Result<Self> {
        let h = f.len();
        if h == 0 {
            return Err(Error::Structural("Hirsch length must be positive".into()));
        }
        let xy = xy_vars(h);
        let xw = xw_vars(h);
        if g.len() != h || f.iter().any(|p| *p.vars() != xy) || g.iter().any(|p| *p.vars() != xw) {
            return Err(Error::Structural(format!(
                "presentation tuples must have length {h} over X,Y (f, c) and X,W (g)"
            )));
        }
        let mut n = MalcevPresentation {
            name: name.into(),
            h,
            class,
            f,
            g,
            c: Vec::new(),
            bad_primes: BTreeSet::new(),
        };
        n.c = match c {
            Some(c) => {
                if c.len() != h || c.iter().any(|p| *p.vars() != xy) {
                    return Err(Error::Structural("commutator tuple has the wrong shape".into()));
                }
                c
            }
            None => n.derive_commutator()?,
        };
        Ok(n)
    }

    fn derive_commutator(&self) -> Result<Vec<Polynomial>> {
        let xy = xy_vars(self.h);
        let xs: Vec<Polynomial> = (0..self.h).map(|i| Polynomial::var(&xy, i)).collect();
        let ys: Vec<Polynomial> = (0..self.h).map(|i| Polynomial::var(&xy, self.h + i)).collect();
        let xi = self.inv_sym(&xs)?;
        let yi = self.inv_sym(&ys)?;
        let t = self.mul_sym(&xi, &yi)?;
        let t = self.mul_sym(&t, &xs)?;
        self.mul_sym(&t, &ys)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn hirsch_length(&self) -> usize {
        self.h
    }

    pub fn class(&self) -> u32 {
        self.class
    }

    pub fn f(&self) -> &[Polynomial] {
        &self.f
    }

    pub fn g(&self) -> &[Polynomial] {
        &self.g
    }

    pub fn c(&self) -> &[Polynomial] {
        &self.c
    }

    /// Primes explicitly declared bad by the input (skipped by the CLI).
    pub fn bad_primes(&self) -> &BTreeSet<u64> {
        &self.bad_primes
    }

    pub fn set_bad_primes(&mut self, primes: impl IntoIterator<Item = u64>) {
        self.bad_primes = primes.into_iter().collect();
    }

    /// Primes dividing a coefficient denominator of `f`, `g` or `c`.
    pub fn denominator_primes(&self) -> BTreeSet<u64> {
        self.f
            .iter()
            .chain(&self.g)
            .chain(&self.c)
            .flat_map(|p| p.denominator_primes())
            .collect()
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.h {
            return Err(Error::Structural(format!("element of arity {n} in a group of Hirsch length {}", self.h)));
        }
        Ok(())
    }

    // ---- rational evaluation -------------------------------------------------

    pub fn multiply_rat(&self, a: &[Rational], b: &[Rational]) -> Result<Vec<Rational>> {
        self.check_len(a.len())?;
        self.check_len(b.len())?;
        let pt: Vec<Rational> = a.iter().chain(b).cloned().collect();
        self.f.iter().map(|p| p.eval(&pt)).collect()
    }

    pub fn power_rat(&self, a: &[Rational], w: &Rational) -> Result<Vec<Rational>> {
        self.check_len(a.len())?;
        let pt: Vec<Rational> = a.iter().cloned().chain(std::iter::once(w.clone())).collect();
        self.g.iter().map(|p| p.eval(&pt)).collect()
    }

    pub fn commutator_rat(&self, a: &[Rational], b: &[Rational]) -> Result<Vec<Rational>> {
        self.check_len(a.len())?;
        self.check_len(b.len())?;
        let pt: Vec<Rational> = a.iter().chain(b).cloned().collect();
        self.c.iter().map(|p| p.eval(&pt)).collect()
    }

    // ---- integer group operations -------------------------------------------

    pub fn multiply(&self, a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
        integral(self.multiply_rat(&to_rat(&a.0), &to_rat(&b.0))?, "multiplication")
    }

    pub fn power(&self, a: &GroupElement, w: &BigInt) -> Result<GroupElement> {
        integral(self.power_rat(&to_rat(&a.0), &Rational::from_integer(w.clone()))?, "power")
    }

    pub fn inverse(&self, a: &GroupElement) -> Result<GroupElement> {
        self.power(a, &-BigInt::one())
    }

    pub fn commutator(&self, a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
        integral(self.commutator_rat(&to_rat(&a.0), &to_rat(&b.0))?, "commutator")
    }

    /// `a^{-1} b^{-1} a b` through multiplication and inversion only.
    pub fn commutator_by_products(&self, a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
        let t = self.multiply(&self.inverse(a)?, &self.inverse(b)?)?;
        let t = self.multiply(&t, a)?;
        self.multiply(&t, b)
    }

    // ---- symbolic group operations ------------------------------------------

    fn ambient<'a>(&self, a: &'a [Polynomial]) -> Result<&'a Vars> {
        self.check_len(a.len())?;
        Ok(a[0].vars())
    }

    /// `f(a, b)` with polynomial coordinates in a common ring.
    pub fn mul_sym(&self, a: &[Polynomial], b: &[Polynomial]) -> Result<Vec<Polynomial>> {
        let ring = self.ambient(a)?.clone();
        self.check_len(b.len())?;
        let subst: Vec<Polynomial> = a.iter().chain(b).cloned().collect();
        self.f.iter().map(|p| p.compose_into(&ring, &subst)).collect()
    }

    /// `g(a, w)` with `w` a polynomial in the ring of `a` (symbolic exponent).
    pub fn pow_sym(&self, a: &[Polynomial], w: &Polynomial) -> Result<Vec<Polynomial>> {
        let ring = self.ambient(a)?.clone();
        let subst: Vec<Polynomial> = a.iter().cloned().chain(std::iter::once(w.clone())).collect();
        self.g.iter().map(|p| p.compose_into(&ring, &subst)).collect()
    }

    pub fn inv_sym(&self, a: &[Polynomial]) -> Result<Vec<Polynomial>> {
        let ring = self.ambient(a)?.clone();
        self.pow_sym(a, &Polynomial::int(&ring, -1))
    }

    pub fn comm_sym(&self, a: &[Polynomial], b: &[Polynomial]) -> Result<Vec<Polynomial>> {
        let ring = self.ambient(a)?.clone();
        self.check_len(b.len())?;
        let subst: Vec<Polynomial> = a.iter().chain(b).cloned().collect();
        self.c.iter().map(|p| p.compose_into(&ring, &subst)).collect()
    }

    /// The presentation of `N_j = <x_j, ..., x_h>` on its own basis
    /// (0-based `start`).
    pub fn suffix(&self, start: usize) -> Result<MalcevPresentation> {
        if start >= self.h {
            return Err(Error::Structural(format!("suffix start {start} beyond Hirsch length {}", self.h)));
        }
        if start == 0 {
            return Ok(self.clone());
        }
        let h2 = self.h - start;
        let xy2 = xy_vars(h2);
        let xw2 = xw_vars(h2);
        let embed_xy: Vec<Polynomial> = (0..2 * self.h)
            .map(|i| {
                let (block, k) = (i / self.h, i % self.h);
                if k < start {
                    Polynomial::zero(&xy2)
                } else {
                    Polynomial::var(&xy2, block * h2 + k - start)
                }
            })
            .collect();
        let embed_xw: Vec<Polynomial> = (0..=self.h)
            .map(|i| {
                if i == self.h {
                    Polynomial::var(&xw2, h2)
                } else if i < start {
                    Polynomial::zero(&xw2)
                } else {
                    Polynomial::var(&xw2, i - start)
                }
            })
            .collect();
        let f = self.f[start..].iter().map(|p| p.compose_into(&xy2, &embed_xy)).collect::<Result<_>>()?;
        let g = self.g[start..].iter().map(|p| p.compose_into(&xw2, &embed_xw)).collect::<Result<_>>()?;
        let c = self.c[start..].iter().map(|p| p.compose_into(&xy2, &embed_xy)).collect::<Result<_>>()?;
        let mut out = MalcevPresentation::new(format!("{}[{}..]", self.name, start + 1), self.class, f, g, Some(c))?;
        out.bad_primes = self.bad_primes.clone();
        Ok(out)
    }

    // ---- serialization ------------------------------------------------------

    pub fn to_json(&self) -> PresentationJson {
        PresentationJson {
            schema: 1,
            name: Some(self.name.clone()),
            h: self.h,
            class: self.class,
            f: self.f.iter().map(Polynomial::to_json).collect(),
            g: self.g.iter().map(Polynomial::to_json).collect(),
            c: Some(self.c.iter().map(Polynomial::to_json).collect()),
            bad_primes: if self.bad_primes.is_empty() { None } else { Some(self.bad_primes.iter().copied().collect()) },
        }
    }

    /// Parse and verify. Groups failing any law are refused.
    pub fn from_json(json: &PresentationJson) -> Result<Self> {
        if json.schema != 1 {
            return Err(Error::Usage(format!("unsupported presentation schema {}", json.schema)));
        }
        let h = json.h;
        if json.f.len() != h || json.g.len() != h {
            return Err(Error::Structural(format!("expected {h} polynomials in f and g")));
        }
        let xy = xy_vars(h);
        let xw = xw_vars(h);
        let f = json.f.iter().map(|p| Polynomial::from_json(&xy, p)).collect::<Result<Vec<_>>>()?;
        let g = json.g.iter().map(|p| Polynomial::from_json(&xw, p)).collect::<Result<Vec<_>>>()?;
        let c = match &json.c {
            Some(c) => Some(c.iter().map(|p| Polynomial::from_json(&xy, p)).collect::<Result<Vec<_>>>()?),
            None => None,
        };
        let mut n = MalcevPresentation::new(json.name.clone().unwrap_or_else(|| "json".into()), json.class, f, g, c)?;
        if let Some(bp) = &json.bad_primes {
            n.set_bad_primes(bp.iter().copied());
        }
        let report = verify_presentation(&n, 10, 60, 0x5eed);
        if !report.all_passed() {
            return Err(Error::Verification(format!("presentation {} rejected: {}", n.name, report.failures().join("; "))));
        }
        Ok(n)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresentationJson {
    pub schema: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub h: usize,
    pub class: u32,
    pub f: Vec<PolyJson>,
    pub g: Vec<PolyJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<PolyJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bad_primes: Option<Vec<u64>>,
}

// ---- verification -------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckResult {
    pub law: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default)]
pub struct VerificationReport {
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn passed(&self, law: &str) -> Option<bool> {
        self.checks.iter().find(|c| c.law == law).map(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<String> {
        self.checks.iter().filter(|c| !c.passed).map(|c| format!("{}: {}", c.law, c.detail)).collect()
    }

    pub(crate) fn record(&mut self, law: &'static str, outcome: std::result::Result<(), String>) {
        let (passed, detail) = match outcome {
            Ok(()) => (true, String::new()),
            Err(d) => (false, d),
        };
        self.checks.push(CheckResult { law, passed, detail });
    }
}

pub(crate) fn random_element<R: Rng>(rng: &mut R, h: usize, bound: i64) -> GroupElement {
    GroupElement((0..h).map(|_| BigInt::from(rng.gen_range(-bound..=bound))).collect())
}

/// Check the group laws and the structural identities of the Mal'cev
/// polynomials on random integer coordinates in `[-bound, bound]^h`.
pub fn verify_presentation(n: &MalcevPresentation, bound: i64, samples: usize, seed: u64) -> VerificationReport {
    let h = n.hirsch_length();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = VerificationReport::default();
    let mut integrality: std::result::Result<(), String> = Ok(());
    let id = GroupElement::identity(h);

    // Runs one sampled law; integrality errors are collected separately.
    macro_rules! law {
        ($name:expr, $body:expr) => {{
            let mut outcome: std::result::Result<(), String> = Ok(());
            for _ in 0..samples {
                let r: Result<Option<String>> = $body(&mut rng);
                match r {
                    Ok(None) => {}
                    Ok(Some(msg)) => {
                        outcome = Err(msg);
                        break;
                    }
                    Err(e) => {
                        if integrality.is_ok() {
                            integrality = Err(e.to_string());
                        }
                        outcome = Err(format!("evaluation failed: {e}"));
                        break;
                    }
                }
            }
            report.record($name, outcome);
        }};
    }

    let xy = xy_vars(h);
    let f1 = &Polynomial::var(&xy, 0) + &Polynomial::var(&xy, h);
    report.record(
        "f1_is_sum",
        if n.f[0] == f1 { Ok(()) } else { Err(format!("f_1 = {}", n.f[0])) },
    );

    law!("identity", |rng: &mut ChaCha8Rng| -> Result<Option<String>> {
        let a = random_element(rng, h, bound);
        let l = n.multiply(&a, &id)?;
        let r = n.multiply(&id, &a)?;
        Ok((l != a || r != a).then(|| format!("a = {:?}", a.0)))
    });
    law!("inverse", |rng: &mut ChaCha8Rng| -> Result<Option<String>> {
        let a = random_element(rng, h, bound);
        let ai = n.inverse(&a)?;
        let p = n.multiply(&a, &ai)?;
        Ok((!p.is_identity()).then(|| format!("a = {:?}", a.0)))
    });
    law!("associativity", |rng: &mut ChaCha8Rng| -> Result<Option<String>> {
        let a = random_element(rng, h, bound);
        let b = random_element(rng, h, bound);
        let c = random_element(rng, h, bound);
        let l = n.multiply(&n.multiply(&a, &b)?, &c)?;
        let r = n.multiply(&a, &n.multiply(&b, &c)?)?;
        Ok((l != r).then(|| format!("a = {:?}, b = {:?}, c = {:?}", a.0, b.0, c.0)))
    });
    law!("power_additivity", |rng: &mut ChaCha8Rng| -> Result<Option<String>> {
        let a = random_element(rng, h, bound);
        let w1 = BigInt::from(rng.gen_range(-bound..=bound));
        let w2 = BigInt::from(rng.gen_range(-bound..=bound));
        let l = n.power(&a, &(&w1 + &w2))?;
        let r = n.multiply(&n.power(&a, &w1)?, &n.power(&a, &w2)?)?;
        let zero = n.power(&a, &BigInt::zero())?;
        let one = n.power(&a, &BigInt::one())?;
        Ok((l != r || !zero.is_identity() || one != a).then(|| format!("a = {:?}, w = {w1}, {w2}", a.0)))
    });
    law!("commutator_consistency", |rng: &mut ChaCha8Rng| -> Result<Option<String>> {
        let a = random_element(rng, h, bound);
        let b = random_element(rng, h, bound);
        let l = n.commutator(&a, &b)?;
        let r = n.commutator_by_products(&a, &b)?;
        Ok((l != r).then(|| format!("a = {:?}, b = {:?}", a.0, b.0)))
    });
    law!("commutator_vanishing", |rng: &mut ChaCha8Rng| -> Result<Option<String>> {
        let i = rng.gen_range(0..h);
        let j = rng.gen_range(0..h);
        let mut a = random_element(rng, h, bound);
        let mut b = random_element(rng, h, bound);
        a.0.iter_mut().take(i).for_each(|x| *x = BigInt::zero());
        b.0.iter_mut().take(j).for_each(|x| *x = BigInt::zero());
        let c = n.commutator(&a, &b)?;
        let upto = i.max(j) + 1;
        Ok(c.0.iter().take(upto).any(|x| !x.is_zero()).then(|| format!("a = {:?}, b = {:?}", a.0, b.0)))
    });
    law!("leading_power", |rng: &mut ChaCha8Rng| -> Result<Option<String>> {
        let i = rng.gen_range(0..h);
        let mut a = random_element(rng, h, bound);
        a.0.iter_mut().take(i).for_each(|x| *x = BigInt::zero());
        let w = BigInt::from(rng.gen_range(-bound..=bound));
        let p = n.power(&a, &w)?;
        let ok = p.0.iter().take(i).all(Zero::is_zero) && p.0[i] == &a.0[i] * &w;
        Ok((!ok).then(|| format!("a = {:?}, w = {w}", a.0)))
    });
    report.record("integrality", integrality);
    report
}

// ---- catalog ----------------------------------------------------------------

fn xy_var(h: usize, block: usize, i: usize) -> Polynomial {
    Polynomial::var(&xy_vars(h), block * h + i)
}

/// `Z^h`: `f = X + Y`, `g = W X`, `c = 0`.
pub fn abelian(h: usize) -> Result<MalcevPresentation> {
    if h == 0 {
        return Err(Error::Usage("abelian group needs h >= 1".into()));
    }
    let xw = xw_vars(h);
    let f = (0..h).map(|i| &xy_var(h, 0, i) + &xy_var(h, 1, i)).collect();
    let g = (0..h).map(|i| &Polynomial::var(&xw, i) * &Polynomial::var(&xw, h)).collect();
    let c = (0..h).map(|_| Polynomial::zero(&xy_vars(h))).collect();
    MalcevPresentation::new(format!("abelian:{h}"), 1, f, g, Some(c))
}

/// The discrete Heisenberg group with `x3 = [x1, x2] = x1^-1 x2^-1 x1 x2`.
///
/// In the unitriangular model `x1 = I + E12`, `x2 = I + E23`,
/// `x3 = I + E13`, coordinates `(a1, a2, a3)` correspond to the matrix with
/// entries `(a1, a2, a3 + a1 a2)`.
pub fn heisenberg() -> Result<MalcevPresentation> {
    let h = 3;
    let xy = xy_vars(h);
    let xw = xw_vars(h);
    let x = |i| Polynomial::var(&xy, i);
    let y = |i| Polynomial::var(&xy, h + i);
    let f = vec![&x(0) + &y(0), &x(1) + &y(1), &(&x(2) + &y(2)) - &(&x(1) * &y(0))];
    let w = Polynomial::var(&xw, h);
    let xa = |i| Polynomial::var(&xw, i);
    let binom = (&w * &w - w.clone()).scale(&ratio(1, 2));
    let g = vec![&xa(0) * &w, &xa(1) * &w, &(&xa(2) * &w) - &(&binom * &(&xa(0) * &xa(1)))];
    let c = vec![
        Polynomial::zero(&xy),
        Polynomial::zero(&xy),
        &(&x(0) * &y(1)) - &(&x(1) * &y(0)),
    ];
    MalcevPresentation::new("heisenberg", 2, f, g, Some(c))
}

/// Block product `N1 x N2` with the basis of `N1` first.
pub fn direct_product(a: &MalcevPresentation, b: &MalcevPresentation) -> Result<MalcevPresentation> {
    let (ha, hb) = (a.h, b.h);
    let h = ha + hb;
    let xy = xy_vars(h);
    let xw = xw_vars(h);
    let map_xy = |offset: usize, hh: usize| -> Vec<usize> {
        (0..2 * hh).map(|i| if i < hh { offset + i } else { h + offset + i - hh }).collect()
    };
    let map_xw = |offset: usize, hh: usize| -> Vec<usize> {
        (0..=hh).map(|i| if i < hh { offset + i } else { h }).collect()
    };
    let mut f = Vec::with_capacity(h);
    let mut g = Vec::with_capacity(h);
    let mut c = Vec::with_capacity(h);
    for (n, offset) in [(a, 0), (b, ha)] {
        let mxy = map_xy(offset, n.h);
        let mxw = map_xw(offset, n.h);
        for k in 0..n.h {
            f.push(n.f[k].embed(&xy, &mxy)?);
            g.push(n.g[k].embed(&xw, &mxw)?);
            c.push(n.c[k].embed(&xy, &mxy)?);
        }
    }
    let mut out =
        MalcevPresentation::new(format!("product({},{})", a.name, b.name), a.class.max(b.class), f, g, Some(c))?;
    out.bad_primes = a.bad_primes.union(&b.bad_primes).copied().collect();
    Ok(out)
}

/// The subgroup `{x^a : d_i | a_i}` presented on the rescaled basis
/// `y_i = x_i^{d_i}`: `f'(X, Y) = D^-1 f(D X, D Y)` and likewise for `g`.
/// The result is verified; rescalings that are not subgroups are refused.
pub fn scaled(n: &MalcevPresentation, d: &[i64]) -> Result<MalcevPresentation> {
    let h = n.h;
    if d.len() != h || d.iter().any(|&x| x <= 0) {
        return Err(Error::Usage(format!("scaling needs {h} positive factors")));
    }
    let xy = xy_vars(h);
    let xw = xw_vars(h);
    let sub_xy: Vec<Polynomial> = (0..2 * h).map(|i| Polynomial::var(&xy, i).scale(&rat(d[i % h]))).collect();
    let sub_xw: Vec<Polynomial> =
        (0..=h).map(|i| if i < h { Polynomial::var(&xw, i).scale(&rat(d[i])) } else { Polynomial::var(&xw, h) }).collect();
    let inv = |k: usize| ratio(1, d[k]);
    let f = (0..h).map(|k| Ok(n.f[k].compose_into(&xy, &sub_xy)?.scale(&inv(k)))).collect::<Result<Vec<_>>>()?;
    let g = (0..h).map(|k| Ok(n.g[k].compose_into(&xw, &sub_xw)?.scale(&inv(k)))).collect::<Result<Vec<_>>>()?;
    let c = (0..h).map(|k| Ok(n.c[k].compose_into(&xy, &sub_xy)?.scale(&inv(k)))).collect::<Result<Vec<_>>>()?;
    let label = d.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    let out = MalcevPresentation::new(format!("scaled({};{})", n.name, label), n.class, f, g, Some(c))?;
    let report = verify_presentation(&out, 10, 60, 7);
    if !report.all_passed() {
        return Err(Error::Verification(format!("rescaling is not a subgroup: {}", report.failures().join("; "))));
    }
    Ok(out)
}

/// Parse a catalog name: `abelian:H`, `heisenberg`, `product(A,B)`,
/// `scaled(A;d1,...,dh)`.
pub fn catalog_make(spec: &str) -> Result<MalcevPresentation> {
    let s = spec.trim();
    let n = if let Some(h) = s.strip_prefix("abelian:") {
        let h: usize = h.trim().parse().map_err(|_| Error::Usage(format!("bad rank in {s:?}")))?;
        abelian(h)?
    } else if s == "heisenberg" {
        heisenberg()?
    } else if let Some(inner) = s.strip_prefix("product(").and_then(|r| r.strip_suffix(')')) {
        let (a, b) = split_top_level(inner, ',').ok_or_else(|| Error::Usage(format!("bad product {s:?}")))?;
        direct_product(&catalog_make(a)?, &catalog_make(b)?)?
    } else if let Some(inner) = s.strip_prefix("scaled(").and_then(|r| r.strip_suffix(')')) {
        let (a, ds) = split_top_level(inner, ';').ok_or_else(|| Error::Usage(format!("bad scaling {s:?}")))?;
        let ds = ds
            .split(',')
            .map(|x| x.trim().parse::<i64>().map_err(|_| Error::Usage(format!("bad factor in {s:?}"))))
            .collect::<Result<Vec<_>>>()?;
        return scaled(&catalog_make(a)?, &ds);
    } else {
        return Err(Error::Usage(format!("unknown catalog group {s:?}")));
    };
    let report = verify_presentation(&n, 10, 60, 11);
    if !report.all_passed() {
        return Err(Error::Internal(format!("catalog entry {s} fails verification: {:?}", report.failures())));
    }
    Ok(n)
}

/// Split at the first `sep` not nested in parentheses.
pub(crate) fn split_top_level(s: &str, sep: char) -> Option<(&str, &str)> {
    let mut depth = 0i32;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            c if c == sep && depth == 0 => return Some((&s[..i], &s[i + 1..])),
            _ => {}
        }
    }
    None
}

pub const CATALOG_NAMES: &[&str] = &["abelian:H", "heisenberg", "product(A,B)", "scaled(A;d1,...,dh)"];

#[cfg(test)]
mod tests {
    use super::*;

    /// 3x3 upper unitriangular matrices as (e12, e23, e13).
    fn mat_mul(a: (i64, i64, i64), b: (i64, i64, i64)) -> (i64, i64, i64) {
        (a.0 + b.0, a.1 + b.1, a.2 + b.2 + a.0 * b.1)
    }

    fn coords_to_mat(a: &GroupElement) -> (i64, i64, i64) {
        let v: Vec<i64> = a.0.iter().map(|x| i64::try_from(x).unwrap()).collect();
        (v[0], v[1], v[2] + v[0] * v[1])
    }

    #[test]
    fn abelian_products() {
        let n = abelian(2).unwrap();
        let p = n.multiply(&GroupElement::from_i64(&[1, 2]), &GroupElement::from_i64(&[3, 4])).unwrap();
        assert_eq!(p, GroupElement::from_i64(&[4, 6]));
        let a = GroupElement::from_i64(&[5, -3]);
        assert_eq!(n.multiply(&a, &GroupElement::identity(2)).unwrap(), a);
        assert!(n.commutator(&a, &GroupElement::from_i64(&[2, 9])).unwrap().is_identity());
        assert_eq!(n.power(&a, &BigInt::from(4)).unwrap(), GroupElement::from_i64(&[20, -12]));
    }

    #[test]
    fn heisenberg_generators_follow_the_matrix_model() {
        let n = heisenberg().unwrap();
        let x1 = GroupElement::from_i64(&[1, 0, 0]);
        let x2 = GroupElement::from_i64(&[0, 1, 0]);
        assert_eq!(n.multiply(&x1, &x2).unwrap(), GroupElement::from_i64(&[1, 1, 0]));
        assert_eq!(n.multiply(&x2, &x1).unwrap(), GroupElement::from_i64(&[1, 1, -1]));
        assert_eq!(n.commutator(&x1, &x2).unwrap(), GroupElement::from_i64(&[0, 0, 1]));
        let a = GroupElement::from_i64(&[2, -7, 3]);
        assert!(n.commutator(&a, &a).unwrap().is_identity());
    }

    #[test]
    fn heisenberg_matches_matrices_on_random_products() {
        let n = heisenberg().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let a = random_element(&mut rng, 3, 10);
            let b = random_element(&mut rng, 3, 10);
            let p = n.multiply(&a, &b).unwrap();
            assert_eq!(coords_to_mat(&p), mat_mul(coords_to_mat(&a), coords_to_mat(&b)));
        }
    }

    #[test]
    fn power_agrees_with_repeated_multiplication() {
        for n in [abelian(3).unwrap(), heisenberg().unwrap(), catalog_make("product(abelian:1,heisenberg)").unwrap()] {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            for _ in 0..20 {
                let a = random_element(&mut rng, n.hirsch_length(), 8);
                let cube = n.multiply(&n.multiply(&a, &a).unwrap(), &a).unwrap();
                assert_eq!(n.power(&a, &BigInt::from(3)).unwrap(), cube);
                assert!(n.power(&a, &BigInt::zero()).unwrap().is_identity());
                assert_eq!(n.power(&a, &BigInt::one()).unwrap(), a);
            }
        }
    }

    #[test]
    fn catalog_entries_verify() {
        for name in ["abelian:1", "abelian:3", "heisenberg", "product(abelian:1,heisenberg)", "scaled(abelian:2;2,1)"] {
            let n = catalog_make(name).unwrap();
            let r = verify_presentation(&n, 10, 200, 1);
            assert!(r.all_passed(), "{name}: {:?}", r.failures());
        }
        let p = catalog_make("product(abelian:1,heisenberg)").unwrap();
        assert_eq!(p.hirsch_length(), 4);
        assert_eq!(p.class(), 2);
        let a1 = catalog_make("abelian:1").unwrap();
        assert_eq!(a1.f()[0], &xy_var(1, 0, 0) + &xy_var(1, 1, 0));
        assert!(matches!(catalog_make("klein"), Err(Error::Usage(_))));
    }

    #[test]
    fn derived_commutator_matches_closed_form() {
        let n = heisenberg().unwrap();
        let derived = MalcevPresentation::new("h", 2, n.f().to_vec(), n.g().to_vec(), None).unwrap();
        assert_eq!(derived.c(), n.c());
    }

    #[test]
    fn abelian_is_commutative_heisenberg_is_not() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let ab = abelian(3).unwrap();
        for _ in 0..50 {
            let a = random_element(&mut rng, 3, 10);
            let b = random_element(&mut rng, 3, 10);
            assert_eq!(ab.multiply(&a, &b).unwrap(), ab.multiply(&b, &a).unwrap());
        }
        let he = heisenberg().unwrap();
        let (a, b) = (GroupElement::from_i64(&[1, 0, 0]), GroupElement::from_i64(&[0, 1, 0]));
        assert_ne!(he.multiply(&a, &b).unwrap(), he.multiply(&b, &a).unwrap());
    }

    #[test]
    fn perturbed_heisenberg_fails_associativity() {
        let n = heisenberg().unwrap();
        let mut f = n.f().to_vec();
        f[2] = &f[2] + &xy_var(3, 0, 0);
        let bad = MalcevPresentation::new("bad", 2, f, n.g().to_vec(), Some(n.c().to_vec())).unwrap();
        let r = verify_presentation(&bad, 10, 100, 5);
        assert_eq!(r.passed("associativity"), Some(false));
        assert!(!r.all_passed());
    }

    #[test]
    fn non_subgroup_rescaling_is_refused() {
        let h = heisenberg().unwrap();
        // {a1 even, a2 even, a3 in 8Z} is not closed: a2 b1 is only a multiple of 4
        assert!(scaled(&h, &[2, 2, 8]).is_err());
        let h2 = scaled(&h, &[2, 1, 1]).unwrap();
        assert_eq!(h2.commutator(&GroupElement::from_i64(&[1, 0, 0]), &GroupElement::from_i64(&[0, 1, 0])).unwrap(),
            GroupElement::from_i64(&[0, 0, 2]));
    }

    #[test]
    fn suffix_presentation_restricts_coordinates() {
        let n = heisenberg().unwrap();
        let s = n.suffix(1).unwrap();
        assert_eq!(s.hirsch_length(), 2);
        assert!(verify_presentation(&s, 10, 50, 2).all_passed());
        let p = s.multiply(&GroupElement::from_i64(&[3, 4]), &GroupElement::from_i64(&[1, 1])).unwrap();
        assert_eq!(p, GroupElement::from_i64(&[4, 5]));
    }

    #[test]
    fn json_round_trip_and_loader_refusal() {
        let n = heisenberg().unwrap();
        let j = n.to_json();
        let text = serde_json::to_string(&j).unwrap();
        let back = MalcevPresentation::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back.f(), n.f());
        assert_eq!(back.g(), n.g());

        let mut bad = j.clone();
        bad.f[2].push(crate::polyring::TermJson { exponents: vec![1, 0, 0, 0, 0, 0], coeff: "1/1".into() });
        assert!(matches!(MalcevPresentation::from_json(&bad), Err(Error::Verification(_))));
    }

    #[test]
    fn denominator_primes_of_heisenberg() {
        let n = heisenberg().unwrap();
        assert!(n.bad_primes().is_empty());
        assert_eq!(n.denominator_primes().into_iter().collect::<Vec<_>>(), vec![2]);
    }

    #[test]
    fn arity_mismatch_is_structural() {
        let n = abelian(2).unwrap();
        let r = n.multiply(&GroupElement::from_i64(&[1]), &GroupElement::from_i64(&[1, 2]));
        assert!(matches!(r, Err(Error::Structural(_))));
    }
}
