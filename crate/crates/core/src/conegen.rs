//! Cone condition systems: membership conditions from the back-substitution
//! algorithm, the good-basis recursion over suffix groups, the relative
//! conditions for finite extensions, and cone integral data.
//!
//! A condition `(num, den)` holds at a point `x` iff `v_p(num(x)) >= v_p(den(x))`;
//! `den` is always a monic monomial in the diagonal variables `T_ii`.

use std::collections::{BTreeSet, HashMap};

use num_traits::{One, Signed};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extension::{structure_words, SubgroupOfF, VirtuallyTauGroup};
use crate::malcev::{GroupElement, MalcevPresentation};
use crate::polyring::{vars, Monomial, PolyJson, Polynomial, Rational, Vars};
use crate::Variant;

// ---- variable layouts ---------------------------------------------------------

fn t_name(h: usize, i: usize, j: usize) -> String {
    if h < 10 {
        format!("T{}{}", i + 1, j + 1)
    } else {
        format!("T{}_{}", i + 1, j + 1)
    }
}

/// Names of the upper triangular entries, row by row.
pub fn t_names(h: usize) -> Vec<String> {
    (0..h).flat_map(|i| (i..h).map(move |j| t_name(h, i, j))).collect()
}

/// Position of `T_ij` (0-based, `i <= j`) in [`t_names`].
pub fn t_index(h: usize, i: usize, j: usize) -> usize {
    debug_assert!(i <= j && j < h);
    i * h - i * i.saturating_sub(1) / 2 + j - i
}

/// `T` variables followed by `Z1..Zh`.
pub fn tz_vars(h: usize) -> Vars {
    let mut names = t_names(h);
    names.extend((1..=h).map(|k| format!("Z{k}")));
    vars(&names)
}

fn t_row(ring: &Vars, h: usize, offset: usize, i: usize) -> Vec<Polynomial> {
    (0..h)
        .map(|j| if j < i { Polynomial::zero(ring) } else { Polynomial::var(ring, offset + t_index(h, i, j)) })
        .collect()
}

fn diagonal_indices(h: usize) -> Vec<usize> {
    (0..h).map(|i| t_index(h, i, i)).collect()
}

fn const_tuple(ring: &Vars, a: &GroupElement) -> Vec<Polynomial> {
    a.0.iter().map(|x| Polynomial::constant(ring, Rational::from_integer(x.clone()))).collect()
}

// ---- conditions ---------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConeCondition {
    pub num: Polynomial,
    pub den: Polynomial,
}

impl ConeCondition {
    /// The denominator as (monomial, coefficient), if it has that shape.
    pub fn den_monomial(&self) -> Option<(Monomial, Rational)> {
        let mut terms = self.den.terms();
        let (m, c) = terms.next()?;
        if terms.next().is_some() {
            return None;
        }
        Some((m.clone(), c.clone()))
    }

    pub fn vars(&self) -> &Vars {
        self.num.vars()
    }

    /// Move into `target` by substituting `subst` for this ring's variables.
    fn substitute(&self, target: &Vars, subst: &[Polynomial]) -> Result<Option<ConeCondition>> {
        let num = self.num.compose_into(target, subst)?;
        let den = self.den.compose_into(target, subst)?;
        let cond = ConeCondition { num, den };
        let (m, c) = cond.den_monomial().ok_or_else(|| Error::Internal("denominator stopped being a monomial".into()))?;
        Ok(normalize(cond.num, m, &c))
    }
}

fn normalize(num: Polynomial, mut den: Monomial, c: &Rational) -> Option<ConeCondition> {
    if num.is_zero() {
        return None;
    }
    let content = num.monomial_content();
    let common: Monomial = content.iter().zip(&den).map(|(a, b)| (*a).min(*b)).collect();
    let mut num = num.div_monomial(&common);
    for (d, k) in den.iter_mut().zip(&common) {
        *d -= k;
    }
    num = num.scale(&(Rational::one() / c));
    if num.leading_coeff().is_some_and(|l| l.is_negative()) {
        num = -&num;
    }
    let den = Polynomial::monomial(num.vars(), den, Rational::one());
    Some(ConeCondition { num, den })
}

fn dedupe(conds: Vec<ConeCondition>) -> Vec<ConeCondition> {
    let mut seen = BTreeSet::new();
    conds.into_iter().filter(|c| seen.insert((c.num.to_json(), c.den.to_json()))).collect()
}

// ---- membership ---------------------------------------------------------------

/// Back-substitution conditions for `x^z in closure<x^{t_1}, ..., x^{t_h}>`
/// over `T, Z` ([`tz_vars`]), one per coordinate, zero numerators dropped.
pub fn membership_conditions(n: &MalcevPresentation) -> Result<Vec<ConeCondition>> {
    let h = n.hirsch_length();
    let nt = h * (h + 1) / 2;
    let mut names = t_names(h);
    names.extend((1..=h).map(|k| format!("Z{k}")));
    names.extend((1..=h).map(|k| format!("W{k}")));
    let ring = vars(&names);
    let z_off = nt;
    let w_off = nt + h;

    let zero_below = |v: &[Polynomial], i: usize| -> Vec<Polynomial> {
        v.iter().enumerate().map(|(k, p)| if k < i { Polynomial::zero(&ring) } else { p.clone() }).collect()
    };

    // k_1 = Z, k_i = f(g(g^i(T_{i-1}, W_{i-1}), -1), k_{i-1}^i)
    let mut ks: Vec<Vec<Polynomial>> = vec![(0..h).map(|k| Polynomial::var(&ring, z_off + k)).collect()];
    for i in 1..h {
        let row = t_row(&ring, h, 0, i - 1);
        let pw = n.pow_sym(&row, &Polynomial::var(&ring, w_off + i - 1))?;
        let inv = n.inv_sym(&zero_below(&pw, i))?;
        let next = n.mul_sym(&inv, &zero_below(&ks[i - 1], i))?;
        ks.push(next);
    }

    // v_i = k_ii(W_j <- v_j) / T_ii, carried as (numerator, monomial denominator)
    let mut fractions: Vec<(Polynomial, Monomial)> = Vec::with_capacity(h);
    for i in 0..h {
        let k = &ks[i][i];
        let degs: Vec<u32> = (0..i).map(|j| k.degree_in(w_off + j)).collect();
        let mut num = Polynomial::zero(&ring);
        for (mono, c) in k.terms() {
            if mono[w_off + i..].iter().any(|&e| e > 0) {
                return Err(Error::Internal(format!("k_{} mentions a later W", i + 1)));
            }
            let mut term = Polynomial::monomial(&ring, mono_without_w(mono, w_off), c.clone());
            for j in 0..i {
                let e = mono[w_off + j];
                let (fnum, fden) = &fractions[j];
                if e > 0 {
                    term = &term * &fnum.pow(e);
                }
                let spare: Monomial = fden.iter().map(|d| d * (degs[j] - e)).collect();
                term = term.mul_monomial(&spare);
            }
            num = &num + &term;
        }
        let mut den = vec![0u32; ring.len()];
        for j in 0..i {
            for (d, x) in den.iter_mut().zip(&fractions[j].1) {
                *d += x * degs[j];
            }
        }
        den[t_index(h, i, i)] += 1;
        let content = num.monomial_content();
        let common: Monomial = if num.is_zero() { vec![0; ring.len()] } else { content.iter().zip(&den).map(|(a, b)| (*a).min(*b)).collect() };
        let num = num.div_monomial(&common);
        for (d, k) in den.iter_mut().zip(&common) {
            *d -= k;
        }
        if den.iter().enumerate().any(|(v, &e)| e > 0 && !diagonal_indices(h).contains(&v)) {
            return Err(Error::Internal(format!("denominator of v_{} is not a diagonal monomial", i + 1)));
        }
        fractions.push((num, den));
    }

    let target = tz_vars(h);
    let subst: Vec<Polynomial> = (0..ring.len())
        .map(|v| if v < w_off { Polynomial::var(&target, v) } else { Polynomial::zero(&target) })
        .collect();
    let mut out = vec![];
    for (num, den) in fractions {
        if num.is_zero() {
            continue;
        }
        let num = num.compose_into(&target, &subst)?;
        let den = den[..w_off].to_vec();
        if let Some(c) = normalize(num, den, &Rational::one()) {
            out.push(c);
        }
    }
    Ok(out)
}

fn mono_without_w(m: &Monomial, w_off: usize) -> Monomial {
    m.iter().enumerate().map(|(v, &e)| if v >= w_off { 0 } else { e }).collect()
}

/// Membership conditions of `n` moved into `target` with `T_ij <- t(i, j)`
/// and `Z <- z`.
fn apply_membership(
    conds: &[ConeCondition],
    h: usize,
    target: &Vars,
    t: &dyn Fn(usize, usize) -> Polynomial,
    z: &[Polynomial],
) -> Result<Vec<ConeCondition>> {
    let mut subst: Vec<Polynomial> = Vec::with_capacity(h * (h + 1) / 2 + h);
    for i in 0..h {
        for j in i..h {
            subst.push(t(i, j));
        }
    }
    subst.extend(z.iter().cloned());
    let mut out = vec![];
    for c in conds {
        if let Some(c) = c.substitute(target, &subst)? {
            out.push(c);
        }
    }
    Ok(out)
}

// ---- good bases ---------------------------------------------------------------

struct SuffixCache<'a> {
    n: &'a MalcevPresentation,
    membership: HashMap<usize, (MalcevPresentation, Vec<ConeCondition>)>,
}

impl<'a> SuffixCache<'a> {
    fn get(&mut self, start: usize) -> Result<&(MalcevPresentation, Vec<ConeCondition>)> {
        if !self.membership.contains_key(&start) {
            let s = self.n.suffix(start)?;
            let m = membership_conditions(&s)?;
            self.membership.insert(start, (s, m));
        }
        Ok(&self.membership[&start])
    }
}

/// Conditions over `T^(start)` (ring of the suffix group at `start`) for
/// `t` to represent a good basis.
fn good_basis_at(cache: &mut SuffixCache<'_>, start: usize) -> Result<Vec<ConeCondition>> {
    let h_full = cache.n.hirsch_length();
    let h = h_full - start;
    let ring = vars(&t_names(h));
    if h == 1 {
        return Ok(vec![]);
    }
    let n = cache.get(start)?.0.clone();
    let inner = good_basis_at(cache, start + 1)?;
    let shift1: Vec<Polynomial> = (1..h).flat_map(|i| (i..h).map(move |j| (i, j))).map(|(i, j)| Polynomial::var(&ring, t_index(h, i, j))).collect();
    let mut out = vec![];
    for c in &inner {
        if let Some(c) = c.substitute(&ring, &shift1)? {
            out.push(c);
        }
    }
    let t1 = t_row(&ring, h, 0, 0);
    for j in 1..h {
        let z = n.comm_sym(&t1, &t_row(&ring, h, 0, j))?;
        if let Some(k) = (0..=j).find(|&k| !z[k].is_zero()) {
            return Err(Error::Structural(format!(
                "basis is not adapted to a central series: [x^t_1, x^t_{}] has coordinate {} = {}",
                j + 1,
                start + k + 1,
                z[k]
            )));
        }
        if j + 1 == h {
            continue;
        }
        let (_, mem) = cache.get(start + j + 1)?;
        let hs = h - j - 1;
        let t = |a: usize, b: usize| Polynomial::var(&ring, t_index(h, a + j + 1, b + j + 1));
        out.extend(apply_membership(mem, hs, &ring, &t, &z[j + 1..])?);
    }
    Ok(out)
}

/// Conditions on `T` for representing a good basis of an open subgroup
/// (`Subgroup`) or of an open normal subgroup (`Normal`).
pub fn good_basis_conditions(n: &MalcevPresentation, variant: Variant) -> Result<ConeConditionSystem> {
    let h = n.hirsch_length();
    let ring = vars(&t_names(h));
    let mut cache = SuffixCache { n, membership: HashMap::new() };
    let mut conds = good_basis_at(&mut cache, 0)?;
    if variant == Variant::Normal {
        let mem = cache.get(0)?.1.clone();
        let t = |a: usize, b: usize| Polynomial::var(&ring, t_index(h, a, b));
        for i in 0..h {
            let mut e = GroupElement::identity(h);
            e.0[i] = One::one();
            let e = const_tuple(&ring, &e);
            for j in 0..h {
                let z = n.comm_sym(&e, &t_row(&ring, h, 0, j))?;
                conds.extend(apply_membership(&mem, h, &ring, &t, &z)?);
            }
        }
    }
    Ok(ConeConditionSystem {
        name: n.name().to_string(),
        variant,
        h,
        k_members: vec![0],
        vars: ring,
        diagonals: diagonal_indices(h),
        conditions: dedupe(conds),
    })
}

// ---- relative conditions ------------------------------------------------------

/// Conditions on `(T, V)` describing the subgroups `A` of `G_p` with image
/// `K`, where `A` is the union of `g_f x^{v_f} B` over `f` in `K` and `t`
/// is a good basis of `B = A ∩ N_p`.
pub fn relative_conditions(v: &VirtuallyTauGroup, k: &SubgroupOfF, variant: Variant) -> Result<ConeConditionSystem> {
    let n = v.n();
    let h = n.hirsch_length();
    let fg = v.quotient();
    if k.members.first() != Some(&0) || k.members.iter().any(|&f| f >= fg.order()) {
        return Err(Error::Usage("K is not a subgroup of F".into()));
    }
    if variant == Variant::Normal && !k.normal {
        return Err(Error::Usage("the normal variant needs K normal in F".into()));
    }
    let rows: Vec<usize> = k.nontrivial().collect();
    let nt = h * (h + 1) / 2;
    let mut names = t_names(h);
    for &f in &rows {
        names.extend((1..=h).map(|c| format!("V{f}_{c}")));
    }
    let ring = vars(&names);
    let base = good_basis_conditions(n, variant)?;
    let t_subst: Vec<Polynomial> = (0..nt).map(|i| Polynomial::var(&ring, i)).collect();
    let mut conds = vec![];
    for c in &base.conditions {
        if let Some(c) = c.substitute(&ring, &t_subst)? {
            conds.push(c);
        }
    }

    let words = structure_words(v)?;
    let mem = membership_conditions(n)?;
    let t = |a: usize, b: usize| Polynomial::var(&ring, t_index(h, a, b));
    let zero = vec![Polynomial::zero(&ring); h];
    let vrow = |f: usize| -> Vec<Polynomial> {
        match rows.iter().position(|&r| r == f) {
            Some(r) => (0..h).map(|c| Polynomial::var(&ring, nt + r * h + c)).collect(),
            None => zero.clone(),
        }
    };
    let p_of = |f: usize, arg: &[Polynomial]| -> Result<Vec<Polynomial>> {
        words.p[f].iter().map(|q| q.compose_into(&ring, arg)).collect()
    };
    let cst = |a: &GroupElement| const_tuple(&ring, a);
    let inv = |a: &[Polynomial]| n.inv_sym(a);
    let mul = |a: &[Polynomial], b: &[Polynomial]| n.mul_sym(a, b);
    let add = |z: Vec<Polynomial>, conds: &mut Vec<ConeCondition>| -> Result<()> {
        conds.extend(apply_membership(&mem, h, &ring, &t, &z)?);
        Ok(())
    };

    // (1) B is normalised by g_f x^{v_f}
    for &f in &rows {
        let vf = vrow(f);
        for i in 0..h {
            let z = mul(&mul(&inv(&vf)?, &p_of(f, &t_row(&ring, h, 0, i))?)?, &vf)?;
            add(z, &mut conds)?;
        }
    }
    // (2) closure under products, including pairs with ff' = 1
    for &f in &rows {
        for &f2 in &rows {
            let ff = fg.mul(f, f2);
            let z = mul(&inv(&vrow(ff))?, &cst(&words.n[f][f2]))?;
            let z = mul(&mul(&z, &p_of(f2, &vrow(f))?)?, &vrow(f2))?;
            add(z, &mut conds)?;
        }
    }
    if variant == Variant::Normal {
        // (5) B is stable under conjugation by every g_f
        for f in 1..fg.order() {
            for i in 0..h {
                add(p_of(f, &t_row(&ring, h, 0, i))?, &mut conds)?;
            }
        }
        // (6) conjugating g_f x^{v_f} by x_i^{-1} stays in its coset
        for &f in &rows {
            let vf = vrow(f);
            for i in 0..h {
                let mut e = GroupElement::identity(h);
                e.0[i] = -num_bigint::BigInt::one();
                let z = mul(&cst(&words.l[f][i]), &mul(&vf, &cst(&e))?)?;
                add(mul(&inv(&vf)?, &z)?, &mut conds)?;
            }
        }
        // (7) g_f^{-1} g_{f'} x^{v_{f'}} g_f lies in g_{f''} x^{v_{f''}} B, f'' = f^{-1} f' f
        for f in 1..fg.order() {
            let finv = fg.inv(f);
            for &f2 in &rows {
                let f3 = fg.mul(fg.mul(finv, f2), f);
                let z = mul(&inv(&vrow(f3))?, &inv(&cst(&words.n[f][f3]))?)?;
                let z = mul(&mul(&z, &cst(&words.n[f2][f]))?, &p_of(f, &vrow(f2))?)?;
                add(z, &mut conds)?;
            }
        }
    }

    Ok(ConeConditionSystem {
        name: v.name().to_string(),
        variant,
        h,
        k_members: k.members.clone(),
        vars: ring,
        diagonals: diagonal_indices(h),
        conditions: dedupe(conds),
    })
}

// ---- systems and cone data ----------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConeConditionSystem {
    pub name: String,
    pub variant: Variant,
    pub h: usize,
    /// Members of `K` (just the identity for a τ-group).
    pub k_members: Vec<usize>,
    pub vars: Vars,
    /// Positions of `T_11..T_hh` in `vars`.
    pub diagonals: Vec<usize>,
    pub conditions: Vec<ConeCondition>,
}

impl ConeConditionSystem {
    pub fn k_order(&self) -> usize {
        self.k_members.len()
    }

    /// Constant part of the exponent of `|t_ii|` in the integrand.
    pub fn weights(&self) -> Vec<i64> {
        (1..=self.h).map(|i| -(i as i64) - self.k_order() as i64 + 1).collect()
    }

    pub fn normalization(&self) -> usize {
        self.h
    }

    pub fn shift(&self) -> i64 {
        (self.h + self.k_order() - 1) as i64
    }

    pub fn to_json(&self) -> ConeSystemJson {
        ConeSystemJson {
            schema: 1,
            name: self.name.clone(),
            variant: self.variant,
            h: self.h,
            k: self.k_members.clone(),
            variables: self.vars.iter().cloned().collect(),
            diagonals: self.diagonals.clone(),
            conditions: self.conditions.iter().map(|c| ConditionJson { num: c.num.to_json(), den: c.den.to_json() }).collect(),
            weights: self.weights(),
            normalization: self.normalization(),
            shift: self.shift(),
        }
    }

    /// Canonical text form; reloading and dumping again reproduces it byte for byte.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("system serializes")
    }

    pub fn from_json(j: &ConeSystemJson) -> Result<Self> {
        if j.schema != 1 {
            return Err(Error::Usage(format!("unsupported condition schema {}", j.schema)));
        }
        let ring = vars(&j.variables);
        if j.diagonals.len() != j.h || j.diagonals.iter().any(|&d| d >= ring.len()) {
            return Err(Error::Structural("diagonal positions do not match h".into()));
        }
        let conditions = j
            .conditions
            .iter()
            .map(|c| Ok(ConeCondition { num: Polynomial::from_json(&ring, &c.num)?, den: Polynomial::from_json(&ring, &c.den)? }))
            .collect::<Result<Vec<_>>>()?;
        let sys = ConeConditionSystem {
            name: j.name.clone(),
            variant: j.variant,
            h: j.h,
            k_members: j.k.clone(),
            vars: ring,
            diagonals: j.diagonals.clone(),
            conditions,
        };
        for c in &sys.conditions {
            let (m, _) = c.den_monomial().ok_or_else(|| Error::Structural("denominator is not a monomial".into()))?;
            if m.iter().enumerate().any(|(v, &e)| e > 0 && !sys.diagonals.contains(&v)) {
                return Err(Error::Structural("denominator mentions a non-diagonal variable".into()));
            }
        }
        if sys.weights() != j.weights || sys.shift() != j.shift || sys.normalization() != j.normalization {
            return Err(Error::Structural("weights, shift or normalization disagree with h and |K|".into()));
        }
        Ok(sys)
    }

    pub fn emit_cone_data(&self) -> ConeIntegralData {
        let h = self.h;
        let mut f0 = vec![0; self.vars.len()];
        let mut g0 = vec![0; self.vars.len()];
        for (i, &d) in self.diagonals.iter().enumerate() {
            f0[d] = 1;
            g0[d] = (h - i - 1) as u32;
        }
        let pairs = dedupe(self.conditions.iter().filter(|c| !c.num.is_zero()).cloned().collect())
            .into_iter()
            .map(|c| (c.den, c.num))
            .collect();
        ConeIntegralData {
            vars: self.vars.clone(),
            diagonals: self.diagonals.clone(),
            h,
            k_order: self.k_order(),
            f0: Polynomial::monomial(&self.vars, f0, Rational::one()),
            g0: Polynomial::monomial(&self.vars, g0, Rational::one()),
            pairs,
            shift: self.shift(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionJson {
    pub num: PolyJson,
    pub den: PolyJson,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConeSystemJson {
    pub schema: u32,
    pub name: String,
    pub variant: Variant,
    pub h: usize,
    pub k: Vec<usize>,
    pub variables: Vec<String>,
    pub diagonals: Vec<usize>,
    pub conditions: Vec<ConditionJson>,
    pub weights: Vec<i64>,
    pub normalization: usize,
    pub shift: i64,
}

/// `(f0, g0; (f_j, g_j))` with the integral taken over `v(f_j) <= v(g_j)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConeIntegralData {
    pub vars: Vars,
    pub diagonals: Vec<usize>,
    pub h: usize,
    pub k_order: usize,
    pub f0: Polynomial,
    pub g0: Polynomial,
    /// `(denominator, numerator)` of each condition.
    pub pairs: Vec<(Polynomial, Polynomial)>,
    pub shift: i64,
}

impl ConeIntegralData {
    /// `s - shift + (h - i) = s - i - |K| + 1` for every `i`.
    pub fn exponent_identity_holds(&self) -> bool {
        let k = self.k_order as i64;
        (0..self.h).all(|i| {
            let i1 = i as i64 + 1;
            let f0_exp = self.f0.degree_in(self.diagonals[i]) as i64;
            let g0_exp = self.g0.degree_in(self.diagonals[i]) as i64;
            f0_exp == 1 && -self.shift + g0_exp == -i1 - k + 1
        })
    }
}
