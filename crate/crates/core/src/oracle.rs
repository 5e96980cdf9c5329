//! Brute-force ground truth, independent of the cone machinery: subgroup
//! counts in finite quotients `G / K_e` (where `K_e` is the set of
//! coordinate vectors divisible by `p^e`), literal Hermite-normal-form
//! enumeration, and a direct p-adic membership solve.

use std::collections::{HashMap, HashSet};

use fixedbitset::FixedBitSet;
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::arith::{inv_mod, is_p_integral, is_prime, pow_u64, vp_int};
use crate::error::{Error, Result};
use crate::evaluator::{run_in_pool, CountSource, LocalSeries, Provenance};
use crate::extension::{SubgroupOfF, VirtuallyTauGroup};
use crate::malcev::{random_element, GroupElement, MalcevPresentation};
use crate::polyring::{vars, Polynomial, Rational, Vars};
use crate::Variant;

// ---- modular polynomials ------------------------------------------------------

/// A Mal'cev polynomial evaluated on residues mod `p^e`. Coefficient
/// denominators divisible by `p` are handled by working mod `p^{e+v}`
/// and dividing the (integral) value by `p^v` afterwards.
#[derive(Clone, Debug)]
struct ModPoly {
    terms: Vec<(u64, Vec<(usize, u32)>)>,
    full: u64,
    pv: u64,
    q: u64,
    unit_inv: u64,
}

impl ModPoly {
    fn new(poly: &Polynomial, p: u64, e: u32) -> Result<Self> {
        let (pint, d) = poly.clear_denominators();
        let v = vp_int(&d, p).unwrap();
        let full = (p as u128).checked_pow(e + v).filter(|&f| f < (1u128 << 62)).ok_or_else(|| {
            Error::Budget(format!("modulus {p}^{} exceeds the residue arithmetic", e + v))
        })? as u64;
        let pv = p.pow(v);
        let q = p.pow(e);
        let unit = &d / BigInt::from(pv);
        let unit_inv = inv_mod(&unit, &BigInt::from(q)).expect("unit part is invertible").to_u64().unwrap();
        let fullb = BigInt::from(full);
        let terms = pint
            .terms()
            .map(|(mono, c)| {
                let c = c.to_integer().mod_floor(&fullb).to_u64().unwrap();
                (c, mono.iter().enumerate().filter(|(_, &k)| k > 0).map(|(i, &k)| (i, k)).collect())
            })
            .collect();
        Ok(ModPoly { terms, full, pv, q, unit_inv })
    }

    fn eval(&self, x: &[u64]) -> u64 {
        let full = self.full as u128;
        let mut acc = 0u128;
        for (c, mono) in &self.terms {
            let mut t = *c as u128;
            for &(i, k) in mono {
                let xi = x[i] as u128 % full;
                for _ in 0..k {
                    t = t * xi % full;
                }
            }
            acc = (acc + t) % full;
        }
        debug_assert_eq!(acc % self.pv as u128, 0);
        let reduced = (acc / self.pv as u128) % self.q as u128;
        (reduced * self.unit_inv as u128 % self.q as u128) as u64
    }
}

/// Whether `P(X + p^e D) - P(X)` (one argument block perturbed at a time)
/// has every coefficient divisible by `p^e` once denominators are cleared.
fn congruence_holds(poly: &Polynomial, blocks: &[std::ops::Range<usize>], p: u64, e: u32) -> Result<bool> {
    let n = poly.nvars();
    let (pint, d) = poly.clear_denominators();
    let need = e + vp_int(&d, p).unwrap();
    let modulus = BigInt::from(p).pow(need);
    let pe = Rational::from_integer(BigInt::from(p).pow(e));
    for block in blocks {
        let mut names: Vec<String> = poly.vars().iter().cloned().collect();
        names.extend(block.clone().map(|i| format!("D{i}")));
        let ring: Vars = vars(&names);
        let subst: Vec<Polynomial> = (0..n)
            .map(|i| {
                let x = Polynomial::var(&ring, i);
                if block.contains(&i) {
                    &x + &Polynomial::var(&ring, n + i - block.start).scale(&pe)
                } else {
                    x
                }
            })
            .collect();
        let moved = pint.compose_into(&ring, &subst)?;
        let ident: Vec<Polynomial> = (0..n).map(|i| Polynomial::var(&ring, i)).collect();
        let diff = &moved - &pint.compose_into(&ring, &ident)?;
        if diff.terms().any(|(_, c)| !(c.to_integer() % &modulus).is_zero()) {
            return Ok(false);
        }
    }
    Ok(true)
}

// ---- finite quotients ---------------------------------------------------------

/// `G / K_e` with elements encoded as `f * p^{eh} + sum_i a_i p^{ei}`.
#[derive(Clone, Debug)]
pub struct FiniteQuotient {
    p: u64,
    e: u32,
    h: usize,
    q: u64,
    n_order: usize,
    group: VirtuallyTauGroup,
    mul: Vec<ModPoly>,
    inv: Vec<ModPoly>,
    sigma: Vec<Vec<ModPoly>>,
    psi: Vec<Vec<Vec<u64>>>,
}

pub fn finite_quotient(source: &VirtuallyTauGroup, p: u64, e: u32) -> Result<FiniteQuotient> {
    finite_quotient_bounded(source, p, e, 4_000_000)
}

fn invalid(p: u64, e: u32, reason: impl Into<String>) -> Error {
    Error::QuotientInvalid { p, e, reason: reason.into() }
}

pub fn finite_quotient_bounded(source: &VirtuallyTauGroup, p: u64, e: u32, max_order: usize) -> Result<FiniteQuotient> {
    if !is_prime(p) {
        return Err(Error::Usage(format!("{p} is not prime")));
    }
    if e == 0 {
        return Err(Error::Usage("quotient level must be at least 1".into()));
    }
    let n = source.n();
    let h = n.hirsch_length();
    let fo = source.quotient().order();
    let q = (p as u128).checked_pow(e).filter(|&q| q < (1u128 << 40)).ok_or_else(|| Error::Budget(format!("{p}^{e} is too large")))? as u64;
    let n_order = (q as u128).checked_pow(h as u32).filter(|&o| o * fo as u128 <= max_order as u128).ok_or_else(|| {
        Error::Budget(format!("quotient of order {fo} * {p}^{} exceeds the limit {max_order}", e as usize * h))
    })? as usize;

    for (i, f) in n.f().iter().enumerate() {
        if !congruence_holds(f, &[0..h, h..2 * h], p, e)? {
            return Err(invalid(p, e, format!("multiplication coordinate {} is not compatible with reduction", i + 1)));
        }
    }
    let xs = crate::malcev::x_vars(h);
    let mut inv_polys = vec![];
    for (i, g) in n.g().iter().enumerate() {
        let subst: Vec<Polynomial> = (0..h).map(|k| Polynomial::var(&xs, k)).chain(std::iter::once(Polynomial::int(&xs, -1))).collect();
        let ip = g.compose_into(&xs, &subst)?;
        if !congruence_holds(&ip, &[0..h], p, e)? {
            return Err(invalid(p, e, format!("inversion coordinate {} is not compatible with reduction", i + 1)));
        }
        inv_polys.push(ip);
    }
    let c = source.cocycle();
    for (f, s) in c.sigma.iter().enumerate() {
        for (i, sp) in s.iter().enumerate() {
            if !congruence_holds(sp, &[0..h], p, e)? {
                return Err(invalid(p, e, format!("sigma_{f} coordinate {} is not compatible with reduction", i + 1)));
            }
        }
    }
    let qb = BigInt::from(q);
    let reduce = |a: &GroupElement| -> Vec<u64> { a.0.iter().map(|x| x.mod_floor(&qb).to_u64().unwrap()).collect() };
    let quotient = FiniteQuotient {
        p,
        e,
        h,
        q,
        n_order,
        group: source.clone(),
        mul: n.f().iter().map(|f| ModPoly::new(f, p, e)).collect::<Result<_>>()?,
        inv: inv_polys.iter().map(|g| ModPoly::new(g, p, e)).collect::<Result<_>>()?,
        sigma: c.sigma.iter().map(|s| s.iter().map(|sp| ModPoly::new(sp, p, e)).collect::<Result<_>>()).collect::<Result<_>>()?,
        psi: c.psi.iter().map(|row| row.iter().map(reduce).collect()).collect(),
    };

    // reduction is a homomorphism on samples
    let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(p * 1000 + e as u64);
    for _ in 0..100 {
        let a = (random_element(&mut rng, h, 50), rng.gen_range(0..fo));
        let b = (random_element(&mut rng, h, 50), rng.gen_range(0..fo));
        let prod = source.ext_multiply(&a, &b)?;
        let lhs = quotient.encode(&reduce(&prod.0), prod.1);
        let rhs = quotient.mul(quotient.encode(&reduce(&a.0), a.1), quotient.encode(&reduce(&b.0), b.1));
        if lhs != rhs {
            return Err(invalid(p, e, "reduction is not multiplicative on sampled elements"));
        }
        let ia = source.ext_inverse(&a)?;
        if quotient.encode(&reduce(&ia.0), ia.1) != quotient.inv(quotient.encode(&reduce(&a.0), a.1)) {
            return Err(invalid(p, e, "reduction does not respect inverses on sampled elements"));
        }
    }
    Ok(quotient)
}

impl FiniteQuotient {
    pub fn order(&self) -> usize {
        self.n_order * self.group.quotient().order()
    }

    /// Order of the image of `N`, whose elements are the codes `0..n_order`.
    pub fn n_order(&self) -> usize {
        self.n_order
    }

    pub fn level(&self) -> u32 {
        self.e
    }

    pub fn encode(&self, a: &[u64], f: usize) -> usize {
        let mut idx = 0usize;
        for &x in a.iter().rev() {
            idx = idx * self.q as usize + (x % self.q) as usize;
        }
        f * self.n_order + idx
    }

    pub fn decode(&self, idx: usize) -> (Vec<u64>, usize) {
        let f = idx / self.n_order;
        let mut r = idx % self.n_order;
        let mut a = Vec::with_capacity(self.h);
        for _ in 0..self.h {
            a.push((r % self.q as usize) as u64);
            r /= self.q as usize;
        }
        (a, f)
    }

    pub fn reduce(&self, a: &GroupElement) -> Vec<u64> {
        let qb = BigInt::from(self.q);
        a.0.iter().map(|x| x.mod_floor(&qb).to_u64().unwrap()).collect()
    }

    fn n_mul(&self, a: &[u64], b: &[u64]) -> Vec<u64> {
        let xy: Vec<u64> = a.iter().chain(b).copied().collect();
        self.mul.iter().map(|m| m.eval(&xy)).collect()
    }

    fn n_inv(&self, a: &[u64]) -> Vec<u64> {
        self.inv.iter().map(|m| m.eval(a)).collect()
    }

    pub fn mul(&self, x: usize, y: usize) -> usize {
        let (a, f) = self.decode(x);
        let (b, f2) = self.decode(y);
        if f == 0 && f2 == 0 {
            return self.encode(&self.n_mul(&a, &b), 0);
        }
        let sb: Vec<u64> = self.sigma[f].iter().map(|s| s.eval(&b)).collect();
        let t = self.n_mul(&self.n_mul(&a, &sb), &self.psi[f][f2]);
        self.encode(&t, self.group.quotient().mul(f, f2))
    }

    pub fn inv(&self, x: usize) -> usize {
        let (a, f) = self.decode(x);
        if f == 0 {
            return self.encode(&self.n_inv(&a), 0);
        }
        let finv = self.group.quotient().inv(f);
        let g = self.encode(&self.n_inv(&self.psi[finv][f]), finv);
        self.mul(g, self.encode(&self.n_inv(&a), 0))
    }

    fn conj(&self, x: usize, by: usize) -> usize {
        self.mul(self.mul(self.inv(by), x), by)
    }

    fn pow(&self, x: usize, k: u64) -> usize {
        (0..k).fold(0, |acc, _| self.mul(acc, x))
    }

    /// Images of `x_1, ..., x_h`.
    pub fn n_generators(&self) -> Vec<usize> {
        (0..self.h)
            .map(|i| {
                let mut a = vec![0; self.h];
                a[i] = 1;
                self.encode(&a, 0)
            })
            .collect()
    }

    /// Images of the `x_i` and of every transversal element `g_f`.
    pub fn generators(&self) -> Vec<usize> {
        let mut g = self.n_generators();
        g.extend((1..self.group.quotient().order()).map(|f| self.encode(&vec![0; self.h], f)));
        g
    }

    /// The subgroup generated by `gens`.
    pub fn closure(&self, gens: &[usize]) -> Subgroup {
        let mut set = FixedBitSet::with_capacity(self.order());
        let mut elems = vec![0usize];
        set.insert(0);
        let mut i = 0;
        while i < elems.len() {
            let x = elems[i];
            for &g in gens {
                let y = self.mul(x, g);
                if !set.put(y) {
                    elems.push(y);
                }
            }
            i += 1;
        }
        Subgroup { set, elems, gens: gens.to_vec() }
    }

    fn normal_closure(&self, seeds: Vec<usize>, conj_by: &[usize]) -> Subgroup {
        let mut gens = seeds;
        loop {
            let s = self.closure(&gens);
            let mut added = false;
            for x in gens.clone() {
                for &c in conj_by {
                    let y = self.conj(x, c);
                    if !s.contains(y) && !gens.contains(&y) {
                        gens.push(y);
                        added = true;
                    }
                }
            }
            if !added {
                return s;
            }
        }
    }

    /// A small generating set of a subgroup, chosen greedily.
    fn regenerate(&self, elems: Vec<usize>, set: FixedBitSet) -> Subgroup {
        let mut gens = vec![];
        let mut cur = self.closure(&gens);
        for &x in &elems {
            if !cur.contains(x) {
                gens.push(x);
                cur = self.closure(&gens);
                if cur.len() == elems.len() {
                    break;
                }
            }
        }
        Subgroup { set, elems, gens }
    }

    /// Subgroups of index `p` in a p-subgroup `h`: kernels of the nonzero
    /// functionals on the Frattini quotient `h / h^p [h, h]`.
    pub fn maximal_subgroups(&self, h: &Subgroup) -> Vec<Subgroup> {
        let p = self.p;
        let mut seeds = vec![];
        for (i, &g) in h.gens.iter().enumerate() {
            seeds.push(self.pow(g, p));
            for &g2 in &h.gens[i + 1..] {
                seeds.push(self.mul(self.mul(self.inv(g), self.inv(g2)), self.mul(g, g2)));
            }
        }
        let phi = self.normal_closure(seeds, &h.gens);
        let mut basis: Vec<usize> = vec![];
        let mut span = phi.clone();
        for &g in &h.gens {
            if !span.contains(g) {
                basis.push(g);
                let gens: Vec<usize> = phi.gens.iter().chain(&basis).copied().collect();
                span = self.closure(&gens);
            }
        }
        let r = basis.len();
        if r == 0 {
            return vec![];
        }
        // label every element of h by its image in F_p^r
        let mut label: HashMap<usize, Vec<u64>> = HashMap::with_capacity(h.len());
        let total = p.pow(r as u32);
        for code in 0..total {
            let digits: Vec<u64> = (0..r).map(|i| code / p.pow(i as u32) % p).collect();
            let rep = basis.iter().zip(&digits).fold(0, |acc, (&b, &d)| self.mul(acc, self.pow(b, d)));
            for &x in &phi.elems {
                label.insert(self.mul(rep, x), digits.clone());
            }
        }
        debug_assert_eq!(label.len(), h.len());
        // one functional per hyperplane: first nonzero coefficient 1
        let mut out = vec![];
        for code in 1..total {
            let c: Vec<u64> = (0..r).map(|i| code / p.pow(i as u32) % p).collect();
            if c.iter().find(|&&x| x != 0) != Some(&1) {
                continue;
            }
            let mut set = FixedBitSet::with_capacity(self.order());
            let elems: Vec<usize> = h
                .elems
                .iter()
                .copied()
                .filter(|x| label[x].iter().zip(&c).map(|(a, b)| a * b).sum::<u64>() % p == 0)
                .collect();
            for &x in &elems {
                set.insert(x);
            }
            out.push(self.regenerate(elems, set));
        }
        out
    }

    /// Whether conjugation by each of `by` maps `s` into itself.
    fn normalized_by(&self, s: &Subgroup, by: &[usize]) -> bool {
        s.gens.iter().all(|&x| by.iter().all(|&c| s.contains(self.conj(x, c))))
    }

    /// Representatives of the left cosets `u B` of `b` in the image of `N`.
    fn transversal(&self, b: &Subgroup) -> Vec<usize> {
        let mut seen = FixedBitSet::with_capacity(self.n_order);
        let mut reps = vec![];
        for u in 0..self.n_order {
            if seen.contains(u) {
                continue;
            }
            reps.push(u);
            for &x in &b.elems {
                seen.insert(self.mul(u, x));
            }
        }
        reps
    }
}

#[derive(Clone, Debug)]
pub struct Subgroup {
    set: FixedBitSet,
    elems: Vec<usize>,
    gens: Vec<usize>,
}

impl Subgroup {
    pub fn contains(&self, x: usize) -> bool {
        self.set.contains(x)
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    pub fn elements(&self) -> &[usize] {
        &self.elems
    }
}

// ---- counting -----------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct OracleConfig {
    pub workers: Option<usize>,
    /// Largest quotient order the oracle will build.
    pub max_order: usize,
    /// Largest number of coset-representative tuples tried per subgroup.
    pub max_candidates: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { workers: None, max_order: 4_000_000, max_candidates: 50_000_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleOutcome {
    pub series: LocalSeries,
    /// Counts agree at levels `level` and `level + 1`.
    pub stable: bool,
    pub level: u32,
}

fn as_extension(source: CountSource<'_>) -> (VirtuallyTauGroup, SubgroupOfF) {
    match source {
        CountSource::Tau(n) => {
            let v = VirtuallyTauGroup::trivial(n.clone());
            (v, SubgroupOfF { members: vec![0], index: 1, normal: true })
        }
        CountSource::Relative(v, k) => (v.clone(), k.clone()),
    }
}

/// Subgroups `A` of the quotient with image `K` and `[pi^{-1}(K) : A] = p^k`,
/// counted for `k <= kmax`.
pub fn counts_at_level(
    v: &VirtuallyTauGroup,
    k: &SubgroupOfF,
    variant: Variant,
    p: u64,
    kmax: u32,
    e: u32,
    cfg: &OracleConfig,
) -> Result<Vec<u128>> {
    if variant == Variant::Normal && !k.normal {
        return Err(Error::Usage("the normal variant needs K normal in F".into()));
    }
    let q = finite_quotient_bounded(v, p, e, cfg.max_order)?;
    let fg = v.quotient();
    let n_gens = q.n_generators();
    let all_gens = q.generators();
    let top = q.closure(&n_gens);
    if top.len() != q.n_order() {
        return Err(Error::Internal("the x_i do not generate the quotient of N".into()));
    }
    let rows: Vec<usize> = k.nontrivial().collect();
    let g_f: Vec<usize> = (0..fg.order()).map(|f| q.encode(&vec![0; q.h], f)).collect();

    run_in_pool(cfg.workers, || -> Result<Vec<u128>> {
        let mut counts = vec![0u128; kmax as usize + 1];
        let mut level = vec![top];
        for kk in 0..=kmax {
            let per_b: Vec<Result<u128>> = level.par_iter().map(|b| count_over(&q, b, &rows, &g_f, &n_gens, &all_gens, variant, cfg)).collect();
            for r in per_b {
                counts[kk as usize] += r?;
            }
            if kk == kmax {
                break;
            }
            let children: Vec<Vec<Subgroup>> = level
                .par_iter()
                .map(|b| {
                    q.maximal_subgroups(b)
                        .into_iter()
                        .filter(|m| variant == Variant::Subgroup || q.normalized_by(m, &n_gens))
                        .collect()
                })
                .collect();
            let mut seen: HashSet<FixedBitSet> = HashSet::new();
            level = children.into_iter().flatten().filter(|m| seen.insert(m.set.clone())).collect();
        }
        Ok(counts)
    })?
}

/// Number of admissible `A` with `A ∩ N = b`: choices of coset
/// representatives `r_f in g_f b` (one per `f in K \ {1}`) such that the
/// union of the `r_f b` is closed under multiplication (and normal).
#[allow(clippy::too_many_arguments)]
fn count_over(
    q: &FiniteQuotient,
    b: &Subgroup,
    rows: &[usize],
    g_f: &[usize],
    n_gens: &[usize],
    all_gens: &[usize],
    variant: Variant,
    cfg: &OracleConfig,
) -> Result<u128> {
    let fg = q.group.quotient();
    if variant == Variant::Normal && !q.normalized_by(b, all_gens) {
        return Ok(0);
    }
    if rows.is_empty() {
        return Ok(1);
    }
    let reps = q.transversal(b);
    let total = (reps.len() as u128).checked_pow(rows.len() as u32).unwrap_or(u128::MAX);
    if total > cfg.max_candidates as u128 {
        return Err(Error::Budget(format!(
            "{} coset-representative tuples for a subgroup of index {} (limit {})",
            total,
            reps.len(),
            cfg.max_candidates
        )));
    }
    // per-row filter: r_f normalises b and, for the normal variant,
    // conjugates of r_f by N stay in r_f b
    let candidates: Vec<Vec<usize>> = rows
        .iter()
        .map(|&f| {
            reps.iter()
                .map(|&u| q.mul(g_f[f], u))
                .filter(|&r| b.gens.iter().all(|&x| b.contains(q.conj(x, r))))
                .filter(|&r| {
                    variant == Variant::Subgroup
                        || n_gens.iter().all(|&x| b.contains(q.mul(q.inv(r), q.conj(r, x))))
                })
                .collect()
        })
        .collect();
    let pos = |f: usize| rows.iter().position(|&r| r == f);
    let mut count = 0u128;
    let mut choice = vec![0usize; rows.len()];
    if candidates.iter().any(|c| c.is_empty()) {
        return Ok(0);
    }
    'outer: loop {
        let r = |f: usize| -> usize { pos(f).map_or(0, |i| candidates[i][choice[i]]) };
        let mut ok = true;
        'check: for &f in rows {
            for &f2 in rows {
                let prod = q.mul(r(f), r(f2));
                if !b.contains(q.mul(q.inv(r(fg.mul(f, f2))), prod)) {
                    ok = false;
                    break 'check;
                }
            }
            if variant == Variant::Normal {
                for &y in all_gens {
                    let c = q.conj(r(f), y);
                    let (_, f3) = q.decode(c);
                    if pos(f3).is_none() || !b.contains(q.mul(q.inv(r(f3)), c)) {
                        ok = false;
                        break 'check;
                    }
                }
            }
        }
        if ok {
            count += 1;
        }
        for i in 0..rows.len() {
            choice[i] += 1;
            if choice[i] < candidates[i].len() {
                continue 'outer;
            }
            choice[i] = 0;
        }
        break;
    }
    Ok(count)
}

/// Counts from the finite quotients at levels `e` and `e + 1`. The
/// default starting level is `max(kmax, 1)`: every subgroup of index
/// `p^k` in a pro-p group contains the `k`-th iterated Frattini subgroup,
/// which contains all coordinate vectors divisible by `p^k`. A level whose
/// reduction is not well defined is raised, up to four times.
pub fn oracle_counts(
    source: CountSource<'_>,
    variant: Variant,
    p: u64,
    kmax: u32,
    e: Option<u32>,
    cfg: &OracleConfig,
) -> Result<OracleOutcome> {
    let (v, k) = as_extension(source);
    let start = e.unwrap_or(kmax.max(1));
    let mut level = start;
    let first = loop {
        match counts_at_level(&v, &k, variant, p, kmax, level, cfg) {
            Ok(c) => break c,
            Err(Error::QuotientInvalid { .. }) if level < start + 4 => level += 1,
            Err(err) => return Err(err),
        }
    };
    let second = counts_at_level(&v, &k, variant, p, kmax, level + 1, cfg)?;
    Ok(OracleOutcome {
        series: LocalSeries::from_counts(p, &first, Provenance::Oracle),
        stable: first == second,
        level,
    })
}

// ---- lattices -----------------------------------------------------------------

/// Number of sublattices of `Z^h` of index `n`, by listing every upper
/// triangular Hermite normal form: diagonal `d_1 .. d_h` with product `n`
/// and entries above each `d_j` reduced mod `d_j`.
pub fn hnf_counts(h: usize, n: u64) -> Result<u64> {
    if h == 0 || n == 0 {
        return Err(Error::Usage("hnf_counts needs h >= 1 and n >= 1".into()));
    }
    fn diagonals(h: usize, n: u64, prefix: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if prefix.len() + 1 == h {
            prefix.push(n);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for d in 1..=n {
            if n % d == 0 {
                prefix.push(d);
                diagonals(h, n / d, prefix, out);
                prefix.pop();
            }
        }
    }
    let mut diags = vec![];
    diagonals(h, n, &mut vec![], &mut diags);
    let mut count = 0u64;
    for d in diags {
        // off-diagonal slots (i, j), i < j, each ranging over 0..d_j
        let ranges: Vec<u64> = (0..h).flat_map(|j| (0..j).map(move |_| j)).map(|j| d[j]).collect();
        let total: u64 = ranges.iter().product();
        if total > 50_000_000 {
            return Err(Error::Budget(format!("{total} HNF matrices for one diagonal")));
        }
        let mut entry = vec![0u64; ranges.len()];
        loop {
            count += 1;
            let mut i = 0;
            while i < entry.len() {
                entry[i] += 1;
                if entry[i] < ranges[i] {
                    break;
                }
                entry[i] = 0;
                i += 1;
            }
            if i == entry.len() {
                break;
            }
        }
    }
    Ok(count)
}

// ---- membership ---------------------------------------------------------------

fn rat_rows(t: &[Vec<BigInt>]) -> Vec<Vec<Rational>> {
    t.iter().map(|r| r.iter().cloned().map(Rational::from_integer).collect()).collect()
}

fn too_big(v: &[Rational], bits: u64) -> bool {
    v.iter().any(|x| x.numer().bits() > bits || x.denom().bits() > bits)
}

/// Decide `x^z in closure<x^{t_1}, ..., x^{t_h}>` in `N_p` by peeling
/// off `(x^{t_i})^{w_i}` with `w_i = z_i / t_ii`, which must be p-integral.
/// Arithmetic is exact over the rationals; `precision` bounds the bit size
/// of intermediate numerators and denominators.
pub fn membership_oracle(n: &MalcevPresentation, t: &[Vec<BigInt>], z: &[BigInt], p: u64, precision: u64) -> Result<bool> {
    let h = n.hirsch_length();
    if t.len() != h || t.iter().any(|r| r.len() != h) || z.len() != h {
        return Err(Error::Usage(format!("membership needs an {h}x{h} matrix and an {h}-vector")));
    }
    let rows = rat_rows(t);
    let mut cur: Vec<Rational> = z.iter().cloned().map(Rational::from_integer).collect();
    for i in 0..h {
        if rows[i][i].is_zero() {
            return Err(Error::Usage(format!("diagonal entry {} is zero", i + 1)));
        }
        if rows[i][..i].iter().any(|x| !x.is_zero()) {
            return Err(Error::Usage("matrix is not upper triangular".into()));
        }
        let w = &cur[i] / &rows[i][i];
        if !is_p_integral(&w, p) {
            return Ok(false);
        }
        if too_big(std::slice::from_ref(&w), precision) {
            return Err(Error::Indeterminate(format!("coefficient {} exceeds {precision} bits", i + 1)));
        }
        let step = n.power_rat(&n.power_rat(&rows[i], &w)?, &-Rational::one())?;
        cur = n.multiply_rat(&step, &cur)?;
        if !cur[..=i].iter().all(Zero::is_zero) {
            return Err(Error::Internal(format!("coordinate {} did not cancel", i + 1)));
        }
        if too_big(&cur, precision) {
            return Err(Error::Indeterminate(format!("intermediate coordinates exceed {precision} bits")));
        }
    }
    Ok(true)
}

/// Good-basis test through the commutator characterisation:
/// `t` is good iff every `t_ii != 0` and `x^{c(t_i, t_j)}` lies in the
/// closure of `x^{t_{j+1}}, ..., x^{t_h}` for all `i < j`.
pub fn is_good_basis(n: &MalcevPresentation, t: &[Vec<BigInt>], p: u64) -> Result<bool> {
    let h = n.hirsch_length();
    if t.iter().enumerate().any(|(i, r)| r[i].is_zero() || r[..i].iter().any(|x| !x.is_zero())) {
        return Ok(false);
    }
    let rows = rat_rows(t);
    for j in (1..h).rev() {
        let sub_t: Vec<Vec<BigInt>> = t[j + 1..].iter().map(|r| r[j + 1..].to_vec()).collect();
        let suffix = if j + 1 < h { Some(n.suffix(j + 1)?) } else { None };
        for i in 0..j {
            let c = n.commutator_rat(&rows[i], &rows[j])?;
            if c[..=j].iter().any(|x| !x.is_zero()) {
                return Ok(false);
            }
            let Some(s) = &suffix else {
                continue;
            };
            if c.iter().any(|x| !x.is_integer()) {
                return Err(Error::Internal("commutator of integer rows is not integral".into()));
            }
            let z: Vec<BigInt> = c[j + 1..].iter().map(|x| x.to_integer()).collect();
            if !membership_oracle(s, &sub_t, &z, p, 4096)? {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// A random good basis with `sum_i v_p(t_ii) <= max_k`.
pub fn random_good_basis(n: &MalcevPresentation, p: u64, max_k: u32, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<BigInt>>> {
    let h = n.hirsch_length();
    for _ in 0..10_000 {
        let mut m = vec![0u32; h];
        let mut budget = rng.gen_range(0..=max_k);
        while budget > 0 {
            m[rng.gen_range(0..h)] += 1;
            budget -= 1;
        }
        let mut t = vec![vec![BigInt::zero(); h]; h];
        for i in 0..h {
            let mut unit = rng.gen_range(1..(p * p).max(3) as i64);
            while unit as u64 % p == 0 {
                unit += 1;
            }
            if rng.gen_bool(0.5) {
                unit = -unit;
            }
            t[i][i] = BigInt::from(unit) * BigInt::from(p).pow(m[i]);
            for j in i + 1..h {
                t[i][j] = BigInt::from(rng.gen_range(-(p as i64 * p as i64)..=(p as i64 * p as i64)));
            }
        }
        if is_good_basis(n, &t, p)? {
            return Ok(t);
        }
    }
    Err(Error::Internal("no good basis found by sampling".into()))
}

// ---- measure and index checks -------------------------------------------------

/// The quotient at a level deep enough for the subgroup `B` spanned by a
/// good basis `t`, and the image of `B` in it.
pub fn basis_subgroup(n: &MalcevPresentation, t: &[Vec<BigInt>], p: u64) -> Result<(FiniteQuotient, Subgroup, Vec<u32>)> {
    let m: Vec<u32> = t.iter().enumerate().map(|(i, r)| vp_int(&r[i], p).unwrap_or(0)).collect();
    let level = m.iter().sum::<u32>() + 1;
    let v = VirtuallyTauGroup::trivial(n.clone());
    let q = finite_quotient(&v, p, level)?;
    let gens: Vec<usize> = t.iter().map(|r| q.encode(&q.reduce(&GroupElement(r.clone())), 0)).collect();
    let b = q.closure(&gens);
    Ok((q, b, m))
}

/// Counted Haar measure of the set of matrices representing good bases of
/// the same subgroup as `t`. Row `i` ranges independently over the vectors
/// `a` with `a_j = 0` for `j < i`, `x^a` in the subgroup and
/// `v_p(a_i) = v_p(t_ii)`.
pub fn good_basis_measure(n: &MalcevPresentation, t: &[Vec<BigInt>], p: u64) -> Result<Rational> {
    let (q, b, m) = basis_subgroup(n, t, p)?;
    let h = n.hirsch_length();
    let qq = pow_u64(p, q.level());
    let mut measure = Rational::one();
    for i in 0..h {
        let free = h - i;
        let total = qq.pow(free as u32);
        let mut good = 0u64;
        for code in 0..total {
            let mut a = vec![0u64; h];
            let mut c = code;
            for slot in a.iter_mut().skip(i) {
                *slot = c % qq;
                c /= qq;
            }
            if vp_int(&BigInt::from(a[i]), p) != Some(m[i]) {
                continue;
            }
            if b.contains(q.encode(&a, 0)) {
                good += 1;
            }
        }
        measure *= Rational::new(BigInt::from(good), BigInt::from(total));
    }
    Ok(measure)
}

/// Counted index of the subgroup spanned by a good basis.
pub fn basis_index(n: &MalcevPresentation, t: &[Vec<BigInt>], p: u64) -> Result<u64> {
    let (q, b, _) = basis_subgroup(n, t, p)?;
    Ok((q.n_order() / b.len()) as u64)
}

/// Counted measure of `{a : x^a in x B}`.
pub fn coset_measure(n: &MalcevPresentation, t: &[Vec<BigInt>], x: &GroupElement, p: u64) -> Result<Rational> {
    let (q, b, _) = basis_subgroup(n, t, p)?;
    let xi = q.inv(q.encode(&q.reduce(x), 0));
    let good = (0..q.n_order()).filter(|&a| b.contains(q.mul(xi, a))).count();
    Ok(Rational::new(BigInt::from(good), BigInt::from(q.n_order())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extension::{extension_catalog, fin_subgroups};
    use crate::malcev::{abelian, heisenberg};
    use rand::SeedableRng;

    fn cfg() -> OracleConfig {
        OracleConfig { workers: Some(2), ..OracleConfig::default() }
    }

    fn big(rows: &[&[i64]]) -> Vec<Vec<BigInt>> {
        rows.iter().map(|r| r.iter().map(|&x| BigInt::from(x)).collect()).collect()
    }

    #[test]
    fn quotient_orders() {
        let q = finite_quotient(&VirtuallyTauGroup::trivial(abelian(2).unwrap()), 2, 2).unwrap();
        assert_eq!(q.order(), 16);
        let hq = finite_quotient(&VirtuallyTauGroup::trivial(heisenberg().unwrap()), 3, 1).unwrap();
        assert_eq!(hq.order(), 27);
        let gens = hq.n_generators();
        assert_ne!(hq.mul(gens[0], gens[1]), hq.mul(gens[1], gens[0]));
        // exponent 3: every cube is trivial
        assert!((0..27).all(|x| hq.pow(x, 3) == 0));
        let hq2 = finite_quotient(&VirtuallyTauGroup::trivial(heisenberg().unwrap()), 2, 1).unwrap();
        assert_eq!(hq2.order(), 8);
    }

    #[test]
    fn incompatible_reduction_is_reported() {
        // f2 = X2 + Y2 + X1*Y1/3 is not compatible with reduction mod 3
        let xy = crate::malcev::xy_vars(2);
        let f2 = &(&Polynomial::var(&xy, 1) + &Polynomial::var(&xy, 3)) + &(&Polynomial::var(&xy, 0) * &Polynomial::var(&xy, 2)).scale(&crate::polyring::ratio(1, 3));
        assert!(!congruence_holds(&f2, &[0..2, 2..4], 3, 1).unwrap());
        // shifting X1 by 3^e moves X1*Y1/3 by 3^{e-1} Y1 at every level
        assert!(!congruence_holds(&f2, &[0..2, 2..4], 3, 3).unwrap());
        assert!(congruence_holds(&f2, &[0..2, 2..4], 2, 1).unwrap());
    }

    #[test]
    fn abelian_oracle_matches_lattice_counts() {
        let n = abelian(2).unwrap();
        let out = oracle_counts(CountSource::Tau(&n), Variant::Subgroup, 2, 2, None, &cfg()).unwrap();
        assert!(out.stable);
        assert_eq!(out.series.counts_u128().unwrap(), vec![1, 3, 7]);
        for k in 0..=2u32 {
            assert_eq!(hnf_counts(2, 2u64.pow(k)).unwrap(), [1, 3, 7][k as usize]);
        }
    }

    #[test]
    fn heisenberg_index_two() {
        let n = heisenberg().unwrap();
        let out = oracle_counts(CountSource::Tau(&n), Variant::Subgroup, 2, 1, None, &cfg()).unwrap();
        assert_eq!(out.series.counts_u128().unwrap(), vec![1, 3]);
    }

    #[test]
    fn dihedral_relative_counts() {
        let d = extension_catalog("dinfty").unwrap();
        let subs = fin_subgroups(d.quotient(), Variant::Subgroup);
        let c2 = &subs[1];
        let le = oracle_counts(CountSource::Relative(&d, c2), Variant::Subgroup, 3, 2, None, &cfg()).unwrap();
        assert_eq!(le.series.counts_u128().unwrap(), vec![1, 3, 9]);
        // <x^m, x^j y> is normal iff m | 2
        let nm = oracle_counts(CountSource::Relative(&d, c2), Variant::Normal, 2, 2, None, &cfg()).unwrap();
        assert_eq!(nm.series.counts_u128().unwrap(), vec![1, 2, 0]);
        let nm3 = oracle_counts(CountSource::Relative(&d, c2), Variant::Normal, 3, 2, None, &cfg()).unwrap();
        assert_eq!(nm3.series.counts_u128().unwrap(), vec![1, 0, 0]);
        let triv = oracle_counts(CountSource::Relative(&d, &subs[0]), Variant::Subgroup, 2, 2, None, &cfg()).unwrap();
        assert_eq!(triv.series.counts_u128().unwrap(), vec![1, 1, 1]);
    }

    #[test]
    fn hnf_literal_values() {
        assert_eq!(hnf_counts(1, 12).unwrap(), 1);
        assert_eq!(hnf_counts(2, 2).unwrap(), 3);
        assert_eq!(hnf_counts(2, 4).unwrap(), 7);
        assert_eq!(hnf_counts(2, 6).unwrap(), 12);
        // sum over d1 d2 d3 = n of d2 d3^2
        assert_eq!(hnf_counts(3, 2).unwrap(), 7);
    }

    #[test]
    fn membership_examples() {
        let a1 = abelian(1).unwrap();
        assert!(!membership_oracle(&a1, &big(&[&[2]]), &[BigInt::from(3)], 2, 256).unwrap());
        assert!(membership_oracle(&a1, &big(&[&[2]]), &[BigInt::from(3)], 3, 256).unwrap());
        let a2 = abelian(2).unwrap();
        let t = big(&[&[2, 1], &[0, 3]]);
        // (2,1) = 1*(2,1) + 0*(0,3)
        assert!(membership_oracle(&a2, &t, &[BigInt::from(2), BigInt::from(1)], 3, 256).unwrap());
        assert!(!membership_oracle(&a2, &t, &[BigInt::from(2), BigInt::from(2)], 3, 256).unwrap());
        assert!(membership_oracle(&a2, &t, &[BigInt::from(2), BigInt::from(2)], 5, 256).unwrap());
    }

    #[test]
    fn precision_exhaustion_is_indeterminate() {
        let a1 = abelian(1).unwrap();
        let z = [BigInt::from(3).pow(200)];
        let r = membership_oracle(&a1, &big(&[&[2]]), &z, 3, 8);
        assert!(matches!(r, Err(Error::Indeterminate(_))));
    }

    #[test]
    fn good_basis_examples() {
        let n = heisenberg().unwrap();
        assert!(is_good_basis(&n, &big(&[&[1, 0, 0], &[0, 1, 0], &[0, 0, 1]]), 2).unwrap());
        // t33 = 2 does not divide t11 t22 = 1
        assert!(!is_good_basis(&n, &big(&[&[1, 0, 0], &[0, 1, 0], &[0, 0, 2]]), 2).unwrap());
        assert!(is_good_basis(&n, &big(&[&[2, 0, 0], &[0, 1, 0], &[0, 0, 2]]), 2).unwrap());
        assert!(is_good_basis(&n, &big(&[&[1, 0, 0], &[0, 1, 0], &[0, 0, 2]]), 3).unwrap());
    }

    #[test]
    fn measure_and_index_formulas() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [abelian(2).unwrap(), heisenberg().unwrap()] {
            for p in [2u64, 3] {
                for _ in 0..3 {
                    let t = random_good_basis(&n, p, 2, &mut rng).unwrap();
                    let m: Vec<u32> = (0..t.len()).map(|i| vp_int(&t[i][i], p).unwrap()).collect();
                    let expect = num_traits::pow(Rational::one() - Rational::new(BigInt::one(), BigInt::from(p)), t.len())
                        * crate::arith::pow_rat(p, -(m.iter().enumerate().map(|(i, &mi)| (i as i64 + 1) * mi as i64).sum::<i64>()));
                    assert_eq!(good_basis_measure(&n, &t, p).unwrap(), expect, "{t:?}");
                    let idx = basis_index(&n, &t, p).unwrap();
                    assert_eq!(idx, p.pow(m.iter().sum()));
                    let x = random_element(&mut rng, t.len(), 9);
                    assert_eq!(coset_measure(&n, &t, &x, p).unwrap(), Rational::new(BigInt::one(), BigInt::from(idx)));
                }
            }
        }
    }
}
