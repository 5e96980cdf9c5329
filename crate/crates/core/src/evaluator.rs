//! Exact evaluation of cone integrals at a prime.
//!
//! The domain of integration is cut into valuation slices `v_p(t_ii) = m_i`.
//! On a slice every condition becomes a congruence `P(x) = 0 mod p^e` for an
//! integer polynomial `P`, so the slice measure is a ratio of residue counts.
//! Residues are built one p-adic digit at a time, variable by variable, and
//! a branch is cut as soon as one of its congruences fails.

use std::sync::atomic::{AtomicU64, Ordering};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{is_prime, pow_rat, vp_int};
use crate::conegen::{good_basis_conditions, relative_conditions, ConeCondition, ConeConditionSystem, ConeIntegralData};
use crate::error::{Error, Result};
use crate::extension::{SubgroupOfF, VirtuallyTauGroup};
use crate::malcev::MalcevPresentation;
use crate::polyring::{format_rational, Polynomial, Rational};
use crate::Variant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Cone,
    Oracle,
}

/// `sum_k coeffs[k] p^{-ks}`, truncated at `kmax`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalSeries {
    pub p: u64,
    pub kmax: u32,
    pub coeffs: Vec<Rational>,
    pub provenance: Provenance,
}

impl LocalSeries {
    /// The coefficients as integers, if they all are.
    pub fn counts(&self) -> Option<Vec<BigInt>> {
        self.coeffs.iter().map(|c| c.is_integer().then(|| c.to_integer())).collect()
    }

    pub fn counts_u128(&self) -> Option<Vec<u128>> {
        self.counts()?.iter().map(|c| c.to_u128()).collect()
    }

    pub fn from_counts(p: u64, counts: &[u128], provenance: Provenance) -> Self {
        LocalSeries {
            p,
            kmax: counts.len().saturating_sub(1) as u32,
            coeffs: counts.iter().map(|&c| Rational::from_integer(BigInt::from(c))).collect(),
            provenance,
        }
    }

    /// Integers print bare, anything else as `n/d`.
    pub fn coeffs_text(&self) -> Vec<String> {
        self.coeffs.iter().map(|c| if c.is_integer() { c.numer().to_string() } else { format_rational(c) }).collect()
    }

    /// Undo the count normalization: the cone coefficients
    /// `a_k = (1 - 1/p)^h count_k p^{-k * shift}`.
    pub fn raw_coeffs(&self, h: usize, shift: i64) -> Vec<Rational> {
        let one_minus = Rational::one() - Rational::new(BigInt::one(), BigInt::from(self.p));
        let norm = num_traits::pow(one_minus, h);
        self.coeffs.iter().enumerate().map(|(k, c)| &norm * c * pow_rat(self.p, -(k as i64) * shift)).collect()
    }
}

#[derive(Clone, Debug)]
pub struct EvalConfig {
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
    /// Upper bound on lifting-tree nodes per slice.
    pub node_budget: u64,
    /// Recompute one slice one digit deeper and insist on the same measure.
    pub depth_check: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { workers: None, node_budget: 2_000_000_000, depth_check: true }
    }
}

pub(crate) fn run_in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

// ---- per-prime compilation ----------------------------------------------------

#[derive(Clone, Debug)]
struct Compiled {
    /// exponent of each diagonal in the denominator monomial
    den_diag: Vec<u32>,
    /// v_p of the denominator constant plus v_p of the numerator's cleared denominator
    offset: i64,
    terms: Vec<(BigInt, Vec<(usize, u32)>)>,
    support: Vec<usize>,
}

fn compile(pair: &(Polynomial, Polynomial), diagonals: &[usize], p: u64) -> Result<Option<Compiled>> {
    let (den, num) = pair;
    if num.is_zero() {
        return Ok(None);
    }
    let cond = ConeCondition { num: num.clone(), den: den.clone() };
    let (mono, c) = cond.den_monomial().ok_or_else(|| Error::Structural("denominator is not a monomial".into()))?;
    if c.is_zero() {
        return Err(Error::Structural("zero denominator".into()));
    }
    if mono.iter().enumerate().any(|(v, &e)| e > 0 && !diagonals.contains(&v)) {
        return Err(Error::Structural("denominator mentions a non-diagonal variable".into()));
    }
    let den_diag = diagonals.iter().map(|&d| mono[d]).collect();
    let vc = vp_int(c.numer(), p).unwrap() as i64 - vp_int(c.denom(), p).unwrap() as i64;
    let (pint, d) = num.clear_denominators();
    let vd = vp_int(&d, p).unwrap() as i64;
    let terms: Vec<(BigInt, Vec<(usize, u32)>)> = pint
        .terms()
        .map(|(e, c)| (c.to_integer(), e.iter().enumerate().filter(|(_, &k)| k > 0).map(|(v, &k)| (v, k)).collect()))
        .collect();
    Ok(Some(Compiled { den_diag, offset: vc + vd, terms, support: num.support() }))
}

/// Depth `c` of a condition on the slice `m`: on that slice it reads
/// `v_p(num(x)) >= c`.
pub fn condition_depth(cond: &ConeCondition, diagonals: &[usize], p: u64, m: &[u32]) -> Result<i64> {
    let (mono, c) = cond.den_monomial().ok_or_else(|| Error::Structural("denominator is not a monomial".into()))?;
    let vc = vp_int(c.numer(), p).ok_or_else(|| Error::Structural("zero denominator".into()))? as i64
        - vp_int(c.denom(), p).unwrap() as i64;
    Ok(vc + diagonals.iter().zip(m).map(|(&d, &mi)| mono[d] as i64 * mi as i64).sum::<i64>())
}

/// The congruence exponent of a condition on a slice once the numerator's
/// denominators are cleared; at most zero means vacuous.
pub fn congruence_exponent(cond: &ConeCondition, diagonals: &[usize], p: u64, m: &[u32]) -> Result<i64> {
    let (_, d) = cond.num.clear_denominators();
    Ok(condition_depth(cond, diagonals, p, m)? + vp_int(&d, p).unwrap() as i64)
}

#[derive(Clone, Debug)]
pub struct Evaluator {
    p: u64,
    nvars: usize,
    diagonals: Vec<usize>,
    g0: Vec<u32>,
    conds: Vec<Compiled>,
    config: EvalConfig,
}

/// One congruence restricted to a component, with local variable indices.
struct Active {
    e: u32,
    terms: Vec<(u128, Vec<(usize, u32)>)>,
}

impl Evaluator {
    pub fn new(data: &ConeIntegralData, p: u64, config: EvalConfig) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::Usage(format!("{p} is not prime")));
        }
        let mut conds = vec![];
        for pair in &data.pairs {
            if let Some(c) = compile(pair, &data.diagonals, p)? {
                conds.push(c);
            }
        }
        let g0 = data.diagonals.iter().map(|&d| data.g0.degree_in(d)).collect();
        Ok(Evaluator { p, nvars: data.vars.len(), diagonals: data.diagonals.clone(), g0, conds, config })
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    /// Haar measure of `{x : v_p(x_ii) = m_i, all conditions}`.
    pub fn slice_measure(&self, m: &[u32]) -> Result<Rational> {
        self.slice_measure_at(m, 0)
    }

    /// As [`Self::slice_measure`], working `extra` digits deeper than needed.
    pub fn slice_measure_at(&self, m: &[u32], extra: u32) -> Result<Rational> {
        let h = self.diagonals.len();
        if m.len() != h {
            return Err(Error::Usage(format!("slice needs {h} valuations")));
        }
        let p = self.p;
        // congruence exponents on this slice
        let mut active: Vec<(&Compiled, u32)> = vec![];
        for c in &self.conds {
            let e = c.offset + c.den_diag.iter().zip(m).map(|(&a, &mi)| a as i64 * mi as i64).sum::<i64>();
            if e <= 0 {
                continue;
            }
            if c.support.is_empty() {
                // constant numerator: decided by the slice alone
                let v = c.terms.iter().map(|(k, _)| k).sum::<BigInt>();
                if vp_int(&v, p).map_or(false, |v| (v as i64) < e) {
                    return Ok(Rational::zero());
                }
                continue;
            }
            active.push((c, e as u32));
        }
        // per-variable precision
        let mut need = vec![0u32; self.nvars];
        for (c, e) in &active {
            for &v in &c.support {
                need[v] = need[v].max(*e);
            }
        }
        let mut diag_m = vec![None; self.nvars];
        for (i, &d) in self.diagonals.iter().enumerate() {
            diag_m[d] = Some(m[i]);
        }
        // connected components over variables through conditions
        let mut parent: Vec<usize> = (0..self.nvars).collect();
        fn find(parent: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while parent[r] != r {
                r = parent[r];
            }
            let mut y = x;
            while parent[y] != r {
                let next = parent[y];
                parent[y] = r;
                y = next;
            }
            r
        }
        for (c, _) in &active {
            for w in c.support.windows(2) {
                let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
                parent[a] = b;
            }
        }
        let mut measure = Rational::one();
        let one_minus = Rational::one() - Rational::new(BigInt::one(), BigInt::from(p));
        let mut components: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for v in 0..self.nvars {
            if need[v] == 0 {
                // untouched by every condition
                if let Some(mi) = diag_m[v] {
                    measure *= &one_minus * pow_rat(p, -(mi as i64));
                }
                continue;
            }
            let r = find(&mut parent, v);
            components.entry(r).or_default().push(v);
        }
        for vars in components.values() {
            let comp: Vec<(&Compiled, u32)> =
                active.iter().filter(|(c, _)| c.support.iter().any(|v| vars.contains(v))).cloned().collect();
            let local_need: Vec<u32> = vars.iter().map(|&v| {
                let base = need[v].max(diag_m[v].map_or(0, |mi| mi + 1));
                base + extra
            }).collect();
            let local_m: Vec<Option<u32>> = vars.iter().map(|&v| diag_m[v]).collect();
            let count = self.count_component(vars, &local_need, &local_m, &comp)?;
            let total: u32 = local_need.iter().sum();
            measure *= Rational::new(count, BigInt::from(p).pow(total));
        }
        Ok(measure)
    }

    fn count_component(&self, vars: &[usize], need: &[u32], diag: &[Option<u32>], conds: &[(&Compiled, u32)]) -> Result<BigInt> {
        let p = self.p;
        let depth = *need.iter().max().unwrap();
        let top = (p as u128).checked_pow(depth).filter(|&q| q < (1u128 << 63));
        let Some(_) = top else {
            return Err(Error::Budget(format!("modulus {p}^{depth} too large for the residue counter")));
        };
        let local = |v: usize| vars.iter().position(|&x| x == v).unwrap();
        let actives: Vec<Active> = conds
            .iter()
            .map(|(c, e)| {
                let modulus = BigInt::from(p).pow(*e);
                Active {
                    e: *e,
                    terms: c
                        .terms
                        .iter()
                        .map(|(k, mono)| {
                            (k.mod_floor(&modulus).to_u128().unwrap(), mono.iter().map(|&(v, x)| (local(v), x)).collect())
                        })
                        .collect(),
                }
            })
            .collect();

        // variable order: by first appearance in conditions, fewest variables first
        let mut order: Vec<usize> = vec![];
        let mut by_size: Vec<&Active> = actives.iter().collect();
        by_size.sort_by_key(|a| (a.terms.iter().flat_map(|t| t.1.iter().map(|x| x.0)).collect::<std::collections::BTreeSet<_>>().len(), a.e));
        for a in &by_size {
            for t in &a.terms {
                for &(v, _) in &t.1 {
                    if !order.contains(&v) {
                        order.push(v);
                    }
                }
            }
        }
        for v in 0..vars.len() {
            if !order.contains(&v) {
                order.push(v);
            }
        }

        // steps (level, variable) with the congruences that become decidable
        struct Step {
            level: u32,
            var: usize,
            checks: Vec<usize>,
        }
        let mut steps: Vec<Step> = vec![];
        for level in 1..=depth {
            let here: Vec<usize> = order.iter().copied().filter(|&v| need[v] >= level).collect();
            for &v in &here {
                steps.push(Step { level, var: v, checks: vec![] });
            }
            for (ci, a) in actives.iter().enumerate() {
                if level > a.e {
                    continue;
                }
                let cvars: Vec<usize> = a.terms.iter().flat_map(|t| t.1.iter().map(|x| x.0)).collect();
                let last = steps
                    .iter()
                    .rposition(|s| s.level == level && cvars.contains(&s.var))
                    .unwrap_or(steps.len() - 1);
                steps[last].checks.push(ci);
            }
        }
        let allowed = |s: &Step| -> u128 {
            match diag[s.var] {
                Some(mi) if s.level <= mi => 1,
                Some(mi) if s.level == mi + 1 => p as u128 - 1,
                _ => p as u128,
            }
        };
        let last_check = steps.iter().rposition(|s| !s.checks.is_empty());
        let tail_from = last_check.map_or(0, |i| i + 1);
        let mut tail = BigInt::one();
        for s in &steps[tail_from..] {
            tail *= BigInt::from(allowed(s));
        }
        let steps = &steps[..tail_from];

        let pw: Vec<u128> = (0..=depth).map(|k| (p as u128).pow(k)).collect();
        let nodes = AtomicU64::new(0);
        let budget = self.config.node_budget;

        fn eval(a: &Active, r: &[u128], modulus: u128) -> u128 {
            let mut acc = 0u128;
            for (c, mono) in &a.terms {
                let mut t = c % modulus;
                for &(v, k) in mono {
                    let x = r[v] % modulus;
                    for _ in 0..k {
                        t = t * x % modulus;
                    }
                }
                acc = (acc + t) % modulus;
            }
            acc
        }

        struct Ctx<'a> {
            p: u64,
            steps: &'a [Step],
            diag: &'a [Option<u32>],
            actives: &'a [Active],
            pw: &'a [u128],
            nodes: &'a AtomicU64,
            budget: u64,
        }

        fn dfs(ctx: &Ctx<'_>, idx: usize, r: &mut Vec<u128>) -> Result<u128> {
            if idx == ctx.steps.len() {
                return Ok(1);
            }
            if ctx.nodes.fetch_add(1, Ordering::Relaxed) > ctx.budget {
                return Err(Error::Budget(format!("more than {} lifting nodes in one slice", ctx.budget)));
            }
            let s = &ctx.steps[idx];
            let place = ctx.pw[(s.level - 1) as usize];
            let (lo, hi) = match ctx.diag[s.var] {
                Some(mi) if s.level <= mi => (0, 1),
                Some(mi) if s.level == mi + 1 => (1, ctx.p),
                _ => (0, ctx.p),
            };
            let saved = r[s.var];
            let mut total = 0u128;
            for d in lo..hi {
                r[s.var] = saved + d as u128 * place;
                let modulus = ctx.pw[s.level as usize];
                if s.checks.iter().all(|&ci| eval(&ctx.actives[ci], r, modulus) == 0) {
                    total = total
                        .checked_add(dfs(ctx, idx + 1, r)?)
                        .ok_or_else(|| Error::Budget("residue count overflow".into()))?;
                }
            }
            r[s.var] = saved;
            Ok(total)
        }

        let ctx = Ctx { p, steps, diag, actives: &actives, pw: &pw, nodes: &nodes, budget };
        let mut r = vec![0u128; vars.len()];
        let count = dfs(&ctx, 0, &mut r)?;
        Ok(BigInt::from(count) * tail)
    }

    /// All valuation vectors with `sum m_i = k`, lexicographically.
    pub fn slices(h: usize, k: u32) -> Vec<Vec<u32>> {
        fn rec(h: usize, k: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
            if prefix.len() + 1 == h {
                prefix.push(k);
                out.push(prefix.clone());
                prefix.pop();
                return;
            }
            for a in 0..=k {
                prefix.push(a);
                rec(h, k - a, prefix, out);
                prefix.pop();
            }
        }
        let mut out = vec![];
        if h > 0 {
            rec(h, k, &mut vec![], &mut out);
        }
        out
    }

    /// `a_k = sum_{|m| = k} p^{-sum g0_i m_i} mu(slice m)` for `k = 0..=kmax`.
    pub fn cone_coeffs(&self, kmax: u32) -> Result<Vec<Rational>> {
        let h = self.diagonals.len();
        let jobs: Vec<(u32, Vec<u32>)> = (0..=kmax).flat_map(|k| Self::slices(h, k).into_iter().map(move |m| (k, m))).collect();
        let results: Vec<Result<(u32, Rational)>> = run_in_pool(self.config.workers, || {
            jobs.par_iter()
                .map(|(k, m)| {
                    let mu = self.slice_measure(m)?;
                    let w: i64 = self.g0.iter().zip(m).map(|(&g, &mi)| g as i64 * mi as i64).sum();
                    Ok((*k, mu * pow_rat(self.p, -w)))
                })
                .collect()
        })?;
        let mut a = vec![Rational::zero(); kmax as usize + 1];
        for r in results {
            let (k, v) = r?;
            a[k as usize] += v;
        }
        if self.config.depth_check && h > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.p ^ (kmax as u64) << 8);
            let (_, m) = &jobs[rng.gen_range(0..jobs.len())];
            let base = self.slice_measure(m)?;
            let deeper = self.slice_measure_at(m, 1)?;
            if base != deeper {
                return Err(Error::Consistency(format!(
                    "slice {m:?} at p = {} changes measure one digit deeper ({base} vs {deeper})",
                    self.p
                )));
            }
        }
        Ok(a)
    }
}

/// Where counts come from: a τ-group, or an extension together with the
/// image `K` of the counted subgroups.
#[derive(Clone, Copy, Debug)]
pub enum CountSource<'a> {
    Tau(&'a MalcevPresentation),
    Relative(&'a VirtuallyTauGroup, &'a SubgroupOfF),
}

impl CountSource<'_> {
    pub fn system(&self, variant: Variant) -> Result<ConeConditionSystem> {
        match self {
            CountSource::Tau(n) => good_basis_conditions(n, variant),
            CountSource::Relative(v, k) => relative_conditions(v, k, variant),
        }
    }

    fn presentation(&self) -> &MalcevPresentation {
        match self {
            CountSource::Tau(n) => n,
            CountSource::Relative(v, _) => v.n(),
        }
    }
}

/// Turn cone coefficients into counts
/// `count_k = (1 - 1/p)^{-h} a_k p^{k * shift}`, insisting on non-negative
/// integers and `count_0 = 1`.
pub fn counts_from_coeffs(a: &[Rational], p: u64, h: usize, shift: i64) -> Result<LocalSeries> {
    let one_minus = Rational::one() - Rational::new(BigInt::one(), BigInt::from(p));
    let norm = num_traits::pow(Rational::one() / one_minus, h);
    let mut coeffs = Vec::with_capacity(a.len());
    for (k, ak) in a.iter().enumerate() {
        let c = &norm * ak * pow_rat(p, k as i64 * shift);
        if !c.is_integer() || c.is_negative() {
            return Err(Error::Consistency(format!("count at p = {p}, k = {k} is {c}, not a non-negative integer")));
        }
        coeffs.push(c);
    }
    if coeffs.first().is_some_and(|c| !c.is_one()) {
        return Err(Error::Consistency(format!("count at k = 0 is {}, expected 1", coeffs[0])));
    }
    Ok(LocalSeries { p, kmax: a.len().saturating_sub(1) as u32, coeffs, provenance: Provenance::Cone })
}

/// Counts for an already generated system.
pub fn system_counts(system: &ConeConditionSystem, p: u64, kmax: u32, config: &EvalConfig) -> Result<(LocalSeries, Vec<Rational>)> {
    let data = system.emit_cone_data();
    let ev = Evaluator::new(&data, p, config.clone())?;
    let a = ev.cone_coeffs(kmax)?;
    Ok((counts_from_coeffs(&a, p, data.h, data.shift)?, a))
}

/// Local subgroup (or normal subgroup) counts `a_{p^k}` for `k <= kmax`.
pub fn local_counts(source: CountSource<'_>, variant: Variant, p: u64, kmax: u32, config: &EvalConfig) -> Result<LocalSeries> {
    local_counts_with_raw(source, variant, p, kmax, config).map(|(s, _)| s)
}

pub fn local_counts_with_raw(
    source: CountSource<'_>,
    variant: Variant,
    p: u64,
    kmax: u32,
    config: &EvalConfig,
) -> Result<(LocalSeries, Vec<Rational>)> {
    if source.presentation().bad_primes().contains(&p) {
        return Err(Error::Usage(format!("p = {p} is declared a bad prime for {}", source.presentation().name())));
    }
    let system = source.system(variant)?;
    system_counts(&system, p, kmax, config)
}
