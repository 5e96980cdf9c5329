//! Assembly of local relative series into global Dirichlet coefficients,
//! and side-by-side reports of cone and oracle counts.
//!
//! `a_n(G) = sum_K sum_{[F:K] m = n} a_m(S, K)`, where each relative series
//! `a_m(S, K)` is multiplicative in `m` and so is read off its local factors.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::arith::{factorize, ilog, primes_up_to};
use crate::error::{Error, Result};
use crate::evaluator::{local_counts, system_counts, CountSource, EvalConfig, LocalSeries};
use crate::extension::{fin_subgroups, SubgroupOfF, VirtuallyTauGroup};
use crate::oracle::{oracle_counts, OracleConfig, OracleOutcome};
use crate::conegen::ConeConditionSystem;
use crate::Variant;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirichletSeries {
    pub label: String,
    pub nmax: u64,
    /// `coeffs[n - 1] = a_n`
    pub coeffs: Vec<u128>,
}

impl DirichletSeries {
    pub fn coeff(&self, n: u64) -> Option<u128> {
        (n >= 1).then(|| self.coeffs.get(n as usize - 1).copied()).flatten()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "schema": 1,
            "label": self.label,
            "nmax": self.nmax,
            "coeffs": self.coeffs.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
        })
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record(["n", "a_n"]).map_err(csv_err)?;
        for (i, c) in self.coeffs.iter().enumerate() {
            w.write_record([(i + 1).to_string(), c.to_string()]).map_err(csv_err)?;
        }
        finish_csv(w)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Internal(format!("csv: {e}"))
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Internal(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
}

/// Integer counts of a local series; cone output is always integral here
/// because the evaluator refuses non-integral results.
fn integer_counts(s: &LocalSeries) -> Result<Vec<u128>> {
    s.counts_u128().ok_or_else(|| Error::Consistency(format!("non-integral local series at p = {}", s.p)))
}

/// Local relative series of `(v, k)` at each prime, from the cone pipeline.
pub fn assemble_relative(
    v: &VirtuallyTauGroup,
    k: &SubgroupOfF,
    variant: Variant,
    primes: &[u64],
    kmax: u32,
    cfg: &EvalConfig,
) -> Result<BTreeMap<u64, LocalSeries>> {
    primes.iter().map(|&p| Ok((p, local_counts(CountSource::Relative(v, k), variant, p, kmax, cfg)?))).collect()
}

/// Local tables for one `K`: `tables[p][k] = a_{p^k}(S, K)`.
pub type LocalTables = BTreeMap<u64, Vec<u128>>;

/// Global coefficients from per-`K` local tables. A coefficient whose
/// computation needs a missing `(p, k)` is never guessed: all gaps are
/// collected and reported together.
pub fn global_from_tables(label: &str, indexed: &[(usize, LocalTables)], nmax: u64) -> Result<DirichletSeries> {
    let mut coeffs = vec![0u128; nmax as usize];
    let mut gaps: Vec<(u64, u32)> = vec![];
    for (n, slot) in (1..=nmax).zip(coeffs.iter_mut()) {
        for (index, tables) in indexed {
            let index = *index as u64;
            if n % index != 0 {
                continue;
            }
            let mut term = 1u128;
            for (p, k) in factorize(n / index) {
                match tables.get(&p).and_then(|t| t.get(k as usize)) {
                    Some(&c) => term = term.checked_mul(c).ok_or_else(|| Error::Budget(format!("a_{n} overflows")))?,
                    None => gaps.push((p, k)),
                }
            }
            *slot = slot.checked_add(term).ok_or_else(|| Error::Budget(format!("a_{n} overflows")))?;
        }
    }
    if !gaps.is_empty() {
        gaps.sort_unstable();
        gaps.dedup();
        let list: Vec<String> = gaps.iter().map(|(p, k)| format!("(p={p}, k={k})")).collect();
        return Err(Error::Gap(list.join(", ")));
    }
    Ok(DirichletSeries { label: label.to_string(), nmax, coeffs })
}

/// `a_n(G)` for `n <= nmax`, summing relative series over every `K`
/// (every normal `K` for the normal variant). Declared bad primes leave
/// gaps, which are reported rather than filled.
pub fn assemble_global(v: &VirtuallyTauGroup, variant: Variant, nmax: u64, cfg: &EvalConfig) -> Result<DirichletSeries> {
    if nmax == 0 {
        return Err(Error::Usage("nmax must be at least 1".into()));
    }
    let bad = v.n().bad_primes();
    let mut indexed = vec![];
    for k in fin_subgroups(v.quotient(), variant) {
        let reach = nmax / k.index as u64;
        let mut tables = LocalTables::new();
        for p in primes_up_to(reach) {
            if bad.contains(&p) {
                continue;
            }
            let depth = ilog(p, reach);
            let s = local_counts(CountSource::Relative(v, &k), variant, p, depth, cfg)?;
            tables.insert(p, integer_counts(&s)?);
        }
        indexed.push((k.index, tables));
    }
    global_from_tables(&format!("{} {}", v.name(), variant), &indexed, nmax)
}

// ---- reports ------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Agree,
    Mismatch,
    /// one side failed to produce counts
    Error,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRow {
    pub k: Vec<usize>,
    pub p: u64,
    pub cone: Option<Vec<String>>,
    pub oracle: Option<Vec<String>>,
    pub verdict: Verdict,
    pub stable: Option<bool>,
    pub oracle_level: Option<u32>,
    pub error: Option<String>,
    /// `3` for a budget failure, `1` for anything else that stopped a side
    #[serde(skip)]
    pub error_code: Option<i32>,
    pub cone_ms: u128,
    pub oracle_ms: u128,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountReport {
    pub schema: u32,
    pub group: String,
    pub variant: Variant,
    pub rows: Vec<ReportRow>,
}

fn error_code(e: &Error) -> i32 {
    match e {
        Error::Budget(_) => 3,
        _ => 1,
    }
}

/// One report row from the two sides' results. Agreement requires exact
/// equality of integer count vectors.
pub fn compare_row(
    k: &SubgroupOfF,
    p: u64,
    cone: Result<LocalSeries>,
    oracle: Result<OracleOutcome>,
    cone_ms: u128,
    oracle_ms: u128,
) -> ReportRow {
    let mut row = ReportRow {
        k: k.members.clone(),
        p,
        cone: None,
        oracle: None,
        verdict: Verdict::Error,
        stable: None,
        oracle_level: None,
        error: None,
        error_code: None,
        cone_ms,
        oracle_ms,
    };
    let mut errors = vec![];
    match &cone {
        Ok(s) => row.cone = Some(s.coeffs_text()),
        Err(e) => {
            row.error_code = Some(error_code(e));
            errors.push(format!("cone: {e}"));
        }
    }
    match &oracle {
        Ok(o) => {
            row.oracle = Some(o.series.coeffs_text());
            row.stable = Some(o.stable);
            row.oracle_level = Some(o.level);
        }
        Err(e) => {
            row.error_code = Some(row.error_code.unwrap_or(0).max(error_code(e)));
            errors.push(format!("oracle: {e}"));
        }
    }
    if let (Ok(c), Ok(o)) = (&cone, &oracle) {
        let agree = c.counts().is_some() && c.counts() == o.series.counts();
        row.verdict = if agree { Verdict::Agree } else { Verdict::Mismatch };
    }
    if !errors.is_empty() {
        row.error = Some(errors.join("; "));
    }
    row
}

#[derive(Clone, Debug)]
pub struct CompareJob<'a> {
    pub group: &'a VirtuallyTauGroup,
    pub ks: Vec<SubgroupOfF>,
    pub variant: Variant,
    pub primes: Vec<u64>,
    pub kmax: u32,
    pub level: Option<u32>,
}

/// Run both pipelines for every requested `(K, p)`.
pub fn compare_reports(job: &CompareJob<'_>, eval: &EvalConfig, oracle: &OracleConfig) -> CountReport {
    let mut rows = vec![];
    for k in &job.ks {
        for &p in &job.primes {
            let source = CountSource::Relative(job.group, k);
            let t = Instant::now();
            let cone = local_counts(source, job.variant, p, job.kmax, eval);
            let cone_ms = t.elapsed().as_millis();
            let t = Instant::now();
            let orc = oracle_counts(source, job.variant, p, job.kmax, job.level, oracle);
            rows.push(compare_row(k, p, cone, orc, cone_ms, t.elapsed().as_millis()));
        }
    }
    CountReport { schema: 1, group: job.group.name().to_string(), variant: job.variant, rows }
}

/// Compare an explicit condition system (possibly hand-edited) against
/// the oracle for `(v, k)`.
pub fn compare_system(
    system: &ConeConditionSystem,
    v: &VirtuallyTauGroup,
    k: &SubgroupOfF,
    p: u64,
    kmax: u32,
    eval: &EvalConfig,
    oracle: &OracleConfig,
) -> ReportRow {
    let t = Instant::now();
    let cone = system_counts(system, p, kmax, eval).map(|(s, _)| s);
    let cone_ms = t.elapsed().as_millis();
    let t = Instant::now();
    let orc = oracle_counts(CountSource::Relative(v, k), system.variant, p, kmax, None, oracle);
    compare_row(k, p, cone, orc, cone_ms, t.elapsed().as_millis())
}

impl CountReport {
    pub fn all_agree(&self) -> bool {
        self.rows.iter().all(|r| r.verdict == Verdict::Agree)
    }

    pub fn all_stable(&self) -> bool {
        self.rows.iter().all(|r| r.stable != Some(false))
    }

    /// `0` agree and stable; `2` a mismatch against a stable oracle; `3`
    /// budget; `4` an unstable oracle (its disagreement proves nothing);
    /// `1` any other failure.
    pub fn exit_code(&self) -> i32 {
        if self.rows.iter().any(|r| r.verdict == Verdict::Mismatch && r.stable == Some(true)) {
            return 2;
        }
        if let Some(code) = self.rows.iter().filter_map(|r| r.error_code).max() {
            return code;
        }
        if !self.all_stable() {
            return 4;
        }
        0
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record(["K", "p", "k", "cone", "oracle", "verdict", "stable", "oracle_level", "cone_ms", "oracle_ms", "error"])
            .map_err(csv_err)?;
        for r in &self.rows {
            let len = r.cone.as_ref().map_or(0, Vec::len).max(r.oracle.as_ref().map_or(0, Vec::len)).max(1);
            for k in 0..len {
                let cell = |v: &Option<Vec<String>>| v.as_ref().and_then(|v| v.get(k).cloned()).unwrap_or_default();
                w.write_record([
                    join_members(&r.k),
                    r.p.to_string(),
                    k.to_string(),
                    cell(&r.cone),
                    cell(&r.oracle),
                    verdict_text(r.verdict).to_string(),
                    r.stable.map(|s| s.to_string()).unwrap_or_default(),
                    r.oracle_level.map(|s| s.to_string()).unwrap_or_default(),
                    r.cone_ms.to_string(),
                    r.oracle_ms.to_string(),
                    r.error.clone().unwrap_or_default(),
                ])
                .map_err(csv_err)?;
            }
        }
        finish_csv(w)
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{} ({})\n", self.group, self.variant);
        for r in &self.rows {
            let show = |v: &Option<Vec<String>>| v.as_ref().map_or("-".to_string(), |v| format!("({})", v.join(", ")));
            out.push_str(&format!(
                "K={{{}}} p={}: cone {} oracle {} {}{}{}\n",
                join_members(&r.k),
                r.p,
                show(&r.cone),
                show(&r.oracle),
                verdict_text(r.verdict),
                match r.stable {
                    Some(false) => " (unstable)",
                    _ => "",
                },
                r.error.as_ref().map(|e| format!(" [{e}]")).unwrap_or_default()
            ));
        }
        out
    }
}

fn join_members(k: &[usize]) -> String {
    k.iter().map(|f| f.to_string()).collect::<Vec<_>>().join(" ")
}

fn verdict_text(v: Verdict) -> &'static str {
    match v {
        Verdict::Agree => "agree",
        Verdict::Mismatch => "mismatch",
        Verdict::Error => "error",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extension::extension_catalog;
    use crate::malcev::abelian;

    fn cfg() -> EvalConfig {
        EvalConfig { workers: Some(2), ..EvalConfig::default() }
    }

    #[test]
    fn dihedral_global_series() {
        let d = extension_catalog("dinfty").unwrap();
        let s = assemble_global(&d, Variant::Subgroup, 6, &cfg()).unwrap();
        // cyclic subgroups mZ plus dihedral <x^m, x^j y>
        let expect: Vec<u128> = (1..=6u128).map(|n| n + u128::from(n % 2 == 0)).collect();
        assert_eq!(s.coeffs, expect);
        assert_eq!(s.coeff(1), Some(1));
    }

    #[test]
    fn abelian_global_is_sigma() {
        let v = VirtuallyTauGroup::trivial(abelian(2).unwrap());
        let s = assemble_global(&v, Variant::Subgroup, 6, &cfg()).unwrap();
        let sigma: Vec<u128> = (1..=6u128).map(|n| (1..=n).filter(|d| n % d == 0).sum()).collect();
        assert_eq!(s.coeffs, sigma);
    }

    #[test]
    fn gaps_are_reported() {
        let mut tables = LocalTables::new();
        tables.insert(2, vec![1, 3]);
        let err = global_from_tables("t", &[(1, tables)], 4).unwrap_err();
        let Error::Gap(msg) = err else { panic!("expected a gap") };
        assert!(msg.contains("p=2, k=2") && msg.contains("p=3, k=1"), "{msg}");
    }

    #[test]
    fn relative_trivial_quotient_matches_tau() {
        let n = abelian(2).unwrap();
        let v = VirtuallyTauGroup::trivial(n.clone());
        let k = &fin_subgroups(v.quotient(), Variant::Subgroup)[0];
        let rel = assemble_relative(&v, k, Variant::Subgroup, &[2, 3], 2, &cfg()).unwrap();
        for (p, s) in rel {
            let tau = local_counts(CountSource::Tau(&n), Variant::Subgroup, p, 2, &cfg()).unwrap();
            assert_eq!(s.coeffs, tau.coeffs);
        }
    }

    #[test]
    fn empty_report_agrees() {
        let d = extension_catalog("dinfty").unwrap();
        let job = CompareJob { group: &d, ks: vec![], variant: Variant::Subgroup, primes: vec![], kmax: 2, level: None };
        let r = compare_reports(&job, &cfg(), &OracleConfig::default());
        assert!(r.all_agree());
        assert_eq!(r.exit_code(), 0);
    }

    #[test]
    fn dihedral_report_and_csv() {
        let d = extension_catalog("dinfty").unwrap();
        let ks = fin_subgroups(d.quotient(), Variant::Subgroup);
        let job = CompareJob { group: &d, ks, variant: Variant::Subgroup, primes: vec![2, 3], kmax: 2, level: None };
        let r = compare_reports(&job, &cfg(), &OracleConfig::default());
        assert_eq!(r.exit_code(), 0, "{}", r.to_table());
        let csv = r.to_csv().unwrap();
        assert!(csv.starts_with("K,p,k,cone,oracle,verdict"));
        assert_eq!(csv.lines().count(), 1 + 4 * 3);
    }
}
