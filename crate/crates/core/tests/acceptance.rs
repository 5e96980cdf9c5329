//! Acceptance criteria A1-A8. Runs without the libtest harness so that
//! every criterion prints exactly one PASS/FAIL line; exits nonzero if any
//! criterion fails. All comparisons are exact.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nilzeta::arith::{is_p_integral, pow_rat, vp_int};
use nilzeta::conegen::{good_basis_conditions, membership_conditions, t_index, ConeCondition};
use nilzeta::evaluator::{counts_from_coeffs, local_counts, CountSource, EvalConfig};
use nilzeta::extension::{extension_catalog, fin_subgroups, VirtuallyTauGroup};
use nilzeta::malcev::{abelian, catalog_make, heisenberg, verify_presentation, GroupElement, MalcevPresentation};
use nilzeta::oracle::{basis_index, coset_measure, good_basis_measure, hnf_counts, membership_oracle, oracle_counts, random_good_basis, OracleConfig};
use nilzeta::polyring::{Polynomial, Rational};
use nilzeta::zeta::{assemble_global, compare_system, Verdict};
use nilzeta::{Error, Variant};

type Outcome = std::result::Result<String, String>;

fn eval() -> EvalConfig {
    EvalConfig::default()
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn cone(source: CountSource<'_>, variant: Variant, p: u64, kmax: u32) -> std::result::Result<Vec<u128>, String> {
    local_counts(source, variant, p, kmax, &eval()).map_err(|e| e.to_string())?.counts_u128().ok_or_else(|| "non-integral".into())
}

// ---- A1 ------------------------------------------------------------------------

fn a1() -> Outcome {
    let n = abelian(2).map_err(|e| e.to_string())?;
    for p in [2u64, 3, 5] {
        let got = cone(CountSource::Tau(&n), Variant::Subgroup, p, 3)?;
        let want: Vec<u128> = (0..=3).map(|k| hnf_counts(2, p.pow(k)).unwrap() as u128).collect();
        check(got == want, || format!("p={p}: cone {got:?} vs HNF {want:?}"))?;
    }
    Ok("Z^2, p in {2,3,5}, k <= 3 equal to HNF enumeration".into())
}

// ---- A2 ------------------------------------------------------------------------

fn a2() -> Outcome {
    let v = VirtuallyTauGroup::trivial(abelian(3).map_err(|e| e.to_string())?);
    let s = assemble_global(&v, Variant::Subgroup, 20, &eval()).map_err(|e| e.to_string())?;
    for n in 1..=20u64 {
        let want = hnf_counts(3, n).unwrap() as u128;
        check(s.coeff(n) == Some(want), || format!("a_{n} = {:?}, HNF {want}", s.coeff(n)))?;
    }
    let mut pairs = 0;
    for m in 1..=20u64 {
        for n in 1..=20u64 {
            if m * n <= 20 && num_integer::gcd(m, n) == 1 {
                let (am, an, amn) = (s.coeff(m).unwrap(), s.coeff(n).unwrap(), s.coeff(m * n).unwrap());
                check(amn == am * an, || format!("a_{} = {amn} != a_{m} a_{n} = {}", m * n, am * an))?;
                pairs += 1;
            }
        }
    }
    Ok(format!("Z^3 a_1..a_20 equal HNF enumeration; {pairs} coprime pairs multiplicative"))
}

// ---- A3 ------------------------------------------------------------------------

fn a3() -> Outcome {
    let n = heisenberg().map_err(|e| e.to_string())?;
    let mut seen = vec![];
    for variant in [Variant::Subgroup, Variant::Normal] {
        for p in [2u64, 3] {
            let got = cone(CountSource::Tau(&n), variant, p, 2)?;
            let o = oracle_counts(CountSource::Tau(&n), variant, p, 2, None, &OracleConfig::default()).map_err(|e| e.to_string())?;
            let want = o.series.counts_u128().unwrap();
            check(o.stable, || format!("{variant} p={p}: oracle unstable at level {}", o.level))?;
            check(got == want, || format!("{variant} p={p}: cone {got:?} vs oracle {want:?}"))?;
            seen.push(format!("{variant} p={p} {got:?}"));
        }
    }
    Ok(format!("Heisenberg cone = stable finite-quotient counts: {}", seen.join("; ")))
}

// ---- A4 ------------------------------------------------------------------------

/// Literal listing for D∞ = <x, y | y x y^-1 = x^-1>: every finite-index
/// subgroup is `<x^m>` or `<x^m, x^j y>` (0 <= j < m), of index `m` in the
/// preimage of its image. `<x^m, x^j y>` is normal iff conjugates by `x`
/// (giving `x^{j+2} y`) and by `y` (giving `x^{-j} y`) stay in it.
fn dinfty_listing(p: u64, kmax: u32, normal: bool) -> Vec<u128> {
    (0..=kmax)
        .map(|k| {
            let m = p.pow(k) as i64;
            (0..m)
                .filter(|&j| !normal || (2i64.rem_euclid(m) == 0 && (2 * j).rem_euclid(m) == 0))
                .count() as u128
        })
        .collect()
}

fn a4() -> Outcome {
    let d = extension_catalog("dinfty").map_err(|e| e.to_string())?;
    let ks = fin_subgroups(d.quotient(), Variant::Subgroup);
    let (triv, c2) = (&ks[0], &ks[1]);
    let mut problems = vec![];
    for p in [2u64, 3, 5] {
        let t = cone(CountSource::Relative(&d, triv), Variant::Subgroup, p, 2)?;
        check(t == vec![1, 1, 1], || format!("K=1 p={p}: {t:?}"))?;
        let le = cone(CountSource::Relative(&d, c2), Variant::Subgroup, p, 2)?;
        let want = vec![1, p as u128, (p * p) as u128];
        check(le == want && le == dinfty_listing(p, 2, false), || format!("K=C2 subgroup p={p}: {le:?}"))?;
        let nm = cone(CountSource::Relative(&d, c2), Variant::Normal, p, 2)?;
        let o = oracle_counts(CountSource::Relative(&d, c2), Variant::Normal, p, 2, None, &OracleConfig::default())
            .map_err(|e| e.to_string())?;
        check(nm == o.series.counts_u128().unwrap() && nm == dinfty_listing(p, 2, true), || {
            format!("K=C2 normal p={p}: cone {nm:?}, oracle {:?}", o.series.counts_u128())
        })?;
        let stated: Vec<u128> = if p == 2 { vec![1, 2, 2] } else { vec![1, 1, 1] };
        if nm != stated {
            problems.push(format!("normal K=C2 p={p}: {nm:?} (listing and oracle agree) vs stated {stated:?}"));
        }
    }
    let s = assemble_global(&d, Variant::Subgroup, 10, &eval()).map_err(|e| e.to_string())?;
    let want: Vec<u128> = (1..=10u128).map(|n| n + u128::from(n % 2 == 0)).collect();
    check(s.coeffs == want, || format!("global subgroup series {:?}", s.coeffs))?;
    if problems.is_empty() {
        Ok("D∞ relative counts, normal variant and global series a_n = n + [2|n] as stated".into())
    } else {
        Err(format!(
            "K=1, K=C2 subgroup counts and global series pass; stated normal-variant values not reproduced: {}",
            problems.join("; ")
        ))
    }
}

// ---- A5 ------------------------------------------------------------------------

fn a5() -> Outcome {
    let n1 = abelian(2).map_err(|e| e.to_string())?;
    let n2 = catalog_make("scaled(abelian:2;2,1)").map_err(|e| e.to_string())?;
    for p in [3u64, 5] {
        let (a, b) = (cone(CountSource::Tau(&n1), Variant::Subgroup, p, 2)?, cone(CountSource::Tau(&n2), Variant::Subgroup, p, 2)?);
        check(a == b, || format!("p={p}: {a:?} vs {b:?}"))?;
    }
    let (a, b) = (cone(CountSource::Tau(&n1), Variant::Subgroup, 2, 1)?, cone(CountSource::Tau(&n2), Variant::Subgroup, 2, 1)?);
    let at2 = if a == b { "agree" } else { "differ" };
    Ok(format!("Z^2 and its index-2 sublattice agree at p in {{3,5}}, k <= 2; at p=2, k=1 they {at2} ({a:?} / {b:?})"))
}

// ---- A6 ------------------------------------------------------------------------

/// All back-substitution quotients `num / den` p-integral at `(t, z)`.
fn conditions_verdict(conds: &[ConeCondition], h: usize, t: &[Vec<BigInt>], z: &[BigInt], p: u64) -> bool {
    let mut point = vec![Rational::zero(); h * (h + 1) / 2 + h];
    for i in 0..h {
        for j in i..h {
            point[t_index(h, i, j)] = Rational::from_integer(t[i][j].clone());
        }
    }
    for (k, zk) in z.iter().enumerate() {
        point[h * (h + 1) / 2 + k] = Rational::from_integer(zk.clone());
    }
    conds.iter().all(|c| {
        let den = c.den.eval(&point).unwrap();
        is_p_integral(&(c.num.eval(&point).unwrap() / den), p)
    })
}

fn random_instance(n: &MalcevPresentation, p: u64, rng: &mut ChaCha8Rng) -> (Vec<Vec<BigInt>>, Vec<BigInt>) {
    let h = n.hirsch_length();
    let mut t = vec![vec![BigInt::zero(); h]; h];
    for i in 0..h {
        let mut unit = rng.gen_range(1..=(p as i64 * 2));
        if unit % p as i64 == 0 {
            unit += 1;
        }
        t[i][i] = BigInt::from(unit) * BigInt::from(p).pow(rng.gen_range(0..=2));
        for j in i + 1..h {
            t[i][j] = BigInt::from(rng.gen_range(-6i64..=6));
        }
    }
    let z = if rng.gen_bool(0.5) {
        // a genuine element of the product set
        let mut acc = GroupElement::identity(h);
        for row in &t {
            let w = BigInt::from(rng.gen_range(-3i64..=3));
            acc = n.multiply(&acc, &n.power(&GroupElement(row.clone()), &w).unwrap()).unwrap();
        }
        acc.0
    } else {
        (0..h).map(|_| BigInt::from(rng.gen_range(-30i64..=30))).collect()
    };
    (t, z)
}

fn a6() -> Outcome {
    let names = ["abelian:2", "abelian:3", "heisenberg", "product(heisenberg,abelian:1)", "scaled(heisenberg;2,1,2)"];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut members = 0;
    for name in names {
        let n = catalog_make(name).map_err(|e| e.to_string())?;
        let h = n.hirsch_length();
        let conds = membership_conditions(&n).map_err(|e| e.to_string())?;
        for _ in 0..200 {
            let p = [2u64, 3, 5][rng.gen_range(0..3)];
            let (t, z) = random_instance(&n, p, &mut rng);
            let direct = membership_oracle(&n, &t, &z, p, 1 << 16).map_err(|e| e.to_string())?;
            let algo = conditions_verdict(&conds, h, &t, &z, p);
            check(direct == algo, || format!("{name} p={p} t={t:?} z={z:?}: conditions {algo}, direct {direct}"))?;
            members += usize::from(direct);
        }
    }
    Ok(format!("{} instances over {} groups, 0 disagreements ({members} members)", 200 * names.len(), names.len()))
}

// ---- A7 ------------------------------------------------------------------------

fn a7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut total = 0;
    for name in ["abelian:2", "abelian:3", "heisenberg"] {
        let n = catalog_make(name).map_err(|e| e.to_string())?;
        let h = n.hirsch_length();
        for p in [2u64, 3] {
            for _ in 0..20 {
                let t = random_good_basis(&n, p, 2, &mut rng).map_err(|e| e.to_string())?;
                let m: Vec<u32> = (0..h).map(|i| vp_int(&t[i][i], p).unwrap()).collect();
                let one_minus = Rational::one() - Rational::new(BigInt::one(), BigInt::from(p));
                let weighted: i64 = m.iter().enumerate().map(|(i, &mi)| (i as i64 + 1) * mi as i64).sum();
                let want = num_traits::pow(one_minus, h) * pow_rat(p, -weighted);
                let got = good_basis_measure(&n, &t, p).map_err(|e| e.to_string())?;
                check(got == want, || format!("{name} p={p} t={t:?}: measure {got} vs {want}"))?;
                let idx = basis_index(&n, &t, p).map_err(|e| e.to_string())?;
                let want_idx = p.pow(m.iter().sum());
                check(idx == want_idx, || format!("{name} p={p} t={t:?}: index {idx} vs {want_idx}"))?;
                let x = GroupElement((0..h).map(|_| BigInt::from(rng.gen_range(-9i64..=9))).collect());
                let cm = coset_measure(&n, &t, &x, p).map_err(|e| e.to_string())?;
                check(cm == Rational::new(BigInt::one(), BigInt::from(idx)), || format!("{name} p={p}: coset measure {cm}"))?;
                total += 1;
            }
        }
    }
    Ok(format!("{total} random good bases: measure, index and coset measure exact"))
}

// ---- A8 ------------------------------------------------------------------------

fn a8() -> Outcome {
    // 1. mutated Heisenberg: f3 = X3 + Y3 - 2 X2 Y1 with the original inverse
    let h = heisenberg().map_err(|e| e.to_string())?;
    let mut f = h.f().to_vec();
    let xy = f[2].vars().clone();
    let x2y1 = &Polynomial::var(&xy, 1) * &Polynomial::var(&xy, 3);
    f[2] = &f[2] - &x2y1;
    let mutated = MalcevPresentation::new("heisenberg-mutated", 2, f, h.g().to_vec(), None).map_err(|e| e.to_string())?;
    let report = verify_presentation(&mutated, 10, 60, 8);
    check(!report.all_passed(), || "mutated presentation passed verification".into())?;

    // 2. corrupted system: drop T33 | T12 from the normal-variant system
    let mut sys = good_basis_conditions(&h, Variant::Normal).map_err(|e| e.to_string())?;
    let t12 = Polynomial::var(&sys.vars, t_index(3, 0, 1));
    let before = sys.conditions.len();
    sys.conditions.retain(|c| c.num != t12);
    check(sys.conditions.len() + 1 == before, || "T33 | T12 not found in the system".into())?;
    let v = VirtuallyTauGroup::trivial(h.clone());
    let k = fin_subgroups(v.quotient(), Variant::Normal).remove(0);
    let row = compare_system(&sys, &v, &k, 2, 3, &eval(), &OracleConfig::default());
    check(row.verdict == Verdict::Mismatch, || format!("corrupted system verdict {:?}", row.verdict))?;

    // 3. a non-integral count aborts
    let z2 = abelian(2).map_err(|e| e.to_string())?;
    let mut bad = good_basis_conditions(&z2, Variant::Subgroup).map_err(|e| e.to_string())?;
    let tv = |i, j| Polynomial::var(&bad.vars, t_index(2, i, j));
    bad.conditions.push(ConeCondition { num: tv(0, 1), den: tv(0, 0).pow(3) });
    let res = nilzeta::evaluator::system_counts(&bad, 2, 2, &eval());
    check(matches!(res, Err(Error::Consistency(_))), || format!("non-integral system gave {res:?}"))?;
    check(matches!(counts_from_coeffs(&[Rational::one(), Rational::new(1.into(), 3.into())], 2, 1, 1), Err(Error::Consistency(_))), || {
        "fractional coefficient accepted".into()
    })?;
    Ok(format!(
        "mutated presentation rejected ({}); corrupted system mismatch (cone {:?} vs oracle {:?}); non-integral count aborted",
        report.failures().first().cloned().unwrap_or_default(),
        row.cone.unwrap_or_default(),
        row.oracle.unwrap_or_default()
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 8] = [
        ("A1", a1, Duration::from_secs(5)),
        ("A2", a2, Duration::from_secs(60)),
        ("A3", a3, Duration::from_secs(600)),
        ("A4", a4, Duration::from_secs(60)),
        ("A5", a5, Duration::from_secs(10)),
        ("A6", a6, Duration::from_secs(60)),
        ("A7", a7, Duration::from_secs(60)),
        ("A8", a8, Duration::from_secs(60)),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run, limit) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed();
        let outcome = match outcome {
            Ok(_) if secs > limit => Err(format!("runtime {:.1}s exceeds {}s", secs.as_secs_f64(), limit.as_secs())),
            o => o,
        };
        match outcome {
            Ok(detail) => println!("{name} PASS ({:.2}s) {detail}", secs.as_secs_f64()),
            Err(detail) => {
                failed += 1;
                println!("{name} FAIL ({:.2}s) {detail}", secs.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
