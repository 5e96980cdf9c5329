use std::collections::BTreeMap;

use proptest::prelude::*;

use nilzeta::evaluator::{local_counts, CountSource, EvalConfig};
use nilzeta::extension::{extension_catalog, fin_subgroups, VirtuallyTauGroup};
use nilzeta::malcev::{catalog_make, heisenberg};
use nilzeta::oracle::{oracle_counts, OracleConfig};
use nilzeta::zeta::{assemble_global, global_from_tables, LocalTables};
use nilzeta::Variant;

fn cfg() -> EvalConfig {
    EvalConfig::default()
}

fn counts(source: CountSource<'_>, variant: Variant, p: u64, kmax: u32) -> Vec<u128> {
    local_counts(source, variant, p, kmax, &cfg()).unwrap().counts_u128().unwrap()
}

/// Coefficients of `prod_i zeta_p(a_i s - b_i)^{e_i}` in `X = p^{-s}` up to
/// `X^kmax`, with `zeta_p(a s - b) = 1 / (1 - p^b X^a)`; `e_i = -1` divides.
fn euler_factor(p: u64, kmax: usize, factors: &[(usize, u32, i32)]) -> Vec<i128> {
    let mut series = vec![0i128; kmax + 1];
    series[0] = 1;
    for &(a, b, e) in factors {
        let c = (p as i128).pow(b);
        if e > 0 {
            // multiply by 1 / (1 - c X^a)
            for k in a..=kmax {
                series[k] += c * series[k - a];
            }
        } else {
            for k in (a..=kmax).rev() {
                series[k] -= c * series[k - a];
            }
        }
    }
    series
}

#[test]
fn heisenberg_matches_known_euler_factors() {
    let n = heisenberg().unwrap();
    for p in [2u64, 3] {
        let kmax = if p == 2 { 4 } else { 3 };
        let all = euler_factor(p, kmax, &[(1, 0, 1), (1, 1, 1), (2, 2, 1), (2, 3, 1), (3, 3, -1)]);
        let got: Vec<i128> = counts(CountSource::Tau(&n), Variant::Subgroup, p, kmax as u32).iter().map(|&c| c as i128).collect();
        assert_eq!(got, all, "subgroups p={p}");
        let normal = euler_factor(p, kmax, &[(1, 0, 1), (1, 1, 1), (3, 2, 1)]);
        let got: Vec<i128> = counts(CountSource::Tau(&n), Variant::Normal, p, kmax as u32).iter().map(|&c| c as i128).collect();
        assert_eq!(got, normal, "normal subgroups p={p}");
    }
}

#[test]
fn abelian_rank_three_matches_euler_factor() {
    let n = catalog_make("abelian:3").unwrap();
    for p in [2u64, 3, 5] {
        let want = euler_factor(p, 3, &[(1, 0, 1), (1, 1, 1), (1, 2, 1)]);
        let got: Vec<i128> = counts(CountSource::Tau(&n), Variant::Subgroup, p, 3).iter().map(|&c| c as i128).collect();
        assert_eq!(got, want);
    }
}

#[test]
fn extension_catalog_cone_matches_oracle() {
    for name in ["dinfty", "z-over-c2", "heisenberg-c2", "swap-c2", "s3-trivial:1"] {
        let g = extension_catalog(name).unwrap();
        for variant in [Variant::Subgroup, Variant::Normal] {
            for k in fin_subgroups(g.quotient(), variant) {
                for p in [2u64, 3] {
                    let cone = counts(CountSource::Relative(&g, &k), variant, p, 2);
                    let o = oracle_counts(CountSource::Relative(&g, &k), variant, p, 2, None, &OracleConfig::default()).unwrap();
                    assert!(o.stable, "{name} {variant} K={:?} p={p}: oracle unstable", k.members);
                    assert_eq!(cone, o.series.counts_u128().unwrap(), "{name} {variant} K={:?} p={p}", k.members);
                }
            }
        }
    }
}

#[test]
fn nonabelian_commensurability_at_good_primes() {
    let a = heisenberg().unwrap();
    let b = catalog_make("scaled(heisenberg;2,1,2)").unwrap();
    for p in [3u64, 5] {
        for variant in [Variant::Subgroup, Variant::Normal] {
            assert_eq!(counts(CountSource::Tau(&a), variant, p, 2), counts(CountSource::Tau(&b), variant, p, 2));
        }
    }
}

#[test]
fn trivial_extension_matches_tau_group() {
    let n = heisenberg().unwrap();
    let v = VirtuallyTauGroup::trivial(n.clone());
    let k = &fin_subgroups(v.quotient(), Variant::Subgroup)[0];
    for variant in [Variant::Subgroup, Variant::Normal] {
        assert_eq!(counts(CountSource::Relative(&v, k), variant, 2, 3), counts(CountSource::Tau(&n), variant, 2, 3));
    }
}

#[test]
fn heisenberg_global_is_multiplicative_and_matches_local() {
    let v = VirtuallyTauGroup::trivial(heisenberg().unwrap());
    let s = assemble_global(&v, Variant::Subgroup, 16, &cfg()).unwrap();
    assert_eq!(s.coeff(1), Some(1));
    for (m, n) in [(2u64, 3u64), (3, 4), (2, 5), (4, 3), (2, 7), (3, 5)] {
        assert_eq!(s.coeff(m * n).unwrap(), s.coeff(m).unwrap() * s.coeff(n).unwrap());
    }
    let local = counts(CountSource::Tau(v.n()), Variant::Subgroup, 2, 4);
    for k in 0..=4u32 {
        assert_eq!(s.coeff(2u64.pow(k)).unwrap(), local[k as usize]);
    }
}

#[test]
fn normal_dihedral_global_uses_only_normal_k() {
    let d = extension_catalog("dinfty").unwrap();
    let s = assemble_global(&d, Variant::Normal, 8, &cfg()).unwrap();
    // normal subgroups of finite index: <x^m> (index 2m) and <x^m, x^j y> with m | 2 and 2j = 0 mod m
    let want: Vec<u128> = (1..=8u64)
        .map(|n| {
            let rotations = u128::from(n % 2 == 0);
            let dihedral = match n {
                1 => 1,
                2 => 2,
                _ => 0,
            };
            rotations + dihedral
        })
        .collect();
    assert_eq!(s.coeffs, want);
}

proptest! {
    #[test]
    fn assembled_series_is_multiplicative(t2 in prop::collection::vec(0u128..50, 3), t3 in prop::collection::vec(0u128..50, 2)) {
        let mut tables = LocalTables::new();
        tables.insert(2, [vec![1], t2].concat());
        tables.insert(3, [vec![1], t3].concat());
        tables.insert(5, vec![1, 6]);
        tables.insert(7, vec![1, 8]);
        tables.insert(11, vec![1, 12]);
        let s = global_from_tables("t", &[(1, tables)], 12).unwrap();
        for (m, n) in [(2u64, 3u64), (4, 3), (2, 5), (3, 4)] {
            prop_assert_eq!(s.coeff(m * n).unwrap(), s.coeff(m).unwrap() * s.coeff(n).unwrap());
        }
        prop_assert_eq!(s.coeff(1), Some(1));
    }

    #[test]
    fn index_two_subgroups_shift_the_series(a in prop::collection::vec(0u128..20, 2)) {
        let mut full = LocalTables::new();
        full.insert(2, [vec![1], a.clone()].concat());
        full.insert(3, vec![1, 1]);
        let mut sub = BTreeMap::new();
        sub.insert(2u64, vec![1u128, 0]);
        sub.insert(3u64, vec![1u128]);
        let s = global_from_tables("t", &[(1, full), (2, sub)], 4).unwrap();
        prop_assert_eq!(s.coeff(2).unwrap(), a[0] + 1);
        prop_assert_eq!(s.coeff(4).unwrap(), a[1]);
    }
}
