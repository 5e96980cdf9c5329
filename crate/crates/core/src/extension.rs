//! Finite extensions `1 -> N -> G -> F -> 1` of a torsion-free nilpotent
//! group by a finite group, encoded by a coordinate action `sigma` and a
//! cocycle `psi`, together with the structure words the cone generator
//! consumes.
//!
//! Elements of `G` are pairs `(a, f)` with product
//! `(a, f) * (b, f') = (a sigma_f(b) psi(f, f'), f f')`. The transversal is
//! always `g_f = (0, f)`.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::malcev::{self, random_element, x_vars, GroupElement, MalcevPresentation, PresentationJson, VerificationReport};
use crate::polyring::{PolyJson, Polynomial, Rational, Vars};
use crate::Variant;

// ---- finite groups ------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteGroup {
    table: Vec<Vec<usize>>,
    inverse: Vec<usize>,
}

impl FiniteGroup {
    /// Validate a multiplication table with element 0 as identity.
    pub fn from_table(table: Vec<Vec<usize>>) -> Result<Self> {
        let n = table.len();
        if n == 0 || table.iter().any(|row| row.len() != n || row.iter().any(|&x| x >= n)) {
            return Err(Error::Structural("multiplication table must be square over 0..order".into()));
        }
        for a in 0..n {
            if table[0][a] != a || table[a][0] != a {
                return Err(Error::Structural("element 0 must be the identity".into()));
            }
        }
        let mut inverse = vec![usize::MAX; n];
        for a in 0..n {
            match (0..n).find(|&b| table[a][b] == 0 && table[b][a] == 0) {
                Some(b) => inverse[a] = b,
                None => return Err(Error::Structural(format!("element {a} has no inverse"))),
            }
        }
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    if table[table[a][b]][c] != table[a][table[b][c]] {
                        return Err(Error::Structural(format!("table not associative at ({a},{b},{c})")));
                    }
                }
            }
        }
        Ok(FiniteGroup { table, inverse })
    }

    pub fn trivial() -> Self {
        Self::cyclic(1)
    }

    pub fn cyclic(n: usize) -> Self {
        let table = (0..n).map(|a| (0..n).map(|b| (a + b) % n).collect()).collect();
        Self::from_table(table).expect("cyclic table")
    }

    /// Symmetric group on `k` letters, identity first, permutations in
    /// lexicographic order.
    pub fn symmetric(k: usize) -> Self {
        let mut perms: Vec<Vec<usize>> = vec![];
        let mut cur: Vec<usize> = (0..k).collect();
        loop {
            perms.push(cur.clone());
            // next lexicographic permutation
            let Some(i) = (0..k.saturating_sub(1)).rev().find(|&i| cur[i] < cur[i + 1]) else { break };
            let j = (i + 1..k).rev().find(|&j| cur[j] > cur[i]).unwrap();
            cur.swap(i, j);
            cur[i + 1..].reverse();
        }
        let index: BTreeMap<Vec<usize>, usize> = perms.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
        let table = perms
            .iter()
            .map(|a| perms.iter().map(|b| index[&(0..k).map(|x| a[b[x]]).collect::<Vec<_>>()]).collect())
            .collect();
        Self::from_table(table).expect("symmetric table")
    }

    pub fn order(&self) -> usize {
        self.table.len()
    }

    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.table[a][b]
    }

    pub fn inv(&self, a: usize) -> usize {
        self.inverse[a]
    }

    pub fn table(&self) -> &[Vec<usize>] {
        &self.table
    }

    fn closure(&self, gens: impl IntoIterator<Item = usize>) -> BTreeSet<usize> {
        let gens: Vec<usize> = gens.into_iter().collect();
        let mut set: BTreeSet<usize> = std::iter::once(0).collect();
        let mut frontier = vec![0];
        while let Some(x) = frontier.pop() {
            for &g in &gens {
                let y = self.mul(x, g);
                if set.insert(y) {
                    frontier.push(y);
                }
            }
        }
        set
    }

    pub fn is_normal(&self, members: &BTreeSet<usize>) -> bool {
        (0..self.order()).all(|g| members.iter().all(|&k| members.contains(&self.mul(self.mul(g, k), self.inv(g)))))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubgroupOfF {
    pub members: Vec<usize>,
    pub index: usize,
    pub normal: bool,
}

impl SubgroupOfF {
    pub fn order(&self) -> usize {
        self.members.len()
    }

    pub fn contains(&self, f: usize) -> bool {
        self.members.binary_search(&f).is_ok()
    }

    /// Members other than the identity.
    pub fn nontrivial(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().copied().filter(|&f| f != 0)
    }
}

/// All subgroups (or all normal subgroups) of `F`, ordered by size then
/// by member list. Every subgroup is a join of cyclic subgroups, so the
/// family is grown from the cyclic ones by pairwise joins until stable.
pub fn fin_subgroups(group: &FiniteGroup, variant: Variant) -> Vec<SubgroupOfF> {
    let mut all: BTreeSet<BTreeSet<usize>> = (0..group.order()).map(|g| group.closure([g])).collect();
    loop {
        let current: Vec<BTreeSet<usize>> = all.iter().cloned().collect();
        let mut grew = false;
        for (i, a) in current.iter().enumerate() {
            for b in &current[i + 1..] {
                let j = group.closure(a.iter().chain(b).copied());
                grew |= all.insert(j);
            }
        }
        if !grew {
            break;
        }
    }
    let mut out: Vec<SubgroupOfF> = all
        .into_iter()
        .map(|s| {
            let normal = group.is_normal(&s);
            SubgroupOfF { index: group.order() / s.len(), members: s.into_iter().collect(), normal }
        })
        .filter(|s| variant == Variant::Subgroup || s.normal)
        .collect();
    out.sort_by(|a, b| a.members.len().cmp(&b.members.len()).then_with(|| a.members.cmp(&b.members)));
    out
}

// ---- extensions ---------------------------------------------------------------

/// `(coordinates, F-element)`
pub type ExtElement = (GroupElement, usize);

#[derive(Clone, Debug)]
pub struct CocycleData {
    pub n: MalcevPresentation,
    pub f: FiniteGroup,
    /// Coordinate action of `sigma(f)`, an `h`-tuple over `X1..Xh`.
    pub sigma: Vec<Vec<Polynomial>>,
    /// `psi[f][f']`
    pub psi: Vec<Vec<GroupElement>>,
}

#[derive(Clone, Debug)]
pub struct VirtuallyTauGroup {
    name: String,
    cocycle: CocycleData,
}

fn identity_action(h: usize) -> Vec<Polynomial> {
    let xs = x_vars(h);
    (0..h).map(|i| Polynomial::var(&xs, i)).collect()
}

impl VirtuallyTauGroup {
    /// Assemble and check shape and normalisation. Group laws are checked
    /// separately by [`verify_cocycle`].
    pub fn new(name: impl Into<String>, cocycle: CocycleData) -> Result<Self> {
        let h = cocycle.n.hirsch_length();
        let ord = cocycle.f.order();
        let xs = x_vars(h);
        if cocycle.sigma.len() != ord || cocycle.sigma.iter().any(|s| s.len() != h || s.iter().any(|p| *p.vars() != xs)) {
            return Err(Error::Structural(format!("sigma needs {ord} tuples of {h} polynomials over X1..X{h}")));
        }
        if cocycle.psi.len() != ord || cocycle.psi.iter().any(|r| r.len() != ord || r.iter().any(|v| v.len() != h)) {
            return Err(Error::Structural(format!("psi needs an {ord}x{ord} table of {h}-vectors")));
        }
        for f in 0..ord {
            if !cocycle.psi[0][f].is_identity() || !cocycle.psi[f][0].is_identity() {
                return Err(Error::Structural("psi must be normalised: psi(1, f) = psi(f, 1) = 0".into()));
            }
        }
        if cocycle.sigma[0] != identity_action(h) {
            return Err(Error::Structural("sigma of the identity must be the identity map".into()));
        }
        Ok(VirtuallyTauGroup { name: name.into(), cocycle })
    }

    /// `N` itself, viewed as an extension by the trivial group.
    pub fn trivial(n: MalcevPresentation) -> Self {
        let h = n.hirsch_length();
        let name = n.name().to_string();
        let cocycle = CocycleData {
            n,
            f: FiniteGroup::trivial(),
            sigma: vec![identity_action(h)],
            psi: vec![vec![GroupElement::identity(h)]],
        };
        VirtuallyTauGroup { name, cocycle }
    }

    /// Split extension `N x| F` with zero cocycle.
    pub fn semidirect(name: impl Into<String>, n: MalcevPresentation, f: FiniteGroup, sigma: Vec<Vec<Polynomial>>) -> Result<Self> {
        let h = n.hirsch_length();
        let ord = f.order();
        let psi = vec![vec![GroupElement::identity(h); ord]; ord];
        Self::new(name, CocycleData { n, f, sigma, psi })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn cocycle(&self) -> &CocycleData {
        &self.cocycle
    }

    pub fn n(&self) -> &MalcevPresentation {
        &self.cocycle.n
    }

    pub fn quotient(&self) -> &FiniteGroup {
        &self.cocycle.f
    }

    pub fn hirsch_length(&self) -> usize {
        self.cocycle.n.hirsch_length()
    }

    pub fn is_trivial_extension(&self) -> bool {
        self.cocycle.f.order() == 1
    }

    pub fn sigma_apply(&self, f: usize, a: &GroupElement) -> Result<GroupElement> {
        let pt: Vec<Rational> = a.0.iter().cloned().map(Rational::from_integer).collect();
        let vals = self.cocycle.sigma[f].iter().map(|p| p.eval(&pt)).collect::<Result<Vec<_>>>()?;
        vals.into_iter()
            .map(|r| {
                if r.is_integer() {
                    Ok(r.to_integer())
                } else {
                    Err(Error::Integrality(format!("sigma_{f} produced {r}")))
                }
            })
            .collect::<Result<Vec<_>>>()
            .map(GroupElement)
    }

    pub fn ext_multiply(&self, x: &ExtElement, y: &ExtElement) -> Result<ExtElement> {
        let n = &self.cocycle.n;
        let (a, f) = x;
        let (b, f2) = y;
        let t = n.multiply(a, &self.sigma_apply(*f, b)?)?;
        let t = n.multiply(&t, &self.cocycle.psi[*f][*f2])?;
        Ok((t, self.cocycle.f.mul(*f, *f2)))
    }

    pub fn ext_identity(&self) -> ExtElement {
        (GroupElement::identity(self.hirsch_length()), 0)
    }

    pub fn ext_inverse(&self, x: &ExtElement) -> Result<ExtElement> {
        let n = &self.cocycle.n;
        let (a, f) = x;
        let finv = self.cocycle.f.inv(*f);
        // (0, f)^-1 = (psi(f^-1, f)^-1, f^-1) and (a, f) = (a, 1)(0, f)
        let gi = (n.inverse(&self.cocycle.psi[finv][*f])?, finv);
        self.ext_multiply(&gi, &(n.inverse(a)?, 0))
    }

    /// The transversal element `g_f = (0, f)`.
    pub fn transversal(&self, f: usize) -> ExtElement {
        (GroupElement::identity(self.hirsch_length()), f)
    }

    pub fn to_json(&self) -> ExtensionJson {
        let c = &self.cocycle;
        let ord = c.f.order();
        let mut sigma = BTreeMap::new();
        let mut psi = BTreeMap::new();
        for f in 1..ord {
            sigma.insert(f.to_string(), c.sigma[f].iter().map(Polynomial::to_json).collect());
            for f2 in 1..ord {
                if !c.psi[f][f2].is_identity() {
                    psi.insert(
                        format!("{f},{f2}"),
                        c.psi[f][f2].0.iter().map(|x| x.to_i64().expect("psi entry fits i64")).collect(),
                    );
                }
            }
        }
        ExtensionJson {
            schema: 1,
            name: Some(self.name.clone()),
            group: GroupRef::Inline(c.n.to_json()),
            quotient: FiniteGroupJson { order: ord, table: c.f.table.clone() },
            sigma,
            psi,
        }
    }

    /// Parse, normalise-check and verify the cocycle on samples.
    pub fn from_json(json: &ExtensionJson) -> Result<Self> {
        if json.schema != 1 {
            return Err(Error::Usage(format!("unsupported extension schema {}", json.schema)));
        }
        let n = match &json.group {
            GroupRef::Catalog(name) => malcev::catalog_make(name)?,
            GroupRef::Inline(p) => MalcevPresentation::from_json(p)?,
        };
        let h = n.hirsch_length();
        if json.quotient.order != json.quotient.table.len() {
            return Err(Error::Structural("quotient order disagrees with its table".into()));
        }
        let f = FiniteGroup::from_table(json.quotient.table.clone())?;
        let ord = f.order();
        let xs: Vars = x_vars(h);
        let mut sigma = vec![identity_action(h); ord];
        for (k, polys) in &json.sigma {
            let idx: usize = k.trim().parse().map_err(|_| Error::Structural(format!("bad sigma key {k:?}")))?;
            if idx >= ord || polys.len() != h {
                return Err(Error::Structural(format!("sigma entry {k:?} has the wrong shape")));
            }
            sigma[idx] = polys.iter().map(|p| Polynomial::from_json(&xs, p)).collect::<Result<_>>()?;
        }
        let mut psi = vec![vec![GroupElement::identity(h); ord]; ord];
        for (k, v) in &json.psi {
            let (a, b) = k.split_once(',').ok_or_else(|| Error::Structural(format!("bad psi key {k:?}")))?;
            let a: usize = a.trim().parse().map_err(|_| Error::Structural(format!("bad psi key {k:?}")))?;
            let b: usize = b.trim().parse().map_err(|_| Error::Structural(format!("bad psi key {k:?}")))?;
            if a >= ord || b >= ord || v.len() != h {
                return Err(Error::Structural(format!("psi entry {k:?} has the wrong shape")));
            }
            psi[a][b] = GroupElement::from_i64(v);
        }
        let v = VirtuallyTauGroup::new(json.name.clone().unwrap_or_else(|| "json".into()), CocycleData { n, f, sigma, psi })?;
        let report = verify_cocycle(&v, 6, 40, 0xc0c);
        if !report.all_passed() {
            return Err(Error::Verification(format!("extension {} rejected: {}", v.name, report.failures().join("; "))));
        }
        Ok(v)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiniteGroupJson {
    pub order: usize,
    pub table: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroupRef {
    Catalog(String),
    Inline(PresentationJson),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtensionJson {
    pub schema: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub group: GroupRef,
    #[serde(rename = "F")]
    pub quotient: FiniteGroupJson,
    #[serde(default)]
    pub sigma: BTreeMap<String, Vec<PolyJson>>,
    #[serde(default)]
    pub psi: BTreeMap<String, Vec<i64>>,
}

/// Sampled group laws of the twisted product plus the exhaustive cocycle
/// identity over `F`.
pub fn verify_cocycle(v: &VirtuallyTauGroup, bound: i64, samples: usize, seed: u64) -> VerificationReport {
    let h = v.hirsch_length();
    let ord = v.quotient().order();
    let n = v.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = VerificationReport::default();
    let id = v.ext_identity();

    let rand_ext = |rng: &mut ChaCha8Rng| -> ExtElement { (random_element(rng, h, bound), rng.gen_range(0..ord)) };

    let mut run = |name: &'static str, report: &mut VerificationReport, body: &mut dyn FnMut(&mut ChaCha8Rng) -> Result<Option<String>>| {
        let mut outcome = Ok(());
        for _ in 0..samples {
            match body(&mut rng) {
                Ok(None) => {}
                Ok(Some(m)) => {
                    outcome = Err(m);
                    break;
                }
                Err(e) => {
                    outcome = Err(format!("evaluation failed: {e}"));
                    break;
                }
            }
        }
        report.record(name, outcome);
    };

    run("sigma_homomorphism", &mut report, &mut |rng| {
        let f = rng.gen_range(0..ord);
        let a = random_element(rng, h, bound);
        let b = random_element(rng, h, bound);
        let l = v.sigma_apply(f, &n.multiply(&a, &b)?)?;
        let r = n.multiply(&v.sigma_apply(f, &a)?, &v.sigma_apply(f, &b)?)?;
        Ok((l != r).then(|| format!("f = {f}, a = {:?}, b = {:?}", a.0, b.0)))
    });
    run("twisted_associativity", &mut report, &mut |rng| {
        let x = rand_ext(rng);
        let y = rand_ext(rng);
        let z = rand_ext(rng);
        let l = v.ext_multiply(&v.ext_multiply(&x, &y)?, &z)?;
        let r = v.ext_multiply(&x, &v.ext_multiply(&y, &z)?)?;
        Ok((l != r).then(|| format!("({:?},{}) ({:?},{}) ({:?},{})", x.0 .0, x.1, y.0 .0, y.1, z.0 .0, z.1)))
    });
    run("identity", &mut report, &mut |rng| {
        let x = rand_ext(rng);
        let ok = v.ext_multiply(&x, &id)? == x && v.ext_multiply(&id, &x)? == x;
        Ok((!ok).then(|| format!("({:?},{})", x.0 .0, x.1)))
    });
    run("inverse", &mut report, &mut |rng| {
        let x = rand_ext(rng);
        let xi = v.ext_inverse(&x)?;
        let ok = v.ext_multiply(&x, &xi)? == id && v.ext_multiply(&xi, &x)? == id;
        Ok((!ok).then(|| format!("({:?},{})", x.0 .0, x.1)))
    });

    let mut cocycle_identity = Ok(());
    'outer: for a in 0..ord {
        for b in 0..ord {
            for c in 0..ord {
                let ga = v.transversal(a);
                let gb = v.transversal(b);
                let gc = v.transversal(c);
                let l = v.ext_multiply(&ga, &gb).and_then(|t| v.ext_multiply(&t, &gc));
                let r = v.ext_multiply(&gb, &gc).and_then(|t| v.ext_multiply(&ga, &t));
                match (l, r) {
                    (Ok(l), Ok(r)) if l == r => {}
                    (Ok(_), Ok(_)) => {
                        cocycle_identity = Err(format!("fails at ({a},{b},{c})"));
                        break 'outer;
                    }
                    (Err(e), _) | (_, Err(e)) => {
                        cocycle_identity = Err(e.to_string());
                        break 'outer;
                    }
                }
            }
        }
    }
    report.record("cocycle_identity", cocycle_identity);
    report
}

/// Elements `f` for which the canonical transversal violates
/// `g_{f^-1} = g_f^-1`, i.e. `psi(f^-1, f) != 0`.
pub fn transversal_convention_failures(v: &VirtuallyTauGroup) -> Vec<usize> {
    let c = v.cocycle();
    (1..c.f.order()).filter(|&f| !c.psi[c.f.inv(f)][f].is_identity()).collect()
}

// ---- structure words ----------------------------------------------------------

/// `U1..Uh`
pub fn u_vars(h: usize) -> Vars {
    let names: Vec<String> = (1..=h).map(|i| format!("U{i}")).collect();
    names.into()
}

#[derive(Clone, Debug)]
pub struct StructureWords {
    /// `l[f][i]`: coordinates of `g_f^-1 x_i g_f`.
    pub l: Vec<Vec<GroupElement>>,
    /// `n[f][f']`: coordinates with `g_f g_f' = g_{ff'} x^n`.
    pub n: Vec<Vec<GroupElement>>,
    /// `p[f]`: polynomial map with `g_f^-1 x^u g_f = x^{p_f(u)}`, over `U1..Uh`.
    pub p: Vec<Vec<Polynomial>>,
}

fn unit(h: usize, i: usize) -> GroupElement {
    let mut e = GroupElement::identity(h);
    e.0[i] = BigInt::one();
    e
}

fn const_tuple(ring: &Vars, a: &GroupElement) -> Vec<Polynomial> {
    a.0.iter().map(|x| Polynomial::constant(ring, Rational::from_integer(x.clone()))).collect()
}

/// Conjugation and transversal-defect words for every `f`, with the
/// folded conjugation polynomials checked against direct conjugation on
/// sampled points.
pub fn structure_words(v: &VirtuallyTauGroup) -> Result<StructureWords> {
    let h = v.hirsch_length();
    let ord = v.quotient().order();
    let n = v.n();
    let fg = v.quotient();

    let in_n = |x: ExtElement, what: &str| -> Result<GroupElement> {
        if x.1 != 0 {
            return Err(Error::Internal(format!("{what} left the normal subgroup")));
        }
        Ok(x.0)
    };

    let mut l = Vec::with_capacity(ord);
    for f in 0..ord {
        let g = v.transversal(f);
        let gi = v.ext_inverse(&g)?;
        let row = (0..h)
            .map(|i| {
                let t = v.ext_multiply(&gi, &(unit(h, i), 0))?;
                in_n(v.ext_multiply(&t, &g)?, "conjugate of a basis element")
            })
            .collect::<Result<Vec<_>>>()?;
        l.push(row);
    }

    let mut nn = vec![vec![GroupElement::identity(h); ord]; ord];
    for f in 0..ord {
        for f2 in 0..ord {
            let prod = v.ext_multiply(&v.transversal(f), &v.transversal(f2))?;
            let gi = v.ext_inverse(&v.transversal(fg.mul(f, f2)))?;
            nn[f][f2] = in_n(v.ext_multiply(&gi, &prod)?, "transversal defect")?;
        }
    }

    let ring = u_vars(h);
    let mut p = Vec::with_capacity(ord);
    for f in 0..ord {
        let mut acc: Option<Vec<Polynomial>> = None;
        for i in 0..h {
            let term = n.pow_sym(&const_tuple(&ring, &l[f][i]), &Polynomial::var(&ring, i))?;
            acc = Some(match acc {
                None => term,
                Some(a) => n.mul_sym(&a, &term)?,
            });
        }
        p.push(acc.expect("h >= 1"));
    }

    let words = StructureWords { l, n: nn, p };
    check_structure_words(v, &words, 40, 0x5707)?;
    Ok(words)
}

fn check_structure_words(v: &VirtuallyTauGroup, w: &StructureWords, samples: usize, seed: u64) -> Result<()> {
    let h = v.hirsch_length();
    let ord = v.quotient().order();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for f in 0..ord {
        if !w.n[0][f].is_identity() || !w.n[f][0].is_identity() {
            return Err(Error::Internal(format!("transversal defect at the identity is nonzero for f = {f}")));
        }
        let g = v.transversal(f);
        let gi = v.ext_inverse(&g)?;
        for _ in 0..samples {
            let u = random_element(&mut rng, h, 8);
            let direct = v.ext_multiply(&v.ext_multiply(&gi, &(u.clone(), 0))?, &g)?;
            let pt: Vec<Rational> = u.0.iter().cloned().map(Rational::from_integer).collect();
            let folded = w.p[f].iter().map(|q| q.eval(&pt)).collect::<Result<Vec<_>>>()?;
            let direct_r: Vec<Rational> = direct.0 .0.iter().cloned().map(Rational::from_integer).collect();
            if direct.1 != 0 || folded != direct_r {
                return Err(Error::Internal(format!(
                    "conjugation polynomials for f = {f} disagree with the extension at u = {:?}",
                    u.0
                )));
            }
        }
    }
    Ok(())
}

// ---- catalog ------------------------------------------------------------------

fn action(h: usize, rows: &[&[(usize, i64)]]) -> Vec<Polynomial> {
    let xs = x_vars(h);
    rows.iter()
        .map(|terms| {
            terms.iter().fold(Polynomial::zero(&xs), |acc, &(i, c)| &acc + &Polynomial::var(&xs, i).scale(&crate::polyring::rat(c)))
        })
        .collect()
}

/// Built-in extensions:
/// `dinfty` (Z x| C2 by inversion), `z-over-c2` (Z with N = 2Z, written on
/// the basis of 2Z with psi(t,t) = 1), `heisenberg-c2` (inverting x1, x2),
/// `swap-c2` (Z^2 with the coordinate swap), `s3-trivial:H` (Z^H x S3) and
/// `trivial(NAME)` for any presentation catalog name.
pub fn extension_catalog(name: &str) -> Result<VirtuallyTauGroup> {
    let s = name.trim();
    let c2 = FiniteGroup::cyclic(2);
    let v = match s {
        "dinfty" => VirtuallyTauGroup::semidirect("dinfty", malcev::abelian(1)?, c2, vec![identity_action(1), action(1, &[&[(0, -1)]])])?,
        "z-over-c2" => {
            let h = 1;
            let psi = vec![vec![GroupElement::identity(h); 2], vec![GroupElement::identity(h), GroupElement::from_i64(&[1])]];
            VirtuallyTauGroup::new(
                "z-over-c2",
                CocycleData { n: malcev::abelian(1)?, f: c2, sigma: vec![identity_action(1); 2], psi },
            )?
        }
        "heisenberg-c2" => VirtuallyTauGroup::semidirect(
            "heisenberg-c2",
            malcev::heisenberg()?,
            c2,
            vec![identity_action(3), action(3, &[&[(0, -1)], &[(1, -1)], &[(2, 1)]])],
        )?,
        "swap-c2" => VirtuallyTauGroup::semidirect(
            "swap-c2",
            malcev::abelian(2)?,
            c2,
            vec![identity_action(2), action(2, &[&[(1, 1)], &[(0, 1)]])],
        )?,
        _ => {
            if let Some(h) = s.strip_prefix("s3-trivial:") {
                let n = malcev::catalog_make(&format!("abelian:{h}"))?;
                let hh = n.hirsch_length();
                VirtuallyTauGroup::semidirect(s, n, FiniteGroup::symmetric(3), vec![identity_action(hh); 6])?
            } else if let Some(inner) = s.strip_prefix("trivial(").and_then(|r| r.strip_suffix(')')) {
                VirtuallyTauGroup::trivial(malcev::catalog_make(inner)?)
            } else {
                return Err(Error::Usage(format!("unknown extension {s:?}")));
            }
        }
    };
    let report = verify_cocycle(&v, 6, 40, 1);
    if !report.all_passed() {
        return Err(Error::Internal(format!("catalog extension {s} fails verification: {:?}", report.failures())));
    }
    Ok(v)
}

pub const EXTENSION_CATALOG_NAMES: &[&str] = &["dinfty", "z-over-c2", "heisenberg-c2", "swap-c2", "s3-trivial:H", "trivial(NAME)"];
