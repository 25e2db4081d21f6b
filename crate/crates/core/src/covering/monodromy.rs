//! Monodromy data, class enumeration, and braid orbits.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};

use super::perm::{all_permutations, is_transitive, Permutation};
use super::CoveringError;

/// Enumeration budget: larger inputs are rejected loudly rather than
/// silently truncated.
pub const ENUM_MAX_DEGREE: usize = 6;
pub const ENUM_MAX_BRANCH: usize = 8;

/// Why a datum failed validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatumIssue {
    DegreeTooSmall,
    NoBranchPoints,
    DegreeMismatch { entry: usize },
    NotTransposition { index: usize },
    ProductNotIdentity,
    NotTransitive,
}

impl std::fmt::Display for DatumIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DatumIssue::DegreeTooSmall => write!(f, "degree must be at least 2"),
            DatumIssue::NoBranchPoints => write!(f, "at least one branch point is required"),
            DatumIssue::DegreeMismatch { entry } => {
                write!(f, "entry {entry} has mismatched degree")
            }
            DatumIssue::NotTransposition { index } => {
                write!(f, "branch entry {index} is not a transposition")
            }
            DatumIssue::ProductNotIdentity => write!(f, "product relation fails"),
            DatumIssue::NotTransitive => write!(f, "generated subgroup is not transitive"),
        }
    }
}

/// The combinatorial type of a simple branched covering: sheet count,
/// base genus, a transposition for every branch point, and a pair of
/// handle generators per handle of the base.
///
/// The product relation is evaluated with the global composition convention
/// `(p ∘ q)(i) = p(q(i))`, handles first, left to right:
/// `[α_1,β_1] ··· [α_h,β_h] · τ_1 ··· τ_b = id`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "DatumRepr", into = "DatumRepr")]
pub struct MonodromyDatum {
    pub degree: usize,
    pub base_genus: usize,
    pub transpositions: Vec<Permutation>,
    pub handles: Vec<(Permutation, Permutation)>,
}

/// Wire format: transpositions as 1-based pairs, handles as one-line images.
#[derive(Serialize, Deserialize)]
struct DatumRepr {
    n: usize,
    h: usize,
    transpositions: Vec<(usize, usize)>,
    handles: Vec<(Vec<usize>, Vec<usize>)>,
}

impl From<MonodromyDatum> for DatumRepr {
    fn from(d: MonodromyDatum) -> Self {
        DatumRepr {
            n: d.degree,
            h: d.base_genus,
            transpositions: d
                .transpositions
                .iter()
                .map(|t| {
                    let s = t.support();
                    (s[0], s[1])
                })
                .collect(),
            handles: d
                .handles
                .iter()
                .map(|(a, b)| (a.one_line(), b.one_line()))
                .collect(),
        }
    }
}

impl TryFrom<DatumRepr> for MonodromyDatum {
    type Error = CoveringError;
    fn try_from(r: DatumRepr) -> Result<Self, CoveringError> {
        let transpositions = r
            .transpositions
            .iter()
            .map(|&(a, b)| Permutation::transposition(r.n, a, b))
            .collect::<Result<Vec<_>, _>>()?;
        let handles = r
            .handles
            .iter()
            .map(|(a, b)| {
                Ok((
                    Permutation::from_one_line(a)?,
                    Permutation::from_one_line(b)?,
                ))
            })
            .collect::<Result<Vec<_>, CoveringError>>()?;
        Ok(MonodromyDatum {
            degree: r.n,
            base_genus: r.h,
            transpositions,
            handles,
        })
    }
}

impl std::fmt::Debug for MonodromyDatum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "MonodromyDatum(n={}, h={}, τ=[",
            self.degree, self.base_genus
        )?;
        for (i, t) in self.transpositions.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{t}")?;
        }
        write!(f, "])")
    }
}

impl MonodromyDatum {
    /// Datum over base genus 0 from 1-based transposition pairs.
    pub fn genus_zero(n: usize, pairs: &[(usize, usize)]) -> Result<Self, CoveringError> {
        let transpositions = pairs
            .iter()
            .map(|&(a, b)| Permutation::transposition(n, a, b))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(MonodromyDatum {
            degree: n,
            base_genus: 0,
            transpositions,
            handles: Vec::new(),
        })
    }

    pub fn branch_count(&self) -> usize {
        self.transpositions.len()
    }

    /// All group generators: handle pairs then transpositions.
    pub fn generators(&self) -> Vec<Permutation> {
        let mut gens = Vec::new();
        for (a, b) in &self.handles {
            gens.push(a.clone());
            gens.push(b.clone());
        }
        gens.extend(self.transpositions.iter().cloned());
        gens
    }

    /// Product `[α_1,β_1]···[α_h,β_h] · τ_1 ··· τ_b`.
    pub fn product(&self) -> Result<Permutation, CoveringError> {
        let mut acc = Permutation::identity(self.degree);
        for (a, b) in &self.handles {
            let comm = a
                .compose(b)?
                .compose(&a.inverse())?
                .compose(&b.inverse())?;
            acc = acc.compose(&comm)?;
        }
        for t in &self.transpositions {
            acc = acc.compose(t)?;
        }
        Ok(acc)
    }

    /// Full validation returning the first failed invariant.
    pub fn validate(&self) -> Result<(), DatumIssue> {
        if self.degree < 2 {
            return Err(DatumIssue::DegreeTooSmall);
        }
        if self.transpositions.is_empty() {
            return Err(DatumIssue::NoBranchPoints);
        }
        for (k, (a, b)) in self.handles.iter().enumerate() {
            if a.degree() != self.degree || b.degree() != self.degree {
                return Err(DatumIssue::DegreeMismatch { entry: k });
            }
        }
        for (i, t) in self.transpositions.iter().enumerate() {
            if t.degree() != self.degree {
                return Err(DatumIssue::DegreeMismatch {
                    entry: self.handles.len() * 2 + i,
                });
            }
            if !t.is_transposition() {
                return Err(DatumIssue::NotTransposition { index: i + 1 });
            }
        }
        match self.product() {
            Ok(p) if p.is_identity() => {}
            _ => return Err(DatumIssue::ProductNotIdentity),
        }
        match is_transitive(&self.generators(), self.degree) {
            Ok(true) => Ok(()),
            _ => Err(DatumIssue::NotTransitive),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }

    /// Genus of the covering surface via the Euler-characteristic relation.
    pub fn cover_genus(&self) -> Result<usize, CoveringError> {
        genus_from_relation(self.degree, self.base_genus, self.branch_count())
    }
}

/// Degree, base genus, branch count, and cover genus bound together by
/// the Euler-characteristic relation `b = n(2-2h) + 2p - 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverNumerics {
    pub n: usize,
    pub h: usize,
    pub b: usize,
    pub p: usize,
}

impl CoverNumerics {
    pub fn new(n: usize, h: usize, b: usize) -> Result<Self, CoveringError> {
        let p = genus_from_relation(n, h, b)?;
        Ok(CoverNumerics { n, h, b, p })
    }

    pub fn euler_characteristic(&self) -> i64 {
        2 - 2 * self.p as i64
    }
}

/// Solves `b = n(2-2h) + 2p - 2` for the cover genus `p`.
///
/// Fails when the solution is non-integral or negative, which signals an
/// impossible covering type.
pub fn genus_from_relation(n: usize, h: usize, b: usize) -> Result<usize, CoveringError> {
    let n = n as i64;
    let h = h as i64;
    let b = b as i64;
    let twice_p = b - n * (2 - 2 * h) + 2;
    if twice_p % 2 != 0 {
        return Err(CoveringError::ImpossibleType(format!(
            "b = {b}, n = {n}, h = {h}: genus is not an integer"
        )));
    }
    let p = twice_p / 2;
    if p < 0 {
        return Err(CoveringError::ImpossibleType(format!(
            "b = {b}, n = {n}, h = {h}: genus {p} is negative"
        )));
    }
    Ok(p as usize)
}

// ---------------------------------------------------------------------------
// Canonical forms and enumeration
// ---------------------------------------------------------------------------

/// Compact tuple representation for the enumeration: sorted 0-based pairs.
type PairTuple = Vec<(u8, u8)>;

fn tuple_to_datum(n: usize, tuple: &PairTuple) -> MonodromyDatum {
    MonodromyDatum::genus_zero(
        n,
        &tuple
            .iter()
            .map(|&(a, b)| (a as usize + 1, b as usize + 1))
            .collect::<Vec<_>>(),
    )
    .expect("enumeration produces valid pairs")
}

fn datum_to_tuple(d: &MonodromyDatum) -> Result<PairTuple, CoveringError> {
    d.transpositions
        .iter()
        .map(|t| {
            let s = t.support();
            if s.len() != 2 {
                return Err(CoveringError::InvalidDatum(DatumIssue::NotTransposition {
                    index: 0,
                }));
            }
            Ok(((s[0] - 1) as u8, (s[1] - 1) as u8))
        })
        .collect()
}

fn conjugate_tuple(tuple: &PairTuple, sigma: &[u8]) -> PairTuple {
    tuple
        .iter()
        .map(|&(a, b)| {
            let (x, y) = (sigma[a as usize], sigma[b as usize]);
            if x < y {
                (x, y)
            } else {
                (y, x)
            }
        })
        .collect()
}

/// Lexicographically least simultaneous conjugate of a transposition tuple.
///
/// Only conjugators sending the support of the first entry to `{0, 1}` can
/// realize the minimum (the least possible first entry is `(0 1)`), which
/// cuts the search from `n!` to `2·(n-2)!`.
fn canonical_tuple(n: usize, tuple: &PairTuple) -> PairTuple {
    assert!(!tuple.is_empty());
    let (s0, s1) = tuple[0];
    let rest: Vec<u8> = (0..n as u8).filter(|&x| x != s0 && x != s1).collect();
    let mut best: Option<PairTuple> = None;
    // Iterate over permutations of the remaining points via indices.
    let mut perm_indices: Vec<usize> = (0..rest.len()).collect();
    loop {
        for &(a, b) in &[(s0, s1), (s1, s0)] {
            let mut sigma = vec![0u8; n];
            sigma[a as usize] = 0;
            sigma[b as usize] = 1;
            for (k, &idx) in perm_indices.iter().enumerate() {
                sigma[rest[idx] as usize] = (k + 2) as u8;
            }
            let candidate = conjugate_tuple(tuple, &sigma);
            if best.as_ref().is_none_or(|b| candidate < *b) {
                best = Some(candidate);
            }
        }
        // next permutation of perm_indices
        let len = perm_indices.len();
        let Some(i) = (0..len.saturating_sub(1))
            .rev()
            .find(|&i| perm_indices[i] < perm_indices[i + 1])
        else {
            break;
        };
        let j = (i + 1..len)
            .rev()
            .find(|&j| perm_indices[j] > perm_indices[i])
            .unwrap();
        perm_indices.swap(i, j);
        perm_indices[i + 1..].reverse();
    }
    best.unwrap()
}

/// Canonical representative of the simultaneous-conjugation class of a
/// genus-zero datum: the lexicographically least tuple in its class.
pub fn canonical_form(d: &MonodromyDatum) -> Result<MonodromyDatum, CoveringError> {
    if d.base_genus != 0 || !d.handles.is_empty() {
        return Err(CoveringError::ImpossibleType(
            "canonical forms are defined for genus-zero data without handles".into(),
        ));
    }
    let tuple = datum_to_tuple(d)?;
    Ok(tuple_to_datum(d.degree, &canonical_tuple(d.degree, &tuple)))
}

struct EnumState {
    n: usize,
    b: usize,
    pairs: Vec<(u8, u8)>,
    chosen: PairTuple,
    /// running product as a 0-based mapping
    product: Vec<u8>,
    classes: BTreeSet<PairTuple>,
}

impl EnumState {
    fn cycle_count(map: &[u8]) -> usize {
        let mut seen = vec![false; map.len()];
        let mut cycles = 0;
        for s in 0..map.len() {
            if !seen[s] {
                cycles += 1;
                let mut i = s;
                while !seen[i] {
                    seen[i] = true;
                    i = map[i] as usize;
                }
            }
        }
        cycles
    }

    fn union_components(&self) -> usize {
        // components of the graph on {0..n-1} whose edges are the chosen supports
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(parent: &mut Vec<usize>, i: usize) -> usize {
            if parent[i] != i {
                let root = find(parent, parent[i]);
                parent[i] = root;
            }
            parent[i]
        }
        for &(a, b) in &self.chosen {
            let ra = find(&mut parent, a as usize);
            let rb = find(&mut parent, b as usize);
            if ra != rb {
                parent[ra] = rb;
            }
        }
        (0..self.n)
            .filter(|&i| find(&mut parent, i) == i)
            .count()
    }

    fn dfs(&mut self) {
        let depth = self.chosen.len();
        if depth == self.b {
            if self.product.iter().enumerate().all(|(i, &v)| i == v as usize) {
                let components = self.union_components();
                if components == 1 {
                    let canon = canonical_tuple(self.n, &self.chosen);
                    self.classes.insert(canon);
                }
            }
            return;
        }
        let remaining = self.b - depth;
        // The product after all b entries must be the identity: the partial
        // product needs at least n - cycles(product) more transpositions, with
        // matching parity.
        let need_product = self.n - Self::cycle_count(&self.product);
        if remaining < need_product || (remaining - need_product) % 2 != 0 {
            return;
        }
        // Transitivity needs the union graph connected by the end.
        let components = self.union_components();
        if remaining < components - 1 {
            return;
        }
        for k in 0..self.pairs.len() {
            let (a, b) = self.pairs[k];
            self.chosen.push((a, b));
            self.product.swap(a as usize, b as usize);
            self.dfs();
            self.product.swap(a as usize, b as usize);
            self.chosen.pop();
        }
    }
}

/// Exhaustive, duplicate-free enumeration of conjugation classes of valid
/// genus-zero monodromy data of degree `n` with `b` branch points.
///
/// Each class is returned by its canonical (lexicographically least)
/// representative, in sorted order, so the output is deterministic and
/// identical across platforms and worker partitions.
pub fn enumerate_classes(n: usize, b: usize) -> Result<Vec<MonodromyDatum>, CoveringError> {
    if n > ENUM_MAX_DEGREE || b > ENUM_MAX_BRANCH {
        return Err(CoveringError::BudgetExceeded {
            n,
            b,
            max_n: ENUM_MAX_DEGREE,
            max_b: ENUM_MAX_BRANCH,
        });
    }
    if n < 2 || b == 0 {
        return Ok(Vec::new());
    }
    // Necessary conditions: the product of b transpositions is even, and a
    // transitive factorization of the identity needs b >= 2n - 2
    // (equivalently, the cover genus from the Euler relation is >= 0).
    if b % 2 != 0 || b + 2 < 2 * n {
        return Ok(Vec::new());
    }
    let mut pairs = Vec::new();
    for a in 0..n as u8 {
        for b2 in a + 1..n as u8 {
            pairs.push((a, b2));
        }
    }
    let mut state = EnumState {
        n,
        b,
        pairs,
        chosen: Vec::with_capacity(b),
        product: (0..n as u8).collect(),
        classes: BTreeSet::new(),
    };
    state.dfs();
    Ok(state
        .classes
        .iter()
        .map(|t| tuple_to_datum(n, t))
        .collect())
}

/// Sheet count of the covering of configuration space defined by forgetting
/// the covering and keeping its branch points: the number of classes.
pub fn delta_degree(n: usize, b: usize) -> Result<usize, CoveringError> {
    Ok(enumerate_classes(n, b)?.len())
}

// ---------------------------------------------------------------------------
// Braid moves and orbits
// ---------------------------------------------------------------------------

/// Elementary braid move at position `i` (1-based, `1 <= i <= b-1`):
/// `(τ_i, τ_{i+1}) -> (τ_{i+1}, τ_{i+1}⁻¹ τ_i τ_{i+1})`.
pub fn braid_move(d: &MonodromyDatum, i: usize) -> Result<MonodromyDatum, CoveringError> {
    let b = d.branch_count();
    if i == 0 || i >= b {
        return Err(CoveringError::IndexOutOfRange { index: i, max: b - 1 });
    }
    let mut out = d.clone();
    let ti = d.transpositions[i - 1].clone();
    let tj = d.transpositions[i].clone();
    let conj = tj.inverse().compose(&ti)?.compose(&tj)?;
    out.transpositions[i - 1] = tj;
    out.transpositions[i] = conj;
    Ok(out)
}

/// Inverse of [`braid_move`]: `(τ_i, τ_{i+1}) -> (τ_i τ_{i+1} τ_i⁻¹, τ_i)`.
pub fn braid_move_inverse(d: &MonodromyDatum, i: usize) -> Result<MonodromyDatum, CoveringError> {
    let b = d.branch_count();
    if i == 0 || i >= b {
        return Err(CoveringError::IndexOutOfRange { index: i, max: b - 1 });
    }
    let mut out = d.clone();
    let ti = d.transpositions[i - 1].clone();
    let tj = d.transpositions[i].clone();
    let conj = ti.compose(&tj)?.compose(&ti.inverse())?;
    out.transpositions[i - 1] = conj;
    out.transpositions[i] = ti;
    Ok(out)
}

/// Partition of a set of classes into orbits under all braid moves, acting on
/// conjugation classes. Input classes are expected in canonical form (as
/// produced by [`enumerate_classes`]); each orbit lists indices into the
/// input, and orbits are sorted by their least element.
pub fn braid_orbits(classes: &[MonodromyDatum]) -> Result<Vec<Vec<usize>>, CoveringError> {
    let mut index_of: HashMap<Vec<Permutation>, usize> = HashMap::new();
    for (idx, d) in classes.iter().enumerate() {
        let canon = canonical_form(d)?;
        index_of.insert(canon.transpositions, idx);
    }
    let mut seen = vec![false; classes.len()];
    let mut orbits = Vec::new();
    for start in 0..classes.len() {
        if seen[start] {
            continue;
        }
        let mut orbit = Vec::new();
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(idx) = stack.pop() {
            orbit.push(idx);
            let d = &classes[idx];
            let b = d.branch_count();
            for i in 1..b {
                for moved in [braid_move(d, i)?, braid_move_inverse(d, i)?] {
                    let canon = canonical_form(&moved)?;
                    let Some(&j) = index_of.get(&canon.transpositions) else {
                        return Err(CoveringError::ImpossibleType(
                            "braid move left the supplied class set; input classes incomplete"
                                .into(),
                        ));
                    };
                    if !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        orbit.sort_unstable();
        orbits.push(orbit);
    }
    Ok(orbits)
}

/// Order of the automorphism group of the covering: the centralizer in `S_n`
/// of the subgroup generated by the monodromy entries.
pub fn automorphism_order(d: &MonodromyDatum) -> Result<usize, CoveringError> {
    d.validate().map_err(CoveringError::InvalidDatum)?;
    if d.degree > 8 {
        return Err(CoveringError::BudgetExceeded {
            n: d.degree,
            b: d.branch_count(),
            max_n: 8,
            max_b: usize::MAX,
        });
    }
    let gens = d.generators();
    let count = all_permutations(d.degree)
        .into_iter()
        .filter(|sigma| {
            gens.iter().all(|g| {
                sigma.compose(g).expect("same degree") == g.compose(sigma).expect("same degree")
            })
        })
        .count();
    Ok(count)
}
