//! Permutations of `{1..n}` in one-line notation.

use serde::{Deserialize, Serialize};
use std::fmt;

use super::CoveringError;

/// A permutation of `{1..n}`.
///
/// Stored 0-based internally; constructors and the serialized form are
/// 1-based, matching the usual cycle conventions for monodromy data.
/// The derived `Ord` is lexicographic on the one-line images, which is the
/// total order used by canonical forms.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Permutation {
    images: Vec<usize>,
}

impl Permutation {
    /// Identity permutation on `{1..n}`.
    pub fn identity(n: usize) -> Self {
        Permutation {
            images: (0..n).collect(),
        }
    }

    /// The transposition `(a b)` inside `S_n`, with `a`, `b` 1-based.
    pub fn transposition(n: usize, a: usize, b: usize) -> Result<Self, CoveringError> {
        if a == 0 || b == 0 || a > n || b > n || a == b {
            return Err(CoveringError::InvalidPermutation(format!(
                "transposition ({a} {b}) is not valid in S_{n}"
            )));
        }
        let mut images: Vec<usize> = (0..n).collect();
        images.swap(a - 1, b - 1);
        Ok(Permutation { images })
    }

    /// Builds a permutation from 1-based one-line notation.
    pub fn from_one_line(images_1based: &[usize]) -> Result<Self, CoveringError> {
        let n = images_1based.len();
        let mut seen = vec![false; n];
        let mut images = Vec::with_capacity(n);
        for &v in images_1based {
            if v == 0 || v > n || seen[v - 1] {
                return Err(CoveringError::InvalidPermutation(format!(
                    "{images_1based:?} is not a bijection of 1..={n}"
                )));
            }
            seen[v - 1] = true;
            images.push(v - 1);
        }
        Ok(Permutation { images })
    }

    pub fn degree(&self) -> usize {
        self.images.len()
    }

    /// Image of `i` (1-based in, 1-based out).
    pub fn apply(&self, i: usize) -> usize {
        self.images[i - 1] + 1
    }

    /// 0-based image, used by the inner loops.
    #[inline]
    pub(crate) fn apply0(&self, i: usize) -> usize {
        self.images[i]
    }

    /// One-line images, 1-based.
    pub fn one_line(&self) -> Vec<usize> {
        self.images.iter().map(|&v| v + 1).collect()
    }

    pub fn is_identity(&self) -> bool {
        self.images.iter().enumerate().all(|(i, &v)| i == v)
    }

    /// Composition `(p ∘ q)(i) = p(q(i))`; `q` acts first.
    pub fn compose(&self, q: &Permutation) -> Result<Permutation, CoveringError> {
        if self.degree() != q.degree() {
            return Err(CoveringError::DegreeMismatch {
                left: self.degree(),
                right: q.degree(),
            });
        }
        Ok(Permutation {
            images: q.images.iter().map(|&i| self.images[i]).collect(),
        })
    }

    pub fn inverse(&self) -> Permutation {
        let mut images = vec![0; self.images.len()];
        for (i, &v) in self.images.iter().enumerate() {
            images[v] = i;
        }
        Permutation { images }
    }

    /// Conjugate `σ self σ⁻¹`.
    pub fn conjugate_by(&self, sigma: &Permutation) -> Permutation {
        let mut images = vec![0; self.images.len()];
        for (i, &v) in self.images.iter().enumerate() {
            images[sigma.images[i]] = sigma.images[v];
        }
        Permutation { images }
    }

    /// Number of cycles, fixed points included.
    pub fn cycle_count(&self) -> usize {
        let n = self.images.len();
        let mut seen = vec![false; n];
        let mut cycles = 0;
        for start in 0..n {
            if !seen[start] {
                cycles += 1;
                let mut i = start;
                while !seen[i] {
                    seen[i] = true;
                    i = self.images[i];
                }
            }
        }
        cycles
    }

    /// True iff the permutation is a single 2-cycle.
    pub fn is_transposition(&self) -> bool {
        let moved: Vec<usize> = (0..self.images.len())
            .filter(|&i| self.images[i] != i)
            .collect();
        moved.len() == 2 && self.images[moved[0]] == moved[1]
    }

    /// The support as a sorted list of 1-based points.
    pub fn support(&self) -> Vec<usize> {
        (0..self.images.len())
            .filter(|&i| self.images[i] != i)
            .map(|i| i + 1)
            .collect()
    }

    /// Cycle decomposition with 1-based entries, fixed points omitted.
    pub fn cycles(&self) -> Vec<Vec<usize>> {
        let n = self.images.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] || self.images[start] == start {
                continue;
            }
            let mut cycle = Vec::new();
            let mut i = start;
            while !seen[i] {
                seen[i] = true;
                cycle.push(i + 1);
                i = self.images[i];
            }
            out.push(cycle);
        }
        out
    }
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cycles = self.cycles();
        if cycles.is_empty() {
            return write!(f, "id");
        }
        for cycle in cycles {
            write!(f, "(")?;
            for (k, v) in cycle.iter().enumerate() {
                if k > 0 {
                    write!(f, " ")?;
                }
                write!(f, "{v}")?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

/// True iff the group generated by `perms` acts transitively on `{1..n}`.
///
/// Orbit computation: the orbit of a point under the generated group is the
/// connected component in the union of the generator graphs (generators and
/// their inverses give the same undirected edges).
pub fn is_transitive(perms: &[Permutation], n: usize) -> Result<bool, CoveringError> {
    for p in perms {
        if p.degree() != n {
            return Err(CoveringError::DegreeMismatch {
                left: p.degree(),
                right: n,
            });
        }
    }
    if n == 0 {
        return Ok(true);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(i) = stack.pop() {
        for p in perms {
            let j = p.apply0(i);
            if !seen[j] {
                seen[j] = true;
                count += 1;
                stack.push(j);
            }
        }
    }
    Ok(count == n)
}

/// All permutations of `S_n` in lexicographic order of one-line notation.
/// Intended for small n (centralizer computations); guarded by callers.
pub fn all_permutations(n: usize) -> Vec<Permutation> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..n).collect();
    loop {
        out.push(Permutation {
            images: current.clone(),
        });
        // next lexicographic permutation
        let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| current[i] < current[i + 1]) else {
            break;
        };
        let j = (i + 1..n).rev().find(|&j| current[j] > current[i]).unwrap();
        current.swap(i, j);
        current[i + 1..].reverse();
    }
    out
}


#[cfg(test)]
mod property_tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_perm(n: usize) -> impl Strategy<Value = Permutation> {
        proptest::collection::vec(0usize..1_000_000, n).prop_map(move |keys| {
            // Fisher-Yates driven by the sampled keys
            let mut images: Vec<usize> = (1..=n).collect();
            for i in (1..n).rev() {
                let j = keys[i] % (i + 1);
                images.swap(i, j);
            }
            Permutation::from_one_line(&images).unwrap()
        })
    }

    proptest! {
        #[test]
        fn compose_is_associative(p in arb_perm(6), q in arb_perm(6), r in arb_perm(6)) {
            let lhs = p.compose(&q).unwrap().compose(&r).unwrap();
            let rhs = p.compose(&q.compose(&r).unwrap()).unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn inverse_cancels(p in arb_perm(7)) {
            prop_assert!(p.compose(&p.inverse()).unwrap().is_identity());
            prop_assert!(p.inverse().compose(&p).unwrap().is_identity());
        }

        #[test]
        fn conjugation_preserves_cycle_count(p in arb_perm(6), s in arb_perm(6)) {
            prop_assert_eq!(p.conjugate_by(&s).cycle_count(), p.cycle_count());
        }
    }
}
