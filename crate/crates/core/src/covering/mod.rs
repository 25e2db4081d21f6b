//! Monodromy data of simple branched coverings and their combinatorics:
//! equivalence-class enumeration, braid orbits, Hurwitz class counts, and
//! automorphism groups.

mod monodromy;
mod perm;

pub use monodromy::{
    automorphism_order, braid_move, braid_move_inverse, braid_orbits, canonical_form,
    delta_degree, enumerate_classes, genus_from_relation, CoverNumerics, DatumIssue,
    MonodromyDatum, ENUM_MAX_BRANCH, ENUM_MAX_DEGREE,
};
pub use perm::{all_permutations, is_transitive, Permutation};

use thiserror::Error;

/// Errors of the combinatorial layer.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum CoveringError {
    #[error("permutation degrees differ: {left} vs {right}")]
    DegreeMismatch { left: usize, right: usize },
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("invalid monodromy datum: {0}")]
    InvalidDatum(DatumIssue),
    #[error("enumeration budget exceeded: n = {n}, b = {b} (limits n <= {max_n}, b <= {max_b})")]
    BudgetExceeded {
        n: usize,
        b: usize,
        max_n: usize,
        max_b: usize,
    },
    #[error("branch index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },
    #[error("impossible covering type: {0}")]
    ImpossibleType(String),
}
