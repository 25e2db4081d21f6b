//! Deformation-cohomology dimensions for a simple branched covering
//! `β : X -> Y` of degree `n` with `b` branch points, as exact integer
//! arithmetic: Riemann-Roch `χ(L) = deg L - p + 1`, Serre duality
//! `h¹(L) = h⁰(K ⊗ L⁻¹)`, and vanishing `h⁰(L) = 0` for `deg L < 0`.
//!
//! Entries that are not forced by a degree argument are reported as
//! undetermined rather than guessed; the module never fabricates sheaf
//! cohomology it cannot prove.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::covering::{genus_from_relation, CoveringError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CohomologyError {
    #[error(transparent)]
    Covering(#[from] CoveringError),
    #[error("cover genus {p} is below the standing hypothesis p >= 2")]
    GenusTooSmall { p: usize },
}

/// A dimension that is either pinned by a degree argument or honestly
/// unknown at this level of generality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "snake_case")]
pub enum Dim {
    Determined(usize),
    Undetermined,
}

impl Dim {
    pub fn value(self) -> Option<usize> {
        match self {
            Dim::Determined(v) => Some(v),
            Dim::Undetermined => None,
        }
    }

    pub fn is_determined(self) -> bool {
        matches!(self, Dim::Determined(_))
    }
}

/// The four cohomology dimensions of the tangent exact sequence
/// `0 -> H⁰(β*T⁰_Y) -> T¹(X/Y) -> H¹(T⁰_X) -> H¹(β*T⁰_Y) -> 0`,
/// with a provenance note for the elliptic-base subtlety.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohomologyProfile {
    pub h0_pullback: Dim,
    pub t1: Dim,
    pub h1_tx: Dim,
    pub h1_pullback: Dim,
    /// Set for base genus 1, where the pullback of the trivial tangent
    /// bundle has h⁰ = 1 even though the obstruction space vanishes only
    /// for large b over the projective line.
    pub note: Option<String>,
}

impl CohomologyProfile {
    /// Alternating sum `h⁰ - t¹ + h¹(T_X) - h¹(β*T_Y)`; `Some(0)` certifies
    /// exactness when every entry is determined.
    pub fn alternating_sum(&self) -> Option<i64> {
        Some(
            self.h0_pullback.value()? as i64 - self.t1.value()? as i64
                + self.h1_tx.value()? as i64
                - self.h1_pullback.value()? as i64,
        )
    }
}

/// Degrees of the bundles driving every vanishing argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleDegrees {
    /// deg β*T⁰_Y = n(2-2h)
    pub deg_pullback: i64,
    /// deg T⁰_X = 2-2p
    pub deg_tx: i64,
    /// deg K_X = 2p-2
    pub deg_kx: i64,
    /// deg (β*T⁰_Y)* ⊗ K_X = 4p-4-b
    pub deg_dual_twist: i64,
}

impl BundleDegrees {
    pub fn new(n: usize, h: usize, b: usize) -> Result<Self, CohomologyError> {
        let p = genus_from_relation(n, h, b)? as i64;
        let (n, h, b) = (n as i64, h as i64, b as i64);
        Ok(BundleDegrees {
            deg_pullback: n * (2 - 2 * h),
            deg_tx: 2 - 2 * p,
            deg_kx: 2 * p - 2,
            deg_dual_twist: 4 * p - 4 - b,
        })
    }
}

/// Relative tangent cohomology dimensions `(T⁰, T¹, T²) = (0, b, 0)`:
/// deformations of `X/Y` are unobstructed and `T¹` is supported on the
/// ramification points, one dimension each.
pub fn tangent_dims(b: usize) -> (usize, usize, usize) {
    (0, b, 0)
}

/// Hypercohomology dimensions of the two-term tangent complex; identified
/// with the tangent cohomology, hence equal to [`tangent_dims`].
pub fn hypercohomology_dims(b: usize) -> (usize, usize, usize) {
    tangent_dims(b)
}

/// True iff the obstruction space `H¹(X, β*T⁰_Y)` vanishes by degree,
/// i.e. `b > 4p - 4`.
pub fn obstruction_vanishes(p: usize, b: usize) -> bool {
    b as i64 > 4 * p as i64 - 4
}

/// Full cohomology profile for a covering type `(n, h, b)` with cover genus
/// `p >= 2`.
pub fn cohomology_profile(n: usize, h: usize, b: usize) -> Result<CohomologyProfile, CohomologyError> {
    let p = genus_from_relation(n, h, b)?;
    if p < 2 {
        return Err(CohomologyError::GenusTooSmall { p });
    }
    let degrees = BundleDegrees::new(n, h, b)?;
    let t1 = Dim::Determined(b);
    // h¹(X, T⁰_X) = 3p - 3: h⁰(T_X) = 0 for p >= 2, Riemann-Roch on deg 2-2p.
    let h1_tx = Dim::Determined(3 * p - 3);

    let mut note = None;
    let (h0_pullback, h1_pullback) = match h {
        0 => {
            if degrees.deg_dual_twist < 0 {
                // Serre duality kills h¹; Riemann-Roch pins h⁰.
                let h0 = degrees.deg_pullback - p as i64 + 1;
                (Dim::Determined(h0 as usize), Dim::Determined(0))
            } else {
                // Positive-degree pullback bundle with non-negative dual
                // twist: neither side is forced by degree alone.
                (Dim::Undetermined, Dim::Undetermined)
            }
        }
        1 => {
            // The tangent bundle of an elliptic base is trivial, so its
            // pullback is trivial: h⁰ = 1, h¹ = h⁰(K_X) = p.
            note = Some(
                "elliptic base: β*T⁰_Y is the trivial bundle, h⁰ = 1 by triviality \
                 rather than by a degree argument"
                    .to_string(),
            );
            (Dim::Determined(1), Dim::Determined(p))
        }
        _ => {
            // deg β*T⁰_Y < 0 forces h⁰ = 0; exactness then pins h¹.
            let h1 = p as i64 - 1 - degrees.deg_pullback;
            (Dim::Determined(0), Dim::Determined(h1 as usize))
        }
    };

    let profile = CohomologyProfile {
        h0_pullback,
        t1,
        h1_tx,
        h1_pullback,
        note,
    };
    debug_assert!(profile.alternating_sum().map_or(true, |s| s == 0));
    Ok(profile)
}
