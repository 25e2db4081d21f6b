//! Computational geometry of simple branched coverings of the Riemann sphere.
//!
//! The crate has two halves that meet in the Weil-Petersson module:
//!
//! * **Combinatorics** ([`covering`], [`cohomology`]): monodromy data of
//!   simple branched coverings, enumeration of equivalence classes, braid
//!   orbits, and the exact dimension arithmetic (Riemann-Roch, Serre duality)
//!   for the deformation theory of a covering `X -> Y`.
//! * **Numerics** ([`mesh`], [`hyperbolic`], [`wp`]): a triangulated model of
//!   an `n`-sheeted cover of the sphere with its pulled-back round background
//!   metric, a Newton solver for the discrete Liouville equation selecting the
//!   hyperbolic fiber metric, and the assembly of the generalized
//!   Weil-Petersson inner product from a one-parameter branch-point-moving
//!   family, together with the fiber-integral and curvature-scaling checks.
//!
//! All public operations are pure functions on immutable values and are safe
//! to call concurrently.

pub mod cohomology;
pub mod covering;
pub mod hyperbolic;
pub mod mesh;
pub mod rng;
pub mod sparse;
pub mod sphere;
pub mod wp;

pub use covering::{MonodromyDatum, Permutation};
pub use mesh::{BranchConfiguration, CoverSurface, DiscreteOperators};
pub use wp::{Direction, WpReport, WpResult, WpTensors};

/// Complex scalar used throughout the numerical modules.
pub type C64 = num_complex::Complex64;
