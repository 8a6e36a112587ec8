//! Off-shell scalar products of Bethe vectors for the open XXZ spin chain,
//! computed by four independent routes and cross-certified:
//!
//!   1. **direct** — dense contraction <0| Π𝒞 Πℬ |0> of double-row monodromy
//!      blocks (the oracle);
//!   2. **contour** — the multiple contour integral, evaluated either as a
//!      residue-permutation sum or by nested circle quadrature;
//!   3. **recursion** — the separation-of-variables kernel recursion seeded
//!      by the n = 1 closed form;
//!   4. **closed_n1** — the n = 1 closed form itself.
//!
//! The `algebra`, `bethe`, `funceq` and `solver` modules also certify the
//! defining identities along the way: Yang-Baxter and reflection equations,
//! highest-weight actions, exchange relations, the two functional equations,
//! special zeroes, polynomial structure and the large-spectral-parameter
//! asymptotics.

pub mod algebra;
pub mod bethe;
pub mod error;
pub mod funceq;
pub mod linalg;
pub mod numkernel;
pub mod record;
pub mod solver;

pub use error::{Error, Result};
pub use numkernel::{Cpx, ModelParams, SpectralSets};

/// Library version string embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
