//! Operator scaling of positive maps between matrix algebras.
//!
//! - [`matcomb`]: support and total support of nonnegative rectangular
//!   matrices, by max-flow with zero-submatrix certificates.
//! - [`posmap`]: positive maps in Choi form, adjoints, maps built from states,
//!   the square lift, pattern matrices and block certificates.
//! - [`scaling`]: the alternating scaling iteration with its invariants and
//!   support verdict.
//! - [`fnf`]: filter normal form of bipartite states.
//! - [`numkernel`]: the dense complex linear algebra underneath.

pub mod error;
pub mod fnf;
pub mod matcomb;
pub mod numkernel;
pub mod posmap;
pub mod random;
pub mod scaling;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use fnf::{BipartiteState, FnfOutcome, FnfResult};
pub use matcomb::{NonnegPattern, ZeroSubmatrixWitness};
pub use numkernel::{ComplexMatrix, HermitianMatrix, Tolerances};
pub use posmap::{BlockCertificate, ChoiMap};
pub use scaling::{ScalingOptions, ScalingReport, Verdict};
