//! Numerical toolkit for studying how random quantum circuits scramble
//! towards unitary k-designs.
//!
//! The crate is organized around three layers of machinery:
//!
//! * dense multi-site tensor algebra and channel representations
//!   ([`tensors`], [`channels`], [`moments`]),
//! * relative-entropy decay measurement ([`entropy`]),
//! * circuit architectures, their graph decompositions, and the closed-form
//!   decay-constant calculators attached to them ([`arch`], [`walks`],
//!   [`bounds`]).
//!
//! Everything is plain dense linear algebra over `Complex64`, sized for desk
//! scale: states up to dimension 2048 and Choi matrices up to dimension 4096.
//! All functions are pure and deterministic given their seeds; values are
//! safe to share across threads.

pub mod arch;
pub mod bounds;
pub mod channels;
pub mod entropy;
mod la;
pub mod moments;
pub mod tensors;
pub mod walks;

pub use tensors::{CMat, SiteLayout, QState};

/// Default absolute tolerance on eigenvalues when deciding positive
/// semidefiniteness of states and operators.
pub const PSD_TOL: f64 = 1e-10;

/// Default tolerance on Choi eigenvalues when deciding complete positivity.
/// Looser than [`PSD_TOL`] because eigensolver noise grows on the structured
/// matrices that show up as Choi blocks.
pub const CP_TOL: f64 = 1e-8;

/// Default cap on the dimension of any materialized Choi matrix.
pub const CHOI_DIM_CAP: usize = 4096;

/// Default cap on the dimension of any state or operator matrix.
pub const STATE_DIM_CAP: usize = 2048;

/// Default cap on the number of copies `k` (the twirl order). `k!` permutation
/// operators are enumerated, so this is kept small.
pub const K_CAP: usize = 4;
