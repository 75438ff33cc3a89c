//! Block-tridiagonal multiple saddle-point systems and their block-diagonal
//! preconditioners, instantiated for space-time optimal control of the heat
//! and wave equations on tensor-product spline spaces.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, timing, the
//! command-line harness and report writers live in the `saddle` crate.
//!
//! Layout:
//! - [`blocksys`] and [`spectral`]: dense laboratories for the abstract
//!   block-tridiagonal theory (kernels, well-posedness constants, Schur
//!   complement identities).
//! - [`splines`], [`kron`], [`assembly`]: univariate spline spaces, Kronecker
//!   products of univariate matrices, and the discrete optimality systems.
//! - [`precond`], [`krylov`]: the block-diagonal preconditioner and MINRES.
//! - [`verify`]: discrete Brezzi constants, stability constants and
//!   condition-number estimates.
#![no_std]
#![allow(clippy::needless_range_loop)]
// `!(x > tol)` is used on purpose so that NaN fails the test
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod assembly;
pub mod blocksys;
pub mod cholesky;
pub mod dense;
pub mod error;
pub mod kron;
pub mod krylov;
pub mod precond;
pub mod sparse;
pub mod spectral;
pub mod splines;
pub mod verify;

pub use error::{Error, Result};
