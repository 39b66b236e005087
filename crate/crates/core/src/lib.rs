//! Generalized Snell envelopes on a binomial lattice.
//!
//! The envelope of an obstacle `L` with lower data `l` charged along a
//! monotone measure δ is the minimal solution of a reflected BSDE with the
//! lower barrier `L`. It is built as the increasing limit of penalized
//! two-barrier problems whose generator is `n·(l − y)⁺`.

// `!(a <= b)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod envelope;
pub mod error;
pub mod grbsde;
pub mod lattice;
pub mod penalize;

pub mod snell;
pub mod suite;

pub use error::{Error, Result};
pub use lattice::{AdaptedProcess, MonotoneMeasure, Predictable, TreeModel};
