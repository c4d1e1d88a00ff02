//! Proof-of-following for vehicle platoons: a joining vehicle proves it is
//! physically behind the verifier by tracking a random sequence of
//! following distances in time.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acc;
pub mod challenge;
pub mod harness;
pub mod kinematics;
pub mod protocol;
pub mod security;
