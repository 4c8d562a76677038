//! Entity alignment across two knowledge graphs.
//!
//! The crate implements a three-stage graph encoder that models
//! entity-to-relation and relation-to-entity information flow (primitive
//! aggregation, echo, complete aggregation), a margin-based training loop,
//! and a bootstrapping strategy that combines attribute similarity with
//! bidirectional local alignment and a global stable-matching filter to
//! generate both positive and negative semi-supervised pairs.

pub mod alignment;
pub mod attr;
pub mod autograd;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod kg;
pub mod sim;
pub mod training;

pub use error::{EchoError, Result};
