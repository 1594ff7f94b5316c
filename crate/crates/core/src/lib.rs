//! GroupFormer: a speech-text language model that consumes and emits speech
//! units in fixed-size groups, with a small non-autoregressive encoder
//! predicting each group from the backbone's hidden state.

// Validation uses `!(x > 0.0)` so that NaN fails it.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decode;
pub mod dialogue;
pub mod error;
pub mod harness;
pub mod model;
pub mod tensor;
pub mod training;
pub mod unit_codec;

pub use error::{Error, Result};
