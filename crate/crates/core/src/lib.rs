//! Linear-chain conditional random fields for named-entity tagging.
//!
//! Two potential families share one exact-inference core:
//!
//! * [`loglinear`]: sparse template features with an L-BFGS trainer.
//! * [`neural`]: a character-LSTM word encoder feeding a BiLSTM sentence
//!   encoder, scored either monolingually or with a language embedding for
//!   cross-lingual transfer.
//!
//! [`training`] runs the joint target/source objective, [`eval`] computes
//! exact-span entity F1, and [`corpus`] handles CoNLL-style BIO data.

pub mod container;
pub mod corpus;
pub mod crf;
pub mod error;
pub mod eval;
pub mod loglinear;
pub mod neural;
pub mod parallel;
pub mod rng;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
