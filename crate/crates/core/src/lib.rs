//! Contextual biasing for non-autoregressive speech recognition: correlation
//! scoring, smoothing, joint intersection decoding and group competitive
//! purification of long biasing lists.
//!
//! The crate is `no_std` and only needs `alloc`. A seeded simulator
//! ([`simbank`]) stands in for the trained backbone and correlation scorers.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod attention;
pub mod corpus;
pub mod error;
pub mod jointdecode;
pub mod losses;
pub mod matrix;
pub mod metrics;
pub mod purify;
pub mod simbank;
pub mod smoothing;

pub use corpus::{build_phi, BiasingList, BiasingPhrase, GoldSpan, PhiMask, TokenId, Utterance, Vocabulary};
pub use error::{Error, Result};
pub use jointdecode::{decode_utterance, DecodeParams, DecodeResult, Normalization, PhraseMatcher};
pub use matrix::Matrix;
pub use metrics::{MetricsReport, Tally};
pub use purify::{gcp, ocp, PurifyParams, PurifyResult};
pub use simbank::{CorrelationBundle, NoiseSpec};
pub use smoothing::SmoothingParams;
