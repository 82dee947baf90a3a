//! Knowledge-base assisted semantic transmission of image embeddings.
//!
//! The transmitter compresses a 512-dim image embedding with a small MLP,
//! maps it to complex channel symbols and sends it over a simulated AWGN or
//! Rayleigh channel. The receiver reconstructs the embedding and retrieves the
//! nearest entry of a labeled knowledge base under exact L2 distance. Success
//! is measured at the category level.
//!
//! Module map:
//! - [`embedding_io`]: the `SEMB` dataset format, splits, synthetic data
//! - [`knowledge_base`]: exact flat L2 index and its brute-force oracle
//! - [`channel`]: complex mapping, power normalization, fading, equalization
//! - [`codec`]: the encoder/decoder MLP, backprop, Adam and training
//! - [`experiment`]: semantic accuracy, baseline, sweeps, latency
//! - [`cli`]: the `semlink` command line

pub mod channel;
pub mod cli;
pub mod codec;
pub mod embedding_io;
pub mod error;
pub mod experiment;
pub mod knowledge_base;
pub mod rng;

pub use error::{Error, Result};

/// Version string reported by `--version` and recorded in run manifests.
pub const VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    " (",
    env!("SEMLINK_BUILD_HASH"),
    ")"
);
