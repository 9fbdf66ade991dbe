//! Recovery of sparse distributions on `{0,1}^n` from bit-flip-noised samples,
//! with exact brute-force oracles for every intermediate quantity.

pub mod basis;
pub mod bits;
pub mod downset;
pub mod error;
pub mod estimators;
pub mod filter;
pub mod harness;
pub mod local_inverse;
pub mod lp;
pub mod noise;
pub mod oracle;
pub mod recovery;
pub mod rng;
pub mod source;
pub mod verify;

pub use bits::{chi, hamming_distance, translate, BitVec, SparseDistribution};
pub use error::{Error, Result};
pub use noise::{NoiseRate, NoisySampler};
