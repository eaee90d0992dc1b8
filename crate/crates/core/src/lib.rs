//! Retinal fundus image quality assessment, segmentation statistics and
//! adversarial loss evaluation.
//!
//! The crate is organised bottom-up: [`raster`] holds image containers and
//! Gaussian scale-space filtering, [`vesselness`] the Frangi detector,
//! [`qv`] and [`isc`] the two no-reference quality metrics, [`stats`] the
//! ROC and hypothesis-testing machinery, [`adversarial`] the loss
//! evaluators and [`pipeline`] the dataset and reporting layer used by the
//! command-line tool.

pub mod adversarial;
pub mod error;
pub mod isc;
pub mod pipeline;
pub mod qv;
pub mod raster;
pub mod stats;
pub mod synth;
pub mod vesselness;

pub use error::{Error, Result};

use sha2::{Digest, Sha256};

/// First eight bytes (little-endian) of the SHA-256 digest of `bytes`.
pub fn fingerprint(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}
