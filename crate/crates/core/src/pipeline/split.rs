use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::manifest::{DatasetManifest, ManifestEntry};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub seed: u64,
}

impl SplitSpec {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: DatasetManifest,
    pub val: DatasetManifest,
    pub test: DatasetManifest,
}

/// Seeded shuffle of the non-excluded entries, then contiguous slices.
pub fn split_dataset(manifest: &DatasetManifest, spec: &SplitSpec) -> Result<DatasetSplit> {
    let mut pool: Vec<ManifestEntry> = manifest.included().cloned().collect();
    if spec.total() != pool.len() {
        return Err(Error::SplitCountMismatch {
            requested: spec.total(),
            available: pool.len(),
        });
    }
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let test = pool.split_off(spec.train + spec.val);
    let val = pool.split_off(spec.train);
    Ok(DatasetSplit {
        train: DatasetManifest::new(pool)?,
        val: DatasetManifest::new(val)?,
        test: DatasetManifest::new(test)?,
    })
}
