//! Overlapping partitions of an index range.
//!
//! Base segment `k` is `[⌊kT/K⌋, ⌊(k+1)T/K⌋)`. Each segment is widened by
//! `⌊ρ · base_len⌋` on both sides and clipped to `[0, T)`, so at ρ = 1 every
//! partition also spans its neighbouring segments. The extension rounds down
//! so the total length stays within `(1 + 2ρ)·T`.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PartitionError {
    #[error("cannot cut {length} items into {k_count} partitions")]
    TooManyPartitions { k_count: usize, length: usize },
    #[error("partition count must be at least 1")]
    ZeroPartitions,
    #[error("overlap ratio {0} outside [0, 1]")]
    InvalidOverlap(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfig {
    pub k_count: usize,
    pub overlap_ratio: f64,
}

impl PartitionConfig {
    pub fn new(k_count: usize, overlap_ratio: f64) -> Result<Self, PartitionError> {
        let config = Self {
            k_count,
            overlap_ratio,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), PartitionError> {
        if self.k_count == 0 {
            return Err(PartitionError::ZeroPartitions);
        }
        if !(0.0..=1.0).contains(&self.overlap_ratio) {
            return Err(PartitionError::InvalidOverlap(self.overlap_ratio));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub length: usize,
    pub ranges: Vec<Range<usize>>,
}

impl PartitionPlan {
    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    /// Sum of partition lengths; between `T` and `(1 + 2ρ)·T`.
    pub fn total_length(&self) -> usize {
        self.ranges.iter().map(|r| r.len()).sum()
    }
}

/// The non-overlapping base segment `k` of `K` over `length` items.
pub fn base_segment(length: usize, k_count: usize, k: usize) -> Range<usize> {
    (k * length / k_count)..((k + 1) * length / k_count)
}

pub fn plan_partitions(
    length: usize,
    config: PartitionConfig,
) -> Result<PartitionPlan, PartitionError> {
    config.validate()?;
    let k_count = config.k_count;
    if k_count > length {
        return Err(PartitionError::TooManyPartitions { k_count, length });
    }
    let ranges = (0..k_count)
        .map(|k| {
            let base = base_segment(length, k_count, k);
            let ext = (config.overlap_ratio * base.len() as f64).floor() as usize;
            base.start.saturating_sub(ext)..(base.end + ext).min(length)
        })
        .collect();
    Ok(PartitionPlan { length, ranges })
}
