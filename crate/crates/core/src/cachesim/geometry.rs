use serde::{Deserialize, Serialize};

use crate::codec::BLOCK_BYTES;
use crate::endurance::{Granularity, MapShape};
use crate::error::ConfigError;
use crate::layout::MAX_FRAME_BYTES;

/// Bitcells of an uncompressed frame protected by its error code: 512 data
/// bits plus 17 check bits.
pub const FD_FRAME_BITS: usize = 529;

/// Tag-array bits of a frame without compression metadata.
const BASE_TAG_BITS: usize = 34;
/// Compression encoding tag.
const CE_TAG_BITS: usize = 4;

/// How a frame copes with worn-out cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Organization {
    /// A frame is disabled once more than `repair` of its bitcells fail.
    FrameDisabling { repair: u32 },
    /// Dead bytes are masked out and blocks are compressed to fit the rest.
    /// `spare` extra bytes are added to every frame.
    ByteDisabling { spare: u32 },
}

impl Organization {
    pub fn is_byte_disabling(self) -> bool {
        matches!(self, Organization::ByteDisabling { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Replacement {
    /// Least recently used among frames large enough for the block.
    LruFit,
    /// Smallest frame large enough for the block, least recently used first.
    BestFit,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheGeometry {
    pub sets: usize,
    pub ways: usize,
    /// Per-frame ECC bytes stored alongside the compressed block.
    pub metadata_bytes: usize,
    pub organization: Organization,
    pub replacement: Replacement,
    pub wear_leveling: bool,
    /// Simulated seconds between global-counter rotations.
    pub gc_period_seconds: f64,
}

impl Default for CacheGeometry {
    fn default() -> Self {
        CacheGeometry {
            sets: 64,
            ways: 8,
            metadata_bytes: 2,
            organization: Organization::ByteDisabling { spare: 0 },
            replacement: Replacement::LruFit,
            wear_leveling: true,
            gc_period_seconds: 86_400.0,
        }
    }
}

impl CacheGeometry {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.sets == 0 || self.ways == 0 {
            return Err(ConfigError::invalid("cache.sets", "sets and ways must be positive"));
        }
        if self.ways > 64 {
            return Err(ConfigError::invalid("cache.ways", "at most 64 ways"));
        }
        if let Organization::ByteDisabling { .. } = self.organization {
            if self.frame_bytes() > MAX_FRAME_BYTES {
                return Err(ConfigError::invalid(
                    "cache.organization.spare",
                    format!("frames are limited to {MAX_FRAME_BYTES} bytes"),
                ));
            }
        }
        if self.metadata_bytes > 8 {
            return Err(ConfigError::invalid("cache.metadata_bytes", "at most 8"));
        }
        if !(self.gc_period_seconds.is_finite() && self.gc_period_seconds > 0.0) {
            return Err(ConfigError::invalid("cache.gc_period_seconds", "must be finite and positive"));
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.sets * self.ways
    }

    pub fn is_compressed(&self) -> bool {
        self.organization.is_byte_disabling()
    }

    /// Bytes per frame visible to the rearrangement logic.
    pub fn frame_bytes(&self) -> usize {
        match self.organization {
            Organization::FrameDisabling { .. } => BLOCK_BYTES,
            Organization::ByteDisabling { spare } => BLOCK_BYTES + self.metadata_bytes + spare as usize,
        }
    }

    /// Wear-tracked cells per frame.
    pub fn cells_per_frame(&self) -> usize {
        match self.organization {
            Organization::FrameDisabling { .. } => FD_FRAME_BITS,
            Organization::ByteDisabling { .. } => self.frame_bytes(),
        }
    }

    pub fn granularity(&self) -> Granularity {
        match self.organization {
            Organization::FrameDisabling { .. } => Granularity::Bit,
            Organization::ByteDisabling { .. } => Granularity::Byte,
        }
    }

    pub fn map_shape(&self) -> MapShape {
        MapShape { sets: self.sets, ways: self.ways, cells: self.cells_per_frame() }
    }

    /// Cell failures a frame survives before being disabled.
    pub fn repair_entries(&self) -> u32 {
        match self.organization {
            Organization::FrameDisabling { repair } => repair,
            Organization::ByteDisabling { .. } => 0,
        }
    }
}

/// Per-frame storage cost in bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageOverhead {
    pub tag_bits: usize,
    pub data_bits: usize,
}

/// Storage cost of one frame. A repair entry is a pointer to one of the
/// frame's bitcells plus the replacement bit. Byte disabling keeps one fault
/// bit per byte next to the data array.
pub fn storage_overhead(geometry: &CacheGeometry) -> StorageOverhead {
    match geometry.organization {
        Organization::FrameDisabling { repair } => {
            let pointer = usize::BITS - (FD_FRAME_BITS - 1).leading_zeros();
            StorageOverhead {
                tag_bits: BASE_TAG_BITS,
                data_bits: FD_FRAME_BITS + repair as usize * (pointer as usize + 1),
            }
        }
        Organization::ByteDisabling { .. } => StorageOverhead {
            tag_bits: BASE_TAG_BITS + CE_TAG_BITS,
            data_bits: geometry.frame_bytes() * 9,
        },
    }
}
