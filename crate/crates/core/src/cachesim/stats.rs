use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::codec::CompressionClass;

/// Event counters of one simulation run. Merging is plain addition, so the
/// order in which runs are combined does not matter.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub reads: u64,
    pub hits: u64,
    pub misses: u64,
    pub write_upgrades: u64,
    pub invalidations: u64,
    /// Blocks placed in a frame, including rewrites and relocations.
    pub inserts: u64,
    /// Inserts of a block already resident with identical contents.
    pub refreshes: u64,
    /// Inserts that found no frame large enough.
    pub bypasses: u64,
    pub evictions: u64,
    pub notifications: u64,
    /// Frame writes, one per placed block.
    pub frame_writes: u64,
    /// Individual byte writes issued to the data array.
    pub byte_writes: u64,
    /// Inserted blocks by compression class of their compressed size.
    pub insert_classes: [u64; CompressionClass::COUNT],
}

impl AddAssign<&CacheStats> for CacheStats {
    fn add_assign(&mut self, o: &CacheStats) {
        self.reads += o.reads;
        self.hits += o.hits;
        self.misses += o.misses;
        self.write_upgrades += o.write_upgrades;
        self.invalidations += o.invalidations;
        self.inserts += o.inserts;
        self.refreshes += o.refreshes;
        self.bypasses += o.bypasses;
        self.evictions += o.evictions;
        self.notifications += o.notifications;
        self.frame_writes += o.frame_writes;
        self.byte_writes += o.byte_writes;
        for (a, b) in self.insert_classes.iter_mut().zip(o.insert_classes) {
            *a += b;
        }
    }
}

impl CacheStats {
    pub fn miss_rate(&self) -> f64 {
        if self.reads == 0 {
            0.0
        } else {
            self.misses as f64 / self.reads as f64
        }
    }
}
