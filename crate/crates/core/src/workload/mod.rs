//! Trace events seen by the last-level cache, trace files, and synthetic
//! workload generation.

mod synth;
mod trace;

pub use synth::{generate, payload_for, CompressibilityMix, SyntheticProfile};
pub use trace::{read_trace, read_trace_from, read_text_trace, write_text_trace, write_trace, write_trace_to, TRACE_MAGIC, TRACE_VERSION};

use crate::codec::Block;

/// Request type arriving at the last-level cache from a private L2.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Access {
    /// Demand fetch after an L2 miss.
    Read,
    /// Write to an L2-resident shared block; any LLC copy becomes stale.
    WriteUpgrade,
    /// Clean L2 eviction of a block the LLC may still hold.
    CleanEvictNotify,
    /// L2 eviction that carries the block contents.
    Insert(Block),
}

impl Access {
    pub fn name(&self) -> &'static str {
        match self {
            Access::Read => "read",
            Access::WriteUpgrade => "write_upgrade",
            Access::CleanEvictNotify => "clean_evict_notify",
            Access::Insert(_) => "insert",
        }
    }

    fn code(&self) -> u8 {
        match self {
            Access::Insert(_) => 0,
            Access::Read => 1,
            Access::WriteUpgrade => 2,
            Access::CleanEvictNotify => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceEvent {
    /// Simulated cycle. Non-decreasing along a trace.
    pub timestamp: u64,
    /// Byte address; the cache uses `address / 64` as the block number.
    pub address: u64,
    pub access: Access,
}

impl TraceEvent {
    pub fn new(timestamp: u64, address: u64, access: Access) -> Self {
        TraceEvent { timestamp, address, access }
    }

    pub fn block(&self) -> u64 {
        self.address / crate::codec::BLOCK_BYTES as u64
    }
}
