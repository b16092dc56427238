//! Set-associative last-level cache with frame or byte disabling, plus the
//! driver that replays a trace and turns counters into write rates.

mod cache;
mod geometry;
mod snapshot;
mod stats;

pub use cache::{Cache, Outcome};
pub use geometry::{storage_overhead, CacheGeometry, Organization, Replacement, StorageOverhead, FD_FRAME_BITS};
pub use snapshot::{FrameHealth, HealthSnapshot};
pub(crate) use snapshot::{frame_class, frame_data_capacity};
pub use stats::CacheStats;

use serde::{Deserialize, Serialize};

use crate::endurance::CellMap;
use crate::error::ConfigError;
use crate::workload::{Access, TraceEvent};

/// Analytic stand-in for the cores: every LLC read represents a fixed number
/// of instructions, and every LLC miss stalls for a fixed penalty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerformanceModel {
    pub clock_hz: f64,
    pub cores: u32,
    /// Cycles per instruction when the LLC always hits.
    pub base_cpi: f64,
    pub miss_penalty_cycles: f64,
    /// Instructions retired per LLC read.
    pub instructions_per_access: f64,
}

impl Default for PerformanceModel {
    fn default() -> Self {
        PerformanceModel {
            clock_hz: 3.5e9,
            cores: 4,
            base_cpi: 0.5,
            miss_penalty_cycles: 200.0,
            instructions_per_access: 50.0,
        }
    }
}

/// Derived performance of one run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Performance {
    pub instructions: f64,
    /// Core cycles summed over all cores.
    pub cycles: f64,
    /// Wall-clock seconds with all cores running in parallel.
    pub seconds: f64,
    /// Per-core instructions per cycle.
    pub ipc: f64,
}

impl PerformanceModel {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, v) in [
            ("performance.clock_hz", self.clock_hz),
            ("performance.base_cpi", self.base_cpi),
            ("performance.instructions_per_access", self.instructions_per_access),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::invalid(field, "must be finite and positive"));
            }
        }
        if !(self.miss_penalty_cycles.is_finite() && self.miss_penalty_cycles >= 0.0) {
            return Err(ConfigError::invalid("performance.miss_penalty_cycles", "must be finite and non-negative"));
        }
        if self.cores == 0 {
            return Err(ConfigError::invalid("performance.cores", "must be positive"));
        }
        Ok(())
    }

    pub fn evaluate(&self, reads: u64, misses: u64) -> Performance {
        let instructions = reads as f64 * self.instructions_per_access;
        let cycles = instructions * self.base_cpi + misses as f64 * self.miss_penalty_cycles;
        let ipc = if cycles > 0.0 { instructions / cycles } else { 1.0 / self.base_cpi };
        Performance {
            instructions,
            cycles,
            seconds: cycles / (self.cores as f64 * self.clock_hz),
            ipc,
        }
    }

    /// Instructions per second of the whole chip at a given per-core IPC.
    pub fn throughput(&self, ipc: f64) -> f64 {
        ipc * self.clock_hz * self.cores as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationOptions {
    /// Leading fraction of the trace used to warm the cache and then discarded.
    pub warmup_fraction: f64,
    /// Flush and advance the global counter whenever simulated time crosses a
    /// multiple of the rotation period.
    pub rotate_gc: bool,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        SimulationOptions { warmup_fraction: 0.2, rotate_gc: false }
    }
}

/// Counters, performance and write rates of one trace replay.
#[derive(Clone, Debug)]
pub struct SimulationReport {
    pub stats: CacheStats,
    pub performance: Performance,
    pub write_rates: CellMap,
    pub rotations: u64,
}

/// Replay `events` on `cache`.
pub fn simulate(
    cache: &mut Cache,
    events: &[TraceEvent],
    model: &PerformanceModel,
    options: &SimulationOptions,
) -> SimulationReport {
    let warm = ((events.len() as f64) * options.warmup_fraction.clamp(0.0, 1.0)) as usize;
    let period = cache.geometry().gc_period_seconds;
    let (mut reads, mut misses, mut rotations) = (0u64, 0u64, 0u64);
    let mut next_rotation = period;

    for (i, e) in events.iter().enumerate() {
        if i == warm {
            cache.reset_counters();
        }
        let outcome = cache.access(e);
        if options.rotate_gc && matches!(e.access, Access::Read) {
            reads += 1;
            misses += matches!(outcome, Outcome::Miss) as u64;
            while model.evaluate(reads, misses).seconds >= next_rotation {
                cache.flush_and_rotate_gc();
                rotations += 1;
                next_rotation += period;
            }
        }
    }
    if warm >= events.len() {
        cache.reset_counters();
    }
    let stats = *cache.stats();
    let performance = model.evaluate(stats.reads, stats.misses);
    SimulationReport { stats, performance, write_rates: cache.write_rates(performance.seconds), rotations }
}
