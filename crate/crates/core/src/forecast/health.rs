//! Set health states and the write-rate tables keyed by them.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cachesim::{HealthSnapshot, Organization};
use crate::codec::CompressionClass;
use crate::endurance::CellMap;

/// Degradation state of one set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HealthStateKey {
    /// Frame disabling: number of live frames.
    Frames(u16),
    /// Byte disabling: live frames per compression class. Dead frames are
    /// the remainder up to the associativity.
    Classes([u16; CompressionClass::COUNT]),
}

impl HealthStateKey {
    pub fn of_set<I>(organization: Organization, classes: I) -> Self
    where
        I: IntoIterator<Item = Option<CompressionClass>>,
    {
        match organization {
            Organization::FrameDisabling { .. } => {
                HealthStateKey::Frames(classes.into_iter().filter(Option::is_some).count() as u16)
            }
            Organization::ByteDisabling { .. } => {
                let mut counts = [0u16; CompressionClass::COUNT];
                for c in classes.into_iter().flatten() {
                    counts[c.index()] += 1;
                }
                HealthStateKey::Classes(counts)
            }
        }
    }

    pub fn live_frames(&self) -> usize {
        match self {
            HealthStateKey::Frames(a) => *a as usize,
            HealthStateKey::Classes(c) => c.iter().map(|&n| n as usize).sum(),
        }
    }
}

impl fmt::Display for HealthStateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HealthStateKey::Frames(a) => write!(f, "A={a}"),
            HealthStateKey::Classes(c) => {
                let parts: Vec<String> = c.iter().map(u16::to_string).collect();
                write!(f, "({})", parts.join(","))
            }
        }
    }
}

/// Key of one table entry. `class` is absent under frame disabling; `rank`
/// (position among the frame's live bytes) is present only when the table is
/// built per byte position, as needed without wear leveling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RateKey {
    pub state: HealthStateKey,
    pub class: Option<CompressionClass>,
    pub rank: Option<u8>,
}

/// Mean write rate per live cell, grouped by set state (and frame class).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WrAvgTable {
    entries: BTreeMap<RateKey, f64>,
}

impl WrAvgTable {
    pub fn get(&self, key: &RateKey) -> Option<f64> {
        self.entries.get(key).copied()
    }

    pub fn contains_state(&self, state: &HealthStateKey) -> bool {
        let lo = RateKey { state: *state, class: None, rank: None };
        self.entries.range(lo..).next().is_some_and(|(k, _)| k.state == *state)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&RateKey, &f64)> {
        self.entries.iter()
    }

    /// A table with one rate for every key, used for fixed-rate runs.
    pub fn insert(&mut self, key: RateKey, rate: f64) {
        self.entries.insert(key, rate);
    }
}

/// Average the observed write rates of live cells, grouped by the health
/// state of their set and, under byte disabling, the class of their frame.
/// With `per_rank`, byte-disabling entries are further split by the byte's
/// rank among the live bytes of its frame.
pub fn build_wr_avg(wr: &CellMap, snapshot: &HealthSnapshot, per_rank: bool) -> WrAvgTable {
    let g = &snapshot.geometry;
    assert!(wr.shape.sets == g.sets && wr.shape.ways == g.ways, "write-rate map does not match the cache");
    let mut sums: BTreeMap<RateKey, (f64, u64)> = BTreeMap::new();
    for set in 0..g.sets {
        let frames = set * g.ways..(set + 1) * g.ways;
        let state = HealthStateKey::of_set(g.organization, frames.clone().map(|f| snapshot.class(f)));
        for f in frames {
            let Some(class) = snapshot.class(f) else { continue };
            let cells = wr.frame(f);
            match g.organization {
                Organization::FrameDisabling { .. } => {
                    let e = sums.entry(RateKey { state, class: None, rank: None }).or_default();
                    e.0 += cells.iter().sum::<f64>();
                    e.1 += cells.len() as u64;
                }
                Organization::ByteDisabling { .. } => {
                    let live = snapshot.frames[f].live;
                    for (rank, pos) in live.live_positions().enumerate() {
                        let key = RateKey {
                            state,
                            class: Some(class),
                            rank: per_rank.then_some(rank as u8),
                        };
                        let e = sums.entry(key).or_default();
                        e.0 += cells[pos];
                        e.1 += 1;
                    }
                }
            }
        }
    }
    WrAvgTable {
        entries: sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect(),
    }
}
