use super::geometry::{CacheGeometry, Organization, Replacement, FD_FRAME_BITS};
use super::snapshot::{frame_class, FrameHealth, HealthSnapshot};
use super::stats::CacheStats;
use crate::codec::{compress, decompress_parts, Block, CompressionClass, CompressionEncoding};
use crate::endurance::{CellMap, MapKind};
use crate::error::{Error, LayoutError};
use crate::layout::{gather_read, scatter_write, GlobalCounter};
use crate::workload::{Access, TraceEvent};

/// What an event did to the cache.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Hit,
    Miss,
    /// Block placed in a frame, possibly evicting another one.
    Inserted { way: usize },
    /// Resident block rewritten with new contents.
    Rewritten { way: usize },
    /// Resident block with identical contents; only recency changes.
    Refreshed { way: usize },
    Bypassed,
    Invalidated { way: usize },
    /// Event referred to a block that is not resident.
    Ignored,
}

#[derive(Clone, Copy, Debug)]
struct Resident {
    block: u64,
    encoding: CompressionEncoding,
    ecb_len: usize,
}

#[derive(Clone, Debug)]
struct Frame {
    health: FrameHealth,
    class: Option<CompressionClass>,
    resident: Option<Resident>,
    last_use: u64,
    data: Vec<u8>,
}

/// A single-bank set-associative last-level cache.
#[derive(Clone, Debug)]
pub struct Cache {
    geometry: CacheGeometry,
    frames: Vec<Frame>,
    gc: GlobalCounter,
    tick: u64,
    /// Byte disabling: writes per frame byte. Frame disabling: writes per frame.
    writes: Vec<u64>,
    stats: CacheStats,
}

/// Compressed block followed by its check bytes.
fn extended_block(payload: &[u8], metadata_bytes: usize) -> Vec<u8> {
    let mut ecb = Vec::with_capacity(payload.len() + metadata_bytes);
    ecb.extend_from_slice(payload);
    for j in 0..metadata_bytes {
        let parity = payload.iter().skip(j).step_by(metadata_bytes).fold(0xA5u8, |acc, b| acc ^ b);
        ecb.push(parity);
    }
    ecb
}

impl Cache {
    pub fn new(snapshot: &HealthSnapshot) -> Self {
        let geometry = snapshot.geometry;
        let frames = snapshot
            .frames
            .iter()
            .map(|h| Frame {
                health: *h,
                class: frame_class(&geometry, h),
                resident: None,
                last_use: 0,
                data: vec![0; geometry.frame_bytes()],
            })
            .collect();
        let units = match geometry.organization {
            Organization::FrameDisabling { .. } => geometry.frames(),
            Organization::ByteDisabling { .. } => geometry.frames() * geometry.frame_bytes(),
        };
        Cache {
            geometry,
            frames,
            gc: GlobalCounter::default(),
            tick: 0,
            writes: vec![0; units],
            stats: CacheStats::default(),
        }
    }

    pub fn geometry(&self) -> &CacheGeometry {
        &self.geometry
    }

    pub fn stats(&self) -> &CacheStats {
        &self.stats
    }

    pub fn global_counter(&self) -> GlobalCounter {
        self.gc
    }

    /// Set the rotation origin. Resident blocks were laid out with the old
    /// value, so the cache is flushed.
    pub fn set_global_counter(&mut self, value: usize) -> Result<(), LayoutError> {
        let gc = GlobalCounter::new(value, self.geometry.frame_bytes())?;
        if gc != self.gc {
            self.flush();
            self.gc = gc;
        }
        Ok(())
    }

    /// Zero the statistics and write counters, keeping contents.
    pub fn reset_counters(&mut self) {
        self.stats = CacheStats::default();
        self.writes.iter_mut().for_each(|w| *w = 0);
    }

    pub fn snapshot(&self) -> HealthSnapshot {
        HealthSnapshot { geometry: self.geometry, frames: self.frames.iter().map(|f| f.health).collect() }
    }

    pub fn frame_class(&self, set: usize, way: usize) -> Option<CompressionClass> {
        self.frames[self.index(set, way)].class
    }

    /// Write count of one frame byte (byte disabling) or one frame.
    pub fn write_count(&self, set: usize, way: usize, byte: usize) -> u64 {
        let f = self.index(set, way);
        match self.geometry.organization {
            Organization::FrameDisabling { .. } => self.writes[f],
            Organization::ByteDisabling { .. } => self.writes[f * self.geometry.frame_bytes() + byte],
        }
    }

    /// Per-cell write rates given the simulated duration of the counted events.
    pub fn write_rates(&self, seconds: f64) -> CellMap {
        let shape = self.geometry.map_shape();
        let mut map = CellMap::zeros(MapKind::WriteRate, self.geometry.granularity(), shape);
        if seconds <= 0.0 {
            return map;
        }
        match self.geometry.organization {
            Organization::FrameDisabling { .. } => {
                for (f, &w) in self.writes.iter().enumerate() {
                    map.frame_mut(f).iter_mut().for_each(|c| *c = w as f64 / seconds);
                }
            }
            Organization::ByteDisabling { .. } => {
                for (c, &w) in map.values.iter_mut().zip(&self.writes) {
                    *c = w as f64 / seconds;
                }
            }
        }
        map
    }

    /// Decoded contents of a resident block.
    pub fn resident_block(&self, set: usize, way: usize) -> Option<Block> {
        let f = &self.frames[self.index(set, way)];
        let r = f.resident?;
        Some(self.read_frame(f, r).expect("resident blocks decode"))
    }

    pub fn lookup(&self, block: u64) -> Option<usize> {
        let set = self.set_of(block);
        (0..self.geometry.ways).find(|&w| matches!(self.frames[self.index(set, w)].resident, Some(r) if r.block == block))
    }

    pub fn set_of(&self, block: u64) -> usize {
        (block % self.geometry.sets as u64) as usize
    }

    fn index(&self, set: usize, way: usize) -> usize {
        set * self.geometry.ways + way
    }

    /// Rotation origin used for layout. Pinned to zero without wear leveling.
    fn layout_gc(&self) -> GlobalCounter {
        if self.geometry.wear_leveling {
            self.gc
        } else {
            GlobalCounter::default()
        }
    }

    fn touch(&mut self, idx: usize) {
        self.tick += 1;
        self.frames[idx].last_use = self.tick;
    }

    fn read_frame(&self, f: &Frame, r: Resident) -> Result<Block, Error> {
        match self.geometry.organization {
            Organization::FrameDisabling { .. } => Ok(Block::from_slice(&f.data)?),
            Organization::ByteDisabling { .. } => {
                let ecb = gather_read(&f.data, &f.health.live, self.layout_gc(), r.ecb_len)?;
                Ok(decompress_parts(r.encoding, &ecb[..r.encoding.size()])?)
            }
        }
    }

    pub fn access(&mut self, event: &TraceEvent) -> Outcome {
        let block = event.block();
        match &event.access {
            Access::Read => {
                self.stats.reads += 1;
                match self.lookup(block) {
                    Some(way) => {
                        self.stats.hits += 1;
                        self.touch(self.index(self.set_of(block), way));
                        Outcome::Hit
                    }
                    None => {
                        self.stats.misses += 1;
                        Outcome::Miss
                    }
                }
            }
            Access::WriteUpgrade => {
                self.stats.write_upgrades += 1;
                match self.lookup(block) {
                    Some(way) => {
                        self.stats.invalidations += 1;
                        let idx = self.index(self.set_of(block), way);
                        self.frames[idx].resident = None;
                        Outcome::Invalidated { way }
                    }
                    None => Outcome::Ignored,
                }
            }
            Access::CleanEvictNotify => {
                self.stats.notifications += 1;
                match self.lookup(block) {
                    Some(way) => {
                        self.touch(self.index(self.set_of(block), way));
                        Outcome::Refreshed { way }
                    }
                    None => Outcome::Ignored,
                }
            }
            Access::Insert(contents) => self.insert(block, contents),
        }
    }

    fn insert(&mut self, block: u64, contents: &Block) -> Outcome {
        let set = self.set_of(block);
        let (encoding, payload) = if self.geometry.is_compressed() {
            let cb = compress(contents);
            (cb.encoding(), cb.payload().to_vec())
        } else {
            (CompressionEncoding::Uncompressed, contents.0.to_vec())
        };
        let size = payload.len();
        let ecb = match self.geometry.organization {
            Organization::FrameDisabling { .. } => payload,
            Organization::ByteDisabling { .. } => extended_block(&payload, self.geometry.metadata_bytes),
        };

        if let Some(way) = self.lookup(block) {
            let idx = self.index(set, way);
            let f = &self.frames[idx];
            let r = f.resident.expect("lookup found a resident block");
            if r.encoding == encoding && self.same_layout(f, r, &ecb) {
                self.stats.refreshes += 1;
                self.touch(idx);
                return Outcome::Refreshed { way };
            }
            if fits(f.class, size) {
                self.place(idx, block, encoding, &ecb);
                return Outcome::Rewritten { way };
            }
            // No longer fits where it is: relocate.
            self.frames[idx].resident = None;
        }

        match self.select_victim(set, size) {
            Some(way) => {
                let idx = self.index(set, way);
                if self.frames[idx].resident.is_some() {
                    self.stats.evictions += 1;
                }
                self.place(idx, block, encoding, &ecb);
                Outcome::Inserted { way }
            }
            None => {
                self.stats.bypasses += 1;
                Outcome::Bypassed
            }
        }
    }

    fn same_layout(&self, f: &Frame, r: Resident, ecb: &[u8]) -> bool {
        match self.geometry.organization {
            Organization::FrameDisabling { .. } => f.data == ecb,
            Organization::ByteDisabling { .. } => {
                r.ecb_len == ecb.len()
                    && gather_read(&f.data, &f.health.live, self.layout_gc(), r.ecb_len).is_ok_and(|old| old == ecb)
            }
        }
    }

    fn place(&mut self, idx: usize, block: u64, encoding: CompressionEncoding, ecb: &[u8]) {
        self.write_frame(idx, ecb);
        self.frames[idx].resident = Some(Resident { block, encoding, ecb_len: ecb.len() });
        self.stats.inserts += 1;
        self.stats.insert_classes[CompressionClass::of_block(encoding.size()).index()] += 1;
        self.touch(idx);
    }

    fn write_frame(&mut self, idx: usize, ecb: &[u8]) {
        self.stats.frame_writes += 1;
        match self.geometry.organization {
            Organization::FrameDisabling { .. } => {
                self.frames[idx].data.copy_from_slice(ecb);
                self.writes[idx] += 1;
                self.stats.byte_writes += FD_FRAME_BITS.div_ceil(8) as u64;
            }
            Organization::ByteDisabling { .. } => {
                let fb = self.geometry.frame_bytes();
                let gc = self.layout_gc();
                let f = &mut self.frames[idx];
                let wm = scatter_write(ecb, &f.health.live, gc, &mut f.data).expect("victim selection checked the fit");
                for (w, hit) in self.writes[idx * fb..(idx + 1) * fb].iter_mut().zip(wm) {
                    if hit {
                        *w += 1;
                        self.stats.byte_writes += 1;
                    }
                }
            }
        }
    }

    /// Victim frame for a block of `size` compressed bytes, or `None` when no
    /// frame in the set is large enough.
    pub fn select_victim(&self, set: usize, size: usize) -> Option<usize> {
        let ways = self.geometry.ways;
        let candidates = (0..ways).filter(|&w| fits(self.frames[self.index(set, w)].class, size));
        let key = |w: usize| {
            let f = &self.frames[self.index(set, w)];
            // Invalid frames sort before valid ones, then least recent first.
            let recency = (f.resident.is_some(), f.last_use);
            let class = match self.geometry.replacement {
                Replacement::LruFit => 0,
                Replacement::BestFit => f.class.map_or(usize::MAX, |c| c.bytes()),
            };
            (class, recency, w)
        };
        candidates.min_by_key(|&w| key(w))
    }

    /// A cell wore out. Under byte disabling the byte leaves the fault bitmap
    /// and a resident block is moved around it, or evicted when it no longer
    /// fits. Under frame disabling the failure uses up a repair entry, and the
    /// frame is disabled once none are left.
    pub fn disable_unit(&mut self, set: usize, way: usize, cell: usize) -> Result<(), Error> {
        let idx = self.index(set, way);
        match self.geometry.organization {
            Organization::FrameDisabling { repair } => {
                if cell >= FD_FRAME_BITS {
                    return Err(LayoutError::Bitmap(format!("cell {cell} outside a {FD_FRAME_BITS}-bit frame")).into());
                }
                let f = &mut self.frames[idx];
                f.health.failed_cells += 1;
                if f.health.failed_cells > repair {
                    f.class = None;
                    f.resident = None;
                }
            }
            Organization::ByteDisabling { .. } => {
                let gc = self.layout_gc();
                let f = &self.frames[idx];
                if !f.health.live.is_live(cell) {
                    return Ok(());
                }
                let saved = f.resident.map(|r| gather_read(&f.data, &f.health.live, gc, r.ecb_len)).transpose()?;
                let f = &mut self.frames[idx];
                f.health.live.kill(cell);
                f.health.failed_cells += 1;
                f.class = frame_class(&self.geometry, &f.health);
                if let (Some(r), Some(ecb)) = (f.resident, saved) {
                    if fits(f.class, r.encoding.size()) {
                        self.write_frame(idx, &ecb);
                    } else {
                        self.frames[idx].resident = None;
                        self.stats.evictions += 1;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn flush(&mut self) {
        for f in &mut self.frames {
            f.resident = None;
        }
    }

    /// Invalidate everything and advance the rotation origin.
    pub fn flush_and_rotate_gc(&mut self) {
        self.flush();
        self.gc = self.gc.advanced(self.geometry.frame_bytes());
    }
}

fn fits(class: Option<CompressionClass>, size: usize) -> bool {
    class.is_some_and(|c| c.bytes() >= size)
}
