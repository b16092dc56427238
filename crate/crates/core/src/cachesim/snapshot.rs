//! Per-frame health of the data array.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::geometry::{CacheGeometry, Organization};
use crate::codec::{classify, CompressionClass, BLOCK_BYTES};
use crate::endurance::CellMap;
use crate::error::FormatError;
use crate::layout::FaultBitmap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameHealth {
    /// Live bytes. Always fully live for frame-disabling caches.
    pub live: FaultBitmap,
    /// Failed cells: dead bits under frame disabling, dead bytes otherwise.
    pub failed_cells: u32,
}

/// Health of every frame, frame-major (`set * ways + way`).
#[derive(Clone, Debug, PartialEq)]
pub struct HealthSnapshot {
    pub geometry: CacheGeometry,
    pub frames: Vec<FrameHealth>,
}

impl HealthSnapshot {
    pub fn pristine(geometry: &CacheGeometry) -> Self {
        let frame = FrameHealth { live: FaultBitmap::all_live(geometry.frame_bytes()), failed_cells: 0 };
        HealthSnapshot { geometry: *geometry, frames: vec![frame; geometry.frames()] }
    }

    /// Cells with no remaining writes are dead. Frames take their cell count
    /// from the map, so reduced toy frames are accepted.
    pub fn from_rw_map(geometry: &CacheGeometry, rw: &CellMap) -> Self {
        assert!(
            rw.shape.sets == geometry.sets && rw.shape.ways == geometry.ways,
            "remaining-writes map does not match the cache"
        );
        let frames = rw
            .frames()
            .map(|cells| {
                let failed = cells.iter().filter(|&&v| v <= 0.0).count() as u32;
                let live = match geometry.organization {
                    Organization::FrameDisabling { .. } => FaultBitmap::all_live(BLOCK_BYTES),
                    Organization::ByteDisabling { .. } => {
                        let flags: Vec<bool> = cells.iter().map(|&v| v > 0.0).collect();
                        FaultBitmap::from_live(&flags).expect("frame size validated")
                    }
                };
                FrameHealth { live, failed_cells: failed }
            })
            .collect();
        HealthSnapshot { geometry: *geometry, frames }
    }

    pub fn frame(&self, set: usize, way: usize) -> &FrameHealth {
        &self.frames[set * self.geometry.ways + way]
    }

    /// Compression class of a frame, `None` once it can hold nothing.
    pub fn class(&self, frame: usize) -> Option<CompressionClass> {
        frame_class(&self.geometry, &self.frames[frame])
    }

    /// Data bytes a frame contributes to the effective capacity.
    pub fn data_capacity(&self, frame: usize) -> usize {
        frame_data_capacity(&self.geometry, &self.frames[frame])
    }

    /// Effective capacity as a fraction of the nominal data capacity.
    pub fn effective_capacity(&self) -> f64 {
        let total: usize = (0..self.frames.len()).map(|f| self.data_capacity(f)).sum();
        total as f64 / (BLOCK_BYTES * self.frames.len()) as f64
    }

    /// Frames per compression class, plus the dead-frame count.
    pub fn class_histogram(&self) -> ([usize; CompressionClass::COUNT], usize) {
        let mut hist = [0usize; CompressionClass::COUNT];
        let mut dead = 0;
        for f in 0..self.frames.len() {
            match self.class(f) {
                Some(c) => hist[c.index()] += 1,
                None => dead += 1,
            }
        }
        (hist, dead)
    }

    /// One row per frame: set, way, failed_cells, live-byte bitmap.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), FormatError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["set", "way", "failed_cells", "live"])?;
        for (i, f) in self.frames.iter().enumerate() {
            out.write_record([
                (i / self.geometry.ways).to_string(),
                (i % self.geometry.ways).to_string(),
                f.failed_cells.to_string(),
                f.live.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(geometry: &CacheGeometry, r: R) -> Result<Self, FormatError> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut frames = Vec::with_capacity(geometry.frames());
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let field = |k: usize| rec.get(k).ok_or_else(|| FormatError::Malformed(format!("row {i}: missing column {k}")));
            let set: usize = field(0)?.parse().map_err(|e| FormatError::Malformed(format!("row {i}: {e}")))?;
            let way: usize = field(1)?.parse().map_err(|e| FormatError::Malformed(format!("row {i}: {e}")))?;
            if set * geometry.ways + way != i {
                return Err(FormatError::Malformed(format!("row {i} is out of order")));
            }
            let failed_cells = field(2)?.parse().map_err(|e| FormatError::Malformed(format!("row {i}: {e}")))?;
            let live: FaultBitmap = field(3)?.parse().map_err(|e| FormatError::Malformed(format!("row {i}: {e}")))?;
            if live.len() != geometry.frame_bytes() {
                return Err(FormatError::Malformed(format!("row {i}: bitmap has {} bytes", live.len())));
            }
            frames.push(FrameHealth { live, failed_cells });
        }
        if frames.len() != geometry.frames() {
            return Err(FormatError::Malformed(format!("{} frames, expected {}", frames.len(), geometry.frames())));
        }
        Ok(HealthSnapshot { geometry: *geometry, frames })
    }
}

pub(crate) fn frame_class(geometry: &CacheGeometry, frame: &FrameHealth) -> Option<CompressionClass> {
    match geometry.organization {
        Organization::FrameDisabling { repair } => (frame.failed_cells <= repair).then_some(CompressionClass::FULL),
        Organization::ByteDisabling { .. } => {
            let live = frame.live.live_count();
            (live >= geometry.metadata_bytes).then(|| classify(live - geometry.metadata_bytes))
        }
    }
}

pub(crate) fn frame_data_capacity(geometry: &CacheGeometry, frame: &FrameHealth) -> usize {
    match geometry.organization {
        Organization::FrameDisabling { repair } => {
            if frame.failed_cells <= repair {
                BLOCK_BYTES
            } else {
                0
            }
        }
        Organization::ByteDisabling { .. } => frame
            .live
            .live_count()
            .saturating_sub(geometry.metadata_bytes)
            .min(BLOCK_BYTES),
    }
}
