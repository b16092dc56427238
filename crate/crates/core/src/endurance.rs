//! Bitcell endurance model and per-cell remaining-write / write-rate maps.
//!
//! Endurance of a bitcell is normal with mean `mean` and standard deviation
//! `cv * mean`, clamped at zero. A byte fails at the death of its first bit,
//! so byte-granularity cells hold the minimum of eight bit samples.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, FormatError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Bit,
    Byte,
}

impl Granularity {
    fn code(self) -> u8 {
        match self {
            Granularity::Bit => 0,
            Granularity::Byte => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self, FormatError> {
        match code {
            0 => Ok(Granularity::Bit),
            1 => Ok(Granularity::Byte),
            other => Err(FormatError::Malformed(format!("unknown granularity code {other}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnduranceModel {
    /// Mean writes to failure of one bitcell.
    pub mean: f64,
    /// Coefficient of variation, sigma / mean.
    pub cv: f64,
    pub seed: u64,
}

impl Default for EnduranceModel {
    fn default() -> Self {
        EnduranceModel { mean: 1e11, cv: 0.2, seed: 1 }
    }
}

impl EnduranceModel {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.mean.is_finite() && self.mean > 0.0) {
            return Err(ConfigError::invalid("endurance.mean", "must be finite and positive"));
        }
        if !(self.cv >= 0.0 && self.cv < 1.0) {
            return Err(ConfigError::invalid("endurance.cv", "must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn sigma(&self) -> f64 {
        self.cv * self.mean
    }

    /// Endurance multiplied by `k`, as for an improved bitcell technology.
    pub fn scaled(&self, k: f64) -> Self {
        EnduranceModel { mean: self.mean * k, ..*self }
    }

    /// Fill one frame's cells. Each frame draws from its own ChaCha stream so
    /// frames can be sampled independently and in any order.
    pub fn sample_frame(&self, granularity: Granularity, frame: u64, out: &mut [f64]) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(frame);
        let sigma = self.sigma();
        let bit = |rng: &mut ChaCha8Rng| {
            let z: f64 = rng.sample(StandardNormal);
            (self.mean + sigma * z).max(0.0)
        };
        for cell in out.iter_mut() {
            *cell = match granularity {
                Granularity::Bit => bit(&mut rng),
                Granularity::Byte => (0..8).map(|_| bit(&mut rng)).fold(f64::INFINITY, f64::min),
            };
        }
    }
}

/// Dimensions of a per-cell map: sets x ways x cells per frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MapShape {
    pub sets: usize,
    pub ways: usize,
    pub cells: usize,
}

impl MapShape {
    pub fn frames(&self) -> usize {
        self.sets * self.ways
    }

    pub fn len(&self) -> usize {
        self.frames() * self.cells
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn frame_index(&self, set: usize, way: usize) -> usize {
        set * self.ways + way
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    RemainingWrites,
    WriteRate,
}

/// A dense per-cell array of `f64`, frame-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CellMap {
    pub kind: MapKind,
    pub granularity: Granularity,
    pub shape: MapShape,
    pub values: Vec<f64>,
}

const MAP_MAGIC: &[u8; 4] = b"NVMP";
const MAP_VERSION: u8 = 1;

impl CellMap {
    pub fn zeros(kind: MapKind, granularity: Granularity, shape: MapShape) -> Self {
        CellMap { kind, granularity, shape, values: vec![0.0; shape.len()] }
    }

    pub fn frame(&self, frame: usize) -> &[f64] {
        let c = self.shape.cells;
        &self.values[frame * c..(frame + 1) * c]
    }

    pub fn frame_mut(&mut self, frame: usize) -> &mut [f64] {
        let c = self.shape.cells;
        &mut self.values[frame * c..(frame + 1) * c]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.shape.cells.max(1))
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<(), FormatError> {
        w.write_all(MAP_MAGIC)?;
        let kind = match self.kind {
            MapKind::RemainingWrites => 0u8,
            MapKind::WriteRate => 1,
        };
        w.write_all(&[MAP_VERSION, kind, self.granularity.code()])?;
        for dim in [self.shape.sets, self.shape.ways, self.shape.cells] {
            let dim = u32::try_from(dim).map_err(|_| FormatError::Malformed("dimension overflows u32".into()))?;
            w.write_all(&dim.to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, FormatError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAP_MAGIC {
            return Err(FormatError::BadMagic(magic));
        }
        let mut head = [0u8; 3];
        r.read_exact(&mut head)?;
        if head[0] != MAP_VERSION {
            return Err(FormatError::UnsupportedVersion(head[0]));
        }
        let kind = match head[1] {
            0 => MapKind::RemainingWrites,
            1 => MapKind::WriteRate,
            other => return Err(FormatError::Malformed(format!("unknown map kind {other}"))),
        };
        let granularity = Granularity::from_code(head[2])?;
        let mut dims = [0usize; 3];
        for d in dims.iter_mut() {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            *d = u32::from_le_bytes(b) as usize;
        }
        let shape = MapShape { sets: dims[0], ways: dims[1], cells: dims[2] };
        let mut values = Vec::with_capacity(shape.len());
        let mut b = [0u8; 8];
        for _ in 0..shape.len() {
            r.read_exact(&mut b)?;
            values.push(f64::from_le_bytes(b));
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(FormatError::Malformed(format!("{} trailing bytes", rest.len())));
        }
        Ok(CellMap { kind, granularity, shape, values })
    }

    /// One row per cell: set, way, cell, value.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), FormatError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["set", "way", "cell", "value"])?;
        for (i, v) in self.values.iter().enumerate() {
            let frame = i / self.shape.cells;
            out.write_record([
                (frame / self.shape.ways).to_string(),
                (frame % self.shape.ways).to_string(),
                (i % self.shape.cells).to_string(),
                format!("{v:e}"),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Fresh remaining-writes map drawn from `model`.
pub fn init_rw_map(shape: MapShape, granularity: Granularity, model: &EnduranceModel) -> CellMap {
    let mut map = CellMap::zeros(MapKind::RemainingWrites, granularity, shape);
    if shape.cells > 0 {
        for (f, cells) in map.values.chunks_exact_mut(shape.cells).enumerate() {
            model.sample_frame(granularity, f as u64, cells);
        }
    }
    map
}

/// Predicted lifetime of a cell: remaining writes over write rate.
pub fn plt(rw: f64, wr: f64) -> f64 {
    if rw <= 0.0 {
        0.0
    } else if wr <= 0.0 {
        f64::INFINITY
    } else {
        rw / wr
    }
}

/// One cell's budget after `seconds` at `rate`, clamped at zero.
pub fn wear(rw: f64, rate: f64, seconds: f64) -> f64 {
    (rw - seconds * rate).max(0.0)
}

/// Subtract `seconds * wr` from every cell, clamping at zero.
pub fn apply_wear(rw: &mut CellMap, wr: &CellMap, seconds: f64) -> Result<(), crate::Error> {
    if rw.shape != wr.shape {
        return Err(crate::Error::Shape(format!("{:?} vs {:?}", rw.shape, wr.shape)));
    }
    for (r, &w) in rw.values.iter_mut().zip(&wr.values) {
        *r = wear(*r, w, seconds);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape() -> MapShape {
        MapShape { sets: 4, ways: 2, cells: 66 }
    }

    #[test]
    fn same_seed_same_map() {
        let m = EnduranceModel { mean: 1e8, cv: 0.25, seed: 9 };
        assert_eq!(init_rw_map(shape(), Granularity::Byte, &m), init_rw_map(shape(), Granularity::Byte, &m));
        let other = EnduranceModel { seed: 10, ..m };
        assert_ne!(init_rw_map(shape(), Granularity::Byte, &m), init_rw_map(shape(), Granularity::Byte, &other));
    }

    #[test]
    fn zero_variation_is_deterministic() {
        let m = EnduranceModel { mean: 5e6, cv: 0.0, seed: 3 };
        let map = init_rw_map(shape(), Granularity::Byte, &m);
        assert!(map.values.iter().all(|&v| v == 5e6));
    }

    #[test]
    fn byte_cells_are_min_of_bits() {
        let m = EnduranceModel { mean: 1000.0, cv: 0.2, seed: 4 };
        let mut bits = [0.0; 8];
        let mut byte = [0.0; 1];
        m.sample_frame(Granularity::Bit, 5, &mut bits);
        m.sample_frame(Granularity::Byte, 5, &mut byte);
        assert_eq!(byte[0], bits.iter().copied().fold(f64::INFINITY, f64::min));
    }

    #[test]
    fn power_of_two_scaling_is_exact() {
        let m = EnduranceModel { mean: 1e11, cv: 0.3, seed: 2 };
        let base = init_rw_map(shape(), Granularity::Byte, &m);
        let scaled = init_rw_map(shape(), Granularity::Byte, &m.scaled(4.0));
        for (a, b) in base.values.iter().zip(&scaled.values) {
            assert_eq!(a * 4.0, *b);
        }
    }

    #[test]
    fn wear_arithmetic() {
        assert_eq!(wear(1000.0, 250.0, 4.0), 0.0);
        assert_eq!(wear(1000.0, 0.0, 4.0), 1000.0);
        assert_eq!(wear(10.0, 5.0, 4.0), 0.0);
        assert_eq!(plt(100.0, 10.0), 10.0);
        assert_eq!(plt(100.0, 0.0), f64::INFINITY);
        assert_eq!(plt(0.0, 3.0), 0.0);
    }

    #[test]
    fn apply_wear_checks_shape() {
        let s = MapShape { sets: 1, ways: 1, cells: 2 };
        let mut rw = CellMap { kind: MapKind::RemainingWrites, granularity: Granularity::Byte, shape: s, values: vec![10.0, 3.0] };
        let wr = CellMap { kind: MapKind::WriteRate, granularity: Granularity::Byte, shape: s, values: vec![1.0, 2.0] };
        apply_wear(&mut rw, &wr, 2.0).unwrap();
        assert_eq!(rw.values, vec![8.0, 0.0]);
        let other = CellMap::zeros(MapKind::WriteRate, Granularity::Byte, MapShape { sets: 1, ways: 1, cells: 3 });
        assert!(apply_wear(&mut rw, &other, 1.0).is_err());
    }

    #[test]
    fn binary_round_trip() {
        let m = EnduranceModel { mean: 1e9, cv: 0.2, seed: 5 };
        let map = init_rw_map(shape(), Granularity::Bit, &m);
        let mut buf = Vec::new();
        map.write_binary(&mut buf).unwrap();
        assert_eq!(CellMap::read_binary(buf.as_slice()).unwrap(), map);
        buf[0] = b'X';
        assert!(matches!(CellMap::read_binary(buf.as_slice()), Err(FormatError::BadMagic(_))));
    }

    #[test]
    fn csv_has_one_row_per_cell() {
        let s = MapShape { sets: 2, ways: 2, cells: 3 };
        let map = CellMap::zeros(MapKind::WriteRate, Granularity::Byte, s);
        let mut buf = Vec::new();
        map.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 13);
    }

    #[test]
    fn validation() {
        assert!(EnduranceModel { mean: 0.0, ..Default::default() }.validate().is_err());
        assert!(EnduranceModel { cv: 1.0, ..Default::default() }.validate().is_err());
        assert!(EnduranceModel::default().validate().is_ok());
    }
}
