//! Rearrangement of compressed blocks inside a frame with dead bytes.
//!
//! A frame is `N` bytes with a fault bitmap of live positions. On a write the
//! ECC-extended compressed block (ECB) is scattered over the live bytes,
//! starting at the position named by the global counter and wrapping around,
//! so that successive counter values spread writes over the whole frame. A
//! read gathers the same positions back in order.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::LayoutError;

/// Largest frame supported by the bitmap representation.
pub const MAX_FRAME_BYTES: usize = 128;

/// Live-byte bitmap of one frame. Bit `i` set means byte `i` is usable.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FaultBitmap {
    bits: u128,
    len: u8,
}

impl FaultBitmap {
    pub fn all_live(len: usize) -> Self {
        assert!(len <= MAX_FRAME_BYTES, "frame of {len} bytes exceeds {MAX_FRAME_BYTES}");
        let bits = if len == MAX_FRAME_BYTES {
            u128::MAX
        } else {
            (1u128 << len) - 1
        };
        FaultBitmap { bits, len: len as u8 }
    }

    pub fn from_bits(bits: u128, len: usize) -> Result<Self, LayoutError> {
        if len > MAX_FRAME_BYTES {
            return Err(LayoutError::Bitmap(format!("length {len} exceeds {MAX_FRAME_BYTES}")));
        }
        let mask = Self::all_live(len).bits;
        if bits & !mask != 0 {
            return Err(LayoutError::Bitmap(format!("bits set beyond length {len}")));
        }
        Ok(FaultBitmap { bits, len: len as u8 })
    }

    pub fn from_live(live: &[bool]) -> Result<Self, LayoutError> {
        let mut bits = 0u128;
        if live.len() > MAX_FRAME_BYTES {
            return Err(LayoutError::Bitmap(format!("length {} exceeds {MAX_FRAME_BYTES}", live.len())));
        }
        for (i, &l) in live.iter().enumerate() {
            if l {
                bits |= 1 << i;
            }
        }
        Ok(FaultBitmap { bits, len: live.len() as u8 })
    }

    pub fn bits(&self) -> u128 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_live(&self, i: usize) -> bool {
        i < self.len() && self.bits >> i & 1 == 1
    }

    pub fn live_count(&self) -> usize {
        self.bits.count_ones() as usize
    }

    /// Mark byte `i` dead. Returns whether it was live.
    pub fn kill(&mut self, i: usize) -> bool {
        let was = self.is_live(i);
        self.bits &= !(1u128 << i);
        was
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len()).map(move |i| self.is_live(i))
    }

    /// Live positions in ascending order.
    pub fn live_positions(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| self.is_live(i))
    }
}

impl fmt::Debug for FaultBitmap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FaultBitmap({self})")
    }
}

/// Rendered as one character per byte, position 0 first: `1` live, `0` dead.
impl fmt::Display for FaultBitmap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for live in self.iter() {
            f.write_str(if live { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for FaultBitmap {
    type Err = LayoutError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let live = s
            .chars()
            .filter(|c| !matches!(c, '_' | ',' | ' '))
            .map(|c| match c {
                '1' => Ok(true),
                '0' => Ok(false),
                other => Err(LayoutError::Bitmap(format!("unexpected character {other:?}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_live(&live)
    }
}

/// Rotation origin shared by every frame of a bank.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GlobalCounter(usize);

impl GlobalCounter {
    pub fn new(value: usize, frame_len: usize) -> Result<Self, LayoutError> {
        if frame_len == 0 || value >= frame_len {
            return Err(LayoutError::CounterOutOfRange { gc: value, len: frame_len });
        }
        Ok(GlobalCounter(value))
    }

    pub fn value(self) -> usize {
        self.0
    }

    /// Next value modulo the frame length.
    pub fn advanced(self, frame_len: usize) -> Self {
        GlobalCounter((self.0 + 1) % frame_len)
    }
}

/// Crossbar port indices and write mask for one frame write.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexVector {
    /// `index[i]` is the ECB byte routed to frame position `i`.
    pub index: Vec<usize>,
    pub write_mask: Vec<bool>,
}

impl IndexVector {
    pub fn written_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.write_mask
            .iter()
            .enumerate()
            .filter_map(|(i, &w)| w.then_some(i))
    }
}

fn check(fm: &FaultBitmap, gc: GlobalCounter, size: usize) -> Result<(), LayoutError> {
    if gc.value() >= fm.len() {
        return Err(LayoutError::CounterOutOfRange { gc: gc.value(), len: fm.len() });
    }
    if size > fm.live_count() {
        return Err(LayoutError::Capacity { size, live: fm.live_count() });
    }
    Ok(())
}

/// Index calculation for a frame write of `size` ECB bytes.
///
/// Prefix sums over the bitmap give each live byte its rank. Ranks are then
/// rotated so that the first live byte at or after `gc` receives ECB byte 0;
/// positions before `gc` wrap to the end of the sequence.
pub fn index_calc(fm: &FaultBitmap, gc: GlobalCounter, size: usize) -> Result<IndexVector, LayoutError> {
    check(fm, gc, size)?;
    let n = fm.len();
    let mut index = vec![0usize; n];
    for i in 1..n {
        index[i] = index[i - 1] + fm.is_live(i - 1) as usize;
    }
    let total = index[n - 1] + fm.is_live(n - 1) as usize;
    let origin = index[gc.value()];
    for (i, slot) in index.iter_mut().enumerate() {
        *slot = if i < gc.value() {
            *slot + total - origin
        } else {
            *slot - origin
        };
    }
    let write_mask = index
        .iter()
        .enumerate()
        .map(|(i, &ix)| ix < size && fm.is_live(i))
        .collect();
    Ok(IndexVector { index, write_mask })
}

/// Scatter `ecb` into `frame`. Positions outside the write mask keep their
/// previous contents. Returns the write mask.
pub fn scatter_write(
    ecb: &[u8],
    fm: &FaultBitmap,
    gc: GlobalCounter,
    frame: &mut [u8],
) -> Result<Vec<bool>, LayoutError> {
    if frame.len() != fm.len() {
        return Err(LayoutError::FrameLength { expected: fm.len(), found: frame.len() });
    }
    let iv = index_calc(fm, gc, ecb.len())?;
    for i in iv.written_positions() {
        frame[i] = ecb[iv.index[i]];
    }
    Ok(iv.write_mask)
}

/// Inverse of [`scatter_write`].
pub fn gather_read(
    frame: &[u8],
    fm: &FaultBitmap,
    gc: GlobalCounter,
    size: usize,
) -> Result<Vec<u8>, LayoutError> {
    if frame.len() != fm.len() {
        return Err(LayoutError::FrameLength { expected: fm.len(), found: frame.len() });
    }
    let iv = index_calc(fm, gc, size)?;
    let mut ecb = vec![0u8; size];
    for i in iv.written_positions() {
        ecb[iv.index[i]] = frame[i];
    }
    Ok(ecb)
}

/// Per-byte write increments for one frame write: the write mask as 0/1.
pub fn write_count_delta(fm: &FaultBitmap, gc: GlobalCounter, size: usize) -> Result<Vec<u8>, LayoutError> {
    Ok(index_calc(fm, gc, size)?
        .write_mask
        .into_iter()
        .map(u8::from)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fm(s: &str) -> FaultBitmap {
        s.parse().unwrap()
    }

    fn gc(v: usize, n: usize) -> GlobalCounter {
        GlobalCounter::new(v, n).unwrap()
    }

    #[test]
    fn identity_layout() {
        let iv = index_calc(&fm("111111"), gc(0, 6), 6).unwrap();
        assert_eq!(iv.index, vec![0, 1, 2, 3, 4, 5]);
        assert!(iv.write_mask.iter().all(|&w| w));
    }

    #[test]
    fn skips_dead_byte() {
        let iv = index_calc(&fm("110111"), gc(0, 6), 4).unwrap();
        assert_eq!(iv.index, vec![0, 1, 2, 2, 3, 4]);
        assert_eq!(iv.write_mask, vec![true, true, false, true, true, false]);
    }

    #[test]
    fn rotation_start() {
        let iv = index_calc(&fm("111111"), gc(2, 6), 3).unwrap();
        assert_eq!(iv.index, vec![4, 5, 0, 1, 2, 3]);
        assert_eq!(iv.write_mask, vec![false, false, true, true, true, false]);
    }

    #[test]
    fn scatter_leaves_unmasked_bytes() {
        let mut frame = [0xEEu8; 6];
        scatter_write(b"ABCD", &fm("110111"), gc(0, 6), &mut frame).unwrap();
        assert_eq!(&frame, b"AB\xEECD\xEE");
        assert_eq!(gather_read(&frame, &fm("110111"), gc(0, 6), 4).unwrap(), b"ABCD");
    }

    #[test]
    fn empty_block_writes_nothing() {
        let mut frame = [7u8; 6];
        let wm = scatter_write(&[], &fm("101101"), gc(3, 6), &mut frame).unwrap();
        assert!(wm.iter().all(|&w| !w));
        assert_eq!(frame, [7u8; 6]);
        assert!(gather_read(&frame, &fm("101101"), gc(3, 6), 0).unwrap().is_empty());
    }

    #[test]
    fn counter_on_dead_byte_starts_at_next_live() {
        let iv = index_calc(&fm("110111"), gc(2, 6), 2).unwrap();
        assert_eq!(iv.write_mask, vec![false, false, false, true, true, false]);
    }

    #[test]
    fn capacity_and_range_errors() {
        assert_eq!(
            index_calc(&fm("110111"), gc(0, 6), 6),
            Err(LayoutError::Capacity { size: 6, live: 5 })
        );
        assert!(GlobalCounter::new(6, 6).is_err());
        let mut short = [0u8; 5];
        assert!(matches!(
            scatter_write(b"A", &fm("111111"), gc(0, 6), &mut short),
            Err(LayoutError::FrameLength { .. })
        ));
    }

    #[test]
    fn counter_wraps() {
        assert_eq!(gc(65, 66).advanced(66), gc(0, 66));
    }

    #[test]
    fn rotation_spreads_writes_evenly() {
        let n = 10;
        let live = FaultBitmap::all_live(n);
        let mut counts = vec![0u32; n];
        for g in 0..n {
            for (c, d) in counts.iter_mut().zip(write_count_delta(&live, gc(g, n), 4).unwrap()) {
                *c += d as u32;
            }
        }
        assert!(counts.iter().all(|&c| c == 4));
    }

    #[test]
    fn bitmap_text_round_trip() {
        let b = fm("1101_0011");
        assert_eq!(b.to_string(), "11010011");
        assert_eq!(b.live_count(), 5);
        assert!("10x".parse::<FaultBitmap>().is_err());
        let full = FaultBitmap::all_live(128);
        assert_eq!(full.live_count(), 128);
    }
}
