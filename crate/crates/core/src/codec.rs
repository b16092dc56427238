//! Base-delta-immediate (BDI) compression of 64-byte cache blocks.
//!
//! A block is viewed as 8, 16 or 32 little-endian values of 8, 4 or 2 bytes.
//! The first value is the explicit base. Every other value is stored as a
//! signed delta either from that base or from zero (the immediate base), with
//! one mask bit per value selecting which. Payload layout for the base+delta
//! encodings:
//!
//! ```text
//! | base (B bytes) | mask (n/8 bytes) | delta[1] .. delta[n-1] (D bytes each) |
//! ```
//!
//! which gives exactly the encoding sizes of the 14-entry table used by the
//! cache (16, 21, 23, ... 58 bytes).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::CodecError;

pub const BLOCK_BYTES: usize = 64;

/// A 64-byte cache block.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Block(pub [u8; BLOCK_BYTES]);

impl Block {
    pub const ZERO: Block = Block([0; BLOCK_BYTES]);

    pub fn from_slice(bytes: &[u8]) -> Result<Self, CodecError> {
        let arr: [u8; BLOCK_BYTES] = bytes
            .try_into()
            .map_err(|_| CodecError::BlockLength(bytes.len()))?;
        Ok(Block(arr))
    }

    pub fn as_bytes(&self) -> &[u8; BLOCK_BYTES] {
        &self.0
    }

    /// Little-endian value `index` when the block is viewed as `width`-byte words.
    pub fn value(&self, width: usize, index: usize) -> u64 {
        let mut buf = [0u8; 8];
        buf[..width].copy_from_slice(&self.0[index * width..(index + 1) * width]);
        u64::from_le_bytes(buf)
    }

    pub fn from_values(width: usize, values: &[u64]) -> Self {
        assert_eq!(width * values.len(), BLOCK_BYTES);
        let mut out = [0u8; BLOCK_BYTES];
        for (i, v) in values.iter().enumerate() {
            out[i * width..(i + 1) * width].copy_from_slice(&v.to_le_bytes()[..width]);
        }
        Block(out)
    }
}

impl Default for Block {
    fn default() -> Self {
        Block::ZERO
    }
}

impl fmt::Debug for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Block({})", hex::encode(self.0))
    }
}

/// The 14 compression encodings, in table order. The order doubles as the
/// 4-bit tag stored in frame metadata and as the tie-break between encodings
/// of equal size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CompressionEncoding {
    AllZeros,
    RepeatedValue8,
    Base8Delta1,
    Base4Delta1,
    Base8Delta2,
    Base8Delta3,
    Base4Delta2,
    Base2Delta1,
    Base8Delta4,
    Base8Delta5,
    Base4Delta3,
    Base8Delta6,
    Base8Delta7,
    Uncompressed,
}

impl CompressionEncoding {
    pub const ALL: [CompressionEncoding; 14] = [
        Self::AllZeros,
        Self::RepeatedValue8,
        Self::Base8Delta1,
        Self::Base4Delta1,
        Self::Base8Delta2,
        Self::Base8Delta3,
        Self::Base4Delta2,
        Self::Base2Delta1,
        Self::Base8Delta4,
        Self::Base8Delta5,
        Self::Base4Delta3,
        Self::Base8Delta6,
        Self::Base8Delta7,
        Self::Uncompressed,
    ];

    /// (base width, delta width) in bytes. `Uncompressed` reports (0, 0).
    pub const fn widths(self) -> (usize, usize) {
        use CompressionEncoding::*;
        match self {
            AllZeros => (0, 0),
            RepeatedValue8 => (8, 0),
            Base8Delta1 => (8, 1),
            Base4Delta1 => (4, 1),
            Base8Delta2 => (8, 2),
            Base8Delta3 => (8, 3),
            Base4Delta2 => (4, 2),
            Base2Delta1 => (2, 1),
            Base8Delta4 => (8, 4),
            Base8Delta5 => (8, 5),
            Base4Delta3 => (4, 3),
            Base8Delta6 => (8, 6),
            Base8Delta7 => (8, 7),
            Uncompressed => (0, 0),
        }
    }

    pub const fn base_width(self) -> usize {
        self.widths().0
    }

    pub const fn delta_width(self) -> usize {
        self.widths().1
    }

    /// Compressed size in bytes, excluding ECC/encoding metadata.
    pub const fn size(self) -> usize {
        match self {
            Self::AllZeros => 0,
            Self::RepeatedValue8 => 8,
            Self::Uncompressed => BLOCK_BYTES,
            _ => {
                let (base, delta) = self.widths();
                let n = BLOCK_BYTES / base;
                base + n / 8 + (n - 1) * delta
            }
        }
    }

    pub const fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Result<Self, CodecError> {
        Self::ALL
            .get(tag as usize)
            .copied()
            .ok_or(CodecError::UnknownTag(tag))
    }

    pub const fn name(self) -> &'static str {
        use CompressionEncoding::*;
        match self {
            AllZeros => "All Zeros",
            RepeatedValue8 => "Rep. V(8)",
            Base8Delta1 => "B8Δ1",
            Base4Delta1 => "B4Δ1",
            Base8Delta2 => "B8Δ2",
            Base8Delta3 => "B8Δ3",
            Base4Delta2 => "B4Δ2",
            Base2Delta1 => "B2Δ1",
            Base8Delta4 => "B8Δ4",
            Base8Delta5 => "B8Δ5",
            Base4Delta3 => "B4Δ3",
            Base8Delta6 => "B8Δ6",
            Base8Delta7 => "B8Δ7",
            Uncompressed => "Uncomp.",
        }
    }

    fn has_mask(self) -> bool {
        self.delta_width() > 0
    }
}

impl fmt::Display for CompressionEncoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A block in compressed form: encoding plus `encoding.size()` payload bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompressedBlock {
    encoding: CompressionEncoding,
    payload: Vec<u8>,
}

impl CompressedBlock {
    pub fn new(encoding: CompressionEncoding, payload: Vec<u8>) -> Result<Self, CodecError> {
        if payload.len() != encoding.size() {
            return Err(CodecError::PayloadLength {
                encoding: encoding.name(),
                expected: encoding.size(),
                found: payload.len(),
            });
        }
        Ok(CompressedBlock { encoding, payload })
    }

    pub fn encoding(&self) -> CompressionEncoding {
        self.encoding
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn size(&self) -> usize {
        self.payload.len()
    }
}

fn width_mask(bytes: usize) -> u64 {
    if bytes >= 8 {
        u64::MAX
    } else {
        (1u64 << (8 * bytes)) - 1
    }
}

fn sign_extend(value: u64, bytes: usize) -> i64 {
    let shift = 64 - 8 * bytes as u32;
    ((value << shift) as i64) >> shift
}

fn fits_signed(value: i64, bytes: usize) -> bool {
    let half = 1i64 << (8 * bytes - 1);
    (-half..half).contains(&value)
}

/// Payload for `encoding`, or `None` when the block is not representable.
fn encode(block: &Block, encoding: CompressionEncoding) -> Option<Vec<u8>> {
    use CompressionEncoding::*;
    match encoding {
        AllZeros => block.0.iter().all(|&b| b == 0).then(Vec::new),
        Uncompressed => Some(block.0.to_vec()),
        RepeatedValue8 => {
            let first = &block.0[..8];
            block
                .0
                .chunks_exact(8)
                .all(|c| c == first)
                .then(|| first.to_vec())
        }
        _ => encode_base_delta(block, encoding),
    }
}

fn encode_base_delta(block: &Block, encoding: CompressionEncoding) -> Option<Vec<u8>> {
    let (bw, dw) = encoding.widths();
    let n = BLOCK_BYTES / bw;
    let wmask = width_mask(bw);
    let base = block.value(bw, 0);

    let mut out = Vec::with_capacity(encoding.size());
    out.extend_from_slice(&base.to_le_bytes()[..bw]);
    let mask_at = out.len();
    out.resize(mask_at + n / 8, 0);
    out[mask_at] |= 1;

    for i in 1..n {
        let value = block.value(bw, i);
        let from_base = sign_extend(value.wrapping_sub(base) & wmask, bw);
        let delta = if fits_signed(from_base, dw) {
            out[mask_at + i / 8] |= 1 << (i % 8);
            from_base
        } else {
            let immediate = sign_extend(value, bw);
            if !fits_signed(immediate, dw) {
                return None;
            }
            immediate
        };
        out.extend_from_slice(&delta.to_le_bytes()[..dw]);
    }
    debug_assert_eq!(out.len(), encoding.size());
    Some(out)
}

/// Compress with the smallest applicable encoding. Total: `Uncompressed`
/// always applies.
pub fn compress(block: &Block) -> CompressedBlock {
    CompressionEncoding::ALL
        .iter()
        .find_map(|&encoding| {
            encode(block, encoding).map(|payload| CompressedBlock { encoding, payload })
        })
        .expect("uncompressed encoding always applies")
}

/// Try a single encoding. Exposed for diagnostics and tests.
pub fn try_encode(block: &Block, encoding: CompressionEncoding) -> Option<CompressedBlock> {
    encode(block, encoding).map(|payload| CompressedBlock { encoding, payload })
}

pub fn decompress(cb: &CompressedBlock) -> Result<Block, CodecError> {
    decompress_parts(cb.encoding, &cb.payload)
}

/// Decode from an encoding and raw payload bytes (as read back from a frame).
pub fn decompress_parts(encoding: CompressionEncoding, payload: &[u8]) -> Result<Block, CodecError> {
    use CompressionEncoding::*;
    if payload.len() != encoding.size() {
        return Err(CodecError::PayloadLength {
            encoding: encoding.name(),
            expected: encoding.size(),
            found: payload.len(),
        });
    }
    let block = match encoding {
        AllZeros => Block::ZERO,
        Uncompressed => Block::from_slice(payload)?,
        RepeatedValue8 => {
            let mut out = [0u8; BLOCK_BYTES];
            for chunk in out.chunks_exact_mut(8) {
                chunk.copy_from_slice(payload);
            }
            Block(out)
        }
        _ => {
            let (bw, dw) = encoding.widths();
            debug_assert!(encoding.has_mask());
            let n = BLOCK_BYTES / bw;
            let wmask = width_mask(bw);
            let read = |bytes: &[u8]| {
                let mut buf = [0u8; 8];
                buf[..bytes.len()].copy_from_slice(bytes);
                u64::from_le_bytes(buf)
            };
            let base = read(&payload[..bw]);
            let mask = &payload[bw..bw + n / 8];
            let deltas = &payload[bw + n / 8..];
            let mut values = vec![base; n];
            for (i, value) in values.iter_mut().enumerate().skip(1) {
                let raw = read(&deltas[(i - 1) * dw..i * dw]);
                let delta = sign_extend(raw, dw) as u64;
                let from_base = mask[i / 8] & (1 << (i % 8)) != 0;
                *value = if from_base {
                    base.wrapping_add(delta) & wmask
                } else {
                    delta & wmask
                };
            }
            Block::from_values(bw, &values)
        }
    };
    Ok(block)
}

/// Frame capability classes: the distinct encoding sizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CompressionClass(u8);

impl CompressionClass {
    pub const SIZES: [u8; 12] = [0, 8, 16, 21, 23, 30, 36, 37, 44, 51, 58, 64];
    pub const COUNT: usize = 12;
    pub const FULL: CompressionClass = CompressionClass(64);

    pub fn bytes(self) -> usize {
        self.0 as usize
    }

    /// Position in `SIZES`, used to index per-class tuples.
    pub fn index(self) -> usize {
        Self::SIZES
            .iter()
            .position(|&s| s == self.0)
            .expect("class values come from SIZES")
    }

    pub fn from_index(index: usize) -> Self {
        CompressionClass(Self::SIZES[index])
    }

    pub fn all() -> impl Iterator<Item = CompressionClass> {
        Self::SIZES.iter().map(|&s| CompressionClass(s))
    }

    /// Class of a block whose compressed size is `size` (the smallest class
    /// holding it).
    pub fn of_block(size: usize) -> Self {
        let s = Self::SIZES
            .iter()
            .copied()
            .find(|&s| s as usize >= size)
            .unwrap_or(64);
        CompressionClass(s)
    }
}

impl fmt::Display for CompressionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CC{}", self.0)
    }
}

/// Largest class not exceeding `capacity` data bytes; anything at or above a
/// full block maps to 64.
pub fn classify(capacity: usize) -> CompressionClass {
    let s = CompressionClass::SIZES
        .iter()
        .rev()
        .copied()
        .find(|&s| s as usize <= capacity)
        .unwrap_or(0);
    CompressionClass(s)
}

/// Coarse compressibility buckets used to describe workloads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Compressibility {
    /// Compressed size of 37 bytes or less.
    High,
    /// Compressed, but larger than 37 bytes.
    Low,
    Uncompressible,
}

impl Compressibility {
    pub fn of_size(size: usize) -> Self {
        if size >= BLOCK_BYTES {
            Compressibility::Uncompressible
        } else if size > 37 {
            Compressibility::Low
        } else {
            Compressibility::High
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_match_table() {
        let expected = [0, 8, 16, 21, 23, 30, 36, 37, 37, 44, 51, 51, 58, 64];
        let sizes: Vec<usize> = CompressionEncoding::ALL.iter().map(|e| e.size()).collect();
        assert_eq!(sizes, expected);
        for (i, e) in CompressionEncoding::ALL.iter().enumerate() {
            assert_eq!(e.tag() as usize, i);
            assert_eq!(CompressionEncoding::from_tag(i as u8).unwrap(), *e);
        }
        assert_eq!(CompressionEncoding::from_tag(14), Err(CodecError::UnknownTag(14)));
    }

    #[test]
    fn zero_block() {
        let cb = compress(&Block::ZERO);
        assert_eq!(cb.encoding(), CompressionEncoding::AllZeros);
        assert_eq!(cb.size(), 0);
        assert_eq!(decompress(&cb).unwrap(), Block::ZERO);
    }

    #[test]
    fn repeated_eight_byte_value() {
        let block = Block::from_values(8, &[0x0102030405060708; 8]);
        let cb = compress(&block);
        assert_eq!(cb.encoding(), CompressionEncoding::RepeatedValue8);
        assert_eq!(cb.size(), 8);
        assert_eq!(decompress(&cb).unwrap(), block);
    }

    #[test]
    fn narrow_deltas_around_a_million() {
        let offsets: [i64; 16] = [0, 17, -100, 99, 3, -45, 64, -1, 100, -99, 12, 0, 55, -77, 31, -8];
        let values: Vec<u64> = offsets.iter().map(|o| (1_000_000 + o) as u64).collect();
        let block = Block::from_values(4, &values);
        let cb = compress(&block);
        assert_eq!(cb.encoding(), CompressionEncoding::Base4Delta1);
        assert_eq!(cb.size(), 21);
        assert_eq!(decompress(&cb).unwrap(), block);
    }

    #[test]
    fn immediate_base_covers_small_values() {
        // Pointers near a large base mixed with small integers.
        let mut values = [0u64; 8];
        for (i, v) in values.iter_mut().enumerate() {
            *v = if i % 2 == 0 { 0x7fff_0000_1000 + i as u64 * 8 } else { i as u64 };
        }
        let block = Block::from_values(8, &values);
        let cb = compress(&block);
        assert_eq!(cb.encoding(), CompressionEncoding::Base8Delta1);
        assert_eq!(decompress(&cb).unwrap(), block);
    }

    #[test]
    fn uncompressed_identity() {
        let mut bytes = [0u8; 64];
        for (i, b) in bytes.iter_mut().enumerate() {
            *b = (i as u8).wrapping_mul(151).wrapping_add(89);
        }
        let block = Block(bytes);
        let cb = CompressedBlock::new(CompressionEncoding::Uncompressed, bytes.to_vec()).unwrap();
        assert_eq!(decompress(&cb).unwrap(), block);
    }

    #[test]
    fn malformed_payload_is_rejected() {
        assert!(matches!(
            CompressedBlock::new(CompressionEncoding::Base4Delta1, vec![0; 20]),
            Err(CodecError::PayloadLength { expected: 21, found: 20, .. })
        ));
        assert!(decompress_parts(CompressionEncoding::AllZeros, &[1]).is_err());
    }

    #[test]
    fn wrapping_deltas_round_trip() {
        let values = [i64::MAX as u64, i64::MIN as u64, 5, u64::MAX, 0, 1, 2, 3];
        let block = Block::from_values(8, &values);
        let cb = compress(&block);
        assert_eq!(decompress(&cb).unwrap(), block);
    }

    #[test]
    fn classify_picks_largest_class_not_above_capacity() {
        assert_eq!(classify(61).bytes(), 58);
        assert_eq!(classify(64).bytes(), 64);
        assert_eq!(classify(70).bytes(), 64);
        assert_eq!(classify(7).bytes(), 0);
        assert_eq!(classify(37).bytes(), 37);
        assert_eq!(classify(0).bytes(), 0);
        for size in CompressionEncoding::ALL.iter().map(|e| e.size()) {
            assert_eq!(classify(size).bytes(), size);
            assert_eq!(CompressionClass::of_block(size).bytes(), size);
        }
    }

    #[test]
    fn buckets() {
        assert_eq!(Compressibility::of_size(37), Compressibility::High);
        assert_eq!(Compressibility::of_size(44), Compressibility::Low);
        assert_eq!(Compressibility::of_size(64), Compressibility::Uncompressible);
    }
}
