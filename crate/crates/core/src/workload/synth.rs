//! Synthetic LLC traffic.
//!
//! A core issues loads and stores over a footprint with a hot region. A small
//! private L2 (FIFO replacement) filters them: misses become LLC reads, the
//! first store to a clean L2 line becomes a write upgrade, and L2 evictions
//! become inserts (dirty lines, or clean lines without a notification) or
//! clean-eviction notices.
//!
//! Block contents are a pure function of (seed, block, version), so a clean
//! block evicted twice carries identical bytes. Each block is pinned to a
//! compressibility bucket by a golden-ratio sequence over block numbers,
//! which keeps any contiguous address range close to the target mix.

use std::collections::{HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Access, TraceEvent};
use crate::codec::{compress, Block, Compressibility, CompressionEncoding, BLOCK_BYTES};
use crate::error::ConfigError;

/// Target fractions of written blocks per compressibility bucket.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressibilityMix {
    pub uncompressible: f64,
    pub low: f64,
    pub high: f64,
}

impl CompressibilityMix {
    /// 22% uncompressible, 29% low ratio, 49% high ratio.
    pub const PAPER: CompressibilityMix = CompressibilityMix { uncompressible: 0.22, low: 0.29, high: 0.49 };

    pub fn validate(&self) -> Result<(), ConfigError> {
        let parts = [self.uncompressible, self.low, self.high];
        if parts.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(ConfigError::invalid("mix", "fractions must lie in [0, 1]"));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(ConfigError::invalid("mix", "fractions must sum to 1"));
        }
        Ok(())
    }

    fn bucket(&self, u: f64) -> Compressibility {
        if u < self.uncompressible {
            Compressibility::Uncompressible
        } else if u < self.uncompressible + self.low {
            Compressibility::Low
        } else {
            Compressibility::High
        }
    }
}

impl Default for CompressibilityMix {
    fn default() -> Self {
        Self::PAPER
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticProfile {
    pub name: String,
    /// Distinct blocks touched.
    pub footprint_blocks: u64,
    /// Leading blocks of the footprint that receive `hot_fraction` of accesses.
    pub hot_blocks: u64,
    pub hot_fraction: f64,
    /// Probability that a core access is a store.
    pub write_fraction: f64,
    /// Private L2 capacity in blocks.
    pub l2_blocks: usize,
    /// Probability that a clean L2 eviction is a notification rather than an insert.
    pub notify_probability: f64,
    /// Mean cycles between core accesses.
    pub mean_gap_cycles: u64,
    /// Added to every address, so mixes can occupy disjoint ranges.
    pub base_address: u64,
    pub mix: CompressibilityMix,
}

impl Default for SyntheticProfile {
    fn default() -> Self {
        SyntheticProfile {
            name: "default".into(),
            footprint_blocks: 8192,
            hot_blocks: 512,
            hot_fraction: 0.85,
            write_fraction: 0.3,
            l2_blocks: 128,
            notify_probability: 0.3,
            mean_gap_cycles: 20,
            base_address: 0,
            mix: CompressibilityMix::PAPER,
        }
    }
}

impl SyntheticProfile {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.footprint_blocks == 0 {
            return Err(ConfigError::invalid("workload.footprint_blocks", "must be positive"));
        }
        if self.hot_blocks > self.footprint_blocks {
            return Err(ConfigError::invalid("workload.hot_blocks", "exceeds footprint"));
        }
        for (field, p) in [
            ("workload.hot_fraction", self.hot_fraction),
            ("workload.write_fraction", self.write_fraction),
            ("workload.notify_probability", self.notify_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(ConfigError::invalid(field, "must lie in [0, 1]"));
            }
        }
        if self.l2_blocks == 0 {
            return Err(ConfigError::invalid("workload.l2_blocks", "must be positive"));
        }
        if !self.base_address.is_multiple_of(BLOCK_BYTES as u64) {
            return Err(ConfigError::invalid("workload.base_address", "must be block aligned"));
        }
        self.mix.validate()
    }
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

fn bucket_of(seed: u64, block: u64, mix: &CompressibilityMix) -> Compressibility {
    let offset = (mix64(seed) >> 11) as f64 / (1u64 << 53) as f64;
    let u = (block as f64 * GOLDEN + offset).fract();
    mix.bucket(u)
}

fn pick<T: Copy>(rng: &mut impl Rng, choices: &[(T, f64)]) -> T {
    let total: f64 = choices.iter().map(|c| c.1).sum();
    let mut u = rng.random::<f64>() * total;
    for &(item, w) in choices {
        if u < w {
            return item;
        }
        u -= w;
    }
    choices[choices.len() - 1].0
}

fn target_encoding(rng: &mut impl Rng, bucket: Compressibility) -> CompressionEncoding {
    use CompressionEncoding::*;
    match bucket {
        Compressibility::Uncompressible => Uncompressed,
        Compressibility::Low => pick(rng, &[(Base8Delta5, 0.40), (Base4Delta3, 0.175), (Base8Delta6, 0.175), (Base8Delta7, 0.25)]),
        Compressibility::High => pick(
            rng,
            &[
                (AllZeros, 0.20),
                (RepeatedValue8, 0.15),
                (Base8Delta1, 0.15),
                (Base4Delta1, 0.15),
                (Base8Delta2, 0.10),
                (Base8Delta3, 0.10),
                (Base4Delta2, 0.08),
                (Base2Delta1, 0.035),
                (Base8Delta4, 0.035),
            ],
        ),
    }
}

/// A block built to hit `encoding`: a random base and deltas that need the
/// full delta width, with some values small enough to use the zero base.
fn synth_block(rng: &mut impl Rng, encoding: CompressionEncoding) -> Block {
    use CompressionEncoding::*;
    match encoding {
        AllZeros => Block::ZERO,
        RepeatedValue8 => Block::from_values(8, &[rng.random::<u64>() | 1 << 63; 8]),
        Uncompressed => {
            let mut b = [0u8; BLOCK_BYTES];
            rng.fill_bytes(&mut b);
            Block(b)
        }
        _ => {
            let (bw, dw) = encoding.widths();
            let n = BLOCK_BYTES / bw;
            let wmask = if bw == 8 { u64::MAX } else { (1u64 << (8 * bw)) - 1 };
            let half = 1i64 << (8 * dw - 1);
            // Keep the base well away from zero so immediates stay distinct.
            let base = (rng.random::<u64>() | 1 << (8 * bw - 2)) & wmask;
            let mut values = vec![base; n];
            for v in values.iter_mut().skip(1) {
                *v = if rng.random_bool(0.15) {
                    rng.random_range(0..half) as u64
                } else {
                    base.wrapping_add(rng.random_range(-half..half) as u64) & wmask
                };
            }
            Block::from_values(bw, &values)
        }
    }
}

/// Contents of `block` after `version` writes.
pub fn payload_for(seed: u64, block: u64, version: u64, mix: &CompressibilityMix) -> Block {
    let bucket = bucket_of(seed, block, mix);
    let key = mix64(seed ^ mix64(block ^ mix64(version.wrapping_add(0x9e37_79b9_7f4a_7c15))));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    let mut last = Block::ZERO;
    for _ in 0..64 {
        let target = target_encoding(&mut rng, bucket);
        last = synth_block(&mut rng, target);
        if Compressibility::of_size(compress(&last).size()) == bucket {
            return last;
        }
    }
    last
}

struct L2Line {
    dirty: bool,
}

/// Deterministic event stream of exactly `length` events.
pub fn generate(profile: &SyntheticProfile, length: usize, seed: u64) -> Vec<TraceEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::with_capacity(length + 4);
    let mut l2: HashMap<u64, L2Line> = HashMap::with_capacity(profile.l2_blocks * 2);
    let mut fifo: VecDeque<u64> = VecDeque::with_capacity(profile.l2_blocks + 1);
    let mut versions: HashMap<u64, u64> = HashMap::new();
    let mut now = 0u64;
    let cold = profile.footprint_blocks - profile.hot_blocks;
    let addr = |block: u64| profile.base_address + block * BLOCK_BYTES as u64;

    while events.len() < length {
        now += 1 + rng.random_range(0..=2 * profile.mean_gap_cycles);
        let block = if cold == 0 || (profile.hot_blocks > 0 && rng.random_bool(profile.hot_fraction)) {
            rng.random_range(0..profile.hot_blocks.max(1))
        } else {
            profile.hot_blocks + rng.random_range(0..cold)
        };
        let store = rng.random_bool(profile.write_fraction);

        if let Some(line) = l2.get_mut(&block) {
            if store && !line.dirty {
                line.dirty = true;
                events.push(TraceEvent::new(now, addr(block), Access::WriteUpgrade));
            }
            continue;
        }

        events.push(TraceEvent::new(now, addr(block), Access::Read));
        if store {
            events.push(TraceEvent::new(now, addr(block), Access::WriteUpgrade));
        }
        if fifo.len() == profile.l2_blocks {
            let victim = fifo.pop_front().expect("non-empty");
            let line = l2.remove(&victim).expect("fifo and map agree");
            let version = versions.entry(victim).or_insert(0);
            if line.dirty {
                *version += 1;
            }
            let access = if !line.dirty && rng.random_bool(profile.notify_probability) {
                Access::CleanEvictNotify
            } else {
                Access::Insert(payload_for(seed, victim, *version, &profile.mix))
            };
            events.push(TraceEvent::new(now, addr(victim), access));
        }
        fifo.push_back(block);
        l2.insert(block, L2Line { dirty: store });
    }
    events.truncate(length);
    events
}

#[cfg(test)]
mod tests {
    use super::*;

    fn histogram(events: &[TraceEvent]) -> [usize; 3] {
        let mut h = [0usize; 3];
        for e in events {
            if let Access::Insert(b) = &e.access {
                let i = match Compressibility::of_size(compress(b).size()) {
                    Compressibility::Uncompressible => 0,
                    Compressibility::Low => 1,
                    Compressibility::High => 2,
                };
                h[i] += 1;
            }
        }
        h
    }

    #[test]
    fn deterministic_under_seed() {
        let p = SyntheticProfile::default();
        assert_eq!(generate(&p, 2000, 5), generate(&p, 2000, 5));
        assert_ne!(generate(&p, 2000, 5), generate(&p, 2000, 6));
        assert_eq!(generate(&p, 2000, 5).len(), 2000);
    }

    #[test]
    fn single_bucket_profiles() {
        for (mix, idx) in [
            (CompressibilityMix { uncompressible: 1.0, low: 0.0, high: 0.0 }, 0),
            (CompressibilityMix { uncompressible: 0.0, low: 1.0, high: 0.0 }, 1),
            (CompressibilityMix { uncompressible: 0.0, low: 0.0, high: 1.0 }, 2),
        ] {
            let p = SyntheticProfile { mix, ..Default::default() };
            let h = histogram(&generate(&p, 5000, 1));
            assert!(h[idx] > 0);
            assert_eq!(h.iter().sum::<usize>(), h[idx]);
        }
    }

    #[test]
    fn clean_payloads_are_stable() {
        let m = CompressibilityMix::PAPER;
        assert_eq!(payload_for(3, 77, 2, &m), payload_for(3, 77, 2, &m));
        assert_ne!(payload_for(3, 77, 2, &m), payload_for(3, 77, 3, &m));
    }

    #[test]
    fn timestamps_non_decreasing() {
        let ev = generate(&SyntheticProfile::default(), 3000, 2);
        assert!(ev.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
    }

    #[test]
    fn validation() {
        let mut p = SyntheticProfile::default();
        assert!(p.validate().is_ok());
        p.mix.high = 0.5;
        assert!(p.validate().is_err());
        let p = SyntheticProfile { hot_blocks: 10_000, ..Default::default() };
        assert!(p.validate().is_err());
    }
}
