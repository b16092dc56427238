//! Experiment configuration, read from TOML.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cachesim::{CacheGeometry, Organization, PerformanceModel, Replacement, SimulationOptions};
use crate::endurance::EnduranceModel;
use crate::error::{ConfigError, Error};
use crate::forecast::{ForecastSettings, TraceSimulation};
use crate::workload::{generate, read_trace, SyntheticProfile};

/// Cache organization by name: `FD`, `FD+R`, `L2C2`, `L2C2+N`, `L2C2-NWL`,
/// `L2C2-BF`. `R` is the number of repair entries and `N` the spare bytes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Variant {
    pub organization: Organization,
    pub replacement: Replacement,
    pub wear_leveling: bool,
}

impl FromStr for Variant {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || ConfigError::UnknownVariant(s.to_string());
        let count = |n: &str| n.parse::<u32>().map_err(|_| unknown());
        let base = Variant {
            organization: Organization::ByteDisabling { spare: 0 },
            replacement: Replacement::LruFit,
            wear_leveling: true,
        };
        let v = match s {
            "FD" => Variant { organization: Organization::FrameDisabling { repair: 0 }, ..base },
            "L2C2" => base,
            "L2C2-NWL" => Variant { wear_leveling: false, ..base },
            "L2C2-BF" => Variant { replacement: Replacement::BestFit, ..base },
            _ => match (s.strip_prefix("FD+"), s.strip_prefix("L2C2+")) {
                (Some(r), _) => Variant { organization: Organization::FrameDisabling { repair: count(r)? }, ..base },
                (_, Some(n)) => Variant { organization: Organization::ByteDisabling { spare: count(n)? }, ..base },
                _ => return Err(unknown()),
            },
        };
        Ok(v)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.organization {
            Organization::FrameDisabling { repair: 0 } => write!(f, "FD"),
            Organization::FrameDisabling { repair } => write!(f, "FD+{repair}"),
            Organization::ByteDisabling { spare } => {
                write!(f, "L2C2")?;
                if spare > 0 {
                    write!(f, "+{spare}")?;
                }
                if !self.wear_leveling {
                    write!(f, "-NWL")?;
                }
                if self.replacement == Replacement::BestFit {
                    write!(f, "-BF")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheSection {
    pub variant: String,
    pub sets: usize,
    pub ways: usize,
    pub metadata_bytes: usize,
    pub gc_period_seconds: f64,
}

impl Default for CacheSection {
    fn default() -> Self {
        let g = CacheGeometry::default();
        CacheSection {
            variant: "L2C2".into(),
            sets: g.sets,
            ways: g.ways,
            metadata_bytes: g.metadata_bytes,
            gc_period_seconds: g.gc_period_seconds,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadSection {
    /// Seed of the synthetic generator; mix `i` uses `seed + i`.
    pub seed: u64,
    /// Events generated per synthetic mix.
    pub events_per_mix: usize,
    /// Trace files to replay instead of the synthetic mixes.
    pub traces: Vec<PathBuf>,
    pub mixes: Vec<SyntheticProfile>,
}

impl Default for WorkloadSection {
    fn default() -> Self {
        let mixes = [256u64, 512, 768, 1024]
            .iter()
            .enumerate()
            .map(|(i, &hot)| SyntheticProfile { name: format!("mix{i}"), hot_blocks: hot, ..Default::default() })
            .collect();
        WorkloadSection { seed: 1, events_per_mix: 80_000, traces: Vec::new(), mixes }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub series: Option<PathBuf>,
    pub indices: Option<PathBuf>,
    /// Directory for a checkpoint written after every epoch.
    pub checkpoint_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub cache: CacheSection,
    pub endurance: EnduranceModel,
    pub forecast: ForecastSettings,
    pub performance: PerformanceModel,
    pub simulation: SimulationOptions,
    pub workload: WorkloadSection,
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn variant(&self) -> Result<Variant, ConfigError> {
        self.cache.variant.parse()
    }

    pub fn geometry(&self) -> Result<CacheGeometry, ConfigError> {
        let v = self.variant()?;
        let g = CacheGeometry {
            sets: self.cache.sets,
            ways: self.cache.ways,
            metadata_bytes: self.cache.metadata_bytes,
            organization: v.organization,
            replacement: v.replacement,
            wear_leveling: v.wear_leveling,
            gc_period_seconds: self.cache.gc_period_seconds,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.geometry()?;
        self.endurance.validate()?;
        self.forecast.validate()?;
        self.performance.validate()?;
        if !(0.0..1.0).contains(&self.simulation.warmup_fraction) {
            return Err(ConfigError::invalid("simulation.warmup_fraction", "must lie in [0, 1)"));
        }
        if self.workload.traces.is_empty() {
            if self.workload.mixes.is_empty() {
                return Err(ConfigError::invalid("workload.mixes", "need at least one mix or trace"));
            }
            if self.workload.events_per_mix == 0 {
                return Err(ConfigError::invalid("workload.events_per_mix", "must be positive"));
            }
            for m in &self.workload.mixes {
                m.validate()?;
            }
        }
        Ok(())
    }

    /// Load the traces, or generate the synthetic mixes in parallel.
    pub fn simulation(&self) -> Result<TraceSimulation, Error> {
        use rayon::prelude::*;
        let w = &self.workload;
        let mixes = if w.traces.is_empty() {
            w.mixes
                .par_iter()
                .enumerate()
                .map(|(i, p)| generate(p, w.events_per_mix, w.seed.wrapping_add(i as u64)))
                .collect()
        } else {
            w.traces.iter().map(|p| read_trace(p)).collect::<Result<Vec<_>, _>>()?
        };
        Ok(TraceSimulation { mixes, performance: self.performance, options: self.simulation })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for name in ["FD", "FD+6", "L2C2", "L2C2+6", "L2C2-NWL", "L2C2-BF"] {
            let v: Variant = name.parse().unwrap();
            assert_eq!(v.to_string(), name);
        }
        assert_eq!("FD+6".parse::<Variant>().unwrap().organization, Organization::FrameDisabling { repair: 6 });
        assert!(matches!("L3".parse::<Variant>(), Err(ConfigError::UnknownVariant(_))));
        assert!("FD+x".parse::<Variant>().is_err());
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_files_take_defaults() {
        let c = ExperimentConfig::from_toml("[cache]\nvariant = \"FD+6\"\n[endurance]\ncv = 0.3\nmean = 1e11\nseed = 4\n").unwrap();
        assert_eq!(c.geometry().unwrap().organization, Organization::FrameDisabling { repair: 6 });
        assert_eq!(c.forecast, ForecastSettings::default());
        assert_eq!(c.endurance.cv, 0.3);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(ExperimentConfig::from_toml("[cache]\nsets = 0\n"), Err(ConfigError::Invalid { .. })));
        assert!(matches!(ExperimentConfig::from_toml("[cache]\nbogus = 1\n"), Err(ConfigError::Parse(_))));
        assert!(matches!(ExperimentConfig::from_toml("[endurance]\ncv = 2.0\n"), Err(ConfigError::Invalid { .. })));
        assert!(matches!(ExperimentConfig::from_toml("[forecast]\nnum_epochs = 0\n"), Err(ConfigError::Invalid { .. })));
    }
}
