//! Lifetime forecasting: alternate cache simulation with analytic prediction
//! of the next failures.

pub mod checkpoint;
pub mod health;
pub mod predict;
pub mod series;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use health::{build_wr_avg, HealthStateKey, RateKey, WrAvgTable};
pub use predict::{predict_epoch, PredictOptions, PredictionOutcome, Predictor, StopReason, UnseenState};
pub use series::{compute_indices, ForecastSeries, Indices, Sample, SECONDS_PER_YEAR};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cachesim::{
    simulate, Cache, CacheGeometry, CacheStats, HealthSnapshot, Organization, PerformanceModel, SimulationOptions,
};
use crate::codec::BLOCK_BYTES;
use crate::endurance::{init_rw_map, CellMap, EnduranceModel, MapKind};
use crate::error::ConfigError;
use crate::workload::TraceEvent;

/// Result of one simulation phase.
#[derive(Clone, Debug)]
pub struct PhaseOutput {
    pub write_rates: CellMap,
    /// Per-core IPC of the performance proxy.
    pub ipc: f64,
    pub stats: CacheStats,
}

/// Produces write rates and performance for a cache in a given health state.
pub trait SimulationPhase: Sync {
    fn simulate(&self, snapshot: &HealthSnapshot, epoch: usize) -> PhaseOutput;
}

/// Replays every workload mix on a copy of the cache. Write rates are the
/// per-cell mean over mixes and IPC is the mean IPC.
pub struct TraceSimulation {
    pub mixes: Vec<Vec<TraceEvent>>,
    pub performance: PerformanceModel,
    pub options: SimulationOptions,
}

impl SimulationPhase for TraceSimulation {
    fn simulate(&self, snapshot: &HealthSnapshot, epoch: usize) -> PhaseOutput {
        let g = snapshot.geometry;
        // Epochs start from successive rotation origins so that, over a
        // forecast, blocks are laid out from every byte of the frame.
        let gc = if g.wear_leveling { epoch % g.frame_bytes() } else { 0 };
        let reports: Vec<_> = self
            .mixes
            .par_iter()
            .map(|events| {
                let mut cache = Cache::new(snapshot);
                cache.set_global_counter(gc).expect("counter below frame size");
                simulate(&mut cache, events, &self.performance, &self.options)
            })
            .collect();
        let mut write_rates = CellMap::zeros(MapKind::WriteRate, g.granularity(), g.map_shape());
        let mut stats = CacheStats::default();
        let mut ipc = 0.0;
        for r in &reports {
            for (acc, v) in write_rates.values.iter_mut().zip(&r.write_rates.values) {
                *acc += v;
            }
            stats += &r.stats;
            ipc += r.performance.ipc;
        }
        let n = reports.len().max(1) as f64;
        write_rates.values.iter_mut().for_each(|v| *v /= n);
        PhaseOutput { write_rates, ipc: ipc / n, stats }
    }
}

/// Fixed write rate on every live cell and fixed IPC, with no feedback from
/// the cache state. Used for calibration and projection checks.
pub struct AnalyticSimulation {
    pub rate: f64,
    pub ipc: f64,
}

impl SimulationPhase for AnalyticSimulation {
    fn simulate(&self, snapshot: &HealthSnapshot, _epoch: usize) -> PhaseOutput {
        let g = snapshot.geometry;
        let mut write_rates = CellMap::zeros(MapKind::WriteRate, g.granularity(), g.map_shape());
        for f in 0..g.frames() {
            if snapshot.class(f).is_none() {
                continue;
            }
            let live = snapshot.frames[f].live;
            for (c, v) in write_rates.frame_mut(f).iter_mut().enumerate() {
                if !g.is_compressed() || live.is_live(c) {
                    *v = self.rate;
                }
            }
        }
        PhaseOutput { write_rates, ipc: self.ipc, stats: CacheStats::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSettings {
    pub num_epochs: usize,
    /// Fraction of the nominal capacity whose loss ends the forecast.
    pub target_degradation: f64,
    pub unseen_state: UnseenState,
    /// Hard cap on simulation phases. Defaults to eight times `num_epochs`.
    pub max_epochs: Option<usize>,
}

impl Default for ForecastSettings {
    fn default() -> Self {
        ForecastSettings { num_epochs: 16, target_degradation: 0.5, unseen_state: UnseenState::Reuse, max_epochs: None }
    }
}

impl ForecastSettings {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.num_epochs == 0 {
            return Err(ConfigError::invalid("forecast.num_epochs", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.target_degradation) {
            return Err(ConfigError::invalid("forecast.target_degradation", "must lie in [0, 1]"));
        }
        if self.max_epochs == Some(0) {
            return Err(ConfigError::invalid("forecast.max_epochs", "must be positive"));
        }
        Ok(())
    }

    pub fn epoch_limit(&self) -> usize {
        self.max_epochs.unwrap_or(8 * self.num_epochs)
    }

    /// Units failed per prediction phase: the target share of all units
    /// split evenly over the epochs, rounded up.
    pub fn extension(&self, geometry: &CacheGeometry) -> usize {
        let units = match geometry.organization {
            Organization::FrameDisabling { .. } => geometry.frames(),
            Organization::ByteDisabling { .. } => geometry.frames() * BLOCK_BYTES,
        };
        ((self.target_degradation * units as f64) / self.num_epochs as f64).ceil() as usize
    }
}

/// Everything needed to continue a forecast.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastState {
    /// Completed simulation phases.
    pub epoch: usize,
    pub t: f64,
    pub rw: CellMap,
    pub series: ForecastSeries,
    pub done: bool,
}

/// Epoch loop over a simulation phase.
pub struct Forecaster<'a, S: SimulationPhase> {
    geometry: CacheGeometry,
    settings: ForecastSettings,
    simulation: &'a S,
    state: ForecastState,
}

impl<'a, S: SimulationPhase> Forecaster<'a, S> {
    /// Sample fresh bitcells and measure the pristine cache's IPC.
    pub fn new(geometry: &CacheGeometry, endurance: &EnduranceModel, settings: ForecastSettings, simulation: &'a S) -> Self {
        let rw = init_rw_map(geometry.map_shape(), geometry.granularity(), endurance);
        let peak_ipc = simulation.simulate(&HealthSnapshot::pristine(geometry), 0).ipc;
        let series = ForecastSeries { comments: Vec::new(), peak_ipc, samples: Vec::new() };
        Self::resume(geometry, settings, simulation, ForecastState { epoch: 0, t: 0.0, rw, series, done: false })
    }

    pub fn resume(geometry: &CacheGeometry, settings: ForecastSettings, simulation: &'a S, state: ForecastState) -> Self {
        Forecaster { geometry: *geometry, settings, simulation, state }
    }

    pub fn state(&self) -> &ForecastState {
        &self.state
    }

    pub fn into_state(self) -> ForecastState {
        self.state
    }

    /// One simulation phase followed, unless the forecast is over, by one
    /// prediction phase. Returns false once the forecast is complete.
    pub fn step(&mut self) -> bool {
        if self.state.done {
            return false;
        }
        let s = &mut self.state;
        let snapshot = HealthSnapshot::from_rw_map(&self.geometry, &s.rw);
        let phase = self.simulation.simulate(&snapshot, s.epoch);
        let capacity = snapshot.effective_capacity();
        let (classes, dead) = snapshot.class_histogram();
        let peak = s.series.peak_ipc;
        s.series.samples.push(Sample {
            t: s.t,
            capacity,
            ipc: phase.ipc,
            ipc_norm: if peak > 0.0 { phase.ipc / peak } else { 0.0 },
            classes,
            dead,
        });
        s.epoch += 1;
        let floor = 1.0 - self.settings.target_degradation;
        if self.settings.target_degradation <= 0.0 || capacity <= floor || s.epoch >= self.settings.epoch_limit() {
            s.done = true;
            return false;
        }

        let per_rank = self.geometry.is_compressed() && !self.geometry.wear_leveling;
        let table = build_wr_avg(&phase.write_rates, &snapshot, per_rank);
        let options = PredictOptions {
            extension: self.settings.extension(&self.geometry),
            capacity_floor: floor,
            unseen_state: self.settings.unseen_state,
            per_rank,
        };
        let empty = CellMap::zeros(MapKind::RemainingWrites, s.rw.granularity, s.rw.shape);
        let rw = std::mem::replace(&mut s.rw, empty);
        let mut predictor = Predictor::new(&self.geometry, rw, &table, options, s.t);
        let outcome = predictor.run();
        s.t = predictor.time();
        s.rw = predictor.into_rw();
        if outcome.killed == 0 {
            s.done = true;
            return false;
        }
        true
    }

    pub fn run(mut self) -> ForecastSeries {
        while self.step() {}
        self.state.series
    }
}

/// Full forecast from fresh bitcells.
pub fn run_forecast<S: SimulationPhase>(
    geometry: &CacheGeometry,
    endurance: &EnduranceModel,
    settings: ForecastSettings,
    simulation: &S,
) -> ForecastSeries {
    Forecaster::new(geometry, endurance, settings, simulation).run()
}
