//! Prediction phase: advance time failure by failure using per-state write
//! rates instead of simulating.

use serde::{Deserialize, Serialize};

use super::health::{HealthStateKey, RateKey, WrAvgTable};
use crate::cachesim::{frame_class, frame_data_capacity, CacheGeometry, FrameHealth, HealthSnapshot, Organization};
use crate::codec::{CompressionClass, BLOCK_BYTES};
use crate::endurance::{plt, wear, CellMap};

/// What to do when a set reaches a health state absent from the table.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnseenState {
    /// Keep using the rates of the state the set was in before.
    #[default]
    Reuse,
    /// Stop the prediction phase so the next simulation observes the state.
    EndEpoch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The requested number of units failed.
    Extension,
    /// Effective capacity fell to the floor.
    CapacityFloor,
    /// No live unit is being written.
    Exhausted,
    /// A set entered a state the table has never seen.
    UnseenState,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictOptions {
    /// Units (frames or bytes) to fail before stopping.
    pub extension: usize,
    /// Stop once effective capacity is at or below this fraction.
    pub capacity_floor: f64,
    pub unseen_state: UnseenState,
    /// Look rates up per byte rank, for caches without wear leveling.
    pub per_rank: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionOutcome {
    pub killed: usize,
    pub steps: usize,
    /// Sum of the step lengths in seconds.
    pub elapsed: f64,
    pub stop: StopReason,
}

/// Mutable state of one prediction phase.
///
/// Units are bytes under byte disabling and frames under frame disabling. A
/// frame's cells all see the same write rate under frame disabling, so its
/// failure time is set by its critical cell: the one whose failure exceeds
/// the repair budget.
pub struct Predictor<'a> {
    geometry: CacheGeometry,
    table: &'a WrAvgTable,
    options: PredictOptions,
    rw: CellMap,
    frames: Vec<FrameHealth>,
    classes: Vec<Option<CompressionClass>>,
    /// Per cell under byte disabling, per frame under frame disabling.
    rates: Vec<f64>,
    critical: Vec<usize>,
    effective: Vec<HealthStateKey>,
    capacity_bytes: usize,
    time: f64,
}

impl<'a> Predictor<'a> {
    /// Start from `rw` at absolute time `time`.
    pub fn new(geometry: &CacheGeometry, rw: CellMap, table: &'a WrAvgTable, options: PredictOptions, time: f64) -> Self {
        let snapshot = HealthSnapshot::from_rw_map(geometry, &rw);
        let classes: Vec<_> = (0..geometry.frames()).map(|f| snapshot.class(f)).collect();
        let capacity_bytes = (0..geometry.frames()).map(|f| snapshot.data_capacity(f)).sum();
        let cells = rw.shape.cells;
        let critical = match geometry.organization {
            Organization::FrameDisabling { repair } => rw
                .frames()
                .map(|c| {
                    let mut order: Vec<usize> = (0..cells).collect();
                    let k = (repair as usize).min(cells - 1);
                    order.select_nth_unstable_by(k, |&a, &b| c[a].total_cmp(&c[b]).then(a.cmp(&b)));
                    order[k]
                })
                .collect(),
            Organization::ByteDisabling { .. } => Vec::new(),
        };
        let rates = match geometry.organization {
            Organization::FrameDisabling { .. } => vec![0.0; geometry.frames()],
            Organization::ByteDisabling { .. } => vec![0.0; rw.values.len()],
        };
        let mut p = Predictor {
            geometry: *geometry,
            table,
            options,
            rw,
            frames: snapshot.frames,
            classes,
            rates,
            critical,
            effective: Vec::with_capacity(geometry.sets),
            capacity_bytes,
            time,
        };
        for set in 0..geometry.sets {
            let key = p.state_of(set);
            p.effective.push(key);
            p.assign_rates(set);
        }
        p
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn rw(&self) -> &CellMap {
        &self.rw
    }

    pub fn into_rw(self) -> CellMap {
        self.rw
    }

    pub fn snapshot(&self) -> HealthSnapshot {
        HealthSnapshot { geometry: self.geometry, frames: self.frames.clone() }
    }

    pub fn capacity(&self) -> f64 {
        self.capacity_bytes as f64 / (BLOCK_BYTES * self.geometry.frames()) as f64
    }

    /// Current write rate of a cell.
    pub fn rate(&self, frame: usize, cell: usize) -> f64 {
        match self.geometry.organization {
            Organization::FrameDisabling { .. } => self.rates[frame],
            Organization::ByteDisabling { .. } => self.rates[frame * self.rw.shape.cells + cell],
        }
    }

    fn state_of(&self, set: usize) -> HealthStateKey {
        let w = self.geometry.ways;
        HealthStateKey::of_set(self.geometry.organization, self.classes[set * w..(set + 1) * w].iter().copied())
    }

    fn assign_rates(&mut self, set: usize) {
        let state = self.effective[set];
        let cells = self.rw.shape.cells;
        for f in set * self.geometry.ways..(set + 1) * self.geometry.ways {
            let class = self.classes[f];
            match self.geometry.organization {
                Organization::FrameDisabling { .. } => {
                    if class.is_none() {
                        self.rates[f] = 0.0;
                    } else if let Some(r) = self.table.get(&RateKey { state, class: None, rank: None }) {
                        self.rates[f] = r;
                    }
                }
                Organization::ByteDisabling { .. } => {
                    let rates = &mut self.rates[f * cells..(f + 1) * cells];
                    let Some(class) = class else {
                        rates.iter_mut().for_each(|r| *r = 0.0);
                        continue;
                    };
                    let uniform = (!self.options.per_rank)
                        .then(|| self.table.get(&RateKey { state, class: Some(class), rank: None }))
                        .flatten();
                    let mut rank = 0u8;
                    for (pos, r) in rates.iter_mut().enumerate() {
                        if !self.frames[f].live.is_live(pos) {
                            *r = 0.0;
                            continue;
                        }
                        let found = if self.options.per_rank {
                            self.table.get(&RateKey { state, class: Some(class), rank: Some(rank) })
                        } else {
                            uniform
                        };
                        if let Some(v) = found {
                            *r = v;
                        }
                        rank += 1;
                    }
                }
            }
        }
    }

    /// Smallest predicted lifetime over live units.
    pub fn min_plt(&self) -> f64 {
        let cells = self.rw.shape.cells;
        let mut best = f64::INFINITY;
        for f in 0..self.frames.len() {
            if self.classes[f].is_none() {
                continue;
            }
            let rw = self.rw.frame(f);
            match self.geometry.organization {
                Organization::FrameDisabling { .. } => {
                    let rate = self.rates[f];
                    if rate > 0.0 {
                        best = best.min(plt(rw[self.critical[f]], rate));
                    }
                }
                Organization::ByteDisabling { .. } => {
                    for (c, &v) in rw.iter().enumerate() {
                        let rate = self.rates[f * cells + c];
                        if v > 0.0 && rate > 0.0 {
                            best = best.min(v / rate);
                        }
                    }
                }
            }
        }
        best
    }

    /// Wear every live cell for `step` seconds. Units whose lifetime ends
    /// within the step are failed. Returns (frame, cell) of each failure.
    fn advance(&mut self, step: f64) -> Vec<(usize, usize)> {
        let cells = self.rw.shape.cells;
        let mut failed = Vec::new();
        for f in 0..self.frames.len() {
            if self.classes[f].is_none() {
                continue;
            }
            match self.geometry.organization {
                Organization::FrameDisabling { .. } => {
                    let rate = self.rates[f];
                    if rate <= 0.0 {
                        continue;
                    }
                    let crit = self.critical[f];
                    let rw = self.rw.frame_mut(f);
                    let ends = plt(rw[crit], rate) <= step;
                    for v in rw.iter_mut() {
                        *v = wear(*v, rate, step);
                    }
                    if ends || rw[crit] == 0.0 {
                        rw[crit] = 0.0;
                        failed.push((f, crit));
                    }
                }
                Organization::ByteDisabling { .. } => {
                    let rates = &self.rates[f * cells..(f + 1) * cells];
                    let rw = self.rw.frame_mut(f);
                    for (c, v) in rw.iter_mut().enumerate() {
                        let rate = rates[c];
                        if *v <= 0.0 || rate <= 0.0 {
                            continue;
                        }
                        if *v / rate <= step {
                            *v = 0.0;
                        } else {
                            *v = wear(*v, rate, step);
                        }
                        if *v == 0.0 {
                            failed.push((f, c));
                        }
                    }
                }
            }
        }
        failed
    }

    fn fail(&mut self, frame: usize, cell: usize) {
        let before = frame_data_capacity(&self.geometry, &self.frames[frame]);
        let h = &mut self.frames[frame];
        match self.geometry.organization {
            Organization::FrameDisabling { .. } => {
                h.failed_cells = self.rw.frame(frame).iter().filter(|&&v| v <= 0.0).count() as u32;
                h.failed_cells = h.failed_cells.max(self.geometry.repair_entries() + 1);
            }
            Organization::ByteDisabling { .. } => {
                h.live.kill(cell);
                h.failed_cells += 1;
            }
        }
        self.classes[frame] = frame_class(&self.geometry, &self.frames[frame]);
        self.capacity_bytes -= before - frame_data_capacity(&self.geometry, &self.frames[frame]);
    }

    /// Run until `extension` units fail or another stop condition holds.
    pub fn run(&mut self) -> PredictionOutcome {
        let mut out = PredictionOutcome { killed: 0, steps: 0, elapsed: 0.0, stop: StopReason::Extension };
        while out.killed < self.options.extension {
            if self.capacity() <= self.options.capacity_floor {
                out.stop = StopReason::CapacityFloor;
                return out;
            }
            let step = self.min_plt();
            if !step.is_finite() {
                out.stop = StopReason::Exhausted;
                return out;
            }
            let failed = self.advance(step);
            self.time += step;
            out.elapsed += step;
            out.steps += 1;
            out.killed += failed.len();

            let mut sets: Vec<usize> = Vec::with_capacity(failed.len());
            for &(f, c) in &failed {
                self.fail(f, c);
                sets.push(f / self.geometry.ways);
            }
            sets.dedup();
            let mut unseen = false;
            for set in sets {
                let state = self.state_of(set);
                if state != self.effective[set] {
                    if self.table.contains_state(&state) {
                        self.effective[set] = state;
                    } else {
                        unseen = true;
                    }
                }
                self.assign_rates(set);
            }
            if unseen && self.options.unseen_state == UnseenState::EndEpoch {
                out.stop = StopReason::UnseenState;
                return out;
            }
        }
        out
    }
}

/// One prediction phase over `rw`, starting at time zero.
pub fn predict_epoch(
    geometry: &CacheGeometry,
    rw: CellMap,
    table: &WrAvgTable,
    options: PredictOptions,
) -> (CellMap, HealthSnapshot, PredictionOutcome) {
    let mut p = Predictor::new(geometry, rw, table, options, 0.0);
    let outcome = p.run();
    let snapshot = p.snapshot();
    (p.into_rw(), snapshot, outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::endurance::{Granularity, MapKind, MapShape};
    use crate::forecast::health::build_wr_avg;

    fn tiny() -> CacheGeometry {
        CacheGeometry { sets: 1, ways: 1, ..Default::default() }
    }

    fn uniform_table(g: &CacheGeometry, rw: &CellMap, rate: f64) -> WrAvgTable {
        let snap = HealthSnapshot::from_rw_map(g, rw);
        let mut wr = CellMap::zeros(MapKind::WriteRate, g.granularity(), g.map_shape());
        wr.values.iter_mut().for_each(|v| *v = rate);
        build_wr_avg(&wr, &snap, false)
    }

    fn opts(extension: usize) -> PredictOptions {
        PredictOptions { extension, capacity_floor: 0.0, unseen_state: UnseenState::Reuse, per_rank: false }
    }

    #[test]
    fn single_unique_minimum() {
        let g = tiny();
        let mut rw = CellMap::zeros(MapKind::RemainingWrites, Granularity::Byte, g.map_shape());
        for (i, v) in rw.values.iter_mut().enumerate() {
            *v = 1000.0 + i as f64;
        }
        rw.values[7] = 500.0;
        let table = uniform_table(&g, &rw, 10.0);
        let (after, snap, out) = predict_epoch(&g, rw, &table, opts(1));
        assert_eq!(out.killed, 1);
        assert_eq!(out.elapsed, 50.0);
        assert_eq!(after.values[7], 0.0);
        assert_eq!(after.values[0], 500.0);
        assert!(!snap.frames[0].live.is_live(7));
    }

    #[test]
    fn ties_fail_together() {
        let g = tiny();
        let mut rw = CellMap::zeros(MapKind::RemainingWrites, Granularity::Byte, g.map_shape());
        rw.values.iter_mut().for_each(|v| *v = 900.0);
        rw.values[3] = 100.0;
        rw.values[40] = 100.0;
        let table = uniform_table(&g, &rw, 1.0);
        let (_, snap, out) = predict_epoch(&g, rw, &table, opts(1));
        assert_eq!((out.killed, out.steps), (2, 1));
        assert_eq!(snap.frames[0].failed_cells, 2);
    }

    #[test]
    fn unwritten_cache_is_exhausted() {
        let g = tiny();
        let mut rw = CellMap::zeros(MapKind::RemainingWrites, Granularity::Byte, g.map_shape());
        rw.values.iter_mut().for_each(|v| *v = 1.0);
        let table = uniform_table(&g, &rw, 0.0);
        let (_, _, out) = predict_epoch(&g, rw, &table, opts(5));
        assert_eq!(out.stop, StopReason::Exhausted);
        assert_eq!(out.killed, 0);
    }

    #[test]
    fn frame_disabling_uses_critical_cell() {
        let g = CacheGeometry { sets: 1, ways: 2, organization: Organization::FrameDisabling { repair: 2 }, ..Default::default() };
        let shape = MapShape { sets: 1, ways: 2, cells: g.cells_per_frame() };
        let mut rw = CellMap::zeros(MapKind::RemainingWrites, Granularity::Bit, shape);
        rw.values.iter_mut().for_each(|v| *v = 1000.0);
        // Frame 0: weakest cells 10, 20, 30; the third one ends the frame.
        rw.frame_mut(0)[5] = 10.0;
        rw.frame_mut(0)[9] = 20.0;
        rw.frame_mut(0)[1] = 30.0;
        let table = uniform_table(&g, &rw, 2.0);
        let (after, snap, out) = predict_epoch(&g, rw, &table, opts(1));
        assert_eq!(out.elapsed, 15.0);
        assert_eq!(snap.class(0), None);
        assert_eq!(after.frame(0)[1], 0.0);
        assert_eq!(after.frame(1)[0], 970.0);
    }

    #[test]
    fn unseen_state_can_end_the_epoch() {
        let g = CacheGeometry { sets: 1, ways: 2, organization: Organization::FrameDisabling { repair: 0 }, ..Default::default() };
        let mut rw = CellMap::zeros(MapKind::RemainingWrites, Granularity::Bit, g.map_shape());
        rw.values.iter_mut().for_each(|v| *v = 100.0);
        rw.frame_mut(1).iter_mut().for_each(|v| *v = 300.0);
        let table = uniform_table(&g, &rw, 1.0);
        let end = PredictOptions { unseen_state: UnseenState::EndEpoch, ..opts(2) };
        let (_, _, out) = predict_epoch(&g, rw.clone(), &table, end);
        assert_eq!((out.killed, out.stop), (1, StopReason::UnseenState));
        let (_, _, out) = predict_epoch(&g, rw, &table, opts(2));
        assert_eq!((out.killed, out.elapsed), (2, 300.0));
    }

    #[test]
    fn capacity_floor_stops_prediction() {
        let g = CacheGeometry { sets: 1, ways: 4, organization: Organization::FrameDisabling { repair: 0 }, ..Default::default() };
        let mut rw = CellMap::zeros(MapKind::RemainingWrites, Granularity::Bit, g.map_shape());
        for f in 0..4 {
            rw.frame_mut(f).iter_mut().for_each(|v| *v = 100.0 * (f + 1) as f64);
        }
        let table = uniform_table(&g, &rw, 1.0);
        let o = PredictOptions { capacity_floor: 0.5, ..opts(10) };
        let (_, snap, out) = predict_epoch(&g, rw, &table, o);
        assert_eq!((out.killed, out.stop), (2, StopReason::CapacityFloor));
        assert_eq!(snap.effective_capacity(), 0.5);
    }
}
