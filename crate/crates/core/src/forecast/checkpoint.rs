//! Restartable forecast checkpoints.
//!
//! A checkpoint directory holds `rw.bin` (remaining-writes map),
//! `snapshot.csv` (frame health derived from it, for inspection) and
//! `state.json` (epoch, time and the samples so far).

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ForecastSeries, ForecastState, Sample};
use crate::cachesim::{CacheGeometry, HealthSnapshot};
use crate::endurance::{CellMap, MapKind};
use crate::error::FormatError;

const RW_FILE: &str = "rw.bin";
const SNAPSHOT_FILE: &str = "snapshot.csv";
const STATE_FILE: &str = "state.json";

#[derive(Serialize, Deserialize)]
struct StateFile {
    epoch: usize,
    t: f64,
    done: bool,
    peak_ipc: f64,
    comments: Vec<String>,
    samples: Vec<Sample>,
}

pub fn save_checkpoint(dir: &Path, geometry: &CacheGeometry, state: &ForecastState) -> Result<(), FormatError> {
    std::fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join(RW_FILE))?);
    state.rw.write_binary(&mut w)?;
    w.flush()?;
    let snapshot = HealthSnapshot::from_rw_map(geometry, &state.rw);
    snapshot.write_csv(BufWriter::new(File::create(dir.join(SNAPSHOT_FILE))?))?;
    let file = StateFile {
        epoch: state.epoch,
        t: state.t,
        done: state.done,
        peak_ipc: state.series.peak_ipc,
        comments: state.series.comments.clone(),
        samples: state.series.samples.clone(),
    };
    let mut w = BufWriter::new(File::create(dir.join(STATE_FILE))?);
    serde_json::to_writer_pretty(&mut w, &file)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path, geometry: &CacheGeometry) -> Result<ForecastState, FormatError> {
    let rw = CellMap::read_binary(BufReader::new(File::open(dir.join(RW_FILE))?))?;
    if rw.kind != MapKind::RemainingWrites || rw.shape != geometry.map_shape() {
        return Err(FormatError::Malformed("checkpoint map does not match the configured cache".into()));
    }
    let file: StateFile = serde_json::from_reader(BufReader::new(File::open(dir.join(STATE_FILE))?))?;
    Ok(ForecastState {
        epoch: file.epoch,
        t: file.t,
        rw,
        series: ForecastSeries { comments: file.comments, peak_ipc: file.peak_ipc, samples: file.samples },
        done: file.done,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cachesim::Organization;
    use crate::endurance::EnduranceModel;
    use crate::forecast::{AnalyticSimulation, ForecastSettings, Forecaster};

    #[test]
    fn resumed_forecast_matches_uninterrupted() {
        let g = CacheGeometry { sets: 2, ways: 4, organization: Organization::ByteDisabling { spare: 0 }, ..Default::default() };
        let model = EnduranceModel { mean: 1e5, cv: 0.3, seed: 3 };
        let sim = AnalyticSimulation { rate: 0.7, ipc: 1.3 };
        let settings = ForecastSettings { num_epochs: 6, ..Default::default() };
        let full = Forecaster::new(&g, &model, settings, &sim).run();

        let dir = tempfile::tempdir().unwrap();
        let mut f = Forecaster::new(&g, &model, settings, &sim);
        f.step();
        f.step();
        save_checkpoint(dir.path(), &g, f.state()).unwrap();
        let state = load_checkpoint(dir.path(), &g).unwrap();
        assert_eq!(&state, f.state());
        let resumed = Forecaster::resume(&g, settings, &sim, state).run();
        assert_eq!(resumed, full);
        assert!(dir.path().join("snapshot.csv").exists());
    }
}
