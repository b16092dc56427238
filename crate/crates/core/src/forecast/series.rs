//! Forecast time series, lifetime indices and endurance projection.
//!
//! CSV layout: leading `# ` comment lines (free text, used to echo the
//! configuration), a `# peak_ipc: <value>` line, then a header row and one
//! row per sample.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::codec::CompressionClass;
use crate::error::FormatError;

pub const SECONDS_PER_YEAR: f64 = 365.25 * 86_400.0;

/// State of the cache observed at the start of one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Simulated lifetime in seconds.
    pub t: f64,
    /// Effective capacity as a fraction of the nominal data capacity.
    pub capacity: f64,
    /// Per-core IPC of the performance proxy.
    pub ipc: f64,
    /// `ipc` relative to the pristine cache.
    pub ipc_norm: f64,
    /// Live frames per compression class.
    pub classes: [usize; CompressionClass::COUNT],
    pub dead: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ForecastSeries {
    /// Free-text lines written as `#` comments ahead of the data.
    pub comments: Vec<String>,
    /// IPC of the pristine cache, the reference for `ipc_norm`.
    pub peak_ipc: f64,
    pub samples: Vec<Sample>,
}

/// Lifetime indices in seconds. `None` means the level was never reached.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Indices {
    pub t50c: Option<f64>,
    pub t90c: Option<f64>,
    pub t99c: Option<f64>,
    pub t90p: Option<f64>,
    pub t99p: Option<f64>,
    /// Instructions executed by all cores until half the capacity is lost or
    /// the horizon elapses, whichever is first.
    pub i50c_horizon: f64,
    pub horizon_seconds: f64,
}

impl ForecastSeries {
    /// Time at which `metric`, linearly interpolated between samples, first
    /// falls to `level` or below.
    pub fn crossing(&self, level: f64, metric: impl Fn(&Sample) -> f64) -> Option<f64> {
        let mut prev: Option<&Sample> = None;
        for s in &self.samples {
            let v = metric(s);
            if v <= level {
                return Some(match prev {
                    None => s.t,
                    Some(p) => {
                        let pv = metric(p);
                        p.t + (pv - level) / (pv - v) * (s.t - p.t)
                    }
                });
            }
            prev = Some(s);
        }
        None
    }

    /// Time until capacity falls to `fraction` of nominal.
    pub fn capacity_crossing(&self, fraction: f64) -> Option<f64> {
        self.crossing(fraction, |s| s.capacity)
    }

    /// Time until performance falls to `fraction` of the pristine cache.
    pub fn performance_crossing(&self, fraction: f64) -> Option<f64> {
        self.crossing(fraction, |s| s.ipc_norm)
    }

    /// Integral of `throughput(ipc)` from 0 to `end`, trapezoidal on the
    /// piecewise-linear series. Stops at the last sample.
    pub fn instructions_until(&self, end: f64, throughput: impl Fn(f64) -> f64) -> f64 {
        let mut total = 0.0;
        for w in self.samples.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if a.t >= end {
                break;
            }
            let (t1, ipc1) = if b.t > end {
                let f = (end - a.t) / (b.t - a.t);
                (end, a.ipc + f * (b.ipc - a.ipc))
            } else {
                (b.t, b.ipc)
            };
            total += 0.5 * (throughput(a.ipc) + throughput(ipc1)) * (t1 - a.t);
        }
        total
    }

    /// Every sample moved from `t` to `k * t`: the series of bitcells whose
    /// endurance is `k` times larger.
    pub fn project(&self, k: f64) -> ForecastSeries {
        assert!(k > 0.0 && k.is_finite(), "projection factor must be positive");
        let mut out = self.clone();
        for s in &mut out.samples {
            s.t *= k;
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), FormatError> {
        for line in &self.comments {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "# peak_ipc: {}", self.peak_ipc)?;
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = ["t_seconds", "capacity_fraction", "ipc_norm", "ipc"].map(String::from).to_vec();
        header.extend(CompressionClass::all().map(|c| format!("cc_{}", c.bytes())));
        header.push("dead".into());
        out.write_record(&header)?;
        for s in &self.samples {
            let mut row = vec![s.t.to_string(), s.capacity.to_string(), s.ipc_norm.to_string(), s.ipc.to_string()];
            row.extend(s.classes.iter().map(usize::to_string));
            row.push(s.dead.to_string());
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(mut r: R) -> Result<Self, FormatError> {
        let mut comments = Vec::new();
        let mut peak_ipc = None;
        let mut line = String::new();
        let mut header = String::new();
        loop {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                break;
            }
            match line.strip_prefix('#') {
                Some(rest) => {
                    let rest = rest.strip_prefix(' ').unwrap_or(rest).trim_end_matches(['\r', '\n']);
                    match rest.strip_prefix("peak_ipc:") {
                        Some(v) => {
                            peak_ipc = Some(v.trim().parse::<f64>().map_err(|e| FormatError::Malformed(format!("peak_ipc: {e}")))?)
                        }
                        None => comments.push(rest.to_string()),
                    }
                }
                None => {
                    header = std::mem::take(&mut line);
                    break;
                }
            }
        }
        let peak_ipc = peak_ipc.ok_or_else(|| FormatError::Malformed("missing peak_ipc line".into()))?;
        let mut rdr = csv::Reader::from_reader(header.as_bytes().chain(r));
        let columns = 4 + CompressionClass::COUNT + 1;
        if rdr.headers()?.len() != columns {
            return Err(FormatError::Malformed(format!("expected {columns} columns")));
        }
        let mut samples = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |e: &dyn std::fmt::Display| FormatError::Malformed(format!("row {i}: {e}"));
            let float = |k: usize| rec[k].parse::<f64>().map_err(|e| bad(&e));
            let count = |k: usize| rec[k].parse::<usize>().map_err(|e| bad(&e));
            let mut classes = [0usize; CompressionClass::COUNT];
            for (j, c) in classes.iter_mut().enumerate() {
                *c = count(4 + j)?;
            }
            samples.push(Sample {
                t: float(0)?,
                capacity: float(1)?,
                ipc_norm: float(2)?,
                ipc: float(3)?,
                classes,
                dead: count(columns - 1)?,
            });
        }
        Ok(ForecastSeries { comments, peak_ipc, samples })
    }
}

/// Lifetime indices of a series. `throughput` maps per-core IPC to
/// instructions per second of the whole chip.
pub fn compute_indices(series: &ForecastSeries, throughput: impl Fn(f64) -> f64, horizon_seconds: f64) -> Indices {
    let t50c = series.capacity_crossing(0.5);
    let last = series.samples.last().map_or(0.0, |s| s.t);
    let end = t50c.unwrap_or(last).min(horizon_seconds);
    Indices {
        t50c,
        t90c: series.capacity_crossing(0.9),
        t99c: series.capacity_crossing(0.99),
        t90p: series.performance_crossing(0.9),
        t99p: series.performance_crossing(0.99),
        i50c_horizon: series.instructions_until(end, throughput),
        horizon_seconds,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t: f64, capacity: f64, ipc: f64) -> Sample {
        Sample { t, capacity, ipc, ipc_norm: ipc, classes: [0; 12], dead: 0 }
    }

    fn series(points: &[(f64, f64, f64)]) -> ForecastSeries {
        ForecastSeries {
            comments: vec!["variant = \"L2C2\"".into()],
            peak_ipc: 1.0,
            samples: points.iter().map(|&(t, c, i)| sample(t, c, i)).collect(),
        }
    }

    #[test]
    fn endpoint_crossing() {
        let s = series(&[(0.0, 1.0, 1.0), (2.2 * SECONDS_PER_YEAR, 0.5, 1.0)]);
        assert_eq!(s.capacity_crossing(0.5), Some(2.2 * SECONDS_PER_YEAR));
        assert_eq!(s.capacity_crossing(0.75), Some(1.1 * SECONDS_PER_YEAR));
        assert_eq!(s.capacity_crossing(0.4), None);
        assert_eq!(s.capacity_crossing(1.0), Some(0.0));
    }

    #[test]
    fn constant_throughput() {
        let s = series(&[(0.0, 1.0, 1.0), (1.0, 0.9, 1.0)]);
        let i = compute_indices(&s, |ipc| ipc * 3.5e9 * 4.0, 5.0 * SECONDS_PER_YEAR);
        assert_eq!(i.i50c_horizon, 1.4e10);
        assert_eq!(i.t50c, None);
    }

    #[test]
    fn horizon_cuts_the_integral() {
        let s = series(&[(0.0, 1.0, 2.0), (10.0, 0.2, 0.0)]);
        // Capacity reaches 0.5 at t = 6.25, where ipc = 0.75.
        let i = compute_indices(&s, |ipc| ipc, 100.0);
        assert_eq!(i.t50c, Some(6.25));
        assert_eq!(i.i50c_horizon, 0.5 * (2.0 + 0.75) * 6.25);
        let j = compute_indices(&s, |ipc| ipc, 4.0);
        assert_eq!(j.i50c_horizon, 0.5 * (2.0 + 1.2) * 4.0);
    }

    #[test]
    fn projection_composes() {
        let s = series(&[(0.0, 1.0, 1.0), (3.0, 0.7, 0.9), (7.5, 0.4, 0.5)]);
        assert_eq!(s.project(1.0), s);
        assert_eq!(s.project(2.0).project(4.0), s.project(8.0));
        assert_eq!(s.project(10.0).capacity_crossing(0.5), Some(10.0 * s.capacity_crossing(0.5).unwrap()));
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let mut s = series(&[(0.0, 1.0, 0.1 + 0.2), (1.0 / 3.0, 0.7, 0.9)]);
        s.peak_ipc = 0.123_456_789_012_345_67;
        s.samples[1].classes[3] = 5;
        s.samples[1].dead = 2;
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# variant = \"L2C2\"\n# peak_ipc: "));
        assert!(text.contains("t_seconds,capacity_fraction,ipc_norm,ipc,cc_0,cc_8"));
        assert_eq!(ForecastSeries::read_csv(buf.as_slice()).unwrap(), s);
    }
}
