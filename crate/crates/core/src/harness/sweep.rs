use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::rng::derive_seed;

use super::parallel_map;
use super::report::{format_number, write_file, RunReport};
use super::run::run_scenario;
use super::scenario::Scenario;

/// BER charged to a missed frame in medians: a receiver that cannot find the
/// frame does no better than guessing.
pub const MISSED_FRAME_BER: f64 = 0.5;

pub const SWEEP_CSV_HEADER: &str = "value,median_ber,mean_effective_bps,miss_rate,frames";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub median_ber: f64,
    pub mean_effective_bps: f64,
    pub miss_rate: f64,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: String,
    pub rows: Vec<SweepRow>,
}

/// Frame-level summary over a set of runs, pooling every transmitter.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStats {
    /// Per frame; `None` for a missed frame.
    pub bers: Vec<Option<f64>>,
    pub effective_bps: Vec<f64>,
}

impl FrameStats {
    pub fn from_reports<'a>(reports: impl IntoIterator<Item = &'a RunReport>) -> Self {
        let mut bers = Vec::new();
        let mut effective_bps = Vec::new();
        for r in reports {
            for t in &r.transmitters {
                for f in &t.frames {
                    bers.push(f.ber());
                    effective_bps.push(f.decode.as_ref().map_or(0.0, |d| d.effective_bps));
                }
            }
        }
        Self { bers, effective_bps }
    }

    pub fn len(&self) -> usize {
        self.bers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bers.is_empty()
    }

    pub fn median_ber(&self) -> f64 {
        let mut v: Vec<f64> = self.bers.iter().map(|b| b.unwrap_or(MISSED_FRAME_BER)).collect();
        if v.is_empty() {
            return f64::NAN;
        }
        v.sort_by(f64::total_cmp);
        let m = v.len() / 2;
        if v.len() % 2 == 1 {
            v[m]
        } else {
            0.5 * (v[m - 1] + v[m])
        }
    }

    pub fn mean_effective_bps(&self) -> f64 {
        self.effective_bps.iter().sum::<f64>() / self.effective_bps.len().max(1) as f64
    }

    pub fn miss_rate(&self) -> f64 {
        self.bers.iter().filter(|b| b.is_none()).count() as f64 / self.bers.len().max(1) as f64
    }

    /// Total bit errors over decoded frames divided by their bits.
    pub fn decoded_ber(&self, payload_len_bits: usize) -> Option<f64> {
        let d: Vec<f64> = self.bers.iter().flatten().copied().collect();
        (!d.is_empty()).then(|| {
            let errors: f64 = d.iter().map(|b| (b * payload_len_bits as f64).round()).sum();
            errors / (d.len() * payload_len_bits) as f64
        })
    }
}

/// Runs `frames_per_cell` independent runs for each value of `axis`. Run
/// `j` of every cell uses the same seed, so cells differ only in the swept
/// parameter.
pub fn sweep(base: &Scenario, axis: &str, values: &[f64], frames_per_cell: usize) -> Result<SweepTable> {
    let cells: Vec<Scenario> = values
        .iter()
        .map(|v| base.with_value(axis, *v))
        .collect::<Result<_>>()?;
    let jobs: Vec<Scenario> = cells
        .iter()
        .flat_map(|c| {
            (0..frames_per_cell).map(move |j| Scenario {
                seed: derive_seed(base.seed, "sweep", &[j as u64]),
                ..c.clone()
            })
        })
        .collect();
    let reports: Vec<RunReport> = parallel_map(jobs, |_, s| run_scenario(&s))
        .into_iter()
        .collect::<Result<_>>()?;
    let rows = values
        .iter()
        .enumerate()
        .map(|(c, v)| {
            let stats = FrameStats::from_reports(&reports[c * frames_per_cell..(c + 1) * frames_per_cell]);
            SweepRow {
                value: *v,
                median_ber: stats.median_ber(),
                mean_effective_bps: stats.mean_effective_bps(),
                miss_rate: stats.miss_rate(),
                frames: stats.len(),
            }
        })
        .collect();
    Ok(SweepTable {
        axis: axis.to_string(),
        rows,
    })
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(SWEEP_CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                format_number(r.value),
                format_number(r.median_ber),
                format_number(r.mean_effective_bps),
                format_number(r.miss_rate),
                r.frames
            );
        }
        s
    }

    pub fn to_jsonl(&self) -> String {
        self.rows
            .iter()
            .map(|r| {
                let mut v = serde_json::to_value(r).expect("row serializes");
                v["axis"] = self.axis.clone().into();
                v.to_string() + "\n"
            })
            .collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path, &self.to_csv())
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path, &self.to_jsonl())
    }
}
