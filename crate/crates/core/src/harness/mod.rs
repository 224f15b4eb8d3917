//! Scenario files, end-to-end runs, parameter sweeps and report export.
//!
//! A scenario is a TOML document mapped onto [`Scenario`]; see
//! `docs/scenario.toml` for an annotated example. Runs are deterministic in
//! the scenario and its seed.

mod report;
mod run;
mod scenario;
mod sweep;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

pub use report::{format_number, FrameReport, MissReason, RunReport, TransmitterReport, RUN_CSV_HEADER};
pub use run::{decode_synthesis, run_batch, run_scenario, synthesize, SentFrame, Synthesis, TransmitterTruth};
pub use scenario::{
    resolve_device, BackgroundConfig, BackgroundDevice, DecodeMode, PayloadSource, Scenario, TransmitterConfig,
    DEFAULT_SAMPLE_RATE_HZ,
};
pub use sweep::{sweep, FrameStats, SweepRow, SweepTable, MISSED_FRAME_BER, SWEEP_CSV_HEADER};

/// Worker threads for concurrent runs: `PFCNOISE_THREADS` if set, else the
/// available parallelism.
pub fn worker_count() -> usize {
    std::env::var("PFCNOISE_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|n: &usize| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Applies `f` to every item on a pool of scoped threads. Results are in
/// item order regardless of completion order.
pub(crate) fn parallel_map<T: Send, R: Send>(items: Vec<T>, f: impl Fn(usize, T) -> R + Sync) -> Vec<R> {
    let n = items.len();
    let workers = worker_count().min(n);
    if workers <= 1 {
        return items.into_iter().enumerate().map(|(i, x)| f(i, x)).collect();
    }
    let inputs: Vec<Mutex<Option<T>>> = items.into_iter().map(|x| Mutex::new(Some(x))).collect();
    let outputs: Vec<Mutex<Option<R>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let x = inputs[i].lock().expect("input lock").take().expect("taken once");
                let r = f(i, x);
                *outputs[i].lock().expect("output lock") = Some(r);
            });
        }
    });
    outputs
        .into_iter()
        .map(|m| m.into_inner().expect("output lock").expect("every item ran"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_keeps_order() {
        let v: Vec<usize> = (0..50).collect();
        let out = parallel_map(v, |i, x| {
            std::thread::sleep(std::time::Duration::from_micros(((50 - x) * 10) as u64));
            (i, x * 2)
        });
        assert!(out.iter().enumerate().all(|(i, (j, y))| *j == i && *y == 2 * i));
    }
}
