use std::time::Instant;

use rand::Rng;

use crate::channel::{
    accumulate_current, jittered_load, line_filter, pfc_frequency_at, receiver_frontend, superpose, synthesize_current,
    DeviceModel,
};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream};
use crate::rxdsp::{bit_error_rate, effective_bps, Acquisition, DecodeResult, Receiver};
use crate::signal::{Passband, SignalTrace, Unit};
use crate::txmod::{
    build_frame, modulate, parse_bits, place, random_bits, text_payload, Bits, FrameSpec, LoadWaveform,
};

use super::parallel_map;
use super::report::{FrameReport, MissReason, RunReport, TransmitterReport};
use super::scenario::{resolve_device, DecodeMode, PayloadSource, Scenario};

/// What was actually sent by one transmitter.
#[derive(Debug, Clone)]
pub struct TransmitterTruth {
    pub device: DeviceModel,
    /// Seed of the device's current, which fixes its frequency drift.
    pub device_seed: u64,
    pub frames: Vec<SentFrame>,
}

#[derive(Debug, Clone)]
pub struct SentFrame {
    pub start_s: f64,
    pub payload: Bits,
}

/// A synthesized receiver trace and what produced it.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub trace: SignalTrace,
    pub transmitters: Vec<TransmitterTruth>,
    /// Switching frequencies of the background machines.
    pub background_hz: Vec<f64>,
}

impl TransmitterTruth {
    pub fn carrier_at(&self, trace_len: usize, sample_rate_hz: f64, t_s: f64) -> f64 {
        pfc_frequency_at(&self.device, trace_len, sample_rate_hz, self.device_seed, t_s)
    }
}

fn payload_for(scenario: &Scenario, tx: usize, frame: usize) -> Result<Bits> {
    let t = &scenario.transmitters[tx];
    let len = t.frame.payload_len_bits;
    let seed = derive_seed(scenario.seed, "payload", &[tx as u64, frame as u64]);
    match &t.payload {
        PayloadSource::Random => Ok(random_bits(len, seed)),
        PayloadSource::Text { text } => Ok(text_payload(text, len, seed)),
        PayloadSource::Bits { bits } => parse_bits(bits),
    }
}

/// One device to be summed into the shared current.
struct Source {
    device: DeviceModel,
    load: SignalTrace,
    seed: u64,
    line_filter: Option<f64>,
}

fn add_source(src: &Source, fs: f64, out: &mut [f64]) -> Result<()> {
    match src.line_filter {
        None => accumulate_current(&src.device, &src.load, fs, src.seed, 1.0, out),
        Some(factor) => {
            let i = synthesize_current(&src.device, &src.load, fs, out.len() as f64 / fs, src.seed)?;
            let i = line_filter(&i, factor)?;
            out.iter_mut().zip(i.samples()).for_each(|(o, v)| *o += v);
            Ok(())
        }
    }
}

fn background_sources(scenario: &Scenario, carriers: &[f64], fs: f64, duration: f64) -> Result<Vec<Source>> {
    let bg = &scenario.background;
    let mut rng = stream(scenario.seed, "background", &[]);
    let mut specs: Vec<(DeviceModel, f64, f64)> = Vec::new();
    let base =
        DeviceModel::preset(&bg.preset).ok_or_else(|| Error::Config(format!("unknown preset `{}`", bg.preset)))?;
    for _ in 0..bg.count {
        let mut f = None;
        for _ in 0..10_000 {
            let c = rng.random_range(bg.freq_lo_hz..bg.freq_hi_hz);
            if carriers.iter().all(|t| (c - t).abs() >= bg.min_separation_hz) {
                f = Some(c);
                break;
            }
        }
        let f = f.ok_or_else(|| Error::Config("no room for background devices".into()))?;
        let level = rng.random_range(bg.load_lo..=bg.load_hi);
        specs.push((
            DeviceModel {
                pfc_freq_hz: f,
                ..base.clone()
            },
            level,
            bg.jitter,
        ));
    }
    for b in &scenario.background_devices {
        specs.push((resolve_device(&b.preset, &b.device)?, b.load, b.jitter));
    }
    specs
        .into_iter()
        .enumerate()
        .map(|(j, (device, level, jitter))| {
            let load = jittered_load(
                level,
                jitter,
                bg.update_s,
                fs,
                duration,
                derive_seed(scenario.seed, "background-load", &[j as u64]),
            )?;
            Ok(Source {
                device,
                load,
                seed: derive_seed(scenario.seed, "background-device", &[j as u64]),
                line_filter: None,
            })
        })
        .collect()
}

/// Builds the receiver trace for a scenario.
pub fn synthesize(scenario: &Scenario) -> Result<Synthesis> {
    let scenario = scenario.normalized()?;
    let fs = scenario.sample_rate_hz;
    let duration = scenario.duration();
    let n = (duration * fs).round() as usize;

    let mut sources = Vec::new();
    let mut truth = Vec::new();
    for (i, t) in scenario.transmitters.iter().enumerate() {
        let device = t.resolve_device()?;
        let mut load = vec![0.0; n];
        let mut frames = Vec::new();
        for k in 0..scenario.frames_count {
            let start_s = scenario.frame_start_s(i, k);
            let payload = payload_for(&scenario, i, k)?;
            let bits = build_frame(&payload, &t.frame)?;
            let w = modulate(&bits, &t.frame, fs, t.cores_scale)?;
            let placed = place(w.samples(), (start_s * fs).round() as usize, n);
            load.iter_mut().zip(&placed).for_each(|(l, p)| *l += p);
            frames.push(SentFrame { start_s, payload });
        }
        let mut load = LoadWaveform::new(SignalTrace::new(load, fs, Unit::Dimensionless)?, t.cores_scale)?;
        if let Some(d) = &t.defense {
            load = d.apply(&load, derive_seed(scenario.seed, "defense", &[i as u64]))?;
        }
        let device_seed = derive_seed(scenario.seed, "transmitter", &[i as u64]);
        sources.push(Source {
            device: device.clone(),
            load: load.into_trace(),
            seed: device_seed,
            line_filter: t.line_filter,
        });
        truth.push(TransmitterTruth {
            device,
            device_seed,
            frames,
        });
    }
    let carriers: Vec<f64> = truth.iter().map(|t| t.device.pfc_freq_hz).collect();
    let bg = background_sources(&scenario, &carriers, fs, duration)?;
    let background_hz = bg.iter().map(|s| s.device.pfc_freq_hz).collect();
    sources.extend(bg);

    let workers = super::worker_count().min(sources.len()).max(1);
    let mut current = vec![0.0; n];
    if workers == 1 {
        for s in &sources {
            add_source(s, fs, &mut current)?;
        }
    } else {
        let groups: Vec<Vec<&Source>> = (0..workers)
            .map(|w| sources.iter().skip(w).step_by(workers).collect())
            .collect();
        for part in parallel_map(groups, |_, g| -> Result<Vec<f64>> {
            let mut buf = vec![0.0; n];
            for s in g {
                add_source(s, fs, &mut buf)?;
            }
            Ok(buf)
        }) {
            current.iter_mut().zip(part?).for_each(|(c, p)| *c += p);
        }
    }
    let current = SignalTrace::new(current, fs, Unit::Amps)?;
    let v = superpose(
        &scenario.network,
        &[current],
        None,
        fs,
        duration,
        derive_seed(scenario.seed, "grid", &[]),
    )?;
    Ok(Synthesis {
        trace: receiver_frontend(&v, &scenario.adc)?,
        transmitters: truth,
        background_hz,
    })
}

/// Bookkeeping of decodes attributed to one transmitter.
struct Tally<'a> {
    spec: &'a FrameSpec,
    truth: &'a TransmitterTruth,
    decoded: Vec<Option<DecodeResult>>,
    near_miss: Vec<bool>,
    false_frames: usize,
}

impl<'a> Tally<'a> {
    fn new(spec: &'a FrameSpec, truth: &'a TransmitterTruth) -> Self {
        let n = truth.frames.len();
        Self {
            spec,
            truth,
            decoded: vec![None; n],
            near_miss: vec![false; n],
            false_frames: 0,
        }
    }

    /// Files a decode under the frame it synchronized to, if any.
    fn record(&mut self, mut r: DecodeResult) -> Result<()> {
        let tb = self.spec.symbol_duration_s;
        let s = r.frame_start_s;
        for (k, f) in self.truth.frames.iter().enumerate() {
            if (s - f.start_s).abs() <= tb / 2.0 {
                if self.decoded[k].is_none() {
                    let ber = bit_error_rate(&r.bits, &f.payload)?;
                    r.ber = Some(ber);
                    r.effective_bps = effective_bps(self.spec.payload_len_bits, ber, self.spec.frame_duration_s());
                    self.decoded[k] = Some(r);
                }
                return Ok(());
            }
        }
        for (k, f) in self.truth.frames.iter().enumerate() {
            if s > f.start_s - self.spec.frame_duration_s() && s < f.start_s + self.spec.frame_duration_s() {
                self.near_miss[k] = true;
            }
        }
        self.false_frames += 1;
        Ok(())
    }

    fn finish(self, tx_id: usize) -> TransmitterReport {
        let frames: Vec<FrameReport> = self
            .truth
            .frames
            .iter()
            .zip(self.decoded)
            .zip(self.near_miss)
            .enumerate()
            .map(|(index, ((f, d), near))| FrameReport {
                index,
                true_start_s: f.start_s,
                miss: match (&d, near) {
                    (Some(_), _) => None,
                    (None, true) => Some(MissReason::MisSync),
                    (None, false) => Some(MissReason::PilotNotFound),
                },
                decode: d,
            })
            .collect();
        TransmitterReport::from_frames(tx_id, self.truth.device.pfc_freq_hz, frames, self.false_frames)
    }
}

/// Widening applied to the previous band for the rough pilot search before
/// fine tuning, in multiples of the band width on each side.
const ROUGH_WIDEN: f64 = 1.0;

/// Follows one transmitter from its acquisition through later frames.
fn follow(rx: &Receiver, scenario: &Scenario, acq: &Acquisition, tally: &mut Tally) -> Result<()> {
    let spec = tally.spec;
    let tb = spec.symbol_duration_s;
    let end = rx_end(rx, spec);
    let mut band = acq.passband;
    let (mut lo, mut hi) = (acq.sync.frame_start_s, acq.sync.frame_start_s);
    for _ in 0..4 * scenario.frames_count + 4 {
        let r = match rx.demodulate_in(&band, spec, None, lo, hi) {
            Ok(r) => r,
            Err(e) if e.is_pilot_failure() => break,
            Err(e) => return Err(e),
        };
        let next = r.frame_start_s + spec.frame_duration_s();
        tally.record(r)?;
        if next > end {
            break;
        }
        if scenario.fine_tune {
            let w = band.width() * ROUGH_WIDEN;
            let wide = Passband::new((band.lb_hz - w).max(rx.config().f_lo_hz), band.ub_hz + w)?;
            let rough = match rx.find_frame_start_in(&wide, spec, next, end) {
                Ok(s) => s,
                Err(e) if e.is_pilot_failure() => break,
                Err(e) => return Err(e),
            };
            let radius = rx.config().fine_tune_radius_hz;
            band = rx
                .fine_tune_at(rough.frame_start_s, spec, &band, radius)
                .unwrap_or(band);
            (lo, hi) = (rough.frame_start_s - tb, rough.frame_start_s + tb);
        } else {
            (lo, hi) = (next, end);
        }
    }
    Ok(())
}

fn rx_end(rx: &Receiver, spec: &FrameSpec) -> f64 {
    rx.trace_duration_s() - spec.frame_duration_s()
}

fn decode_blind(rx: &Receiver, scenario: &Scenario, syn: &Synthesis, tallies: &mut [Tally]) -> Result<()> {
    let fs = scenario.sample_rate_hz;
    let n = syn.trace.len();
    let mut specs: Vec<&FrameSpec> = Vec::new();
    for t in &scenario.transmitters {
        if !specs.contains(&&t.frame) {
            specs.push(&t.frame);
        }
    }
    let slack = scenario.receiver.f_inc_hz / 2.0;
    for spec in specs {
        let mut firsts: Vec<Option<Acquisition>> = vec![None; tallies.len()];
        for acq in rx.acquire(spec)? {
            let t_mid = acq.sync.frame_start_s + spec.pilot_duration_s() / 2.0;
            let owner = (0..tallies.len())
                .filter(|i| &scenario.transmitters[*i].frame == spec)
                .map(|i| (i, syn.transmitters[i].carrier_at(n, fs, t_mid)))
                .filter(|(_, f)| *f >= acq.passband.lb_hz - slack && *f <= acq.passband.ub_hz + slack)
                .min_by(|a, b| {
                    (a.1 - acq.passband.center())
                        .abs()
                        .total_cmp(&(b.1 - acq.passband.center()).abs())
                });
            if let Some((i, _)) = owner {
                let earlier = firsts[i]
                    .as_ref()
                    .is_none_or(|a| acq.sync.frame_start_s < a.sync.frame_start_s);
                if earlier {
                    firsts[i] = Some(acq);
                }
            }
        }
        for (i, first) in firsts.into_iter().enumerate() {
            if let Some(acq) = first {
                follow(rx, scenario, &acq, &mut tallies[i])?;
            }
        }
    }
    Ok(())
}

fn decode_oracle(rx: &Receiver, scenario: &Scenario, syn: &Synthesis, tallies: &mut [Tally]) -> Result<()> {
    let fs = scenario.sample_rate_hz;
    let n = syn.trace.len();
    let cfg = rx.config().clone();
    for (i, tally) in tallies.iter_mut().enumerate() {
        let spec = tally.spec;
        let tb = spec.symbol_duration_s;
        let mut prev: Option<Passband> = None;
        for f in &syn.transmitters[i].frames {
            let t0 = f.start_s;
            let carrier = syn.transmitters[i].carrier_at(n, fs, t0 + spec.pilot_duration_s() / 2.0);
            let band = match prev {
                Some(p) if scenario.fine_tune => rx.fine_tune_at(t0, spec, &p, cfg.fine_tune_radius_hz),
                _ => oracle_scan(rx, t0, spec, carrier),
            };
            let band = match band {
                Ok(b) => b,
                Err(e) if e.is_pilot_failure() => continue,
                Err(e) => return Err(e),
            };
            prev = Some(band);
            match rx.demodulate_in(&band, spec, None, t0 - tb / 2.0, t0 + tb / 2.0) {
                Ok(r) => tally.record(r)?,
                Err(e) if e.is_pilot_failure() => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(())
}

/// Scans upward from the bottom of the range, skipping pilot-bearing bands
/// that belong to other transmitters.
fn oracle_scan(rx: &Receiver, t0: f64, spec: &FrameSpec, carrier: f64) -> Result<Passband> {
    let cfg = rx.config();
    let mut lo = cfg.f_lo_hz;
    loop {
        let b = rx.scan_range_at(t0, spec, lo, cfg.f_hi_hz)?;
        if b.lb_hz - cfg.f_inc_hz <= carrier && carrier <= b.ub_hz + cfg.f_inc_hz {
            return Ok(b);
        }
        if b.lb_hz > carrier {
            return Err(Error::NoPilotFound);
        }
        lo = b.ub_hz;
    }
}

/// Synthesizes, decodes and scores one scenario.
pub fn run_scenario(scenario: &Scenario) -> Result<RunReport> {
    let clock = Instant::now();
    let scenario = scenario.normalized()?;
    let syn = synthesize(&scenario)?;
    let mut report = decode_synthesis(&scenario, &syn)?;
    report.runtime_s = clock.elapsed().as_secs_f64();
    Ok(report)
}

/// Decodes and scores an already synthesized scenario.
pub fn decode_synthesis(scenario: &Scenario, syn: &Synthesis) -> Result<RunReport> {
    let rx = Receiver::new(&syn.trace, scenario.receiver.clone())?;
    let mut tallies: Vec<Tally> = scenario
        .transmitters
        .iter()
        .zip(&syn.transmitters)
        .map(|(t, truth)| Tally::new(&t.frame, truth))
        .collect();
    match scenario.mode {
        DecodeMode::Blind => decode_blind(&rx, scenario, syn, &mut tallies)?,
        DecodeMode::Oracle => decode_oracle(&rx, scenario, syn, &mut tallies)?,
    }
    Ok(RunReport {
        fingerprint: scenario.fingerprint()?,
        seed: scenario.seed,
        runtime_s: 0.0,
        transmitters: tallies.into_iter().enumerate().map(|(i, t)| t.finish(i)).collect(),
    })
}

/// Independent runs of a scenario, the `i`-th seeded from the scenario seed
/// and `i`. Reports come back in run order.
pub fn run_batch(scenario: &Scenario, runs: usize) -> Result<Vec<RunReport>> {
    let jobs: Vec<Scenario> = (0..runs)
        .map(|i| Scenario {
            seed: derive_seed(scenario.seed, "run", &[i as u64]),
            ..scenario.clone()
        })
        .collect();
    parallel_map(jobs, |_, s| run_scenario(&s)).into_iter().collect()
}
