//! The receiver: passband discovery, frame synchronization and bit
//! decisions, plus the rate and error metrics.
//!
//! Every decision compares per-symbol means of the band's envelope
//! (band-pass, rectify, moving average over a quarter symbol) against the
//! mean of the pilot's symbol means. A pilot is accepted only when its bit
//! pattern matches exactly and two gates hold: the pilot envelope stands
//! clear of the band's noise level, and the pattern has real modulation
//! depth. Without the gates, noise and steady background spikes decode short
//! pilots by chance.

mod metrics;
mod narrowband;

use std::cell::{OnceCell, RefCell};
use std::f64::consts::LN_2;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{
    median, moving_average, psd, window_samples, Passband, SignalTrace, TraceSpectrum, DEFAULT_SEGMENT_LEN,
    DEFAULT_TRANSITION_HZ,
};
use crate::txmod::{Bits, FrameSpec};

pub use metrics::{amplitude_pmf, bit_error_rate, demodulate_multilevel, effective_bps, symbol_error_rate, Histogram};
use narrowband::{noise_envelope, EnvelopeSeries, Narrowband};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionGates {
    /// Pilot envelope over the envelope noise alone would give, in dB.
    pub min_snr_db: f64,
    /// `(mean of 1-symbols − mean of 0-symbols) / mean` over the pilot.
    pub min_depth: f64,
}

impl Default for DetectionGates {
    fn default() -> Self {
        Self {
            min_snr_db: 10.0,
            min_depth: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub f_lo_hz: f64,
    pub f_hi_hz: f64,
    /// Widest band tried.
    pub f_max_hz: f64,
    /// Grid step for band edges and widths.
    pub f_inc_hz: f64,
    pub gates: DetectionGates,
    /// Width of the band centred on the spike once a pilot is found.
    /// Defaults to two symbol rates, rounded to the grid.
    pub refine_width_hz: Option<f64>,
    /// PSD prominence over the median floor for blind candidates, dB.
    pub candidate_snr_db: f64,
    pub fine_tune_radius_hz: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            f_lo_hz: 20e3,
            f_hi_hz: 150e3,
            f_max_hz: 500.0,
            f_inc_hz: 10.0,
            gates: DetectionGates::default(),
            refine_width_hz: None,
            candidate_snr_db: 10.0,
            fine_tune_radius_hz: 500.0,
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_lo_hz > 0.0 && self.f_lo_hz < self.f_hi_hz) {
            return Err(Error::Config(format!("scan range {}..{}", self.f_lo_hz, self.f_hi_hz)));
        }
        if !(self.f_inc_hz > 0.0 && self.f_inc_hz <= self.f_max_hz) {
            return Err(Error::Config(format!(
                "scan step {} and maximum width {}",
                self.f_inc_hz, self.f_max_hz
            )));
        }
        if let Some(w) = self.refine_width_hz {
            if !(w > 0.0) {
                return Err(Error::Config(format!("refine width {w}")));
            }
        }
        if !(self.fine_tune_radius_hz >= 0.0) {
            return Err(Error::Config("negative fine-tune radius".into()));
        }
        Ok(())
    }

    fn refine_width(&self, spec: &FrameSpec) -> f64 {
        self.refine_width_hz.unwrap_or_else(|| {
            let w = 2.0 / spec.symbol_duration_s;
            (w / self.f_inc_hz).round().max(1.0) * self.f_inc_hz
        })
    }

    fn floor_range(&self) -> (f64, f64) {
        (self.f_lo_hz, self.f_hi_hz)
    }
}

/// Result of matching the pilot against a set of symbol means.
#[derive(Debug, Clone, Copy, PartialEq)]
struct PilotMatch {
    threshold: f64,
    inverted: bool,
    depth: f64,
}

fn decide(a: f64, threshold: f64, inverted: bool) -> u8 {
    if inverted {
        (a < threshold) as u8
    } else {
        (a > threshold) as u8
    }
}

fn match_pilot(avgs: &[f64], pilot: &[u8], gates: &DetectionGates, noise_env: f64) -> Option<PilotMatch> {
    let mean = avgs.iter().sum::<f64>() / avgs.len() as f64;
    if !(mean > 0.0) || mean < noise_env * 10f64.powf(gates.min_snr_db / 20.0) {
        return None;
    }
    let class_mean = |bit: u8| {
        let (s, n) = avgs
            .iter()
            .zip(pilot)
            .filter(|(_, b)| **b == bit)
            .fold((0.0, 0usize), |(s, n), (a, _)| (s + a, n + 1));
        s / n as f64
    };
    let (m1, m0) = (class_mean(1), class_mean(0));
    // Inverted polarity is tried only after the normal reading fails.
    for inverted in [false, true] {
        let pattern = avgs.iter().zip(pilot).all(|(a, b)| decide(*a, mean, inverted) == *b);
        let depth = if inverted { m0 - m1 } else { m1 - m0 } / mean;
        if pattern && depth >= gates.min_depth {
            return Some(PilotMatch {
                threshold: mean,
                inverted,
                depth,
            });
        }
    }
    None
}

/// Where a frame starts and how its symbols are to be read.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameSync {
    pub frame_start_s: f64,
    /// Mean envelope over the pilot window.
    pub threshold: f64,
    /// Mean of the pilot's symbol means; bits are decided against this.
    pub decision_threshold: f64,
    pub inverted: bool,
    pub depth: f64,
}

/// Slides a pilot-length window in steps of an eighth of a symbol over
/// pilot starts in `[from_s, to_s]`. A frame follows idle time, so the
/// symbol before an accepted pilot must read as `0` under the pilot's
/// polarity and threshold; this rejects shifted or inverted readings that
/// straddle the idle lead-in. The earliest run of consecutive accepted
/// offsets is taken, and within it the offset of greatest depth.
fn search_pilot(
    series: &EnvelopeSeries,
    spec: &FrameSpec,
    gates: &DetectionGates,
    noise_env: f64,
    from_s: f64,
    to_s: f64,
) -> Option<FrameSync> {
    let tb = spec.symbol_duration_s;
    let tp = spec.pilot_duration_s();
    let step = tb / 8.0;
    let last = to_s.min(series.end_s() - tp);
    let mut best: Option<(f64, PilotMatch)> = None;
    let mut i = 0usize;
    loop {
        let o = from_s + i as f64 * step;
        if o > last + 1e-12 {
            break;
        }
        let avgs = series.symbol_means(o, tb, spec.pilot_bits.len());
        let m = match_pilot(&avgs, &spec.pilot_bits, gates, noise_env)
            .filter(|m| o < tb || decide(series.mean_between(o - tb, o), m.threshold, m.inverted) == 0);
        match (m, best) {
            (Some(m), None) => best = Some((o, m)),
            (Some(m), Some((_, b))) if m.depth > b.depth => best = Some((o, m)),
            (None, Some(_)) => break,
            _ => {}
        }
        i += 1;
    }
    best.map(|(o, m)| FrameSync {
        frame_start_s: o,
        threshold: series.mean_between(o, o + tp),
        decision_threshold: m.threshold,
        inverted: m.inverted,
        depth: m.depth,
    })
}

/// Per-frame decoding outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    /// Recovered payload bits.
    #[serde(with = "bits_as_string")]
    pub bits: Bits,
    pub ber: Option<f64>,
    pub effective_bps: f64,
    pub passband: Passband,
    pub frame_start_s: f64,
    pub threshold: f64,
    pub decision_threshold: f64,
    pub inverted: bool,
    /// Per-symbol mean envelope of each payload symbol.
    pub bitwise_amplitudes: Vec<f64>,
}

mod bits_as_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bits: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&crate::txmod::format_bits(bits))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        crate::txmod::parse_bits(&String::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// A frame found without timing or frequency hints.
#[derive(Debug, Clone, PartialEq)]
pub struct Acquisition {
    pub passband: Passband,
    pub sync: FrameSync,
}

/// Receiver state for one trace: caches the trace's spectrum across the
/// many band-pass operations a decode needs.
pub struct Receiver<'a> {
    trace: &'a SignalTrace,
    cfg: ScanConfig,
    spectrum: OnceCell<TraceSpectrum>,
    noise_per_bin: OnceCell<f64>,
    last_series: RefCell<Option<(SeriesKey, Rc<EnvelopeSeries>)>>,
}

type SeriesKey = (u64, u64, u64);

impl<'a> Receiver<'a> {
    pub fn new(trace: &'a SignalTrace, cfg: ScanConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.f_hi_hz >= trace.nyquist_hz() {
            return Err(Error::Config(format!(
                "scan range reaches {} Hz, above Nyquist {}",
                cfg.f_hi_hz,
                trace.nyquist_hz()
            )));
        }
        Ok(Self {
            trace,
            cfg,
            spectrum: OnceCell::new(),
            noise_per_bin: OnceCell::new(),
            last_series: RefCell::new(None),
        })
    }

    pub fn config(&self) -> &ScanConfig {
        &self.cfg
    }

    pub fn trace_duration_s(&self) -> f64 {
        self.trace.duration_s()
    }

    fn spectrum(&self) -> &TraceSpectrum {
        self.spectrum
            .get_or_init(|| TraceSpectrum::for_band_pass(self.trace, DEFAULT_TRANSITION_HZ))
    }

    fn noise_envelope(&self, width_hz: f64) -> f64 {
        let spec = self.spectrum();
        let per_bin = *self.noise_per_bin.get_or_init(|| {
            let bin = spec.bin_hz();
            let lo = (self.cfg.f_lo_hz / bin).ceil() as usize;
            let hi = ((self.cfg.f_hi_hz / bin).floor() as usize).min(spec.bins.len() - 1);
            let mut p: Vec<f64> = spec.bins[lo..=hi].iter().map(|b| b.norm_sqr()).collect();
            median(&mut p) / LN_2
        });
        noise_envelope(per_bin, spec.len, spec.sample_rate_hz, width_hz)
    }

    /// Exact band-pass → rectify → moving-average envelope of the trace.
    /// The most recent one is kept, since sync and demodulation of a frame
    /// read the same band.
    fn exact_series(&self, band: &Passband, spec: &FrameSpec) -> Result<Rc<EnvelopeSeries>> {
        let key = (
            band.lb_hz.to_bits(),
            band.ub_hz.to_bits(),
            spec.symbol_duration_s.to_bits(),
        );
        if let Some((k, s)) = self.last_series.borrow().as_ref() {
            if *k == key {
                return Ok(s.clone());
            }
        }
        let fs = self.trace.sample_rate_hz();
        band.check_nyquist(fs)?;
        let mut y = self.spectrum().band_pass(band, DEFAULT_TRANSITION_HZ);
        y.iter_mut().for_each(|v| *v = v.abs());
        let e = moving_average(&y, window_samples(spec.symbol_duration_s / 4.0, fs)?);
        let series = Rc::new(EnvelopeSeries::new(0.0, 1.0 / fs, &e));
        *self.last_series.borrow_mut() = Some((key, series.clone()));
        Ok(series)
    }

    /// Pilot search with pilot starts restricted to `[from_s, to_s]`.
    pub fn find_frame_start_in(&self, band: &Passband, spec: &FrameSpec, from_s: f64, to_s: f64) -> Result<FrameSync> {
        spec.validate()?;
        let series = self.exact_series(band, spec)?;
        search_pilot(
            &series,
            spec,
            &self.cfg.gates,
            self.noise_envelope(band.width()),
            from_s.max(0.0),
            to_s,
        )
        .ok_or(Error::PilotNotFound)
    }

    /// Synchronizes within `[from_s, to_s]` and decides the payload.
    pub fn demodulate_in(
        &self,
        band: &Passband,
        spec: &FrameSpec,
        reference_payload: Option<&[u8]>,
        from_s: f64,
        to_s: f64,
    ) -> Result<DecodeResult> {
        spec.validate()?;
        if let Some(r) = reference_payload {
            if r.len() != spec.payload_len_bits {
                return Err(Error::LengthMismatch {
                    expected: spec.payload_len_bits,
                    actual: r.len(),
                });
            }
        }
        let series = self.exact_series(band, spec)?;
        let sync = search_pilot(
            &series,
            spec,
            &self.cfg.gates,
            self.noise_envelope(band.width()),
            from_s.max(0.0),
            to_s,
        )
        .ok_or(Error::PilotNotFound)?;
        let amps = series.symbol_means(
            sync.frame_start_s + spec.pilot_duration_s(),
            spec.symbol_duration_s,
            spec.payload_len_bits,
        );
        let bits: Bits = amps
            .iter()
            .map(|a| decide(*a, sync.decision_threshold, sync.inverted))
            .collect();
        let ber = reference_payload.map(|r| bit_error_rate(&bits, r)).transpose()?;
        Ok(DecodeResult {
            effective_bps: effective_bps(spec.payload_len_bits, ber.unwrap_or(0.0), spec.frame_duration_s()),
            bits,
            ber,
            passband: *band,
            frame_start_s: sync.frame_start_s,
            threshold: sync.threshold,
            decision_threshold: sync.decision_threshold,
            inverted: sync.inverted,
            bitwise_amplitudes: amps,
        })
    }

    /// Per-symbol envelope means of `count` symbols from `start_s`.
    pub fn symbol_amplitudes(&self, band: &Passband, spec: &FrameSpec, start_s: f64, count: usize) -> Result<Vec<f64>> {
        let series = self.exact_series(band, spec)?;
        Ok(series.symbol_means(start_s, spec.symbol_duration_s, count))
    }

    fn scan_window(&self, spec: &FrameSpec, pilot_start_s: f64) -> Narrowband<'static> {
        Narrowband::around(
            self.trace,
            pilot_start_s,
            pilot_start_s + spec.pilot_duration_s(),
            self.cfg.floor_range(),
            DEFAULT_TRANSITION_HZ,
        )
    }

    /// Band scan over the whole configured range for a pilot starting at `pilot_start_s`.
    pub fn scan_at(&self, pilot_start_s: f64, spec: &FrameSpec) -> Result<Passband> {
        self.scan_range_at(pilot_start_s, spec, self.cfg.f_lo_hz, self.cfg.f_hi_hz)
    }

    /// Band scan with band edges restricted to `[lo_hz, hi_hz]`.
    pub fn scan_range_at(&self, pilot_start_s: f64, spec: &FrameSpec, lo_hz: f64, hi_hz: f64) -> Result<Passband> {
        spec.validate()?;
        if !(lo_hz < hi_hz) {
            return Err(Error::NoPilotFound);
        }
        let nb = self.scan_window(spec, pilot_start_s);
        let range = (lo_hz, hi_hz);
        let hit = scan_grid(&nb, spec, pilot_start_s, &self.cfg, range)?.ok_or(Error::NoPilotFound)?;
        refine(&nb, spec, pilot_start_s, &self.cfg, hit, range)
    }

    /// Band scan restricted to `radius_hz` around a previously found band.
    pub fn fine_tune_at(
        &self,
        pilot_start_s: f64,
        spec: &FrameSpec,
        prev: &Passband,
        radius_hz: f64,
    ) -> Result<Passband> {
        spec.validate()?;
        if !(radius_hz >= 0.0) {
            return Err(Error::Config(format!("fine-tune radius {radius_hz}")));
        }
        let nb = self.scan_window(spec, pilot_start_s);
        let range = (
            (prev.lb_hz - radius_hz).max(self.cfg.f_inc_hz),
            (prev.ub_hz + radius_hz).min(self.trace.nyquist_hz() - DEFAULT_TRANSITION_HZ),
        );
        if let Some(band) = nearest_spike_band(&nb, spec, pilot_start_s, &self.cfg, prev.center(), range)? {
            return Ok(band);
        }
        let hit = scan_grid(&nb, spec, pilot_start_s, &self.cfg, range)?.ok_or(Error::NoPilotFound)?;
        refine(&nb, spec, pilot_start_s, &self.cfg, hit, range)
    }

    /// Prominent PSD peaks in the scan range, ascending in frequency.
    fn candidates(&self, min_separation_hz: f64) -> Result<Vec<f64>> {
        let s = psd(self.trace, DEFAULT_SEGMENT_LEN.min(self.trace.len()))?;
        let floor = s.median_in(self.cfg.f_lo_hz, self.cfg.f_hi_hz);
        let level = floor * 10f64.powf(self.cfg.candidate_snr_db / 10.0);
        let mut peaks: Vec<(f64, f64)> = (1..s.psd.len() - 1)
            .filter(|k| {
                let f = s.freqs_hz[*k];
                f >= self.cfg.f_lo_hz
                    && f <= self.cfg.f_hi_hz
                    && s.psd[*k] >= level
                    && s.psd[*k] >= s.psd[k - 1]
                    && s.psd[*k] >= s.psd[k + 1]
            })
            .map(|k| (s.psd[k], s.freqs_hz[k]))
            .collect();
        peaks.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut kept: Vec<f64> = Vec::new();
        for (_, f) in peaks {
            if kept.iter().all(|g| (f - g).abs() >= min_separation_hz) {
                kept.push(f);
            }
        }
        kept.sort_by(f64::total_cmp);
        Ok(kept)
    }

    /// Blind acquisition: every spectral peak is screened for the pilot
    /// anywhere in the trace; hits are fine-tuned and re-synchronized on
    /// the exact envelope.
    pub fn acquire(&self, spec: &FrameSpec) -> Result<Vec<Acquisition>> {
        self.acquire_in(spec, 0.0, self.trace.duration_s())
    }

    /// Blind acquisition with pilot starts restricted to `[from_s, to_s]`.
    pub fn acquire_in(&self, spec: &FrameSpec, from_s: f64, to_s: f64) -> Result<Vec<Acquisition>> {
        spec.validate()?;
        let tb = spec.symbol_duration_s;
        let width = self.cfg.refine_width(spec);
        let nb = Narrowband::from_spectrum(self.spectrum(), self.cfg.floor_range(), DEFAULT_TRANSITION_HZ);
        let noise_env = nb.noise_envelope(width);
        let half_inc = self.cfg.f_inc_hz / 2.0;
        let mut out: Vec<Acquisition> = Vec::new();
        for f in self.candidates(width)? {
            let c = (f / half_inc).round() * half_inc;
            let band = Passband::centered(c, width)?;
            if band.lb_hz < self.cfg.f_lo_hz || band.ub_hz > self.cfg.f_hi_hz {
                continue;
            }
            if out.iter().any(|a| overlaps(&a.passband, &band)) {
                continue;
            }
            let series = nb.envelope(&band, tb / 4.0, tb / 64.0);
            let Some(rough) = search_pilot(&series, spec, &self.cfg.gates, noise_env, from_s, to_s) else {
                continue;
            };
            let tuned = self
                .fine_tune_at(rough.frame_start_s, spec, &band, self.cfg.fine_tune_radius_hz)
                .unwrap_or(band);
            if out.iter().any(|a| overlaps(&a.passband, &tuned)) {
                continue;
            }
            let Ok(sync) = self.find_frame_start_in(&tuned, spec, rough.frame_start_s - tb, rough.frame_start_s + tb)
            else {
                continue;
            };
            out.push(Acquisition { passband: tuned, sync });
        }
        Ok(out)
    }
}

fn overlaps(a: &Passband, b: &Passband) -> bool {
    a.lb_hz < b.ub_hz && b.lb_hz < a.ub_hz
}

fn try_band(nb: &Narrowband, band: &Passband, spec: &FrameSpec, pilot_start_s: f64, gates: &DetectionGates) -> bool {
    let tb = spec.symbol_duration_s;
    let series = nb.envelope(band, tb / 4.0, tb / 64.0);
    let avgs = series.symbol_means(pilot_start_s, tb, spec.pilot_bits.len());
    match_pilot(&avgs, &spec.pilot_bits, gates, nb.noise_envelope(band.width())).is_some()
}

/// Bands whose power is below this multiple of the noise in the same bins
/// cannot pass the envelope gate and are skipped without evaluation.
const PREFILTER_POWER_RATIO: f64 = 2.0;

/// First band, by ascending lower edge then ascending width, that holds a
/// spectral spike and whose pilot decodes. Edges and widths are multiples of the grid step from `range.0`.
fn scan_grid(
    nb: &Narrowband,
    spec: &FrameSpec,
    pilot_start_s: f64,
    cfg: &ScanConfig,
    range: (f64, f64),
) -> Result<Option<Passband>> {
    let inc = cfg.f_inc_hz;
    let (lo, hi) = range;
    let n_lb = ((hi - lo) / inc + 1e-9).floor() as usize;
    let n_w = (cfg.f_max_hz / inc + 1e-9).floor() as usize;
    let spike_radius = cfg.refine_width(spec);
    for i in 0..n_lb {
        let lb = lo + i as f64 * inc;
        for j in 1..=n_w {
            let ub = lb + j as f64 * inc;
            if ub > hi + 1e-9 {
                break;
            }
            let band = Passband::new(lb, ub)?;
            if nb.power_ratio(&band) < PREFILTER_POWER_RATIO || !nb.holds_spike(&band, spike_radius) {
                continue;
            }
            if try_band(nb, &band, spec, pilot_start_s, &cfg.gates) {
                return Ok(Some(band));
            }
        }
    }
    Ok(None)
}

/// Replaces a first hit with the narrowest standard-width band centred on a
/// spike near it, when one decodes the pilot. A first hit tends to have the
/// spike at its edge, where drift pushes it out.
fn refine(
    nb: &Narrowband,
    spec: &FrameSpec,
    pilot_start_s: f64,
    cfg: &ScanConfig,
    hit: Passband,
    range: (f64, f64),
) -> Result<Passband> {
    const PEAKS_TRIED: usize = 5;
    let w = cfg.refine_width(spec);
    let half_inc = cfg.f_inc_hz / 2.0;
    for f in nb.peaks_in(hit.lb_hz - w / 2.0, hit.ub_hz + w / 2.0, PEAKS_TRIED) {
        let c = (f / half_inc).round() * half_inc;
        let band = Passband::centered(c, w)?;
        if band.lb_hz < range.0 - 1e-9 || band.ub_hz > range.1 + 1e-9 {
            continue;
        }
        if try_band(nb, &band, spec, pilot_start_s, &cfg.gates) {
            return Ok(band);
        }
    }
    Ok(hit)
}

/// Standard-width band on the spike closest to `center_hz` that decodes the
/// pilot. Neighbouring transmitters can sit a few hundred hertz away, so the
/// closest spike wins over the lowest one.
fn nearest_spike_band(
    nb: &Narrowband,
    spec: &FrameSpec,
    pilot_start_s: f64,
    cfg: &ScanConfig,
    center_hz: f64,
    range: (f64, f64),
) -> Result<Option<Passband>> {
    const PEAKS_TRIED: usize = 8;
    let w = cfg.refine_width(spec);
    let half_inc = cfg.f_inc_hz / 2.0;
    let mut peaks = nb.peaks_in(range.0 + w / 2.0, range.1 - w / 2.0, PEAKS_TRIED);
    // Pilot sidebands are local maxima too; keep only peaks that dominate
    // their own neighbourhood.
    peaks.retain(|f| nb.peaks_in(f - w, f + w, 1).first() == Some(f));
    peaks.sort_by(|a, b| (a - center_hz).abs().total_cmp(&(b - center_hz).abs()));
    for f in peaks {
        let band = Passband::centered((f / half_inc).round() * half_inc, w)?;
        if band.lb_hz < range.0 - 1e-9 || band.ub_hz > range.1 + 1e-9 || !nb.holds_spike(&band, w) {
            continue;
        }
        if try_band(nb, &band, spec, pilot_start_s, &cfg.gates) {
            return Ok(Some(band));
        }
    }
    Ok(None)
}

/// Distribution of a decoded frame's per-symbol deviations from its class means.
pub fn noise_pmf(result: &DecodeResult, reference: &[u8], bins: usize) -> Result<Histogram> {
    amplitude_pmf(&result.bitwise_amplitudes, reference, bins)
}

/// Band scan of a trace whose pilot begins at its first sample.
pub fn scan_passband(v: &SignalTrace, spec: &FrameSpec, cfg: &ScanConfig) -> Result<Passband> {
    Receiver::new(v, cfg.clone())?.scan_at(0.0, spec)
}

pub fn scan_passband_at(v: &SignalTrace, pilot_start_s: f64, spec: &FrameSpec, cfg: &ScanConfig) -> Result<Passband> {
    Receiver::new(v, cfg.clone())?.scan_at(pilot_start_s, spec)
}

/// Re-scan within `radius_hz` of `prev`, pilot at the trace start.
pub fn fine_tune_passband(v: &SignalTrace, spec: &FrameSpec, prev: &Passband, radius_hz: f64) -> Result<Passband> {
    Receiver::new(v, ScanConfig::default())?.fine_tune_at(0.0, spec, prev, radius_hz)
}

/// `(frame_start_s, threshold)` of the earliest pilot in the trace.
pub fn find_frame_start(v: &SignalTrace, band: &Passband, spec: &FrameSpec) -> Result<(f64, f64)> {
    let sync = Receiver::new(v, ScanConfig::default())?.find_frame_start_in(band, spec, 0.0, v.duration_s())?;
    Ok((sync.frame_start_s, sync.threshold))
}

pub fn demodulate(
    v: &SignalTrace,
    band: &Passband,
    spec: &FrameSpec,
    reference_payload: Option<&[u8]>,
) -> Result<DecodeResult> {
    Receiver::new(v, ScanConfig::default())?.demodulate_in(band, spec, reference_payload, 0.0, v.duration_s())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::Unit;
    use crate::txmod::random_bits;
    use rand_distr::{Distribution, StandardNormal};
    use std::f64::consts::PI;

    const FS: f64 = 500e3;

    /// OOK carrier with white noise; the amplitude follows the keying
    /// through a first-order lag of `tau` seconds (0 for ideal keying).
    fn ook_lag(bits: &[u8], start: f64, dur: f64, f0: f64, noise: f64, seed: u64, tau: f64) -> SignalTrace {
        let tb = 0.033;
        let mut r = crate::rng::stream(seed, "t", &[]);
        let n = (dur * FS) as usize;
        let alpha = if tau > 0.0 {
            1.0 - (-1.0 / (tau * FS)).exp()
        } else {
            1.0
        };
        let mut a = 0.001;
        let v = (0..n)
            .map(|i| {
                let t = i as f64 / FS;
                let k = ((t - start) / tb).floor();
                let on = k >= 0.0 && (k as usize) < bits.len() && bits[k as usize] == 1;
                a += alpha * (if on { 0.003 } else { 0.001 } - a);
                let z: f64 = StandardNormal.sample(&mut r);
                a * (2.0 * PI * f0 * t).sin() + noise * z
            })
            .collect();
        SignalTrace::new(v, FS, Unit::Volts).unwrap()
    }

    fn ook(bits: &[u8], start: f64, dur: f64, f0: f64, noise: f64, seed: u64) -> SignalTrace {
        ook_lag(bits, start, dur, f0, noise, seed, 0.01)
    }

    fn frame(payload_seed: u64) -> (FrameSpec, Bits, Bits) {
        let spec = FrameSpec::default();
        let payload = random_bits(94, payload_seed);
        let bits = crate::txmod::build_frame(&payload, &spec).unwrap();
        (spec, payload, bits)
    }

    #[test]
    fn pilot_matching_rules() {
        let g = DetectionGates::default();
        let pilot = [1, 1, 0, 0, 1, 0];
        let m = match_pilot(&[2.0, 2.0, 1.0, 1.0, 2.0, 1.0], &pilot, &g, 0.1).unwrap();
        assert!(!m.inverted);
        assert!((m.threshold - 1.5).abs() < 1e-12);
        let m = match_pilot(&[1.0, 1.0, 2.0, 2.0, 1.0, 2.0], &pilot, &g, 0.1).unwrap();
        assert!(m.inverted);
        // Too shallow, too weak, and all-zero.
        assert!(match_pilot(&[1.05, 1.05, 1.0, 1.0, 1.05, 1.0], &pilot, &g, 0.1).is_none());
        assert!(match_pilot(&[2.0, 2.0, 1.0, 1.0, 2.0, 1.0], &pilot, &g, 1.0).is_none());
        assert!(match_pilot(&[0.0; 6], &pilot, &g, 0.0).is_none());
    }

    #[test]
    fn frame_start_within_an_eighth_symbol() {
        let (spec, _, bits) = frame(1);
        let x = ook_lag(&bits, 0.5, 4.2, 67_300.0, 0.001, 2, 0.0);
        let band = Passband::new(67_270.0, 67_330.0).unwrap();
        let (start, thr) = find_frame_start(&x, &band, &spec).unwrap();
        assert!((start - 0.5).abs() <= 0.033 / 8.0 + 1e-9, "{start}");
        assert!(thr > 0.0);
    }

    #[test]
    fn short_or_empty_traces_have_no_pilot() {
        let spec = FrameSpec::default();
        let band = Passband::new(67_270.0, 67_330.0).unwrap();
        let x = SignalTrace::zeros(50_000, FS, Unit::Volts).unwrap();
        assert!(matches!(find_frame_start(&x, &band, &spec), Err(Error::PilotNotFound)));
        let x = SignalTrace::zeros(500_000, FS, Unit::Volts).unwrap();
        assert!(matches!(find_frame_start(&x, &band, &spec), Err(Error::PilotNotFound)));
    }

    #[test]
    fn noiseless_round_trip() {
        for seed in 0..3 {
            let (spec, payload, bits) = frame(seed);
            let x = ook(&bits, 0.4, 4.0, 67_300.0, 0.0, seed);
            let band = scan_passband_at(&x, 0.4, &spec, &ScanConfig::default()).unwrap();
            assert!(band.contains(67_300.0), "{band}");
            let r = demodulate(&x, &band, &spec, Some(&payload)).unwrap();
            assert_eq!(r.ber, Some(0.0));
            assert!((r.effective_bps - 94.0 / 3.3).abs() < 1e-9);
        }
    }

    #[test]
    fn scale_invariance() {
        let (spec, payload, bits) = frame(5);
        let x = ook(&bits, 0.4, 4.0, 67_300.0, 0.0004, 6);
        let band = Passband::new(67_270.0, 67_330.0).unwrap();
        let a = demodulate(&x, &band, &spec, Some(&payload)).unwrap();
        let b = demodulate(&x.scaled(37.0).unwrap(), &band, &spec, Some(&payload)).unwrap();
        assert_eq!(a.bits, b.bits);
    }

    #[test]
    fn steady_spike_in_noise_has_no_pilot() {
        let spec = FrameSpec::default();
        let x = ook(&[], 0.0, 1.2, 67_300.0, 0.005, 9);
        assert!(matches!(
            scan_passband_at(&x, 0.4, &spec, &ScanConfig::default()),
            Err(Error::NoPilotFound)
        ));
    }

    #[test]
    fn inverted_polarity_decodes() {
        let (spec, payload, bits) = frame(7);
        // Ripple of an inverted device is high while idle, low under load.
        let lead = 12;
        let flipped: Vec<u8> = std::iter::repeat_n(1, lead)
            .chain(bits.iter().map(|b| 1 - b))
            .chain(std::iter::repeat_n(1, lead))
            .collect();
        let x = ook(&flipped, 0.4 - lead as f64 * 0.033, 4.0, 80_000.0, 0.0002, 3);
        let band = Passband::new(79_970.0, 80_030.0).unwrap();
        let r = demodulate(&x, &band, &spec, Some(&payload)).unwrap();
        assert!(r.inverted);
        assert_eq!(r.ber, Some(0.0));
    }

    #[test]
    fn fine_tune_follows_and_limits() {
        let (spec, _, bits) = frame(8);
        let prev = Passband::new(67_270.0, 67_330.0).unwrap();
        let x = ook(&bits[..6], 0.0, 0.6, 67_340.0, 0.0002, 1);
        let b = fine_tune_passband(&x, &spec, &prev, 500.0).unwrap();
        assert!(b.contains(67_340.0), "{b}");
        let x = ook(&bits[..6], 0.0, 0.6, 67_300.0, 0.0002, 1);
        let b = fine_tune_passband(&x, &spec, &prev, 0.0).unwrap();
        assert!(b.lb_hz >= prev.lb_hz && b.ub_hz <= prev.ub_hz && b.contains(67_300.0));
        let x = ook(&bits[..6], 0.0, 0.6, 69_300.0, 0.0002, 1);
        assert!(matches!(
            fine_tune_passband(&x, &spec, &prev, 500.0),
            Err(Error::NoPilotFound)
        ));
    }

    #[test]
    fn blind_acquisition_finds_frame() {
        let (spec, _, bits) = frame(4);
        let x = ook(&bits, 0.37, 4.0, 91_200.0, 0.0005, 4);
        let rx = Receiver::new(&x, ScanConfig::default()).unwrap();
        let acq = rx.acquire(&spec).unwrap();
        assert_eq!(acq.len(), 1, "{acq:?}");
        assert!(acq[0].passband.contains(91_200.0));
        let s = acq[0].sync.frame_start_s;
        assert!((0.37 - 0.033 / 8.0..=0.37 + 0.033 / 2.0).contains(&s), "{acq:?}");
    }

    #[test]
    fn config_validation() {
        let bad = ScanConfig {
            f_inc_hz: 600.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ScanConfig {
            f_lo_hz: 200e3,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let spec = FrameSpec::default();
        assert_eq!(ScanConfig::default().refine_width(&spec), 60.0);
    }
}
