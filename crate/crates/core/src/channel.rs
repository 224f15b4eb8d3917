//! Power-network physics: device currents with PFC switching ripple, the
//! shared-resistance voltage divider seen at the receiver's outlet, grid
//! noise, the receiver's analog front end and a power-line noise filter.
//!
//! The receiver voltage follows the purely resistive network
//!
//! ```text
//! V_r = V_S - R·Σ i_k - (R + R_r)·i_r
//! ```
//!
//! where `R` is the segment shared by every outlet and `R_r` the receiver's
//! own branch.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::signal::{high_pass, zero_phase_gain, SignalTrace, Unit};

/// Grid-side disturbances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridNoiseSpec {
    /// Typical one-minute excursion of the mains RMS amplitude, in volts.
    pub slow_drift_amplitude_v: f64,
    /// RMS of white Gaussian noise at the outlet, in volts.
    pub broadband_noise_rms_v: f64,
}

impl Default for GridNoiseSpec {
    fn default() -> Self {
        Self {
            slow_drift_amplitude_v: 0.5,
            broadband_noise_rms_v: 0.005,
        }
    }
}

impl GridNoiseSpec {
    pub fn quiet() -> Self {
        Self {
            slow_drift_amplitude_v: 0.0,
            broadband_noise_rms_v: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkModel {
    pub source_voltage_rms: f64,
    pub mains_freq_hz: f64,
    /// Resistance of the line segment shared by all outlets (R).
    pub common_resistance_ohm: f64,
    /// Resistance of the receiver's own branch (R_r).
    pub receiver_branch_resistance_ohm: f64,
    pub grid_noise: GridNoiseSpec,
}

impl Default for NetworkModel {
    fn default() -> Self {
        Self {
            source_voltage_rms: 120.0,
            mains_freq_hz: 60.0,
            common_resistance_ohm: 0.2,
            receiver_branch_resistance_ohm: 0.1,
            grid_noise: GridNoiseSpec::default(),
        }
    }
}

impl NetworkModel {
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid_noise;
        if !(self.source_voltage_rms > 0.0)
            || !(self.mains_freq_hz > 0.0)
            || !(self.common_resistance_ohm >= 0.0)
            || !(self.receiver_branch_resistance_ohm >= 0.0)
            || !(g.slow_drift_amplitude_v >= 0.0)
            || !(g.broadband_noise_rms_v >= 0.0)
        {
            return Err(Error::InvalidModel(format!("network {self:?}")));
        }
        Ok(())
    }
}

/// Shape of the switching-frequency drift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftProfile {
    /// Fresh random slope every half second.
    #[default]
    RandomWalk,
    /// Constant slope at the bound, in a random direction.
    Ramp,
}

/// Sign of the ripple's dependence on load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RipplePolarity {
    /// Ripple grows with current.
    #[default]
    Normal,
    /// Ripple shrinks as current grows.
    Inverted,
}

/// One computer's electrical behaviour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceModel {
    pub pfc_freq_hz: f64,
    /// Largest frequency excursion over any 5 s window.
    pub pfc_drift_hz_per_5s: f64,
    pub drift_profile: DriftProfile,
    pub idle_current_a: f64,
    pub peak_current_a: f64,
    /// First-order time constant of the current's response to load.
    pub lag_tau_s: f64,
    /// Fraction of the instantaneous current appearing as switching ripple.
    pub ripple_gain: f64,
    /// The device's own branch resistance. Only the shared segment enters V_r.
    pub branch_resistance_ohm: f64,
    pub polarity: RipplePolarity,
    /// Peak-to-peak width of a sinusoidal FM applied to the switching frequency.
    pub fm_spread_hz: f64,
    pub fm_rate_hz: f64,
}

impl Default for DeviceModel {
    fn default() -> Self {
        Self {
            pfc_freq_hz: 67_300.0,
            pfc_drift_hz_per_5s: 50.0,
            drift_profile: DriftProfile::RandomWalk,
            idle_current_a: 0.3,
            peak_current_a: 0.75,
            lag_tau_s: 0.010,
            ripple_gain: 0.015,
            branch_resistance_ohm: 0.0,
            polarity: RipplePolarity::Normal,
            fm_spread_hz: 0.0,
            fm_rate_hz: 0.0,
        }
    }
}

impl DeviceModel {
    pub fn at(pfc_freq_hz: f64) -> Self {
        Self {
            pfc_freq_hz,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidModel(format!("{what}: {self:?}")));
        if !(40e3..=150e3).contains(&self.pfc_freq_hz) {
            return bad("PFC frequency outside 40-150 kHz");
        }
        if !(0.0 <= self.idle_current_a && self.idle_current_a <= self.peak_current_a) {
            return bad("currents must satisfy 0 <= idle <= peak");
        }
        if !(self.lag_tau_s > 0.0) {
            return bad("lag must be positive");
        }
        if !(self.ripple_gain > 0.0 && self.ripple_gain < 1.0) {
            return bad("ripple gain must lie in (0, 1)");
        }
        if !(self.pfc_drift_hz_per_5s >= 0.0)
            || !(self.fm_spread_hz >= 0.0)
            || !(self.fm_rate_hz >= 0.0)
            || !(self.branch_resistance_ohm >= 0.0)
        {
            return bad("negative drift, FM or resistance");
        }
        Ok(())
    }

    /// Named device profiles. Switching frequencies follow the measured machines;
    /// the remaining constants are simulation choices.
    pub fn preset(name: &str) -> Option<Self> {
        let d = Self::default();
        let p = match name {
            "dell_optiplex_9020" => d,
            "dell_poweredge_r630" => Self {
                pfc_freq_hz: 65_800.0,
                ..d
            },
            "dell_xps_8920" => Self {
                pfc_freq_hz: 60_100.0,
                ..d
            },
            "acer_g3_710" => Self {
                pfc_freq_hz: 63_500.0,
                ripple_gain: 0.0055,
                ..d
            },
            "custom_built_1" => Self {
                pfc_freq_hz: 91_200.0,
                ripple_gain: 0.006,
                ..d
            },
            "custom_built_2" => Self {
                pfc_freq_hz: 67_700.0,
                ripple_gain: 0.0058,
                ..d
            },
            "apple_imac_a1419" => Self {
                pfc_freq_hz: 101_000.0,
                lag_tau_s: 0.035,
                polarity: RipplePolarity::Inverted,
                fm_spread_hz: 1_000.0,
                fm_rate_hz: 0.5,
                ..d
            },
            _ => return None,
        };
        Some(p)
    }

    pub const PRESETS: [&'static str; 7] = [
        "dell_optiplex_9020",
        "dell_poweredge_r630",
        "dell_xps_8920",
        "acer_g3_710",
        "custom_built_1",
        "custom_built_2",
        "apple_imac_a1419",
    ];
}

/// Receiver ADC after the RC high-pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdcSpec {
    pub resolution_bits: u32,
    pub full_scale_v: f64,
    pub highpass_cutoff_hz: f64,
}

impl Default for AdcSpec {
    fn default() -> Self {
        Self {
            resolution_bits: 12,
            full_scale_v: 5.0,
            highpass_cutoff_hz: 10e3,
        }
    }
}

impl AdcSpec {
    pub fn validate(&self) -> Result<()> {
        if !(4..=24).contains(&self.resolution_bits) || !(self.full_scale_v > 0.0) {
            return Err(Error::InvalidModel(format!("adc {self:?}")));
        }
        Ok(())
    }

    pub fn step_v(&self) -> f64 {
        2.0 * self.full_scale_v / (1u64 << self.resolution_bits) as f64
    }
}

/// Bounded random walk of the switching frequency: piecewise-linear with a
/// fresh slope every `KNOT_S`, slopes limited so no 5 s window moves more
/// than the device's drift bound.
#[derive(Debug, Clone)]
pub struct PfcDrift {
    offsets: Vec<f64>,
    slopes: Vec<f64>,
}

impl PfcDrift {
    const KNOT_S: f64 = 0.5;

    pub fn new(drift_hz_per_5s: f64, duration_s: f64, rng: &mut impl Rng) -> Self {
        Self::with_profile(drift_hz_per_5s, DriftProfile::RandomWalk, duration_s, rng)
    }

    pub fn with_profile(drift_hz_per_5s: f64, profile: DriftProfile, duration_s: f64, rng: &mut impl Rng) -> Self {
        let vmax = drift_hz_per_5s / 5.0;
        let knots = (duration_s / Self::KNOT_S).ceil() as usize + 1;
        let mut offsets = Vec::with_capacity(knots);
        let mut slopes = Vec::with_capacity(knots);
        let mut d = 0.0;
        let ramp = if rng.random::<bool>() { vmax } else { -vmax };
        for _ in 0..knots {
            let v = match profile {
                _ if vmax == 0.0 => 0.0,
                DriftProfile::RandomWalk => rng.random_range(-vmax..=vmax),
                DriftProfile::Ramp => ramp,
            };
            offsets.push(d);
            slopes.push(v);
            d += v * Self::KNOT_S;
        }
        Self { offsets, slopes }
    }

    /// Frequency offset in Hz at time `t_s`.
    pub fn offset_at(&self, t_s: f64) -> f64 {
        let k = ((t_s / Self::KNOT_S).floor().max(0.0) as usize).min(self.offsets.len() - 1);
        self.offsets[k] + self.slopes[k] * (t_s - k as f64 * Self::KNOT_S)
    }
}

const PHASOR_BLOCK: usize = 64;

/// Sinusoid with a slowly varying instantaneous frequency, produced block by
/// block from an exactly accumulated phase.
fn swept_sine(n: usize, fs: f64, phase0: f64, freq_at: impl Fn(f64) -> f64, mut sink: impl FnMut(usize, f64)) {
    let mut phase = phase0;
    let mut start = 0;
    while start < n {
        let len = PHASOR_BLOCK.min(n - start);
        let t_mid = (start as f64 + 0.5 * len as f64) / fs;
        let w = 2.0 * PI * freq_at(t_mid) / fs;
        let (rs, rc) = w.sin_cos();
        let (mut s, mut c) = phase.sin_cos();
        for i in 0..len {
            sink(start + i, s);
            let s2 = s * rc + c * rs;
            c = c * rc - s * rs;
            s = s2;
        }
        phase = (phase + w * len as f64) % (2.0 * PI);
        start += len;
    }
}

fn check_load(load: &SignalTrace, sample_rate_hz: f64) -> Result<()> {
    if load.sample_rate_hz() != sample_rate_hz {
        return Err(Error::RateMismatch {
            expected: sample_rate_hz,
            actual: load.sample_rate_hz(),
        });
    }
    if let Some(v) = load.samples().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidModel(format!("CPU load {v} outside [0, 1]")));
    }
    Ok(())
}

/// Current envelope (peak amps) after the first-order lag, starting from 0 A.
/// Load beyond the end of `load` is taken as idle.
pub fn current_envelope(device: &DeviceModel, load: &[f64], fs: f64, n: usize) -> Vec<f64> {
    let alpha = 1.0 - (-1.0 / (device.lag_tau_s * fs)).exp();
    let span = device.peak_current_a - device.idle_current_a;
    let mut level = 0.0;
    (0..n)
        .map(|i| {
            let l = load.get(i).copied().unwrap_or(0.0);
            let target = SQRT_2 * (device.idle_current_a + l * span);
            level += alpha * (target - level);
            level
        })
        .collect()
}

/// Adds `scale · i(t)` for one device into `out`; the building block of
/// [`synthesize_current`] that avoids materialising one trace per device.
pub fn accumulate_current(
    device: &DeviceModel,
    cpu_load: &SignalTrace,
    sample_rate_hz: f64,
    seed: u64,
    scale: f64,
    out: &mut [f64],
) -> Result<()> {
    device.validate()?;
    check_load(cpu_load, sample_rate_hz)?;
    let n = out.len();
    let fs = sample_rate_hz;
    let duration = n as f64 / fs;
    let mut rng = rng::stream(seed, "device", &[]);
    let phase0 = rng.random_range(0.0..2.0 * PI);
    let drift = PfcDrift::with_profile(device.pfc_drift_hz_per_5s, device.drift_profile, duration, &mut rng);
    let env = current_envelope(device, cpu_load.samples(), fs, n);
    let inverted_ref = SQRT_2 * (device.idle_current_a + device.peak_current_a);
    let ripple_amp = |e: f64| match device.polarity {
        RipplePolarity::Normal => device.ripple_gain * e,
        RipplePolarity::Inverted => device.ripple_gain * (inverted_ref - e).max(0.0),
    };

    swept_sine(
        n,
        fs,
        0.0,
        |_| LINE_FREQ_HZ,
        |i, s| {
            out[i] += scale * env[i] * s;
        },
    );
    let f0 = device.pfc_freq_hz;
    let (spread, rate) = (device.fm_spread_hz, device.fm_rate_hz);
    swept_sine(
        n,
        fs,
        phase0,
        |t| f0 + drift.offset_at(t) + 0.5 * spread * (2.0 * PI * rate * t).sin(),
        |i, s| out[i] += scale * ripple_amp(env[i]) * s,
    );
    Ok(())
}

/// Instantaneous switching frequency (ignoring FM) that
/// [`accumulate_current`] produces for the same device, length and seed.
pub fn pfc_frequency_at(device: &DeviceModel, n_samples: usize, sample_rate_hz: f64, seed: u64, t_s: f64) -> f64 {
    let mut rng = rng::stream(seed, "device", &[]);
    let _phase0: f64 = rng.random_range(0.0..2.0 * PI);
    let drift = PfcDrift::with_profile(
        device.pfc_drift_hz_per_5s,
        device.drift_profile,
        n_samples as f64 / sample_rate_hz,
        &mut rng,
    );
    device.pfc_freq_hz + drift.offset_at(t_s)
}

// Fundamental of the drawn current. Only the switching ripple reaches the
// receiver's passband, so this stays at the nominal line frequency.
const LINE_FREQ_HZ: f64 = 60.0;

/// Device input current `I_env(t)·[sin(2π·f_mains·t) + g·sin(φ_pfc(t))]`.
pub fn synthesize_current(
    device: &DeviceModel,
    cpu_load: &SignalTrace,
    sample_rate_hz: f64,
    duration_s: f64,
    seed: u64,
) -> Result<SignalTrace> {
    let n = (duration_s * sample_rate_hz).round() as usize;
    let mut out = vec![0.0; n];
    accumulate_current(device, cpu_load, sample_rate_hz, seed, 1.0, &mut out)?;
    SignalTrace::new(out, sample_rate_hz, Unit::Amps)
}

/// Background machine load: a constant level with a uniform ±`jitter`
/// perturbation redrawn every `update_s`.
pub fn jittered_load(
    level: f64,
    jitter: f64,
    update_s: f64,
    sample_rate_hz: f64,
    duration_s: f64,
    seed: u64,
) -> Result<SignalTrace> {
    let n = (duration_s * sample_rate_hz).round() as usize;
    let per = ((update_s * sample_rate_hz).round() as usize).max(1);
    let mut rng = rng::stream(seed, "jitter", &[]);
    let mut v = Vec::with_capacity(n);
    while v.len() < n {
        let l = (level + rng.random_range(-jitter..=jitter)).clamp(0.0, 1.0);
        let take = per.min(n - v.len());
        v.extend(std::iter::repeat_n(l, take));
    }
    SignalTrace::new(v, sample_rate_hz, Unit::Dimensionless)
}

/// Mains source voltage at the transformer with slow amplitude drift and
/// broadband noise.
pub fn source_voltage(network: &NetworkModel, sample_rate_hz: f64, n: usize, seed: u64) -> Vec<f64> {
    let g = &network.grid_noise;
    let fs = sample_rate_hz;
    let duration = n as f64 / fs;

    // Ornstein-Uhlenbeck amplitude wander: mean-reverting over ~50 min, so
    // a minute moves it by about `slow_drift_amplitude_v` and a day by a few volts.
    const STEP_S: f64 = 0.1;
    const REVERSION_S: f64 = 3000.0;
    let mut drng = rng::stream(seed, "grid-drift", &[]);
    let knots = (duration / STEP_S).ceil() as usize + 2;
    let sigma_inf = g.slow_drift_amplitude_v * (REVERSION_S / 120.0).sqrt();
    let a = (-STEP_S / REVERSION_S).exp();
    let b = sigma_inf * (1.0 - a * a).sqrt();
    let mut wander = Vec::with_capacity(knots);
    let mut x = 0.0;
    for _ in 0..knots {
        wander.push(x);
        let z: f64 = StandardNormal.sample(&mut drng);
        x = a * x + b * z;
    }

    let mut out = vec![0.0; n];
    swept_sine(
        n,
        fs,
        0.0,
        |_| network.mains_freq_hz,
        |i, s| {
            let t = i as f64 / fs;
            let k = t / STEP_S;
            let j = k.floor() as usize;
            let w = wander[j] + (wander[j + 1] - wander[j]) * (k - j as f64);
            out[i] = SQRT_2 * (network.source_voltage_rms + w) * s;
        },
    );
    if g.broadband_noise_rms_v > 0.0 {
        let mut nrng = rng::stream(seed, "grid-noise", &[]);
        let dist = Normal::new(0.0, g.broadband_noise_rms_v).expect("validated");
        out.iter_mut().for_each(|v| *v += dist.sample(&mut nrng));
    }
    out
}

/// Receiver outlet voltage. `currents` are the device currents drawn
/// through the shared segment; `receiver_current` is the receiver's own
/// draw (zero when absent).
pub fn superpose(
    network: &NetworkModel,
    currents: &[SignalTrace],
    receiver_current: Option<&SignalTrace>,
    sample_rate_hz: f64,
    duration_s: f64,
    seed: u64,
) -> Result<SignalTrace> {
    network.validate()?;
    let n = (duration_s * sample_rate_hz).round() as usize;
    for c in currents.iter().chain(receiver_current) {
        if c.sample_rate_hz() != sample_rate_hz {
            return Err(Error::RateMismatch {
                expected: sample_rate_hz,
                actual: c.sample_rate_hz(),
            });
        }
        if c.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: c.len(),
            });
        }
    }
    let mut v = source_voltage(network, sample_rate_hz, n, seed);
    let r = network.common_resistance_ohm;
    for c in currents {
        v.iter_mut().zip(c.samples()).for_each(|(v, i)| *v -= r * i);
    }
    if let Some(ir) = receiver_current {
        let rr = r + network.receiver_branch_resistance_ohm;
        v.iter_mut().zip(ir.samples()).for_each(|(v, i)| *v -= rr * i);
    }
    SignalTrace::new(v, sample_rate_hz, Unit::Volts)
}

/// Uniform mid-tread quantizer over ±full scale, clipping at the rails.
pub fn quantize(x: &[f64], adc: &AdcSpec) -> Vec<f64> {
    let step = adc.step_v();
    let top = (1i64 << (adc.resolution_bits - 1)) as f64;
    x.iter()
        .map(|v| (v / step).round().clamp(-top, top - 1.0) * step)
        .collect()
}

/// RC high-pass followed by the ADC.
pub fn receiver_frontend(v: &SignalTrace, adc: &AdcSpec) -> Result<SignalTrace> {
    adc.validate()?;
    let hp = high_pass(v, adc.highpass_cutoff_hz)?;
    hp.with_samples(quantize(hp.samples(), adc))
}

/// Gain of the power-line noise filter: unity below 1 kHz, `1/attenuation`
/// above 20 kHz, raised-cosine in log-frequency between.
pub fn line_filter_gain(f_hz: f64, attenuation_factor: f64) -> f64 {
    const PASS_HZ: f64 = 1e3;
    const STOP_HZ: f64 = 20e3;
    if f_hz <= PASS_HZ {
        1.0
    } else if f_hz >= STOP_HZ {
        1.0 / attenuation_factor
    } else {
        let s = (f_hz / PASS_HZ).ln() / (STOP_HZ / PASS_HZ).ln();
        let w = 0.5 - 0.5 * (PI * s).cos();
        (-(attenuation_factor.ln()) * w).exp()
    }
}

pub fn line_filter(current: &SignalTrace, attenuation_factor: f64) -> Result<SignalTrace> {
    if !(attenuation_factor >= 1.0) {
        return Err(Error::InvalidAttenuation(attenuation_factor));
    }
    zero_phase_gain(current, 0.02, |f| line_filter_gain(f, attenuation_factor))
}
