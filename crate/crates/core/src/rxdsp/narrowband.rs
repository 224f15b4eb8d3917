//! Fast envelope evaluation for many candidate bands of one signal.
//!
//! The band-pass output `y` of a narrow band is the real part of an analytic
//! signal `a(t)` that only occupies the bins of the band. Shifting those bins
//! to baseband and inverting them with a short FFT gives `|a|` on a coarse
//! time grid, and the rectified-and-smoothed envelope of `y` equals
//! `(2/π)|a|` smoothed the same way. This costs a few thousand operations per
//! band instead of two full-length transforms.

use std::borrow::Cow;
use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::{LN_2, PI};
use std::rc::Rc;

use realfft::num_complex::Complex64;

use crate::signal::fft::{fast_len, ifft_complex, rfft, symmetric_kernel_response};
use crate::signal::{band_pass_len, low_pass_taps, median, moving_average, Passband, SignalTrace, TraceSpectrum};

/// Prefix-integrated envelope on a uniform time grid.
#[derive(Debug, Clone)]
pub(crate) struct EnvelopeSeries {
    t0_s: f64,
    dt_s: f64,
    prefix: Vec<f64>,
}

impl EnvelopeSeries {
    pub fn new(t0_s: f64, dt_s: f64, values: &[f64]) -> Self {
        let mut prefix = Vec::with_capacity(values.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for v in values {
            acc += v;
            prefix.push(acc);
        }
        Self { t0_s, dt_s, prefix }
    }

    pub fn end_s(&self) -> f64 {
        self.t0_s + (self.prefix.len() as f64 - 1.5) * self.dt_s
    }

    /// Integral from the first cell to `t_s`, each sample holding its value
    /// over one cell centred on it.
    fn integral_to(&self, t_s: f64) -> f64 {
        let n = self.prefix.len() - 1;
        let u = ((t_s - self.t0_s) / self.dt_s + 0.5).clamp(0.0, n as f64);
        let i = u.floor() as usize;
        if i >= n {
            return self.prefix[n];
        }
        self.prefix[i] + (u - i as f64) * (self.prefix[i + 1] - self.prefix[i])
    }

    pub fn mean_between(&self, a_s: f64, b_s: f64) -> f64 {
        (self.integral_to(b_s) - self.integral_to(a_s)) * self.dt_s / (b_s - a_s)
    }

    pub fn symbol_means(&self, start_s: f64, symbol_s: f64, count: usize) -> Vec<f64> {
        (0..count)
            .map(|k| {
                let a = start_s + k as f64 * symbol_s;
                self.mean_between(a, a + symbol_s)
            })
            .collect()
    }
}

/// Low-pass prototype response sampled at multiples of `step_hz`.
struct Prototype {
    step_hz: f64,
    values: Vec<f64>,
}

impl Prototype {
    fn at(&self, offset_hz: f64) -> f64 {
        let d = offset_hz.abs() / self.step_hz;
        let i = d.floor() as usize;
        if i + 1 >= self.values.len() {
            return 0.0;
        }
        let f = d - i as f64;
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }
}

type ProtoKey = (u64, u64, u64, usize);

thread_local! {
    static PROTOTYPES: RefCell<HashMap<ProtoKey, Rc<Prototype>>> = RefCell::new(HashMap::new());
}

/// Response of the band-pass prototype for a band of width `2·half_width_hz`,
/// tabulated on an `n`-point grid (refined when the kernel is longer than `n`).
fn prototype(half_width_hz: f64, fs: f64, transition_hz: f64, n: usize) -> Rc<Prototype> {
    let key = (half_width_hz.to_bits(), fs.to_bits(), transition_hz.to_bits(), n);
    if let Some(p) = PROTOTYPES.with(|c| c.borrow().get(&key).cloned()) {
        return p;
    }
    let taps = band_pass_len(fs, transition_hz);
    let grid = n * taps.div_ceil(n);
    let step_hz = fs / grid as f64;
    let reach = ((half_width_hz + 2.0 * transition_hz) / step_hz).ceil() as usize + 2;
    let mut values = symmetric_kernel_response(&low_pass_taps(half_width_hz, fs, taps), grid);
    values.truncate(reach + 1);
    let p = Rc::new(Prototype { step_hz, values });
    PROTOTYPES.with(|c| c.borrow_mut().insert(key, p.clone()));
    p
}

/// One real-FFT of a stretch of signal, queried band by band.
pub(crate) struct Narrowband<'a> {
    bins: Cow<'a, [Complex64]>,
    n: usize,
    fs: f64,
    t0_s: f64,
    real_len: usize,
    power_prefix: Vec<f64>,
    /// Mean noise |X|² per bin, from the median over the scan range.
    noise_per_bin: f64,
    transition_hz: f64,
}

/// Guard on each side of a pilot window, covering the band-pass kernel.
const WINDOW_MARGIN_S: f64 = 0.3;

impl<'a> Narrowband<'a> {
    fn build(
        bins: Cow<'a, [Complex64]>,
        n: usize,
        fs: f64,
        t0_s: f64,
        real_len: usize,
        floor_range: (f64, f64),
        transition_hz: f64,
    ) -> Self {
        let mut power_prefix = Vec::with_capacity(bins.len() + 1);
        power_prefix.push(0.0);
        let mut acc = 0.0;
        for b in bins.iter() {
            acc += b.norm_sqr();
            power_prefix.push(acc);
        }
        let bin = fs / n as f64;
        let lo = ((floor_range.0 / bin).ceil() as usize).min(bins.len() - 1);
        let hi = ((floor_range.1 / bin).floor() as usize).clamp(lo, bins.len() - 1);
        let mut p: Vec<f64> = bins[lo..=hi].iter().map(|b| b.norm_sqr()).collect();
        // Median of an exponential variate is ln 2 times its mean.
        let noise_per_bin = median(&mut p) / LN_2;
        Self {
            bins,
            n,
            fs,
            t0_s,
            real_len,
            power_prefix,
            noise_per_bin,
            transition_hz,
        }
    }

    /// Spectrum of the whole trace.
    pub fn from_spectrum(spec: &'a TraceSpectrum, floor_range: (f64, f64), transition_hz: f64) -> Self {
        Self::build(
            Cow::Borrowed(&spec.bins),
            spec.n_fft,
            spec.sample_rate_hz,
            0.0,
            spec.len,
            floor_range,
            transition_hz,
        )
    }

    /// Spectrum of the stretch `[from_s, to_s]` plus guard on each side.
    pub fn around(
        trace: &SignalTrace,
        from_s: f64,
        to_s: f64,
        floor_range: (f64, f64),
        transition_hz: f64,
    ) -> Narrowband<'static> {
        let fs = trace.sample_rate_hz();
        let span = (to_s - from_s) + 2.0 * WINDOW_MARGIN_S;
        let n = fast_len((span * fs).ceil() as usize);
        let mid = (0.5 * (from_s + to_s) * fs).round() as i64;
        let s0 = mid - (n / 2) as i64;
        let x = trace.samples();
        let mut w = vec![0.0; n];
        let a = s0.max(0) as usize;
        let b = ((s0 + n as i64).max(0) as usize).min(x.len());
        if a < b {
            let off = (a as i64 - s0) as usize;
            w[off..off + (b - a)].copy_from_slice(&x[a..b]);
        }
        let real_len = b.saturating_sub(a).max(1);
        Narrowband::build(
            Cow::Owned(rfft(&w, n)),
            n,
            fs,
            s0 as f64 / fs,
            real_len,
            floor_range,
            transition_hz,
        )
    }

    fn bin_hz(&self) -> f64 {
        self.fs / self.n as f64
    }

    fn bin_range(&self, lo_hz: f64, hi_hz: f64) -> (usize, usize) {
        let bin = self.bin_hz();
        let last = self.bins.len() - 1;
        let a = ((lo_hz / bin).ceil().max(0.0) as usize).min(last);
        let b = ((hi_hz / bin).floor().max(0.0) as usize).min(last);
        (a, b.max(a))
    }

    /// In-band power over the noise expected in the same bins.
    pub fn power_ratio(&self, band: &Passband) -> f64 {
        let (a, b) = self.bin_range(band.lb_hz, band.ub_hz);
        let p = self.power_prefix[b + 1] - self.power_prefix[a];
        p / ((b - a + 1) as f64 * self.noise_per_bin)
    }

    /// Whether the strongest bin within `radius_hz` of the band lies inside it,
    /// so the band holds a spike rather than the skirt of one.
    pub fn holds_spike(&self, band: &Passband, radius_hz: f64) -> bool {
        let (a, b) = self.bin_range(band.lb_hz, band.ub_hz);
        let (c, d) = self.bin_range(band.lb_hz - radius_hz, band.ub_hz + radius_hz);
        let max = |r: std::ops::RangeInclusive<usize>| r.map(|k| self.bins[k].norm_sqr()).fold(0.0, f64::max);
        let inside = max(a..=b);
        inside > 0.0 && inside >= max(c..=d)
    }

    /// Mean rectified envelope that noise alone would produce in a band of this width.
    pub fn noise_envelope(&self, width_hz: f64) -> f64 {
        noise_envelope(self.noise_per_bin, self.real_len, self.fs, width_hz)
    }

    /// Frequencies of the strongest local maxima within `[lo_hz, hi_hz]`.
    pub fn peaks_in(&self, lo_hz: f64, hi_hz: f64, count: usize) -> Vec<f64> {
        let (a, b) = self.bin_range(lo_hz, hi_hz);
        let p = |k: usize| self.bins[k].norm_sqr();
        let mut peaks: Vec<(f64, usize)> = (a..=b)
            .filter(|k| {
                let left = if *k > 0 { p(k - 1) } else { 0.0 };
                let right = if k + 1 < self.bins.len() { p(k + 1) } else { 0.0 };
                p(*k) >= left && p(*k) >= right
            })
            .map(|k| (p(k), k))
            .collect();
        peaks.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
        peaks.truncate(count);
        peaks.iter().map(|(_, k)| *k as f64 * self.bin_hz()).collect()
    }

    /// Band-pass → rectify → moving average of `smooth_s`, on a grid no
    /// coarser than `dt_target_s`.
    pub fn envelope(&self, band: &Passband, smooth_s: f64, dt_target_s: f64) -> EnvelopeSeries {
        let bin = self.bin_hz();
        let reach = band.width() / 2.0 + 2.0 * self.transition_hz;
        let c = band.center();
        let last = self.n / 2 - 1;
        let k_lo = (((c - reach) / bin).floor().max(1.0) as usize).min(last);
        let k_hi = (((c + reach) / bin).ceil() as usize).clamp(k_lo, last);
        let span_s = self.n as f64 / self.fs;
        let m = (k_hi - k_lo + 1)
            .max((span_s / dt_target_s).ceil() as usize)
            .next_power_of_two();
        let proto = prototype(band.width() / 2.0, self.fs, self.transition_hz, self.n);
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        for k in k_lo..=k_hi {
            buf[k - k_lo] = self.bins[k] * proto.at(k as f64 * bin - c);
        }
        ifft_complex(&mut buf);
        let scale = 2.0 / self.n as f64 * 2.0 / PI;
        let e: Vec<f64> = buf.iter().map(|z| z.norm() * scale).collect();
        let dt = span_s / m as f64;
        let smooth = moving_average(&e, ((smooth_s / dt).round() as usize).max(1));
        EnvelopeSeries::new(self.t0_s, dt, &smooth)
    }
}

/// Expected rectified envelope of white noise, given the mean per-bin power
/// of a transform over `real_len` samples.
pub(crate) fn noise_envelope(noise_per_bin: f64, real_len: usize, fs: f64, width_hz: f64) -> f64 {
    let variance = noise_per_bin / real_len as f64 * 2.0 * width_hz / fs;
    (2.0 / PI).sqrt() * variance.sqrt()
}
