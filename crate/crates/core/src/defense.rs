//! Software countermeasures that randomize the load of the transmitting
//! machine.
//!
//! Random Noise adds CPU-intensive work at random times on a fixed interval
//! grid. Random Power runs a feedback loop that measures modeled power and
//! drives the whole machine toward a random target, adding work when below
//! the target and throttling the transmitter (a frequency-scaling analogue)
//! when above it. Both return the combined load of the machine.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal as NormalDist};

use crate::error::{Error, Result};
use crate::rng;
use crate::signal::{SignalTrace, Unit};
use crate::txmod::LoadWaveform;

/// Consecutive rejections after which the sampler gives up.
const MAX_REJECTIONS: u64 = 1_000_000;

/// Gaussian restricted to `[0, 1]`, with `[0, 1]` mapped linearly onto a
/// power range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruncatedGaussianSpec {
    /// Mean of the untruncated Gaussian.
    pub mu: f64,
    /// Standard deviation of the untruncated Gaussian.
    pub sigma: f64,
    pub power_lo_w: f64,
    pub power_hi_w: f64,
}

impl Default for TruncatedGaussianSpec {
    fn default() -> Self {
        Self {
            mu: 0.5,
            sigma: 0.5,
            power_lo_w: 35.0,
            power_hi_w: 85.0,
        }
    }
}

impl TruncatedGaussianSpec {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        let s = Self {
            mu,
            sigma,
            ..Default::default()
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite() && self.mu.is_finite()) {
            return Err(Error::DegenerateSpec(format!("mu {} sigma {}", self.mu, self.sigma)));
        }
        if !(self.power_hi_w > self.power_lo_w) {
            return Err(Error::DegenerateSpec(format!(
                "power range {}..{} W",
                self.power_lo_w, self.power_hi_w
            )));
        }
        Ok(())
    }

    fn untruncated(&self) -> Result<NormalDist> {
        self.validate()?;
        NormalDist::new(self.mu, self.sigma).map_err(|e| Error::DegenerateSpec(e.to_string()))
    }

    /// Probability mass of the untruncated Gaussian inside `[0, 1]`.
    pub fn normalizer(&self) -> Result<f64> {
        let n = self.untruncated()?;
        Ok(n.cdf(1.0) - n.cdf(0.0))
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Ok(0.0);
        }
        Ok(self.untruncated()?.pdf(x) / self.normalizer()?)
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        let n = self.untruncated()?;
        let x = x.clamp(0.0, 1.0);
        Ok((n.cdf(x) - n.cdf(0.0)) / self.normalizer()?)
    }

    pub fn to_watts(&self, u: f64) -> f64 {
        self.power_lo_w + u * (self.power_hi_w - self.power_lo_w)
    }
}

/// Draws from the untruncated Gaussian until a value lands in `[0, 1]`.
fn draw(normal: &Normal<f64>, rng: &mut ChaCha8Rng) -> Result<f64> {
    for _ in 0..MAX_REJECTIONS {
        let x = normal.sample(rng);
        if (0.0..=1.0).contains(&x) {
            return Ok(x);
        }
    }
    Err(Error::DegenerateSpec(format!(
        "{MAX_REJECTIONS} consecutive draws fell outside [0, 1]"
    )))
}

pub fn sample_truncated_gaussian(spec: &TruncatedGaussianSpec, seed: u64, n: usize) -> Result<Vec<f64>> {
    spec.validate()?;
    let normal = Normal::new(spec.mu, spec.sigma).map_err(|e| Error::DegenerateSpec(e.to_string()))?;
    let mut rng = rng::stream(seed, "truncated_gaussian", &[]);
    (0..n).map(|_| draw(&normal, &mut rng)).collect()
}

/// Affine map from machine load to watts drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerModel {
    pub idle_w: f64,
    pub full_load_w: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        Self {
            idle_w: 28.0,
            full_load_w: 85.0,
        }
    }
}

impl PowerModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.full_load_w > self.idle_w) {
            return Err(Error::Config(format!(
                "power model {}..{} W",
                self.idle_w, self.full_load_w
            )));
        }
        Ok(())
    }

    pub fn watts(&self, load: f64) -> f64 {
        self.idle_w + load * (self.full_load_w - self.idle_w)
    }

    /// Load that draws `watts`, clipped to `[0, 1]`.
    pub fn load_for(&self, watts: f64) -> f64 {
        ((watts - self.idle_w) / (self.full_load_w - self.idle_w)).clamp(0.0, 1.0)
    }
}

/// Mean modeled power over the waveform minus a baseline.
pub fn power_overhead(load: &LoadWaveform, model: &PowerModel, baseline_idle_w: f64) -> f64 {
    let s = load.samples();
    let mean = s.iter().map(|l| model.watts(*l)).sum::<f64>() / s.len() as f64;
    mean - baseline_idle_w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomNoiseConfig {
    /// Length of each loading slot.
    pub interval_s: f64,
    /// Probability that a slot carries high load.
    pub duty: f64,
    pub cores_scale: f64,
}

impl Default for RandomNoiseConfig {
    fn default() -> Self {
        Self {
            interval_s: 0.033,
            duty: 0.5,
            cores_scale: 1.0,
        }
    }
}

impl RandomNoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.interval_s > 0.0) {
            return Err(Error::Config(format!("interval {} s", self.interval_s)));
        }
        if !(0.0..=1.0).contains(&self.duty) {
            return Err(Error::Config(format!("duty {}", self.duty)));
        }
        if !(self.cores_scale > 0.0 && self.cores_scale <= 1.0) {
            return Err(Error::Config(format!("cores_scale {}", self.cores_scale)));
        }
        Ok(())
    }
}

fn sample_count(duration_s: f64, fs: f64) -> Result<usize> {
    if !(fs > 0.0 && duration_s > 0.0) {
        return Err(Error::InvalidTrace(format!("{duration_s} s at {fs} Hz")));
    }
    Ok((duration_s * fs).round() as usize)
}

fn waveform(v: Vec<f64>, fs: f64, cores_scale: f64) -> Result<LoadWaveform> {
    LoadWaveform::new(SignalTrace::new(v, fs, Unit::Dimensionless)?, cores_scale)
}

/// The defense's own load: each slot independently at `cores_scale` with
/// probability `duty`, otherwise idle.
pub fn random_noise_load(cfg: &RandomNoiseConfig, duration_s: f64, fs: f64, seed: u64) -> Result<LoadWaveform> {
    cfg.validate()?;
    let n = sample_count(duration_s, fs)?;
    let mut rng = rng::stream(seed, "random_noise", &[]);
    let mut v = Vec::with_capacity(n);
    let mut k = 0usize;
    while v.len() < n {
        k += 1;
        let end = ((k as f64 * cfg.interval_s * fs).round() as usize).min(n);
        let high = rng.random::<f64>() < cfg.duty;
        v.resize(end, if high { cfg.cores_scale } else { 0.0 });
    }
    waveform(v, fs, cfg.cores_scale)
}

/// Transmitter load plus Random Noise, clipped to `[0, 1]`.
pub fn with_random_noise(cfg: &RandomNoiseConfig, transmitter: &LoadWaveform, seed: u64) -> Result<LoadWaveform> {
    let fs = transmitter.trace().sample_rate_hz();
    let d = random_noise_load(cfg, transmitter.samples().len() as f64 / fs, fs, seed)?;
    combine_loads(transmitter, &d)
}

/// Sample-wise sum of two loads, clipped to `[0, 1]`.
pub fn combine_loads(a: &LoadWaveform, b: &LoadWaveform) -> Result<LoadWaveform> {
    let (x, y) = (a.samples(), b.samples());
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    let fs = a.trace().sample_rate_hz();
    if fs != b.trace().sample_rate_hz() {
        return Err(Error::RateMismatch {
            expected: fs,
            actual: b.trace().sample_rate_hz(),
        });
    }
    let v = x.iter().zip(y).map(|(p, q)| (p + q).clamp(0.0, 1.0)).collect();
    waveform(v, fs, a.cores_scale().max(b.cores_scale()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomPowerConfig {
    pub target: TruncatedGaussianSpec,
    /// How often a new target is drawn.
    pub update_period_s: f64,
    /// Fraction of the measured power error corrected per control step.
    pub controller_gain: f64,
    /// Power sampling and actuation period of the inner loop.
    pub control_period_s: f64,
    /// Lowest throttle factor applied to the transmitter's load.
    pub min_speed: f64,
    pub power_model: PowerModel,
}

impl Default for RandomPowerConfig {
    fn default() -> Self {
        Self {
            target: TruncatedGaussianSpec::default(),
            update_period_s: 0.040,
            controller_gain: 0.8,
            control_period_s: 0.001,
            min_speed: 0.2,
            power_model: PowerModel::default(),
        }
    }
}

impl RandomPowerConfig {
    pub fn validate(&self) -> Result<()> {
        self.target.validate()?;
        self.power_model.validate()?;
        if !(self.update_period_s > 0.0) {
            return Err(Error::Config(format!("update period {} s", self.update_period_s)));
        }
        if !(self.control_period_s > 0.0 && self.control_period_s <= self.update_period_s) {
            return Err(Error::Config(format!("control period {} s", self.control_period_s)));
        }
        if !(self.controller_gain > 0.0 && self.controller_gain <= 1.0) {
            return Err(Error::Config(format!("controller gain {}", self.controller_gain)));
        }
        if !(self.min_speed > 0.0 && self.min_speed <= 1.0) {
            return Err(Error::Config(format!("min speed {}", self.min_speed)));
        }
        Ok(())
    }
}

/// Total machine load under Random Power.
///
/// The controller keeps one effort value `x` in `[min_speed − 1, 1]`. A
/// non-negative effort adds `x` of extra load; a negative effort throttles
/// the transmitter to `1 + x` of its speed. Each control period it reads the
/// power drawn over the previous period and moves `x` by the gain times the
/// error, in load units.
pub fn random_power_load(cfg: &RandomPowerConfig, transmitter: &LoadWaveform, seed: u64) -> Result<LoadWaveform> {
    cfg.validate()?;
    let fs = transmitter.trace().sample_rate_hz();
    let tx = transmitter.samples();
    let n = tx.len();
    let normal = Normal::new(cfg.target.mu, cfg.target.sigma).map_err(|e| Error::DegenerateSpec(e.to_string()))?;
    let mut rng = rng::stream(seed, "random_power", &[]);
    let pm = &cfg.power_model;
    let x_min = cfg.min_speed - 1.0;
    let step = ((cfg.control_period_s * fs).round() as usize).max(1);
    let update = cfg.update_period_s;

    let mut out = Vec::with_capacity(n);
    let mut x = 0.0_f64;
    let mut target_load = 0.0;
    let mut period = usize::MAX;
    let mut i = 0usize;
    while i < n {
        let p = (i as f64 / fs / update).floor() as usize;
        if p != period {
            period = p;
            target_load = pm.load_for(cfg.target.to_watts(draw(&normal, &mut rng)?));
        }
        let end = (i + step).min(n);
        let (speed, extra) = if x >= 0.0 { (1.0, x) } else { (1.0 + x, 0.0) };
        let mut sum = 0.0;
        for t in &tx[i..end] {
            let l = (speed * t + extra).clamp(0.0, 1.0);
            sum += l;
            out.push(l);
        }
        let measured = pm.load_for(pm.watts(sum / (end - i) as f64));
        x = (x + cfg.controller_gain * (target_load - measured)).clamp(x_min, 1.0);
        i = end;
    }
    waveform(out, fs, transmitter.cores_scale())
}

/// A defense attached to one transmitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DefenseConfig {
    RandomNoise(RandomNoiseConfig),
    RandomPower(RandomPowerConfig),
}

impl DefenseConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::RandomNoise(c) => c.validate(),
            Self::RandomPower(c) => c.validate(),
        }
    }

    /// The machine's total load with the defense running.
    pub fn apply(&self, transmitter: &LoadWaveform, seed: u64) -> Result<LoadWaveform> {
        match self {
            Self::RandomNoise(c) => with_random_noise(c, transmitter, seed),
            Self::RandomPower(c) => random_power_load(c, transmitter, seed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FS: f64 = 10_000.0;

    fn zeros(duration_s: f64) -> LoadWaveform {
        waveform(vec![0.0; (duration_s * FS) as usize], FS, 1.0).unwrap()
    }

    /// Composite Simpson integral of the density shape, as an independent
    /// check on the closed-form CDF.
    fn simpson_cdf(mu: f64, sigma: f64, x: f64) -> f64 {
        let f = |t: f64| (-0.5 * ((t - mu) / sigma).powi(2)).exp();
        let integrate = |b: f64| {
            let m = 2000;
            let h = b / m as f64;
            let s: f64 = (0..=m)
                .map(|i| {
                    let w = if i == 0 || i == m {
                        1.0
                    } else if i % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    w * f(i as f64 * h)
                })
                .sum();
            s * h / 3.0
        };
        integrate(x) / integrate(1.0)
    }

    #[test]
    fn cdf_matches_quadrature() {
        let s = TruncatedGaussianSpec::new(0.3, 0.2).unwrap();
        for x in [0.0, 0.1, 0.37, 0.8, 1.0] {
            assert!((s.cdf(x).unwrap() - simpson_cdf(0.3, 0.2, x)).abs() < 1e-9);
        }
        let area: f64 = (0..1000)
            .map(|i| s.pdf((i as f64 + 0.5) / 1000.0).unwrap())
            .sum::<f64>()
            / 1000.0;
        assert!((area - 1.0).abs() < 1e-5);
    }

    #[test]
    fn sampler_edge_cases() {
        let s = TruncatedGaussianSpec::new(0.5, 1e-6).unwrap();
        let v = sample_truncated_gaussian(&s, 1, 1000).unwrap();
        assert!(v.iter().all(|x| (0.499..=0.501).contains(x)));

        let s = TruncatedGaussianSpec::new(0.5, 0.5).unwrap();
        let v = sample_truncated_gaussian(&s, 2, 100_000).unwrap();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean - 0.5).abs() < 0.01);
        assert_eq!(v, sample_truncated_gaussian(&s, 2, 100_000).unwrap());

        let far = TruncatedGaussianSpec {
            mu: -5.0,
            sigma: 0.1,
            ..Default::default()
        };
        assert!(matches!(
            sample_truncated_gaussian(&far, 3, 1),
            Err(Error::DegenerateSpec(_))
        ));
        assert!(matches!(
            TruncatedGaussianSpec::new(0.5, 0.0),
            Err(Error::DegenerateSpec(_))
        ));
    }

    #[test]
    fn random_noise_duty() {
        let cfg = |duty| RandomNoiseConfig {
            duty,
            ..Default::default()
        };
        let w = random_noise_load(&cfg(0.0), 2.0, FS, 1).unwrap();
        assert!(w.samples().iter().all(|v| *v == 0.0));
        let w = random_noise_load(&cfg(1.0), 2.0, FS, 1).unwrap();
        assert!(w.samples().iter().all(|v| *v == 1.0));

        let w = random_noise_load(&cfg(0.6), 110.0, FS, 5).unwrap();
        let frac = w.samples().iter().filter(|v| **v > 0.0).count() as f64 / w.samples().len() as f64;
        assert!((frac - 0.6).abs() < 0.02, "{frac}");
        assert_eq!(w, random_noise_load(&cfg(0.6), 110.0, FS, 5).unwrap());
    }

    #[test]
    fn overhead_of_half_duty() {
        let model = PowerModel {
            idle_w: 28.0,
            full_load_w: 78.0,
        };
        assert_eq!(power_overhead(&zeros(1.0), &model, 28.0), 0.0);
        let cfg = RandomNoiseConfig {
            duty: 0.5,
            ..Default::default()
        };
        let w = random_noise_load(&cfg, 100.0, FS, 9).unwrap();
        assert!((power_overhead(&w, &model, 28.0) - 25.0).abs() < 1.0);
    }

    #[test]
    fn random_power_tracks_targets() {
        let cfg = RandomPowerConfig::default();
        let out = random_power_load(&cfg, &zeros(4.0), 11).unwrap();
        let normal = Normal::new(0.5, 0.5).unwrap();
        let mut rng = rng::stream(11, "random_power", &[]);
        let per = (cfg.update_period_s * FS) as usize;
        for w in out.samples().chunks_exact(per) {
            let target = cfg
                .power_model
                .load_for(cfg.target.to_watts(draw(&normal, &mut rng).unwrap()));
            let mean = w.iter().sum::<f64>() / w.len() as f64;
            assert!((mean - target).abs() <= 0.1, "{mean} vs {target}");
        }
    }

    #[test]
    fn random_power_flattens_transmitter() {
        let v: Vec<f64> = (0..40_000).map(|i| ((i / 330) % 2) as f64).collect();
        let tx = waveform(v, FS, 1.0).unwrap();
        let cfg = RandomPowerConfig {
            target: TruncatedGaussianSpec {
                mu: 1.0,
                sigma: 1e-9,
                ..Default::default()
            },
            ..Default::default()
        };
        let out = random_power_load(&cfg, &tx, 1).unwrap();
        assert!(out.samples()[2000..].iter().all(|v| *v > 1.0 - 1e-6));

        let out = random_power_load(&RandomPowerConfig::default(), &tx, 2).unwrap();
        assert!(out.samples().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn defense_config_from_toml() {
        let d: DefenseConfig = toml::from_str("kind = \"random_noise\"\nduty = 0.3").unwrap();
        assert_eq!(
            d,
            DefenseConfig::RandomNoise(RandomNoiseConfig {
                duty: 0.3,
                ..Default::default()
            })
        );
        let d: DefenseConfig = toml::from_str("kind = \"random_power\"\n[target]\nmu = 0.7").unwrap();
        assert!(matches!(d, DefenseConfig::RandomPower(c) if c.target.mu == 0.7 && c.target.sigma == 0.5));
    }
}
