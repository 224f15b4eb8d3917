use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::channel::{AdcSpec, DeviceModel, NetworkModel};
use crate::defense::DefenseConfig;
use crate::error::{Error, Result};
use crate::rxdsp::ScanConfig;
use crate::txmod::{parse_bits, FrameSpec};

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 500e3;
/// Quiet time left after the last frame when the duration is derived.
const TAIL_S: f64 = 0.3;

/// How the receiver learns where pilots are.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    /// Search the whole trace for pilots.
    #[default]
    Blind,
    /// Scan and synchronize at each frame's true pilot time.
    Oracle,
}

/// Where a transmitter's payload bits come from. Random payloads differ per
/// frame; text and fixed bits repeat in every frame.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PayloadSource {
    #[default]
    Random,
    /// UTF-8 bytes, most significant bit first, padded with random bits.
    Text { text: String },
    /// A literal string of `0`s and `1`s of exactly the payload length.
    Bits { bits: String },
}

fn default_preset() -> String {
    DeviceModel::PRESETS[0].into()
}

/// A named device profile with per-field overrides applied on top.
pub fn resolve_device(preset: &str, overrides: &Map<String, Value>) -> Result<DeviceModel> {
    let base = DeviceModel::preset(preset).ok_or_else(|| {
        Error::Config(format!(
            "unknown preset `{preset}` (known: {})",
            DeviceModel::PRESETS.join(", ")
        ))
    })?;
    let mut v = serde_json::to_value(base).map_err(|e| Error::Config(e.to_string()))?;
    let obj = v.as_object_mut().expect("device serializes to an object");
    for (k, x) in overrides {
        obj.insert(k.clone(), x.clone());
    }
    let d: DeviceModel = serde_json::from_value(v).map_err(|e| Error::Config(format!("device: {e}")))?;
    d.validate()?;
    Ok(d)
}

/// Replaces an override table by the full resolved device.
fn fill_device(preset: &str, overrides: &mut Map<String, Value>) -> Result<()> {
    let d = resolve_device(preset, overrides)?;
    let Value::Object(m) = serde_json::to_value(d).map_err(|e| Error::Config(e.to_string()))? else {
        unreachable!("device serializes to an object");
    };
    *overrides = m;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransmitterConfig {
    pub preset: String,
    /// Fields overriding the preset. After [`Scenario::normalized`] this
    /// holds every device field.
    pub device: Map<String, Value>,
    pub cores_scale: f64,
    pub frame: FrameSpec,
    pub payload: PayloadSource,
    /// Start of the first frame.
    pub start_s: f64,
    pub defense: Option<DefenseConfig>,
    /// Attenuation factor of a noise filter between the machine and the outlet.
    pub line_filter: Option<f64>,
}

impl TransmitterConfig {
    pub fn resolve_device(&self) -> Result<DeviceModel> {
        resolve_device(&self.preset, &self.device)
    }
}

impl Default for TransmitterConfig {
    fn default() -> Self {
        Self {
            preset: default_preset(),
            device: Map::new(),
            cores_scale: 1.0,
            frame: FrameSpec::default(),
            payload: PayloadSource::Random,
            start_s: 0.4,
            defense: None,
            line_filter: None,
        }
    }
}

/// Randomly placed machines running a steady load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackgroundConfig {
    pub count: usize,
    pub preset: String,
    pub freq_lo_hz: f64,
    pub freq_hi_hz: f64,
    pub load_lo: f64,
    pub load_hi: f64,
    /// Half-width of the uniform load perturbation.
    pub jitter: f64,
    pub update_s: f64,
    /// Background switching frequencies keep at least this far from every
    /// transmitter's.
    pub min_separation_hz: f64,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        Self {
            count: 30,
            preset: default_preset(),
            freq_lo_hz: 45e3,
            freq_hi_hz: 140e3,
            load_lo: 0.1,
            load_hi: 0.9,
            jitter: 0.05,
            update_s: 1.0,
            min_separation_hz: 1e3,
        }
    }
}

/// One explicitly placed background machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackgroundDevice {
    pub preset: String,
    pub device: Map<String, Value>,
    pub load: f64,
    pub jitter: f64,
}

impl Default for BackgroundDevice {
    fn default() -> Self {
        Self {
            preset: default_preset(),
            device: Map::new(),
            load: 0.5,
            jitter: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub sample_rate_hz: f64,
    /// Derived from the frame layout when absent.
    pub duration_s: Option<f64>,
    pub mode: DecodeMode,
    pub frames_count: usize,
    /// Idle time between consecutive frames of one transmitter.
    pub frame_gap_s: f64,
    /// Re-scan near the previous band before each later frame.
    pub fine_tune: bool,
    pub network: NetworkModel,
    pub adc: AdcSpec,
    pub receiver: ScanConfig,
    pub transmitters: Vec<TransmitterConfig>,
    pub background: BackgroundConfig,
    pub background_devices: Vec<BackgroundDevice>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            seed: 1,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            duration_s: None,
            mode: DecodeMode::Blind,
            frames_count: 1,
            frame_gap_s: 0.2,
            fine_tune: true,
            network: NetworkModel::default(),
            adc: AdcSpec::default(),
            receiver: ScanConfig::default(),
            transmitters: vec![TransmitterConfig::default()],
            background: BackgroundConfig::default(),
            background_devices: Vec::new(),
        }
    }
}

impl Scenario {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let sc: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        sc.normalized()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Validated copy with every device override table filled in, so the
    /// scenario is self-describing and every device field is addressable.
    pub fn normalized(&self) -> Result<Self> {
        let mut s = self.clone();
        for t in &mut s.transmitters {
            fill_device(&t.preset, &mut t.device)?;
        }
        for b in &mut s.background_devices {
            fill_device(&b.preset, &mut b.device)?;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.sample_rate_hz > 0.0) {
            return bad(format!("sample rate {}", self.sample_rate_hz));
        }
        if self.frames_count == 0 {
            return bad("frames_count must be at least 1".into());
        }
        if !(self.frame_gap_s >= 0.0) {
            return bad(format!("frame gap {}", self.frame_gap_s));
        }
        if let Some(d) = self.duration_s {
            if !(d > 0.0) {
                return bad(format!("duration {d}"));
            }
        }
        self.network.validate()?;
        self.adc.validate()?;
        self.receiver.validate()?;
        if self.receiver.f_hi_hz >= self.sample_rate_hz / 2.0 {
            return bad(format!("scan range reaches Nyquist at {} Hz", self.sample_rate_hz));
        }
        for (i, t) in self.transmitters.iter().enumerate() {
            t.resolve_device()?;
            t.frame.validate()?;
            if !(t.cores_scale > 0.0 && t.cores_scale <= 1.0) {
                return bad(format!("transmitter {i}: cores_scale {}", t.cores_scale));
            }
            if !(t.start_s >= 0.0) {
                return bad(format!("transmitter {i}: start {}", t.start_s));
            }
            if let Some(f) = t.line_filter {
                if !(f >= 1.0) {
                    return Err(Error::InvalidAttenuation(f));
                }
            }
            if let Some(d) = &t.defense {
                d.validate()?;
            }
            if let PayloadSource::Bits { bits } = &t.payload {
                let b = parse_bits(bits)?;
                if b.len() != t.frame.payload_len_bits {
                    return Err(Error::LengthMismatch {
                        expected: t.frame.payload_len_bits,
                        actual: b.len(),
                    });
                }
            }
        }
        let bg = &self.background;
        if !(bg.freq_lo_hz < bg.freq_hi_hz) || !(0.0 <= bg.load_lo && bg.load_lo <= bg.load_hi && bg.load_hi <= 1.0) {
            return bad(format!("background {bg:?}"));
        }
        if !(bg.jitter >= 0.0 && bg.update_s > 0.0 && bg.min_separation_hz >= 0.0) {
            return bad(format!("background {bg:?}"));
        }
        if bg.count > 0 {
            DeviceModel::preset(&bg.preset).ok_or_else(|| Error::Config(format!("unknown preset `{}`", bg.preset)))?;
        }
        for b in &self.background_devices {
            resolve_device(&b.preset, &b.device)?;
            if !(0.0..=1.0).contains(&b.load) || !(b.jitter >= 0.0) {
                return bad(format!("background device load {} jitter {}", b.load, b.jitter));
            }
        }
        Ok(())
    }

    /// Start of frame `k` of transmitter `tx`.
    pub fn frame_start_s(&self, tx: usize, k: usize) -> f64 {
        let t = &self.transmitters[tx];
        t.start_s + k as f64 * (t.frame.frame_duration_s() + self.frame_gap_s)
    }

    pub fn duration(&self) -> f64 {
        self.duration_s.unwrap_or_else(|| {
            let end = (0..self.transmitters.len())
                .map(|i| self.frame_start_s(i, self.frames_count))
                .fold(0.0, f64::max);
            end + TAIL_S
        })
    }

    /// Hex SHA-256 of the canonical JSON form, which includes the seed.
    pub fn fingerprint(&self) -> Result<String> {
        let v = serde_json::to_value(self).map_err(|e| Error::Config(e.to_string()))?;
        let s = serde_json::to_string(&v).map_err(|e| Error::Config(e.to_string()))?;
        Ok(hex::encode(Sha256::digest(s.as_bytes())))
    }

    /// Copy with the numeric field at `path` set to `value`. The path is
    /// dotted (`network.grid_noise.broadband_noise_rms_v`,
    /// `transmitters.0.cores_scale`); a bare name selects every field of
    /// that name at the shallowest depth where it occurs.
    pub fn with_value(&self, path: &str, value: f64) -> Result<Self> {
        let mut v = serde_json::to_value(self.normalized()?).map_err(|e| Error::Config(e.to_string()))?;
        let unknown = || Error::UnknownAxis(path.to_string());
        let targets: Vec<Vec<String>> = if path.contains('.') {
            vec![path.split('.').map(str::to_string).collect()]
        } else {
            shallowest_leaves(&v, path)
        };
        if targets.is_empty() {
            return Err(unknown());
        }
        let num = serde_json::Number::from_f64(value).ok_or_else(|| Error::Config(format!("value {value}")))?;
        for t in targets {
            let slot = t.iter().try_fold(&mut v, |node, key| match node {
                Value::Object(m) => m.get_mut(key),
                Value::Array(a) => key.parse::<usize>().ok().and_then(|i| a.get_mut(i)),
                _ => None,
            });
            match slot {
                Some(x) if x.is_number() => *x = Value::Number(num.clone()),
                _ => return Err(unknown()),
            }
        }
        let s: Self = serde_json::from_value(v).map_err(|e| Error::Config(format!("{path} = {value}: {e}")))?;
        s.normalized()
    }
}

fn shallowest_leaves(root: &Value, name: &str) -> Vec<Vec<String>> {
    let mut level: Vec<(Vec<String>, &Value)> = vec![(Vec::new(), root)];
    while !level.is_empty() {
        let mut found = Vec::new();
        let mut next = Vec::new();
        for (path, node) in level {
            let children: Vec<(String, &Value)> = match node {
                Value::Object(m) => m.iter().map(|(k, v)| (k.clone(), v)).collect(),
                Value::Array(a) => a.iter().enumerate().map(|(i, v)| (i.to_string(), v)).collect(),
                _ => Vec::new(),
            };
            for (k, child) in children {
                let mut p = path.clone();
                p.push(k.clone());
                if k == name && child.is_number() {
                    found.push(p);
                } else {
                    next.push((p, child));
                }
            }
        }
        if !found.is_empty() {
            return found;
        }
        level = next;
    }
    Vec::new()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_with_overrides() {
        let s = Scenario::from_toml_str(
            r#"
            seed = 9
            [[transmitters]]
            preset = "custom_built_1"
            device = { lag_tau_s = 0.02 }
            cores_scale = 0.5
            payload = { kind = "text", text = "hi" }
            "#,
        )
        .unwrap();
        let d = s.transmitters[0].resolve_device().unwrap();
        assert_eq!(d.pfc_freq_hz, 91_200.0);
        assert_eq!(d.lag_tau_s, 0.02);
        assert_eq!(s.transmitters[0].frame, FrameSpec::default());
        assert_eq!(s.background.count, 30);
    }

    #[test]
    fn rejects_unknown_fields_and_presets() {
        assert!(Scenario::from_toml_str("sed = 1").is_err());
        assert!(Scenario::from_toml_str("[[transmitters]]\npreset = \"nope\"").is_err());
        assert!(Scenario::from_toml_str("[[transmitters]]\ndevice = { pfc_frq = 1 }").is_err());
        assert!(matches!(
            Scenario::from_toml_str("[[transmitters]]\nline_filter = 0.5"),
            Err(Error::InvalidAttenuation(_))
        ));
    }

    #[test]
    fn toml_round_trip_and_fingerprint() {
        let s = Scenario::default().normalized().unwrap();
        let back = Scenario::from_toml_str(&s.to_toml_string().unwrap()).unwrap();
        assert_eq!(s, back);
        assert_eq!(s.fingerprint().unwrap(), back.fingerprint().unwrap());
        let other = Scenario { seed: 2, ..s.clone() };
        assert_ne!(s.fingerprint().unwrap(), other.fingerprint().unwrap());
    }

    #[test]
    fn axis_paths() {
        let s = Scenario::default();
        let a = s.with_value("network.grid_noise.broadband_noise_rms_v", 0.01).unwrap();
        assert_eq!(a.network.grid_noise.broadband_noise_rms_v, 0.01);
        let b = s.with_value("broadband_noise_rms_v", 0.02).unwrap();
        assert_eq!(b.network.grid_noise.broadband_noise_rms_v, 0.02);
        let c = s.with_value("cores_scale", 0.4).unwrap();
        assert_eq!(c.transmitters[0].cores_scale, 0.4);
        let d = s.with_value("transmitters.0.device.lag_tau_s", 0.03).unwrap();
        assert_eq!(d.transmitters[0].resolve_device().unwrap().lag_tau_s, 0.03);
        for bad in [
            "no_such_field",
            "network.nope",
            "transmitters.3.cores_scale",
            "transmitters.0.preset",
        ] {
            assert!(matches!(s.with_value(bad, 1.0), Err(Error::UnknownAxis(_))), "{bad}");
        }
    }

    #[test]
    fn derived_duration() {
        let s = Scenario {
            frames_count: 2,
            ..Default::default()
        };
        assert!((s.duration() - (0.4 + 2.0 * 3.5 + 0.3)).abs() < 1e-9);
    }
}
