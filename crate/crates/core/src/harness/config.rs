//! Experiment configuration.
//!
//! The file format is flat UTF-8 `key = value` lines. `#` starts a comment,
//! blank lines are ignored and list values are comma-separated. Unknown keys
//! are rejected so that typos do not silently fall back to defaults.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `seed` | 1 | master seed |
//! | `power` | 1.0 | total transmit power `P` |
//! | `snr_db` | 0,5,10,15,20,25 | SNR sweep; `inf` means noiseless |
//! | `mode` | siso,mimo_mmse,mimo_svd | link modes to run |
//! | `scheme` | jscc,fast_kc,fast_pc,fast_kc_ie,fast_pc_ie | schemes to run |
//! | `nt`, `nr` | 2, 2 | antennas for the MIMO modes |
//! | `streams` | 2 | precoded streams `d` |
//! | `width`, `height` | 16, 16 | image size (grayscale) |
//! | `features`, `feature_h`, `feature_w` | 16, 4, 4 | latent shape `c x h x w` |
//! | `sos_paths` | 32 | sinusoids per link |
//! | `doppler_hz`, `slot_period` | 300, 0.001 | Doppler shift and slot length |
//! | `predictor_order`, `predictor_history` | 8, 512 | linear predictor |
//! | `trials` | 200 | test images per (mode, scheme, SNR) |
//! | `test_image_dir` | (none) | load PGM/PPM test images instead of synthesizing |
//! | `rho` | 0.9 | pixel correlation of synthetic images |
//! | `train_images`, `distill_images` | 512, 512 | training set sizes |
//! | `train_channel` | rayleigh | rayleigh, awgn or noiseless |
//! | `train_snr_db` | 19 | training SNR |
//! | `epochs`, `batch`, `learning_rate` | 20, 16, 0.05 | SGD settings |
//! | `pca_eps` | 1e-4 | whitening floor of the initial codec |
//! | `pooling` | abs | gradient pooling: signed, abs or relu |
//! | `label_pass` | noiseless | distillation labels: noiseless or post_channel |
//! | `ridge` | 1.0 | relative ridge of the evaluator |

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::codec::{CodecShape, TrainChannel};
use crate::fading::FadingSpec;
use crate::importance::{LabelPass, Pooling};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    Siso,
    MimoMmse,
    MimoSvd,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Siso, Mode::MimoMmse, Mode::MimoSvd];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Siso => "siso",
            Mode::MimoMmse => "mimo_mmse",
            Mode::MimoSvd => "mimo_svd",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown mode '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scheme {
    /// Natural feature order.
    Jscc,
    /// Gradient importance, known future CSI.
    FastKc,
    /// Gradient importance, predicted CSI.
    FastPc,
    /// Distilled evaluator, known future CSI.
    FastKcIe,
    /// Distilled evaluator, predicted CSI.
    FastPcIe,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::Jscc,
        Scheme::FastKc,
        Scheme::FastPc,
        Scheme::FastKcIe,
        Scheme::FastPcIe,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Jscc => "jscc",
            Scheme::FastKc => "fast_kc",
            Scheme::FastPc => "fast_pc",
            Scheme::FastKcIe => "fast_kc_ie",
            Scheme::FastPcIe => "fast_pc_ie",
        }
    }

    pub fn uses_evaluator(&self) -> bool {
        matches!(self, Scheme::FastKcIe | Scheme::FastPcIe)
    }

    pub fn uses_prediction(&self) -> bool {
        matches!(self, Scheme::FastPc | Scheme::FastPcIe)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown scheme '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainChannelKind {
    Noiseless,
    Awgn,
    Rayleigh,
}

/// Full parameterization of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    pub seed: u64,
    pub power: f64,
    pub snr_db: Vec<f64>,
    pub modes: Vec<Mode>,
    pub schemes: Vec<Scheme>,
    pub nt: usize,
    pub nr: usize,
    pub streams: usize,
    pub width: usize,
    pub height: usize,
    pub features: usize,
    pub feature_h: usize,
    pub feature_w: usize,
    pub sos_paths: usize,
    pub doppler_hz: f64,
    pub slot_period: f64,
    pub predictor_order: usize,
    pub predictor_history: usize,
    pub trials: usize,
    pub test_image_dir: Option<PathBuf>,
    pub rho: f64,
    pub train_images: usize,
    pub distill_images: usize,
    pub train_channel: TrainChannelKind,
    pub train_snr_db: f64,
    pub epochs: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub pca_eps: f64,
    pub pooling: Pooling,
    pub label_pass: LabelPass,
    pub ridge: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            seed: 1,
            power: 1.0,
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0],
            modes: Mode::ALL.to_vec(),
            schemes: Scheme::ALL.to_vec(),
            nt: 2,
            nr: 2,
            streams: 2,
            width: 16,
            height: 16,
            features: 16,
            feature_h: 4,
            feature_w: 4,
            sos_paths: 32,
            doppler_hz: 300.0,
            slot_period: 1e-3,
            predictor_order: 8,
            predictor_history: 512,
            trials: 200,
            test_image_dir: None,
            rho: 0.9,
            train_images: 512,
            distill_images: 512,
            train_channel: TrainChannelKind::Rayleigh,
            train_snr_db: 19.0,
            epochs: 20,
            batch: 16,
            learning_rate: 0.05,
            pca_eps: 1e-4,
            pooling: Pooling::Abs,
            label_pass: LabelPass::Noiseless,
            ridge: 1.0,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::config(format!("invalid value '{v}' for '{key}'")))
}

fn parse_snr(key: &str, v: &str) -> Result<f64> {
    match v {
        "inf" | "+inf" => Ok(f64::INFINITY),
        _ => {
            let x: f64 = parse_num(key, v)?;
            if x.is_finite() {
                Ok(x)
            } else {
                Err(Error::config(format!("invalid SNR '{v}'")))
            }
        }
    }
}

fn parse_list<T>(key: &str, v: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    let out = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(f)
        .collect::<Result<Vec<T>>>()?;
    if out.is_empty() {
        return Err(Error::config(format!("'{key}' needs at least one value")));
    }
    Ok(out)
}

impl LinkConfig {
    /// Parses configuration text on top of the defaults, then validates.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = LinkConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::config(format!("line {}: {e}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse_num(key, v)?,
            "power" => self.power = parse_num(key, v)?,
            "snr_db" => self.snr_db = parse_list(key, v, |s| parse_snr(key, s))?,
            "mode" => self.modes = parse_list(key, v, str::parse)?,
            "scheme" => self.schemes = parse_list(key, v, str::parse)?,
            "nt" => self.nt = parse_num(key, v)?,
            "nr" => self.nr = parse_num(key, v)?,
            "streams" => self.streams = parse_num(key, v)?,
            "width" => self.width = parse_num(key, v)?,
            "height" => self.height = parse_num(key, v)?,
            "features" => self.features = parse_num(key, v)?,
            "feature_h" => self.feature_h = parse_num(key, v)?,
            "feature_w" => self.feature_w = parse_num(key, v)?,
            "sos_paths" => self.sos_paths = parse_num(key, v)?,
            "doppler_hz" => self.doppler_hz = parse_num(key, v)?,
            "slot_period" => self.slot_period = parse_num(key, v)?,
            "predictor_order" => self.predictor_order = parse_num(key, v)?,
            "predictor_history" => self.predictor_history = parse_num(key, v)?,
            "trials" => self.trials = parse_num(key, v)?,
            "test_image_dir" => self.test_image_dir = Some(PathBuf::from(v)),
            "rho" => self.rho = parse_num(key, v)?,
            "train_images" => self.train_images = parse_num(key, v)?,
            "distill_images" => self.distill_images = parse_num(key, v)?,
            "train_channel" => {
                self.train_channel = match v {
                    "noiseless" => TrainChannelKind::Noiseless,
                    "awgn" => TrainChannelKind::Awgn,
                    "rayleigh" => TrainChannelKind::Rayleigh,
                    _ => return Err(Error::config(format!("unknown train_channel '{v}'"))),
                }
            }
            "train_snr_db" => self.train_snr_db = parse_snr(key, v)?,
            "epochs" => self.epochs = parse_num(key, v)?,
            "batch" => self.batch = parse_num(key, v)?,
            "learning_rate" => self.learning_rate = parse_num(key, v)?,
            "pca_eps" => self.pca_eps = parse_num(key, v)?,
            "pooling" => self.pooling = v.parse()?,
            "label_pass" => self.label_pass = v.parse()?,
            "ridge" => self.ridge = parse_num(key, v)?,
            _ => return Err(Error::config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Checks every cross-field constraint before any work starts.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::config(m));
        if !(self.power > 0.0) || !self.power.is_finite() {
            return bad(format!("power must be positive, got {}", self.power));
        }
        if self.snr_db.is_empty() || self.modes.is_empty() || self.schemes.is_empty() {
            return bad("snr_db, mode and scheme need at least one value".into());
        }
        self.shape()?;
        if self.width != self.height {
            return bad("synthetic images are square; width and height must match".into());
        }
        self.fading()?;
        let c = self.features;
        for mode in &self.modes {
            match mode {
                Mode::Siso => {}
                Mode::MimoMmse => {
                    if self.nt == 0 || self.nr == 0 {
                        return bad("antenna counts must be at least 1".into());
                    }
                    if c % self.nt != 0 {
                        return bad(format!("features ({c}) must be divisible by nt ({})", self.nt));
                    }
                }
                Mode::MimoSvd => {
                    let n = self.nt.min(self.nr);
                    if self.streams == 0 || self.streams > n {
                        return bad(format!(
                            "streams ({}) must be between 1 and min(nr, nt) = {n}",
                            self.streams
                        ));
                    }
                    if c % self.streams != 0 {
                        return bad(format!(
                            "features ({c}) must be divisible by streams ({})",
                            self.streams
                        ));
                    }
                }
            }
        }
        if self.predictor_order == 0 || self.predictor_history < 4 * self.predictor_order {
            return bad(format!(
                "predictor_history ({}) must be at least 4 * predictor_order ({})",
                self.predictor_history, self.predictor_order
            ));
        }
        if self.trials == 0 && self.test_image_dir.is_none() {
            return bad("trials must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.rho) {
            return bad(format!("rho must be in [0, 1), got {}", self.rho));
        }
        if self.train_images == 0 || self.epochs == 0 || self.batch == 0 {
            return bad("train_images, epochs and batch must be positive".into());
        }
        if !(self.learning_rate > 0.0) || !(self.pca_eps > 0.0) || !(self.ridge >= 0.0) {
            return bad("learning_rate and pca_eps must be positive, ridge non-negative".into());
        }
        if self.distill_images < crate::importance::MIN_DISTILL_PAIRS
            && self.schemes.iter().any(Scheme::uses_evaluator)
        {
            return bad(format!(
                "distill_images must be at least {}",
                crate::importance::MIN_DISTILL_PAIRS
            ));
        }
        Ok(())
    }

    pub fn shape(&self) -> Result<CodecShape> {
        let s = CodecShape::new(
            self.width,
            self.height,
            1,
            self.features,
            self.feature_h,
            self.feature_w,
        )?;
        if s.m() > s.l() {
            return Err(Error::config("latent size c*h*w must not exceed the pixel count"));
        }
        Ok(s)
    }

    pub fn fading(&self) -> Result<FadingSpec> {
        FadingSpec::new(self.sos_paths, self.doppler_hz, self.slot_period)
    }

    /// `sigma^2 = P / 10^(snr/10)`; infinite SNR is noiseless.
    pub fn noise_var(&self, snr_db: f64) -> f64 {
        crate::codec::noise_var(self.power, snr_db)
    }

    pub fn train_channel(&self) -> Result<TrainChannel> {
        Ok(match self.train_channel {
            TrainChannelKind::Noiseless => TrainChannel::Noiseless,
            TrainChannelKind::Awgn => TrainChannel::Awgn {
                snr_db: self.train_snr_db,
            },
            TrainChannelKind::Rayleigh => TrainChannel::Rayleigh {
                snr_db: self.train_snr_db,
                fading: self.fading()?,
            },
        })
    }

    /// Resource blocks per slot in `mode`.
    pub fn blocks_per_slot(&self, mode: Mode) -> usize {
        match mode {
            Mode::Siso => 1,
            Mode::MimoMmse => self.nt,
            Mode::MimoSvd => self.streams,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        LinkConfig::default().validate().unwrap();
        assert_eq!(LinkConfig::parse("").unwrap(), LinkConfig::default());
    }

    #[test]
    fn parses_keys_and_comments() {
        let cfg = LinkConfig::parse(
            "# sweep\nsnr_db = 0, 10, inf\nmode = siso  # only SISO\nscheme=jscc,fast_kc\ntrials = 3\n",
        )
        .unwrap();
        assert_eq!(cfg.snr_db, vec![0.0, 10.0, f64::INFINITY]);
        assert_eq!(cfg.modes, vec![Mode::Siso]);
        assert_eq!(cfg.schemes, vec![Scheme::Jscc, Scheme::FastKc]);
        assert_eq!(cfg.trials, 3);
    }

    #[test]
    fn unknown_key_is_an_error() {
        let err = LinkConfig::parse("snr_bd = 3").unwrap_err();
        assert!(err.is_config());
        assert!(err.to_string().contains("snr_bd"));
    }

    #[test]
    fn inconsistent_configs_rejected() {
        for text in [
            "features = 15\nfeature_h = 2\nfeature_w = 2\nmode = mimo_mmse",
            "streams = 3",
            "predictor_history = 10",
            "rho = 1.0",
            "feature_h = 3\nfeature_w = 3",
            "power = 0",
            "mode = mimo",
        ] {
            assert!(LinkConfig::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn noise_from_snr() {
        let cfg = LinkConfig::parse("power = 2").unwrap();
        assert!((cfg.noise_var(10.0) - 0.2).abs() < 1e-15);
        assert_eq!(cfg.noise_var(f64::INFINITY), 0.0);
    }
}
