//! Pipeline configuration, read from a versioned TOML file.
//!
//! Every table and key is optional; omitted values take the defaults below.
//! Relative paths are resolved against the directory holding the file.
//!
//! ```toml
//! version = 1
//! disease = "COPD"            # COPD, CKD, or omit to run every rule
//!
//! [ecg]
//! rate_hz = 250.0
//! baseline = "auto"           # auto, linear, poly
//! wavelet_levels = 4
//! threshold_mode = "hard"     # hard, soft
//! detector = "pan_tompkins"   # pan_tompkins, wavelet
//! hr_window_s = 60.0
//! highpass = { cutoff_hz = 0.5, order = 2, zero_phase = true }
//!
//! [respiration]
//! rate_hz = 25.0
//! calibration_units_per_litre = 1.0
//! residual_volume_l = 1.2
//! stft = { window_s = 60.0, hop_s = 60.0, f_max_hz = 2.0 }
//!
//! [rules]
//! path = "rules.xml"
//!
//! [index]
//! threshold = 0.6
//! answer_max = 4.0
//! weights = { q01 = 1.0, q02 = 1.0 }
//!
//! [schedule]
//! send_time = "08:00"
//!
//! [classifier]
//! model = "model.json"
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classify::WeightedIndexModel;
use crate::ecg::{BaselineMethod, HighPassSpec, PqWindow, ThresholdMode};
use crate::error::{Error, Result};
use crate::messaging::Schedule;
use crate::qrs::{PanTompkinsParams, WaveletQrsParams};
use crate::respiration::StftParams;
use crate::rules::Disease;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorChoice {
    #[default]
    PanTompkins,
    Wavelet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EcgConfig {
    pub rate_hz: f64,
    pub baseline: BaselineMethod,
    pub highpass: HighPassSpec,
    pub pq_window: PqWindow,
    pub wavelet_levels: usize,
    pub threshold_mode: ThresholdMode,
    pub detector: DetectorChoice,
    pub pan_tompkins: PanTompkinsParams,
    pub wavelet_qrs: WaveletQrsParams,
    /// Trailing span used for the HEART_RATE measurement.
    pub hr_window_s: f64,
}

impl Default for EcgConfig {
    fn default() -> Self {
        Self {
            rate_hz: 250.0,
            baseline: BaselineMethod::Auto,
            highpass: HighPassSpec::default(),
            pq_window: PqWindow::default(),
            wavelet_levels: 4,
            threshold_mode: ThresholdMode::Hard,
            detector: DetectorChoice::PanTompkins,
            pan_tompkins: PanTompkinsParams::default(),
            wavelet_qrs: WaveletQrsParams::default(),
            hr_window_s: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RespirationConfig {
    pub rate_hz: f64,
    pub stft: StftParams,
    pub calibration_units_per_litre: f64,
    pub residual_volume_l: f64,
}

impl Default for RespirationConfig {
    fn default() -> Self {
        Self {
            rate_hz: 25.0,
            stft: StftParams::default(),
            calibration_units_per_litre: 1.0,
            residual_volume_l: 1.2,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RulesConfig {
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexConfig {
    /// Empty means equal weights over q01..q13.
    pub weights: BTreeMap<String, f64>,
    pub threshold: f64,
    /// Questionnaire answers are codes 0..=answer_max; score = code / answer_max.
    pub answer_max: f64,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            weights: BTreeMap::new(),
            threshold: 0.6,
            answer_max: 4.0,
        }
    }
}

impl IndexConfig {
    pub fn model(&self) -> Result<WeightedIndexModel> {
        if self.weights.is_empty() {
            let d = WeightedIndexModel::questionnaire_default();
            WeightedIndexModel::new(d.weights().clone(), self.threshold)
        } else {
            WeightedIndexModel::new(self.weights.clone(), self.threshold)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub send_time: String,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            send_time: "08:00".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub version: u32,
    pub disease: Option<Disease>,
    pub ecg: EcgConfig,
    pub respiration: RespirationConfig,
    pub rules: RulesConfig,
    pub index: IndexConfig,
    pub schedule: ScheduleConfig,
    pub classifier: ClassifierConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            disease: None,
            ecg: EcgConfig::default(),
            respiration: RespirationConfig::default(),
            rules: RulesConfig::default(),
            index: IndexConfig::default(),
            schedule: ScheduleConfig::default(),
            classifier: ClassifierConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Config> {
        let cfg: Config = toml::from_str(text)
            .map_err(|e| Error::Semantic(format!("config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a file and makes its relative paths absolute.
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.rules.path, &mut cfg.classifier.model]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Semantic(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Semantic(format!(
                    "config: {name} must be > 0, got {v}"
                )))
            }
        };
        positive("ecg.rate_hz", self.ecg.rate_hz)?;
        positive("ecg.hr_window_s", self.ecg.hr_window_s)?;
        positive("respiration.rate_hz", self.respiration.rate_hz)?;
        positive("index.answer_max", self.index.answer_max)?;
        if self.ecg.wavelet_levels == 0 {
            return Err(Error::Semantic(
                "config: ecg.wavelet_levels must be >= 1".into(),
            ));
        }
        self.index.model()?;
        self.schedule()?;
        Ok(())
    }

    pub fn schedule(&self) -> Result<Schedule> {
        Schedule::daily_at(&self.schedule.send_time)
    }
}
