//! Experiment configuration: a TOML document with every field defaulted.
//!
//! Unknown keys are rejected at every level. After parsing, [`ExperimentConfig::validate`]
//! checks value ranges and reports the offending key path.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use spade_core::detect::threshold_for_pfa;
use spade_core::scene::{build_object, ObjectSpec, ReferenceGeometry};
use spade_core::{ObjectModel, PixelGrid, PsfKind, Receiver};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("could not parse config: {0}")]
    Syntax(String),
    #[error("invalid value at `{path}`: {reason}")]
    Invalid { path: String, reason: String },
    #[error("could not read config `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn invalid(path: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        path: path.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub detector: DetectorConfig,
    pub entropy_sweep: EntropySweepConfig,
    pub threshold_sweep: ThresholdSweepConfig,
    pub latency_ensemble: LatencyEnsembleConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioPreset {
    /// Intact square shattering into four corner fragments.
    #[default]
    Reference,
    /// Objects given explicitly under `scenario.pre` and `scenario.post`.
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// Default: `reference`.
    pub preset: ScenarioPreset,
    /// Geometry overrides for the reference preset.
    pub reference: ReferenceGeometry,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pre: Option<ObjectSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub post: Option<ObjectSpec>,
    /// Default: `gaussian`.
    pub psf: PsfKind,
    /// Object size in units of the PSF width. Default: 0.25.
    pub gamma: f64,
    /// Mean photons per time step. Default: 500.
    pub photons_per_step: f64,
    /// Direct-imaging pixel grid; defaults depend on the PSF.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<PixelGrid>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            preset: ScenarioPreset::Reference,
            reference: ReferenceGeometry::default(),
            pre: None,
            post: None,
            psf: PsfKind::Gaussian,
            gamma: 0.25,
            photons_per_step: 500.0,
            grid: None,
        }
    }
}

impl ScenarioConfig {
    pub fn object_specs(&self) -> Result<(ObjectSpec, ObjectSpec), ConfigError> {
        match self.preset {
            ScenarioPreset::Reference => Ok((self.reference.pre_spec(), self.reference.post_spec())),
            ScenarioPreset::Custom => match (&self.pre, &self.post) {
                (Some(a), Some(b)) => Ok((a.clone(), b.clone())),
                (None, _) => Err(invalid("scenario.pre", "required when preset = \"custom\"")),
                (_, None) => Err(invalid("scenario.post", "required when preset = \"custom\"")),
            },
        }
    }

    pub fn objects(&self) -> Result<(ObjectModel, ObjectModel), ConfigError> {
        let (pre, post) = self.object_specs()?;
        let a = build_object(&pre, "pre").map_err(|e| invalid("scenario.pre", e.to_string()))?;
        let b = build_object(&post, "post").map_err(|e| invalid("scenario.post", e.to_string()))?;
        Ok((a, b))
    }

    pub fn pixel_grid(&self) -> PixelGrid {
        self.grid.unwrap_or_else(|| PixelGrid::default_for(self.psf))
    }
}

/// CUSUM threshold, either directly or from a false-alarm target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum ThresholdSpec {
    Value(f64),
    /// `h = ln(window / pfa)`.
    FalseAlarm { pfa: f64, window: u64 },
}

impl ThresholdSpec {
    pub fn resolve(&self) -> Result<f64, ConfigError> {
        match *self {
            ThresholdSpec::Value(h) if h > 0.0 && h.is_finite() => Ok(h),
            ThresholdSpec::Value(h) => Err(invalid("detector.threshold", format!("{h} must be positive"))),
            ThresholdSpec::FalseAlarm { pfa, window } => {
                threshold_for_pfa(pfa, window).map_err(|e| invalid("detector.threshold", e.to_string()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    /// Default: `{ pfa = 0.001, window = 25 }`, i.e. h = ln 25000.
    pub threshold: ThresholdSpec,
    /// Change time t_c in steps. Default: 25.
    pub change_time: u64,
    /// Trials per ensemble. Default: 2000.
    pub n_trials: usize,
    /// Step cap for change runs. Default: 1000000.
    pub max_steps: u64,
    /// Default: 24301.
    pub master_seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            threshold: ThresholdSpec::FalseAlarm { pfa: 0.001, window: 25 },
            change_time: 25,
            n_trials: 2000,
            max_steps: 1_000_000,
            master_seed: 24301,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EntropySweepConfig {
    /// Default: [0.05, 0.07, 0.1, 0.14, 0.2].
    pub gammas: Vec<f64>,
    /// Hermite-Gauss truncation order for the numerical QRE. Default: 8.
    pub n_max: usize,
}

impl Default for EntropySweepConfig {
    fn default() -> Self {
        Self {
            gammas: vec![0.05, 0.07, 0.1, 0.14, 0.2],
            n_max: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdSweepConfig {
    /// Default: 5, 6, ..., 12.
    pub thresholds: Vec<f64>,
    /// Default: `trispade`.
    pub receiver: Receiver,
    /// No-change runs per threshold. Default: 200.
    pub fa_trials: usize,
    /// Upper cap on no-change run length. Default: 100000000.
    pub fa_max_steps: u64,
    /// Runs of one window length used to estimate the false-alarm
    /// probability at the detector threshold; 0 skips it. Default: 100000.
    pub window_trials: usize,
}

impl Default for ThresholdSweepConfig {
    fn default() -> Self {
        Self {
            thresholds: (5..=12).map(f64::from).collect(),
            receiver: Receiver::TriSpade,
            fa_trials: 200,
            fa_max_steps: 100_000_000,
            window_trials: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatencyEnsembleConfig {
    /// Default: 0.125 · 2^(k/4) for k = 0..=12.
    pub gammas: Vec<f64>,
    /// Default: both receivers.
    pub receivers: Vec<Receiver>,
    /// Trials for direct imaging, whose runs are long. Default: 500.
    pub direct_trials: usize,
    /// TriSPADE no-change runs per γ for the quantum limit. Default: 200.
    pub fa_trials: usize,
    /// Default: 100000000.
    pub fa_max_steps: u64,
}

impl Default for LatencyEnsembleConfig {
    fn default() -> Self {
        Self {
            gammas: (0..=12).map(|k| 0.125 * 2f64.powf(k as f64 / 4.0)).collect(),
            receivers: vec![Receiver::TriSpade, Receiver::DirectImaging],
            direct_trials: 500,
            fa_trials: 200,
            fa_max_steps: 100_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Svg,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Default: `results`.
    pub directory: PathBuf,
    /// Default: all of csv, svg, json. CSV is always written.
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("results"),
            formats: vec![OutputFormat::Csv, OutputFormat::Svg, OutputFormat::Json],
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: OutputFormat) -> bool {
        f == OutputFormat::Csv || self.formats.contains(&f)
    }
}

fn check_gammas(path: &str, gammas: &[f64]) -> Result<(), ConfigError> {
    if gammas.is_empty() {
        return Err(invalid(path, "must not be empty"));
    }
    for (i, &g) in gammas.iter().enumerate() {
        if !(g > 0.0 && g.is_finite()) {
            return Err(invalid(&format!("{path}[{i}]"), format!("{g} must be positive")));
        }
    }
    Ok(())
}

fn check_positive(path: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(path, format!("{v} must be positive")))
    }
}

fn check_nonzero(path: &str, v: u64) -> Result<(), ConfigError> {
    if v == 0 {
        Err(invalid(path, "must be at least 1"))
    } else {
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let sc = &self.scenario;
        check_positive("scenario.gamma", sc.gamma)?;
        check_positive("scenario.photons_per_step", sc.photons_per_step)?;
        if sc.preset == ScenarioPreset::Reference && (sc.pre.is_some() || sc.post.is_some()) {
            return Err(invalid("scenario.preset", "explicit pre/post objects need preset = \"custom\""));
        }
        sc.objects()?;
        if let Some(g) = sc.grid {
            check_positive("scenario.grid.pitch", g.pitch)?;
            if !(g.half_extent >= 3.0 && g.half_extent.is_finite()) {
                return Err(invalid("scenario.grid.half_extent", "must be at least 3"));
            }
            check_nonzero("scenario.grid.subsamples", g.subsamples as u64)?;
        }

        let d = &self.detector;
        d.threshold.resolve()?;
        check_nonzero("detector.n_trials", d.n_trials as u64)?;
        check_nonzero("detector.max_steps", d.max_steps)?;
        if d.change_time >= d.max_steps {
            return Err(invalid("detector.change_time", "must be below detector.max_steps"));
        }

        check_gammas("entropy_sweep.gammas", &self.entropy_sweep.gammas)?;
        if self.entropy_sweep.n_max < 2 {
            return Err(invalid("entropy_sweep.n_max", "must be at least 2"));
        }

        let ts = &self.threshold_sweep;
        if ts.thresholds.is_empty() {
            return Err(invalid("threshold_sweep.thresholds", "must not be empty"));
        }
        for (i, &h) in ts.thresholds.iter().enumerate() {
            check_positive(&format!("threshold_sweep.thresholds[{i}]"), h)?;
        }
        check_nonzero("threshold_sweep.fa_trials", ts.fa_trials as u64)?;
        check_nonzero("threshold_sweep.fa_max_steps", ts.fa_max_steps)?;

        let le = &self.latency_ensemble;
        check_gammas("latency_ensemble.gammas", &le.gammas)?;
        if le.receivers.is_empty() {
            return Err(invalid("latency_ensemble.receivers", "must not be empty"));
        }
        check_nonzero("latency_ensemble.direct_trials", le.direct_trials as u64)?;
        check_nonzero("latency_ensemble.fa_trials", le.fa_trials as u64)?;
        check_nonzero("latency_ensemble.fa_max_steps", le.fa_max_steps)?;

        if self.output.directory.as_os_str().is_empty() {
            return Err(invalid("output.directory", "must not be empty"));
        }
        Ok(())
    }

    pub fn threshold(&self) -> f64 {
        self.detector.threshold.resolve().expect("validated config")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &std::path::Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}
