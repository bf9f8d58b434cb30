//! Campaign configuration: JSON file plus dotted `key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::calibration::{SynthMode, SynthParams};
use crate::error::{Error, Result};
use crate::estimators::{Fov, OptimizerOptions};
use crate::response::{AxisLayout, IdealGeometry};
use crate::signal::Waveform;
use crate::BasisKind;

/// Boltzmann constant (J/K).
pub const BOLTZMANN: f64 = 1.380649e-23;

/// Where the calibration data come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AntennaSource {
    Synth(SynthParams),
    File(PathBuf),
}

/// A response model fitted from the calibration data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    /// Wavefield model; basis and size default to the antenna's extent.
    Wm {
        name: String,
        #[serde(default)]
        basis: Option<BasisKind>,
        #[serde(default)]
        size: Option<usize>,
    },
    /// Array interpolation with sectors of `width_deg` overlapping by
    /// `overlap_deg` (theta sectors, and phi sectors on the sphere).
    Ait {
        name: String,
        #[serde(default = "default_sector_width")]
        width_deg: f64,
        #[serde(default = "default_sector_overlap")]
        overlap_deg: f64,
        #[serde(default)]
        geometry: Option<IdealGeometry>,
    },
}

fn default_sector_width() -> f64 {
    30.0
}

fn default_sector_overlap() -> f64 {
    15.0
}

impl ModelSpec {
    pub fn name(&self) -> &str {
        match self {
            Self::Wm { name, .. } | Self::Ait { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    CMl,
    NcMl,
    NcRc,
    PMl,
}

impl EstimatorKind {
    pub fn id(self) -> &'static str {
        match self {
            Self::CMl => "c-ml",
            Self::NcMl => "nc-ml",
            Self::NcRc => "nc-rc",
            Self::PMl => "p-ml",
        }
    }

    pub fn is_noncoherent(self) -> bool {
        matches!(self, Self::NcMl | Self::NcRc)
    }
}

/// Noise floor `sigma^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSpec {
    Watts(f64),
    /// `k_B T B`.
    Thermal {
        temperature_k: f64,
        bandwidth_hz: f64,
    },
}

impl NoiseSpec {
    pub fn power(&self) -> f64 {
        match *self {
            Self::Watts(w) => w,
            Self::Thermal {
                temperature_k,
                bandwidth_hz,
            } => BOLTZMANN * temperature_k * bandwidth_hz,
        }
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::Thermal {
            temperature_k: 290.0,
            bandwidth_hz: 1e6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    /// SNR of the first signal, dB.
    Snr,
    /// Inclination of the first signal, degrees.
    Theta,
    /// Inclination offset of the second signal, degrees.
    Separation,
}

/// Inclusive range `start, start + step, ... <= stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub kind: AxisKind,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl AxisSpec {
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.start + i as f64 * self.step).collect()
    }

    fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !(self.stop >= self.start) || !self.start.is_finite() {
            return Err(Error::Config(format!("empty or invalid axis {self:?}")));
        }
        Ok(())
    }
}

/// Ground truth drawn per trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    #[serde(default = "default_snr")]
    pub snr_db: f64,
    /// Fixed inclination of the first signal; random in `truth_region` if absent.
    #[serde(default)]
    pub theta_deg: Option<f64>,
    #[serde(default)]
    pub phi_deg: Option<f64>,
    /// Region for random directions; defaults to the search field of view.
    #[serde(default)]
    pub truth_region: Option<Fov>,
    #[serde(default = "one")]
    pub num_signals: usize,
    /// Inclination offset of the second signal.
    #[serde(default = "default_separation")]
    pub separation_deg: f64,
    /// Power of the second signal relative to the first.
    #[serde(default)]
    pub second_power_db: f64,
    /// Polarization auxiliary angle range; co-polarized signals if absent.
    #[serde(default)]
    pub gamma_deg: Option<[f64; 2]>,
    #[serde(default = "default_beta_range")]
    pub beta_deg: [f64; 2],
    #[serde(default)]
    pub waveform: Waveform,
}

fn default_snr() -> f64 {
    20.0
}

fn one() -> usize {
    1
}

fn default_separation() -> f64 {
    40.0
}

fn default_beta_range() -> [f64; 2] {
    [-180.0, 180.0]
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            snr_db: default_snr(),
            theta_deg: None,
            phi_deg: None,
            truth_region: None,
            num_signals: 1,
            separation_deg: default_separation(),
            second_power_db: 0.0,
            gamma_deg: None,
            beta_deg: default_beta_range(),
            waveform: Waveform::UnitModulus,
        }
    }
}

/// Grid search and refinement settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpec {
    #[serde(default = "default_step")]
    pub grid_step_deg: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_sweeps")]
    pub sweeps: usize,
    #[serde(default)]
    pub brute_force: bool,
    /// Refinement starts for single-signal searches.
    #[serde(default = "default_starts")]
    pub starts: usize,
}

fn default_starts() -> usize {
    3
}

fn default_step() -> f64 {
    1.0
}

fn default_tol() -> f64 {
    1e-6
}

fn default_max_iter() -> usize {
    500
}

fn default_sweeps() -> usize {
    3
}

impl Default for SearchSpec {
    fn default() -> Self {
        Self {
            grid_step_deg: default_step(),
            tol: default_tol(),
            max_iter: default_max_iter(),
            sweeps: default_sweeps(),
            brute_force: false,
            starts: default_starts(),
        }
    }
}

impl SearchSpec {
    pub fn options(&self, fov: Fov) -> OptimizerOptions {
        OptimizerOptions {
            grid_step_deg: self.grid_step_deg,
            tol: self.tol,
            max_iter: self.max_iter,
            fov,
            sweeps: self.sweeps,
            brute_force: self.brute_force,
            starts: self.starts,
        }
    }
}

/// Cells of an RMSE surface, degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSpec {
    pub theta: AxisLayoutRange,
    pub phi: AxisLayoutRange,
}

/// Inclusive `start..=stop` in steps of `step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisLayoutRange {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl AxisLayoutRange {
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.start + i as f64 * self.step).collect()
    }
}

/// A Monte-Carlo campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub antenna: AntennaSource,
    pub models: Vec<ModelSpec>,
    pub estimators: Vec<EstimatorKind>,
    #[serde(default)]
    pub axis: Option<AxisSpec>,
    #[serde(default)]
    pub scenario: ScenarioSpec,
    pub trials: usize,
    pub snapshots: usize,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub fov: Fov,
    /// Search only the half of a planar field of view (split at 0) that
    /// contains the first signal.
    #[serde(default)]
    pub split_fov: bool,
    #[serde(default)]
    pub search: SearchSpec,
    /// Errors above this (degrees) count as ambiguities.
    #[serde(default = "default_ambiguity")]
    pub ambiguity_deg: f64,
    pub seed: u64,
    #[serde(default)]
    pub surface: Option<SurfaceSpec>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[serde(default)]
    pub threads: Option<usize>,
}

fn default_ambiguity() -> f64 {
    10.0
}

impl SweepConfig {
    /// Planar campaign with the defaults of the reference experiments:
    /// 1000 snapshots, 1000 trials, thermal noise at 290 K over 1 MHz,
    /// field of view `[-85, 85]` degrees, WM and C-ML.
    pub fn planar_default() -> Self {
        Self {
            antenna: AntennaSource::Synth(SynthParams::new(1, 4, 4, SynthMode::XzCut2d, 1.0)),
            models: vec![ModelSpec::Wm {
                name: "wm".into(),
                basis: None,
                size: None,
            }],
            estimators: vec![EstimatorKind::CMl],
            axis: Some(AxisSpec {
                kind: AxisKind::Snr,
                start: 0.0,
                stop: 30.0,
                step: 5.0,
            }),
            scenario: ScenarioSpec::default(),
            trials: 1000,
            snapshots: 1000,
            noise: NoiseSpec::default(),
            fov: Fov::planar(-85.0, 85.0),
            split_fov: false,
            search: SearchSpec::default(),
            ambiguity_deg: default_ambiguity(),
            seed: 1,
            surface: None,
            output: None,
            threads: None,
        }
    }

    /// [`Self::planar_default`] with 100 trials per point.
    pub fn desk() -> Self {
        Self {
            trials: 100,
            ..Self::planar_default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.trials == 0 {
            return cfg("trials must be at least 1".into());
        }
        if self.snapshots == 0 {
            return cfg("snapshots must be at least 1".into());
        }
        if self.models.is_empty() || self.estimators.is_empty() {
            return cfg("need at least one model and one estimator".into());
        }
        let mut names: Vec<&str> = self.models.iter().map(|m| m.name()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return cfg("model names must be unique".into());
        }
        self.fov.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.search
            .options(self.fov)
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        let noise = self.noise.power();
        if !(noise >= 0.0) || !noise.is_finite() {
            return cfg(format!("noise power must be finite and non-negative, got {noise}"));
        }
        if let Some(axis) = &self.axis {
            axis.validate()?;
            if axis.kind == AxisKind::Separation && self.scenario.num_signals < 2 {
                return cfg("a separation axis needs two signals".into());
            }
        }
        let p = self.scenario.num_signals;
        if p == 0 || p > 3 {
            return cfg(format!("1 to 3 signals supported, got {p}"));
        }
        if p > 1 && self.estimators.iter().any(|e| e.is_noncoherent()) {
            return cfg("non-coherent estimators handle a single signal only".into());
        }
        if self.split_fov && !self.fov.planar {
            return cfg("split_fov applies to planar fields of view only".into());
        }
        if let Some([lo, hi]) = self.scenario.gamma_deg {
            if !(0.0..=90.0).contains(&lo) || !(lo..=90.0).contains(&hi) {
                return cfg(format!("invalid gamma range [{lo}, {hi}]"));
            }
        }
        if self.estimators.contains(&EstimatorKind::PMl) && self.scenario.gamma_deg.is_none() {
            return cfg("p-ml needs a gamma range in the scenario".into());
        }
        if let AntennaSource::Synth(s) = &self.antenna {
            let planar_antenna = s.mode == SynthMode::XzCut2d;
            if planar_antenna != self.fov.planar {
                return cfg("field of view and antenna dimensionality differ".into());
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the configuration, ignoring output path and thread count.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        c.threads = None;
        let text = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }

    /// Applies `key=value` overrides with dotted keys (`scenario.snr_db=10`).
    /// Values parse as JSON when possible and as strings otherwise.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut value = serde_json::to_value(self).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut value, o.as_ref())?;
        }
        serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Sets one dotted-path override inside a JSON value.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let spec = spec.trim_start_matches("--");
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not key=value")))?;
    let parsed: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), parsed);
                    return Ok(());
                }
                map.entry(part.to_string())
                    .and_modify(|v| {
                        if v.is_null() {
                            *v = Value::Object(Default::default());
                        }
                    })
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| Error::Config(format!("`{part}` in `{key}` is not an index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| Error::Config(format!("index {idx} out of range ({len}) in `{key}`")))?;
                if last {
                    *slot = parsed;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::Config(format!("cannot descend into `{part}` of `{key}`"))),
        };
    }
    Ok(())
}

/// AIT theta axis for a field of view.
pub(crate) fn ait_theta_axis(planar: bool, width_deg: f64, overlap_deg: f64) -> AxisLayout {
    if planar {
        AxisLayout::new(-90.0, 90.0, width_deg, overlap_deg)
    } else {
        AxisLayout::new(0.0, 180.0, width_deg, overlap_deg)
    }
}
