//! Run configuration: one JSON file drives every subcommand.

use std::fs;
use std::path::{Path, PathBuf};

use hyperdecay::evolve::{log_times, InitialDataSpec};
use hyperdecay::exponents::ExponentVectors;
use hyperdecay::spectral::{proven_type, FrequencyGrid};
use hyperdecay::sysmodel::{
    build_model_one, build_model_two, ModelParamsI, ModelParamsII, ModelTag, RelaxationSystem, SystemDoc,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelChoice {
    #[serde(rename = "model1")]
    ModelI,
    #[serde(rename = "model2")]
    ModelII,
    /// Matrices read from `system_file`.
    #[serde(rename = "custom-file", alias = "custom")]
    CustomFile,
}

/// Frequencies: either `{min, max, count}` (log-spaced) or `{points}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Log { min: f64, max: f64, count: usize },
    Explicit { points: Vec<f64> },
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Log { min: 1e-3, max: 1e3, count: 601 }
    }
}

impl GridSpec {
    pub fn build(&self) -> hyperdecay::error::Result<FrequencyGrid> {
        match self {
            GridSpec::Log { min, max, count } => FrequencyGrid::log(*min, *max, *count),
            GridSpec::Explicit { points } => FrequencyGrid::explicit(points.clone()),
        }
    }
}

/// Times: an explicit list or `{min, max, count}` log-spaced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeSpec {
    List(Vec<f64>),
    Log { min: f64, max: f64, count: usize },
}

impl TimeSpec {
    fn build(&self, what: &str) -> Result<Vec<f64>, CliError> {
        let times = match self {
            TimeSpec::List(v) => v.clone(),
            TimeSpec::Log { min, max, count } => {
                log_times(*min, *max, *count).map_err(|e| CliError::validation("config", format!("{what}: {e}")))?
            }
        };
        if times.is_empty() {
            return Err(CliError::validation("config", format!("{what} is empty")));
        }
        if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(CliError::validation("config", format!("{what} must be finite and nonnegative")));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::validation("config", format!("{what} must be strictly increasing")));
        }
        Ok(times)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumOptions {
    /// Upper edge of the low-frequency fit window.
    pub low_max: f64,
    /// Lower edge of the high-frequency fit window.
    pub high_min: f64,
    /// Type to verify; defaults to the proven type of the model.
    pub p: Option<i32>,
    pub q: Option<i32>,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions { low_max: 1e-2, high_min: 1e2, p: None, q: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayCase {
    pub k: i32,
    pub ell: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecayOptions {
    /// Initial data; unit Gaussian on the first component when absent.
    pub data: Option<InitialDataSpec>,
    pub cases: Vec<DecayCase>,
    pub times: TimeSpec,
    pub envelope_samples: usize,
    pub envelope_times: TimeSpec,
    /// Band radii `R` for e-folding times of data on `[R, 2R]`.
    pub efold_radii: Vec<f64>,
    pub efold_times: TimeSpec,
}

impl Default for DecayOptions {
    fn default() -> Self {
        DecayOptions {
            data: None,
            cases: vec![DecayCase { k: 0, ell: 0 }],
            times: TimeSpec::Log { min: 1.0, max: 1e6, count: 61 },
            envelope_samples: 4,
            envelope_times: TimeSpec::List(vec![1.0, 10.0, 100.0, 1e3, 1e4]),
            efold_radii: Vec::new(),
            efold_times: TimeSpec::Log { min: 1e-2, max: 1e8, count: 401 },
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExponentOptions {
    /// Exponents to check; the best choice of the model when absent.
    pub vectors: Option<ExponentVectors>,
    /// Also run the weighted-energy dissipation check.
    pub alt_check: bool,
}

fn default_gamma() -> f64 {
    1.0
}

fn default_seed() -> u64 {
    42
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// The raw configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelChoice,
    #[serde(default)]
    pub system_file: Option<PathBuf>,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Couplings; all ones when absent.
    #[serde(default)]
    pub a: Option<Vec<f64>>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub spectrum: SpectrumOptions,
    #[serde(default)]
    pub decay: DecayOptions,
    #[serde(default)]
    pub exponents: ExponentOptions,
}

/// A configuration that has passed validation, with the system built.
#[derive(Clone, Debug)]
pub struct Validated {
    pub config: RunConfig,
    pub system: RelaxationSystem,
    pub grid: FrequencyGrid,
    pub type_pq: (i32, i32),
    pub data: InitialDataSpec,
    pub times: Vec<f64>,
    pub envelope_times: Vec<f64>,
    pub efold_times: Vec<f64>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::validation("config", e.to_string()))
    }

    /// Read a configuration file. A relative `system_file` is taken relative
    /// to the configuration's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::validation("config", format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let (Some(f), Some(dir)) = (&cfg.system_file, path.parent()) {
            if f.is_relative() {
                cfg.system_file = Some(dir.join(f));
            }
        }
        Ok(cfg)
    }

    fn build_system(&self) -> Result<RelaxationSystem, CliError> {
        let core = |e| CliError::from_core("config", e);
        match self.model {
            ModelChoice::CustomFile => {
                let path = self
                    .system_file
                    .as_ref()
                    .ok_or_else(|| CliError::validation("config", "model custom-file needs system_file"))?;
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::validation("config", format!("cannot read {}: {e}", path.display())))?;
                let doc: SystemDoc = serde_json::from_str(&text)
                    .map_err(|e| CliError::validation("config", format!("{}: {e}", path.display())))?;
                if let Some(m) = self.m {
                    if m != doc.m {
                        return Err(CliError::validation("config", format!("m = {m} but the system file has m = {}", doc.m)));
                    }
                }
                RelaxationSystem::from_doc(&doc).map_err(core)
            }
            model => {
                let m = self.m.ok_or_else(|| CliError::validation("config", "m is required for the model families"))?;
                let a = self.a.clone().unwrap_or_else(|| vec![1.0; m.saturating_sub(3)]);
                match model {
                    ModelChoice::ModelI => build_model_one(&ModelParamsI { m, gamma: self.gamma, a }).map_err(core),
                    _ => build_model_two(&ModelParamsII { m, gamma: self.gamma, a }).map_err(core),
                }
            }
        }
    }

    /// Check everything that can be checked before any computation.
    pub fn validate(self) -> Result<Validated, CliError> {
        let system = self.build_system()?;
        let grid = self.grid.build().map_err(|e| CliError::from_core("config", e))?;
        let s = &self.spectrum;
        if !(s.low_max > 0.0 && s.high_min > s.low_max) {
            return Err(CliError::validation("config", "spectrum windows need 0 < low_max < high_min"));
        }
        let type_pq = match (s.p, s.q, proven_type(system.model, system.m)) {
            (Some(p), Some(q), _) => (p, q),
            (None, None, Some(pq)) => pq,
            (None, None, None) => return Err(CliError::validation("config", "custom systems need spectrum.p and spectrum.q")),
            _ => return Err(CliError::validation("config", "give both spectrum.p and spectrum.q or neither")),
        };
        let d = &self.decay;
        let data = d
            .data
            .clone()
            .unwrap_or_else(|| InitialDataSpec::gaussian(1.0, InitialDataSpec::unit(system.m, 1)));
        data.validate().map_err(|e| CliError::from_core("config", e))?;
        if data.amplitude.len() != system.m {
            return Err(CliError::validation(
                "config",
                format!("decay.data.amplitude has {} entries, expected {}", data.amplitude.len(), system.m),
            ));
        }
        if d.cases.is_empty() {
            return Err(CliError::validation("config", "decay.cases is empty"));
        }
        if d.cases.iter().any(|c| c.k < 0 || c.ell < 0) {
            return Err(CliError::validation("config", "decay cases need k ≥ 0 and ell ≥ 0"));
        }
        if d.envelope_samples == 0 {
            return Err(CliError::validation("config", "decay.envelope_samples must be positive"));
        }
        if d.efold_radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(CliError::validation("config", "decay.efold_radii must be positive"));
        }
        let times = d.times.build("decay.times")?;
        let envelope_times = d.envelope_times.build("decay.envelope_times")?;
        let efold_times = d.efold_times.build("decay.efold_times")?;
        if let Some(v) = &self.exponents.vectors {
            if v.model() != system.model || v.m() != system.m {
                return Err(CliError::validation(
                    "config",
                    format!("exponents.vectors are for {:?} m={}, the system is {:?} m={}", v.model(), v.m(), system.model, system.m),
                ));
            }
        }
        if system.model == ModelTag::Custom && self.m.is_none() && self.system_file.is_none() {
            return Err(CliError::validation("config", "custom-file needs system_file"));
        }
        Ok(Validated { config: self, system, grid, type_pq, data, times, envelope_times, efold_times })
    }
}
