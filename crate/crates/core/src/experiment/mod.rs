//! Experiment configuration, file formats and report generation.
//!
//! A run is described by a JSON [`ExperimentConfig`]. Every file it names is
//! read and validated by [`ExperimentConfig::resolve`] before any solver
//! starts. Relative paths are taken from the directory of the config file.
//! Reports embed the resolved config, its SHA-256 and the seed, so a report
//! is enough to replay its run.

mod adversary_run;
mod sweep;

pub use adversary_run::{
    run_adversary, AdversaryConfig, AdversaryMode, AdversaryReport, AttackSummary, Ensemble,
    TrialReport, THEOREM2_TOL,
};
pub use sweep::{run_sweep, write_sweep_csv, SweepRow, SweepSpec, SWEEP_CSV_HEADER};

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::adversary::AdversaryError;
use crate::conic::{SolverSettings, DEFAULT_TOL};
use crate::corrsim::{
    apply_detection, ideal_correlations, sample_counts, CorrError, CorrelationTable,
    DetectionModel, Povm,
};
use crate::pipeline::{
    extract_witness, monte_carlo_uncertainty_with, quantify_using, regularize_with, verdict,
    DimensionVerdict, Distance, MonteCarloSummary, PipelineError, QuantifyMethod, SolveSummary,
    WitnessReport, DEFAULT_SIGMA_K,
};
use crate::qstate::{
    input_set_s, isotropic_state, tomographically_complete_set, DensityOperator,
    HermitianOperator, InputStateSet, StateError,
};
use crate::random::{derive_seed, RNG_ALGORITHM};

/// Crate version recorded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Table(#[from] CorrError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
}

impl ExperimentError {
    /// Process exit code: 2 when the data admit no POVM, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Pipeline(PipelineError::InfeasibleData) => 2,
            _ => 1,
        }
    }
}

fn config_err<T>(msg: impl Into<String>) -> Result<T, ExperimentError> {
    Err(ExperimentError::Config(msg.into()))
}

/// Reads and parses a JSON file.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ExperimentError> {
    let text = fs::read_to_string(path).map_err(|e| ExperimentError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| ExperimentError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Shared state `ρ_AB`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSpec {
    #[default]
    MaxEntangled,
    /// `p|φ_d⟩⟨φ_d| + (1−p) I/d²`.
    Isotropic { p: f64 },
    /// The isotropic state whose fidelity with `|φ_d⟩` is `fidelity`.
    IsotropicFidelity { fidelity: f64 },
    /// A density operator in the file format of [`DensityOperator`].
    File { path: PathBuf },
}

/// Trusted input states, the same on both sides.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSpec {
    /// The six-state qutrit set (`d = 3` only).
    SetS,
    #[default]
    Complete,
    /// `{"label": …, "states": [density operators]}`.
    File { path: PathBuf },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasurementSpec {
    /// Complete Bell-state measurement on `X ⊗ A` and on `B ⊗ Y`.
    #[default]
    FullBsm,
    /// `{"alice": [effects], "bob": [effects]}`.
    File { path: PathBuf },
}

#[derive(Clone, Debug, Deserialize)]
struct MeasurementFile {
    alice: Vec<HermitianOperator>,
    bob: Vec<HermitianOperator>,
}

/// Shots per input setting, or exact probabilities.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Shots {
    #[default]
    Ideal,
    PerSetting(u64),
}

impl Serialize for Shots {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Shots::Ideal => s.serialize_str("ideal"),
            Shots::PerSetting(n) => s.serialize_u64(*n),
        }
    }
}

impl<'de> Deserialize<'de> for Shots {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(u64),
            Label(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(0) => Err(serde::de::Error::custom("shots must be positive")),
            Raw::Count(n) => Ok(Shots::PerSetting(n)),
            Raw::Label(l) if l == "ideal" => Ok(Shots::Ideal),
            Raw::Label(l) => Err(serde::de::Error::custom(format!(
                "shots must be a positive integer or \"ideal\", not {l:?}"
            ))),
        }
    }
}

impl fmt::Display for Shots {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shots::Ideal => f.write_str("ideal"),
            Shots::PerSetting(n) => write!(f, "{n}"),
        }
    }
}

fn default_dimension() -> usize {
    3
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_sigma_k() -> f64 {
    DEFAULT_SIGMA_K
}

/// One simulated (or recorded) experiment and how to analyze it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Local dimension `d` of the shared state and of each input system.
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    #[serde(default)]
    pub state: StateSpec,
    #[serde(default)]
    pub inputs: InputSpec,
    #[serde(default)]
    pub measurement: MeasurementSpec,
    #[serde(default)]
    pub shots: Shots,
    #[serde(default)]
    pub seed: u64,
    /// Interior-point tolerance. Slightly stalled solves are accepted at 100× this.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Standard deviations the value must clear a bound by.
    #[serde(default = "default_sigma_k")]
    pub sigma_k: f64,
    /// Parametric-bootstrap resamples for `q_std`; needs finite shots.
    #[serde(default)]
    pub resamples: usize,
    #[serde(default)]
    pub witness: bool,
    #[serde(default)]
    pub distance: Distance,
    #[serde(default)]
    pub method: QuantifyMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection: Option<DetectionModel>,
    /// Recorded table to analyze instead of simulating one. The state,
    /// inputs, measurement and detection fields are then unused.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

/// Where the analyzed table comes from, with every file loaded.
#[derive(Clone, Debug)]
pub enum ResolvedSource {
    Simulated {
        rho: DensityOperator,
        inputs: InputStateSet,
        povm_a: Povm,
        povm_b: Povm,
    },
    Recorded(CorrelationTable),
}

impl ExperimentConfig {
    /// Loads a config and the directory its relative paths refer to.
    pub fn load(path: &Path) -> Result<(Self, PathBuf), ExperimentError> {
        let config = read_json(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((config, base))
    }

    pub fn settings(&self) -> SolverSettings {
        SolverSettings {
            accept_tol: Some(100.0 * self.tol),
            ..SolverSettings::with_tol(self.tol)
        }
    }

    /// SHA-256 of the compact JSON serialization, hex encoded.
    pub fn sha256(&self) -> String {
        sha256_json(self)
    }

    /// Checks the scalar fields and reads every referenced file.
    pub fn resolve(&self, base: &Path) -> Result<ResolvedSource, ExperimentError> {
        if !(self.tol > 0.0 && self.tol < 1e-2) {
            return config_err(format!("tol must lie in (0, 1e-2), got {}", self.tol));
        }
        if !(self.sigma_k >= 0.0) {
            return config_err(format!("sigma_k must be non-negative, got {}", self.sigma_k));
        }
        if let Some(path) = &self.table {
            let table: CorrelationTable = read_json(&base.join(path))?;
            return Ok(ResolvedSource::Recorded(table));
        }
        let d = self.dimension;
        if d < 2 {
            return config_err(format!("dimension must be at least 2, got {d}"));
        }
        let rho = match &self.state {
            StateSpec::MaxEntangled => isotropic_state(d, 1.0)?,
            StateSpec::Isotropic { p } => isotropic_state(d, *p)?,
            StateSpec::IsotropicFidelity { fidelity } => {
                let floor = 1.0 / (d * d) as f64;
                if !(floor..=1.0).contains(fidelity) {
                    return config_err(format!(
                        "fidelity {fidelity} outside [1/d², 1] for d = {d}"
                    ));
                }
                isotropic_state(d, (fidelity - floor) / (1.0 - floor))?
            }
            StateSpec::File { path } => read_json(&base.join(path))?,
        };
        let inputs = match &self.inputs {
            InputSpec::SetS if d != 3 => return config_err("input set S is defined for d = 3"),
            InputSpec::SetS => input_set_s(),
            InputSpec::Complete => tomographically_complete_set(d)?,
            InputSpec::File { path } => read_json(&base.join(path))?,
        };
        let (povm_a, povm_b) = match &self.measurement {
            MeasurementSpec::FullBsm => {
                let bsm = Povm::bell_state_measurement(d)?;
                (bsm.clone(), bsm)
            }
            MeasurementSpec::File { path } => {
                let m: MeasurementFile = read_json(&base.join(path))?;
                (Povm::unlabeled(m.alice)?, Povm::unlabeled(m.bob)?)
            }
        };
        // dimension checks happen here, before anything is solved
        let dims = rho.subsystem_dims();
        if dims.len() != 2
            || povm_a.dim() != inputs.dim() * dims[0]
            || povm_b.dim() != dims[1] * inputs.dim()
        {
            return config_err(format!(
                "measurements on dims ({}, {}) do not fit inputs of dim {} and a state on {dims:?}",
                povm_a.dim(),
                povm_b.dim(),
                inputs.dim()
            ));
        }
        Ok(ResolvedSource::Simulated {
            rho,
            inputs,
            povm_a,
            povm_b,
        })
    }
}

pub(crate) fn sha256_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// What produced a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub rng: String,
}

impl Provenance {
    pub(crate) fn new(config_sha256: String, seed: u64) -> Self {
        Self {
            tool: "mdiw".into(),
            version: VERSION.into(),
            config_sha256,
            seed,
            rng: RNG_ALGORITHM.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizationSummary {
    pub distance: Distance,
    pub l2_residual: f64,
    pub solver: SolveSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantifyReport {
    pub provenance: Provenance,
    pub config: ExperimentConfig,
    pub q_value: f64,
    pub q_std: Option<f64>,
    pub verdict: DimensionVerdict,
    pub inputs_complete: bool,
    pub method: QuantifyMethod,
    pub solver: SolveSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regularization: Option<RegularizationSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<MonteCarloSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<WitnessReport>,
    pub notes: Vec<String>,
}

/// Simulates (or loads) the table, regularizes finite-shot data, quantifies,
/// and issues the dimension verdict.
///
/// Sampling uses the subseed `derive_seed(seed, "shots")` and the bootstrap
/// `derive_seed(seed, "resamples")`.
pub fn run_quantify(
    config: &ExperimentConfig,
    base: &Path,
) -> Result<QuantifyReport, ExperimentError> {
    let source = config.resolve(base)?;
    let settings = config.settings();
    let mut notes = Vec::new();

    let raw = match source {
        ResolvedSource::Simulated {
            rho,
            inputs,
            povm_a,
            povm_b,
        } => {
            let mut ideal = ideal_correlations(&rho, &inputs, &inputs, &povm_a, &povm_b)?;
            if let Some(model) = config.detection {
                ideal = apply_detection(&ideal, model)?;
            }
            match config.shots {
                Shots::Ideal => ideal,
                Shots::PerSetting(n) => sample_counts(&ideal, n, derive_seed(config.seed, "shots"))?,
            }
        }
        ResolvedSource::Recorded(t) => t,
    };

    let (table, regularization) = if raw.counts().is_some() {
        let r = regularize_with(&raw, config.distance, &settings)?;
        let summary = RegularizationSummary {
            distance: r.distance,
            l2_residual: r.l2_residual,
            solver: r.solver,
        };
        (r.table, Some(summary))
    } else {
        (raw.clone(), None)
    };

    let result = quantify_using(&table, &settings, config.method)?;
    if !result.inputs_complete {
        notes.push(
            "input sets are not tomographically complete: the value is a valid lower bound, \
             but the dimension guarantee is proven only for complete inputs"
                .into(),
        );
    }

    let monte_carlo = match (config.resamples, raw.counts().is_some()) {
        (0, _) => None,
        (_, false) => {
            notes.push("resamples ignored: the table has no shot counts".into());
            None
        }
        (n, true) => Some(monte_carlo_uncertainty_with(
            &raw,
            n,
            derive_seed(config.seed, "resamples"),
            config.distance,
            &settings,
        )?),
    };
    let q_std = monte_carlo.as_ref().map(|m| m.q_std);
    let verdict = verdict(result.q_value, q_std, config.sigma_k)?;
    let witness = if config.witness {
        Some(extract_witness(&result, &table)?)
    } else {
        None
    };

    Ok(QuantifyReport {
        provenance: Provenance::new(config.sha256(), config.seed),
        config: config.clone(),
        q_value: result.q_value,
        q_std,
        verdict,
        inputs_complete: result.inputs_complete,
        method: result.method,
        solver: result.solver,
        regularization,
        monte_carlo,
        witness,
        notes,
    })
}
