//! Visibility sweeps over isotropic states, written as plot-ready CSV.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{config_err, run_quantify, ExperimentConfig, ExperimentError, StateSpec};
use crate::pipeline::PipelineError;

pub const SWEEP_CSV_HEADER: [&str; 5] = ["p", "q_value", "q_std", "verdict_dim", "status"];

/// A grid over the isotropic visibility `p`. Each point runs `base` with
/// `state = isotropic(p)`, after merging the matching entry of `overrides`
/// (a partial config object) when given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_parameter")]
    pub parameter: String,
    pub grid: Vec<f64>,
    #[serde(default)]
    pub base: ExperimentConfig,
    #[serde(default)]
    pub overrides: Vec<Value>,
}

fn default_parameter() -> String {
    "p".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p: f64,
    pub q_value: Option<f64>,
    pub q_std: Option<f64>,
    pub verdict_dim: Option<usize>,
    /// `ok`, `infeasible_data`, `solver_failure` or `error`.
    pub status: String,
}

impl SweepSpec {
    /// The resolved config of every grid point.
    pub fn point_configs(&self) -> Result<Vec<ExperimentConfig>, ExperimentError> {
        if self.parameter != "p" {
            return config_err(format!("only the parameter \"p\" can be swept, not {:?}", self.parameter));
        }
        if let Some(w) = self.grid.windows(2).find(|w| w[1] <= w[0]) {
            return config_err(format!("grid must be strictly increasing ({} then {})", w[0], w[1]));
        }
        if let Some(p) = self.grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return config_err(format!("grid value {p} outside [0, 1]"));
        }
        if !self.overrides.is_empty() && self.overrides.len() != self.grid.len() {
            return config_err(format!(
                "{} overrides for {} grid points",
                self.overrides.len(),
                self.grid.len()
            ));
        }
        let base = serde_json::to_value(&self.base).expect("config serializes");
        self.grid
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let mut merged = base.clone();
                if let Some(o) = self.overrides.get(i) {
                    let Value::Object(fields) = o else {
                        return config_err(format!("override {i} is not an object"));
                    };
                    let target = merged.as_object_mut().expect("config is an object");
                    for (k, v) in fields {
                        target.insert(k.clone(), v.clone());
                    }
                }
                let mut config: ExperimentConfig = serde_json::from_value(merged)
                    .map_err(|e| ExperimentError::Config(format!("override {i}: {e}")))?;
                config.state = StateSpec::Isotropic { p };
                Ok(config)
            })
            .collect()
    }
}

fn status_of(e: &ExperimentError) -> &'static str {
    match e {
        ExperimentError::Pipeline(PipelineError::InfeasibleData) => "infeasible_data",
        ExperimentError::Pipeline(
            PipelineError::Solver(_) | PipelineError::SolverStatus(_) | PipelineError::DualityGap { .. },
        ) => "solver_failure",
        _ => "error",
    }
}

/// Runs every grid point, at most `parallel` at a time (all cores when
/// `None`). Rows come back in grid order; a failing point is recorded in
/// its status and the sweep continues. Configuration errors, including
/// unreadable files, abort before any point is solved.
pub fn run_sweep(
    spec: &SweepSpec,
    base: &Path,
    parallel: Option<usize>,
) -> Result<Vec<SweepRow>, ExperimentError> {
    let configs = spec.point_configs()?;
    for c in &configs {
        c.resolve(base)?;
    }
    let run = || -> Vec<SweepRow> {
        configs
            .par_iter()
            .zip(&spec.grid)
            .map(|(c, &p)| match run_quantify(c, base) {
                Ok(r) => SweepRow {
                    p,
                    q_value: Some(r.q_value),
                    q_std: r.q_std,
                    verdict_dim: Some(r.verdict.certified_irreducible_dim),
                    status: "ok".into(),
                },
                Err(e) => SweepRow {
                    p,
                    q_value: None,
                    q_std: None,
                    verdict_dim: None,
                    status: status_of(&e).into(),
                },
            })
            .collect()
    };
    match parallel {
        None => Ok(run()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| ExperimentError::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(run))
        }
    }
}

fn fixed(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.9}"))
}

/// Writes the rows under [`SWEEP_CSV_HEADER`]. Values are printed with nine
/// decimals, so equal runs give identical bytes.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_CSV_HEADER)?;
    for r in rows {
        w.write_record([
            format!("{}", r.p),
            fixed(r.q_value),
            fixed(r.q_std),
            r.verdict_dim.map_or_else(String::new, |d| d.to_string()),
            r.status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
