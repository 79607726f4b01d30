//! Batch runs of the sequential-adversary checks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{config_err, sha256_json, ExperimentError, Provenance};
use crate::adversary::{
    attack_strategy, cglmp_attack_with, check_theorem1, random_strategy, simulate_sequential_mdi,
    split_input_strategy, AttackConfig, AttackParameters, SequentialStrategy, Theorem1Report,
};
use crate::pipeline::quantify;
use crate::qstate::tomographically_complete_set;
use crate::random::{derive_seed, rng_from_seed};

/// Slack allowed on the dimension bound `q ≤ m − 1`.
pub const THEOREM2_TOL: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryMode {
    /// Per-operator robustness of the composed measurements.
    Theorem1,
    /// The pipeline value on tomographically complete inputs.
    Theorem2,
    CglmpAttack,
}

/// Which strategies a bound check draws.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ensemble {
    /// Haar-rotated Bell-type steps with feedforward (see `random_strategy`).
    #[default]
    Random,
    /// Input-controlled product measurements, as in the CGLMP attack.
    Product,
    /// The fixed strategy that reads a ququart input as two qubits.
    SplitInput,
}

fn default_trials() -> usize {
    25
}

fn default_input_dim() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversaryConfig {
    pub mode: AdversaryMode,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ensemble: Ensemble,
    /// Input dimension of random and product strategies.
    #[serde(default = "default_input_dim")]
    pub input_dim: usize,
    #[serde(default)]
    pub attack: AttackConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    pub seed: u64,
    /// `m − 1` for the dimension check, else the smallest per-operator bound.
    pub bound: f64,
    /// Smallest `bound − value` over the trial.
    pub min_slack: f64,
    pub violations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theorem1: Option<Theorem1Report>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub score: f64,
    pub local_bound: f64,
    pub violation: bool,
    pub evaluations: usize,
    /// Pipeline value of the same strategy on complete quantum inputs.
    pub mdi_q_value: f64,
    /// `m − 1` for the attack's qubit pairs.
    pub mdi_bound: f64,
    pub parameters: AttackParameters,
    pub strategy: SequentialStrategy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversaryReport {
    pub provenance: Provenance,
    pub config: AdversaryConfig,
    pub mode: AdversaryMode,
    pub trials: Vec<TrialReport>,
    /// Total bound violations; nonzero fails the run.
    pub violations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackSummary>,
}

fn draw(config: &AdversaryConfig, seed: u64) -> SequentialStrategy {
    let mut rng = rng_from_seed(seed);
    match config.ensemble {
        Ensemble::Random => random_strategy(config.input_dim, &mut rng),
        Ensemble::Product => attack_strategy(&AttackParameters::random(2, &mut rng), config.input_dim),
        Ensemble::SplitInput => split_input_strategy(),
    }
}

fn theorem2_trial(trial: usize, seed: u64, s: &SequentialStrategy) -> Result<TrialReport, ExperimentError> {
    let set = tomographically_complete_set(s.input_dim_x)?;
    let table = simulate_sequential_mdi(s, &set, &set)?;
    let q = quantify(&table)?.q_value;
    let bound = s.max_local_dim() as f64 - 1.0;
    Ok(TrialReport {
        trial,
        seed,
        bound,
        min_slack: bound - q,
        violations: usize::from(q > bound + THEOREM2_TOL),
        q_value: Some(q),
        theorem1: None,
    })
}

fn theorem1_trial(trial: usize, seed: u64, s: &SequentialStrategy) -> Result<TrialReport, ExperimentError> {
    let r = check_theorem1(s)?;
    let all = || r.alice.iter().chain(&r.bob);
    Ok(TrialReport {
        trial,
        seed,
        bound: all().map(|b| b.bound).fold(f64::INFINITY, f64::min),
        min_slack: all().map(|b| b.slack).fold(f64::INFINITY, f64::min),
        violations: r.violations,
        q_value: None,
        theorem1: Some(r),
    })
}

/// Trial `i` draws its strategy from `derive_seed(seed, "trial-{i}")`; the
/// attack searches from `derive_seed(seed, "attack")`.
pub fn run_adversary(config: &AdversaryConfig) -> Result<AdversaryReport, ExperimentError> {
    if config.input_dim < 2 {
        return config_err("input_dim must be at least 2");
    }
    let provenance = Provenance::new(sha256_json(config), config.seed);
    if config.mode == AdversaryMode::CglmpAttack {
        let attack = cglmp_attack_with(&config.attack, derive_seed(config.seed, "attack"))?;
        let set = tomographically_complete_set(config.attack.input_dim)?;
        let table = simulate_sequential_mdi(&attack.strategy, &set, &set)?;
        let q = quantify(&table)?.q_value;
        return Ok(AdversaryReport {
            provenance,
            config: config.clone(),
            mode: config.mode,
            trials: Vec::new(),
            violations: 0,
            attack: Some(AttackSummary {
                score: attack.score,
                local_bound: 2.0,
                violation: attack.violation,
                evaluations: attack.evaluations,
                mdi_q_value: q,
                mdi_bound: attack.strategy.max_local_dim() as f64 - 1.0,
                parameters: attack.parameters,
                strategy: attack.strategy,
            }),
        });
    }
    let trials: Vec<TrialReport> = (0..config.trials)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(config.seed, &format!("trial-{i}"));
            let s = draw(config, seed);
            match config.mode {
                AdversaryMode::Theorem1 => theorem1_trial(i, seed, &s),
                _ => theorem2_trial(i, seed, &s),
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(AdversaryReport {
        provenance,
        config: config.clone(),
        mode: config.mode,
        violations: trials.iter().map(|t| t.violations).sum(),
        trials,
        attack: None,
    })
}
