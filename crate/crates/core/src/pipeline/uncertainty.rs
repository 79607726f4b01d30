//! Parametric bootstrap of the quantify value over shot noise.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{quantify_with, regularize_with, Distance, PipelineError};
use crate::conic::SolverSettings;
use crate::corrsim::{multinomial, CorrError, CorrelationTable};
use crate::random::{derive_seed, rng_from_seed};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub q_mean: f64,
    /// Sample standard deviation; 0 for a single resample.
    pub q_std: f64,
    pub resamples: usize,
    /// Set when the spread is undefined (one resample).
    pub degenerate: bool,
    pub q_values: Vec<f64>,
}

/// Mean and spread of `quantify(regularize(·))` over tables redrawn from the
/// observed frequencies with the observed shot counts.
///
/// Resample `r` draws setting `k` from the stream
/// `derive_seed(derive_seed(seed, "resample-{r}"), "setting-{k}")`, so the
/// summary depends only on the seed, not on scheduling.
pub fn monte_carlo_uncertainty(
    raw: &CorrelationTable,
    resamples: usize,
    rng_seed: u64,
) -> Result<MonteCarloSummary, PipelineError> {
    monte_carlo_uncertainty_with(
        raw,
        resamples,
        rng_seed,
        Distance::L2,
        &super::default_settings(),
    )
}

pub fn monte_carlo_uncertainty_with(
    raw: &CorrelationTable,
    resamples: usize,
    rng_seed: u64,
    distance: Distance,
    settings: &SolverSettings,
) -> Result<MonteCarloSummary, PipelineError> {
    if resamples == 0 {
        return Err(PipelineError::NoResamples);
    }
    let counts = raw.counts().ok_or(CorrError::MissingCounts)?;
    let n_ab = raw.n_a() * raw.n_b();
    let q_values: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(rng_seed, &format!("resample-{r}"));
            let mut drawn = Vec::with_capacity(counts.len());
            for (k, (freq, obs)) in raw
                .probs()
                .chunks(n_ab)
                .zip(counts.chunks(n_ab))
                .enumerate()
            {
                let shots: u64 = obs.iter().sum();
                let mut rng = rng_from_seed(derive_seed(seed, &format!("setting-{k}")));
                drawn.extend(multinomial(shots, freq, &mut rng));
            }
            let table = CorrelationTable::from_counts(
                raw.n_a(),
                raw.n_b(),
                raw.inputs_x().clone(),
                raw.inputs_y().clone(),
                drawn,
            )?;
            let reg = regularize_with(&table, distance, settings)?;
            Ok(quantify_with(&reg.table, settings)?.q_value)
        })
        .collect::<Result<_, PipelineError>>()?;
    let n = q_values.len() as f64;
    let q_mean = q_values.iter().sum::<f64>() / n;
    let q_std = if q_values.len() > 1 {
        (q_values.iter().map(|q| (q - q_mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(MonteCarloSummary {
        q_mean,
        q_std,
        resamples,
        degenerate: resamples == 1,
        q_values,
    })
}
