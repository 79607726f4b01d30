//! Projection of raw frequencies onto the tables some POVM can produce.

use serde::{Deserialize, Serialize};

use super::inversion::consistent_reconstruction;
use super::{add_povm_blocks, inputs_complete, product_inputs, PipelineError, SolveSummary};
use crate::conic::{solve_with, ConicProgram, LinearFunctional, SolveStatus, SolverSettings};
use crate::corrsim::{correlations_from_effective, CorrelationTable, TableKind};
use crate::qstate::HermitianOperator;

/// Distance minimized between raw and regularized tables.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    /// Sum of squared differences.
    #[default]
    L2,
    /// Sum of absolute differences.
    L1,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Regularization {
    pub table: CorrelationTable,
    pub distance: Distance,
    /// `‖p_r − p_raw‖₂` of the returned table.
    pub l2_residual: f64,
    /// POVM realizing the returned table, outcome-major.
    pub operators: Vec<HermitianOperator>,
    pub solver: SolveSummary,
}

/// Closest POVM-consistent table to `raw` in squared L2 distance.
pub fn regularize(raw: &CorrelationTable) -> Result<CorrelationTable, PipelineError> {
    regularize_with(raw, Distance::L2, &super::default_settings()).map(|r| r.table)
}

/// Minimizes the chosen distance between `raw` and `Tr[Π_ab(τ_x⊗τ_y)]` over
/// POVMs `{Π_ab}` on `X ⊗ Y`.
///
/// The solver's POVM is cleaned before use: negative eigenvalues are clipped
/// and the family is rescaled by `S^{-1/2}(·)S^{-1/2}` with `S = Σ Π_ab`, so
/// the returned table is consistent to round-off rather than solver
/// tolerance. A table that is already consistent is returned unchanged
/// (up to per-setting normalization): exactly checked by linear inversion
/// when both input sets are complete, otherwise when the solver finds a POVM
/// matching every entry to within the acceptance tolerance.
pub fn regularize_with(
    raw: &CorrelationTable,
    distance: Distance,
    settings: &SolverSettings,
) -> Result<Regularization, PipelineError> {
    if inputs_complete(raw) {
        if let Some(operators) = consistent_reconstruction(raw) {
            return unchanged(raw, distance, operators, SolveSummary::trivial(settings));
        }
    }
    let dim = raw.inputs_x().dim() * raw.inputs_y().dim();
    let n_ab = raw.n_a() * raw.n_b();
    let mut p = ConicProgram::new();
    let mut residuals = Vec::with_capacity(raw.probs().len());
    let (pis, _) = add_povm_blocks(&mut p, n_ab, dim);
    let inputs = product_inputs(raw);
    let mut objective = LinearFunctional::new();
    for x in 0..raw.n_x() {
        for y in 0..raw.n_y() {
            let tau = &inputs[x * raw.n_y() + y];
            for (k, &pi) in pis.iter().enumerate() {
                let (a, b) = (k / raw.n_b(), k % raw.n_b());
                let target = raw.get(a, b, x, y);
                // Tr[Π τ] − r = p_raw
                let r = p.add_scalar(format!("r_{a}_{b}_{x}_{y}"));
                residuals.push(r);
                p.add_equality(
                    LinearFunctional::new()
                        .trace_with(pi, tau.clone())
                        .scalar(r, -1.0),
                    target,
                );
                if distance == Distance::L1 {
                    let t = p.add_scalar(format!("t_{a}_{b}_{x}_{y}"));
                    p.add_nonneg(LinearFunctional::new().scalar(t, 1.0).scalar(r, -1.0), 0.0);
                    p.add_nonneg(LinearFunctional::new().scalar(t, 1.0).scalar(r, 1.0), 0.0);
                    objective = objective.scalar(t, 1.0);
                }
            }
        }
    }
    if distance == Distance::L2 {
        // the norm itself rather than its square, so the residuals are
        // resolved to the solver tolerance and not its square root
        let t = p.add_scalar("norm");
        p.add_soc(t, &residuals);
        objective = objective.scalar(t, 1.0);
    }
    p.set_objective(objective, 0.0);
    let r = solve_with(&p, settings)?;
    if !matches!(r.status, SolveStatus::Optimal | SolveStatus::Inaccurate) {
        return Err(PipelineError::SolverStatus(r.status));
    }
    let operators = clean_povm(&r.block_values[..n_ab]);
    let worst = residuals
        .iter()
        .map(|id| r.scalar_values[id.0].abs())
        .fold(0.0, f64::max);
    if worst <= settings.accept_tol() {
        return unchanged(raw, distance, operators, SolveSummary::from_result(&r));
    }
    let table = correlations_from_effective(
        &operators,
        raw.n_a(),
        raw.n_b(),
        raw.inputs_x(),
        raw.inputs_y(),
        TableKind::Normalized,
    )?;
    let table = renormalize(table)?;
    let l2_residual = table
        .probs()
        .iter()
        .zip(raw.probs())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(Regularization {
        table,
        distance,
        l2_residual,
        operators,
        solver: SolveSummary::from_result(&r),
    })
}

fn unchanged(
    raw: &CorrelationTable,
    distance: Distance,
    operators: Vec<HermitianOperator>,
    solver: SolveSummary,
) -> Result<Regularization, PipelineError> {
    let table = renormalize(raw.clone())?;
    let l2_residual = table
        .probs()
        .iter()
        .zip(raw.probs())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(Regularization {
        table,
        distance,
        l2_residual,
        operators,
        solver,
    })
}

fn clean_povm(ops: &[HermitianOperator]) -> Vec<HermitianOperator> {
    let clipped: Vec<HermitianOperator> =
        ops.iter().map(|o| o.spectral_map(|v| v.max(0.0))).collect();
    let dim = clipped[0].dim();
    let sum = clipped
        .iter()
        .fold(HermitianOperator::zeros(dim), |acc, o| acc.add(o));
    let inv_root = sum.spectral_map(|v| if v > 0.0 { 1.0 / v.sqrt() } else { 0.0 });
    clipped
        .iter()
        .map(|o| o.conjugate_by(inv_root.matrix()))
        .collect()
}

/// Divides each setting by its sum to remove round-off drift.
fn renormalize(table: CorrelationTable) -> Result<CorrelationTable, PipelineError> {
    let n_ab = table.n_a() * table.n_b();
    let mut probs = table.probs().to_vec();
    for chunk in probs.chunks_mut(n_ab) {
        let s: f64 = chunk.iter().sum();
        for v in chunk.iter_mut() {
            *v = (*v / s).max(0.0);
        }
    }
    Ok(table.with_probs(probs, TableKind::Normalized)?)
}
