//! Entanglement quantification from correlation tables with trusted inputs.
//!
//! [`quantify`] searches over every family of operators `{Π_ab}` on `X ⊗ Y`
//! that forms a POVM and reproduces the observed table through
//! `p(a,b|x,y) = Tr[Π_ab (τ_x ⊗ τ_y)]`, and returns the smallest averaged
//! robustness `(1/d_x d_y) Σ_ab E(Π_ab)` (PPT relaxation). Because any
//! untrusted implementation induces such a family, the value lower-bounds
//! the robustness of the shared state. [`extract_witness`] turns the dual
//! solution into linear coefficients on the table, and [`verdict`] converts
//! the value into a certified irreducible dimension.

mod inversion;
mod regularize;
mod uncertainty;

pub use inversion::{CONSISTENCY_TOL, RECONSTRUCTION_PSD_TOL};
pub use regularize::{regularize, regularize_with, Distance, Regularization};
pub use uncertainty::{monte_carlo_uncertainty, monte_carlo_uncertainty_with, MonteCarloSummary};

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conic::{
    dual_certificate, solve_with, ConicProgram, LinearFunctional, MatrixExpr, MatrixMap,
    SolveResult, SolveStatus, SolverError, SolverSettings,
};
use crate::corrsim::{CorrError, CorrelationTable, NORMALIZATION_TOL};
use crate::qstate::{tensor, HermitianOperator};

/// Relative tolerance for witness value against the primal optimum.
pub const WITNESS_GAP_TOL: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error(
        "no POVM on the trusted inputs reproduces this table; \
         regularize the data before quantifying"
    )]
    InfeasibleData,
    #[error("table is not normalized at setting (x={x}, y={y}): sum {sum}")]
    NotNormalized { x: usize, y: usize, sum: f64 },
    #[error("solver did not reach an optimal point: {0:?}")]
    SolverStatus(SolveStatus),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Table(#[from] CorrError),
    #[error("witness value {witness} differs from q {q} by more than the tolerance")]
    DualityGap { witness: f64, q: f64 },
    #[error("table layout does not match the witness")]
    LayoutMismatch,
    #[error("negative entanglement value {0}")]
    NegativeValue(f64),
    #[error("at least one resample is required")]
    NoResamples,
    #[error("linear inversion needs tomographically complete inputs on both sides")]
    IncompleteInputs,
}

/// Solver facts kept with a result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub status: SolveStatus,
    pub primal_value: f64,
    pub dual_value: f64,
    pub iterations: u32,
    pub solve_time: Duration,
    pub tolerance: f64,
    pub rechecked: bool,
}

impl SolveSummary {
    fn from_result(r: &SolveResult) -> Self {
        Self {
            status: r.status,
            primal_value: r.primal_value,
            dual_value: r.dual_value,
            iterations: r.iterations,
            solve_time: r.solve_time,
            tolerance: r.solver_tolerance,
            rechecked: r.rechecked,
        }
    }

    /// Summary for an answer reached without calling the solver.
    fn trivial(settings: &SolverSettings) -> Self {
        Self {
            status: SolveStatus::Optimal,
            primal_value: 0.0,
            dual_value: 0.0,
            iterations: 0,
            solve_time: Duration::ZERO,
            tolerance: settings.tol,
            rechecked: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantificationResult {
    pub q_value: f64,
    /// `Π_ab` in outcome-major order (`a·n_b + b`).
    pub recovered_operators: Vec<HermitianOperator>,
    pub solver: SolveSummary,
    /// Both input sets span their operator spaces. Without this the
    /// dimension guarantee is not proven, though the bound still holds.
    pub inputs_complete: bool,
    pub method: QuantifyMethod,
    /// Witness coefficients read off the dual, table index order `[x][y][a][b]`.
    beta: Vec<f64>,
}

/// How [`quantify_using`] solves the recovery program.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantifyMethod {
    /// Inversion when both input sets are complete, the joint program otherwise.
    #[default]
    Auto,
    /// One program over all `Π_ab` and `ω_ab`.
    Joint,
    /// Complete inputs fix every `Π_ab` through the data, so the program splits
    /// into linear inversion plus one robustness program per outcome pair.
    Inversion,
}

/// The recovery program and the bookkeeping needed to read its solution.
struct QuantifyProgram {
    program: ConicProgram,
    /// Equality index of each data row, `[x][y][a][b]`.
    data_rows: Vec<Option<usize>>,
    identity_row: usize,
    n_ab: usize,
}

fn check_normalized(table: &CorrelationTable) -> Result<(), PipelineError> {
    let n_ab = table.n_a() * table.n_b();
    for (k, chunk) in table.probs().chunks(n_ab).enumerate() {
        let sum: f64 = chunk.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(PipelineError::NotNormalized {
                x: k / table.n_y(),
                y: k % table.n_y(),
                sum,
            });
        }
    }
    Ok(())
}

/// `τ_x ⊗ τ_y` for every setting, `[x][y]` order.
pub(crate) fn product_inputs(table: &CorrelationTable) -> Vec<HermitianOperator> {
    let mut out = Vec::with_capacity(table.n_x() * table.n_y());
    for tx in table.inputs_x().states() {
        for ty in table.inputs_y().states() {
            out.push(tensor(tx.operator(), ty.operator()));
        }
    }
    out
}

/// Adds blocks `Π_ab ⪰ 0` with `Σ Π_ab = I`; returns the blocks and the index
/// of the identity equality.
pub(crate) fn add_povm_blocks(
    p: &mut ConicProgram,
    n_ab: usize,
    dim: usize,
) -> (Vec<crate::conic::BlockId>, usize) {
    let blocks: Vec<_> = (0..n_ab).map(|k| p.add_block(format!("pi_{k}"), dim)).collect();
    let mut sum = MatrixExpr::new(dim);
    for &b in &blocks {
        p.add_psd(MatrixExpr::block(b, dim));
        sum = sum.plus(b, 1.0);
    }
    let id = p.add_matrix_equality(sum, HermitianOperator::identity(dim));
    (blocks, id)
}

fn build_program(table: &CorrelationTable) -> QuantifyProgram {
    let (dx, dy) = (table.inputs_x().dim(), table.inputs_y().dim());
    let dim = dx * dy;
    let n_ab = table.n_a() * table.n_b();
    let mut p = ConicProgram::new();
    let (pis, identity_row) = add_povm_blocks(&mut p, n_ab, dim);
    // Transposing Y instead of X differs by a full transpose, which keeps
    // the spectrum, so the choice of side does not matter.
    let map = MatrixMap::PartialTranspose { dims: (dx, dy) };
    let mut objective = LinearFunctional::new();
    let weight = HermitianOperator::identity(dim).scaled(1.0 / dim as f64);
    for (k, &pi) in pis.iter().enumerate() {
        let w = p.add_block(format!("omega_{k}"), dim);
        p.add_psd(MatrixExpr::block(w, dim).plus(pi, -1.0));
        p.add_psd(MatrixExpr::new(dim).plus_mapped(w, 1.0, map));
        objective = objective.trace_with(w, weight.clone());
    }
    // Σ_ab Tr Π_ab = d_x·d_y, so the Π part of the objective is the constant −1.
    p.set_objective(objective, -1.0);

    // The rows of the last outcome pair are implied by Σ Π = I and the
    // normalization of each setting.
    let inputs = product_inputs(table);
    let mut data_rows = vec![None; table.probs().len()];
    for x in 0..table.n_x() {
        for y in 0..table.n_y() {
            let tau = &inputs[x * table.n_y() + y];
            for k in 0..n_ab - 1 {
                let (a, b) = (k / table.n_b(), k % table.n_b());
                let idx = table.index(a, b, x, y);
                let f = LinearFunctional::new().trace_with(pis[k], tau.clone());
                data_rows[idx] = Some(p.add_equality(f, table.probs()[idx]));
            }
        }
    }
    QuantifyProgram {
        program: p,
        data_rows,
        identity_row,
        n_ab,
    }
}

/// Acceptance level for solves that stall short of the interior-point
/// tolerance. Ideal data pins the operators to the boundary of the PSD cone,
/// where this is the usual outcome.
pub const PIPELINE_ACCEPT_TOL: f64 = 1e-6;

/// Solver settings used by the pipeline entry points without `_with`.
pub fn default_settings() -> SolverSettings {
    SolverSettings {
        accept_tol: Some(PIPELINE_ACCEPT_TOL),
        ..SolverSettings::default()
    }
}

/// Lower bound on the robustness of the shared state from a normalized table.
pub fn quantify(table: &CorrelationTable) -> Result<QuantificationResult, PipelineError> {
    quantify_with(table, &default_settings())
}

pub fn quantify_with(
    table: &CorrelationTable,
    settings: &SolverSettings,
) -> Result<QuantificationResult, PipelineError> {
    quantify_using(table, settings, QuantifyMethod::Auto)
}

pub fn quantify_using(
    table: &CorrelationTable,
    settings: &SolverSettings,
    method: QuantifyMethod,
) -> Result<QuantificationResult, PipelineError> {
    check_normalized(table)?;
    let complete = inputs_complete(table);
    match method {
        QuantifyMethod::Joint => quantify_joint(table, settings),
        QuantifyMethod::Auto if !complete => quantify_joint(table, settings),
        QuantifyMethod::Auto | QuantifyMethod::Inversion => {
            inversion::quantify_by_inversion(table, settings)
        }
    }
}

fn quantify_joint(
    table: &CorrelationTable,
    settings: &SolverSettings,
) -> Result<QuantificationResult, PipelineError> {
    let qp = build_program(table);
    let r = solve_with(&qp.program, settings)?;
    match r.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Err(PipelineError::InfeasibleData),
        s => return Err(PipelineError::SolverStatus(s)),
    }
    // β: data-row multipliers plus the identity multiplier paired with its
    // right-hand side and the objective constant, spread uniformly over the
    // settings. On normalized tables the spread adds exactly that constant,
    // so Σ β p is the dual objective.
    let identity = r.equality_duals[qp.identity_row]
        .as_matrix()
        .map_or(0.0, HermitianOperator::trace);
    let offset = (identity + qp.program.objective().1) / (table.n_x() * table.n_y()) as f64;
    let beta = qp
        .data_rows
        .iter()
        .map(|row| row.map_or(0.0, |i| r.equality_duals[i].as_scalar().unwrap_or(0.0)) + offset)
        .collect();
    Ok(QuantificationResult {
        q_value: r.primal_value,
        recovered_operators: r.block_values[..qp.n_ab].to_vec(),
        solver: SolveSummary::from_result(&r),
        inputs_complete: inputs_complete(table),
        method: QuantifyMethod::Joint,
        beta,
    })
}

fn inputs_complete(table: &CorrelationTable) -> bool {
    table.inputs_x().is_tomographically_complete() && table.inputs_y().is_tomographically_complete()
}

/// Linear functional `Σ β(a,b,x,y) p(a,b|x,y)` that lower-bounds the
/// quantify value of every normalized table with the same inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    /// `[n_a, n_b, n_x, n_y]`.
    pub shape: [usize; 4],
    /// Dense coefficients in index order `(a, b, x, y)`, `y` fastest.
    pub beta: Vec<f64>,
    pub witness_value_on_data: f64,
    pub q_value: f64,
    pub gap: f64,
}

impl WitnessReport {
    pub fn beta_at(&self, a: usize, b: usize, x: usize, y: usize) -> f64 {
        let [_, n_b, n_x, n_y] = self.shape;
        self.beta[((a * n_b + b) * n_x + x) * n_y + y]
    }

    /// Witness value on another table with the same shape.
    pub fn evaluate(&self, table: &CorrelationTable) -> Result<f64, PipelineError> {
        let [n_a, n_b, n_x, n_y] = self.shape;
        if table.n_a() != n_a || table.n_b() != n_b || table.n_x() != n_x || table.n_y() != n_y {
            return Err(PipelineError::LayoutMismatch);
        }
        let mut v = 0.0;
        for a in 0..n_a {
            for b in 0..n_b {
                for x in 0..n_x {
                    for y in 0..n_y {
                        v += self.beta_at(a, b, x, y) * table.get(a, b, x, y);
                    }
                }
            }
        }
        Ok(v)
    }
}

/// Reads the witness off the dual of an optimal [`quantify`] solve.
pub fn extract_witness(
    result: &QuantificationResult,
    table: &CorrelationTable,
) -> Result<WitnessReport, PipelineError> {
    if result.solver.status != SolveStatus::Optimal {
        return Err(PipelineError::SolverStatus(result.solver.status));
    }
    if result.beta.len() != table.probs().len() {
        return Err(PipelineError::LayoutMismatch);
    }
    let (n_a, n_b, n_x, n_y) = (table.n_a(), table.n_b(), table.n_x(), table.n_y());
    let mut beta = vec![0.0; result.beta.len()];
    for a in 0..n_a {
        for b in 0..n_b {
            for x in 0..n_x {
                for y in 0..n_y {
                    beta[((a * n_b + b) * n_x + x) * n_y + y] =
                        result.beta[table.index(a, b, x, y)];
                }
            }
        }
    }
    let mut report = WitnessReport {
        shape: [n_a, n_b, n_x, n_y],
        beta,
        witness_value_on_data: 0.0,
        q_value: result.q_value,
        gap: 0.0,
    };
    let w = report.evaluate(table)?;
    report.witness_value_on_data = w;
    report.gap = (w - result.q_value).abs();
    if report.gap > WITNESS_GAP_TOL * (1.0 + result.q_value.abs()) {
        return Err(PipelineError::DualityGap {
            witness: w,
            q: result.q_value,
        });
    }
    Ok(report)
}

/// Re-solves and checks the certificate independently of the backend's
/// reported dual objective. Used by tests and the CLI's audit path.
pub fn certify(
    table: &CorrelationTable,
    settings: &SolverSettings,
) -> Result<crate::conic::DualCertificate, PipelineError> {
    check_normalized(table)?;
    let qp = build_program(table);
    let r = solve_with(&qp.program, settings)?;
    Ok(dual_certificate(&qp.program, &r)?)
}

/// Default number of standard deviations a value must clear a bound by.
pub const DEFAULT_SIGMA_K: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionVerdict {
    pub q_value: f64,
    pub q_std: Option<f64>,
    pub sigma_k: f64,
    /// Largest `n` such that `q − k·σ` exceeds the bound `n − 2` of
    /// `(n−1)`-dimensional strategies; 1 when not even separable states are
    /// excluded.
    pub certified_irreducible_dim: usize,
    /// `(q − (m−1))/σ` for the bound `m = n − 1` that was beaten.
    pub sigma_margin: Option<f64>,
}

/// Irreducible dimension certified by value `q` with uncertainty `q_std`.
pub fn verdict(
    q: f64,
    q_std: Option<f64>,
    sigma_k: f64,
) -> Result<DimensionVerdict, PipelineError> {
    if q < 0.0 || q.is_nan() {
        return Err(PipelineError::NegativeValue(q));
    }
    let std = q_std.unwrap_or(0.0);
    let effective = q - sigma_k * std;
    // largest n with n − 2 < effective
    let mut n = 1usize;
    while (n as f64 + 1.0) - 2.0 < effective {
        n += 1;
    }
    let sigma_margin = match q_std {
        Some(s) if s > 0.0 && n >= 2 => Some((q - (n as f64 - 2.0)) / s),
        _ => None,
    };
    Ok(DimensionVerdict {
        q_value: q,
        q_std,
        sigma_k,
        certified_irreducible_dim: n,
        sigma_margin,
    })
}

#[cfg(test)]
mod tests;
