//! Recovery by linear inversion when both input sets are complete.
//!
//! Complete inputs determine each `Π_ab` from its row of the table, so the
//! joint program's feasible set is a single point (or empty) and its optimum
//! splits into one robustness program per outcome pair. Solving the split
//! form avoids the joint program's lack of strictly feasible points on pure
//! data.

use std::time::Duration;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{
    inputs_complete, PipelineError, QuantificationResult, QuantifyMethod, SolveSummary,
};
use crate::conic::{gr_ppt_with, SolveStatus, SolverError, SolverSettings};
use crate::corrsim::CorrelationTable;
use crate::qstate::{hermitian_coordinates, tensor, HermitianOperator, InputStateSet};

/// Largest entry mismatch between the table and the reconstructed operators
/// before the data are declared inconsistent.
pub const CONSISTENCY_TOL: f64 = 1e-8;
/// Negative eigenvalues of reconstructed operators tolerated as round-off.
pub const RECONSTRUCTION_PSD_TOL: f64 = 1e-9;

/// Canonical dual frame `F_i = Σ_j (G⁺)_ij τ_j` with `G_ij = Tr(τ_i τ_j)`,
/// so that `A = Σ_i Tr(A τ_i) F_i` for every `A` in the span.
pub(crate) fn dual_frame(set: &InputStateSet) -> Vec<HermitianOperator> {
    let coords: Vec<Vec<f64>> = set
        .states()
        .iter()
        .map(|s| hermitian_coordinates(s.operator()))
        .collect();
    let n = coords.len();
    let gram = DMatrix::from_fn(n, n, |i, j| {
        coords[i].iter().zip(&coords[j]).map(|(a, b)| a * b).sum()
    });
    let pinv = gram
        .pseudo_inverse(1e-12)
        .expect("Gram matrix pseudo-inverse with positive epsilon");
    (0..n)
        .map(|i| {
            set.states()
                .iter()
                .enumerate()
                .fold(HermitianOperator::zeros(set.dim()), |acc, (j, s)| {
                    acc.add(&s.operator().scaled(pinv[(i, j)]))
                })
        })
        .collect()
}

/// Operators `Σ_xy p(a,b|x,y) F_x ⊗ F_y`, outcome-major.
pub(crate) fn reconstruct(table: &CorrelationTable) -> Vec<HermitianOperator> {
    let fx = dual_frame(table.inputs_x());
    let fy = dual_frame(table.inputs_y());
    let frames: Vec<HermitianOperator> = fx
        .iter()
        .flat_map(|a| fy.iter().map(move |b| tensor(a, b)))
        .collect();
    let dim = table.inputs_x().dim() * table.inputs_y().dim();
    let n_ab = table.n_a() * table.n_b();
    (0..n_ab)
        .into_par_iter()
        .map(|k| {
            let (a, b) = (k / table.n_b(), k % table.n_b());
            let mut acc = HermitianOperator::zeros(dim);
            for x in 0..table.n_x() {
                for y in 0..table.n_y() {
                    let p = table.get(a, b, x, y);
                    if p != 0.0 {
                        acc = acc.add(&frames[x * table.n_y() + y].scaled(p));
                    }
                }
            }
            acc
        })
        .collect()
}

/// The reconstructed POVM with round-off eigenvalues clipped, or `None` when
/// it fails to reproduce the table or is not positive.
pub(crate) fn consistent_reconstruction(table: &CorrelationTable) -> Option<Vec<HermitianOperator>> {
    let ops = reconstruct(table);
    let inputs = super::product_inputs(table);
    for x in 0..table.n_x() {
        for y in 0..table.n_y() {
            let tau = &inputs[x * table.n_y() + y];
            for (k, op) in ops.iter().enumerate() {
                let (a, b) = (k / table.n_b(), k % table.n_b());
                if (op.inner(tau) - table.get(a, b, x, y)).abs() > CONSISTENCY_TOL {
                    return None;
                }
            }
        }
    }
    if ops.iter().any(|o| o.min_eigenvalue() < -RECONSTRUCTION_PSD_TOL) {
        return None;
    }
    Some(ops.iter().map(|o| o.spectral_map(|v| v.max(0.0))).collect())
}

pub(super) fn quantify_by_inversion(
    table: &CorrelationTable,
    settings: &SolverSettings,
) -> Result<QuantificationResult, PipelineError> {
    if !inputs_complete(table) {
        return Err(PipelineError::IncompleteInputs);
    }
    let (dx, dy) = (table.inputs_x().dim(), table.inputs_y().dim());
    let dim = dx * dy;
    let ops = consistent_reconstruction(table).ok_or(PipelineError::InfeasibleData)?;

    let solved: Vec<(f64, HermitianOperator, SolveSummary)> = ops
        .par_iter()
        .map(|op| {
            let (v, r) = gr_ppt_with(op, (dx, dy), settings).map_err(|e| match e {
                SolverError::Status(s) => PipelineError::SolverStatus(s),
                other => PipelineError::Solver(other),
            })?;
            let w = r.psd_duals[0].sub(&HermitianOperator::identity(dim));
            Ok((v, w, SolveSummary::from_result(&r)))
        })
        .collect::<Result<_, PipelineError>>()?;

    let scale = 1.0 / dim as f64;
    let q_value = scale * solved.iter().map(|(v, _, _)| v).sum::<f64>();
    let dual_value = scale * ops.iter().zip(&solved).map(|(op, (_, w, _))| op.inner(w)).sum::<f64>();
    let fx = dual_frame(table.inputs_x());
    let fy = dual_frame(table.inputs_y());
    let mut beta = vec![0.0; table.probs().len()];
    for (x, f1) in fx.iter().enumerate() {
        for (y, f2) in fy.iter().enumerate() {
            let f = tensor(f1, f2);
            for (k, (_, w, _)) in solved.iter().enumerate() {
                let (a, b) = (k / table.n_b(), k % table.n_b());
                beta[table.index(a, b, x, y)] = scale * f.inner(w);
            }
        }
    }
    let solver = SolveSummary {
        status: SolveStatus::Optimal,
        primal_value: q_value,
        dual_value,
        iterations: solved.iter().map(|(_, _, s)| s.iterations).sum(),
        solve_time: solved.iter().map(|(_, _, s)| s.solve_time).sum::<Duration>(),
        tolerance: settings.tol,
        rechecked: solved.iter().any(|(_, _, s)| s.rechecked),
    };
    Ok(QuantificationResult {
        q_value,
        recovered_operators: ops,
        solver,
        inputs_complete: true,
        method: QuantifyMethod::Inversion,
        beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::tomographically_complete_set;
    use crate::random::{random_hermitian, rng_from_seed};

    #[test]
    fn dual_frame_reconstructs_operators() {
        let mut rng = rng_from_seed(60);
        for d in [2, 3] {
            let set = tomographically_complete_set(d).unwrap();
            let f = dual_frame(&set);
            let a = random_hermitian(d, &mut rng);
            let back = set
                .states()
                .iter()
                .zip(&f)
                .fold(HermitianOperator::zeros(d), |acc, (s, fi)| {
                    acc.add(&fi.scaled(a.inner(s.operator())))
                });
            assert!(back.max_abs_diff(&a) < 1e-12);
        }
    }
}
