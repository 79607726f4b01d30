//! Generalized robustness of entanglement relaxed to the PPT cone.

use super::{
    solve_with, ConicProgram, LinearFunctional, MatrixExpr, MatrixMap, SolveResult, SolverError,
    SolverSettings,
};
use crate::qstate::{HermitianOperator, PSD_TOL};

/// `min Tr ω − Tr op` over `ω ⪰ op` with `ω^{T_B} ⪰ 0`.
///
/// Homogeneous in `op`, zero exactly on PPT operators and a lower bound on the
/// generalized robustness of `op / Tr op` scaled by its trace.
pub fn gr_ppt(op: &HermitianOperator, dims: (usize, usize)) -> Result<f64, SolverError> {
    gr_ppt_with(op, dims, &SolverSettings::with_tol(TIGHT_TOL)).map(|(v, _)| v)
}

const TIGHT_TOL: f64 = 1e-9;

/// As [`gr_ppt`], also returning the raw solve. The single block is `ω`; the
/// first PSD dual certifies `ω ⪰ op`, the second the PPT condition.
pub fn gr_ppt_with(
    op: &HermitianOperator,
    dims: (usize, usize),
    settings: &SolverSettings,
) -> Result<(f64, SolveResult), SolverError> {
    let n = op.dim();
    if dims.0 * dims.1 != n {
        return Err(SolverError::Malformed(format!(
            "dims {dims:?} do not match operator dim {n}"
        )));
    }
    let scale = op.matrix().iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let min_ev = op.min_eigenvalue();
    if min_ev < -PSD_TOL * scale {
        return Err(SolverError::NotPsd(min_ev));
    }
    let mut p = ConicProgram::new();
    let w = p.add_block("omega", n);
    p.add_psd(MatrixExpr::block(w, n).with_constant(op.scaled(-1.0)));
    p.add_psd(MatrixExpr::new(n).plus_mapped(w, 1.0, MatrixMap::PartialTranspose { dims }));
    p.set_objective(
        LinearFunctional::new().trace_with(w, HermitianOperator::identity(n)),
        -op.trace(),
    );
    let r = solve_with(&p, settings)?.require_optimal()?;
    Ok((r.primal_value.max(0.0), r))
}

/// `max(0, d·F − 1)` with `F = p + (1 − p)/d²` the singlet fraction of the
/// isotropic state of visibility `p`.
pub fn isotropic_gr_closed_form(d: usize, p: f64) -> f64 {
    let d = d as f64;
    let f = p + (1.0 - p) / (d * d);
    (d * f - 1.0).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{dual_certificate, DEFAULT_TOL};
    use crate::qstate::{
        isotropic_state, max_entangled, partial_transpose, tensor, DensityOperator,
    };
    use crate::random::{random_bipartite_density, random_density, rng_from_seed};

    #[test]
    fn maximally_entangled_states() {
        for d in [2, 3] {
            let phi = max_entangled(d).unwrap().projector();
            let v = gr_ppt(&phi, (d, d)).unwrap();
            assert!((v - (d as f64 - 1.0)).abs() < 1e-6, "d={d}: {v}");
        }
    }

    #[test]
    fn product_states_are_free() {
        let mut rng = rng_from_seed(50);
        let a = random_density(3, &mut rng);
        let b = random_density(3, &mut rng);
        let v = gr_ppt(&tensor(a.operator(), b.operator()), (3, 3)).unwrap();
        assert!(v.abs() < 1e-7, "{v}");
    }

    #[test]
    fn isotropic_anchor() {
        let rho = isotropic_state(3, 5.0 / 8.0).unwrap();
        let v = gr_ppt(rho.operator(), (3, 3)).unwrap();
        assert!((v - 1.0).abs() < 1e-6, "{v}");
        assert!((isotropic_gr_closed_form(3, 5.0 / 8.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn isotropic_curves() {
        for d in [2usize, 3] {
            for k in 0..=10 {
                let p = k as f64 / 10.0;
                let rho = isotropic_state(d, p).unwrap();
                let v = gr_ppt(rho.operator(), (d, d)).unwrap();
                let want = isotropic_gr_closed_form(d, p);
                assert!((v - want).abs() < 1e-6, "d={d} p={p}: {v} vs {want}");
                if d == 2 {
                    assert!((want - ((3.0 * p - 1.0) / 2.0).max(0.0)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn homogeneous_in_the_operator() {
        let rho = isotropic_state(3, 0.8).unwrap();
        let base = gr_ppt(rho.operator(), (3, 3)).unwrap();
        for s in [0.01, 0.3, 2.5] {
            let v = gr_ppt(&rho.operator().scaled(s), (3, 3)).unwrap();
            assert!((v - s * base).abs() < 1e-8 * (1.0 + s * base), "{s}: {v}");
        }
    }

    #[test]
    fn convex_along_mixtures() {
        let mut rng = rng_from_seed(51);
        let a = random_bipartite_density(3, 3, &mut rng);
        let b = DensityOperator::from_pure(&max_entangled(3).unwrap(), vec![3, 3]).unwrap();
        let ga = gr_ppt(a.operator(), (3, 3)).unwrap();
        let gb = gr_ppt(b.operator(), (3, 3)).unwrap();
        for w in [0.25, 0.5, 0.75] {
            let m = a.mix(&b, w).unwrap();
            let gm = gr_ppt(m.operator(), (3, 3)).unwrap();
            assert!(gm <= w * ga + (1.0 - w) * gb + 1e-7);
        }
    }

    #[test]
    fn ppt_states_cost_nothing() {
        let mut rng = rng_from_seed(52);
        let mut found = 0;
        while found < 3 {
            // mixing toward white noise until positive under partial transpose
            let r = random_bipartite_density(2, 3, &mut rng);
            let mixed = r.mix(&DensityOperator::maximally_mixed(vec![2, 3]), 0.2).unwrap();
            let pt = partial_transpose(mixed.operator(), (2, 3)).unwrap();
            if pt.min_eigenvalue() > 1e-6 {
                let v = gr_ppt(mixed.operator(), (2, 3)).unwrap();
                assert!(v.abs() < 1e-7, "{v}");
                found += 1;
            }
        }
    }

    #[test]
    fn strong_duality_on_random_states() {
        let mut rng = rng_from_seed(53);
        for _ in 0..10 {
            let rho = random_bipartite_density(3, 3, &mut rng);
            let settings = SolverSettings::with_tol(DEFAULT_TOL);
            let (v, r) = gr_ppt_with(rho.operator(), (3, 3), &settings).unwrap();
            let mut p = ConicProgram::new();
            let w = p.add_block("omega", 9);
            p.add_psd(MatrixExpr::block(w, 9).with_constant(rho.operator().scaled(-1.0)));
            p.add_psd(MatrixExpr::new(9).plus_mapped(
                w,
                1.0,
                MatrixMap::PartialTranspose { dims: (3, 3) },
            ));
            p.set_objective(
                LinearFunctional::new().trace_with(w, HermitianOperator::identity(9)),
                -1.0,
            );
            let cert = dual_certificate(&p, &r).unwrap();
            assert!((cert.dual_value - v).abs() < 1e-6);
            assert!(cert.stationarity_residual < 1e-6, "{}", cert.stationarity_residual);
            // the witness Z₁ satisfies 0 ⪯ Z₁ and I − Z₁ is PPT-dual feasible
            assert!(cert.psd_duals[0].min_eigenvalue() > -1e-7);
        }
    }

    #[test]
    fn rejects_non_psd_input() {
        let bad = HermitianOperator::from_real_diagonal(&[1.0, -0.5, 0.2, 0.3]);
        assert!(matches!(gr_ppt(&bad, (2, 2)), Err(SolverError::NotPsd(_))));
        assert!(matches!(
            gr_ppt(&HermitianOperator::identity(4), (2, 3)),
            Err(SolverError::Malformed(_))
        ));
    }
}
