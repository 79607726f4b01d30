//! Named states: maximally entangled and isotropic states, Bell bases and the
//! trusted input-state families.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use super::{
    operator_span_rank, C64, CVector, DensityOperator, HermitianOperator, InputStateSet,
    PureState, StateError,
};

/// `(1/√d) Σ_i |ii⟩`.
pub fn max_entangled(d: usize) -> Result<PureState, StateError> {
    if d < 2 {
        return Err(StateError::DimensionTooSmall { min: 2, got: d });
    }
    let amp = 1.0 / (d as f64).sqrt();
    let mut v = CVector::zeros(d * d);
    for i in 0..d {
        v[i * d + i] = C64::new(amp, 0.0);
    }
    PureState::new(v)
}

/// `p |φ_d⟩⟨φ_d| + (1 − p) I / d²`.
pub fn isotropic_state(d: usize, p: f64) -> Result<DensityOperator, StateError> {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(StateError::ProbabilityOutOfRange(p));
    }
    let phi = max_entangled(d)?;
    let n = d * d;
    let op = phi
        .projector()
        .scaled(p)
        .add(&HermitianOperator::identity(n).scaled((1.0 - p) / n as f64));
    DensityOperator::new(op, vec![d, d])
}

/// Generalized Bell basis `(1/√d) Σ_j e^{2πi jk/d} |j, j+c mod d⟩`, ordered by
/// shift `c` (outer) then phase index `k` (inner).
pub fn bell_basis(d: usize) -> Result<Vec<PureState>, StateError> {
    if d < 2 {
        return Err(StateError::DimensionTooSmall { min: 2, got: d });
    }
    let amp = 1.0 / (d as f64).sqrt();
    let mut out = Vec::with_capacity(d * d);
    for c in 0..d {
        for k in 0..d {
            let mut v = CVector::zeros(d * d);
            for j in 0..d {
                let phase = 2.0 * PI * ((j * k) % d) as f64 / d as f64;
                v[j * d + (j + c) % d] = C64::from_polar(amp, phase);
            }
            out.push(PureState::new(v)?);
        }
    }
    Ok(out)
}

/// The nine two-qutrit Bell states, three categories of three phase patterns.
///
/// Category `c` pairs `|j⟩` with `|j + c⟩`; within a category the relative
/// phases `(φ₀, φ₁)` on the second and third terms run over
/// `(0, 0), (2π/3, 4π/3), (4π/3, 8π/3)`.
pub fn qutrit_bell_states() -> Vec<PureState> {
    const PHASES: [(f64, f64); 3] = [
        (0.0, 0.0),
        (2.0 * PI / 3.0, 4.0 * PI / 3.0),
        (4.0 * PI / 3.0, 8.0 * PI / 3.0),
    ];
    let amp = 1.0 / 3f64.sqrt();
    let mut out = Vec::with_capacity(9);
    for shift in 0..3 {
        for &(phi0, phi1) in &PHASES {
            let phases = [0.0, phi0, phi1];
            let mut v = CVector::zeros(9);
            for (j, &ph) in phases.iter().enumerate() {
                v[j * 3 + (j + shift) % 3] = C64::from_polar(amp, ph);
            }
            out.push(PureState::new(v).expect("unit norm by construction"));
        }
    }
    out
}

fn superposition(d: usize, j: usize, k: usize, phase: C64) -> PureState {
    let mut v = CVector::zeros(d);
    v[j] = C64::new(FRAC_1_SQRT_2, 0.0);
    v[k] = phase * FRAC_1_SQRT_2;
    PureState::new(v).expect("unit norm by construction")
}

/// The six qutrit inputs `|0⟩, |1⟩, |0⟩+|1⟩, |0⟩+i|1⟩, |0⟩+|2⟩, |1⟩+|2⟩` (normalized).
/// Their real span misses one direction of the qutrit operator space.
pub fn input_set_s() -> InputStateSet {
    let one = C64::new(1.0, 0.0);
    let states = [
        PureState::basis(3, 0),
        PureState::basis(3, 1),
        superposition(3, 0, 1, one),
        superposition(3, 0, 1, C64::i()),
        superposition(3, 0, 2, one),
        superposition(3, 1, 2, one),
    ];
    InputStateSet::from_pure(&states, "S").expect("valid qutrit set")
}

/// `d²` pure states spanning the Hermitian operators on `C^d`: the computational
/// basis followed by `(|j⟩+|k⟩)/√2` and `(|j⟩+i|k⟩)/√2` for `j < k`, keeping only
/// candidates that enlarge the span.
pub fn tomographically_complete_set(d: usize) -> Result<InputStateSet, StateError> {
    if d < 2 {
        return Err(StateError::DimensionTooSmall { min: 2, got: d });
    }
    let mut candidates: Vec<PureState> = (0..d).map(|j| PureState::basis(d, j)).collect();
    for j in 0..d {
        for k in j + 1..d {
            candidates.push(superposition(d, j, k, C64::new(1.0, 0.0)));
            candidates.push(superposition(d, j, k, C64::i()));
        }
    }
    let mut chosen: Vec<PureState> = Vec::with_capacity(d * d);
    let mut ops: Vec<HermitianOperator> = Vec::with_capacity(d * d);
    for c in candidates {
        if chosen.len() == d * d {
            break;
        }
        ops.push(c.projector());
        if operator_span_rank(ops.iter()) == ops.len() {
            chosen.push(c);
        } else {
            ops.pop();
        }
    }
    InputStateSet::from_pure(&chosen, format!("complete-{d}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::partial_trace;

    #[test]
    fn max_entangled_amplitudes() {
        let phi = max_entangled(3).unwrap();
        let a = 1.0 / 3f64.sqrt();
        for (i, z) in phi.amplitudes().iter().enumerate() {
            let want = if [0, 4, 8].contains(&i) { a } else { 0.0 };
            assert!((z.re - want).abs() < 1e-15 && z.im == 0.0);
        }
        let phi2 = max_entangled(2).unwrap();
        let b = 1.0 / 2f64.sqrt();
        assert!((phi2.amplitudes()[0].re - b).abs() < 1e-15);
        assert!((phi2.amplitudes()[3].re - b).abs() < 1e-15);
        for d in 2..=6 {
            let n = max_entangled(d).unwrap().amplitudes().norm_squared();
            assert!((n - 1.0).abs() < 1e-12);
        }
        assert!(max_entangled(1).is_err());
    }

    #[test]
    fn isotropic_limits() {
        let pure = isotropic_state(3, 1.0).unwrap();
        let proj = max_entangled(3).unwrap().projector();
        assert!(pure.operator().max_abs_diff(&proj) < 1e-15);
        let mixed = isotropic_state(3, 0.0).unwrap();
        assert!(mixed
            .operator()
            .max_abs_diff(&HermitianOperator::identity(9).scaled(1.0 / 9.0))
            < 1e-15);
        assert!(isotropic_state(3, 1.2).is_err());
        assert!(isotropic_state(3, -0.1).is_err());
    }

    #[test]
    fn isotropic_fidelity() {
        for d in 2..=4 {
            let phi = max_entangled(d).unwrap();
            for p in [0.0, 0.1, 0.37, 0.8, 1.0] {
                let rho = isotropic_state(d, p).unwrap();
                let f = rho.fidelity_with_pure(&phi);
                let dd = (d * d) as f64;
                assert!((f - (p + (1.0 - p) / dd)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn qutrit_bell_first_state() {
        let states = qutrit_bell_states();
        assert_eq!(states.len(), 9);
        let phi = max_entangled(3).unwrap();
        assert!((states[0].inner(&phi).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn qutrit_bell_gram_and_reduced_states() {
        let states = qutrit_bell_states();
        for (i, a) in states.iter().enumerate() {
            for (j, b) in states.iter().enumerate() {
                let g = a.inner(b);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g.re - want).abs() < 1e-12 && g.im.abs() < 1e-12);
            }
            let red = partial_trace(&a.projector(), &[3, 3], &[0]).unwrap();
            assert!(red
                .max_abs_diff(&HermitianOperator::identity(3).scaled(1.0 / 3.0))
                < 1e-12);
        }
        let sum = states
            .iter()
            .fold(HermitianOperator::zeros(9), |acc, s| acc.add(&s.projector()));
        assert!(sum.max_abs_diff(&HermitianOperator::identity(9)) < 1e-12);
    }

    #[test]
    fn generalized_bell_basis_matches_qutrit_listing() {
        let gen = bell_basis(3).unwrap();
        for (g, q) in gen.iter().zip(qutrit_bell_states()) {
            assert!((g.amplitudes() - q.amplitudes()).norm() < 1e-12);
        }
        for d in [2, 4] {
            let b = bell_basis(d).unwrap();
            let sum = b
                .iter()
                .fold(HermitianOperator::zeros(d * d), |acc, s| acc.add(&s.projector()));
            assert!(sum.max_abs_diff(&HermitianOperator::identity(d * d)) < 1e-12);
        }
    }

    #[test]
    fn set_s_is_incomplete() {
        let s = input_set_s();
        assert_eq!(s.len(), 6);
        assert!(s.states().iter().all(|t| t.dim() == 3));
        assert!(!s.is_tomographically_complete());
        // six operators span at most six real dimensions of the nine
        assert_eq!(s.span_rank(), 6);
    }

    #[test]
    fn complete_sets_span_and_are_minimal() {
        for d in [2, 3, 4] {
            let set = tomographically_complete_set(d).unwrap();
            assert_eq!(set.len(), d * d);
            assert_eq!(set.span_rank(), d * d);
            assert!(set.is_tomographically_complete());
            for skip in 0..set.len() {
                let ops: Vec<_> = set
                    .states()
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != skip)
                    .map(|(_, s)| s.operator())
                    .collect();
                assert!(operator_span_rank(ops) < d * d);
            }
        }
    }
}
