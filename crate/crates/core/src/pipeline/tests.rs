use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::conic::{gr_ppt, isotropic_gr_closed_form};
use crate::corrsim::{
    ideal_correlations, noisy_correlations, sample_counts, Povm, TableKind,
};
use crate::qstate::{
    isotropic_state, tensor, tomographically_complete_set, DensityOperator, InputStateSet,
    PureState,
};
use crate::random::{random_bipartite_density, random_density, rng_from_seed};

fn qubit_setup() -> (InputStateSet, Povm) {
    (
        tomographically_complete_set(2).unwrap(),
        Povm::bell_state_measurement(2).unwrap(),
    )
}

/// `|0⟩, |1⟩, |+⟩`: spans three of the four qubit operator directions.
fn incomplete_qubit_set() -> InputStateSet {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let plus = PureState::normalized(crate::qstate::CVector::from_vec(vec![
        s.into(),
        s.into(),
    ]))
    .unwrap();
    InputStateSet::from_pure(&[PureState::basis(2, 0), PureState::basis(2, 1), plus], "z+x")
        .unwrap()
}

fn table_for(rho: &DensityOperator, set: &InputStateSet) -> CorrelationTable {
    let bsm = Povm::bell_state_measurement(2).unwrap();
    ideal_correlations(rho, set, set, &bsm, &bsm).unwrap()
}

fn joint(t: &CorrelationTable) -> QuantificationResult {
    quantify_using(t, &default_settings(), QuantifyMethod::Joint).unwrap()
}

#[test]
fn isotropic_qubits_follow_the_closed_form() {
    let (set, bsm) = qubit_setup();
    for p in [0.0, 1.0 / 3.0, 0.5, 0.8, 1.0] {
        let t = noisy_correlations(2, p, &set, &set, &bsm, &bsm).unwrap();
        let want = ((3.0 * p - 1.0) / 2.0).max(0.0);
        let inv = quantify(&t).unwrap();
        assert_eq!(inv.method, QuantifyMethod::Inversion);
        assert!((inv.q_value - want).abs() < 1e-6, "p={p}: {}", inv.q_value);
        let j = joint(&t);
        assert!((j.q_value - want).abs() < 1e-4, "p={p}: {}", j.q_value);
        assert!(inv.inputs_complete && j.inputs_complete);
    }
}

#[test]
fn joint_and_inversion_agree_on_mixed_states() {
    let mut rng = rng_from_seed(70);
    let (set, _) = qubit_setup();
    for _ in 0..4 {
        let rho = random_bipartite_density(2, 2, &mut rng);
        let t = table_for(&rho, &set);
        let a = quantify(&t).unwrap().q_value;
        let b = joint(&t).q_value;
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn product_states_give_zero() {
    let mut rng = rng_from_seed(71);
    let (set, _) = qubit_setup();
    let rho = DensityOperator::new(
        tensor(
            random_density(2, &mut rng).operator(),
            random_density(2, &mut rng).operator(),
        ),
        vec![2, 2],
    )
    .unwrap();
    let t = table_for(&rho, &set);
    assert!(quantify(&t).unwrap().q_value.abs() < 1e-6);
    assert!(joint(&t).q_value.abs() < 1e-6);
}

#[test]
fn never_exceeds_the_state_robustness() {
    let mut rng = rng_from_seed(72);
    let (set, _) = qubit_setup();
    for _ in 0..6 {
        let rho = random_bipartite_density(2, 2, &mut rng);
        let t = table_for(&rho, &set);
        let q = quantify(&t).unwrap().q_value;
        let e = gr_ppt(rho.operator(), (2, 2)).unwrap();
        assert!(q <= e + 1e-5, "{q} > {e}");
    }
}

#[test]
fn recovered_operators_reproduce_the_table() {
    let rho = isotropic_state(2, 0.9).unwrap();
    let set = incomplete_qubit_set();
    let t = table_for(&rho, &set);
    let r = quantify(&t).unwrap();
    assert_eq!(r.method, QuantifyMethod::Joint);
    assert!(!r.inputs_complete);
    let back = crate::corrsim::correlations_from_effective(
        &r.recovered_operators,
        4,
        4,
        &set,
        &set,
        TableKind::Normalized,
    )
    .unwrap();
    assert!(back.max_abs_diff(&t) < 1e-6, "{}", back.max_abs_diff(&t));
    let sum = r
        .recovered_operators
        .iter()
        .fold(HermitianOperator::zeros(4), |acc, o| acc.add(o));
    assert!(sum.max_abs_diff(&HermitianOperator::identity(4)) < 1e-6);
    assert!(r.recovered_operators.iter().all(|o| o.min_eigenvalue() > -1e-7));
}

#[test]
fn fewer_inputs_can_only_lower_the_bound() {
    let rho = isotropic_state(2, 0.9).unwrap();
    let (full, _) = qubit_setup();
    let q_full = quantify(&table_for(&rho, &full)).unwrap().q_value;
    let q_part = quantify(&table_for(&rho, &incomplete_qubit_set())).unwrap().q_value;
    assert!(q_part <= q_full + 1e-6, "{q_part} > {q_full}");
}

#[test]
fn transposing_either_side_gives_the_same_value() {
    // exchanging the parties moves the partial transpose from Y to X
    let mut rng = rng_from_seed(73);
    let set = incomplete_qubit_set();
    let rho = random_bipartite_density(2, 2, &mut rng);
    let t = table_for(&rho, &set);
    let mut swapped = vec![0.0; t.probs().len()];
    for x in 0..t.n_x() {
        for y in 0..t.n_y() {
            for a in 0..4 {
                for b in 0..4 {
                    swapped[t.index(b, a, y, x)] = t.get(a, b, x, y);
                }
            }
        }
    }
    let ts = t.with_probs(swapped, TableKind::Normalized).unwrap();
    let q1 = quantify(&t).unwrap().q_value;
    let q2 = quantify(&ts).unwrap().q_value;
    assert!((q1 - q2).abs() < 1e-6, "{q1} vs {q2}");
}

#[test]
fn witness_matches_on_data_and_bounds_foreign_tables() {
    let mut rng = rng_from_seed(74);
    for set in [qubit_setup().0, incomplete_qubit_set()] {
        let t = table_for(&isotropic_state(2, 0.95).unwrap(), &set);
        let r = quantify(&t).unwrap();
        let w = extract_witness(&r, &t).unwrap();
        assert!(w.gap <= 1e-5 * (1.0 + r.q_value));
        assert_eq!(w.shape, [4, 4, set.len(), set.len()]);
        for _ in 0..5 {
            let rho = random_bipartite_density(2, 2, &mut rng);
            let other = table_for(&rho, &set);
            let q = quantify(&other).unwrap().q_value;
            assert!(w.evaluate(&other).unwrap() <= q + 1e-5);
        }
    }
}

#[test]
fn raw_samples_are_rejected_until_regularized() {
    let (set, bsm) = qubit_setup();
    let ideal = noisy_correlations(2, 1.0, &set, &set, &bsm, &bsm).unwrap();
    let raw = sample_counts(&ideal, 10_000, 5).unwrap();
    assert_eq!(quantify(&raw).unwrap_err(), PipelineError::InfeasibleData);
    assert_eq!(
        quantify_using(&raw, &default_settings(), QuantifyMethod::Joint).unwrap_err(),
        PipelineError::InfeasibleData
    );
    let reg = regularize(&raw).unwrap();
    let q = quantify(&reg).unwrap().q_value;
    assert!(q.is_finite() && (q - 1.0).abs() < 0.05, "{q}");

    let set = incomplete_qubit_set();
    let ideal = table_for(&isotropic_state(2, 1.0).unwrap(), &set);
    let raw = sample_counts(&ideal, 10_000, 6).unwrap();
    assert!(quantify(&regularize(&raw).unwrap()).is_ok());
}

#[test]
fn unnormalized_tables_are_rejected() {
    let (set, bsm) = qubit_setup();
    let t = noisy_correlations(2, 0.5, &set, &set, &bsm, &bsm).unwrap();
    let mut probs = t.probs().to_vec();
    probs[0] += 0.01;
    let bad = t.with_probs(probs, TableKind::RawFrequency).unwrap();
    assert!(matches!(
        quantify(&bad),
        Err(PipelineError::NotNormalized { x: 0, y: 0, .. })
    ));
    assert_eq!(
        quantify_using(
            &table_for(&isotropic_state(2, 0.5).unwrap(), &incomplete_qubit_set()),
            &default_settings(),
            QuantifyMethod::Inversion
        )
        .unwrap_err(),
        PipelineError::IncompleteInputs
    );
}

#[test]
fn regularize_is_idempotent_on_consistent_tables() {
    let (set, bsm) = qubit_setup();
    let t = noisy_correlations(2, 0.7, &set, &set, &bsm, &bsm).unwrap();
    let r = regularize(&t).unwrap();
    assert!(r.max_abs_diff(&t) < 1e-7, "{}", r.max_abs_diff(&t));
    let t = table_for(&isotropic_state(2, 1.0).unwrap(), &incomplete_qubit_set());
    let r = regularize(&t).unwrap();
    assert!(r.max_abs_diff(&t) < 1e-7, "{}", r.max_abs_diff(&t));
}

/// Squared-L2 projection onto POVM-consistent tables by projected gradient
/// descent, with the projection onto POVMs computed by Dykstra's alternating
/// projections between the PSD cones and the affine set `Σ Π = I`.
fn alternating_projection_residual(raw: &CorrelationTable) -> f64 {
    let dim = raw.inputs_x().dim() * raw.inputs_y().dim();
    let n_ab = raw.n_a() * raw.n_b();
    let inputs = product_inputs(raw);
    let n_s = inputs.len();
    let forward = |ops: &[HermitianOperator]| -> Vec<f64> {
        let mut out = vec![0.0; raw.probs().len()];
        for (s, tau) in inputs.iter().enumerate() {
            for (k, op) in ops.iter().enumerate() {
                out[s * n_ab + k] = op.inner(tau);
            }
        }
        out
    };
    let project_povm = |ops: &[HermitianOperator]| -> Vec<HermitianOperator> {
        let mut x: Vec<HermitianOperator> = ops.to_vec();
        let mut p_inc = vec![HermitianOperator::zeros(dim); n_ab];
        let mut q_inc = vec![HermitianOperator::zeros(dim); n_ab];
        for _ in 0..200 {
            // PSD cones
            let y: Vec<_> = x
                .iter()
                .zip(&p_inc)
                .map(|(a, p)| a.add(p).spectral_map(|v| v.max(0.0)))
                .collect();
            for k in 0..n_ab {
                p_inc[k] = x[k].add(&p_inc[k]).sub(&y[k]);
            }
            // affine Σ Π = I
            let shifted: Vec<_> = y.iter().zip(&q_inc).map(|(a, q)| a.add(q)).collect();
            let excess = shifted
                .iter()
                .fold(HermitianOperator::identity(dim).scaled(-1.0), |acc, o| acc.add(o))
                .scaled(1.0 / n_ab as f64);
            let next: Vec<_> = shifted.iter().map(|o| o.sub(&excess)).collect();
            for k in 0..n_ab {
                q_inc[k] = shifted[k].sub(&next[k]);
            }
            x = next;
        }
        x
    };
    // step 1/L with L bounded by the largest number of settings times ‖τ‖²
    let step = 0.5 / n_s as f64;
    let mut ops = vec![HermitianOperator::identity(dim).scaled(1.0 / n_ab as f64); n_ab];
    for _ in 0..300 {
        let pred = forward(&ops);
        let mut grad = vec![HermitianOperator::zeros(dim); n_ab];
        for (s, tau) in inputs.iter().enumerate() {
            for k in 0..n_ab {
                let r = pred[s * n_ab + k] - raw.probs()[s * n_ab + k];
                grad[k] = grad[k].add(&tau.scaled(2.0 * r));
            }
        }
        let moved: Vec<_> = ops.iter().zip(&grad).map(|(o, g)| o.sub(&g.scaled(step))).collect();
        ops = project_povm(&moved);
    }
    let ops: Vec<_> = ops.iter().map(|o| o.spectral_map(|v| v.max(0.0))).collect();
    forward(&ops)
        .iter()
        .zip(raw.probs())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

#[test]
fn regularize_matches_an_alternating_projection_oracle() {
    let (set, bsm) = qubit_setup();
    let t = noisy_correlations(2, 0.8, &set, &set, &bsm, &bsm).unwrap();
    let mut rng = rng_from_seed(75);
    let noisy: Vec<f64> = t
        .probs()
        .iter()
        .map(|p| (p + rng.gen_range(-1e-3..1e-3)).max(0.0))
        .collect();
    let raw = t.with_probs(noisy, TableKind::RawFrequency).unwrap();
    let ours = regularize_with(&raw, Distance::L2, &default_settings()).unwrap();
    let oracle = alternating_projection_residual(&raw);
    assert!(ours.l2_residual > 0.0);
    assert!(
        ours.l2_residual <= 1.1 * oracle,
        "{} vs oracle {}",
        ours.l2_residual,
        oracle
    );
    let l1 = regularize_with(&raw, Distance::L1, &default_settings()).unwrap();
    assert_eq!(l1.distance, Distance::L1);
    assert!(quantify(&l1.table).is_ok());
    // L1 trades a larger squared distance for a smaller absolute one
    assert!(l1.l2_residual >= ours.l2_residual - 1e-9);
}

#[test]
fn verdict_boundaries() {
    let v = verdict(2.0, Some(0.0), DEFAULT_SIGMA_K).unwrap();
    assert_eq!(v.certified_irreducible_dim, 3);
    assert_eq!(verdict(2.0, None, 3.0).unwrap().certified_irreducible_dim, 3);
    let v = verdict(1.632, Some(0.017), 3.0).unwrap();
    assert_eq!(v.certified_irreducible_dim, 3);
    assert!((v.sigma_margin.unwrap() - 37.18).abs() < 0.01);
    assert_eq!(verdict(0.5, None, 3.0).unwrap().certified_irreducible_dim, 2);
    assert_eq!(verdict(0.0, None, 3.0).unwrap().certified_irreducible_dim, 1);
    assert_eq!(verdict(1.0, None, 3.0).unwrap().certified_irreducible_dim, 2);
    assert_eq!(verdict(1.05, Some(0.02), 3.0).unwrap().certified_irreducible_dim, 2);
    assert!(matches!(verdict(-0.1, None, 3.0), Err(PipelineError::NegativeValue(_))));
}

proptest! {
    #[test]
    fn verdict_is_monotone(q1 in 0.0f64..6.0, dq in 0.0f64..3.0, s in 0.0f64..0.5, k in 0.0f64..5.0) {
        let lo = verdict(q1, Some(s), k).unwrap().certified_irreducible_dim;
        let hi = verdict(q1 + dq, Some(s), k).unwrap().certified_irreducible_dim;
        prop_assert!(lo <= hi);
        // and the certified bound is actually beaten
        let d = lo as f64;
        prop_assert!(lo == 1 || q1 - k * s > d - 2.0);
        prop_assert!(q1 - k * s <= d - 1.0);
    }
}

#[test]
fn monte_carlo_is_deterministic_and_tight() {
    let (set, bsm) = qubit_setup();
    let ideal = noisy_correlations(2, 1.0, &set, &set, &bsm, &bsm).unwrap();
    let raw = sample_counts(&ideal, 1_000_000, 11).unwrap();
    let one = monte_carlo_uncertainty(&raw, 1, 3).unwrap();
    assert!(one.degenerate && one.q_std == 0.0);
    let a = monte_carlo_uncertainty(&raw, 50, 3).unwrap();
    let b = monte_carlo_uncertainty(&raw, 50, 3).unwrap();
    assert_eq!(a, b);
    assert!(!a.degenerate);
    assert!(a.q_std < 0.01, "{}", a.q_std);
    assert!((a.q_mean - 1.0).abs() < 0.02, "{}", a.q_mean);
    assert!(matches!(
        monte_carlo_uncertainty(&ideal, 3, 1),
        Err(PipelineError::Table(CorrError::MissingCounts))
    ));
    assert_eq!(
        monte_carlo_uncertainty(&raw, 0, 1).unwrap_err(),
        PipelineError::NoResamples
    );
}

#[test]
fn isotropic_closed_form_is_the_qubit_line() {
    for k in 0..=10 {
        let p = k as f64 / 10.0;
        assert!((isotropic_gr_closed_form(2, p) - ((3.0 * p - 1.0) / 2.0).max(0.0)).abs() < 1e-12);
        assert!((isotropic_gr_closed_form(3, p) - ((8.0 * p - 2.0) / 3.0).max(0.0)).abs() < 1e-12);
    }
}
