//! Seeded random strategies on qubit pairs.
//!
//! Every first step is a complete rank-one projective measurement on the
//! input and the first qubit: the two-qubit Bell basis on the input's
//! `{|0⟩, |1⟩}` slice, completed by the product vectors `|j⟩|a⟩` for the
//! remaining input levels, all rotated by Haar-random local unitaries.
//! Second steps are chosen per first-step outcome (feedforward), each an
//! independently rotated copy of the same basis, sometimes coarse-grained to
//! two outcomes.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{Postprocess, SequentialStrategy, SideStrategy, StepRule};
use crate::qstate::{
    bell_basis, embed, max_entangled, C64, CMatrix, CVector, DensityOperator, HermitianOperator,
};
use crate::random::{haar_unitary, random_bipartite_density};

/// Rank-one basis of `C^n ⊗ C^2` (input first when `input_first`).
fn seed_basis(n: usize, input_first: bool) -> Vec<CVector> {
    let index = |input: usize, qubit: usize| {
        if input_first {
            input * 2 + qubit
        } else {
            qubit * n + input
        }
    };
    let mut out = Vec::with_capacity(2 * n);
    for bell in bell_basis(2).expect("qubit Bell basis") {
        let mut v = CVector::zeros(2 * n);
        for i in 0..2 {
            for q in 0..2 {
                // Bell vectors are ordered (first factor, second factor)
                let amp = if input_first {
                    bell.amplitudes()[i * 2 + q]
                } else {
                    bell.amplitudes()[q * 2 + i]
                };
                v[index(i, q)] = amp;
            }
        }
        out.push(v);
    }
    for j in 2..n {
        for q in 0..2 {
            let mut v = CVector::zeros(2 * n);
            v[index(j, q)] = C64::new(1.0, 0.0);
            out.push(v);
        }
    }
    out
}

fn rotated_effects<R: Rng + ?Sized>(n: usize, input_first: bool, rng: &mut R) -> Vec<HermitianOperator> {
    let ux = haar_unitary(n, rng);
    let uq = haar_unitary(2, rng);
    let u: CMatrix = if input_first {
        ux.kronecker(&uq)
    } else {
        uq.kronecker(&ux)
    };
    seed_basis(n, input_first)
        .iter()
        .map(|v| HermitianOperator::projector(&(&u * v)))
        .collect()
}

/// Merges effects into two outcomes along a random nontrivial split.
fn coarse_grain<R: Rng + ?Sized>(effects: Vec<HermitianOperator>, rng: &mut R) -> Vec<HermitianOperator> {
    let mut idx: Vec<usize> = (0..effects.len()).collect();
    idx.shuffle(rng);
    let cut = rng.gen_range(1..effects.len());
    let sum = |ids: &[usize]| {
        ids.iter()
            .fold(HermitianOperator::zeros(effects[0].dim()), |acc, &i| acc.add(&effects[i]))
    };
    vec![sum(&idx[..cut]), sum(&idx[cut..])]
}

fn random_side<R: Rng + ?Sized>(n: usize, input_first: bool, rng: &mut R) -> SideStrategy {
    let first = rotated_effects(n, input_first, rng);
    let step2 = (0..first.len())
        .map(|j| {
            let mut effects = rotated_effects(n, input_first, rng);
            if rng.gen_bool(1.0 / 3.0) {
                effects = coarse_grain(effects, rng);
            }
            StepRule::new(vec![j], effects)
        })
        .collect();
    SideStrategy {
        steps: vec![vec![StepRule::new(Vec::new(), first)], step2],
    }
}

fn random_pair<R: Rng + ?Sized>(rng: &mut R) -> DensityOperator {
    if rng.gen_bool(0.5) {
        let u = haar_unitary(2, rng).kronecker(&haar_unitary(2, rng));
        let phi = max_entangled(2).expect("qubit Bell state");
        let v = &u * phi.amplitudes();
        DensityOperator::new(HermitianOperator::projector(&v), vec![2, 2]).expect("rotated Bell state")
    } else {
        random_bipartite_density(2, 2, rng)
    }
}

/// A random `k = 2` qubit-pair strategy for `n`-dimensional inputs (`n ≥ 2`).
///
/// The post-processing is one of: report the first-step outcome on each
/// side, a random local relabeling onto four outcomes, or a random joint
/// relabeling onto four outcomes per side.
pub fn random_strategy<R: Rng + ?Sized>(n: usize, rng: &mut R) -> SequentialStrategy {
    assert!(n >= 2, "inputs must be at least two-dimensional");
    let states = vec![random_pair(rng), random_pair(rng)];
    let alice = random_side(n, true, rng);
    let bob = random_side(n, false, rng);
    let ta = alice.transcripts();
    let tb = bob.transcripts();
    let postprocess = match rng.gen_range(0..3) {
        0 => {
            let fa: Vec<usize> = ta.iter().map(|t| t[0]).collect();
            let fb: Vec<usize> = tb.iter().map(|t| t[0]).collect();
            Postprocess::local_maps(&fa, 2 * n, &fb, 2 * n)
        }
        1 => {
            let fa: Vec<usize> = ta.iter().map(|_| rng.gen_range(0..4)).collect();
            let fb: Vec<usize> = tb.iter().map(|_| rng.gen_range(0..4)).collect();
            Postprocess::local_maps(&fa, 4, &fb, 4)
        }
        _ => {
            let rows = (0..ta.len() * tb.len())
                .map(|_| {
                    let mut r = vec![0.0; 16];
                    r[rng.gen_range(0..16)] = 1.0;
                    r
                })
                .collect();
            Postprocess::Joint {
                n_a: 4,
                n_b: 4,
                rows,
            }
        }
    };
    SequentialStrategy {
        input_dim_x: n,
        input_dim_y: n,
        states,
        alice,
        bob,
        postprocess,
    }
}

/// Two Bell pairs with four-dimensional inputs read as two qubits: each
/// step Bell-measures one input qubit with one pair, leaving the other input
/// qubit untouched. The steps are coarse-grained on the input, so the
/// composed operators are ququart Bell projectors.
pub fn split_input_strategy() -> SequentialStrategy {
    let bell: Vec<HermitianOperator> = bell_basis(2)
        .expect("qubit Bell basis")
        .iter()
        .map(|s| s.projector())
        .collect();
    let lift = |targets: &[usize]| -> Vec<HermitianOperator> {
        bell.iter()
            .map(|b| embed(b, &[2, 2, 2], targets).expect("three qubits"))
            .collect()
    };
    // Alice: X1 X2 A_i, first step on (X1, A1), second on (X2, A2)
    // Bob: B_i Y1 Y2, first step on (B1, Y1), second on (B2, Y2)
    let side = |first: Vec<HermitianOperator>, second: Vec<HermitianOperator>| SideStrategy {
        steps: vec![
            vec![StepRule::new(Vec::new(), first)],
            (0..4).map(|j| StepRule::new(vec![j], second.clone())).collect(),
        ],
    };
    let phi = DensityOperator::from_pure(&max_entangled(2).expect("Bell state"), vec![2, 2])
        .expect("Bell state");
    SequentialStrategy {
        input_dim_x: 4,
        input_dim_y: 4,
        states: vec![phi.clone(), phi],
        alice: side(lift(&[0, 2]), lift(&[1, 2])),
        bob: side(lift(&[0, 1]), lift(&[0, 2])),
        postprocess: Postprocess::Identity,
    }
}
