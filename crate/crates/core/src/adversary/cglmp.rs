//! CGLMP scores of classical-input tables and a search for sequential
//! qubit-pair strategies that violate the four-outcome inequality.
//!
//! A classical input `x` is the basis state `|x⟩` of the input system, and
//! the attack's effects are block diagonal in that basis: the first step
//! reads the input level `j` and measures the first qubit with the setting
//! for `x = j mod 2`, recording `(j, a_1)`. Later steps see that record.
//! The same strategy can therefore also be fed tomographically complete
//! quantum inputs.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    simulate_sequential_mdi, AdversaryError, Postprocess, SequentialStrategy, SideStrategy,
    StepRule,
};
use crate::corrsim::CorrelationTable;
use crate::qstate::{
    max_entangled, tensor, C64, CVector, DensityOperator, HermitianOperator, InputStateSet,
    PureState,
};
use crate::random::{derive_seed, rng_from_seed};

/// `P(A_x − B_y ≡ c mod d)`.
fn shifted(table: &CorrelationTable, x: usize, y: usize, c: i64, d: usize) -> f64 {
    let mut s = 0.0;
    for a in 0..d {
        for b in 0..d {
            if (a as i64 - b as i64 - c).rem_euclid(d as i64) == 0 {
                s += table.get(a, b, x, y);
            }
        }
    }
    s
}

/// The CGLMP expression `I_d` on a two-setting, `d`-outcome table. Its
/// local-hidden-variable bound is 2.
pub fn cglmp_score(table: &CorrelationTable, d: usize) -> Result<f64, AdversaryError> {
    if table.n_x() != 2 || table.n_y() != 2 || table.n_a() != d || table.n_b() != d || d < 2 {
        return Err(AdversaryError::Shape(format!(
            "need 2 inputs and {d} outcomes per side, got {}x{} inputs and {}x{} outcomes",
            table.n_x(),
            table.n_y(),
            table.n_a(),
            table.n_b()
        )));
    }
    let mut total = 0.0;
    for k in 0..(d / 2) as i64 {
        let w = 1.0 - 2.0 * k as f64 / (d as f64 - 1.0);
        // P(B_y = A_x + c) = P(A_x − B_y ≡ −c)
        let plus = shifted(table, 0, 0, k, d)
            + shifted(table, 1, 0, -(k + 1), d)
            + shifted(table, 1, 1, k, d)
            + shifted(table, 0, 1, -k, d);
        let minus = shifted(table, 0, 0, -k - 1, d)
            + shifted(table, 1, 0, k, d)
            + shifted(table, 1, 1, -k - 1, d)
            + shifted(table, 0, 1, k + 1, d);
        total += w * (plus - minus);
    }
    Ok(total)
}

/// Basis states `|0⟩ … |count−1⟩` of `C^dim`, standing in for classical inputs.
pub fn classical_inputs(count: usize, dim: usize) -> InputStateSet {
    assert!(count <= dim, "{count} classical inputs do not fit in dimension {dim}");
    let states: Vec<PureState> = (0..count).map(|i| PureState::basis(dim, i)).collect();
    InputStateSet::from_pure(&states, format!("classical-{count}-in-{dim}"))
        .expect("basis states are valid")
}

/// Largest CGLMP value over all deterministic local strategies, by enumeration.
pub fn cglmp_local_bound(d: usize) -> f64 {
    let set = classical_inputs(2, 2);
    let mut best = f64::NEG_INFINITY;
    for fa in 0..d * d {
        for fb in 0..d * d {
            let (a0, a1, b0, b1) = (fa / d, fa % d, fb / d, fb % d);
            let mut probs = vec![0.0; 4 * d * d];
            for (x, a) in [a0, a1].into_iter().enumerate() {
                for (y, b) in [b0, b1].into_iter().enumerate() {
                    probs[(x * 2 + y) * d * d + a * d + b] = 1.0;
                }
            }
            let t = CorrelationTable::new(
                d,
                d,
                set.clone(),
                set.clone(),
                probs,
                crate::corrsim::TableKind::Normalized,
            )
            .expect("deterministic table");
            best = best.max(cglmp_score(&t, d).expect("shape fixed above"));
        }
    }
    best
}

/// Continuous and discrete parameters of a qubit-pair attack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackParameters {
    /// Number of Bell pairs used, 1 or 2.
    pub pairs: usize,
    /// Bloch angles `(θ, φ)` of each projective qubit measurement. For two
    /// pairs: settings for `x = 0, 1`, then second-pair settings for
    /// `(x, a_1) = (0,0), (0,1), (1,0), (1,1)`.
    pub alice_angles: Vec<[f64; 2]>,
    pub bob_angles: Vec<[f64; 2]>,
    /// Reported outcome for each raw outcome pattern (`2·a_1 + a_2`, or `a_1`).
    pub alice_map: Vec<usize>,
    pub bob_map: Vec<usize>,
}

fn bloch(angles: [f64; 2]) -> [f64; 3] {
    let [t, p] = angles;
    [t.sin() * p.cos(), t.sin() * p.sin(), t.cos()]
}

/// `⟨Φ⁺| P_a(u) ⊗ P_b(v) |Φ⁺⟩ = (1 + s_a s_b u·v̄)/4`, with `v̄` the Bloch
/// vector of the transposed projector.
fn pair_prob(u: [f64; 3], v: [f64; 3], a: usize, b: usize) -> f64 {
    let dot = u[0] * v[0] - u[1] * v[1] + u[2] * v[2];
    let sign = if a == b { 1.0 } else { -1.0 };
    0.25 * (1.0 + sign * dot)
}

impl AttackParameters {
    fn settings_per_side(pairs: usize) -> usize {
        if pairs == 1 {
            2
        } else {
            6
        }
    }

    /// Uniformly random angles and relabelings.
    pub fn random<R: Rng + ?Sized>(pairs: usize, rng: &mut R) -> Self {
        let n = Self::settings_per_side(pairs);
        let raw = if pairs == 1 { 2 } else { 4 };
        let mut angles = || -> Vec<[f64; 2]> {
            (0..n)
                .map(|_| [rng.gen_range(0.0..PI), rng.gen_range(0.0..2.0 * PI)])
                .collect()
        };
        let alice_angles = angles();
        let bob_angles = angles();
        Self {
            pairs,
            alice_angles,
            bob_angles,
            alice_map: (0..raw).map(|_| rng.gen_range(0..4)).collect(),
            bob_map: (0..raw).map(|_| rng.gen_range(0..4)).collect(),
        }
    }

    /// Four-outcome table `P[x][y][a][b]` on two copies of `|Φ⁺⟩`.
    fn probabilities(&self) -> [[[[f64; 4]; 4]; 2]; 2] {
        let ua: Vec<[f64; 3]> = self.alice_angles.iter().map(|a| bloch(*a)).collect();
        let ub: Vec<[f64; 3]> = self.bob_angles.iter().map(|a| bloch(*a)).collect();
        let mut p = [[[[0.0; 4]; 4]; 2]; 2];
        for x in 0..2 {
            for y in 0..2 {
                for a1 in 0..2 {
                    for b1 in 0..2 {
                        let p1 = pair_prob(ua[x], ub[y], a1, b1);
                        if self.pairs == 1 {
                            p[x][y][self.alice_map[a1]][self.bob_map[b1]] += p1;
                            continue;
                        }
                        let (u2, v2) = (ua[2 + 2 * x + a1], ub[2 + 2 * y + b1]);
                        for a2 in 0..2 {
                            for b2 in 0..2 {
                                let a = self.alice_map[2 * a1 + a2];
                                let b = self.bob_map[2 * b1 + b2];
                                p[x][y][a][b] += p1 * pair_prob(u2, v2, a2, b2);
                            }
                        }
                    }
                }
            }
        }
        p
    }

    /// Same expression as [`cglmp_score`] for `d = 4`, on the closed-form table.
    pub(super) fn score(&self) -> f64 {
        let p = self.probabilities();
        let sh = |x: usize, y: usize, c: i64| -> f64 {
            let mut s = 0.0;
            for a in 0..4 {
                for b in 0..4 {
                    if (a as i64 - b as i64 - c).rem_euclid(4) == 0 {
                        s += p[x][y][a][b];
                    }
                }
            }
            s
        };
        (0..2i64)
            .map(|k| {
                let w = 1.0 - 2.0 * k as f64 / 3.0;
                w * (sh(0, 0, k) + sh(1, 0, -(k + 1)) + sh(1, 1, k) + sh(0, 1, -k)
                    - sh(0, 0, -k - 1)
                    - sh(1, 0, k)
                    - sh(1, 1, -k - 1)
                    - sh(0, 1, k + 1))
            })
            .sum()
    }
}

fn qubit_projectors(angles: [f64; 2]) -> [HermitianOperator; 2] {
    let [t, p] = angles;
    let v = CVector::from_vec(vec![
        C64::new((t / 2.0).cos(), 0.0),
        C64::from_polar((t / 2.0).sin(), p),
    ]);
    let p0 = HermitianOperator::projector(&v);
    let p1 = HermitianOperator::identity(2).sub(&p0);
    [p0, p1]
}

fn level(n: usize, j: usize) -> HermitianOperator {
    PureState::basis(n, j).projector()
}

/// One side of the attack as step tables on an `n`-dimensional input.
/// `input_first` orders the step space as input ⊗ qubit (Alice) rather
/// than qubit ⊗ input (Bob).
fn attack_side(angles: &[[f64; 2]], pairs: usize, n: usize, input_first: bool) -> SideStrategy {
    let join = |input: &HermitianOperator, qubit: &HermitianOperator| {
        if input_first {
            tensor(input, qubit)
        } else {
            tensor(qubit, input)
        }
    };
    // first step: outcome j·2 + a_1
    let mut first = Vec::with_capacity(2 * n);
    for j in 0..n {
        let proj = qubit_projectors(angles[j % 2]);
        for p in &proj {
            first.push(join(&level(n, j), p));
        }
    }
    let mut steps = vec![vec![StepRule::new(Vec::new(), first)]];
    if pairs == 2 {
        let id = HermitianOperator::identity(n);
        let second = (0..2 * n)
            .map(|s| {
                let (x, a1) = ((s / 2) % 2, s % 2);
                let proj = qubit_projectors(angles[2 + 2 * x + a1]);
                StepRule::new(vec![s], proj.iter().map(|p| join(&id, p)).collect())
            })
            .collect();
        steps.push(second);
    }
    SideStrategy { steps }
}

/// The attack as a [`SequentialStrategy`] on two copies of `|Φ⁺⟩` (one when
/// `pairs == 1`), with `input_dim`-dimensional input systems.
pub fn attack_strategy(params: &AttackParameters, input_dim: usize) -> SequentialStrategy {
    assert!(input_dim >= 2, "classical inputs need at least two levels");
    let phi = DensityOperator::from_pure(&max_entangled(2).expect("Bell state"), vec![2, 2])
        .expect("Bell state");
    let alice = attack_side(&params.alice_angles, params.pairs, input_dim, true);
    let bob = attack_side(&params.bob_angles, params.pairs, input_dim, false);
    let relabel = |side: &SideStrategy, map: &[usize]| -> Vec<usize> {
        side.transcripts()
            .iter()
            .map(|t| {
                let a1 = t[0] % 2;
                match t.get(1) {
                    Some(&a2) => map[2 * a1 + a2],
                    None => map[a1],
                }
            })
            .collect()
    };
    let fa = relabel(&alice, &params.alice_map);
    let fb = relabel(&bob, &params.bob_map);
    SequentialStrategy {
        input_dim_x: input_dim,
        input_dim_y: input_dim,
        states: vec![phi; params.pairs],
        postprocess: Postprocess::local_maps(&fa, 4, &fb, 4),
        alice,
        bob,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    /// Bell pairs available, 1 or 2.
    pub pairs: usize,
    /// Dimension of the input systems of the returned strategy.
    pub input_dim: usize,
    /// Local-search steps per restart.
    pub iterations: usize,
    pub restarts: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            pairs: 2,
            input_dim: 4,
            iterations: 3000,
            restarts: 256,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub parameters: AttackParameters,
    pub strategy: SequentialStrategy,
    /// CGLMP₄ value of the best strategy, recomputed by simulating the
    /// strategy on classical inputs.
    pub score: f64,
    /// `score > 2`.
    pub violation: bool,
    pub evaluations: usize,
}

/// Best CGLMP₄ strategy found on two Bell pairs with classical feedforward.
/// `iterations` local-search steps are spread over restarts of 1500.
pub fn sequential_cglmp_attack(seed: u64, iterations: usize) -> Result<AttackResult, AdversaryError> {
    let per = 1500;
    cglmp_attack_with(
        &AttackConfig {
            iterations: per,
            restarts: iterations.div_ceil(per).max(1),
            ..AttackConfig::default()
        },
        seed,
    )
}

/// Best response of every outcome-map entry in turn for fixed angles,
/// repeated until no entry changes. Returns the score and evaluations spent.
fn best_labels(p: &mut AttackParameters, mut score: f64) -> (f64, usize) {
    let mut evals = 0;
    loop {
        let mut improved = false;
        for side in 0..2 {
            let len = if side == 0 { p.alice_map.len() } else { p.bob_map.len() };
            for i in 0..len {
                for v in 0..4 {
                    let mut cand = p.clone();
                    let map = if side == 0 { &mut cand.alice_map } else { &mut cand.bob_map };
                    if map[i] == v {
                        continue;
                    }
                    map[i] = v;
                    let s = cand.score();
                    evals += 1;
                    if s > score + 1e-12 {
                        *p = cand;
                        score = s;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            return (score, evals);
        }
    }
}

/// Steps of the angle search between two label updates.
const LABEL_PERIOD: usize = 50;

/// Random restarts of a (1+1) evolution strategy over the measurement
/// angles. Every few steps the outcome maps are replaced by their best
/// response to the current angles, so labels never stay fitted to early
/// angles. Restarts run concurrently on independent seeded streams; ties
/// go to the lower restart.
pub fn cglmp_attack_with(config: &AttackConfig, seed: u64) -> Result<AttackResult, AdversaryError> {
    if !(1..=2).contains(&config.pairs) {
        return Err(AdversaryError::InvalidStrategy(format!(
            "attack supports 1 or 2 pairs, not {}",
            config.pairs
        )));
    }
    let restarts = config.restarts.max(1);
    let runs: Vec<(f64, AttackParameters, usize)> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from_seed(derive_seed(seed, &format!("attack-restart-{r}")));
            let mut cur = AttackParameters::random(config.pairs, &mut rng);
            let mut cur_score = cur.score();
            let mut evals = 1;
            let mut sigma: f64 = 0.5;
            for it in 0..config.iterations {
                if it % LABEL_PERIOD == 0 {
                    let before = cur_score;
                    let (s, e) = best_labels(&mut cur, cur_score);
                    cur_score = s;
                    evals += e;
                    if s > before + 1e-9 {
                        // new labels: give the angles room to move again
                        sigma = sigma.max(0.3);
                    }
                }
                let mut cand = cur.clone();
                for a in cand.alice_angles.iter_mut().chain(cand.bob_angles.iter_mut()) {
                    for v in a.iter_mut() {
                        *v += sigma * rng.sample::<f64, _>(StandardNormal);
                    }
                }
                let s = cand.score();
                evals += 1;
                if s >= cur_score {
                    cur = cand;
                    cur_score = s;
                    sigma = (sigma * 1.5).min(2.0);
                } else {
                    sigma = (sigma * 0.93).max(1e-6);
                }
            }
            let (s, e) = best_labels(&mut cur, cur_score);
            (s, cur, evals + e)
        })
        .collect();
    let evaluations = runs.iter().map(|r| r.2).sum();
    let best = runs
        .into_iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| a.0.total_cmp(&b.0).then(j.cmp(i)))
        .map(|(_, (_, p, _))| p)
        .expect("at least one restart");
    let strategy = attack_strategy(&best, config.input_dim);
    let inputs = classical_inputs(2, config.input_dim);
    let table = simulate_sequential_mdi(&strategy, &inputs, &inputs)?;
    let score = cglmp_score(&table, 4)?;
    Ok(AttackResult {
        parameters: best,
        strategy,
        score,
        violation: score > 2.0,
        evaluations,
    })
}
