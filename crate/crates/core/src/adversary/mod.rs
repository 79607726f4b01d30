//! Sequential low-dimensional strategies: an adversary holding `k` small
//! entangled pairs measures them one at a time, each step jointly with the
//! received input, choosing later measurements from earlier outcomes, and
//! post-processes the outcome transcripts into reported outcomes.
//!
//! Alice's step `i` acts on `X ⊗ A_i`, Bob's on `B_i ⊗ Y`. Classical inputs
//! are the special case of orthogonal input states with effects that are
//! block diagonal in that basis.
//!
//! Correlations are computed two independent ways: by updating the state
//! through each measurement in turn ([`simulate_sequential_mdi`]), and by
//! first composing each side's steps into one effective operator per
//! transcript ([`effective_operators`], [`simulate_from_effective`]).

mod cglmp;
mod random;

pub use cglmp::{
    attack_strategy, cglmp_attack_with, cglmp_local_bound, cglmp_score, classical_inputs,
    sequential_cglmp_attack, AttackConfig, AttackParameters, AttackResult,
};
pub use random::{random_strategy, split_input_strategy};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conic::{gr_ppt_with, SolverError, SolverSettings};
use crate::corrsim::{CorrError, CorrelationTable, Povm, TableKind};
use crate::qstate::serde_impl::{matrix_from_pairs, matrix_to_pairs};
use crate::qstate::{
    embed_matrix, partial_trace, permute_subsystems, tensor, CMatrix, DensityOperator,
    HermitianOperator, InputStateSet, StateError,
};

/// Tolerance on `K†K = M` for explicit Kraus operators and on post-processing rows.
pub const STRATEGY_TOL: f64 = 1e-10;
/// Slack allowed above `Tr·(m−1)` before a per-operator check counts as violated.
pub const THEOREM1_TOL: f64 = 1e-5;

/// Residual level at which a stalled robustness solve is still accepted.
const THEOREM1_ACCEPT_TOL: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdversaryError {
    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Table(#[from] CorrError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("table shape error: {0}")]
    Shape(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, AdversaryError> {
    Err(AdversaryError::InvalidStrategy(msg.into()))
}

/// Outcomes of one side's steps so far.
pub type Transcript = Vec<usize>;

/// A general (not necessarily Hermitian) square matrix in the `[re, im]` pair layout.
#[derive(Clone, Debug, PartialEq)]
pub struct KrausOperator(pub CMatrix);

impl Serialize for KrausOperator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        matrix_to_pairs(&self.0).serialize(s)
    }
}

impl<'de> Deserialize<'de> for KrausOperator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        matrix_from_pairs(&rows)
            .map(KrausOperator)
            .map_err(serde::de::Error::custom)
    }
}

/// The measurement a side performs at one step after a given transcript.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRule {
    pub transcript: Transcript,
    pub effects: Vec<HermitianOperator>,
    /// Instrument realizing the effects. The square-root instrument
    /// `M^{1/2}·M^{1/2}` is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kraus: Option<Vec<KrausOperator>>,
}

impl StepRule {
    pub fn new(transcript: Transcript, effects: Vec<HermitianOperator>) -> Self {
        Self {
            transcript,
            effects,
            kraus: None,
        }
    }

    fn kraus_ops(&self) -> Vec<CMatrix> {
        match &self.kraus {
            Some(k) => k.iter().map(|k| k.0.clone()).collect(),
            None => self
                .effects
                .iter()
                .map(|e| e.sqrt_psd().into_matrix())
                .collect(),
        }
    }
}

/// One party's lookup tables: `steps[i]` holds a rule for every transcript
/// that can reach step `i`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SideStrategy {
    pub steps: Vec<Vec<StepRule>>,
}

impl SideStrategy {
    pub fn rule(&self, step: usize, transcript: &[usize]) -> Option<&StepRule> {
        self.steps
            .get(step)?
            .iter()
            .find(|r| r.transcript == transcript)
    }

    /// Every complete transcript, in lexicographic order.
    pub fn transcripts(&self) -> Vec<Transcript> {
        let mut out = Vec::new();
        let mut stack = vec![Vec::new()];
        while let Some(t) = stack.pop() {
            if t.len() == self.steps.len() {
                out.push(t);
                continue;
            }
            if let Some(rule) = self.rule(t.len(), &t) {
                for j in (0..rule.effects.len()).rev() {
                    let mut next = t.clone();
                    next.push(j);
                    stack.push(next);
                }
            }
        }
        out
    }
}

/// Map from transcripts to reported outcomes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Postprocess {
    /// Reports the transcript index itself.
    Identity,
    /// Independent `p(a|S_a)` and `p(b|S_b)`, one row per transcript.
    Local {
        alice: Vec<Vec<f64>>,
        bob: Vec<Vec<f64>>,
    },
    /// Joint `p(a,b|S_a,S_b)`; row `s_a·|S_b| + s_b`, column `a·n_b + b`.
    Joint {
        n_a: usize,
        n_b: usize,
        rows: Vec<Vec<f64>>,
    },
}

impl Postprocess {
    /// Deterministic local relabeling `a = fa[s_a]`, `b = fb[s_b]`.
    pub fn local_maps(fa: &[usize], n_a: usize, fb: &[usize], n_b: usize) -> Self {
        let one_hot = |f: &[usize], n: usize| -> Vec<Vec<f64>> {
            f.iter()
                .map(|&v| {
                    let mut r = vec![0.0; n];
                    r[v] = 1.0;
                    r
                })
                .collect()
        };
        Postprocess::Local {
            alice: one_hot(fa, n_a),
            bob: one_hot(fb, n_b),
        }
    }

    fn outcome_counts(&self, n_sa: usize, n_sb: usize) -> (usize, usize) {
        match self {
            Postprocess::Identity => (n_sa, n_sb),
            Postprocess::Local { alice, bob } => (
                alice.first().map_or(0, Vec::len),
                bob.first().map_or(0, Vec::len),
            ),
            Postprocess::Joint { n_a, n_b, .. } => (*n_a, *n_b),
        }
    }

    fn validate(&self, n_sa: usize, n_sb: usize) -> Result<(), AdversaryError> {
        let check_rows = |rows: &[Vec<f64>], n_rows: usize, width: usize, who: &str| {
            if rows.len() != n_rows {
                return invalid(format!("{who}: {} rows for {n_rows} transcripts", rows.len()));
            }
            for (i, r) in rows.iter().enumerate() {
                if r.len() != width || width == 0 {
                    return invalid(format!("{who}: row {i} has width {}", r.len()));
                }
                if r.iter().any(|&v| v < -STRATEGY_TOL) {
                    return invalid(format!("{who}: row {i} has a negative entry"));
                }
                let s: f64 = r.iter().sum();
                if (s - 1.0).abs() > STRATEGY_TOL {
                    return invalid(format!("{who}: row {i} sums to {s}"));
                }
            }
            Ok(())
        };
        match self {
            Postprocess::Identity => Ok(()),
            Postprocess::Local { alice, bob } => {
                let w = alice.first().map_or(0, Vec::len);
                check_rows(alice, n_sa, w, "alice postprocess")?;
                let w = bob.first().map_or(0, Vec::len);
                check_rows(bob, n_sb, w, "bob postprocess")
            }
            Postprocess::Joint { n_a, n_b, rows } => {
                check_rows(rows, n_sa * n_sb, n_a * n_b, "joint postprocess")
            }
        }
    }

    /// `p(a,b|S_a,S_b)` as a dense row for the given transcript pair.
    fn weight(&self, sa: usize, sb: usize, n_sb: usize, a: usize, b: usize, n_b: usize) -> f64 {
        match self {
            Postprocess::Identity => {
                if sa == a && sb == b {
                    1.0
                } else {
                    0.0
                }
            }
            Postprocess::Local { alice, bob } => alice[sa][a] * bob[sb][b],
            Postprocess::Joint { rows, .. } => rows[sa * n_sb + sb][a * n_b + b],
        }
    }
}

/// `k` pairs `ρ_{A_i B_i}`, each side's step tables, and the final
/// post-processing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequentialStrategy {
    /// Dimension of Alice's input system `X`.
    pub input_dim_x: usize,
    /// Dimension of Bob's input system `Y`.
    pub input_dim_y: usize,
    /// `ρ_{A_i B_i}` with subsystem dims `[m_Ai, m_Bi]`.
    pub states: Vec<DensityOperator>,
    pub alice: SideStrategy,
    pub bob: SideStrategy,
    pub postprocess: Postprocess,
}

impl SequentialStrategy {
    pub fn k(&self) -> usize {
        self.states.len()
    }

    pub fn alice_dims(&self) -> Vec<usize> {
        self.states.iter().map(|s| s.subsystem_dims()[0]).collect()
    }

    pub fn bob_dims(&self) -> Vec<usize> {
        self.states.iter().map(|s| s.subsystem_dims()[1]).collect()
    }

    /// Largest local dimension `m` over all pairs.
    pub fn max_local_dim(&self) -> usize {
        self.alice_dims()
            .into_iter()
            .chain(self.bob_dims())
            .max()
            .unwrap_or(0)
    }

    /// Dimension `n′` of one side's composite system.
    pub fn composite_dims(&self) -> (usize, usize) {
        (
            self.alice_dims().iter().product(),
            self.bob_dims().iter().product(),
        )
    }

    /// Reported outcome counts `(n_a, n_b)`.
    pub fn outcome_counts(&self) -> (usize, usize) {
        self.postprocess
            .outcome_counts(self.alice.transcripts().len(), self.bob.transcripts().len())
    }

    /// `ρ_{A_1B_1} ⊗ … ⊗ ρ_{A_kB_k}` reordered to `A_1…A_k ⊗ B_1…B_k`.
    pub fn composite_state(&self) -> Result<DensityOperator, AdversaryError> {
        let k = self.k();
        let mut op = self.states[0].operator().clone();
        let mut dims = self.states[0].subsystem_dims().to_vec();
        for s in &self.states[1..] {
            op = tensor(&op, s.operator());
            dims.extend_from_slice(s.subsystem_dims());
        }
        // dims are A_1 B_1 A_2 B_2 …; position p of the result takes factor perm[p]
        let perm: Vec<usize> = (0..k).map(|i| 2 * i).chain((0..k).map(|i| 2 * i + 1)).collect();
        let op = permute_subsystems(&op, &dims, &perm)?;
        let (da, db) = self.composite_dims();
        Ok(DensityOperator::new(op, vec![da, db])?)
    }

    pub fn validate(&self) -> Result<(), AdversaryError> {
        let k = self.k();
        if k == 0 {
            return invalid("no entangled pairs");
        }
        if self.input_dim_x == 0 || self.input_dim_y == 0 {
            return invalid("zero input dimension");
        }
        if let Some(i) = self.states.iter().position(|s| s.subsystem_dims().len() != 2) {
            return invalid(format!("state {i} is not bipartite"));
        }
        let (ad, bd) = (self.alice_dims(), self.bob_dims());
        validate_side(&self.alice, "alice", k, |i| self.input_dim_x * ad[i])?;
        validate_side(&self.bob, "bob", k, |i| bd[i] * self.input_dim_y)?;
        self.postprocess
            .validate(self.alice.transcripts().len(), self.bob.transcripts().len())
    }
}

fn validate_side(
    side: &SideStrategy,
    who: &str,
    k: usize,
    step_dim: impl Fn(usize) -> usize,
) -> Result<(), AdversaryError> {
    if side.steps.len() != k {
        return invalid(format!("{who}: {} steps for {k} pairs", side.steps.len()));
    }
    // walk every reachable transcript so missing rules are caught
    let mut frontier: Vec<Transcript> = vec![Vec::new()];
    for (i, rules) in side.steps.iter().enumerate() {
        let mut next = Vec::new();
        for t in &frontier {
            let matching = rules.iter().filter(|r| &r.transcript == t).count();
            if matching != 1 {
                return invalid(format!(
                    "{who}: step {i} has {matching} rules for transcript {t:?}"
                ));
            }
            let rule = side.rule(i, t).expect("counted above");
            let d = step_dim(i);
            if rule.effects.iter().any(|e| e.dim() != d) {
                return invalid(format!("{who}: step {i} effects are not {d}-dimensional"));
            }
            Povm::unlabeled(rule.effects.clone())
                .map_err(|e| AdversaryError::InvalidStrategy(format!("{who}: step {i}: {e}")))?;
            if let Some(kraus) = &rule.kraus {
                if kraus.len() != rule.effects.len() {
                    return invalid(format!("{who}: step {i} Kraus count mismatch"));
                }
                for (j, (kr, e)) in kraus.iter().zip(&rule.effects).enumerate() {
                    let kk = HermitianOperator::from_hermitian_part(kr.0.adjoint() * &kr.0);
                    if kr.0.nrows() != d || kk.max_abs_diff(e) > STRATEGY_TOL {
                        return invalid(format!("{who}: step {i} Kraus {j} does not give its effect"));
                    }
                }
            }
            for j in 0..rule.effects.len() {
                let mut n = t.clone();
                n.push(j);
                next.push(n);
            }
        }
        frontier = next;
    }
    Ok(())
}

/// Applies each side's instruments to `τ_x ⊗ ρ̄ ⊗ τ_y` step by step and
/// post-processes the transcript statistics into a table.
///
/// Alice's and Bob's operations act on disjoint systems and commute, so
/// Alice's steps are applied first (to `X ⊗ A ⊗ B`), her systems traced out,
/// and Bob's steps applied to the conditional state on `B ⊗ Y`.
pub fn simulate_sequential_mdi(
    strategy: &SequentialStrategy,
    inputs_x: &InputStateSet,
    inputs_y: &InputStateSet,
) -> Result<CorrelationTable, AdversaryError> {
    strategy.validate()?;
    if inputs_x.dim() != strategy.input_dim_x || inputs_y.dim() != strategy.input_dim_y {
        return invalid(format!(
            "inputs have dims ({}, {}), strategy expects ({}, {})",
            inputs_x.dim(),
            inputs_y.dim(),
            strategy.input_dim_x,
            strategy.input_dim_y
        ));
    }
    let k = strategy.k();
    let rho = strategy.composite_state()?;
    let (ad, bd) = (strategy.alice_dims(), strategy.bob_dims());
    let sa_list = strategy.alice.transcripts();
    let sb_list = strategy.bob.transcripts();

    // conditional (unnormalized) states of B after Alice's transcript, per x
    let mut alice_dims = vec![strategy.input_dim_x];
    alice_dims.extend_from_slice(&ad);
    alice_dims.extend_from_slice(&bd);
    let keep_b: Vec<usize> = (k + 1..=2 * k).collect();
    let conditional: Vec<Vec<CMatrix>> = inputs_x
        .states()
        .par_iter()
        .map(|tx| -> Result<Vec<CMatrix>, AdversaryError> {
            let start = tensor(tx.operator(), rho.operator()).into_matrix();
            let leaves = run_instruments(&strategy.alice, start, &alice_dims, |i| vec![0, 1 + i])?;
            leaves
                .into_iter()
                .map(|m| {
                    let h = HermitianOperator::from_hermitian_part(m);
                    Ok(partial_trace(&h, &alice_dims, &keep_b)?.into_matrix())
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;

    let mut bob_dims = bd.clone();
    bob_dims.push(strategy.input_dim_y);
    let n_sb = sb_list.len();
    let (n_a, n_b) = strategy.outcome_counts();
    let (n_x, n_y) = (inputs_x.len(), inputs_y.len());
    let settings: Vec<(usize, usize)> =
        (0..n_x).flat_map(|x| (0..n_y).map(move |y| (x, y))).collect();
    let blocks: Vec<Vec<f64>> = settings
        .par_iter()
        .map(|&(x, y)| -> Result<Vec<f64>, AdversaryError> {
            let ty = inputs_y.states()[y].operator().matrix();
            let mut joint = vec![0.0; sa_list.len() * n_sb];
            for (sa, sigma) in conditional[x].iter().enumerate() {
                let start = sigma.kronecker(ty);
                let leaves = run_instruments(&strategy.bob, start, &bob_dims, |i| vec![i, k])?;
                for (sb, m) in leaves.iter().enumerate() {
                    joint[sa * n_sb + sb] = m.trace().re;
                }
            }
            Ok(apply_postprocess(&strategy.postprocess, &joint, sa_list.len(), n_sb, n_a, n_b))
        })
        .collect::<Result<_, _>>()?;
    let mut probs: Vec<f64> = blocks.into_iter().flatten().collect();
    clamp(&mut probs);
    Ok(CorrelationTable::new(
        n_a,
        n_b,
        inputs_x.clone(),
        inputs_y.clone(),
        probs,
        TableKind::Normalized,
    )?)
}

/// Runs one side's instrument tree from `start`, returning the
/// post-measurement operator of every complete transcript in lexicographic
/// order. `targets(i)` lists the subsystems step `i` acts on.
fn run_instruments(
    side: &SideStrategy,
    start: CMatrix,
    dims: &[usize],
    targets: impl Fn(usize) -> Vec<usize>,
) -> Result<Vec<CMatrix>, AdversaryError> {
    let mut out = Vec::new();
    walk(side, Vec::new(), start, dims, &targets, &mut |_, m| out.push(m))?;
    Ok(out)
}

/// Depth-first walk over transcripts, conjugating the state by each Kraus
/// operator in turn. Children are visited in outcome order.
fn walk(
    side: &SideStrategy,
    transcript: Transcript,
    state: CMatrix,
    dims: &[usize],
    targets: &impl Fn(usize) -> Vec<usize>,
    leaf: &mut impl FnMut(Transcript, CMatrix),
) -> Result<(), AdversaryError> {
    let step = transcript.len();
    if step == side.steps.len() {
        leaf(transcript, state);
        return Ok(());
    }
    let rule = side
        .rule(step, &transcript)
        .ok_or_else(|| AdversaryError::InvalidStrategy(format!("no rule for {transcript:?}")))?;
    for (j, k) in rule.kraus_ops().iter().enumerate() {
        let full = embed_matrix(k, dims, &targets(step))?;
        let next = &full * &state * full.adjoint();
        let mut t = transcript.clone();
        t.push(j);
        walk(side, t, next, dims, targets, leaf)?;
    }
    Ok(())
}

fn apply_postprocess(
    post: &Postprocess,
    joint: &[f64],
    n_sa: usize,
    n_sb: usize,
    n_a: usize,
    n_b: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; n_a * n_b];
    match post {
        // skip the dense loops for the common deterministic/local forms
        Postprocess::Identity => out.copy_from_slice(joint),
        Postprocess::Local { alice, bob } => {
            for sa in 0..n_sa {
                for sb in 0..n_sb {
                    let p = joint[sa * n_sb + sb];
                    if p == 0.0 {
                        continue;
                    }
                    for (a, wa) in alice[sa].iter().enumerate().filter(|(_, w)| **w != 0.0) {
                        for (b, wb) in bob[sb].iter().enumerate().filter(|(_, w)| **w != 0.0) {
                            out[a * n_b + b] += p * wa * wb;
                        }
                    }
                }
            }
        }
        Postprocess::Joint { .. } => {
            for sa in 0..n_sa {
                for sb in 0..n_sb {
                    let p = joint[sa * n_sb + sb];
                    for a in 0..n_a {
                        for b in 0..n_b {
                            out[a * n_b + b] += p * post.weight(sa, sb, n_sb, a, b, n_b);
                        }
                    }
                }
            }
        }
    }
    out
}

fn clamp(probs: &mut [f64]) {
    for p in probs {
        if *p < 0.0 && *p > -1e-9 {
            *p = 0.0;
        }
    }
}

/// One composed operator per complete transcript.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveOperator {
    pub transcript: Transcript,
    pub operator: HermitianOperator,
}

/// Each side's steps composed into single operators: Alice's on
/// `X ⊗ A_1…A_k`, Bob's on `B_1…B_k ⊗ Y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveSequentialOperators {
    pub alice: Vec<EffectiveOperator>,
    pub bob: Vec<EffectiveOperator>,
}

/// `Ā_{S_a} = K_1†…K_k† K_k…K_1` with `K_i` the instrument of step `i` on
/// the transcript's path; analogously for Bob.
pub fn effective_operators(
    strategy: &SequentialStrategy,
) -> Result<EffectiveSequentialOperators, AdversaryError> {
    strategy.validate()?;
    let k = strategy.k();
    let mut adims = vec![strategy.input_dim_x];
    adims.extend(strategy.alice_dims());
    let mut bdims = strategy.bob_dims();
    bdims.push(strategy.input_dim_y);
    let compose = |side: &SideStrategy,
                   dims: &[usize],
                   targets: &dyn Fn(usize) -> Vec<usize>|
     -> Result<Vec<EffectiveOperator>, AdversaryError> {
        let d: usize = dims.iter().product();
        let mut out = Vec::new();
        compose_walk(side, Vec::new(), CMatrix::identity(d, d), dims, targets, &mut out)?;
        Ok(out)
    };
    Ok(EffectiveSequentialOperators {
        alice: compose(&strategy.alice, &adims, &|i| vec![0, 1 + i])?,
        bob: compose(&strategy.bob, &bdims, &|i| vec![i, k])?,
    })
}

fn compose_walk(
    side: &SideStrategy,
    transcript: Transcript,
    acc: CMatrix,
    dims: &[usize],
    targets: &dyn Fn(usize) -> Vec<usize>,
    out: &mut Vec<EffectiveOperator>,
) -> Result<(), AdversaryError> {
    let step = transcript.len();
    if step == side.steps.len() {
        out.push(EffectiveOperator {
            operator: HermitianOperator::from_hermitian_part(acc.adjoint() * &acc),
            transcript,
        });
        return Ok(());
    }
    let rule = side
        .rule(step, &transcript)
        .ok_or_else(|| AdversaryError::InvalidStrategy(format!("no rule for {transcript:?}")))?;
    for (j, k) in rule.kraus_ops().iter().enumerate() {
        let full = embed_matrix(k, dims, &targets(step))?;
        let mut t = transcript.clone();
        t.push(j);
        compose_walk(side, t, &full * &acc, dims, targets, out)?;
    }
    Ok(())
}

/// `Tr[(Ā_{S_a} ⊗ B̄_{S_b})(τ_x ⊗ ρ̄ ⊗ τ_y)]`, post-processed.
pub fn simulate_from_effective(
    strategy: &SequentialStrategy,
    ops: &EffectiveSequentialOperators,
    inputs_x: &InputStateSet,
    inputs_y: &InputStateSet,
) -> Result<CorrelationTable, AdversaryError> {
    let rho = strategy.composite_state()?;
    let (da, db) = strategy.composite_dims();
    let (nx_dim, ny_dim) = (strategy.input_dim_x, strategy.input_dim_y);
    if inputs_x.dim() != nx_dim || inputs_y.dim() != ny_dim {
        return invalid("input dimensions do not match the strategy");
    }
    // Tr_X[(√τ ⊗ I) Ā (√τ ⊗ I)] for every (x, S_a); likewise on Bob's side
    let reduce = |op: &HermitianOperator, root: &HermitianOperator, first: bool| {
        if first {
            let r = tensor(root, &HermitianOperator::identity(da));
            partial_trace(&op.conjugate_by(r.matrix()), &[nx_dim, da], &[1])
        } else {
            let r = tensor(&HermitianOperator::identity(db), root);
            partial_trace(&op.conjugate_by(r.matrix()), &[db, ny_dim], &[0])
        }
    };
    let alpha: Vec<Vec<HermitianOperator>> = inputs_x
        .states()
        .iter()
        .map(|t| {
            let root = t.operator().sqrt_psd();
            ops.alice.iter().map(|o| reduce(&o.operator, &root, true)).collect()
        })
        .collect::<Result<_, _>>()?;
    let beta: Vec<Vec<HermitianOperator>> = inputs_y
        .states()
        .iter()
        .map(|t| {
            let root = t.operator().sqrt_psd();
            ops.bob.iter().map(|o| reduce(&o.operator, &root, false)).collect()
        })
        .collect::<Result<_, _>>()?;

    let (n_sa, n_sb) = (ops.alice.len(), ops.bob.len());
    let (n_a, n_b) = strategy.postprocess.outcome_counts(n_sa, n_sb);
    let settings: Vec<(usize, usize)> = (0..inputs_x.len())
        .flat_map(|x| (0..inputs_y.len()).map(move |y| (x, y)))
        .collect();
    let blocks: Vec<Vec<f64>> = settings
        .par_iter()
        .map(|&(x, y)| {
            let mut joint = vec![0.0; n_sa * n_sb];
            for (sa, a) in alpha[x].iter().enumerate() {
                for (sb, b) in beta[y].iter().enumerate() {
                    joint[sa * n_sb + sb] = tensor(a, b).inner(rho.operator());
                }
            }
            apply_postprocess(&strategy.postprocess, &joint, n_sa, n_sb, n_a, n_b)
        })
        .collect();
    let mut probs: Vec<f64> = blocks.into_iter().flatten().collect();
    clamp(&mut probs);
    Ok(CorrelationTable::new(
        n_a,
        n_b,
        inputs_x.clone(),
        inputs_y.clone(),
        probs,
        TableKind::Normalized,
    )?)
}

/// Robustness of one effective operator against its bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorBound {
    pub transcript: Transcript,
    pub trace: f64,
    pub gr_ppt: f64,
    /// `Tr·(m−1)`.
    pub bound: f64,
    /// `bound − gr_ppt`; negative beyond tolerance is a violation.
    pub slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub m: usize,
    pub alice: Vec<OperatorBound>,
    pub bob: Vec<OperatorBound>,
    /// Operators with `gr_ppt > bound + THEOREM1_TOL`.
    pub violations: usize,
}

/// Evaluates every effective operator's robustness across the input |
/// composite cut against `Tr·(m−1)`.
pub fn check_theorem1(strategy: &SequentialStrategy) -> Result<Theorem1Report, AdversaryError> {
    let ops = effective_operators(strategy)?;
    let m = strategy.max_local_dim();
    let (da, db) = strategy.composite_dims();
    // composed projective steps are rank deficient, where the interior-point
    // method stalls just short of its tolerance
    let settings = SolverSettings {
        accept_tol: Some(THEOREM1_ACCEPT_TOL),
        ..SolverSettings::with_tol(1e-9)
    };
    let bound_all = |list: &[EffectiveOperator], dims: (usize, usize)| {
        list.par_iter()
            .map(|o| -> Result<OperatorBound, AdversaryError> {
                let trace = o.operator.trace();
                let gr = gr_ppt_with(&o.operator, dims, &settings)?.0;
                let bound = trace * (m as f64 - 1.0);
                Ok(OperatorBound {
                    transcript: o.transcript.clone(),
                    trace,
                    gr_ppt: gr,
                    bound,
                    slack: bound - gr,
                })
            })
            .collect::<Result<Vec<_>, _>>()
    };
    let alice = bound_all(&ops.alice, (strategy.input_dim_x, da))?;
    let bob = bound_all(&ops.bob, (db, strategy.input_dim_y))?;
    let violations = alice
        .iter()
        .chain(&bob)
        .filter(|b| b.slack < -THEOREM1_TOL)
        .count();
    Ok(Theorem1Report {
        m,
        alice,
        bob,
        violations,
    })
}
