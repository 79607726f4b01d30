//! Correlation tables `p(a,b|τ_x,τ_y)` produced by joint measurements of a
//! trusted input and a share of the untrusted state.
//!
//! Alice's POVM acts on `X ⊗ A`, Bob's on `B ⊗ Y`, the shared state on `A ⊗ B`.

use rand::distributions::Distribution;
use rand_distr::Binomial;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qstate::{
    bell_basis, isotropic_state, partial_trace, tensor, DensityOperator, HermitianOperator,
    InputStateSet, PureState, StateError, PSD_TOL,
};
use crate::random::{derive_seed, rng_from_seed};

/// Completeness tolerance for POVM effects.
pub const POVM_TOL: f64 = 1e-10;
/// Entry range slack for stored probabilities.
pub const PROB_TOL: f64 = 1e-9;
/// Column normalization tolerance for normalized tables.
pub const NORMALIZATION_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorrError {
    #[error(transparent)]
    State(#[from] StateError),
    #[error("invalid POVM: {0}")]
    InvalidPovm(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("table shape error: {0}")]
    Shape(String),
    #[error("probability {value} at (a={a}, b={b}, x={x}, y={y}) outside [0, 1]")]
    ProbabilityOutOfRange {
        a: usize,
        b: usize,
        x: usize,
        y: usize,
        value: f64,
    },
    #[error("setting (x={x}, y={y}) sums to {sum}, not 1")]
    NotNormalized { x: usize, y: usize, sum: f64 },
    #[error("shots per setting must be positive")]
    ZeroShots,
    #[error("table carries no shot counts")]
    MissingCounts,
    #[error("detection efficiency {0} outside (0, 1]")]
    Efficiency(f64),
}

/// A positive-operator-valued measure.
#[derive(Clone, Debug, PartialEq)]
pub struct Povm {
    effects: Vec<HermitianOperator>,
    labels: Vec<String>,
}

impl Povm {
    pub fn new(effects: Vec<HermitianOperator>, labels: Vec<String>) -> Result<Self, CorrError> {
        let first = effects
            .first()
            .ok_or_else(|| CorrError::InvalidPovm("no effects".into()))?;
        let d = first.dim();
        if labels.len() != effects.len() {
            return Err(CorrError::InvalidPovm(format!(
                "{} labels for {} effects",
                labels.len(),
                effects.len()
            )));
        }
        let mut sum = HermitianOperator::zeros(d);
        for (i, e) in effects.iter().enumerate() {
            if e.dim() != d {
                return Err(CorrError::InvalidPovm(format!(
                    "effect {i} has dim {} (expected {d})",
                    e.dim()
                )));
            }
            let min = e.min_eigenvalue();
            if min < -PSD_TOL {
                return Err(CorrError::InvalidPovm(format!(
                    "effect {i} has eigenvalue {min:.3e}"
                )));
            }
            sum = sum.add(e);
        }
        let dev = sum.max_abs_diff(&HermitianOperator::identity(d));
        if dev > POVM_TOL {
            return Err(CorrError::InvalidPovm(format!(
                "effects sum to identity only within {dev:.3e}"
            )));
        }
        Ok(Self { effects, labels })
    }

    /// Numbered labels `"0", "1", …`.
    pub fn unlabeled(effects: Vec<HermitianOperator>) -> Result<Self, CorrError> {
        let labels = (0..effects.len()).map(|i| i.to_string()).collect();
        Self::new(effects, labels)
    }

    /// Rank-one projectors onto an orthonormal basis.
    pub fn from_basis(states: &[PureState], labels: Vec<String>) -> Result<Self, CorrError> {
        Self::new(states.iter().map(PureState::projector).collect(), labels)
    }

    /// Full `d²`-outcome Bell-state measurement on `C^d ⊗ C^d`.
    pub fn bell_state_measurement(d: usize) -> Result<Self, CorrError> {
        let basis = bell_basis(d)?;
        let labels = (0..d)
            .flat_map(|c| (0..d).map(move |k| format!("bell-c{c}k{k}")))
            .collect();
        Self::from_basis(&basis, labels)
    }

    pub fn effects(&self) -> &[HermitianOperator] {
        &self.effects
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.effects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effects.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.effects[0].dim()
    }
}

/// Whether probabilities are Born-rule values or observed frequencies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableKind {
    Normalized,
    RawFrequency,
}

/// `p(a,b|x,y)` for every outcome pair and input pair, stored row-major in the
/// index order `[x][y][a][b]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationTable {
    n_a: usize,
    n_b: usize,
    inputs_x: InputStateSet,
    inputs_y: InputStateSet,
    probs: Vec<f64>,
    counts: Option<Vec<u64>>,
    kind: TableKind,
}

impl CorrelationTable {
    pub fn new(
        n_a: usize,
        n_b: usize,
        inputs_x: InputStateSet,
        inputs_y: InputStateSet,
        probs: Vec<f64>,
        kind: TableKind,
    ) -> Result<Self, CorrError> {
        let t = Self {
            n_a,
            n_b,
            inputs_x,
            inputs_y,
            probs,
            counts: None,
            kind,
        };
        t.validate()?;
        Ok(t)
    }

    /// Raw-frequency table from counts with a fixed number of shots per setting.
    pub fn from_counts(
        n_a: usize,
        n_b: usize,
        inputs_x: InputStateSet,
        inputs_y: InputStateSet,
        counts: Vec<u64>,
    ) -> Result<Self, CorrError> {
        let n_ab = n_a * n_b;
        if n_ab == 0 || counts.len() % n_ab != 0 {
            return Err(CorrError::Shape(format!(
                "{} counts for {n_a}x{n_b} outcomes",
                counts.len()
            )));
        }
        let mut probs = Vec::with_capacity(counts.len());
        for chunk in counts.chunks(n_ab) {
            let total: u64 = chunk.iter().sum();
            if total == 0 {
                return Err(CorrError::ZeroShots);
            }
            probs.extend(chunk.iter().map(|&c| c as f64 / total as f64));
        }
        let mut t = Self::new(n_a, n_b, inputs_x, inputs_y, probs, TableKind::RawFrequency)?;
        t.counts = Some(counts);
        Ok(t)
    }

    fn validate(&self) -> Result<(), CorrError> {
        if self.n_a == 0 || self.n_b == 0 {
            return Err(CorrError::Shape("zero outcomes".into()));
        }
        let expected = self.n_x() * self.n_y() * self.n_a * self.n_b;
        if self.probs.len() != expected {
            return Err(CorrError::Shape(format!(
                "{} probabilities, expected {expected}",
                self.probs.len()
            )));
        }
        for x in 0..self.n_x() {
            for y in 0..self.n_y() {
                let mut sum = 0.0;
                for a in 0..self.n_a {
                    for b in 0..self.n_b {
                        let v = self.get(a, b, x, y);
                        if !(-PROB_TOL..=1.0 + PROB_TOL).contains(&v) || v.is_nan() {
                            return Err(CorrError::ProbabilityOutOfRange {
                                a,
                                b,
                                x,
                                y,
                                value: v,
                            });
                        }
                        sum += v;
                    }
                }
                if self.kind == TableKind::Normalized && (sum - 1.0).abs() > NORMALIZATION_TOL {
                    return Err(CorrError::NotNormalized { x, y, sum });
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn index(&self, a: usize, b: usize, x: usize, y: usize) -> usize {
        ((x * self.n_y() + y) * self.n_a + a) * self.n_b + b
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, x: usize, y: usize) -> f64 {
        self.probs[self.index(a, b, x, y)]
    }

    pub fn n_a(&self) -> usize {
        self.n_a
    }

    pub fn n_b(&self) -> usize {
        self.n_b
    }

    pub fn n_x(&self) -> usize {
        self.inputs_x.len()
    }

    pub fn n_y(&self) -> usize {
        self.inputs_y.len()
    }

    pub fn inputs_x(&self) -> &InputStateSet {
        &self.inputs_x
    }

    pub fn inputs_y(&self) -> &InputStateSet {
        &self.inputs_y
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn counts(&self) -> Option<&[u64]> {
        self.counts.as_deref()
    }

    pub fn kind(&self) -> TableKind {
        self.kind
    }

    /// Shots in setting `(x, y)`, if counts are attached.
    pub fn shots(&self, x: usize, y: usize) -> Option<u64> {
        let n_ab = self.n_a * self.n_b;
        let start = (x * self.n_y() + y) * n_ab;
        self.counts
            .as_ref()
            .map(|c| c[start..start + n_ab].iter().sum())
    }

    /// Same inputs and shape as `other`.
    pub fn same_layout(&self, other: &Self) -> bool {
        self.n_a == other.n_a
            && self.n_b == other.n_b
            && self.inputs_x == other.inputs_x
            && self.inputs_y == other.inputs_y
    }

    /// Copy with replaced probabilities (counts dropped).
    pub fn with_probs(&self, probs: Vec<f64>, kind: TableKind) -> Result<Self, CorrError> {
        Self::new(
            self.n_a,
            self.n_b,
            self.inputs_x.clone(),
            self.inputs_y.clone(),
            probs,
            kind,
        )
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max)
    }

    /// Largest per-setting total-variation distance to `other`.
    pub fn max_tv_distance(&self, other: &Self) -> f64 {
        let n_ab = self.n_a * self.n_b;
        self.probs
            .chunks(n_ab)
            .zip(other.probs.chunks(n_ab))
            .map(|(p, q)| 0.5 * p.iter().zip(q).map(|(u, v)| (u - v).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

fn check_setup(
    rho: &DensityOperator,
    inputs_x: &InputStateSet,
    inputs_y: &InputStateSet,
    povm_a: &Povm,
    povm_b: &Povm,
) -> Result<[usize; 4], CorrError> {
    let sd = rho.subsystem_dims();
    if sd.len() != 2 {
        return Err(CorrError::DimensionMismatch(format!(
            "shared state must be bipartite, got subsystem dims {sd:?}"
        )));
    }
    let dims = [inputs_x.dim(), sd[0], sd[1], inputs_y.dim()];
    if povm_a.dim() != dims[0] * dims[1] {
        return Err(CorrError::DimensionMismatch(format!(
            "Alice's POVM acts on dim {}, X⊗A has dim {}",
            povm_a.dim(),
            dims[0] * dims[1]
        )));
    }
    if povm_b.dim() != dims[2] * dims[3] {
        return Err(CorrError::DimensionMismatch(format!(
            "Bob's POVM acts on dim {}, B⊗Y has dim {}",
            povm_b.dim(),
            dims[2] * dims[3]
        )));
    }
    Ok(dims)
}

/// Born-rule table `Tr[(M_a ⊗ M_b)(τ_x ⊗ ρ_AB ⊗ τ_y)]` evaluated on the full
/// `X ⊗ A ⊗ B ⊗ Y` space.
pub fn ideal_correlations(
    rho: &DensityOperator,
    inputs_x: &InputStateSet,
    inputs_y: &InputStateSet,
    povm_a: &Povm,
    povm_b: &Povm,
) -> Result<CorrelationTable, CorrError> {
    check_setup(rho, inputs_x, inputs_y, povm_a, povm_b)?;
    let (n_a, n_b) = (povm_a.len(), povm_b.len());
    let (n_x, n_y) = (inputs_x.len(), inputs_y.len());
    let joint: Vec<HermitianOperator> = povm_a
        .effects()
        .iter()
        .flat_map(|ma| povm_b.effects().iter().map(move |mb| tensor(ma, mb)))
        .collect();
    let mut probs = vec![0.0; n_x * n_y * n_a * n_b];
    probs
        .par_chunks_mut(n_a * n_b)
        .enumerate()
        .for_each(|(setting, out)| {
            let (x, y) = (setting / n_y, setting % n_y);
            let state = tensor(
                &tensor(inputs_x.states()[x].operator(), rho.operator()),
                inputs_y.states()[y].operator(),
            );
            for (slot, m) in out.iter_mut().zip(&joint) {
                *slot = m.inner(&state);
            }
        });
    clamp_roundoff(&mut probs);
    CorrelationTable::new(
        n_a,
        n_b,
        inputs_x.clone(),
        inputs_y.clone(),
        probs,
        TableKind::Normalized,
    )
}

fn clamp_roundoff(probs: &mut [f64]) {
    for p in probs {
        if *p < 0.0 && *p > -PROB_TOL {
            *p = 0.0;
        }
    }
}

/// Effective POVM `Π_ab = Tr_AB[(M_a ⊗ M_b)(I_X ⊗ ρ_AB ⊗ I_Y)]` on `X ⊗ Y`,
/// outcome-major (`index = a·n_b + b`).
pub fn effective_povm(
    rho: &DensityOperator,
    dx: usize,
    dy: usize,
    povm_a: &Povm,
    povm_b: &Povm,
) -> Result<Vec<HermitianOperator>, CorrError> {
    let sd = rho.subsystem_dims();
    if sd.len() != 2 || povm_a.dim() != dx * sd[0] || povm_b.dim() != sd[1] * dy {
        return Err(CorrError::DimensionMismatch(format!(
            "POVM dims ({}, {}) incompatible with X={dx}, AB={sd:?}, Y={dy}",
            povm_a.dim(),
            povm_b.dim()
        )));
    }
    let dims = [dx, sd[0], sd[1], dy];
    // Tr_AB[M (I⊗ρ⊗I)] = Tr_AB[(I⊗√ρ⊗I) M (I⊗√ρ⊗I)]
    let root = tensor(
        &tensor(&HermitianOperator::identity(dx), &rho.operator().sqrt_psd()),
        &HermitianOperator::identity(dy),
    );
    let pairs: Vec<(usize, usize)> = (0..povm_a.len())
        .flat_map(|a| (0..povm_b.len()).map(move |b| (a, b)))
        .collect();
    pairs
        .par_iter()
        .map(|&(a, b)| {
            let m = tensor(&povm_a.effects()[a], &povm_b.effects()[b]);
            let sandwiched = m.conjugate_by(root.matrix());
            partial_trace(&sandwiched, &dims, &[0, 3]).map_err(CorrError::from)
        })
        .collect()
}

/// Born-rule table `Tr[Π_ab (τ_x ⊗ τ_y)]` from effective operators on `X ⊗ Y`.
pub fn correlations_from_effective(
    operators: &[HermitianOperator],
    n_a: usize,
    n_b: usize,
    inputs_x: &InputStateSet,
    inputs_y: &InputStateSet,
    kind: TableKind,
) -> Result<CorrelationTable, CorrError> {
    if operators.len() != n_a * n_b {
        return Err(CorrError::Shape(format!(
            "{} operators for {n_a}x{n_b} outcomes",
            operators.len()
        )));
    }
    let d = inputs_x.dim() * inputs_y.dim();
    if let Some(op) = operators.iter().find(|o| o.dim() != d) {
        return Err(CorrError::DimensionMismatch(format!(
            "operator dim {} but inputs span dim {d}",
            op.dim()
        )));
    }
    let mut probs = Vec::with_capacity(inputs_x.len() * inputs_y.len() * n_a * n_b);
    for tx in inputs_x.states() {
        for ty in inputs_y.states() {
            let prod = tensor(tx.operator(), ty.operator());
            probs.extend(operators.iter().map(|op| op.inner(&prod)));
        }
    }
    clamp_roundoff(&mut probs);
    CorrelationTable::new(n_a, n_b, inputs_x.clone(), inputs_y.clone(), probs, kind)
}

/// Ideal table on the isotropic state `p|φ_d⟩⟨φ_d| + (1−p) I/d²`.
pub fn noisy_correlations(
    d: usize,
    p: f64,
    inputs_x: &InputStateSet,
    inputs_y: &InputStateSet,
    povm_a: &Povm,
    povm_b: &Povm,
) -> Result<CorrelationTable, CorrError> {
    let rho = isotropic_state(d, p)?;
    ideal_correlations(&rho, inputs_x, inputs_y, povm_a, povm_b)
}

/// Draws `shots_per_setting` outcomes per input pair from `table` and returns
/// the observed frequencies with the counts attached.
///
/// Setting `(x, y)` uses its own stream seeded by
/// `derive_seed(rng_seed, "setting-{index}")`, so settings sample in parallel
/// and the result depends only on the seed.
pub fn sample_counts(
    table: &CorrelationTable,
    shots_per_setting: u64,
    rng_seed: u64,
) -> Result<CorrelationTable, CorrError> {
    if shots_per_setting == 0 {
        return Err(CorrError::ZeroShots);
    }
    let n_ab = table.n_a() * table.n_b();
    let counts: Vec<u64> = table
        .probs()
        .par_chunks(n_ab)
        .enumerate()
        .flat_map_iter(|(setting, dist)| {
            let mut rng = rng_from_seed(derive_seed(rng_seed, &format!("setting-{setting}")));
            multinomial(shots_per_setting, dist, &mut rng)
        })
        .collect();
    CorrelationTable::from_counts(
        table.n_a(),
        table.n_b(),
        table.inputs_x().clone(),
        table.inputs_y().clone(),
        counts,
    )
}

/// Multinomial draw by sequential conditional binomials.
pub(crate) fn multinomial<R: rand::Rng>(n: u64, probs: &[f64], rng: &mut R) -> Vec<u64> {
    let weights: Vec<f64> = probs.iter().map(|p| p.max(0.0)).collect();
    let mut remaining_mass: f64 = weights.iter().sum();
    let mut remaining = n;
    let mut out = vec![0u64; weights.len()];
    for (i, &w) in weights.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == weights.len() || remaining_mass <= 0.0 {
            out[i] = remaining;
            break;
        }
        let q = (w / remaining_mass).clamp(0.0, 1.0);
        let k = if q >= 1.0 {
            remaining
        } else if q <= 0.0 {
            0
        } else {
            Binomial::new(remaining, q)
                .expect("valid binomial parameters")
                .sample(rng)
        };
        out[i] = k;
        remaining -= k;
        remaining_mass -= w;
    }
    out
}

/// How finite detection efficiency enters the table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum DetectionModel {
    /// Only coincidences are recorded; under the iid assumption the
    /// conditional table is unchanged.
    PostSelected,
    /// Each party fails to click with probability `1 − efficiency`,
    /// reported as an extra last outcome.
    LostOutcome { efficiency_a: f64, efficiency_b: f64 },
}

pub fn apply_detection(
    table: &CorrelationTable,
    model: DetectionModel,
) -> Result<CorrelationTable, CorrError> {
    let (ea, eb) = match model {
        DetectionModel::PostSelected => return Ok(table.clone()),
        DetectionModel::LostOutcome {
            efficiency_a,
            efficiency_b,
        } => (efficiency_a, efficiency_b),
    };
    for e in [ea, eb] {
        if !(e > 0.0 && e <= 1.0) {
            return Err(CorrError::Efficiency(e));
        }
    }
    if table.kind() != TableKind::Normalized {
        return Err(CorrError::Shape(
            "detection loss applies to normalized tables".into(),
        ));
    }
    let (n_a, n_b) = (table.n_a(), table.n_b());
    let mut probs = Vec::with_capacity(table.n_x() * table.n_y() * (n_a + 1) * (n_b + 1));
    for x in 0..table.n_x() {
        for y in 0..table.n_y() {
            let marg_a: Vec<f64> = (0..n_a)
                .map(|a| (0..n_b).map(|b| table.get(a, b, x, y)).sum())
                .collect();
            let marg_b: Vec<f64> = (0..n_b)
                .map(|b| (0..n_a).map(|a| table.get(a, b, x, y)).sum())
                .collect();
            for a in 0..=n_a {
                for b in 0..=n_b {
                    let v = match (a < n_a, b < n_b) {
                        (true, true) => ea * eb * table.get(a, b, x, y),
                        (true, false) => ea * (1.0 - eb) * marg_a[a],
                        (false, true) => (1.0 - ea) * eb * marg_b[b],
                        (false, false) => (1.0 - ea) * (1.0 - eb),
                    };
                    probs.push(v);
                }
            }
        }
    }
    CorrelationTable::new(
        n_a + 1,
        n_b + 1,
        table.inputs_x().clone(),
        table.inputs_y().clone(),
        probs,
        TableKind::Normalized,
    )
}

/// Outcome and input counts of a serialized table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct TableDims {
    n_a: usize,
    n_b: usize,
    n_x: usize,
    n_y: usize,
}

/// File form: `probs` and `counts` nested as `[x][y][a][b]`.
#[derive(Serialize, Deserialize)]
struct TableRepr {
    dims: TableDims,
    kind: TableKind,
    inputs_x: Vec<DensityOperator>,
    inputs_y: Vec<DensityOperator>,
    #[serde(default)]
    input_labels: Option<[String; 2]>,
    probs: Vec<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    counts: Option<Vec<Vec<Vec<Vec<u64>>>>>,
}

fn nest<T: Copy>(flat: &[T], d: TableDims) -> Vec<Vec<Vec<Vec<T>>>> {
    flat.chunks(d.n_y * d.n_a * d.n_b)
        .map(|xs| {
            xs.chunks(d.n_a * d.n_b)
                .map(|ys| ys.chunks(d.n_b).map(<[T]>::to_vec).collect())
                .collect()
        })
        .collect()
}

fn flatten<T: Copy>(nested: &[Vec<Vec<Vec<T>>>], d: TableDims) -> Result<Vec<T>, String> {
    let shape_ok = nested.len() == d.n_x
        && nested.iter().all(|xs| {
            xs.len() == d.n_y
                && xs
                    .iter()
                    .all(|ys| ys.len() == d.n_a && ys.iter().all(|r| r.len() == d.n_b))
        });
    if !shape_ok {
        return Err(format!(
            "nested array does not have shape [{}][{}][{}][{}]",
            d.n_x, d.n_y, d.n_a, d.n_b
        ));
    }
    Ok(nested.iter().flatten().flatten().flatten().copied().collect())
}

impl Serialize for CorrelationTable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let dims = TableDims {
            n_a: self.n_a,
            n_b: self.n_b,
            n_x: self.n_x(),
            n_y: self.n_y(),
        };
        TableRepr {
            dims,
            kind: self.kind,
            inputs_x: self.inputs_x.states().to_vec(),
            inputs_y: self.inputs_y.states().to_vec(),
            input_labels: Some([
                self.inputs_x.label().to_string(),
                self.inputs_y.label().to_string(),
            ]),
            probs: nest(&self.probs, dims),
            counts: self.counts.as_ref().map(|c| nest(c, dims)),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CorrelationTable {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let r = TableRepr::deserialize(d)?;
        let [lx, ly] = r
            .input_labels
            .unwrap_or_else(|| ["inputs_x".to_string(), "inputs_y".to_string()]);
        let inputs_x = InputStateSet::new(r.inputs_x, lx).map_err(D::Error::custom)?;
        let inputs_y = InputStateSet::new(r.inputs_y, ly).map_err(D::Error::custom)?;
        if inputs_x.len() != r.dims.n_x || inputs_y.len() != r.dims.n_y {
            return Err(D::Error::custom("input counts do not match dims"));
        }
        let probs = flatten(&r.probs, r.dims).map_err(D::Error::custom)?;
        let counts = r
            .counts
            .map(|c| flatten(&c, r.dims))
            .transpose()
            .map_err(D::Error::custom)?;
        let mut t = CorrelationTable::new(r.dims.n_a, r.dims.n_b, inputs_x, inputs_y, probs, r.kind)
            .map_err(D::Error::custom)?;
        t.counts = counts;
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{input_set_s, max_entangled, partial_transpose, qutrit_bell_states};
    use crate::random::{random_bipartite_density, random_density, rng_from_seed};

    fn qutrit_bsm() -> Povm {
        let labels = (0..9).map(|i| format!("q{i}")).collect();
        Povm::from_basis(&qutrit_bell_states(), labels).unwrap()
    }

    fn phi3() -> DensityOperator {
        DensityOperator::from_pure(&max_entangled(3).unwrap(), vec![3, 3]).unwrap()
    }

    #[test]
    fn povm_validation() {
        let half = HermitianOperator::identity(2).scaled(0.5);
        assert!(Povm::unlabeled(vec![half.clone(), half.clone()]).is_ok());
        assert!(Povm::unlabeled(vec![half.clone()]).is_err());
        let neg = HermitianOperator::from_real_diagonal(&[1.5, 1.0]);
        let comp = HermitianOperator::from_real_diagonal(&[-0.5, 0.0]);
        assert!(Povm::unlabeled(vec![neg, comp]).is_err());
        assert!(Povm::new(vec![HermitianOperator::identity(2)], vec![]).is_err());
    }

    #[test]
    fn ideal_qutrit_table_shape_and_normalization() {
        let s = input_set_s();
        let m = qutrit_bsm();
        let t = ideal_correlations(&phi3(), &s, &s, &m, &m).unwrap();
        assert_eq!((t.n_a(), t.n_b(), t.n_x(), t.n_y()), (9, 9, 6, 6));
        assert_eq!(t.probs().len(), 81 * 36);
        for x in 0..6 {
            for y in 0..6 {
                let sum: f64 = (0..9)
                    .flat_map(|a| (0..9).map(move |b| (a, b)))
                    .map(|(a, b)| t.get(a, b, x, y))
                    .sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn swapping_anchor_probability() {
        // |0⟩ inputs on both sides, both parties project on the (0,0) Bell state
        let s = input_set_s();
        let m = qutrit_bsm();
        let t = ideal_correlations(&phi3(), &s, &s, &m, &m).unwrap();
        assert!((t.get(0, 0, 0, 0) - 1.0 / 27.0).abs() < 1e-14);
    }

    #[test]
    fn maximally_mixed_factorizes() {
        let s = input_set_s();
        let m = qutrit_bsm();
        let mixed = DensityOperator::maximally_mixed(vec![3, 3]);
        let t = ideal_correlations(&mixed, &s, &s, &m, &m).unwrap();
        let third = HermitianOperator::identity(3).scaled(1.0 / 3.0);
        for x in 0..6 {
            for y in 0..6 {
                let lx = tensor(s.states()[x].operator(), &third);
                let ry = tensor(&third, s.states()[y].operator());
                for a in 0..9 {
                    for b in 0..9 {
                        let pa = m.effects()[a].inner(&lx);
                        let pb = m.effects()[b].inner(&ry);
                        assert!((t.get(a, b, x, y) - pa * pb).abs() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn effective_povm_is_complete_and_consistent() {
        let mut rng = rng_from_seed(21);
        let s = input_set_s();
        let m = qutrit_bsm();
        for _ in 0..3 {
            let rho = random_bipartite_density(3, 3, &mut rng);
            let pis = effective_povm(&rho, 3, 3, &m, &m).unwrap();
            let sum = pis
                .iter()
                .fold(HermitianOperator::zeros(9), |acc, p| acc.add(p));
            assert!(sum.max_abs_diff(&HermitianOperator::identity(9)) < 1e-10);
            assert!(pis.iter().all(|p| p.is_psd(1e-12)));
            let via_pi =
                correlations_from_effective(&pis, 9, 9, &s, &s, TableKind::Normalized).unwrap();
            let direct = ideal_correlations(&rho, &s, &s, &m, &m).unwrap();
            assert!(via_pi.max_abs_diff(&direct) < 1e-12);
        }
    }

    #[test]
    fn product_state_gives_ppt_effective_operators() {
        let mut rng = rng_from_seed(22);
        let rho = random_density(3, &mut rng).tensor(&random_density(3, &mut rng));
        let m = qutrit_bsm();
        for p in effective_povm(&rho, 3, 3, &m, &m).unwrap() {
            let pt = partial_transpose(&p, (3, 3)).unwrap();
            assert!(pt.min_eigenvalue() > -1e-12);
        }
    }

    #[test]
    fn noisy_table_is_affine_in_p() {
        let s = input_set_s();
        let m = qutrit_bsm();
        let t1 = noisy_correlations(3, 1.0, &s, &s, &m, &m).unwrap();
        let t0 = noisy_correlations(3, 0.0, &s, &s, &m, &m).unwrap();
        let pure = ideal_correlations(&phi3(), &s, &s, &m, &m).unwrap();
        let mixed =
            ideal_correlations(&DensityOperator::maximally_mixed(vec![3, 3]), &s, &s, &m, &m)
                .unwrap();
        assert!(t1.max_abs_diff(&pure) < 1e-15);
        assert!(t0.max_abs_diff(&mixed) < 1e-15);
        let p = 0.37;
        let tp = noisy_correlations(3, p, &s, &s, &m, &m).unwrap();
        for i in 0..tp.probs().len() {
            let lin = p * t1.probs()[i] + (1.0 - p) * t0.probs()[i];
            assert!((tp.probs()[i] - lin).abs() < 1e-14);
        }
    }

    #[test]
    fn sampling_single_shot_and_determinism() {
        let s = input_set_s();
        let m = qutrit_bsm();
        let t = ideal_correlations(&phi3(), &s, &s, &m, &m).unwrap();
        let one = sample_counts(&t, 1, 3).unwrap();
        let counts = one.counts().unwrap();
        for chunk in counts.chunks(81) {
            assert_eq!(chunk.iter().filter(|&&c| c > 0).count(), 1);
            assert_eq!(chunk.iter().sum::<u64>(), 1);
        }
        assert_eq!(one.kind(), TableKind::RawFrequency);
        let a = sample_counts(&t, 500, 11).unwrap();
        let b = sample_counts(&t, 500, 11).unwrap();
        assert_eq!(a, b);
        assert!(matches!(sample_counts(&t, 0, 1), Err(CorrError::ZeroShots)));
    }

    #[test]
    fn sampling_converges() {
        let s = input_set_s();
        let m = qutrit_bsm();
        let t = ideal_correlations(&phi3(), &s, &s, &m, &m).unwrap();
        let big = sample_counts(&t, 10_000_000, 5).unwrap();
        assert!(big.max_abs_diff(&t) < 1e-3);
        // total variation shrinks as shots grow, averaged over seeds
        let mean_tv = |shots: u64| -> f64 {
            (0..4)
                .map(|seed| sample_counts(&t, shots, seed).unwrap().max_tv_distance(&t))
                .sum::<f64>()
                / 4.0
        };
        let (t1, t2, t3) = (mean_tv(100), mean_tv(10_000), mean_tv(1_000_000));
        assert!(t1 > t2 && t2 > t3, "{t1} {t2} {t3}");
    }

    #[test]
    fn lost_outcome_model_stays_normalized() {
        let s = input_set_s();
        let m = qutrit_bsm();
        let t = ideal_correlations(&phi3(), &s, &s, &m, &m).unwrap();
        let same = apply_detection(&t, DetectionModel::PostSelected).unwrap();
        assert_eq!(same, t);
        let lossy = apply_detection(
            &t,
            DetectionModel::LostOutcome {
                efficiency_a: 0.222,
                efficiency_b: 0.5,
            },
        )
        .unwrap();
        assert_eq!((lossy.n_a(), lossy.n_b()), (10, 10));
        assert!(apply_detection(
            &t,
            DetectionModel::LostOutcome {
                efficiency_a: 0.0,
                efficiency_b: 1.0
            }
        )
        .is_err());
    }

    #[test]
    fn table_rejects_bad_shapes() {
        let s = input_set_s();
        assert!(CorrelationTable::new(2, 2, s.clone(), s.clone(), vec![0.25; 10], TableKind::Normalized).is_err());
        assert!(matches!(
            CorrelationTable::new(1, 1, s.clone(), s.clone(), vec![0.5; 36], TableKind::Normalized),
            Err(CorrError::NotNormalized { .. })
        ));
        assert!(CorrelationTable::new(1, 1, s.clone(), s, vec![0.5; 36], TableKind::RawFrequency).is_ok());
    }

    #[test]
    fn table_json_is_nested_x_y_a_b() {
        let set = tomographic_qubits();
        let bsm = Povm::bell_state_measurement(2).unwrap();
        let ideal = noisy_correlations(2, 0.7, &set, &set, &bsm, &bsm).unwrap();
        let raw = sample_counts(&ideal, 50, 4).unwrap();
        let v: serde_json::Value = serde_json::to_value(&raw).unwrap();
        assert_eq!(v["dims"], serde_json::json!({"n_a": 4, "n_b": 4, "n_x": 4, "n_y": 4}));
        assert_eq!(v["kind"], "raw_frequency");
        let (a, b, x, y) = (1, 3, 2, 0);
        assert_eq!(v["probs"][x][y][a][b].as_f64().unwrap(), raw.get(a, b, x, y));
        assert_eq!(
            v["counts"][x][y][a][b].as_u64().unwrap(),
            raw.counts().unwrap()[raw.index(a, b, x, y)]
        );
        let back: CorrelationTable = serde_json::from_value(v).unwrap();
        assert_eq!(back, raw);

        let mut bad: serde_json::Value = serde_json::to_value(&ideal).unwrap();
        bad["probs"][0][0][0][0] = serde_json::json!(0.9);
        assert!(serde_json::from_value::<CorrelationTable>(bad).is_err());
        let mut short: serde_json::Value = serde_json::to_value(&ideal).unwrap();
        short["probs"][1] = serde_json::json!([]);
        assert!(serde_json::from_value::<CorrelationTable>(short).is_err());
    }

    fn tomographic_qubits() -> InputStateSet {
        crate::qstate::tomographically_complete_set(2).unwrap()
    }
}
