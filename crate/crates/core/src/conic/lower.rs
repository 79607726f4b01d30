//! Lowering of Hermitian programs to the backend's real standard form
//! `min ½xᵀPx + qᵀx  s.t.  Ax + s = b,  s ∈ {0}ᵐ¹ × ℝ₊ᵐ² × PSD(2n₁) × …`.

use std::f64::consts::SQRT_2;
use std::time::Duration;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use super::{
    ConicProgram, Equality, EqualityDual, LinearFunctional, MatrixExpr, MatrixMap, SolveResult,
    SolveStatus, SolverError, SolverSettings,
};
use crate::qstate::{CMatrix, HermitianOperator, C64};

/// Coordinates of a Hermitian block of size `n`: `n` diagonal entries, then
/// `(Re, Im)` of each upper-triangle entry in row-major order.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Coord {
    Diag(usize),
    Re(usize, usize),
    Im(usize, usize),
}

fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

fn coords(n: usize) -> Vec<Coord> {
    let mut out: Vec<Coord> = (0..n).map(Coord::Diag).collect();
    for i in 0..n {
        for j in i + 1..n {
            out.push(Coord::Re(i, j));
            out.push(Coord::Im(i, j));
        }
    }
    out
}

fn coord_index(n: usize, c: Coord) -> usize {
    match c {
        Coord::Diag(i) => i,
        Coord::Re(i, j) => n + 2 * pair_index(n, i, j),
        Coord::Im(i, j) => n + 2 * pair_index(n, i, j) + 1,
    }
}

/// Entries `(row, col, value)` of the basis matrix of one coordinate, both
/// triangles listed.
fn basis_entries(c: Coord) -> Vec<(usize, usize, C64)> {
    let one = C64::new(1.0, 0.0);
    match c {
        Coord::Diag(i) => vec![(i, i, one)],
        Coord::Re(i, j) => vec![(i, j, one), (j, i, one)],
        Coord::Im(i, j) => vec![(i, j, C64::i()), (j, i, -C64::i())],
    }
}

fn apply_map(map: MatrixMap, entries: &mut [(usize, usize, C64)]) {
    if let MatrixMap::PartialTranspose { dims: (_, db) } = map {
        for e in entries.iter_mut() {
            let (a, b) = (e.0 / db, e.0 % db);
            let (a2, b2) = (e.1 / db, e.1 % db);
            e.0 = a * db + b2;
            e.1 = a2 * db + b;
        }
    }
}

/// Coordinates of a Hermitian matrix given by sparse entries (upper triangle read).
fn hermitian_coords(n: usize, entries: &[(usize, usize, C64)], out: &mut Vec<(usize, f64)>) {
    for &(r, c, z) in entries {
        if r == c {
            out.push((r, z.re));
        } else if r < c {
            out.push((coord_index(n, Coord::Re(r, c)), z.re));
            out.push((coord_index(n, Coord::Im(r, c)), z.im));
        }
    }
}

fn svec_index(row: usize, col: usize) -> usize {
    debug_assert!(row <= col);
    col * (col + 1) / 2 + row
}

/// Scaled upper-triangle coordinates of the real embedding of a Hermitian
/// matrix given by sparse entries (both triangles listed).
fn embedded_svec(n: usize, entries: &[(usize, usize, C64)], out: &mut Vec<(usize, f64)>) {
    for &(r, c, z) in entries {
        if r <= c {
            let s = if r == c { 1.0 } else { SQRT_2 };
            if z.re != 0.0 {
                out.push((svec_index(r, c), s * z.re));
                out.push((svec_index(n + r, n + c), s * z.re));
            }
        }
        if z.im != 0.0 {
            out.push((svec_index(r, n + c), -SQRT_2 * z.im));
        }
    }
}

fn dense_entries(m: &CMatrix) -> Vec<(usize, usize, C64)> {
    let n = m.nrows();
    let mut out = Vec::new();
    for c in 0..n {
        for r in 0..n {
            let z = m[(r, c)];
            if z != C64::new(0.0, 0.0) {
                out.push((r, c, z));
            }
        }
    }
    out
}

/// Inverse of [`embedded_svec`] for a dual vector: returns the complex
/// matrix `Z` with `Re Tr(H Z) = ⟨svec(embed H), z⟩` for all Hermitian `H`.
fn dual_from_svec(n: usize, z: &[f64]) -> HermitianOperator {
    let big = 2 * n;
    let mut real = vec![0.0; big * big];
    let mut idx = 0;
    for col in 0..big {
        for row in 0..=col {
            let v = if row == col { z[idx] } else { z[idx] / SQRT_2 };
            real[row * big + col] = v;
            real[col * big + row] = v;
            idx += 1;
        }
    }
    let at = |r: usize, c: usize| real[r * big + c];
    let m = CMatrix::from_fn(n, n, |i, j| {
        C64::new(at(i, j) + at(n + i, n + j), at(n + i, j) - at(i, n + j))
    });
    HermitianOperator::from_hermitian_part(m)
}

struct Layout {
    block_offset: Vec<usize>,
    block_dim: Vec<usize>,
    scalar_offset: usize,
    n_vars: usize,
}

impl Layout {
    fn new(p: &ConicProgram) -> Self {
        let mut off = 0;
        let mut block_offset = Vec::with_capacity(p.blocks.len());
        let mut block_dim = Vec::with_capacity(p.blocks.len());
        for b in &p.blocks {
            block_offset.push(off);
            block_dim.push(b.dim);
            off += b.dim * b.dim;
        }
        Self {
            block_offset,
            block_dim,
            scalar_offset: off,
            n_vars: off + p.scalars.len(),
        }
    }

    fn block_from_x(&self, block: usize, x: &[f64]) -> HermitianOperator {
        let n = self.block_dim[block];
        let off = self.block_offset[block];
        let mut m = CMatrix::zeros(n, n);
        for (k, c) in coords(n).into_iter().enumerate() {
            let v = x[off + k];
            match c {
                Coord::Diag(i) => m[(i, i)] = C64::new(v, 0.0),
                Coord::Re(i, j) => {
                    m[(i, j)].re = v;
                    m[(j, i)].re = v;
                }
                Coord::Im(i, j) => {
                    m[(i, j)].im = v;
                    m[(j, i)].im = -v;
                }
            }
        }
        HermitianOperator::from_hermitian_part(m)
    }
}

#[derive(Default)]
struct Triplets {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Triplets {
    fn push(&mut self, r: usize, c: usize, v: f64) {
        if v != 0.0 {
            self.rows.push(r);
            self.cols.push(c);
            self.vals.push(v);
        }
    }

    fn into_csc(self, m: usize, n: usize) -> CscMatrix<f64> {
        let mut order: Vec<usize> = (0..self.vals.len()).collect();
        order.sort_unstable_by_key(|&k| (self.cols[k], self.rows[k]));
        let mut colptr = vec![0usize; n + 1];
        let mut rowval: Vec<usize> = Vec::with_capacity(order.len());
        let mut nzval: Vec<f64> = Vec::with_capacity(order.len());
        let mut last: Option<(usize, usize)> = None;
        for k in order {
            let key = (self.cols[k], self.rows[k]);
            if last == Some(key) {
                *nzval.last_mut().expect("previous entry") += self.vals[k];
                continue;
            }
            last = Some(key);
            rowval.push(key.1);
            nzval.push(self.vals[k]);
            colptr[key.0 + 1] += 1;
        }
        for j in 0..n {
            colptr[j + 1] += colptr[j];
        }
        CscMatrix::new(m, n, colptr, rowval, nzval)
    }
}

/// Coefficients of `Re Tr(C X)` on the coordinates of `X`.
fn functional_coeffs(c: &HermitianOperator) -> Vec<(usize, f64)> {
    let n = c.dim();
    let m = c.matrix();
    let mut out = Vec::new();
    for (k, co) in coords(n).into_iter().enumerate() {
        let v = match co {
            Coord::Diag(i) => m[(i, i)].re,
            Coord::Re(i, j) => 2.0 * m[(i, j)].re,
            Coord::Im(i, j) => 2.0 * m[(i, j)].im,
        };
        if v != 0.0 {
            out.push((k, v));
        }
    }
    out
}

fn push_functional(t: &mut Triplets, row: usize, f: &LinearFunctional, lay: &Layout, sign: f64) {
    for (b, c) in &f.block_terms {
        let off = lay.block_offset[b.0];
        for (k, v) in functional_coeffs(c) {
            t.push(row, off + k, sign * v);
        }
    }
    for (s, v) in &f.scalar_terms {
        t.push(row, lay.scalar_offset + s.0, sign * v);
    }
}

/// Per-term column contributions of a matrix expression: for every variable
/// coordinate, the sparse entries of `coeff·map(E_k)`.
fn expr_columns<'a>(
    e: &'a MatrixExpr,
    lay: &'a Layout,
) -> impl Iterator<Item = (usize, Vec<(usize, usize, C64)>)> + 'a {
    e.terms.iter().flat_map(move |t| {
        let n = lay.block_dim[t.block.0];
        let off = lay.block_offset[t.block.0];
        coords(n).into_iter().enumerate().map(move |(k, c)| {
            let mut ent = basis_entries(c);
            apply_map(t.map, &mut ent);
            for x in ent.iter_mut() {
                x.2 *= t.coeff;
            }
            (off + k, ent)
        })
    })
}

struct Lowered {
    p: CscMatrix<f64>,
    q: Vec<f64>,
    a: CscMatrix<f64>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
    /// First row of each equality constraint.
    eq_rows: Vec<usize>,
    nonneg_row0: usize,
    soc_rows: Vec<usize>,
    psd_rows: Vec<usize>,
    layout: Layout,
}

fn lower(prog: &ConicProgram) -> Lowered {
    let lay = Layout::new(prog);
    let mut t = Triplets::default();
    let mut b: Vec<f64> = Vec::new();
    let mut row = 0usize;
    let mut scratch: Vec<(usize, f64)> = Vec::new();

    // equalities: Ax + s = b with s = 0
    let mut eq_rows = Vec::with_capacity(prog.equalities.len());
    for eq in &prog.equalities {
        eq_rows.push(row);
        match eq {
            Equality::Scalar { lhs, rhs } => {
                push_functional(&mut t, row, lhs, &lay, 1.0);
                b.push(*rhs);
                row += 1;
            }
            Equality::Matrix { lhs, rhs } => {
                let n = lhs.dim;
                let mut target = rhs.clone();
                if let Some(c) = &lhs.constant {
                    target = target.sub(c);
                }
                let mut rhs_coords = vec![0.0; n * n];
                scratch.clear();
                hermitian_coords(n, &dense_entries(target.matrix()), &mut scratch);
                for &(k, v) in &scratch {
                    rhs_coords[k] += v;
                }
                for (col, ent) in expr_columns(lhs, &lay) {
                    scratch.clear();
                    hermitian_coords(n, &ent, &mut scratch);
                    for &(k, v) in &scratch {
                        t.push(row + k, col, v);
                    }
                }
                b.extend_from_slice(&rhs_coords);
                row += n * n;
            }
        }
    }
    let n_zero = row;

    // f(x) + c ≥ 0  ⇒  s = c − (−f)x
    let nonneg_row0 = row;
    for (f, c) in &prog.nonneg {
        push_functional(&mut t, row, f, &lay, -1.0);
        b.push(*c);
        row += 1;
    }
    let n_nonneg = row - nonneg_row0;

    // s = x on each cone's scalars
    let mut soc_rows = Vec::with_capacity(prog.soc.len());
    for c in &prog.soc {
        soc_rows.push(row);
        for s in c {
            t.push(row, lay.scalar_offset + s.0, -1.0);
            b.push(0.0);
            row += 1;
        }
    }

    // expr ⪰ 0  ⇒  s = svec(embed(C)) − (−L)x
    let mut psd_rows = Vec::with_capacity(prog.psd.len());
    let mut cones = Vec::new();
    if n_zero > 0 {
        cones.push(SupportedConeT::ZeroConeT(n_zero));
    }
    if n_nonneg > 0 {
        cones.push(SupportedConeT::NonnegativeConeT(n_nonneg));
    }
    for c in &prog.soc {
        cones.push(SupportedConeT::SecondOrderConeT(c.len()));
    }
    for e in &prog.psd {
        let n = e.dim;
        let len = (2 * n) * (2 * n + 1) / 2;
        psd_rows.push(row);
        let mut bvec = vec![0.0; len];
        if let Some(c) = &e.constant {
            scratch.clear();
            embedded_svec(n, &dense_entries(c.matrix()), &mut scratch);
            for &(k, v) in &scratch {
                bvec[k] += v;
            }
        }
        for (col, ent) in expr_columns(e, &lay) {
            scratch.clear();
            embedded_svec(n, &ent, &mut scratch);
            for &(k, v) in &scratch {
                t.push(row + k, col, -v);
            }
        }
        b.extend_from_slice(&bvec);
        cones.push(SupportedConeT::PSDTriangleConeT(2 * n));
        row += len;
    }

    let mut q = vec![0.0; lay.n_vars];
    for (bl, c) in &prog.objective.block_terms {
        let off = lay.block_offset[bl.0];
        for (k, v) in functional_coeffs(c) {
            q[off + k] += v;
        }
    }
    for (s, v) in &prog.objective.scalar_terms {
        q[lay.scalar_offset + s.0] += v;
    }
    let mut pt = Triplets::default();
    for (s, w) in &prog.quadratic {
        let i = lay.scalar_offset + s.0;
        pt.push(i, i, 2.0 * w);
    }

    Lowered {
        p: pt.into_csc(lay.n_vars, lay.n_vars),
        q,
        a: t.into_csc(row, lay.n_vars),
        b,
        cones,
        eq_rows,
        nonneg_row0,
        soc_rows,
        psd_rows,
        layout: lay,
    }
}

fn map_status(s: SolverStatus) -> SolveStatus {
    match s {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::AlmostSolved => SolveStatus::Inaccurate,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            SolveStatus::Infeasible
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
            SolveStatus::Unbounded
        }
        _ => SolveStatus::Failed,
    }
}

pub(super) fn solve_clarabel(
    prog: &ConicProgram,
    settings: &SolverSettings,
    equilibrate: bool,
) -> Result<SolveResult, SolverError> {
    let low = lower(prog);
    let mut builder = DefaultSettingsBuilder::default();
    builder
        .verbose(settings.verbose)
        .max_iter(settings.max_iter)
        .tol_gap_abs(settings.tol)
        .tol_gap_rel(settings.tol)
        .tol_feas(settings.tol)
        .equilibrate_enable(equilibrate);
    if let Some(limit) = settings.time_limit {
        builder.time_limit(limit.as_secs_f64());
    }
    let cl_settings = builder
        .build()
        .map_err(|e| SolverError::Backend(e.to_string()))?;
    let mut solver = DefaultSolver::new(&low.p, &low.q, &low.a, &low.b, &low.cones, cl_settings)
        .map_err(|e| SolverError::Backend(format!("{e:?}")))?;
    solver.solve();
    let sol = &solver.solution;
    let status = map_status(sol.status);

    let lay = &low.layout;
    let block_values: Vec<HermitianOperator> = (0..prog.blocks.len())
        .map(|k| lay.block_from_x(k, &sol.x))
        .collect();
    let scalar_values = sol.x[lay.scalar_offset..].to_vec();

    let equality_duals = prog
        .equalities
        .iter()
        .zip(&low.eq_rows)
        .map(|(eq, &r0)| match eq {
            Equality::Scalar { .. } => EqualityDual::Scalar(-sol.z[r0]),
            Equality::Matrix { lhs, .. } => {
                let n = lhs.dim;
                let mut m = CMatrix::zeros(n, n);
                for (k, c) in coords(n).into_iter().enumerate() {
                    let y = -sol.z[r0 + k];
                    match c {
                        Coord::Diag(i) => m[(i, i)] = C64::new(y, 0.0),
                        Coord::Re(i, j) => {
                            m[(i, j)].re = 0.5 * y;
                            m[(j, i)].re = 0.5 * y;
                        }
                        Coord::Im(i, j) => {
                            m[(i, j)].im = 0.5 * y;
                            m[(j, i)].im = -0.5 * y;
                        }
                    }
                }
                EqualityDual::Matrix(HermitianOperator::from_hermitian_part(m))
            }
        })
        .collect();
    let nonneg_duals = sol.z[low.nonneg_row0..low.nonneg_row0 + prog.nonneg.len()].to_vec();
    let soc_duals = prog
        .soc
        .iter()
        .zip(&low.soc_rows)
        .map(|(c, &r0)| sol.z[r0..r0 + c.len()].to_vec())
        .collect();
    let psd_duals = prog
        .psd
        .iter()
        .zip(&low.psd_rows)
        .map(|(e, &r0)| {
            let len = (2 * e.dim) * (2 * e.dim + 1) / 2;
            dual_from_svec(e.dim, &sol.z[r0..r0 + len])
        })
        .collect();

    let primal_value = if status == SolveStatus::Infeasible {
        f64::INFINITY
    } else if status == SolveStatus::Unbounded {
        f64::NEG_INFINITY
    } else {
        sol.obj_val + prog.objective_constant
    };
    let dual_value = if sol.obj_val_dual.is_finite() {
        sol.obj_val_dual + prog.objective_constant
    } else {
        f64::NAN
    };

    Ok(SolveResult {
        status,
        primal_value,
        dual_value,
        block_values,
        scalar_values,
        equality_duals,
        psd_duals,
        nonneg_duals,
        soc_duals,
        solver_tolerance: settings.tol,
        iterations: sol.iterations,
        solve_time: Duration::from_secs_f64(sol.solve_time),
        rechecked: false,
    })
}

/// `max |Px + q + Aᵀz|` with `z` rebuilt from the reported multipliers, so
/// both the dual mapping and the backend's stationarity are checked.
pub(super) fn stationarity_residual(prog: &ConicProgram, result: &SolveResult) -> f64 {
    let low = lower(prog);
    let lay = &low.layout;
    let m = low.b.len();
    let mut z = vec![0.0; m];
    let mut scratch = Vec::new();
    for ((eq, y), &r0) in prog
        .equalities
        .iter()
        .zip(&result.equality_duals)
        .zip(&low.eq_rows)
    {
        match (eq, y) {
            (Equality::Scalar { .. }, EqualityDual::Scalar(v)) => z[r0] = -v,
            (Equality::Matrix { lhs, .. }, EqualityDual::Matrix(ym)) => {
                // row k pairs with coordinate k; Re Tr(Y M) weights off-diagonal
                // coordinates by 2
                let n = lhs.dim;
                scratch.clear();
                hermitian_coords(n, &dense_entries(ym.matrix()), &mut scratch);
                for &(k, v) in &scratch {
                    let w = if k < n { 1.0 } else { 2.0 };
                    z[r0 + k] = -w * v;
                }
            }
            _ => return f64::INFINITY,
        }
    }
    for (k, l) in result.nonneg_duals.iter().enumerate() {
        z[low.nonneg_row0 + k] = *l;
    }
    for (zs, &r0) in result.soc_duals.iter().zip(&low.soc_rows) {
        z[r0..r0 + zs.len()].copy_from_slice(zs);
    }
    for ((e, zd), &r0) in prog.psd.iter().zip(&result.psd_duals).zip(&low.psd_rows) {
        // real matrix W with Tr(embed(H) W) = Re Tr(H Z): W = ½ embed(Z)
        scratch.clear();
        embedded_svec(e.dim, &dense_entries(zd.matrix()), &mut scratch);
        for &(k, v) in &scratch {
            z[r0 + k] += 0.5 * v;
        }
    }
    let mut x = vec![0.0; lay.n_vars];
    for (k, bv) in result.block_values.iter().enumerate() {
        let off = lay.block_offset[k];
        let n = lay.block_dim[k];
        let mm = bv.matrix();
        for (i, c) in coords(n).into_iter().enumerate() {
            x[off + i] = match c {
                Coord::Diag(a) => mm[(a, a)].re,
                Coord::Re(a, b) => mm[(a, b)].re,
                Coord::Im(a, b) => mm[(a, b)].im,
            };
        }
    }
    x[lay.scalar_offset..].copy_from_slice(&result.scalar_values);
    let mut r = low.q.clone();
    let a = &low.a;
    let pm = &low.p;
    for j in 0..lay.n_vars {
        for idx in a.colptr[j]..a.colptr[j + 1] {
            r[j] += a.nzval[idx] * z[a.rowval[idx]];
        }
        for idx in pm.colptr[j]..pm.colptr[j + 1] {
            let i = pm.rowval[idx];
            r[i] += pm.nzval[idx] * x[j];
            if i != j {
                r[j] += pm.nzval[idx] * x[i];
            }
        }
    }
    r.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

/// Backend standard form for external dumps.
pub(super) struct StandardForm {
    pub q: Vec<f64>,
    pub a: CscMatrix<f64>,
    pub b: Vec<f64>,
    pub cones: Vec<SupportedConeT<f64>>,
}

pub(super) fn standard_form(prog: &ConicProgram) -> StandardForm {
    let low = lower(prog);
    StandardForm {
        q: low.q,
        a: low.a,
        b: low.b,
        cones: low.cones,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_hermitian, rng_from_seed};

    fn svec_dense(m: &nalgebra::DMatrix<f64>) -> Vec<f64> {
        let n = m.nrows();
        let mut out = Vec::new();
        for col in 0..n {
            for row in 0..=col {
                let s = if row == col { 1.0 } else { SQRT_2 };
                out.push(s * m[(row, col)]);
            }
        }
        out
    }

    fn embed_dense(h: &HermitianOperator) -> nalgebra::DMatrix<f64> {
        let n = h.dim();
        let m = h.matrix();
        nalgebra::DMatrix::from_fn(2 * n, 2 * n, |r, c| {
            let (i, j) = (r % n, c % n);
            match (r < n, c < n) {
                (true, true) | (false, false) => m[(i, j)].re,
                (true, false) => -m[(i, j)].im,
                (false, true) => m[(i, j)].im,
            }
        })
    }

    #[test]
    fn sparse_embedding_matches_dense_embedding() {
        let mut rng = rng_from_seed(40);
        let h = random_hermitian(3, &mut rng);
        let want = svec_dense(&embed_dense(&h));
        let mut got = vec![0.0; want.len()];
        let mut sc = Vec::new();
        embedded_svec(3, &dense_entries(h.matrix()), &mut sc);
        for (k, v) in sc {
            got[k] += v;
        }
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn embedding_doubles_trace_and_keeps_spectrum() {
        let mut rng = rng_from_seed(41);
        let h = random_hermitian(3, &mut rng);
        let e = embed_dense(&h);
        assert!((e.trace() - 2.0 * h.trace()).abs() < 1e-12);
        let mut ev: Vec<f64> = e.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        let hv = h.eigenvalues();
        for (k, v) in hv.iter().enumerate() {
            assert!((ev[2 * k] - v).abs() < 1e-10 && (ev[2 * k + 1] - v).abs() < 1e-10);
        }
    }

    #[test]
    fn dual_pairing_is_re_trace() {
        let mut rng = rng_from_seed(42);
        let h = random_hermitian(3, &mut rng);
        let w = random_hermitian(6, &mut rng);
        // any real symmetric 6x6 as a dual vector
        let wr = nalgebra::DMatrix::from_fn(6, 6, |r, c| w.matrix()[(r, c)].re);
        let z = svec_dense(&wr);
        let zc = dual_from_svec(3, &z);
        let lhs: f64 = svec_dense(&embed_dense(&h))
            .iter()
            .zip(&z)
            .map(|(a, b)| a * b)
            .sum();
        assert!((lhs - h.inner(&zc)).abs() < 1e-12);
    }

    #[test]
    fn coordinates_round_trip() {
        let mut rng = rng_from_seed(43);
        let h = random_hermitian(4, &mut rng);
        let mut sc = Vec::new();
        hermitian_coords(4, &dense_entries(h.matrix()), &mut sc);
        let mut x = vec![0.0; 16];
        for (k, v) in sc {
            x[k] += v;
        }
        let lay = Layout {
            block_offset: vec![0],
            block_dim: vec![4],
            scalar_offset: 16,
            n_vars: 16,
        };
        assert!(lay.block_from_x(0, &x).max_abs_diff(&h) < 1e-15);
        // functional coefficients reproduce Re Tr(C X)
        let c = random_hermitian(4, &mut rng);
        let val: f64 = functional_coeffs(&c).iter().map(|&(k, v)| v * x[k]).sum();
        assert!((val - c.inner(&h)).abs() < 1e-12);
    }
}
