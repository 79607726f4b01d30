use super::{CMatrix, HermitianOperator, StateError, C64};

/// Kronecker product `a ⊗ b`, left factor slowest.
pub fn tensor(a: &HermitianOperator, b: &HermitianOperator) -> HermitianOperator {
    HermitianOperator::from_hermitian_part(a.matrix().kronecker(b.matrix()))
}

/// Transpose of the second tensor factor of a bipartite operator.
pub fn partial_transpose(
    op: &HermitianOperator,
    dims: (usize, usize),
) -> Result<HermitianOperator, StateError> {
    let (da, db) = dims;
    if da * db != op.dim() {
        return Err(StateError::DimensionMismatch {
            expected: op.dim(),
            actual: da * db,
        });
    }
    Ok(HermitianOperator::from_hermitian_part(
        partial_transpose_matrix(op.matrix(), dims),
    ))
}

pub(crate) fn partial_transpose_matrix(m: &CMatrix, (da, db): (usize, usize)) -> CMatrix {
    let mut out = CMatrix::zeros(da * db, da * db);
    for a in 0..da {
        for b in 0..db {
            for a2 in 0..da {
                for b2 in 0..db {
                    out[(a * db + b2, a2 * db + b)] = m[(a * db + b, a2 * db + b2)];
                }
            }
        }
    }
    out
}

fn check_dims(dim: usize, dims: &[usize]) -> Result<(), StateError> {
    let prod: usize = dims.iter().product();
    if dims.is_empty() || prod != dim {
        return Err(StateError::DimensionMismatch {
            expected: dim,
            actual: prod,
        });
    }
    Ok(())
}

fn check_perm(perm: &[usize], n: usize) -> Result<(), StateError> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(StateError::Subsystems(format!(
            "permutation of length {} for {n} subsystems",
            perm.len()
        )));
    }
    for &p in perm {
        if p >= n || seen[p] {
            return Err(StateError::Subsystems(format!("{perm:?} is not a permutation")));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Basis-index map for a subsystem permutation: entry `i` is the flat index in
/// the old ordering of new basis vector `i`.
fn index_map(dims: &[usize], perm: &[usize]) -> Vec<usize> {
    let n = dims.len();
    let new_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    // strides of the old layout
    let mut old_stride = vec![1usize; n];
    for k in (0..n.saturating_sub(1)).rev() {
        old_stride[k] = old_stride[k + 1] * dims[k + 1];
    }
    let total: usize = dims.iter().product();
    let mut map = Vec::with_capacity(total);
    let mut digits = vec![0usize; n];
    for _ in 0..total {
        let old: usize = (0..n).map(|k| digits[k] * old_stride[perm[k]]).sum();
        map.push(old);
        for k in (0..n).rev() {
            digits[k] += 1;
            if digits[k] < new_dims[k] {
                break;
            }
            digits[k] = 0;
        }
    }
    map
}

pub(crate) fn permute_matrix(
    m: &CMatrix,
    dims: &[usize],
    perm: &[usize],
) -> Result<CMatrix, StateError> {
    check_dims(m.nrows(), dims)?;
    check_perm(perm, dims.len())?;
    let map = index_map(dims, perm);
    let d = m.nrows();
    Ok(CMatrix::from_fn(d, d, |i, j| m[(map[i], map[j])]))
}

/// Reorders tensor factors: subsystem `k` of the result is subsystem `perm[k]` of `op`.
pub fn permute_subsystems(
    op: &HermitianOperator,
    dims: &[usize],
    perm: &[usize],
) -> Result<HermitianOperator, StateError> {
    permute_matrix(op.matrix(), dims, perm).map(HermitianOperator::from_hermitian_part)
}

pub(crate) fn embed_matrix(
    m: &CMatrix,
    dims: &[usize],
    targets: &[usize],
) -> Result<CMatrix, StateError> {
    let n = dims.len();
    let mut seen = vec![false; n];
    for &t in targets {
        if t >= n || seen[t] {
            return Err(StateError::Subsystems(format!(
                "bad target list {targets:?} for {n} subsystems"
            )));
        }
        seen[t] = true;
    }
    let local: usize = targets.iter().map(|&t| dims[t]).product();
    if local != m.nrows() {
        return Err(StateError::DimensionMismatch {
            expected: local,
            actual: m.nrows(),
        });
    }
    let rest: Vec<usize> = (0..n).filter(|k| !seen[*k]).collect();
    let rest_dim: usize = rest.iter().map(|&r| dims[r]).product();
    let combined = m.kronecker(&CMatrix::identity(rest_dim, rest_dim));
    let order: Vec<usize> = targets.iter().chain(rest.iter()).copied().collect();
    let combined_dims: Vec<usize> = order.iter().map(|&k| dims[k]).collect();
    let mut perm = vec![0usize; n];
    for (pos, &k) in order.iter().enumerate() {
        perm[k] = pos;
    }
    permute_matrix(&combined, &combined_dims, &perm)
}

/// Lifts an operator acting on subsystems `targets` (in that order) to the full
/// space, acting as the identity elsewhere.
pub fn embed(
    op: &HermitianOperator,
    dims: &[usize],
    targets: &[usize],
) -> Result<HermitianOperator, StateError> {
    embed_matrix(op.matrix(), dims, targets).map(HermitianOperator::from_hermitian_part)
}

pub(crate) fn partial_trace_matrix(
    m: &CMatrix,
    dims: &[usize],
    keep: &[usize],
) -> Result<CMatrix, StateError> {
    check_dims(m.nrows(), dims)?;
    let n = dims.len();
    let mut keep_sorted = keep.to_vec();
    keep_sorted.sort_unstable();
    keep_sorted.dedup();
    if keep_sorted.len() != keep.len() || keep_sorted.iter().any(|&k| k >= n) {
        return Err(StateError::Subsystems(format!("bad keep list {keep:?}")));
    }
    let traced: Vec<usize> = (0..n).filter(|k| !keep_sorted.contains(k)).collect();
    let perm: Vec<usize> = keep_sorted.iter().chain(traced.iter()).copied().collect();
    let p = permute_matrix(m, dims, &perm)?;
    let dk: usize = keep_sorted.iter().map(|&k| dims[k]).product();
    let dt: usize = traced.iter().map(|&k| dims[k]).product();
    Ok(CMatrix::from_fn(dk, dk, |i, j| {
        (0..dt).fold(C64::new(0.0, 0.0), |acc, t| acc + p[(i * dt + t, j * dt + t)])
    }))
}

/// Traces out every subsystem not listed in `keep`; kept factors stay in ascending order.
pub fn partial_trace(
    op: &HermitianOperator,
    dims: &[usize],
    keep: &[usize],
) -> Result<HermitianOperator, StateError> {
    partial_trace_matrix(op.matrix(), dims, keep).map(HermitianOperator::from_hermitian_part)
}
