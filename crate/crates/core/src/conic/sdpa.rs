//! Export to the sparse SDPA text format (`.dat-s`) for cross-checking with
//! external solvers.
//!
//! The exported problem is the real lowering: `min cᵀx` subject to
//! `Σ F_i x_i − F_0 ⪰ 0`. Equality rows become pairs of opposite rows in a
//! leading diagonal block, followed by the nonnegativity rows; every PSD
//! constraint becomes one dense block of twice its complex size. The
//! objective constant is written in a comment line.

use std::f64::consts::SQRT_2;
use std::io::Write;

use clarabel::solver::SupportedConeT;

use super::lower::standard_form;
use super::{ConicProgram, IoError, SolverError};

fn io(e: std::io::Error) -> SolverError {
    SolverError::Io(IoError(e.to_string()))
}

/// Upper-triangle position of an svec index.
fn unsvec(k: usize) -> (usize, usize) {
    let mut col = 0;
    while (col + 1) * (col + 2) / 2 <= k {
        col += 1;
    }
    (k - col * (col + 1) / 2, col)
}

pub fn write_sdpa<W: Write>(program: &ConicProgram, mut out: W) -> Result<(), SolverError> {
    program.validate()?;
    if !program.is_linear() {
        return Err(SolverError::NotLinear);
    }
    if !program.soc_constraints().is_empty() {
        return Err(SolverError::SecondOrderCone);
    }
    let sf = standard_form(program);
    let n_vars = sf.q.len();

    // row → (block, i, j, scale, sign); equality rows map to two LP entries
    let mut n_zero = 0;
    let mut n_nonneg = 0;
    let mut psd_sizes = Vec::new();
    for c in &sf.cones {
        match c {
            SupportedConeT::ZeroConeT(k) => n_zero += k,
            SupportedConeT::NonnegativeConeT(k) => n_nonneg += k,
            SupportedConeT::PSDTriangleConeT(k) => psd_sizes.push(*k),
            _ => unreachable!("only zero, nonnegative and PSD cones are emitted"),
        }
    }
    let lp = 2 * n_zero + n_nonneg;
    let mut blocks: Vec<i64> = Vec::new();
    if lp > 0 {
        blocks.push(-(lp as i64));
    }
    blocks.extend(psd_sizes.iter().map(|&k| k as i64));
    let psd_block0 = usize::from(lp > 0) + 1;

    // entries (matno, block, i, j, value), one-based
    let mut entries: Vec<(usize, usize, usize, usize, f64)> = Vec::new();
    let place = |row: usize, matno: usize, v: f64, entries: &mut Vec<_>| {
        if v == 0.0 {
            return;
        }
        if row < n_zero {
            entries.push((matno, 1, row + 1, row + 1, v));
            entries.push((matno, 1, n_zero + row + 1, n_zero + row + 1, -v));
        } else if row < n_zero + n_nonneg {
            let i = n_zero + row + 1;
            entries.push((matno, 1, i, i, v));
        } else {
            let mut r = row - n_zero - n_nonneg;
            for (b, &k) in psd_sizes.iter().enumerate() {
                let len = k * (k + 1) / 2;
                if r < len {
                    let (i, j) = unsvec(r);
                    let s = if i == j { 1.0 } else { 1.0 / SQRT_2 };
                    entries.push((matno, psd_block0 + b, i + 1, j + 1, s * v));
                    return;
                }
                r -= len;
            }
        }
    };
    // F_0 = −mat(b)
    for (row, &bv) in sf.b.iter().enumerate() {
        place(row, 0, -bv, &mut entries);
    }
    // F_i = −mat(A_i)
    let a = &sf.a;
    for j in 0..n_vars {
        for idx in a.colptr[j]..a.colptr[j + 1] {
            place(a.rowval[idx], j + 1, -a.nzval[idx], &mut entries);
        }
    }

    let (_, constant) = program.objective();
    writeln!(out, "* objective constant {constant:e}").map_err(io)?;
    writeln!(out, "{n_vars}").map_err(io)?;
    writeln!(out, "{}", blocks.len()).map_err(io)?;
    let sizes: Vec<String> = blocks.iter().map(|b| b.to_string()).collect();
    writeln!(out, "{}", sizes.join(" ")).map_err(io)?;
    let c: Vec<String> = sf.q.iter().map(|v| format!("{v:e}")).collect();
    writeln!(out, "{}", c.join(" ")).map_err(io)?;
    for (m, b, i, j, v) in entries {
        writeln!(out, "{m} {b} {i} {j} {v:e}").map_err(io)?;
    }
    Ok(())
}
