//! Pivoted Cholesky factorisation of Hermitian Gram matrices with graded pivot blocks.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::{CMatrix, C64};

/// `G[kept, kept] = L Lᴴ` with `L` lower triangular in pivot order.
#[derive(Clone, Debug)]
pub struct PivotedCholesky {
    /// Pivot order; row `a` of `l` belongs to column `kept[a]` of the Gram matrix.
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
    pub l: CMatrix,
    /// Most negative relative remaining diagonal seen (0 for a PSD input).
    pub worst_negative: f64,
}

/// Factorise `gram`, choosing pivots block by block.
///
/// `blocks` partitions the indices; pivots are drawn from the first block until it is
/// exhausted, then the next, so the span of the first `k` kept columns is nested across
/// truncations at block boundaries. A column is dropped once its remaining diagonal falls
/// below `drop_tol` times its original diagonal. A remaining diagonal below
/// `-indefinite_tol` times the original is reported as an error.
pub fn graded_pivoted_cholesky(
    gram: &CMatrix,
    blocks: &[Vec<usize>],
    drop_tol: f64,
    indefinite_tol: f64,
) -> Result<PivotedCholesky> {
    let n = gram.nrows();
    if gram.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: gram.ncols() });
    }
    let orig: Vec<f64> = (0..n).map(|i| gram[(i, i)].re).collect();
    if orig.iter().any(|d| !d.is_finite()) {
        return Err(Error::QuadratureBudget("non-finite Gram diagonal".into()));
    }
    let mut diag = orig.clone();
    let mut remaining = vec![true; n];
    // columns of L indexed by Gram row
    let mut cols: Vec<Vec<C64>> = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut worst_negative = 0.0f64;
    let rel = |i: usize, d: &[f64]| if orig[i] > 0.0 { d[i] / orig[i] } else { f64::NEG_INFINITY };

    for block in blocks {
        loop {
            let candidate = block
                .iter()
                .copied()
                .filter(|&i| remaining[i])
                .max_by(|&a, &b| rel(a, &diag).total_cmp(&rel(b, &diag)));
            let Some(p) = candidate else { break };
            let r = rel(p, &diag);
            if !(r >= drop_tol) {
                let rest: Vec<usize> = block.iter().copied().filter(|&i| remaining[i]).collect();
                for i in rest {
                    let ri = rel(i, &diag);
                    if ri.is_finite() {
                        worst_negative = worst_negative.min(ri);
                    }
                    if ri < -indefinite_tol {
                        return Err(Error::QuadratureBudget(format!(
                            "Gram matrix indefinite: relative pivot {ri:.3e} at index {i}"
                        )));
                    }
                    remaining[i] = false;
                    dropped.push(i);
                }
                break;
            }
            let lpp = diag[p].sqrt();
            let mut col = vec![C64::new(0.0, 0.0); n];
            col[p] = C64::new(lpp, 0.0);
            for i in 0..n {
                if !remaining[i] || i == p {
                    continue;
                }
                let mut v = gram[(i, p)];
                for c in &cols {
                    v -= c[i] * c[p].conj();
                }
                col[i] = v / lpp;
                diag[i] -= col[i].norm_sqr();
            }
            remaining[p] = false;
            kept.push(p);
            cols.push(col);
        }
    }
    let k = kept.len();
    let l = DMatrix::from_fn(k, k, |a, b| if b <= a { cols[b][kept[a]] } else { C64::new(0.0, 0.0) });
    Ok(PivotedCholesky { kept, dropped, l, worst_negative })
}

impl PivotedCholesky {
    /// `L⁻ᴴ`, whose columns express an orthonormal basis in the kept columns.
    pub fn inverse_adjoint(&self) -> Result<CMatrix> {
        let k = self.kept.len();
        self.l
            .adjoint()
            .solve_upper_triangular(&CMatrix::identity(k, k))
            .ok_or_else(|| Error::Internal("singular Cholesky factor".into()))
    }
}
