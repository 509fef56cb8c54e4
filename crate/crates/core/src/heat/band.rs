//! Banded Cholesky factorization under a reverse Cuthill–McKee ordering.

use std::collections::VecDeque;

use nalgebra_sparse::CsrMatrix;

use crate::error::{Error, Result};

/// Reverse Cuthill–McKee ordering of the symmetric pattern of `a`:
/// `perm[new] = old`.
pub fn rcm_ordering(a: &CsrMatrix<f64>) -> Vec<usize> {
    let n = a.nrows();
    let offsets = a.row_offsets();
    let cols = a.col_indices();
    let degree = |i: usize| offsets[i + 1] - offsets[i];
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        // Start each component from an unvisited node of minimum degree.
        let start = (0..n).filter(|&i| !visited[i]).min_by_key(|&i| degree(i)).unwrap();
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = cols[offsets[v]..offsets[v + 1]]
                .iter()
                .copied()
                .filter(|&w| !visited[w])
                .collect();
            nbrs.sort_by_key(|&w| (degree(w), w));
            for w in nbrs {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Lower band `L` of `P A Pᵀ = L Lᵀ`, stored row by row with `bw + 1`
/// entries per row (columns `i - bw ..= i`), plus a column-wise copy so both
/// triangular sweeps run over contiguous memory.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
    /// Column `j` of `L` below the diagonal: rows `j + 1 ..= j + bw`.
    cols: Vec<f64>,
    inv_diag: Vec<f64>,
}

impl BandCholesky {
    /// Half bandwidth of `a` after the symmetric permutation `perm`.
    pub fn bandwidth(a: &CsrMatrix<f64>, inv: &[usize]) -> usize {
        let mut bw = 0;
        for (i, row) in a.row_iter().enumerate() {
            for &j in row.col_indices() {
                bw = bw.max(inv[i].abs_diff(inv[j]));
            }
        }
        bw
    }

    /// Factors `P a Pᵀ`, where `inv[old] = new`.
    pub fn factor(a: &CsrMatrix<f64>, inv: &[usize], bw: usize) -> Result<Self> {
        let n = a.nrows();
        let w = bw + 1;
        let mut l = vec![0.0; n * w];
        for (i, row) in a.row_iter().enumerate() {
            let pi = inv[i];
            for (&j, &v) in row.col_indices().iter().zip(row.values()) {
                let pj = inv[j];
                if pj <= pi {
                    l[pi * w + (pj + bw - pi)] = v;
                }
            }
        }
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                // L[i, j] = (A[i, j] - Σ_k L[i, k] L[j, k]) / L[j, j]
                let k0 = j0.max(j.saturating_sub(bw));
                let mut s = l[i * w + (j + bw - i)];
                for k in k0..j {
                    s -= l[i * w + (k + bw - i)] * l[j * w + (k + bw - j)];
                }
                if j == i {
                    if !(s > 0.0) {
                        return Err(Error::StageSolveFailure(format!(
                            "matrix not positive definite at row {i}"
                        )));
                    }
                    l[i * w + bw] = s.sqrt();
                } else {
                    l[i * w + (j + bw - i)] = s / l[j * w + bw];
                }
            }
        }
        let mut cols = vec![0.0; n * bw];
        let mut inv_diag = vec![0.0; n];
        for i in 0..n {
            inv_diag[i] = 1.0 / l[i * w + bw];
            for j in i.saturating_sub(bw)..i {
                cols[j * bw + (i - j - 1)] = l[i * w + (j + bw - i)];
            }
        }
        Ok(Self {
            n,
            bw,
            l,
            cols,
            inv_diag,
        })
    }

    /// Solves `L Lᵀ x = b` in place (permuted numbering).
    pub fn solve_mut(&self, x: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        for j in 0..n {
            let xj = x[j] * self.inv_diag[j];
            x[j] = xj;
            let end = (j + bw).min(n - 1);
            let col = &self.cols[j * bw..j * bw + (end - j)];
            for (xi, a) in x[j + 1..=end].iter_mut().zip(col) {
                *xi -= a * xj;
            }
        }
        for i in (0..n).rev() {
            let xi = x[i] * self.inv_diag[i];
            x[i] = xi;
            let j0 = i.saturating_sub(bw);
            let row = &self.l[i * w + (j0 + bw - i)..i * w + bw];
            for (xj, a) in x[j0..i].iter_mut().zip(row) {
                *xj -= a * xi;
            }
        }
    }
}
