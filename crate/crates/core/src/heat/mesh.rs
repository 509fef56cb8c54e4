//! Structured P1 triangulations of the two unit-square subdomains and the
//! assembly of their mass and stiffness matrices.

use nalgebra_sparse::{CooMatrix, CsrMatrix};

use super::band::{rcm_ordering, BandCholesky};
use super::Material;
use crate::error::{Error, Result};

/// Which side of the interface `x = 0` a subdomain lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `Ω₁ = [-1, 0] × [0, 1]`
    Left,
    /// `Ω₂ = [0, 1] × [0, 1]`
    Right,
}

/// `nx × ny` cells, each split into two triangles.
///
/// Nodes are indexed by `(i, j)` where `i` counts cells away from the
/// interface (`|x| = i / nx`) and `j` counts upwards (`y = j / ny`). Both
/// subdomains share the same local triangulation, so the pair is exactly
/// mirror symmetric about `x = 0` and interface nodes coincide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeatMesh {
    pub nx: usize,
    pub ny: usize,
    pub side: Side,
}

impl HeatMesh {
    pub fn new(nx: usize, ny: usize, side: Side) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::Config(format!("mesh needs at least 2x2 cells, got {nx}x{ny}")));
        }
        Ok(Self { nx, ny, side })
    }

    pub fn num_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn hy(&self) -> f64 {
        1.0 / self.ny as f64
    }

    /// Physical coordinates of a node.
    pub fn coords(&self, node: usize) -> (f64, f64) {
        let i = node % (self.nx + 1);
        let j = node / (self.nx + 1);
        let s = i as f64 / self.nx as f64;
        let x = match self.side {
            Side::Left => -s,
            Side::Right => s,
        };
        (x, j as f64 / self.ny as f64)
    }

    /// Interface nodes `x = 0`, excluding the two corners on `y = 0, 1`.
    pub fn interface_nodes(&self) -> Vec<usize> {
        (1..self.ny).map(|j| self.node(0, j)).collect()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (1..self.ny)
            .flat_map(|j| (1..self.nx).map(move |i| (i, j)))
            .map(|(i, j)| self.node(i, j))
            .collect()
    }

    /// Interface dimension `d`.
    pub fn interface_dim(&self) -> usize {
        self.ny - 1
    }

    pub fn triangles(&self) -> Vec<[usize; 3]> {
        let mut tris = Vec::with_capacity(2 * self.nx * self.ny);
        for j in 0..self.ny {
            for i in 0..self.nx {
                let a = self.node(i, j);
                let b = self.node(i + 1, j);
                let c = self.node(i + 1, j + 1);
                let d = self.node(i, j + 1);
                tris.push([a, b, c]);
                tris.push([a, c, d]);
            }
        }
        tris
    }

    /// Local coordinates `(|x|, y)`; element matrices are invariant under
    /// the reflection to physical coordinates.
    fn local_coords(&self, node: usize) -> (f64, f64) {
        let i = node % (self.nx + 1);
        let j = node / (self.nx + 1);
        (i as f64 / self.nx as f64, j as f64 / self.ny as f64)
    }
}

/// Mass and stiffness matrices over all mesh nodes, before boundary
/// elimination. Both share one sparsity pattern (explicit zeros are kept).
#[derive(Debug, Clone)]
pub struct Operators {
    pub mass: CsrMatrix<f64>,
    pub stiffness: CsrMatrix<f64>,
}

/// Assembles `α ∫ φ_i φ_j` and `λ ∫ ∇φ_i · ∇φ_j` with linear elements.
pub fn assemble(mesh: &HeatMesh, mat: &Material) -> Operators {
    let n = mesh.num_nodes();
    let mut m = CooMatrix::new(n, n);
    let mut k = CooMatrix::new(n, n);
    for tri in mesh.triangles() {
        let p = tri.map(|v| mesh.local_coords(v));
        let area2 = (p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[2].0 - p[0].0) * (p[1].1 - p[0].1);
        let area = 0.5 * area2.abs();
        let b = [p[1].1 - p[2].1, p[2].1 - p[0].1, p[0].1 - p[1].1];
        let c = [p[2].0 - p[1].0, p[0].0 - p[2].0, p[1].0 - p[0].0];
        for a in 0..3 {
            for e in 0..3 {
                let kk = (b[a] * b[e] + c[a] * c[e]) / (4.0 * area);
                let mm = if a == e { area / 6.0 } else { area / 12.0 };
                m.push(tri[a], tri[e], mat.alpha * mm);
                k.push(tri[a], tri[e], mat.lambda * kk);
            }
        }
    }
    Operators {
        mass: CsrMatrix::from(&m),
        stiffness: CsrMatrix::from(&k),
    }
}

/// Extracts `A[rows, cols]`, keeping explicit zeros.
pub fn submatrix(a: &CsrMatrix<f64>, rows: &[usize], cols: &[usize]) -> CsrMatrix<f64> {
    let mut col_map = vec![usize::MAX; a.ncols()];
    for (local, &c) in cols.iter().enumerate() {
        col_map[c] = local;
    }
    let mut offsets = Vec::with_capacity(rows.len() + 1);
    let mut indices = Vec::new();
    let mut values = Vec::new();
    offsets.push(0);
    for &r in rows {
        let row = a.row(r);
        let mut entries: Vec<(usize, f64)> = row
            .col_indices()
            .iter()
            .zip(row.values())
            .filter(|&(&c, _)| col_map[c] != usize::MAX)
            .map(|(&c, &v)| (col_map[c], v))
            .collect();
        entries.sort_by_key(|e| e.0);
        for (c, v) in entries {
            indices.push(c);
            values.push(v);
        }
        offsets.push(indices.len());
    }
    CsrMatrix::try_from_csr_data(rows.len(), cols.len(), offsets, indices, values)
        .expect("submatrix pattern is valid by construction")
}

/// `y += alpha * A x`.
pub fn spmv_add(a: &CsrMatrix<f64>, x: &[f64], alpha: f64, y: &mut [f64]) {
    let offsets = a.row_offsets();
    let cols = a.col_indices();
    let vals = a.values();
    for (yi, r) in y.iter_mut().zip(offsets.windows(2)) {
        let acc: f64 = vals[r[0]..r[1]]
            .iter()
            .zip(&cols[r[0]..r[1]])
            .map(|(v, &c)| v * x[c])
            .sum();
        *yi += alpha * acc;
    }
}

/// Direct solver for `(M + c K) x = b` with `M`, `K` symmetric and sharing
/// one sparsity pattern. Factorizations are cached per shift `c`.
#[derive(Debug, Clone)]
pub struct ShiftedSolver {
    mass: CsrMatrix<f64>,
    stiffness: CsrMatrix<f64>,
    /// `inv[old] = new` for the bandwidth-reducing ordering.
    inv: Vec<usize>,
    bw: usize,
    cache: Vec<(u64, BandCholesky)>,
    scratch: Vec<f64>,
    factorizations: usize,
}

const CACHE_SLOTS: usize = 4;

impl ShiftedSolver {
    pub fn new(mass: CsrMatrix<f64>, stiffness: CsrMatrix<f64>) -> Self {
        debug_assert_eq!(mass.row_offsets(), stiffness.row_offsets());
        debug_assert_eq!(mass.col_indices(), stiffness.col_indices());
        let perm = rcm_ordering(&mass);
        let mut inv = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let bw = BandCholesky::bandwidth(&mass, &inv);
        Self {
            scratch: vec![0.0; mass.nrows()],
            mass,
            stiffness,
            inv,
            bw,
            cache: Vec::new(),
            factorizations: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mass.nrows()
    }

    /// Half bandwidth of the reordered matrix.
    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    /// Number of numerical factorizations performed so far.
    pub fn factorizations(&self) -> usize {
        self.factorizations
    }

    fn factor(&mut self, shift: f64) -> Result<usize> {
        let key = shift.to_bits();
        if let Some(pos) = self.cache.iter().position(|(k, _)| *k == key) {
            return Ok(pos);
        }
        let values: Vec<f64> = self
            .mass
            .values()
            .iter()
            .zip(self.stiffness.values())
            .map(|(m, k)| m + shift * k)
            .collect();
        let n = self.dim();
        let a = CsrMatrix::try_from_csr_data(
            n,
            n,
            self.mass.row_offsets().to_vec(),
            self.mass.col_indices().to_vec(),
            values,
        )
        .map_err(|e| Error::StageSolveFailure(e.to_string()))?;
        let chol = BandCholesky::factor(&a, &self.inv, self.bw)?;
        self.factorizations += 1;
        if self.cache.len() == CACHE_SLOTS {
            self.cache.remove(0);
        }
        self.cache.push((key, chol));
        Ok(self.cache.len() - 1)
    }

    /// Solves in place.
    pub fn solve(&mut self, shift: f64, rhs: &mut [f64]) -> Result<()> {
        let slot = self.factor(shift)?;
        for (old, &v) in rhs.iter().enumerate() {
            self.scratch[self.inv[old]] = v;
        }
        self.cache[slot].1.solve_mut(&mut self.scratch);
        for (old, v) in rhs.iter_mut().enumerate() {
            *v = self.scratch[self.inv[old]];
        }
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::StageSolveFailure("non-finite solution".into()));
        }
        Ok(())
    }
}
