//! Interface quasi-Newton (IQN-ILS) acceleration of waveform relaxation.
//!
//! Iterates live on an auxiliary time grid `T_QN` that is fixed once per
//! window, so the history matrices keep a constant row count even when the
//! subsolvers pick different time steps in every iteration.

use serde::{Deserialize, Serialize};

use crate::coupling::{
    run_window, Accelerator, CouplingConfig, IterationContext, IterationStats, Relaxation, Subsolver,
};
use crate::error::{Error, Result};
use crate::integrate::l2;
use crate::waveform::{TimeGrid, Waveform};

/// Relative threshold of the column filter.
pub const FILTER_EPS: f64 = 1e-10;

/// `x̂ - x`.
pub fn residual(x_hat: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if x_hat.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: x_hat.len(),
        });
    }
    Ok(x_hat.iter().zip(x).map(|(a, b)| a - b).collect())
}

/// Relaxation step `θ x̂ + (1-θ) x`.
pub fn qn_first_step(theta: f64, x_hat: &[f64], x_prev: &[f64]) -> Vec<f64> {
    if theta == 1.0 {
        return x_hat.to_vec();
    }
    if theta == 0.0 {
        return x_prev.to_vec();
    }
    x_hat.iter().zip(x_prev).map(|(a, b)| theta * a + (1.0 - theta) * b).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Thin QR factorization `V = Q R` kept up to date column by column.
/// Columns are stored oldest first.
#[derive(Debug, Clone, Default)]
pub struct IncrementalQr {
    rows: usize,
    q: Vec<Vec<f64>>,
    /// Column-major upper triangle: `r[j][i]` is `R[i, j]` for `i ≤ j`.
    r: Vec<Vec<f64>>,
}

impl IncrementalQr {
    pub fn new(rows: usize) -> Self {
        Self {
            rows,
            q: Vec::new(),
            r: Vec::new(),
        }
    }

    pub fn cols(&self) -> usize {
        self.q.len()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn q_col(&self, j: usize) -> &[f64] {
        &self.q[j]
    }

    /// `R[i, j]`.
    pub fn r(&self, i: usize, j: usize) -> f64 {
        if i <= j {
            self.r[j][i]
        } else {
            0.0
        }
    }

    /// Appends `v` unless its component orthogonal to the current span is
    /// shorter than `eps·‖v‖`. Returns whether the column was kept.
    pub fn push(&mut self, v: &[f64], eps: f64) -> bool {
        assert_eq!(v.len(), self.rows);
        let norm = l2(v);
        if norm == 0.0 || !norm.is_finite() {
            return false;
        }
        let mut w = v.to_vec();
        let mut coef = vec![0.0; self.cols() + 1];
        // Two passes of modified Gram–Schmidt.
        for _ in 0..2 {
            for (j, qj) in self.q.iter().enumerate() {
                let c = dot(qj, &w);
                axpy(-c, qj, &mut w);
                coef[j] += c;
            }
        }
        let rho = l2(&w);
        if rho < eps * norm {
            return false;
        }
        for x in &mut w {
            *x /= rho;
        }
        coef[self.cols()] = rho;
        self.q.push(w);
        self.r.push(coef);
        true
    }

    /// Removes the oldest column and restores triangular form with Givens
    /// rotations.
    pub fn remove_first(&mut self) {
        if self.q.is_empty() {
            return;
        }
        let k = self.cols();
        self.r.remove(0);
        // self.r[j] now holds column j+1 of the old R (length j+2); it has a
        // subdiagonal entry at row j+1.
        for j in 0..k - 1 {
            let a = self.r[j][j];
            let b = self.r[j][j + 1];
            let h = a.hypot(b);
            let (c, s) = if h == 0.0 { (1.0, 0.0) } else { (a / h, b / h) };
            for col in self.r.iter_mut().skip(j) {
                let x = col[j];
                let y = col[j + 1];
                col[j] = c * x + s * y;
                col[j + 1] = -s * x + c * y;
            }
            let (qa, qb) = {
                let (lo, hi) = self.q.split_at_mut(j + 1);
                (&mut lo[j], &mut hi[0])
            };
            for (x, y) in qa.iter_mut().zip(qb.iter_mut()) {
                let (u, v) = (*x, *y);
                *x = c * u + s * v;
                *y = -s * u + c * v;
            }
            self.r[j].truncate(j + 1);
        }
        self.q.pop();
    }

    /// Least-squares solution of `min ‖V α - rhs‖₂`, i.e. `R α = Qᵀ rhs`.
    pub fn solve_ls(&self, rhs: &[f64]) -> Vec<f64> {
        let k = self.cols();
        let mut alpha: Vec<f64> = self.q.iter().map(|q| dot(q, rhs)).collect();
        for i in (0..k).rev() {
            let mut s = alpha[i];
            for j in i + 1..k {
                s -= self.r[j][i] * alpha[j];
            }
            alpha[i] = s / self.r[i][i];
        }
        alpha
    }
}

/// History of one quasi-Newton run on vectors of fixed length.
#[derive(Debug, Clone)]
pub struct QnState {
    theta: f64,
    max_columns: Option<usize>,
    qr: IncrementalQr,
    /// Residual differences, oldest first.
    v: Vec<Vec<f64>>,
    /// Differences of solver outputs, oldest first.
    w: Vec<Vec<f64>>,
    prev: Option<(Vec<f64>, Vec<f64>)>,
    fallbacks: usize,
    filtered: usize,
}

impl QnState {
    pub fn new(dim: usize, theta: f64) -> Self {
        Self {
            theta,
            max_columns: None,
            qr: IncrementalQr::new(dim),
            v: Vec::new(),
            w: Vec::new(),
            prev: None,
            fallbacks: 0,
            filtered: 0,
        }
    }

    /// Keeps at most `n` history columns, dropping the oldest.
    pub fn with_max_columns(mut self, n: usize) -> Self {
        self.max_columns = Some(n.max(1));
        self
    }

    pub fn dim(&self) -> usize {
        self.qr.rows()
    }

    pub fn columns(&self) -> usize {
        self.v.len()
    }

    pub fn v(&self) -> &[Vec<f64>] {
        &self.v
    }

    pub fn w(&self) -> &[Vec<f64>] {
        &self.w
    }

    pub fn qr(&self) -> &IncrementalQr {
        &self.qr
    }

    /// Updates that fell back to relaxation because no history was usable.
    pub fn fallbacks(&self) -> usize {
        self.fallbacks
    }

    /// Columns rejected by the filter.
    pub fn filtered(&self) -> usize {
        self.filtered
    }

    /// Adds the pair `(Δr, Δx̂)`; returns whether it passed the filter.
    pub fn push_column(&mut self, dr: Vec<f64>, dx_hat: Vec<f64>) -> bool {
        if !self.qr.push(&dr, FILTER_EPS) {
            self.filtered += 1;
            return false;
        }
        self.v.push(dr);
        self.w.push(dx_hat);
        if let Some(m) = self.max_columns {
            while self.v.len() > m {
                self.qr.remove_first();
                self.v.remove(0);
                self.w.remove(0);
            }
        }
        true
    }

    /// `α` minimizing `‖V α + r‖₂`.
    pub fn coefficients(&self, r: &[f64]) -> Vec<f64> {
        let neg: Vec<f64> = r.iter().map(|x| -x).collect();
        self.qr.solve_ls(&neg)
    }

    /// Next iterate from the solver output `x̂` and the iterate `x` it was
    /// computed from. The first call is a relaxation step.
    pub fn step(&mut self, x_hat: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        if x_hat.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x_hat.len(),
            });
        }
        let r = residual(x_hat, x)?;
        let first = self.prev.is_none();
        if let Some((prev_hat, prev_r)) = self.prev.take() {
            let dr: Vec<f64> = r.iter().zip(&prev_r).map(|(a, b)| a - b).collect();
            let dw: Vec<f64> = x_hat.iter().zip(&prev_hat).map(|(a, b)| a - b).collect();
            self.push_column(dr, dw);
        }
        self.prev = Some((x_hat.to_vec(), r.clone()));
        if self.v.is_empty() {
            if !first {
                self.fallbacks += 1;
            }
            return Ok(qn_first_step(self.theta, x_hat, x));
        }
        let alpha = self.coefficients(&r);
        let mut next = x_hat.to_vec();
        for (a, wj) in alpha.iter().zip(&self.w) {
            axpy(*a, wj, &mut next);
        }
        Ok(next)
    }
}

/// How the auxiliary grid is chosen after the first iteration of a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridStrategy {
    /// The Neumann (second) solver's first grid.
    NeumannFirst,
    /// The Dirichlet (first) solver's first grid.
    DirichletFirst,
    /// Equidistant, with as many nodes as the coarser of the two first grids.
    EquidistantMin,
    /// Equidistant with the given number of nodes.
    Equidistant(usize),
    Explicit(TimeGrid),
}

impl GridStrategy {
    /// Short name used in result tables.
    pub fn label(&self) -> String {
        match self {
            GridStrategy::NeumannFirst => "1".into(),
            GridStrategy::DirichletFirst => "2".into(),
            GridStrategy::EquidistantMin => "3".into(),
            GridStrategy::Equidistant(_) => "equidistant".into(),
            GridStrategy::Explicit(_) => "explicit".into(),
        }
    }
}

pub fn select_qn_grid(strategy: &GridStrategy, grid_d1: &TimeGrid, grid_n1: &TimeGrid) -> Result<TimeGrid> {
    grid_d1.check_same_window(grid_n1)?;
    let t_end = grid_n1.end();
    let grid = match strategy {
        GridStrategy::NeumannFirst => grid_n1.clone(),
        GridStrategy::DirichletFirst => grid_d1.clone(),
        GridStrategy::EquidistantMin => TimeGrid::equidistant(grid_d1.len().min(grid_n1.len()), t_end)?,
        GridStrategy::Equidistant(n) => TimeGrid::equidistant(*n, t_end)?,
        GridStrategy::Explicit(g) => {
            g.check_same_window(grid_n1)?;
            g.clone()
        }
    };
    Ok(grid)
}

/// Time-adaptive quasi-Newton acceleration on an auxiliary grid.
#[derive(Debug, Clone)]
pub struct QnAccelerator {
    theta: f64,
    strategy: GridStrategy,
    max_columns: Option<usize>,
    grid: Option<TimeGrid>,
    state: Option<QnState>,
    fallbacks: usize,
}

impl QnAccelerator {
    pub fn new(theta: f64, strategy: GridStrategy) -> Self {
        Self {
            theta,
            strategy,
            max_columns: None,
            grid: None,
            state: None,
            fallbacks: 0,
        }
    }

    pub fn with_max_columns(mut self, n: usize) -> Self {
        self.max_columns = Some(n);
        self
    }

    /// The auxiliary grid of the current window, once resolved.
    pub fn grid(&self) -> Option<&TimeGrid> {
        self.grid.as_ref()
    }

    pub fn state(&self) -> Option<&QnState> {
        self.state.as_ref()
    }
}

impl Accelerator for QnAccelerator {
    fn next(&mut self, ctx: &IterationContext<'_>) -> Result<Waveform> {
        if self.grid.is_none() {
            let grid = select_qn_grid(&self.strategy, ctx.first_grid, ctx.x_hat.grid())?;
            let mut state = QnState::new(grid.len() * ctx.x_hat.dim(), self.theta);
            if let Some(m) = self.max_columns {
                state = state.with_max_columns(m);
            }
            self.state = Some(state);
            self.grid = Some(grid);
        }
        let (grid, state) = (self.grid.as_ref().unwrap(), self.state.as_mut().unwrap());
        let x_hat = ctx.x_hat.sample(grid)?;
        let x = ctx.x_prev.sample(grid)?;
        let before = state.fallbacks();
        let next = state.step(x_hat.values(), x.values())?;
        self.fallbacks += state.fallbacks() - before;
        Waveform::new(grid.clone(), ctx.x_hat.dim(), next)
    }

    fn reset(&mut self) {
        self.grid = None;
        self.state = None;
    }

    fn fallbacks(&self) -> usize {
        self.fallbacks
    }
}

/// Quasi-Newton acceleration for subsolvers on fixed grids: iterates live on
/// the second solver's grid, which must not change between iterations.
#[derive(Debug, Clone)]
pub struct FixedGridQn {
    theta: f64,
    state: Option<QnState>,
}

impl FixedGridQn {
    pub fn new(theta: f64) -> Self {
        Self { theta, state: None }
    }
}

impl Accelerator for FixedGridQn {
    fn next(&mut self, ctx: &IterationContext<'_>) -> Result<Waveform> {
        let n = ctx.x_hat.values().len();
        let state = self.state.get_or_insert_with(|| QnState::new(n, self.theta));
        let x = if ctx.x_prev.grid() == ctx.x_hat.grid() {
            ctx.x_prev.clone()
        } else if ctx.iteration == 1 {
            ctx.x_prev.sample(ctx.x_hat.grid())?
        } else {
            return Err(Error::WindowMismatch {
                expected: ctx.x_prev.end(),
                found: ctx.x_hat.end(),
            });
        };
        let next = state.step(ctx.x_hat.values(), x.values())?;
        Waveform::new(ctx.x_hat.grid().clone(), ctx.x_hat.dim(), next)
    }

    fn reset(&mut self) {
        self.state = None;
    }

    fn fallbacks(&self) -> usize {
        self.state.as_ref().map_or(0, QnState::fallbacks)
    }
}

/// Runs one window with time-adaptive quasi-Newton acceleration.
pub fn accelerate_window(
    s1: &mut dyn Subsolver,
    s2: &mut dyn Subsolver,
    x0: &Waveform,
    cfg: &CouplingConfig,
    strategy: GridStrategy,
) -> Result<(Waveform, IterationStats)> {
    let mut accel = QnAccelerator::new(cfg.theta, strategy);
    run_window(s1, s2, x0, cfg, &mut accel)
}

/// Constant relaxation variant of [`accelerate_window`].
pub fn relaxation_window(
    s1: &mut dyn Subsolver,
    s2: &mut dyn Subsolver,
    x0: &Waveform,
    cfg: &CouplingConfig,
) -> Result<(Waveform, IterationStats)> {
    let mut accel = Relaxation { theta: cfg.theta };
    run_window(s1, s2, x0, cfg, &mut accel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::tests::Affine;

    #[test]
    fn residual_examples() {
        assert_eq!(residual(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(residual(&[2.0], &[0.5]).unwrap(), vec![1.5]);
        // H(x) = 0.5x + 1 at x = 0.
        let x = 0.0;
        assert_eq!(residual(&[0.5 * x + 1.0], &[x]).unwrap(), vec![1.0]);
        assert!(matches!(
            residual(&[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn first_step_examples() {
        assert_eq!(qn_first_step(0.5, &[1.0], &[0.0]), vec![0.5]);
        assert_eq!(qn_first_step(1.0, &[1.0], &[0.0]), vec![1.0]);
        assert_eq!(qn_first_step(0.0, &[1.0], &[0.0]), vec![0.0]);
    }

    #[test]
    fn scalar_affine_map_reaches_fixed_point_after_one_update() {
        let h = |x: f64| 0.5 * x + 1.0;
        let mut qn = QnState::new(1, 0.5);
        let x0 = 0.0;
        let x1 = qn.step(&[h(x0)], &[x0]).unwrap()[0];
        assert_eq!(x1, 0.5);
        let x2 = qn.step(&[h(x1)], &[x1]).unwrap()[0];
        assert_eq!(qn.v(), &[vec![-0.25]]);
        assert_eq!(qn.w(), &[vec![0.25]]);
        assert!((x2 - 2.0).abs() <= 1e-14);
    }

    #[test]
    fn duplicate_column_is_filtered() {
        let mut qn = QnState::new(3, 1.0);
        assert!(qn.push_column(vec![1.0, 2.0, 0.0], vec![0.0, 1.0, 0.0]));
        let r = [0.3, -0.2, 0.7];
        let before = qn.coefficients(&r);
        assert!(!qn.push_column(vec![1.0, 2.0, 0.0], vec![0.0, 1.0, 0.0]));
        assert_eq!(qn.coefficients(&r), before);
        assert_eq!(qn.columns(), 1);
        assert_eq!(qn.filtered(), 1);
    }

    #[test]
    fn stagnating_iteration_falls_back_to_relaxation() {
        let mut qn = QnState::new(2, 0.5);
        qn.step(&[1.0, 1.0], &[0.0, 0.0]).unwrap();
        // Same residual again: Δr = 0 is filtered, no history is usable.
        let x = qn.step(&[2.0, 2.0], &[1.0, 1.0]).unwrap();
        assert_eq!(x, vec![1.5, 1.5]);
        assert_eq!(qn.fallbacks(), 1);
    }

    #[test]
    fn qr_downdate_matches_fresh_factorization() {
        let cols = [
            vec![1.0, 2.0, 0.5, -1.0],
            vec![0.0, 1.0, 3.0, 2.0],
            vec![2.0, -1.0, 1.0, 0.0],
            vec![1.0, 1.0, 1.0, 1.0],
        ];
        let mut qr = IncrementalQr::new(4);
        for c in &cols[..3] {
            assert!(qr.push(c, FILTER_EPS));
        }
        qr.remove_first();
        qr.push(&cols[3], FILTER_EPS);
        let mut fresh = IncrementalQr::new(4);
        for c in &cols[1..] {
            fresh.push(c, FILTER_EPS);
        }
        let rhs = [0.3, -1.0, 2.0, 0.1];
        let a = qr.solve_ls(&rhs);
        let b = fresh.solve_ls(&rhs);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12, "{a:?} vs {b:?}");
        }
        // Q R reproduces the remaining columns.
        for (j, c) in cols[1..].iter().enumerate() {
            for i in 0..4 {
                let v: f64 = (0..=j).map(|l| qr.q_col(l)[i] * qr.r(l, j)).sum();
                assert!((v - c[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn max_columns_limits_history() {
        let mut qn = QnState::new(3, 1.0).with_max_columns(2);
        qn.push_column(vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]);
        qn.push_column(vec![0.0, 1.0, 0.0], vec![0.0, 1.0, 0.0]);
        qn.push_column(vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]);
        assert_eq!(qn.columns(), 2);
        assert_eq!(qn.v()[0], vec![0.0, 1.0, 0.0]);
        let alpha = qn.coefficients(&[0.0, -2.0, -3.0]);
        assert!((alpha[0] - 2.0).abs() < 1e-14 && (alpha[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn strategy_examples() {
        let gd = TimeGrid::equidistant(10, 1.0).unwrap();
        let gn = TimeGrid::new(vec![0.0, 0.3, 1.0]).unwrap();
        assert_eq!(select_qn_grid(&GridStrategy::NeumannFirst, &gd, &gn).unwrap(), gn);
        assert_eq!(select_qn_grid(&GridStrategy::DirichletFirst, &gd, &gn).unwrap(), gd);
        let gn7 = TimeGrid::equidistant(7, 1.0).unwrap();
        let g3 = select_qn_grid(&GridStrategy::EquidistantMin, &gd, &gn7).unwrap();
        assert_eq!(g3, TimeGrid::equidistant(7, 1.0).unwrap());
        let explicit = TimeGrid::new(vec![0.0, 0.5, 1.0]).unwrap();
        assert_eq!(
            select_qn_grid(&GridStrategy::Explicit(explicit.clone()), &gd, &gn).unwrap(),
            explicit
        );
        let short = TimeGrid::new(vec![0.0, 0.5]).unwrap();
        assert!(select_qn_grid(&GridStrategy::Explicit(short), &gd, &gn).is_err());
    }

    #[test]
    fn accelerated_toy_beats_plain_iteration() {
        let cfg = CouplingConfig::single_window(1.0, 1e-12, 50);
        let x0 = Waveform::constant(TimeGrid::new(vec![0.0, 1.0]).unwrap(), &[0.0]);
        let mut s1 = Affine { a: 0.9, b: 0.0, nodes: 3 };
        let mut s2 = Affine { a: 1.0, b: 1.0, nodes: 5 };
        let (x, stats) = accelerate_window(&mut s1, &mut s2, &x0, &cfg, GridStrategy::NeumannFirst).unwrap();
        assert!((x.last()[0] - 10.0).abs() < 1e-10);
        assert!(stats.iterations <= 4, "{stats:?}");
    }
}
