//! Linear model problems for the quasi-Newton waveform iteration.
//!
//! The composite solve is modeled as the affine map `x ↦ A x + b` on the
//! second solver's grid `T₂` (with `d` unknowns per node). Iterating on an
//! auxiliary grid `T_QN` turns it into `x ↦ Θ(A Φ x + b)` with the
//! interpolation matrices `Φ: T_QN → T₂` and `Θ: T₂ → T_QN`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::coupling::{SolverOutput, Subsolver};
use crate::error::{Error, Result};
use crate::qn::QnState;
use crate::waveform::{InterpMatrix, TimeGrid, Waveform};

/// Residual level that counts as converged in the finite-termination checks.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Systems whose projected operator is worse conditioned than this are
/// regenerated.
pub const MAX_CONDITION: f64 = 1e8;

#[derive(Debug, Clone)]
pub struct LinearCoupledSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub dim: usize,
    pub grid2: TimeGrid,
    pub grid_qn: TimeGrid,
    /// `T_QN → T₂`, block expanded.
    pub phi: DMatrix<f64>,
    /// `T₂ → T_QN`, block expanded.
    pub theta: DMatrix<f64>,
    /// Picks the final-time block on `T₂`.
    pub g: DMatrix<f64>,
}

impl LinearCoupledSystem {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, dim: usize, grid2: TimeGrid, grid_qn: TimeGrid) -> Result<Self> {
        let n = dim * grid2.len();
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: a.nrows(),
            });
        }
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        let phi = InterpMatrix::new(&grid_qn, &grid2)?.to_dense_blocks(dim);
        let theta = InterpMatrix::new(&grid2, &grid_qn)?.to_dense_blocks(dim);
        let mut g = DMatrix::zeros(dim, n);
        for i in 0..dim {
            g[(i, n - dim + i)] = 1.0;
        }
        Ok(Self {
            a,
            b,
            dim,
            grid2,
            grid_qn,
            phi,
            theta,
            g,
        })
    }

    /// Unknowns of the fixed-point equation on `T₂`.
    pub fn n2(&self) -> usize {
        self.a.nrows()
    }

    /// Unknowns on `T_QN`.
    pub fn n_qn(&self) -> usize {
        self.theta.nrows()
    }

    /// `Θ A Φ`.
    pub fn projected(&self) -> DMatrix<f64> {
        &self.theta * &self.a * &self.phi
    }

    /// `Θ b`.
    pub fn projected_rhs(&self) -> DVector<f64> {
        &self.theta * &self.b
    }
}

/// Subsolver `x ↦ K I(x) + c` on a fixed grid, where `I` samples the input
/// on that grid. Composing two of them gives a [`LinearCoupledSystem`].
#[derive(Debug, Clone)]
pub struct AffineSubsolver {
    pub grid: TimeGrid,
    pub dim: usize,
    pub k: DMatrix<f64>,
    pub c: DVector<f64>,
}

impl AffineSubsolver {
    pub fn new(grid: TimeGrid, dim: usize, k: DMatrix<f64>, c: DVector<f64>) -> Result<Self> {
        let n = grid.len() * dim;
        if k.shape() != (n, n) || c.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: c.len(),
            });
        }
        Ok(Self { grid, dim, k, c })
    }
}

impl Subsolver for AffineSubsolver {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn output_dim(&self) -> usize {
        self.dim
    }

    fn solve(&mut self, input: &Waveform) -> Result<SolverOutput> {
        let x = input.sample(&self.grid)?;
        let y = &self.k * DVector::from_column_slice(x.values()) + &self.c;
        Ok(SolverOutput {
            waveform: Waveform::new(self.grid.clone(), self.dim, y.as_slice().to_vec())?,
            steps: self.grid.steps(),
        })
    }
}

/// Random orthogonal `n × n` matrix from the QR factors of a Gaussian
/// matrix, with column signs fixed by `R`'s diagonal.
pub fn random_orthogonal(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = m.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `0.9 · Q D Qᵀ` with `D` uniform in `[0.1, 1]`: symmetric, invertible and
/// with spectrum inside `[0.09, 0.9]`, so `A - I` is invertible too.
pub fn random_contraction(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let q = random_orthogonal(n, rng);
    let d = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.random_range(0.1..=1.0)));
    (&q * d * q.transpose()) * 0.9
}

pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Random grid on `[0, 1]` with `n` nodes, spacings bounded away from zero.
pub fn random_grid(n: usize, rng: &mut impl Rng) -> Result<TimeGrid> {
    let mut steps: Vec<f64> = (0..n - 1).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = steps.iter().sum();
    let mut t = 0.0;
    let mut points = vec![0.0];
    for s in &mut steps {
        *s /= total;
        t += *s;
        points.push(t);
    }
    *points.last_mut().unwrap() = 1.0;
    TimeGrid::new(points)
}

/// Random grid that contains only some of the nodes of `fine` (always the
/// endpoints), so it is strictly coarser.
pub fn random_subgrid(fine: &TimeGrid, rng: &mut impl Rng) -> Result<TimeGrid> {
    let p = fine.points();
    let mut keep = vec![0.0];
    let interior = p.len() - 2;
    let drop = if interior == 0 { 0 } else { rng.random_range(0..interior) };
    for (i, &t) in p[1..p.len() - 1].iter().enumerate() {
        if i != drop && rng.random_bool(0.5) {
            keep.push(t);
        }
    }
    keep.push(*p.last().unwrap());
    TimeGrid::new(keep)
}

/// Random system with `dim` unknowns per node. `ΘAΦ - I` is checked for
/// conditioning and the draw repeated if necessary.
pub fn random_system(dim: usize, grid2: TimeGrid, grid_qn: TimeGrid, rng: &mut impl Rng) -> Result<LinearCoupledSystem> {
    let n = dim * grid2.len();
    for _ in 0..100 {
        let a = random_contraction(n, rng);
        let b = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let sys = LinearCoupledSystem::new(a, b, dim, grid2.clone(), grid_qn.clone())?;
        let m = sys.projected() - DMatrix::identity(sys.n_qn(), sys.n_qn());
        if condition_number(&m) <= MAX_CONDITION {
            return Ok(sys);
        }
    }
    Err(Error::SingularSystem("could not draw a well-conditioned system".into()))
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn solve(m: DMatrix<f64>, rhs: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    m.lu()
        .solve(rhs)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::SingularSystem(what.into()))
}

/// `x* = (I - A)⁻¹ b`.
pub fn fixed_point_direct(sys: &LinearCoupledSystem) -> Result<DVector<f64>> {
    let n = sys.n2();
    solve(DMatrix::identity(n, n) - &sys.a, &sys.b, "I - A")
}

/// `x*_QN = (I - ΘAΦ)⁻¹ Θ b`.
pub fn qn_fixed_point_direct(sys: &LinearCoupledSystem) -> Result<DVector<f64>> {
    let n = sys.n_qn();
    solve(DMatrix::identity(n, n) - sys.projected(), &sys.projected_rhs(), "I - ΘAΦ")
}

/// `x* - Φ x*_QN` from the closed form
/// `(I - ΦΘ) b + ((A⁻¹ - I)⁻¹ - ΦΘ (A⁻¹ - ΦΘ)⁻¹ ΦΘ) b`.
///
/// The inverses are applied as `(A⁻¹ - I)⁻¹ = (I - A)⁻¹ A` and
/// `(A⁻¹ - ΦΘ)⁻¹ = (I - A ΦΘ)⁻¹ A`.
pub fn interp_error_closed_form(sys: &LinearCoupledSystem) -> Result<DVector<f64>> {
    let n = sys.n2();
    let id = DMatrix::<f64>::identity(n, n);
    let pt = &sys.phi * &sys.theta;
    let b = &sys.b;
    let term1 = b - &pt * b;
    let term2 = solve(&id - &sys.a, &(&sys.a * b), "I - A")?;
    let inner = solve(&id - &sys.a * &pt, &(&sys.a * (&pt * b)), "I - AΦΘ")?;
    let term3 = &pt * inner;
    Ok(term1 + term2 - term3)
}

/// `x* - Φ x*_QN` from two direct solves.
pub fn interp_error_definition(sys: &LinearCoupledSystem) -> Result<DVector<f64>> {
    Ok(fixed_point_direct(sys)? - &sys.phi * qn_fixed_point_direct(sys)?)
}

/// Runs the quasi-Newton iteration on `x ↦ m x + c` from `x0` and returns
/// every iterate until `‖r‖ ≤ tol` or `max_iters` updates.
pub fn qn_iterates(
    m: &DMatrix<f64>,
    c: &DVector<f64>,
    x0: &DVector<f64>,
    theta: f64,
    tol: f64,
    max_iters: usize,
) -> Result<(Vec<DVector<f64>>, Vec<f64>)> {
    let mut qn = QnState::new(x0.len(), theta);
    let mut x = x0.clone();
    let mut xs = vec![x.clone()];
    let mut res = Vec::new();
    for _ in 0..=max_iters {
        let x_hat = m * &x + c;
        let r = (&x_hat - &x).norm();
        res.push(r);
        if r <= tol {
            break;
        }
        x = DVector::from_vec(qn.step(x_hat.as_slice(), x.as_slice())?);
        xs.push(x.clone());
    }
    Ok((xs, res))
}

/// First `k` with `‖r^k‖ ≤ 1e-10` for the quasi-Newton iteration on
/// `x ↦ A x + b` started at zero.
pub fn verify_finite_termination(sys: &LinearCoupledSystem, theta: f64) -> Result<usize> {
    let n = sys.n2();
    let limit = n + 5;
    let (_, res) = qn_iterates(&sys.a, &sys.b, &DVector::zeros(n), theta, RESIDUAL_TOL, limit)?;
    match res.iter().position(|&r| r <= RESIDUAL_TOL) {
        Some(k) => Ok(k),
        None => Err(Error::NoConvergence(limit)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LastStepReport {
    /// `‖G((A - I) Φ x*_QN + b)‖`.
    pub last_step: f64,
    /// `‖(A - I)(Φ x*_QN - x*)‖`.
    pub full: f64,
    /// Final-time residual of the quasi-Newton iteration on the auxiliary
    /// grid, after it terminated.
    pub iterated_last_step: f64,
    /// Updates the iteration needed.
    pub iterations: usize,
}

pub fn verify_last_step(sys: &LinearCoupledSystem) -> Result<LastStepReport> {
    let n = sys.n2();
    let id = DMatrix::<f64>::identity(n, n);
    let x_qn = qn_fixed_point_direct(sys)?;
    let x_star = fixed_point_direct(sys)?;
    let px = &sys.phi * &x_qn;
    let last_step = (&sys.g * ((&sys.a - &id) * &px + &sys.b)).norm();
    let full = ((&sys.a - &id) * (&px - x_star)).norm();

    let m = sys.projected();
    let c = sys.projected_rhs();
    let limit = sys.n_qn() + 5;
    let (xs, res) = qn_iterates(&m, &c, &DVector::zeros(sys.n_qn()), 0.5, RESIDUAL_TOL, limit)?;
    if *res.last().unwrap() > RESIDUAL_TOL {
        return Err(Error::NoConvergence(limit));
    }
    let x_end = &sys.phi * xs.last().unwrap();
    let iterated_last_step = (&sys.g * ((&sys.a - &id) * &x_end + &sys.b)).norm();
    Ok(LastStepReport {
        last_step,
        full,
        iterated_last_step,
        iterations: res.len() - 1,
    })
}

/// GMRES iterates for `(I - A) x = b` from `x0`: entry `k` minimizes the
/// residual over `x0 + K_k`. Stops early on breakdown.
pub fn gmres_iterates(a: &DMatrix<f64>, b: &DVector<f64>, x0: &DVector<f64>, max_k: usize) -> Vec<DVector<f64>> {
    let n = a.nrows();
    let op = DMatrix::<f64>::identity(n, n) - a;
    let r0 = b - &op * x0;
    let beta = r0.norm();
    let mut xs = vec![x0.clone()];
    if beta == 0.0 {
        return xs;
    }
    let mut basis: Vec<DVector<f64>> = vec![r0 / beta];
    let mut h = DMatrix::<f64>::zeros(max_k + 1, max_k);
    for k in 0..max_k {
        let mut w = &op * &basis[k];
        for _ in 0..2 {
            for (j, v) in basis.iter().enumerate() {
                let c = v.dot(&w);
                h[(j, k)] += c;
                w -= v * c;
            }
        }
        let hn = w.norm();
        h[(k + 1, k)] = hn;
        // Least squares min ‖β e₁ - H y‖ over the (k+2) × (k+1) block.
        let hk = h.view((0, 0), (k + 2, k + 1)).into_owned();
        let mut rhs = DVector::zeros(k + 2);
        rhs[0] = beta;
        let y = hk.svd(true, true).solve(&rhs, 1e-14).expect("svd solve");
        let mut x = x0.clone();
        for (j, yj) in y.iter().enumerate() {
            x += &basis[j] * *yj;
        }
        xs.push(x);
        if hn <= 1e-14 * beta {
            break;
        }
        basis.push(w / hn);
    }
    xs
}

/// `max_k ‖x_QN^{k+1} - (A x_GM^k + b)‖` over the iterations before the
/// quasi-Newton iteration converges, with both methods started from `x0`
/// and a unit first step.
pub fn gmres_relation_probe(sys: &LinearCoupledSystem, x0: &DVector<f64>) -> Result<f64> {
    let n = sys.n2();
    let (qn, _) = qn_iterates(&sys.a, &sys.b, x0, 1.0, RESIDUAL_TOL, n + 1)?;
    let gm = gmres_iterates(&sys.a, &sys.b, x0, n);
    let mut dev: f64 = 0.0;
    for k in 0..qn.len() - 1 {
        let Some(xg) = gm.get(k) else { break };
        let rhs = &sys.a * xg + &sys.b;
        dev = dev.max((&qn[k + 1] - rhs).norm());
    }
    Ok(dev)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(a: f64, b: f64) -> LinearCoupledSystem {
        let g = TimeGrid::new(vec![0.0, 1.0]).unwrap();
        // One unknown per node, the first node held at 0.
        let am = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, a]);
        let bv = DVector::from_vec(vec![0.0, b]);
        LinearCoupledSystem::new(am, bv, 1, g.clone(), g).unwrap()
    }

    #[test]
    fn fixed_point_examples() {
        let sys = scalar(0.5, 1.0);
        assert!((fixed_point_direct(&sys).unwrap()[1] - 2.0).abs() < 1e-15);
        let sys = scalar(0.0, 3.0);
        assert_eq!(fixed_point_direct(&sys).unwrap()[1], 3.0);
        assert_eq!(qn_fixed_point_direct(&sys).unwrap()[1], 3.0);
    }

    #[test]
    fn fixed_point_matches_picard() {
        let mut rng = seeded_rng(7);
        let g = TimeGrid::equidistant(3, 1.0).unwrap();
        let sys = random_system(2, g.clone(), g, &mut rng).unwrap();
        let mut x = DVector::zeros(sys.n2());
        for _ in 0..10_000 {
            x = &sys.a * x + &sys.b;
        }
        let direct = fixed_point_direct(&sys).unwrap();
        assert!((x - direct).norm() < 1e-10);
    }

    #[test]
    fn qn_fixed_point_matches_projected_picard() {
        let mut rng = seeded_rng(11);
        let g2 = TimeGrid::new(vec![0.0, 0.5, 1.0]).unwrap();
        let gq = TimeGrid::new(vec![0.0, 1.0]).unwrap();
        let sys = random_system(1, g2, gq, &mut rng).unwrap();
        let m = sys.projected();
        let c = sys.projected_rhs();
        let mut x = DVector::zeros(sys.n_qn());
        for _ in 0..10_000 {
            x = &m * x + &c;
        }
        assert!((x - qn_fixed_point_direct(&sys).unwrap()).norm() < 1e-10);
    }

    #[test]
    fn matching_grids_have_no_interpolation_error() {
        let mut rng = seeded_rng(3);
        let g = TimeGrid::new(vec![0.0, 0.2, 0.7, 1.0]).unwrap();
        let sys = random_system(2, g.clone(), g, &mut rng).unwrap();
        let e = interp_error_closed_form(&sys).unwrap();
        assert!(e.norm() < 1e-12);
        let diff = fixed_point_direct(&sys).unwrap() - qn_fixed_point_direct(&sys).unwrap();
        assert!(diff.norm() < 1e-12);
    }

    #[test]
    fn interpolation_error_diagonal_hand_case() {
        // T₂ = {0, 0.5, 1}, T_QN = {0, 1}, diagonal A: only the midpoint
        // carries an error, x*_2 - (x*_1 + x*_3)/2.
        let (a1, a2, a3) = (0.2, 0.5, 0.6);
        let (b1, b2, b3) = (1.0, -2.0, 0.5);
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![a1, a2, a3]));
        let b = DVector::from_vec(vec![b1, b2, b3]);
        let sys = LinearCoupledSystem::new(
            a,
            b,
            1,
            TimeGrid::new(vec![0.0, 0.5, 1.0]).unwrap(),
            TimeGrid::new(vec![0.0, 1.0]).unwrap(),
        )
        .unwrap();
        let x1 = b1 / (1.0 - a1);
        let x2 = b2 / (1.0 - a2);
        let x3 = b3 / (1.0 - a3);
        let expected = [0.0, x2 - 0.5 * (x1 + x3), 0.0];
        let e = interp_error_closed_form(&sys).unwrap();
        for (u, v) in e.iter().zip(expected) {
            assert!((u - v).abs() < 1e-13, "{e} vs {expected:?}");
        }
    }

    #[test]
    fn closed_form_matches_definition() {
        let mut rng = seeded_rng(5);
        for _ in 0..20 {
            let g2 = random_grid(4, &mut rng).unwrap();
            let gq = random_grid(3, &mut rng).unwrap();
            let sys = random_system(2, g2, gq, &mut rng).unwrap();
            let a = interp_error_closed_form(&sys).unwrap();
            let b = interp_error_definition(&sys).unwrap();
            assert!((&a - &b).norm() <= 1e-9 * b.norm().max(1e-300));
        }
    }

    #[test]
    fn scalar_takes_two_iterations() {
        assert_eq!(verify_finite_termination(&scalar(0.5, 1.0), 0.5).unwrap(), 2);
    }

    #[test]
    fn random_five_terminates() {
        let mut rng = seeded_rng(1);
        for _ in 0..10 {
            let g = TimeGrid::equidistant(5, 1.0).unwrap();
            let sys = random_system(1, g.clone(), g, &mut rng).unwrap();
            assert!(verify_finite_termination(&sys, 0.5).unwrap() <= 6);
        }
    }

    #[test]
    fn nilpotent_terminates_early() {
        // A² = 0: (I - A)⁻¹ b = b + A b lies in a two-dimensional Krylov
        // space, so the iteration is exact long before d + 1.
        let n = 6;
        let mut a = DMatrix::zeros(n, n);
        a[(0, n - 1)] = 1.0;
        let g = TimeGrid::equidistant(n, 1.0).unwrap();
        let b = DVector::from_fn(n, |i, _| (i + 1) as f64);
        let sys = LinearCoupledSystem::new(a, b, 1, g.clone(), g).unwrap();
        let k = verify_finite_termination(&sys, 1.0).unwrap();
        assert!(k <= 3, "{k}");
    }

    #[test]
    fn last_step_coarse_grid_instance() {
        let mut rng = seeded_rng(2);
        let g2 = TimeGrid::equidistant(5, 1.0).unwrap();
        let gq = TimeGrid::new(vec![0.0, 1.0]).unwrap();
        let sys = random_system(2, g2, gq, &mut rng).unwrap();
        let rep = verify_last_step(&sys).unwrap();
        assert!(rep.last_step <= 1e-10);
        assert!(rep.iterated_last_step <= 1e-10);
        assert!(rep.full > 1e-6, "{rep:?}");
    }

    #[test]
    fn last_step_matching_grids() {
        let mut rng = seeded_rng(4);
        let g = TimeGrid::equidistant(4, 1.0).unwrap();
        let sys = random_system(2, g.clone(), g, &mut rng).unwrap();
        let rep = verify_last_step(&sys).unwrap();
        assert!(rep.last_step <= 1e-10 && rep.full <= 1e-10);
    }

    #[test]
    fn gmres_relation_random() {
        let mut rng = seeded_rng(9);
        let g = TimeGrid::equidistant(6, 1.0).unwrap();
        let sys = random_system(1, g.clone(), g, &mut rng).unwrap();
        let x0 = DVector::zeros(sys.n2());
        assert!(gmres_relation_probe(&sys, &x0).unwrap() <= 1e-9);
    }

    #[test]
    fn gmres_relation_diagonal() {
        let n = 5;
        let a = DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| 0.1 + 0.15 * i as f64));
        let b = DVector::from_fn(n, |i, _| 1.0 - 0.3 * i as f64);
        let g = TimeGrid::equidistant(n, 1.0).unwrap();
        let sys = LinearCoupledSystem::new(a, b, 1, g.clone(), g).unwrap();
        assert!(gmres_relation_probe(&sys, &DVector::zeros(n)).unwrap() <= 1e-12);
    }

    #[test]
    fn gmres_and_qn_agree_at_convergence() {
        let mut rng = seeded_rng(13);
        let g = TimeGrid::equidistant(4, 1.0).unwrap();
        let sys = random_system(1, g.clone(), g, &mut rng).unwrap();
        let n = sys.n2();
        let x_star = fixed_point_direct(&sys).unwrap();
        let gm = gmres_iterates(&sys.a, &sys.b, &DVector::zeros(n), n);
        assert!((gm.last().unwrap() - &x_star).norm() < 1e-10);
        let (qn, _) = qn_iterates(&sys.a, &sys.b, &DVector::zeros(n), 1.0, RESIDUAL_TOL, n + 1).unwrap();
        assert!((qn.last().unwrap() - &x_star).norm() < 1e-10);
    }
}
