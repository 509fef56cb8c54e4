use nalgebra::DMatrix;
use nalgebra_sparse::CsrMatrix;

use super::mesh::{assemble, spmv_add, submatrix, HeatMesh, ShiftedSolver};
use super::Material;
use crate::coupling::{SolverOutput, Subsolver};
use crate::error::{Error, Result};
use crate::integrate::{
    adaptive_integrate, integrate_fixed, l2, AdaptiveOptions, Controller, StageProblem, Trajectory,
};
use crate::waveform::{TimeGrid, Waveform, NODE_SNAP};

/// How a subsolver chooses its time grid inside a window.
#[derive(Debug, Clone, PartialEq)]
pub enum GridPolicy {
    /// Fixed grid; its end time must equal the window length.
    Fixed(TimeGrid),
    /// Error-controlled steps, restarted with the initial-step heuristic in
    /// every solve.
    Adaptive { controller: Controller, tol_ta: f64 },
}

impl GridPolicy {
    fn integrate<P: StageProblem>(&self, problem: &mut P, u0: &[f64], t_end: f64) -> Result<Trajectory> {
        match self {
            GridPolicy::Fixed(grid) => {
                if (grid.end() - t_end).abs() > NODE_SNAP * t_end {
                    return Err(Error::WindowMismatch {
                        expected: t_end,
                        found: grid.end(),
                    });
                }
                integrate_fixed(problem, u0, grid)
            }
            GridPolicy::Adaptive { controller, tol_ta } => adaptive_integrate(
                problem,
                u0,
                t_end,
                &AdaptiveOptions {
                    controller: *controller,
                    tol_ta: *tol_ta,
                    dt0: None,
                },
            ),
        }
    }
}

/// Slope of a piecewise-linear waveform at `t`, taken from the segment that
/// starts at or contains `t` (the last segment at the final node).
fn waveform_slope(w: &Waveform, t: f64, out: &mut [f64]) -> Result<()> {
    let s = w.grid().locate(t)?;
    let seg = s.lo.min(w.len() - 2);
    out.copy_from_slice(&w.segment_slope(seg));
    Ok(())
}

/// Derivative at `t` of the quadratic through the end points of the segment
/// `(t_j, t_{j+1}]` containing `t` and the node `t_{j-1}` before it. On the
/// first segment this is the segment slope.
fn trailing_derivative(w: &Waveform, t: f64, out: &mut [f64]) -> Result<()> {
    let s = w.grid().locate(t)?;
    let j = if s.is_node() { s.lo.saturating_sub(1) } else { s.lo };
    let s1 = w.segment_slope(j);
    if j == 0 {
        out.copy_from_slice(&s1);
        return Ok(());
    }
    let p = w.grid().points();
    let t = if s.is_node() { p[s.lo] } else { t };
    let s0 = w.segment_slope(j - 1);
    let c = (2.0 * t - p[j - 1] - p[j]) / (p[j + 1] - p[j - 1]);
    for ((o, a), b) in out.iter_mut().zip(&s0).zip(&s1) {
        *o = a + c * (b - a);
    }
    Ok(())
}

fn forcing_or_err(w: &Option<Waveform>) -> Result<&Waveform> {
    w.as_ref()
        .ok_or_else(|| Error::SolverFailure("no interface data set".into()))
}

/// Semi-discrete heat equation on `Ω₁` with prescribed interface
/// temperature. The state is `[u_I; u_Γ]`; the `Γ` block follows the
/// forcing waveform exactly at every stage.
#[derive(Debug, Clone)]
pub struct DirichletProblem {
    n_int: usize,
    d: usize,
    hy: f64,
    k_ii: CsrMatrix<f64>,
    m_ig: CsrMatrix<f64>,
    k_ig: CsrMatrix<f64>,
    m_gi: CsrMatrix<f64>,
    k_gi: CsrMatrix<f64>,
    m_gg: CsrMatrix<f64>,
    k_gg: CsrMatrix<f64>,
    /// `M_ΓΓ - M_ΓI M_II⁻¹ M_IΓ`: flux response to the interface velocity
    /// when the interior velocity adjusts to it.
    mass_schur: DMatrix<f64>,
    solver: ShiftedSolver,
    forcing: Option<Waveform>,
}

impl DirichletProblem {
    pub fn new(mesh: &HeatMesh, mat: &Material) -> Self {
        let ops = assemble(mesh, mat);
        let int = mesh.interior_nodes();
        let gam = mesh.interface_nodes();
        let m_ii = submatrix(&ops.mass, &int, &int);
        let k_ii = submatrix(&ops.stiffness, &int, &int);
        let m_ig = submatrix(&ops.mass, &int, &gam);
        let m_gi = submatrix(&ops.mass, &gam, &int);
        let m_gg = submatrix(&ops.mass, &gam, &gam);
        let mut solver = ShiftedSolver::new(m_ii, k_ii.clone());
        let d = gam.len();
        let mut mass_schur = DMatrix::zeros(d, d);
        let mut e = vec![0.0; d];
        for j in 0..d {
            e[j] = 1.0;
            let mut x = vec![0.0; int.len()];
            spmv_add(&m_ig, &e, 1.0, &mut x);
            solver
                .solve(0.0, &mut x)
                .expect("interior mass matrix is positive definite");
            let mut col = vec![0.0; d];
            spmv_add(&m_gg, &e, 1.0, &mut col);
            spmv_add(&m_gi, &x, -1.0, &mut col);
            mass_schur.set_column(j, &nalgebra::DVector::from_vec(col));
            e[j] = 0.0;
        }
        Self {
            n_int: int.len(),
            d,
            hy: mesh.hy(),
            m_ig,
            k_ig: submatrix(&ops.stiffness, &int, &gam),
            m_gi,
            k_gi: submatrix(&ops.stiffness, &gam, &int),
            m_gg,
            k_gg: submatrix(&ops.stiffness, &gam, &gam),
            mass_schur,
            solver,
            k_ii,
            forcing: None,
        }
    }

    pub fn interface_dim(&self) -> usize {
        self.d
    }

    pub fn interior_dim(&self) -> usize {
        self.n_int
    }

    pub fn set_forcing(&mut self, w: Waveform) {
        self.forcing = Some(w);
    }

    /// Weak-form nodal heat flux density on `Γ` (W/m², positive in `+x`),
    /// given the state and its time derivative.
    pub fn flux(&self, u: &[f64], du: &[f64], out: &mut [f64]) {
        let (ui, ug) = u.split_at(self.n_int);
        let (dui, dug) = du.split_at(self.n_int);
        out.fill(0.0);
        spmv_add(&self.m_gi, dui, 1.0, out);
        spmv_add(&self.m_gg, dug, 1.0, out);
        spmv_add(&self.k_gi, ui, 1.0, out);
        spmv_add(&self.k_gg, ug, 1.0, out);
        for v in out.iter_mut() {
            *v /= self.hy;
        }
    }

    /// `rhs = -K_II base_I - K_IΓ g - M_IΓ k_Γ`
    fn interior_rhs(&self, base_i: &[f64], g: &[f64], k_g: &[f64]) -> Vec<f64> {
        let mut rhs = vec![0.0; self.n_int];
        spmv_add(&self.k_ii, base_i, -1.0, &mut rhs);
        spmv_add(&self.k_ig, g, -1.0, &mut rhs);
        spmv_add(&self.m_ig, k_g, -1.0, &mut rhs);
        rhs
    }
}

impl StageProblem for DirichletProblem {
    fn dim(&self) -> usize {
        self.n_int + self.d
    }

    fn stage(&mut self, t: f64, gamma_dt: f64, base: &[f64], k: &mut [f64]) -> Result<()> {
        let mut g = vec![0.0; self.d];
        forcing_or_err(&self.forcing)?.eval_into(t, &mut g)?;
        let (base_i, base_g) = base.split_at(self.n_int);
        let (k_i, k_g) = k.split_at_mut(self.n_int);
        for ((kg, gv), b) in k_g.iter_mut().zip(&g).zip(base_g) {
            *kg = (gv - b) / gamma_dt;
        }
        let mut rhs = self.interior_rhs(base_i, &g, k_g);
        self.solver.solve(gamma_dt, &mut rhs)?;
        k_i.copy_from_slice(&rhs);
        Ok(())
    }

    fn slope(&mut self, t: f64, u: &[f64], out: &mut [f64]) -> Result<()> {
        let (u_i, u_g) = u.split_at(self.n_int);
        let (o_i, o_g) = out.split_at_mut(self.n_int);
        waveform_slope(forcing_or_err(&self.forcing)?, t, o_g)?;
        let mut rhs = self.interior_rhs(u_i, u_g, o_g);
        self.solver.solve(0.0, &mut rhs)?;
        o_i.copy_from_slice(&rhs);
        Ok(())
    }

    fn error_norm(&self, diff: &[f64]) -> f64 {
        l2(&diff[..self.n_int])
    }

    fn output_dim(&self) -> usize {
        self.d
    }

    /// The interface velocity inside the state is the slope of the
    /// piecewise-linear forcing, which is only first-order accurate at the
    /// nodes. The flux is corrected to a second-order estimate of it.
    fn output(&mut self, t: f64, u: &[f64], slope: Option<&[f64]>, out: &mut [f64]) -> Result<()> {
        let owned;
        let du = match slope {
            Some(du) => du,
            None => {
                let mut du = vec![0.0; u.len()];
                self.slope(t, u, &mut du)?;
                owned = du;
                &owned
            }
        };
        self.flux(u, du, out);
        let mut delta = vec![0.0; self.d];
        trailing_derivative(forcing_or_err(&self.forcing)?, t, &mut delta)?;
        for (dv, s) in delta.iter_mut().zip(&du[self.n_int..]) {
            *dv -= s;
        }
        let corr = &self.mass_schur * nalgebra::DVector::from_vec(delta);
        for (o, c) in out.iter_mut().zip(corr.iter()) {
            *o += c / self.hy;
        }
        Ok(())
    }
}

/// Semi-discrete heat equation on `Ω₂` driven by a prescribed interface
/// heat flux. The state covers interior and interface nodes `[u_I; u_Γ]`.
#[derive(Debug, Clone)]
pub struct NeumannProblem {
    n_int: usize,
    d: usize,
    hy: f64,
    mass: CsrMatrix<f64>,
    stiffness: CsrMatrix<f64>,
    solver: ShiftedSolver,
    forcing: Option<Waveform>,
}

impl NeumannProblem {
    pub fn new(mesh: &HeatMesh, mat: &Material) -> Self {
        let ops = assemble(mesh, mat);
        let int = mesh.interior_nodes();
        let gam = mesh.interface_nodes();
        let mut free = int.clone();
        free.extend(&gam);
        let mass = submatrix(&ops.mass, &free, &free);
        let stiffness = submatrix(&ops.stiffness, &free, &free);
        Self {
            n_int: int.len(),
            d: gam.len(),
            hy: mesh.hy(),
            solver: ShiftedSolver::new(mass.clone(), stiffness.clone()),
            mass,
            stiffness,
            forcing: None,
        }
    }

    pub fn interface_dim(&self) -> usize {
        self.d
    }

    pub fn set_forcing(&mut self, w: Waveform) {
        self.forcing = Some(w);
    }

    pub fn mass(&self) -> &CsrMatrix<f64> {
        &self.mass
    }

    /// `-K base + b(t)`, where `b_Γ = -h q(t)`.
    fn rhs(&self, t: f64, base: &[f64]) -> Result<Vec<f64>> {
        let mut rhs = vec![0.0; self.n_int + self.d];
        spmv_add(&self.stiffness, base, -1.0, &mut rhs);
        let mut q = vec![0.0; self.d];
        forcing_or_err(&self.forcing)?.eval_into(t, &mut q)?;
        for (r, qv) in rhs[self.n_int..].iter_mut().zip(&q) {
            *r -= self.hy * qv;
        }
        Ok(rhs)
    }
}

impl StageProblem for NeumannProblem {
    fn dim(&self) -> usize {
        self.n_int + self.d
    }

    fn stage(&mut self, t: f64, gamma_dt: f64, base: &[f64], k: &mut [f64]) -> Result<()> {
        let mut rhs = self.rhs(t, base)?;
        self.solver.solve(gamma_dt, &mut rhs)?;
        k.copy_from_slice(&rhs);
        Ok(())
    }

    fn slope(&mut self, t: f64, u: &[f64], out: &mut [f64]) -> Result<()> {
        let mut rhs = self.rhs(t, u)?;
        self.solver.solve(0.0, &mut rhs)?;
        out.copy_from_slice(&rhs);
        Ok(())
    }

    fn output_dim(&self) -> usize {
        self.d
    }

    fn output(&mut self, _t: f64, u: &[f64], _slope: Option<&[f64]>, out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(&u[self.n_int..]);
        Ok(())
    }
}

fn check_dim(w: &Waveform, d: usize) -> Result<()> {
    if w.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: w.dim(),
        });
    }
    Ok(())
}

/// Dirichlet subsolver: interface temperature in, interface heat flux out.
#[derive(Debug, Clone)]
pub struct DirichletSolver {
    problem: DirichletProblem,
    policy: GridPolicy,
    /// Interior state at the start of the current window.
    start: Vec<f64>,
    end: Option<Vec<f64>>,
}

impl DirichletSolver {
    /// `initial` holds nodal values on every mesh node.
    pub fn new(mesh: &HeatMesh, mat: &Material, initial: &[f64], policy: GridPolicy) -> Self {
        let start = mesh.interior_nodes().iter().map(|&v| initial[v]).collect();
        Self {
            problem: DirichletProblem::new(mesh, mat),
            policy,
            start,
            end: None,
        }
    }

    pub fn set_policy(&mut self, policy: GridPolicy) {
        self.policy = policy;
    }

    /// Interior state at the end of the last solve.
    pub fn last_state(&self) -> Option<&[f64]> {
        self.end.as_deref()
    }
}

impl Subsolver for DirichletSolver {
    fn input_dim(&self) -> usize {
        self.problem.d
    }

    fn output_dim(&self) -> usize {
        self.problem.d
    }

    fn solve(&mut self, input: &Waveform) -> Result<SolverOutput> {
        check_dim(input, self.problem.d)?;
        self.problem.set_forcing(input.clone());
        let mut u0 = self.start.clone();
        u0.extend_from_slice(input.first());
        let tr = self.policy.integrate(&mut self.problem, &u0, input.end())?;
        self.end = Some(tr.final_state[..self.problem.n_int].to_vec());
        Ok(SolverOutput {
            waveform: tr.output,
            steps: tr.steps,
        })
    }

    fn accept_window(&mut self) {
        if let Some(end) = self.end.take() {
            self.start = end;
        }
    }
}

/// Neumann subsolver: interface heat flux in, interface temperature out.
#[derive(Debug, Clone)]
pub struct NeumannSolver {
    problem: NeumannProblem,
    policy: GridPolicy,
    start: Vec<f64>,
    end: Option<Vec<f64>>,
}

impl NeumannSolver {
    pub fn new(mesh: &HeatMesh, mat: &Material, initial: &[f64], policy: GridPolicy) -> Self {
        let mut start: Vec<f64> = mesh.interior_nodes().iter().map(|&v| initial[v]).collect();
        start.extend(mesh.interface_nodes().iter().map(|&v| initial[v]));
        Self {
            problem: NeumannProblem::new(mesh, mat),
            policy,
            start,
            end: None,
        }
    }

    pub fn set_policy(&mut self, policy: GridPolicy) {
        self.policy = policy;
    }

    /// Interface temperature at the start of the current window.
    pub fn initial_interface(&self) -> &[f64] {
        &self.start[self.problem.n_int..]
    }

    /// Free-node state `[u_I; u_Γ]` at the end of the last solve.
    pub fn last_state(&self) -> Option<&[f64]> {
        self.end.as_deref()
    }

    pub fn problem(&self) -> &NeumannProblem {
        &self.problem
    }
}

impl Subsolver for NeumannSolver {
    fn input_dim(&self) -> usize {
        self.problem.d
    }

    fn output_dim(&self) -> usize {
        self.problem.d
    }

    fn solve(&mut self, input: &Waveform) -> Result<SolverOutput> {
        check_dim(input, self.problem.d)?;
        self.problem.set_forcing(input.clone());
        let tr = self.policy.integrate(&mut self.problem, &self.start.clone(), input.end())?;
        self.end = Some(tr.final_state);
        Ok(SolverOutput {
            waveform: tr.output,
            steps: tr.steps,
        })
    }

    fn accept_window(&mut self) {
        if let Some(end) = self.end.take() {
            self.start = end;
        }
    }
}
