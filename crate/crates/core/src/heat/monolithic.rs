//! Reference solution of the coupled problem on a single shared time grid.
//!
//! Each step solves both subdomains together: the interface temperature at
//! the new time level is the unknown of a small dense linear system (an
//! interface Schur complement), assembled by probing one step of both
//! subproblems. The per-step coupling is the same as in the partitioned
//! iteration on matching grids, with interface data linear in time over the
//! step, so a converged waveform iteration reproduces this solution.

use std::collections::hash_map::Entry;
use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::mesh::{assemble, spmv_add, submatrix, HeatMesh};
use super::solvers::{DirichletProblem, NeumannProblem};
use super::Material;
use crate::error::{Error, Result};
use crate::integrate::{sdirk2_step, StageProblem};
use crate::waveform::{TimeGrid, Waveform};

#[derive(Debug, Clone)]
pub struct MonolithicSolution {
    /// Interface temperature at every grid node.
    pub interface: Waveform,
    /// Interface heat flux at every grid node.
    pub flux: Waveform,
    /// `[u_I; u_Γ]` on `Ω₁` at the final time.
    pub dirichlet_state: Vec<f64>,
    /// `[u_I; u_Γ]` on `Ω₂` at the final time.
    pub neumann_state: Vec<f64>,
    /// Discrete energy `uᵀ M u` summed over both subdomains, per grid node.
    pub energy: Vec<f64>,
}

struct StepResult {
    dirichlet: Vec<f64>,
    neumann: Vec<f64>,
    q_start: Vec<f64>,
    q_end: Vec<f64>,
    interface: Vec<f64>,
}

struct Coupled {
    dp: DirichletProblem,
    np: NeumannProblem,
    d: usize,
}

impl Coupled {
    /// One step of both subproblems with interface temperature `g_end`
    /// prescribed at the new time level. `before` is the interface value one
    /// step earlier and that step's size, if there is one.
    #[allow(clippy::too_many_arguments)]
    fn step(
        &mut self,
        dt: f64,
        u_d: &[f64],
        u_n: &[f64],
        before: Option<(&[f64], f64)>,
        g_start: &[f64],
        g_end: &[f64],
        q_prev: Option<&[f64]>,
    ) -> Result<StepResult> {
        let local = TimeGrid::new(vec![0.0, dt])?;
        // The Dirichlet side sees the same trailing interface history as in
        // the partitioned iteration, so its flux output agrees.
        let (t0, dgrid, mut g) = match before {
            Some((g_before, dt_before)) => (
                dt_before,
                TimeGrid::new(vec![0.0, dt_before, dt_before + dt])?,
                g_before.to_vec(),
            ),
            None => (0.0, local.clone(), Vec::new()),
        };
        g.extend_from_slice(g_start);
        g.extend_from_slice(g_end);
        self.dp.set_forcing(Waveform::new(dgrid, self.d, g)?);
        let q_start = match q_prev {
            Some(q) => q.to_vec(),
            None => {
                let mut q = vec![0.0; self.d];
                self.dp.output(t0, u_d, None, &mut q)?;
                q
            }
        };
        let est_d = sdirk2_step(&mut self.dp, u_d, t0, dt)?;
        let mut q_end = vec![0.0; self.d];
        self.dp.output(t0 + dt, &est_d.u_next, Some(&est_d.slope), &mut q_end)?;

        let mut q = q_start.clone();
        q.extend_from_slice(&q_end);
        self.np.set_forcing(Waveform::new(local, self.d, q)?);
        let est_n = sdirk2_step(&mut self.np, u_n, 0.0, dt)?;
        let n_int = est_n.u_next.len() - self.d;
        Ok(StepResult {
            interface: est_n.u_next[n_int..].to_vec(),
            dirichlet: est_d.u_next,
            neumann: est_n.u_next,
            q_start,
            q_end,
        })
    }
}

fn energy(m: &nalgebra_sparse::CsrMatrix<f64>, u: &[f64]) -> f64 {
    let mut mu = vec![0.0; u.len()];
    spmv_add(m, u, 1.0, &mut mu);
    mu.iter().zip(u).map(|(a, b)| a * b).sum()
}

/// Solves the coupled problem on `grid` (shared by both subdomains).
/// `init1`, `init2` hold nodal values on every node of the respective mesh.
pub fn monolithic_reference(
    mesh1: &HeatMesh,
    mat1: &Material,
    init1: &[f64],
    mesh2: &HeatMesh,
    mat2: &Material,
    init2: &[f64],
    grid: &TimeGrid,
) -> Result<MonolithicSolution> {
    let gam1 = mesh1.interface_nodes();
    let gam2 = mesh2.interface_nodes();
    if gam1.len() != gam2.len() {
        return Err(Error::DimensionMismatch {
            expected: gam1.len(),
            found: gam2.len(),
        });
    }
    let d = gam2.len();
    let int1 = mesh1.interior_nodes();
    let int2 = mesh2.interior_nodes();
    let g0: Vec<f64> = gam2.iter().map(|&v| init2[v]).collect();

    let mut u_d: Vec<f64> = int1.iter().map(|&v| init1[v]).collect();
    u_d.extend_from_slice(&g0);
    let mut u_n: Vec<f64> = int2.iter().map(|&v| init2[v]).collect();
    u_n.extend_from_slice(&g0);

    let free1: Vec<usize> = int1.iter().chain(&gam1).copied().collect();
    let m1 = submatrix(&assemble(mesh1, mat1).mass, &free1, &free1);

    let mut sys = Coupled {
        dp: DirichletProblem::new(mesh1, mat1),
        np: NeumannProblem::new(mesh2, mat2),
        d,
    };
    let m2 = sys.np.mass().clone();

    let mut interface = g0.clone();
    let mut flux = Vec::new();
    let mut energies = vec![energy(&m1, &u_d) + energy(&m2, &u_n)];
    let mut g_prev = g0;
    let mut before: Option<(Vec<f64>, f64)> = None;
    let mut q_prev: Option<Vec<f64>> = None;
    // Linear part of the affine interface map, per (step size, previous
    // step size).
    type Key = (u64, Option<u64>);
    let mut schur: HashMap<Key, nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>> = HashMap::new();

    for w in grid.points().windows(2) {
        let dt = w[1] - w[0];
        let zero = vec![0.0; d];
        let hist = before.as_ref().map(|(g, h)| (g.as_slice(), *h));
        let base = sys.step(dt, &u_d, &u_n, hist, &g_prev, &zero, q_prev.as_deref())?;
        let key = (dt.to_bits(), before.as_ref().map(|(_, h)| h.to_bits()));
        if let Entry::Vacant(slot) = schur.entry(key) {
            let mut a = DMatrix::<f64>::identity(d, d);
            let mut e = vec![0.0; d];
            for j in 0..d {
                e[j] = 1.0;
                let probe = sys.step(dt, &u_d, &u_n, hist, &g_prev, &e, q_prev.as_deref())?;
                for i in 0..d {
                    a[(i, j)] -= probe.interface[i] - base.interface[i];
                }
                e[j] = 0.0;
            }
            slot.insert(a.lu());
        }
        let g = schur[&key]
            .solve(&DVector::from_column_slice(&base.interface))
            .ok_or_else(|| Error::SingularSystem("interface Schur complement".into()))?;
        let step = sys.step(dt, &u_d, &u_n, hist, &g_prev, g.as_slice(), q_prev.as_deref())?;
        if flux.is_empty() {
            flux.extend_from_slice(&step.q_start);
        }
        flux.extend_from_slice(&step.q_end);
        interface.extend_from_slice(&step.interface);
        u_d = step.dirichlet;
        u_n = step.neumann;
        energies.push(energy(&m1, &u_d) + energy(&m2, &u_n));
        before = Some((std::mem::replace(&mut g_prev, step.interface), dt));
        q_prev = Some(step.q_end);
    }

    Ok(MonolithicSolution {
        interface: Waveform::new(grid.clone(), d, interface)?,
        flux: Waveform::new(grid.clone(), d, flux)?,
        dirichlet_state: u_d,
        neumann_state: u_n,
        energy: energies,
    })
}
