use crate::coupling::{run_window, Accelerator, CouplingConfig, IterationStats};
use crate::error::{Error, Result};
use crate::heat::{
    benchmark_meshes, cfl_matched_step_counts, initial_condition, monolithic_reference, DirichletSolver,
    GridPolicy, HeatMesh, MonolithicSolution, NeumannSolver, Pairing,
};
use crate::integrate::Controller;
use crate::waveform::{TimeGrid, Waveform};

use super::Status;

/// The coupled heat benchmark for one material pairing: `Ω₁` is solved with
/// Dirichlet data, `Ω₂` with Neumann data.
#[derive(Debug, Clone)]
pub struct HeatBenchmark {
    pub pairing: Pairing,
    pub t_end: f64,
    mesh1: HeatMesh,
    mesh2: HeatMesh,
    init1: Vec<f64>,
    init2: Vec<f64>,
}

/// Result of one coupled run, including runs that hit the iteration cap.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub interface: Waveform,
    pub stats: IterationStats,
    pub status: Status,
}

impl HeatBenchmark {
    pub fn new(pairing: Pairing, mesh: usize, t_end: f64) -> Result<Self> {
        let (mesh1, mesh2) = benchmark_meshes(mesh)?;
        Ok(Self {
            pairing,
            t_end,
            init1: initial_condition(&mesh1),
            init2: initial_condition(&mesh2),
            mesh1,
            mesh2,
        })
    }

    pub fn interface_dim(&self) -> usize {
        self.mesh2.interface_dim()
    }

    /// Initial temperature on the interface nodes.
    pub fn initial_interface(&self) -> Vec<f64> {
        self.mesh2.interface_nodes().iter().map(|&v| self.init2[v]).collect()
    }

    /// Constant-in-time initial waveform iterate.
    pub fn initial_guess(&self) -> Result<Waveform> {
        Ok(Waveform::constant(
            TimeGrid::new(vec![0.0, self.t_end])?,
            &self.initial_interface(),
        ))
    }

    pub fn solvers(&self, p1: GridPolicy, p2: GridPolicy) -> (DirichletSolver, NeumannSolver) {
        let (m1, m2) = self.pairing.materials();
        (
            DirichletSolver::new(&self.mesh1, &m1, &self.init1, p1),
            NeumannSolver::new(&self.mesh2, &m2, &self.init2, p2),
        )
    }

    /// Equidistant grids with matching CFL numbers for `n` base steps.
    pub fn fixed_grids(&self, n: usize) -> Result<(TimeGrid, TimeGrid)> {
        let (m1, m2) = self.pairing.materials();
        let (n1, n2) = cfl_matched_step_counts(&m1, &m2, n);
        Ok((
            TimeGrid::equidistant(n1 + 1, self.t_end)?,
            TimeGrid::equidistant(n2 + 1, self.t_end)?,
        ))
    }

    /// PI-controlled steps with `TOL_TA = TOL_WR / 5`.
    pub fn adaptive_policy(tol_wr: f64) -> GridPolicy {
        GridPolicy::Adaptive {
            controller: Controller::Pi,
            tol_ta: tol_wr / 5.0,
        }
    }

    pub fn monolithic(&self, grid: &TimeGrid) -> Result<MonolithicSolution> {
        let (m1, m2) = self.pairing.materials();
        monolithic_reference(&self.mesh1, &m1, &self.init1, &self.mesh2, &m2, &self.init2, grid)
    }

    /// One window of the coupled iteration from the constant initial guess.
    pub fn run(
        &self,
        p1: GridPolicy,
        p2: GridPolicy,
        cfg: &CouplingConfig,
        accel: &mut dyn Accelerator,
    ) -> Result<RunOutcome> {
        let (mut s1, mut s2) = self.solvers(p1, p2);
        let x0 = self.initial_guess()?;
        match run_window(&mut s1, &mut s2, &x0, cfg, accel) {
            Ok((interface, stats)) => Ok(RunOutcome {
                interface,
                stats,
                status: Status::Converged,
            }),
            Err(Error::MaxItersExceeded { best, .. }) => {
                let (interface, stats) = *best;
                Ok(RunOutcome {
                    interface,
                    stats,
                    status: Status::MaxIters,
                })
            }
            Err(e) => Err(e),
        }
    }
}

/// Euclidean distance of the final-time values.
pub(crate) fn last_step_error(a: &Waveform, reference: &[f64]) -> f64 {
    a.last()
        .iter()
        .zip(reference)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
