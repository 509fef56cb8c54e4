//! Fixtures shared by the benchmarks.

use waveqn::heat::{benchmark_meshes, initial_condition, DirichletSolver, GridPolicy, NeumannSolver};
use waveqn::{Pairing, TimeGrid, Waveform};

/// Smooth `dim`-component waveform on an equidistant grid.
pub fn smooth_waveform(nodes: usize, dim: usize) -> Waveform {
    let grid = TimeGrid::equidistant(nodes, 1.0).unwrap();
    Waveform::from_fn(grid, dim, |t, out| {
        for (k, v) in out.iter_mut().enumerate() {
            *v = (t * (k + 1) as f64).sin();
        }
    })
}

/// Air-steel subsolvers on `cells × cells` meshes with `steps` fixed steps
/// over `t_end`, and the initial interface temperature as input.
pub fn heat_pair(cells: usize, steps: usize, t_end: f64) -> (DirichletSolver, NeumannSolver, Waveform) {
    let (m1, m2) = benchmark_meshes(cells).unwrap();
    let (a, b) = Pairing::AirSteel.materials();
    let grid = TimeGrid::equidistant(steps + 1, t_end).unwrap();
    let dir = DirichletSolver::new(&m1, &a, &initial_condition(&m1), GridPolicy::Fixed(grid.clone()));
    let neu = NeumannSolver::new(&m2, &b, &initial_condition(&m2), GridPolicy::Fixed(grid.clone()));
    let g = Waveform::constant(grid, neu.initial_interface());
    (dir, neu, g)
}
