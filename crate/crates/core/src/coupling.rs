//! Gauss–Seidel waveform relaxation over time windows.
//!
//! One iteration runs the first subsolver on the current interface iterate,
//! feeds its output waveform to the second subsolver and hands the result
//! `x̂` to an [`Accelerator`], which produces the next iterate. Termination
//! is checked on the final-time values of `x̂` and the previous iterate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::l2;
use crate::qn::{GridStrategy, QnAccelerator};
use crate::waveform::{TimeGrid, Waveform};

/// Denominators below this are treated as zero in the relative criterion.
pub const ZERO_NORM: f64 = 1e-300;

#[derive(Debug, Clone)]
pub struct SolverOutput {
    pub waveform: Waveform,
    /// Accepted time steps.
    pub steps: usize,
}

/// A discrete time-adaptive Poincaré–Steklov operator: maps an interface
/// waveform over the window `[0, input.end()]` to an output waveform on the
/// solver's own time grid.
pub trait Subsolver {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn solve(&mut self, input: &Waveform) -> Result<SolverOutput>;
    /// Makes the end state of the last solve the initial state of the next
    /// window.
    fn accept_window(&mut self) {}
}

impl<S: Subsolver + ?Sized> Subsolver for &mut S {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn output_dim(&self) -> usize {
        (**self).output_dim()
    }
    fn solve(&mut self, input: &Waveform) -> Result<SolverOutput> {
        (**self).solve(input)
    }
    fn accept_window(&mut self) {
        (**self).accept_window()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Termination {
    /// `‖v^{k+1}(T_f) - v^k(T_f)‖ / ‖v^{k+1}(T_f)‖ ≤ tol`.
    RelativeLastStep,
    /// `sqrt(Σ r_i² Δx) ≤ tol` on the last-step residual.
    AbsoluteWeighted { dx: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Acceleration {
    None,
    Relaxation,
    Qn { strategy: GridStrategy },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingConfig {
    pub tol_wr: f64,
    pub max_iters: usize,
    /// Relaxation weight, also used for the first quasi-Newton step.
    pub theta: f64,
    /// Window boundaries `0 = T_0 < T_1 < ... < T_total`.
    pub windows: Vec<f64>,
    pub termination: Termination,
    pub acceleration: Acceleration,
}

impl CouplingConfig {
    /// Single window `[0, t_end]` with the relative criterion and no
    /// acceleration.
    pub fn single_window(t_end: f64, tol_wr: f64, max_iters: usize) -> Self {
        Self {
            tol_wr,
            max_iters,
            theta: 1.0,
            windows: vec![0.0, t_end],
            termination: Termination::RelativeLastStep,
            acceleration: Acceleration::None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol_wr > 0.0) {
            return Err(Error::Config(format!("tol_wr must be positive (got {})", self.tol_wr)));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::Config(format!("theta must lie in [0, 1] (got {})", self.theta)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        TimeGrid::new(self.windows.clone()).map_err(|e| Error::Config(format!("windows: {e}")))?;
        Ok(())
    }

    pub fn accelerator(&self) -> Box<dyn Accelerator> {
        match &self.acceleration {
            Acceleration::None => Box::new(NoAcceleration),
            Acceleration::Relaxation => Box::new(Relaxation { theta: self.theta }),
            Acceleration::Qn { strategy } => Box::new(QnAccelerator::new(self.theta, strategy.clone())),
        }
    }

    pub fn converged(&self, x_hat_end: &[f64], x_end: &[f64]) -> bool {
        match self.termination {
            Termination::RelativeLastStep => check_termination_relative(x_hat_end, x_end, self.tol_wr),
            Termination::AbsoluteWeighted { dx } => {
                let r: Vec<f64> = x_hat_end.iter().zip(x_end).map(|(a, b)| a - b).collect();
                check_termination_absolute(&r, dx, self.tol_wr)
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationStats {
    /// Composite solves performed.
    pub iterations: usize,
    /// Accepted time steps of both subsolvers over all iterations.
    pub work: usize,
    /// Steps of the first and second subsolver in every iteration.
    pub steps: Vec<(usize, usize)>,
    /// Termination quantity after every iteration.
    pub residual_history: Vec<f64>,
    /// Quasi-Newton updates that fell back to relaxation.
    pub fallbacks: usize,
}

/// Everything an accelerator may look at after a composite solve.
pub struct IterationContext<'a> {
    /// Output of the second subsolver, on its own grid.
    pub x_hat: &'a Waveform,
    /// The iterate that was fed to the first subsolver.
    pub x_prev: &'a Waveform,
    /// Grid of the first subsolver's output in this iteration.
    pub first_grid: &'a TimeGrid,
    /// 1-based iteration number.
    pub iteration: usize,
}

pub trait Accelerator {
    fn next(&mut self, ctx: &IterationContext<'_>) -> Result<Waveform>;
    /// Forgets all history (called at window boundaries).
    fn reset(&mut self);
    fn fallbacks(&self) -> usize {
        0
    }
}

/// Plain Gauss–Seidel: the next iterate is `x̂`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoAcceleration;

impl Accelerator for NoAcceleration {
    fn next(&mut self, ctx: &IterationContext<'_>) -> Result<Waveform> {
        Ok(ctx.x_hat.clone())
    }
    fn reset(&mut self) {}
}

/// Constant relaxation on the grid of the newest solver output.
#[derive(Debug, Clone, Copy)]
pub struct Relaxation {
    pub theta: f64,
}

impl Accelerator for Relaxation {
    fn next(&mut self, ctx: &IterationContext<'_>) -> Result<Waveform> {
        relax(self.theta, ctx.x_hat, ctx.x_prev)
    }
    fn reset(&mut self) {}
}

/// `θ x̂ + (1-θ) I(x_prev)`, with the previous iterate sampled on the grid
/// of `x̂`.
pub fn relax(theta: f64, x_hat: &Waveform, x_prev: &Waveform) -> Result<Waveform> {
    if theta == 1.0 {
        return Ok(x_hat.clone());
    }
    let prev = x_prev.sample(x_hat.grid())?;
    if theta == 0.0 {
        return Ok(prev);
    }
    x_hat.lincomb(theta, &prev, 1.0 - theta)
}

/// Relative update of the final-time values. Falls back to the absolute
/// difference when `‖v_new‖` vanishes.
pub fn check_termination_relative(v_new: &[f64], v_old: &[f64], tol: f64) -> bool {
    relative_update(v_new, v_old) <= tol
}

/// The quantity compared against the tolerance by
/// [`check_termination_relative`].
pub fn relative_update(v_new: &[f64], v_old: &[f64]) -> f64 {
    let diff = v_new.iter().zip(v_old).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let denom = l2(v_new);
    if denom < ZERO_NORM {
        diff
    } else {
        diff / denom
    }
}

/// `sqrt(Σ r_i² Δx) ≤ tol`.
pub fn check_termination_absolute(r_last: &[f64], dx: f64, tol: f64) -> bool {
    absolute_weighted(r_last, dx) <= tol
}

pub fn absolute_weighted(r_last: &[f64], dx: f64) -> f64 {
    (r_last.iter().map(|r| r * r).sum::<f64>() * dx).sqrt()
}

fn termination_value(cfg: &CouplingConfig, x_hat_end: &[f64], x_end: &[f64]) -> f64 {
    match cfg.termination {
        Termination::RelativeLastStep => relative_update(x_hat_end, x_end),
        Termination::AbsoluteWeighted { dx } => {
            let r: Vec<f64> = x_hat_end.iter().zip(x_end).map(|(a, b)| a - b).collect();
            absolute_weighted(&r, dx)
        }
    }
}

/// Iterates one window until termination or `cfg.max_iters` composite
/// solves. Returns the last output of the second subsolver.
pub fn run_window(
    s1: &mut dyn Subsolver,
    s2: &mut dyn Subsolver,
    x0: &Waveform,
    cfg: &CouplingConfig,
    accel: &mut dyn Accelerator,
) -> Result<(Waveform, IterationStats)> {
    if s1.input_dim() != x0.dim() || s2.output_dim() != x0.dim() {
        return Err(Error::DimensionMismatch {
            expected: x0.dim(),
            found: s2.output_dim(),
        });
    }
    let mut stats = IterationStats::default();
    let mut x = x0.clone();
    let mut best: Option<(f64, Waveform)> = None;
    for k in 1..=cfg.max_iters {
        let out1 = s1
            .solve(&x)
            .map_err(|e| Error::SolverFailure(format!("first subsolver, iteration {k}: {e}")))?;
        let out2 = s2
            .solve(&out1.waveform)
            .map_err(|e| Error::SolverFailure(format!("second subsolver, iteration {k}: {e}")))?;
        stats.iterations = k;
        stats.work += out1.steps + out2.steps;
        stats.steps.push((out1.steps, out2.steps));
        let x_hat = out2.waveform;

        let value = termination_value(cfg, x_hat.last(), x.last());
        stats.residual_history.push(value);
        if cfg.converged(x_hat.last(), x.last()) {
            stats.fallbacks = accel.fallbacks();
            return Ok((x_hat, stats));
        }
        if best.as_ref().is_none_or(|(v, _)| value < *v) {
            best = Some((value, x_hat.clone()));
        }
        let ctx = IterationContext {
            x_hat: &x_hat,
            x_prev: &x,
            first_grid: out1.waveform.grid(),
            iteration: k,
        };
        x = accel.next(&ctx)?;
    }
    stats.fallbacks = accel.fallbacks();
    let best = best.map(|(_, w)| w).unwrap_or(x);
    Err(Error::MaxItersExceeded {
        iterations: cfg.max_iters,
        best: Box::new((best, stats)),
    })
}

/// The first `iterations` iterates fed to the first subsolver after `x0`,
/// without checking termination.
pub fn trace_iterates(
    s1: &mut dyn Subsolver,
    s2: &mut dyn Subsolver,
    x0: &Waveform,
    accel: &mut dyn Accelerator,
    iterations: usize,
) -> Result<Vec<Waveform>> {
    let mut x = x0.clone();
    let mut trace = Vec::with_capacity(iterations);
    for k in 1..=iterations {
        let out1 = s1.solve(&x)?;
        let x_hat = s2.solve(&out1.waveform)?.waveform;
        let ctx = IterationContext {
            x_hat: &x_hat,
            x_prev: &x,
            first_grid: out1.waveform.grid(),
            iteration: k,
        };
        x = accel.next(&ctx)?;
        trace.push(x.clone());
    }
    Ok(trace)
}

/// Runs all windows of `cfg`. The final-time interface value of each window
/// seeds a constant initial guess for the next one; accelerator history is
/// reset at every window boundary.
pub fn run_windows(
    s1: &mut dyn Subsolver,
    s2: &mut dyn Subsolver,
    initial_interface: &[f64],
    cfg: &CouplingConfig,
) -> Result<Vec<(Waveform, IterationStats)>> {
    cfg.validate()?;
    let mut accel = cfg.accelerator();
    let mut guess = initial_interface.to_vec();
    let mut results = Vec::with_capacity(cfg.windows.len() - 1);
    for w in cfg.windows.windows(2) {
        let len = w[1] - w[0];
        let x0 = Waveform::constant(TimeGrid::new(vec![0.0, len])?, &guess);
        accel.reset();
        let (x, stats) = run_window(s1, s2, &x0, cfg, accel.as_mut())?;
        s1.accept_window();
        s2.accept_window();
        guess = x.last().to_vec();
        results.push((x, stats));
    }
    Ok(results)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Affine map on constant-in-time data: `S(x)(t) = a·x(T) + b` on a grid
    /// with `n` equidistant nodes.
    pub(crate) struct Affine {
        pub a: f64,
        pub b: f64,
        pub nodes: usize,
    }

    impl Subsolver for Affine {
        fn input_dim(&self) -> usize {
            1
        }
        fn output_dim(&self) -> usize {
            1
        }
        fn solve(&mut self, input: &Waveform) -> Result<SolverOutput> {
            let grid = TimeGrid::equidistant(self.nodes, input.end())?;
            let v = self.a * input.last()[0] + self.b;
            Ok(SolverOutput {
                waveform: Waveform::constant(grid, &[v]),
                steps: self.nodes - 1,
            })
        }
    }

    fn x0(v: f64) -> Waveform {
        Waveform::constant(TimeGrid::new(vec![0.0, 1.0]).unwrap(), &[v])
    }

    #[test]
    fn contractive_toy_converges_geometrically() {
        // S2 ∘ S1 (x) = 0.5 x + 1, fixed point 2.
        let mut s1 = Affine { a: 0.5, b: 0.0, nodes: 3 };
        let mut s2 = Affine { a: 1.0, b: 1.0, nodes: 4 };
        let tol = 1e-8;
        let cfg = CouplingConfig::single_window(1.0, tol, 100);
        let (x, stats) = run_window(&mut s1, &mut s2, &x0(0.0), &cfg, &mut NoAcceleration).unwrap();
        assert!((x.last()[0] - 2.0).abs() < 1e-7);
        assert!(stats.iterations as f64 <= tol.log2().abs() + 2.0);
        assert_eq!(stats.work, stats.iterations * (2 + 3));
        assert_eq!(stats.residual_history.len(), stats.iterations);
    }

    #[test]
    fn infinite_tolerance_stops_after_one_iteration() {
        let mut s1 = Affine { a: 0.5, b: 0.0, nodes: 2 };
        let mut s2 = Affine { a: 1.0, b: 1.0, nodes: 2 };
        let cfg = CouplingConfig::single_window(1.0, f64::INFINITY, 10);
        let (_, stats) = run_window(&mut s1, &mut s2, &x0(0.0), &cfg, &mut NoAcceleration).unwrap();
        assert_eq!(stats.iterations, 1);
    }

    #[test]
    fn fixed_point_input_stops_after_one_iteration() {
        let mut s1 = Affine { a: 0.5, b: 0.0, nodes: 5 };
        let mut s2 = Affine { a: 1.0, b: 1.0, nodes: 5 };
        let cfg = CouplingConfig::single_window(1.0, 1e-12, 10);
        let (x, stats) = run_window(&mut s1, &mut s2, &x0(2.0), &cfg, &mut NoAcceleration).unwrap();
        assert_eq!(stats.iterations, 1);
        assert_eq!(stats.residual_history[0], 0.0);
        assert_eq!(x.last()[0], 2.0);
    }

    #[test]
    fn max_iterations_carry_best_iterate() {
        let mut s1 = Affine { a: 0.9, b: 0.0, nodes: 2 };
        let mut s2 = Affine { a: 1.0, b: 1.0, nodes: 2 };
        let cfg = CouplingConfig::single_window(1.0, 1e-14, 3);
        match run_window(&mut s1, &mut s2, &x0(0.0), &cfg, &mut NoAcceleration) {
            Err(Error::MaxItersExceeded { iterations, best }) => {
                assert_eq!(iterations, 3);
                assert_eq!(best.1.iterations, 3);
                assert_eq!(best.1.work, 6);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn relative_criterion() {
        assert!(check_termination_relative(&[3.0, 4.0], &[3.0, 4.0], 1e-300));
        let tol = 1e-6;
        let old = [1.0, -2.0];
        let new: Vec<f64> = old.iter().map(|v| v * (1.0 + 2.0 * tol)).collect();
        // Relative update 2 tol / (1 + 2 tol) > tol.
        assert!(!check_termination_relative(&new, &old, tol));
        assert!(check_termination_relative(&[0.0], &[0.0], 1e-12));
        assert!(!check_termination_relative(&[0.0], &[1e-3], 1e-6));
    }

    #[test]
    fn absolute_criterion() {
        assert!(check_termination_absolute(&[0.0, 0.0], 0.1, 0.0));
        assert!(check_termination_absolute(&[1.0, 1.0], 0.5, 1.0));
        assert!(!check_termination_absolute(&[2.0, 0.0], 1.0, 1.0));
    }

    #[test]
    fn relax_examples() {
        let g = TimeGrid::new(vec![0.0, 0.5, 1.0]).unwrap();
        let x_hat = Waveform::constant(g.clone(), &[2.0]);
        let coarse = TimeGrid::new(vec![0.0, 1.0]).unwrap();
        let x_prev = Waveform::new(coarse, 1, vec![0.0, 4.0]).unwrap();
        assert_eq!(relax(1.0, &x_hat, &x_prev).unwrap(), x_hat);
        assert_eq!(relax(0.0, &x_hat, &x_prev).unwrap().values(), &[0.0, 2.0, 4.0]);
        let y = Waveform::constant(g, &[4.0]);
        assert_eq!(relax(0.5, &x_hat, &y).unwrap().values(), &[3.0, 3.0, 3.0]);
    }

    #[test]
    fn config_validation() {
        let mut cfg = CouplingConfig::single_window(1.0, 1e-6, 10);
        assert!(cfg.validate().is_ok());
        cfg.theta = 1.5;
        assert!(cfg.validate().is_err());
        cfg.theta = 0.5;
        cfg.windows = vec![0.0, 0.5, 0.4];
        assert!(cfg.validate().is_err());
        cfg.windows = vec![0.0, 1.0];
        cfg.tol_wr = 0.0;
        assert!(cfg.validate().is_err());
    }
}
