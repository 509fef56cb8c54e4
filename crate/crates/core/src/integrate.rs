//! SDIRK2 time stepping with an embedded error estimate, step-size
//! controllers and the adaptive driver.
//!
//! The tableau is the two-stage, stiffly accurate, L-stable SDIRK method
//!
//! ```text
//!  γ | γ
//!  1 | 1-γ   γ
//! ---+---------
//!    | 1-γ   γ        (order 2)
//!    | 1/2   1/2      (embedded, order 1)
//! ```
//!
//! with `γ = 1 - 1/√2`.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};
use crate::waveform::{TimeGrid, Waveform};

pub const GAMMA: f64 = 1.0 - FRAC_1_SQRT_2;
/// Stage abscissae.
pub const C: [f64; 2] = [GAMMA, 1.0];
const A21: f64 = 1.0 - GAMMA;
const B: [f64; 2] = [1.0 - GAMMA, GAMMA];
const B_HAT: [f64; 2] = [0.5, 0.5];

/// Error estimates are clamped below by this value before entering the
/// controller formulas.
pub const ERROR_FLOOR: f64 = 1e-14;
/// Maximal step growth factor per accepted step.
pub const MAX_GROWTH: f64 = 3.0;
/// Minimal step, relative to the integration interval.
pub const DT_MIN_REL: f64 = 1e-12;

/// A (linearly) implicit ODE `u' = f(t, u)` as seen by a DIRK method.
pub trait StageProblem {
    fn dim(&self) -> usize;

    /// Solves `k = f(t, base + gamma_dt * k)` for the stage slope `k`.
    fn stage(&mut self, t: f64, gamma_dt: f64, base: &[f64], k: &mut [f64]) -> Result<()>;

    /// Evaluates `f(t, u)`.
    fn slope(&mut self, t: f64, u: &[f64], out: &mut [f64]) -> Result<()>;

    /// Norm used for the local error estimate.
    fn error_norm(&self, diff: &[f64]) -> f64 {
        l2(diff)
    }

    fn output_dim(&self) -> usize {
        self.dim()
    }

    /// Maps the state at time `t` to the recorded output. `slope` is the last
    /// stage slope of the step that produced `u`, or `None` at the initial time.
    fn output(&mut self, _t: f64, u: &[f64], _slope: Option<&[f64]>, out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(u);
        Ok(())
    }
}

pub(crate) fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepEstimate {
    pub u_next: Vec<f64>,
    /// `‖ũ - u_next‖`, in the problem's error norm.
    pub l_next: f64,
    /// Slope of the last stage, equal to `f(t_n + dt, u_next)`.
    pub slope: Vec<f64>,
}

pub fn sdirk2_step<P: StageProblem + ?Sized>(
    problem: &mut P,
    u_n: &[f64],
    t_n: f64,
    dt: f64,
) -> Result<StepEstimate> {
    if !(dt > 0.0) {
        return Err(Error::StepUnderflow { t: t_n, dt });
    }
    let n = problem.dim();
    if u_n.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: u_n.len(),
        });
    }
    let gdt = GAMMA * dt;
    let mut k1 = vec![0.0; n];
    problem.stage(t_n + C[0] * dt, gdt, u_n, &mut k1)?;

    let base: Vec<f64> = u_n.iter().zip(&k1).map(|(u, k)| u + dt * A21 * k).collect();
    let mut k2 = vec![0.0; n];
    problem.stage(t_n + dt, gdt, &base, &mut k2)?;

    let mut u_next = Vec::with_capacity(n);
    let mut diff = Vec::with_capacity(n);
    for i in 0..n {
        let u = u_n[i] + dt * (B[0] * k1[i] + B[1] * k2[i]);
        let u_hat = u_n[i] + dt * (B_HAT[0] * k1[i] + B_HAT[1] * k2[i]);
        u_next.push(u);
        diff.push(u_hat - u);
    }
    if u_next.iter().any(|x| !x.is_finite()) {
        return Err(Error::StageSolveFailure("non-finite state".into()));
    }
    Ok(StepEstimate {
        l_next: problem.error_norm(&diff),
        u_next,
        slope: k2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Controller {
    Pi,
    Deadbeat,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerState {
    pub dt_prev: f64,
    pub l_prev: f64,
    pub tol_ta: f64,
}

impl ControllerState {
    /// The error history is seeded with `tol_ta`.
    pub fn new(dt0: f64, tol_ta: f64) -> Self {
        Self {
            dt_prev: dt0,
            l_prev: tol_ta,
            tol_ta,
        }
    }

    /// Proposes the next step and shifts the error history.
    pub fn advance(&mut self, controller: Controller, dt_taken: f64, l_next: f64) -> f64 {
        self.dt_prev = dt_taken;
        let proposal = match controller {
            Controller::Pi => pi_controller(self, l_next),
            Controller::Deadbeat => deadbeat_controller(dt_taken, l_next, self.tol_ta),
        };
        self.l_prev = l_next.max(ERROR_FLOOR);
        proposal
    }
}

/// `dt · (TOL/l_{n+1})^{1/12} · (TOL/l_n)^{1/12}`.
pub fn pi_controller(state: &ControllerState, l_next: f64) -> f64 {
    let l_next = l_next.max(ERROR_FLOOR);
    let l_prev = state.l_prev.max(ERROR_FLOOR);
    state.dt_prev * (state.tol_ta / l_next).powf(1.0 / 12.0) * (state.tol_ta / l_prev).powf(1.0 / 12.0)
}

/// `dt · (TOL/l)^{1/2}`.
pub fn deadbeat_controller(dt_prev: f64, l_next: f64, tol_ta: f64) -> f64 {
    dt_prev * (tol_ta / l_next.max(ERROR_FLOOR)).sqrt()
}

/// `|T_f - T_0| · TOL^{1/2} / (100 (1 + ‖f(u_0)‖))`.
pub fn initial_step(t0: f64, t_end: f64, tol_ta: f64, f_norm: f64) -> f64 {
    (t_end - t0).abs() * tol_ta.sqrt() / (100.0 * (1.0 + f_norm))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveOptions {
    pub controller: Controller,
    pub tol_ta: f64,
    /// First step; computed by [`initial_step`] when `None`.
    pub dt0: Option<f64>,
}

/// Result of an integration over one window.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Problem output at every grid node.
    pub output: Waveform,
    /// Number of accepted steps.
    pub steps: usize,
    pub final_state: Vec<f64>,
}

impl Trajectory {
    pub fn grid(&self) -> &TimeGrid {
        self.output.grid()
    }
}

fn record<P: StageProblem + ?Sized>(
    problem: &mut P,
    t: f64,
    u: &[f64],
    slope: Option<&[f64]>,
    out: &mut Vec<f64>,
) -> Result<()> {
    let m = problem.output_dim();
    let start = out.len();
    out.resize(start + m, 0.0);
    problem.output(t, u, slope, &mut out[start..])
}

/// Integrates over the nodes of a fixed grid.
pub fn integrate_fixed<P: StageProblem + ?Sized>(
    problem: &mut P,
    u0: &[f64],
    grid: &TimeGrid,
) -> Result<Trajectory> {
    let mut out = Vec::with_capacity(grid.len() * problem.output_dim());
    record(problem, 0.0, u0, None, &mut out)?;
    let mut u = u0.to_vec();
    let pts = grid.points();
    for w in pts.windows(2) {
        let est = sdirk2_step(problem, &u, w[0], w[1] - w[0])?;
        u = est.u_next;
        record(problem, w[1], &u, Some(&est.slope), &mut out)?;
    }
    let dim = problem.output_dim();
    Ok(Trajectory {
        output: Waveform::new(grid.clone(), dim, out)?,
        steps: grid.steps(),
        final_state: u,
    })
}

/// Adaptive integration over `[0, t_end]`. Every step is accepted; the last
/// step is truncated so the final node is exactly `t_end`.
pub fn adaptive_integrate<P: StageProblem + ?Sized>(
    problem: &mut P,
    u0: &[f64],
    t_end: f64,
    opts: &AdaptiveOptions,
) -> Result<Trajectory> {
    if !(t_end > 0.0) || !(opts.tol_ta > 0.0) {
        return Err(Error::Config(format!(
            "adaptive integration needs t_end > 0 and tol_ta > 0 (got {t_end}, {})",
            opts.tol_ta
        )));
    }
    let dt_min = DT_MIN_REL * t_end;
    let mut dt = match opts.dt0 {
        Some(dt) => dt,
        None => {
            let mut f0 = vec![0.0; problem.dim()];
            problem.slope(0.0, u0, &mut f0)?;
            initial_step(0.0, t_end, opts.tol_ta, l2(&f0))
        }
    };
    let mut ctrl = ControllerState::new(dt, opts.tol_ta);

    let mut times = vec![0.0];
    let mut out = Vec::new();
    record(problem, 0.0, u0, None, &mut out)?;
    let mut u = u0.to_vec();
    let mut t = 0.0;
    loop {
        let last = t + dt >= t_end - dt_min;
        if last {
            dt = t_end - t;
        } else if !(dt >= dt_min) {
            return Err(Error::StepUnderflow { t, dt });
        }
        let est = sdirk2_step(problem, &u, t, dt)?;
        let t_next = if last { t_end } else { t + dt };
        u = est.u_next;
        record(problem, t_next, &u, Some(&est.slope), &mut out)?;
        times.push(t_next);
        t = t_next;
        if last {
            break;
        }
        let proposal = ctrl.advance(opts.controller, dt, est.l_next);
        dt = proposal.min(MAX_GROWTH * dt);
    }
    let steps = times.len() - 1;
    let grid = TimeGrid::new(times)?;
    let dim = problem.output_dim();
    Ok(Trajectory {
        output: Waveform::new(grid, dim, out)?,
        steps,
        final_state: u,
    })
}

/// Scalar linear test equation `u' = λ u + s(t)` with polynomial source
/// `s(t) = Σ c_i t^i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarLinear {
    pub lambda: f64,
    pub source: Vec<f64>,
}

impl ScalarLinear {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            source: Vec::new(),
        }
    }

    fn source_at(&self, t: f64) -> f64 {
        self.source.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }
}

impl StageProblem for ScalarLinear {
    fn dim(&self) -> usize {
        1
    }

    fn stage(&mut self, t: f64, gamma_dt: f64, base: &[f64], k: &mut [f64]) -> Result<()> {
        let denom = 1.0 - gamma_dt * self.lambda;
        if denom == 0.0 {
            return Err(Error::StageSolveFailure("singular scalar stage".into()));
        }
        k[0] = (self.lambda * base[0] + self.source_at(t)) / denom;
        Ok(())
    }

    fn slope(&mut self, t: f64, u: &[f64], out: &mut [f64]) -> Result<()> {
        out[0] = self.lambda * u[0] + self.source_at(t);
        Ok(())
    }
}

/// Least-squares slope of `log(err)` against `log(dt)`.
pub fn observed_order(dts: &[f64], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_solution_has_zero_estimate() {
        let mut p = ScalarLinear::new(0.0);
        for dt in [1e-3, 0.1, 7.0] {
            let est = sdirk2_step(&mut p, &[5.0], 0.0, dt).unwrap();
            assert_eq!(est.u_next, vec![5.0]);
            assert_eq!(est.l_next, 0.0);
        }
    }

    #[test]
    fn linear_forcing_is_integrated_exactly() {
        let mut p = ScalarLinear {
            lambda: 0.0,
            source: vec![0.0, 1.0],
        };
        let est = sdirk2_step(&mut p, &[0.0], 0.0, 1.0).unwrap();
        assert!((est.u_next[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn exponential_decay_is_second_order() {
        let exact = (-1.0f64).exp();
        let dts: Vec<f64> = (0..5).map(|i| 0.1 / 2f64.powi(i)).collect();
        let errs: Vec<f64> = dts
            .iter()
            .map(|&dt| {
                let n = (1.0 / dt).round() as usize;
                let grid = TimeGrid::equidistant(n + 1, 1.0).unwrap();
                let tr = integrate_fixed(&mut ScalarLinear::new(-1.0), &[1.0], &grid).unwrap();
                (tr.final_state[0] - exact).abs()
            })
            .collect();
        let order = observed_order(&dts, &errs);
        assert!((order - 2.0).abs() <= 0.2, "order {order}");

        // Single step: local error is O(dt^3).
        let est = sdirk2_step(&mut ScalarLinear::new(-1.0), &[1.0], 0.0, 0.1).unwrap();
        assert!((est.u_next[0] - (-0.1f64).exp()).abs() < 1e-3 * 0.1);
    }

    #[test]
    fn pi_controller_examples() {
        let s = ControllerState::new(0.1, 1e-3);
        assert!((pi_controller(&s, 1e-3) - 0.1).abs() < 1e-15);

        let tol = 1e-3;
        let l = tol * 2f64.powi(-12);
        let s = ControllerState {
            dt_prev: 0.1,
            l_prev: l,
            tol_ta: tol,
        };
        assert!((pi_controller(&s, l) - 0.4).abs() < 1e-14);

        let s = ControllerState::new(0.1, tol);
        assert!((pi_controller(&s, 2f64.powi(12) * tol) - 0.05).abs() < 1e-15);
        assert!(pi_controller(&s, 0.0).is_finite());
        assert!(pi_controller(&s, 0.0) > 0.0);
    }

    #[test]
    fn deadbeat_controller_examples() {
        let tol = 1e-4;
        assert!((deadbeat_controller(0.1, tol, tol) - 0.1).abs() < 1e-15);
        assert!((deadbeat_controller(0.1, tol / 4.0, tol) - 0.2).abs() < 1e-15);
        assert!((deadbeat_controller(0.1, 4.0 * tol, tol) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn initial_step_examples() {
        assert!((initial_step(0.0, 1.0, 1e-4, 0.0) - 1e-4).abs() < 1e-18);
        assert!((initial_step(0.0, 1.0, 1e-4, 99.0) - 1e-6).abs() < 1e-20);
        assert!((initial_step(0.0, 10.0, 1e-2, 0.0) - 1e-2).abs() < 1e-16);
    }

    #[test]
    fn zero_error_grows_by_clamp() {
        let opts = AdaptiveOptions {
            controller: Controller::Pi,
            tol_ta: 1e-4,
            dt0: Some(1e-3),
        };
        let tr = adaptive_integrate(&mut ScalarLinear::new(0.0), &[2.0], 1.0, &opts).unwrap();
        let dts: Vec<f64> = tr.grid().step_sizes().collect();
        for w in dts[..dts.len() - 1].windows(2) {
            assert!((w[1] / w[0] - MAX_GROWTH).abs() < 1e-12);
        }
        assert_eq!(tr.grid().end(), 1.0);
        assert!(tr.output.values().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn stiff_decay_steps_grow_after_transient() {
        let opts = AdaptiveOptions {
            controller: Controller::Pi,
            tol_ta: 1e-4,
            dt0: None,
        };
        let tr = adaptive_integrate(&mut ScalarLinear::new(-1000.0), &[1.0], 1.0, &opts).unwrap();
        let dts: Vec<f64> = tr.grid().step_sizes().collect();
        assert!(dts.len() > 5);
        // Non-uniform and increasing after the first few steps.
        let n = dts.len();
        assert!(dts[n - 2] > 10.0 * dts[0]);
        let tail = &dts[n / 2..n - 1];
        assert!(tail.windows(2).all(|w| w[1] >= w[0] * 0.999));
    }

    #[test]
    fn tighter_tolerance_costs_more_and_is_more_accurate() {
        let exact = (-5.0f64).exp();
        let run = |tol: f64| {
            let opts = AdaptiveOptions {
                controller: Controller::Pi,
                tol_ta: tol,
                dt0: None,
            };
            let tr = adaptive_integrate(&mut ScalarLinear::new(-5.0), &[1.0], 1.0, &opts).unwrap();
            (tr.steps, (tr.final_state[0] - exact).abs())
        };
        let (s1, e1) = run(1e-4);
        let (s2, e2) = run(1e-6);
        assert!(s2 > s1);
        assert!(e2 < e1);
    }

    #[test]
    fn deterministic_grids() {
        let opts = AdaptiveOptions {
            controller: Controller::Deadbeat,
            tol_ta: 1e-5,
            dt0: None,
        };
        let a = adaptive_integrate(&mut ScalarLinear::new(-3.0), &[1.0], 2.0, &opts).unwrap();
        let b = adaptive_integrate(&mut ScalarLinear::new(-3.0), &[1.0], 2.0, &opts).unwrap();
        assert_eq!(a.output, b.output);
    }
}
