use std::time::Instant;

use crate::coupling::{Accelerator, CouplingConfig, Relaxation};
use crate::error::Result;
use crate::heat::{GridPolicy, Pairing};
use crate::qn::{FixedGridQn, GridStrategy, QnAccelerator};
use crate::waveform::TimeGrid;

use super::benchmark::{last_step_error, HeatBenchmark, RunOutcome};
use super::{ExperimentConfig, ExperimentRecord, Status};

struct Row<'a> {
    case: String,
    method: &'a str,
    pairing: Pairing,
    n: Option<usize>,
    strategy: String,
    theta: f64,
    tol_wr: f64,
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> (Result<T>, u64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_millis() as u64)
}

fn finish(
    cfg: &ExperimentConfig,
    row: Row<'_>,
    n_qn: Option<usize>,
    outcome: Result<RunOutcome>,
    wall_ms: u64,
    reference: &[f64],
) -> ExperimentRecord {
    let wall_ms = if cfg.record_wall_time { wall_ms } else { 0 };
    let (iterations, work, error, status) = match outcome {
        Ok(o) => (
            o.stats.iterations,
            o.stats.work,
            last_step_error(&o.interface, reference),
            o.status,
        ),
        Err(_) => (0, 0, f64::NAN, Status::Failed),
    };
    ExperimentRecord {
        case: row.case,
        method: row.method.into(),
        pairing: row.pairing,
        n: row.n,
        n_qn,
        strategy: row.strategy,
        theta: row.theta,
        tol_wr: row.tol_wr,
        iterations,
        work,
        error_last_step: error,
        wall_ms,
        status,
    }
}

fn coupling(tol_wr: f64, max_iters: usize, theta: f64, t_end: f64) -> CouplingConfig {
    let mut c = CouplingConfig::single_window(t_end, tol_wr, max_iters);
    c.theta = theta;
    c
}

/// Final-time interface values of a tightly converged adaptive run
/// (quasi-Newton, strategy 1).
fn adaptive_reference(bench: &HeatBenchmark, cfg: &ExperimentConfig, tol: f64) -> Result<Vec<f64>> {
    let policy = HeatBenchmark::adaptive_policy(tol);
    let c = coupling(tol, cfg.max_iters, cfg.theta, bench.t_end);
    let mut accel = QnAccelerator::new(cfg.theta, GridStrategy::NeumannFirst);
    let out = bench.run(policy.clone(), policy, &c, &mut accel)?;
    Ok(out.interface.last().to_vec())
}

/// Fixed CFL-matched grids, quasi-Newton on equidistant auxiliary grids of
/// several sizes. Errors are measured against a monolithic solve on a fine
/// shared grid.
pub fn run_grid_study(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    cfg.validate()?;
    let gs = &cfg.grid_study;
    let mut records = Vec::new();
    for &pairing in &cfg.pairings {
        let bench = HeatBenchmark::new(pairing, cfg.mesh, cfg.t_end)?;
        let ref_steps = match gs.reference_steps {
            Some(n) => n,
            None => {
                let finest = gs
                    .base_steps
                    .iter()
                    .map(|&n| bench.fixed_grids(n).map(|(a, b)| a.steps().max(b.steps())))
                    .collect::<Result<Vec<_>>>()?;
                2 * finest.into_iter().max().unwrap_or(1)
            }
        };
        let reference = bench.monolithic(&TimeGrid::equidistant(ref_steps + 1, cfg.t_end)?)?;
        let reference = reference.interface.last().to_vec();
        for &n in &gs.base_steps {
            let (g1, g2) = bench.fixed_grids(n)?;
            for &n_qn in &gs.n_qn {
                let c = coupling(gs.tol_wr, gs.max_iters, cfg.theta, cfg.t_end);
                let mut accel = QnAccelerator::new(cfg.theta, GridStrategy::Equidistant(n_qn));
                let (outcome, ms) = timed(|| {
                    bench.run(GridPolicy::Fixed(g1.clone()), GridPolicy::Fixed(g2.clone()), &c, &mut accel)
                });
                let row = Row {
                    case: format!("grid/{pairing}/N={n}/NQN={n_qn}"),
                    method: "qnwr-ta",
                    pairing,
                    n: Some(n),
                    strategy: GridStrategy::Equidistant(n_qn).label(),
                    theta: cfg.theta,
                    tol_wr: gs.tol_wr,
                };
                records.push(finish(cfg, row, Some(n_qn), outcome, ms, &reference));
            }
        }
    }
    Ok(records)
}

/// Adaptive subsolvers, quasi-Newton with the three grid selection
/// strategies, over a range of tolerances.
pub fn run_strategy_study(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    cfg.validate()?;
    let ss = &cfg.strategy_study;
    let strategies = [
        GridStrategy::NeumannFirst,
        GridStrategy::DirichletFirst,
        GridStrategy::EquidistantMin,
    ];
    let mut records = Vec::new();
    for &pairing in &cfg.pairings {
        let bench = HeatBenchmark::new(pairing, cfg.mesh, cfg.t_end)?;
        let reference = adaptive_reference(&bench, cfg, ss.reference_tol)?;
        for &tol in &ss.tolerances {
            for strategy in &strategies {
                let policy = HeatBenchmark::adaptive_policy(tol);
                let c = coupling(tol, cfg.max_iters, cfg.theta, cfg.t_end);
                let mut accel = QnAccelerator::new(cfg.theta, strategy.clone());
                let (outcome, ms) = timed(|| bench.run(policy.clone(), policy.clone(), &c, &mut accel));
                let n_qn = accel.grid().map(TimeGrid::len);
                let row = Row {
                    case: format!("strategy/{pairing}/S{}/tol={tol:e}", strategy.label()),
                    method: "qnwr-ta",
                    pairing,
                    n: None,
                    strategy: strategy.label(),
                    theta: cfg.theta,
                    tol_wr: tol,
                };
                records.push(finish(cfg, row, n_qn, outcome, ms, &reference));
            }
        }
    }
    Ok(records)
}

/// Error over work of time-adaptive quasi-Newton, time-adaptive constant
/// relaxation and multirate quasi-Newton on fixed grids.
pub fn run_efficiency_study(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    cfg.validate()?;
    let es = &cfg.efficiency;
    let mut records = Vec::new();
    for &pairing in &cfg.pairings {
        let bench = HeatBenchmark::new(pairing, cfg.mesh, cfg.t_end)?;
        let reference = adaptive_reference(&bench, cfg, es.reference_tol)?;
        for &tol in &es.tolerances {
            let policy = HeatBenchmark::adaptive_policy(tol);

            let c = coupling(tol, cfg.max_iters, cfg.theta, cfg.t_end);
            let mut qn = QnAccelerator::new(cfg.theta, GridStrategy::NeumannFirst);
            let (outcome, ms) = timed(|| bench.run(policy.clone(), policy.clone(), &c, &mut qn));
            let n_qn = qn.grid().map(TimeGrid::len);
            let row = Row {
                case: format!("efficiency/{pairing}/qnwr-ta/tol={tol:e}"),
                method: "qnwr-ta",
                pairing,
                n: None,
                strategy: GridStrategy::NeumannFirst.label(),
                theta: cfg.theta,
                tol_wr: tol,
            };
            records.push(finish(cfg, row, n_qn, outcome, ms, &reference));

            let theta = es.relaxation_theta;
            let c = coupling(tol, cfg.max_iters, theta, cfg.t_end);
            let mut relax = Relaxation { theta };
            let (outcome, ms) = timed(|| bench.run(policy.clone(), policy.clone(), &c, &mut relax));
            let row = Row {
                case: format!("efficiency/{pairing}/relaxation/tol={tol:e}"),
                method: "relaxation",
                pairing,
                n: None,
                strategy: String::new(),
                theta,
                tol_wr: tol,
            };
            records.push(finish(cfg, row, None, outcome, ms, &reference));
        }
        for &n in &es.base_steps {
            let (g1, g2) = bench.fixed_grids(n)?;
            let c = coupling(es.multirate_tol, cfg.max_iters, cfg.theta, cfg.t_end);
            let mut qn = FixedGridQn::new(cfg.theta);
            let accel: &mut dyn Accelerator = &mut qn;
            let (outcome, ms) =
                timed(|| bench.run(GridPolicy::Fixed(g1.clone()), GridPolicy::Fixed(g2.clone()), &c, accel));
            let row = Row {
                case: format!("efficiency/{pairing}/qnwr-multirate/N={n}"),
                method: "qnwr-multirate",
                pairing,
                n: Some(n),
                strategy: String::new(),
                theta: cfg.theta,
                tol_wr: es.multirate_tol,
            };
            records.push(finish(cfg, row, Some(g2.len()), outcome, ms, &reference));
        }
    }
    Ok(records)
}
