use std::fmt;

use nalgebra::DVector;
use rand::Rng;

use crate::error::Result;
use crate::linear::{
    gmres_relation_probe, interp_error_closed_form, interp_error_definition, random_grid, random_subgrid,
    random_system, seeded_rng, verify_finite_termination, verify_last_step, LinearCoupledSystem,
};
use crate::waveform::TimeGrid;

use super::LinearConfig;

/// Summary of the randomized linear checks.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearReport {
    pub trials: usize,
    /// Trials in which the iteration needed more than `d + 1` updates.
    pub finite_failures: usize,
    /// Largest `k - (d + 1)` over all trials (nonpositive when all pass).
    pub finite_worst_margin: i64,
    pub max_last_step: f64,
    pub max_iterated_last_step: f64,
    /// Full residual of a fixed instance with a one-step auxiliary grid.
    pub last_step_constructed_full: f64,
    pub interp_max_rel_deviation: f64,
    /// Largest `‖e_QN‖` over trials with identical grids.
    pub interp_matching_max: f64,
    /// Informational only.
    pub gmres_max_deviation: f64,
}

impl LinearReport {
    pub fn finite_termination_pass(&self) -> bool {
        self.finite_failures == 0
    }

    pub fn last_step_pass(&self) -> bool {
        self.max_last_step <= 1e-10
            && self.max_iterated_last_step <= 1e-10
            && self.last_step_constructed_full > 1e-6
    }

    pub fn interp_error_pass(&self) -> bool {
        self.interp_max_rel_deviation <= 1e-9 && self.interp_matching_max <= 1e-12
    }

    pub fn all_pass(&self) -> bool {
        self.finite_termination_pass() && self.last_step_pass() && self.interp_error_pass()
    }
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

impl fmt::Display for LinearReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "[{}] finite termination: {} trials, {} over d+1, worst margin {}",
            mark(self.finite_termination_pass()),
            self.trials,
            self.finite_failures,
            self.finite_worst_margin
        )?;
        writeln!(
            f,
            "[{}] last-step residual: max {:.3e} (direct), {:.3e} (iterated); constructed full residual {:.3e}",
            mark(self.last_step_pass()),
            self.max_last_step,
            self.max_iterated_last_step,
            self.last_step_constructed_full
        )?;
        writeln!(
            f,
            "[{}] interpolation error: max relative deviation {:.3e}, matching grids max {:.3e}",
            mark(self.interp_error_pass()),
            self.interp_max_rel_deviation,
            self.interp_matching_max
        )?;
        writeln!(f, "[INFO] GMRES relation: max deviation {:.3e}", self.gmres_max_deviation)
    }
}

/// Random `(d, T₂)` with `d · |T₂|` in `[min, max]`.
fn random_shape(cfg: &LinearConfig, rng: &mut impl Rng) -> Result<(usize, TimeGrid)> {
    let n = rng.random_range(cfg.min_dim..=cfg.max_dim);
    let dim = if n >= 4 && n % 2 == 0 && rng.random_bool(0.5) { 2 } else { 1 };
    Ok((dim, random_grid(n / dim, rng)?))
}

/// `T₂` with at least three nodes so that a strictly coarser `T_QN` exists.
fn coarse_pair(cfg: &LinearConfig, rng: &mut impl Rng) -> Result<(usize, TimeGrid, TimeGrid)> {
    loop {
        let (dim, g2) = random_shape(cfg, rng)?;
        if g2.len() >= 3 {
            let gq = random_subgrid(&g2, rng)?;
            return Ok((dim, g2, gq));
        }
    }
}

pub fn constructed_last_step_instance(seed: u64) -> Result<LinearCoupledSystem> {
    let mut rng = seeded_rng(seed);
    random_system(
        2,
        TimeGrid::equidistant(5, 1.0)?,
        TimeGrid::new(vec![0.0, 1.0])?,
        &mut rng,
    )
}

pub fn run_linear_verification(cfg: &LinearConfig, seed: u64) -> Result<LinearReport> {
    let mut rng = seeded_rng(seed);
    let mut report = LinearReport {
        trials: cfg.trials,
        finite_failures: 0,
        finite_worst_margin: i64::MIN,
        max_last_step: 0.0,
        max_iterated_last_step: 0.0,
        last_step_constructed_full: 0.0,
        interp_max_rel_deviation: 0.0,
        interp_matching_max: 0.0,
        gmres_max_deviation: 0.0,
    };

    for _ in 0..cfg.trials {
        let (dim, g2) = random_shape(cfg, &mut rng)?;
        let sys = random_system(dim, g2.clone(), g2, &mut rng)?;
        let d = sys.n2();
        let margin = match verify_finite_termination(&sys, 0.5) {
            Ok(k) => k as i64 - (d as i64 + 1),
            Err(_) => 5,
        };
        report.finite_worst_margin = report.finite_worst_margin.max(margin);
        if margin > 0 {
            report.finite_failures += 1;
        }
        report.interp_matching_max = report.interp_matching_max.max(interp_error_closed_form(&sys)?.norm());
        let dev = gmres_relation_probe(&sys, &DVector::zeros(d))?;
        report.gmres_max_deviation = report.gmres_max_deviation.max(dev);
    }

    for _ in 0..cfg.trials {
        let (dim, g2, gq) = coarse_pair(cfg, &mut rng)?;
        let sys = random_system(dim, g2, gq, &mut rng)?;
        let rep = verify_last_step(&sys)?;
        report.max_last_step = report.max_last_step.max(rep.last_step);
        report.max_iterated_last_step = report.max_iterated_last_step.max(rep.iterated_last_step);

        let closed = interp_error_closed_form(&sys)?;
        let def = interp_error_definition(&sys)?;
        let rel = (&closed - &def).norm() / def.norm().max(f64::MIN_POSITIVE);
        report.interp_max_rel_deviation = report.interp_max_rel_deviation.max(rel);
    }

    report.last_step_constructed_full = verify_last_step(&constructed_last_step_instance(seed)?)?.full;
    Ok(report)
}
