//! Drivers for the numerical studies: configuration, result records and
//! CSV output.

mod benchmark;
mod linear_suite;
mod studies;

pub use benchmark::{HeatBenchmark, RunOutcome};
pub use linear_suite::{run_linear_verification, LinearReport};
pub use studies::{run_efficiency_study, run_grid_study, run_strategy_study};

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heat::Pairing;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub pairings: Vec<Pairing>,
    /// Cells per direction in each subdomain.
    pub mesh: usize,
    /// Window length in seconds.
    pub t_end: f64,
    /// Relaxation weight of the first quasi-Newton step and of the constant
    /// relaxation comparator.
    pub theta: f64,
    /// Iteration cap of the adaptive studies.
    pub max_iters: usize,
    pub seed: u64,
    /// Write measured wall times; when off the column is zero and output is
    /// byte-reproducible.
    pub record_wall_time: bool,
    pub grid_study: GridStudyConfig,
    pub strategy_study: StrategyStudyConfig,
    pub efficiency: EfficiencyConfig,
    pub linear: LinearConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridStudyConfig {
    /// Base step counts `N`.
    pub base_steps: Vec<usize>,
    /// Node counts of the equidistant auxiliary grid.
    pub n_qn: Vec<usize>,
    pub tol_wr: f64,
    pub max_iters: usize,
    /// Steps of the monolithic reference; twice the finest subsolver step
    /// count when unset.
    pub reference_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyStudyConfig {
    pub tolerances: Vec<f64>,
    pub reference_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EfficiencyConfig {
    pub tolerances: Vec<f64>,
    /// Base step counts of the multirate fixed-grid runs.
    pub base_steps: Vec<usize>,
    pub multirate_tol: f64,
    pub relaxation_theta: f64,
    pub reference_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearConfig {
    pub trials: usize,
    pub min_dim: usize,
    pub max_dim: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            pairings: Pairing::ALL.to_vec(),
            mesh: 32,
            t_end: 1e5,
            theta: 0.5,
            max_iters: 50,
            seed: 0,
            record_wall_time: true,
            grid_study: GridStudyConfig::default(),
            strategy_study: StrategyStudyConfig::default(),
            efficiency: EfficiencyConfig::default(),
            linear: LinearConfig::default(),
        }
    }
}

impl Default for GridStudyConfig {
    fn default() -> Self {
        Self {
            base_steps: vec![4, 8, 16, 32, 64],
            n_qn: vec![10, 100, 1000],
            tol_wr: 1e-12,
            max_iters: 20,
            reference_steps: None,
        }
    }
}

impl Default for StrategyStudyConfig {
    fn default() -> Self {
        Self {
            tolerances: vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5],
            reference_tol: 1e-6,
        }
    }
}

impl Default for EfficiencyConfig {
    fn default() -> Self {
        Self {
            tolerances: vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5],
            base_steps: vec![8, 16, 32, 64],
            multirate_tol: 1e-6,
            relaxation_theta: 0.5,
            reference_tol: 1e-6,
        }
    }
}

impl Default for LinearConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            min_dim: 2,
            max_dim: 12,
        }
    }
}

impl ExperimentConfig {
    /// Step counts and auxiliary grid sizes of the original study.
    pub fn full_scale() -> Self {
        let mut cfg = Self::default();
        cfg.grid_study.base_steps = vec![4, 8, 16, 32, 64, 128, 256];
        cfg.grid_study.n_qn = vec![10, 100, 10_000];
        cfg.efficiency.base_steps = vec![8, 16, 32, 64, 128, 256];
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive (got {v})")))
            }
        };
        if self.pairings.is_empty() {
            return Err(Error::Config("no pairings selected".into()));
        }
        if self.mesh < 2 {
            return Err(Error::Config(format!("mesh must be at least 2 (got {})", self.mesh)));
        }
        positive("t_end", self.t_end)?;
        if !(0.0..=1.0).contains(&self.theta) || !(0.0..=1.0).contains(&self.efficiency.relaxation_theta) {
            return Err(Error::Config("relaxation weights must lie in [0, 1]".into()));
        }
        positive("grid_study.tol_wr", self.grid_study.tol_wr)?;
        positive("strategy_study.reference_tol", self.strategy_study.reference_tol)?;
        positive("efficiency.reference_tol", self.efficiency.reference_tol)?;
        positive("efficiency.multirate_tol", self.efficiency.multirate_tol)?;
        for &t in self.strategy_study.tolerances.iter().chain(&self.efficiency.tolerances) {
            positive("tolerance", t)?;
        }
        if self.grid_study.n_qn.iter().any(|&n| n < 2) {
            return Err(Error::Config("auxiliary grids need at least 2 nodes".into()));
        }
        if self.grid_study.base_steps.iter().chain(&self.efficiency.base_steps).any(|&n| n == 0) {
            return Err(Error::Config("base step counts must be positive".into()));
        }
        if self.linear.min_dim < 2 || self.linear.min_dim > self.linear.max_dim {
            return Err(Error::Config("linear dimensions must satisfy 2 <= min_dim <= max_dim".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    /// Iteration cap reached; the row reports the best iterate.
    MaxIters,
    Failed,
}

/// One row of a result table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub case: String,
    pub method: String,
    pub pairing: Pairing,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    #[serde(rename = "N_QN")]
    pub n_qn: Option<usize>,
    pub strategy: String,
    pub theta: f64,
    pub tol_wr: f64,
    pub iterations: usize,
    pub work: usize,
    pub error_last_step: f64,
    pub wall_ms: u64,
    pub status: Status,
}

pub fn write_csv<W: Write>(records: &[ExperimentRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<ExperimentRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in rd.deserialize() {
        out.push(row?);
    }
    Ok(out)
}
