//! Two coupled linear heat equations on `Ω₁ = [-1,0]×[0,1]` and
//! `Ω₂ = [0,1]×[0,1]`, discretized with linear finite elements in space and
//! SDIRK2 in time, coupled through Dirichlet–Neumann interface exchange.

mod band;
mod mesh;
mod monolithic;
mod solvers;

pub use mesh::{assemble, spmv_add, submatrix, HeatMesh, Operators, ShiftedSolver, Side};
pub use monolithic::{monolithic_reference, MonolithicSolution};
pub use solvers::{
    DirichletProblem, DirichletSolver, GridPolicy, NeumannProblem, NeumannSolver,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Volumetric heat capacity `α = c ρ` in J/(K·m³) and thermal conductivity
/// `λ` in W/(m·K).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub alpha: f64,
    pub lambda: f64,
}

impl Material {
    pub const STEEL: Material = Material {
        alpha: 3_471_348.0,
        lambda: 49.0,
    };
    pub const WATER: Material = Material {
        alpha: 4_190_842.0,
        lambda: 0.58,
    };
    pub const AIR: Material = Material {
        alpha: 1_299_465.0,
        lambda: 0.024,
    };

    pub fn new(alpha: f64, lambda: f64) -> Self {
        assert!(alpha > 0.0 && lambda > 0.0, "material constants must be positive");
        Self { alpha, lambda }
    }

    /// Thermal diffusivity `λ/α`.
    pub fn diffusivity(&self) -> f64 {
        self.lambda / self.alpha
    }
}

/// Material pairs studied in the benchmark, named `<Ω₁>-<Ω₂>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pairing {
    #[serde(rename = "air-steel")]
    AirSteel,
    #[serde(rename = "air-water")]
    AirWater,
    #[serde(rename = "water-steel")]
    WaterSteel,
}

impl Pairing {
    pub const ALL: [Pairing; 3] = [Pairing::AirSteel, Pairing::AirWater, Pairing::WaterSteel];

    pub fn materials(self) -> (Material, Material) {
        match self {
            Pairing::AirSteel => (Material::AIR, Material::STEEL),
            Pairing::AirWater => (Material::AIR, Material::WATER),
            Pairing::WaterSteel => (Material::WATER, Material::STEEL),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Pairing::AirSteel => "air-steel",
            Pairing::AirWater => "air-water",
            Pairing::WaterSteel => "water-steel",
        }
    }
}

impl std::str::FromStr for Pairing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Pairing::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown pairing '{s}'")))
    }
}

impl std::fmt::Display for Pairing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Step counts `(n1, n2)` over the window that give both subdomains the same
/// CFL number for `N` base steps:
/// `n1 = max(1, ⌊α₁λ₂/(α₂λ₁)⌋)·N`, `n2 = max(1, ⌊α₂λ₁/(α₁λ₂)⌋)·N`.
pub fn cfl_matched_step_counts(mat1: &Material, mat2: &Material, n: usize) -> (usize, usize) {
    let ratio = (mat1.alpha * mat2.lambda) / (mat2.alpha * mat1.lambda);
    let inv = (mat2.alpha * mat1.lambda) / (mat1.alpha * mat2.lambda);
    let f1 = (ratio.floor() as usize).max(1);
    let f2 = (inv.floor() as usize).max(1);
    (f1 * n, f2 * n)
}

/// `(Δt₁, Δt₂)` for `N` base steps on `[0, t_end]`.
pub fn cfl_matched_steps(mat1: &Material, mat2: &Material, n: usize, t_end: f64) -> (f64, f64) {
    let (n1, n2) = cfl_matched_step_counts(mat1, mat2, n);
    (t_end / n1 as f64, t_end / n2 as f64)
}

/// `u(x, y) = 500 sin(π y) sin(π (x + 1) / 2)`.
pub fn initial_temperature(x: f64, y: f64) -> f64 {
    use std::f64::consts::PI;
    500.0 * (PI * y).sin() * (PI * (x + 1.0) / 2.0).sin()
}

/// Nodal interpolation of [`initial_temperature`] on every mesh node.
pub fn initial_condition(mesh: &HeatMesh) -> Vec<f64> {
    (0..mesh.num_nodes())
        .map(|v| {
            let (x, y) = mesh.coords(v);
            initial_temperature(x, y)
        })
        .collect()
}

/// Both subdomain meshes of the benchmark with `n × n` cells each.
pub fn benchmark_meshes(n: usize) -> Result<(HeatMesh, HeatMesh)> {
    Ok((HeatMesh::new(n, n, Side::Left)?, HeatMesh::new(n, n, Side::Right)?))
}
