use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{evaluator, grid_map, Cell, ExperimentReport};
use crate::error::{Error, Result};
use crate::fem::{assemble_stokes, p1_error_l2, p2_error_h1_semi, DiscreteField};
use crate::mesh::{generate_unit_square_mesh, select_region, Mesh, Point, RegionSpec};
use crate::operators::p1_integral;
use crate::solver::{apply_pressure_constraint, apply_velocity_dirichlet, PressureConstraint, SolverKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvergenceConfig {
    /// Square cells per side, increasing.
    pub sizes: Vec<usize>,
    /// Also re-solve under the boundary band with discrete and exact pressure data.
    pub band_checks: bool,
    pub solver: SolverKind,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            sizes: vec![16, 32, 64, 128, 256],
            band_checks: false,
            solver: SolverKind::Schur,
        }
    }
}

/// `u = (d psi / d x2, -d psi / d x1)` with `psi = sin^2(pi x1) sin^2(pi x2)`.
pub fn manufactured_velocity(x: Point) -> [f64; 2] {
    let (sx, sy) = ((PI * x[0]).sin(), (PI * x[1]).sin());
    [
        PI * sx * sx * (2.0 * PI * x[1]).sin(),
        -PI * (2.0 * PI * x[0]).sin() * sy * sy,
    ]
}

/// `sin(pi x1) cos(pi x2)`, which has zero mean on the unit square.
pub fn manufactured_pressure(x: Point) -> f64 {
    (PI * x[0]).sin() * (PI * x[1]).cos()
}

fn velocity_gradient(x: Point) -> [[f64; 2]; 2] {
    let p2 = PI * PI;
    let (s2x, s2y) = ((2.0 * PI * x[0]).sin(), (2.0 * PI * x[1]).sin());
    let (sx, sy) = ((PI * x[0]).sin(), (PI * x[1]).sin());
    [
        [p2 * s2x * s2y, 2.0 * p2 * sx * sx * (2.0 * PI * x[1]).cos()],
        [-2.0 * p2 * (2.0 * PI * x[0]).cos() * sy * sy, -p2 * s2x * s2y],
    ]
}

/// `f = -Lap u + grad p`.
fn forcing(x: Point) -> [f64; 2] {
    let p3 = PI * PI * PI;
    let (c2x, c2y) = ((2.0 * PI * x[0]).cos(), (2.0 * PI * x[1]).cos());
    [
        -2.0 * p3 * (2.0 * PI * x[1]).sin() * (2.0 * c2x - 1.0) + PI * (PI * x[0]).cos() * (PI * x[1]).cos(),
        2.0 * p3 * (2.0 * PI * x[0]).sin() * (2.0 * c2y - 1.0) - PI * (PI * x[0]).sin() * (PI * x[1]).sin(),
    ]
}

const COLUMNS: [&str; 7] = [
    "n",
    "h",
    "u_h1_error",
    "p_l2_error",
    "p_mean",
    "band_velocity_gap",
    "band_exact_velocity_gap",
];

fn max_gap(a: &DiscreteField, b: &DiscreteField) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Errors at one mesh size, optionally plus two band-constrained re-solves on the ring of
/// boundary triangles: with the computed pressure as data (must reproduce the
/// velocity) and with the exact pressure as data.
fn level(n: usize, band_checks: bool, solver: SolverKind) -> Result<Vec<Cell>> {
    let mesh: Arc<Mesh> = Arc::new(generate_unit_square_mesh(n)?);
    let sys = Arc::new(assemble_stokes(mesh.clone(), forcing)?);
    let vc = apply_velocity_dirichlet(&sys, |_| [0.0, 0.0])?;
    let zm = solver.solve(&apply_pressure_constraint(&vc, &PressureConstraint::ZeroMean)?)?;
    let u_err = p2_error_h1_semi(&zm.u, velocity_gradient)?;
    let p_err = p1_error_l2(&zm.p, manufactured_pressure)?;
    let p_mean = p1_integral(&zm.p) / mesh.total_area();
    let mut cells: Vec<Cell> = vec![n.into(), mesh.h().into(), u_err.into(), p_err.into(), p_mean.into()];
    if !band_checks {
        return Ok(cells);
    }

    let mask = select_region(&mesh, &RegionSpec::LayerBand { layers: 1 }, true)?;
    let ph = evaluator(&zm.p);
    let discrete = PressureConstraint::BandZero {
        mask: mask.clone(),
        data: Arc::new(move |x| ph(x)[0]),
    };
    let band = solver.solve(&apply_pressure_constraint(&vc, &discrete)?)?;
    let exact = PressureConstraint::BandZero {
        mask,
        data: Arc::new(manufactured_pressure),
    };
    let band_exact = solver.solve(&apply_pressure_constraint(&vc, &exact)?)?;
    cells.push(max_gap(&band.u, &zm.u).into());
    cells.push(max_gap(&band_exact.u, &zm.u).into());
    Ok(cells)
}

pub fn run_manufactured_convergence(config: &ConvergenceConfig) -> Result<ExperimentReport> {
    if config.sizes.iter().any(|&n| n < 2) || config.sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "mesh sizes must be increasing and at least 2".into(),
        ));
    }
    let results = grid_map(config.sizes.len(), |i| {
        level(config.sizes[i], config.band_checks, config.solver)
    });
    let mut report = ExperimentReport::new("convergence", &COLUMNS);
    for (&n, r) in config.sizes.iter().zip(results) {
        match r {
            Ok(cells) => report.push(cells, None),
            Err(e) => report.push(vec![n.into(), (2f64.sqrt() / n as f64).into()], Some(e.to_string())),
        }
    }
    let rows: Vec<usize> = (0..report.rows.len())
        .filter(|&i| report.rows[i].failure.is_none())
        .collect();
    report.add_fit("u_h1_error_vs_h", &rows, "h", "u_h1_error", None);
    report.add_fit("p_l2_error_vs_h", &rows, "h", "p_l2_error", None);
    Ok(report)
}
