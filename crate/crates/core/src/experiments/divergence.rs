use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{evaluator, grid_map, Cell, ExperimentReport, PerturbationSpec};
use crate::error::{Error, Result};
use crate::fem::{assemble_stokes, divergence_metrics, field_norm, NormKind, StokesSystem};
use crate::mesh::{generate_unit_square_mesh, select_region, RegionMask, RegionSpec};
use crate::solver::{
    apply_pressure_constraint, apply_velocity_dirichlet, solve_stokes, PressureConstraint, Solution,
    VelocityConstrained,
};

/// Divergence of band-constrained solutions on the unit square with `f = (0, -1)` and
/// boundary velocity `(x1 sin(2 pi x1 x2), sin(2 pi x1 x2))`. The reference is the
/// zero-mean solution `(u*, p*)`; band runs prescribe `p* + delta cos(2 pi x1 x2)` on
/// `layers` rings of boundary triangles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DivergenceConfig {
    pub size: usize,
    pub deltas: Vec<f64>,
    /// Band depths in element layers, increasing.
    pub layers: Vec<usize>,
}

impl Default for DivergenceConfig {
    fn default() -> Self {
        DivergenceConfig {
            size: 64,
            deltas: vec![1e-3, 2.0],
            layers: vec![1, 2, 3, 4, 6, 8, 11, 16],
        }
    }
}

const COLUMNS: [&str; 13] = [
    "case",
    "delta",
    "layers",
    "delta_volume",
    "delta_diameter",
    "l1_omega",
    "l2_omega",
    "l2_mask",
    "l2_complement",
    "abs_integral",
    "velocity_h1",
    "orthogonality",
    "l1_gap",
];

fn boundary_velocity(x: [f64; 2]) -> [f64; 2] {
    let s = (2.0 * PI * x[0] * x[1]).sin();
    [x[0] * s, s]
}

/// Largest `|(div u, q_i)|` over the pressure basis functions `q_i` left free.
fn orthogonality(sys: &StokesSystem, sol: &Solution, mask: Option<&RegionMask>) -> Result<f64> {
    let bu = sys.b.matvec(sol.u.values())?;
    Ok(bu
        .iter()
        .enumerate()
        .filter(|(v, _)| mask.map_or(true, |m| !m.is_constrained(*v)))
        .map(|(_, x)| x.abs())
        .fold(0.0, f64::max))
}

fn metrics_cells(
    sys: &StokesSystem,
    sol: &Solution,
    mask: &RegionMask,
    constrained: Option<&RegionMask>,
) -> Result<Vec<Cell>> {
    let d = divergence_metrics(&sol.u, mask)?;
    Ok(vec![
        d.l1_omega.into(),
        d.l2_omega.into(),
        d.l2_mask.into(),
        d.l2_complement.into(),
        d.abs_integral.into(),
        field_norm(&sol.u, NormKind::H1Semi, None)?.into(),
        orthogonality(sys, sol, constrained)?.into(),
    ])
}

fn band_point(
    vc: &VelocityConstrained,
    reference: &Solution,
    layers: usize,
    delta: f64,
    l1_ref: f64,
) -> Result<Vec<Cell>> {
    let sys = &vc.sys;
    let mask = select_region(sys.mesh(), &RegionSpec::LayerBand { layers }, true)?;
    let pert = PerturbationSpec::divergence(delta)?;
    let p_star = evaluator(&reference.p);
    let constraint = PressureConstraint::BandZero {
        mask: mask.clone(),
        data: Arc::new(move |x| pert.perturb_pressure(x, p_star(x)[0])),
    };
    let sol = solve_stokes(&apply_pressure_constraint(vc, &constraint)?)?;
    let mut cells: Vec<Cell> = vec![
        "band".into(),
        delta.into(),
        layers.into(),
        mask.volume().into(),
        mask.diameter_spec().into(),
    ];
    cells.extend(metrics_cells(sys, &sol, &mask, Some(&mask))?);
    let l1 = cells[5].num().unwrap_or(f64::NAN);
    cells.push((l1 - l1_ref).abs().into());
    Ok(cells)
}

pub fn run_divergence_sweep(config: &DivergenceConfig) -> Result<ExperimentReport> {
    if config.size < 2 {
        return Err(Error::InvalidParameter("mesh size must be at least 2".into()));
    }
    let mesh = Arc::new(generate_unit_square_mesh(config.size)?);
    let sys = Arc::new(assemble_stokes(mesh.clone(), |_| [0.0, -1.0])?);
    let vc = apply_velocity_dirichlet(&sys, boundary_velocity)?;
    let reference = solve_stokes(&apply_pressure_constraint(&vc, &PressureConstraint::ZeroMean)?)?;
    let empty = RegionMask::empty(&mesh);
    let mut report = ExperimentReport::new("divergence", &COLUMNS);
    let mut head: Vec<Cell> = vec!["zero_mean".into(), Cell::Empty, Cell::Empty, 0.0.into(), 0.0.into()];
    head.extend(metrics_cells(&sys, &reference, &empty, None)?);
    let l1_ref = head[5].num().unwrap_or(f64::NAN);
    head.push(0.0.into());
    report.push(head, None);

    let jobs: Vec<(f64, usize)> = config
        .deltas
        .iter()
        .flat_map(|&d| config.layers.iter().map(move |&k| (d, k)))
        .collect();
    let results = grid_map(jobs.len(), |i| {
        band_point(&vc, &reference, jobs[i].1, jobs[i].0, l1_ref)
    });
    for (&(delta, layers), r) in jobs.iter().zip(results) {
        match r {
            Ok(cells) => report.push(cells, None),
            Err(e) => report.push(vec!["band".into(), delta.into(), layers.into()], Some(e.to_string())),
        }
    }
    for &delta in &config.deltas {
        let rows: Vec<usize> = report
            .rows_where("case", "band")
            .into_iter()
            .filter(|&i| report.num(i, "delta") == Some(delta))
            .collect();
        report.add_fit(
            &format!("l1_gap_vs_delta_volume:delta={delta}"),
            &rows,
            "delta_volume",
            "l1_gap",
            None,
        );
    }
    Ok(report)
}
