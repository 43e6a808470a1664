use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{grid_map, Cell, ExperimentReport};
use crate::error::{Error, Result};
use crate::fem::assemble_stokes;
use crate::mesh::{generate_unit_square_mesh, select_region, Point, RegionSpec};
use crate::operators::discrete_infsup;
use crate::solver::PressureConstraint;

/// Discrete inf-sup constants on the unit square: `zero_mean` and a fixed boundary
/// band (`band_fixed`) under refinement, and a shrinking interior disk (`band_disk`)
/// on one mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InfsupConfig {
    pub sizes: Vec<usize>,
    pub band_width: f64,
    pub disk_size: usize,
    pub disk_center: Point,
    /// Decreasing radii of the interior disk.
    pub disk_radii: Vec<f64>,
}

impl Default for InfsupConfig {
    fn default() -> Self {
        InfsupConfig {
            sizes: vec![8, 16, 32],
            band_width: 0.1,
            disk_size: 32,
            disk_center: [0.5, 0.5],
            disk_radii: vec![0.4, 0.3, 0.2, 0.14, 0.1, 0.07, 0.05, 0.035],
        }
    }
}

const COLUMNS: [&str; 5] = ["case", "h", "delta_volume", "delta_diameter", "beta"];

fn point(case: &str, n: usize, spec: Option<&RegionSpec>) -> Result<Vec<Cell>> {
    let mesh = Arc::new(generate_unit_square_mesh(n)?);
    let sys = Arc::new(assemble_stokes(mesh.clone(), |_| [0.0, 0.0])?);
    let constraint = match spec {
        None => PressureConstraint::ZeroMean,
        Some(s) => PressureConstraint::band(select_region(&mesh, s, true)?),
    };
    let est = discrete_infsup(&sys, &constraint)?;
    Ok(vec![
        case.into(),
        mesh.h().into(),
        est.delta_volume.into(),
        est.delta_diameter.into(),
        est.value.into(),
    ])
}

pub fn run_infsup_study(config: &InfsupConfig) -> Result<ExperimentReport> {
    if config.disk_radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("disk radii must be strictly decreasing".into()));
    }
    let mut jobs: Vec<(&str, usize, Option<RegionSpec>)> = Vec::new();
    for &n in &config.sizes {
        jobs.push(("zero_mean", n, None));
        jobs.push((
            "band_fixed",
            n,
            Some(RegionSpec::BoundaryBand {
                width: config.band_width,
            }),
        ));
    }
    for &radius in &config.disk_radii {
        jobs.push((
            "band_disk",
            config.disk_size,
            Some(RegionSpec::InteriorDisk {
                center: config.disk_center,
                radius,
            }),
        ));
    }
    let results = grid_map(jobs.len(), |i| point(jobs[i].0, jobs[i].1, jobs[i].2.as_ref()));
    let mut report = ExperimentReport::new("infsup", &COLUMNS);
    for ((case, n, _), r) in jobs.iter().zip(results) {
        match r {
            Ok(cells) => report.push(cells, None),
            Err(e) => report.push(
                vec![(*case).into(), (2f64.sqrt() / *n as f64).into()],
                Some(e.to_string()),
            ),
        }
    }
    let rows = report.rows_where("case", "band_disk");
    report.add_fit("beta_vs_delta:band_disk", &rows, "delta_volume", "beta", None);
    Ok(report)
}
