use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{grid_map, Cell, ExperimentReport};
use crate::error::{Error, Result};
use crate::fem::assemble_stokes;
use crate::linalg::{condition_number, CondMethod};
use crate::mesh::{generate_unit_disk_mesh, select_region, Mesh, RegionMask, RegionSpec};
use crate::solver::{apply_pressure_constraint, apply_velocity_dirichlet, PressureConstraint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConditionAxis {
    Mesh,
    Delta,
}

/// Condition numbers of the constrained saddle matrix on the unit disk.
///
/// Mesh axis cases: `zero_mean`, `boundary_zero`, `band_layer` (the ring of
/// triangles touching the boundary) and `band_fixed` (triangles within
/// `fixed_width` of the boundary). Delta axis: a disk Δ around `(1, 0)` on one
/// mesh, plus `zero_mean` and `boundary_zero` reference rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConditionConfig {
    pub axis: ConditionAxis,
    pub method: CondMethod,
    /// Ring counts of the mesh axis (boundary vertices `6 * n`).
    pub mesh_radial: Vec<usize>,
    pub fixed_width: f64,
    /// Ring count of the delta-axis mesh.
    pub delta_radial: usize,
    pub delta_radii: Vec<f64>,
    /// Upper end of the |Δ| window used for the delta-axis fit.
    pub delta_fit_max: f64,
}

impl Default for ConditionConfig {
    fn default() -> Self {
        ConditionConfig {
            axis: ConditionAxis::Mesh,
            method: CondMethod::Auto,
            mesh_radial: vec![3, 4, 5, 6, 7, 8, 9, 10],
            fixed_width: 0.2,
            delta_radial: 20,
            delta_radii: vec![0.5, 0.35, 0.25, 0.18, 0.13, 0.09, 0.065, 0.045, 0.032],
            delta_fit_max: 0.1,
        }
    }
}

const COLUMNS: [&str; 6] = ["case", "h", "delta_volume", "delta_diameter", "dimension", "cond"];

enum Case {
    ZeroMean,
    Boundary,
    Band(&'static str, RegionSpec),
}

impl Case {
    fn name(&self) -> &'static str {
        match self {
            Case::ZeroMean => "zero_mean",
            Case::Boundary => "boundary_zero",
            Case::Band(name, _) => name,
        }
    }
}

fn disk(n: usize) -> Result<Arc<Mesh>> {
    Ok(Arc::new(generate_unit_disk_mesh(n, 6 * n)?))
}

/// One grid point: `(mask, dimension, cond)`.
fn measure(mesh: &Arc<Mesh>, case: &Case, method: CondMethod) -> Result<(Option<RegionMask>, usize, f64)> {
    let sys = Arc::new(assemble_stokes(mesh.clone(), |_| [0.0, 0.0])?);
    let vc = apply_velocity_dirichlet(&sys, |_| [0.0, 0.0])?;
    let (constraint, mask) = match case {
        Case::ZeroMean => (PressureConstraint::ZeroMean, None),
        Case::Boundary => (PressureConstraint::boundary(), None),
        Case::Band(_, spec) => {
            let mask = select_region(mesh, spec, true)?;
            (PressureConstraint::band(mask.clone()), Some(mask))
        }
    };
    let cs = apply_pressure_constraint(&vc, &constraint)?;
    let cond = condition_number(&cs.k, method)?;
    Ok((mask, cs.dim(), cond))
}

pub fn run_condition_sweep(config: &ConditionConfig) -> Result<ExperimentReport> {
    let mut jobs: Vec<(usize, Case)> = Vec::new();
    match config.axis {
        ConditionAxis::Mesh => {
            if config.mesh_radial.is_empty() || config.mesh_radial.contains(&0) {
                return Err(Error::InvalidParameter("mesh axis needs positive ring counts".into()));
            }
            for &n in &config.mesh_radial {
                jobs.push((n, Case::ZeroMean));
                jobs.push((n, Case::Boundary));
                jobs.push((n, Case::Band("band_layer", RegionSpec::LayerBand { layers: 1 })));
                jobs.push((
                    n,
                    Case::Band(
                        "band_fixed",
                        RegionSpec::BoundaryBand {
                            width: config.fixed_width,
                        },
                    ),
                ));
            }
        }
        ConditionAxis::Delta => {
            if config.delta_radial == 0 {
                return Err(Error::InvalidParameter("delta axis needs a positive ring count".into()));
            }
            let n = config.delta_radial;
            jobs.push((n, Case::ZeroMean));
            jobs.push((n, Case::Boundary));
            for &radius in &config.delta_radii {
                jobs.push((
                    n,
                    Case::Band(
                        "band_disk",
                        RegionSpec::InteriorDisk {
                            center: [1.0, 0.0],
                            radius,
                        },
                    ),
                ));
            }
        }
    }
    let mut meshes: Vec<(usize, Arc<Mesh>)> = Vec::new();
    for &(n, _) in &jobs {
        if !meshes.iter().any(|(m, _)| *m == n) {
            meshes.push((n, disk(n)?));
        }
    }
    let mesh_for = |n: usize| {
        meshes
            .iter()
            .find(|(m, _)| *m == n)
            .map(|(_, mesh)| mesh.clone())
            .unwrap()
    };
    let results = grid_map(jobs.len(), |i| measure(&mesh_for(jobs[i].0), &jobs[i].1, config.method));

    let mut report = ExperimentReport::new(
        match config.axis {
            ConditionAxis::Mesh => "cond_mesh",
            ConditionAxis::Delta => "cond_delta",
        },
        &COLUMNS,
    );
    for ((n, case), r) in jobs.iter().zip(results) {
        let h = mesh_for(*n).h();
        let head: Vec<Cell> = vec![case.name().into(), h.into()];
        match r {
            Ok((mask, dim, cond)) => {
                let mut cells = head;
                cells.push(mask.as_ref().map(|m| m.volume()).into());
                cells.push(mask.as_ref().map(|m| m.diameter_spec()).into());
                cells.push(dim.into());
                cells.push(cond.into());
                let failure = (!cond.is_finite()).then(|| "matrix is numerically singular".to_string());
                report.push(cells, failure);
            }
            Err(e) => report.push(head, Some(e.to_string())),
        }
    }
    match config.axis {
        ConditionAxis::Mesh => {
            for case in ["zero_mean", "boundary_zero", "band_layer", "band_fixed"] {
                let rows = report.rows_where("case", case);
                report.add_fit(&format!("cond_vs_h:{case}"), &rows, "h", "cond", None);
            }
        }
        ConditionAxis::Delta => {
            let rows = report.rows_where("case", "band_disk");
            report.add_fit(
                "cond_vs_delta:band_disk",
                &rows,
                "delta_volume",
                "cond",
                Some((0.0, config.delta_fit_max)),
            );
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_mesh_sweep() {
        let config = ConditionConfig {
            mesh_radial: vec![2, 3, 4],
            method: CondMethod::Dense,
            ..Default::default()
        };
        let r = run_condition_sweep(&config).unwrap();
        assert_eq!(r.rows.len(), 12);
        assert!(!r.has_failures(), "{:?}", r.failures().collect::<Vec<_>>());
        for case in ["zero_mean", "boundary_zero", "band_layer", "band_fixed"] {
            let fit = r.rate(&format!("cond_vs_h:{case}")).unwrap();
            assert!(fit.slope < 0.0, "{case}: {fit:?}");
        }
        let zm = r.rows_where("case", "zero_mean");
        let bl = r.rows_where("case", "band_layer");
        // The multiplier adds one unknown; the band removes its vertices.
        assert!(r.num(bl[0], "dimension").unwrap() < r.num(zm[0], "dimension").unwrap());
    }

    #[test]
    fn delta_axis_rows() {
        let config = ConditionConfig {
            axis: ConditionAxis::Delta,
            method: CondMethod::Dense,
            delta_radial: 4,
            delta_radii: vec![1.0, 0.7, 0.5, 0.01],
            delta_fit_max: 10.0,
            ..Default::default()
        };
        let r = run_condition_sweep(&config).unwrap();
        assert_eq!(r.rows.len(), 6);
        // A radius that catches no triangle is a failure row, not an abort.
        assert_eq!(r.metadata.failures, 1);
        assert!(r.rows[5].failure.is_some());
        assert!(r.rate("cond_vs_delta:band_disk").is_some());
    }
}
