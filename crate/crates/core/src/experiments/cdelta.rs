use serde::{Deserialize, Serialize};

use super::{grid_map, DomainChoice, ExperimentReport};
use crate::error::{Error, Result};
use crate::fem::assembly::{Element, Tabulated};
use crate::fem::Family;
use crate::mesh::{generate_unit_disk_mesh, generate_unit_square_mesh, select_region, Mesh, RegionSpec};
use crate::operators::analytic::{analytic_ratio, DiskRegion, TestFunction};
use crate::operators::c_delta_ratio_indicator;

/// Shape of Δ: a disk in the middle of the domain or a band along the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionShape {
    Central,
    Ring,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CDeltaConfig {
    pub domain: DomainChoice,
    pub region: RegionShape,
    pub functions: Vec<TestFunction>,
    /// Square cells per side, or disk rings (with `6 * resolution` boundary vertices).
    pub resolution: usize,
    /// Disk radii or band widths of the mesh path, strictly decreasing.
    pub mesh_sizes: Vec<f64>,
    /// |Δ| values of the analytic path (disk only), strictly decreasing.
    pub analytic_volumes: Vec<f64>,
}

impl Default for CDeltaConfig {
    fn default() -> Self {
        CDeltaConfig {
            domain: DomainChoice::Disk,
            region: RegionShape::Central,
            functions: TestFunction::ALL.to_vec(),
            resolution: 16,
            mesh_sizes: vec![0.8, 0.6, 0.45, 0.3, 0.2, 0.15, 0.1],
            analytic_volumes: (1..=20).map(|k| 10f64.powi(-k)).collect(),
        }
    }
}

pub const CDELTA_COLUMNS: [&str; 4] = ["h", "delta_volume", "ratio", "function_id"];

fn strictly_decreasing(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|x| !(*x > 0.0)) || v.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidParameter(format!(
            "{what} must be positive and strictly decreasing"
        )));
    }
    Ok(())
}

/// Mean of `f` over the mesh by degree-6 quadrature.
fn mesh_mean(mesh: &Mesh, f: TestFunction) -> f64 {
    let tab = Tabulated::new(Family::P1, 6);
    let mut s = 0.0;
    for t in 0..mesh.num_triangles() {
        let el = Element::new(mesh, t);
        for (q, &r) in tab.rule.points.iter().enumerate() {
            s += tab.rule.weights[q] * el.det * f.raw(el.map(r));
        }
    }
    s / mesh.total_area()
}

/// `||T P f|| / ||P f||` per |Δ| for each test function: on the mesh (indicator `P`,
/// element quadrature) and, on the disk, by polar quadrature far below mesh resolution.
///
/// Mesh rows carry `h`; analytic rows leave it empty. Fits: `mesh:<f>` and
/// `analytic:<f>` over all points, `analytic_tail:<f>` over the smallest two decades.
pub fn run_cdelta_sweep(config: &CDeltaConfig) -> Result<ExperimentReport> {
    strictly_decreasing(&config.mesh_sizes, "mesh region sizes")?;
    strictly_decreasing(&config.analytic_volumes, "analytic volumes")?;
    if config.resolution == 0 {
        return Err(Error::InvalidParameter("resolution must be positive".into()));
    }
    let mesh = match config.domain {
        DomainChoice::Square => generate_unit_square_mesh(config.resolution)?,
        DomainChoice::Disk => generate_unit_disk_mesh(config.resolution, 6 * config.resolution)?,
    };
    let center = match config.domain {
        DomainChoice::Square => [0.5, 0.5],
        DomainChoice::Disk => [0.0, 0.0],
    };
    let specs: Vec<RegionSpec> = config
        .mesh_sizes
        .iter()
        .map(|&s| match config.region {
            RegionShape::Central => RegionSpec::InteriorDisk { center, radius: s },
            RegionShape::Ring => RegionSpec::BoundaryBand { width: s },
        })
        .collect();
    let mut report = ExperimentReport::new("cdelta", &CDELTA_COLUMNS);
    let h = mesh.h();
    for &f in &config.functions {
        let shift = if f.subtracts_mean() { mesh_mean(&mesh, f) } else { 0.0 };
        let first = report.rows.len();
        let rows = grid_map(specs.len(), |i| {
            select_region(&mesh, &specs[i], true)
                .and_then(|mask| c_delta_ratio_indicator(&mesh, &mask, |x| f.raw(x) - shift))
        });
        for r in rows {
            match r {
                Ok(est) => report.push(
                    vec![h.into(), est.delta_volume.into(), est.value.into(), f.id().into()],
                    None,
                ),
                Err(e) => report.push(
                    vec![h.into(), Default::default(), Default::default(), f.id().into()],
                    Some(e.to_string()),
                ),
            }
        }
        let mesh_rows: Vec<usize> = (first..report.rows.len())
            .filter(|&i| report.rows[i].failure.is_none())
            .collect();
        report.add_fit(&format!("mesh:{}", f.id()), &mesh_rows, "delta_volume", "ratio", None);

        if config.domain == DomainChoice::Disk && !config.analytic_volumes.is_empty() {
            let first = report.rows.len();
            let vols = &config.analytic_volumes;
            let rows = grid_map(vols.len(), |i| {
                let region = match config.region {
                    RegionShape::Central => DiskRegion::central_with_volume(vols[i]),
                    RegionShape::Ring => DiskRegion::ring_with_volume(vols[i]),
                };
                analytic_ratio(f, region).map(|r| (region.volume(), r))
            });
            for (i, r) in rows.into_iter().enumerate() {
                match r {
                    Ok((v, ratio)) => {
                        report.push(vec![Default::default(), v.into(), ratio.into(), f.id().into()], None)
                    }
                    Err(e) => report.push(
                        vec![Default::default(), vols[i].into(), Default::default(), f.id().into()],
                        Some(e.to_string()),
                    ),
                }
            }
            let rows: Vec<usize> = (first..report.rows.len())
                .filter(|&i| report.rows[i].failure.is_none())
                .collect();
            report.add_fit(&format!("analytic:{}", f.id()), &rows, "delta_volume", "ratio", None);
            let vmin = vols[vols.len() - 1];
            report.add_fit(
                &format!("analytic_tail:{}", f.id()),
                &rows,
                "delta_volume",
                "ratio",
                Some((vmin * (1.0 - 1e-12), 100.0 * vmin * (1.0 + 1e-12))),
            );
        }
    }
    if config.domain == DomainChoice::Square {
        report.note("analytic path is available on the disk only");
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_sweep_shapes_and_rates() {
        let config = CDeltaConfig {
            functions: vec![TestFunction::P1, TestFunction::P4],
            resolution: 8,
            mesh_sizes: vec![0.7, 0.5, 0.35],
            analytic_volumes: vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
            ..Default::default()
        };
        let r = run_cdelta_sweep(&config).unwrap();
        assert_eq!(r.columns, CDELTA_COLUMNS);
        assert_eq!(r.rows.len(), 2 * (3 + 5));
        assert!(!r.has_failures());
        let p1 = r.rate("analytic:p1").unwrap();
        assert!((p1.slope - 0.5).abs() < 1e-3, "{p1:?}");
        // Constants on the mesh path follow the volume law exactly.
        for i in r.rows_where("function_id", "p1") {
            if let Some(h) = r.num(i, "h") {
                assert!(h > 0.0);
                let v = r.num(i, "delta_volume").unwrap();
                let area = generate_unit_disk_mesh(8, 48).unwrap().total_area();
                let exact = (v / area).sqrt();
                assert!((r.num(i, "ratio").unwrap() - exact).abs() <= 1e-10 * exact);
            }
        }
        assert!(r.rate("analytic_tail:p4").unwrap().slope.abs() < 0.1);
    }

    #[test]
    fn rejects_increasing_sizes() {
        let config = CDeltaConfig {
            mesh_sizes: vec![0.2, 0.3],
            ..Default::default()
        };
        assert!(run_cdelta_sweep(&config).is_err());
    }

    #[test]
    fn square_has_no_analytic_rows() {
        let config = CDeltaConfig {
            domain: DomainChoice::Square,
            region: RegionShape::Ring,
            functions: vec![TestFunction::P5],
            resolution: 8,
            mesh_sizes: vec![0.3, 0.2, 0.1],
            ..Default::default()
        };
        let r = run_cdelta_sweep(&config).unwrap();
        assert_eq!(r.rows.len(), 3);
        assert!(r.rows.iter().all(|row| row.cells[0].num().is_some()));
        assert!(!r.metadata.notes.is_empty());
    }
}
