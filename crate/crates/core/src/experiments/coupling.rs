use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{evaluator, grid_map, Cell, ExperimentReport, PerturbationSpec};
use crate::error::{Error, Result};
use crate::fem::{assemble_stokes, field_norm, NormKind};
use crate::mesh::{generate_disk_mesh, generate_unit_square_mesh, select_region, Mesh, Point, RegionMask, RegionSpec};
use crate::solver::{apply_pressure_constraint, apply_velocity_dirichlet, solve_stokes, PressureConstraint, Solution};

pub const SUB_CENTER: Point = [0.5, 0.5];
pub const SUB_RADIUS: f64 = 0.2;

/// How the subproblem pressure is pinned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandChoice {
    /// Zero mean on the subdomain (baseline).
    ZeroMean,
    /// Prescribed on the subdomain boundary, `D(Δ) = 0`.
    Boundary,
    /// Prescribed on `k` element layers along the subdomain boundary, `D(Δ) = k h`.
    Layers { k: usize },
    /// Prescribed on triangles within a fixed distance of the subdomain boundary.
    Width { width: f64 },
}

impl BandChoice {
    pub fn name(&self) -> String {
        match self {
            BandChoice::ZeroMean => "zero_mean".into(),
            BandChoice::Boundary => "d0".into(),
            BandChoice::Layers { k } => format!("d{k}h"),
            BandChoice::Width { .. } => "fixed".into(),
        }
    }

    /// True when Δ shrinks with the mesh.
    pub fn is_mesh_dependent(&self) -> bool {
        matches!(self, BandChoice::Boundary | BandChoice::Layers { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingAxis {
    Mesh,
    Delta,
}

/// Coupling of an exact Stokes subproblem on the disk of radius 0.2 around
/// `(0.5, 0.5)` to the perturbed global solution on the unit square with
/// `f = (0, -1)`. The subdomain mesh has `radial` rings; the global square uses
/// `ceil(global_ratio * radial)` cells per side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CouplingConfig {
    pub axis: CouplingAxis,
    pub deltas: Vec<f64>,
    pub global_ratio: f64,
    pub global_band_width: f64,
    /// Subdomain ring counts of the mesh axis.
    pub radial: Vec<usize>,
    pub layer_multiples: Vec<usize>,
    pub fixed_width: f64,
    /// Subdomain ring count of the delta axis.
    pub delta_radial: usize,
    /// Band widths of the delta axis, decreasing.
    pub widths: Vec<f64>,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        CouplingConfig {
            axis: CouplingAxis::Mesh,
            deltas: vec![1e-2, 2.0],
            global_ratio: 2.5,
            global_band_width: 0.05,
            radial: vec![10, 14, 20, 28, 40],
            layer_multiples: vec![2, 4, 8],
            fixed_width: 0.1,
            delta_radial: 40,
            widths: vec![0.1, 0.07, 0.05, 0.035, 0.025, 0.018, 0.012, 0.008],
        }
    }
}

/// The unperturbed global solution.
pub struct GlobalSolution {
    pub mesh: Arc<Mesh>,
    pub solution: Solution,
}

impl GlobalSolution {
    pub fn solve(n: usize, band_width: f64) -> Result<Self> {
        let mesh = Arc::new(generate_unit_square_mesh(n)?);
        let sys = Arc::new(assemble_stokes(mesh.clone(), |_| [0.0, -1.0])?);
        let vc = apply_velocity_dirichlet(&sys, |_| [0.0, 0.0])?;
        let mask = select_region(&mesh, &RegionSpec::BoundaryBand { width: band_width }, true)?;
        let solution = solve_stokes(&apply_pressure_constraint(&vc, &PressureConstraint::band(mask))?)?;
        Ok(GlobalSolution { mesh, solution })
    }
}

/// One solved subproblem.
pub struct CouplingPoint {
    pub choice: BandChoice,
    pub perturbation: PerturbationSpec,
    pub mask: Option<RegionMask>,
    pub solution: Solution,
    pub velocity_h1: f64,
    pub pressure_l2: f64,
    /// Largest difference to the global velocity over subdomain dofs.
    pub velocity_gap: f64,
    /// Largest difference to the global pressure over subdomain vertices.
    pub pressure_gap: f64,
}

/// Solves the subproblem with data taken from `global` by point evaluation and
/// perturbed by `perturbation`.
pub fn coupling_point(
    global: &GlobalSolution,
    radial: usize,
    choice: BandChoice,
    perturbation: PerturbationSpec,
) -> Result<CouplingPoint> {
    let mesh = Arc::new(generate_disk_mesh(SUB_CENTER, SUB_RADIUS, radial, 6 * radial)?);
    let sys = Arc::new(assemble_stokes(mesh.clone(), |_| [0.0, -1.0])?);
    let u_global = evaluator(&global.solution.u);
    let p_global = Arc::new(evaluator(&global.solution.p));
    let vc = apply_velocity_dirichlet(&sys, |x| perturbation.perturb_velocity(x, u_global(x)))?;
    let pg = p_global.clone();
    let data: crate::solver::ScalarData = Arc::new(move |x| perturbation.perturb_pressure(x, pg(x)[0]));
    let (constraint, mask) = match choice {
        BandChoice::ZeroMean => (PressureConstraint::ZeroMean, None),
        BandChoice::Boundary => (PressureConstraint::BoundaryZero { data }, None),
        BandChoice::Layers { k } => {
            let mask = select_region(&mesh, &RegionSpec::LayerBand { layers: k }, true)?;
            (
                PressureConstraint::BandZero {
                    mask: mask.clone(),
                    data,
                },
                Some(mask),
            )
        }
        BandChoice::Width { width } => {
            let mask = select_region(&mesh, &RegionSpec::BoundaryBand { width }, true)?;
            (
                PressureConstraint::BandZero {
                    mask: mask.clone(),
                    data,
                },
                Some(mask),
            )
        }
    };
    let solution = solve_stokes(&apply_pressure_constraint(&vc, &constraint)?)?;
    let dofs = solution.u.dofs().clone();
    let n2 = dofs.num_p2();
    let uv = solution.u.values();
    let mut velocity_gap: f64 = 0.0;
    for (d, &x) in dofs.p2_coords().iter().enumerate() {
        let g = u_global(x);
        velocity_gap = velocity_gap.max((uv[d] - g[0]).abs()).max((uv[n2 + d] - g[1]).abs());
    }
    let pressure_gap = mesh
        .vertices()
        .iter()
        .zip(solution.p.values())
        .map(|(&x, &p)| (p - p_global(x)[0]).abs())
        .fold(0.0, f64::max);
    Ok(CouplingPoint {
        choice,
        perturbation,
        mask,
        velocity_h1: field_norm(&solution.u, NormKind::H1Semi, None)?,
        pressure_l2: field_norm(&solution.p, NormKind::L2, None)?,
        solution,
        velocity_gap,
        pressure_gap,
    })
}

fn outside_sub(x: Point) -> bool {
    (x[0] - SUB_CENTER[0]).hypot(x[1] - SUB_CENTER[1]) > SUB_RADIUS
}

impl CouplingPoint {
    /// Merged velocity per dof: `x,y,u1,u2,error,source`, where `error` is
    /// `|u2_merged - u2|` against the unperturbed global field.
    pub fn write_merged_velocity_csv<W: Write>(&self, global: &GlobalSolution, mut w: W) -> Result<()> {
        let io = |e: std::io::Error| Error::Io(e.to_string());
        writeln!(w, "x,y,u1,u2,error,source").map_err(io)?;
        let gu = &global.solution.u;
        let (gd, gv) = (gu.dofs(), gu.values());
        let gn = gd.num_p2();
        for (d, &x) in gd.p2_coords().iter().enumerate() {
            if outside_sub(x) {
                let m = self.perturbation.perturb_velocity(x, [gv[d], gv[gn + d]]);
                let e = (m[1] - gv[gn + d]).abs();
                writeln!(
                    w,
                    "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},outer",
                    x[0], x[1], m[0], m[1], e
                )
                .map_err(io)?;
            }
        }
        let g = evaluator(gu);
        let (sd, sv) = (self.solution.u.dofs(), self.solution.u.values());
        let sn = sd.num_p2();
        for (d, &x) in sd.p2_coords().iter().enumerate() {
            let e = (sv[sn + d] - g(x)[1]).abs();
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},sub",
                x[0],
                x[1],
                sv[d],
                sv[sn + d],
                e
            )
            .map_err(io)?;
        }
        Ok(())
    }

    /// Merged pressure per vertex: `x,y,p,source`.
    pub fn write_merged_pressure_csv<W: Write>(&self, global: &GlobalSolution, mut w: W) -> Result<()> {
        let io = |e: std::io::Error| Error::Io(e.to_string());
        writeln!(w, "x,y,p,source").map_err(io)?;
        for (&x, &p) in global.mesh.vertices().iter().zip(global.solution.p.values()) {
            if outside_sub(x) {
                writeln!(
                    w,
                    "{:.16e},{:.16e},{:.16e},outer",
                    x[0],
                    x[1],
                    self.perturbation.perturb_pressure(x, p)
                )
                .map_err(io)?;
            }
        }
        let sub = self.solution.p.mesh();
        for (&x, &p) in sub.vertices().iter().zip(self.solution.p.values()) {
            writeln!(w, "{:.16e},{:.16e},{:.16e},sub", x[0], x[1], p).map_err(io)?;
        }
        Ok(())
    }
}

const COLUMNS: [&str; 12] = [
    "case",
    "delta",
    "radial",
    "h",
    "delta_volume",
    "delta_diameter",
    "velocity_h1",
    "pressure_l2",
    "velocity_gap",
    "pressure_gap",
    "relative_residual",
    "global_h",
];

pub fn run_coupling_experiment(config: &CouplingConfig) -> Result<ExperimentReport> {
    if !(config.global_ratio > 0.0) {
        return Err(Error::InvalidParameter("global_ratio must be positive".into()));
    }
    let perts: Vec<PerturbationSpec> = config
        .deltas
        .iter()
        .map(|&d| PerturbationSpec::coupling(d, SUB_CENTER, SUB_RADIUS))
        .collect::<Result<_>>()?;
    let mut jobs: Vec<(usize, BandChoice, usize)> = Vec::new();
    match config.axis {
        CouplingAxis::Mesh => {
            if config.radial.is_empty() || config.radial.contains(&0) {
                return Err(Error::InvalidParameter("mesh axis needs positive ring counts".into()));
            }
            let mut choices = vec![BandChoice::ZeroMean, BandChoice::Boundary];
            choices.extend(config.layer_multiples.iter().map(|&k| BandChoice::Layers { k }));
            choices.push(BandChoice::Width {
                width: config.fixed_width,
            });
            for pi in 0..perts.len() {
                for &nr in &config.radial {
                    for &c in &choices {
                        jobs.push((nr, c, pi));
                    }
                }
            }
        }
        CouplingAxis::Delta => {
            if config.delta_radial == 0 || config.widths.windows(2).any(|w| w[1] >= w[0]) {
                return Err(Error::InvalidParameter(
                    "delta axis needs a ring count and decreasing widths".into(),
                ));
            }
            for pi in 0..perts.len() {
                jobs.push((config.delta_radial, BandChoice::ZeroMean, pi));
                jobs.push((config.delta_radial, BandChoice::Boundary, pi));
                for &width in &config.widths {
                    jobs.push((config.delta_radial, BandChoice::Width { width }, pi));
                }
            }
        }
    }
    let global_n = |nr: usize| (config.global_ratio * nr as f64).ceil().max(2.0) as usize;
    let mut levels: Vec<usize> = jobs.iter().map(|j| global_n(j.0)).collect();
    levels.sort_unstable();
    levels.dedup();
    let globals = grid_map(levels.len(), |i| {
        GlobalSolution::solve(levels[i], config.global_band_width)
    });
    let globals: Vec<GlobalSolution> = globals.into_iter().collect::<Result<_>>()?;
    let global_for = |nr: usize| &globals[levels.binary_search(&global_n(nr)).expect("solved level")];

    let results = grid_map(jobs.len(), |i| {
        let (nr, choice, pi) = jobs[i];
        coupling_point(global_for(nr), nr, choice, perts[pi])
    });
    let mut report = ExperimentReport::new(
        match config.axis {
            CouplingAxis::Mesh => "couple_mesh",
            CouplingAxis::Delta => "couple_delta",
        },
        &COLUMNS,
    );
    for (&(nr, choice, pi), r) in jobs.iter().zip(results) {
        let head: Vec<Cell> = vec![
            match (config.axis, choice) {
                (CouplingAxis::Delta, BandChoice::Width { .. }) => "band_width".into(),
                _ => choice.name().into(),
            },
            config.deltas[pi].into(),
            nr.into(),
        ];
        match r {
            Ok(pt) => {
                let mut cells = head;
                cells.extend([
                    pt.solution.u.mesh().h().into(),
                    pt.mask.as_ref().map_or(0.0, |m| m.volume()).into(),
                    pt.mask.as_ref().map_or(0.0, |m| m.diameter_spec()).into(),
                    pt.velocity_h1.into(),
                    pt.pressure_l2.into(),
                    pt.velocity_gap.into(),
                    pt.pressure_gap.into(),
                    pt.solution.diagnostics.relative_residual.into(),
                    global_for(nr).mesh.h().into(),
                ]);
                report.push(cells, None);
            }
            Err(e) => report.push(head, Some(e.to_string())),
        }
    }
    let cases: Vec<String> = {
        let c = report.column("case").expect("case column");
        let mut names: Vec<String> = report
            .rows
            .iter()
            .filter_map(|r| r.cells[c].text().map(String::from))
            .collect();
        names.dedup();
        let mut seen = Vec::new();
        for n in names {
            if !seen.contains(&n) {
                seen.push(n);
            }
        }
        seen
    };
    let x = match config.axis {
        CouplingAxis::Mesh => "h",
        CouplingAxis::Delta => "delta_volume",
    };
    for &delta in &config.deltas {
        for case in &cases {
            if config.axis == CouplingAxis::Delta && case != "band_width" {
                continue;
            }
            let rows: Vec<usize> = report
                .rows_where("case", case)
                .into_iter()
                .filter(|&i| report.num(i, "delta") == Some(delta))
                .collect();
            for y in ["velocity_h1", "pressure_l2"] {
                report.add_fit(&format!("{y}_vs_{x}:{case}:delta={delta}"), &rows, x, y, None);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unperturbed_subproblem_converges_to_global_solution() {
        let pert = PerturbationSpec::coupling(0.0, SUB_CENTER, SUB_RADIUS).unwrap();
        let gaps = |nr: usize| {
            let global = GlobalSolution::solve((2.5 * nr as f64).ceil() as usize, 0.05).unwrap();
            [
                BandChoice::ZeroMean,
                BandChoice::Boundary,
                BandChoice::Layers { k: 2 },
                BandChoice::Width { width: 0.1 },
            ]
            .map(|c| {
                let pt = coupling_point(&global, nr, c, pert).unwrap();
                (pt.velocity_gap, pt.pressure_gap)
            })
        };
        let (coarse, fine) = (gaps(5), gaps(10));
        for (c, f) in coarse.iter().zip(&fine) {
            assert!(f.0 < c.0 / 8.0, "velocity gap {c:?} -> {f:?}");
            assert!(f.1 < c.1 / 4.0, "pressure gap {c:?} -> {f:?}");
        }
    }

    #[test]
    fn merged_exports() {
        let global = GlobalSolution::solve(6, 0.2).unwrap();
        let pert = PerturbationSpec::coupling(1.0, SUB_CENTER, SUB_RADIUS).unwrap();
        let pt = coupling_point(&global, 3, BandChoice::Boundary, pert).unwrap();
        let mut v = Vec::new();
        pt.write_merged_velocity_csv(&global, &mut v).unwrap();
        let text = String::from_utf8(v).unwrap();
        assert!(text.starts_with("x,y,u1,u2,error,source\n"));
        assert!(text.lines().any(|l| l.ends_with(",sub")) && text.lines().any(|l| l.ends_with(",outer")));
        let mut p = Vec::new();
        pt.write_merged_pressure_csv(&global, &mut p).unwrap();
        let rows = String::from_utf8(p).unwrap().lines().count() - 1;
        let outer = global.mesh.vertices().iter().filter(|&&x| outside_sub(x)).count();
        assert_eq!(rows, outer + pt.solution.p.mesh().num_vertices());
    }

    #[test]
    fn small_mesh_sweep_runs() {
        let config = CouplingConfig {
            deltas: vec![0.0, 2.0],
            radial: vec![4, 5, 6],
            layer_multiples: vec![2],
            fixed_width: 0.06,
            ..Default::default()
        };
        let r = run_coupling_experiment(&config).unwrap();
        assert_eq!(r.rows.len(), 2 * 3 * 4);
        assert!(!r.has_failures(), "{:?}", r.failures().collect::<Vec<_>>());
        // Without perturbation every choice sees nearly the same subdomain solution.
        for y in ["velocity_h1", "pressure_l2"] {
            let v: Vec<f64> = (0..r.rows.len())
                .filter(|&i| r.num(i, "delta") == Some(0.0) && r.num(i, "radial") == Some(6.0))
                .map(|i| r.num(i, y).unwrap())
                .collect();
            let (lo, hi) = v.iter().fold((f64::MAX, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
            assert!(hi - lo < 0.05 * hi, "{y}: {v:?}");
        }
        assert!(r.rate("pressure_l2_vs_h:d0:delta=2").is_some());
    }
}
