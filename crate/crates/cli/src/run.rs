use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use stokes_core::experiments::{
    coupling_point, run_cdelta_sweep, run_condition_sweep, run_coupling_experiment, run_divergence_sweep,
    run_infsup_study, run_manufactured_convergence, BandChoice, CouplingAxis, DomainChoice, ExperimentReport,
    GlobalSolution, PerturbationSpec, SUB_CENTER, SUB_RADIUS,
};
use stokes_core::fem::assemble_stokes;
use stokes_core::mesh::{
    generate_unit_disk_mesh, generate_unit_square_mesh, select_region, Mesh, RegionMask, RegionSpec,
};
use stokes_core::solver::{
    apply_pressure_constraint, apply_velocity_dirichlet, solve_stokes, ConstraintMode, PressureConstraint,
};

use crate::config::{Command, Format, RunConfig};
use crate::CliError;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Any failure row makes the run exit with status 2.
    pub strict: bool,
    /// Guideline warnings abort the run.
    pub strict_guidelines: bool,
    /// Size of the work pool; the rayon default when absent.
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failures,
    Rejected,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub stokes_band: String,
    pub stokes_core: String,
}

/// Written as `manifest.json` next to the outputs of every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: Command,
    pub status: Status,
    pub versions: Versions,
    pub workers: usize,
    pub wall_seconds: f64,
    pub failures: usize,
    pub warnings: Vec<String>,
    #[serde(default)]
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Paths relative to the output directory.
    pub files: Vec<String>,
    pub config: RunConfig,
}

#[derive(Debug)]
pub struct Outcome {
    pub output_dir: PathBuf,
    pub manifest: Manifest,
    pub exit_code: u8,
}

const MESH_DEPENDENT: &str = "Δ is mesh dependent, |Δ| ∝ h^d, C_Δ⁻¹ → ∞ as h → 0";

/// Advisory notes on pressure constraints the method warns against.
pub fn guideline_warnings(config: &RunConfig) -> Vec<String> {
    let mut out = Vec::new();
    match config.command {
        Command::Solve => match config.solve.constraint {
            ConstraintMode::PointZero => out.push(
                "point_zero pins the pressure at one vertex: p_h|x∈∂Ω=0 or p_h|x∈Ω=0 is not recommended".to_string(),
            ),
            ConstraintMode::BoundaryZero => out.push(
                "boundary_zero: p_h|∂Ω = 0 is not recommended; prefer p_h|Δ = 0 on a band of fixed width".to_string(),
            ),
            ConstraintMode::BandZero => {
                if let RegionSpec::LayerBand { layers } = config.region {
                    out.push(format!("band of {layers} element layers: {MESH_DEPENDENT}"));
                }
            }
            ConstraintMode::ZeroMean => {}
        },
        Command::Couple => {
            if config.couple.axis == CouplingAxis::Mesh && !config.couple.layer_multiples.is_empty() {
                out.push(format!(
                    "couple with D(Δ) = k·h for k in {:?}: {MESH_DEPENDENT}",
                    config.couple.layer_multiples
                ));
            }
        }
        _ => {}
    }
    out
}

/// Writes one report. CSV floats carry 17 significant digits; JSON reads back bitwise.
pub fn write_report(report: &ExperimentReport, format: Format, path: &Path) -> Result<(), CliError> {
    write_file(path, |w| match format {
        Format::Csv => report.write_csv(w),
        Format::Json => report.write_json(w),
    })
}

fn write_file<F>(path: &Path, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> stokes_core::Result<()>,
{
    let io = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io)?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    body(&mut w).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })?;
    w.flush().map_err(io)
}

/// What a command produced, before anything touches the disk.
#[derive(Default)]
struct Products {
    reports: Vec<ExperimentReport>,
    /// Relative path and contents.
    files: Vec<(String, Vec<u8>)>,
    failures: usize,
    notes: Vec<String>,
}

impl Products {
    fn file<F>(&mut self, name: String, body: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut Vec<u8>) -> stokes_core::Result<()>,
    {
        let mut buf = Vec::new();
        body(&mut buf)?;
        self.files.push((name, buf));
        Ok(())
    }

    fn report(&mut self, r: ExperimentReport) {
        self.failures += r.metadata.failures;
        self.reports.push(r);
    }
}

fn build_mesh(config: &RunConfig) -> Result<Mesh, CliError> {
    let m = &config.mesh;
    Ok(match m.domain {
        DomainChoice::Square => generate_unit_square_mesh(m.size)?,
        DomainChoice::Disk => generate_unit_disk_mesh(m.size, m.angular.unwrap_or(6 * m.size))?,
    })
}

#[derive(Serialize)]
struct RegionRecord<'a> {
    spec: &'a RegionSpec,
    triangles: usize,
    constrained_vertices: usize,
    volume: f64,
    diameter: f64,
}

#[derive(Serialize)]
struct MeshRecord<'a> {
    domain: DomainChoice,
    vertices: usize,
    triangles: usize,
    boundary_vertices: usize,
    h: f64,
    area: f64,
    area_defect: f64,
    region: Option<RegionRecord<'a>>,
}

fn json<T: Serialize>(value: &T) -> impl FnOnce(&mut Vec<u8>) -> stokes_core::Result<()> + '_ {
    move |w| serde_json::to_writer_pretty(w, value).map_err(|e| stokes_core::Error::Io(e.to_string()))
}

fn mesh_command(config: &RunConfig) -> Result<Products, CliError> {
    let mesh = build_mesh(config)?;
    let mask = match config.region {
        RegionSpec::Empty => None,
        ref spec => Some(select_region(&mesh, spec, false)?),
    };
    let record = MeshRecord {
        domain: config.mesh.domain,
        vertices: mesh.num_vertices(),
        triangles: mesh.num_triangles(),
        boundary_vertices: mesh.boundary_vertices().len(),
        h: mesh.h(),
        area: mesh.total_area(),
        area_defect: mesh.area_defect(),
        region: mask.as_ref().map(|m| RegionRecord {
            spec: &config.region,
            triangles: m.triangles().len(),
            constrained_vertices: m.constrained_vertices().len(),
            volume: m.volume(),
            diameter: m.diameter_spec(),
        }),
    };
    let mut out = Products::default();
    out.file("mesh.txt".into(), |w| mesh.write_text(w))?;
    out.file("mesh.json".into(), json(&record))?;
    Ok(out)
}

fn nearest_vertex(mesh: &Mesh, x: [f64; 2]) -> usize {
    (0..mesh.num_vertices())
        .min_by(|&a, &b| {
            let d = |v: usize| (mesh.vertices()[v][0] - x[0]).hypot(mesh.vertices()[v][1] - x[1]);
            d(a).total_cmp(&d(b))
        })
        .expect("mesh has vertices")
}

fn solve_command(config: &RunConfig) -> Result<Products, CliError> {
    let s = &config.solve;
    let mesh = Arc::new(build_mesh(config)?);
    let load = s.load;
    let sys = Arc::new(assemble_stokes(mesh.clone(), |_| load)?);
    let vc = apply_velocity_dirichlet(&sys, |_| s.boundary_velocity)?;
    let value = s.pressure_value;
    let data: stokes_core::solver::ScalarData = Arc::new(move |_| value);
    let mut mask = RegionMask::empty(&mesh);
    let constraint = match s.constraint {
        ConstraintMode::ZeroMean => PressureConstraint::ZeroMean,
        ConstraintMode::BandZero => {
            mask = select_region(&mesh, &config.region, true)?;
            PressureConstraint::BandZero {
                mask: mask.clone(),
                data,
            }
        }
        ConstraintMode::BoundaryZero => PressureConstraint::BoundaryZero { data },
        ConstraintMode::PointZero => PressureConstraint::PointZero {
            vertex: nearest_vertex(&mesh, s.point),
            value,
        },
    };
    let solution = solve_stokes(&apply_pressure_constraint(&vc, &constraint)?)?;
    let mut out = Products::default();
    let residual = solution.diagnostics.relative_residual;
    if !(residual <= config.tolerances.max_relative_residual) {
        out.failures += 1;
        out.notes.push(format!(
            "relative residual {residual:e} exceeds {:e}",
            config.tolerances.max_relative_residual
        ));
    }
    out.file("solution.json".into(), |w| solution.write_summary_json(w, &mask))?;
    if config.output.fields {
        out.file("velocity.csv".into(), |w| solution.write_velocity_csv(w))?;
        out.file("pressure.csv".into(), |w| solution.write_pressure_csv(w))?;
    }
    Ok(out)
}

/// Merged global/subdomain fields at the finest coupling level.
fn coupling_fields(config: &RunConfig, out: &mut Products) -> Result<(), CliError> {
    let c = &config.couple;
    let (radial, widths) = match c.axis {
        CouplingAxis::Mesh => (c.radial.iter().copied().max(), vec![c.fixed_width]),
        CouplingAxis::Delta => (Some(c.delta_radial), c.widths.last().copied().into_iter().collect()),
    };
    let Some(radial) = radial else { return Ok(()) };
    let global = GlobalSolution::solve(
        (c.global_ratio * radial as f64).ceil().max(2.0) as usize,
        c.global_band_width,
    )?;
    let mut choices = vec![BandChoice::ZeroMean, BandChoice::Boundary];
    choices.extend(widths.into_iter().map(|width| BandChoice::Width { width }));
    for &delta in &c.deltas {
        let pert = PerturbationSpec::coupling(delta, SUB_CENTER, SUB_RADIUS)?;
        for &choice in &choices {
            let pt = coupling_point(&global, radial, choice, pert)?;
            let stem = format!("couple_fields/{}_delta{delta}", choice.name());
            out.file(format!("{stem}_velocity.csv"), |w| {
                pt.write_merged_velocity_csv(&global, w)
            })?;
            out.file(format!("{stem}_pressure.csv"), |w| {
                pt.write_merged_pressure_csv(&global, w)
            })?;
        }
    }
    Ok(())
}

fn compute(config: &RunConfig) -> Result<Products, CliError> {
    let mut out = Products::default();
    match config.command {
        Command::Mesh => return mesh_command(config),
        Command::Solve => return solve_command(config),
        Command::Cdelta => out.report(run_cdelta_sweep(&config.cdelta)?),
        Command::Cond => out.report(run_condition_sweep(&config.cond)?),
        Command::Couple => {
            out.report(run_coupling_experiment(&config.couple)?);
            if config.output.fields {
                coupling_fields(config, &mut out)?;
            }
        }
        Command::Divergence => out.report(run_divergence_sweep(&config.divergence)?),
        Command::Infsup => out.report(run_infsup_study(&config.infsup)?),
        Command::Convergence => out.report(run_manufactured_convergence(&config.convergence)?),
    }
    Ok(out)
}

fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<(), CliError> {
    write_file(&dir.join("manifest.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, manifest).map_err(|e| stokes_core::Error::Io(e.to_string()))
    })
}

/// Runs the configured command and writes its reports, field exports and
/// `manifest.json` into the output directory. Computation happens on the work
/// pool; files are written afterwards, one at a time.
pub fn dispatch(config: &RunConfig, options: &RunOptions) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let dir = config.output_dir();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("work pool: {e}")))?;
    let warnings = guideline_warnings(config);
    let mut manifest = Manifest {
        command: config.command,
        status: Status::Ok,
        versions: Versions {
            stokes_band: env!("CARGO_PKG_VERSION").to_string(),
            stokes_core: stokes_core::VERSION.to_string(),
        },
        workers: pool.current_num_threads(),
        wall_seconds: 0.0,
        failures: 0,
        warnings: warnings.clone(),
        notes: Vec::new(),
        error: None,
        files: Vec::new(),
        config: config.clone(),
    };
    fs::create_dir_all(&dir).map_err(|source| CliError::Io {
        path: dir.clone(),
        source,
    })?;

    let finish = |mut manifest: Manifest, status: Status, err: Option<&CliError>| -> Result<Manifest, CliError> {
        manifest.status = status;
        manifest.error = err.map(|e| e.to_string());
        manifest.wall_seconds = start.elapsed().as_secs_f64();
        write_manifest(&dir, &manifest)?;
        Ok(manifest)
    };

    if options.strict_guidelines && !warnings.is_empty() {
        let err = CliError::Guideline(warnings.join("; "));
        finish(manifest, Status::Rejected, Some(&err))?;
        return Err(err);
    }

    let products = match pool.install(|| compute(config)) {
        Ok(p) => p,
        Err(err) => {
            finish(manifest, Status::Error, Some(&err))?;
            return Err(err);
        }
    };
    for report in &products.reports {
        for &format in &config.output.formats {
            let name = format!("{}.{}", report.experiment, format.extension());
            write_report(report, format, &dir.join(&name))?;
            manifest.files.push(name);
        }
        manifest.notes.extend(report.metadata.notes.iter().cloned());
    }
    for (name, bytes) in &products.files {
        write_file(&dir.join(name), |w| w.write_all(bytes).map_err(Into::into))?;
        manifest.files.push(name.clone());
    }
    manifest.failures = products.failures;
    manifest.notes.extend(products.notes);
    let status = if products.failures > 0 {
        Status::Failures
    } else {
        Status::Ok
    };
    let manifest = finish(manifest, status, None)?;
    let exit_code = if options.strict && manifest.failures > 0 { 2 } else { 0 };
    Ok(Outcome {
        output_dir: dir,
        manifest,
        exit_code,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use stokes_core::experiments::Cell;

    fn report(rows: usize) -> ExperimentReport {
        let mut r = ExperimentReport::new("demo", &["h", "value", "case"]);
        for i in 0..rows {
            let h = 1.0 / (i as f64 + 3.0);
            r.push(vec![h.into(), (0.1 * h * h).into(), "a".into()], None);
        }
        let all: Vec<usize> = (0..rows).collect();
        r.add_fit("value_vs_h", &all, "h", "value", None);
        r
    }

    #[test]
    fn empty_grid_gives_header_only_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        write_report(&report(0), Format::Csv, &path).unwrap();
        assert_eq!(fs::read_to_string(path).unwrap(), "h,value,case\n");
    }

    #[test]
    fn three_point_sweep_rows_and_rate() {
        let dir = tempfile::tempdir().unwrap();
        let r = report(3);
        write_report(&r, Format::Csv, &dir.path().join("r.csv")).unwrap();
        write_report(&r, Format::Json, &dir.path().join("r.json")).unwrap();
        let csv = fs::read_to_string(dir.path().join("r.csv")).unwrap();
        assert_eq!(csv.lines().count(), 4);
        let back = ExperimentReport::read_json(File::open(dir.path().join("r.json")).unwrap()).unwrap();
        assert!(back.same(&r));
        assert_eq!(back.rows.len(), 3);
        assert!((back.rate("value_vs_h").unwrap().slope - 2.0).abs() < 1e-12);
        if let Cell::Num(v) = back.rows[1].cells[1] {
            assert_eq!(v.to_bits(), (0.1f64 * 0.25 * 0.25).to_bits());
        } else {
            panic!("numeric cell expected");
        }
    }

    #[test]
    fn unwritable_path_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let target = blocker.join("sub").join("r.csv");
        let err = write_report(&report(1), Format::Csv, &target).unwrap_err();
        assert!(err.to_string().contains("file"), "{err}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn guidelines() {
        let mut c = RunConfig::default();
        assert!(guideline_warnings(&c).is_empty(), "defaults follow the guidelines");
        c.solve.constraint = ConstraintMode::PointZero;
        assert!(guideline_warnings(&c)[0].contains("is not recommended"));
        c.solve.constraint = ConstraintMode::BoundaryZero;
        assert!(guideline_warnings(&c)[0].contains("p_h|∂Ω = 0 is not recommended"));
        c.solve.constraint = ConstraintMode::BandZero;
        c.region = RegionSpec::LayerBand { layers: 2 };
        assert!(guideline_warnings(&c)[0].contains("C_Δ⁻¹ → ∞ as h → 0"));
        c.command = Command::Couple;
        assert!(guideline_warnings(&c)[0].contains("|Δ| ∝ h^d"));
        c.couple.layer_multiples.clear();
        assert!(guideline_warnings(&c).is_empty());
    }
}
