//! Discrete versions of the band projection `P`, the mean subtraction `T`, the
//! `C_Delta` ratio, the `H^{-1}` norm of a pressure gradient and the inf-sup constant.

pub mod analytic;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::assembly::{Element, Tabulated};
use crate::fem::{DiscreteField, Family, Space, StokesSystem};
use crate::linalg::{dot, factorize, inverse_subspace_iteration, Factorization, ShiftInvert, SparseMatrix};
use crate::mesh::{Mesh, Point, RegionMask};
use crate::solver::{apply_pressure_constraint, apply_velocity_dirichlet, ConstrainedSystem, PressureConstraint};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateKind {
    CDeltaRatio,
    InfsupBeta,
    NecasQuotient,
}

/// A measured stability quotient and where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantEstimate {
    pub value: f64,
    pub kind: EstimateKind,
    pub h: Option<f64>,
    pub delta_volume: f64,
    pub delta_diameter: f64,
    pub function_id: String,
}

fn check_p1(p: &DiscreteField) -> Result<()> {
    if p.space() != Space::P1Scalar {
        return Err(Error::InvalidParameter("expected a P1 scalar field".into()));
    }
    Ok(())
}

fn check_mask(mesh: &Mesh, mask: &RegionMask) -> Result<()> {
    if mask.mesh_triangle_count() != mesh.num_triangles() {
        return Err(Error::DimensionMismatch {
            expected: mesh.num_triangles(),
            found: mask.mesh_triangle_count(),
        });
    }
    Ok(())
}

/// `P`: zero every pressure dof constrained by the mask.
pub fn apply_p(p: &DiscreteField, mask: &RegionMask) -> Result<DiscreteField> {
    check_p1(p)?;
    check_mask(p.mesh(), mask)?;
    let mut v = p.values().to_vec();
    for &c in mask.constrained_vertices() {
        v[c] = 0.0;
    }
    p.with_values(v)
}

/// `integral q` of a P1 field (equals `1^T M_p q`).
pub fn p1_integral(q: &DiscreteField) -> f64 {
    let mesh = q.mesh();
    let v = q.values();
    (0..mesh.num_triangles())
        .map(|t| {
            let tri = mesh.triangles()[t];
            mesh.area(t) * (v[tri[0]] + v[tri[1]] + v[tri[2]]) / 3.0
        })
        .sum()
}

/// `(a, b)` over the triangles accepted by `keep`, exact for P1 fields.
pub fn p1_inner<K: Fn(usize) -> bool>(a: &DiscreteField, b: &DiscreteField, keep: K) -> f64 {
    let mesh = a.mesh();
    let (va, vb) = (a.values(), b.values());
    let mut s = 0.0;
    for t in (0..mesh.num_triangles()).filter(|&t| keep(t)) {
        let tri = mesh.triangles()[t];
        let x = [va[tri[0]], va[tri[1]], va[tri[2]]];
        let y = [vb[tri[0]], vb[tri[1]], vb[tri[2]]];
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let sxy: f64 = (0..3).map(|i| x[i] * y[i]).sum();
        s += mesh.area(t) / 12.0 * (sx * sy + sxy);
    }
    s
}

pub fn p1_norm(a: &DiscreteField) -> f64 {
    p1_inner(a, a, |_| true).max(0.0).sqrt()
}

/// `(f, P g)` with `P` acting as the indicator of the unmasked triangles.
pub fn inner_with_p(f: &DiscreteField, g: &DiscreteField, mask: &RegionMask) -> f64 {
    p1_inner(f, g, |t| !mask.contains_triangle(t))
}

/// `T`: subtract the mass-weighted mean.
pub fn apply_t(p: &DiscreteField) -> Result<DiscreteField> {
    check_p1(p)?;
    let area = p.mesh().total_area();
    let mean = p1_integral(p) / area;
    p.with_values(p.values().iter().map(|v| v - mean).collect())
}

/// `||T P p|| / ||P p||` with mass-matrix norms on the P1 space.
pub fn c_delta_ratio(p: &DiscreteField, mask: &RegionMask) -> Result<ConstantEstimate> {
    let pp = apply_p(p, mask)?;
    let denom = p1_norm(&pp);
    if !(denom > 0.0) {
        return Err(Error::DegenerateInput("P p vanishes".into()));
    }
    let tpp = apply_t(&pp)?;
    Ok(ConstantEstimate {
        value: p1_norm(&tpp) / denom,
        kind: EstimateKind::CDeltaRatio,
        h: Some(p.mesh().h()),
        delta_volume: mask.volume(),
        delta_diameter: mask.diameter_spec(),
        function_id: String::new(),
    })
}

/// `||T P f|| / ||P f||` from the moments of `f` on `Omega \ Delta`:
/// `v = integral (f - fbar)^2` and the mean `fbar`, with `P f = f` off `Delta` and 0 on it.
///
/// Written so that no difference of nearly equal numbers occurs for constants.
pub fn ratio_from_moments(variance: f64, fbar: f64, vol_delta: f64, vol_rest: f64) -> f64 {
    let vol = vol_delta + vol_rest;
    let num = variance + fbar * fbar * vol_delta * vol_rest / vol;
    let den = variance + vol_rest * fbar * fbar;
    (num / den).sqrt()
}

/// Mean and `sum w (v - mean)^2` of weighted samples with total weight `total`.
/// Deviations are taken from the first sample, so constant data gives exactly zero
/// variance however large the constant.
pub(crate) fn weighted_moments(samples: &[(f64, f64)], total: f64) -> (f64, f64) {
    let v0 = samples.first().map_or(0.0, |s| s.1);
    let fbar = v0 + samples.iter().map(|(w, v)| w * (v - v0)).sum::<f64>() / total;
    let variance = samples.iter().map(|(w, v)| w * (v - fbar) * (v - fbar)).sum();
    (fbar, variance)
}

/// `C_Delta` ratio for a closed-form `f` with `P` realized as the indicator of the
/// unmasked triangles; integrals by element quadrature of degree 6.
pub fn c_delta_ratio_indicator<F: Fn(Point) -> f64>(mesh: &Mesh, mask: &RegionMask, f: F) -> Result<ConstantEstimate> {
    check_mask(mesh, mask)?;
    let tab = Tabulated::new(Family::P1, 6);
    let keep: Vec<usize> = (0..mesh.num_triangles())
        .filter(|&t| !mask.contains_triangle(t))
        .collect();
    let vol_rest: f64 = keep.iter().map(|&t| mesh.area(t)).sum();
    if keep.is_empty() || !(vol_rest > 0.0) {
        return Err(Error::DegenerateInput("P f vanishes".into()));
    }
    let mut samples = Vec::with_capacity(keep.len() * tab.rule.len());
    for &t in &keep {
        let el = Element::new(mesh, t);
        for (q, &r) in tab.rule.points.iter().enumerate() {
            samples.push((tab.rule.weights[q] * el.det, f(el.map(r))));
        }
    }
    let (fbar, variance) = weighted_moments(&samples, vol_rest);
    if variance == 0.0 && fbar == 0.0 {
        return Err(Error::DegenerateInput("P f vanishes".into()));
    }
    Ok(ConstantEstimate {
        value: ratio_from_moments(variance, fbar, mask.volume(), vol_rest),
        kind: EstimateKind::CDeltaRatio,
        h: Some(mesh.h()),
        delta_volume: mask.volume(),
        delta_diameter: mask.diameter_spec(),
        function_id: String::new(),
    })
}

/// Riesz map of the velocity Laplacian on the zero-trace space.
pub struct RieszSolver {
    free_u: Vec<usize>,
    a_ff: SparseMatrix,
    b_f: SparseMatrix,
    lu: Factorization,
}

impl RieszSolver {
    pub fn new(sys: &Arc<StokesSystem>) -> Result<Self> {
        let vc = apply_velocity_dirichlet(sys, |_| [0.0, 0.0])?;
        let lu = factorize(&vc.a_ff)?;
        Ok(RieszSolver {
            free_u: vc.free_u,
            a_ff: vc.a_ff,
            b_f: vc.b_f,
            lu,
        })
    }

    pub fn num_free_velocity(&self) -> usize {
        self.free_u.len()
    }

    /// `sup_v (p, div v) / ||grad v||` over discrete zero-trace `v`: `sqrt(w^T A w)`
    /// with `A w = B^T p`.
    pub fn grad_norm(&self, p: &DiscreteField) -> Result<f64> {
        check_p1(p)?;
        let rhs = self.b_f.matvec_transpose(p.values())?;
        let w = self.lu.solve(&rhs)?;
        let aw = self.a_ff.matvec(&w)?;
        Ok(dot(&w, &aw).max(0.0).sqrt())
    }
}

/// Discrete `||grad p||_{H^{-1}}`.
pub fn grad_hminus1_norm(sys: &Arc<StokesSystem>, p: &DiscreteField) -> Result<f64> {
    RieszSolver::new(sys)?.grad_norm(p)
}

/// `||p|| / ||grad p||_{H^{-1}}` for a zero-mean `p`.
pub fn necas_quotient(riesz: &RieszSolver, p: &DiscreteField) -> Result<ConstantEstimate> {
    let tp = apply_t(p)?;
    let g = riesz.grad_norm(&tp)?;
    if !(g > 0.0) {
        return Err(Error::DegenerateInput("pressure gradient vanishes".into()));
    }
    Ok(ConstantEstimate {
        value: p1_norm(&tp) / g,
        kind: EstimateKind::NecasQuotient,
        h: Some(p.mesh().h()),
        delta_volume: 0.0,
        delta_diameter: 0.0,
        function_id: "random_smooth".into(),
    })
}

/// Seeded smooth random field: a combination of `cos(j pi x) cos(k pi y)` for
/// `1 <= j + k`, `j, k <= modes`, with coefficients decaying like `1/(1 + j + k)`.
pub fn random_smooth_field(dofs: Arc<crate::fem::DofMap>, seed: u64, modes: usize) -> DiscreteField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut terms = Vec::new();
    for j in 0..=modes {
        for k in 0..=modes {
            if j + k == 0 {
                continue;
            }
            let c: f64 = rng.gen_range(-1.0..1.0) / (1.0 + (j + k) as f64);
            terms.push((j as f64, k as f64, c));
        }
    }
    DiscreteField::interpolate_p1(dofs, move |p| {
        terms
            .iter()
            .map(|&(j, k, c)| c * (j * PI * p[0]).cos() * (k * PI * p[1]).cos())
            .sum()
    })
}

/// `(S - 0 M)^{-1}` for `S = B_c A^{-1} B_c^T` through the constrained saddle matrix.
struct InfSupPencil {
    nu: usize,
    np: usize,
    dim: usize,
    lu: Factorization,
    m_c: SparseMatrix,
}

impl ShiftInvert for InfSupPencil {
    fn dim(&self) -> usize {
        self.np
    }
    fn shift(&self) -> f64 {
        0.0
    }
    fn apply_m(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.m_c.matvec(x)
    }
    fn solve_shifted(&self, y: &[f64]) -> Result<Vec<f64>> {
        // [A B^T; B 0] [w; z] = [0; -y] gives z = S^{-1} y.
        let mut rhs = vec![0.0; self.dim];
        for (k, &v) in y.iter().enumerate() {
            rhs[self.nu + k] = -v;
        }
        let x = self.lu.solve(&rhs)?;
        Ok(x[self.nu..self.nu + self.np].to_vec())
    }
}

/// Discrete inf-sup constant on the constrained pressure space: `sqrt(lambda_min)` of
/// `B_c A^{-1} B_c^T q = lambda M_c q`; constants are deflated for `ZeroMean`.
pub fn discrete_infsup(sys: &Arc<StokesSystem>, constraint: &PressureConstraint) -> Result<ConstantEstimate> {
    let vc = apply_velocity_dirichlet(sys, |_| [0.0, 0.0])?;
    let cs = apply_pressure_constraint(&vc, constraint)?;
    infsup_from_system(&cs, constraint)
}

pub fn infsup_from_system(cs: &ConstrainedSystem, constraint: &PressureConstraint) -> Result<ConstantEstimate> {
    let lu = factorize(&cs.k)?;
    let m_c = cs.sys.mp.select(&cs.free_p, &cs.free_p);
    let pencil = InfSupPencil {
        nu: cs.free_u.len(),
        np: cs.free_p.len(),
        dim: cs.dim(),
        lu,
        m_c,
    };
    let ones = vec![1.0; pencil.np];
    let deflate = cs.has_multiplier.then_some(ones.as_slice());
    let pair = inverse_subspace_iteration(&pencil, deflate, 8, 0xbe7a)?;
    let (vol, diam) = match constraint {
        PressureConstraint::BandZero { mask, .. } => (mask.volume(), mask.diameter_spec()),
        _ => (0.0, 0.0),
    };
    Ok(ConstantEstimate {
        value: pair.value.max(0.0).sqrt(),
        kind: EstimateKind::InfsupBeta,
        h: Some(cs.sys.mesh().h()),
        delta_volume: vol,
        delta_diameter: diam,
        function_id: cs.mode.name().into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_stokes, DofMap};
    use crate::mesh::{generate_unit_square_mesh, select_region, RegionSpec};

    fn dofs(n: usize) -> Arc<DofMap> {
        Arc::new(DofMap::new(Arc::new(generate_unit_square_mesh(n).unwrap())))
    }

    #[test]
    fn p_examples() {
        let d = dofs(4);
        let mesh = d.mesh().clone();
        let mask = select_region(&mesh, &RegionSpec::LayerBand { layers: 1 }, true).unwrap();
        let one = DiscreteField::interpolate_p1(d.clone(), |_| 1.0);
        let pp = apply_p(&one, &mask).unwrap();
        // Only the center vertex (0.5, 0.5) touches no masked triangle.
        let kept: Vec<usize> = (0..25).filter(|&v| pp.values()[v] == 1.0).collect();
        assert_eq!(kept, vec![12]);
        assert_eq!(apply_p(&pp, &mask).unwrap().values(), pp.values());
        let empty = RegionMask::empty(&mesh);
        assert_eq!(apply_p(&one, &empty).unwrap().values(), one.values());
    }

    #[test]
    fn t_examples() {
        let d = dofs(5);
        let c = DiscreteField::interpolate_p1(d.clone(), |_| 2.5);
        assert!(apply_t(&c).unwrap().values().iter().all(|v| v.abs() < 1e-13));
        let x = DiscreteField::interpolate_p1(d.clone(), |p| p[0]);
        let tx = apply_t(&x).unwrap();
        for (v, p) in tx.values().iter().zip(d.mesh().vertices()) {
            assert!((v - (p[0] - 0.5)).abs() < 1e-14);
        }
        let ttx = apply_t(&tx).unwrap();
        for (a, b) in ttx.values().iter().zip(tx.values()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn ratio_examples() {
        let d = dofs(10);
        let mesh = d.mesh().clone();
        let mask = select_region(
            &mesh,
            &RegionSpec::InteriorDisk {
                center: [0.5, 0.5],
                radius: 0.11,
            },
            true,
        )
        .unwrap();
        let est = c_delta_ratio_indicator(&mesh, &mask, |_| 3.0).unwrap();
        assert!((est.value - mask.volume().sqrt()).abs() <= 1e-12 * est.value);
        // Zero mean and zero on Delta: T acts as the identity.
        let band = select_region(&mesh, &RegionSpec::LayerBand { layers: 1 }, true).unwrap();
        // Zero mean (odd under the half-turn that preserves the mesh) and zero on Delta.
        let anti = apply_p(
            &DiscreteField::interpolate_p1(d, |p| (p[0] - 0.5) * p[1] * (1.0 - p[1])),
            &band,
        )
        .unwrap();
        let r = c_delta_ratio(&anti, &band).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
        assert!(c_delta_ratio(&DiscreteField::zeros(Space::P1Scalar, anti.dofs().clone()), &band).is_err());
    }

    #[test]
    fn hminus1_of_constants_vanishes() {
        let sys = Arc::new(assemble_stokes(Arc::new(generate_unit_square_mesh(6).unwrap()), |_| [0.0; 2]).unwrap());
        let c = DiscreteField::interpolate_p1(sys.dofs.clone(), |_| 4.0);
        let z = DiscreteField::zeros(Space::P1Scalar, sys.dofs.clone());
        let riesz = RieszSolver::new(&sys).unwrap();
        assert!(riesz.grad_norm(&c).unwrap() < 1e-12);
        assert_eq!(riesz.grad_norm(&z).unwrap(), 0.0);
        let x = DiscreteField::interpolate_p1(sys.dofs.clone(), |p| p[0]);
        assert!(riesz.grad_norm(&x).unwrap() > 0.0);
    }
}
