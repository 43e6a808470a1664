use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::assembly::{DofMap, Element, Tabulated};
use super::basis::{fill_basis, Family};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point, PointLocator, RegionMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Space {
    /// Scalar continuous P1, one value per vertex.
    P1Scalar,
    /// Vector continuous P2, component-blocked.
    P2Vector,
}

/// A finite-element function on a mesh.
#[derive(Debug, Clone)]
pub struct DiscreteField {
    space: Space,
    values: Vec<f64>,
    dofs: Arc<DofMap>,
}

impl DiscreteField {
    pub fn new(space: Space, dofs: Arc<DofMap>, values: Vec<f64>) -> Result<Self> {
        let expected = match space {
            Space::P1Scalar => dofs.num_pressure(),
            Space::P2Vector => dofs.num_velocity(),
        };
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: values.len(),
            });
        }
        Ok(DiscreteField { space, values, dofs })
    }

    pub fn zeros(space: Space, dofs: Arc<DofMap>) -> Self {
        let n = match space {
            Space::P1Scalar => dofs.num_pressure(),
            Space::P2Vector => dofs.num_velocity(),
        };
        DiscreteField {
            space,
            values: vec![0.0; n],
            dofs,
        }
    }

    /// Nodal interpolant of a scalar function into P1.
    pub fn interpolate_p1<F: Fn(Point) -> f64>(dofs: Arc<DofMap>, f: F) -> Self {
        let values = dofs.mesh().vertices().iter().map(|&p| f(p)).collect();
        DiscreteField {
            space: Space::P1Scalar,
            values,
            dofs,
        }
    }

    /// Nodal interpolant of a vector function into P2.
    pub fn interpolate_p2<F: Fn(Point) -> [f64; 2]>(dofs: Arc<DofMap>, f: F) -> Self {
        let n2 = dofs.num_p2();
        let mut values = vec![0.0; 2 * n2];
        for (d, &p) in dofs.p2_coords().iter().enumerate() {
            let v = f(p);
            values[d] = v[0];
            values[n2 + d] = v[1];
        }
        DiscreteField {
            space: Space::P2Vector,
            values,
            dofs,
        }
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dofs(&self) -> &Arc<DofMap> {
        &self.dofs
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        self.dofs.mesh()
    }

    /// Same space and mesh, new coefficients.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        DiscreteField::new(self.space, self.dofs.clone(), values)
    }

    /// Value(s) at a point given by triangle and barycentric coordinates.
    pub fn eval_in(&self, t: usize, bary: [f64; 3]) -> [f64; 2] {
        let r = [bary[1], bary[2]];
        match self.space {
            Space::P1Scalar => {
                let tri = self.mesh().triangles()[t];
                let s = (0..3).map(|i| bary[i] * self.values[tri[i]]).sum();
                [s, 0.0]
            }
            Space::P2Vector => {
                let mut v = [0.0; 6];
                let mut g = [[0.0; 2]; 6];
                fill_basis(Family::P2, r, &mut v, &mut g);
                let cd = self.dofs.cell_dofs(t);
                let n2 = self.dofs.num_p2();
                let mut out = [0.0; 2];
                for k in 0..6 {
                    out[0] += v[k] * self.values[cd[k]];
                    out[1] += v[k] * self.values[n2 + cd[k]];
                }
                out
            }
        }
    }

    /// Point evaluation. Scalar fields return the value in slot 0.
    pub fn eval_point(&self, locator: &PointLocator, p: Point) -> Result<[f64; 2]> {
        let (t, bary) = locator.locate(self.mesh(), p).ok_or(Error::OutOfDomain(p[0], p[1]))?;
        Ok(self.eval_in(t, bary))
    }

    /// Per-dof CSV: `x,y,value` for P1 or `x,y,u1,u2` for P2.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        match self.space {
            Space::P1Scalar => {
                writeln!(w, "x,y,value")?;
                for (p, v) in self.mesh().vertices().iter().zip(&self.values) {
                    writeln!(w, "{:.16e},{:.16e},{:.16e}", p[0], p[1], v)?;
                }
            }
            Space::P2Vector => {
                writeln!(w, "x,y,u1,u2")?;
                let n2 = self.dofs.num_p2();
                for (d, p) in self.dofs.p2_coords().iter().enumerate() {
                    writeln!(
                        w,
                        "{:.16e},{:.16e},{:.16e},{:.16e}",
                        p[0],
                        p[1],
                        self.values[d],
                        self.values[n2 + d]
                    )?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    L1,
    L2,
    H1Semi,
}

/// `L1`, `L2` or `H1` seminorm, optionally restricted to the triangles of `mask`.
///
/// For vector fields `L1` integrates the Euclidean length and `L2`/`H1Semi` sum over
/// components.
pub fn field_norm(field: &DiscreteField, kind: NormKind, mask: Option<&RegionMask>) -> Result<f64> {
    let mesh = field.mesh().clone();
    if let Some(m) = mask {
        if m.mesh_triangle_count() != mesh.num_triangles() {
            return Err(Error::DimensionMismatch {
                expected: mesh.num_triangles(),
                found: m.mesh_triangle_count(),
            });
        }
    }
    let keep = |t: usize| mask.map_or(true, |m| m.contains_triangle(t));
    let mut total = 0.0;
    match (field.space, kind) {
        (Space::P1Scalar, NormKind::L1) => {
            for t in (0..mesh.num_triangles()).filter(|&t| keep(t)) {
                let tri = mesh.triangles()[t];
                let v = [field.values[tri[0]], field.values[tri[1]], field.values[tri[2]]];
                total += abs_integral_linear(v, mesh.area(t));
            }
            return Ok(total);
        }
        (Space::P1Scalar, NormKind::L2) => {
            for t in (0..mesh.num_triangles()).filter(|&t| keep(t)) {
                let tri = mesh.triangles()[t];
                let v = [field.values[tri[0]], field.values[tri[1]], field.values[tri[2]]];
                let s: f64 = v.iter().sum();
                let sq: f64 = v.iter().map(|x| x * x).sum();
                // Exact: area/12 * (sum^2 + sum of squares).
                total += mesh.area(t) / 12.0 * (s * s + sq);
            }
        }
        (Space::P1Scalar, NormKind::H1Semi) => {
            for t in (0..mesh.num_triangles()).filter(|&t| keep(t)) {
                let el = Element::new(&mesh, t);
                let tri = mesh.triangles()[t];
                let dl = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
                let mut g = [0.0; 2];
                for i in 0..3 {
                    let gi = el.grad(dl[i]);
                    g[0] += field.values[tri[i]] * gi[0];
                    g[1] += field.values[tri[i]] * gi[1];
                }
                total += 0.5 * el.det * (g[0] * g[0] + g[1] * g[1]);
            }
        }
        (Space::P2Vector, _) => {
            let tab = Tabulated::new(Family::P2, if kind == NormKind::H1Semi { 2 } else { 6 });
            let n2 = field.dofs.num_p2();
            for t in (0..mesh.num_triangles()).filter(|&t| keep(t)) {
                let el = Element::new(&mesh, t);
                let cd = field.dofs.cell_dofs(t);
                for q in 0..tab.rule.len() {
                    let w = tab.rule.weights[q] * el.det;
                    match kind {
                        NormKind::H1Semi => {
                            for c in 0..2 {
                                let mut g = [0.0; 2];
                                for k in 0..6 {
                                    let gk = el.grad(tab.grads[q][k]);
                                    let v = field.values[c * n2 + cd[k]];
                                    g[0] += v * gk[0];
                                    g[1] += v * gk[1];
                                }
                                total += w * (g[0] * g[0] + g[1] * g[1]);
                            }
                        }
                        _ => {
                            let mut u = [0.0; 2];
                            for k in 0..6 {
                                u[0] += tab.values[q][k] * field.values[cd[k]];
                                u[1] += tab.values[q][k] * field.values[n2 + cd[k]];
                            }
                            let len2 = u[0] * u[0] + u[1] * u[1];
                            total += w * if kind == NormKind::L1 { len2.sqrt() } else { len2 };
                        }
                    }
                }
            }
            if kind == NormKind::L1 {
                return Ok(total);
            }
        }
    }
    Ok(total.max(0.0).sqrt())
}

/// `||p_h - p||_{L2}` against a closed-form `p`, by degree-6 element quadrature.
pub fn p1_error_l2<F: Fn(Point) -> f64>(p: &DiscreteField, exact: F) -> Result<f64> {
    if p.space != Space::P1Scalar {
        return Err(Error::InvalidParameter("expected a P1 scalar field".into()));
    }
    let mesh = p.mesh();
    let tab = Tabulated::new(Family::P1, 6);
    let mut total = 0.0;
    for t in 0..mesh.num_triangles() {
        let el = Element::new(mesh, t);
        let tri = mesh.triangles()[t];
        for (q, &r) in tab.rule.points.iter().enumerate() {
            let ph: f64 = (0..3).map(|i| tab.values[q][i] * p.values[tri[i]]).sum();
            let e = ph - exact(el.map(r));
            total += tab.rule.weights[q] * el.det * e * e;
        }
    }
    Ok(total.sqrt())
}

/// `||grad(u_h - u)||_{L2}` against a closed-form gradient `grad[c][d] = d u_c / d x_d`.
pub fn p2_error_h1_semi<G: Fn(Point) -> [[f64; 2]; 2]>(u: &DiscreteField, grad: G) -> Result<f64> {
    if u.space != Space::P2Vector {
        return Err(Error::InvalidParameter("expected a P2 vector field".into()));
    }
    let mesh = u.mesh();
    let tab = Tabulated::new(Family::P2, 6);
    let n2 = u.dofs.num_p2();
    let mut total = 0.0;
    for t in 0..mesh.num_triangles() {
        let el = Element::new(mesh, t);
        let cd = u.dofs.cell_dofs(t);
        for (q, &r) in tab.rule.points.iter().enumerate() {
            let ge = grad(el.map(r));
            let w = tab.rule.weights[q] * el.det;
            for c in 0..2 {
                let mut g = [0.0; 2];
                for k in 0..6 {
                    let gk = el.grad(tab.grads[q][k]);
                    let v = u.values[c * n2 + cd[k]];
                    g[0] += v * gk[0];
                    g[1] += v * gk[1];
                }
                total += w * ((g[0] - ge[c][0]).powi(2) + (g[1] - ge[c][1]).powi(2));
            }
        }
    }
    Ok(total.sqrt())
}

/// Exact `integral |f|` over a triangle for a linear `f` with vertex values `v`.
pub fn abs_integral_linear(v: [f64; 3], area: f64) -> f64 {
    let full = area * (v[0] + v[1] + v[2]) / 3.0;
    let pos = v.iter().filter(|&&x| x > 0.0).count();
    let neg = v.iter().filter(|&&x| x < 0.0).count();
    if pos == 0 || neg == 0 {
        return full.abs();
    }
    // The vertex whose sign is in the minority is cut off by the zero line.
    let lone = if pos == 1 {
        v.iter().position(|&x| x > 0.0).unwrap()
    } else {
        v.iter().position(|&x| x < 0.0).unwrap()
    };
    let fv = v[lone];
    let ratio: f64 = (0..3).filter(|&k| k != lone).map(|k| fv / (fv - v[k])).product();
    let small = area * ratio * fv / 3.0;
    small.abs() + (full - small).abs()
}

/// Divergence diagnostics of a P2 velocity field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceMetrics {
    pub l1_omega: f64,
    pub l2_omega: f64,
    pub l2_mask: f64,
    pub l2_complement: f64,
    pub abs_integral: f64,
}

/// Divergence of `u` at the three vertices of triangle `t` (it is linear per element).
pub(crate) fn vertex_divergence(u: &DiscreteField, t: usize) -> [f64; 3] {
    let mesh = u.mesh();
    let el = Element::new(mesh, t);
    let cd = u.dofs.cell_dofs(t);
    let n2 = u.dofs.num_p2();
    let corners = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    let mut out = [0.0; 3];
    let mut v = [0.0; 6];
    let mut g = [[0.0; 2]; 6];
    for (i, &r) in corners.iter().enumerate() {
        fill_basis(Family::P2, r, &mut v, &mut g);
        let mut d = 0.0;
        for k in 0..6 {
            let gk = el.grad(g[k]);
            d += gk[0] * u.values[cd[k]] + gk[1] * u.values[n2 + cd[k]];
        }
        out[i] = d;
    }
    out
}

pub fn divergence_metrics(u: &DiscreteField, mask: &RegionMask) -> Result<DivergenceMetrics> {
    if u.space != Space::P2Vector {
        return Err(Error::InvalidParameter("divergence requires a P2 vector field".into()));
    }
    let mesh = u.mesh().clone();
    if mask.mesh_triangle_count() != mesh.num_triangles() {
        return Err(Error::DimensionMismatch {
            expected: mesh.num_triangles(),
            found: mask.mesh_triangle_count(),
        });
    }
    let mut l1 = 0.0;
    let mut l2m = 0.0;
    let mut l2c = 0.0;
    let mut integral = 0.0;
    for t in 0..mesh.num_triangles() {
        let d = vertex_divergence(u, t);
        let area = mesh.area(t);
        let s: f64 = d.iter().sum();
        let sq: f64 = d.iter().map(|x| x * x).sum();
        let l2 = area / 12.0 * (s * s + sq);
        integral += area * s / 3.0;
        l1 += abs_integral_linear(d, area);
        if mask.contains_triangle(t) {
            l2m += l2;
        } else {
            l2c += l2;
        }
    }
    Ok(DivergenceMetrics {
        l1_omega: l1,
        l2_omega: (l2m + l2c).sqrt(),
        l2_mask: l2m.sqrt(),
        l2_complement: l2c.sqrt(),
        abs_integral: integral.abs(),
    })
}
