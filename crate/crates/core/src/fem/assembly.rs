use std::sync::Arc;

use super::basis::{fill_basis, Family};
use super::quadrature::{quadrature_rule, QuadratureRule};
use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;
use crate::mesh::{EdgeTable, Mesh, Point};

/// Smallest triangle area accepted by assembly.
pub const MIN_AREA: f64 = 1e-14;

/// Degrees of freedom of the Taylor-Hood pair on a mesh.
///
/// Scalar P2 dofs are the vertices followed by the edges in edge-table order.
/// Velocity vectors are stored component-blocked: `[u1 | u2]`. P1 dofs are vertices.
#[derive(Debug, Clone)]
pub struct DofMap {
    mesh: Arc<Mesh>,
    edges: EdgeTable,
    cell_dofs: Vec<[usize; 6]>,
    coords: Vec<Point>,
    on_boundary: Vec<bool>,
}

impl DofMap {
    pub fn new(mesh: Arc<Mesh>) -> Self {
        let edges = mesh.edge_table();
        let nv = mesh.num_vertices();
        let cell_dofs = mesh
            .triangles()
            .iter()
            .zip(&edges.triangle_edges)
            .map(|(t, e)| [t[0], t[1], t[2], nv + e[0], nv + e[1], nv + e[2]])
            .collect();
        let mut coords = mesh.vertices().to_vec();
        let mut on_boundary: Vec<bool> = (0..nv).map(|v| mesh.is_boundary_vertex(v)).collect();
        for (e, &[a, b]) in edges.edges.iter().enumerate() {
            let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
            coords.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
            on_boundary.push(edges.multiplicity[e] == 1);
        }
        DofMap {
            mesh,
            edges,
            cell_dofs,
            coords,
            on_boundary,
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn edges(&self) -> &EdgeTable {
        &self.edges
    }

    /// Number of scalar P2 dofs.
    pub fn num_p2(&self) -> usize {
        self.coords.len()
    }

    pub fn num_velocity(&self) -> usize {
        2 * self.coords.len()
    }

    pub fn num_pressure(&self) -> usize {
        self.mesh.num_vertices()
    }

    /// Global scalar P2 dofs of a triangle in local basis order.
    pub fn cell_dofs(&self, t: usize) -> &[usize; 6] {
        &self.cell_dofs[t]
    }

    /// Node coordinates of scalar P2 dofs.
    pub fn p2_coords(&self) -> &[Point] {
        &self.coords
    }

    pub fn is_boundary_p2(&self, d: usize) -> bool {
        self.on_boundary[d]
    }
}

/// Affine map from the reference triangle.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Element {
    pub origin: Point,
    pub jac: [[f64; 2]; 2],
    /// `J^{-T}`.
    pub inv_t: [[f64; 2]; 2],
    pub det: f64,
}

impl Element {
    pub fn new(mesh: &Mesh, t: usize) -> Self {
        let [p0, p1, p2] = mesh.triangle_points(t);
        let jac = [[p1[0] - p0[0], p2[0] - p0[0]], [p1[1] - p0[1], p2[1] - p0[1]]];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let inv_t = [[jac[1][1] / det, -jac[1][0] / det], [-jac[0][1] / det, jac[0][0] / det]];
        Element {
            origin: p0,
            jac,
            inv_t,
            det,
        }
    }

    pub fn map(&self, r: [f64; 2]) -> Point {
        [
            self.origin[0] + self.jac[0][0] * r[0] + self.jac[0][1] * r[1],
            self.origin[1] + self.jac[1][0] * r[0] + self.jac[1][1] * r[1],
        ]
    }

    pub fn grad(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.inv_t[0][0] * g[0] + self.inv_t[0][1] * g[1],
            self.inv_t[1][0] * g[0] + self.inv_t[1][1] * g[1],
        ]
    }
}

/// Basis tables of one family at the points of a rule.
#[derive(Debug, Clone)]
pub(crate) struct Tabulated {
    pub rule: QuadratureRule,
    pub values: Vec<Vec<f64>>,
    pub grads: Vec<Vec<[f64; 2]>>,
}

impl Tabulated {
    pub fn new(family: Family, degree: usize) -> Self {
        let rule = quadrature_rule(degree).expect("supported degree");
        let n = family.local_dofs();
        let mut values = Vec::with_capacity(rule.len());
        let mut grads = Vec::with_capacity(rule.len());
        for &p in &rule.points {
            let mut v = vec![0.0; n];
            let mut g = vec![[0.0; 2]; n];
            fill_basis(family, p, &mut v, &mut g);
            values.push(v);
            grads.push(g);
        }
        Tabulated { rule, values, grads }
    }
}

/// Assembled Taylor-Hood blocks:
/// `[[A, B^T], [B, 0]] [u; p] = [f; 0]` with `B` encoding `-(p, div v)`.
#[derive(Debug, Clone)]
pub struct StokesSystem {
    pub dofs: Arc<DofMap>,
    /// Vector Laplacian, `2 N_P2` square.
    pub a: SparseMatrix,
    /// `N_P1 x 2 N_P2`.
    pub b: SparseMatrix,
    /// Pressure mass matrix.
    pub mp: SparseMatrix,
    pub f_vec: Vec<f64>,
}

impl StokesSystem {
    pub fn mesh(&self) -> &Arc<Mesh> {
        self.dofs.mesh()
    }
}

/// Assembles the Stokes blocks for a load `f(x)`.
pub fn assemble_stokes<F>(mesh: Arc<Mesh>, load: F) -> Result<StokesSystem>
where
    F: Fn(Point) -> [f64; 2],
{
    for t in 0..mesh.num_triangles() {
        let area = mesh.signed_area(t);
        if !(area >= MIN_AREA) {
            return Err(Error::DegenerateTriangle { index: t, area });
        }
    }
    let dofs = Arc::new(DofMap::new(mesh.clone()));
    let n2 = dofs.num_p2();
    let np = dofs.num_pressure();
    let quad2 = Tabulated::new(Family::P2, 4);
    let quad1 = Tabulated::new(Family::P1, 4);
    let load_rule = Tabulated::new(Family::P2, 6);

    let nt = mesh.num_triangles();
    let mut k_trip = Vec::with_capacity(36 * nt);
    let mut b_trip = Vec::with_capacity(36 * nt);
    let mut m_trip = Vec::with_capacity(9 * nt);
    let mut f_vec = vec![0.0; 2 * n2];
    for t in 0..nt {
        let el = Element::new(&mesh, t);
        let cd = dofs.cell_dofs(t);
        let tri = mesh.triangles()[t];
        let mut ke = [[0.0; 6]; 6];
        let mut be = [[[0.0; 6]; 3]; 2];
        let mut me = [[0.0; 3]; 3];
        for q in 0..quad2.rule.len() {
            let w = quad2.rule.weights[q] * el.det;
            let g: Vec<[f64; 2]> = quad2.grads[q].iter().map(|&g| el.grad(g)).collect();
            for i in 0..6 {
                for j in 0..6 {
                    ke[i][j] += w * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                }
            }
            let psi = &quad1.values[q];
            for i in 0..3 {
                for j in 0..6 {
                    be[0][i][j] -= w * psi[i] * g[j][0];
                    be[1][i][j] -= w * psi[i] * g[j][1];
                }
                for j in 0..3 {
                    me[i][j] += w * psi[i] * psi[j];
                }
            }
        }
        for q in 0..load_rule.rule.len() {
            let w = load_rule.rule.weights[q] * el.det;
            let fx = load(el.map(load_rule.rule.points[q]));
            for (j, &phi) in load_rule.values[q].iter().enumerate() {
                f_vec[cd[j]] += w * fx[0] * phi;
                f_vec[n2 + cd[j]] += w * fx[1] * phi;
            }
        }
        for i in 0..6 {
            for j in 0..6 {
                // Symmetrize the element matrix exactly.
                let v = if i <= j { ke[i][j] } else { ke[j][i] };
                k_trip.push((cd[i], cd[j], v));
            }
        }
        for i in 0..3 {
            for j in 0..6 {
                b_trip.push((tri[i], cd[j], be[0][i][j]));
                b_trip.push((tri[i], n2 + cd[j], be[1][i][j]));
            }
            for j in 0..3 {
                let v = if i <= j { me[i][j] } else { me[j][i] };
                m_trip.push((tri[i], tri[j], v));
            }
        }
    }
    let k = SparseMatrix::from_triplets(n2, n2, &k_trip)?;
    drop(k_trip);
    let a_trip: Vec<_> = k
        .triplets()
        .flat_map(|(i, j, v)| [(i, j, v), (n2 + i, n2 + j, v)])
        .collect();
    let a = SparseMatrix::from_triplets(2 * n2, 2 * n2, &a_trip)?;
    let b = SparseMatrix::from_triplets(np, 2 * n2, &b_trip)?;
    let mp = SparseMatrix::from_triplets(np, np, &m_trip)?;
    Ok(StokesSystem { dofs, a, b, mp, f_vec })
}

/// P1 mass matrix assembled over the triangles accepted by `keep`.
pub fn assemble_p1_mass<K: Fn(usize) -> bool>(mesh: &Mesh, keep: K) -> SparseMatrix {
    let np = mesh.num_vertices();
    let mut trip = Vec::new();
    for t in 0..mesh.num_triangles() {
        if !keep(t) {
            continue;
        }
        let area = mesh.area(t);
        let tri = mesh.triangles()[t];
        for i in 0..3 {
            for j in 0..3 {
                let v = if i == j { area / 6.0 } else { area / 12.0 };
                trip.push((tri[i], tri[j], v));
            }
        }
    }
    SparseMatrix::from_triplets(np, np, &trip).expect("vertex indices validated by mesh")
}
