//! Structured triangulations of the unit square and of disks, plus selection of
//! pressure-constraint regions as triangle subsets.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Geometric description of the domain a mesh approximates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    Square {
        origin: Point,
        side: f64,
    },
    Disk {
        center: Point,
        radius: f64,
    },
    /// Imported meshes: the boundary is only known through boundary edges.
    Polygon,
}

impl Domain {
    /// Area of the exact (curved) domain, if known.
    pub fn exact_area(&self) -> Option<f64> {
        match *self {
            Domain::Square { side, .. } => Some(side * side),
            Domain::Disk { radius, .. } => Some(PI * radius * radius),
            Domain::Polygon => None,
        }
    }
}

/// Conforming triangulation with counter-clockwise triangles.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_vertices: Vec<usize>,
    on_boundary: Vec<bool>,
    h: f64,
    domain: Domain,
}

/// Unique edges of a mesh, sorted lexicographically by vertex pair.
#[derive(Debug, Clone)]
pub struct EdgeTable {
    pub edges: Vec<[usize; 2]>,
    /// Global edge index of local edges (0,1), (1,2), (2,0) of each triangle.
    pub triangle_edges: Vec<[usize; 3]>,
    /// Number of triangles sharing each edge.
    pub multiplicity: Vec<u8>,
}

pub const LOCAL_EDGES: [[usize; 2]; 3] = [[0, 1], [1, 2], [2, 0]];

impl Mesh {
    /// Builds a mesh, validating indices and orientation.
    pub fn new(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        mut boundary_vertices: Vec<usize>,
        domain: Domain,
    ) -> Result<Self> {
        let nv = vertices.len();
        for tri in &triangles {
            for &v in tri {
                if v >= nv {
                    return Err(Error::IndexOutOfRange { index: v, len: nv });
                }
            }
        }
        boundary_vertices.sort_unstable();
        boundary_vertices.dedup();
        let mut on_boundary = vec![false; nv];
        for &b in &boundary_vertices {
            if b >= nv {
                return Err(Error::IndexOutOfRange { index: b, len: nv });
            }
            on_boundary[b] = true;
        }
        let mut mesh = Mesh {
            vertices,
            triangles,
            boundary_vertices,
            on_boundary,
            h: 0.0,
            domain,
        };
        let mut h: f64 = 0.0;
        for t in 0..mesh.triangles.len() {
            let area = mesh.signed_area(t);
            if area <= 1e-14 {
                return Err(Error::DegenerateTriangle { index: t, area });
            }
            let [a, b, c] = mesh.triangle_points(t);
            h = h.max(dist(a, b)).max(dist(b, c)).max(dist(c, a));
        }
        mesh.h = h;
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_vertices(&self) -> &[usize] {
        &self.boundary_vertices
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.on_boundary[v]
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Maximum triangle diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn area(&self, t: usize) -> f64 {
        self.signed_area(t).abs()
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.triangle_points(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Sum of triangle areas (the discrete |Ω|).
    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.area(t)).sum()
    }

    /// Exact domain area minus the triangulated area (polygonal defect for disks).
    pub fn area_defect(&self) -> f64 {
        self.domain.exact_area().map(|a| a - self.total_area()).unwrap_or(0.0)
    }

    pub fn edge_table(&self) -> EdgeTable {
        let mut pairs: Vec<[usize; 2]> = Vec::with_capacity(3 * self.triangles.len());
        for tri in &self.triangles {
            for [i, j] in LOCAL_EDGES {
                let (a, b) = (tri[i], tri[j]);
                pairs.push([a.min(b), a.max(b)]);
            }
        }
        let mut edges = pairs.clone();
        edges.sort_unstable();
        edges.dedup();
        let mut multiplicity = vec![0u8; edges.len()];
        let triangle_edges = pairs
            .chunks_exact(3)
            .map(|c| {
                let mut out = [0usize; 3];
                for (k, p) in c.iter().enumerate() {
                    let e = edges.binary_search(p).expect("edge present");
                    multiplicity[e] = multiplicity[e].saturating_add(1);
                    out[k] = e;
                }
                out
            })
            .collect();
        EdgeTable {
            edges,
            triangle_edges,
            multiplicity,
        }
    }

    /// Verifies that every edge is shared by one (boundary) or two (interior) triangles
    /// and that edges used once connect boundary vertices.
    pub fn check_conformity(&self) -> Result<()> {
        let table = self.edge_table();
        for (e, &m) in table.multiplicity.iter().enumerate() {
            let [a, b] = table.edges[e];
            match m {
                1 if self.on_boundary[a] && self.on_boundary[b] => {}
                2 => {}
                _ => return Err(Error::InvalidData(format!("edge ({a}, {b}) shared by {m} triangles"))),
            }
        }
        Ok(())
    }

    /// Vertex adjacency lists built from triangle edges.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_vertices()];
        for tri in &self.triangles {
            for [i, j] in LOCAL_EDGES {
                adj[tri[i]].push(tri[j]);
                adj[tri[j]].push(tri[i]);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Distance from `p` to the domain boundary.
    pub fn boundary_distance(&self, p: Point) -> f64 {
        match self.domain {
            Domain::Square { origin, side } => {
                let dx = (p[0] - origin[0]).min(origin[0] + side - p[0]);
                let dy = (p[1] - origin[1]).min(origin[1] + side - p[1]);
                dx.min(dy)
            }
            Domain::Disk { center, radius } => radius - dist(p, center),
            Domain::Polygon => {
                let table = self.edge_table();
                table
                    .edges
                    .iter()
                    .zip(&table.multiplicity)
                    .filter(|(_, &m)| m == 1)
                    .map(|(&[a, b], _)| segment_distance(p, self.vertices[a], self.vertices[b]))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Writes the plain-text mesh format: a header line
    /// `<V> vertices <T> triangles <B> boundary`, then coordinates, triangles and
    /// boundary indices, one per line.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "{} vertices {} triangles {} boundary",
            self.num_vertices(),
            self.num_triangles(),
            self.boundary_vertices.len()
        )?;
        for p in &self.vertices {
            writeln!(w, "{:e} {:e}", p[0], p[1])?;
        }
        for t in &self.triangles {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        for b in &self.boundary_vertices {
            writeln!(w, "{b}")?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Mesh> {
        let mut lines = r.lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Parse("unexpected end of mesh file".into()))?
                .map_err(Error::from)
        };
        let header = next()?;
        let tok: Vec<&str> = header.split_whitespace().collect();
        if tok.len() != 6 || tok[1] != "vertices" || tok[3] != "triangles" || tok[5] != "boundary" {
            return Err(Error::Parse(format!("bad mesh header: {header:?}")));
        }
        let count = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(e.to_string()));
        let (nv, nt, nb) = (count(tok[0])?, count(tok[2])?, count(tok[4])?);
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let line = next()?;
            let v: Vec<f64> = line
                .split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(e.to_string())))
                .collect::<Result<_>>()?;
            if v.len() != 2 {
                return Err(Error::Parse(format!("bad vertex line: {line:?}")));
            }
            vertices.push([v[0], v[1]]);
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let line = next()?;
            let v: Vec<usize> = line.split_whitespace().map(count).collect::<Result<_>>()?;
            if v.len() != 3 {
                return Err(Error::Parse(format!("bad triangle line: {line:?}")));
            }
            triangles.push([v[0], v[1], v[2]]);
        }
        let mut boundary = Vec::with_capacity(nb);
        for _ in 0..nb {
            boundary.push(count(next()?.trim())?);
        }
        Mesh::new(vertices, triangles, boundary, Domain::Polygon)
    }
}

pub(crate) fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    dist(p, [a[0] + t * dx, a[1] + t * dy])
}

/// Uniform `n × n` grid of the unit square, each cell split along its rising diagonal.
pub fn generate_unit_square_mesh(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::InvalidParameter("square mesh needs n >= 1".into()));
    }
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    let mut boundary = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
            if i == 0 || j == 0 || i == n || j == n {
                boundary.push(idx(i, j));
            }
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (v00, v10, v01, v11) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    Mesh::new(
        vertices,
        triangles,
        boundary,
        Domain::Square {
            origin: [0.0, 0.0],
            side: 1.0,
        },
    )
}

/// Polar-structured mesh of the unit disk; see [`generate_disk_mesh`].
pub fn generate_unit_disk_mesh(n_radial: usize, n_angular: usize) -> Result<Mesh> {
    generate_disk_mesh([0.0, 0.0], 1.0, n_radial, n_angular)
}

/// Polar-structured mesh of a disk: a central vertex, `n_radial` concentric rings at
/// equispaced radii, ring `i` carrying `max(3, round(n_angular * i / n_radial))`
/// vertices so the outermost ring has exactly `n_angular`. Neighbouring rings are
/// stitched by merging their angular positions.
pub fn generate_disk_mesh(center: Point, radius: f64, n_radial: usize, n_angular: usize) -> Result<Mesh> {
    if n_radial == 0 {
        return Err(Error::InvalidParameter("disk mesh needs n_radial >= 1".into()));
    }
    if n_angular < 3 {
        return Err(Error::InvalidParameter("disk mesh needs n_angular >= 3".into()));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter("disk radius must be positive".into()));
    }
    let mut vertices = vec![center];
    let mut rings: Vec<Vec<usize>> = Vec::with_capacity(n_radial);
    let mut prev_count = 0usize;
    for i in 1..=n_radial {
        let count = if i == n_radial {
            n_angular
        } else {
            ((n_angular * i) as f64 / n_radial as f64)
                .round()
                .max(3.0)
                .max(prev_count as f64) as usize
        };
        let count = count.min(n_angular);
        prev_count = count;
        let r = radius * i as f64 / n_radial as f64;
        let ring: Vec<usize> = (0..count)
            .map(|k| {
                let theta = 2.0 * PI * k as f64 / count as f64;
                vertices.push([center[0] + r * theta.cos(), center[1] + r * theta.sin()]);
                vertices.len() - 1
            })
            .collect();
        rings.push(ring);
    }
    let mut triangles = Vec::new();
    let first = &rings[0];
    for k in 0..first.len() {
        triangles.push([0, first[k], first[(k + 1) % first.len()]]);
    }
    for pair in rings.windows(2) {
        stitch_rings(&pair[0], &pair[1], &mut triangles);
    }
    for t in triangles.iter_mut() {
        let [a, b, c] = [vertices[t[0]], vertices[t[1]], vertices[t[2]]];
        if (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]) < 0.0 {
            t.swap(1, 2);
        }
    }
    let boundary = rings.last().cloned().unwrap_or_default();
    Mesh::new(vertices, triangles, boundary, Domain::Disk { center, radius })
}

fn stitch_rings(inner: &[usize], outer: &[usize], out: &mut Vec<[usize; 3]>) {
    let (ma, mb) = (inner.len(), outer.len());
    let (mut j, mut k) = (0usize, 0usize);
    while j < ma || k < mb {
        // Advance whichever ring has the smaller next angle; compare (k+1)/mb with (j+1)/ma exactly.
        let advance_outer = k < mb && (j == ma || (k + 1) * ma <= (j + 1) * mb);
        if advance_outer {
            out.push([inner[j % ma], outer[k], outer[(k + 1) % mb]]);
            k += 1;
        } else {
            out.push([inner[j], outer[k % mb], inner[(j + 1) % ma]]);
            j += 1;
        }
    }
}

/// How a region Δ is carved out of a mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegionSpec {
    Empty,
    /// Triangles whose centroid lies closer than `width` to the boundary.
    BoundaryBand {
        width: f64,
    },
    /// Triangles whose centroid lies inside the disk.
    InteriorDisk {
        center: Point,
        radius: f64,
    },
    /// Triangles touching a vertex within `layers - 1` edge hops of the boundary.
    LayerBand {
        layers: usize,
    },
    /// Every triangle of the mesh.
    Whole,
}

/// A set Δ of triangles together with the pressure vertices it constrains.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    triangles: Vec<usize>,
    triangle_flags: Vec<bool>,
    constrained_vertices: Vec<usize>,
    vertex_flags: Vec<bool>,
    volume: f64,
    diameter_spec: f64,
}

impl RegionMask {
    /// Builds a mask from explicit triangle indices.
    pub fn from_triangles(mesh: &Mesh, triangles: &[usize], diameter_spec: f64) -> Result<Self> {
        let nt = mesh.num_triangles();
        let mut triangle_flags = vec![false; nt];
        for &t in triangles {
            if t >= nt {
                return Err(Error::IndexOutOfRange { index: t, len: nt });
            }
            triangle_flags[t] = true;
        }
        let mut vertex_flags = vec![false; mesh.num_vertices()];
        let mut tris = Vec::new();
        let mut volume = 0.0;
        for (t, &on) in triangle_flags.iter().enumerate() {
            if on {
                tris.push(t);
                volume += mesh.area(t);
                for &v in &mesh.triangles()[t] {
                    vertex_flags[v] = true;
                }
            }
        }
        let constrained_vertices = vertex_flags
            .iter()
            .enumerate()
            .filter_map(|(v, &f)| f.then_some(v))
            .collect();
        Ok(RegionMask {
            diameter_spec: if tris.is_empty() { 0.0 } else { diameter_spec },
            triangles: tris,
            triangle_flags,
            constrained_vertices,
            vertex_flags,
            volume,
        })
    }

    pub fn empty(mesh: &Mesh) -> Self {
        Self::from_triangles(mesh, &[], 0.0).expect("empty mask is valid")
    }

    pub fn triangles(&self) -> &[usize] {
        &self.triangles
    }

    pub fn constrained_vertices(&self) -> &[usize] {
        &self.constrained_vertices
    }

    pub fn contains_triangle(&self, t: usize) -> bool {
        self.triangle_flags.get(t).copied().unwrap_or(false)
    }

    pub fn is_constrained(&self, v: usize) -> bool {
        self.vertex_flags.get(v).copied().unwrap_or(false)
    }

    /// |Δ|: sum of masked triangle areas.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// The D(Δ) parameter that produced the mask (0 for an empty mask).
    pub fn diameter_spec(&self) -> f64 {
        self.diameter_spec
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Number of triangles of the mesh this mask was built for.
    pub fn mesh_triangle_count(&self) -> usize {
        self.triangle_flags.len()
    }

    /// Ω \ Δ as a mask over the same mesh.
    pub fn complement(&self, mesh: &Mesh) -> Result<Self> {
        let tris: Vec<usize> = (0..mesh.num_triangles())
            .filter(|&t| !self.contains_triangle(t))
            .collect();
        Self::from_triangles(mesh, &tris, 0.0)
    }
}

/// Selects Δ according to `spec`. With `proper` set, a selection covering the whole
/// mesh is rejected.
pub fn select_region(mesh: &Mesh, spec: &RegionSpec, proper: bool) -> Result<RegionMask> {
    let nt = mesh.num_triangles();
    let (tris, diameter): (Vec<usize>, f64) = match *spec {
        RegionSpec::Empty => return Ok(RegionMask::empty(mesh)),
        RegionSpec::BoundaryBand { width } => {
            if !(width > 0.0) {
                return Err(Error::InvalidParameter("band width must be positive".into()));
            }
            let tris = (0..nt)
                .filter(|&t| mesh.boundary_distance(mesh.centroid(t)) < width)
                .collect();
            (tris, width)
        }
        RegionSpec::InteriorDisk { center, radius } => {
            if !(radius > 0.0) {
                return Err(Error::InvalidParameter("disk radius must be positive".into()));
            }
            let tris = (0..nt).filter(|&t| dist(mesh.centroid(t), center) < radius).collect();
            (tris, 2.0 * radius)
        }
        RegionSpec::LayerBand { layers } => {
            if layers == 0 {
                return Err(Error::InvalidParameter("layer band needs layers >= 1".into()));
            }
            let depth = vertex_depths(mesh);
            let tris = (0..nt)
                .filter(|&t| mesh.triangles()[t].iter().any(|&v| depth[v] < layers))
                .collect();
            (tris, layers as f64 * mesh.h())
        }
        RegionSpec::Whole => {
            let (lo, hi) = bounding_box(mesh);
            ((0..nt).collect(), dist(lo, hi))
        }
    };
    if tris.is_empty() {
        return Err(Error::EmptySelection);
    }
    if proper && tris.len() == nt {
        return Err(Error::RegionCoversDomain);
    }
    RegionMask::from_triangles(mesh, &tris, diameter)
}

/// |Δ| of a mask, checked against the mesh.
pub fn region_volume(mesh: &Mesh, mask: &RegionMask) -> Result<f64> {
    let nt = mesh.num_triangles();
    for &t in mask.triangles() {
        if t >= nt {
            return Err(Error::IndexOutOfRange { index: t, len: nt });
        }
    }
    Ok(mask.triangles().iter().map(|&t| mesh.area(t)).sum())
}

/// Edge-hop distance of every vertex to the boundary.
fn vertex_depths(mesh: &Mesh) -> Vec<usize> {
    let adj = mesh.vertex_neighbors();
    let mut depth = vec![usize::MAX; mesh.num_vertices()];
    let mut queue = VecDeque::new();
    for &b in mesh.boundary_vertices() {
        depth[b] = 0;
        queue.push_back(b);
    }
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if depth[w] == usize::MAX {
                depth[w] = depth[v] + 1;
                queue.push_back(w);
            }
        }
    }
    depth
}

fn bounding_box(mesh: &Mesh) -> (Point, Point) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in mesh.vertices() {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    (lo, hi)
}

/// Bucket grid for locating the triangle containing a point.
#[derive(Debug, Clone)]
pub struct PointLocator {
    lo: Point,
    cell: Point,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl PointLocator {
    pub fn new(mesh: &Mesh) -> Self {
        let (lo, hi) = bounding_box(mesh);
        let n = ((mesh.num_triangles() as f64).sqrt().ceil() as usize).max(1);
        let (nx, ny) = (n, n);
        let cell = [
            ((hi[0] - lo[0]) / nx as f64).max(1e-300),
            ((hi[1] - lo[1]) / ny as f64).max(1e-300),
        ];
        let mut buckets = vec![Vec::new(); nx * ny];
        for t in 0..mesh.num_triangles() {
            let pts = mesh.triangle_points(t);
            let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
            for p in pts {
                x0 = x0.min(p[0]);
                y0 = y0.min(p[1]);
                x1 = x1.max(p[0]);
                y1 = y1.max(p[1]);
            }
            let clampi = |v: f64, n: usize| (v.floor().max(0.0) as usize).min(n - 1);
            let (i0, i1) = (clampi((x0 - lo[0]) / cell[0], nx), clampi((x1 - lo[0]) / cell[0], nx));
            let (j0, j1) = (clampi((y0 - lo[1]) / cell[1], ny), clampi((y1 - lo[1]) / cell[1], ny));
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nx + i].push(t);
                }
            }
        }
        PointLocator {
            lo,
            cell,
            nx,
            ny,
            buckets,
        }
    }

    /// Triangle containing `p` and its barycentric coordinates. Points within a small
    /// tolerance outside the mesh snap to the nearest candidate triangle.
    pub fn locate(&self, mesh: &Mesh, p: Point) -> Option<(usize, [f64; 3])> {
        let i = (((p[0] - self.lo[0]) / self.cell[0]).floor().max(0.0) as usize).min(self.nx - 1);
        let j = (((p[1] - self.lo[1]) / self.cell[1]).floor().max(0.0) as usize).min(self.ny - 1);
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in &self.buckets[j * self.nx + i] {
            let bary = barycentric(mesh, t, p);
            let worst = bary.iter().copied().fold(f64::INFINITY, f64::min);
            if worst >= -1e-12 {
                return Some((t, bary));
            }
            if best.as_ref().map_or(true, |b| worst > b.2) {
                best = Some((t, bary, worst));
            }
        }
        match best {
            Some((t, bary, worst)) if worst > -1e-6 => {
                let clamped = bary.map(|b| b.max(0.0));
                let s: f64 = clamped.iter().sum();
                Some((t, clamped.map(|b| b / s)))
            }
            _ => None,
        }
    }
}

pub(crate) fn barycentric(mesh: &Mesh, t: usize, p: Point) -> [f64; 3] {
    let [a, b, c] = mesh.triangle_points(t);
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
    let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
    [1.0 - l1 - l2, l1, l2]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn square_counts() {
        let m = generate_unit_square_mesh(1).unwrap();
        assert_eq!((m.num_vertices(), m.num_triangles()), (4, 2));
        assert!(approx(m.total_area(), 1.0, 1e-15));
        let m = generate_unit_square_mesh(4).unwrap();
        assert_eq!((m.num_vertices(), m.num_triangles()), (25, 32));
        assert!(approx(m.total_area(), 1.0, 1e-15));
        assert!(approx(m.h(), 2f64.sqrt() / 4.0, 1e-15));
        assert_eq!(m.boundary_vertices().len(), 16);
    }

    #[test]
    fn square_n2_triangle_areas() {
        let m = generate_unit_square_mesh(2).unwrap();
        for t in 0..8 {
            assert!(approx(m.signed_area(t), 0.125, 1e-15));
        }
    }

    #[test]
    fn zero_size_rejected() {
        assert!(matches!(generate_unit_square_mesh(0), Err(Error::InvalidParameter(_))));
        assert!(matches!(generate_unit_disk_mesh(1, 2), Err(Error::InvalidParameter(_))));
        assert!(matches!(generate_unit_disk_mesh(0, 8), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn minimal_fan() {
        let m = generate_unit_disk_mesh(1, 3).unwrap();
        assert_eq!((m.num_vertices(), m.num_triangles()), (4, 3));
        let m = generate_unit_disk_mesh(1, 6).unwrap();
        let hex = 6.0 * 0.5 * (PI / 3.0).sin();
        assert!(approx(m.total_area(), hex, 1e-14));
    }

    #[test]
    fn fine_disk_area_and_conformity() {
        let m = generate_unit_disk_mesh(32, 128).unwrap();
        assert!((m.total_area() - PI).abs() / PI < 2e-3);
        let theta = 2.0 * PI / 128.0;
        assert!(approx(m.area_defect(), PI * (1.0 - theta.sin() / theta), 1e-10));
        m.check_conformity().unwrap();
        assert_eq!(m.boundary_vertices().len(), 128);
    }

    #[test]
    fn disk_meshes_conform_for_many_parameters() {
        for nr in 1..7 {
            for na in [3, 4, 5, 7, 12, 6 * nr, 13 * nr] {
                let m = generate_disk_mesh([0.5, 0.5], 0.2, nr, na).unwrap();
                m.check_conformity().unwrap();
                for t in 0..m.num_triangles() {
                    assert!(m.signed_area(t) > 0.0);
                }
            }
        }
    }

    #[test]
    fn layer_band_volumes() {
        let m = generate_unit_square_mesh(4).unwrap();
        let mask = select_region(&m, &RegionSpec::LayerBand { layers: 1 }, true).unwrap();
        assert!(approx(mask.volume(), 0.75, 1e-14));
        // Every vertex except the centre belongs to a masked triangle.
        assert_eq!(mask.constrained_vertices().len(), 24);
        let m = generate_unit_square_mesh(8).unwrap();
        let mask = select_region(&m, &RegionSpec::LayerBand { layers: 1 }, true).unwrap();
        assert!(approx(region_volume(&m, &mask).unwrap(), 1.0 - 0.75f64.powi(2), 1e-14));
    }

    #[test]
    fn layer_band_monotone() {
        let m = generate_unit_disk_mesh(6, 36).unwrap();
        let mut prev: Option<RegionMask> = None;
        for k in 1..5 {
            let mask = select_region(&m, &RegionSpec::LayerBand { layers: k }, false).unwrap();
            if let Some(p) = prev {
                assert!(p.triangles().iter().all(|&t| mask.contains_triangle(t)));
            }
            prev = Some(mask);
        }
    }

    #[test]
    fn interior_disk_volume_tracks_area() {
        let m = generate_unit_disk_mesh(40, 240).unwrap();
        let mask = select_region(
            &m,
            &RegionSpec::InteriorDisk {
                center: [0.0, 0.0],
                radius: 0.1,
            },
            true,
        )
        .unwrap();
        let exact = PI * 0.01;
        assert!((mask.volume() - exact).abs() / exact < 0.15, "{}", mask.volume());
    }

    #[test]
    fn empty_and_whole_masks() {
        let m = generate_unit_square_mesh(3).unwrap();
        let e = select_region(&m, &RegionSpec::Empty, true).unwrap();
        assert_eq!(e.volume(), 0.0);
        assert_eq!(e.diameter_spec(), 0.0);
        assert!(e.constrained_vertices().is_empty());
        let w = select_region(&m, &RegionSpec::Whole, false).unwrap();
        assert!(approx(region_volume(&m, &w).unwrap(), 1.0, 1e-14));
        assert_eq!(
            select_region(&m, &RegionSpec::Whole, true),
            Err(Error::RegionCoversDomain)
        );
        let none = select_region(
            &m,
            &RegionSpec::InteriorDisk {
                center: [5.0, 5.0],
                radius: 0.1,
            },
            true,
        );
        assert_eq!(none, Err(Error::EmptySelection));
    }

    #[test]
    fn out_of_range_mask() {
        let big = generate_unit_square_mesh(4).unwrap();
        let small = generate_unit_square_mesh(1).unwrap();
        let mask = RegionMask::from_triangles(&big, &[20], 0.0).unwrap();
        assert!(matches!(
            region_volume(&small, &mask),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn text_round_trip() {
        let m = generate_unit_disk_mesh(3, 12).unwrap();
        let mut buf = Vec::new();
        m.write_text(&mut buf).unwrap();
        let header = String::from_utf8_lossy(&buf).lines().next().unwrap().to_string();
        assert_eq!(
            header,
            format!(
                "{} vertices {} triangles 12 boundary",
                m.num_vertices(),
                m.num_triangles()
            )
        );
        let back = Mesh::read_text(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back.triangles(), m.triangles());
        assert_eq!(back.vertices(), m.vertices());
        assert_eq!(back.boundary_vertices(), m.boundary_vertices());
    }

    #[test]
    fn locator_finds_points() {
        let m = generate_unit_disk_mesh(5, 30).unwrap();
        let loc = PointLocator::new(&m);
        for &p in &[[0.0, 0.0], [0.3, -0.2], [0.7, 0.1], [-0.5, 0.5]] {
            let (t, b) = loc.locate(&m, p).unwrap();
            let pts = m.triangle_points(t);
            let x = b[0] * pts[0][0] + b[1] * pts[1][0] + b[2] * pts[2][0];
            let y = b[0] * pts[0][1] + b[1] * pts[1][1] + b[2] * pts[2][1];
            assert!((x - p[0]).abs() < 1e-12 && (y - p[1]).abs() < 1e-12);
        }
        assert!(loc.locate(&m, [3.0, 3.0]).is_none());
    }
}
