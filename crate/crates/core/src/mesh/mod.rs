//! Two-dimensional polytopal meshes with the geometric data used by the schemes.
//!
//! Cells are simple polygons stored with their boundary loop in
//! counter-clockwise order. Every derived quantity (measures, centroids,
//! outward normals, orthogonal distances) is computed at construction time;
//! a mesh is immutable afterwards.

mod build;
mod io;

pub use build::{
    cartesian, perturb, simplicial, split_faces, sub_triangulation, SplitFaces, MAX_PERTURBATION,
};
pub use io::{read_mesh, write_mesh};

use std::fmt;

use nalgebra::Vector2;

use crate::{Error, Result};

pub type Point = Vector2<f64>;

/// Relative tolerance for the geometric identities.
pub const GEOM_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Face {
    pub vertices: [usize; 2],
    /// One cell for a boundary face, two for an interior face.
    pub cells: Vec<usize>,
    pub measure: f64,
    pub center: Point,
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        self.cells.len() == 1
    }

    /// The cell on the other side of `cell`, if any.
    pub fn neighbour(&self, cell: usize) -> Option<usize> {
        self.cells.iter().copied().find(|&c| c != cell)
    }
}

#[derive(Debug, Clone)]
pub struct Cell {
    /// Faces in counter-clockwise order; `faces[i]` joins `vertices[i]` and `vertices[i + 1]`.
    pub faces: Vec<usize>,
    pub vertices: Vec<usize>,
    /// Outward unit normal per local face.
    pub normals: Vec<Point>,
    /// Orthogonal distance from the cell center to each face.
    pub distances: Vec<f64>,
    /// Measure of the half-diamond spanned by the center and each face.
    pub diamonds: Vec<f64>,
    pub measure: f64,
    pub centroid: Point,
    /// The point x_K used by the schemes. Defaults to the centroid.
    pub center: Point,
    pub diameter: f64,
}

impl Cell {
    pub fn local_face(&self, face: usize) -> Option<usize> {
        self.faces.iter().position(|&f| f == face)
    }

    /// Local indices of the two faces of this cell that contain `vertex`.
    pub fn faces_at_vertex(&self, vertex: usize) -> Option<[usize; 2]> {
        let i = self.vertices.iter().position(|&v| v == vertex)?;
        let n = self.vertices.len();
        Some([(i + n - 1) % n, i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshKind {
    /// Every cell is a triangle.
    Simplicial,
    /// Every cell is an axis-aligned rectangle.
    Cartesian,
    General,
}

/// A failed geometric or topological invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NormalSum {
        cell: usize,
        residual: f64,
    },
    MeasureMismatch {
        cell: usize,
        residual: f64,
    },
    NonPositiveDistance {
        cell: usize,
        face: usize,
        distance: f64,
    },
    NormalMismatch {
        face: usize,
        residual: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NormalSum { cell, residual } => {
                write!(f, "sum of |face| * normal is {residual:.3e}, not 0, in cell {cell}")
            }
            Violation::MeasureMismatch { cell, residual } => {
                write!(f, "half-diamond measures miss |K| by {residual:.3e} in cell {cell}")
            }
            Violation::NonPositiveDistance { cell, face, distance } => write!(
                f,
                "cell {cell} is not star-shaped w.r.t. its center: d(K={cell}, face={face}) = {distance:.3e}"
            ),
            Violation::NormalMismatch { face, residual } => {
                write!(f, "normals of interior face {face} are not opposite (residual {residual:.3e})")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MeshStats {
    pub h: f64,
    pub theta: f64,
    pub n_cells: usize,
    pub n_faces: usize,
    pub n_interior_faces: usize,
    pub n_vertices: usize,
}

#[derive(Debug, Clone)]
pub struct PolytopalMesh {
    vertices: Vec<Point>,
    faces: Vec<Face>,
    cells: Vec<Cell>,
    boundary_vertex: Vec<bool>,
    vertex_cells: Vec<Vec<usize>>,
    vertex_faces: Vec<Vec<usize>>,
    kind: MeshKind,
}

impl PolytopalMesh {
    /// Builds a mesh from raw topology and validates every invariant.
    ///
    /// `cells[k]` lists the faces of cell `k` in any order; `centers[k]`
    /// optionally overrides the centroid as x_K.
    pub fn new(
        vertices: Vec<Point>,
        faces: Vec<[usize; 2]>,
        cells: Vec<Vec<usize>>,
        centers: Vec<Option<Point>>,
    ) -> Result<Self> {
        let mesh = Self::assemble(vertices, faces, cells, centers)?;
        let violations = mesh.validate();
        if violations.is_empty() {
            Ok(mesh)
        } else {
            Err(Error::MeshInvariants(violations))
        }
    }

    fn assemble(
        vertices: Vec<Point>,
        face_vertices: Vec<[usize; 2]>,
        cell_faces: Vec<Vec<usize>>,
        centers: Vec<Option<Point>>,
    ) -> Result<Self> {
        let nv = vertices.len();
        if centers.len() != cell_faces.len() {
            return Err(Error::Mesh(format!(
                "{} centers given for {} cells",
                centers.len(),
                cell_faces.len()
            )));
        }
        if vertices
            .iter()
            .any(|p| !p.x.is_finite() || !p.y.is_finite())
        {
            return Err(Error::Mesh("non-finite vertex coordinate".into()));
        }
        let mut faces = Vec::with_capacity(face_vertices.len());
        for (i, &[a, b]) in face_vertices.iter().enumerate() {
            if a >= nv || b >= nv || a == b {
                return Err(Error::Mesh(format!(
                    "face {i} has invalid vertices [{a}, {b}]"
                )));
            }
            let measure = (vertices[b] - vertices[a]).norm();
            if measure <= 0.0 {
                return Err(Error::Mesh(format!("face {i} has zero length")));
            }
            faces.push(Face {
                vertices: [a, b],
                cells: Vec::with_capacity(2),
                measure,
                center: (vertices[a] + vertices[b]) * 0.5,
            });
        }
        for (k, list) in cell_faces.iter().enumerate() {
            for &f in list {
                let face = faces
                    .get_mut(f)
                    .ok_or_else(|| Error::Mesh(format!("cell {k} references missing face {f}")))?;
                if face.cells.contains(&k) {
                    return Err(Error::Mesh(format!("cell {k} lists face {f} twice")));
                }
                face.cells.push(k);
                if face.cells.len() > 2 {
                    return Err(Error::Mesh(format!(
                        "face {f} is shared by more than two cells"
                    )));
                }
            }
        }
        if let Some(f) = faces.iter().position(|f| f.cells.is_empty()) {
            return Err(Error::Mesh(format!("face {f} belongs to no cell")));
        }

        let mut cells = Vec::with_capacity(cell_faces.len());
        for (k, list) in cell_faces.iter().enumerate() {
            cells.push(build_cell(k, list, &faces, &vertices, centers[k])?);
        }

        let mut boundary_vertex = vec![false; nv];
        let mut vertex_faces = vec![Vec::new(); nv];
        for (i, f) in faces.iter().enumerate() {
            for &v in &f.vertices {
                vertex_faces[v].push(i);
                if f.is_boundary() {
                    boundary_vertex[v] = true;
                }
            }
        }
        let mut vertex_cells = vec![Vec::new(); nv];
        for (k, c) in cells.iter().enumerate() {
            for &v in &c.vertices {
                vertex_cells[v].push(k);
            }
        }
        let kind = detect_kind(&cells, &vertices);
        Ok(PolytopalMesh {
            vertices,
            faces,
            cells,
            boundary_vertex,
            vertex_cells,
            vertex_faces,
            kind,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn kind(&self) -> MeshKind {
        self.kind
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    pub fn vertex_cells(&self, v: usize) -> &[usize] {
        &self.vertex_cells[v]
    }

    pub fn vertex_faces(&self, v: usize) -> &[usize] {
        &self.vertex_faces[v]
    }

    /// Cell centers x_K.
    pub fn centers(&self) -> Vec<Point> {
        self.cells.iter().map(|c| c.center).collect()
    }

    /// Same topology and vertices with different cell centers.
    pub fn with_centers(&self, centers: &[Point]) -> Result<Self> {
        let faces = self.faces.iter().map(|f| f.vertices).collect();
        let cells = self.cells.iter().map(|c| c.faces.clone()).collect();
        let centers = centers.iter().map(|&c| Some(c)).collect();
        Self::new(self.vertices.clone(), faces, cells, centers)
    }

    /// Mesh size h_M and regularity factor θ_T.
    ///
    /// θ_T = max over (K, σ) of (h_K / d_{K,σ} + |K| / |D_{K,σ}|) plus the
    /// largest ratio d_{K,σ} / d_{L,σ} over interior faces (0 if there is none).
    pub fn stats(&self) -> MeshStats {
        let mut h: f64 = 0.0;
        let mut local: f64 = 0.0;
        for c in &self.cells {
            h = h.max(c.diameter);
            for i in 0..c.faces.len() {
                local = local.max(c.diameter / c.distances[i] + c.measure / c.diamonds[i]);
            }
        }
        let mut ratio: f64 = 0.0;
        for (f, face) in self.faces.iter().enumerate() {
            if let [k, l] = face.cells[..] {
                let dk = self.distance(k, f);
                let dl = self.distance(l, f);
                ratio = ratio.max(dk / dl).max(dl / dk);
            }
        }
        MeshStats {
            h,
            theta: local + ratio,
            n_cells: self.cells.len(),
            n_faces: self.faces.len(),
            n_interior_faces: self.faces.iter().filter(|f| !f.is_boundary()).count(),
            n_vertices: self.vertices.len(),
        }
    }

    /// d_{K,σ} for face `face` seen from cell `cell`.
    pub fn distance(&self, cell: usize, face: usize) -> f64 {
        let c = &self.cells[cell];
        c.distances[c.local_face(face).expect("face does not belong to cell")]
    }

    /// Checks every geometric invariant and returns the violations found.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (k, c) in self.cells.iter().enumerate() {
            let tol = GEOM_TOL * c.measure.max(1.0);
            let mut sum = Point::zeros();
            let mut diamonds = 0.0;
            for (i, &f) in c.faces.iter().enumerate() {
                sum += c.normals[i] * self.faces[f].measure;
                diamonds += c.diamonds[i];
                if c.distances[i] <= 0.0 {
                    out.push(Violation::NonPositiveDistance {
                        cell: k,
                        face: f,
                        distance: c.distances[i],
                    });
                }
            }
            if sum.norm() > tol {
                out.push(Violation::NormalSum {
                    cell: k,
                    residual: sum.norm(),
                });
            }
            if (diamonds - c.measure).abs() > tol {
                out.push(Violation::MeasureMismatch {
                    cell: k,
                    residual: (diamonds - c.measure).abs(),
                });
            }
        }
        for (f, face) in self.faces.iter().enumerate() {
            if let [k, l] = face.cells[..] {
                let nk = self.normal(k, f);
                let nl = self.normal(l, f);
                let r = (nk + nl).norm();
                if r > GEOM_TOL {
                    out.push(Violation::NormalMismatch {
                        face: f,
                        residual: r,
                    });
                }
            }
        }
        out
    }

    /// Outward unit normal n_{K,σ}.
    pub fn normal(&self, cell: usize, face: usize) -> Point {
        let c = &self.cells[cell];
        c.normals[c.local_face(face).expect("face does not belong to cell")]
    }

    pub fn domain_measure(&self) -> f64 {
        self.cells.iter().map(|c| c.measure).sum()
    }

    #[cfg(test)]
    pub(crate) fn cells_mut(&mut self) -> &mut [Cell] {
        &mut self.cells
    }
}

fn build_cell(
    k: usize,
    list: &[usize],
    faces: &[Face],
    vertices: &[Point],
    center: Option<Point>,
) -> Result<Cell> {
    if list.len() < 3 {
        return Err(Error::Mesh(format!("cell {k} has fewer than three faces")));
    }
    // Walk the boundary loop through shared vertices.
    let mut loop_faces = Vec::with_capacity(list.len());
    let mut loop_vertices = Vec::with_capacity(list.len());
    let mut used = vec![false; list.len()];
    let [start, mut current] = faces[list[0]].vertices;
    loop_faces.push(list[0]);
    loop_vertices.push(start);
    used[0] = true;
    while current != start {
        let next =
            (0..list.len()).find(|&j| !used[j] && faces[list[j]].vertices.contains(&current));
        let Some(j) = next else {
            return Err(Error::Mesh(format!(
                "faces of cell {k} do not form a closed loop"
            )));
        };
        used[j] = true;
        let [a, b] = faces[list[j]].vertices;
        loop_faces.push(list[j]);
        loop_vertices.push(current);
        current = if a == current { b } else { a };
    }
    if used.iter().any(|&u| !u) {
        return Err(Error::Mesh(format!(
            "faces of cell {k} form more than one loop"
        )));
    }
    let n = loop_vertices.len();
    let mut seen = loop_vertices.clone();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != n {
        return Err(Error::Mesh(format!(
            "boundary of cell {k} is not a simple loop"
        )));
    }

    let p = |i: usize| vertices[loop_vertices[i % n]];
    let mut area2 = 0.0;
    let mut moment = Point::zeros();
    for i in 0..n {
        let (a, b) = (p(i), p(i + 1));
        let cross = a.x * b.y - b.x * a.y;
        area2 += cross;
        moment += (a + b) * cross;
    }
    if area2 < 0.0 {
        loop_faces.reverse();
        // faces[i] must join vertices[i] and vertices[i + 1] after reversal.
        loop_vertices.reverse();
        loop_vertices.rotate_right(1);
        area2 = -area2;
        moment = -moment;
    }
    if area2 <= 0.0 {
        return Err(Error::Mesh(format!("cell {k} has zero measure")));
    }
    let measure = 0.5 * area2;
    let centroid = moment / (3.0 * area2);
    let center = center.unwrap_or(centroid);
    let p = |i: usize| vertices[loop_vertices[i % n]];

    let mut normals = Vec::with_capacity(n);
    let mut distances = Vec::with_capacity(n);
    let mut diamonds = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b) = (p(i), p(i + 1));
        let e = b - a;
        let len = e.norm();
        let normal = Point::new(e.y, -e.x) / len;
        let d = ((a + b) * 0.5 - center).dot(&normal);
        normals.push(normal);
        distances.push(d);
        diamonds.push(0.5 * len * d);
    }
    let mut diameter: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            diameter = diameter.max((p(i) - p(j)).norm());
        }
    }
    Ok(Cell {
        faces: loop_faces,
        vertices: loop_vertices,
        normals,
        distances,
        diamonds,
        measure,
        centroid,
        center,
        diameter,
    })
}

fn detect_kind(cells: &[Cell], vertices: &[Point]) -> MeshKind {
    if cells.iter().all(|c| c.vertices.len() == 3) {
        return MeshKind::Simplicial;
    }
    let rectangle = |c: &Cell| {
        c.vertices.len() == 4
            && (0..4).all(|i| {
                let e = vertices[c.vertices[(i + 1) % 4]] - vertices[c.vertices[i]];
                e.x.abs() <= GEOM_TOL * e.norm() || e.y.abs() <= GEOM_TOL * e.norm()
            })
    };
    if cells.iter().all(rectangle) {
        MeshKind::Cartesian
    } else {
        MeshKind::General
    }
}
