use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Point, PolytopalMesh};
use crate::{Error, Result};

/// Largest admissible perturbation amplitude, as a fraction of the local mesh size.
pub const MAX_PERTURBATION: f64 = 0.3;

fn check_grid(nx: usize, ny: usize, bbox: [f64; 4]) -> Result<()> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidArgument(format!(
            "grid size {nx}x{ny} must be positive"
        )));
    }
    let [x0, x1, y0, y1] = bbox;
    if !(x1 > x0 && y1 > y0) || bbox.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("degenerate box {bbox:?}")));
    }
    Ok(())
}

fn grid_vertices(nx: usize, ny: usize, [x0, x1, y0, y1]: [f64; 4]) -> Vec<Point> {
    let mut v = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            v.push(Point::new(
                x0 + (x1 - x0) * i as f64 / nx as f64,
                y0 + (y1 - y0) * j as f64 / ny as f64,
            ));
        }
    }
    v
}

/// Horizontal then vertical grid edges; returns the edge list and index helpers.
fn grid_edges(
    nx: usize,
    ny: usize,
) -> (
    Vec<[usize; 2]>,
    impl Fn(usize, usize) -> usize,
    impl Fn(usize, usize) -> usize,
) {
    let vid = move |i: usize, j: usize| j * (nx + 1) + i;
    let mut faces = Vec::new();
    for j in 0..=ny {
        for i in 0..nx {
            faces.push([vid(i, j), vid(i + 1, j)]);
        }
    }
    for j in 0..ny {
        for i in 0..=nx {
            faces.push([vid(i, j), vid(i, j + 1)]);
        }
    }
    let horizontal = move |i: usize, j: usize| j * nx + i;
    let vertical = move |i: usize, j: usize| (ny + 1) * nx + j * (nx + 1) + i;
    (faces, horizontal, vertical)
}

/// Uniform `nx` x `ny` rectangular mesh of the box `[x0, x1] x [y0, y1]`.
pub fn cartesian(nx: usize, ny: usize, bbox: [f64; 4]) -> Result<PolytopalMesh> {
    check_grid(nx, ny, bbox)?;
    let vertices = grid_vertices(nx, ny, bbox);
    let (faces, hz, vt) = grid_edges(nx, ny);
    let mut cells = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            cells.push(vec![hz(i, j), vt(i + 1, j), hz(i, j + 1), vt(i, j)]);
        }
    }
    let n = cells.len();
    PolytopalMesh::new(vertices, faces, cells, vec![None; n])
}

/// Uniform triangulation: each rectangle of the `nx` x `ny` grid is cut along
/// its lower-left to upper-right diagonal.
pub fn simplicial(nx: usize, ny: usize, bbox: [f64; 4]) -> Result<PolytopalMesh> {
    check_grid(nx, ny, bbox)?;
    let vertices = grid_vertices(nx, ny, bbox);
    let (mut faces, hz, vt) = grid_edges(nx, ny);
    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut cells = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let diag = faces.len();
            faces.push([vid(i, j), vid(i + 1, j + 1)]);
            cells.push(vec![hz(i, j), vt(i + 1, j), diag]);
            cells.push(vec![diag, hz(i, j + 1), vt(i, j)]);
        }
    }
    let n = cells.len();
    PolytopalMesh::new(vertices, faces, cells, vec![None; n])
}

/// Moves every interior vertex by up to `amplitude` times the length of its
/// shortest incident edge in each coordinate. Deterministic for a given seed.
///
/// Cell centers are reset to the new centroids. Fails if the result is not a
/// valid mesh, naming the offending cell and face.
pub fn perturb(mesh: &PolytopalMesh, amplitude: f64, seed: u64) -> Result<PolytopalMesh> {
    if !(0.0..=MAX_PERTURBATION).contains(&amplitude) {
        return Err(Error::InvalidArgument(format!(
            "perturbation amplitude {amplitude} outside [0, {MAX_PERTURBATION}]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vertices = mesh.vertices().to_vec();
    for (v, p) in vertices.iter_mut().enumerate() {
        // Draw for every vertex so the stream does not depend on the boundary layout.
        let shift = Point::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0));
        if mesh.is_boundary_vertex(v) {
            continue;
        }
        let h = mesh
            .vertex_faces(v)
            .iter()
            .map(|&f| mesh.faces()[f].measure)
            .fold(f64::INFINITY, f64::min);
        *p += shift * (amplitude * h);
    }
    let faces = mesh.faces().iter().map(|f| f.vertices).collect();
    let cells = mesh.cells().iter().map(|c| c.faces.clone()).collect();
    PolytopalMesh::new(vertices, faces, cells, vec![None; mesh.n_cells()])
}

/// A mesh whose faces are the halves σ_v of the faces of a parent mesh.
#[derive(Debug, Clone)]
pub struct SplitFaces {
    pub mesh: PolytopalMesh,
    /// `half[σ][i]` is the half of parent face σ adjacent to its i-th vertex.
    pub half: Vec<[usize; 2]>,
}

/// Splits every face at its midpoint, keeping the parent cell centers.
pub fn split_faces(mesh: &PolytopalMesh) -> Result<SplitFaces> {
    let nv = mesh.n_vertices();
    let mut vertices = mesh.vertices().to_vec();
    let mut faces = Vec::with_capacity(2 * mesh.n_faces());
    let mut half = Vec::with_capacity(mesh.n_faces());
    for (s, f) in mesh.faces().iter().enumerate() {
        vertices.push(f.center);
        let m = nv + s;
        half.push([faces.len(), faces.len() + 1]);
        faces.push([f.vertices[0], m]);
        faces.push([m, f.vertices[1]]);
    }
    let cells = mesh
        .cells()
        .iter()
        .map(|c| c.faces.iter().flat_map(|&s| half[s]).collect())
        .collect();
    let centers = mesh.cells().iter().map(|c| Some(c.center)).collect();
    Ok(SplitFaces {
        mesh: PolytopalMesh::new(vertices, faces, cells, centers)?,
        half,
    })
}

/// Triangulation of each cell K into the triangles (x_K, a, b) over its faces.
///
/// Vertex `n_vertices + K` is the center of parent cell K; sub-cell
/// `offset[K] + i` is the triangle over local face i of K.
pub fn sub_triangulation(mesh: &PolytopalMesh) -> Result<(PolytopalMesh, Vec<usize>)> {
    let nv = mesh.n_vertices();
    let mut vertices = mesh.vertices().to_vec();
    vertices.extend(mesh.cells().iter().map(|c| c.center));
    let mut faces: Vec<[usize; 2]> = mesh.faces().iter().map(|f| f.vertices).collect();
    let mut cells = Vec::new();
    let mut offset = Vec::with_capacity(mesh.n_cells());
    for (k, c) in mesh.cells().iter().enumerate() {
        offset.push(cells.len());
        let n = c.vertices.len();
        let first_spoke = faces.len();
        for &v in &c.vertices {
            faces.push([nv + k, v]);
        }
        for i in 0..n {
            cells.push(vec![c.faces[i], first_spoke + i, first_spoke + (i + 1) % n]);
        }
    }
    let n = cells.len();
    Ok((
        PolytopalMesh::new(vertices, faces, cells, vec![None; n])?,
        offset,
    ))
}
