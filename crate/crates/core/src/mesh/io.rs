//! JSON mesh format.
//!
//! ```json
//! {"dim": 2, "vertices": [[x, y], ...],
//!  "faces": [{"v": [i, j], "cells": [k] | [k, l]}, ...],
//!  "cells": [{"faces": [...], "center": [x, y]}, ...]}
//! ```
//!
//! Only topology, coordinates and optional centers are read; every derived
//! quantity is recomputed.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Point, PolytopalMesh};
use crate::{Error, Result};

#[derive(Serialize, Deserialize)]
struct MeshFile {
    dim: usize,
    vertices: Vec<[f64; 2]>,
    faces: Vec<FaceRecord>,
    cells: Vec<CellRecord>,
}

#[derive(Serialize, Deserialize)]
struct FaceRecord {
    v: [usize; 2],
    cells: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct CellRecord {
    faces: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    center: Option<[f64; 2]>,
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<PolytopalMesh> {
    let text = fs::read_to_string(path)?;
    parse_mesh(&text)
}

pub(crate) fn parse_mesh(text: &str) -> Result<PolytopalMesh> {
    let file: MeshFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if file.dim != 2 {
        return Err(Error::Parse(format!("unsupported dimension {}", file.dim)));
    }
    for (i, f) in file.faces.iter().enumerate() {
        if f.cells.is_empty() || f.cells.len() > 2 {
            return Err(Error::Parse(format!(
                "face {i} references {} cells; expected 1 or 2",
                f.cells.len()
            )));
        }
        for &k in &f.cells {
            if !file.cells.get(k).is_some_and(|c| c.faces.contains(&i)) {
                return Err(Error::Parse(format!(
                    "face {i} lists cell {k}, which does not list it back"
                )));
            }
        }
    }
    for (k, c) in file.cells.iter().enumerate() {
        for &f in &c.faces {
            if !file.faces.get(f).is_some_and(|r| r.cells.contains(&k)) {
                return Err(Error::Parse(format!(
                    "cell {k} lists face {f}, which does not list it back"
                )));
            }
        }
    }
    let vertices = file
        .vertices
        .iter()
        .map(|&[x, y]| Point::new(x, y))
        .collect();
    let faces = file.faces.iter().map(|f| f.v).collect();
    let centers = file
        .cells
        .iter()
        .map(|c| c.center.map(|[x, y]| Point::new(x, y)))
        .collect();
    let cells = file.cells.into_iter().map(|c| c.faces).collect();
    PolytopalMesh::new(vertices, faces, cells, centers)
}

pub(crate) fn format_mesh(mesh: &PolytopalMesh) -> Result<String> {
    let file = MeshFile {
        dim: 2,
        vertices: mesh.vertices().iter().map(|p| [p.x, p.y]).collect(),
        faces: mesh
            .faces()
            .iter()
            .map(|f| FaceRecord {
                v: f.vertices,
                cells: f.cells.clone(),
            })
            .collect(),
        cells: mesh
            .cells()
            .iter()
            .map(|c| CellRecord {
                faces: c.faces.clone(),
                center: (c.center != c.centroid).then_some([c.center.x, c.center.y]),
            })
            .collect(),
    };
    Ok(serde_json::to_string(&file)?)
}

/// Writes the mesh as JSON. Floats use a shortest round-trip representation,
/// so reading the file back reproduces every coordinate bit for bit.
pub fn write_mesh(mesh: &PolytopalMesh, path: impl AsRef<Path>) -> Result<()> {
    crate::cli::write_atomic(path.as_ref(), format_mesh(mesh)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{cartesian, perturb, simplicial};

    #[test]
    fn round_trip_is_exact() {
        let m = perturb(&simplicial(3, 3, [0.0, 1.0, 0.0, 1.0]).unwrap(), 0.2, 3).unwrap();
        let back = parse_mesh(&format_mesh(&m).unwrap()).unwrap();
        assert_eq!(m.vertices(), back.vertices());
        for (a, b) in m.cells().iter().zip(back.cells()) {
            assert_eq!(a.measure, b.measure);
            assert_eq!(a.center, b.center);
            assert_eq!(a.distances, b.distances);
        }
    }

    #[test]
    fn explicit_center_survives() {
        let m = cartesian(1, 1, [0.0, 1.0, 0.0, 1.0]).unwrap();
        let m = m.with_centers(&[Point::new(0.3, 0.6)]).unwrap();
        let back = parse_mesh(&format_mesh(&m).unwrap()).unwrap();
        assert_eq!(back.cells()[0].center, Point::new(0.3, 0.6));
    }

    #[test]
    fn face_with_three_cells_is_a_parse_error() {
        let text = r#"{"dim":2,"vertices":[[0,0],[1,0],[0,1]],
            "faces":[{"v":[0,1],"cells":[0,1,2]},{"v":[1,2],"cells":[0]},{"v":[2,0],"cells":[0]}],
            "cells":[{"faces":[0,1,2]}]}"#;
        assert!(matches!(parse_mesh(text), Err(Error::Parse(_))));
    }

    #[test]
    fn inconsistent_adjacency_is_a_parse_error() {
        let text = r#"{"dim":2,"vertices":[[0,0],[1,0],[0,1]],
            "faces":[{"v":[0,1],"cells":[0]},{"v":[1,2],"cells":[0]},{"v":[2,0],"cells":[0]}],
            "cells":[{"faces":[0,1]}]}"#;
        assert!(matches!(parse_mesh(text), Err(Error::Parse(_))));
        assert!(matches!(parse_mesh("{\"dim\":3}"), Err(Error::Parse(_))));
    }
}
