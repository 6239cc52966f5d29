use super::{build_p1, require_mesh, SchemeKind};
use crate::gd::GradientDiscretisation;
use crate::mesh::{sub_triangulation, PolytopalMesh};
use crate::Result;

/// P1 on the sub-triangulation {(x_K, a, b)}, before lumping.
///
/// Dofs are the mesh vertices followed by one dof per cell center. Regions
/// keep the parent cell index; LLE parts are the sub-triangles.
pub fn build_vag2d_unlumped(mesh: &PolytopalMesh) -> Result<GradientDiscretisation> {
    build(mesh, false)
}

/// VAG: P1 on the sub-triangulation with Π_D lumped onto barycentric thirds
/// of every sub-triangle (one third to x_K, one to each vertex).
pub fn build_vag2d(mesh: &PolytopalMesh) -> Result<GradientDiscretisation> {
    build(mesh, true)
}

fn build(mesh: &PolytopalMesh, lumped: bool) -> Result<GradientDiscretisation> {
    require_mesh(SchemeKind::Vag2d, mesh)?;
    let (sub, offset) = sub_triangulation(mesh)?;
    let mut gd = build_p1(&sub, 1, lumped)?;
    let mut parent = vec![0; sub.n_cells()];
    for (k, &o) in offset.iter().enumerate() {
        let end = offset.get(k + 1).copied().unwrap_or(sub.n_cells());
        parent[o..end].fill(k);
    }
    for r in gd.regions_mut() {
        r.cell = parent[r.cell];
    }
    gd.set_kind(SchemeKind::Vag2d);
    gd.h = mesh.stats().h;
    Ok(gd)
}
