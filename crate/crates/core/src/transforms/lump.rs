use nalgebra::{DMatrix, DVector};

use crate::gd::GradientDiscretisation;
use crate::linalg::{pencil_max, EigenPath, Triplets};
use crate::{Error, Result};

/// Disjoint sets V_i given region by region: region r lies in V_{labels[r]}.
#[derive(Debug, Clone, PartialEq)]
pub struct LumpingPartition {
    labels: Vec<usize>,
}

impl LumpingPartition {
    pub fn new(labels: Vec<usize>) -> Self {
        LumpingPartition { labels }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

/// Replaces Π_D by the piecewise-constant reconstruction `Σ_i v_i χ_{V_i}`;
/// ∇_D and the dof space are unchanged.
pub fn mass_lump(
    gd: &GradientDiscretisation,
    partition: &LumpingPartition,
) -> Result<GradientDiscretisation> {
    let labels = partition.labels();
    if labels.len() != gd.regions().len() {
        return Err(Error::Transform(format!(
            "partition labels {} regions, discretisation has {}",
            labels.len(),
            gd.regions().len()
        )));
    }
    let mut out = gd.clone();
    for (r, (region, &label)) in out.regions_mut().iter_mut().zip(labels).enumerate() {
        let Some(j) = region.dofs.iter().position(|&d| d == label) else {
            return Err(Error::Transform(format!(
                "region {r} is assigned to dof {label}, which is not one of its local dofs"
            )));
        };
        region.pi.fill(0.0);
        region.pi.column_mut(j).fill(1.0);
    }
    Ok(out.with_piecewise_constant(labels.to_vec()))
}

/// ω = max over v of ‖Π_D v − Π_D* v‖ / ‖∇_D v‖ for two discretisations
/// sharing the dof space, gradient and quadrature layout.
pub fn reconstruction_distance(
    gd: &GradientDiscretisation,
    other: &GradientDiscretisation,
    path: EigenPath,
) -> Result<f64> {
    gd.check_same_layout(other)?;
    for (a, b) in gd.regions().iter().zip(other.regions()) {
        let scale = a.gx.amax().max(a.gy.amax()).max(1.0);
        if (&a.gx - &b.gx).amax() > 1e-12 * scale || (&a.gy - &b.gy).amax() > 1e-12 * scale {
            return Err(Error::DofMismatch("gradient reconstructions differ".into()));
        }
    }
    let n = gd.n_free();
    let mut t = Triplets::new(n, n);
    for (a, b) in gd.regions().iter().zip(other.regions()) {
        let diff = &a.pi - &b.pi;
        let w = DMatrix::from_diagonal(&DVector::from_column_slice(&a.weights));
        let idx: Vec<Option<usize>> = a.dofs.iter().map(|&d| gd.free_index(d)).collect();
        t.push_block(&idx, &idx, &(diff.transpose() * w * diff));
    }
    let lambda = pencil_max(&t.to_csr(), &gd.stiffness_matrix(), path)?;
    Ok(lambda.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::simplicial;
    use crate::schemes::build_p1;

    #[test]
    fn lumping_requires_aligned_labels() {
        let mesh = simplicial(2, 2, [0.0, 1.0, 0.0, 1.0]).unwrap();
        let gd = build_p1(&mesh, 1, false).unwrap();
        assert!(mass_lump(&gd, &LumpingPartition::new(vec![0; 3])).is_err());
        let far = vec![gd.n_dofs() - 1; gd.regions().len()];
        assert!(mass_lump(&gd, &LumpingPartition::new(far)).is_err());
    }

    #[test]
    fn distance_to_itself_is_zero() {
        let mesh = simplicial(3, 3, [0.0, 1.0, 0.0, 1.0]).unwrap();
        let gd = build_p1(&mesh, 1, false).unwrap();
        assert!(reconstruction_distance(&gd, &gd, EigenPath::Dense).unwrap() < 1e-12);
        let p2 = build_p1(&mesh, 2, false).unwrap();
        assert!(reconstruction_distance(&gd, &p2, EigenPath::Dense).is_err());
    }
}
