//! The gradient discretisation type and its quadrature representation.
//!
//! A discretisation owns a list of integration regions. Each region is a
//! triangle with a fixed degree-4 rule; it stores the values of Π_D e_i and
//! ∇_D e_i at its nodes for the local dofs i. Bilinear forms, norms and the
//! measures are all computed from these tables.

mod lle;

pub use lle::{cube_norm, lle_gradient_bound_check, lle_regularity, BoundCheck, LleRegularity};

use nalgebra::{DMatrix, Matrix2, Vector2};

use crate::linalg::{CsrMatrix, Triplets};
use crate::mesh::{Point, PolytopalMesh};
use crate::schemes::SchemeKind;
use crate::{Error, Result};

/// Linearity and partition-of-unity tolerance.
pub const IDENTITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Region {
    pub cell: usize,
    /// Index of the LLE partition element containing this region.
    pub part: usize,
    /// Global dof indices, including boundary dofs.
    pub dofs: Vec<usize>,
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    /// `pi[(q, j)] = (Π_D e_{dofs[j]})(points[q])`.
    pub pi: DMatrix<f64>,
    pub gx: DMatrix<f64>,
    pub gy: DMatrix<f64>,
}

impl Region {
    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Gradient of the local combination `v` (indexed like `dofs`) at node `q`.
    pub fn grad_at(&self, q: usize, v: &[f64]) -> Vector2<f64> {
        let mut g = Vector2::zeros();
        for (j, &vj) in v.iter().enumerate() {
            g.x += self.gx[(q, j)] * vj;
            g.y += self.gy[(q, j)] * vj;
        }
        g
    }

    pub fn value_at(&self, q: usize, v: &[f64]) -> f64 {
        v.iter()
            .enumerate()
            .map(|(j, vj)| self.pi[(q, j)] * vj)
            .sum()
    }
}

/// An element U of the LLE partition.
#[derive(Debug, Clone)]
pub struct LlePart {
    pub triangles: Vec<[Point; 3]>,
    pub diameter: f64,
    /// The dof set I_U.
    pub dofs: Vec<usize>,
    /// Values of the local gradient map 𝒢_U (2 x |I_U|) at points whose
    /// convex hull covers U. A single sample when 𝒢_U is constant.
    pub gradient_samples: Vec<DMatrix<f64>>,
}

/// Control of a discretisation by a polytopal toolbox.
#[derive(Debug, Clone)]
pub struct Control {
    pub toolbox: PolytopalMesh,
    /// Φ: rows are toolbox dofs (cells, then faces), columns are all dofs.
    pub map: CsrMatrix,
}

#[derive(Debug, Clone)]
pub struct GradientDiscretisation {
    pub kind: SchemeKind,
    /// Mesh size of the underlying mesh.
    pub h: f64,
    points: Vec<Point>,
    boundary: Vec<bool>,
    free: Vec<Option<usize>>,
    n_free: usize,
    regions: Vec<Region>,
    parts: Vec<LlePart>,
    piecewise_constant: Option<Vec<usize>>,
    control: Option<Control>,
    zeta: Option<f64>,
}

impl GradientDiscretisation {
    /// Assembles a discretisation and checks its structural invariants.
    pub fn new(
        kind: SchemeKind,
        h: f64,
        points: Vec<Point>,
        boundary: Vec<bool>,
        regions: Vec<Region>,
        parts: Vec<LlePart>,
    ) -> Result<Self> {
        if points.len() != boundary.len() {
            return Err(Error::InvalidArgument(
                "dof points and boundary mask differ in length".into(),
            ));
        }
        let n = points.len();
        for (r, reg) in regions.iter().enumerate() {
            let np = reg.points.len();
            let nd = reg.dofs.len();
            if reg.weights.len() != np
                || reg.pi.shape() != (np, nd)
                || reg.gx.shape() != (np, nd)
                || reg.gy.shape() != (np, nd)
            {
                return Err(Error::InvalidArgument(format!(
                    "region {r} has inconsistent table shapes"
                )));
            }
            if reg.dofs.iter().any(|&d| d >= n) || reg.part >= parts.len() {
                return Err(Error::InvalidArgument(format!(
                    "region {r} references a missing dof or part"
                )));
            }
        }
        let mut free = vec![None; n];
        let mut n_free = 0;
        for (i, &b) in boundary.iter().enumerate() {
            if !b {
                free[i] = Some(n_free);
                n_free += 1;
            }
        }
        Ok(GradientDiscretisation {
            kind,
            h,
            points,
            boundary,
            free,
            n_free,
            regions,
            parts,
            piecewise_constant: None,
            control: None,
            zeta: None,
        })
    }

    pub(crate) fn with_control(mut self, control: Control) -> Self {
        self.control = Some(control);
        self
    }

    pub(crate) fn with_zeta(mut self, zeta: f64) -> Self {
        self.zeta = Some(zeta);
        self
    }

    /// Marks the reconstruction as piecewise constant: region r lies in V_{labels[r]}.
    pub(crate) fn with_piecewise_constant(mut self, labels: Vec<usize>) -> Self {
        self.piecewise_constant = Some(labels);
        self
    }

    pub(crate) fn set_kind(&mut self, kind: SchemeKind) {
        self.kind = kind;
    }

    pub(crate) fn regions_mut(&mut self) -> &mut [Region] {
        &mut self.regions
    }

    /// Total number of dofs, boundary included.
    pub fn n_dofs(&self) -> usize {
        self.points.len()
    }

    /// Number of interior dofs, i.e. the dimension of X_{D,0}.
    pub fn n_free(&self) -> usize {
        self.n_free
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary[i]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn free_index(&self, i: usize) -> Option<usize> {
        self.free[i]
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn parts(&self) -> &[LlePart] {
        &self.parts
    }

    pub fn piecewise_constant(&self) -> Option<&[usize]> {
        self.piecewise_constant.as_deref()
    }

    pub fn is_piecewise_constant(&self) -> bool {
        self.piecewise_constant.is_some()
    }

    pub fn control(&self) -> Option<&Control> {
        self.control.as_ref()
    }

    /// Stabilisation constant ζ_D of hybrid-type schemes.
    pub fn zeta(&self) -> Option<f64> {
        self.zeta
    }

    pub fn n_nodes(&self) -> usize {
        self.regions.iter().map(|r| r.n_points()).sum()
    }

    /// Every quadrature node as `(point, weight)`, regions concatenated.
    pub fn nodes(&self) -> impl Iterator<Item = (Point, f64)> + '_ {
        self.regions
            .iter()
            .flat_map(|r| r.points.iter().copied().zip(r.weights.iter().copied()))
    }

    /// Expands interior values to a full dof vector with zero boundary entries.
    pub fn expand(&self, free: &[f64]) -> Vec<f64> {
        assert_eq!(free.len(), self.n_free);
        self.free
            .iter()
            .map(|f| f.map_or(0.0, |k| free[k]))
            .collect()
    }

    /// Interior entries of a full dof vector.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        full.iter()
            .zip(&self.boundary)
            .filter(|(_, &b)| !b)
            .map(|(v, _)| *v)
            .collect()
    }

    fn local(&self, r: &Region, full: &[f64]) -> Vec<f64> {
        r.dofs.iter().map(|&d| full[d]).collect()
    }

    /// Reconstructed values and gradients of a full dof vector at every node.
    /// Boundary entries are used as given.
    pub fn evaluate_full(&self, full: &[f64]) -> Result<QuadratureField> {
        if full.len() != self.n_dofs() {
            return Err(Error::DofMismatch(format!(
                "vector of length {} for {} dofs",
                full.len(),
                self.n_dofs()
            )));
        }
        let mut values = Vec::with_capacity(self.n_nodes());
        let mut grads = Vec::with_capacity(self.n_nodes());
        for r in &self.regions {
            let v = self.local(r, full);
            for q in 0..r.n_points() {
                values.push(r.value_at(q, &v));
                grads.push(r.grad_at(q, &v));
            }
        }
        Ok(QuadratureField { values, grads })
    }

    pub fn evaluate(&self, v: &DofVector) -> Result<QuadratureField> {
        self.evaluate_full(&v.values)
    }

    /// Point values φ(x_i) at every dof, boundary dofs included.
    pub fn interpolate_full(&self, phi: impl Fn(Point) -> f64) -> Vec<f64> {
        self.points.iter().map(|&x| phi(x)).collect()
    }

    /// The interpolant in X_{D,0}: point values with boundary dofs set to zero.
    pub fn interpolate(&self, phi: impl Fn(Point) -> f64) -> DofVector {
        let values = self
            .points
            .iter()
            .zip(&self.boundary)
            .map(|(&x, &b)| if b { 0.0 } else { phi(x) })
            .collect();
        DofVector { values }
    }

    fn assemble(&self, local: impl Fn(&Region) -> DMatrix<f64>) -> CsrMatrix {
        let mut t = Triplets::new(self.n_free, self.n_free);
        for r in &self.regions {
            let idx: Vec<Option<usize>> = r.dofs.iter().map(|&d| self.free[d]).collect();
            t.push_block(&idx, &idx, &local(r));
        }
        t.to_csr()
    }

    /// ∫ Π_D e_i Π_D e_j over interior dofs.
    pub fn mass_matrix(&self) -> CsrMatrix {
        self.assemble(|r| {
            let w = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&r.weights));
            r.pi.transpose() * w * &r.pi
        })
    }

    /// ∫ ∇_D e_i · ∇_D e_j over interior dofs.
    pub fn stiffness_matrix(&self) -> CsrMatrix {
        self.assemble(|r| {
            let w = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&r.weights));
            r.gx.transpose() * &w * &r.gx + r.gy.transpose() * &w * &r.gy
        })
    }

    /// ∫ A ∇_D e_j · ∇_D e_i with the tensor sampled at the nodes.
    pub fn weighted_stiffness(&self, tensor: impl Fn(Point) -> Matrix2<f64>) -> CsrMatrix {
        self.assemble(|r| {
            let n = r.dofs.len();
            let mut m = DMatrix::zeros(n, n);
            for q in 0..r.n_points() {
                let a = tensor(r.points[q]) * r.weights[q];
                for i in 0..n {
                    let gi = Vector2::new(r.gx[(q, i)], r.gy[(q, i)]);
                    for j in 0..n {
                        let gj = Vector2::new(r.gx[(q, j)], r.gy[(q, j)]);
                        m[(i, j)] += gi.dot(&(a * gj));
                    }
                }
            }
            m
        })
    }

    /// ∫ s Π_D e_i + v · ∇_D e_i for every interior dof i, with `(s, v)`
    /// sampled at the nodes.
    pub fn linear_form(&self, field: impl Fn(Point) -> (f64, Vector2<f64>)) -> Vec<f64> {
        let mut out = vec![0.0; self.n_free];
        for r in &self.regions {
            for q in 0..r.n_points() {
                let (s, v) = field(r.points[q]);
                let w = r.weights[q];
                for (j, &d) in r.dofs.iter().enumerate() {
                    if let Some(k) = self.free[d] {
                        out[k] += w * (s * r.pi[(q, j)] + v.x * r.gx[(q, j)] + v.y * r.gy[(q, j)]);
                    }
                }
            }
        }
        out
    }

    /// ∫_K ∇_D e_j for every cell K: a `2 * n_cells` by `n_dofs` matrix
    /// (rows 2K and 2K + 1 hold the two components).
    pub fn cell_gradient_integrals(&self, n_cells: usize) -> CsrMatrix {
        let mut t = Triplets::new(2 * n_cells, self.n_dofs());
        for r in &self.regions {
            for (j, &d) in r.dofs.iter().enumerate() {
                let (mut sx, mut sy) = (0.0, 0.0);
                for q in 0..r.n_points() {
                    sx += r.weights[q] * r.gx[(q, j)];
                    sy += r.weights[q] * r.gy[(q, j)];
                }
                t.push(2 * r.cell, d, sx);
                t.push(2 * r.cell + 1, d, sy);
            }
        }
        t.to_csr()
    }

    /// Checks that two discretisations share the dof space and quadrature layout.
    pub fn check_same_layout(&self, other: &Self) -> Result<()> {
        if self.n_dofs() != other.n_dofs() || self.boundary != other.boundary {
            return Err(Error::DofMismatch("different dof spaces".into()));
        }
        if self.regions.len() != other.regions.len()
            || self
                .regions
                .iter()
                .zip(&other.regions)
                .any(|(a, b)| a.dofs != b.dofs || a.points != b.points || a.weights != b.weights)
        {
            return Err(Error::DofMismatch("different quadrature layouts".into()));
        }
        Ok(())
    }
}

/// A vector of X_{D,0}: one entry per dof, boundary entries equal to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DofVector {
    values: Vec<f64>,
}

impl DofVector {
    pub fn zeros(gd: &GradientDiscretisation) -> Self {
        DofVector {
            values: vec![0.0; gd.n_dofs()],
        }
    }

    pub fn from_full(gd: &GradientDiscretisation, values: Vec<f64>) -> Result<Self> {
        if values.len() != gd.n_dofs() {
            return Err(Error::DofMismatch(format!(
                "vector of length {} for {} dofs",
                values.len(),
                gd.n_dofs()
            )));
        }
        if let Some(i) = (0..values.len()).find(|&i| gd.is_boundary(i) && values[i] != 0.0) {
            return Err(Error::DofMismatch(format!("boundary dof {i} is not zero")));
        }
        Ok(DofVector { values })
    }

    pub fn from_free(gd: &GradientDiscretisation, free: &[f64]) -> Self {
        DofVector {
            values: gd.expand(free),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn free(&self, gd: &GradientDiscretisation) -> Vec<f64> {
        gd.restrict(&self.values)
    }
}

/// Values of Π_D v and ∇_D v at every quadrature node.
#[derive(Debug, Clone)]
pub struct QuadratureField {
    pub values: Vec<f64>,
    pub grads: Vec<Vector2<f64>>,
}

/// L^p norm of node values for the node weights of `gd`.
pub fn lp_norm(gd: &GradientDiscretisation, values: &[f64], p: f64) -> Result<f64> {
    if p < 1.0 {
        return Err(Error::InvalidArgument(format!("p = {p} < 1")));
    }
    if values.len() != gd.n_nodes() {
        return Err(Error::DofMismatch(
            "field does not match the quadrature layout".into(),
        ));
    }
    let s: f64 = gd
        .nodes()
        .zip(values)
        .map(|((_, w), v)| w * v.abs().powf(p))
        .sum();
    Ok(s.powf(1.0 / p))
}

/// L^p norm of the Euclidean length of node vectors.
pub fn lp_norm_vec(gd: &GradientDiscretisation, values: &[Vector2<f64>], p: f64) -> Result<f64> {
    let lengths: Vec<f64> = values.iter().map(|v| v.norm()).collect();
    lp_norm(gd, &lengths, p)
}
