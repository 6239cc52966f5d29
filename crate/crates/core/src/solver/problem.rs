use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::mesh::Point;
use crate::{Error, Result};

/// A monotone nonlinearity β with β(s) s ≥ 0 and its derivative.
#[derive(Clone, Copy)]
pub struct Nonlinearity {
    pub value: fn(f64) -> f64,
    pub derivative: fn(f64) -> f64,
}

/// −div(A ∇u) + β(u) = f in the unit square, u = 0 on the boundary.
#[derive(Clone, Copy)]
pub struct DiffusionProblem {
    pub id: ProblemId,
    pub tensor: fn(Point) -> Matrix2<f64>,
    pub source: fn(Point) -> f64,
    pub beta: Option<Nonlinearity>,
    pub exact: Option<fn(Point) -> f64>,
    pub exact_gradient: Option<fn(Point) -> Vector2<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemId {
    /// ū = sin πx sin πy, A = I.
    Sin2d,
    /// ū = sin πx sin πy, A = diag(1, 100).
    Aniso,
    /// A = κ I with κ = 1 for x < 1/2 and 10 for x > 1/2,
    /// ū = sin 2πx sin πy / κ (flux-continuous across x = 1/2).
    Hetero,
    /// ū = sin πx sin πy, A = I, β(s) = s³.
    Cubic,
}

impl ProblemId {
    pub const ALL: [ProblemId; 4] = [
        ProblemId::Sin2d,
        ProblemId::Aniso,
        ProblemId::Hetero,
        ProblemId::Cubic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProblemId::Sin2d => "sin2d",
            ProblemId::Aniso => "aniso",
            ProblemId::Hetero => "hetero",
            ProblemId::Cubic => "cubic",
        }
    }

    pub fn problem(self) -> DiffusionProblem {
        match self {
            ProblemId::Sin2d => DiffusionProblem {
                id: self,
                tensor: |_| Matrix2::identity(),
                source: |x| 2.0 * PI * PI * sin_sin(x),
                beta: None,
                exact: Some(sin_sin),
                exact_gradient: Some(sin_sin_gradient),
            },
            ProblemId::Aniso => DiffusionProblem {
                id: self,
                tensor: |_| Matrix2::new(1.0, 0.0, 0.0, 100.0),
                source: |x| 101.0 * PI * PI * sin_sin(x),
                beta: None,
                exact: Some(sin_sin),
                exact_gradient: Some(sin_sin_gradient),
            },
            ProblemId::Hetero => DiffusionProblem {
                id: self,
                tensor: |x| Matrix2::identity() * kappa(x),
                source: |x| 5.0 * PI * PI * (2.0 * PI * x.x).sin() * (PI * x.y).sin(),
                beta: None,
                exact: Some(|x| (2.0 * PI * x.x).sin() * (PI * x.y).sin() / kappa(x)),
                exact_gradient: Some(|x| {
                    Vector2::new(
                        2.0 * PI * (2.0 * PI * x.x).cos() * (PI * x.y).sin(),
                        PI * (2.0 * PI * x.x).sin() * (PI * x.y).cos(),
                    ) / kappa(x)
                }),
            },
            ProblemId::Cubic => DiffusionProblem {
                id: self,
                tensor: |_| Matrix2::identity(),
                source: |x| 2.0 * PI * PI * sin_sin(x) + sin_sin(x).powi(3),
                beta: Some(CUBE),
                exact: Some(sin_sin),
                exact_gradient: Some(sin_sin_gradient),
            },
        }
    }
}

/// β(s) = s³.
pub const CUBE: Nonlinearity = Nonlinearity {
    value: |s| s * s * s,
    derivative: |s| 3.0 * s * s,
};

fn sin_sin(x: Point) -> f64 {
    (PI * x.x).sin() * (PI * x.y).sin()
}

fn sin_sin_gradient(x: Point) -> Vector2<f64> {
    Vector2::new(
        PI * (PI * x.x).cos() * (PI * x.y).sin(),
        PI * (PI * x.x).sin() * (PI * x.y).cos(),
    )
}

fn kappa(x: Point) -> f64 {
    if x.x < 0.5 {
        1.0
    } else {
        10.0
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProblemId::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown problem '{s}'")))
    }
}

impl DiffusionProblem {
    /// Checks symmetry and positive definiteness of A at the given points.
    pub fn check_tensor(&self, points: impl Iterator<Item = Point>) -> Result<()> {
        for x in points {
            let a = (self.tensor)(x);
            let sym = (a[(0, 1)] - a[(1, 0)]).abs();
            let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
            if sym > 1e-12 * a.amax() || a[(0, 0)] <= 0.0 || det <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "diffusion tensor is not symmetric positive definite at ({}, {})",
                    x.x, x.y
                )));
            }
        }
        Ok(())
    }
}
