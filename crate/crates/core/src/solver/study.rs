use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{error_report, solve, DiffusionProblem};
use crate::linalg::EigenPath;
use crate::measures::coercivity_constant;
use crate::mesh::{cartesian, perturb, simplicial, PolytopalMesh};
use crate::schemes::{build, SchemeKind};
use crate::{Error, Result};

pub const CSV_HEADER: &str =
    "level,h,dofs,errL2,errH1,orderL2,orderH1,C_D,W_D,S_D_lo,S_D_hi,wall_ms";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshFamily {
    Simplicial,
    Cartesian,
}

impl MeshFamily {
    /// Level `l` has `base · 2^l` cells per direction on the unit square.
    pub fn mesh(
        self,
        base: usize,
        level: usize,
        perturbation: f64,
        seed: u64,
    ) -> Result<PolytopalMesh> {
        let n = base
            .checked_mul(1usize.checked_shl(level as u32).unwrap_or(0))
            .filter(|&n| n > 0)
            .ok_or_else(|| {
                Error::InvalidArgument(format!("level {level} overflows the mesh size"))
            })?;
        let bbox = [0.0, 1.0, 0.0, 1.0];
        let mesh = match self {
            MeshFamily::Simplicial => simplicial(n, n, bbox)?,
            MeshFamily::Cartesian => cartesian(n, n, bbox)?,
        };
        if perturbation > 0.0 {
            perturb(&mesh, perturbation, seed.wrapping_add(level as u64))
        } else {
            Ok(mesh)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyOptions {
    pub family: MeshFamily,
    pub base: usize,
    pub levels: usize,
    pub perturbation: f64,
    pub seed: u64,
    pub eigen_path: EigenPath,
    /// Compute C_D at every level.
    pub coercivity: bool,
    /// Record wall-clock times; otherwise `wall_ms` is 0 so outputs are
    /// reproducible byte for byte.
    pub record_wall_time: bool,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions {
            family: MeshFamily::Simplicial,
            base: 4,
            levels: 4,
            perturbation: 0.0,
            seed: 0,
            eigen_path: EigenPath::Auto,
            coercivity: true,
            record_wall_time: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub level: usize,
    pub h: f64,
    pub dofs: usize,
    pub err_l2: f64,
    pub err_h1: f64,
    pub order_l2: Option<f64>,
    pub order_h1: Option<f64>,
    pub c_d: Option<f64>,
    pub w_d: f64,
    pub s_d_lo: f64,
    pub s_d_hi: f64,
    pub s_d_interpolant: f64,
    pub wall_ms: u64,
}

impl StudyRow {
    pub fn lhs(&self) -> f64 {
        self.err_l2 + self.err_h1
    }

    pub fn rhs(&self) -> f64 {
        self.w_d + self.s_d_interpolant
    }
}

/// Rows computed before a level failed, and the failure.
#[derive(Debug)]
pub struct StudyFailure {
    pub rows: Vec<StudyRow>,
    pub level: usize,
    pub error: Error,
}

/// log₂(e_k / e_{k+1}) between consecutive entries; `None` for the first.
pub fn observed_orders(errors: &[f64]) -> Vec<Option<f64>> {
    (0..errors.len())
        .map(|k| (k > 0).then(|| (errors[k - 1] / errors[k]).log2()))
        .collect()
}

/// Runs the scheme on every level of the family.
pub fn convergence_study(
    kind: SchemeKind,
    problem: &DiffusionProblem,
    opts: &StudyOptions,
) -> std::result::Result<Vec<StudyRow>, StudyFailure> {
    convergence_study_parallel(kind, problem, opts, 1)
}

/// As [`convergence_study`], with up to `threads` levels computed at once.
/// The table does not depend on the thread count.
pub fn convergence_study_parallel(
    kind: SchemeKind,
    problem: &DiffusionProblem,
    opts: &StudyOptions,
    threads: usize,
) -> std::result::Result<Vec<StudyRow>, StudyFailure> {
    let results = per_level(opts.levels, threads, |level| {
        study_level(kind, problem, opts, level)
    });
    let mut rows: Vec<StudyRow> = Vec::with_capacity(opts.levels);
    for (level, result) in results.into_iter().enumerate() {
        match result {
            Ok(mut row) => {
                if let Some(prev) = rows.last() {
                    row.order_l2 = Some((prev.err_l2 / row.err_l2).log2());
                    row.order_h1 = Some((prev.err_h1 / row.err_h1).log2());
                }
                rows.push(row);
            }
            Err(error) => return Err(StudyFailure { rows, level, error }),
        }
    }
    Ok(rows)
}

/// Evaluates `f(0..n)` on up to `threads` workers, returning results in order.
pub fn per_level<T: Send>(n: usize, threads: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let threads = threads.clamp(1, n.max(1));
    if threads == 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let value = f(i);
                *slots[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(value);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| {
            m.into_inner()
                .unwrap_or_else(|e| e.into_inner())
                .expect("every level is evaluated")
        })
        .collect()
}

fn study_level(
    kind: SchemeKind,
    problem: &DiffusionProblem,
    opts: &StudyOptions,
    level: usize,
) -> Result<StudyRow> {
    let start = Instant::now();
    let mesh = opts
        .family
        .mesh(opts.base, level, opts.perturbation, opts.seed)?;
    let gd = build(kind, &mesh)?;
    let u = solve(&gd, problem)?;
    let rep = error_report(&gd, &u, problem, opts.eigen_path)?;
    let c_d = if opts.coercivity {
        Some(coercivity_constant(&gd, opts.eigen_path)?)
    } else {
        None
    };
    let wall_ms = if opts.record_wall_time {
        start.elapsed().as_millis() as u64
    } else {
        0
    };
    Ok(StudyRow {
        level,
        h: gd.h,
        dofs: gd.n_free(),
        err_l2: rep.err_l2,
        err_h1: rep.err_h1,
        order_l2: None,
        order_h1: None,
        c_d,
        w_d: rep.w_d,
        s_d_lo: rep.s_d_lo,
        s_d_hi: rep.s_d_hi,
        s_d_interpolant: rep.s_d_interpolant,
        wall_ms,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// CSV with the columns of [`CSV_HEADER`].
pub fn to_csv(rows: &[StudyRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{:e},{},{:e},{:e},{},{},{},{:e},{:e},{:e},{}",
            r.level,
            r.h,
            r.dofs,
            r.err_l2,
            r.err_h1,
            opt(r.order_l2),
            opt(r.order_h1),
            opt(r.c_d),
            r.w_d,
            r.s_d_lo,
            r.s_d_hi,
            r.wall_ms
        );
    }
    s
}

/// Fits C = lhs / rhs of the error estimate on the coarsest level and
/// returns it with the ratio lhs / (C · rhs) of every level.
pub fn fit_error_constant(rows: &[StudyRow]) -> Option<(f64, Vec<f64>)> {
    let first = rows.first()?;
    let c = first.lhs() / first.rhs();
    Some((c, rows.iter().map(|r| r.lhs() / (c * r.rhs())).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::ProblemId;

    #[test]
    fn orders_of_a_geometric_sequence() {
        let o = observed_orders(&[1.0, 0.25, 0.0625]);
        assert_eq!(o[0], None);
        assert!((o[1].unwrap() - 2.0).abs() < 1e-15);
        assert!((o[2].unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn csv_has_one_row_per_level() {
        let opts = StudyOptions {
            levels: 2,
            ..StudyOptions::default()
        };
        let rows = convergence_study(SchemeKind::P1, &ProblemId::Sin2d.problem(), &opts).unwrap();
        let csv = to_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], CSV_HEADER);
        assert!(lines[1].split(',').nth(5).unwrap().is_empty());
        assert_eq!(lines[2].split(',').count(), 12);
        assert_eq!(
            csv,
            to_csv(&convergence_study(SchemeKind::P1, &ProblemId::Sin2d.problem(), &opts).unwrap())
        );
    }

    #[test]
    fn thread_count_does_not_change_the_table() {
        let opts = StudyOptions {
            levels: 3,
            coercivity: false,
            ..StudyOptions::default()
        };
        let p = ProblemId::Sin2d.problem();
        let one = convergence_study_parallel(SchemeKind::Ncp1, &p, &opts, 1).unwrap();
        let three = convergence_study_parallel(SchemeKind::Ncp1, &p, &opts, 3).unwrap();
        assert_eq!(to_csv(&one), to_csv(&three));
        assert_eq!(per_level(5, 4, |i| i * i), vec![0, 1, 4, 9, 16]);
    }

    #[test]
    fn failure_keeps_completed_levels() {
        let opts = StudyOptions {
            family: MeshFamily::Cartesian,
            levels: 2,
            ..StudyOptions::default()
        };
        let err =
            convergence_study(SchemeKind::P1, &ProblemId::Sin2d.problem(), &opts).unwrap_err();
        assert_eq!(err.level, 0);
        assert!(err.rows.is_empty());
        assert!(matches!(err.error, Error::UnsupportedMesh { .. }));
    }

    #[test]
    fn anisotropic_hmm_errors_decrease() {
        let opts = StudyOptions {
            family: MeshFamily::Cartesian,
            levels: 3,
            coercivity: false,
            ..StudyOptions::default()
        };
        let rows = convergence_study(SchemeKind::Hmm, &ProblemId::Aniso.problem(), &opts).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].err_l2 < w[0].err_l2 && w[1].err_h1 < w[0].err_h1);
        }
    }
}
