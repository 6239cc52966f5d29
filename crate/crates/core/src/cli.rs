//! Batch front-end: run configs, artifacts and exit codes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::linalg::EigenPath;
use crate::measures::{control_report, gd_metrics, GradientDefect};
use crate::mesh::MAX_PERTURBATION;
use crate::schemes::{build, companion, SchemeKind};
use crate::solver::{
    convergence_study_parallel, fit_error_constant, per_level, to_csv, MeshFamily, ProblemId,
    StudyOptions, StudyRow,
};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_BANDS: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "gslab", version, about = "Gradient discretisation laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the convergence study described by a JSON config.
    Run {
        config: PathBuf,
        /// Directory for the CSV and metrics files (default: current directory).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Overrides the seed of the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Number of study levels computed concurrently.
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// List the available schemes.
    List,
    /// Describe one scheme.
    Describe { scheme: String },
}

/// Per-level quantities that can be added to the metrics file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// S_D bracket for every test function.
    Consistency,
    /// W_D for every test field.
    LimitConformity,
    /// LLE regularity.
    Lle,
    /// ζ_D where defined.
    Zeta,
    /// ‖Φ‖, ω^Π and ω^∇ where a control exists.
    Control,
    /// ω against the unlumped companion.
    Lumping,
    /// Everything above.
    All,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bands {
    /// Closed interval for the observed L² order at the finest level.
    pub order_l2: Option<[f64; 2]>,
    /// Closed interval for the observed H¹ order at the finest level.
    pub order_h1: Option<[f64; 2]>,
    /// Upper bound on the error constant fitted on the coarsest level; the
    /// fitted bound must also hold on every finer level.
    pub error_constant_max: Option<f64>,
    /// Upper bound on max/min of C_D across levels.
    pub c_d_ratio_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub csv: String,
    pub metrics: String,
}

impl Default for OutputPaths {
    fn default() -> Self {
        OutputPaths {
            csv: "results.csv".into(),
            metrics: "metrics.json".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scheme: SchemeKind,
    #[serde(default = "default_family")]
    pub family: MeshFamily,
    #[serde(default = "default_base")]
    pub base: usize,
    pub levels: usize,
    #[serde(default)]
    pub perturbation: f64,
    pub problem: ProblemId,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default)]
    pub metrics: Vec<Metric>,
    #[serde(default)]
    pub eigen_path: EigenPath,
    #[serde(default = "default_true")]
    pub coercivity: bool,
    #[serde(default)]
    pub record_wall_time: bool,
    #[serde(default)]
    pub output: OutputPaths,
    #[serde(default)]
    pub bands: Bands,
}

fn default_family() -> MeshFamily {
    MeshFamily::Simplicial
}

fn default_base() -> usize {
    4
}

fn default_p() -> f64 {
    2.0
}

fn default_true() -> bool {
    true
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::Config("levels must be at least 1".into()));
        }
        if self.base == 0 {
            return Err(Error::Config("base must be at least 1".into()));
        }
        if self.p != 2.0 {
            return Err(Error::Config(format!(
                "p = {} is not supported; only p = 2 is computed exactly",
                self.p
            )));
        }
        if !(0.0..=MAX_PERTURBATION).contains(&self.perturbation) {
            return Err(Error::Config(format!(
                "perturbation must lie in [0, {MAX_PERTURBATION}]"
            )));
        }
        for name in [&self.output.csv, &self.output.metrics] {
            if name.is_empty() {
                return Err(Error::Config("output paths must be non-empty".into()));
            }
        }
        Ok(())
    }

    pub fn study_options(&self) -> StudyOptions {
        StudyOptions {
            family: self.family,
            base: self.base,
            levels: self.levels,
            perturbation: self.perturbation,
            seed: self.seed,
            eigen_path: self.eigen_path,
            coercivity: self.coercivity,
            record_wall_time: self.record_wall_time,
        }
    }

    fn wants(&self, m: Metric) -> bool {
        self.metrics.contains(&m) || self.metrics.contains(&Metric::All)
    }

    fn mesh_id(&self, level: usize) -> String {
        let n = self.base << level;
        let family = match self.family {
            MeshFamily::Simplicial => "simplicial",
            MeshFamily::Cartesian => "cartesian",
        };
        if self.perturbation > 0.0 {
            format!(
                "{family}-{n}x{n}-p{}-s{}",
                self.perturbation,
                self.seed.wrapping_add(level as u64)
            )
        } else {
            format!("{family}-{n}x{n}")
        }
    }
}

/// One metrics entry keyed by (scheme, mesh, level, quantity).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub scheme: String,
    pub mesh: String,
    pub level: usize,
    pub quantity: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<&'static str>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandCheck {
    pub name: String,
    pub value: Option<f64>,
    pub lo: f64,
    pub hi: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelFailure {
    pub level: usize,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsFile {
    pub scheme: String,
    pub problem: String,
    pub records: Vec<Record>,
    pub bands: Vec<BandCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<LevelFailure>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub code: i32,
    pub rows: Vec<StudyRow>,
    pub bands: Vec<BandCheck>,
    pub failure: Option<LevelFailure>,
    pub csv_path: PathBuf,
    pub metrics_path: PathBuf,
}

fn check(name: &str, value: Option<f64>, lo: f64, hi: f64) -> BandCheck {
    BandCheck {
        name: name.into(),
        value,
        lo,
        hi,
        pass: value.is_some_and(|v| v >= lo && v <= hi),
    }
}

/// Evaluates the configured bands on a complete table.
pub fn check_bands(bands: &Bands, rows: &[StudyRow]) -> Vec<BandCheck> {
    let mut out = Vec::new();
    let last = rows.last();
    if let Some([lo, hi]) = bands.order_l2 {
        out.push(check("orderL2", last.and_then(|r| r.order_l2), lo, hi));
    }
    if let Some([lo, hi]) = bands.order_h1 {
        out.push(check("orderH1", last.and_then(|r| r.order_h1), lo, hi));
    }
    if let Some(max) = bands.error_constant_max {
        let fit = fit_error_constant(rows).filter(|(c, _)| c.is_finite());
        out.push(check("error_constant", fit.as_ref().map(|f| f.0), 0.0, max));
        let worst = fit.map(|(_, ratios)| ratios.into_iter().fold(0.0, f64::max));
        out.push(check("error_bound_ratio", worst, 0.0, 1.0 + 1e-12));
    }
    if let Some(max) = bands.c_d_ratio_max {
        let c: Option<Vec<f64>> = rows.iter().map(|r| r.c_d).collect();
        let ratio = c.filter(|c| !c.is_empty()).map(|c| {
            let hi = c.iter().cloned().fold(f64::MIN, f64::max);
            let lo = c.iter().cloned().fold(f64::MAX, f64::min);
            hi / lo
        });
        out.push(check("C_D_ratio", ratio, 1.0, max));
    }
    out
}

fn row_records(cfg: &RunConfig, rows: &[StudyRow]) -> Vec<Record> {
    let mut out = Vec::new();
    for r in rows {
        let mut push = |q: &str, v: f64| {
            out.push(Record {
                scheme: cfg.scheme.to_string(),
                mesh: cfg.mesh_id(r.level),
                level: r.level,
                quantity: q.into(),
                value: v,
                status: None,
            })
        };
        push("h", r.h);
        push("dofs", r.dofs as f64);
        push("errL2", r.err_l2);
        push("errH1", r.err_h1);
        if let Some(c) = r.c_d {
            push("C_D", c);
        }
        push("W_D(A grad u)", r.w_d);
        push("S_D_interpolant(u)", r.s_d_interpolant);
        push("S_D_lo(u)", r.s_d_lo);
        push("S_D_hi(u)", r.s_d_hi);
    }
    out
}

fn level_records(cfg: &RunConfig, level: usize) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    let mesh = cfg
        .family
        .mesh(cfg.base, level, cfg.perturbation, cfg.seed)?;
    let gd = build(cfg.scheme, &mesh)?;
    let mut push = |q: String, v: f64, status: Option<&'static str>| {
        out.push(Record {
            scheme: cfg.scheme.to_string(),
            mesh: cfg.mesh_id(level),
            level,
            quantity: q,
            value: v,
            status,
        })
    };
    if cfg.wants(Metric::Consistency)
        || cfg.wants(Metric::LimitConformity)
        || cfg.wants(Metric::Lle)
    {
        let comp = if cfg.wants(Metric::Lumping) {
            companion(cfg.scheme, &mesh)?
        } else {
            None
        };
        let m = gd_metrics(&gd, comp.as_ref(), cfg.eigen_path)?;
        if cfg.wants(Metric::Consistency) {
            for (name, s) in &m.s_d {
                push(format!("S_D_interpolant({name})"), s.interpolant, None);
                push(format!("S_D_lo({name})"), s.lower, None);
                push(format!("S_D_hi({name})"), s.upper, None);
            }
        }
        if cfg.wants(Metric::LimitConformity) {
            for (name, w) in &m.w_d {
                push(format!("W_D({name})"), *w, None);
            }
        }
        if cfg.wants(Metric::Lle) {
            push("reg_LLE".into(), m.reg_lle, None);
        }
        if let Some(w) = m.omega_companion {
            push("omega".into(), w, None);
        }
    } else if cfg.wants(Metric::Lumping) {
        if let Some(c) = companion(cfg.scheme, &mesh)? {
            push(
                "omega".into(),
                crate::transforms::reconstruction_distance(&gd, &c, cfg.eigen_path)?,
                None,
            );
        }
    }
    if cfg.wants(Metric::Zeta) {
        if let Some(z) = gd.zeta() {
            push("zeta_D".into(), z, None);
        }
    }
    if cfg.wants(Metric::Control) && gd.control().is_some() {
        let c = control_report(&gd, cfg.eigen_path)?;
        push("phi_norm".into(), c.phi_norm, None);
        push("omega_Pi".into(), c.omega_pi, None);
        let (v, status) = match c.omega_grad {
            GradientDefect::ExactlyZero(v) => (v, "exactly_zero"),
            GradientDefect::BoundedBy(v) => (v, "bounded_by"),
        };
        push("omega_grad".into(), v, Some(status));
    }
    Ok(out)
}

/// Runs a parsed config and writes its artifacts into `out_dir`.
pub fn run_config(cfg: &RunConfig, out_dir: &Path, threads: usize) -> Result<RunOutcome> {
    std::fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join(&cfg.output.csv);
    let metrics_path = out_dir.join(&cfg.output.metrics);
    let problem = cfg.problem.problem();
    let (rows, mut failure) =
        match convergence_study_parallel(cfg.scheme, &problem, &cfg.study_options(), threads) {
            Ok(rows) => (rows, None),
            Err(f) => (
                f.rows,
                Some(LevelFailure {
                    level: f.level,
                    error: f.error.to_string(),
                }),
            ),
        };
    let mut records = row_records(cfg, &rows);
    let extra = per_level(rows.len(), threads, |level| level_records(cfg, level));
    for (level, r) in extra.into_iter().enumerate() {
        match r {
            Ok(r) => records.extend(r),
            Err(e) => {
                if failure.is_none() {
                    failure = Some(LevelFailure {
                        level,
                        error: e.to_string(),
                    });
                }
                break;
            }
        }
    }
    let bands = if failure.is_none() {
        check_bands(&cfg.bands, &rows)
    } else {
        Vec::new()
    };
    let metrics = MetricsFile {
        scheme: cfg.scheme.to_string(),
        problem: cfg.problem.to_string(),
        records,
        bands: bands.clone(),
        failure: failure.clone(),
    };
    let mut json = serde_json::to_string_pretty(&metrics)?;
    json.push('\n');
    write_atomic(&csv_path, to_csv(&rows).as_bytes())?;
    write_atomic(&metrics_path, json.as_bytes())?;
    let code = if failure.is_some() {
        EXIT_NUMERICAL
    } else if bands.iter().all(|b| b.pass) {
        EXIT_OK
    } else {
        EXIT_BANDS
    };
    Ok(RunOutcome {
        code,
        rows,
        bands,
        failure,
        csv_path,
        metrics_path,
    })
}

/// Writes `bytes` to a temporary file next to `path` and renames it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = std::fs::write(&tmp, bytes).and_then(|_| std::fs::rename(&tmp, path));
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    Ok(result?)
}

pub fn list_schemes() -> String {
    let mut s = String::new();
    for k in SchemeKind::ALL {
        let meshes: Vec<String> = k
            .admissible()
            .iter()
            .map(|m| format!("{m:?}").to_lowercase())
            .collect();
        let _ = writeln!(
            s,
            "{:<12} meshes: {:<30} piecewise-constant: {}",
            k.name(),
            meshes.join(", "),
            if k.piecewise_constant() { "yes" } else { "no" }
        );
    }
    s
}

pub fn describe(scheme: &str) -> Result<String> {
    let k: SchemeKind = scheme.parse()?;
    let meshes: Vec<String> = k
        .admissible()
        .iter()
        .map(|m| format!("{m:?}").to_lowercase())
        .collect();
    Ok(format!(
        "{}\n{}\nadmissible meshes: {}\npiecewise-constant: {}\n",
        k.name(),
        k.describe(),
        meshes.join(", "),
        if k.piecewise_constant() { "yes" } else { "no" }
    ))
}

fn report(outcome: &RunOutcome) -> String {
    let mut s = String::new();
    for r in &outcome.rows {
        let _ = writeln!(
            s,
            "level {}  h={:.4e}  dofs={}  errL2={:.4e}  errH1={:.4e}",
            r.level, r.h, r.dofs, r.err_l2, r.err_h1
        );
    }
    for b in &outcome.bands {
        let v = b
            .value
            .map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
        let _ = writeln!(
            s,
            "band {}: {} in [{}, {}] {}",
            b.name,
            v,
            b.lo,
            b.hi,
            if b.pass { "PASS" } else { "FAIL" }
        );
    }
    let _ = writeln!(
        s,
        "wrote {} and {}",
        outcome.csv_path.display(),
        outcome.metrics_path.display()
    );
    s
}

/// Executes a parsed command line and returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    match cli.command {
        Command::List => {
            print!("{}", list_schemes());
            EXIT_OK
        }
        Command::Describe { scheme } => match describe(&scheme) {
            Ok(text) => {
                print!("{text}");
                EXIT_OK
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_CONFIG
            }
        },
        Command::Run {
            config,
            out_dir,
            seed,
            threads,
        } => {
            let mut cfg = match RunConfig::load(&config) {
                Ok(cfg) => cfg,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_CONFIG;
                }
            };
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let out_dir = out_dir.unwrap_or_else(|| PathBuf::from("."));
            match run_config(&cfg, &out_dir, threads.max(1)) {
                Ok(outcome) => {
                    print!("{}", report(&outcome));
                    if let Some(f) = &outcome.failure {
                        eprintln!("error: level {} failed: {}", f.level, f.error);
                    }
                    outcome.code
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_NUMERICAL
                }
            }
        }
    }
}

/// Parses `args` and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_CONFIG
            } else {
                EXIT_OK
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str =
        r#"{"scheme": "p1", "family": "simplicial", "levels": 2, "problem": "sin2d"}"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.scheme, SchemeKind::P1);
        assert_eq!(cfg.base, 4);
        assert_eq!(cfg.p, 2.0);
        assert!(cfg.metrics.is_empty());
        assert_eq!(cfg.output, OutputPaths::default());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for bad in [
            r#"{"scheme": "p3", "levels": 2, "problem": "sin2d"}"#,
            r#"{"scheme": "p1", "levels": 0, "problem": "sin2d"}"#,
            r#"{"scheme": "p1", "levels": 2, "problem": "heat"}"#,
            r#"{"scheme": "p1", "levels": 2, "problem": "sin2d", "p": 3}"#,
            r#"{"scheme": "p1", "levels": 2, "problem": "sin2d", "colour": 1}"#,
            r#"{"scheme": "p1", "levels": 2"#,
        ] {
            assert!(
                matches!(RunConfig::parse(bad), Err(Error::Config(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn list_has_every_scheme_once() {
        let text = list_schemes();
        assert_eq!(text.lines().count(), 10);
        for k in SchemeKind::ALL {
            assert_eq!(
                text.lines()
                    .filter(|l| l.split_whitespace().next() == Some(k.name()))
                    .count(),
                1
            );
        }
    }

    #[test]
    fn descriptions() {
        let mpfa = describe("mpfa_o").unwrap();
        assert!(mpfa.contains("cartesian") && mpfa.contains("simplicial"));
        assert!(describe("hmm").unwrap().contains("ζ_D = 1"));
        assert!(describe("rt0").is_err());
    }

    fn row(level: usize, e: f64, c: f64) -> StudyRow {
        StudyRow {
            level,
            h: 1.0,
            dofs: 1,
            err_l2: e,
            err_h1: e,
            order_l2: (level > 0).then_some(1.0),
            order_h1: (level > 0).then_some(1.0),
            c_d: Some(c),
            w_d: e,
            s_d_lo: 0.0,
            s_d_hi: 0.0,
            s_d_interpolant: e,
            wall_ms: 0,
        }
    }

    #[test]
    fn band_evaluation() {
        let rows = [row(0, 1.0, 0.2), row(1, 0.5, 0.21)];
        let bands = Bands {
            order_l2: Some([0.9, 1.1]),
            order_h1: Some([1.5, 2.0]),
            error_constant_max: Some(10.0),
            c_d_ratio_max: Some(1.1),
        };
        let checks = check_bands(&bands, &rows);
        let pass: Vec<bool> = checks.iter().map(|c| c.pass).collect();
        assert_eq!(pass, vec![true, false, true, true, true]);
        assert!((checks[2].value.unwrap() - 1.0).abs() < 1e-15);
        assert!(!check_bands(&bands, &rows[..1])[0].pass);
    }

    #[test]
    fn atomic_write_leaves_no_temporary() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        assert!(write_atomic(&dir.path().join("missing/b.txt"), b"x").is_err());
    }
}
