//! Command-line runner: declarative run configs, CSV artifacts, and a
//! self-check suite.
//!
//! A run is described by a [`RunConfig`], read from a TOML file with one
//! section per command and overridden by command-line flags. Exit codes:
//! `0` success, `1` analysis finished with failed checks, `2` bad input.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cohomone::{self, Family};
use crate::concavity::{self, uniform_grid};
use crate::error::{Error, Result};
use crate::jacobi::{self, integrate_jacobi, JacobiTensorPath, KERNEL_TOL};
use crate::models::ModelGeometry;
use crate::rigidity::{self, PARALLEL_TOL};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Integrate,
    Concavity,
    Volume,
    Rigidity,
    Classify,
    #[default]
    Verify,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    /// `constant_curvature`, `diagonal_profile`, `s3_hopf` or `s1_x_s2`.
    pub kind: String,
    pub kappa: f64,
    pub n: usize,
    pub kappas: Vec<f64>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { kind: "constant_curvature".into(), kappa: 1.0, n: 3, kappas: Vec::new() }
    }
}

impl ModelSpec {
    pub fn build(&self) -> Result<ModelGeometry<f64>> {
        match self.kind.as_str() {
            "constant_curvature" => ModelGeometry::constant_curvature(self.kappa, self.n),
            "diagonal_profile" => ModelGeometry::diagonal_profile(self.kappas.clone()),
            "s3_hopf" => Ok(ModelGeometry::s3_hopf()),
            "s1_x_s2" => Ok(ModelGeometry::s1_x_s2()),
            other => Err(config_err("model.kind", format!("unknown model {other:?}"))),
        }
    }
}

/// Interval, step and initial data shared by the path-based commands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathSpec {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
    /// Base point of the initial data (or of the Gram route).
    pub t0: f64,
    /// Row-major `A(t0)`; defaults to the model's family, else `0`.
    pub a0: Option<Vec<f64>>,
    /// Row-major `A'(t0)`; defaults to the model's family, else `Id`.
    pub a0p: Option<Vec<f64>>,
}

impl Default for PathSpec {
    fn default() -> Self {
        Self { lo: 0.0, hi: PI, step: jacobi::DEFAULT_STEP, t0: 0.0, a0: None, a0p: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConcavitySpec {
    /// Vector in the normal space (path route).
    pub v: Option<Vec<f64>>,
    /// Coefficients on the model's distinguished fields (Gram route).
    pub a: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VolumeSpec {
    /// Row-major `n × dim` matrix with orthonormal columns; full space if absent.
    pub w: Option<Vec<f64>>,
    pub dim: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RigiditySpec {
    pub x: Vec<f64>,
    /// Defaults to the path interval.
    pub t_from: Option<f64>,
    pub t_to: Option<f64>,
    /// Also report the parallel/vanishing splitting.
    pub splitting: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifySpec {
    pub family: String,
    pub slopes: Vec<i64>,
    /// Enumerate all normal-form P and Q diagrams with slopes in `[-grid, grid]`.
    pub grid: Option<i64>,
}

impl Default for ClassifySpec {
    fn default() -> Self {
        Self { family: "P".into(), slopes: Vec::new(), grid: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySpec {
    /// `all` or a single suite name.
    pub suite: String,
    /// Random vectors per model in the randomized checks.
    pub samples: usize,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self { suite: "all".into(), samples: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative singular value below which `A_t` counts as singular.
    pub kernel: f64,
    /// Threshold on `max |A'x|` for a parallel field.
    pub parallel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { kernel: KERNEL_TOL, parallel: PARALLEL_TOL }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    /// Artifact path; stdout when absent.
    pub output: Option<PathBuf>,
    pub model: ModelSpec,
    pub path: PathSpec,
    pub tolerances: Tolerances,
    pub concavity: ConcavitySpec,
    pub volume: VolumeSpec,
    pub rigidity: RigiditySpec,
    pub classify: ClassifySpec,
    pub verify: VerifySpec,
}

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config { field: field.into(), message: message.into() }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| config_err("config", e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks that numeric fields are finite and intervals non-degenerate.
    pub fn validate(&self) -> Result<()> {
        let finite = |name: &str, x: f64| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(config_err(name, format!("{x} is not finite")))
            }
        };
        let all_finite = |name: &str, xs: &[f64]| xs.iter().try_for_each(|&x| finite(name, x));
        finite("model.kappa", self.model.kappa)?;
        all_finite("model.kappas", &self.model.kappas)?;
        let p = &self.path;
        for (name, x) in [("path.lo", p.lo), ("path.hi", p.hi), ("path.step", p.step), ("path.t0", p.t0)] {
            finite(name, x)?;
        }
        if p.step <= 0.0 {
            return Err(config_err("path.step", "step must be positive"));
        }
        if p.lo >= p.hi {
            return Err(config_err("path.hi", "interval must satisfy lo < hi"));
        }
        if p.t0 < p.lo || p.t0 > p.hi {
            return Err(config_err("path.t0", "base point must lie in [lo, hi]"));
        }
        all_finite("path.a0", p.a0.as_deref().unwrap_or(&[]))?;
        all_finite("path.a0p", p.a0p.as_deref().unwrap_or(&[]))?;
        all_finite("concavity.v", self.concavity.v.as_deref().unwrap_or(&[]))?;
        all_finite("concavity.a", self.concavity.a.as_deref().unwrap_or(&[]))?;
        all_finite("volume.w", self.volume.w.as_deref().unwrap_or(&[]))?;
        all_finite("rigidity.x", &self.rigidity.x)?;
        for (name, x) in [("rigidity.t_from", self.rigidity.t_from), ("rigidity.t_to", self.rigidity.t_to)] {
            if let Some(x) = x {
                finite(name, x)?;
            }
        }
        for (name, x) in [("tolerances.kernel", self.tolerances.kernel), ("tolerances.parallel", self.tolerances.parallel)] {
            finite(name, x)?;
            if x <= 0.0 {
                return Err(config_err(name, "tolerance must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Parser, Debug)]
#[command(name = "jacobi-concavity", version, about = "Concavity and rigidity of Jacobi fields; S3xS3 diagram classification")]
pub struct Cli {
    /// TOML run config; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for the randomized checks (recorded in the dumped config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Write the artifact here instead of stdout.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    /// Print the effective config and exit.
    #[arg(long, global = true)]
    pub dump_config: bool,
    #[command(subcommand)]
    pub command: Option<Sub>,
}

#[derive(Args, Debug, Default)]
pub struct PathArgs {
    /// constant_curvature, diagonal_profile, s3_hopf, s1_x_s2
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub kappas: Option<Vec<f64>>,
    /// Interval start [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    pub lo: Option<f64>,
    /// Interval end [default: π]
    #[arg(long, allow_hyphen_values = true)]
    pub hi: Option<f64>,
    /// RK4 step [default: 1e-3]
    #[arg(long, allow_hyphen_values = true)]
    pub step: Option<f64>,
    /// Base point [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    pub t0: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub a0: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub a0p: Option<Vec<f64>>,
    /// Singularity threshold on the relative smallest singular value [default: 1e-7]
    #[arg(long)]
    pub kernel_tol: Option<f64>,
}

#[derive(Subcommand, Debug)]
pub enum Sub {
    /// Integrate the Jacobi equation; CSV of A and A' per grid point.
    Integrate {
        #[command(flatten)]
        path: PathArgs,
    },
    /// Profile of g for a vector v (path route) or coefficients a (Gram route).
    Concavity {
        #[command(flatten)]
        path: PathArgs,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        v: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        a: Option<Vec<f64>>,
    },
    /// Volume function g_W for a subspace W.
    Volume {
        #[command(flatten)]
        path: PathArgs,
        /// Row-major n x dim orthonormal basis
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        w: Option<Vec<f64>>,
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Conditions (a)-(d) for X = A x, plus an optional splitting.
    Rigidity {
        #[command(flatten)]
        path: PathArgs,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Option<Vec<f64>>,
        #[arg(long, allow_hyphen_values = true)]
        t_from: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        t_to: Option<f64>,
        #[arg(long)]
        splitting: bool,
        /// Parallel threshold on max |A'x| [default: 1e-6]
        #[arg(long)]
        parallel_tol: Option<f64>,
    },
    /// Classify a group diagram, or a whole grid as CSV.
    Classify {
        #[arg(long)]
        family: Option<String>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        slopes: Option<Vec<i64>>,
        #[arg(long)]
        grid: Option<i64>,
    },
    /// Run the self-check suites.
    Verify {
        /// all, models, jacobi, concavity, rigidity, cohomone
        #[arg(long)]
        suite: Option<String>,
        #[arg(long)]
        samples: Option<usize>,
    },
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn apply_path_args(cfg: &mut RunConfig, p: PathArgs) {
    set(&mut cfg.model.kind, p.model);
    set(&mut cfg.model.kappa, p.kappa);
    set(&mut cfg.model.n, p.n);
    set(&mut cfg.model.kappas, p.kappas);
    set(&mut cfg.path.lo, p.lo);
    set(&mut cfg.path.hi, p.hi);
    set(&mut cfg.path.step, p.step);
    set(&mut cfg.path.t0, p.t0);
    if p.a0.is_some() {
        cfg.path.a0 = p.a0;
    }
    if p.a0p.is_some() {
        cfg.path.a0p = p.a0p;
    }
    set(&mut cfg.tolerances.kernel, p.kernel_tol);
}

/// Merges the config file (if any) with the command-line flags.
pub fn resolve_config(cli: Cli) -> Result<(RunConfig, bool)> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| config_err("--config", format!("{}: {e}", path.display())))?;
            RunConfig::from_toml(&text)?
        }
        None => RunConfig::default(),
    };
    set(&mut cfg.seed, cli.seed);
    if cli.output.is_some() {
        cfg.output = cli.output;
    }
    match cli.command {
        None if cli.config.is_none() && !cli.dump_config => {
            return Err(config_err("command", "no subcommand given and no --config file"));
        }
        None => {}
        Some(Sub::Integrate { path }) => {
            cfg.command = Command::Integrate;
            apply_path_args(&mut cfg, path);
        }
        Some(Sub::Concavity { path, v, a }) => {
            cfg.command = Command::Concavity;
            apply_path_args(&mut cfg, path);
            if v.is_some() || a.is_some() {
                cfg.concavity = ConcavitySpec { v, a };
            }
        }
        Some(Sub::Volume { path, w, dim }) => {
            cfg.command = Command::Volume;
            apply_path_args(&mut cfg, path);
            if w.is_some() {
                cfg.volume.w = w;
            }
            if dim.is_some() {
                cfg.volume.dim = dim;
            }
        }
        Some(Sub::Rigidity { path, x, t_from, t_to, splitting, parallel_tol }) => {
            cfg.command = Command::Rigidity;
            apply_path_args(&mut cfg, path);
            set(&mut cfg.rigidity.x, x);
            if t_from.is_some() {
                cfg.rigidity.t_from = t_from;
            }
            if t_to.is_some() {
                cfg.rigidity.t_to = t_to;
            }
            cfg.rigidity.splitting |= splitting;
            set(&mut cfg.tolerances.parallel, parallel_tol);
        }
        Some(Sub::Classify { family, slopes, grid }) => {
            cfg.command = Command::Classify;
            set(&mut cfg.classify.family, family);
            set(&mut cfg.classify.slopes, slopes);
            if grid.is_some() {
                cfg.classify.grid = grid;
            }
        }
        Some(Sub::Verify { suite, samples }) => {
            cfg.command = Command::Verify;
            set(&mut cfg.verify.suite, suite);
            set(&mut cfg.verify.samples, samples);
        }
    }
    cfg.validate()?;
    Ok((cfg, cli.dump_config))
}

/// Outcome of a run: exit code plus the one-line summaries for stdout.
#[derive(Debug, Default)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub summaries: Vec<String>,
}

fn square(values: &[f64], n: usize, field: &str) -> Result<DMatrix<f64>> {
    if values.len() != n * n {
        return Err(config_err(field, format!("expected {} entries for a {n}x{n} matrix, got {}", n * n, values.len())));
    }
    Ok(DMatrix::from_row_slice(n, n, values))
}

fn vector(values: &[f64], n: usize, field: &str) -> Result<DVector<f64>> {
    if values.len() != n {
        return Err(config_err(field, format!("expected {n} entries, got {}", values.len())));
    }
    Ok(DVector::from_column_slice(values))
}

/// Integrates the configured model from its initial data.
pub fn build_path(cfg: &RunConfig) -> Result<(ModelGeometry<f64>, JacobiTensorPath<f64>)> {
    let model = cfg.model.build()?;
    let n = model.dimension();
    let p = &cfg.path;
    let (a0, a0p) = match (&p.a0, &p.a0p) {
        (Some(a), Some(ap)) => (square(a, n, "path.a0")?, square(ap, n, "path.a0p")?),
        (None, None) => match model.family_data() {
            Some((tb, fa, fap)) => model.exact_jacobi(tb, &fa, &fap, p.t0)?,
            None => (DMatrix::zeros(n, n), DMatrix::identity(n, n)),
        },
        _ => return Err(config_err("path.a0", "give both a0 and a0p or neither")),
    };
    let path = integrate_jacobi(&model.field()?, p.t0, &a0, &a0p, (p.lo, p.hi), p.step)?;
    Ok((model, path))
}

fn emit(cfg: &RunConfig, bytes: Vec<u8>, what: &str, out: &mut RunOutcome, stdout: &mut dyn Write) -> Result<()> {
    match &cfg.output {
        Some(path) => {
            write_file(path, &bytes)?;
            let rows = bytes.iter().filter(|&&b| b == b'\n').count();
            out.summaries.push(format!("{what}: wrote {} ({rows} lines)", path.display()));
        }
        None => stdout.write_all(&bytes).map_err(io_err)?,
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| config_err("output", format!("{}: {e}", path.display())))
}

fn io_err(e: io::Error) -> Error {
    Error::Data(e.to_string())
}

/// Executes a resolved config, writing the artifact to `stdout` unless an
/// output path is set.
pub fn run(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<RunOutcome> {
    let mut out = RunOutcome::default();
    match cfg.command {
        Command::Integrate => {
            let (_, path) = build_path(cfg)?;
            let mut buf = Vec::new();
            path.write_csv(&mut buf).map_err(io_err)?;
            emit(cfg, buf, "integrate", &mut out, stdout)?;
            let sing = jacobi::find_singular_points(&path, cfg.tolerances.kernel)?;
            let times: Vec<String> = sing.iter().map(|s| format!("{:.10}", s.t_star)).collect();
            out.summaries.push(format!("singular points: [{}]", times.join(", ")));
        }
        Command::Concavity => {
            let profile = concavity_profile(cfg)?;
            let mut buf = Vec::new();
            profile.write_csv(&mut buf).map_err(io_err)?;
            emit(cfg, buf, "concavity", &mut out, stdout)?;
        }
        Command::Volume => {
            let (model, path) = build_path(cfg)?;
            let n = model.dimension();
            let w = match &cfg.volume.w {
                Some(values) => {
                    let dim = cfg.volume.dim.ok_or_else(|| config_err("volume.dim", "required with volume.w"))?;
                    if dim == 0 || values.len() != n * dim {
                        return Err(config_err("volume.w", format!("expected {} entries for {n}x{dim}", n * dim)));
                    }
                    DMatrix::from_row_slice(n, dim, values)
                }
                None => DMatrix::identity(n, n),
            };
            let vp = concavity::volume_profile(&path, &w)?;
            let mut buf = Vec::new();
            vp.write_csv(&mut buf).map_err(io_err)?;
            emit(cfg, buf, "volume", &mut out, stdout)?;
        }
        Command::Rigidity => {
            let (model, path) = build_path(cfg)?;
            let x = vector(&cfg.rigidity.x, model.dimension(), "rigidity.x")?;
            let t_from = cfg.rigidity.t_from.unwrap_or(cfg.path.lo);
            let t_to = cfg.rigidity.t_to.unwrap_or(cfg.path.hi);
            let report = rigidity::check_conditions_abcd(&path, &x, t_from, t_to)?;
            let mut text = report.to_text();
            if cfg.rigidity.splitting {
                let s = rigidity::wilking_splitting(&path, cfg.tolerances.parallel)?;
                let (v, p) = s.dimensions();
                text.push_str(&format!(
                    "splitting: vanishing={v} parallel={p} orthogonality_defect={} completeness_defect={}\n",
                    jacobi::fmt17(s.orthogonality_defect),
                    jacobi::fmt17(s.completeness_defect)
                ));
            }
            emit(cfg, text.into_bytes(), "rigidity", &mut out, stdout)?;
        }
        Command::Classify => {
            let text = match cfg.classify.grid {
                Some(m) => classify_grid_csv(m)?,
                None => {
                    let family: Family = cfg.classify.family.parse().map_err(|_| {
                        config_err("classify.family", format!("unknown family {:?}", cfg.classify.family))
                    })?;
                    let d = cohomone::validate_diagram(family, &cfg.classify.slopes);
                    cohomone::classify(&d).to_text()
                }
            };
            emit(cfg, text.into_bytes(), "classify", &mut out, stdout)?;
        }
        Command::Verify => {
            let results = run_verify(&cfg.verify.suite, cfg.seed, cfg.verify.samples)?;
            let mut text = String::new();
            for r in &results {
                for (name, ok, detail) in &r.checks {
                    if !ok {
                        text.push_str(&format!("FAIL {}::{name}: {detail}\n", r.suite));
                    }
                }
                text.push_str(&format!("{}: {}/{} passed\n", r.suite, r.passed(), r.checks.len()));
            }
            text.push_str(&format!("seed: {}\n", cfg.seed));
            emit(cfg, text.into_bytes(), "verify", &mut out, stdout)?;
            if results.iter().any(|r| r.passed() < r.checks.len()) {
                out.exit_code = 1;
            }
        }
    }
    Ok(out)
}

fn concavity_profile(cfg: &RunConfig) -> Result<concavity::ConcavityProfile<f64>> {
    let model = cfg.model.build()?;
    match (&cfg.concavity.v, &cfg.concavity.a) {
        (Some(v), None) => {
            let (_, path) = build_path(cfg)?;
            let v = vector(v, model.dimension(), "concavity.v")?;
            concavity::g_profile(&path, &v)
        }
        (None, Some(a)) => {
            let probe = model.gram_at(cfg.path.t0)?;
            let a = vector(a, probe.nrows(), "concavity.a")?;
            let grid = uniform_grid(cfg.path.lo, cfg.path.hi, cfg.path.step)?;
            concavity::gram_g_profile(|t| model.gram_at(t), &a, cfg.path.t0, &grid)
        }
        _ => Err(config_err("concavity.v", "give exactly one of v (path route) or a (Gram route)")),
    }
}

/// CSV over all P and Q diagrams in normal form with slopes in `[-m, m]`.
pub fn classify_grid_csv(m: i64) -> Result<String> {
    if !(0..=64).contains(&m) {
        return Err(config_err("classify.grid", "grid bound must lie in 0..=64"));
    }
    let mut text = String::from("family,p-,q-,p+,q+,verdict,witness\n");
    for family in [Family::P, Family::Q] {
        for a in -m..=m {
            for b in -m..=m {
                for c in -m..=m {
                    for d in -m..=m {
                        let s = [a, b, c, d];
                        let diagram = cohomone::validate_diagram(family, &s);
                        if !diagram.is_valid() || diagram.slopes() != Some(s) {
                            continue;
                        }
                        let v = cohomone::classify(&diagram);
                        let witness = v.witness().map(|w| w.summary()).unwrap_or_default();
                        text.push_str(&format!("{family},{a},{b},{c},{d},{},{witness}\n", v.classification));
                    }
                }
            }
        }
    }
    Ok(text)
}

/// Pass/fail record of one self-check suite.
#[derive(Debug)]
pub struct SuiteResult {
    pub suite: &'static str,
    pub checks: Vec<(String, bool, String)>,
}

impl SuiteResult {
    pub fn passed(&self) -> usize {
        self.checks.iter().filter(|c| c.1).count()
    }
}

pub const SUITES: [&str; 5] = ["models", "jacobi", "concavity", "rigidity", "cohomone"];

struct Checks {
    suite: &'static str,
    checks: Vec<(String, bool, String)>,
}

impl Checks {
    fn new(suite: &'static str) -> Self {
        Self { suite, checks: Vec::new() }
    }

    /// Records `value < bound`; errors count as failures.
    fn below(&mut self, name: &str, value: Result<f64>, bound: f64) {
        let (ok, detail) = match value {
            Ok(v) => (v < bound, format!("{v:e} vs bound {bound:e}")),
            Err(e) => (false, e.to_string()),
        };
        self.checks.push((name.into(), ok, detail));
    }

    fn holds(&mut self, name: &str, value: Result<bool>) {
        let (ok, detail) = match value {
            Ok(b) => (b, String::new()),
            Err(e) => (false, e.to_string()),
        };
        self.checks.push((name.into(), ok, detail));
    }

    fn finish(self) -> SuiteResult {
        SuiteResult { suite: self.suite, checks: self.checks }
    }
}

fn sphere_path(n: usize) -> Result<JacobiTensorPath<f64>> {
    let m = ModelGeometry::constant_curvature(1.0, n)?;
    integrate_jacobi(&m.field()?, 0.0, &DMatrix::zeros(n, n), &DMatrix::identity(n, n), (0.0, PI), 1e-3)
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        if v.norm() > 0.1 {
            return v.normalize();
        }
    }
}

/// Runs the named suite (or `all`) and returns one result per suite.
pub fn run_verify(suite: &str, seed: u64, samples: usize) -> Result<Vec<SuiteResult>> {
    let names: Vec<&'static str> = if suite == "all" {
        SUITES.to_vec()
    } else {
        vec![*SUITES.iter().find(|s| **s == suite).ok_or_else(|| config_err("verify.suite", format!("unknown suite {suite:?}")))?]
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(names.into_iter().map(|name| run_suite(name, &mut rng, samples)).collect())
}

fn run_suite(name: &'static str, rng: &mut ChaCha8Rng, samples: usize) -> SuiteResult {
    let mut c = Checks::new(name);
    match name {
        "models" => {
            let hopf = ModelGeometry::<f64>::s3_hopf();
            c.holds(
                "hopf_gram_rank_drop",
                hopf.gram_at(FRAC_PI_2).map(|g| g.determinant().abs() < 1e-12 && g[(0, 0)] == 1.0),
            );
            c.below(
                "sphere_exact_solution_residual",
                (|| {
                    let m = ModelGeometry::constant_curvature(1.0, 2)?;
                    let (a0, a0p) = (DMatrix::identity(2, 2), DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));
                    let h = 1e-4;
                    let mut worst: f64 = 0.0;
                    for i in 1..100 {
                        let t = 3.0 * i as f64 / 100.0;
                        let a = |s: f64| m.exact_jacobi(0.0, &a0, &a0p, s).map(|x| x.0);
                        let second = (a(t + h)? - a(t)? * 2.0 + a(t - h)?) / (h * h);
                        worst = worst.max((second + m.curvature_at(t)? * a(t)?).amax());
                    }
                    Ok(worst)
                })(),
                1e-6,
            );
        }
        "jacobi" => {
            c.below(
                "sphere_matches_sin",
                sphere_path(2).map(|p| {
                    (0..p.len())
                        .map(|i| (p.a(i) - DMatrix::identity(2, 2) * p.grid()[i].sin()).amax())
                        .fold(0.0, f64::max)
                }),
                1e-9,
            );
            c.below(
                "sphere_conjugate_points",
                sphere_path(2).and_then(|p| jacobi::find_singular_points(&p, KERNEL_TOL)).and_then(|s| {
                    if s.len() != 2 {
                        return Err(Error::Numeric(format!("{} singular points", s.len())));
                    }
                    Ok(s[0].t_star.abs().max((s[1].t_star - PI).abs()))
                }),
                1e-9,
            );
            c.holds("sphere_is_lagrange", sphere_path(3).map(|p| jacobi::is_lagrange(&p, 1e-8).pass));
        }
        "concavity" => {
            c.below(
                "hopf_abs_sin_2t",
                (|| {
                    let m = ModelGeometry::<f64>::s3_hopf();
                    let grid = uniform_grid(0.05, PI - 0.05, 1e-3)?;
                    let a = DVector::from_vec(vec![1.0, 0.0]);
                    let prof = concavity::gram_g_profile(|t| m.gram_at(t), &a, FRAC_PI_4, &grid)?;
                    Ok(prof.grid.iter().zip(&prof.g).map(|(t, g)| (g - (2.0 * t).sin().abs()).abs()).fold(0.0, f64::max))
                })(),
                1e-8,
            );
            let models = [
                ModelGeometry::constant_curvature(1.0, 3).expect("valid"),
                ModelGeometry::constant_curvature(0.0, 3).expect("valid"),
                ModelGeometry::diagonal_profile(vec![1.0, 0.0, 0.5]).expect("valid"),
            ];
            for m in &models {
                let n = m.dimension();
                let path = integrate_jacobi(
                    &m.field().expect("curvature"),
                    0.0,
                    &DMatrix::identity(n, n),
                    &DMatrix::zeros(n, n),
                    (-1.4, 1.4),
                    1e-3,
                );
                let Ok(path) = path else {
                    c.holds(&format!("{}_path", m.name()), Err(path.unwrap_err()));
                    continue;
                };
                let mut worst_ode: f64 = 0.0;
                let mut worst_second: f64 = f64::NEG_INFINITY;
                let mut lower_ok = true;
                for _ in 0..samples {
                    let v = random_unit(rng, n);
                    match concavity::g_profile(&path, &v) {
                        Ok(prof) => {
                            let r = concavity::verify_g_ode(&prof).max_residual;
                            if r.is_finite() {
                                worst_ode = worst_ode.max(r);
                            }
                            lower_ok &= concavity::check_lower_bound(&prof, &path).pass;
                            for i in 1..prof.len() - 1 {
                                if prof.g[i] > 0.0 && prof.distance_to_singular(prof.grid[i]) > 0.05 {
                                    if let Some(d) = prof.second_difference(i) {
                                        worst_second = worst_second.max(d);
                                    }
                                }
                            }
                        }
                        Err(e) => {
                            c.holds(&format!("{}_profile", m.name()), Err(e));
                            lower_ok = false;
                        }
                    }
                }
                c.below(&format!("{}_g_ode", m.name()), Ok(worst_ode), 1e-5);
                c.holds(&format!("{}_lower_bound", m.name()), Ok(lower_ok));
                c.below(&format!("{}_concave", m.name()), Ok(worst_second), 1e-8 + f64::EPSILON);
            }
        }
        "rigidity" => {
            c.holds(
                "s1_x_s2_counterexample",
                (|| {
                    let m = ModelGeometry::<f64>::s1_x_s2();
                    let (tb, a0, a0p) = m.family_data().expect("family");
                    let p = integrate_jacobi(&m.field()?, tb, &a0, &a0p, (0.0, PI), 1e-3)?;
                    let rep = rigidity::check_conditions_abcd(&p, &DVector::from_vec(vec![1.0, 1.0]), 0.0, PI)?;
                    use rigidity::{Condition as C, Status as S};
                    Ok(rep.status(C::A) == Some(S::Holds)
                        && rep.status(C::B) == Some(S::Holds)
                        && rep.status(C::C) == Some(S::Holds)
                        && rep.status(C::D) == Some(S::Fails)
                        && rep.conclusion != rigidity::Conclusion::ParallelOnInterval)
                })(),
            );
            c.holds(
                "product_splitting",
                (|| {
                    let m = ModelGeometry::diagonal_profile(vec![1.0, 0.0])?;
                    let p = integrate_jacobi(&m.field()?, 0.0, &DMatrix::identity(2, 2), &DMatrix::zeros(2, 2), (-2.0, 2.0), 1e-3)?;
                    let s = rigidity::wilking_splitting(&p, PARALLEL_TOL)?;
                    Ok(s.dimensions() == (1, 1) && s.orthogonality_defect < 1e-8 && s.completeness_defect < 1e-8)
                })(),
            );
        }
        "cohomone" => {
            let tag = |f: Family, s: &[i64]| cohomone::classify(&cohomone::validate_diagram(f, s)).classification.to_string();
            c.holds("p_candidate", Ok(tag(Family::P, &[1, 1, 5, -3]) == "candidate_P_k(2)"));
            c.holds("q_candidate", Ok(tag(Family::Q, &[1, 1, 2, 3]) == "candidate_Q_k(2)"));
            c.holds(
                "r7_variants",
                Ok(tag(Family::Q, &[-3, 1, 1, 2]) == "exceptional_R7" && tag(Family::Q, &[3, 1, 1, 2]) == "exceptional_R7"),
            );
            c.holds("p_invalid", Ok(tag(Family::P, &[2, 1, 1, 1]) == "invalid_diagram"));
            c.holds(
                "n_family",
                cohomone::n_family_kernels(1, 1).and_then(|k| Ok(k.w_dim == 3 && cohomone::n_family_kernels(1, 2)?.w_dim == 2)),
            );
            c.holds(
                "small_grid_valid",
                classify_grid_csv(5).map(|csv| csv.lines().skip(1).all(|l| !l.contains("invalid_diagram"))),
            );
        }
        _ => unreachable!("suite names are checked"),
    }
    c.finish()
}

/// Maps errors to exit codes: input problems give `2`, numerical failures `1`.
pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Numeric(_) | Error::SingularPoint { .. } => 1,
        _ => 2,
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, S>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            if code == 0 {
                let _ = write!(stdout, "{e}");
            } else {
                let _ = write!(stderr, "{e}");
            }
            return code;
        }
    };
    let (cfg, dump) = match resolve_config(cli) {
        Ok(x) => x,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return 2;
        }
    };
    if dump {
        let _ = write!(stdout, "{}", cfg.to_toml());
        return 0;
    }
    match run(&cfg, stdout) {
        Ok(outcome) => {
            // with the artifact on stdout, summaries go to stderr
            for s in &outcome.summaries {
                if cfg.output.is_some() {
                    let _ = writeln!(stdout, "{s}");
                } else {
                    let _ = writeln!(stderr, "{s}");
                }
            }
            outcome.exit_code
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code_for(&e)
        }
    }
}
