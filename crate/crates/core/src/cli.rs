//! Command-line front end: `run`, `converge` and `symcheck`.
//!
//! Exit codes: 0 on success, 1 on solver failure or a failed symplecticity
//! check, 2 on an invalid spec.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::analysis::{convergence_study, step_count, symplecticity_defect, ConvergenceRow, Method};
use crate::equip::{integrate_equip, EquipConfig};
use crate::error::Error;
use crate::hamiltonian::{HamiltonianSystem, PhaseState};
use crate::integrators::{integrate, PartialRun, SchemeConfig, SchemeId, Trajectory};
use crate::problems::{henon_heiles_initial, kepler_initial, OrbitKind, ProblemId};
use crate::rng::{Lcg, DEFAULT_SEED};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_SPEC: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "paramsym", version, about = "Parameterized symplectic and EQUIP integrators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one trajectory and write it as CSV.
    Run(RunArgs),
    /// Self-comparison convergence study over a dyadic step ladder.
    Converge(ConvergeArgs),
    /// Symplecticity defect of one step at random states.
    Symcheck(SymcheckArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON file with the same fields as the flags; flags take precedence.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// henon-heiles, kepler, two-body, oscillator or free.
    #[arg(long)]
    pub problem: Option<String>,
    /// Hénon–Heiles orbit: box or chaotic.
    #[arg(long)]
    pub orbit: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<f64>,
    /// Kepler eccentricity.
    #[arg(long)]
    pub e: Option<f64>,
    /// Dimension of the oscillator and free-particle problems.
    #[arg(long)]
    pub dim: Option<usize>,
    /// scheme1, scheme1-adjoint, scheme2, scheme3, composed4, nystrom1, avf,
    /// equip4 or equip5.
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Gauss–Legendre nodes for avf.
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Stage solver tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print a JSON summary object after the human-readable lines.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Write every k-th step.
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ConvergeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Number of table rows; levels + 1 runs are made.
    #[arg(long)]
    pub levels: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SymcheckArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

/// Everything an experiment needs. Also the schema of `--spec` files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSpec {
    pub problem: String,
    pub orbit: String,
    pub mu: f64,
    pub e: f64,
    pub dim: usize,
    pub scheme: String,
    pub lambda: f64,
    pub h: f64,
    pub t_end: f64,
    pub nodes: usize,
    pub tol: f64,
    pub out: Option<String>,
    pub stride: usize,
    pub levels: usize,
    pub trials: usize,
    pub seed: u64,
    pub threshold: f64,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            problem: "henon-heiles".into(),
            orbit: "box".into(),
            mu: 0.0075,
            e: 0.6,
            dim: 1,
            scheme: "scheme1".into(),
            lambda: 0.5,
            h: 0.02,
            t_end: 1.0,
            nodes: crate::integrators::DEFAULT_AVF_NODES,
            tol: crate::solvers::SolverConfig::default().tol,
            out: None,
            stride: 1,
            levels: 4,
            trials: 20,
            seed: DEFAULT_SEED,
            threshold: 1e-6,
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Spec(String),
    Io(io::Error),
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Spec(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

impl RunSpec {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Spec(format!("cannot read spec {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Spec(format!("bad spec {}: {e}", path.display())))
    }

    fn merge(&mut self, c: &CommonArgs) {
        if let Some(v) = &c.problem {
            self.problem = v.clone();
        }
        if let Some(v) = &c.orbit {
            self.orbit = v.clone();
        }
        if let Some(v) = c.mu {
            self.mu = v;
        }
        if let Some(v) = c.e {
            self.e = v;
        }
        if let Some(v) = c.dim {
            self.dim = v;
        }
        if let Some(v) = &c.scheme {
            self.scheme = v.clone();
        }
        if let Some(v) = c.lambda {
            self.lambda = v;
        }
        if let Some(v) = c.h {
            self.h = v;
        }
        if let Some(v) = c.t_end {
            self.t_end = v;
        }
        if let Some(v) = c.nodes {
            self.nodes = v;
        }
        if let Some(v) = c.tol {
            self.tol = v;
        }
        if let Some(v) = &c.out {
            self.out = Some(v.display().to_string());
        }
    }

    fn from_common(c: &CommonArgs) -> CliResult<Self> {
        let mut spec = match &c.spec {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        spec.merge(c);
        Ok(spec)
    }

    pub fn problem_id(&self) -> CliResult<ProblemId> {
        Ok(ProblemId::from_name(&self.problem, self.mu, self.dim)?)
    }

    pub fn initial_state(&self, id: &ProblemId) -> CliResult<PhaseState> {
        Ok(match id {
            ProblemId::HenonHeiles => henon_heiles_initial(self.orbit.parse::<OrbitKind>()?)?,
            ProblemId::PerturbedKepler { .. } | ProblemId::TwoBody => kepler_initial(self.e)?,
            ProblemId::HarmonicOscillator { dim } | ProblemId::FreeParticle { dim } => {
                PhaseState::new(vec![1.0; *dim], vec![0.0; *dim])?
            }
            ProblemId::Custom => return Err(CliError::Spec("custom problems are not available here".into())),
        })
    }

    pub fn method(&self) -> CliResult<Method> {
        let solver = crate::solvers::SolverConfig {
            tol: self.tol,
            ..Default::default()
        };
        solver.validate()?;
        let equip = |mut cfg: EquipConfig| {
            cfg.stage_solver = solver;
            Method::Equip(cfg)
        };
        Ok(match self.scheme.as_str() {
            "equip4" => equip(EquipConfig::scheme4()),
            "equip5" => equip(EquipConfig::scheme5()),
            name => {
                let mut cfg = SchemeConfig::new(name.parse::<SchemeId>()?, self.lambda, self.h);
                cfg.stage_solver = solver;
                cfg.avf_nodes = self.nodes;
                cfg.validate()?;
                Method::Symplectic(cfg)
            }
        })
    }
}

/// A resolved spec, ready to integrate.
pub struct Experiment {
    pub id: ProblemId,
    pub system: Arc<dyn HamiltonianSystem>,
    pub initial: PhaseState,
    pub method: Method,
}

impl Experiment {
    pub fn from_spec(spec: &RunSpec) -> CliResult<Self> {
        let id = spec.problem_id()?;
        let system = id.build()?;
        let initial = spec.initial_state(&id)?;
        let method = spec.method()?;
        if let Method::Symplectic(cfg) = &method {
            if cfg.scheme == SchemeId::Nystrom1 && system.separable().is_none() {
                return Err(CliError::Spec(format!("nystrom1 needs a separable system, {} is not", id)));
            }
        }
        Ok(Self {
            id,
            system,
            initial,
            method,
        })
    }
}

/// `1.234E-05` style with `digits` decimals.
pub fn format_sci(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{:.*e}", digits, x);
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}E{sign}{:02}", exp.abs())
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:?}")
}

pub fn csv_header(sys: &dyn HamiltonianSystem) -> String {
    let d = sys.dim();
    let mut cols = vec!["step".to_string(), "t".to_string()];
    cols.extend((1..=d).map(|i| format!("p{i}")));
    cols.extend((1..=d).map(|i| format!("q{i}")));
    cols.push("H".into());
    cols.push("H_defect".into());
    cols.extend(sys.quadratic_invariants().iter().map(|inv| inv.label.clone()));
    cols.push("lambda".into());
    cols.join(",")
}

/// λ recorded in row `n`: the fixed λ, or for EQUIP the λ of the step that
/// produced state `n` (NaN for the initial state).
fn row_lambda(traj: &Trajectory, fixed: Option<f64>, n: usize) -> f64 {
    match fixed {
        Some(l) => l,
        None if n == 0 => f64::NAN,
        None => traj.lambdas[n - 1],
    }
}

/// Writes rows `0, stride, 2·stride, …`; returns the number of data rows.
pub fn write_csv(
    w: &mut dyn Write,
    sys: &dyn HamiltonianSystem,
    traj: &Trajectory,
    fixed_lambda: Option<f64>,
    stride: usize,
) -> io::Result<usize> {
    writeln!(w, "{}", csv_header(sys))?;
    let labels: Vec<&str> = sys.quadratic_invariants().iter().map(|i| i.label.as_str()).collect();
    let h0 = traj.energy.first().copied().unwrap_or(f64::NAN);
    let mut rows = 0;
    for n in (0..traj.states.len()).step_by(stride.max(1)) {
        let s = &traj.states[n];
        let mut fields = vec![n.to_string(), format_float(traj.times[n])];
        fields.extend(s.p().iter().map(|&x| format_float(x)));
        fields.extend(s.q().iter().map(|&x| format_float(x)));
        fields.push(format_float(traj.energy[n]));
        fields.push(format_float(traj.energy[n] - h0));
        for label in &labels {
            fields.push(format_float(traj.invariants[*label][n]));
        }
        fields.push(format_float(row_lambda(traj, fixed_lambda, n)));
        writeln!(w, "{}", fields.join(","))?;
        rows += 1;
    }
    Ok(rows)
}

fn max_drift(series: &[f64]) -> f64 {
    let first = series.first().copied().unwrap_or(0.0);
    series.iter().fold(0.0f64, |m, v| m.max((v - first).abs()))
}

pub fn cmd_run(spec: &RunSpec, json: bool, out: &mut dyn Write) -> CliResult<i32> {
    if spec.stride == 0 {
        return Err(CliError::Spec("stride must be at least 1".into()));
    }
    let n_steps = step_count(spec.t_end, spec.h)?;
    let exp = Experiment::from_spec(spec)?;
    let sys = exp.system.as_ref();
    let start = Instant::now();
    let (result, fixed) = match &exp.method {
        Method::Symplectic(cfg) => (integrate(sys, cfg, &exp.initial, n_steps), Some(cfg.lambda)),
        Method::Equip(cfg) => (integrate_equip(sys, cfg, &exp.initial, spec.h, n_steps), None),
    };
    let wall = start.elapsed().as_secs_f64();
    let (traj, failure) = match result {
        Ok(t) => (t, None),
        Err(run) => {
            let PartialRun { trajectory, error } = *run;
            (trajectory, Some(error))
        }
    };
    let mut rows = 0;
    if let Some(path) = &spec.out {
        let mut w = BufWriter::new(File::create(path)?);
        if !traj.states.is_empty() {
            rows = write_csv(&mut w, sys, &traj, fixed, spec.stride)?;
        }
        if let Some(e) = &failure {
            writeln!(w, "FAILED: {e}")?;
        }
        w.flush()?;
    }
    let max_energy = max_drift(&traj.energy);
    let inv: BTreeMap<String, f64> = traj
        .invariants
        .iter()
        .map(|(k, v)| (k.clone(), max_drift(v)))
        .collect();
    let mut line = format!(
        "run {} {}: steps={} rows={} max|H-H0|={}",
        exp.id,
        spec.scheme,
        traj.n_steps(),
        rows,
        format_sci(max_energy, 3)
    );
    for (k, v) in &inv {
        line.push_str(&format!(" max|{k}-{k}0|={}", format_sci(*v, 3)));
    }
    line.push_str(&format!(" wall={wall:.3}s"));
    writeln!(out, "{line}")?;
    if let Some(e) = &failure {
        writeln!(out, "FAILED: {e}")?;
    }
    if json {
        let summary = json!({
            "spec": spec,
            "max_energy_defect": max_energy,
            "invariant_defects": inv,
            "rows_written": rows,
            "wall_seconds": wall,
        });
        writeln!(out, "{summary}")?;
    }
    Ok(if failure.is_some() { EXIT_FAILURE } else { EXIT_OK })
}

pub fn cmd_converge(spec: &RunSpec, json: bool, out: &mut dyn Write) -> CliResult<i32> {
    if spec.levels < 2 {
        return Err(CliError::Spec(format!("levels must be at least 2, got {}", spec.levels)));
    }
    step_count(spec.t_end, spec.h)?;
    let exp = Experiment::from_spec(spec)?;
    let rows: Vec<ConvergenceRow> = match convergence_study(
        exp.system.as_ref(),
        &exp.method,
        &exp.initial,
        spec.h,
        spec.levels,
        spec.t_end,
    ) {
        Ok(rows) => rows,
        Err(e @ Error::InvalidConfig(_)) => return Err(e.into()),
        Err(e) => {
            writeln!(out, "FAILED: {e}")?;
            return Ok(EXIT_FAILURE);
        }
    };
    writeln!(
        out,
        "converge {} {} lambda={} t_end={}",
        exp.id,
        spec.scheme,
        format_float(spec.lambda),
        format_float(spec.t_end)
    )?;
    writeln!(out, "{:<12} {:<10} Order", "h", "Error")?;
    for r in &rows {
        let order = r.order.map(|o| format!("{o:.2}")).unwrap_or_else(|| "-".into());
        writeln!(out, "{:<12} {:<10} {}", format_float(r.h), format_sci(r.error, 2), order)?;
    }
    if let Some(path) = &spec.out {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "h,error,order")?;
        for r in &rows {
            let order = r.order.map(format_float).unwrap_or_default();
            writeln!(w, "{},{},{}", format_float(r.h), format_float(r.error), order)?;
        }
        w.flush()?;
    }
    if json {
        writeln!(out, "{}", json!({ "spec": spec, "rows": rows }))?;
    }
    Ok(EXIT_OK)
}

pub fn cmd_symcheck(spec: &RunSpec, json: bool, out: &mut dyn Write) -> CliResult<i32> {
    if spec.trials == 0 {
        return Err(CliError::Spec("trials must be at least 1".into()));
    }
    let exp = Experiment::from_spec(spec)?;
    let cfg = match &exp.method {
        Method::Symplectic(cfg) => cfg.clone(),
        Method::Equip(_) => {
            return Err(CliError::Spec("symcheck applies to fixed-λ schemes only".into()));
        }
    };
    let mut rng = Lcg::new(spec.seed);
    let mut defects = Vec::with_capacity(spec.trials);
    for _ in 0..spec.trials {
        let s = exp.id.random_state(&mut rng)?;
        match symplecticity_defect(&cfg, exp.system.as_ref(), &s) {
            Ok(d) => defects.push(d),
            Err(e) => {
                writeln!(out, "FAILED: {e}")?;
                return Ok(EXIT_FAILURE);
            }
        }
    }
    let max = defects.iter().copied().fold(0.0f64, f64::max);
    let pass = max <= spec.threshold;
    writeln!(
        out,
        "symcheck {} {} lambda={} h={}: trials={} seed={} max defect={} threshold={} {}",
        exp.id,
        spec.scheme,
        format_float(spec.lambda),
        format_float(spec.h),
        spec.trials,
        spec.seed,
        format_sci(max, 3),
        format_sci(spec.threshold, 1),
        if pass { "PASS" } else { "FAIL" }
    )?;
    if json {
        writeln!(
            out,
            "{}",
            json!({ "spec": spec, "max_defect": max, "defects": defects, "pass": pass })
        )?;
    }
    Ok(if pass { EXIT_OK } else { EXIT_FAILURE })
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = if code == 0 {
                write!(out, "{e}")
            } else {
                write!(err, "{e}")
            };
            return code;
        }
    };
    let (common, result) = match &cli.command {
        Command::Run(a) => (
            &a.common,
            RunSpec::from_common(&a.common).map(|mut s| {
                if let Some(v) = a.stride {
                    s.stride = v;
                }
                s
            }),
        ),
        Command::Converge(a) => (
            &a.common,
            RunSpec::from_common(&a.common).map(|mut s| {
                if let Some(v) = a.levels {
                    s.levels = v;
                }
                s
            }),
        ),
        Command::Symcheck(a) => (
            &a.common,
            RunSpec::from_common(&a.common).map(|mut s| {
                if let Some(v) = a.trials {
                    s.trials = v;
                }
                if let Some(v) = a.seed {
                    s.seed = v;
                }
                if let Some(v) = a.threshold {
                    s.threshold = v;
                }
                s
            }),
        ),
    };
    let outcome = result.and_then(|spec| match &cli.command {
        Command::Run(_) => cmd_run(&spec, common.json, out),
        Command::Converge(_) => cmd_converge(&spec, common.json, out),
        Command::Symcheck(_) => cmd_symcheck(&spec, common.json, out),
    });
    match outcome {
        Ok(code) => code,
        Err(CliError::Spec(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_SPEC
        }
        Err(CliError::Io(e)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_FAILURE
        }
    }
}

pub fn main_entry() -> i32 {
    let stdout = io::stdout();
    let stderr = io::stderr();
    run_with_args(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
