//! Command-line workflows over the self-testing library.
//!
//! Exit codes: 0 on pass, feasible or success; 1 on a failed verification, an infeasible
//! table or an uncertified bound; 2 on structural errors (bad options, files or schemas).

pub mod demo;
pub mod io;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;
use untrusted_selftest::hardy::{self, HardyError};
use untrusted_selftest::npa::{self, Membership, NpaError, ProbExpr, ProblemSpec, SdpStatus, SolverConfig, Weights};
use untrusted_selftest::scenario::{self, behavior_of, observed, Event, ScenarioError, ScenarioShape};
use untrusted_selftest::selftest::{self, canonical_qudit_realization, SelftestError};
use untrusted_selftest::tree::{protocol_of, SchmidtVector, TreeError};

use io::{BehaviorDoc, MembershipDoc, ObservedDoc, ProtocolDoc, RealizationDoc, ReportDoc, SdpDoc};

/// Environment variable capping the worker threads of parameter sweeps.
pub const THREADS_ENV: &str = "SELFTEST_NUM_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{file}: {message}")]
    Io { file: String, message: String },
    #[error("{file}: at \"{pointer}\": {message}")]
    Schema { file: String, pointer: String, message: String },
    #[error("at \"{pointer}\": {message}")]
    Invalid { pointer: String, message: String },
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Hardy(#[from] HardyError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Selftest(#[from] SelftestError),
    #[error(transparent)]
    Npa(#[from] NpaError),
}

impl CliError {
    pub fn invalid(pointer: &str, message: impl ToString) -> Self {
        Self::Invalid { pointer: pointer.into(), message: message.to_string() }
    }

    fn in_file(self, file: &Path) -> Self {
        match self {
            Self::Invalid { pointer, message } => Self::Schema { file: file.display().to_string(), pointer, message },
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "selftest", version, about = "Self-testing with untrusted setting sources")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the qudit protocol for a list of Schmidt coefficients.
    Protocol(ProtocolArgs),
    /// Produce a device and its behavior.
    Simulate(SimulateArgs),
    /// Check a device against a qubit or qudit self-test.
    Verify(VerifyArgs),
    /// Upper bound from the moment relaxation.
    Bound(BoundArgs),
    /// Quantum membership of an observed table.
    Membership(MembershipArgs),
    /// Parameter sweeps with CSV or JSON reports.
    Demo(DemoArgs),
}

#[derive(Debug, Args)]
pub struct ProtocolArgs {
    /// Comma-separated positive coefficients; fractions like 1/6 are accepted. Normalized.
    #[arg(long, value_delimiter = ',', required = true, value_parser = parse_number)]
    pub coeffs: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Canonical qudit device for a protocol file.
    #[arg(long, group = "source")]
    pub protocol: Option<PathBuf>,
    /// Canonical qudit device for these coefficients.
    #[arg(long, value_delimiter = ',', value_parser = parse_number, group = "source")]
    pub coeffs: Option<Vec<f64>>,
    /// Canonical tilted Hardy device.
    #[arg(long, group = "source", allow_hyphen_values = true)]
    pub hardy: Option<f64>,
    /// CHSH device with source-dependent states.
    #[arg(long, group = "source")]
    pub chsh_counterexample: bool,
    /// Seeded random device on the binary scenario.
    #[arg(long, group = "source")]
    pub random: bool,
    /// Existing realization file.
    #[arg(long, group = "source")]
    pub realization: Option<PathBuf>,
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_4)]
    pub alpha: f64,
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_4)]
    pub beta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Local dimensions of the random device.
    #[arg(long, value_delimiter = ',', default_value = "2,2")]
    pub dims: Vec<usize>,
    /// Copy a single-source device to all four binary source pairs with uniform weights.
    #[arg(long)]
    pub untrusted: bool,
    #[arg(long)]
    pub realization_out: Option<PathBuf>,
    #[arg(long)]
    pub behavior_out: Option<PathBuf>,
    #[arg(long)]
    pub observed_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, required = true)]
    pub realization: PathBuf,
    /// Qudit protocol to verify against.
    #[arg(long, group = "target", required_unless_present = "w")]
    pub protocol: Option<PathBuf>,
    /// Tilted Hardy parameter of a qubit test.
    #[arg(long, group = "target", allow_hyphen_values = true)]
    pub w: Option<f64>,
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Expression {
    Chsh,
    Hardy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Sources {
    Single,
    Untrusted,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    /// Problem file (sdp.v1); command-line options override its level and bounds.
    #[arg(long, conflicts_with = "expr")]
    pub spec: Option<PathBuf>,
    #[arg(long, value_enum, required_unless_present = "spec")]
    pub expr: Option<Expression>,
    #[arg(long, value_enum, default_value = "single")]
    pub sources: Sources,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub w: f64,
    #[arg(long)]
    pub level: Option<usize>,
    #[arg(long)]
    pub l: Option<f64>,
    #[arg(long)]
    pub u: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MembershipArgs {
    /// observed.v1 or behavior.v1 file.
    #[arg(long, required = true)]
    pub observed: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub level: usize,
    #[arg(long)]
    pub l: Option<f64>,
    #[arg(long)]
    pub u: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Result file (membership.v1), including the certificate when infeasible.
    #[arg(long, default_value = "membership.json")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DemoName {
    ChshCounterexample,
    HardySelftest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(value_enum)]
    pub name: DemoName,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of α grid points on [π/4 − span, π/4 + span].
    #[arg(long, default_value_t = 13)]
    pub points: usize,
    #[arg(long, default_value_t = 0.3)]
    pub span: f64,
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_4)]
    pub beta: f64,
    /// Hardy parameters of the self-test sweep.
    #[arg(long, value_delimiter = ',', default_value = "-0.2,0,0.25,0.5,0.75", allow_hyphen_values = true)]
    pub w: Vec<f64>,
    #[arg(long, default_value_t = 2)]
    pub level: usize,
    #[arg(long, default_value_t = hardy::OPTIMIZER_SEED)]
    pub seed: u64,
}

/// Accepts decimals and `p/q` fractions.
pub fn parse_number(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((p, q)) => {
            let p: f64 = p.trim().parse().map_err(|e| format!("{s}: {e}"))?;
            let q: f64 = q.trim().parse().map_err(|e| format!("{s}: {e}"))?;
            p / q
        }
        None => s.parse().map_err(|e| format!("{s}: {e}"))?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{s} is not a finite number"))
    }
}

fn check_w(w: f64) -> Result<()> {
    if w > hardy::W_MIN && w < hardy::W_MAX {
        Ok(())
    } else {
        Err(CliError::Usage(format!("w = {w} must lie in (-1/4, 1)")))
    }
}

fn check_level(level: usize) -> Result<()> {
    if (1..=npa::MAX_LEVEL).contains(&level) {
        Ok(())
    } else {
        Err(CliError::Usage(format!("level {level} must lie in [1, {}]", npa::MAX_LEVEL)))
    }
}

fn check_bounds(l: Option<f64>, u: Option<f64>) -> Result<Option<(f64, f64)>> {
    match (l, u) {
        (None, None) => Ok(None),
        (Some(l), Some(u)) if l > 0.0 && l <= u && u < 1.0 => Ok(Some((l, u))),
        (Some(l), Some(u)) => Err(CliError::Usage(format!("bounds need 0 < l <= u < 1, got l = {l}, u = {u}"))),
        _ => Err(CliError::Usage("--l and --u must be given together".into())),
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol < 1.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("tolerance {tol} must lie in (0, 1)")))
    }
}

fn solver_config(tol: Option<f64>) -> Result<SolverConfig> {
    let mut cfg = SolverConfig::default();
    if let Some(t) = tol {
        check_tol(t)?;
        cfg.feasibility_tol = t;
        cfg.gap_tol = t;
    }
    Ok(cfg)
}

/// Parse and run; returns the process exit code.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// `Ok(true)` on success, `Ok(false)` on a negative outcome.
pub fn dispatch(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Protocol(a) => protocol(a),
        Command::Simulate(a) => simulate(a),
        Command::Verify(a) => verify(a),
        Command::Bound(a) => bound(a),
        Command::Membership(a) => membership(a),
        Command::Demo(a) => demo::run(a),
    }
}

fn protocol(a: ProtocolArgs) -> Result<bool> {
    let c = SchmidtVector::normalized(&a.coeffs)?;
    let p = protocol_of(&c)?;
    println!("d = {}, root = {}", p.d, p.root);
    println!("edges: {}", p.tree.edges.iter().map(|(i, j)| format!("({i},{j})")).collect::<Vec<_>>().join(" "));
    println!("{:>8} {:>20} {:>20} {:>20} {:>8}", "edge", "w", "theta", "p", "swapped");
    for e in &p.per_edge {
        let edge = format!("({},{})", e.edge.0, e.edge.1);
        println!("{edge:>8} {:>20.12} {:>20.12} {:>20.12} {:>8}", e.w, e.theta, e.p, e.swapped);
    }
    if let Some(path) = a.out {
        io::write(&path, &ProtocolDoc::from_protocol(&p))?;
    }
    Ok(true)
}

fn simulate(a: SimulateArgs) -> Result<bool> {
    let r = if let Some(path) = &a.protocol {
        let p = io::read::<ProtocolDoc>(path)?.to_protocol().map_err(|e| e.in_file(path))?;
        canonical_qudit_realization(&p.coeffs, &p)?
    } else if let Some(c) = &a.coeffs {
        let c = SchmidtVector::normalized(c)?;
        canonical_qudit_realization(&c, &protocol_of(&c)?)?
    } else if let Some(w) = a.hardy {
        check_w(w)?;
        hardy::canonical_realization(w)?.realization
    } else if a.chsh_counterexample {
        scenario::chsh_counterexample(a.alpha, a.beta)?
    } else if a.random {
        let [da, db] = a.dims[..] else {
            return Err(CliError::Usage("--dims takes two local dimensions".into()));
        };
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        scenario::random_realization(ScenarioShape::binary(), (da, db), &mut rng)?
    } else if let Some(path) = &a.realization {
        io::read::<RealizationDoc>(path)?.to_realization().map_err(|e| e.in_file(path))?
    } else {
        return Err(CliError::Usage(
            "choose a device: --protocol, --coeffs, --hardy, --chsh-counterexample, --random or --realization".into(),
        ));
    };
    let r = if a.untrusted {
        if !r.shape().is_single_source() {
            return Err(CliError::Usage("--untrusted needs a single-source device".into()));
        }
        let sh = r.shape();
        r.lift_source_independent(ScenarioShape::wired(sh.nx, sh.ny, sh.na, sh.nb), &vec![1.0 / (sh.nx * sh.ny) as f64; sh.nx * sh.ny])?
    } else {
        r
    };
    let b = behavior_of(&r);
    let mut wrote = false;
    if let Some(path) = &a.realization_out {
        io::write(path, &RealizationDoc::from_realization(&r))?;
        wrote = true;
    }
    if let Some(path) = &a.observed_out {
        io::write(path, &ObservedDoc::from_observed(&observed(&b)?))?;
        wrote = true;
    }
    if let Some(path) = &a.behavior_out {
        io::write(path, &BehaviorDoc::from_behavior(&b))?;
        wrote = true;
    }
    if !wrote {
        print!("{}", io::to_string(&BehaviorDoc::from_behavior(&b)));
    }
    Ok(true)
}

fn verify(a: VerifyArgs) -> Result<bool> {
    check_tol(a.tol)?;
    let r = io::read::<RealizationDoc>(&a.realization)?.to_realization().map_err(|e| e.in_file(&a.realization))?;
    let (kind, report) = match (&a.protocol, a.w) {
        (Some(path), _) => {
            let p = io::read::<ProtocolDoc>(path)?.to_protocol().map_err(|e| e.in_file(path))?;
            ("qudit", selftest::verify_qudit(&r, &p, a.tol)?)
        }
        (None, Some(w)) => {
            check_w(w)?;
            ("qubit", selftest::verify_qubit(&r, w, a.tol)?)
        }
        (None, None) => return Err(CliError::Usage("give --protocol or --w".into())),
    };
    println!("{} (max deviation {:e})", if report.pass { "PASS" } else { "FAIL" }, report.max_deviation);
    for f in &report.failures {
        println!("  {f}");
    }
    let pass = report.pass;
    if let Some(path) = a.out {
        io::write(&path, &ReportDoc { schema: io::REPORT.into(), kind: kind.into(), report })?;
    }
    Ok(pass)
}

fn hardy_zeros(shape: &ScenarioShape) -> Vec<Event> {
    let mut out = Vec::new();
    for s in 0..shape.ns {
        for t in 0..shape.nt {
            out.extend(hardy::ZEROS.iter().map(|&(a, b, x, y)| Event::new(s, t, a, b, x, y)));
        }
    }
    out
}

/// Built-in problems: CHSH or tilted Hardy on one source pair or four binary pairs.
/// Untrusted sources use uniform fixed weights, or free weights when bounds are given.
pub fn builtin_spec(expr: Expression, sources: Sources, w: f64, level: usize, bounds: Option<(f64, f64)>) -> ProblemSpec {
    let shape = match sources {
        Sources::Single => ScenarioShape::single_source(2, 2, 2, 2),
        Sources::Untrusted => ScenarioShape::binary(),
    };
    let weights = match (sources, bounds) {
        (Sources::Untrusted, Some(_)) => Weights::Free,
        _ => Weights::Fixed(vec![1.0 / shape.source_pairs() as f64; shape.source_pairs()]),
    };
    let (objective, zeros) = match expr {
        Expression::Chsh => (ProbExpr::chsh(&shape), Vec::new()),
        Expression::Hardy => (ProbExpr::hardy(0, 0, w), hardy_zeros(&shape)),
    };
    ProblemSpec { shape, level, weights, zeros, values: Vec::new(), objective, residual_bounds: bounds }
}

fn bound(a: BoundArgs) -> Result<bool> {
    let bounds = check_bounds(a.l, a.u)?;
    let (mut spec, file_cfg) = match (&a.spec, a.expr) {
        (Some(path), _) => {
            let doc = io::read::<SdpDoc>(path)?;
            (doc.problem, doc.solver)
        }
        (None, Some(e)) => {
            if e == Expression::Hardy {
                check_w(a.w)?;
            }
            (builtin_spec(e, a.sources, a.w, a.level.unwrap_or(1), bounds), None)
        }
        (None, None) => return Err(CliError::Usage("give --spec or --expr".into())),
    };
    if let Some(level) = a.level {
        spec.level = level;
    }
    check_level(spec.level)?;
    if bounds.is_some() {
        spec.residual_bounds = bounds;
    }
    let cfg = match (a.tol, file_cfg) {
        (None, Some(c)) => c,
        (t, _) => solver_config(t)?,
    };
    let problem = npa::build_moment_problem(&spec)?;
    let sol = npa::solve_sdp(&problem, &cfg);
    let ok = sol.status == SdpStatus::Optimal;
    if ok {
        println!("{:.8}", sol.value);
    } else {
        println!("no certified bound: {:?}", sol.status);
    }
    eprintln!(
        "status {:?}, iterations {}, gap {:e}, residuals {:e} / {:e}",
        sol.status, sol.iterations, sol.gap, sol.primal_residual, sol.dual_residual
    );
    if let Some(path) = a.out {
        io::write(&path, &SdpDoc { schema: io::SDP.into(), problem: spec, solver: Some(cfg), solution: Some(sol) })?;
    }
    Ok(ok)
}

fn membership(a: MembershipArgs) -> Result<bool> {
    check_level(a.level)?;
    let bounds = check_bounds(a.l, a.u)?;
    let cfg = solver_config(a.tol)?;
    let file = a.observed.display().to_string();
    let text = std::fs::read_to_string(&a.observed).map_err(|e| CliError::Io { file: file.clone(), message: e.to_string() })?;
    let v = io::parse_value(&text, &file)?;
    let o = match io::schema_of(&v) {
        Some(io::BEHAVIOR) => {
            let b = io::from_value::<BehaviorDoc>(v, &file)?.to_behavior().map_err(|e| e.in_file(&a.observed))?;
            observed(&b)?
        }
        _ => io::from_value::<ObservedDoc>(v, &file)?.to_observed().map_err(|e| e.in_file(&a.observed))?,
    };
    let m = npa::membership_test(&o, a.level, bounds, &cfg)?;
    let ok = match &m {
        Membership::Feasible => {
            println!("feasible");
            true
        }
        Membership::Infeasible { certificate } => {
            println!("infeasible: certificate value {:e}", certificate.value);
            false
        }
        Membership::Unknown { status } => {
            println!("unknown: {status:?}");
            false
        }
    };
    io::write(&a.out, &MembershipDoc { schema: io::MEMBERSHIP.into(), level: a.level, bounds, membership: m })?;
    Ok(ok)
}
