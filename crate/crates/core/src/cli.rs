//! The `minhgr` command line.
//!
//! Every subcommand prints one JSON report on stdout:
//!
//! ```text
//! {"command": {...}, "input": {...}, "results": {...}, "schema": 1,
//!  "version": "...", "warnings": [...]}
//! ```
//!
//! Floats carry 17 significant digits and keys are sorted, so identical
//! inputs give byte-identical reports. Human-readable messages go to stderr.
//! Exit codes: 0 success, 2 unreadable or malformed input, 3 domain error,
//! 4 `construct` on a class where the bound is not tight.

use std::cell::RefCell;
use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Once;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::distributions::io::{
    read_dataset_csv, read_generic_csv, read_joint_csv, read_marginals_json, write_joint_csv,
    write_marginals_json,
};
use crate::distributions::{
    pairwise_from_dataset, pairwise_from_joint, AlphabetSpec, DiscreteJoint, PairwiseMarginalSet,
};
use crate::error::{Error, Result};
use crate::gaussian::{min_hgr_gaussian, read_moments_json, regression_vector};
use crate::hgr::{hgr_binary, hgr_svd, GenericJoint, HgrResult};
use crate::lowerbound::{assemble_qd, gamma_lb_iterative, lower_bound_closed, rho_lb};
use crate::numerics::Vector;
use crate::tightness::{
    additive_residual, check_tightness, construct_additive, decomposition_from_z,
    find_member_of_class, is_additive, near_uniform_probe, TightnessCertificate, Verdict,
    TIGHT_TOL,
};

pub const SCHEMA: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_DOMAIN: i32 = 3;
pub const EXIT_NOT_TIGHT: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "minhgr",
    version,
    about = "Minimum HGR correlation bounds for categorical X and binary Y"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact maximal correlation of a joint table.
    Oracle(OracleArgs),
    /// Separable lower bound from pairwise marginals.
    LowerBound(ClassArgs),
    /// Decide whether the lower bound is attained on the class.
    CheckTight(TightArgs),
    /// Build the additive distribution attaining the bound.
    Construct(ConstructArgs),
    /// Minimum maximal correlation under fixed first and second moments.
    Gaussian(GaussianArgs),
    /// Fraction of random near-uniform classes where the bound is tight.
    ProbeUniform(ProbeArgs),
    /// Write the pairwise marginals of a joint or dataset as JSON.
    Marginals(MarginalsArgs),
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct OracleInput {
    /// Joint CSV with header x1,...,xp,y,prob.
    #[arg(long)]
    joint: Option<PathBuf>,
    /// Two-alphabet joint CSV with header x,y,prob.
    #[arg(long)]
    generic: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[command(flatten)]
    input: OracleInput,
    /// Alphabet size for CSV input (default: largest label + 1).
    #[arg(long)]
    m: Option<usize>,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct ClassInput {
    /// Joint CSV with header x1,...,xp,y,prob.
    #[arg(long)]
    joint: Option<PathBuf>,
    /// Sample CSV with header x1,...,xp,y.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Pairwise marginals JSON.
    #[arg(long)]
    marginals: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ClassArgs {
    #[command(flatten)]
    input: ClassInput,
    /// Alphabet size for CSV input (default: largest label + 1).
    #[arg(long)]
    m: Option<usize>,
}

#[derive(Debug, Args)]
struct TightArgs {
    #[command(flatten)]
    class: ClassArgs,
    #[arg(long, default_value_t = TIGHT_TOL)]
    tol: f64,
}

#[derive(Debug, Args)]
struct ConstructArgs {
    #[command(flatten)]
    class: ClassArgs,
    /// Where to write the constructed joint CSV.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = TIGHT_TOL)]
    tol: f64,
}

#[derive(Debug, Args)]
struct GaussianArgs {
    /// Moments JSON {"mu": [...], "lambda": [...]}, Y last.
    #[arg(long)]
    moments: PathBuf,
}

#[derive(Debug, Args)]
struct ProbeArgs {
    #[arg(long)]
    p: usize,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = TIGHT_TOL)]
    tol: f64,
}

#[derive(Debug, Args)]
struct MarginalsArgs {
    #[command(flatten)]
    input: ClassInput,
    #[arg(long)]
    m: Option<usize>,
    /// Where to write the marginals JSON.
    #[arg(long)]
    out: PathBuf,
}

/// Failure of a command, mapped onto an exit code.
#[derive(Debug)]
enum Failure {
    Error(Error),
    /// `construct` on a non-tight class; the report is still printed.
    NotTight(Value),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

thread_local! {
    static WARNINGS: RefCell<Option<Vec<String>>> = const { RefCell::new(None) };
}

/// Collects library warnings for the report of the command running on this
/// thread.
struct WarningCollector;

impl log::Log for WarningCollector {
    fn enabled(&self, metadata: &log::Metadata) -> bool {
        metadata.level() <= log::Level::Warn
    }

    fn log(&self, record: &log::Record) {
        if self.enabled(record.metadata()) {
            WARNINGS.with(|w| {
                if let Some(buf) = w.borrow_mut().as_mut() {
                    buf.push(record.args().to_string());
                }
            });
        }
    }

    fn flush(&self) {}
}

static COLLECTOR: WarningCollector = WarningCollector;
static INIT_LOGGER: Once = Once::new();

fn capture_warnings<T>(f: impl FnOnce() -> T) -> (T, Vec<String>) {
    INIT_LOGGER.call_once(|| {
        if log::set_logger(&COLLECTOR).is_ok() {
            log::set_max_level(log::LevelFilter::Warn);
        }
    });
    WARNINGS.with(|w| *w.borrow_mut() = Some(Vec::new()));
    let out = f();
    let warnings = WARNINGS.with(|w| w.borrow_mut().take().unwrap_or_default());
    (out, warnings)
}

/// Writes every float as `{:.16e}`, with `-0` printed as `0`.
struct SigFigs;

impl serde_json::ser::Formatter for SigFigs {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        let value = if value == 0.0 { 0.0 } else { value };
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// Serializes `value` compactly with 17 significant digits per float.
pub fn to_report_string(value: &Value) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigFigs);
    serde::Serialize::serialize(value, &mut ser).expect("serializing a Value cannot fail");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

/// Input files read so far, in order, with their digests.
#[derive(Default)]
struct Inputs {
    files: Vec<Value>,
}

impl Inputs {
    fn read(&mut self, kind: &str, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path)
            .map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
        let digest: String = Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        self.files.push(json!({
            "kind": kind,
            "path": path.display().to_string(),
            "sha256": digest,
        }));
        Ok(bytes)
    }
}

fn write_file(
    path: &Path,
    body: impl FnOnce(&mut io::BufWriter<fs::File>) -> Result<()>,
) -> Result<()> {
    let mut w = io::BufWriter::new(fs::File::create(path)?);
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

fn vec_json(v: &Vector) -> Value {
    Value::from(v.iter().copied().collect::<Vec<f64>>())
}

fn opt_json(v: &[Option<f64>]) -> Value {
    Value::Array(
        v.iter()
            .map(|x| x.map_or(Value::Null, Value::from))
            .collect(),
    )
}

fn tables_json(f: &[Vec<f64>]) -> Value {
    Value::Array(f.iter().map(|fi| Value::from(fi.clone())).collect())
}

fn hgr_json(r: &HgrResult) -> Map<String, Value> {
    let mut out = Map::new();
    out.insert("rho".into(), r.rho.into());
    out.insert("f_star".into(), opt_json(&r.f_star));
    out.insert("g_star".into(), opt_json(&r.g_star));
    out.insert("degenerate".into(), r.degenerate.into());
    out
}

fn certificate_json(c: &TightnessCertificate) -> Value {
    json!({
        "verdict": match c.verdict { Verdict::Tight => "Tight", Verdict::NotTight => "NotTight" },
        "z_star": vec_json(&c.z_star),
        "h_pos": c.h_pos,
        "h_neg": c.h_neg,
        "lp_value": c.lp_value,
        "tol": c.tol,
        "gamma_lb": c.gamma_lb,
    })
}

/// What a `--joint | --data | --marginals` group resolved to.
struct ClassSource {
    marginals: PairwiseMarginalSet,
    /// A member of the class when one was supplied (the joint itself, or the
    /// empirical joint of a dataset).
    member: Option<DiscreteJoint>,
}

fn load_joint(inputs: &mut Inputs, path: &Path, m: Option<usize>) -> Result<DiscreteJoint> {
    let bytes = inputs.read("joint", path)?;
    read_joint_csv(bytes.as_slice(), m)
}

fn load_class(inputs: &mut Inputs, input: &ClassInput, m: Option<usize>) -> Result<ClassSource> {
    if let Some(path) = &input.joint {
        let joint = load_joint(inputs, path, m)?;
        Ok(ClassSource {
            marginals: pairwise_from_joint(&joint),
            member: Some(joint),
        })
    } else if let Some(path) = &input.data {
        let bytes = inputs.read("data", path)?;
        let data = read_dataset_csv(bytes.as_slice(), m)?;
        Ok(ClassSource {
            marginals: pairwise_from_dataset(&data),
            member: Some(data.empirical_joint()?),
        })
    } else if let Some(path) = &input.marginals {
        let bytes = inputs.read("marginals", path)?;
        Ok(ClassSource {
            marginals: read_marginals_json(bytes.as_slice())?,
            member: None,
        })
    } else {
        Err(Error::InvalidArgument(
            "one of --joint, --data, --marginals is required".into(),
        ))
    }
}

fn spec_json(spec: AlphabetSpec) -> Value {
    json!({ "p": spec.p(), "m": spec.m() })
}

fn cmd_oracle(args: &OracleArgs, inputs: &mut Inputs) -> Result<Value> {
    if let Some(path) = &args.input.generic {
        let bytes = inputs.read("generic", path)?;
        let g: GenericJoint = read_generic_csv(bytes.as_slice())?;
        let mut out = hgr_json(&hgr_svd(&g)?);
        out.insert("nx".into(), g.nx().into());
        out.insert("ny".into(), g.ny().into());
        return Ok(Value::Object(out));
    }
    let path = args.input.joint.as_ref().expect("clap enforces one input");
    let joint = load_joint(inputs, path, args.m)?;
    let binary = hgr_binary(&joint)?;
    let r = hgr_svd(&joint.flatten())?;
    let mut out = hgr_json(&r);
    out.insert("rho_binary".into(), binary.into());
    out.insert("method_delta".into(), (r.rho - binary).abs().into());
    out.insert("alphabet".into(), spec_json(joint.spec()));
    Ok(Value::Object(out))
}

fn cmd_lower_bound(args: &ClassArgs, inputs: &mut Inputs) -> Result<Value> {
    let src = load_class(inputs, &args.input, args.m)?;
    let system = assemble_qd(&src.marginals)?;
    system.require_nondegenerate_y()?;
    let closed = lower_bound_closed(&system)?;
    let iterative = gamma_lb_iterative(&system)?;
    Ok(json!({
        "alphabet": spec_json(system.spec()),
        "p_y1": system.p_y1(),
        "gamma_lb": closed.gamma_lb,
        "gamma_lb_iterative": iterative.gamma_lb,
        "gamma_delta": (closed.gamma_lb - iterative.gamma_lb).abs(),
        "rho_lb": closed.rho_lb,
        "z_star": vec_json(&closed.z_star),
    }))
}

fn check_tol(tol: f64) -> Result<()> {
    if tol >= 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "--tol must be a non-negative number, got {tol}"
        )))
    }
}

fn cmd_check_tight(args: &TightArgs, inputs: &mut Inputs) -> Result<Value> {
    check_tol(args.tol)?;
    let src = load_class(inputs, &args.class.input, args.class.m)?;
    let system = assemble_qd(&src.marginals)?;
    let cert = check_tightness(&system, args.tol)?;
    let mut out = certificate_json(&cert);
    out["alphabet"] = spec_json(system.spec());
    Ok(out)
}

fn cmd_construct(args: &ConstructArgs, inputs: &mut Inputs) -> std::result::Result<Value, Failure> {
    check_tol(args.tol)?;
    let src = load_class(inputs, &args.class.input, args.class.m)?;
    let system = assemble_qd(&src.marginals)?;
    let cert = check_tightness(&system, args.tol)?;
    if cert.verdict == Verdict::NotTight {
        return Err(Failure::NotTight(
            json!({ "certificate": certificate_json(&cert) }),
        ));
    }
    let base = match src.member {
        Some(j) => j,
        None => find_member_of_class(&src.marginals)?,
    };
    let star = construct_additive(&cert.z_star, &base, args.tol)?;
    let marginal_error = pairwise_from_joint(&star).max_abs_diff(&src.marginals);
    let spec = star.spec();
    let conditional_error = (0..star.x_states())
        .filter(|&x| star.p_x(x) > 0.0)
        .map(|x| {
            let zw: f64 = (0..spec.p())
                .map(|i| cert.z_star[spec.offset(i, spec.label(x, i))])
                .sum();
            (star.prob(x, 1) / star.p_x(x) - (0.5 + zw)).abs()
        })
        .fold(0.0, f64::max);
    let f = decomposition_from_z(&cert.z_star, spec)?;
    let residual = additive_residual(&star, &f)?;
    let fitted = is_additive(&star, 1e-9)?;
    let rho_star = hgr_svd(&star.flatten())?.rho;
    let rho_lb = rho_lb(&system)?;

    write_file(&args.out, |w| write_joint_csv(w, &star))?;

    Ok(json!({
        "certificate": certificate_json(&cert),
        "out": args.out.display().to_string(),
        "base": if args.class.input.marginals.is_none() { "input" } else { "feasibility_lp" },
        "marginal_max_error": marginal_error,
        "conditional_max_error": conditional_error,
        "f": tables_json(&f),
        "additive_residual": residual,
        "least_squares_residual": fitted.residual(),
        "hgr_pstar": rho_star,
        "rho_lb": rho_lb,
        "delta": (rho_star - rho_lb).abs(),
    }))
}

fn cmd_gaussian(args: &GaussianArgs, inputs: &mut Inputs) -> Result<Value> {
    let bytes = inputs.read("moments", &args.moments)?;
    let g = read_moments_json(bytes.as_slice())?;
    let rho = min_hgr_gaussian(&g)?;
    let a = regression_vector(&g)?;
    Ok(json!({
        "p": g.p(),
        "a": vec_json(&a),
        "var_y": g.var_y(),
        "min_hgr": rho,
    }))
}

fn cmd_probe(args: &ProbeArgs) -> Result<Value> {
    check_tol(args.tol)?;
    let spec = AlphabetSpec::new(args.p, args.m)?;
    let r = near_uniform_probe(spec, args.eps, args.trials, args.seed, args.tol)?;
    Ok(json!({
        "alphabet": spec_json(spec),
        "eps": args.eps,
        "seed": args.seed,
        "tol": args.tol,
        "trials": r.trials,
        "tight": r.tight,
        "fraction": r.fraction(),
    }))
}

fn cmd_marginals(args: &MarginalsArgs, inputs: &mut Inputs) -> Result<Value> {
    let src = load_class(inputs, &args.input, args.m)?;
    write_file(&args.out, |w| write_marginals_json(w, &src.marginals))?;
    Ok(json!({
        "alphabet": spec_json(src.marginals.spec()),
        "p_y1": src.marginals.p_y1(),
        "out": args.out.display().to_string(),
    }))
}

fn command_echo(args: &[OsString]) -> Value {
    let argv: Vec<String> = args
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    json!({ "name": argv.first().cloned().unwrap_or_default(), "argv": argv })
}

fn exit_code(e: &Error) -> i32 {
    if e.is_input_error() {
        EXIT_INPUT
    } else {
        EXIT_DOMAIN
    }
}

/// Runs the CLI with explicit argument list and streams; returns the exit
/// code.
pub fn run<O: Write, E: Write>(args: Vec<OsString>, stdout: &mut O, stderr: &mut E) -> i32 {
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                let _ = write!(stderr, "{e}");
                EXIT_INPUT
            } else {
                let _ = write!(stdout, "{e}");
                EXIT_OK
            };
            return code;
        }
    };
    let mut inputs = Inputs::default();
    let (outcome, warnings) = capture_warnings(|| match &cli.command {
        Command::Oracle(a) => cmd_oracle(a, &mut inputs).map_err(Failure::from),
        Command::LowerBound(a) => cmd_lower_bound(a, &mut inputs).map_err(Failure::from),
        Command::CheckTight(a) => cmd_check_tight(a, &mut inputs).map_err(Failure::from),
        Command::Construct(a) => cmd_construct(a, &mut inputs),
        Command::Gaussian(a) => cmd_gaussian(a, &mut inputs).map_err(Failure::from),
        Command::ProbeUniform(a) => cmd_probe(a).map_err(Failure::from),
        Command::Marginals(a) => cmd_marginals(a, &mut inputs).map_err(Failure::from),
    });
    for w in &warnings {
        let _ = writeln!(stderr, "warning: {w}");
    }
    let (results, code) = match outcome {
        Ok(v) => (v, EXIT_OK),
        Err(Failure::NotTight(v)) => {
            let _ = writeln!(stderr, "error: the lower bound is not tight on this class");
            (v, EXIT_NOT_TIGHT)
        }
        Err(Failure::Error(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            return exit_code(&e);
        }
    };
    let report = json!({
        "schema": SCHEMA,
        "command": command_echo(&args),
        "input": inputs.files,
        "results": results,
        "warnings": warnings,
        "version": env!("CARGO_PKG_VERSION"),
    });
    if writeln!(stdout, "{}", to_report_string(&report)).is_err() {
        return EXIT_INPUT;
    }
    code
}

/// Entry point for the binary.
pub fn main_entry() -> i32 {
    let args: Vec<OsString> = std::env::args_os().collect();
    run(args, &mut io::stdout().lock(), &mut io::stderr().lock())
}
