//! The `itoreduce` command: validation and reduction of spec files, with JSON
//! reports.
//!
//! Exit codes: 0 pass, 1 I/O, parse or usage error, 2 validation failure,
//! 3 ill-posed feedback loop, 4 structural or adiabatic precondition failure.
//!
//! The report goes to stdout unless `--report PATH` is given, in which case
//! it is written to `PATH` and stdout gets a short summary. Diagnostics go to
//! stderr.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use crate::dynamics::{convergence_study, DensityMatrix};
use crate::error::Error;
use crate::generator::{from_slh, validate_fast_decoupling, validate_hp, validate_structure, ChannelRole};
use crate::generator::{ItoGeneratorMatrix, ScaledGeneratorFamily};
use crate::reduce::{adiabatic_report, check_commutativity, family_fingerprint, feedback_report, generator_fingerprint};
use crate::report::{serialize_real, ReductionReport, ReportSummary, DEFAULT_TOL};
use crate::spec_file::{decode_matrix, emit, parse, to_canonical_json, MatrixData, Network, SpecError};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_ILL_POSED: i32 = 3;
pub const EXIT_PRECONDITION: i32 = 4;

/// Environment variable overriding the default tolerance (the flag wins).
pub const TOL_ENV: &str = "ITOREDUCE_TOL";

/// Rate band reported, but not enforced, for error ratios under doubling `k`.
pub const RATE_BAND: (f64, f64) = (1.5, 2.5);

#[derive(Debug, Parser)]
#[command(name = "itoreduce", version, about = "Reduce quantum feedback networks given as Ito generator matrices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    /// Relative tolerance for every validator [env: ITOREDUCE_TOL] [default: 1e-9]
    #[arg(long)]
    pub tol: Option<f64>,
    /// Omit the timestamp and wall time from the report.
    #[arg(long)]
    pub no_timestamp: bool,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the HP conditions of a generator or SLH triple, or the
    /// structural and fast-decoupling conditions of a scaled family.
    Validate {
        path: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Close the internal feedback channels of a generator.
    Feedback {
        path: PathBuf,
        /// Comma-separated 0-based channel indices to treat as internal,
        /// overriding the roles in the file.
        #[arg(long, value_delimiter = ',')]
        internal: Option<Vec<usize>>,
        /// Coupling strength at which to instantiate a scaled family.
        #[arg(long)]
        k: Option<f64>,
        /// Write the reduced generator here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Adiabatically eliminate the fast subspace of a scaled family.
    Adiabatic {
        path: PathBuf,
        /// Write the reduced generator here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Compare both reduction orders and the joint elimination.
    Commute {
        path: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Compare full and reduced slow dynamics over a sweep of `k`.
    Converge {
        path: PathBuf,
        /// Comma-separated increasing coupling strengths.
        #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32")]
        k: Vec<f64>,
        /// Propagation time.
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        /// Initial slow state: a 0-based slow basis index, or a JSON file
        /// holding a density matrix as `[re, im]` rows. Defaults to the last
        /// slow basis vector.
        #[arg(long)]
        rho0: Option<String>,
        #[command(flatten)]
        common: CommonArgs,
    },
}

/// Failure carrying an exit code and a diagnostic.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn io(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_IO,
            message: message.into(),
        }
    }
}

impl From<SpecError> for Failure {
    fn from(e: SpecError) -> Self {
        let code = match e {
            SpecError::Invalid(_) => EXIT_VALIDATION,
            _ => EXIT_IO,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

/// Exit code a library error maps to.
pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::IllPosedFeedback { .. } => EXIT_ILL_POSED,
        Error::Structure(_)
        | Error::FastDecoupling { .. }
        | Error::KernelCondition { .. }
        | Error::SingularPivot { .. } => EXIT_PRECONDITION,
        _ => EXIT_VALIDATION,
    }
}

/// Exit code of a report: the most severe captured error, else 2 if any
/// check failed, else 0. Structural failures outrank ill-posed loops, which
/// outrank plain validation failures.
pub fn exit_code_for_report(r: &ReductionReport) -> i32 {
    let rank = |c: i32| match c {
        EXIT_PRECONDITION => 3,
        EXIT_ILL_POSED => 2,
        EXIT_VALIDATION => 1,
        _ => 0,
    };
    let worst = r.errors.values().map(exit_code_for).max_by_key(|&c| rank(c));
    match worst {
        Some(c) => c,
        None if r.passed => EXIT_PASS,
        None => EXIT_VALIDATION,
    }
}

fn resolve_tol(flag: Option<f64>) -> Result<f64, Failure> {
    let tol = match flag {
        Some(t) => t,
        None => match std::env::var(TOL_ENV) {
            Ok(s) => s
                .trim()
                .parse::<f64>()
                .map_err(|_| Failure::io(format!("{TOL_ENV}={s} is not a number")))?,
            Err(_) => DEFAULT_TOL,
        },
    };
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Failure::io(format!("tolerance must be positive and finite, got {tol}")));
    }
    Ok(tol)
}

fn read_network(path: &Path) -> Result<Network, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    Ok(parse(&text)?)
}

/// Write `contents` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "output path has no file name"))?;
    let mut tmp_name = OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn real_value(x: f64) -> Value {
    serialize_real(&x, serde_json::value::Serializer).expect("plain value")
}

/// Pieces of a report beyond the library record.
struct ReportContext<'a> {
    command: &'a str,
    input: &'a Path,
    kind: &'a str,
    tol: f64,
    common: &'a CommonArgs,
    started: Instant,
    extra: Map<String, Value>,
}

fn render_report(ctx: ReportContext<'_>, report: &ReductionReport, exit_code: i32) -> String {
    let summary = serde_json::to_value(ReportSummary::from(report)).expect("plain data");
    let mut root = match summary {
        Value::Object(m) => m,
        _ => unreachable!("summary is a struct"),
    };
    root.insert("tool".into(), json!({"name": "itoreduce", "version": env!("CARGO_PKG_VERSION")}));
    root.insert("command".into(), json!(ctx.command));
    root.insert("tolerance".into(), real_value(ctx.tol));
    root.insert("input_file".into(), json!(file_name(ctx.input)));
    root.insert("input_kind".into(), json!(ctx.kind));
    root.insert("exit_code".into(), json!(exit_code));
    let outputs: Map<String, Value> = report
        .outputs
        .iter()
        .map(|(name, g)| {
            let fp = generator_fingerprint(g);
            (
                name.clone(),
                json!({"dim": fp.dim, "channels": fp.channels, "hash": fp.hash}),
            )
        })
        .collect();
    root.insert("outputs".into(), Value::Object(outputs));
    root.extend(ctx.extra);
    if !ctx.common.no_timestamp {
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        root.insert("timestamp".into(), json!(now));
        root.insert("wall_time_seconds".into(), json!(ctx.started.elapsed().as_secs_f64()));
    }
    to_canonical_json(&Value::Object(root))
}

fn summary_line(command: &str, report: &ReductionReport, exit_code: i32) -> String {
    let verdict = if exit_code == EXIT_PASS { "PASS" } else { "FAIL" };
    let mut line = format!("{command}: {verdict} (exit {exit_code})");
    for (stage, e) in &report.errors {
        line.push_str(&format!("\n  {stage}: {e}"));
    }
    for frag in &report.fragments {
        for c in frag.failures() {
            line.push_str(&format!(
                "\n  {}/{}: {:e} exceeds {:e}",
                frag.name, c.name, c.residual, c.threshold
            ));
        }
    }
    line
}

struct Emitted {
    report_text: String,
    summary: String,
    table: Option<String>,
}

fn finish(
    ctx: ReportContext<'_>,
    report: &ReductionReport,
    exit_code: i32,
    table: Option<String>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let report_path = ctx.common.report.clone();
    let summary = summary_line(ctx.command, report, exit_code);
    let emitted = Emitted {
        report_text: render_report(ctx, report, exit_code),
        summary,
        table,
    };
    if exit_code != EXIT_PASS {
        let _ = writeln!(err, "{}", emitted.summary);
    }
    match report_path {
        Some(path) => {
            if let Err(e) = write_atomic(&path, &emitted.report_text) {
                let _ = writeln!(err, "cannot write report {}: {e}", path.display());
                return EXIT_IO;
            }
            if let Some(t) = &emitted.table {
                let _ = write!(out, "{t}");
            }
            let _ = writeln!(out, "report written to {}", path.display());
            if exit_code == EXIT_PASS {
                let _ = writeln!(out, "{}", emitted.summary);
            }
        }
        None => {
            let _ = write!(out, "{}", emitted.report_text);
        }
    }
    exit_code
}

fn write_output(out_path: Option<&PathBuf>, report: &ReductionReport, err: &mut dyn Write) -> Result<(), Failure> {
    if let (Some(path), Some(g)) = (out_path, report.output("reduced")) {
        write_atomic(path, &emit(&Network::Generator(g.clone())))
            .map_err(|e| Failure::io(format!("cannot write {}: {e}", path.display())))?;
        let _ = writeln!(err, "reduced generator written to {}", path.display());
    }
    Ok(())
}

fn require_family(net: Network, command: &str) -> Result<ScaledGeneratorFamily, Failure> {
    match net {
        Network::ScaledFamily(f) => Ok(f),
        other => Err(Failure::io(format!(
            "`{command}` needs a scaled_family spec, got `{}`",
            other.kind()
        ))),
    }
}

fn cmd_validate(path: &Path, common: &CommonArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let started = Instant::now();
    let tol = resolve_tol(common.tol)?;
    let net = read_network(path)?;
    let mut report = ReductionReport::new("validate");
    match &net {
        Network::Generator(g) => {
            report.input = Some(generator_fingerprint(g));
            report.push_fragment(validate_hp(g, tol));
        }
        Network::Slh(t, roles) => match from_slh(t).and_then(|g| g.with_roles(roles.clone())) {
            Ok(g) => {
                report.input = Some(generator_fingerprint(&g));
                report.push_fragment(validate_hp(&g, tol));
            }
            Err(e) => report.push_error("from_slh", e),
        },
        Network::ScaledFamily(f) => {
            report.input = Some(family_fingerprint(f));
            report.push_fragment(validate_structure(f, tol));
            report.push_fragment(validate_fast_decoupling(f, tol));
        }
    }
    // plain validation: any failure is exit 2
    let code = if report.passed { EXIT_PASS } else { EXIT_VALIDATION };
    let ctx = ReportContext {
        command: "validate",
        input: path,
        kind: net.kind(),
        tol,
        common,
        started,
        extra: Map::new(),
    };
    Ok(finish(ctx, &report, code, None, out, err))
}

fn with_internal(g: ItoGeneratorMatrix, internal: Option<&Vec<usize>>) -> Result<ItoGeneratorMatrix, Failure> {
    let Some(internal) = internal else { return Ok(g) };
    if let Some(&bad) = internal.iter().find(|&&j| j >= g.channels()) {
        return Err(Failure::io(format!(
            "--internal index {bad} out of range for {} channels",
            g.channels()
        )));
    }
    let roles = (0..g.channels())
        .map(|j| {
            if internal.contains(&j) {
                ChannelRole::Internal
            } else {
                ChannelRole::External
            }
        })
        .collect();
    g.with_roles(roles).map_err(|e| Failure::io(e.to_string()))
}

fn cmd_feedback(
    path: &Path,
    internal: Option<&Vec<usize>>,
    k: Option<f64>,
    out_path: Option<&PathBuf>,
    common: &CommonArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, Failure> {
    let started = Instant::now();
    let tol = resolve_tol(common.tol)?;
    let net = read_network(path)?;
    let kind = net.kind();
    let mut extra = Map::new();
    let generator = match net {
        Network::Generator(g) => g,
        Network::Slh(t, roles) => from_slh(&t)
            .and_then(|g| g.with_roles(roles))
            .map_err(|e| Failure {
                code: EXIT_VALIDATION,
                message: e.to_string(),
            })?,
        Network::ScaledFamily(f) => {
            let k = k.ok_or_else(|| Failure::io("a scaled_family spec needs --k"))?;
            extra.insert("k".into(), real_value(k));
            f.instantiate(k).map_err(|e| Failure {
                code: exit_code_for(&e),
                message: e.to_string(),
            })?
        }
    };
    let generator = with_internal(generator, internal)?;
    let report = feedback_report(&generator, tol);
    let code = exit_code_for_report(&report);
    if code == EXIT_PASS {
        write_output(out_path, &report, err)?;
    }
    let ctx = ReportContext {
        command: "feedback",
        input: path,
        kind,
        tol,
        common,
        started,
        extra,
    };
    Ok(finish(ctx, &report, code, None, out, err))
}

fn cmd_adiabatic(
    path: &Path,
    out_path: Option<&PathBuf>,
    common: &CommonArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, Failure> {
    let started = Instant::now();
    let tol = resolve_tol(common.tol)?;
    let fam = require_family(read_network(path)?, "adiabatic")?;
    let report = adiabatic_report(&fam, tol);
    let code = if report.errors.is_empty() && !report.passed {
        // a failed precondition fragment is a refusal, not a bad result
        let precondition_failed = ["structure", "fast_decoupling"]
            .iter()
            .any(|n| report.fragment(n).is_some_and(|f| !f.passed));
        if precondition_failed {
            EXIT_PRECONDITION
        } else {
            EXIT_VALIDATION
        }
    } else {
        exit_code_for_report(&report)
    };
    if code == EXIT_PASS {
        write_output(out_path, &report, err)?;
    }
    let ctx = ReportContext {
        command: "adiabatic",
        input: path,
        kind: "scaled_family",
        tol,
        common,
        started,
        extra: Map::new(),
    };
    Ok(finish(ctx, &report, code, None, out, err))
}

fn cmd_commute(path: &Path, common: &CommonArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let started = Instant::now();
    let tol = resolve_tol(common.tol)?;
    let fam = require_family(read_network(path)?, "commute")?;
    let report = check_commutativity(&fam, tol);
    let mut code = exit_code_for_report(&report);
    if code == EXIT_VALIDATION {
        let precondition_failed = ["structure", "fast_decoupling", "kernel_condition"]
            .iter()
            .any(|n| report.fragment(n).is_some_and(|f| !f.passed));
        if precondition_failed {
            code = EXIT_PRECONDITION;
        }
    }
    let ctx = ReportContext {
        command: "commute",
        input: path,
        kind: "scaled_family",
        tol,
        common,
        started,
        extra: Map::new(),
    };
    Ok(finish(ctx, &report, code, None, out, err))
}

fn initial_state(spec: Option<&str>, slow_dim: usize) -> Result<DensityMatrix, Failure> {
    let invalid = |e: Error| Failure {
        code: EXIT_VALIDATION,
        message: format!("--rho0: {e}"),
    };
    match spec {
        None => DensityMatrix::basis_state(slow_dim, slow_dim - 1).map_err(invalid),
        Some(s) => match s.parse::<usize>() {
            Ok(j) if j >= slow_dim => Err(Failure::io(format!(
                "--rho0 index {j} out of range for slow dimension {slow_dim}"
            ))),
            Ok(j) => DensityMatrix::basis_state(slow_dim, j).map_err(invalid),
            Err(_) => {
                let text = std::fs::read_to_string(s).map_err(|e| Failure::io(format!("--rho0 {s}: {e}")))?;
                let data: MatrixData =
                    serde_json::from_str(&text).map_err(|e| Failure::io(format!("--rho0 {s}: {e}")))?;
                let m = decode_matrix(&data, slow_dim, slow_dim, "rho0")?;
                DensityMatrix::new(m).map_err(invalid)
            }
        },
    }
}

fn cmd_converge(
    path: &Path,
    ks: &[f64],
    t: f64,
    rho0: Option<&str>,
    common: &CommonArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, Failure> {
    let started = Instant::now();
    let tol = resolve_tol(common.tol)?;
    if ks.is_empty() || ks.iter().any(|&k| !(k > 0.0 && k.is_finite())) || ks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Failure::io("--k must be a non-empty increasing list of positive numbers"));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Failure::io("--t must be finite and non-negative"));
    }
    let fam = require_family(read_network(path)?, "converge")?;
    let rho = initial_state(rho0, fam.decomposition().slow_dim())?;

    let mut report = ReductionReport::new("converge");
    report.input = Some(family_fingerprint(&fam));
    report.push_fragment(validate_structure(&fam, tol));
    report.push_fragment(validate_fast_decoupling(&fam, tol));
    report
        .notes
        .push("errors compare slow-subspace states under full and reduced master equations, a proxy for convergence of the unitaries".into());
    report
        .notes
        .push(format!("ratio band [{}, {}] per doubling of k is a heuristic and does not gate the exit code", RATE_BAND.0, RATE_BAND.1));

    let mut extra = Map::new();
    extra.insert("t".into(), real_value(t));
    let mut table_text = None;
    let mut code = EXIT_PASS;
    if !report.passed {
        code = EXIT_PRECONDITION;
    } else {
        match convergence_study(&fam, &rho, t, ks) {
            Ok(table) => {
                let rows: Vec<Value> = table
                    .rows
                    .iter()
                    .map(|r| json!({"k": real_value(r.k), "error": real_value(r.error)}))
                    .collect();
                extra.insert("table".into(), Value::Array(rows));
                let ratios: Vec<Value> = table.ratios().into_iter().map(|r| r.map_or(Value::Null, real_value)).collect();
                extra.insert("ratios".into(), Value::Array(ratios));
                let in_band: Vec<Value> = table
                    .ratios()
                    .into_iter()
                    .map(|r| r.map_or(Value::Null, |r| json!(r >= RATE_BAND.0 && r <= RATE_BAND.1)))
                    .collect();
                extra.insert("ratio_in_band".into(), Value::Array(in_band));
                let monotone = table.is_monotone();
                extra.insert("monotone".into(), json!(monotone));
                match monotone {
                    None => report.notes.push("single k value: monotonicity check skipped".into()),
                    Some(false) => {
                        report.passed = false;
                        code = EXIT_VALIDATION;
                    }
                    Some(true) => {}
                }
                let mut text = format!("{:>12}  {:>24}\n", "k", "trace distance");
                for r in &table.rows {
                    text.push_str(&format!("{:>12}  {:>24.16e}\n", r.k, r.error));
                }
                table_text = Some(text);
            }
            Err(e) => {
                code = exit_code_for(&e);
                report.push_error("convergence_study", e);
            }
        }
    }
    let ctx = ReportContext {
        command: "converge",
        input: path,
        kind: "scaled_family",
        tol,
        common,
        started,
        extra,
    };
    Ok(finish(ctx, &report, code, table_text, out, err))
}

/// Run the command line `args` (including the program name), writing to the
/// given streams. Returns the exit code.
pub fn run_with_io<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_IO } else { EXIT_PASS };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return code;
        }
    };
    let result = match &cli.command {
        Command::Validate { path, common } => cmd_validate(path, common, out, err),
        Command::Feedback {
            path,
            internal,
            k,
            out: out_path,
            common,
        } => cmd_feedback(path, internal.as_ref(), *k, out_path.as_ref(), common, out, err),
        Command::Adiabatic {
            path,
            out: out_path,
            common,
        } => cmd_adiabatic(path, out_path.as_ref(), common, out, err),
        Command::Commute { path, common } => cmd_commute(path, common, out, err),
        Command::Converge {
            path,
            k,
            t,
            rho0,
            common,
        } => cmd_converge(path, k, *t, rho0.as_deref(), common, out, err),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

/// Entry point used by the binary.
pub fn run() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with_io(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
