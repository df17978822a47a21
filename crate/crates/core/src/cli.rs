//! `npa` command-line front end.
//!
//! Exit codes: 0 success or `INCONCLUSIVE`, 2 certified `NONLOCAL`, 1 error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::algebra::Scenario;
use crate::analysis::{
    analyze, robustness, simulated_table, AnalysisRequest, RobustnessRequest, Source, Verdict, VerdictReport,
};
use crate::format::{ingest_keys, ingest_table, structure_report, table_to_json};
use crate::hierarchy::{build_structure, PinMode, PinPolicy};
use crate::quantum::{StateKind, SuiteKind};
use crate::sdp::SolverConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NONLOCAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "npa", version, about = "Certify non-local correlations with the commuting moment-matrix hierarchy")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the moment-matrix structure for a scenario.
    Structure(StructureArgs),
    /// Decide whether correlations admit a commuting-operator model.
    Analyze(AnalyzeArgs),
    /// Validate a correlator table document.
    Ingest(IngestArgs),
    /// Bisect the critical white-noise visibility.
    Robustness(RobustnessArgs),
    /// List built-in states, or simulate and dump one correlator table.
    States(StatesArgs),
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Number of parties [default: 3]
    #[arg(long, value_parser = positive)]
    parties: Option<usize>,
    /// Settings per party [default: the suite's setting count]
    #[arg(long, value_parser = positive)]
    settings: Option<usize>,
    /// Hierarchy level
    #[arg(long, default_value_t = 2, value_parser = positive)]
    level: usize,
}

#[derive(Debug, Args)]
struct SolverArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Supergradient iterations per restart
    #[arg(long, default_value_t = 5000, value_parser = positive)]
    max_iters: usize,
    /// Certificate depth required for NONLOCAL
    #[arg(long, default_value_t = 1e-3, value_parser = positive_f64)]
    margin: f64,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            seed: self.seed,
            max_iters: self.max_iters,
            margin: self.margin,
            ..SolverConfig::default()
        }
    }
}

#[derive(Debug, Args)]
struct PinArgs {
    /// all | max-bodies:<k> | explicit:<file>
    #[arg(long, default_value = "all")]
    pin: String,
    /// Turn moments with a sigma into variables on value ± width·sigma
    #[arg(long, value_parser = non_negative_f64)]
    interval: Option<f64>,
}

impl PinArgs {
    fn policy(&self) -> Result<PinPolicy, String> {
        parse_policy(&self.pin)
    }

    fn mode(&self) -> PinMode {
        match self.interval {
            Some(width) => PinMode::Interval { width },
            None => PinMode::Point,
        }
    }
}

#[derive(Debug, Args)]
struct StructureArgs {
    #[arg(long, default_value_t = 3, value_parser = positive)]
    parties: usize,
    #[arg(long, default_value_t = 2, value_parser = positive)]
    settings: usize,
    #[arg(long, default_value_t = 2, value_parser = positive)]
    level: usize,
    /// Write the structure document here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// w | ghz | graph-linear | graph-loop | basis:<bits>
    #[arg(long, value_parser = parse_state, required_unless_present = "from_table")]
    state: Option<StateKind>,
    /// w | ghz | graph
    #[arg(long, value_parser = parse_suite, required_unless_present = "from_table")]
    suite: Option<SuiteKind>,
    /// Visibility p in p|ψ⟩⟨ψ| + (1 − p) I/2^n
    #[arg(long, default_value_t = 1.0, value_parser = unit_interval, conflicts_with = "from_table")]
    noise: f64,
    /// Analyze a correlator table document instead of a simulated state
    #[arg(long, conflicts_with_all = ["state", "suite"])]
    from_table: Option<PathBuf>,
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    pins: PinArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Write the verdict report here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Correlator table document
    table: PathBuf,
    /// Write the normalized table here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RobustnessArgs {
    #[arg(long, value_parser = parse_state)]
    state: StateKind,
    #[arg(long, value_parser = parse_suite)]
    suite: SuiteKind,
    /// Final bracket width
    #[arg(long, default_value_t = 1e-2, value_parser = open_unit_interval)]
    tol: f64,
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// all | max-bodies:<k> | explicit:<file>
    #[arg(long, default_value = "all")]
    pin: String,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StatesArgs {
    #[arg(long, value_parser = parse_state, requires = "suite")]
    state: Option<StateKind>,
    #[arg(long, value_parser = parse_suite, requires = "state")]
    suite: Option<SuiteKind>,
    /// Visibility p in p|ψ⟩⟨ψ| + (1 − p) I/2^n
    #[arg(long, default_value_t = 1.0, value_parser = unit_interval)]
    noise: f64,
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Write the simulated correlator table here
    #[arg(long, requires = "state")]
    dump: Option<PathBuf>,
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

fn float(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|e: std::num::ParseFloatError| e.to_string())?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err("must be finite".into())
    }
}

fn positive_f64(s: &str) -> Result<f64, String> {
    float(s).and_then(|x| if x > 0.0 { Ok(x) } else { Err("must be positive".into()) })
}

fn non_negative_f64(s: &str) -> Result<f64, String> {
    float(s).and_then(|x| if x >= 0.0 { Ok(x) } else { Err("must be non-negative".into()) })
}

fn unit_interval(s: &str) -> Result<f64, String> {
    float(s).and_then(|x| {
        if (0.0..=1.0).contains(&x) {
            Ok(x)
        } else {
            Err("must lie in [0, 1]".into())
        }
    })
}

fn open_unit_interval(s: &str) -> Result<f64, String> {
    float(s).and_then(|x| {
        if x > 0.0 && x < 1.0 {
            Ok(x)
        } else {
            Err("must lie in (0, 1)".into())
        }
    })
}

fn parse_state(s: &str) -> Result<StateKind, String> {
    s.parse().map_err(|e: crate::quantum::QuantumError| e.to_string())
}

fn parse_suite(s: &str) -> Result<SuiteKind, String> {
    s.parse().map_err(|e: crate::quantum::QuantumError| e.to_string())
}

fn parse_policy(s: &str) -> Result<PinPolicy, String> {
    if s == "all" {
        return Ok(PinPolicy::All);
    }
    if let Some(k) = s.strip_prefix("max-bodies:") {
        return k
            .parse()
            .map(PinPolicy::MaxBodies)
            .map_err(|_| format!("invalid body count in --pin {s}"));
    }
    if let Some(path) = s.strip_prefix("explicit:") {
        let doc = read(Path::new(path))?;
        return ingest_keys(&doc)
            .map(PinPolicy::Explicit)
            .map_err(|e| format!("{path}: {e}"));
    }
    Err(format!("unknown pin policy '{s}' (expected all, max-bodies:<k> or explicit:<file>)"))
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), String> {
    let mut text = contents.to_owned();
    text.push('\n');
    fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn scenario_for(args: &ScenarioArgs, suite: SuiteKind) -> Result<Scenario, String> {
    Scenario::dichotomic(args.parties.unwrap_or(3), args.settings.unwrap_or(suite.settings())).map_err(|e| e.to_string())
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_ERROR
                }
            };
        }
    };
    let result = match cli.command {
        Command::Structure(a) => cmd_structure(a, out),
        Command::Analyze(a) => cmd_analyze(a, out),
        Command::Ingest(a) => cmd_ingest(a, out),
        Command::Robustness(a) => cmd_robustness(a, out),
        Command::States(a) => cmd_states(a, out),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_ERROR
        }
    }
}

fn cmd_structure(a: StructureArgs, out: &mut dyn Write) -> Result<i32, String> {
    let scenario = Scenario::dichotomic(a.parties, a.settings).map_err(|e| e.to_string())?;
    let s = build_structure(&scenario, a.level).map_err(|e| e.to_string())?;
    let report = structure_report(&s);
    let words = report.basis.join(" ");
    writeln!(out, "scenario {scenario}, level {}", a.level).map_err(io)?;
    writeln!(out, "dim {}", s.dim()).map_err(io)?;
    writeln!(out, "observable moments {}", s.observables().len()).map_err(io)?;
    writeln!(out, "free variables {}", s.freevars().len()).map_err(io)?;
    writeln!(out, "basis {words}").map_err(io)?;
    if let Some(path) = a.out {
        write_file(&path, &serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?)?;
    }
    Ok(EXIT_OK)
}

fn io(e: std::io::Error) -> String {
    e.to_string()
}

fn print_report(report: &VerdictReport, out: &mut dyn Write) -> Result<(), String> {
    let b = &report.body;
    let status = serde_json::to_value(b.status).map_err(|e| e.to_string())?;
    writeln!(out, "verdict: {}", b.verdict).map_err(io)?;
    writeln!(out, "status: {}", status.as_str().unwrap_or_default()).map_err(io)?;
    writeln!(out, "lambda*: {:.6e}", b.lambda_star).map_err(io)?;
    match &b.certificate {
        Some(c) => writeln!(
            out,
            "certificate: value {:.6e}, {}",
            c.value,
            if c.verified { "verified" } else { "not verified" }
        ),
        None => writeln!(out, "certificate: none"),
    }
    .map_err(io)?;
    writeln!(
        out,
        "pinned moments: {}, variables: {}, iterations: {}",
        b.pinned.len(),
        b.variables.len(),
        b.iterations
    )
    .map_err(io)?;
    writeln!(out, "wall time: {:.1} ms", report.wall_time_ms).map_err(io)
}

fn cmd_analyze(a: AnalyzeArgs, out: &mut dyn Write) -> Result<i32, String> {
    let (source, scenario) = match (&a.from_table, a.state, a.suite) {
        (Some(path), _, _) => {
            let table = ingest_table(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))?;
            let scenario = *table.scenario();
            let clash = a.scenario.parties.is_some_and(|p| p != scenario.parties())
                || a.scenario.settings.is_some_and(|m| m != scenario.settings());
            if clash {
                return Err(format!("--parties/--settings disagree with the table scenario {scenario}"));
            }
            (Source::Measured(table), scenario)
        }
        (None, Some(state), Some(suite)) => {
            let scenario = scenario_for(&a.scenario, suite)?;
            let source = Source::Simulated {
                state,
                suite,
                visibility: a.noise,
            };
            (source, scenario)
        }
        _ => return Err("either --from-table or both --state and --suite are required".into()),
    };
    let request = AnalysisRequest {
        source,
        scenario,
        level: a.scenario.level,
        policy: a.pins.policy()?,
        pin_mode: a.pins.mode(),
        solver: a.solver.config(),
    };
    let report = analyze(&request).map_err(|e| e.to_string())?;
    print_report(&report, out)?;
    if let Some(path) = a.out {
        write_file(&path, &report.to_json())?;
    }
    Ok(match report.verdict() {
        Verdict::Nonlocal => EXIT_NONLOCAL,
        Verdict::Inconclusive => EXIT_OK,
    })
}

fn cmd_ingest(a: IngestArgs, out: &mut dyn Write) -> Result<i32, String> {
    let table = ingest_table(&read(&a.table)?).map_err(|e| format!("{}: {e}", a.table.display()))?;
    writeln!(out, "ok: {} moments, scenario {}", table.len(), table.scenario()).map_err(io)?;
    if let Some(path) = a.out {
        write_file(&path, &table_to_json(&table))?;
    }
    Ok(EXIT_OK)
}

fn cmd_robustness(a: RobustnessArgs, out: &mut dyn Write) -> Result<i32, String> {
    let request = RobustnessRequest {
        scenario: scenario_for(&a.scenario, a.suite)?,
        level: a.scenario.level,
        policy: parse_policy(&a.pin)?,
        solver: a.solver.config(),
        tol: a.tol,
        state: a.state,
        suite: a.suite,
    };
    let report = robustness(&request).map_err(|e| e.to_string())?;
    for s in &report.steps {
        writeln!(out, "p = {:.6}  {:<12}  lambda* = {:.6e}", s.visibility, s.verdict, s.lambda_star).map_err(io)?;
    }
    writeln!(
        out,
        "p* = {:.6} in [{:.6}, {:.6}]",
        report.p_star, report.lower, report.upper
    )
    .map_err(io)?;
    if let Some(path) = a.out {
        write_file(&path, &serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?)?;
    }
    Ok(EXIT_OK)
}

fn cmd_states(a: StatesArgs, out: &mut dyn Write) -> Result<i32, String> {
    let (Some(state), Some(suite)) = (a.state, a.suite) else {
        writeln!(out, "states: w ghz graph-linear graph-loop basis:<bits>").map_err(io)?;
        writeln!(out, "suites: w (σx, σz)  ghz (σx, (σz+σx)/√2)  graph (σx, σz, (σz+σx)/√2)").map_err(io)?;
        return Ok(EXIT_OK);
    };
    let scenario = scenario_for(&a.scenario, suite)?;
    let table = simulated_table(&state, suite, a.noise, &scenario, a.scenario.level).map_err(|e| e.to_string())?;
    writeln!(out, "{state} / {suite} suite, p = {}, scenario {scenario}", a.noise).map_err(io)?;
    for (k, m) in table.iter() {
        writeln!(out, "{k:<12} {:+.6}", m.value).map_err(io)?;
    }
    if let Some(path) = a.dump {
        write_file(&path, &table_to_json(&table))?;
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let argv = std::iter::once("npa").chain(args.iter().copied());
        let code = run(argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_one() {
        for args in [
            &[][..],
            &["bogus"],
            &["structure", "--unknown"],
            &["structure", "--parties", "0"],
            &["analyze", "--state", "w"],
            &["analyze", "--state", "x", "--suite", "w"],
            &["analyze", "--state", "w", "--suite", "w", "--noise", "1.5"],
            &["analyze", "--state", "w", "--suite", "w", "--margin", "-1"],
            &["analyze", "--state", "w", "--suite", "w", "--max-iters", "0"],
            &["analyze", "--state", "w", "--suite", "w", "--pin", "some"],
            &["robustness", "--state", "w", "--suite", "w", "--tol", "1"],
            &["states", "--state", "w"],
        ] {
            let (code, _, err) = run_capture(args);
            assert_eq!(code, EXIT_ERROR, "{args:?}");
            assert!(!err.is_empty(), "{args:?}");
        }
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run_capture(&["--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("robustness"));
    }

    #[test]
    fn structure_summary() {
        let (code, out, _) = run_capture(&["structure"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("dim 22"));
        assert!(out.contains("observable moments 26"));
        assert!(out.contains("free variables 30"));
    }

    #[test]
    fn policies() {
        assert_eq!(parse_policy("all").unwrap(), PinPolicy::All);
        assert_eq!(parse_policy("max-bodies:2").unwrap(), PinPolicy::MaxBodies(2));
        assert!(parse_policy("max-bodies:x").is_err());
        assert!(parse_policy("explicit:/nonexistent/keys.json").is_err());
    }

    #[test]
    fn missing_file_is_an_error() {
        let (code, _, err) = run_capture(&["ingest", "/nonexistent/table.json"]);
        assert_eq!(code, EXIT_ERROR);
        assert!(err.contains("table.json"));
    }
}
