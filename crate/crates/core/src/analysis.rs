//! End-to-end pipelines: state or data in, verdict out.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{AlgebraError, Scenario};
use crate::format::{moment_docs, IngestError, KeyDoc, MomentDoc, ScenarioDoc, SCHEMA_VERSION};
use crate::hierarchy::{
    assemble_with_mode, build_structure, AffineMatrixFamily, HierarchyError, MomentMatrixStructure, PinMode,
    PinPolicy, VariableLabel,
};
use crate::quantum::{
    add_white_noise, correlator_table, make_state, standard_suite, CorrelatorTable, Moment, QuantumError,
    QuantumState, StateKind, SuiteKind,
};
use crate::sdp::{maximize_lambda_min, verify_certificate, DualCertificate, SdpError, SolveStatus, SolverConfig};

pub use crate::format::ingest_table;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("structure: {0}")]
    Structure(HierarchyError),
    #[error("simulation: {0}")]
    Simulation(#[from] QuantumError),
    #[error("assembly: {0}")]
    Assembly(HierarchyError),
    #[error("solve: {0}")]
    Solve(#[from] SdpError),
    #[error("report: {0}")]
    Report(String),
    #[error("ingest: {0}")]
    Ingest(#[from] IngestError),
    #[error("no bracket: at visibility {visibility} expected {expected}, got {found}")]
    NoBracket {
        visibility: f64,
        expected: Verdict,
        found: Verdict,
    },
    #[error("invalid tolerance {0}: must lie in (0, 1)")]
    InvalidTolerance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Nonlocal,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Nonlocal => "NONLOCAL",
            Verdict::Inconclusive => "INCONCLUSIVE",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    /// `p |ψ⟩⟨ψ| + (1 − p) I/2^n` measured with a standard suite.
    Simulated {
        state: StateKind,
        suite: SuiteKind,
        visibility: f64,
    },
    Measured(CorrelatorTable),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisRequest {
    pub source: Source,
    pub scenario: Scenario,
    pub level: usize,
    pub policy: PinPolicy,
    pub pin_mode: PinMode,
    pub solver: SolverConfig,
}

impl AnalysisRequest {
    /// Point pins and default solver settings.
    pub fn new(source: Source, scenario: Scenario, level: usize, policy: PinPolicy) -> Self {
        Self {
            source,
            scenario,
            level,
            policy,
            pin_mode: PinMode::Point,
            solver: SolverConfig::default(),
        }
    }

    pub fn simulated(state: StateKind, suite: SuiteKind, visibility: f64) -> Result<Self, AnalysisError> {
        let scenario = Scenario::dichotomic(3, suite.settings()).map_err(algebra_error)?;
        Ok(Self::new(
            Source::Simulated {
                state,
                suite,
                visibility,
            },
            scenario,
            2,
            PinPolicy::All,
        ))
    }
}

fn algebra_error(e: AlgebraError) -> AnalysisError {
    AnalysisError::Structure(e.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceEcho {
    Simulated {
        state: String,
        suite: String,
        visibility: f64,
    },
    Measured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyDoc {
    All,
    MaxBodies { k: usize },
    Explicit { keys: Vec<KeyDoc> },
}

impl From<&PinPolicy> for PolicyDoc {
    fn from(p: &PinPolicy) -> Self {
        match p {
            PinPolicy::All => PolicyDoc::All,
            PinPolicy::MaxBodies(k) => PolicyDoc::MaxBodies { k: *k },
            PinPolicy::Explicit(keys) => PolicyDoc::Explicit {
                keys: keys.iter().map(KeyDoc::from).collect(),
            },
        }
    }
}

impl PolicyDoc {
    pub fn to_policy(&self) -> Result<PinPolicy, AnalysisError> {
        Ok(match self {
            PolicyDoc::All => PinPolicy::All,
            PolicyDoc::MaxBodies { k } => PinPolicy::MaxBodies(*k),
            PolicyDoc::Explicit { keys } => PinPolicy::Explicit(
                keys.iter()
                    .map(|k| crate::algebra::MomentKey::from_external(&k.parties, &k.settings))
                    .collect::<Result<_, _>>()
                    .map_err(|e| AnalysisError::Report(e.to_string()))?,
            ),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PinModeDoc {
    Point,
    Interval { width: f64 },
}

impl From<PinMode> for PinModeDoc {
    fn from(m: PinMode) -> Self {
        match m {
            PinMode::Point => PinModeDoc::Point,
            PinMode::Interval { width } => PinModeDoc::Interval { width },
        }
    }
}

impl From<PinModeDoc> for PinMode {
    fn from(m: PinModeDoc) -> Self {
        match m {
            PinModeDoc::Point => PinMode::Point,
            PinModeDoc::Interval { width } => PinMode::Interval { width },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub scenario: ScenarioDoc,
    pub level: usize,
    pub policy: PolicyDoc,
    pub pin_mode: PinModeDoc,
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableDoc {
    pub label: String,
    pub lo: f64,
    pub hi: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    /// `⟨Γ0, Z⟩`; negative values bound `λ*` from above.
    pub value: f64,
    pub verified: bool,
    /// Row-major `Z`.
    pub z: Vec<Vec<f64>>,
}

impl CertificateSummary {
    pub fn to_certificate(&self) -> Result<DualCertificate, AnalysisError> {
        let n = self.z.len();
        if self.z.iter().any(|row| row.len() != n) {
            return Err(AnalysisError::Report("certificate matrix is not square".into()));
        }
        Ok(DualCertificate {
            z: DMatrix::from_fn(n, n, |i, j| self.z[i][j]),
            value: self.value,
        })
    }
}

/// Everything that depends only on the request, not on the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBody {
    pub verdict: Verdict,
    pub status: SolveStatus,
    pub lambda_star: f64,
    pub variables: Vec<VariableDoc>,
    pub certificate: Option<CertificateSummary>,
    pub pinned: Vec<MomentDoc>,
    pub config: ConfigEcho,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub schema_version: u32,
    pub source: SourceEcho,
    pub body: ReportBody,
    pub wall_time_ms: f64,
}

impl VerdictReport {
    pub fn verdict(&self) -> Verdict {
        self.body.verdict
    }

    pub fn lambda_star(&self) -> f64 {
        self.body.lambda_star
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(document: &str) -> Result<Self, AnalysisError> {
        let report: Self = serde_json::from_str(document).map_err(IngestError::from)?;
        if report.schema_version != SCHEMA_VERSION {
            return Err(IngestError::SchemaVersion(report.schema_version).into());
        }
        Ok(report)
    }
}

fn label(l: &VariableLabel, k: usize) -> String {
    match l {
        VariableLabel::Observable(key) => key.to_string(),
        VariableLabel::Free(id) => id.word().to_string(),
        VariableLabel::Anonymous => format!("v{k}"),
    }
}

fn assemble_stage(
    structure: &MomentMatrixStructure,
    table: &CorrelatorTable,
    policy: &PinPolicy,
    mode: PinMode,
) -> Result<(AffineMatrixFamily, Vec<MomentDoc>), AnalysisError> {
    let family = assemble_with_mode(structure, table, policy, mode).map_err(AnalysisError::Assembly)?;
    let keys = policy.select(structure).map_err(AnalysisError::Assembly)?;
    let pinned: Vec<(&_, &Moment)> = keys
        .iter()
        .map(|k| (k, table.get(k).expect("assembly checked coverage")))
        .collect();
    Ok((family, moment_docs(pinned)))
}

fn solve_stage(
    family: &AffineMatrixFamily,
    pinned: Vec<MomentDoc>,
    config: ConfigEcho,
    solver: &SolverConfig,
) -> Result<ReportBody, AnalysisError> {
    let outcome = maximize_lambda_min(family, solver)?;
    let certificate = outcome.certificate.as_ref().map(|c| CertificateSummary {
        value: c.value,
        verified: verify_certificate(family, c, solver.tol_cert),
        z: c.z.row_iter().map(|r| r.iter().copied().collect()).collect(),
    });
    let verdict = match (outcome.status, &certificate) {
        (SolveStatus::CertifiedInfeasible, Some(c)) if c.verified && c.value < -solver.margin => Verdict::Nonlocal,
        _ => Verdict::Inconclusive,
    };
    let variables = family
        .labels()
        .iter()
        .zip(family.bounds())
        .zip(outcome.v_star.iter())
        .enumerate()
        .map(|(k, ((l, &(lo, hi)), &value))| VariableDoc {
            label: label(l, k),
            lo,
            hi,
            value,
        })
        .collect();
    Ok(ReportBody {
        verdict,
        status: outcome.status,
        lambda_star: outcome.lambda_star,
        variables,
        certificate,
        pinned,
        config,
        iterations: outcome.iterations,
    })
}

fn simulate(
    state: &QuantumState,
    suite: SuiteKind,
    visibility: f64,
    structure: &MomentMatrixStructure,
) -> Result<CorrelatorTable, AnalysisError> {
    let noisy = add_white_noise(state, visibility)?;
    Ok(correlator_table(&noisy, &standard_suite(suite), structure)?)
}

/// Simulated correlator table for `state` under `suite` at the given visibility.
pub fn simulated_table(
    state: &StateKind,
    suite: SuiteKind,
    visibility: f64,
    scenario: &Scenario,
    level: usize,
) -> Result<CorrelatorTable, AnalysisError> {
    let structure = build_structure(scenario, level).map_err(AnalysisError::Structure)?;
    let pure = make_state(state, scenario.parties())?;
    simulate(&pure, suite, visibility, &structure)
}

/// Builds the structure, obtains the table, assembles, solves and maps the
/// status to a verdict. Only a verified certificate below `-margin` yields
/// `NONLOCAL`.
pub fn analyze(request: &AnalysisRequest) -> Result<VerdictReport, AnalysisError> {
    let start = Instant::now();
    request.solver.validate()?;
    let structure = build_structure(&request.scenario, request.level).map_err(AnalysisError::Structure)?;
    let (table, source) = match &request.source {
        Source::Simulated {
            state,
            suite,
            visibility,
        } => {
            if !(0.0..=1.0).contains(visibility) {
                return Err(QuantumError::InvalidVisibility(*visibility).into());
            }
            let pure = make_state(state, request.scenario.parties())?;
            let table = simulate(&pure, *suite, *visibility, &structure)?;
            let echo = SourceEcho::Simulated {
                state: state.to_string(),
                suite: suite.to_string(),
                visibility: *visibility,
            };
            (std::borrow::Cow::Owned(table), echo)
        }
        Source::Measured(table) => (std::borrow::Cow::Borrowed(table), SourceEcho::Measured),
    };
    let (family, pinned) = assemble_stage(&structure, &table, &request.policy, request.pin_mode)?;
    let config = ConfigEcho {
        scenario: (&request.scenario).into(),
        level: request.level,
        policy: (&request.policy).into(),
        pin_mode: request.pin_mode.into(),
        solver: request.solver.clone(),
    };
    let body = solve_stage(&family, pinned, config, &request.solver)?;
    Ok(VerdictReport {
        schema_version: SCHEMA_VERSION,
        source,
        body,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Rebuilds the family from a serialized report and re-verifies its
/// certificate. Returns `false` when there is no certificate, when it fails
/// verification, when its value disagrees with the report, or when a
/// `NONLOCAL` verdict is not backed by a value below `-margin`.
pub fn recheck_report(report: &VerdictReport) -> Result<bool, AnalysisError> {
    let body = &report.body;
    let Some(summary) = &body.certificate else {
        return Ok(false);
    };
    let cfg = &body.config;
    let scenario = cfg.scenario.to_scenario()?;
    let structure = build_structure(&scenario, cfg.level).map_err(AnalysisError::Structure)?;
    let mut table = CorrelatorTable::new(scenario);
    for (i, m) in body.pinned.iter().enumerate() {
        let key = crate::algebra::MomentKey::from_external(&m.parties, &m.settings)
            .map_err(|e| AnalysisError::Report(format!("pinned[{i}]: {e}")))?;
        table
            .insert(
                key,
                Moment {
                    value: m.value,
                    sigma: m.sigma,
                },
            )
            .map_err(|e| AnalysisError::Report(format!("pinned[{i}]: {e}")))?;
    }
    let policy = cfg.policy.to_policy()?;
    let family = assemble_with_mode(&structure, &table, &policy, cfg.pin_mode.into()).map_err(AnalysisError::Assembly)?;
    let cert = summary.to_certificate()?;
    if cert.z.nrows() != family.dim() {
        return Ok(false);
    }
    let tol = cfg.solver.tol_cert;
    if !verify_certificate(&family, &cert, tol) {
        return Ok(false);
    }
    if body.verdict == Verdict::Nonlocal && summary.value >= -cfg.solver.margin {
        return Ok(false);
    }
    Ok(true)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessRequest {
    pub state: StateKind,
    pub suite: SuiteKind,
    pub scenario: Scenario,
    pub level: usize,
    pub policy: PinPolicy,
    pub solver: SolverConfig,
    /// Bisection stops once the bracket is at most this wide.
    pub tol: f64,
}

impl RobustnessRequest {
    pub fn new(state: StateKind, suite: SuiteKind, tol: f64) -> Result<Self, AnalysisError> {
        Ok(Self {
            state,
            suite,
            scenario: Scenario::dichotomic(3, suite.settings()).map_err(algebra_error)?,
            level: 2,
            policy: PinPolicy::All,
            solver: SolverConfig::default(),
            tol,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisectionStep {
    pub visibility: f64,
    pub verdict: Verdict,
    pub lambda_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub schema_version: u32,
    pub state: String,
    pub suite: String,
    /// Midpoint of the final bracket.
    pub p_star: f64,
    /// Largest visibility seen `INCONCLUSIVE`.
    pub lower: f64,
    /// Smallest visibility seen `NONLOCAL`.
    pub upper: f64,
    pub steps: Vec<BisectionStep>,
    pub config: ConfigEcho,
}

/// Critical visibility for white-noise mixing. Assumes the `NONLOCAL` set is
/// an interval `(p*, 1]`; the bracket ends are re-solved with a doubled
/// iteration budget and a fresh seed, and any disagreement is reported as
/// `NoBracket`.
pub fn robustness(request: &RobustnessRequest) -> Result<RobustnessReport, AnalysisError> {
    if !(request.tol > 0.0 && request.tol < 1.0) {
        return Err(AnalysisError::InvalidTolerance(request.tol));
    }
    request.solver.validate()?;
    let structure = build_structure(&request.scenario, request.level).map_err(AnalysisError::Structure)?;
    let pure = make_state(&request.state, request.scenario.parties())?;
    let config = ConfigEcho {
        scenario: (&request.scenario).into(),
        level: request.level,
        policy: (&request.policy).into(),
        pin_mode: PinModeDoc::Point,
        solver: request.solver.clone(),
    };
    let run = |p: f64, solver: &SolverConfig| -> Result<BisectionStep, AnalysisError> {
        let table = simulate(&pure, request.suite, p, &structure)?;
        let (family, pinned) = assemble_stage(&structure, &table, &request.policy, PinMode::Point)?;
        let body = solve_stage(&family, pinned, config.clone(), solver)?;
        Ok(BisectionStep {
            visibility: p,
            verdict: body.verdict,
            lambda_star: body.lambda_star,
        })
    };
    let expect = |step: &BisectionStep, expected: Verdict| {
        if step.verdict == expected {
            Ok(())
        } else {
            Err(AnalysisError::NoBracket {
                visibility: step.visibility,
                expected,
                found: step.verdict,
            })
        }
    };

    let mut steps = Vec::new();
    let top = run(1.0, &request.solver)?;
    expect(&top, Verdict::Nonlocal)?;
    steps.push(top);
    let bottom = run(0.0, &request.solver)?;
    expect(&bottom, Verdict::Inconclusive)?;
    steps.push(bottom);

    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > request.tol {
        let mid = 0.5 * (lo + hi);
        let step = run(mid, &request.solver)?;
        match step.verdict {
            Verdict::Nonlocal => hi = mid,
            Verdict::Inconclusive => lo = mid,
        }
        steps.push(step);
    }

    let dense = SolverConfig {
        max_iters: request.solver.max_iters.saturating_mul(2),
        seed: request.solver.seed.wrapping_add(1),
        ..request.solver.clone()
    };
    expect(&run(hi, &dense)?, Verdict::Nonlocal)?;
    expect(&run(lo, &dense)?, Verdict::Inconclusive)?;

    Ok(RobustnessReport {
        schema_version: SCHEMA_VERSION,
        state: request.state.to_string(),
        suite: request.suite.to_string(),
        p_star: 0.5 * (lo + hi),
        lower: lo,
        upper: hi,
        steps,
        config,
    })
}
