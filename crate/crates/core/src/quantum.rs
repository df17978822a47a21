//! Dense few-qubit simulation: states, measurement suites and correlators.
//!
//! Qubit `q` (0-based) is party `q + 1` and is the `q`-th tensor factor
//! from the left, i.e. bit `n - 1 - q` of a computational basis index.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Complex, DMatrix, DVector, Matrix2};
use thiserror::Error;

use crate::algebra::{Letter, MomentKey, Scenario};
use crate::hierarchy::{MomentMatrixStructure, RANGE_SLACK};

pub type C64 = Complex<f64>;
/// Single-qubit operator.
pub type Qubit = Matrix2<C64>;

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;
const IMAG_TOL: f64 = 1e-10;
// eigenvalues below this are rounding noise; their square roots are not
const SQRT_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuantumError {
    #[error("operator is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),
    #[error("operator does not square to the identity (deviation {0:e})")]
    NotInvolution(f64),
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("state {kind} is not supported for {qubits} qubits")]
    Unsupported { kind: String, qubits: usize },
    #[error("unknown state `{0}` (expected w, ghz, graph-linear, graph-loop or basis:<bits>)")]
    UnknownState(String),
    #[error("unknown suite `{0}` (expected w, ghz or graph)")]
    UnknownSuite(String),
    #[error("visibility {0} outside [0, 1]")]
    InvalidVisibility(f64),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("assignment is empty or names party {0} twice / out of range")]
    BadAssignment(usize),
    #[error("expectation has imaginary part {0:e}")]
    ImaginaryResidue(f64),
    #[error("suite has no operator for party {party} setting {setting}")]
    SuiteTooSmall { party: usize, setting: usize },
    #[error("state has {state} qubits but scenario has {scenario} parties")]
    PartyMismatch { state: usize, scenario: usize },
    #[error("malformed distribution: {0}")]
    MalformedDistribution(String),
    #[error("graph edge ({0}, {1}) is invalid")]
    BadEdge(usize, usize),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TableError {
    #[error("duplicate moment {0}")]
    DuplicateMoment(MomentKey),
    #[error("moment {key} = {value} lies outside [-1, 1]")]
    RangeError { key: MomentKey, value: f64 },
    #[error("moment {key} has invalid sigma {sigma}")]
    InvalidSigma { key: MomentKey, sigma: f64 },
    #[error("moment {key} does not belong to scenario {scenario}")]
    ForeignKey { key: MomentKey, scenario: Scenario },
}

pub fn identity2() -> Qubit {
    Matrix2::identity()
}

pub fn pauli_x() -> Qubit {
    Matrix2::new(c(0.0), c(1.0), c(1.0), c(0.0))
}

pub fn pauli_y() -> Qubit {
    Matrix2::new(c(0.0), C64::new(0.0, -1.0), C64::new(0.0, 1.0), c(0.0))
}

pub fn pauli_z() -> Qubit {
    Matrix2::new(c(1.0), c(0.0), c(0.0), c(-1.0))
}

/// `(σz + σx)/√2`.
pub fn pauli_zx() -> Qubit {
    (pauli_z() + pauli_x()).unscale(std::f64::consts::SQRT_2)
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn hermitian_deviation(m: &DMatrix<C64>) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn check_observable(op: &Qubit) -> Result<(), QuantumError> {
    let herm = (op - op.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if herm > HERMITIAN_TOL {
        return Err(QuantumError::NotHermitian(herm));
    }
    let inv = (op * op - identity2()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if inv > HERMITIAN_TOL {
        return Err(QuantumError::NotInvolution(inv));
    }
    Ok(())
}

/// Eigenvalues and eigenvectors of a Hermitian matrix.
fn hermitian_eigen(m: &DMatrix<C64>) -> (DVector<f64>, DMatrix<C64>) {
    let eig = m.clone().symmetric_eigen();
    (eig.eigenvalues, eig.eigenvectors)
}

/// Density operator on `n` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    n: usize,
    rho: DMatrix<C64>,
}

impl QuantumState {
    pub fn from_density(rho: DMatrix<C64>) -> Result<Self, QuantumError> {
        let dim = rho.nrows();
        if dim != rho.ncols() || dim < 2 || !dim.is_power_of_two() {
            return Err(QuantumError::InvalidState(format!(
                "{}x{} is not a qubit register",
                dim,
                rho.ncols()
            )));
        }
        let herm = hermitian_deviation(&rho);
        if herm > HERMITIAN_TOL {
            return Err(QuantumError::InvalidState(format!("not Hermitian ({herm:e})")));
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(QuantumError::InvalidState(format!("trace {tr}")));
        }
        let (vals, _) = hermitian_eigen(&rho);
        let min = vals.min();
        if min < -PSD_TOL {
            return Err(QuantumError::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(Self {
            n: dim.trailing_zeros() as usize,
            rho,
        })
    }

    /// Projector onto a (normalized internally) state vector.
    pub fn from_pure(psi: &DVector<C64>) -> Result<Self, QuantumError> {
        let norm = psi.norm();
        if norm == 0.0 {
            return Err(QuantumError::InvalidState("zero vector".into()));
        }
        let psi = psi.unscale(norm);
        Self::from_density(&psi * psi.adjoint())
    }

    pub fn maximally_mixed(n: usize) -> Self {
        let dim = 1usize << n;
        Self {
            n,
            rho: DMatrix::identity(dim, dim).unscale(dim as f64),
        }
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn density(&self) -> &DMatrix<C64> {
        &self.rho
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum StateKind {
    W,
    Ghz,
    GraphLinear,
    GraphLoop,
    /// Computational basis state, leftmost bit is party 1.
    Basis(Vec<bool>),
}

impl FromStr for StateKind {
    type Err = QuantumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "w" => Ok(Self::W),
            "ghz" => Ok(Self::Ghz),
            "graph-linear" => Ok(Self::GraphLinear),
            "graph-loop" => Ok(Self::GraphLoop),
            _ => {
                let bits = s
                    .strip_prefix("basis:")
                    .filter(|b| !b.is_empty())
                    .ok_or_else(|| QuantumError::UnknownState(s.into()))?;
                bits.chars()
                    .map(|ch| match ch {
                        '0' => Ok(false),
                        '1' => Ok(true),
                        _ => Err(QuantumError::UnknownState(s.into())),
                    })
                    .collect::<Result<Vec<_>, _>>()
                    .map(Self::Basis)
            }
        }
    }
}

impl fmt::Display for StateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::W => f.write_str("w"),
            Self::Ghz => f.write_str("ghz"),
            Self::GraphLinear => f.write_str("graph-linear"),
            Self::GraphLoop => f.write_str("graph-loop"),
            Self::Basis(bits) => {
                f.write_str("basis:")?;
                bits.iter().try_for_each(|&b| f.write_str(if b { "1" } else { "0" }))
            }
        }
    }
}

/// Graph state: `|+⟩^⊗n` followed by a controlled-Z on every edge.
pub fn graph_state(n: usize, edges: &[(usize, usize)]) -> Result<QuantumState, QuantumError> {
    if n == 0 {
        return Err(QuantumError::Unsupported {
            kind: "graph".into(),
            qubits: 0,
        });
    }
    if let Some(&(a, b)) = edges.iter().find(|(a, b)| a == b || *a >= n || *b >= n) {
        return Err(QuantumError::BadEdge(a, b));
    }
    let dim = 1usize << n;
    let bit = |idx: usize, q: usize| (idx >> (n - 1 - q)) & 1 == 1;
    let psi = DVector::from_fn(dim, |idx, _| {
        let flips = edges.iter().filter(|&&(a, b)| bit(idx, a) && bit(idx, b)).count();
        c(if flips % 2 == 0 { 1.0 } else { -1.0 })
    });
    QuantumState::from_pure(&psi)
}

pub fn make_state(kind: &StateKind, n: usize) -> Result<QuantumState, QuantumError> {
    let unsupported = || QuantumError::Unsupported {
        kind: kind.to_string(),
        qubits: n,
    };
    if n == 0 || n > 12 {
        return Err(unsupported());
    }
    let dim = 1usize << n;
    match kind {
        StateKind::W | StateKind::Ghz if n < 2 => Err(unsupported()),
        StateKind::W => {
            let mut psi = DVector::zeros(dim);
            for q in 0..n {
                psi[1 << q] = c(1.0);
            }
            QuantumState::from_pure(&psi)
        }
        StateKind::Ghz => {
            let mut psi = DVector::zeros(dim);
            psi[0] = c(1.0);
            psi[dim - 1] = c(1.0);
            QuantumState::from_pure(&psi)
        }
        StateKind::GraphLinear if n == 3 => graph_state(3, &[(0, 1), (1, 2)]),
        StateKind::GraphLoop if n == 3 => graph_state(3, &[(0, 1), (1, 2), (0, 2)]),
        StateKind::GraphLinear | StateKind::GraphLoop => Err(unsupported()),
        StateKind::Basis(bits) => {
            if bits.len() != n {
                return Err(unsupported());
            }
            let idx = bits.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
            let mut psi = DVector::zeros(dim);
            psi[idx] = c(1.0);
            QuantumState::from_pure(&psi)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SuiteKind {
    /// σx, σz
    W,
    /// σx, (σz+σx)/√2
    Ghz,
    /// σx, σz, (σz+σx)/√2
    Graph,
}

impl SuiteKind {
    pub fn settings(&self) -> usize {
        match self {
            Self::W | Self::Ghz => 2,
            Self::Graph => 3,
        }
    }
}

impl FromStr for SuiteKind {
    type Err = QuantumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "w" => Ok(Self::W),
            "ghz" => Ok(Self::Ghz),
            "graph" => Ok(Self::Graph),
            _ => Err(QuantumError::UnknownSuite(s.into())),
        }
    }
}

impl fmt::Display for SuiteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::W => "w",
            Self::Ghz => "ghz",
            Self::Graph => "graph",
        })
    }
}

/// Dichotomic single-qubit observables per party and setting.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSuite {
    // a single row applies to every party
    per_party: Vec<Vec<Qubit>>,
}

impl MeasurementSuite {
    /// Same settings for all parties.
    pub fn uniform(settings: Vec<Qubit>) -> Result<Self, QuantumError> {
        Self::per_party(vec![settings])
    }

    pub fn per_party(per_party: Vec<Vec<Qubit>>) -> Result<Self, QuantumError> {
        for op in per_party.iter().flatten() {
            check_observable(op)?;
        }
        Ok(Self { per_party })
    }

    pub fn operator(&self, party: usize, setting: usize) -> Option<&Qubit> {
        let row = if self.per_party.len() == 1 {
            self.per_party.first()
        } else {
            self.per_party.get(party)
        };
        row.and_then(|r| r.get(setting))
    }

    pub fn covers(&self, scenario: &Scenario) -> Result<(), QuantumError> {
        for letter in scenario.letters() {
            if self.operator(letter.party, letter.setting).is_none() {
                return Err(QuantumError::SuiteTooSmall {
                    party: letter.party + 1,
                    setting: letter.setting,
                });
            }
        }
        Ok(())
    }
}

pub fn standard_suite(kind: SuiteKind) -> MeasurementSuite {
    let ops = match kind {
        SuiteKind::W => vec![pauli_x(), pauli_z()],
        SuiteKind::Ghz => vec![pauli_x(), pauli_zx()],
        SuiteKind::Graph => vec![pauli_x(), pauli_z(), pauli_zx()],
    };
    MeasurementSuite { per_party: vec![ops] }
}

/// `Tr(O ρ)` where `O` is the tensor product of the assigned single-qubit
/// operators (identity on the remaining parties). Parties are 0-based.
pub fn expectation(state: &QuantumState, assignment: &[(usize, Qubit)]) -> Result<f64, QuantumError> {
    let n = state.n;
    if assignment.is_empty() {
        return Err(QuantumError::BadAssignment(0));
    }
    let mut ops: Vec<Option<&Qubit>> = vec![None; n];
    for (party, op) in assignment {
        if *party >= n || ops[*party].is_some() {
            return Err(QuantumError::BadAssignment(party + 1));
        }
        let herm = (op - op.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm > HERMITIAN_TOL {
            return Err(QuantumError::NotHermitian(herm));
        }
        ops[*party] = Some(op);
    }
    let dim = 1usize << n;
    let rho = &state.rho;
    let mut total = C64::new(0.0, 0.0);
    for a in 0..dim {
        for b in 0..dim {
            let mut coeff = c(1.0);
            for (q, op) in ops.iter().enumerate() {
                let (ra, rb) = ((a >> (n - 1 - q)) & 1, (b >> (n - 1 - q)) & 1);
                coeff *= match op {
                    Some(m) => m[(ra, rb)],
                    None if ra == rb => c(1.0),
                    None => c(0.0),
                };
                if coeff == c(0.0) {
                    break;
                }
            }
            total += coeff * rho[(b, a)];
        }
    }
    if total.im.abs() > IMAG_TOL {
        return Err(QuantumError::ImaginaryResidue(total.im));
    }
    Ok(total.re)
}

/// Expectation of the product of the suite observables named by `key`.
pub fn key_expectation(
    state: &QuantumState,
    suite: &MeasurementSuite,
    key: &MomentKey,
) -> Result<f64, QuantumError> {
    let assignment = key
        .letters()
        .iter()
        .map(|&Letter { party, setting }| {
            suite
                .operator(party, setting)
                .copied()
                .map(|op| (party, op))
                .ok_or(QuantumError::SuiteTooSmall {
                    party: party + 1,
                    setting,
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    expectation(state, &assignment)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moment {
    pub value: f64,
    pub sigma: Option<f64>,
}

impl Moment {
    pub fn point(value: f64) -> Self {
        Self { value, sigma: None }
    }
}

/// Observed or simulated correlators for one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatorTable {
    scenario: Scenario,
    moments: BTreeMap<MomentKey, Moment>,
}

impl CorrelatorTable {
    pub fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            moments: BTreeMap::new(),
        }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn insert(&mut self, key: MomentKey, moment: Moment) -> Result<(), TableError> {
        if !key.fits(&self.scenario) {
            return Err(TableError::ForeignKey {
                key,
                scenario: self.scenario,
            });
        }
        if !moment.value.is_finite() || moment.value.abs() > 1.0 + RANGE_SLACK {
            return Err(TableError::RangeError {
                key,
                value: moment.value,
            });
        }
        if let Some(sigma) = moment.sigma {
            if !sigma.is_finite() || sigma < 0.0 {
                return Err(TableError::InvalidSigma { key, sigma });
            }
        }
        if self.moments.contains_key(&key) {
            return Err(TableError::DuplicateMoment(key));
        }
        self.moments.insert(key, moment);
        Ok(())
    }

    pub fn remove(&mut self, key: &MomentKey) -> Option<Moment> {
        self.moments.remove(key)
    }

    pub fn get(&self, key: &MomentKey) -> Option<&Moment> {
        self.moments.get(key)
    }

    pub fn len(&self) -> usize {
        self.moments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moments.is_empty()
    }

    /// Entries in key order.
    pub fn iter(&self) -> impl Iterator<Item = (&MomentKey, &Moment)> {
        self.moments.iter()
    }
}

/// Simulates every observable moment of `structure`.
pub fn correlator_table(
    state: &QuantumState,
    suite: &MeasurementSuite,
    structure: &MomentMatrixStructure,
) -> Result<CorrelatorTable, QuantumError> {
    let scenario = structure.scenario();
    if state.n != scenario.parties() {
        return Err(QuantumError::PartyMismatch {
            state: state.n,
            scenario: scenario.parties(),
        });
    }
    suite.covers(scenario)?;
    let mut table = CorrelatorTable::new(*scenario);
    for key in structure.observables() {
        let value = key_expectation(state, suite, key)?;
        table
            .insert(key.clone(), Moment::point(value))
            .map_err(|e| QuantumError::Numerical(e.to_string()))?;
    }
    Ok(table)
}

/// `Σ (−1)^{parity(outcome)} p(outcome)` over a distribution keyed by
/// outcome bitstrings (`'0'` ↦ +1, `'1'` ↦ −1).
pub fn correlator_from_probabilities(probabilities: &BTreeMap<String, f64>) -> Result<f64, QuantumError> {
    let bad = |msg: String| Err(QuantumError::MalformedDistribution(msg));
    let Some(len) = probabilities.keys().next().map(String::len) else {
        return bad("empty distribution".into());
    };
    let mut total = 0.0;
    let mut correlator = 0.0;
    for (outcome, &p) in probabilities {
        if outcome.len() != len || outcome.is_empty() || !outcome.bytes().all(|b| b == b'0' || b == b'1') {
            return bad(format!("outcome `{outcome}`"));
        }
        if !p.is_finite() || p < 0.0 {
            return bad(format!("p({outcome}) = {p}"));
        }
        let ones = outcome.bytes().filter(|&b| b == b'1').count();
        total += p;
        correlator += if ones % 2 == 0 { p } else { -p };
    }
    if (total - 1.0).abs() > 1e-9 {
        return bad(format!("probabilities sum to {total}"));
    }
    Ok(correlator)
}

/// `p·ρ + (1−p)·I/2ⁿ`.
pub fn add_white_noise(state: &QuantumState, visibility: f64) -> Result<QuantumState, QuantumError> {
    if !(0.0..=1.0).contains(&visibility) {
        return Err(QuantumError::InvalidVisibility(visibility));
    }
    let mixed = QuantumState::maximally_mixed(state.n);
    Ok(QuantumState {
        n: state.n,
        rho: state.rho.scale(visibility) + mixed.rho.scale(1.0 - visibility),
    })
}

fn floored_sqrt(v: f64) -> f64 {
    if v < SQRT_FLOOR {
        0.0
    } else {
        v.sqrt()
    }
}

fn psd_sqrt(m: &DMatrix<C64>) -> Result<DMatrix<C64>, QuantumError> {
    let (vals, vecs) = hermitian_eigen(m);
    if let Some(bad) = vals.iter().find(|&&v| v < -PSD_TOL) {
        return Err(QuantumError::Numerical(format!("negative eigenvalue {bad:e}")));
    }
    let roots = DVector::from_iterator(vals.len(), vals.iter().map(|&v| c(floored_sqrt(v))));
    Ok(&vecs * DMatrix::from_diagonal(&roots) * vecs.adjoint())
}

/// Uhlmann fidelity `[Tr √(√ρa ρb √ρa)]²`.
pub fn fidelity(a: &QuantumState, b: &QuantumState) -> Result<f64, QuantumError> {
    if a.rho.nrows() != b.rho.nrows() {
        return Err(QuantumError::DimensionMismatch(a.rho.nrows(), b.rho.nrows()));
    }
    let sa = psd_sqrt(&a.rho)?;
    let mut inner = &sa * &b.rho * &sa;
    // symmetrize away rounding noise before the Hermitian solver
    inner = (&inner + inner.adjoint()).scale(0.5);
    let (vals, _) = hermitian_eigen(&inner);
    if let Some(bad) = vals.iter().find(|&&v| v < -PSD_TOL) {
        return Err(QuantumError::Numerical(format!("negative eigenvalue {bad:e}")));
    }
    let f = vals.iter().map(|&v| floored_sqrt(v)).sum::<f64>().powi(2);
    if !(-1e-9..=1.0 + 1e-9).contains(&f) {
        return Err(QuantumError::Numerical(format!("fidelity {f} outside [0, 1]")));
    }
    Ok(f.clamp(0.0, 1.0))
}
