//! Symbolic moment matrices and their numeric affine families.
//!
//! `build_structure` multiplies every pair of basis words and classifies the
//! product. `assemble` then substitutes data for the pinned observable
//! moments and turns everything else into a bounded variable, giving
//! `Γ(v) = Γ0 + Σ v_k G_k`.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::algebra::{self, AlgebraError, FreeVarId, MomentKey, MomentRef, OperatorWord, Scenario};
use crate::quantum::CorrelatorTable;

/// Slack accepted on correlator magnitudes before a value is rejected.
pub const RANGE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HierarchyError {
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error("no value for pinned moment {0}")]
    MissingMoment(MomentKey),
    #[error("moment {key} = {value} lies outside [-1, 1]")]
    RangeError { key: MomentKey, value: f64 },
    #[error("moment {0} is not an observable of this structure")]
    UnknownMoment(MomentKey),
    #[error("table scenario {table} does not match structure scenario {structure}")]
    ScenarioMismatch { table: Scenario, structure: Scenario },
    #[error("invalid interval width {0}")]
    InvalidInterval(f64),
    #[error("malformed affine family: {0}")]
    MalformedFamily(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Unit,
    Observable(usize),
    Free(usize),
}

/// Symbolic moment matrix for one scenario and hierarchy level.
#[derive(Debug, Clone)]
pub struct MomentMatrixStructure {
    scenario: Scenario,
    level: usize,
    basis: Vec<OperatorWord>,
    // packed upper triangle, row-major
    slots: Vec<Slot>,
    observables: Vec<MomentKey>,
    freevars: Vec<FreeVarId>,
    observable_positions: Vec<Vec<(usize, usize)>>,
    freevar_positions: Vec<Vec<(usize, usize)>>,
}

pub fn build_structure(scenario: &Scenario, level: usize) -> Result<MomentMatrixStructure, HierarchyError> {
    let basis = algebra::generate_basis(scenario, level)?;
    let dim = basis.len();
    let mut slots = Vec::with_capacity(dim * (dim + 1) / 2);
    let mut obs_index: HashMap<MomentKey, usize> = HashMap::new();
    let mut free_index: HashMap<FreeVarId, usize> = HashMap::new();
    let mut observables = Vec::new();
    let mut freevars = Vec::new();
    let mut observable_positions: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut freevar_positions: Vec<Vec<(usize, usize)>> = Vec::new();

    for i in 0..dim {
        for j in i..dim {
            let word = scenario.word_product(&basis[i], &basis[j])?;
            let slot = match algebra::classify(&word) {
                MomentRef::Unit => Slot::Unit,
                MomentRef::Observable(key) => {
                    let k = *obs_index.entry(key.clone()).or_insert_with(|| {
                        observables.push(key);
                        observable_positions.push(Vec::new());
                        observables.len() - 1
                    });
                    observable_positions[k].push((i, j));
                    Slot::Observable(k)
                }
                MomentRef::FreeVar(id) => {
                    let k = *free_index.entry(id.clone()).or_insert_with(|| {
                        freevars.push(id);
                        freevar_positions.push(Vec::new());
                        freevars.len() - 1
                    });
                    freevar_positions[k].push((i, j));
                    Slot::Free(k)
                }
            };
            slots.push(slot);
        }
    }

    Ok(MomentMatrixStructure {
        scenario: *scenario,
        level,
        basis,
        slots,
        observables,
        freevars,
        observable_positions,
        freevar_positions,
    })
}

impl MomentMatrixStructure {
    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[OperatorWord] {
        &self.basis
    }

    /// Observable keys in order of first appearance (row-major, upper triangle).
    pub fn observables(&self) -> &[MomentKey] {
        &self.observables
    }

    /// Unobservable moments in order of first appearance.
    pub fn freevars(&self) -> &[FreeVarId] {
        &self.freevars
    }

    fn slot(&self, row: usize, col: usize) -> Slot {
        let (i, j) = if row <= col { (row, col) } else { (col, row) };
        let n = self.dim();
        // rows before i hold n, n-1, ..., n-i+1 entries
        let offset = i * n - i * i.saturating_sub(1) / 2;
        self.slots[offset + (j - i)]
    }

    /// Symbolic entry at 0-based `(row, col)`; symmetric.
    pub fn entry(&self, row: usize, col: usize) -> MomentRef {
        match self.slot(row, col) {
            Slot::Unit => MomentRef::Unit,
            Slot::Observable(k) => MomentRef::Observable(self.observables[k].clone()),
            Slot::Free(k) => MomentRef::FreeVar(self.freevars[k].clone()),
        }
    }

    /// Upper-triangle positions `(i, j)`, `i < j`, carrying observable `k`.
    pub fn observable_positions(&self, k: usize) -> &[(usize, usize)] {
        &self.observable_positions[k]
    }

    pub fn freevar_positions(&self, k: usize) -> &[(usize, usize)] {
        &self.freevar_positions[k]
    }

    pub fn observable_index(&self, key: &MomentKey) -> Option<usize> {
        self.observables.iter().position(|k| k == key)
    }
}

/// Which observable moments are fixed to data.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum PinPolicy {
    #[default]
    All,
    /// Pin only correlators involving at most `k` parties.
    MaxBodies(usize),
    Explicit(Vec<MomentKey>),
}

impl PinPolicy {
    /// The pinned keys, in structure order.
    pub fn select(&self, structure: &MomentMatrixStructure) -> Result<Vec<MomentKey>, HierarchyError> {
        match self {
            PinPolicy::All => Ok(structure.observables().to_vec()),
            PinPolicy::MaxBodies(k) => Ok(structure
                .observables()
                .iter()
                .filter(|key| key.bodies() <= *k)
                .cloned()
                .collect()),
            PinPolicy::Explicit(keys) => {
                if let Some(bad) = keys.iter().find(|k| structure.observable_index(k).is_none()) {
                    return Err(HierarchyError::UnknownMoment(bad.clone()));
                }
                Ok(structure
                    .observables()
                    .iter()
                    .filter(|k| keys.contains(k))
                    .cloned()
                    .collect())
            }
        }
    }
}

/// How pinned values enter Γ.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum PinMode {
    /// The measured value is written into Γ0.
    #[default]
    Point,
    /// A pinned moment with an uncertainty becomes a variable restricted to
    /// `value ± width·sigma` (intersected with [-1, 1]). Moments without a
    /// sigma stay point pins.
    Interval { width: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum VariableLabel {
    Observable(MomentKey),
    Free(FreeVarId),
    Anonymous,
}

/// `Γ(v) = Γ0 + Σ v_k G_k` with 0/1 basis matrices of disjoint off-diagonal
/// support and a box of bounds on `v`.
#[derive(Debug, Clone)]
pub struct AffineMatrixFamily {
    gamma0: DMatrix<f64>,
    supports: Vec<Vec<(usize, usize)>>,
    bounds: Vec<(f64, f64)>,
    labels: Vec<VariableLabel>,
}

impl AffineMatrixFamily {
    /// Validates symmetry of `gamma0` and that supports are disjoint,
    /// strictly off-diagonal and in range. Positions may be given in either
    /// triangle; they are normalized to `i < j`.
    pub fn new(
        gamma0: DMatrix<f64>,
        supports: Vec<Vec<(usize, usize)>>,
        bounds: Vec<(f64, f64)>,
    ) -> Result<Self, HierarchyError> {
        let labels = vec![VariableLabel::Anonymous; supports.len()];
        Self::with_labels(gamma0, supports, bounds, labels)
    }

    pub fn with_labels(
        gamma0: DMatrix<f64>,
        supports: Vec<Vec<(usize, usize)>>,
        bounds: Vec<(f64, f64)>,
        labels: Vec<VariableLabel>,
    ) -> Result<Self, HierarchyError> {
        let bad = |msg: String| Err(HierarchyError::MalformedFamily(msg));
        let n = gamma0.nrows();
        if n != gamma0.ncols() {
            return bad(format!("gamma0 is {}x{}", n, gamma0.ncols()));
        }
        if supports.len() != bounds.len() || supports.len() != labels.len() {
            return bad("supports, bounds and labels differ in length".into());
        }
        for i in 0..n {
            for j in 0..i {
                if (gamma0[(i, j)] - gamma0[(j, i)]).abs() > 1e-12 {
                    return bad(format!("gamma0 not symmetric at ({i},{j})"));
                }
            }
        }
        let mut owner: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut normalized = Vec::with_capacity(supports.len());
        for (k, support) in supports.into_iter().enumerate() {
            if support.is_empty() {
                return bad(format!("basis matrix {k} has empty support"));
            }
            let mut sorted = Vec::with_capacity(support.len());
            for (a, b) in support {
                let (i, j) = if a < b { (a, b) } else { (b, a) };
                if i == j || j >= n {
                    return bad(format!("basis matrix {k} has invalid position ({a},{b})"));
                }
                if owner.insert((i, j), k).is_some() {
                    return bad(format!("position ({i},{j}) appears in two basis matrices"));
                }
                sorted.push((i, j));
            }
            normalized.push(sorted);
        }
        for (k, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad(format!("variable {k} has invalid bounds [{lo}, {hi}]"));
            }
        }
        Ok(Self {
            gamma0,
            supports: normalized,
            bounds,
            labels,
        })
    }

    pub fn dim(&self) -> usize {
        self.gamma0.nrows()
    }

    pub fn num_vars(&self) -> usize {
        self.supports.len()
    }

    pub fn gamma0(&self) -> &DMatrix<f64> {
        &self.gamma0
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn labels(&self) -> &[VariableLabel] {
        &self.labels
    }

    /// Upper-triangle support of `G_k`.
    pub fn support(&self, k: usize) -> &[(usize, usize)] {
        &self.supports[k]
    }

    pub fn basis_matrix(&self, k: usize) -> DMatrix<f64> {
        let n = self.dim();
        let mut g = DMatrix::zeros(n, n);
        for &(i, j) in &self.supports[k] {
            g[(i, j)] = 1.0;
            g[(j, i)] = 1.0;
        }
        g
    }

    pub fn evaluate(&self, v: &DVector<f64>) -> DMatrix<f64> {
        assert_eq!(v.len(), self.num_vars(), "variable vector length");
        let mut m = self.gamma0.clone();
        for (k, support) in self.supports.iter().enumerate() {
            for &(i, j) in support {
                m[(i, j)] += v[k];
                m[(j, i)] += v[k];
            }
        }
        m
    }

    /// Frobenius inner product `⟨G_k, Z⟩` for symmetric `Z`.
    pub fn basis_inner(&self, k: usize, z: &DMatrix<f64>) -> f64 {
        self.supports[k].iter().map(|&(i, j)| z[(i, j)] + z[(j, i)]).sum()
    }

    /// `uᵀ G_k u`.
    pub fn basis_quadratic(&self, k: usize, u: &DVector<f64>) -> f64 {
        self.supports[k].iter().map(|&(i, j)| 2.0 * u[i] * u[j]).sum()
    }

    /// Midpoint of the variable box.
    pub fn center(&self) -> DVector<f64> {
        DVector::from_iterator(self.num_vars(), self.bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)))
    }

    pub fn project(&self, v: &mut DVector<f64>) {
        for (x, &(lo, hi)) in v.iter_mut().zip(&self.bounds) {
            *x = x.clamp(lo, hi);
        }
    }
}

/// Substitutes table values into the structure under `policy` with point pins.
pub fn assemble(
    structure: &MomentMatrixStructure,
    table: &CorrelatorTable,
    policy: &PinPolicy,
) -> Result<AffineMatrixFamily, HierarchyError> {
    assemble_with_mode(structure, table, policy, PinMode::Point)
}

pub fn assemble_with_mode(
    structure: &MomentMatrixStructure,
    table: &CorrelatorTable,
    policy: &PinPolicy,
    mode: PinMode,
) -> Result<AffineMatrixFamily, HierarchyError> {
    if table.scenario() != structure.scenario() {
        return Err(HierarchyError::ScenarioMismatch {
            table: *table.scenario(),
            structure: *structure.scenario(),
        });
    }
    if let PinMode::Interval { width } = mode {
        if !(width.is_finite() && width >= 0.0) {
            return Err(HierarchyError::InvalidInterval(width));
        }
    }
    let pinned = policy.select(structure)?;
    let n = structure.dim();
    let mut gamma0 = DMatrix::identity(n, n);
    let mut supports = Vec::new();
    let mut bounds = Vec::new();
    let mut labels = Vec::new();

    for (k, key) in structure.observables().iter().enumerate() {
        let positions = structure.observable_positions(k);
        if !pinned.contains(key) {
            supports.push(positions.to_vec());
            bounds.push((-1.0, 1.0));
            labels.push(VariableLabel::Observable(key.clone()));
            continue;
        }
        let moment = table
            .get(key)
            .ok_or_else(|| HierarchyError::MissingMoment(key.clone()))?;
        if !moment.value.is_finite() || moment.value.abs() > 1.0 + RANGE_SLACK {
            return Err(HierarchyError::RangeError {
                key: key.clone(),
                value: moment.value,
            });
        }
        let value = moment.value.clamp(-1.0, 1.0);
        match (mode, moment.sigma) {
            (PinMode::Interval { width }, Some(sigma)) if sigma > 0.0 && width > 0.0 => {
                let lo = (value - width * sigma).max(-1.0);
                let hi = (value + width * sigma).min(1.0);
                supports.push(positions.to_vec());
                bounds.push((lo, hi));
                labels.push(VariableLabel::Observable(key.clone()));
            }
            _ => {
                for &(i, j) in positions {
                    gamma0[(i, j)] = value;
                    gamma0[(j, i)] = value;
                }
            }
        }
    }
    for (k, id) in structure.freevars().iter().enumerate() {
        supports.push(structure.freevar_positions(k).to_vec());
        bounds.push((-1.0, 1.0));
        labels.push(VariableLabel::Free(id.clone()));
    }
    AffineMatrixFamily::with_labels(gamma0, supports, bounds, labels)
}
