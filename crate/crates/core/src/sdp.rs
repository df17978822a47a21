//! Feasibility of `Γ(v) ⪰ 0` over a box, decided by maximizing
//! `f(v) = λmin(Γ0 + Σ v_k G_k)`.
//!
//! `f` is concave, so the solver runs projected supergradient ascent and
//! refines the best point with a log-barrier Newton method on
//! `max t s.t. Γ(v) − tI ⪰ 0`, restarting from random points until the
//! barrier run converges. When the optimum is negative it
//! emits a dual certificate: a unit-trace PSD matrix `Z` orthogonal to every
//! `G_k`. For any `v`, `λmin(Γ(v)) ≤ ⟨Γ(v), Z⟩ = ⟨Γ0, Z⟩`, so a negative
//! `⟨Γ0, Z⟩` proves that no completion is PSD. [`verify_certificate`] checks
//! this with nothing but inner products and one eigenvalue.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hierarchy::AffineMatrixFamily;

const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdpError {
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("matrix is not symmetric (deviation {0:e})")]
    Asymmetric(f64),
    #[error("matrix has zero dimension")]
    EmptyFamily,
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("no certificate: {0}")]
    NoCertificate(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Supergradient iterations per restart.
    pub max_iters: usize,
    pub step_scale: f64,
    pub tol_cert: f64,
    /// A certificate must reach `value < -margin` to count as infeasibility.
    pub margin: f64,
    /// Upper bound on ascent restarts; stops early once the refinement converges.
    pub restarts: usize,
    pub seed: u64,
    /// `λ* ≥ -feas_tol` counts as feasible.
    pub feas_tol: f64,
    /// Run the barrier refinement after each ascent.
    pub polish: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            step_scale: 1.0,
            tol_cert: 1e-7,
            margin: 1e-3,
            restarts: 4,
            seed: 0,
            feas_tol: 1e-8,
            polish: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SdpError> {
        let bad = |m: &str| Err(SdpError::InvalidConfig(m.into()));
        if self.max_iters == 0 {
            return bad("max_iters must be positive");
        }
        if self.restarts == 0 {
            return bad("restarts must be positive");
        }
        if !(self.step_scale.is_finite() && self.step_scale > 0.0) {
            return bad("step_scale must be positive");
        }
        if !(self.tol_cert.is_finite() && self.tol_cert > 0.0) {
            return bad("tol_cert must be positive");
        }
        if !(self.margin.is_finite() && self.margin > self.tol_cert) {
            return bad("margin must exceed tol_cert");
        }
        if !(self.feas_tol.is_finite() && self.feas_tol >= 0.0 && self.feas_tol < self.margin) {
            return bad("feas_tol must lie in [0, margin)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SolveStatus {
    Feasible,
    CertifiedInfeasible,
    Undecided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualCertificate {
    pub z: DMatrix<f64>,
    /// `⟨Γ0, Z⟩`.
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub lambda_star: f64,
    pub v_star: DVector<f64>,
    pub certificate: Option<DualCertificate>,
    pub status: SolveStatus,
    /// Supergradient iterations over all restarts.
    pub iterations: usize,
    /// Best value found by the ascent alone.
    pub ascent_best: f64,
    /// Best-so-far value after each ascent iteration.
    pub history: Vec<f64>,
}

/// Weighted sum of `u uᵀ` over the minimum eigenvectors met by the ascent.
#[derive(Debug, Clone)]
pub struct IterateTrace {
    sum: DMatrix<f64>,
    weight: f64,
    iterations: usize,
}

impl IterateTrace {
    pub fn new(dim: usize) -> Self {
        Self {
            sum: DMatrix::zeros(dim, dim),
            weight: 0.0,
            iterations: 0,
        }
    }

    pub fn record(&mut self, u: &DVector<f64>, weight: f64) {
        self.sum.syger(weight, u, u, 1.0);
        self.weight += weight;
        self.iterations += 1;
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }
}

fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Smallest eigenvalue and a unit eigenvector. Among equal eigenvalues the
/// one reported first by the symmetric eigensolver wins.
pub fn min_eigen(m: &DMatrix<f64>) -> Result<(f64, DVector<f64>), SdpError> {
    if m.nrows() != m.ncols() {
        return Err(SdpError::NotSquare(m.nrows(), m.ncols()));
    }
    if m.nrows() == 0 {
        return Err(SdpError::EmptyFamily);
    }
    let dev = asymmetry(m);
    if dev > SYMMETRY_TOL {
        return Err(SdpError::Asymmetric(dev));
    }
    let eig = m.clone().symmetric_eigen();
    let idx = eig.eigenvalues.imin();
    let u = eig.eigenvectors.column(idx).normalize();
    Ok((eig.eigenvalues[idx], u))
}

fn lambda_min(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}

fn frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(b).sum()
}

/// Maximizes `λmin(Γ(v))` over the box and classifies the family.
pub fn maximize_lambda_min(family: &AffineMatrixFamily, config: &SolverConfig) -> Result<SolveOutcome, SdpError> {
    config.validate()?;
    let dim = family.dim();
    if dim == 0 {
        return Err(SdpError::EmptyFamily);
    }
    let nvars = family.num_vars();
    let step = config.step_scale * (1.0 + family.gamma0().norm());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut best = f64::NEG_INFINITY;
    let mut best_v = family.center();
    let mut best_trace = IterateTrace::new(dim);
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut ascent_best = f64::NEG_INFINITY;
    let mut barrier_dual = None;

    for restart in 0..config.restarts {
        let mut v = if restart == 0 {
            family.center()
        } else {
            DVector::from_iterator(
                nvars,
                family.bounds().iter().map(|&(lo, hi)| if hi > lo { rng.gen_range(lo..=hi) } else { lo }),
            )
        };
        let mut trace = IterateTrace::new(dim);
        let mut restart_best = f64::NEG_INFINITY;
        for t in 1..=config.max_iters {
            let (lambda, u) = min_eigen(&family.evaluate(&v))?;
            iterations += 1;
            let alpha = step / (t as f64).sqrt();
            trace.record(&u, alpha);
            restart_best = restart_best.max(lambda);
            if lambda > best {
                best = lambda;
                best_v = v.clone();
            }
            history.push(best);
            let g = DVector::from_iterator(nvars, (0..nvars).map(|k| family.basis_quadratic(k, &u)));
            if g.norm() == 0.0 {
                break;
            }
            v += g.scale(alpha);
            family.project(&mut v);
        }
        // keep the dual trace of the restart that reached the global best
        if restart_best >= ascent_best {
            best_trace = trace;
        }
        ascent_best = ascent_best.max(restart_best);

        // λmin is concave, so a converged barrier run is globally optimal
        // and further restarts cannot improve on it
        if config.polish && nvars > 0 {
            if let Some(polished) = barrier_polish(family, &best_v) {
                if polished.lambda > best {
                    best = polished.lambda;
                    best_v = polished.v;
                }
                barrier_dual = polished.dual;
                if polished.converged {
                    break;
                }
            }
        }
    }

    let mut outcome = SolveOutcome {
        lambda_star: best,
        v_star: best_v,
        certificate: None,
        status: SolveStatus::Feasible,
        iterations,
        ascent_best,
        history,
    };
    if best >= -config.feas_tol {
        return Ok(outcome);
    }

    let candidates = [
        extract_certificate(family, &best_trace).ok(),
        barrier_dual.and_then(|z| repair_certificate(family, z)),
    ];
    let certificate = candidates
        .into_iter()
        .flatten()
        .filter(|c| verify_certificate(family, c, config.tol_cert))
        .min_by(|a, b| a.value.total_cmp(&b.value));
    outcome.status = match &certificate {
        Some(c) if c.value < -config.margin => SolveStatus::CertifiedInfeasible,
        _ => SolveStatus::Undecided,
    };
    outcome.certificate = certificate;
    Ok(outcome)
}

/// Averages the recorded eigenvector outer products and repairs the result
/// into a certificate candidate. The result is *not* verified here.
pub fn extract_certificate(family: &AffineMatrixFamily, trace: &IterateTrace) -> Result<DualCertificate, SdpError> {
    if trace.iterations == 0 || trace.weight <= 0.0 {
        return Err(SdpError::NoCertificate("no iterations recorded".into()));
    }
    if trace.sum.nrows() != family.dim() {
        return Err(SdpError::NoCertificate("trace dimension does not match family".into()));
    }
    repair_certificate(family, trace.sum.unscale(trace.weight))
        .ok_or_else(|| SdpError::NoCertificate("projection failed".into()))
}

/// Normalizes the trace, removes every `G_k` component (supports are
/// disjoint and off-diagonal, so this is an exact orthogonal projection that
/// leaves the trace alone) and then mixes in the identity just enough to
/// make the result PSD. Identity mixing keeps `Tr Z = 1` and `⟨G_k, Z⟩ = 0`.
fn repair_certificate(family: &AffineMatrixFamily, raw: DMatrix<f64>) -> Option<DualCertificate> {
    let dim = family.dim();
    let mut z = (&raw + raw.transpose()).scale(0.5);
    let tr = z.trace();
    if !(tr.is_finite() && tr > 0.0) {
        return None;
    }
    z.unscale_mut(tr);
    for k in 0..family.num_vars() {
        let support = family.support(k);
        let shift = family.basis_inner(k, &z) / (2.0 * support.len() as f64);
        for &(i, j) in support {
            z[(i, j)] -= shift;
            z[(j, i)] -= shift;
        }
    }
    let low = lambda_min(&z);
    if !low.is_finite() {
        return None;
    }
    if low < 0.0 {
        let s = -low;
        for i in 0..dim {
            z[(i, i)] += s;
        }
        z.unscale_mut(1.0 + s * dim as f64);
    }
    let value = frobenius(family.gamma0(), &z);
    value.is_finite().then_some(DualCertificate { z, value })
}

/// Independent check of a certificate against `family` at tolerance `tol`.
pub fn verify_certificate(family: &AffineMatrixFamily, certificate: &DualCertificate, tol: f64) -> bool {
    let z = &certificate.z;
    let dim = family.dim();
    if dim == 0 || z.nrows() != dim || z.ncols() != dim || z.iter().any(|x| !x.is_finite()) {
        return false;
    }
    if asymmetry(z) > tol {
        return false;
    }
    let sym = (z + z.transpose()).scale(0.5);
    if lambda_min(&sym) < -tol {
        return false;
    }
    if (sym.trace() - 1.0).abs() > tol {
        return false;
    }
    if (0..family.num_vars()).any(|k| family.basis_inner(k, &sym).abs() > tol) {
        return false;
    }
    (frobenius(family.gamma0(), &sym) - certificate.value).abs() <= tol
}

/// Upper bound on `max_v λmin(Γ(v))` implied by a certificate, including
/// the box contribution of any residual `⟨G_k, Z⟩`.
pub fn certificate_bound(family: &AffineMatrixFamily, certificate: &DualCertificate) -> f64 {
    let slack: f64 = (0..family.num_vars())
        .map(|k| {
            let c = family.basis_inner(k, &certificate.z);
            let (lo, hi) = family.bounds()[k];
            (lo * c).max(hi * c)
        })
        .sum();
    certificate.value + slack
}

struct Polished {
    v: DVector<f64>,
    lambda: f64,
    dual: Option<DMatrix<f64>>,
    /// The barrier parameter reached its final value.
    converged: bool,
}

/// Barrier state for `max t s.t. Γ(v) − tI ≻ 0, lo < v < hi`, over the
/// variables whose box is not degenerate.
struct Barrier<'a> {
    family: &'a AffineMatrixFamily,
    active: Vec<usize>,
}

impl Barrier<'_> {
    fn slack_matrix(&self, v: &DVector<f64>, t: f64) -> DMatrix<f64> {
        let mut a = self.family.evaluate(v);
        for i in 0..a.nrows() {
            a[(i, i)] -= t;
        }
        a
    }

    fn inside_box(&self, v: &DVector<f64>) -> bool {
        self.active.iter().all(|&k| {
            let (lo, hi) = self.family.bounds()[k];
            v[k] > lo && v[k] < hi
        })
    }

    /// `-s·t - log det A - Σ log(box slacks)`, or `None` outside the domain.
    fn objective(&self, v: &DVector<f64>, t: f64, s: f64) -> Option<f64> {
        if !self.inside_box(v) {
            return None;
        }
        let chol = self.slack_matrix(v, t).cholesky()?;
        let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let boxes: f64 = self
            .active
            .iter()
            .map(|&k| {
                let (lo, hi) = self.family.bounds()[k];
                (hi - v[k]).ln() + (v[k] - lo).ln()
            })
            .sum();
        let phi = -s * t - logdet - boxes;
        phi.is_finite().then_some(phi)
    }

    /// Newton centering for barrier weight `s`. Returns `W = A⁻¹` at the
    /// final point.
    fn center(&self, v: &mut DVector<f64>, t: &mut f64, s: f64) -> Option<DMatrix<f64>> {
        let na = self.active.len();
        let family = self.family;
        for _ in 0..60 {
            let w = self.slack_matrix(v, *t).cholesky()?.inverse();
            let w2 = &w * &w;
            let mut grad = DVector::zeros(na + 1);
            let mut hess = DMatrix::zeros(na + 1, na + 1);
            for (a, &k) in self.active.iter().enumerate() {
                let (lo, hi) = family.bounds()[k];
                let (up, down) = (hi - v[k], v[k] - lo);
                grad[a] = -family.basis_inner(k, &w) + 1.0 / up - 1.0 / down;
                hess[(a, a)] += 1.0 / (up * up) + 1.0 / (down * down);
                hess[(a, na)] = -family.basis_inner(k, &w2);
                hess[(na, a)] = hess[(a, na)];
                for (b, &l) in self.active.iter().enumerate().skip(a) {
                    // tr(W G_k W G_l) over the two supports
                    let mut h = 0.0;
                    for &(i, j) in family.support(k) {
                        for &(p, q) in family.support(l) {
                            h += w[(i, p)] * w[(j, q)] + w[(i, q)] * w[(j, p)];
                        }
                    }
                    hess[(a, b)] += 2.0 * h;
                    if b != a {
                        hess[(b, a)] = hess[(a, b)];
                    }
                }
            }
            grad[na] = -s + w.trace();
            hess[(na, na)] = w2.trace();

            let direction = match hess.clone().cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    let scale = hess.diagonal().amax().max(1.0);
                    let reg = hess + DMatrix::identity(na + 1, na + 1).scale(1e-12 * scale);
                    reg.cholesky()?.solve(&(-&grad))
                }
            };
            let decrement = -grad.dot(&direction);
            if !decrement.is_finite() {
                return None;
            }
            if decrement < 1e-12 {
                return Some(w);
            }
            let phi = self.objective(v, *t, s)?;
            let mut step = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let mut nv = v.clone();
                for (a, &k) in self.active.iter().enumerate() {
                    nv[k] += step * direction[a];
                }
                let nt = *t + step * direction[na];
                if let Some(nphi) = self.objective(&nv, nt, s) {
                    if nphi <= phi - 0.25 * step * decrement {
                        *v = nv;
                        *t = nt;
                        moved = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !moved {
                return Some(w);
            }
        }
        Some(self.slack_matrix(v, *t).cholesky()?.inverse())
    }
}

/// Follows the central path from a slightly shrunk copy of `start`. Returns
/// the best point seen and the barrier dual `A⁻¹/s` of the last centered
/// point.
fn barrier_polish(family: &AffineMatrixFamily, start: &DVector<f64>) -> Option<Polished> {
    let active: Vec<usize> = (0..family.num_vars())
        .filter(|&k| {
            let (lo, hi) = family.bounds()[k];
            hi - lo > 1e-12
        })
        .collect();
    if active.is_empty() {
        return None;
    }
    let mut v = start.clone();
    for &k in &active {
        let (lo, hi) = family.bounds()[k];
        let frac = ((v[k] - lo) / (hi - lo)).clamp(1e-3, 1.0 - 1e-3);
        v[k] = lo + frac * (hi - lo);
    }
    let barrier = Barrier { family, active };
    let mut t = lambda_min(&family.evaluate(&v)) - 1.0;
    let m = (family.dim() + 2 * barrier.active.len()) as f64;

    let mut best_lambda = f64::NEG_INFINITY;
    let mut best_v = v.clone();
    let mut dual = None;
    let mut s = 1.0;
    let mut converged = true;
    while m / s > 1e-11 {
        let Some(w) = barrier.center(&mut v, &mut t, s) else {
            converged = false;
            break;
        };
        let lambda = lambda_min(&family.evaluate(&v));
        if lambda > best_lambda {
            best_lambda = lambda;
            best_v = v.clone();
        }
        dual = Some(w.unscale(s));
        s *= 8.0;
    }
    best_lambda.is_finite().then_some(Polished {
        v: best_v,
        lambda: best_lambda,
        dual,
        converged,
    })
}
