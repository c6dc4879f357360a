//! Alternating operator scaling of a positive map toward a doubly stochastic
//! one.
//!
//! Starting from `X_0 = Id`, the iteration alternately normalizes the
//! adjoint marginal `A_n = X_n* T*(Y_n* Y_n / √m) X_n` and the forward marginal
//! `B_n = Y_n T(X_{n+1} X_{n+1}* / √k) Y_n*`. Both have traces `√k` and `√m`
//! at every step, and `log|det(X_n ⊗ Y_n)|` never decreases. It stays bounded
//! exactly when `T` has support, so an unbounded climb is the numerical sign
//! of no support.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{c, herm_eig, identity, pd_inv_sqrt, ComplexMatrix, HermitianMatrix, Tolerances};
use crate::posmap::{self, BlockCertificate, ChoiMap};

pub const DEFAULT_MAX_ITER: usize = 10_000;
/// Tolerance for the trace and marginal identities checked after each step.
pub const INVARIANT_TOL: f64 = 1e-8;
/// Allowed decrease of the log-determinant between steps.
pub const MONOTONE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingOptions {
    pub max_iter: usize,
    /// Growth of `log|det(X_n ⊗ Y_n)|` over its starting value that counts as
    /// divergence; `None` means `50 km`.
    pub divergence_logdet: Option<f64>,
}

impl Default for ScalingOptions {
    fn default() -> Self {
        ScalingOptions { max_iter: DEFAULT_MAX_ITER, divergence_logdet: None }
    }
}

impl ScalingOptions {
    pub fn divergence_threshold(&self, k: usize, m: usize) -> f64 {
        self.divergence_logdet.unwrap_or(50.0 * (k * m) as f64)
    }
}

/// Iterates at index `n`: `X_n`, `X_{n+1}`, `Y_n`, `A_n`, `B_n`.
#[derive(Debug, Clone)]
pub struct ScalingState {
    pub n: usize,
    pub x: ComplexMatrix,
    pub x_next: ComplexMatrix,
    pub y: ComplexMatrix,
    pub a: HermitianMatrix,
    pub b: HermitianMatrix,
    log_abs_det_x: f64,
    log_abs_det_x_next: f64,
    log_abs_det_y: f64,
    k: usize,
    m: usize,
}

impl ScalingState {
    /// `log|det(X_n ⊗ Y_n)| = m log|det X_n| + k log|det Y_n|`.
    pub fn logdet(&self) -> f64 {
        self.m as f64 * self.log_abs_det_x + self.k as f64 * self.log_abs_det_y
    }

    /// `‖√k A_n − Id‖_F`.
    pub fn residual_a(&self) -> f64 {
        marginal_residual(&self.a, self.k)
    }

    /// `‖√m B_n − Id‖_F`.
    pub fn residual_b(&self) -> f64 {
        marginal_residual(&self.b, self.m)
    }
}

fn marginal_residual(h: &HermitianMatrix, n: usize) -> f64 {
    (h.as_matrix() * c((n as f64).sqrt()) - identity(n)).norm()
}

/// `(n^{-1/4} H^{-1/2}, Σ log λ(H))`, failing when `H` is not safely positive
/// definite.
fn normalizer(h: &HermitianMatrix, n: usize, tol: &Tolerances, what: &'static str) -> Result<(ComplexMatrix, f64)> {
    let inv_sqrt = pd_inv_sqrt(h, tol).map_err(|e| match e {
        Error::NotPositiveDefinite { eigenvalue, largest } => {
            Error::NumericalFailure { what, residual: eigenvalue / largest }
        }
        other => other,
    })?;
    let log_sum: f64 = herm_eig(h)?.values.iter().map(|l| l.ln()).sum();
    Ok((inv_sqrt.into_matrix() * c((n as f64).powf(-0.25)), log_sum))
}

/// `log|det(n^{-1/4} H^{-1/2} M)| − log|det M|`.
fn normalizer_logdet(log_sum: f64, n: usize) -> f64 {
    -0.5 * log_sum - 0.25 * n as f64 * (n as f64).ln()
}

fn forward(t: &ChoiMap, y: &ComplexMatrix, x: &ComplexMatrix) -> Result<HermitianMatrix> {
    let s = c(1.0 / (t.k() as f64).sqrt());
    HermitianMatrix::new(y * t.apply_unchecked(&(x * x.adjoint() * s)) * y.adjoint())
}

fn backward(t: &ChoiMap, x: &ComplexMatrix, y: &ComplexMatrix) -> Result<HermitianMatrix> {
    let s = c(1.0 / (t.m() as f64).sqrt());
    HermitianMatrix::new(x.adjoint() * t.apply_adjoint_unchecked(&(y.adjoint() * y * s)) * x)
}

fn check_marginal(which: &'static str, value: &ComplexMatrix, tol: &Tolerances) -> Result<()> {
    let h = HermitianMatrix::new(value.clone())?;
    let (lo, hi) = h.spectrum_bounds()?;
    if !(hi > 0.0 && lo > tol.pd_min * hi) {
        return Err(Error::Precondition { marginal: which, min_eigenvalue: lo });
    }
    Ok(())
}

/// Initial state: `X_0 = Id`, `Y_0 = m^{-1/4} T(Id/√k)^{-1/2}`, then `A_0`,
/// `X_1` and `B_0`. Requires `T(Id)` and `T*(Id)` positive definite.
pub fn init(t: &ChoiMap, tol: &Tolerances) -> Result<ScalingState> {
    tol.validate()?;
    let (k, m) = (t.k(), t.m());
    check_marginal("T(Id)", &t.apply_unchecked(&identity(k)), tol)?;
    check_marginal("T*(Id)", &t.apply_adjoint_unchecked(&identity(m)), tol)?;

    let x = identity(k);
    let t_id = HermitianMatrix::new(t.apply_unchecked(&(identity(k) * c(1.0 / (k as f64).sqrt()))))?;
    let (y, log_t) = normalizer(&t_id, m, tol, "T(Id/√k) lost positive definiteness")?;
    let log_abs_det_y = normalizer_logdet(log_t, m);
    let a = backward(t, &x, &y)?;
    let (na, log_a) = normalizer(&a, k, tol, "A_0 lost positive definiteness")?;
    let x_next = &x * na;
    let b = forward(t, &y, &x_next)?;
    Ok(ScalingState {
        n: 0,
        x,
        x_next,
        y,
        a,
        b,
        log_abs_det_x: 0.0,
        log_abs_det_x_next: normalizer_logdet(log_a, k),
        log_abs_det_y,
        k,
        m,
    })
}

/// One iteration `n -> n + 1`, checking the trace invariants, the forward
/// marginal identity and monotonicity of the log-determinant.
pub fn step(s: &ScalingState, t: &ChoiMap, tol: &Tolerances) -> Result<ScalingState> {
    let (k, m) = (s.k, s.m);
    let n = s.n + 1;
    let (nb, log_b) = normalizer(&s.b, m, tol, "B_n lost positive definiteness")?;
    let y = nb * &s.y;
    let log_abs_det_y = s.log_abs_det_y + normalizer_logdet(log_b, m);
    let x = s.x_next.clone();
    let a = backward(t, &x, &y)?;
    let (na, log_a) = normalizer(&a, k, tol, "A_n lost positive definiteness")?;
    let x_next = &x * na;
    let b = forward(t, &y, &x_next)?;
    let next = ScalingState {
        n,
        x,
        x_next,
        y,
        a,
        b,
        log_abs_det_x: s.log_abs_det_x_next,
        log_abs_det_x_next: s.log_abs_det_x_next + normalizer_logdet(log_a, k),
        log_abs_det_y,
        k,
        m,
    };

    let trace_a = (next.a.trace() - (k as f64).sqrt()).abs();
    if trace_a > INVARIANT_TOL {
        return Err(Error::InvariantViolated { step: n, what: "tr(A_n) = √k", deviation: trace_a });
    }
    let trace_b = (next.b.trace() - (m as f64).sqrt()).abs();
    if trace_b > INVARIANT_TOL {
        return Err(Error::InvariantViolated { step: n, what: "tr(B_n) = √m", deviation: trace_b });
    }
    let marginal = forward(t, &next.y, &next.x)?.into_matrix() - identity(m) * c(1.0 / (m as f64).sqrt());
    if marginal.norm() > INVARIANT_TOL {
        return Err(Error::InvariantViolated {
            step: n,
            what: "Y_n T(X_n X_n* / √k) Y_n* = Id/√m",
            deviation: marginal.norm(),
        });
    }
    let drop = s.logdet() - next.logdet();
    if drop > MONOTONE_SLACK {
        return Err(Error::InvariantViolated { step: n, what: "log|det(X_n ⊗ Y_n)| nondecreasing", deviation: drop });
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    /// Both marginals reached the tolerance; `T` has support.
    ConvergedDs,
    /// The log-determinant passed the divergence threshold. Heuristic
    /// evidence that `T` has no support, not a proof.
    NoSupportNumerical,
    /// Neither criterion fired within the iteration budget.
    MaxIterInconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::ConvergedDs => "converged-ds",
            Verdict::NoSupportNumerical => "no-support-numerical",
            Verdict::MaxIterInconclusive => "max-iter-inconclusive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub n: usize,
    pub residual_a: f64,
    pub residual_b: f64,
    pub logdet: f64,
}

#[derive(Debug, Clone)]
pub struct ScalingReport {
    pub verdict: Verdict,
    /// Index `n` of the final state.
    pub iterations: usize,
    pub residual_a: f64,
    pub residual_b: f64,
    pub divergence_threshold: f64,
    pub history: Vec<HistoryRecord>,
    pub x_final: ComplexMatrix,
    pub y_final: ComplexMatrix,
    /// `Y_n T(X_n (·) X_n*) Y_n*` on convergence.
    pub ds_map: Option<ChoiMap>,
}

impl ScalingReport {
    pub fn logdet_growth(&self) -> f64 {
        match (self.history.first(), self.history.last()) {
            (Some(a), Some(b)) => b.logdet - a.logdet,
            _ => 0.0,
        }
    }
}

fn record(s: &ScalingState) -> HistoryRecord {
    HistoryRecord { n: s.n, residual_a: s.residual_a(), residual_b: s.residual_b(), logdet: s.logdet() }
}

/// Runs the iteration until both marginal residuals are at most
/// `tol.conv_eps`, the log-determinant has grown past the divergence
/// threshold, or `max_iter` steps have been taken.
pub fn run(t: &ChoiMap, tol: &Tolerances, opts: &ScalingOptions) -> Result<ScalingReport> {
    let threshold = opts.divergence_threshold(t.k(), t.m());
    let mut s = init(t, tol)?;
    let start = s.logdet();
    let mut history = vec![record(&s)];
    let verdict = loop {
        let last = history.last().expect("nonempty");
        if last.residual_a <= tol.conv_eps && last.residual_b <= tol.conv_eps {
            break Verdict::ConvergedDs;
        }
        if last.logdet - start > threshold {
            break Verdict::NoSupportNumerical;
        }
        if s.n >= opts.max_iter {
            break Verdict::MaxIterInconclusive;
        }
        s = step(&s, t, tol)?;
        history.push(record(&s));
    };
    let ds_map = match verdict {
        Verdict::ConvergedDs => Some(t.conjugated(&s.x, &s.y)?),
        _ => None,
    };
    Ok(ScalingReport {
        verdict,
        iterations: s.n,
        residual_a: s.residual_a(),
        residual_b: s.residual_b(),
        divergence_threshold: threshold,
        history,
        x_final: s.x,
        y_final: s.y,
        ds_map,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommutationFailure {
    pub step: usize,
    pub block: usize,
    /// `"X"` for `[X_n, V_i]`, `"Y"` for `[Y_n, W_i]`.
    pub side: String,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommutationReport {
    pub steps: usize,
    /// Largest `‖[X_n, V_i]‖ / ‖X_n‖` or `‖[Y_n, W_i]‖ / ‖Y_n‖` seen.
    pub max_deviation: f64,
    pub first_failure: Option<CommutationFailure>,
}

/// Relative commutator defect allowed by [`block_commutation_check`].
pub const COMMUTATION_TOL: f64 = 1e-8;

/// Runs `n_steps` of scaling and checks that every `X_n` commutes with every
/// `V_i` and every `Y_n` with every `W_i`. The certificate must be invariant
/// under `T`, otherwise the run is refused.
pub fn block_commutation_check(
    t: &ChoiMap,
    cert: &BlockCertificate,
    n_steps: usize,
    tol: &Tolerances,
) -> Result<CommutationReport> {
    if cert.input_dim() != t.k() || cert.output_dim() != t.m() {
        return Err(Error::MalformedCertificate("certificate dimensions do not match the map".into()));
    }
    for (i, (v, w)) in cert.v().iter().zip(cert.w()).enumerate() {
        let dev = posmap::invariance_defect(t, v, w);
        if dev > COMMUTATION_TOL {
            return Err(Error::MalformedCertificate(format!(
                "block {i} is not invariant under the map (defect {dev:e})"
            )));
        }
    }
    let mut s = init(t, tol)?;
    let mut report = CommutationReport { steps: 0, max_deviation: 0.0, first_failure: None };
    loop {
        for (i, (v, w)) in cert.v().iter().zip(cert.w()).enumerate() {
            for (side, g, p) in [("X", &s.x, v), ("Y", &s.y, w)] {
                let dev = (g * p - p * g).norm() / g.norm();
                report.max_deviation = report.max_deviation.max(dev);
                if dev > COMMUTATION_TOL && report.first_failure.is_none() {
                    report.first_failure =
                        Some(CommutationFailure { step: s.n, block: i, side: side.to_string(), deviation: dev });
                }
            }
        }
        report.steps = s.n;
        if s.n >= n_steps || report.first_failure.is_some() {
            return Ok(report);
        }
        s = step(&s, t, tol)?;
    }
}
