//! Filter normal form of bipartite states.
//!
//! Scaling `G_A` to a doubly stochastic map `Y_n G_A(X_n (·) X_n*) Y_n*` is the
//! same as filtering the state with `X_n* ⊗ Y_n`, since
//! `G_{(X'⊗Y') A (X'⊗Y')*}(X) = Y' G_A(X'* X X') Y'*`. The filtered state has
//! both partial traces proportional to the identity, and its operator Schmidt
//! decomposition leads with `Id/√k ⊗ Id/√m`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcomb::Condition;
use crate::numkernel::{
    self, c, hermitian_basis, identity, kron, partial_trace_first, partial_trace_second, rank_tol, realign,
    svd, unvec, ComplexMatrix, HermitianMatrix, Tolerances,
};
use crate::posmap::from_state;
use crate::scaling::{self, ScalingOptions, ScalingReport, Verdict};

/// Tolerance for Gram matrices and reconstruction in [`verify_fnf`].
pub const FNF_CHECK_TOL: f64 = 1e-8;
/// Smallest-to-largest singular value ratio below which a filter counts as
/// singular.
pub const FILTER_COND_FLOOR: f64 = 1e-10;

/// PSD `km x km` matrix on `C^k ⊗ C^m`, normalized to trace 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteState {
    k: usize,
    m: usize,
    rho: HermitianMatrix,
}

impl BipartiteState {
    /// Accepts matrices that are Hermitian up to `1e-8` (relative) and PSD up
    /// to `tol.rank_rel`, then symmetrizes and normalizes the trace.
    pub fn new(k: usize, m: usize, matrix: ComplexMatrix, tol: &Tolerances) -> Result<Self> {
        if k == 0 || m == 0 || matrix.nrows() != k * m || matrix.ncols() != k * m {
            return Err(Error::DimensionMismatch(format!(
                "state on C^{k} ⊗ C^{m} must be {0}x{0}, got {1}x{2}",
                k * m,
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let rho = HermitianMatrix::new_checked(matrix, 1e-8)?;
        let (lo, hi) = rho.spectrum_bounds()?;
        if lo < -tol.rank_rel * hi.abs().max(lo.abs()) {
            return Err(Error::NotPositiveSemidefinite { eigenvalue: lo });
        }
        let tr = rho.trace();
        if !(tr > 0.0) {
            return Err(Error::NotPositiveSemidefinite { eigenvalue: lo });
        }
        Ok(BipartiteState { k, m, rho: rho.scaled(1.0 / tr) })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn rho(&self) -> &HermitianMatrix {
        &self.rho
    }

    /// Trace over the first factor, `G_A(Id)`, an `m x m` matrix.
    pub fn marginal_second_factor(&self) -> ComplexMatrix {
        partial_trace_first(self.rho.as_matrix(), self.k, self.m).expect("shape checked")
    }

    /// Trace over the second factor, `F_A(Id)`, a `k x k` matrix.
    pub fn marginal_first_factor(&self) -> ComplexMatrix {
        partial_trace_second(self.rho.as_matrix(), self.k, self.m).expect("shape checked")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreconditionReport {
    pub passed: bool,
    /// Smallest eigenvalue of `G_A(Id)`, the trace over the first factor.
    pub min_eig_g: f64,
    pub g_positive_definite: bool,
    /// Smallest eigenvalue of `F_A(Id)`, the trace over the second factor.
    pub min_eig_f: f64,
    pub f_positive_definite: bool,
}

fn pd_status(m: ComplexMatrix, tol: &Tolerances) -> Result<(f64, bool)> {
    let h = HermitianMatrix::new(m)?;
    let (lo, hi) = h.spectrum_bounds()?;
    Ok((lo, hi > 0.0 && lo > tol.pd_min * hi))
}

pub fn check_preconditions(a: &BipartiteState, tol: &Tolerances) -> Result<PreconditionReport> {
    let (min_eig_g, g_pd) = pd_status(a.marginal_second_factor(), tol)?;
    let (min_eig_f, f_pd) = pd_status(a.marginal_first_factor(), tol)?;
    Ok(PreconditionReport {
        passed: g_pd && f_pd,
        min_eig_g,
        g_positive_definite: g_pd,
        min_eig_f,
        f_positive_definite: f_pd,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FnfOutlook {
    /// A kernel-dimension condition holds, so a normal form exists.
    Guaranteed,
    /// `gcd(k, m) = 1` and scaling of `G_A` converged.
    GuaranteedByScaling,
    /// No sufficient condition applies; only running the scaling can tell.
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficientConditions {
    pub kernel_dim: usize,
    pub marginals_positive_definite: bool,
    /// `k != m` and `dim ker A < min(k, m)`.
    pub kernel_rectangular: Condition,
    /// `k == m` and `dim ker A < k − 1`.
    pub kernel_square: Condition,
    /// Positive definite marginals and `dim ker A < max(k, m) / min(k, m)`.
    pub kernel_ratio: Condition,
    pub gcd: usize,
    /// Verdict of scaling `G_A` when `gcd(k, m) = 1` and the marginals allow it.
    pub coprime_scaling: Option<Verdict>,
    pub outlook: FnfOutlook,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn sufficient_conditions(a: &BipartiteState, tol: &Tolerances, opts: &ScalingOptions) -> Result<SufficientConditions> {
    let (k, m) = (a.k, a.m);
    let kernel_dim = k * m - rank_tol(&a.rho, tol)?;
    let marginals_pd = check_preconditions(a, tol)?.passed;
    let kernel_rectangular =
        if k != m { Condition::from_bool(kernel_dim < k.min(m)) } else { Condition::NotApplicable };
    let kernel_square = if k == m { Condition::from_bool(kernel_dim + 1 < k) } else { Condition::NotApplicable };
    let kernel_ratio = if marginals_pd {
        Condition::from_bool((kernel_dim as f64) < k.max(m) as f64 / k.min(m) as f64)
    } else {
        Condition::NotApplicable
    };
    let g = gcd(k, m);
    let coprime_scaling = if g == 1 && marginals_pd {
        let (gmap, _) = from_state(&a.rho, k, m, tol)?;
        scaling::run(&gmap, tol, opts).ok().map(|r| r.verdict)
    } else {
        None
    };
    let outlook = if [kernel_rectangular, kernel_square, kernel_ratio].contains(&Condition::Holds) {
        FnfOutlook::Guaranteed
    } else if coprime_scaling == Some(Verdict::ConvergedDs) {
        FnfOutlook::GuaranteedByScaling
    } else {
        FnfOutlook::Undetermined
    };
    Ok(SufficientConditions {
        kernel_dim,
        marginals_positive_definite: marginals_pd,
        kernel_rectangular,
        kernel_square,
        kernel_ratio,
        gcd: g,
        coprime_scaling,
        outlook,
    })
}

/// `coefficient · C ⊗ D`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchmidtTerm {
    pub coefficient: f64,
    pub c: ComplexMatrix,
    pub d: ComplexMatrix,
}

#[derive(Debug, Clone)]
pub struct FnfResult {
    /// Filter on the first factor.
    pub xp: ComplexMatrix,
    /// Filter on the second factor.
    pub yp: ComplexMatrix,
    /// `(Xp ⊗ Yp) A (Xp ⊗ Yp)*`, trace 1.
    pub state_fnf: BipartiteState,
    /// Leading term `(1/√(km)) Id/√k ⊗ Id/√m`, then the rest by decreasing
    /// coefficient.
    pub schmidt: Vec<SchmidtTerm>,
    pub report: ScalingReport,
}

#[derive(Debug, Clone)]
pub enum FnfOutcome {
    Success(Box<FnfResult>),
    /// Scaling stopped without converging; no normal form is produced.
    Inconclusive(ScalingReport),
}

/// Hermitian operator Schmidt decomposition of `rho − tr(rho) Id/(km)` for
/// a state whose partial traces are multiples of the identity. Terms with
/// coefficient at most `cutoff` are dropped.
fn schmidt_terms(rho: &ComplexMatrix, k: usize, m: usize, cutoff: f64) -> Result<Vec<SchmidtTerm>> {
    let km = (k * m) as f64;
    let alpha = numkernel::trace(rho).re / km.sqrt();
    let c1 = identity(k) * c(1.0 / (k as f64).sqrt());
    let d1 = identity(m) * c(1.0 / (m as f64).sqrt());
    let rest = rho - kron(&c1, &d1) * c(alpha);
    let mut terms = vec![SchmidtTerm { coefficient: alpha, c: c1, d: d1 }];
    if k == 1 || m == 1 {
        return Ok(terms);
    }
    // Traceless Hermitian bases: realign(rest) = E_k R E_mᵀ with R real.
    let ek = hermitian_basis(k).columns(1, k * k - 1).into_owned();
    let em = hermitian_basis(m).columns(1, m * m - 1).into_owned();
    let coeffs = ek.adjoint() * realign(&rest, k, m)? * em.conjugate();
    let real = DMatrix::from_fn(coeffs.nrows(), coeffs.ncols(), |i, j| coeffs[(i, j)].re);
    let (u, s, v) = numkernel::svd_real(&real)?;
    for (l, &sl) in s.iter().enumerate() {
        if sl <= cutoff {
            break;
        }
        let cl = unvec((&ek * u.column(l).map(c)).iter().copied(), k);
        let dl = unvec((&em * v.column(l).map(c)).iter().copied(), m);
        terms.push(SchmidtTerm { coefficient: sl, c: cl, d: dl });
    }
    Ok(terms)
}

/// Number of singular values of `realign(M)` above `rel` times the largest.
pub fn operator_schmidt_rank(mat: &ComplexMatrix, k: usize, m: usize, rel: f64) -> Result<usize> {
    let s = svd(&realign(mat, k, m)?)?.s;
    let top = s.first().copied().unwrap_or(0.0);
    Ok(s.iter().filter(|&&x| x > rel * top).count())
}

/// Scales `G_A` and turns the final iterates into local filters. Fails when a
/// marginal of `A` is singular; returns [`FnfOutcome::Inconclusive`] when the
/// scaling does not converge.
pub fn compute_fnf(a: &BipartiteState, tol: &Tolerances, opts: &ScalingOptions) -> Result<FnfOutcome> {
    let pre = check_preconditions(a, tol)?;
    if !pre.g_positive_definite {
        return Err(Error::Precondition { marginal: "G_A(Id)", min_eigenvalue: pre.min_eig_g });
    }
    if !pre.f_positive_definite {
        return Err(Error::Precondition { marginal: "F_A(Id)", min_eigenvalue: pre.min_eig_f });
    }
    let (k, m) = (a.k, a.m);
    let (g, _) = from_state(&a.rho, k, m, tol)?;
    let report = scaling::run(&g, tol, opts)?;
    if report.verdict != Verdict::ConvergedDs {
        return Ok(FnfOutcome::Inconclusive(report));
    }
    let xp0 = report.x_final.adjoint();
    let yp0 = report.y_final.clone();
    let filter = kron(&xp0, &yp0);
    let filtered = &filter * a.rho.as_matrix() * filter.adjoint();
    let t = numkernel::trace(&filtered).re;
    let s = t.powf(-0.25);
    let (xp, yp) = (xp0 * c(s), yp0 * c(s));
    let state_fnf = BipartiteState { k, m, rho: HermitianMatrix::new(filtered * c(1.0 / t))? };

    let defect = marginal_defects(&state_fnf);
    let bound = 10.0 * tol.conv_eps;
    if defect.0 > bound || defect.1 > bound {
        return Err(Error::NumericalFailure { what: "filter normal form marginals", residual: defect.0.max(defect.1) });
    }
    let cutoff = (10.0 * tol.conv_eps).max(tol.rank_rel / ((k * m) as f64).sqrt());
    let schmidt = schmidt_terms(state_fnf.rho.as_matrix(), k, m, cutoff)?;
    Ok(FnfOutcome::Success(Box::new(FnfResult { xp, yp, state_fnf, schmidt, report })))
}

/// `(‖tr₁ρ − Id/m‖_F, ‖tr₂ρ − Id/k‖_F)`.
fn marginal_defects(s: &BipartiteState) -> (f64, f64) {
    let (k, m) = (s.k, s.m);
    let g = s.marginal_second_factor() - identity(m) * c(1.0 / m as f64);
    let f = s.marginal_first_factor() - identity(k) * c(1.0 / k as f64);
    (g.norm(), f.norm())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FnfVerification {
    /// `‖tr₁ρ − Id/m‖_F`.
    pub marginal_second_factor: f64,
    /// `‖tr₂ρ − Id/k‖_F`.
    pub marginal_first_factor: f64,
    pub marginals_ok: bool,
    pub leading_term_exact: bool,
    /// `‖(tr(C_i C_j*)) − Id‖_F`.
    pub gram_c: f64,
    /// `‖(tr(D_i D_j*)) − Id‖_F`.
    pub gram_d: f64,
    pub orthonormal: bool,
    pub coefficients_ordered: bool,
    /// `‖ρ − Σ s_i C_i ⊗ D_i‖_F`.
    pub reconstruction: f64,
    pub reconstruction_ok: bool,
    pub filters_invertible: bool,
    pub passed: bool,
}

fn gram_defect(ms: &[&ComplexMatrix]) -> f64 {
    let n = ms.len();
    let g = ComplexMatrix::from_fn(n, n, |i, j| numkernel::trace(&(ms[i] * ms[j].adjoint())));
    (g - identity(n)).norm()
}

fn well_conditioned(x: &ComplexMatrix) -> bool {
    match svd(x) {
        Ok(d) => {
            let (hi, lo) = (d.s[0], *d.s.last().unwrap());
            hi > 0.0 && lo > FILTER_COND_FLOOR * hi
        }
        Err(_) => false,
    }
}

/// Re-checks every property of `r` from its stored matrices.
pub fn verify_fnf(r: &FnfResult, tol: &Tolerances) -> FnfVerification {
    let (k, m) = (r.state_fnf.k, r.state_fnf.m);
    let (g_def, f_def) = marginal_defects(&r.state_fnf);
    let marginals_ok = g_def <= 10.0 * tol.conv_eps && f_def <= 10.0 * tol.conv_eps;

    let leading_term_exact = r.schmidt.first().is_some_and(|t| {
        t.c == identity(k) * c(1.0 / (k as f64).sqrt()) && t.d == identity(m) * c(1.0 / (m as f64).sqrt())
    });
    let cs: Vec<&ComplexMatrix> = r.schmidt.iter().map(|t| &t.c).collect();
    let ds: Vec<&ComplexMatrix> = r.schmidt.iter().map(|t| &t.d).collect();
    let (gram_c, gram_d) = (gram_defect(&cs), gram_defect(&ds));
    let orthonormal = gram_c <= FNF_CHECK_TOL && gram_d <= FNF_CHECK_TOL;
    let coefficients_ordered = r.schmidt.iter().all(|t| t.coefficient >= 0.0)
        && r.schmidt.iter().skip(1).collect::<Vec<_>>().windows(2).all(|w| w[0].coefficient >= w[1].coefficient);

    let mut sum = ComplexMatrix::zeros(k * m, k * m);
    for t in &r.schmidt {
        sum += kron(&t.c, &t.d) * c(t.coefficient);
    }
    let reconstruction = (r.state_fnf.rho.as_matrix() - sum).norm();
    let reconstruction_ok = reconstruction <= FNF_CHECK_TOL;
    let filters_invertible = well_conditioned(&r.xp) && well_conditioned(&r.yp);
    let passed = marginals_ok && leading_term_exact && orthonormal && coefficients_ordered && reconstruction_ok && filters_invertible;
    FnfVerification {
        marginal_second_factor: g_def,
        marginal_first_factor: f_def,
        marginals_ok,
        leading_term_exact,
        gram_c,
        gram_d,
        orthonormal,
        coefficients_ordered,
        reconstruction,
        reconstruction_ok,
        filters_invertible,
        passed,
    }
}
