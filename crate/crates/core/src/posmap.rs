//! Linear maps `T: M_k -> M_m` that send Hermitian matrices to Hermitian
//! matrices, stored as Choi blocks.
//!
//! Block `(i, j)` of the `km x km` Choi matrix is `T(e_i e_jᵀ)`, so
//! `T(X) = Σ_ij X(i, j) T(e_i e_jᵀ)`. A state `A = Σ_ij e_i e_jᵀ ⊗ A_ij`
//! defines `G_A(X) = Σ_ij X(j, i) A_ij`, whose Choi blocks are therefore the
//! block transpose of `A`.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcomb::{self, NonnegPattern, ZeroSubmatrixWitness};
use crate::numkernel::{self, c, identity, kron, ComplexMatrix, HermitianMatrix, Tolerances};
use crate::random;

/// Number of random unit vectors `v` for which `T(vv*)` must be PSD.
pub const POSITIVITY_SAMPLES: usize = 200;
/// Smallest eigenvalue of `T(vv*)` tolerated, relative to `‖T(Id)‖`.
pub const POSITIVITY_REL_TOL: f64 = 1e-9;
/// Fixed seed for the positivity sample so construction is deterministic.
const POSITIVITY_SEED: u64 = 0x706f_736d_6170;
/// Tolerance for unitary bases and certificate projectors.
pub const STRUCTURE_TOL: f64 = 1e-10;
/// Random matrices per intermediate rank in the strict rank check.
pub const STRICT_RANK_SAMPLES: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct ChoiMap {
    k: usize,
    m: usize,
    choi: ComplexMatrix,
}

impl ChoiMap {
    /// Validates shape, finiteness and Hermiticity preservation, then samples
    /// positivity on [`POSITIVITY_SAMPLES`] random rank-one projections.
    pub fn new(k: usize, m: usize, choi: ComplexMatrix) -> Result<Self> {
        let map = Self::new_without_positivity_check(k, m, choi)?;
        map.check_positivity_sampled(POSITIVITY_SAMPLES, &mut random::seeded(POSITIVITY_SEED))?;
        Ok(map)
    }

    /// Same as [`ChoiMap::new`] without the positivity sample, for maps that
    /// are positive by construction.
    pub fn new_without_positivity_check(k: usize, m: usize, choi: ComplexMatrix) -> Result<Self> {
        if k == 0 || m == 0 || choi.nrows() != k * m || choi.ncols() != k * m {
            return Err(Error::DimensionMismatch(format!(
                "Choi matrix of a map M_{k} -> M_{m} must be {0}x{0}, got {1}x{2}",
                k * m,
                choi.nrows(),
                choi.ncols()
            )));
        }
        let choi = HermitianMatrix::new_checked(choi, 1e-8)?.into_matrix();
        Ok(ChoiMap { k, m, choi })
    }

    /// Builds the Choi matrix by evaluating `f` on the matrix units.
    pub fn from_action(k: usize, m: usize, f: impl Fn(&ComplexMatrix) -> ComplexMatrix) -> Result<Self> {
        let mut choi = ComplexMatrix::zeros(k * m, k * m);
        for i in 0..k {
            for j in 0..k {
                let mut e = ComplexMatrix::zeros(k, k);
                e[(i, j)] = numkernel::ONE;
                let out = f(&e);
                if out.nrows() != m || out.ncols() != m {
                    return Err(Error::DimensionMismatch(format!(
                        "action returned {}x{}, expected {m}x{m}",
                        out.nrows(),
                        out.ncols()
                    )));
                }
                choi.view_mut((i * m, j * m), (m, m)).copy_from(&out);
            }
        }
        Self::new(k, m, choi)
    }

    /// `X ↦ X` on `M_k`.
    pub fn identity(k: usize) -> Self {
        Self::from_action(k, k, |x| x.clone()).expect("identity map is positive")
    }

    /// `X ↦ tr(X) Id_m / √(km)`, doubly stochastic.
    pub fn trace_to_identity(k: usize, m: usize) -> Self {
        let s = 1.0 / ((k * m) as f64).sqrt();
        Self::from_action(k, m, |x| identity(m) * (numkernel::trace(x) * s)).expect("positive map")
    }

    /// `X ↦ R X R*` for a `m x k` matrix `R`.
    pub fn congruence(r: &ComplexMatrix) -> Result<Self> {
        Self::from_action(r.ncols(), r.nrows(), |x| r * x * r.adjoint())
    }

    /// `X ↦ a(X₁₁) ⊕ b(X₂₂)` where `X₁₁`, `X₂₂` are the diagonal blocks of `X`
    /// matching the input sizes of `a` and `b`.
    pub fn direct_sum(a: &ChoiMap, b: &ChoiMap) -> Self {
        let (k, m) = (a.k + b.k, a.m + b.m);
        let mut choi = ComplexMatrix::zeros(k * m, k * m);
        for (map, ko, mo) in [(a, 0, 0), (b, a.k, a.m)] {
            for i in 0..map.k {
                for j in 0..map.k {
                    let (r, col) = ((ko + i) * m + mo, (ko + j) * m + mo);
                    choi.view_mut((r, col), (map.m, map.m)).copy_from(&map.block(i, j));
                }
            }
        }
        ChoiMap { k, m, choi }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn choi(&self) -> &ComplexMatrix {
        &self.choi
    }

    /// `T(e_i e_jᵀ)`.
    pub fn block(&self, i: usize, j: usize) -> ComplexMatrix {
        numkernel::block(&self.choi, i, j, self.m)
    }

    pub fn apply(&self, x: &ComplexMatrix) -> Result<ComplexMatrix> {
        check_shape(x, self.k, "input")?;
        Ok(self.apply_unchecked(x))
    }

    pub(crate) fn apply_unchecked(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let m = self.m;
        let mut out = ComplexMatrix::zeros(m, m);
        for i in 0..self.k {
            for j in 0..self.k {
                let w = x[(i, j)];
                if w == numkernel::ZERO {
                    continue;
                }
                out += self.choi.view((i * m, j * m), (m, m)) * w;
            }
        }
        out
    }

    /// Adjoint for `⟨A, B⟩ = tr(A B*)`: `T*(Y)_ij = tr(T(e_i e_jᵀ)* Y)`.
    pub fn apply_adjoint(&self, y: &ComplexMatrix) -> Result<ComplexMatrix> {
        check_shape(y, self.m, "adjoint input")?;
        Ok(self.apply_adjoint_unchecked(y))
    }

    pub(crate) fn apply_adjoint_unchecked(&self, y: &ComplexMatrix) -> ComplexMatrix {
        let m = self.m;
        ComplexMatrix::from_fn(self.k, self.k, |i, j| {
            let b = self.choi.view((i * m, j * m), (m, m));
            b.iter().zip(y.iter()).map(|(bv, yv)| bv.conj() * yv).sum()
        })
    }

    /// Choi representation of `T*: M_m -> M_k`.
    pub fn adjoint_map(&self) -> ChoiMap {
        let (k, m) = (self.k, self.m);
        let choi = ComplexMatrix::from_fn(k * m, k * m, |r, col| {
            let (p, i) = (r / k, r % k);
            let (q, j) = (col / k, col % k);
            self.choi[(i * m + p, j * m + q)].conj()
        });
        ChoiMap { k: m, m: k, choi }
    }

    /// `Z ↦ Y T(X Z X*) Y*`, whose Choi matrix is `(Xᵀ ⊗ Y) C (Xᵀ ⊗ Y)*`.
    pub fn conjugated(&self, x: &ComplexMatrix, y: &ComplexMatrix) -> Result<ChoiMap> {
        check_shape(x, self.k, "input filter")?;
        check_shape(y, self.m, "output filter")?;
        let f = kron(&x.transpose(), y);
        Self::new_without_positivity_check(self.k, self.m, &f * &self.choi * f.adjoint())
    }

    /// Fails with [`Error::NotPositiveMap`] if some sampled `T(vv*)` has an
    /// eigenvalue below `-POSITIVITY_REL_TOL * ‖T(Id)‖`.
    pub fn check_positivity_sampled<R: Rng + ?Sized>(&self, samples: usize, rng: &mut R) -> Result<()> {
        let scale = self.apply_unchecked(&identity(self.k)).norm().max(f64::MIN_POSITIVE);
        for _ in 0..samples {
            let v = random::unit_vector(rng, self.k);
            let out = HermitianMatrix::new(self.apply_unchecked(&(&v * v.adjoint())))?;
            let (lo, _) = out.spectrum_bounds()?;
            if lo < -POSITIVITY_REL_TOL * scale {
                return Err(Error::NotPositiveMap { eigenvalue: lo });
            }
        }
        Ok(())
    }
}

fn check_shape(x: &ComplexMatrix, n: usize, what: &str) -> Result<()> {
    if x.nrows() != n || x.ncols() != n {
        return Err(Error::DimensionMismatch(format!("{what} must be {n}x{n}, got {}x{}", x.nrows(), x.ncols())));
    }
    Ok(())
}

/// The pair `(G_A, F_A)` for a PSD `km x km` state `A = Σ A_i ⊗ B_i`:
/// `G_A(X) = Σ B_i tr(A_i X)` and `F_A(X) = Σ A_i tr(B_i X)`.
pub fn from_state(a: &HermitianMatrix, k: usize, m: usize, tol: &Tolerances) -> Result<(ChoiMap, ChoiMap)> {
    if k == 0 || m == 0 || a.dim() != k * m {
        return Err(Error::DimensionMismatch(format!("state must be {0}x{0} for factors ({k}, {m})", k * m)));
    }
    let (lo, hi) = a.spectrum_bounds()?;
    if lo < -tol.rank_rel * hi.abs().max(lo.abs()) {
        return Err(Error::NotPositiveSemidefinite { eigenvalue: lo });
    }
    let s = a.as_matrix();
    let g = ComplexMatrix::from_fn(k * m, k * m, |r, col| {
        let (p, u) = (r / m, r % m);
        let (q, v) = (col / m, col % m);
        s[(q * m + u, p * m + v)]
    });
    // F_A(e_p e_qᵀ)_{ij} = A(i m + q, j m + p).
    let f = ComplexMatrix::from_fn(k * m, k * m, |r, col| {
        let (p, i) = (r / k, r % k);
        let (q, j) = (col / k, col % k);
        s[(i * m + q, j * m + p)]
    });
    Ok((ChoiMap::new_without_positivity_check(k, m, g)?, ChoiMap::new_without_positivity_check(m, k, f)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DsCheck {
    pub holds: bool,
    /// `‖T(Id/√k) − Id/√m‖_F`.
    pub forward_residual: f64,
    /// `‖T*(Id/√m) − Id/√k‖_F`.
    pub adjoint_residual: f64,
}

pub fn is_doubly_stochastic(t: &ChoiMap, eps: f64) -> DsCheck {
    let (k, m) = (t.k as f64, t.m as f64);
    let fwd = t.apply_unchecked(&(identity(t.k) * c(1.0 / k.sqrt()))) - identity(t.m) * c(1.0 / m.sqrt());
    let adj = t.apply_adjoint_unchecked(&(identity(t.m) * c(1.0 / m.sqrt()))) - identity(t.k) * c(1.0 / k.sqrt());
    let (forward_residual, adjoint_residual) = (fwd.norm(), adj.norm());
    DsCheck { holds: forward_residual <= eps && adjoint_residual <= eps, forward_residual, adjoint_residual }
}

/// Square map on `M_m ⊗ M_k` sending `Σ_ij e_i e_jᵀ ⊗ B_ij` (with
/// `B_ij ∈ M_k`) to `T(Σ_i B_ii) ⊗ Id_k`.
pub fn tilde_lift(t: &ChoiMap) -> ChoiMap {
    let (k, m) = (t.k, t.m);
    let n = m * k;
    let mut choi = ComplexMatrix::zeros(n * n, n * n);
    let id_k = identity(k);
    for i in 0..m {
        for p in 0..k {
            for q in 0..k {
                let out = kron(&t.block(p, q), &id_k);
                let (a, b) = (i * k + p, i * k + q);
                choi.view_mut((a * n, b * n), (n, n)).copy_from(&out);
            }
        }
    }
    ChoiMap { k: n, m: n, choi }
}

fn check_unitary(u: &ComplexMatrix, n: usize) -> Result<()> {
    check_shape(u, n, "basis")?;
    let deviation = numkernel::unitarity_defect(u);
    if deviation > STRUCTURE_TOL * (n as f64).max(1.0) {
        return Err(Error::NonUnitary { deviation });
    }
    Ok(())
}

/// `k x m` matrix with entries `tr(T(v_i v_i*) w_j w_j*)` for the columns
/// `v_i` of `basis_v` and `w_j` of `basis_w`. Round-off negatives are clamped
/// to zero, and entries up to `1e-10` times the largest are structural zeros.
pub fn pattern_matrix(t: &ChoiMap, basis_v: &ComplexMatrix, basis_w: &ComplexMatrix) -> Result<NonnegPattern> {
    check_unitary(basis_v, t.k)?;
    check_unitary(basis_w, t.m)?;
    let mut entries = Vec::with_capacity(t.k * t.m);
    for i in 0..t.k {
        let v: DVector<Complex64> = basis_v.column(i).into_owned();
        let image = t.apply_unchecked(&(&v * v.adjoint()));
        for j in 0..t.m {
            let w = basis_w.column(j);
            let val = (w.adjoint() * &image * w)[(0, 0)].re;
            entries.push(val.max(0.0));
        }
    }
    let top = entries.iter().cloned().fold(0.0, f64::max);
    NonnegPattern::new(t.k, t.m, entries)?.with_zero_eps(1e-10 * top)
}

/// A basis pair in which the pattern matrix fails (total) support. Trial 0
/// is the canonical basis pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisViolation {
    pub trial: usize,
    pub pattern: NonnegPattern,
    pub failing_entry: Option<(usize, usize)>,
    pub witness: Option<ZeroSubmatrixWitness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalsifierReport {
    pub trials: usize,
    /// A proof that `T` lacks support, if one was found.
    pub support_violation: Option<BasisViolation>,
    /// A proof that `T` lacks total support, if one was found.
    pub total_support_violation: Option<BasisViolation>,
}

impl FalsifierReport {
    /// `false` means no violation turned up, which proves nothing.
    pub fn falsified(&self) -> bool {
        self.support_violation.is_some() || self.total_support_violation.is_some()
    }
}

/// Looks for basis pairs whose pattern matrix lacks support or total
/// support. Trial 0 uses the canonical bases, the rest are Haar random.
pub fn sampled_support_falsifier<R: Rng + ?Sized>(t: &ChoiMap, trials: usize, rng: &mut R) -> Result<FalsifierReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let mut report = FalsifierReport { trials, support_violation: None, total_support_violation: None };
    for trial in 0..trials {
        let (v, w) = if trial == 0 {
            (identity(t.k), identity(t.m))
        } else {
            (random::haar_unitary(rng, t.k), random::haar_unitary(rng, t.m))
        };
        let pattern = pattern_matrix(t, &v, &w)?;
        if report.support_violation.is_none() {
            let s = matcomb::has_support(&pattern);
            if !s.holds {
                report.support_violation =
                    Some(BasisViolation { trial, pattern: pattern.clone(), failing_entry: None, witness: s.witness });
            }
        }
        if report.total_support_violation.is_none() {
            let ts = matcomb::has_total_support(&pattern);
            if !ts.holds {
                report.total_support_violation =
                    Some(BasisViolation { trial, pattern, failing_entry: ts.failing_entry, witness: ts.witness });
            }
        }
        if report.support_violation.is_some() {
            break;
        }
    }
    Ok(report)
}

/// Orthogonal projections `V_i ∈ M_k`, `W_i ∈ M_m` splitting both spaces
/// into mutually orthogonal blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCertificate {
    v: Vec<ComplexMatrix>,
    w: Vec<ComplexMatrix>,
}

impl BlockCertificate {
    pub fn new(v: Vec<ComplexMatrix>, w: Vec<ComplexMatrix>) -> Result<Self> {
        if v.is_empty() || v.len() != w.len() {
            return Err(Error::MalformedCertificate(format!("{} input and {} output projections", v.len(), w.len())));
        }
        check_projection_family(&v, "V")?;
        check_projection_family(&w, "W")?;
        Ok(BlockCertificate { v, w })
    }

    /// Single block `V = Id_k`, `W = Id_m`.
    pub fn trivial(k: usize, m: usize) -> Self {
        BlockCertificate { v: vec![identity(k)], w: vec![identity(m)] }
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn v(&self) -> &[ComplexMatrix] {
        &self.v
    }

    pub fn w(&self) -> &[ComplexMatrix] {
        &self.w
    }

    pub fn input_dim(&self) -> usize {
        self.v[0].nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w[0].nrows()
    }
}

fn projection_rank(p: &ComplexMatrix) -> usize {
    numkernel::trace(p).re.round().max(0.0) as usize
}

fn check_projection_family(ps: &[ComplexMatrix], name: &str) -> Result<()> {
    let n = ps[0].nrows();
    let bad = |msg: String| Err(Error::MalformedCertificate(format!("{name}: {msg}")));
    let mut sum = ComplexMatrix::zeros(n, n);
    for (i, p) in ps.iter().enumerate() {
        if p.nrows() != n || p.ncols() != n {
            return bad(format!("projection {i} is {}x{}, expected {n}x{n}", p.nrows(), p.ncols()));
        }
        numkernel::check_finite(p)?;
        if (p - p.adjoint()).norm() > STRUCTURE_TOL {
            return bad(format!("projection {i} is not Hermitian"));
        }
        if (p * p - p).norm() > STRUCTURE_TOL {
            return bad(format!("projection {i} is not idempotent"));
        }
        for (j, q) in ps.iter().enumerate().skip(i + 1) {
            if q.nrows() == n && (p * q).norm() > STRUCTURE_TOL {
                return bad(format!("projections {i} and {j} are not orthogonal"));
            }
        }
        sum += p;
    }
    if (sum - identity(n)).norm() > STRUCTURE_TOL {
        return bad("projections do not sum to the identity".into());
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionOutcome {
    pub passed: bool,
    /// Decided on random samples rather than proved.
    pub sampled: bool,
    /// First block that failed.
    pub failing_block: Option<usize>,
    /// Largest measured defect, where one applies.
    pub deviation: f64,
}

impl ConditionOutcome {
    fn exact(failing_block: Option<usize>, deviation: f64) -> Self {
        ConditionOutcome { passed: failing_block.is_none(), sampled: false, failing_block, deviation }
    }
}

/// The four structural conditions for equivalence to a doubly stochastic
/// map, checked block by block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    /// The projections split `C^k` and `C^m` into orthogonal direct sums.
    pub direct_sum: ConditionOutcome,
    /// `T(V_i M_k V_i) ⊆ W_i M_m W_i`.
    pub invariance: ConditionOutcome,
    /// `rank(X) rank(W_i) < rank(T(X)) rank(V_i)` for PSD `X` in
    /// `V_i M_k V_i` with `0 < rank(X) < rank(V_i)`; sampled.
    pub strict_rank: ConditionOutcome,
    /// `rank(W_i) / rank(V_i) = m / k`.
    pub rank_ratio: ConditionOutcome,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.direct_sum.passed && self.invariance.passed && self.strict_rank.passed && self.rank_ratio.passed
    }
}

/// Largest relative defect of `T(V E V) ∈ W M_m W` over the matrix units
/// `E`; zero exactly when `T(V M_k V) ⊆ W M_m W`.
pub fn invariance_defect(t: &ChoiMap, v: &ComplexMatrix, w: &ComplexMatrix) -> f64 {
    let scale = t.apply_unchecked(&identity(t.k)).norm().max(f64::MIN_POSITIVE);
    let mut dev: f64 = 0.0;
    for a in 0..t.k {
        for b in 0..t.k {
            let x = v.column(a) * v.row(b);
            let y = t.apply_unchecked(&x);
            dev = dev.max((&y - w * &y * w).norm() / scale);
        }
    }
    dev
}

/// Checks `cert` against `t`. Invariance is tested on `T(V_i)` and on random
/// `V_i X V_i`, accepting defects up to `tol` relative to `‖T(V_i X V_i)‖`.
pub fn verify_block_certificate<R: Rng + ?Sized>(
    t: &ChoiMap,
    cert: &BlockCertificate,
    tol: f64,
    rng: &mut R,
) -> Result<CertificateReport> {
    if cert.input_dim() != t.k || cert.output_dim() != t.m {
        return Err(Error::MalformedCertificate(format!(
            "certificate acts on M_{} -> M_{}, map on M_{} -> M_{}",
            cert.input_dim(),
            cert.output_dim(),
            t.k,
            t.m
        )));
    }
    let (k, m) = (t.k, t.m);
    let rank_tol = Tolerances::default();

    let mut direct_dev: f64 = 0.0;
    for ps in [&cert.v, &cert.w] {
        let n = ps[0].nrows();
        let sum = ps.iter().fold(ComplexMatrix::zeros(n, n), |acc, p| acc + p);
        direct_dev = direct_dev.max((sum - identity(n)).norm());
        for (i, p) in ps.iter().enumerate() {
            for q in &ps[i + 1..] {
                direct_dev = direct_dev.max((p * q).norm());
            }
        }
    }
    let direct_sum = ConditionOutcome::exact((direct_dev > STRUCTURE_TOL).then_some(0), direct_dev);

    let mut inv_fail = None;
    let mut inv_dev: f64 = 0.0;
    for (b, (v, w)) in cert.v.iter().zip(&cert.w).enumerate() {
        let leak = |x: &ComplexMatrix| {
            let y = t.apply_unchecked(&(v * x * v));
            (&y - w * &y * w).norm() / y.norm().max(1.0)
        };
        let mut dev = leak(&identity(k));
        for _ in 0..STRICT_RANK_SAMPLES {
            dev = dev.max(leak(&random::gaussian(rng, k, k)));
        }
        inv_dev = inv_dev.max(dev);
        if dev > tol && inv_fail.is_none() {
            inv_fail = Some(b);
        }
    }
    let invariance = ConditionOutcome::exact(inv_fail, inv_dev);

    let ratio_fail = cert.v.iter().zip(&cert.w).position(|(v, w)| projection_rank(w) * k != projection_rank(v) * m);
    let rank_ratio = ConditionOutcome::exact(ratio_fail, 0.0);

    let mut strict_fail = None;
    'blocks: for (b, (v, w)) in cert.v.iter().zip(&cert.w).enumerate() {
        let (rv, rw) = (projection_rank(v), projection_rank(w));
        for r in 1..rv {
            for _ in 0..STRICT_RANK_SAMPLES {
                let z = v * random::gaussian(rng, k, r);
                let x = HermitianMatrix::new(&z * z.adjoint())?;
                let rx = numkernel::rank_tol(&x, &rank_tol)?;
                let image = HermitianMatrix::new(t.apply_unchecked(x.as_matrix()))?;
                let rt = numkernel::rank_tol(&image, &rank_tol)?;
                if rx * rw >= rt * rv {
                    strict_fail = Some(b);
                    break 'blocks;
                }
            }
        }
    }
    let strict_rank = ConditionOutcome { sampled: true, ..ConditionOutcome::exact(strict_fail, 0.0) };

    Ok(CertificateReport { direct_sum, invariance, strict_rank, rank_ratio })
}
