//! Support and total support of rectangular nonnegative matrices.
//!
//! A `k x m` matrix `A` has (total) support when its Kronecker lift
//! `A ⊗ 1_{m x k}` does. Deciding this on the `km x km` lift is unnecessary: a
//! perfect matching of the lift is the same thing as an integer flow on the
//! `k x m` pattern where row `i` ships `m` units, column `j` absorbs `k` units
//! and each nonzero cell carries at most `min(k, m)`. When no such flow
//! exists the minimum cut names an identically zero submatrix `A[α|β]` with
//! `|α|m + |β|k > km`.

mod flow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use flow::RowColumnNetwork;

/// Largest `k * m` accepted by the brute-force oracles.
pub const BRUTEFORCE_MAX_CELLS: usize = 16;

/// A `k x m` matrix with nonnegative real entries. Entries `<= zero_eps` count
/// as structural zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonnegPattern {
    k: usize,
    m: usize,
    entries: Vec<f64>,
    zero_eps: f64,
}

impl NonnegPattern {
    pub fn new(k: usize, m: usize, entries: Vec<f64>) -> Result<Self> {
        if k == 0 || m == 0 {
            return Err(Error::InvalidPattern(format!("empty {k}x{m} pattern")));
        }
        if entries.len() != k * m {
            return Err(Error::InvalidPattern(format!("{} entries for a {k}x{m} pattern", entries.len())));
        }
        if let Some(pos) = entries.iter().position(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidPattern(format!(
                "entry ({}, {}) = {} is not a finite nonnegative number",
                pos / m,
                pos % m,
                entries[pos]
            )));
        }
        Ok(NonnegPattern { k, m, entries, zero_eps: 0.0 })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let k = rows.len();
        let m = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidPattern("ragged rows".into()));
        }
        Self::new(k, m, rows.concat())
    }

    /// 0/1 pattern from the low `k * m` bits of `mask`, row-major, bit 0 first.
    pub fn from_bits(k: usize, m: usize, mask: u64) -> Result<Self> {
        Self::new(k, m, (0..k * m).map(|b| ((mask >> b) & 1) as f64).collect())
    }

    pub fn with_zero_eps(mut self, zero_eps: f64) -> Result<Self> {
        if !(zero_eps >= 0.0) {
            return Err(Error::InvalidPattern(format!("zero_eps = {zero_eps} must be nonnegative")));
        }
        self.zero_eps = zero_eps;
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.k
    }

    pub fn cols(&self) -> usize {
        self.m
    }

    pub fn zero_eps(&self) -> f64 {
        self.zero_eps
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.m + j]
    }

    pub fn is_nonzero(&self, i: usize, j: usize) -> bool {
        self.get(i, j) > self.zero_eps
    }

    fn nonzero_mask(&self) -> Vec<Vec<bool>> {
        (0..self.k).map(|i| (0..self.m).map(|j| self.is_nonzero(i, j)).collect()).collect()
    }

    /// `|α| m + |β| k`.
    pub fn weight(&self, alpha_len: usize, beta_len: usize) -> usize {
        alpha_len * self.m + beta_len * self.k
    }

    /// `A[α|β]` identically zero.
    pub fn is_zero_block(&self, alpha: &[usize], beta: &[usize]) -> bool {
        alpha.iter().all(|&i| beta.iter().all(|&j| !self.is_nonzero(i, j)))
    }

    /// `A(α|β)`, the block on the complementary rows and columns, identically zero.
    pub fn is_zero_complement(&self, alpha: &[usize], beta: &[usize]) -> bool {
        (0..self.k)
            .filter(|i| !alpha.contains(i))
            .all(|i| (0..self.m).filter(|j| !beta.contains(j)).all(|j| !self.is_nonzero(i, j)))
    }

    /// Kronecker lift `A ⊗ 1_{m x k}` as a dense `km x km` 0/1 matrix.
    pub fn lift(&self) -> Vec<Vec<bool>> {
        let n = self.k * self.m;
        (0..n).map(|r| (0..n).map(|c| self.is_nonzero(r / self.m, c / self.k)).collect()).collect()
    }
}

/// Identically zero submatrix `A[alpha|beta]` certifying that support or
/// total support fails.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeroSubmatrixWitness {
    pub alpha: Vec<usize>,
    pub beta: Vec<usize>,
    pub weight: usize,
    /// `weight == km` and the complementary block `A(alpha|beta)` is not
    /// identically zero.
    pub tight_violation: bool,
}

impl ZeroSubmatrixWitness {
    /// Re-checks the witness against `a`.
    pub fn is_valid_for(&self, a: &NonnegPattern) -> bool {
        let km = a.k * a.m;
        let in_range = self.alpha.iter().all(|&i| i < a.k) && self.beta.iter().all(|&j| j < a.m);
        in_range
            && !self.alpha.is_empty()
            && !self.beta.is_empty()
            && a.is_zero_block(&self.alpha, &self.beta)
            && self.weight == a.weight(self.alpha.len(), self.beta.len())
            && (self.weight > km
                || (self.weight == km && self.tight_violation && !a.is_zero_complement(&self.alpha, &self.beta)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportVerdict {
    pub holds: bool,
    pub witness: Option<ZeroSubmatrixWitness>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TotalSupportVerdict {
    pub holds: bool,
    /// First nonzero entry (row-major) that lies on no positive diagonal of
    /// the lift; `None` when the failure is already a lack of support.
    pub failing_entry: Option<(usize, usize)>,
    pub witness: Option<ZeroSubmatrixWitness>,
}

fn run_flow(a: &NonnegPattern, arcs: &[Vec<bool>], row_cap: Vec<i64>, col_cap: Vec<i64>) -> (i64, ZeroSubmatrixWitness) {
    let arc_cap = a.k.min(a.m) as i64;
    let mut net = RowColumnNetwork::new(arcs, row_cap, col_cap, arc_cap);
    let value = net.max_flow();
    let side = net.source_side();
    let weight = a.weight(side.rows.len(), side.unreached_cols.len());
    let witness = ZeroSubmatrixWitness { alpha: side.rows, beta: side.unreached_cols, weight, tight_violation: false };
    (value, witness)
}

pub fn has_support(a: &NonnegPattern) -> SupportVerdict {
    let (k, m) = (a.k, a.m);
    let arcs = a.nonzero_mask();
    let (value, witness) = run_flow(a, &arcs, vec![m as i64; k], vec![k as i64; m]);
    if value == (k * m) as i64 {
        SupportVerdict { holds: true, witness: None }
    } else {
        debug_assert!(witness.weight > k * m);
        SupportVerdict { holds: false, witness: Some(witness) }
    }
}

pub fn has_total_support(a: &NonnegPattern) -> TotalSupportVerdict {
    let support = has_support(a);
    if !support.holds {
        return TotalSupportVerdict { holds: false, failing_entry: None, witness: support.witness };
    }
    let (k, m) = (a.k, a.m);
    let arcs = a.nonzero_mask();
    for i in 0..k {
        for j in 0..m {
            if !arcs[i][j] {
                continue;
            }
            // Pin one unit on (i, j) and ask the rest of the network for km - 1.
            let mut row_cap = vec![m as i64; k];
            let mut col_cap = vec![k as i64; m];
            row_cap[i] -= 1;
            col_cap[j] -= 1;
            let (value, mut witness) = run_flow(a, &arcs, row_cap, col_cap);
            if value < (k * m) as i64 - 1 {
                // With support, the cut is forced to be tight and to separate (i, j).
                witness.tight_violation = witness.weight == k * m;
                return TotalSupportVerdict { holds: false, failing_entry: Some((i, j)), witness: Some(witness) };
            }
        }
    }
    TotalSupportVerdict { holds: true, failing_entry: None, witness: None }
}

fn guard(a: &NonnegPattern) -> Result<()> {
    if a.k * a.m > BRUTEFORCE_MAX_CELLS {
        return Err(Error::SizeGuard { k: a.k, m: a.m, limit: BRUTEFORCE_MAX_CELLS });
    }
    Ok(())
}

fn members(mask: u32, n: usize) -> Vec<usize> {
    (0..n).filter(|&b| mask >> b & 1 == 1).collect()
}

/// Scans every pair of nonempty index sets; reports the largest zero-block
/// weight and whether some block of weight exactly `km` has a nonzero
/// complement.
fn scan_zero_blocks(a: &NonnegPattern) -> (usize, bool) {
    let (k, m) = (a.k, a.m);
    let mut best = 0;
    let mut tight = false;
    for am in 1u32..(1 << k) {
        let alpha = members(am, k);
        // Columns that are zero on every row of alpha.
        let free: Vec<usize> = (0..m).filter(|&j| alpha.iter().all(|&i| !a.is_nonzero(i, j))).collect();
        for bm in 1u32..(1 << free.len()) {
            let beta: Vec<usize> = members(bm, free.len()).into_iter().map(|t| free[t]).collect();
            let w = a.weight(alpha.len(), beta.len());
            best = best.max(w);
            if w == k * m && !a.is_zero_complement(&alpha, &beta) {
                tight = true;
            }
        }
    }
    (best, tight)
}

/// Ground truth for [`has_support`] by enumerating identically zero
/// submatrices. Refuses patterns with more than [`BRUTEFORCE_MAX_CELLS`] cells.
pub fn has_support_bruteforce(a: &NonnegPattern) -> Result<bool> {
    guard(a)?;
    let (best, _) = scan_zero_blocks(a);
    Ok(best <= a.k * a.m)
}

/// Ground truth for [`has_total_support`], same enumeration.
pub fn has_total_support_bruteforce(a: &NonnegPattern) -> Result<bool> {
    guard(a)?;
    let (best, tight) = scan_zero_blocks(a);
    Ok(best <= a.k * a.m && !tight)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    Holds,
    Fails,
    NotApplicable,
}

impl Condition {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Condition::Holds
        } else {
            Condition::Fails
        }
    }
}

/// Zero-count conditions that each guarantee total support.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeroCountReport {
    pub zero_count: usize,
    /// `k != m` and fewer than `min(k, m)` zeros.
    pub rectangular: Condition,
    /// `k == m` and fewer than `k - 1` zeros.
    pub square: Condition,
    /// No zero row or column and fewer than `max(k, m) / min(k, m)` zeros.
    pub ratio: Condition,
}

impl ZeroCountReport {
    pub fn guarantees_total_support(&self) -> bool {
        [self.rectangular, self.square, self.ratio].contains(&Condition::Holds)
    }
}

pub fn zero_fraction_sufficient(a: &NonnegPattern) -> ZeroCountReport {
    let (k, m) = (a.k, a.m);
    let zero_count = a.entries.iter().filter(|&&x| x <= a.zero_eps).count();
    let rectangular = if k != m { Condition::from_bool(zero_count < k.min(m)) } else { Condition::NotApplicable };
    let square = if k == m { Condition::from_bool(zero_count + 1 < k) } else { Condition::NotApplicable };
    let zero_row = (0..k).any(|i| (0..m).all(|j| !a.is_nonzero(i, j)));
    let zero_col = (0..m).any(|j| (0..k).all(|i| !a.is_nonzero(i, j)));
    let ratio = Condition::from_bool(
        !zero_row && !zero_col && (zero_count as f64) < k.max(m) as f64 / k.min(m) as f64,
    );
    ZeroCountReport { zero_count, rectangular, square, ratio }
}
