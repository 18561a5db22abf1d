//! Foundational types: quantile grids, datasets, coefficient matrices and
//! priors, plus the check loss and the non-crossing predicate.

use serde::{Deserialize, Serialize};

use crate::error::{contract, domain, Result};
use crate::normal;

/// Quantile check loss ρ_τ(u).
pub fn check_loss(u: f64, tau: f64) -> Result<f64> {
    if !u.is_finite() {
        return domain(format!("check loss needs a finite residual, got {u}"));
    }
    check_tau(tau)?;
    Ok(rho(u, tau))
}

/// Unchecked check loss for hot loops.
#[inline]
pub(crate) fn rho(u: f64, tau: f64) -> f64 {
    if u >= 0.0 {
        u * tau
    } else {
        u * (tau - 1.0)
    }
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        domain(format!("quantile level must lie in (0, 1), got {tau}"))
    }
}

/// Tolerance used when matching a requested level against grid members.
pub const LEVEL_MATCH_TOL: f64 = 1e-9;

/// Strictly increasing quantile levels inside (0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileGrid {
    levels: Vec<f64>,
}

impl QuantileGrid {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return domain("quantile grid needs at least one level");
        }
        for &t in &levels {
            check_tau(t)?;
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return domain("quantile levels must be strictly increasing");
        }
        Ok(Self { levels })
    }

    /// Equally spaced levels `k/(m0+1)`, refined `refinements` times by
    /// inserting the midpoint of every gap (boundary gaps to 0 and 1
    /// included). Each refinement turns `m` levels into `2m + 1`.
    pub fn make(m0: usize, refinements: u32) -> Result<Self> {
        if m0 == 0 {
            return domain("m0 must be at least 1");
        }
        if refinements > 20 {
            return domain("at most 20 refinement levels are supported");
        }
        // levels are k / denom exactly, which keeps the dyadic midpoints exact
        let denom = (m0 as u64 + 1) << refinements;
        let levels = (1..denom).map(|k| k as f64 / denom as f64).collect();
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Largest gap between consecutive levels, counting the gaps to 0 and 1.
    pub fn max_gap(&self) -> f64 {
        let mut prev = 0.0;
        let mut gap: f64 = 0.0;
        for &t in self.levels.iter().chain(std::iter::once(&1.0)) {
            gap = gap.max(t - prev);
            prev = t;
        }
        gap
    }

    /// Position of `tau` in the grid, if it is a member.
    pub fn index_of(&self, tau: f64) -> Option<usize> {
        self.levels.iter().position(|&t| (t - tau).abs() < LEVEL_MATCH_TOL)
    }
}

/// Design matrix (row-major, intercept first) and response.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Vec<f64>,
    y: Vec<f64>,
    n: usize,
    p: usize,
}

impl Dataset {
    /// Builds a dataset from a row-major `n × p` design whose first column is
    /// the intercept.
    pub fn new(p: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = y.len();
        if n == 0 || p == 0 {
            return contract("dataset needs n >= 1 and p >= 1");
        }
        if x.len() != n * p {
            return contract(format!("design has {} entries, expected {}x{}", x.len(), n, p));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return domain("dataset contains non-finite values");
        }
        if x.chunks_exact(p).any(|row| row[0] != 1.0) {
            return contract("first design column must be identically 1");
        }
        Ok(Self { x, y, n, p })
    }

    /// Prepends the intercept column to the given covariate rows.
    pub fn with_intercept(covariates: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        if covariates.len() != y.len() {
            return contract("covariate rows and responses differ in length");
        }
        let k = covariates.first().map_or(0, Vec::len);
        if covariates.iter().any(|r| r.len() != k) {
            return contract("ragged covariate rows");
        }
        let mut x = Vec::with_capacity(y.len() * (k + 1));
        for row in covariates {
            x.push(1.0);
            x.extend_from_slice(row);
        }
        Self::new(k + 1, x, y)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.x.chunks_exact(self.p)
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Rows picked by index (repeats allowed).
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let mut x = Vec::with_capacity(idx.len() * self.p);
        let mut y = Vec::with_capacity(idx.len());
        for &i in idx {
            if i >= self.n {
                return contract(format!("row index {i} out of range"));
            }
            x.extend_from_slice(self.row(i));
            y.push(self.y[i]);
        }
        Self::new(self.p, x, y)
    }

    /// Whether the design has full column rank (Gaussian elimination on XᵀX
    /// with a relative pivot tolerance).
    pub fn is_full_rank(&self) -> bool {
        let p = self.p;
        let mut g = vec![0.0; p * p];
        for row in self.rows() {
            for a in 0..p {
                for b in 0..p {
                    g[a * p + b] += row[a] * row[b];
                }
            }
        }
        let scale = (0..p).map(|a| g[a * p + a]).fold(0.0, f64::max);
        if scale == 0.0 {
            return false;
        }
        let tol = 1e-12 * scale;
        for col in 0..p {
            let piv = (col..p)
                .max_by(|&a, &b| g[a * p + col].abs().total_cmp(&g[b * p + col].abs()))
                .unwrap();
            if g[piv * p + col].abs() <= tol {
                return false;
            }
            for k in 0..p {
                g.swap(col * p + k, piv * p + k);
            }
            for r in col + 1..p {
                let f = g[r * p + col] / g[col * p + col];
                for k in col..p {
                    g[r * p + k] -= f * g[col * p + k];
                }
            }
        }
        true
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `m × p` coefficients; row `j` is β(τ_j).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientMatrix {
    m: usize,
    p: usize,
    values: Vec<f64>,
}

impl CoefficientMatrix {
    pub fn new(m: usize, p: usize, values: Vec<f64>) -> Result<Self> {
        if m == 0 || p == 0 || values.len() != m * p {
            return contract(format!("coefficient matrix needs {m}x{p} values, got {}", values.len()));
        }
        Ok(Self { m, p, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return contract("ragged coefficient rows");
        }
        Self::new(rows.len(), p, rows.concat())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn get(&self, j: usize, l: usize) -> f64 {
        self.values[j * self.p + l]
    }

    pub fn set(&mut self, j: usize, l: usize, v: f64) {
        self.values[j * self.p + l] = v;
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.p..(j + 1) * self.p]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Quantile value x'β(τ_j).
    pub fn fitted(&self, j: usize, x: &[f64]) -> f64 {
        dot(self.row(j), x)
    }

    /// All m fitted quantiles at `x`.
    pub fn fitted_all(&self, x: &[f64]) -> Vec<f64> {
        (0..self.m).map(|j| self.fitted(j, x)).collect()
    }
}

/// True iff x_i'β(τ_1) < … < x_i'β(τ_m) at every observed row.
pub fn validate_noncrossing(coefs: &CoefficientMatrix, data: &Dataset) -> Result<bool> {
    if coefs.p() != data.p() {
        return contract(format!(
            "coefficients have p = {}, dataset has p = {}",
            coefs.p(),
            data.p()
        ));
    }
    Ok(data.rows().all(|x| {
        let mut prev = f64::NEG_INFINITY;
        (0..coefs.m()).all(|j| {
            let q = coefs.fitted(j, x);
            let ok = q > prev;
            prev = q;
            ok
        })
    }))
}

/// Independent normal prior on every entry of B, truncated to the
/// non-crossing region. Entries are indexed `j * p + l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    mean: Vec<f64>,
    sd: Vec<f64>,
}

impl PriorSpec {
    pub fn new(mean: Vec<f64>, sd: Vec<f64>) -> Result<Self> {
        if mean.len() != sd.len() || mean.is_empty() {
            return contract("prior mean and sd must be non-empty and of equal length");
        }
        if sd.iter().any(|s| !(*s > 0.0 && s.is_finite())) || mean.iter().any(|m| !m.is_finite()) {
            return domain("prior sds must be positive and finite, means finite");
        }
        Ok(Self { mean, sd })
    }

    /// Same N(mean, sd²) for all `len` entries.
    pub fn iid(len: usize, mean: f64, sd: f64) -> Result<Self> {
        Self::new(vec![mean; len], vec![sd; len])
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn sd(&self) -> &[f64] {
        &self.sd
    }

    /// Untruncated normal log density of entry `idx` at `v`.
    #[inline]
    pub fn coord_log_density(&self, idx: usize, v: f64) -> f64 {
        let s = self.sd[idx];
        normal::log_phi((v - self.mean[idx]) / s) - s.ln()
    }

    /// Sum of the untruncated marginal log densities. The truncation
    /// normalizer is omitted; it is constant over the feasible region.
    pub fn log_density_untruncated(&self, coefs: &CoefficientMatrix) -> Result<f64> {
        if coefs.values().len() != self.len() {
            return contract("prior length does not match coefficient matrix");
        }
        Ok(coefs
            .values()
            .iter()
            .enumerate()
            .map(|(k, &v)| self.coord_log_density(k, v))
            .sum())
    }

    /// Unnormalized log prior restricted to the feasible region: −∞ when B
    /// crosses at some row of `data`.
    pub fn log_density(&self, coefs: &CoefficientMatrix, data: &Dataset) -> Result<f64> {
        if !validate_noncrossing(coefs, data)? {
            return Ok(f64::NEG_INFINITY);
        }
        self.log_density_untruncated(coefs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy(p: usize, rows: &[&[f64]]) -> Dataset {
        let x: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Dataset::new(p, x, vec![0.0; rows.len()]).unwrap()
    }

    #[test]
    fn check_loss_examples() {
        assert_eq!(check_loss(4.0, 0.25).unwrap(), 1.0);
        assert_eq!(check_loss(-4.0, 0.25).unwrap(), 3.0);
        assert_eq!(check_loss(0.0, 0.9).unwrap(), 0.0);
        assert!(check_loss(f64::NAN, 0.5).is_err());
        assert!(check_loss(1.0, 0.0).is_err());
        assert!(check_loss(1.0, 1.0).is_err());
    }

    #[test]
    fn grid_examples() {
        assert_eq!(QuantileGrid::make(3, 0).unwrap().levels(), &[0.25, 0.5, 0.75]);
        assert_eq!(QuantileGrid::make(1, 1).unwrap().levels(), &[0.25, 0.5, 0.75]);
        let g = QuantileGrid::make(49, 0).unwrap();
        assert_eq!(g.len(), 49);
        assert!((g.max_gap() - 0.02).abs() < 1e-15);
        assert!(QuantileGrid::make(0, 0).is_err());
        assert!(QuantileGrid::new(vec![0.5, 0.5]).is_err());
        assert!(QuantileGrid::new(vec![0.0, 0.5]).is_err());
        let g15 = QuantileGrid::make(15, 0).unwrap();
        assert_eq!(g15.index_of(0.25), Some(3));
        assert_eq!(g15.index_of(0.75), Some(11));
        assert_eq!(g15.index_of(0.1), None);
    }

    #[test]
    fn refinement_sizes() {
        assert_eq!(QuantileGrid::make(15, 2).unwrap().len(), 63);
        assert_eq!(QuantileGrid::make(15, 4).unwrap().len(), 255);
    }

    #[test]
    fn noncrossing_examples() {
        let d = toy(2, &[&[1.0, -3.0], &[1.0, 0.5], &[1.0, 7.0]]);
        let parallel =
            CoefficientMatrix::from_rows(&[vec![1.0, 0.3], vec![2.0, 0.3], vec![3.0, 0.3]]).unwrap();
        assert!(validate_noncrossing(&parallel, &d).unwrap());
        let tied = CoefficientMatrix::from_rows(&[vec![1.0, 0.3], vec![1.0, 0.3]]).unwrap();
        assert!(!validate_noncrossing(&tied, &d).unwrap());

        let d1 = toy(2, &[&[1.0, 1.0]]);
        let crossing = CoefficientMatrix::from_rows(&[vec![0.0, 2.0], vec![1.0, 0.0]]).unwrap();
        assert!(!validate_noncrossing(&crossing, &d1).unwrap());

        let wrong_p = CoefficientMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert!(validate_noncrossing(&wrong_p, &d1).is_err());
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(2, vec![1.0, 2.0, 2.0, 3.0], vec![0.0, 1.0]).is_err());
        assert!(Dataset::new(1, vec![1.0], vec![f64::NAN]).is_err());
        assert!(Dataset::new(1, vec![], vec![]).is_err());
        let d = Dataset::with_intercept(&[vec![2.0], vec![3.0]], vec![1.0, 2.0]).unwrap();
        assert_eq!(d.row(1), &[1.0, 3.0]);
        assert!(d.is_full_rank());
        let flat = Dataset::with_intercept(&[vec![2.0], vec![2.0]], vec![1.0, 2.0]).unwrap();
        assert!(!flat.is_full_rank());
    }

    #[test]
    fn prior_is_zero_off_the_feasible_region() {
        let d = toy(1, &[&[1.0]]);
        let prior = PriorSpec::iid(2, 0.0, 10.0).unwrap();
        let bad = CoefficientMatrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
        assert_eq!(prior.log_density(&bad, &d).unwrap(), f64::NEG_INFINITY);
        let good = CoefficientMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert!(prior.log_density(&good, &d).unwrap().is_finite());
        assert!(PriorSpec::iid(2, 0.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn check_loss_reflection(u in -1e6f64..1e6, tau in 0.001f64..0.999) {
            let a = check_loss(u, tau).unwrap();
            let b = check_loss(-u, 1.0 - tau).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            prop_assert!(a >= 0.0);
        }

        #[test]
        fn check_loss_convex(u1 in -1e3f64..1e3, u2 in -1e3f64..1e3, lam in 0.0f64..1.0, tau in 0.01f64..0.99) {
            let mid = check_loss(lam * u1 + (1.0 - lam) * u2, tau).unwrap();
            let chord = lam * check_loss(u1, tau).unwrap() + (1.0 - lam) * check_loss(u2, tau).unwrap();
            prop_assert!(mid <= chord + 1e-9);
        }

        #[test]
        fn grid_properties(m0 in 1usize..40, r in 0u32..4) {
            let g = QuantileGrid::make(m0, r).unwrap();
            let lv = g.levels();
            prop_assert!(lv.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(g.max_gap() <= 2.0 / g.len() as f64 + 1e-15);
            if m0 % 2 == 1 {
                for (a, b) in lv.iter().zip(lv.iter().rev()) {
                    prop_assert!((a + b - 1.0).abs() < 1e-12);
                }
            }
            if r > 0 {
                let coarse = QuantileGrid::make(m0, r - 1).unwrap();
                prop_assert!(g.max_gap() <= coarse.max_gap() / 2.0 + 1e-15);
                for t in coarse.levels() {
                    prop_assert!(g.index_of(*t).is_some());
                }
            }
        }

        #[test]
        fn noncrossing_ignores_duplicate_rows(
            xs in proptest::collection::vec(-5.0f64..5.0, 1..8),
            b in proptest::collection::vec(-3.0f64..3.0, 6),
            dup in 0usize..8,
        ) {
            let cov: Vec<Vec<f64>> = xs.iter().map(|&v| vec![v]).collect();
            let d = Dataset::with_intercept(&cov, vec![0.0; xs.len()]).unwrap();
            let idx: Vec<usize> = (0..xs.len()).chain(std::iter::once(dup % xs.len())).collect();
            let d2 = d.subset(&idx).unwrap();
            let coefs = CoefficientMatrix::new(3, 2, b).unwrap();
            prop_assert_eq!(
                validate_noncrossing(&coefs, &d).unwrap(),
                validate_noncrossing(&coefs, &d2).unwrap()
            );
        }
    }
}
