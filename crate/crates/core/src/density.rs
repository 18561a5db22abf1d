//! The linearly interpolated density (LID).
//!
//! Between consecutive fitted quantiles `q_j < q_{j+1}` the density is the
//! constant `(τ_{j+1} − τ_j)/(q_{j+1} − q_j)`. Below `q_1` it is `τ_1` times
//! the left half of N(q_1, σ²); above `q_m` it is `1 − τ_m` times the right
//! half of N(q_m, σ²). A point sitting exactly on `q_j` belongs to the
//! interval on its right, and `y = q_m` belongs to the right tail.

use std::f64::consts::LN_2;

use crate::error::{contract, domain, Result};
use crate::model::{CoefficientMatrix, Dataset, QuantileGrid};
use crate::normal::log_phi;

/// Coefficients, their grid, and the half-normal tail scale.
#[derive(Debug, Clone, PartialEq)]
pub struct LidModel {
    coefs: CoefficientMatrix,
    grid: QuantileGrid,
    tail_sd: f64,
}

impl LidModel {
    pub fn new(coefs: CoefficientMatrix, grid: QuantileGrid, tail_sd: f64) -> Result<Self> {
        if coefs.m() != grid.len() {
            return contract(format!(
                "coefficient matrix has {} rows but the grid has {} levels",
                coefs.m(),
                grid.len()
            ));
        }
        if !(tail_sd > 0.0 && tail_sd.is_finite()) {
            return domain(format!("tail sd must be positive, got {tail_sd}"));
        }
        Ok(Self { coefs, grid, tail_sd })
    }

    pub fn coefs(&self) -> &CoefficientMatrix {
        &self.coefs
    }

    pub fn grid(&self) -> &QuantileGrid {
        &self.grid
    }

    pub fn tail_sd(&self) -> f64 {
        self.tail_sd
    }

    fn quantiles_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.coefs.p() {
            return contract(format!("covariate vector has length {}, expected {}", x.len(), self.coefs.p()));
        }
        let q = self.coefs.fitted_all(x);
        if q.windows(2).any(|w| w[0] >= w[1]) {
            return contract("fitted quantiles cross at this covariate vector");
        }
        Ok(q)
    }

    /// Log density of `y` given covariates `x`.
    pub fn log_pdf(&self, x: &[f64], y: f64) -> Result<f64> {
        let q = self.quantiles_at(x)?;
        Ok(log_density_from_quantiles(self.grid.levels(), &q, y, self.tail_sd))
    }

    pub fn pdf(&self, x: &[f64], y: f64) -> Result<f64> {
        self.log_pdf(x, y).map(f64::exp)
    }

    /// Σ_i log f̂_i(y_i | x_i), summed in observation order.
    pub fn loglik(&self, data: &Dataset) -> Result<f64> {
        if data.p() != self.coefs.p() {
            return contract(format!("dataset has p = {}, model has p = {}", data.p(), self.coefs.p()));
        }
        let mut total = 0.0;
        for (x, &y) in data.rows().zip(data.y()) {
            total += self.log_pdf(x, y)?;
        }
        Ok(total)
    }
}

/// Log LID density at `y` for strictly increasing quantile values `q` at
/// levels `levels`. Inputs are not validated.
#[inline]
pub fn log_density_from_quantiles(levels: &[f64], q: &[f64], y: f64, tail_sd: f64) -> f64 {
    let m = q.len();
    if y < q[0] {
        levels[0].ln() + log_half_normal(y - q[0], tail_sd)
    } else if y >= q[m - 1] {
        (1.0 - levels[m - 1]).ln() + log_half_normal(y - q[m - 1], tail_sd)
    } else {
        // q[j] <= y < q[j + 1]
        let j = q.partition_point(|&v| v <= y) - 1;
        ((levels[j + 1] - levels[j]) / (q[j + 1] - q[j])).ln()
    }
}

#[inline]
fn log_half_normal(offset: f64, sd: f64) -> f64 {
    LN_2 - sd.ln() + log_phi(offset / sd)
}

/// Outcome of [`interpolation_error_sup`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpolationError {
    /// max |LID density − true density| over the evaluated probes.
    pub sup: f64,
    pub evaluated: usize,
    /// Probes outside `[q_1, q_m)` of the grid's true quantiles.
    pub skipped: usize,
}

/// Sup-norm distance between a known density and the LID built from that
/// distribution's exact quantiles at the grid levels, over the probe points
/// falling between the first and last quantile.
pub fn interpolation_error_sup(
    inverse_cdf: impl Fn(f64) -> f64,
    pdf: impl Fn(f64) -> f64,
    grid: &QuantileGrid,
    probes: &[f64],
) -> Result<InterpolationError> {
    let levels = grid.levels();
    let q: Vec<f64> = levels.iter().map(|&t| inverse_cdf(t)).collect();
    if q.iter().any(|v| !v.is_finite()) || q.windows(2).any(|w| w[0] >= w[1]) {
        return contract("inverse cdf must be finite and strictly increasing on the grid");
    }
    let (lo, hi) = (q[0], q[q.len() - 1]);
    let mut out = InterpolationError { sup: 0.0, evaluated: 0, skipped: 0 };
    for &y in probes {
        if !(y >= lo && y < hi) {
            out.skipped += 1;
            continue;
        }
        let approx = log_density_from_quantiles(levels, &q, y, 1.0).exp();
        out.sup = out.sup.max((approx - pdf(y)).abs());
        out.evaluated += 1;
    }
    Ok(out)
}
