//! Posterior summaries of coefficient draws and of level-to-level contrasts.

use std::fmt;

use crate::error::{contract, domain, Error, Result};
use crate::model::{CoefficientMatrix, QuantileGrid, LEVEL_MATCH_TOL};

/// Mean, sd and the 2.5/50/97.5% quantiles of a sample.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
}

/// Linear-interpolation sample quantile (R's type 7) of sorted values.
pub fn sorted_quantile(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return contract("cannot summarize an empty sample");
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            mean,
            sd,
            q025: sorted_quantile(&sorted, 0.025),
            q50: sorted_quantile(&sorted, 0.5),
            q975: sorted_quantile(&sorted, 0.975),
        })
    }
}

/// One coefficient at one grid level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefAt {
    pub coef: usize,
    pub tau: f64,
}

/// `plus − minus`, or just `plus`.
#[derive(Debug, Clone, PartialEq)]
pub struct Contrast {
    pub label: String,
    pub plus: CoefAt,
    pub minus: Option<CoefAt>,
}

fn resolve_coef(token: &str, names: &[String]) -> Result<usize> {
    if let Some(i) = names.iter().position(|n| n == token) {
        return Ok(i);
    }
    // a, b, c, ... address coefficients by position
    let mut chars = token.chars();
    if let (Some(c @ 'a'..='z'), None) = (chars.next(), chars.next()) {
        let i = c as usize - 'a' as usize;
        if i < names.len() {
            return Ok(i);
        }
    }
    domain(format!("unknown coefficient '{token}' (known: {})", names.join(", ")))
}

fn parse_term(s: &str, names: &[String]) -> Result<CoefAt> {
    let (name, tau) = s
        .split_once('@')
        .ok_or_else(|| Error::Domain(format!("expected coef@tau, got '{s}'")))?;
    let tau: f64 = tau
        .trim()
        .parse()
        .map_err(|_| Error::Domain(format!("bad level in '{s}'")))?;
    if !(tau > 0.0 && tau < 1.0) {
        return domain(format!("level {tau} outside (0, 1)"));
    }
    Ok(CoefAt { coef: resolve_coef(name.trim(), names)?, tau })
}

impl Contrast {
    /// Parses `coef@tau` or `coef@tau-coef@tau`. Coefficients are looked up by
    /// name first, then single letters `a`, `b`, … pick by position.
    pub fn parse(s: &str, names: &[String]) -> Result<Self> {
        let s = s.trim();
        // split on a '-' that follows a level, not one inside a number
        let split = s
            .char_indices()
            .skip(1)
            .find(|&(i, c)| c == '-' && s[..i].contains('@') && !s[..i].ends_with(['e', 'E', '@']))
            .map(|(i, _)| i);
        let (plus, minus) = match split {
            Some(i) => (parse_term(&s[..i], names)?, Some(parse_term(&s[i + 1..], names)?)),
            None => (parse_term(s, names)?, None),
        };
        Ok(Self { label: s.to_string(), plus, minus })
    }

    pub fn single(coef: usize, tau: f64, label: impl Into<String>) -> Self {
        Self { label: label.into(), plus: CoefAt { coef, tau }, minus: None }
    }

    pub fn difference(a: CoefAt, b: CoefAt, label: impl Into<String>) -> Self {
        Self { label: label.into(), plus: a, minus: Some(b) }
    }

    pub fn levels(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(self.plus.tau).chain(self.minus.map(|m| m.tau))
    }

    /// Value under a coefficient lookup `(coef, tau) -> value`.
    pub fn evaluate(&self, mut f: impl FnMut(usize, f64) -> Result<f64>) -> Result<f64> {
        let a = f(self.plus.coef, self.plus.tau)?;
        match self.minus {
            Some(m) => Ok(a - f(m.coef, m.tau)?),
            None => Ok(a),
        }
    }

    /// Value on a coefficient matrix over `grid`; levels must be grid members.
    pub fn on_matrix(&self, coefs: &CoefficientMatrix, grid: &QuantileGrid) -> Result<f64> {
        self.evaluate(|coef, tau| {
            let j = grid
                .index_of(tau)
                .ok_or_else(|| Error::Domain(format!("level {tau} is not on the grid")))?;
            if coef >= coefs.p() {
                return domain(format!("coefficient index {coef} out of range"));
            }
            Ok(coefs.get(j, coef))
        })
    }
}

impl fmt::Display for Contrast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

/// Summary row for one coefficient at one level.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefSummary {
    pub level: usize,
    pub tau: f64,
    pub coef: usize,
    pub summary: Summary,
}

/// Per-entry summaries of a set of coefficient draws, level-major.
pub fn posterior_summaries(draws: &[CoefficientMatrix], grid: &QuantileGrid) -> Result<Vec<CoefSummary>> {
    let first = draws.first().ok_or_else(|| Error::Contract("empty chain".into()))?;
    if first.m() != grid.len() {
        return contract("draws and grid disagree on the number of levels");
    }
    let mut out = Vec::with_capacity(first.m() * first.p());
    let mut column = Vec::with_capacity(draws.len());
    for j in 0..first.m() {
        for l in 0..first.p() {
            column.clear();
            column.extend(draws.iter().map(|d| d.get(j, l)));
            out.push(CoefSummary { level: j, tau: grid.levels()[j], coef: l, summary: Summary::of(&column)? });
        }
    }
    Ok(out)
}

/// Summary of a contrast across draws.
pub fn contrast_summary(draws: &[CoefficientMatrix], grid: &QuantileGrid, contrast: &Contrast) -> Result<Summary> {
    if draws.is_empty() {
        return contract("empty chain");
    }
    let values = draws
        .iter()
        .map(|d| contrast.on_matrix(d, grid))
        .collect::<Result<Vec<f64>>>()?;
    Summary::of(&values)
}

/// Whether `tau` is within matching tolerance of a grid level.
pub fn on_grid(grid: &QuantileGrid, tau: f64) -> bool {
    grid.levels().iter().any(|&t| (t - tau).abs() <= LEVEL_MATCH_TOL)
}
