//! Bounded-variable primal simplex for
//!
//! ```text
//! maximize cᵀz  subject to  A z = b,  lower ≤ z ≤ upper
//! ```
//!
//! with few equality rows and many box-constrained columns, which is the
//! shape of the quantile-regression dual. The basis inverse is kept as a dense
//! `rows × rows` matrix, updated by elementary pivots and refactored
//! periodically. Phase one drives a set of artificial columns to zero.

use crate::error::{Error, Result};

const REFACTOR_EVERY: usize = 64;
const DEGENERATE_STREAK_FOR_BLAND: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
enum VarState {
    Basic,
    AtLower,
    AtUpper,
}

/// Problem data. Column `j` of `A` is `columns[j * rows..(j + 1) * rows]`.
#[derive(Debug, Clone)]
pub struct BoxLp {
    pub rows: usize,
    pub columns: Vec<f64>,
    pub cost: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rhs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub primal: Vec<f64>,
    /// Simplex multipliers of the equality rows at the optimal basis.
    pub duals: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

struct Tableau<'a> {
    lp: &'a BoxLp,
    ncols: usize,
    rows: usize,
    // structural columns followed by one artificial per row
    lower: Vec<f64>,
    upper: Vec<f64>,
    art_sign: Vec<f64>,
    value: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    binv: Vec<f64>,
    iterations: usize,
    max_iterations: usize,
}

impl BoxLp {
    pub fn solve(&self) -> Result<LpSolution> {
        let rows = self.rows;
        let ncols = self.cost.len();
        if self.columns.len() != rows * ncols
            || self.lower.len() != ncols
            || self.upper.len() != ncols
            || self.rhs.len() != rows
        {
            return Err(Error::Contract("inconsistent LP dimensions".into()));
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && l <= u)) {
            return Err(Error::Contract("LP columns need finite bounds with lower <= upper".into()));
        }

        let mut t = Tableau::new(self);
        let mut phase1 = vec![0.0; ncols + rows];
        phase1[ncols..].iter_mut().for_each(|c| *c = -1.0);
        t.optimize(&phase1)?;

        let infeasibility: f64 = t.value[ncols..].iter().sum();
        let scale = 1.0 + self.rhs.iter().map(|v| v.abs()).sum::<f64>()
            + self.lower.iter().chain(&self.upper).map(|v| v.abs()).fold(0.0, f64::max);
        if infeasibility > 1e-8 * scale {
            return Err(Error::Numerical(format!("LP infeasible (phase one residual {infeasibility:e})")));
        }
        for k in ncols..ncols + rows {
            t.upper[k] = 0.0;
            if t.state[k] != VarState::Basic {
                t.state[k] = VarState::AtLower;
                t.value[k] = 0.0;
            }
        }

        let mut phase2 = self.cost.clone();
        phase2.extend(std::iter::repeat_n(0.0, rows));
        t.optimize(&phase2)?;
        t.refactor()?;

        let duals = t.multipliers(&phase2);
        let primal = t.value[..ncols].to_vec();
        let objective = primal.iter().zip(&self.cost).map(|(z, c)| z * c).sum();
        Ok(LpSolution { primal, duals, objective, iterations: t.iterations })
    }
}

impl<'a> Tableau<'a> {
    fn new(lp: &'a BoxLp) -> Self {
        let rows = lp.rows;
        let ncols = lp.cost.len();
        let mut lower = lp.lower.clone();
        let mut upper = lp.upper.clone();
        let mut value = lp.lower.clone();
        let mut state = vec![VarState::AtLower; ncols];

        let mut resid = lp.rhs.clone();
        for j in 0..ncols {
            let col = &lp.columns[j * rows..(j + 1) * rows];
            for (r, a) in resid.iter_mut().zip(col) {
                *r -= a * value[j];
            }
        }
        let art_sign: Vec<f64> = resid.iter().map(|&r| if r >= 0.0 { 1.0 } else { -1.0 }).collect();
        let mut binv = vec![0.0; rows * rows];
        for k in 0..rows {
            lower.push(0.0);
            upper.push(f64::INFINITY);
            value.push(resid[k].abs());
            state.push(VarState::Basic);
            binv[k * rows + k] = art_sign[k];
        }
        let total = ncols + rows;
        Self {
            lp,
            ncols,
            rows,
            lower,
            upper,
            art_sign,
            value,
            state,
            basis: (ncols..total).collect(),
            binv,
            iterations: 0,
            max_iterations: 200 * total + 1000,
        }
    }

    fn column_into(&self, j: usize, out: &mut [f64]) {
        if j < self.ncols {
            out.copy_from_slice(&self.lp.columns[j * self.rows..(j + 1) * self.rows]);
        } else {
            out.fill(0.0);
            out[j - self.ncols] = self.art_sign[j - self.ncols];
        }
    }

    fn dot_column(&self, j: usize, v: &[f64]) -> f64 {
        if j < self.ncols {
            self.lp.columns[j * self.rows..(j + 1) * self.rows].iter().zip(v).map(|(a, b)| a * b).sum()
        } else {
            self.art_sign[j - self.ncols] * v[j - self.ncols]
        }
    }

    /// π = B⁻ᵀ c_B.
    fn multipliers(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.rows;
        let mut pi = vec![0.0; m];
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                for (k, p) in pi.iter_mut().enumerate() {
                    *p += self.binv[i * m + k] * cb;
                }
            }
        }
        pi
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.rows;
        let mut a = vec![0.0; m * m];
        let mut col = vec![0.0; m];
        for (pos, &b) in self.basis.iter().enumerate() {
            self.column_into(b, &mut col);
            for r in 0..m {
                a[r * m + pos] = col[r];
            }
        }
        self.binv = invert(a, m).ok_or_else(|| Error::Numerical("singular simplex basis".into()))?;

        let mut resid = self.lp.rhs.clone();
        for j in 0..self.ncols + m {
            if self.state[j] != VarState::Basic && self.value[j] != 0.0 {
                self.column_into(j, &mut col);
                for (r, c) in resid.iter_mut().zip(&col) {
                    *r -= c * self.value[j];
                }
            }
        }
        for (i, &b) in self.basis.iter().enumerate() {
            self.value[b] = (0..m).map(|k| self.binv[i * m + k] * resid[k]).sum();
        }
        Ok(())
    }

    fn optimize(&mut self, cost: &[f64]) -> Result<()> {
        let m = self.rows;
        let total = self.ncols + m;
        let cost_scale = 1.0 + cost.iter().map(|c| c.abs()).fold(0.0, f64::max);
        let dtol = 1e-11 * cost_scale;
        let mut alpha = vec![0.0; m];
        let mut col = vec![0.0; m];
        let mut degenerate_streak = 0usize;
        let mut since_refactor = 0usize;

        loop {
            if since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
                since_refactor = 0;
            }
            self.iterations += 1;
            if self.iterations > self.max_iterations {
                return Err(Error::Numerical("simplex iteration limit reached".into()));
            }
            let bland = degenerate_streak >= DEGENERATE_STREAK_FOR_BLAND;
            let pi = self.multipliers(cost);

            // pricing
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..total {
                let st = self.state[j];
                if st == VarState::Basic || self.upper[j] <= self.lower[j] {
                    continue;
                }
                let d = cost[j] - self.dot_column(j, &pi);
                let eligible = (st == VarState::AtLower && d > dtol) || (st == VarState::AtUpper && d < -dtol);
                if !eligible {
                    continue;
                }
                match entering {
                    None => entering = Some((j, d)),
                    Some((_, best)) if !bland && d.abs() > best.abs() => entering = Some((j, d)),
                    _ => {}
                }
                if bland {
                    break;
                }
            }
            let Some((enter, _)) = entering else {
                return Ok(());
            };
            let dir = if self.state[enter] == VarState::AtLower { 1.0 } else { -1.0 };

            self.column_into(enter, &mut col);
            for (i, a) in alpha.iter_mut().enumerate() {
                *a = (0..m).map(|k| self.binv[i * m + k] * col[k]).sum();
            }
            let amax = alpha.iter().fold(0.0f64, |acc, a| acc.max(a.abs()));
            let ptol = 1e-9 * amax.max(1.0);

            // ratio test
            let mut step = self.upper[enter] - self.lower[enter];
            let mut leave: Option<usize> = None;
            for i in 0..m {
                let a = dir * alpha[i];
                let b = self.basis[i];
                let room = if a > ptol {
                    (self.value[b] - self.lower[b]) / a
                } else if a < -ptol {
                    (self.upper[b] - self.value[b]) / -a
                } else {
                    continue;
                };
                if !room.is_finite() {
                    continue;
                }
                let room = room.max(0.0);
                let slack = 1e-12 * (1.0 + room.abs());
                let better = if room < step - slack {
                    true
                } else if room <= step + slack {
                    match leave {
                        Some(cur) if bland => b < self.basis[cur],
                        Some(cur) => alpha[i].abs() > alpha[cur].abs(),
                        None => false,
                    }
                } else {
                    false
                };
                if better {
                    step = room;
                    leave = Some(i);
                }
            }
            if !step.is_finite() {
                return Err(Error::Numerical("LP unbounded".into()));
            }

            degenerate_streak = if step <= 1e-12 { degenerate_streak + 1 } else { 0 };
            self.value[enter] += dir * step;
            for i in 0..m {
                let b = self.basis[i];
                self.value[b] -= dir * step * alpha[i];
            }

            match leave {
                None => {
                    // bound flip
                    if dir > 0.0 {
                        self.value[enter] = self.upper[enter];
                        self.state[enter] = VarState::AtUpper;
                    } else {
                        self.value[enter] = self.lower[enter];
                        self.state[enter] = VarState::AtLower;
                    }
                }
                Some(r) => {
                    let out = self.basis[r];
                    if dir * alpha[r] > 0.0 {
                        self.value[out] = self.lower[out];
                        self.state[out] = VarState::AtLower;
                    } else {
                        self.value[out] = self.upper[out];
                        self.state[out] = VarState::AtUpper;
                    }
                    self.state[enter] = VarState::Basic;
                    self.basis[r] = enter;
                    self.pivot(r, &alpha);
                    since_refactor += 1;
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, alpha: &[f64]) {
        let m = self.rows;
        let piv = alpha[r];
        for k in 0..m {
            self.binv[r * m + k] /= piv;
        }
        for i in 0..m {
            if i == r || alpha[i] == 0.0 {
                continue;
            }
            let f = alpha[i];
            for k in 0..m {
                self.binv[i * m + k] -= f * self.binv[r * m + k];
            }
        }
    }
}

/// Gauss–Jordan inverse with partial pivoting; `None` if singular.
fn invert(mut a: Vec<f64>, m: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; m * m];
    for k in 0..m {
        inv[k * m + k] = 1.0;
    }
    for c in 0..m {
        let piv = (c..m).max_by(|&x, &y| a[x * m + c].abs().total_cmp(&a[y * m + c].abs()))?;
        if a[piv * m + c].abs() < 1e-300 {
            return None;
        }
        for k in 0..m {
            a.swap(c * m + k, piv * m + k);
            inv.swap(c * m + k, piv * m + k);
        }
        let d = a[c * m + c];
        for k in 0..m {
            a[c * m + k] /= d;
            inv[c * m + k] /= d;
        }
        for r in 0..m {
            if r != c {
                let f = a[r * m + c];
                if f != 0.0 {
                    for k in 0..m {
                        a[r * m + k] -= f * a[c * m + k];
                        inv[r * m + k] -= f * inv[c * m + k];
                    }
                }
            }
        }
    }
    Some(inv)
}
