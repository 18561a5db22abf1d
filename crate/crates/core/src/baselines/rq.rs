use crate::baselines::simplex::BoxLp;
use crate::error::{contract, domain, Result};
use crate::model::{check_tau, dot, rho, Dataset};

/// Half-width of the level bracket used by [`estimate_weights`] when the
/// caller does not choose one.
pub const DEFAULT_DELTA_TAU: f64 = 0.05;

/// A (weighted) check-loss fit at one quantile level.
#[derive(Debug, Clone, PartialEq)]
pub struct RqFit {
    pub beta: Vec<f64>,
    pub tau: f64,
    /// Σ w_i ρ_τ(y_i − x_iᵀβ) at `beta`.
    pub objective: f64,
    pub weights: Option<Vec<f64>>,
    /// Set by [`wrq_fit`] when every estimated weight was zero and the
    /// unweighted fit was returned instead.
    pub unweighted_fallback: bool,
}

impl RqFit {
    /// Recomputes the attained objective from the stored fields.
    pub fn recompute_objective(&self, data: &Dataset) -> f64 {
        objective(data, self.tau, self.weights.as_deref(), &self.beta)
    }
}

pub(crate) fn objective(data: &Dataset, tau: f64, weights: Option<&[f64]>, beta: &[f64]) -> f64 {
    data.rows()
        .zip(data.y())
        .enumerate()
        .map(|(i, (x, &y))| weights.map_or(1.0, |w| w[i]) * rho(y - dot(x, beta), tau))
        .sum()
}

/// Minimizes Σ w_i ρ_τ(y_i − x_iᵀβ).
///
/// The primal LP splits residuals into positive and negative parts; it is
/// solved through its dual
///
/// ```text
/// max yᵀz  s.t.  Xᵀz = 0,  −(1−τ)w_i ≤ z_i ≤ τ w_i
/// ```
///
/// whose simplex multipliers at the optimal basis are the coefficients. The
/// minimizer need not be unique; the solver's vertex is returned. Rank
/// deficient designs still yield a minimizer.
pub fn rq_fit(data: &Dataset, tau: f64, weights: Option<&[f64]>) -> Result<RqFit> {
    check_tau(tau)?;
    if let Some(w) = weights {
        if w.len() != data.n() {
            return contract(format!("{} weights for {} observations", w.len(), data.n()));
        }
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return domain("weights must be finite and nonnegative");
        }
        if w.iter().all(|v| *v == 0.0) {
            return domain("weights are all zero");
        }
    }
    let w_at = |i: usize| weights.map_or(1.0, |w| w[i]);
    let n = data.n();
    let lp = BoxLp {
        rows: data.p(),
        columns: data.x().to_vec(),
        cost: data.y().to_vec(),
        lower: (0..n).map(|i| -(1.0 - tau) * w_at(i)).collect(),
        upper: (0..n).map(|i| tau * w_at(i)).collect(),
        rhs: vec![0.0; data.p()],
    };
    let sol = lp.solve()?;
    let beta = sol.duals;
    let objective = objective(data, tau, weights, &beta);
    Ok(RqFit {
        beta,
        tau,
        objective,
        weights: weights.map(<[f64]>::to_vec),
        unweighted_fallback: false,
    })
}

/// ŵ_i = 2Δτ / x_iᵀ(β_hi − β_lo), with negative or non-finite values set to 0.
pub fn weights_from_fits(data: &Dataset, beta_hi: &[f64], beta_lo: &[f64], delta_tau: f64) -> Vec<f64> {
    let diff: Vec<f64> = beta_hi.iter().zip(beta_lo).map(|(a, b)| a - b).collect();
    data.rows()
        .map(|x| {
            let w = 2.0 * delta_tau / dot(x, &diff);
            if w.is_finite() && w >= 0.0 {
                w
            } else {
                0.0
            }
        })
        .collect()
}

/// Local density estimates from unweighted fits at τ ± Δτ.
pub fn estimate_weights(data: &Dataset, tau: f64, delta_tau: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    if !(delta_tau > 0.0 && tau - delta_tau > 0.0 && tau + delta_tau < 1.0) {
        return domain(format!("need 0 < tau - delta_tau and tau + delta_tau < 1 (tau {tau}, delta {delta_tau})"));
    }
    let hi = rq_fit(data, tau + delta_tau, None)?;
    let lo = rq_fit(data, tau - delta_tau, None)?;
    Ok(weights_from_fits(data, &hi.beta, &lo.beta, delta_tau))
}

/// Weighted RQ with weights from [`estimate_weights`]. Falls back to the
/// unweighted fit, flagged, when all weights vanish.
pub fn wrq_fit(data: &Dataset, tau: f64, delta_tau: f64) -> Result<RqFit> {
    let w = estimate_weights(data, tau, delta_tau)?;
    if w.iter().all(|v| *v == 0.0) {
        let mut fit = rq_fit(data, tau, None)?;
        fit.unweighted_fallback = true;
        return Ok(fit);
    }
    rq_fit(data, tau, Some(&w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn intercept_only(y: &[f64]) -> Dataset {
        Dataset::new(1, vec![1.0; y.len()], y.to_vec()).unwrap()
    }

    // Brute-force scan for a 1-D (intercept-only) problem.
    fn scan_min(data: &Dataset, tau: f64, w: Option<&[f64]>) -> f64 {
        let (lo, hi) = (-5.0, 10.0);
        let steps = 150_000;
        let mut best = f64::INFINITY;
        for k in 0..=steps {
            let a = lo + (hi - lo) * k as f64 / steps as f64;
            best = best.min(objective(data, tau, w, &[a]));
        }
        // the optimum sits at a data point; include them exactly
        for &y in data.y() {
            best = best.min(objective(data, tau, w, &[y]));
        }
        best
    }

    #[test]
    fn median_and_quartile_examples() {
        let d = intercept_only(&[1.0, 2.0, 3.0]);
        let med = rq_fit(&d, 0.5, None).unwrap();
        assert!((med.beta[0] - 2.0).abs() < 1e-12);
        assert!((med.objective - 1.0).abs() < 1e-12);

        let q = rq_fit(&d, 0.25, None).unwrap();
        assert!((q.beta[0] - 1.0).abs() < 1e-12);
        assert!((q.objective - 0.75).abs() < 1e-12);
        assert!((scan_min(&d, 0.25, None) - 0.75).abs() < 1e-9);
    }

    #[test]
    fn weighted_example_asserts_objective_only() {
        let d = intercept_only(&[1.0, 2.0, 3.0]);
        let w = [0.0, 1.0, 1.0];
        let fit = rq_fit(&d, 0.5, Some(&w)).unwrap();
        assert!((fit.objective - 0.5).abs() < 1e-12);
        assert!((scan_min(&d, 0.5, Some(&w)) - 0.5).abs() < 1e-9);
        assert!(fit.beta[0] >= 2.0 - 1e-12 && fit.beta[0] <= 3.0 + 1e-12);
        assert_eq!(fit.recompute_objective(&d), fit.objective);
    }

    #[test]
    fn bad_inputs() {
        let d = intercept_only(&[1.0, 2.0]);
        assert!(rq_fit(&d, 0.0, None).is_err());
        assert!(rq_fit(&d, 0.5, Some(&[1.0])).is_err());
        assert!(rq_fit(&d, 0.5, Some(&[0.0, 0.0])).is_err());
        assert!(rq_fit(&d, 0.5, Some(&[-1.0, 1.0])).is_err());
        assert!(estimate_weights(&d, 0.5, 0.5).is_err());
        assert!(estimate_weights(&d, 0.03, 0.05).is_err());
    }

    #[test]
    fn weight_formula() {
        // x'(diff) = 0.2 at Δτ = 0.05 gives 0.5; a negative denominator gives 0.
        let d = Dataset::new(2, vec![1.0, 1.0, 1.0, -1.0, 1.0, 0.0], vec![0.0; 3]).unwrap();
        let w = weights_from_fits(&d, &[0.1, 0.1], &[0.0, 0.0], 0.05);
        assert!((w[0] - 0.5).abs() < 1e-12);
        assert_eq!(w[1], 0.0); // 0.0 denominator -> inf -> 0
        assert!((w[2] - 1.0).abs() < 1e-12);
        let crossing = weights_from_fits(&d, &[0.0, 0.0], &[0.1, 0.1], 0.05);
        assert_eq!(crossing[0], 0.0);
    }

    #[test]
    fn constant_weights_reproduce_unweighted_fit() {
        let mut r = rng::seeded(3);
        let cov: Vec<Vec<f64>> = (0..40).map(|_| vec![r.random::<f64>() * 4.0]).collect();
        let y: Vec<f64> = cov.iter().map(|c| 1.0 + 2.0 * c[0] + r.random::<f64>()).collect();
        let d = Dataset::with_intercept(&cov, y).unwrap();
        let plain = rq_fit(&d, 0.3, None).unwrap();
        let weighted = rq_fit(&d, 0.3, Some(&vec![2.5; 40])).unwrap();
        for (a, b) in plain.beta.iter().zip(&weighted.beta) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!((weighted.objective - 2.5 * plain.objective).abs() < 1e-9);
    }

    #[test]
    fn homoscedastic_weights_are_nearly_constant() {
        let mut r = rng::seeded(11);
        let normal = rand_distr::StandardNormal;
        let n = 1000;
        let cov: Vec<Vec<f64>> = (0..n).map(|_| vec![r.random::<f64>() * 3.0]).collect();
        let y: Vec<f64> = cov.iter().map(|c| 2.0 + c[0] + r.sample::<f64, _>(normal)).collect();
        let d = Dataset::with_intercept(&cov, y).unwrap();
        let w = estimate_weights(&d, 0.5, 0.05).unwrap();
        let mean = w.iter().sum::<f64>() / n as f64;
        let sd = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!(sd / mean < 0.5, "cv {}", sd / mean);
    }

    #[test]
    fn weights_survive_row_duplication() {
        // n·τ is non-integer at both bracket levels, so the fits are unique
        let mut r = rng::seeded(5);
        let n = 61;
        let cov: Vec<Vec<f64>> = (0..n).map(|_| vec![r.random::<f64>() * 2.0]).collect();
        let y: Vec<f64> = cov.iter().map(|c| c[0] + (1.0 + c[0]) * (r.random::<f64>() - 0.5)).collect();
        let d = Dataset::with_intercept(&cov, y).unwrap();
        let doubled = d.subset(&(0..2 * n).map(|i| i % n).collect::<Vec<_>>()).unwrap();
        let w1 = estimate_weights(&d, 0.5, 0.1).unwrap();
        let w2 = estimate_weights(&doubled, 0.5, 0.1).unwrap();
        for i in 0..n {
            assert!((w1[i] - w2[i]).abs() < 1e-6 * (1.0 + w1[i]), "{} vs {}", w1[i], w2[i]);
            assert_eq!(w2[i], w2[i + n]);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn scaling_y_scales_beta(seed in 0u64..1000, scale in 0.1f64..20.0, tau in 0.1f64..0.9) {
            let mut r = rng::seeded(seed);
            let n = 15;
            let cov: Vec<Vec<f64>> = (0..n).map(|_| vec![r.random::<f64>() * 5.0]).collect();
            let y: Vec<f64> = cov.iter().map(|c| c[0] + 3.0 * r.random::<f64>()).collect();
            let d = Dataset::with_intercept(&cov, y.clone()).unwrap();
            let d2 = Dataset::with_intercept(&cov, y.iter().map(|v| v * scale).collect()).unwrap();
            let a = rq_fit(&d, tau, None).unwrap();
            let b = rq_fit(&d2, tau, None).unwrap();
            prop_assert!((b.objective - scale * a.objective).abs() < 1e-8 * (1.0 + b.objective));
        }

        #[test]
        fn no_random_perturbation_improves(seed in 0u64..1000, tau in 0.05f64..0.95) {
            let mut r = rng::seeded(seed);
            let n = 25;
            let cov: Vec<Vec<f64>> = (0..n).map(|_| vec![r.random::<f64>() * 5.0, r.random::<f64>()]).collect();
            let y: Vec<f64> = cov.iter().map(|c| c[0] - c[1] + 2.0 * r.random::<f64>()).collect();
            let d = Dataset::with_intercept(&cov, y).unwrap();
            let fit = rq_fit(&d, tau, None).unwrap();
            for _ in 0..100 {
                let b: Vec<f64> = fit.beta.iter().map(|v| v + 0.2 * (r.random::<f64>() - 0.5)).collect();
                prop_assert!(objective(&d, tau, None, &b) >= fit.objective - 1e-10);
            }
        }

        #[test]
        fn subgradient_certificate(seed in 0u64..1000, tau in 0.05f64..0.95) {
            let mut r = rng::seeded(seed);
            let n = 20;
            let cov: Vec<Vec<f64>> = (0..n).map(|_| vec![r.random::<f64>() * 4.0]).collect();
            let y: Vec<f64> = cov.iter().map(|c| 1.0 + c[0] + (1.0 + c[0]) * (r.random::<f64>() - 0.3)).collect();
            let d = Dataset::with_intercept(&cov, y).unwrap();
            let fit = rq_fit(&d, tau, None).unwrap();
            // g = Σ_{r>0} τ x_i − Σ_{r<0} (1−τ) x_i must be cancellable by
            // the zero-residual rows: g = −Σ_{r=0} z_i x_i with z_i in [−(1−τ), τ].
            // With p = 2 and generic data exactly two rows have zero residual.
            let mut g = [0.0; 2];
            let mut zero_rows = Vec::new();
            for (i, (x, &yi)) in d.rows().zip(d.y()).enumerate() {
                let res = yi - dot(x, &fit.beta);
                if res.abs() < 1e-9 {
                    zero_rows.push(i);
                } else {
                    let c = if res > 0.0 { tau } else { tau - 1.0 };
                    g[0] += c * x[0];
                    g[1] += c * x[1];
                }
            }
            prop_assert_eq!(zero_rows.len(), 2);
            let (a, b) = (d.row(zero_rows[0]), d.row(zero_rows[1]));
            let det = a[0] * b[1] - a[1] * b[0];
            // solve z_a a + z_b b = -g
            let za = (-g[0] * b[1] + g[1] * b[0]) / det;
            let zb = (-a[0] * g[1] + a[1] * g[0]) / det;
            for z in [za, zb] {
                prop_assert!(z >= tau - 1.0 - 1e-9 && z <= tau + 1e-9, "z = {z}");
            }
        }
    }
}
