use rand::Rng;
use rayon::prelude::*;

use crate::baselines::rq::rq_fit;
use crate::error::{domain, Error, Result};
use crate::model::Dataset;
use crate::rng;

const ATTEMPTS_PER_REPLICATE: usize = 10;

/// Pair (x, y) bootstrap output for one quantile level.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    pub tau: f64,
    /// Coefficient vector of every replicate, in replicate order.
    pub replicates: Vec<Vec<f64>>,
    /// Coefficient-wise sample standard deviation over replicates.
    pub se: Vec<f64>,
    /// Resamples discarded for a rank-deficient design.
    pub redraws: usize,
}

/// Pair bootstrap standard errors of the RQ coefficients at `tau`.
pub fn pair_bootstrap(data: &Dataset, tau: f64, reps: usize, seed: u64) -> Result<BootstrapResult> {
    pair_bootstrap_taus(data, &[tau], reps, seed).map(|mut v| v.remove(0))
}

/// Pair bootstrap at several levels sharing the same resamples, so
/// replicate-wise contrasts across levels are meaningful. Replicate `b` is
/// drawn from stream `b` of `seed`; rank-deficient resamples are redrawn up to
/// ten times per replicate.
pub fn pair_bootstrap_taus(data: &Dataset, taus: &[f64], reps: usize, seed: u64) -> Result<Vec<BootstrapResult>> {
    pair_bootstrap_with(data, taus, reps, seed, |d, t| rq_fit(d, t, None).map(|f| f.beta))
}

/// [`pair_bootstrap_taus`] with a caller-supplied estimator `fit(data, tau)`.
pub fn pair_bootstrap_with<F>(data: &Dataset, taus: &[f64], reps: usize, seed: u64, fit: F) -> Result<Vec<BootstrapResult>>
where
    F: Fn(&Dataset, f64) -> Result<Vec<f64>> + Sync,
{
    if reps < 2 {
        return domain("bootstrap needs at least 2 replicates");
    }
    let n = data.n();
    let per_rep: Vec<Result<(Vec<Vec<f64>>, usize)>> = (0..reps)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream(seed, b as u64);
            for attempt in 0..ATTEMPTS_PER_REPLICATE {
                let idx: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
                let sample = data.subset(&idx)?;
                if !sample.is_full_rank() {
                    continue;
                }
                let betas = taus
                    .iter()
                    .map(|&t| fit(&sample, t))
                    .collect::<Result<Vec<_>>>()?;
                return Ok((betas, attempt));
            }
            Err(Error::Numerical(format!(
                "bootstrap replicate {b}: {ATTEMPTS_PER_REPLICATE} rank-deficient resamples in a row"
            )))
        })
        .collect();

    let mut by_tau: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(reps); taus.len()];
    let mut redraws = 0;
    for res in per_rep {
        let (betas, extra) = res?;
        redraws += extra;
        for (slot, beta) in by_tau.iter_mut().zip(betas) {
            slot.push(beta);
        }
    }
    Ok(taus
        .iter()
        .zip(by_tau)
        .map(|(&tau, replicates)| {
            let se = column_sd(&replicates);
            BootstrapResult { tau, replicates, se, redraws }
        })
        .collect())
}

fn column_sd(rows: &[Vec<f64>]) -> Vec<f64> {
    let k = rows[0].len();
    let n = rows.len() as f64;
    (0..k)
        .map(|c| {
            // Welford: exactly zero for identical replicates
            let (mut mean, mut m2) = (0.0, 0.0);
            for (i, r) in rows.iter().enumerate() {
                let d = r[c] - mean;
                mean += d / (i + 1) as f64;
                m2 += d * (r[c] - mean);
            }
            (m2 / (n - 1.0)).sqrt()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_response_has_zero_se() {
        let d = Dataset::new(1, vec![1.0; 9], vec![4.2; 9]).unwrap();
        let b = pair_bootstrap(&d, 0.5, 20, 1).unwrap();
        assert_eq!(b.se, vec![0.0]);
        assert!(b.replicates.iter().all(|r| r[0] == 4.2));
    }

    #[test]
    fn seeded_runs_repeat() {
        let cov: Vec<Vec<f64>> = (0..30).map(|i| vec![(i as f64 * 0.37).sin() * 3.0]).collect();
        let y: Vec<f64> = cov.iter().enumerate().map(|(i, c)| c[0] + (i as f64 * 1.3).cos()).collect();
        let d = Dataset::with_intercept(&cov, y).unwrap();
        let a = pair_bootstrap(&d, 0.5, 30, 9).unwrap();
        let b = pair_bootstrap(&d, 0.5, 30, 9).unwrap();
        assert_eq!(a, b);
        let c = pair_bootstrap(&d, 0.5, 30, 10).unwrap();
        assert_ne!(a.se, c.se);
        assert!(pair_bootstrap(&d, 0.5, 1, 9).is_err());
    }

    #[test]
    fn shared_resamples_across_levels() {
        let cov: Vec<Vec<f64>> = (0..25).map(|i| vec![i as f64 / 5.0]).collect();
        let y: Vec<f64> = cov.iter().enumerate().map(|(i, c)| 2.0 * c[0] + ((i * 7) % 5) as f64).collect();
        let d = Dataset::with_intercept(&cov, y).unwrap();
        let both = pair_bootstrap_taus(&d, &[0.5, 0.75], 10, 3).unwrap();
        let single = pair_bootstrap(&d, 0.75, 10, 3).unwrap();
        assert_eq!(both[1].replicates, single.replicates);
    }
}
