//! The coordinate-wise sampler and a plain joint random-walk Metropolis chain
//! (which rejects crossing proposals) must agree on posterior means.

use lidqr::experiments::gen_example1;
use lidqr::rng;
use lidqr::sampler::{init_parallel, run_chain_from, Target};
use lidqr::{CoefficientMatrix, PriorSpec, QuantileGrid, SamplerConfig};
use rand::Rng;
use rand_distr::StandardNormal;

fn batch_means_se(v: &[f64], batches: usize) -> f64 {
    let size = v.len() / batches;
    let means: Vec<f64> = v.chunks_exact(size).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let k = means.len() as f64;
    let mu = means.iter().sum::<f64>() / k;
    (means.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt()
}

#[test]
fn coordinate_sampler_matches_joint_random_walk() {
    let data = gen_example1(25, 12).unwrap();
    let grid = QuantileGrid::make(3, 0).unwrap();
    let prior = PriorSpec::iid(6, 0.0, 10.0).unwrap();
    let target = Target { data: &data, grid: &grid, prior: &prior, tail_sd: 2.0, proposal_sd: 0.5 };
    let start = init_parallel(&data, &grid).unwrap();

    let cfg = SamplerConfig { iters: 3_000_000, burnin: 100_000, thin: 10, seed: 3, proposal_sd: Some(0.5), tail_sd: Some(2.0) };
    let chain = run_chain_from(start.clone(), &target, &cfg).unwrap();

    // joint random walk, independent of the bounds machinery
    let mut r = rng::seeded(4);
    let mut cur = start.values().to_vec();
    let mut cur_lp = target.log_posterior(&start).unwrap();
    let mut rw: Vec<Vec<f64>> = Vec::new();
    for it in 0..4_000_000 {
        let cand: Vec<f64> = cur.iter().map(|v| v + 0.08 * r.sample::<f64, _>(StandardNormal)).collect();
        let lp = target.log_posterior(&CoefficientMatrix::new(3, 2, cand.clone()).unwrap()).unwrap();
        let u: f64 = r.random();
        if u.ln() < lp - cur_lp {
            cur = cand;
            cur_lp = lp;
        }
        if it >= 100_000 && it % 10 == 0 {
            rw.push(cur.clone());
        }
    }

    for k in 0..6 {
        let a: Vec<f64> = chain.draws.iter().map(|d| d.values()[k]).collect();
        let b: Vec<f64> = rw.iter().map(|d| d[k]).collect();
        let (ma, mb) = (a.iter().sum::<f64>() / a.len() as f64, b.iter().sum::<f64>() / b.len() as f64);
        let se = (batch_means_se(&a, 50).powi(2) + batch_means_se(&b, 50).powi(2)).sqrt();
        assert!((ma - mb).abs() < 4.0 * se, "coordinate {k}: {ma} vs {mb} (se {se})");
    }
}
