//! Bit-transmission tradeoff curves: KL cost against the probability that
//! the receiver decodes the intended bit from the sign of a sampled weight.

use super::{gauss_vs_gmm_kl_quadrature, gaussian_kl_closed_form, inv_softplus, nats_to_bits, GmmParams};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct FrontierPoint {
    pub decode_prob: f64,
    pub kl_bits: f64,
    pub mu: f64,
    pub sigma2: f64,
}

/// Pareto frontier of `(decode probability, KL bits)` for a Gaussian
/// posterior `N(mu, sigma^2)` against the unimodal `N(0, 1)` prior,
/// transmitting the bit 1 (decoded as `sign(w) = +`).
///
/// Sweeps a grid over `(mu, sigma)` and keeps, per probability bucket, the
/// smallest KL. Any decode probability near 1 forces a KL well above one
/// bit.
pub fn unimodal_frontier(grid: usize) -> Vec<FrontierPoint> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let buckets = 1000usize;
    let mut best: Vec<Option<FrontierPoint>> = vec![None; buckets + 1];
    for i in 0..grid {
        // mu in (0, 5]
        let mu = 5.0 * (i + 1) as f64 / grid as f64;
        for j in 0..grid {
            // sigma log-spaced in [1e-3, 10]
            let sigma = 10f64.powf(-3.0 + 4.0 * j as f64 / (grid - 1) as f64);
            let prob = normal.cdf(mu / sigma);
            let kl = nats_to_bits(gaussian_kl_closed_form(mu, sigma * sigma, 0.0, 1.0));
            let bucket = ((prob - 0.5).max(0.0) * 2.0 * buckets as f64).floor() as usize;
            let bucket = bucket.min(buckets);
            let point = FrontierPoint {
                decode_prob: prob,
                kl_bits: kl,
                mu,
                sigma2: sigma * sigma,
            };
            if best[bucket].map_or(true, |b| kl < b.kl_bits) {
                best[bucket] = Some(point);
            }
        }
    }
    // The prior itself (mu = 0) is the 0.5-probability anchor.
    best[0] = Some(FrontierPoint {
        decode_prob: 0.5,
        kl_bits: 0.0,
        mu: 0.0,
        sigma2: 1.0,
    });
    best.into_iter().flatten().collect()
}

/// Frontier for the two-component +-1 prior: the posterior is the prior's
/// +1 component, swept over component variances. The KL approaches one bit
/// while the decode probability approaches 1.
pub fn multimodal_frontier(grid: usize) -> Vec<FrontierPoint> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut points = Vec::with_capacity(grid);
    for j in 0..grid {
        let sigma = 10f64.powf(-4.0 + 3.5 * j as f64 / (grid - 1) as f64);
        let var = sigma * sigma;
        let prior = GmmParams::rademacher(inv_softplus(var));
        let kl = nats_to_bits(gauss_vs_gmm_kl_quadrature(1.0, var, &prior));
        let prob = normal.cdf(1.0 / sigma);
        points.push(FrontierPoint {
            decode_prob: prob,
            kl_bits: kl,
            mu: 1.0,
            sigma2: var,
        });
    }
    points
}
