//! KL divergence estimators: exact dispatch, Monte-Carlo, and quadrature.

use super::bundle::DistributionBundle;
use super::{gaussian_kl_closed_form, inv_softplus, nats_to_bits, GmmParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Closed-form per-weight KL in nats, when one exists: zero for identical
/// parameters, the analytic form when both sides are single Gaussians.
pub fn per_weight_closed_kl(posterior: &GmmParams, prior: &GmmParams) -> Option<f64> {
    if posterior == prior {
        return Some(0.0);
    }
    if posterior.k() == 1 && prior.k() == 1 {
        return Some(gaussian_kl_closed_form(
            posterior.means[0],
            posterior.variances()[0],
            prior.means[0],
            prior.variances()[0],
        ));
    }
    None
}

/// Monte-Carlo KL estimate with a standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McKlEstimate {
    pub kl_bits: f64,
    pub stderr_bits: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Estimates `KL(posterior || prior)` in bits, summed over all weights.
///
/// Weights whose posterior equals their group prior contribute exactly 0;
/// single-Gaussian pairs use the closed form; everything else is averaged
/// over `n_samples` Monte-Carlo draws (mixture components drawn hard, as a
/// straight-through estimator would), with negative per-sample terms kept.
/// Reproducible for a fixed seed.
pub fn mc_kl(bundle: &DistributionBundle, n_samples: usize, seed: u64) -> McKlEstimate {
    assert!(n_samples >= 1);
    let closed_nats: f64 = bundle
        .posteriors
        .par_iter()
        .enumerate()
        .map(|(i, post)| {
            per_weight_closed_kl(post, bundle.prior_of(i)).unwrap_or(0.0)
        })
        .sum();

    // Per-sample totals over the Monte-Carlo weights give the stderr of
    // the summed estimate.
    let mc_indices: Vec<usize> = (0..bundle.posteriors.len())
        .filter(|i| per_weight_closed_kl(&bundle.posteriors[*i], bundle.prior_of(*i)).is_none())
        .collect();
    if mc_indices.is_empty() {
        return McKlEstimate {
            kl_bits: nats_to_bits(closed_nats),
            stderr_bits: 0.0,
            samples: n_samples,
            seed,
        };
    }

    let totals: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (s as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut total = 0.0;
            for &i in &mc_indices {
                let post = &bundle.posteriors[i];
                let prior = bundle.prior_of(i);
                let h = post.sample(&mut rng);
                total += post.logpdf(h) - prior.logpdf(h);
            }
            total
        })
        .collect();
    let mean = totals.iter().sum::<f64>() / n_samples as f64;
    let var = if n_samples > 1 {
        totals.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (n_samples as f64 - 1.0)
    } else {
        0.0
    };
    let stderr = (var / n_samples as f64).sqrt();

    McKlEstimate {
        kl_bits: nats_to_bits(closed_nats + mean),
        stderr_bits: nats_to_bits(stderr),
        samples: n_samples,
        seed,
    }
}

/// `KL(N(mu, var) || gmm)` in nats by Simpson quadrature over +-12 sigma.
///
/// Deterministic oracle used by tests and the frontier sweep where no
/// closed form exists.
pub fn gauss_vs_gmm_kl_quadrature(mu: f64, var: f64, prior: &GmmParams) -> f64 {
    gauss_vs_gmm_kl_quadrature_panels(mu, var, prior, 4000)
}

/// As [`gauss_vs_gmm_kl_quadrature`] with an explicit panel count for
/// callers that trade accuracy for speed.
pub fn gauss_vs_gmm_kl_quadrature_panels(
    mu: f64,
    var: f64,
    prior: &GmmParams,
    n: usize,
) -> f64 {
    let sigma = var.sqrt();
    let lo = mu - 12.0 * sigma;
    let hi = mu + 12.0 * sigma;
    let hstep = (hi - lo) / n as f64;
    let posterior = GmmParams::gaussian(mu, inv_softplus(var));
    let f = |x: f64| {
        let lp = posterior.logpdf(x);
        (lp - prior.logpdf(x)) * lp.exp()
    };
    let mut total = f(lo) + f(hi);
    for i in 1..n {
        let x = lo + hstep * i as f64;
        total += f(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    total * hstep / 3.0
}

#[cfg(test)]
mod tests {
    use super::super::{nats_to_bits, GmmParams};
    use super::*;
    use approx::assert_relative_eq;

    fn single_weight_bundle(post: GmmParams, prior: GmmParams) -> DistributionBundle {
        DistributionBundle::new(vec![post], vec![prior], vec![0], vec!["w".into()])
    }

    #[test]
    fn posterior_equal_to_prior_is_exactly_zero() {
        let p = GmmParams::rademacher(-10.0);
        let est = mc_kl(&single_weight_bundle(p.clone(), p), 100, 1);
        assert_eq!(est.kl_bits, 0.0);
        assert_eq!(est.stderr_bits, 0.0);
    }

    #[test]
    fn closed_form_pair_skips_sampling() {
        let post = GmmParams::gaussian(1.0, inv_softplus(1.0));
        let prior = GmmParams::gaussian(0.0, inv_softplus(1.0));
        let est = mc_kl(&single_weight_bundle(post, prior), 10, 42);
        assert_relative_eq!(est.kl_bits, nats_to_bits(0.5), epsilon = 1e-12);
        assert_eq!(est.stderr_bits, 0.0);
    }

    #[test]
    fn bit_transmission_costs_one_bit() {
        // Two-component prior at +-1 with tiny variance; posterior is a
        // near-delta at +1: the optimal KL cost of sending one bit.
        let prior = GmmParams::rademacher(-10.0);
        let post = GmmParams::gaussian(1.0, -10.0);
        let est = mc_kl(&single_weight_bundle(post, prior), 1000, 7);
        assert!(
            (est.kl_bits - 1.0).abs() <= (3.0 * est.stderr_bits).max(1e-9),
            "kl {} stderr {}",
            est.kl_bits,
            est.stderr_bits
        );
    }

    #[test]
    fn mc_matches_closed_form_within_three_stderr() {
        // Force the MC path by using a 2-component posterior that is
        // effectively the same single Gaussian duplicated.
        let post = GmmParams::new(
            vec![1.0, 1.0],
            vec![inv_softplus(1.0); 2],
            vec![0.0, 0.0],
        );
        let prior = GmmParams::gaussian(0.0, inv_softplus(1.0));
        let est = mc_kl(&single_weight_bundle(post, prior), 100_000, 3);
        let want = nats_to_bits(0.5);
        assert!(
            (est.kl_bits - want).abs() <= 3.0 * est.stderr_bits,
            "kl {} want {want} stderr {}",
            est.kl_bits,
            est.stderr_bits
        );
    }

    #[test]
    fn seeded_estimates_are_reproducible() {
        let prior = GmmParams::rademacher(0.0);
        let post = GmmParams::gaussian(0.7, -3.0);
        let a = mc_kl(&single_weight_bundle(post.clone(), prior.clone()), 500, 11);
        let b = mc_kl(&single_weight_bundle(post, prior), 500, 11);
        assert_eq!(a, b);
    }

    #[test]
    fn quadrature_matches_closed_form_for_gaussians() {
        let prior = GmmParams::gaussian(0.0, inv_softplus(1.0));
        let kl = gauss_vs_gmm_kl_quadrature(1.0, 1.0, &prior);
        assert_relative_eq!(kl, 0.5, epsilon = 1e-9);
        let kl2 = gauss_vs_gmm_kl_quadrature(0.0, 0.25, &prior);
        assert_relative_eq!(kl2, 0.3181471805599453, epsilon = 1e-9);
    }

    #[test]
    fn kl_factorizes_across_weights() {
        // Sum of per-weight estimates equals the bundle estimate when every
        // weight uses the closed form.
        let posts = vec![
            GmmParams::gaussian(0.5, inv_softplus(0.3)),
            GmmParams::gaussian(-1.2, inv_softplus(2.0)),
            GmmParams::gaussian(0.0, inv_softplus(1.0)),
        ];
        let prior = GmmParams::gaussian(0.0, inv_softplus(1.0));
        let bundle = DistributionBundle::new(
            posts.clone(),
            vec![prior.clone()],
            vec![0, 0, 0],
            vec!["g".into()],
        );
        let whole = mc_kl(&bundle, 10, 5).kl_bits;
        let parts: f64 = posts
            .iter()
            .map(|p| nats_to_bits(per_weight_closed_kl(p, &prior).unwrap()))
            .sum();
        assert_relative_eq!(whole, parts, epsilon = 1e-12);
    }
}
