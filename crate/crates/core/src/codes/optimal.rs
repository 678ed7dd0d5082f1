//! Optimal mixture priors for groups of near-deterministic weights.

use super::{CodesError, GmmParams};
use std::collections::BTreeMap;

/// The KL-minimizing mixture prior for a group of weights with delta-like
/// posteriors: one near-delta component per distinct value, mixing
/// coefficients equal to the empirical frequencies. Returns the prior and
/// the resulting total KL in bits, which equals `N * H(p)` for the
/// empirical distribution `p`.
pub fn optimal_mixture_prior(
    values: &[f64],
    raw_var: f64,
    max_components: usize,
) -> Result<(GmmParams, f64), CodesError> {
    assert!(!values.is_empty(), "empty weight group");
    let mut counts: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for v in values {
        let entry = counts.entry(v.to_bits()).or_insert((*v, 0));
        entry.1 += 1;
    }
    if counts.len() > max_components {
        return Err(CodesError::TooManyDistinct {
            group: String::new(),
            distinct: counts.len(),
            max: max_components,
        });
    }
    let n = values.len() as f64;
    let mut means = Vec::with_capacity(counts.len());
    let mut mix_logits = Vec::with_capacity(counts.len());
    let mut kl_bits = 0.0;
    for (_, (value, count)) in counts {
        let p = count as f64 / n;
        means.push(value);
        mix_logits.push(p.ln());
        kl_bits += count as f64 * (-p.log2());
    }
    let k = means.len();
    Ok((GmmParams::new(means, vec![raw_var; k], mix_logits), kl_bits))
}

/// Codelength of a value under a mixture interpreted as a discrete prior:
/// `-log2` of the mixing coefficient of the component centered exactly at
/// the value.
pub fn discrete_prior_cost_bits(prior: &GmmParams, value: f64) -> Result<f64, CodesError> {
    let mixings = prior.mixings();
    prior
        .means
        .iter()
        .position(|m| *m == value)
        .map(|k| -mixings[k].log2())
        .ok_or(CodesError::NoComponentAt { value })
}

#[cfg(test)]
mod tests {
    use super::super::{inv_softplus, mc_kl, DistributionBundle};
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn half_and_half_costs_one_bit_per_weight() {
        let values = [0.5, 0.5, 0.5, 0.5, -2.0, -2.0, -2.0, -2.0];
        let (prior, kl_bits) = optimal_mixture_prior(&values, -10.0, 4).unwrap();
        assert_eq!(prior.k(), 2);
        assert_relative_eq!(kl_bits, 8.0, epsilon = 1e-12);
        let mix = prior.mixings();
        assert_relative_eq!(mix[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn constant_group_costs_nothing() {
        let values = [3.0; 10];
        let (prior, kl_bits) = optimal_mixture_prior(&values, -10.0, 4).unwrap();
        assert_eq!(prior.k(), 1);
        assert_eq!(kl_bits, 0.0);
    }

    #[test]
    fn too_many_distinct_values_error() {
        let values = [0.0, 1.0, 2.0, 3.0, 4.0];
        let err = optimal_mixture_prior(&values, -10.0, 4).unwrap_err();
        assert!(matches!(err, CodesError::TooManyDistinct { distinct: 5, max: 4, .. }));
    }

    #[test]
    fn entropy_formula_matches_mc_estimate() {
        // 3 values with frequencies (4, 2, 2)/8: H = 1.5 bits; N*H = 12.
        let values = [1.0, 1.0, 1.0, 1.0, -1.0, -1.0, 0.25, 0.25];
        let (prior, kl_bits) = optimal_mixture_prior(&values, -12.0, 8).unwrap();
        assert_relative_eq!(kl_bits, 12.0, epsilon = 1e-12);
        let posteriors: Vec<GmmParams> = values
            .iter()
            .map(|v| GmmParams::gaussian(*v, -12.0))
            .collect();
        let n = posteriors.len();
        let bundle = DistributionBundle::new(
            posteriors,
            vec![prior],
            vec![0; n],
            vec!["g".into()],
        );
        let est = mc_kl(&bundle, 2000, 13);
        assert!(
            (est.kl_bits - kl_bits).abs() <= (3.0 * est.stderr_bits).max(1e-6),
            "mc {} analytic {kl_bits} stderr {}",
            est.kl_bits,
            est.stderr_bits
        );
    }

    #[test]
    fn discrete_cost_reads_mixing_weights() {
        let (prior, _) = optimal_mixture_prior(&[1.0, 1.0, 1.0, 2.0], -10.0, 4).unwrap();
        assert_relative_eq!(
            discrete_prior_cost_bits(&prior, 1.0).unwrap(),
            -(0.75f64.log2()),
            epsilon = 1e-12
        );
        assert_relative_eq!(
            discrete_prior_cost_bits(&prior, 2.0).unwrap(),
            2.0,
            epsilon = 1e-12
        );
        assert!(discrete_prior_cost_bits(&prior, 5.0).is_err());
    }

    #[test]
    fn local_search_cannot_beat_the_entropy_bound() {
        // Random-restart gradient-free search over K-component priors, with
        // the KL evaluated by quadrature against near-delta posteriors.
        // Nothing found beats N*H(p) by more than 1e-3 bits.
        use super::super::gauss_vs_gmm_kl_quadrature_panels;
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let var = 1e-6;
        let raw = inv_softplus(var);
        for trial in 0..3 {
            let distinct = 2 + trial % 3;
            let levels: Vec<f64> = (0..distinct).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let values: Vec<f64> = (0..12)
                .map(|_| levels[rng.gen_range(0..distinct)])
                .collect();
            let (_, best_bits) = optimal_mixture_prior(&values, raw, 4).unwrap();

            let objective = |prior: &GmmParams| -> f64 {
                values
                    .iter()
                    .map(|v| gauss_vs_gmm_kl_quadrature_panels(*v, var, prior, 300) / std::f64::consts::LN_2)
                    .sum()
            };
            let mut found = f64::INFINITY;
            for _ in 0..1000 {
                let k = 4;
                let mut prior = GmmParams::new(
                    (0..k).map(|_| rng.gen_range(-2.5..2.5)).collect(),
                    vec![inv_softplus(rng.gen_range(1e-7..1e-4)); k],
                    (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                );
                // snap means toward the nearest level half the time, since
                // unsnapped random means are hopeless against deltas
                for m in prior.means.iter_mut() {
                    if rng.gen_bool(0.5) {
                        let nearest = levels
                            .iter()
                            .cloned()
                            .min_by(|a, b| {
                                (a - *m).abs().partial_cmp(&(b - *m).abs()).unwrap()
                            })
                            .unwrap();
                        *m = nearest;
                    }
                }
                found = found.min(objective(&prior));
            }
            assert!(
                found >= best_bits - 1e-3,
                "search found {found} below bound {best_bits}"
            );
        }
    }
}
