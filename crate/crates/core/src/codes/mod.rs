//! Gaussian mixture distributions and codelength objectives.
//!
//! All reports are in bits; internal math runs in nats with a single
//! conversion point ([`nats_to_bits`]).

mod bundle;
mod frontier;
mod kl;
mod optimal;
mod report;

pub use bundle::{delta_posterior_bundle, weight_grouping, DistributionBundle, WeightGrouping};
pub use frontier::{multimodal_frontier, unimodal_frontier, FrontierPoint};
pub use kl::{gauss_vs_gmm_kl_quadrature, gauss_vs_gmm_kl_quadrature_panels, mc_kl, per_weight_closed_kl, McKlEstimate};
pub use optimal::{discrete_prior_cost_bits, optimal_mixture_prior};
pub use report::CodelengthReport;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LN_2: f64 = std::f64::consts::LN_2;

pub fn nats_to_bits(nats: f64) -> f64 {
    nats / LN_2
}

pub fn bits_to_nats(bits: f64) -> f64 {
    bits * LN_2
}

/// Numerically stable softplus.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of softplus: the raw variance producing a given variance.
pub fn inv_softplus(y: f64) -> f64 {
    assert!(y > 0.0);
    if y > 30.0 {
        y
    } else {
        (y.exp() - 1.0).ln()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CodesError {
    #[error("group `{group}` has {distinct} distinct values, more than the {max} mixture components")]
    TooManyDistinct {
        group: String,
        distinct: usize,
        max: usize,
    },
    #[error("no mixture component mean equals {value}")]
    NoComponentAt { value: f64 },
}

/// Parameters of a one-dimensional Gaussian mixture: per component a mean,
/// a raw variance (variance is its softplus), and a mixing logit (mixing
/// coefficients are their softmax).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub means: Vec<f64>,
    pub raw_vars: Vec<f64>,
    pub mix_logits: Vec<f64>,
}

impl GmmParams {
    pub fn new(means: Vec<f64>, raw_vars: Vec<f64>, mix_logits: Vec<f64>) -> Self {
        assert!(!means.is_empty(), "a mixture needs at least one component");
        assert_eq!(means.len(), raw_vars.len());
        assert_eq!(means.len(), mix_logits.len());
        GmmParams {
            means,
            raw_vars,
            mix_logits,
        }
    }

    /// Single-component Gaussian.
    pub fn gaussian(mean: f64, raw_var: f64) -> Self {
        GmmParams::new(vec![mean], vec![raw_var], vec![0.0])
    }

    /// Equal-weight two-component mixture at -1 and +1.
    pub fn rademacher(raw_var: f64) -> Self {
        GmmParams::new(vec![-1.0, 1.0], vec![raw_var, raw_var], vec![0.0, 0.0])
    }

    pub fn k(&self) -> usize {
        self.means.len()
    }

    pub fn variances(&self) -> Vec<f64> {
        self.raw_vars.iter().map(|v| softplus(*v)).collect()
    }

    pub fn mixings(&self) -> Vec<f64> {
        let max = self
            .mix_logits
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = self.mix_logits.iter().map(|w| (w - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        exps.iter().map(|e| e / sum).collect()
    }

    /// Log density in nats, evaluated by log-sum-exp over components.
    pub fn logpdf(&self, x: f64) -> f64 {
        let mixings = self.mixings();
        let variances = self.variances();
        let mut terms = Vec::with_capacity(self.k());
        for k in 0..self.k() {
            let var = variances[k];
            let d = x - self.means[k];
            terms.push(
                mixings[k].ln() - 0.5 * (2.0 * std::f64::consts::PI * var).ln()
                    - d * d / (2.0 * var),
            );
        }
        let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
    }

    /// Draws one value: a component by its mixing weight, then its
    /// Gaussian.
    pub fn sample(&self, rng: &mut impl rand::Rng) -> f64 {
        use rand_distr::{Distribution, StandardNormal};
        let mixings = self.mixings();
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut component = self.k() - 1;
        for (k, pi) in mixings.iter().enumerate() {
            acc += pi;
            if u < acc {
                component = k;
                break;
            }
        }
        let eps: f64 = StandardNormal.sample(rng);
        self.means[component] + self.variances()[component].sqrt() * eps
    }
}

/// KL(N(mu, var) || N(mu0, var0)) in nats.
pub fn gaussian_kl_closed_form(mu: f64, var: f64, mu0: f64, var0: f64) -> f64 {
    assert!(var > 0.0 && var0 > 0.0, "variances must be positive");
    ((var0 / var).ln() + (var + (mu - mu0) * (mu - mu0)) / var0 - 1.0) / 2.0
}

/// Two-part codelength: hypothesis bits plus data bits.
pub fn two_part_codelength(prior_bits_of_h: f64, nll_bits: f64) -> f64 {
    prior_bits_of_h + nll_bits
}

/// Variational codelength: KL bits plus expected data bits.
pub fn variational_codelength(kl_bits: f64, expected_nll_bits: f64) -> f64 {
    kl_bits + expected_nll_bits
}

/// Adaptive variational codelength: prior transmission cost, KL bits, and
/// expected data bits.
pub fn adaptive_variational_codelength(
    prior_cost_bits: f64,
    kl_bits: f64,
    expected_nll_bits: f64,
) -> f64 {
    prior_cost_bits + kl_bits + expected_nll_bits
}

/// Fixed-precision encoding cost of prior parameters: 32 bits per scalar,
/// three scalars per mixture component.
pub const BITS_PER_PRIOR_SCALAR: f64 = 32.0;

pub fn prior_transmission_cost_bits(priors: &[GmmParams]) -> f64 {
    let scalars: usize = priors.iter().map(|p| 3 * p.k()).sum();
    BITS_PER_PRIOR_SCALAR * scalars as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn standard_normal_logpdf_at_zero() {
        let g = GmmParams::gaussian(0.0, inv_softplus(1.0));
        // density of N(0,1) at 0 is 1/sqrt(2*pi) = 0.3989...
        assert_relative_eq!(g.logpdf(0.0).exp(), 0.39894228040143267, epsilon = 1e-12);
    }

    #[test]
    fn symmetric_two_component_density() {
        let g = GmmParams::new(
            vec![-1.0, 1.0],
            vec![inv_softplus(0.5), inv_softplus(0.5)],
            vec![0.3, 0.3],
        );
        assert_relative_eq!(g.logpdf(1e-9), g.logpdf(-1e-9), epsilon = 1e-12);
    }

    #[test]
    fn weighted_mixture_matches_direct_sum() {
        // mixing (0.25, 0.75) via logits ln(1), ln(3)
        let v1 = 0.7;
        let v2 = 1.9;
        let g = GmmParams::new(
            vec![-0.5, 2.0],
            vec![inv_softplus(v1), inv_softplus(v2)],
            vec![0.0, 3f64.ln()],
        );
        let x = 0.35;
        let n = |x: f64, m: f64, v: f64| {
            (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
        };
        let direct = 0.25 * n(x, -0.5, v1) + 0.75 * n(x, 2.0, v2);
        assert_relative_eq!(g.logpdf(x).exp(), direct, epsilon = 1e-12);
    }

    #[test]
    fn identical_gaussians_have_zero_kl() {
        assert_eq!(gaussian_kl_closed_form(0.0, 1.0, 0.0, 1.0), 0.0);
    }

    #[test]
    fn unit_shift_kl_is_half_nat() {
        let kl = gaussian_kl_closed_form(1.0, 1.0, 0.0, 1.0);
        assert_relative_eq!(kl, 0.5, epsilon = 1e-15);
        assert_relative_eq!(nats_to_bits(kl), 0.7213475204444817, epsilon = 1e-12);
    }

    #[test]
    fn shrunk_variance_kl_matches_formula() {
        // 0.5 * (0.25 - 1 - ln 0.25)
        let kl = gaussian_kl_closed_form(0.0, 0.25, 0.0, 1.0);
        assert_relative_eq!(kl, 0.5 * (0.25 - 1.0 - 0.25f64.ln()), epsilon = 1e-15);
        assert_relative_eq!(kl, 0.3181471805599453, epsilon = 1e-12);
    }

    #[test]
    fn codelength_sums() {
        assert_eq!(two_part_codelength(3.0, 5.0), 8.0);
        assert_eq!(two_part_codelength(0.0, 7.5), 7.5);
        assert_eq!(variational_codelength(0.0, 4.0), 4.0);
        assert_eq!(adaptive_variational_codelength(0.0, 2.0, 4.0), 6.0);
        assert_eq!(adaptive_variational_codelength(3.5, 0.0, 0.0), 3.5);
    }

    #[test]
    fn mixings_sum_to_one() {
        let g = GmmParams::new(vec![0.0; 3], vec![0.0; 3], vec![0.1, -2.0, 5.0]);
        assert_relative_eq!(g.mixings().iter().sum::<f64>(), 1.0, epsilon = 1e-15);
    }
}
