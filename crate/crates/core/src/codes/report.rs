//! Codelength evaluation reports.

use serde::{Deserialize, Serialize};

/// Evaluation summary: the three codelength components in bits plus
/// accuracy metrics. `total_bits` is always the sum of the other three.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CodelengthReport {
    pub prior_cost_bits: f64,
    pub kl_bits: f64,
    pub nll_bits: f64,
    pub total_bits: f64,
    pub train_acc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ood_acc: Option<f64>,
    pub kl_stderr_bits: f64,
    pub mc_samples: usize,
    pub seed: u64,
}

impl CodelengthReport {
    pub fn new(
        prior_cost_bits: f64,
        kl_bits: f64,
        nll_bits: f64,
        train_acc: f64,
        ood_acc: Option<f64>,
    ) -> Self {
        CodelengthReport {
            prior_cost_bits,
            kl_bits,
            nll_bits,
            total_bits: prior_cost_bits + kl_bits + nll_bits,
            train_acc,
            ood_acc,
            kl_stderr_bits: 0.0,
            mc_samples: 0,
            seed: 0,
        }
    }

    pub fn with_mc(mut self, stderr_bits: f64, samples: usize, seed: u64) -> Self {
        self.kl_stderr_bits = stderr_bits;
        self.mc_samples = samples;
        self.seed = seed;
        self
    }
}
