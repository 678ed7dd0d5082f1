//! Manually initialized parity Transformer bundle.

use crate::codes::{delta_posterior_bundle, CodesError, DistributionBundle};
use crate::compile::{compile, CompilerOptions, TargetDims, TransformerWeights};
use crate::symprog::build_parity_program;

/// Architecture used for the parity experiments: 2 attention heads, 128
/// model dimensions, 512 hidden dimensions, 20 prompt tokens, 42 layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParityTarget {
    pub model_dim: usize,
    pub hidden_dim: usize,
    pub num_heads: usize,
    pub num_prompt_rows: usize,
    pub num_layers: usize,
}

pub fn paper_parity_target() -> ParityTarget {
    ParityTarget {
        model_dim: 128,
        hidden_dim: 512,
        num_heads: 2,
        num_prompt_rows: 20,
        num_layers: 42,
    }
}

#[derive(Debug, Clone)]
pub struct ManualParityBundle {
    pub weights: TransformerWeights,
    pub bundle: DistributionBundle,
    pub num_layers: usize,
}

/// Compiles the sequential parity program, pads it to the target
/// architecture, and attaches near-delta posteriors (raw variance -10)
/// with frequency-matched mixture priors per weight group. The unused
/// prompt program column is paired with its +-1 prior so it is transmitted
/// for free.
pub fn manual_parity_bundle(
    target: ParityTarget,
    max_components: usize,
) -> Result<ManualParityBundle, CodesError> {
    let program = build_parity_program();
    let opts = CompilerOptions {
        num_prompt_rows: target.num_prompt_rows,
        target: Some(TargetDims {
            model_dim: target.model_dim,
            hidden_dim: target.hidden_dim,
            num_heads: target.num_heads,
            d_head: None,
            num_prompt_rows: Some(target.num_prompt_rows),
        }),
        ..CompilerOptions::default()
    };
    let weights = compile(&program, &opts).expect("parity compiles at the paper target");
    // The parity program ignores the prompt region, so every program-bit
    // row is tail: z has length zero.
    let bundle = delta_posterior_bundle(&weights, -10.0, Some(0), max_components)?;
    Ok(ManualParityBundle {
        weights,
        bundle,
        num_layers: target.num_layers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transformer::{argmax, CompiledModel};

    #[test]
    fn manual_bundle_classifies_parity_at_42_layers() {
        let mb = manual_parity_bundle(paper_parity_target(), 8).unwrap();
        let model = CompiledModel::new(&mb.weights, mb.num_layers);
        for (input, want) in [
            (vec![1u8, 0, 1, 1], 1usize),
            (vec![0, 0, 0, 0], 0),
            (vec![1; 21], 1),
            (vec![1; 40], 0),
        ] {
            let logits = model.eval(&input).unwrap();
            assert_eq!(argmax(&logits), want, "input {input:?}");
        }
    }

    #[test]
    fn sampled_posterior_weights_preserve_ood_argmax() {
        use rand::prelude::*;
        let mb = manual_parity_bundle(paper_parity_target(), 8).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let mut sampled = mb.weights.clone();
        for _ in 0..3 {
            sampled.assign_flat(&mb.bundle.sample_weights(&mut rng));
            let model = CompiledModel::new(&sampled, mb.num_layers);
            for _ in 0..20 {
                let len = rng.gen_range(21..=40);
                let input: Vec<u8> = (0..len).map(|_| rng.gen_range(0..2) as u8).collect();
                let want = (input.iter().filter(|b| **b == 1).count() % 2) as usize;
                let logits = model.eval(&input).unwrap();
                assert_eq!(argmax(&logits), want, "len {len}");
            }
        }
    }

    #[test]
    fn bundle_kl_is_in_the_expected_band() {
        let mb = manual_parity_bundle(paper_parity_target(), 8).unwrap();
        let est = crate::codes::mc_kl(&mb.bundle, 8, 3);
        assert!(
            est.kl_bits > 500.0 && est.kl_bits < 6000.0,
            "KL {} bits",
            est.kl_bits
        );
    }
}
