//! Per-weight posterior GMMs plus grouped adaptive prior GMMs.

use super::optimal::optimal_mixture_prior;
use super::{prior_transmission_cost_bits, CodesError, GmmParams};
use crate::compile::TransformerWeights;
use serde::{Deserialize, Serialize};

/// Mapping from flat weight index to prior group.
///
/// Groups are one per named weight array, except the embedding table's
/// prompt rows: those get one group per feature column, so the group count
/// is independent of the number of prompt tokens.
#[derive(Debug, Clone)]
pub struct WeightGrouping {
    pub group_of: Vec<usize>,
    pub group_names: Vec<String>,
}

/// Builds the standard grouping for a weight bundle in `to_flat` order.
pub fn weight_grouping(weights: &TransformerWeights) -> WeightGrouping {
    let dims = weights.dims;
    let mut group_names: Vec<String> = Vec::new();
    let mut group_of = Vec::with_capacity(weights.num_weights());
    let mut group_index = std::collections::HashMap::new();
    let mut intern = |name: String, names: &mut Vec<String>| -> usize {
        *group_index.entry(name.clone()).or_insert_with(|| {
            names.push(name);
            names.len() - 1
        })
    };

    for (name, shape, data) in weights.named_arrays() {
        if name == "embeddings" {
            let cols = shape[1];
            for flat in 0..data.len() {
                let row = flat / cols;
                let col = flat % cols;
                let group = if row >= dims.prompt_row_start() {
                    format!("prompt_col_{col}")
                } else {
                    "embeddings".to_string()
                };
                group_of.push(intern(group, &mut group_names));
            }
        } else {
            let g = intern(name.clone(), &mut group_names);
            group_of.extend(std::iter::repeat(g).take(data.len()));
        }
    }
    WeightGrouping {
        group_of,
        group_names,
    }
}

/// Posterior GMM per weight, prior GMM per group, and the fixed-precision
/// cost of transmitting the prior parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionBundle {
    pub posteriors: Vec<GmmParams>,
    pub priors: Vec<GmmParams>,
    pub group_of: Vec<usize>,
    pub group_names: Vec<String>,
    pub prior_cost_bits: f64,
}

impl DistributionBundle {
    pub fn new(
        posteriors: Vec<GmmParams>,
        priors: Vec<GmmParams>,
        group_of: Vec<usize>,
        group_names: Vec<String>,
    ) -> Self {
        assert_eq!(posteriors.len(), group_of.len());
        assert_eq!(priors.len(), group_names.len());
        assert!(group_of.iter().all(|g| *g < priors.len()));
        let prior_cost_bits = prior_transmission_cost_bits(&priors);
        DistributionBundle {
            posteriors,
            priors,
            group_of,
            group_names,
            prior_cost_bits,
        }
    }

    pub fn num_weights(&self) -> usize {
        self.posteriors.len()
    }

    pub fn prior_of(&self, weight: usize) -> &GmmParams {
        &self.priors[self.group_of[weight]]
    }

    /// Draws a full weight vector from the posteriors.
    pub fn sample_weights(&self, rng: &mut impl rand::Rng) -> Vec<f64> {
        self.posteriors.iter().map(|p| p.sample(rng)).collect()
    }

    /// Posterior means as a weight vector.
    pub fn mean_weights(&self) -> Vec<f64> {
        self.posteriors
            .iter()
            .map(|p| {
                let mix = p.mixings();
                p.means
                    .iter()
                    .zip(&mix)
                    .map(|(m, pi)| m * pi)
                    .sum::<f64>()
            })
            .collect()
    }
}

/// Builds the near-deterministic posterior bundle for compiled weights:
/// a single Gaussian at each weight value with raw variance `nu_delta`,
/// and frequency-matched mixture priors per group.
///
/// With `rademacher_tail = Some(z_len)`, the program-bit column of the
/// prompt embedding table is treated specially: its prior is the +-1
/// equal mixture, rows holding program bits get near-delta posteriors at
/// their +-1 value (costing one bit each), and the unused rows past
/// `z_len` take the prior itself as posterior so they are transmitted for
/// free.
pub fn delta_posterior_bundle(
    weights: &TransformerWeights,
    nu_delta: f64,
    rademacher_tail: Option<usize>,
    max_components: usize,
) -> Result<DistributionBundle, CodesError> {
    let grouping = weight_grouping(weights);
    let flat = weights.to_flat();
    let dims = weights.dims;

    // Column 0 of the prompt block holds the program bits.
    let prompt_col0_group = grouping
        .group_names
        .iter()
        .position(|n| n == "prompt_col_0");

    let mut posteriors = Vec::with_capacity(flat.len());
    let cols = dims.model_dim;
    let prompt_start_flat = dims.prompt_row_start() * cols;
    for (i, value) in flat.iter().enumerate() {
        let in_embeddings = i < weights.embeddings.len();
        let is_prompt_col0 = in_embeddings
            && i >= prompt_start_flat
            && i % cols == 0
            && prompt_col0_group.is_some();
        if is_prompt_col0 {
            let row = (i - prompt_start_flat) / cols;
            match rademacher_tail {
                Some(z_len) if row >= z_len => {
                    // Unused program rows: posterior equals the prior.
                    posteriors.push(GmmParams::rademacher(nu_delta));
                }
                _ => posteriors.push(GmmParams::gaussian(*value, nu_delta)),
            }
        } else {
            posteriors.push(GmmParams::gaussian(*value, nu_delta));
        }
    }

    let mut priors = Vec::with_capacity(grouping.group_names.len());
    for (g, name) in grouping.group_names.iter().enumerate() {
        if Some(g) == prompt_col0_group && rademacher_tail.is_some() {
            priors.push(GmmParams::rademacher(nu_delta));
            continue;
        }
        let values: Vec<f64> = flat
            .iter()
            .enumerate()
            .filter(|(i, _)| grouping.group_of[*i] == g)
            .map(|(_, v)| *v)
            .collect();
        let (prior, _) = optimal_mixture_prior(&values, nu_delta, max_components)
            .map_err(|e| match e {
                CodesError::TooManyDistinct { distinct, max, .. } => CodesError::TooManyDistinct {
                    group: name.clone(),
                    distinct,
                    max,
                },
                other => other,
            })?;
        priors.push(prior);
    }

    Ok(DistributionBundle::new(
        posteriors,
        priors,
        grouping.group_of,
        grouping.group_names,
    ))
}

#[cfg(test)]
mod tests {
    use super::super::mc_kl;
    use super::*;
    use crate::compile::{zmap, CompilerOptions};
    use crate::ptm::{toy, ProgramBits, ResourceBound};

    #[test]
    fn grouping_has_one_group_per_array_plus_prompt_columns() {
        let tm = toy::sign_select();
        let bound = ResourceBound::new(10, 6);
        let z = ProgramBits::parse("1").unwrap();
        let w = zmap(&tm, &bound, &z, &CompilerOptions::plain()).unwrap();
        let grouping = weight_grouping(&w);
        let named = w.named_arrays().len();
        // every named array contributes one group; the embedding table
        // additionally splits into one group per prompt column
        assert_eq!(grouping.group_names.len(), named + w.dims.model_dim);
        assert_eq!(grouping.group_of.len(), w.num_weights());
        // group count must not depend on the space bound
        let w2 = zmap(
            &tm,
            &ResourceBound::new(10, 24),
            &z,
            &CompilerOptions::plain(),
        )
        .unwrap();
        assert_eq!(
            weight_grouping(&w2).group_names.len(),
            grouping.group_names.len()
        );
    }

    #[test]
    fn prompt_column_kl_is_one_bit_per_program_bit() {
        let tm = toy::sign_select();
        let r_s = 20;
        let z = ProgramBits::parse("10110").unwrap();
        let w = zmap(&tm, &ResourceBound::new(10, r_s), &z, &CompilerOptions::plain()).unwrap();
        let bundle = delta_posterior_bundle(&w, -10.0, Some(z.len()), 16).unwrap();

        // Restrict to the prompt column 0 weights: |z| bits exactly, with
        // the 15 tail rows free.
        let col0_group = bundle
            .group_names
            .iter()
            .position(|n| n == "prompt_col_0")
            .unwrap();
        let mut col0_bits = 0.0;
        for (i, post) in bundle.posteriors.iter().enumerate() {
            if bundle.group_of[i] != col0_group {
                continue;
            }
            let prior = bundle.prior_of(i);
            if post == prior {
                continue; // tail rows transmitted for free
            }
            let single = DistributionBundle::new(
                vec![post.clone()],
                vec![prior.clone()],
                vec![0],
                vec!["w".into()],
            );
            col0_bits += mc_kl(&single, 64, 9).kl_bits;
        }
        assert!(
            (col0_bits - z.len() as f64).abs() < 1e-6,
            "col0 KL = {col0_bits}, want {}",
            z.len()
        );
    }

    #[test]
    fn full_length_program_has_no_free_rows() {
        let tm = toy::sign_select();
        let r_s = 4;
        let z = ProgramBits::parse("1011").unwrap();
        let w = zmap(&tm, &ResourceBound::new(10, r_s), &z, &CompilerOptions::plain()).unwrap();
        let bundle = delta_posterior_bundle(&w, -10.0, Some(z.len()), 16).unwrap();
        let col0_group = bundle
            .group_names
            .iter()
            .position(|n| n == "prompt_col_0")
            .unwrap();
        let free = bundle
            .posteriors
            .iter()
            .enumerate()
            .filter(|(i, p)| bundle.group_of[*i] == col0_group && *p == bundle.prior_of(*i))
            .count();
        assert_eq!(free, 0);
    }

    #[test]
    fn sampled_weights_preserve_the_model_function() {
        use crate::transformer::{argmax, CompiledModel};
        use rand::SeedableRng;
        let program = crate::symprog::build_parity_program();
        let w = crate::compile::compile(&program, &CompilerOptions::default()).unwrap();
        let bundle = delta_posterior_bundle(&w, -10.0, None, 8).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let mut sampled = w.clone();
        for _ in 0..3 {
            sampled.assign_flat(&bundle.sample_weights(&mut rng));
            for input in [vec![1, 0, 1, 1], vec![0, 0], vec![1, 1, 1, 1, 1]] {
                let layers = input.len() + 2;
                let a = CompiledModel::new(&w, layers).eval(&input).unwrap();
                let b = CompiledModel::new(&sampled, layers).eval(&input).unwrap();
                assert_eq!(argmax(&a), argmax(&b), "input {input:?}");
            }
        }
    }
}
