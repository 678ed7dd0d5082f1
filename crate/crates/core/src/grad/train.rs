//! Training loops: maximum-likelihood and variational objectives for the
//! Transformer.

use super::adam::{AdamState, Schedule};
use super::tape::Tape;
use super::tform::{batch_nll, WeightNodes};
use super::vparam::{
    draw_step_noise, kl_nats_node, register_params, sample_weight_nodes, VarTransformer,
};
use crate::codes::{mc_kl, CodelengthReport, LN_2};
use crate::compile::TransformerWeights;
use crate::transformer::{argmax, forward, preprocess, softmax, ModelConfig};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub batch: usize,
    /// Monte-Carlo weight samples shared across each minibatch.
    pub mc_weight_samples: usize,
    /// Scale on the KL term, balancing the minibatch NLL against the
    /// full-dataset model cost (roughly batch / dataset size).
    pub kl_coefficient: f64,
    pub gumbel_temperature: f64,
    pub seed: u64,
    pub eval_mc_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            warmup_steps: 1000,
            total_steps: 50_000,
            batch: 128,
            mc_weight_samples: 2,
            kl_coefficient: 1e-3,
            gumbel_temperature: 0.1,
            seed: 0,
            eval_mc_samples: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub kl_bits: f64,
    pub nll_bits: f64,
    pub acc: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub steps: Vec<StepRecord>,
    pub diverged: bool,
}

impl Trajectory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,lr,kl_bits,nll_bits,acc\n");
        for r in &self.steps {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.step, r.lr, r.kl_bits, r.nll_bits, r.acc
            ));
        }
        s
    }
}

type Example = (Vec<u8>, usize);

/// Groups examples by input length and preprocesses them to id sequences,
/// so same-length sequences share one batched forward.
fn length_groups(
    examples: &[&Example],
    dims: &crate::compile::WeightDims,
) -> Vec<(Vec<Vec<usize>>, Vec<usize>)> {
    let mut by_len: std::collections::BTreeMap<usize, (Vec<Vec<usize>>, Vec<usize>)> =
        std::collections::BTreeMap::new();
    for (input, label) in examples {
        let ids = preprocess(input, dims).expect("valid tokens");
        let entry = by_len.entry(ids.len()).or_default();
        entry.0.push(ids);
        entry.1.push(*label);
    }
    by_len.into_values().collect()
}

fn sample_batch<'a>(data: &'a [Example], batch: usize, rng: &mut impl Rng) -> Vec<&'a Example> {
    (0..batch).map(|_| &data[rng.gen_range(0..data.len())]).collect()
}

fn shard<T: Copy>(items: &[T], shards: usize) -> Vec<Vec<T>> {
    let mut out = vec![Vec::new(); shards];
    for (i, item) in items.iter().enumerate() {
        out[i % shards].push(*item);
    }
    out
}

/// Accuracy and total NLL bits of a deterministic weight setting over a
/// dataset, evaluated in parallel.
pub fn eval_mle_transformer(
    weights: &TransformerWeights,
    num_layers: usize,
    data: &[Example],
) -> (f64, f64) {
    let config = ModelConfig::layers(num_layers);
    let results: Vec<(f64, bool)> = data
        .par_iter()
        .map(|(input, label)| {
            let ids = preprocess(input, &weights.dims).expect("valid tokens");
            let logits = forward(weights, &config, &ids).expect("finite forward").logits;
            let probs = softmax(&logits);
            let nll_bits = -probs[*label].max(1e-300).log2();
            (nll_bits, argmax(&logits) == *label)
        })
        .collect();
    let nll: f64 = results.iter().map(|(n, _)| n).sum();
    let acc = results.iter().filter(|(_, c)| *c).count() as f64 / data.len().max(1) as f64;
    (nll, acc)
}

/// Maximum-likelihood training of raw weights.
pub fn train_mle_transformer(
    init: TransformerWeights,
    num_layers: usize,
    train: &[Example],
    config: &TrainConfig,
) -> (TransformerWeights, Trajectory) {
    let mut weights = init;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let schedule = Schedule::new(config.lr, config.warmup_steps, config.total_steps);
    let shapes: Vec<(usize, usize)> = weights
        .named_arrays()
        .iter()
        .map(|(_, s, _)| if s.len() == 2 { (s[0], s[1]) } else { (1, s[0]) })
        .collect();
    let mut adam = AdamState::new(&shapes);
    let mut trajectory = Trajectory::default();

    for step in 1..=config.total_steps {
        let batch = sample_batch(train, config.batch, &mut rng);
        let shards = shard(&batch, rayon::current_num_threads().max(1));
        let per_shard: Vec<(Vec<Array2<f64>>, f64, usize)> = shards
            .par_iter()
            .map(|examples| {
                let mut tape = Tape::new();
                let (nodes, order) = WeightNodes::leaves_from(&mut tape, &weights);
                let mut nll_sum = None;
                let mut correct = 0usize;
                for (ids_batch, labels) in length_groups(examples, &weights.dims) {
                    let refs: Vec<&[usize]> = ids_batch.iter().map(|v| v.as_slice()).collect();
                    let nll = batch_nll(&mut tape, &nodes, &refs, &labels, num_layers);
                    nll_sum = Some(match nll_sum {
                        Some(t) => tape.add(t, nll),
                        None => nll,
                    });
                }
                let Some(nll_sum) = nll_sum else {
                    return (
                        shapes.iter().map(|s| Array2::zeros(*s)).collect(),
                        0.0,
                        0,
                    );
                };
                let loss = tape.mul_scalar(nll_sum, 1.0 / (config.batch as f64 * LN_2));
                let loss_value = tape.scalar_value(loss);
                let grads = tape.backward(loss);
                // accuracy from the recorded logits of each example
                for (input, label) in examples {
                    let ids = preprocess(input, &weights.dims).unwrap();
                    let out = forward(&weights, &ModelConfig::layers(num_layers), &ids).unwrap();
                    if argmax(&out.logits) == *label {
                        correct += 1;
                    }
                }
                (
                    order
                        .iter()
                        .zip(&shapes)
                        .map(|(id, s)| grads.get_or_zero(*id, *s))
                        .collect(),
                    loss_value,
                    correct,
                )
            })
            .collect();

        let mut grad_arrays: Vec<Array2<f64>> = shapes.iter().map(|s| Array2::zeros(*s)).collect();
        let mut loss_bits = 0.0;
        let mut correct = 0usize;
        for (g, l, c) in per_shard {
            for (acc, part) in grad_arrays.iter_mut().zip(g) {
                *acc += &part;
            }
            loss_bits += l;
            correct += c;
        }
        if !loss_bits.is_finite() {
            trajectory.diverged = true;
            break;
        }
        let mut params: Vec<Array2<f64>> = {
            let mut out = Vec::new();
            let flat = weights.to_flat();
            let mut offset = 0;
            for s in &shapes {
                let len = s.0 * s.1;
                out.push(Array2::from_shape_vec(*s, flat[offset..offset + len].to_vec()).unwrap());
                offset += len;
            }
            out
        };
        let lr = schedule.lr(step);
        adam.step(&mut params, &grad_arrays, lr);
        let mut flat = Vec::with_capacity(weights.num_weights());
        for p in &params {
            flat.extend(p.iter());
        }
        weights.assign_flat(&flat);

        if step % 100 == 0 || step == config.total_steps {
            trajectory.steps.push(StepRecord {
                step,
                lr,
                kl_bits: 0.0,
                nll_bits: loss_bits,
                acc: correct as f64 / config.batch as f64,
            });
        }
    }
    (weights, trajectory)
}

/// Variational training: `kl_coefficient * KL_bits + mean minibatch
/// NLL_bits`, with the posterior, the adaptive prior, and the mixture
/// program-column posterior all trained by Adam.
pub fn train_variational_transformer(
    init: VarTransformer,
    num_layers: usize,
    train: &[Example],
    config: &TrainConfig,
) -> (VarTransformer, Trajectory) {
    let mut vt = init;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let schedule = Schedule::new(config.lr, config.warmup_steps, config.total_steps);
    let mut params = vt.param_arrays();
    let shapes: Vec<(usize, usize)> = params.iter().map(|a| a.dim()).collect();
    let mut adam = AdamState::new(&shapes);
    let mut trajectory = Trajectory::default();

    for step in 1..=config.total_steps {
        let batch = sample_batch(train, config.batch, &mut rng);
        let noise = draw_step_noise(&vt, config.mc_weight_samples, &mut rng);
        let shards = shard(&batch, rayon::current_num_threads().max(1));
        let denom = (config.batch * config.mc_weight_samples) as f64;

        let per_shard: Vec<(Vec<Array2<f64>>, f64, f64)> = shards
            .par_iter()
            .enumerate()
            .map(|(shard_idx, examples)| {
                let mut tape = Tape::new();
                let nodes = register_params(&mut tape, &vt);
                let mut loss = None;
                let mut kl_bits_value = 0.0;
                if shard_idx == 0 {
                    let kl_nats =
                        kl_nats_node(&mut tape, &vt, &nodes, &noise, config.gumbel_temperature);
                    let kl_bits = tape.mul_scalar(kl_nats, 1.0 / LN_2);
                    kl_bits_value = tape.scalar_value(kl_bits);
                    loss = Some(tape.mul_scalar(kl_bits, config.kl_coefficient));
                }
                let mut nll_sum = None;
                for s in 0..config.mc_weight_samples {
                    let w = sample_weight_nodes(
                        &mut tape,
                        &vt,
                        &nodes,
                        &noise,
                        s,
                        config.gumbel_temperature,
                    );
                    for (ids_batch, labels) in length_groups(examples, &vt.dims) {
                        let refs: Vec<&[usize]> = ids_batch.iter().map(|v| v.as_slice()).collect();
                        let nll = batch_nll(&mut tape, &w, &refs, &labels, num_layers);
                        nll_sum = Some(match nll_sum {
                            Some(t) => tape.add(t, nll),
                            None => nll,
                        });
                    }
                }
                // Each shard's term is its share of the batch mean, so the
                // shard values (and gradients) sum to the full objective.
                let mut nll_bits_value = 0.0;
                if let Some(nll_sum) = nll_sum {
                    let nll_term = tape.mul_scalar(nll_sum, 1.0 / (denom * LN_2));
                    nll_bits_value = tape.scalar_value(nll_term);
                    loss = Some(match loss {
                        Some(l) => tape.add(l, nll_term),
                        None => nll_term,
                    });
                }
                let loss = loss.expect("shard has at least the KL or data term");
                let grads = tape.backward(loss);
                (
                    nodes
                        .order
                        .iter()
                        .zip(&shapes)
                        .map(|(id, s)| grads.get_or_zero(*id, *s))
                        .collect(),
                    kl_bits_value,
                    nll_bits_value,
                )
            })
            .collect();

        let mut grad_arrays: Vec<Array2<f64>> = shapes.iter().map(|s| Array2::zeros(*s)).collect();
        let mut kl_bits = 0.0;
        let mut nll_bits = 0.0;
        for (g, k, n) in per_shard {
            for (acc, part) in grad_arrays.iter_mut().zip(g) {
                *acc += &part;
            }
            kl_bits += k;
            nll_bits += n;
        }
        let loss_value = config.kl_coefficient * kl_bits + nll_bits;
        if !loss_value.is_finite() {
            trajectory.diverged = true;
            break;
        }
        let lr = schedule.lr(step);
        adam.step(&mut params, &grad_arrays, lr);
        vt.set_param_arrays(&params);

        if step % 100 == 0 || step == config.total_steps {
            trajectory.steps.push(StepRecord {
                step,
                lr,
                kl_bits,
                nll_bits,
                acc: f64::NAN,
            });
        }
    }
    (vt, trajectory)
}

/// Full evaluation of a variational snapshot: MC KL over the bundle plus
/// NLL/accuracy at the posterior-mean weights. `full_train_size` scales
/// the per-example NLL up to the complete dataset.
pub fn eval_variational_transformer(
    vt: &VarTransformer,
    num_layers: usize,
    train_eval: &[Example],
    ood_eval: &[Example],
    full_train_size: usize,
    config: &TrainConfig,
) -> CodelengthReport {
    let bundle = vt.to_bundle();
    let est = mc_kl(&bundle, config.eval_mc_samples, config.seed);
    let weights = vt.mean_weights();
    let (nll_eval, train_acc) = eval_mle_transformer(&weights, num_layers, train_eval);
    let nll_full = nll_eval / train_eval.len().max(1) as f64 * full_train_size as f64;
    let ood_acc = if ood_eval.is_empty() {
        None
    } else {
        Some(eval_mle_transformer(&weights, num_layers, ood_eval).1)
    };
    CodelengthReport::new(bundle.prior_cost_bits, est.kl_bits, nll_full, train_acc, ood_acc)
        .with_mc(est.stderr_bits, est.samples, config.seed)
}
