//! Differentiable mirror of the numeric Transformer forward pass.

use super::tape::{NodeId, Tape};
use crate::compile::{Normalization, TransformerWeights, WeightDims};
use ndarray::{Array2, Axis};

/// Node handles for one weight bundle. Vectors are single-row nodes.
#[derive(Debug, Clone)]
pub struct WeightNodes {
    pub dims: WeightDims,
    pub normalization: Normalization,
    pub embeddings: NodeId,
    pub wq: Vec<NodeId>,
    pub wk: Vec<NodeId>,
    pub wv: Vec<NodeId>,
    pub wo: Vec<NodeId>,
    pub rel_bias: NodeId,
    pub w1: NodeId,
    pub b1: NodeId,
    pub w2: NodeId,
    pub b2: NodeId,
    pub w_out: NodeId,
}

impl WeightNodes {
    /// Registers every array of `weights` as a leaf. The returned node list
    /// matches `TransformerWeights::named_arrays` order.
    pub fn leaves_from(tape: &mut Tape, weights: &TransformerWeights) -> (Self, Vec<NodeId>) {
        let to2 = |v: &ndarray::Array1<f64>| v.clone().insert_axis(Axis(0));
        let mut order = Vec::new();
        let embeddings = tape.leaf(weights.embeddings.clone());
        order.push(embeddings);
        let mut wq = Vec::new();
        let mut wk = Vec::new();
        let mut wv = Vec::new();
        let mut wo = Vec::new();
        for a in &weights.wq {
            wq.push(tape.leaf(a.clone()));
        }
        for a in &weights.wk {
            wk.push(tape.leaf(a.clone()));
        }
        for a in &weights.wv {
            wv.push(tape.leaf(a.clone()));
        }
        for a in &weights.wo {
            wo.push(tape.leaf(a.clone()));
        }
        order.extend(wq.iter().chain(&wk).chain(&wv).chain(&wo));
        let rel_bias = tape.leaf(weights.rel_bias.clone());
        let w1 = tape.leaf(weights.w1.clone());
        let b1 = tape.leaf(to2(&weights.b1));
        let w2 = tape.leaf(weights.w2.clone());
        let b2 = tape.leaf(to2(&weights.b2));
        let w_out = tape.leaf(weights.w_out.clone());
        order.extend([rel_bias, w1, b1, w2, b2, w_out]);
        (
            WeightNodes {
                dims: weights.dims,
                normalization: weights.normalization,
                embeddings,
                wq,
                wk,
                wv,
                wo,
                rel_bias,
                w1,
                b1,
                w2,
                b2,
                w_out,
            },
            order,
        )
    }
}

fn maybe_tanh(tape: &mut Tape, x: NodeId, normalization: Normalization) -> NodeId {
    match normalization {
        Normalization::Tanh => tape.tanh(x),
        Normalization::None => x,
    }
}

/// Forward pass over token ids; returns the `(1, num_outputs)` logits node
/// read at the SEP position.
pub fn forward_nodes(
    tape: &mut Tape,
    weights: &WeightNodes,
    ids: &[usize],
    num_layers: usize,
) -> NodeId {
    let mut x = tape.gather_rows(weights.embeddings, ids.to_vec());
    for _ in 0..num_layers {
        let mut attn: Option<NodeId> = None;
        for h in 0..weights.dims.num_heads {
            let q = tape.matmul(x, weights.wq[h]);
            let k = tape.matmul(x, weights.wk[h]);
            let scores = tape.matmul_t(q, k);
            let scores = tape.add_rel_bias(scores, weights.rel_bias, h);
            let probs = tape.softmax_rows(scores);
            let v = tape.matmul(x, weights.wv[h]);
            let mixed = tape.matmul(probs, v);
            let out = tape.matmul(mixed, weights.wo[h]);
            attn = Some(match attn {
                Some(a) => tape.add(a, out),
                None => out,
            });
        }
        x = tape.add(x, attn.expect("at least one head"));
        x = maybe_tanh(tape, x, weights.normalization);

        let pre = tape.matmul(x, weights.w1);
        let pre = tape.add_row_broadcast(pre, weights.b1);
        let hidden = tape.relu(pre);
        let mlp = tape.matmul(hidden, weights.w2);
        let mlp = tape.add_row_broadcast(mlp, weights.b2);
        x = tape.add(x, mlp);
        x = maybe_tanh(tape, x, weights.normalization);
    }
    let sep = ids.iter().position(|id| *id == crate::transformer::SEP_ID).unwrap_or(0);
    let state = tape.row(x, sep);
    tape.matmul_t(state, weights.w_out)
}

/// Batched forward over same-length sequences: token id rows are stacked
/// into one `(count * len, d)` stream so projections and the MLP run as
/// single matmuls; attention mixes within each sequence's block.
/// Returns the `(count, num_outputs)` logits at each sequence's SEP.
pub fn forward_nodes_batch(
    tape: &mut Tape,
    weights: &WeightNodes,
    ids_batch: &[&[usize]],
    num_layers: usize,
) -> NodeId {
    let count = ids_batch.len();
    assert!(count > 0);
    let len = ids_batch[0].len();
    assert!(ids_batch.iter().all(|ids| ids.len() == len));
    let flat_ids: Vec<usize> = ids_batch.iter().flat_map(|ids| ids.iter().copied()).collect();
    let mut x = tape.gather_rows(weights.embeddings, flat_ids);
    for _ in 0..num_layers {
        let mut attn: Option<NodeId> = None;
        for h in 0..weights.dims.num_heads {
            let q = tape.matmul(x, weights.wq[h]);
            let k = tape.matmul(x, weights.wk[h]);
            let v = tape.matmul(x, weights.wv[h]);
            let mut mixed_parts = Vec::with_capacity(count);
            for s in 0..count {
                let qs = tape.rows(q, s * len, len);
                let ks = tape.rows(k, s * len, len);
                let vs = tape.rows(v, s * len, len);
                let scores = tape.matmul_t(qs, ks);
                let scores = tape.add_rel_bias(scores, weights.rel_bias, h);
                let probs = tape.softmax_rows(scores);
                mixed_parts.push(tape.matmul(probs, vs));
            }
            let mixed = tape.concat_rows(&mixed_parts);
            let out = tape.matmul(mixed, weights.wo[h]);
            attn = Some(match attn {
                Some(a) => tape.add(a, out),
                None => out,
            });
        }
        x = tape.add(x, attn.expect("at least one head"));
        x = maybe_tanh(tape, x, weights.normalization);

        let pre = tape.matmul(x, weights.w1);
        let pre = tape.add_row_broadcast(pre, weights.b1);
        let hidden = tape.relu(pre);
        let mlp = tape.matmul(hidden, weights.w2);
        let mlp = tape.add_row_broadcast(mlp, weights.b2);
        x = tape.add(x, mlp);
        x = maybe_tanh(tape, x, weights.normalization);
    }
    let sep_rows: Vec<usize> = ids_batch
        .iter()
        .enumerate()
        .map(|(s, ids)| {
            s * len
                + ids
                    .iter()
                    .position(|id| *id == crate::transformer::SEP_ID)
                    .unwrap_or(0)
        })
        .collect();
    let states = tape.gather_rows(x, sep_rows);
    tape.matmul_t(states, weights.w_out)
}

/// Summed NLL (nats) over a same-length batch.
pub fn batch_nll(
    tape: &mut Tape,
    weights: &WeightNodes,
    ids_batch: &[&[usize]],
    labels: &[usize],
    num_layers: usize,
) -> NodeId {
    let logits = forward_nodes_batch(tape, weights, ids_batch, num_layers);
    let lse = tape.logsumexp_rows(logits);
    let picked = tape.pick_columns(logits, labels.to_vec());
    let diff = tape.sub(lse, picked);
    tape.sum_all(diff)
}

/// Negative log likelihood (nats) of `label` under the SEP logits.
pub fn sequence_nll(
    tape: &mut Tape,
    weights: &WeightNodes,
    ids: &[usize],
    label: usize,
    num_layers: usize,
) -> NodeId {
    let logits = forward_nodes(tape, weights, ids, num_layers);
    let lse = tape.logsumexp_rows(logits);
    let picked = tape.pick_columns(logits, vec![label]);
    tape.sub(lse, picked)
}

/// Random He-style weights for training from scratch: fan-in scaled normal
/// weight matrices, zero biases and relative-position biases.
pub fn he_random_weights(
    dims: WeightDims,
    normalization: Normalization,
    rng: &mut impl rand::Rng,
) -> TransformerWeights {
    use rand_distr::{Distribution, StandardNormal};
    let mut w = TransformerWeights::zeros(dims, normalization);
    let mut fill = |a: &mut Array2<f64>| {
        let fan_in = a.nrows() as f64;
        let std = (2.0 / fan_in).sqrt();
        for v in a.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v = std * z;
        }
    };
    fill(&mut w.embeddings);
    for h in 0..dims.num_heads {
        fill(&mut w.wq[h]);
        fill(&mut w.wk[h]);
        fill(&mut w.wv[h]);
        fill(&mut w.wo[h]);
    }
    fill(&mut w.w1);
    fill(&mut w.w2);
    fill(&mut w.w_out);
    // b1, b2, rel_bias stay zero.
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compile::{compile, CompilerOptions};
    use crate::symprog::build_parity_program;
    use crate::transformer::{forward, preprocess, ModelConfig};
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    #[test]
    fn tape_forward_matches_eval_forward_on_compiled_weights() {
        let program = build_parity_program();
        let weights = compile(&program, &CompilerOptions::default()).unwrap();
        let ids = preprocess(&[1, 0, 1, 1], &weights.dims).unwrap();
        let fast = forward(&weights, &ModelConfig::layers(7), &ids).unwrap();
        let mut tape = Tape::new();
        let (nodes, _) = WeightNodes::leaves_from(&mut tape, &weights);
        let logits = forward_nodes(&mut tape, &nodes, &ids, 7);
        for (a, b) in tape.value(logits).iter().zip(&fast.logits) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn tape_forward_matches_eval_forward_on_random_weights() {
        let dims = crate::compile::WeightDims {
            model_dim: 8,
            hidden_dim: 16,
            num_heads: 2,
            d_head: 4,
            input_range: 2,
            num_prompt_rows: 3,
            num_outputs: 2,
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let weights = he_random_weights(dims, Normalization::Tanh, &mut rng);
        let ids = preprocess(&[0, 1, 1], &dims).unwrap();
        let fast = forward(&weights, &ModelConfig::layers(3), &ids).unwrap();
        let mut tape = Tape::new();
        let (nodes, _) = WeightNodes::leaves_from(&mut tape, &weights);
        let logits = forward_nodes(&mut tape, &nodes, &ids, 3);
        for (a, b) in tape.value(logits).iter().zip(&fast.logits) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn transformer_nll_gradient_matches_finite_differences() {
        // 2-layer tanh-normalized toy model, every weight checked.
        let dims = crate::compile::WeightDims {
            model_dim: 6,
            hidden_dim: 8,
            num_heads: 2,
            d_head: 3,
            input_range: 2,
            num_prompt_rows: 1,
            num_outputs: 2,
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let weights = he_random_weights(dims, Normalization::Tanh, &mut rng);
        let ids = preprocess(&[1, 0], &dims).unwrap();
        let label = 1usize;

        let nll_of = |w: &TransformerWeights| -> f64 {
            let mut tape = Tape::new();
            let (nodes, _) = WeightNodes::leaves_from(&mut tape, w);
            let nll = sequence_nll(&mut tape, &nodes, &ids, label, 2);
            tape.scalar_value(nll)
        };

        let mut tape = Tape::new();
        let (nodes, order) = WeightNodes::leaves_from(&mut tape, &weights);
        let nll = sequence_nll(&mut tape, &nodes, &ids, label, 2);
        let grads = tape.backward(nll);

        let flat = weights.to_flat();
        let eps = 1e-4;
        // flatten the per-leaf gradients in named order
        let mut grad_flat = Vec::with_capacity(flat.len());
        for (id, (_, shape, data)) in order.iter().zip(weights.named_arrays()) {
            let rows = shape[0];
            let cols = if shape.len() > 1 { shape[1] } else { shape[0] };
            let shape2 = if shape.len() > 1 { (rows, cols) } else { (1, rows) };
            let g = grads.get_or_zero(*id, shape2);
            grad_flat.extend(g.iter().cloned());
            let _ = data;
        }

        let mut checked = 0usize;
        for i in (0..flat.len()).step_by(7) {
            let mut wp = weights.clone();
            let mut fp = flat.clone();
            fp[i] += eps;
            wp.assign_flat(&fp);
            let mut wm = weights.clone();
            let mut fm = flat.clone();
            fm[i] -= eps;
            wm.assign_flat(&fm);
            let fd = (nll_of(&wp) - nll_of(&wm)) / (2.0 * eps);
            let ad = grad_flat[i];
            let denom = fd.abs().max(ad.abs()).max(1e-8);
            assert!(
                (fd - ad).abs() / denom < 1e-4,
                "weight {i}: fd {fd} vs ad {ad}"
            );
            checked += 1;
        }
        assert!(checked > 40);
    }
}
