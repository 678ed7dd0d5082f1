//! Numeric Transformer-encoder forward pass for compiled weights.
//!
//! Shared layer block, bidirectional attention with per-head scalar
//! relative-position biases at offsets -1/+1, per-head output projections
//! summed into the residual, ReLU MLP, and elementwise tanh normalization
//! (when enabled) after each sublayer's residual addition. The output
//! logits are the output projection of the SEP position's final state.

use crate::compile::{Normalization, TransformerWeights, WeightDims};
use ndarray::{Array1, Array2};
use thiserror::Error;

/// Token ids into the embedding table.
pub const START_ID: usize = 0;
pub const SEP_ID: usize = 1;
pub const END_ID: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub num_layers: usize,
    /// Keep the residual stream after every sublayer.
    pub capture_trace: bool,
}

impl ModelConfig {
    pub fn layers(num_layers: usize) -> Self {
        ModelConfig {
            num_layers,
            capture_trace: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForwardResult {
    pub logits: Vec<f64>,
    /// Residual stream after each sublayer when tracing is enabled.
    pub trace: Option<Vec<Array2<f64>>>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ForwardError {
    #[error("token {token} outside the input range {range}")]
    BadToken { token: u8, range: usize },
    #[error("token id {id} outside the embedding table ({rows} rows)")]
    BadTokenId { id: usize, rows: usize },
    #[error("non-finite activation at layer {layer}")]
    NumericError { layer: usize },
}

/// Builds the token id sequence `START, p_1.., p_rs, SEP, x.., END`.
pub fn preprocess(input: &[u8], dims: &WeightDims) -> Result<Vec<usize>, ForwardError> {
    let mut ids = Vec::with_capacity(input.len() + dims.num_prompt_rows + 3);
    ids.push(START_ID);
    for p in 0..dims.num_prompt_rows {
        ids.push(dims.prompt_row_start() + p);
    }
    ids.push(SEP_ID);
    for t in input {
        if *t as usize >= dims.input_range {
            return Err(ForwardError::BadToken {
                token: *t,
                range: dims.input_range,
            });
        }
        ids.push(3 + *t as usize);
    }
    ids.push(END_ID);
    Ok(ids)
}

fn softmax_rows(scores: &mut Array2<f64>) {
    for mut row in scores.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

fn apply_norm(x: &mut Array2<f64>, normalization: Normalization) {
    if normalization == Normalization::Tanh {
        x.mapv_inplace(f64::tanh);
    }
}

/// One shared layer block applied in place.
fn layer_block(x: &mut Array2<f64>, weights: &TransformerWeights) {
    let n = x.nrows();
    let mut attn = Array2::<f64>::zeros(x.raw_dim());
    for h in 0..weights.dims.num_heads {
        let q = x.dot(&weights.wq[h]);
        let k = x.dot(&weights.wk[h]);
        let mut scores = q.dot(&k.t());
        let bias_left = weights.rel_bias[[h, 0]];
        let bias_right = weights.rel_bias[[h, 1]];
        if bias_left != 0.0 || bias_right != 0.0 {
            for i in 0..n {
                if i >= 1 {
                    scores[[i, i - 1]] += bias_left;
                }
                if i + 1 < n {
                    scores[[i, i + 1]] += bias_right;
                }
            }
        }
        softmax_rows(&mut scores);
        let mixed = scores.dot(&x.dot(&weights.wv[h]));
        attn = attn + mixed.dot(&weights.wo[h]);
    }
    *x += &attn;
    apply_norm(x, weights.normalization);

    let mut hidden = x.dot(&weights.w1);
    for mut row in hidden.rows_mut() {
        row += &weights.b1;
        row.mapv_inplace(|v| v.max(0.0));
    }
    let mlp = hidden.dot(&weights.w2);
    *x += &mlp;
    for mut row in x.rows_mut() {
        row += &weights.b2;
    }
    apply_norm(x, weights.normalization);
}

/// Runs the forward pass over a token id sequence.
pub fn forward(
    weights: &TransformerWeights,
    config: &ModelConfig,
    ids: &[usize],
) -> Result<ForwardResult, ForwardError> {
    let rows = weights.embeddings.nrows();
    for id in ids {
        if *id >= rows {
            return Err(ForwardError::BadTokenId { id: *id, rows });
        }
    }
    let mut x = Array2::zeros((ids.len(), weights.dims.model_dim));
    for (i, id) in ids.iter().enumerate() {
        x.row_mut(i).assign(&weights.embeddings.row(*id));
    }
    let mut trace = config.capture_trace.then(Vec::new);

    for layer in 0..config.num_layers {
        layer_block(&mut x, weights);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(ForwardError::NumericError { layer });
        }
        if let Some(t) = trace.as_mut() {
            t.push(x.clone());
        }
    }

    let sep = ids.iter().position(|id| *id == SEP_ID).unwrap_or(0);
    let state: Array1<f64> = x.row(sep).to_owned();
    let logits = weights.w_out.dot(&state).to_vec();
    Ok(ForwardResult { logits, trace })
}

/// The model function `input tokens -> logits`: preprocessing composed
/// with the forward pass.
pub struct CompiledModel<'w> {
    pub weights: &'w TransformerWeights,
    pub config: ModelConfig,
}

impl CompiledModel<'_> {
    pub fn new(weights: &TransformerWeights, num_layers: usize) -> CompiledModel<'_> {
        CompiledModel {
            weights,
            config: ModelConfig::layers(num_layers),
        }
    }

    pub fn eval(&self, input: &[u8]) -> Result<Vec<f64>, ForwardError> {
        let ids = preprocess(input, &self.weights.dims)?;
        Ok(forward(self.weights, &self.config, &ids)?.logits)
    }
}

/// Index of the largest logit.
pub fn argmax(logits: &[f64]) -> usize {
    logits
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Softmax probabilities of a logit vector.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|v| v / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compile::{compile, zmap, CompilerOptions, TargetDims};
    use crate::ptm::{self, toy, ProgramBits, ResourceBound};
    use crate::symprog::{
        build_copy_last_program, build_parity_program, interpret, prefix_layers_for_steps,
        standard_tokens,
    };

    #[test]
    fn preprocess_layout_matches_expected() {
        let dims = crate::compile::WeightDims {
            model_dim: 4,
            hidden_dim: 1,
            num_heads: 1,
            d_head: 1,
            input_range: 2,
            num_prompt_rows: 2,
            num_outputs: 1,
        };
        // x = "01", r_s = 2 -> START p1 p2 SEP t0 t1 END
        let ids = preprocess(&[0, 1], &dims).unwrap();
        assert_eq!(ids, vec![0, 5, 6, 1, 3, 4, 2]);
        let empty = preprocess(&[], &dims).unwrap();
        assert_eq!(empty, vec![0, 5, 6, 1, 2]);
        let no_prompts = crate::compile::WeightDims {
            num_prompt_rows: 0,
            ..dims
        };
        assert_eq!(preprocess(&[1], &no_prompts).unwrap(), vec![0, 1, 4, 2]);
        assert!(preprocess(&[7], &dims).is_err());
    }

    #[test]
    fn zero_weights_give_equal_logits() {
        let dims = crate::compile::WeightDims {
            model_dim: 6,
            hidden_dim: 4,
            num_heads: 2,
            d_head: 3,
            input_range: 2,
            num_prompt_rows: 0,
            num_outputs: 3,
        };
        let w = crate::compile::TransformerWeights::zeros(dims, crate::compile::Normalization::Tanh);
        let model = CompiledModel::new(&w, 3);
        let logits = model.eval(&[0, 1]).unwrap();
        assert!(logits.iter().all(|v| *v == logits[0]));
        let p = softmax(&logits);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn compiled_parity_agrees_with_interpreter_exhaustively_to_length_8() {
        let program = build_parity_program();
        let weights = compile(&program, &CompilerOptions::default()).unwrap();
        for len in 0..=8usize {
            for bits in 0..(1u32 << len) {
                let input: Vec<u8> = (0..len).map(|i| ((bits >> i) & 1) as u8).collect();
                let layers = len + 2;
                let model = CompiledModel::new(&weights, layers);
                let got = model.eval(&input).unwrap();
                let want = interpret(&program, &standard_tokens(&input, 0), layers)
                    .unwrap()
                    .outputs;
                assert_eq!(argmax(&got), argmax(&want), "input {input:?}");
                for (g, w) in got.iter().zip(&want) {
                    assert!((g - w).abs() < 1e-4, "logit gap {g} vs {w} on {input:?}");
                }
            }
        }
    }

    #[test]
    fn compiled_parity_42_layers_on_1011_is_odd() {
        let program = build_parity_program();
        let weights = compile(&program, &CompilerOptions::default()).unwrap();
        let model = CompiledModel::new(&weights, 42);
        let logits = model.eval(&[1, 0, 1, 1]).unwrap();
        assert_eq!(argmax(&logits), 1);
    }

    #[test]
    fn padding_preserves_the_model_function() {
        let program = build_copy_last_program();
        let opts = CompilerOptions::default();
        let small = compile(&program, &opts).unwrap();
        let padded = crate::compile::pad(
            &small,
            TargetDims {
                model_dim: 128,
                hidden_dim: 512,
                num_heads: 3,
                d_head: None,
                num_prompt_rows: Some(4),
            },
        )
        .unwrap();
        for input in [vec![], vec![1], vec![0, 1, 0], vec![1, 1, 0, 1]] {
            let layers = input.len() + 2;
            let a = CompiledModel::new(&small, layers).eval(&input).unwrap();
            let b = CompiledModel::new(&padded, layers).eval(&input).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-9, "{x} vs {y} on {input:?}");
            }
        }
    }

    #[test]
    fn zmap_weights_match_vm_decode() {
        let cases: Vec<(ptm::PrefixTmSpec, Vec<&str>)> = vec![
            (toy::sign_select(), vec!["0", "1"]),
            (toy::prog_counter(), vec!["0", "10", "110"]),
            (toy::work_echo(), vec!["01", "11"]),
        ];
        let bound = ResourceBound::new(20, 8);
        for (tm, zs) in &cases {
            for z in zs {
                let z = ProgramBits::parse(z).unwrap();
                let weights = zmap(tm, &bound, &z, &CompilerOptions::plain()).unwrap();
                for input in [&[][..], &[0][..], &[0, 0, 0][..]] {
                    let outcome = ptm::run(tm, &z, input, &bound);
                    let info = outcome.halted().expect("toy machines halt");
                    let want: Vec<f64> = ptm::decode_output_tapes(&info.output_tapes)
                        .unwrap()
                        .iter()
                        .map(|q| q.value())
                        .collect();
                    let layers = prefix_layers_for_steps(info.steps);
                    let got = CompiledModel::new(&weights, layers).eval(input).unwrap();
                    for (g, w) in got.iter().zip(&want) {
                        assert!(
                            (g - w).abs() < 1e-4,
                            "z={z} input={input:?}: got {g}, want {w}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn zmap_sign_flip_gives_opposite_readouts() {
        let tm = toy::sign_select();
        let bound = ResourceBound::new(10, 6);
        let plus = zmap(&tm, &bound, &ProgramBits::parse("0").unwrap(), &CompilerOptions::plain())
            .unwrap();
        let minus = zmap(&tm, &bound, &ProgramBits::parse("1").unwrap(), &CompilerOptions::plain())
            .unwrap();
        let layers = prefix_layers_for_steps(3);
        let a = CompiledModel::new(&plus, layers).eval(&[0]).unwrap();
        let b = CompiledModel::new(&minus, layers).eval(&[0]).unwrap();
        assert!((a[0] - 1.0).abs() < 1e-4, "got {}", a[0]);
        assert!((b[0] + 1.0).abs() < 1e-4, "got {}", b[0]);
    }

    #[test]
    fn shared_layer_extension_equals_incremental_evaluation() {
        let program = build_parity_program();
        let weights = compile(&program, &CompilerOptions::default()).unwrap();
        let ids = preprocess(&[1, 0, 1], &weights.dims).unwrap();
        let five = forward(
            &weights,
            &ModelConfig {
                num_layers: 5,
                capture_trace: true,
            },
            &ids,
        )
        .unwrap();
        let six = forward(
            &weights,
            &ModelConfig {
                num_layers: 6,
                capture_trace: true,
            },
            &ids,
        )
        .unwrap();
        let five_trace = five.trace.unwrap();
        let six_trace = six.trace.unwrap();
        // The first five layers agree exactly; layer six is one more
        // application of the shared block.
        for (a, b) in five_trace.iter().zip(six_trace.iter()) {
            assert_eq!(a, b);
        }
        let mut extended = five_trace.last().unwrap().clone();
        super::layer_block(&mut extended, &weights);
        assert_eq!(&extended, six_trace.last().unwrap());
    }

    #[test]
    fn noise_robustness_on_parity() {
        use rand::prelude::*;
        let program = build_parity_program();
        let weights = compile(&program, &CompilerOptions::default()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut noisy = weights.clone();
        let mut flat = noisy.to_flat();
        for v in &mut flat {
            *v += rng.gen_range(-0.01..0.01);
        }
        noisy.assign_flat(&flat);
        for len in 0..=6usize {
            for bits in 0..(1u32 << len) {
                let input: Vec<u8> = (0..len).map(|i| ((bits >> i) & 1) as u8).collect();
                let layers = len + 2;
                let clean = CompiledModel::new(&weights, layers).eval(&input).unwrap();
                let bent = CompiledModel::new(&noisy, layers).eval(&input).unwrap();
                assert_eq!(argmax(&clean), argmax(&bent), "input {input:?}");
            }
        }
    }
}
