//! Compilation of symbolic programs to Transformer weights.
//!
//! The compiled model uses one shared layer block: attention with per-head
//! scalar relative-position biases at offsets -1/+1, a two-layer ReLU MLP,
//! and either tanh normalization after each sublayer's residual add or no
//! normalization at all. Programs with numerical variables require the
//! plain (no normalization) backend; categorical/binary programs compile
//! under either.

mod emit;
mod layout;
mod zmap;

pub use emit::compile;
pub use layout::{encode_value, kind_width, Block, Layout};
pub use zmap::{prompt_embedding_rows, zmap};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Residual-stream normalization applied after each sublayer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    Tanh,
    None,
}

/// Target shape to pad compiled weights up to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetDims {
    pub model_dim: usize,
    pub hidden_dim: usize,
    pub num_heads: usize,
    /// Defaults to `model_dim / num_heads`.
    pub d_head: Option<usize>,
    /// Grows the prompt region of the embedding table.
    pub num_prompt_rows: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompilerOptions {
    /// Multiplier saturating value-setting MLP outputs (tanh backend).
    pub saturation_scale: f64,
    /// Multiplier on attention match scores approximating hard attention.
    pub attention_sharpness: f64,
    pub normalization: Normalization,
    /// Number of prompt token rows in the embedding table.
    pub num_prompt_rows: usize,
    /// Pad up to these dimensions after compiling.
    pub target: Option<TargetDims>,
}

impl Default for CompilerOptions {
    fn default() -> Self {
        CompilerOptions {
            saturation_scale: 100.0,
            attention_sharpness: 100.0,
            normalization: Normalization::Tanh,
            num_prompt_rows: 0,
            target: None,
        }
    }
}

impl CompilerOptions {
    pub fn plain() -> Self {
        CompilerOptions {
            normalization: Normalization::None,
            ..CompilerOptions::default()
        }
    }
}

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("program failed validation: {0:?}")]
    InvalidProgram(Vec<String>),
    #[error("scale parameters must be greater than 1, got {0}")]
    BadScale(f64),
    #[error("target {what} = {got} below required minimum {required}")]
    DimsTooSmall {
        what: &'static str,
        got: usize,
        required: usize,
    },
    #[error("numerical variables require the plain backend (no normalization)")]
    NumericalNeedsPlain,
    #[error("output `{0}` must be a variable")]
    OutputNotVariable(String),
    #[error("program initializes prompt token {index} but only {rows} prompt rows requested")]
    MissingPromptRow { index: usize, rows: usize },
    #[error("weights container is malformed: {0}")]
    BadContainer(String),
}

/// Shapes of a weight bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightDims {
    pub model_dim: usize,
    pub hidden_dim: usize,
    pub num_heads: usize,
    pub d_head: usize,
    /// Number of input vocabulary tokens.
    pub input_range: usize,
    /// Number of prompt token rows.
    pub num_prompt_rows: usize,
    /// Number of output logits.
    pub num_outputs: usize,
}

impl WeightDims {
    pub fn vocab_rows(&self) -> usize {
        3 + self.input_range + self.num_prompt_rows
    }

    /// Embedding row index of the first prompt token.
    pub fn prompt_row_start(&self) -> usize {
        3 + self.input_range
    }
}

/// Shared-layer Transformer weight bundle.
///
/// Embedding rows are ordered `START, SEP, END, vocabulary, prompts`. All
/// layers reuse the same attention and MLP weights; the output projection
/// reads the final residual stream at the SEP position.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerWeights {
    pub dims: WeightDims,
    pub normalization: Normalization,
    pub embeddings: Array2<f64>,
    pub wq: Vec<Array2<f64>>,
    pub wk: Vec<Array2<f64>>,
    pub wv: Vec<Array2<f64>>,
    pub wo: Vec<Array2<f64>>,
    /// Per-head scalar attention biases for relative offsets [-1, +1].
    pub rel_bias: Array2<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w_out: Array2<f64>,
}

impl TransformerWeights {
    /// All-zero weights with the given shapes.
    pub fn zeros(dims: WeightDims, normalization: Normalization) -> Self {
        TransformerWeights {
            dims,
            normalization,
            embeddings: Array2::zeros((dims.vocab_rows(), dims.model_dim)),
            wq: vec![Array2::zeros((dims.model_dim, dims.d_head)); dims.num_heads],
            wk: vec![Array2::zeros((dims.model_dim, dims.d_head)); dims.num_heads],
            wv: vec![Array2::zeros((dims.model_dim, dims.d_head)); dims.num_heads],
            wo: vec![Array2::zeros((dims.d_head, dims.model_dim)); dims.num_heads],
            rel_bias: Array2::zeros((dims.num_heads, 2)),
            w1: Array2::zeros((dims.model_dim, dims.hidden_dim)),
            b1: Array1::zeros(dims.hidden_dim),
            w2: Array2::zeros((dims.hidden_dim, dims.model_dim)),
            b2: Array1::zeros(dims.model_dim),
            w_out: Array2::zeros((dims.num_outputs, dims.model_dim)),
        }
    }

    /// Token labels matching the embedding row order.
    pub fn row_labels(&self) -> Vec<String> {
        let mut labels = vec!["START".to_string(), "SEP".to_string(), "END".to_string()];
        for v in 0..self.dims.input_range {
            labels.push(format!("v{v}"));
        }
        for p in 0..self.dims.num_prompt_rows {
            labels.push(format!("p{}", p + 1));
        }
        labels
    }

    /// Named views of every weight array, in a stable order.
    pub fn named_arrays(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        fn push2<'a>(
            out: &mut Vec<(String, Vec<usize>, &'a [f64])>,
            name: String,
            a: &'a Array2<f64>,
        ) {
            out.push((
                name,
                a.shape().to_vec(),
                a.as_slice().expect("standard layout"),
            ));
        }
        let mut out: Vec<(String, Vec<usize>, &[f64])> = Vec::new();
        push2(&mut out, "embeddings".into(), &self.embeddings);
        for (i, a) in self.wq.iter().enumerate() {
            push2(&mut out, format!("wq_{i}"), a);
        }
        for (i, a) in self.wk.iter().enumerate() {
            push2(&mut out, format!("wk_{i}"), a);
        }
        for (i, a) in self.wv.iter().enumerate() {
            push2(&mut out, format!("wv_{i}"), a);
        }
        for (i, a) in self.wo.iter().enumerate() {
            push2(&mut out, format!("wo_{i}"), a);
        }
        push2(&mut out, "rel_bias".into(), &self.rel_bias);
        push2(&mut out, "w1".into(), &self.w1);
        out.push((
            "b1".into(),
            vec![self.b1.len()],
            self.b1.as_slice().unwrap(),
        ));
        push2(&mut out, "w2".into(), &self.w2);
        out.push((
            "b2".into(),
            vec![self.b2.len()],
            self.b2.as_slice().unwrap(),
        ));
        push2(&mut out, "w_out".into(), &self.w_out);
        out
    }

    /// Total number of weights.
    pub fn num_weights(&self) -> usize {
        self.named_arrays().iter().map(|(_, _, d)| d.len()).sum()
    }

    /// Number of weights outside the embedding table.
    pub fn num_non_embedding_weights(&self) -> usize {
        self.named_arrays()
            .iter()
            .filter(|(n, _, _)| n != "embeddings")
            .map(|(_, _, d)| d.len())
            .sum()
    }

    /// Replaces array contents from a flat slice in `named_arrays` order.
    pub fn assign_flat(&mut self, flat: &[f64]) {
        let mut offset = 0usize;
        let mut arrays: Vec<&mut [f64]> = Vec::new();
        arrays.push(self.embeddings.as_slice_mut().unwrap());
        for a in &mut self.wq {
            arrays.push(a.as_slice_mut().unwrap());
        }
        for a in &mut self.wk {
            arrays.push(a.as_slice_mut().unwrap());
        }
        for a in &mut self.wv {
            arrays.push(a.as_slice_mut().unwrap());
        }
        for a in &mut self.wo {
            arrays.push(a.as_slice_mut().unwrap());
        }
        arrays.push(self.rel_bias.as_slice_mut().unwrap());
        arrays.push(self.w1.as_slice_mut().unwrap());
        arrays.push(self.b1.as_slice_mut().unwrap());
        arrays.push(self.w2.as_slice_mut().unwrap());
        arrays.push(self.b2.as_slice_mut().unwrap());
        arrays.push(self.w_out.as_slice_mut().unwrap());
        for a in arrays {
            a.copy_from_slice(&flat[offset..offset + a.len()]);
            offset += a.len();
        }
        assert_eq!(offset, flat.len(), "flat weight vector length mismatch");
    }

    /// All weights flattened in `named_arrays` order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.num_weights());
        for (_, _, data) in self.named_arrays() {
            flat.extend_from_slice(data);
        }
        flat
    }
}

#[derive(Serialize, Deserialize)]
struct ContainerHeader {
    dims: WeightDims,
    normalization: Normalization,
    row_labels: Vec<String>,
    arrays: Vec<(String, Vec<usize>)>,
}

/// Serializes weights to the flat binary container: a little-endian u64
/// header length, a JSON header (dims, normalization, row labels, array
/// shapes), then all values as little-endian f64 in header order.
pub fn write_weights(weights: &TransformerWeights) -> Vec<u8> {
    let named = weights.named_arrays();
    let header = ContainerHeader {
        dims: weights.dims,
        normalization: weights.normalization,
        row_labels: weights.row_labels(),
        arrays: named.iter().map(|(n, s, _)| (n.clone(), s.clone())).collect(),
    };
    let header_bytes = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    for (_, _, data) in &named {
        for v in *data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parses the container written by [`write_weights`].
pub fn read_weights(bytes: &[u8]) -> Result<TransformerWeights, CompileError> {
    let bad = |m: &str| CompileError::BadContainer(m.to_string());
    if bytes.len() < 8 {
        return Err(bad("truncated header length"));
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    let header_end = 8 + header_len;
    if bytes.len() < header_end {
        return Err(bad("truncated header"));
    }
    let header: ContainerHeader = serde_json::from_slice(&bytes[8..header_end])
        .map_err(|e| CompileError::BadContainer(e.to_string()))?;
    let mut weights = TransformerWeights::zeros(header.dims, header.normalization);
    let expected: usize = header.arrays.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    let data = &bytes[header_end..];
    if data.len() != expected * 8 {
        return Err(bad("data section length mismatch"));
    }
    let mut flat = Vec::with_capacity(expected);
    for chunk in data.chunks_exact(8) {
        flat.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    let own_names: Vec<String> = weights.named_arrays().iter().map(|(n, _, _)| n.clone()).collect();
    let file_names: Vec<String> = header.arrays.iter().map(|(n, _)| n.clone()).collect();
    if own_names != file_names {
        return Err(bad("array name list does not match dims"));
    }
    weights.assign_flat(&flat);
    Ok(weights)
}

/// Zero-pads weights up to target dimensions; the model function is
/// unchanged on every input.
pub fn pad(weights: &TransformerWeights, target: TargetDims) -> Result<TransformerWeights, CompileError> {
    let dims = weights.dims;
    let d_head = target.d_head.unwrap_or_else(|| {
        if target.num_heads > 0 {
            target.model_dim / target.num_heads
        } else {
            0
        }
    });
    let num_prompt_rows = target.num_prompt_rows.unwrap_or(dims.num_prompt_rows);
    let checks = [
        ("model_dim", target.model_dim, dims.model_dim),
        ("hidden_dim", target.hidden_dim, dims.hidden_dim),
        ("num_heads", target.num_heads, dims.num_heads),
        ("d_head", d_head, dims.d_head),
        ("num_prompt_rows", num_prompt_rows, dims.num_prompt_rows),
    ];
    for (what, got, required) in checks {
        if got < required {
            return Err(CompileError::DimsTooSmall {
                what,
                got,
                required,
            });
        }
    }

    let new_dims = WeightDims {
        model_dim: target.model_dim,
        hidden_dim: target.hidden_dim,
        num_heads: target.num_heads,
        d_head,
        num_prompt_rows,
        ..dims
    };
    let mut out = TransformerWeights::zeros(new_dims, weights.normalization);

    // Embedding rows: specials and vocab keep their index; prompt rows
    // keep their index too (extra prompt rows append after, staying zero).
    for r in 0..dims.vocab_rows() {
        for c in 0..dims.model_dim {
            out.embeddings[[r, c]] = weights.embeddings[[r, c]];
        }
    }
    for h in 0..dims.num_heads {
        for m in 0..dims.model_dim {
            for d in 0..dims.d_head {
                out.wq[h][[m, d]] = weights.wq[h][[m, d]];
                out.wk[h][[m, d]] = weights.wk[h][[m, d]];
                out.wv[h][[m, d]] = weights.wv[h][[m, d]];
                out.wo[h][[d, m]] = weights.wo[h][[d, m]];
            }
        }
        out.rel_bias[[h, 0]] = weights.rel_bias[[h, 0]];
        out.rel_bias[[h, 1]] = weights.rel_bias[[h, 1]];
    }
    for m in 0..dims.model_dim {
        for k in 0..dims.hidden_dim {
            out.w1[[m, k]] = weights.w1[[m, k]];
            out.w2[[k, m]] = weights.w2[[k, m]];
        }
        out.b2[m] = weights.b2[m];
    }
    for k in 0..dims.hidden_dim {
        out.b1[k] = weights.b1[k];
    }
    for y in 0..dims.num_outputs {
        for m in 0..dims.model_dim {
            out.w_out[[y, m]] = weights.w_out[[y, m]];
        }
    }
    Ok(out)
}
