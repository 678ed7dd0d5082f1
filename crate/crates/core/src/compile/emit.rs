//! Weight emission.
//!
//! Attention: a qkv head matches query and key blocks through scaled
//! copies of their signed encodings, so the matched positions share the
//! maximal score and the sharpness-scaled softmax approximates hard
//! attention; value blocks route through per-head output projections into
//! the head's scratch dims. Relative heads use only the scalar bias at
//! their offset.
//!
//! MLP: each rule compiles to one hidden dimension whose pre-activation is
//! exactly 1 when every condition holds and at most 0 otherwise; its output
//! row writes signed value deltas (scaled to saturation under tanh),
//! numerical increments, or gates a head-value copy through a ReLU pair.
//! Additional hidden pairs clear every scratch dimension each layer, and
//! under tanh re-saturate every variable dimension to counteract the
//! squashing of the residual stream.

use super::layout::{encode_value, kind_width, Layout};
use super::{
    pad, CompileError, CompilerOptions, Normalization, TransformerWeights, WeightDims,
};
use crate::symprog::{
    validate, AttentionHeadSpec, Cond, Operand, SymbolicProgram, Token, TokenPredicate, VarKind,
};

/// Gate magnitude for head-value copy rules; must exceed any numerical
/// value the program can produce.
const COPY_GATE: f64 = 1e4;

struct Emitter {
    layout: Layout,
    /// Stream value of a "1" symbolic encoding at MLP input time: 1 for the
    /// plain backend, tanh(1) under tanh normalization.
    sym_scale: f64,
    saturation: f64,
}

impl Emitter {
    /// Adds one condition's contribution to a hidden unit's input weights:
    /// exactly `gain` when the condition holds, at most 0 otherwise.
    fn add_condition(
        &self,
        w1_col: &mut [f64],
        b1: &mut f64,
        cond: &Cond,
        gain: f64,
    ) {
        let half = gain / (2.0 * self.sym_scale);
        let block = self.layout.operand_block(cond.operand());
        match (cond, block.kind) {
            (Cond::Eq(_, v), VarKind::Categorical { .. }) => {
                w1_col[block.offset + v] += half;
                *b1 += gain / 2.0;
            }
            (Cond::Ne(_, v), VarKind::Categorical { .. }) => {
                w1_col[block.offset + v] -= half;
                *b1 += gain / 2.0;
            }
            (Cond::Eq(_, v), VarKind::Binary) | (Cond::Ne(_, v), VarKind::Binary) => {
                // Ne on a binary is Eq on the complement.
                let want_one = match cond {
                    Cond::Eq(_, v2) => *v2 == 1,
                    Cond::Ne(_, v2) => *v2 == 0,
                };
                let _ = v;
                if want_one {
                    w1_col[block.offset] += half;
                } else {
                    w1_col[block.offset] -= half;
                }
                *b1 += gain / 2.0;
            }
            (_, VarKind::Numerical) => unreachable!("validation rejects numerical conditions"),
        }
    }
}

/// Compiles a validated program to shared-layer Transformer weights.
pub fn compile(
    program: &SymbolicProgram,
    opts: &CompilerOptions,
) -> Result<TransformerWeights, CompileError> {
    let diags = validate(program);
    if !diags.is_empty() {
        return Err(CompileError::InvalidProgram(
            diags.into_iter().map(|d| d.0).collect(),
        ));
    }
    if opts.saturation_scale <= 1.0 {
        return Err(CompileError::BadScale(opts.saturation_scale));
    }
    if opts.attention_sharpness <= 1.0 {
        return Err(CompileError::BadScale(opts.attention_sharpness));
    }
    let has_numerical = program
        .variables
        .iter()
        .any(|v| v.kind == VarKind::Numerical);
    if has_numerical && opts.normalization == Normalization::Tanh {
        return Err(CompileError::NumericalNeedsPlain);
    }
    for out in &program.outputs {
        if program.variable(out).is_none() {
            return Err(CompileError::OutputNotVariable(out.clone()));
        }
    }
    for v in &program.variables {
        for rule in &v.init {
            if let TokenPredicate::IsPrompt(i) = rule.when {
                if i >= opts.num_prompt_rows {
                    return Err(CompileError::MissingPromptRow {
                        index: i,
                        rows: opts.num_prompt_rows,
                    });
                }
            }
        }
    }

    let layout = Layout::new(program);
    let tanh = opts.normalization == Normalization::Tanh;
    let emitter = Emitter {
        layout,
        sym_scale: if tanh { 1f64.tanh() } else { 1.0 },
        saturation: opts.saturation_scale,
    };
    let layout = &emitter.layout;

    // Hidden dimension budget: rules, scratch clears, variable refreshes.
    let mut hidden_min = 0usize;
    for rule in &program.rules {
        if !rule.sets.is_empty() || !rule.increments.is_empty() {
            hidden_min += 1;
        }
        hidden_min += 2 * rule.head_increments.len();
    }
    let scratch_dims: usize = layout.scratch.iter().map(|b| b.width).sum();
    hidden_min += 2 * scratch_dims;
    let var_dims: usize = layout.vars.iter().map(|b| b.width).sum();
    if tanh {
        hidden_min += 2 * var_dims;
    }

    let d_head_min = program
        .heads
        .iter()
        .map(|h| match h {
            AttentionHeadSpec::Qkv { key, value, .. } => {
                let kw = kind_width(program.variable(key).unwrap().kind);
                let vw = kind_width(program.variable(value).unwrap().kind);
                kw + vw
            }
            AttentionHeadSpec::Relative { value, .. } => {
                kind_width(program.variable(value).unwrap().kind)
            }
        })
        .max()
        .unwrap_or(1)
        .max(1);

    let num_outputs: usize = program
        .outputs
        .iter()
        .map(|o| kind_width(program.variable(o).unwrap().kind))
        .sum();

    let dims = WeightDims {
        model_dim: layout.model_dim_min,
        hidden_dim: hidden_min.max(1),
        num_heads: program.heads.len().max(1),
        d_head: d_head_min,
        input_range: program.input_range,
        num_prompt_rows: opts.num_prompt_rows,
        num_outputs,
    };
    let mut w = TransformerWeights::zeros(dims, opts.normalization);

    // Embedding rows from variable initialization.
    let mut tokens: Vec<Token> = vec![Token::Start, Token::Sep, Token::End];
    for v in 0..program.input_range {
        tokens.push(Token::Vocab(v as u8));
    }
    for p in 0..opts.num_prompt_rows {
        tokens.push(Token::Prompt(p));
    }
    for (row, token) in tokens.iter().enumerate() {
        for (var, block) in program.variables.iter().zip(&layout.vars) {
            let enc = encode_value(var.kind, var.initial_value(*token));
            for (i, value) in enc.iter().enumerate() {
                w.embeddings[[row, block.offset + i]] = *value;
            }
        }
    }

    // Attention heads.
    let sqrt_sharp = opts.attention_sharpness.sqrt();
    for (h, spec) in program.heads.iter().enumerate() {
        let scratch = layout.scratch[h];
        match spec {
            AttentionHeadSpec::Qkv {
                query, key, value, ..
            } => {
                let qb = layout.var_block(query);
                let kb = layout.var_block(key);
                let vb = layout.var_block(value);
                for i in 0..kb.width {
                    w.wq[h][[qb.offset + i, i]] = sqrt_sharp;
                    w.wk[h][[kb.offset + i, i]] = sqrt_sharp;
                }
                for i in 0..vb.width {
                    w.wv[h][[vb.offset + i, kb.width + i]] = 1.0;
                    w.wo[h][[kb.width + i, scratch.offset + i]] = 1.0;
                }
            }
            AttentionHeadSpec::Relative { value, offset, .. } => {
                let vb = layout.var_block(value);
                for i in 0..vb.width {
                    w.wv[h][[vb.offset + i, i]] = 1.0;
                    w.wo[h][[i, scratch.offset + i]] = 1.0;
                }
                let idx = if *offset == -1 { 0 } else { 1 };
                w.rel_bias[[h, idx]] = opts.attention_sharpness;
            }
        }
    }

    // MLP rules.
    let mut hidden = 0usize;
    for rule in &program.rules {
        if !rule.sets.is_empty() || !rule.increments.is_empty() {
            let mut col = vec![0.0; dims.model_dim];
            let mut b = 0.0;
            for cond in &rule.conds {
                emitter.add_condition(&mut col, &mut b, cond, 1.0);
            }
            b -= rule.conds.len() as f64 - 1.0;
            for (m, value) in col.iter().enumerate() {
                w.w1[[m, hidden]] = *value;
            }
            w.b1[hidden] = b;
            for (var, new_value) in &rule.sets {
                let block = layout.var_block(var);
                let old_value = rule
                    .conds
                    .iter()
                    .find_map(|c| match c {
                        Cond::Eq(Operand::Var(n), v) if n == var => Some(*v),
                        _ => None,
                    })
                    .expect("validation guarantees the pin");
                let new_enc = encode_value(block.kind, *new_value as i64);
                let old_enc = encode_value(block.kind, old_value as i64);
                for i in 0..block.width {
                    let delta = new_enc[i] - old_enc[i];
                    let scale = if tanh { emitter.saturation } else { 1.0 };
                    w.w2[[hidden, block.offset + i]] += scale * delta;
                }
            }
            for (var, amount) in &rule.increments {
                let block = layout.var_block(var);
                w.w2[[hidden, block.offset]] += *amount as f64;
            }
            hidden += 1;
        }
        for (var, head) in &rule.head_increments {
            let target = layout.var_block(var);
            let source = layout.scratch_block(head);
            for sign in [1.0f64, -1.0] {
                let mut col = vec![0.0; dims.model_dim];
                let mut b = 0.0;
                for cond in &rule.conds {
                    emitter.add_condition(&mut col, &mut b, cond, COPY_GATE);
                }
                b -= COPY_GATE * rule.conds.len() as f64;
                col[source.offset] += sign;
                for (m, value) in col.iter().enumerate() {
                    w.w1[[m, hidden]] = *value;
                }
                w.b1[hidden] = b;
                w.w2[[hidden, target.offset]] = sign;
                hidden += 1;
            }
        }
    }

    // Scratch clearing: out -= ReLU(x) - ReLU(-x) = x.
    for block in &layout.scratch {
        for i in 0..block.width {
            let d = block.offset + i;
            w.w1[[d, hidden]] = 1.0;
            w.w2[[hidden, d]] = -1.0;
            hidden += 1;
            w.w1[[d, hidden]] = -1.0;
            w.w2[[hidden, d]] = 1.0;
            hidden += 1;
        }
    }

    // Variable refresh under tanh: push every +-1 dimension back to
    // saturation each layer.
    if tanh {
        for block in &layout.vars {
            for i in 0..block.width {
                let d = block.offset + i;
                w.w1[[d, hidden]] = 1.0 / emitter.sym_scale;
                w.b1[hidden] = -0.5;
                w.w2[[hidden, d]] = 2.0 * emitter.saturation;
                hidden += 1;
                w.w1[[d, hidden]] = -1.0 / emitter.sym_scale;
                w.b1[hidden] = -0.5;
                w.w2[[hidden, d]] = -2.0 * emitter.saturation;
                hidden += 1;
            }
        }
    }
    debug_assert_eq!(hidden, hidden_min);

    // Output projection: select the declared output blocks.
    let mut row = 0usize;
    for out in &program.outputs {
        let block = layout.var_block(out);
        for i in 0..block.width {
            w.w_out[[row, block.offset + i]] = 1.0;
            row += 1;
        }
    }

    match opts.target {
        Some(target) => pad(&w, target),
        None => Ok(w),
    }
}
