//! `zmap`: Transformer weights emulating a prefix Turing machine's model
//! function for a given program.

use super::{compile, CompileError, CompilerOptions, TransformerWeights};
use crate::ptm::{PrefixTmSpec, ProgramBits, ResourceBound};
use crate::symprog::build_prefix_tm_program;
use ndarray::Array2;

/// The prompt-embedding block for program `z` over `r_s` rows: column 0
/// holds +1 for a 1 bit, -1 for a 0 bit, and 0.0 past the end of `z`
/// (those rows are never read); the remaining columns repeat `tail`
/// identically in every row.
pub fn prompt_embedding_rows(z: &ProgramBits, r_s: usize, tail: &[f64]) -> Array2<f64> {
    assert!(z.len() <= r_s, "program longer than the prompt region");
    let width = tail.len() + 1;
    let mut rows = Array2::zeros((r_s, width));
    for i in 0..r_s {
        rows[[i, 0]] = match z.bit(i) {
            Some(1) => 1.0,
            Some(_) => -1.0,
            None => 0.0,
        };
        for (j, value) in tail.iter().enumerate() {
            rows[[i, j + 1]] = *value;
        }
    }
    rows
}

/// Compiles the prefix-TM emulator for `tm` under `bound` and overwrites
/// the prompt embedding rows to encode `z`, yielding weights whose model
/// function matches the machine's run-and-decode on every input where the
/// run halts validly within the bound.
pub fn zmap(
    tm: &PrefixTmSpec,
    bound: &ResourceBound,
    z: &ProgramBits,
    opts: &CompilerOptions,
) -> Result<TransformerWeights, CompileError> {
    if z.len() > bound.r_s {
        return Err(CompileError::MissingPromptRow {
            index: z.len() - 1,
            rows: bound.r_s,
        });
    }
    let program = build_prefix_tm_program(tm, bound.r_s, z);
    let opts = CompilerOptions {
        normalization: super::Normalization::None,
        num_prompt_rows: bound.r_s,
        ..opts.clone()
    };
    let mut weights = compile(&program, &opts)?;

    // The compiled prompt rows already differ only in column 0 (the program
    // bits); rewrite the whole block so unread rows take the canonical 0.0.
    let start = weights.dims.prompt_row_start();
    let tail: Vec<f64> = (1..weights.dims.model_dim)
        .map(|c| weights.embeddings[[start, c]])
        .collect();
    let block = prompt_embedding_rows(z, bound.r_s, &tail);
    for i in 0..bound.r_s {
        for c in 0..weights.dims.model_dim {
            weights.embeddings[[start + i, c]] = block[[i, c]];
        }
    }
    Ok(weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ptm::toy;

    #[test]
    fn prompt_rows_encode_bits_then_zeros() {
        let z = ProgramBits::parse("10").unwrap();
        let rows = prompt_embedding_rows(&z, 4, &[0.5, -1.0]);
        let col0: Vec<f64> = (0..4).map(|i| rows[[i, 0]]).collect();
        assert_eq!(col0, vec![1.0, -1.0, 0.0, 0.0]);
        for i in 0..4 {
            assert_eq!(rows[[i, 1]], 0.5);
            assert_eq!(rows[[i, 2]], -1.0);
        }
    }

    #[test]
    fn empty_program_gives_zero_column() {
        let rows = prompt_embedding_rows(&ProgramBits::empty(), 3, &[]);
        for i in 0..3 {
            assert_eq!(rows[[i, 0]], 0.0);
        }
    }

    #[test]
    fn tail_rows_differ_from_first_row_only_in_column_zero() {
        let tm = toy::sign_select();
        let bound = ResourceBound::new(10, 6);
        let z = ProgramBits::parse("1").unwrap();
        let w = zmap(&tm, &bound, &z, &CompilerOptions::plain()).unwrap();
        let start = w.dims.prompt_row_start();
        for i in 1..bound.r_s {
            for c in 1..w.dims.model_dim {
                assert_eq!(
                    w.embeddings[[start + i, c]],
                    w.embeddings[[start, c]],
                    "row {i} col {c}"
                );
            }
        }
    }

    #[test]
    fn program_longer_than_bound_is_rejected() {
        let tm = toy::sign_select();
        let bound = ResourceBound::new(10, 2);
        let z = ProgramBits::parse("101").unwrap();
        assert!(zmap(&tm, &bound, &z, &CompilerOptions::plain()).is_err());
    }

    #[test]
    fn weight_count_outside_prompts_is_invariant_to_bounds() {
        let tm = toy::sign_select();
        let z = ProgramBits::parse("1").unwrap();
        let w_small = zmap(&tm, &ResourceBound::new(8, 4), &z, &CompilerOptions::plain()).unwrap();
        let w_large = zmap(&tm, &ResourceBound::new(30, 12), &z, &CompilerOptions::plain()).unwrap();
        assert_eq!(
            w_small.num_non_embedding_weights(),
            w_large.num_non_embedding_weights()
        );
        // Only the prompt rows grow with r_s.
        assert_eq!(
            w_large.embeddings.nrows() - w_small.embeddings.nrows(),
            12 - 4
        );
        assert_eq!(w_small.dims.model_dim, w_large.dims.model_dim);
        assert_eq!(w_small.dims.hidden_dim, w_large.dims.hidden_dim);
    }
}
