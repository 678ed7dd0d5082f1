//! Datasets and reference solutions: parity with train/OOD splits, the
//! 4-bit identity task, manual MLP weights, and the manually initialized
//! parity Transformer bundle.

mod identity;
mod manual;
mod parity;

pub use identity::{
    bce_nll_bits, bce_nll_bits_from_logits, gen_identity, mlp_forward, mlp_logits,
    mlp_manual_weights, IdentityDataset, MlpWeights, MLP_HIDDEN, MLP_IO,
};
pub use manual::{manual_parity_bundle, paper_parity_target, ManualParityBundle};
pub use parity::{gen_parity, to_lines, ParityDataset, ParityExample, ParitySpec};
