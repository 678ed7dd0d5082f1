//! Reverse-mode automatic differentiation, stochastic samplers, Adam, and
//! the variational training loops.

mod adam;
mod mlp;
mod sample;
mod tape;
mod tform;
mod train;
mod vparam;

pub use adam::{AdamState, Schedule};
pub use mlp::{eval_mlp, train_variational_mlp, VarMlp};
pub use sample::{
    gumbel_noise, sample_gaussian_reparam, sample_gumbel_softmax_st, sample_mixture_st,
    standard_noise,
};
pub use tape::{Gradients, NodeId, Tape};
pub use tform::{forward_nodes, he_random_weights, sequence_nll, WeightNodes};
pub use train::{
    eval_mle_transformer, eval_variational_transformer, train_mle_transformer,
    train_variational_transformer, StepRecord, TrainConfig, Trajectory,
};
pub use vparam::{
    broadcast_scalar, chunk_kl_nats, draw_step_noise, gauss_logpdf_elem, gmm_logpdf_elem,
    kl_nats_node, logsumexp_list, mixture_logpdf_rows, register_params, sample_weight_nodes,
    PriorNodes, PriorParams, StepNoise, VarNodes, VarTransformer,
};
