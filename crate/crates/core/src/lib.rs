//! Core library for emulating prefix Turing machines, compiling symbolic
//! programs to Transformer weights, and computing MDL codelength objectives
//! (two-part, variational, and adaptive variational) with Gaussian mixture
//! priors and posteriors.
//!
//! The main subsystems are:
//!
//! - [`ptm`]: a multi-tape prefix Turing machine VM with resource-bounded
//!   execution, rational-logit output decoding, and brute-force
//!   program-enumeration oracles for bounded codelength quantities.
//! - [`symprog`]: a symbolic program language (variables, attention heads,
//!   feed-forward rule tables) with a reference interpreter, plus builders
//!   for Turing machine emulators and a sequential parity algorithm.
//! - [`compile`]: compilation of symbolic programs to Transformer weights,
//!   including `zmap`, which maps (machine, resource bound, program bits)
//!   to weights that emulate the machine's model function.
//! - [`transformer`]: the numeric forward pass compatible with compiled
//!   weights (shared layers, relative position biases, tanh normalization).
//! - [`codes`]: GMM distribution machinery and codelength objectives.
//! - [`grad`]: reverse-mode automatic differentiation, stochastic samplers,
//!   Adam, and the variational training loop.
//! - [`tasks`]: datasets and reference solutions (parity, MLP identity).

pub mod codes;
pub mod compile;
pub mod grad;
pub mod ptm;
pub mod symprog;
pub mod tasks;
pub mod transformer;
