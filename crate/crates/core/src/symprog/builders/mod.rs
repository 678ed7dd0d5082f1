//! Standard-library program builders: Turing machine emulators and small
//! sequential algorithms.

mod prefix;
mod simple;
mod single_tape;

pub use prefix::{build_prefix_tm_program, prefix_layers_for_steps};
pub use simple::{build_copy_last_program, build_parity_program};
pub use single_tape::{build_single_tape_tm_program, SingleTapeAction, SingleTapeMachine};
