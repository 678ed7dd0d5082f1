//! Experiment orchestration: table reproduction, frontier emission, and
//! run-directory management.

pub mod experiments;
pub mod rundir;

pub use experiments::{
    desk_preset, frontier_csv, manual_parity_row, reproduce_table1, reproduce_table1_rows,
    reproduce_table2, reproduce_table2_custom, reproduce_table2_with, DeskPreset, ResultsTable, Scale, TableRow,
};
pub use rundir::RunDir;
