//! Experiment configuration, the time-averaged error metric, error tables,
//! figure series, oracle checks and the command line.

pub mod cli;
pub mod config;
pub mod figures;
pub mod metric;
pub mod table;
pub mod validate;

pub use config::{ExperimentConfig, InitialCondition, ReferenceKind, SCHEMA_VERSION};
pub use figures::{run_figures, FigureBundle};
pub use metric::{rel_error, rel_error_with, EPS_DIV};
pub use table::{embedded_config, run_table, ErrorRow, ErrorTable, TABLE_HEADER};
