//! Data ingestion, the online game, comparator oracle, grids and CSV output.

pub mod csv;
pub mod data;
pub mod experiment;
pub mod game;
pub mod grid;
pub mod oracle;

pub use self::csv::{emit_csv, emit_quantiles_csv, parse_quantiles, parse_reports, write_quantiles, write_reports, ReportRow};
pub use data::{parse_libsvm, parse_libsvm_str, scale_features, Dataset, Example, Row};
pub use experiment::{
    comparator_for, grid_points, grid_protocol, prepare, run, run_seeds, run_single, thread_pool, Algo, AlgoSummary,
    PreparedData, ProtocolConfig, RunConfig,
};
pub use game::{run_game, run_regression_game, Forecaster, RegretReport};
pub use grid::{aggregate_quantiles, aggregate_series, grid_search, quantile, GridOutcome, GridPoint, QuantileTable, DEFAULT_GRID};
pub use oracle::{comparator_oracle, projected_gradient, Comparator, LogisticObjective, Objective, SquaredObjective};
