//! Scenario catalog, Monte Carlo experiment runner, and CSV export.

mod runner;
mod scenarios;

pub use runner::{
    run_experiment, summarize, uniform_prior_row, write_rows_csv, write_summary_csv,
    ExperimentSpec, RunRow, SummaryRow,
};
pub use scenarios::{
    builtin_scenario, load_scenario, parse_scenario_arg, resolve_scenario, scenario_to_file,
    BuiltinScenario, ScenarioFile,
};
