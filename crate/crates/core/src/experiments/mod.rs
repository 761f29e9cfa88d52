//! Reproducible experiment drivers: configuration, figure tables with plot
//! scripts, and the Monte Carlo validation harness.

mod config;
mod figures;
mod output;
mod validate;

pub use config::{DistanceGrid, ExperimentConfig, WeightEval};
pub use figures::{
    run_fig1, run_fig2, run_fig3, std_crossover_km, AsymptoticPoint, Fig1, Fig1Row, Fig2, Fig3,
    Fig3Row, KeyRatePoint, PropertyCheck, RangeEntry, CROSSOVER_WINDOW_KM, FIG1_COLUMNS,
    FIG3_COLUMNS, LONG_DISTANCE_RATIO_TOLERANCE, MM_BELOW_MLE_FROM_KM, NEAR_RANGE_RATIO_TARGET,
    RANGE_FRACTION_TARGET, RATIO_PROFILE_OFFSETS_KM,
};
pub use output::{metadata_header, num, read_csv_records, write_artifacts, Artifact, CsvTable, VERSION};
pub use validate::{
    design_point, monte_carlo_validate, simulate_trials, true_value, CheckResult, EstimatorReport,
    TrialOutcome, ValidationReport, BIAS_SE_TOLERANCE, CORRELATION_TOLERANCE, DOMINANCE_SLACK,
    IDENTITY_TOLERANCE, MIN_TRIALS, SPLIT_TOLERANCE, STD_TOLERANCE,
};
