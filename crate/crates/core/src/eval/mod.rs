//! Metrics, report files and the experiment harness.

mod experiments;
mod metrics;
mod report;

pub use experiments::{
    build_experiment_dataset, compare_methods, compare_on_dataset, evaluate_cv, evaluate_naive, evaluate_regressor, sweep_temporal_windows,
    train_regressor, Comparison, ExperimentOptions, Method, MethodRow, SweepRow, SweepTable,
};
pub use metrics::{
    classification_metrics, interval_report, regression_metrics, ClassificationScores, ConfusionMatrix, IntervalBin,
    IntervalReport, RegressionMetrics,
};
pub use report::{emit_report, Cell, Report, ReportFormat, REPORT_SCHEMA_VERSION};

impl IntervalReport {
    pub fn to_report(&self) -> Report {
        let mut r = Report::new("intervals", &["interval", "count", "mae_s"]);
        for b in &self.bins {
            r.push(vec![Cell::Text(b.label.clone()), Cell::int(b.count), Cell::opt(b.mae)]).expect("three columns");
        }
        r.note("monotone_difficulty", self.monotone_difficulty());
        r
    }
}
