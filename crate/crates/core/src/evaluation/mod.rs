//! Leave-one-patient-out protocol, stratified sampling, metrics, the
//! experiment runner and reports.

mod experiment;
mod lopo;
mod metrics;
mod report;
mod sampling;

pub use experiment::{
    load_frames, prepare_data, run_experiment, train_on_dataset, Arch, DataSource, FoldReport, ModelEntry,
    PreparedData, ReportEntry, RunConfig, RunReport, REPORT_VERSION,
};
pub use lopo::{
    group_by_subject, make_lopo_plan, sample_fold, FoldSample, FrameRef, LopoConfig, SplitPlan, SubjectQuota,
};
pub use metrics::{average, compute_metrics, pooled, AverageMetrics, MetricsRecord};
pub use report::{render_markdown, render_predictions_csv};
pub use sampling::{round_robin_indices, round_robin_sample};
