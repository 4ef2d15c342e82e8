//! Sensor selection by data envelopment analysis.
//!
//! Signal quality metrics and sensor costs are scored with DEA multiplier
//! models; the selected channels feed KNN, Gaussian naive Bayes and linear SVM
//! classifiers whose held-out performance is reported. The numeric core is
//! generic over [`Scalar`] (`f32` or `f64`); the aliases below fix it to `f64`.

pub mod classify;
pub mod config;
pub mod dea;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod lp;
pub mod pipeline;
pub mod report;
pub mod scalar;
pub mod select;
pub mod sigmetrics;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type SignalDataset = ingest::SignalDataset<f64>;
pub type ChannelSeries = ingest::ChannelSeries<f64>;
pub type CostProfile = ingest::CostProfile<f64>;
pub type JoinedDataset = ingest::JoinedDataset<f64>;
pub type ChannelMetrics = sigmetrics::ChannelMetrics<f64>;
pub type MetricsConfig = sigmetrics::MetricsConfig<f64>;
pub type LinearProgram = lp::LinearProgram<f64>;
pub type LpSolution = lp::LpSolution<f64>;
pub type DmuRecord = dea::DmuRecord<f64>;
pub type DeaOptions = dea::DeaOptions<f64>;
pub type EfficiencyResult = dea::EfficiencyResult<f64>;
pub type SelectionResult = select::SelectionResult<f64>;
pub type SelectionRule = select::SelectionRule<f64>;
pub type FeatureMatrix = classify::FeatureMatrix<f64>;
pub type TrainedModel = classify::TrainedModel<f64>;
pub type MetricReport = eval::MetricReport<f64>;
pub type RocCurve = eval::RocCurve<f64>;
