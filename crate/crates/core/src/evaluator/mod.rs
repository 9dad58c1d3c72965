//! Accuracy, confusion, match statistics, saliency and report export.

pub mod metrics;
pub mod report;
pub mod saliency;
pub mod series;

pub use metrics::{
    argmax, confusion, predict, rank_of, top_n_accuracy, top_n_summary, ConfusionMatrix,
    Predictions, TopN,
};
pub use report::{
    decode_ppm16, encode_confusion_pgm, encode_ppm16, export_report, ConfusionReport, MetricValue,
    Report,
};
pub use saliency::{clip_bound, input_gradients, rescale, saliency, SaliencyMap, SALIENCY_MAX};
pub use series::{gaussian_ci, run_series, GaussianCi, MatchSeries};
