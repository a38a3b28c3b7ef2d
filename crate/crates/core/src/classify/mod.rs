//! Feature extraction and the classifier comparison: linear SVM, MLP and
//! 1-nearest-neighbour over deep features, with accuracy reports and
//! failure analysis.

pub mod eval;
pub mod features;
pub mod models;

pub use eval::{
    evaluate, failure_report, format_table, rank_errors, report_records, write_failure_bundle, EvalReport,
    FailureBundle, FailureClass, Prediction,
};
pub use features::{default_feature_layer, extract_features, feature_output_index, l2_normalize, FeatureSet};
pub use models::{
    train_linear_svm, train_mlp, train_nearest_neighbour, Classifier, LinearSvm, Mlp, MlpConfig, NearestNeighbour,
};
