//! Neural chart recommender and the attacks against it.
pub mod attacks;
pub mod features;
pub mod model;
pub mod oracle;
pub mod recommend;
pub mod train;

pub use features::{column_features, featurize, ColumnFeatures, COLUMN_INDEX, FEATURE_COUNT, FEATURE_NAMES};
pub use model::{HeadOutputs, RecConfig, RecModel, CHART_CLASSES};
pub use oracle::{rule_oracle, subset_utility, ChartType, ColumnProfile, Verdict};
pub use recommend::{chart_spec, recommend, score_all, ChartSpec, Encoding, RecEntry, Recommendation};
pub use train::{auc, evaluate, oracle_verdict, train_rec, RecEvaluation, RecTrainConfig, TrainedRec};
pub use attacks::{
    blank_cell_attack, column_shuffle_attack, feature_gradients, pipeline_attack, BlankCellOutcome, FeatureGradients,
    PipelineConfig, PipelineOutcome, ShuffleConfig, ShuffleOutcome,
};
