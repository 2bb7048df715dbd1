//! Synthetic tactile sensing: the parametric taxel model, the calibration
//! dataset generator, and the MLP force regressor.

mod dataset;
mod mlp;
mod taxel;

pub use dataset::{
    balance_by_force, generate_dataset, poisson_disc_points, read_csv, split_by_contact_point,
    write_csv, DatasetConfig, DatasetError, ForceSample, TrainTestSplit,
};
pub use mlp::{
    evaluate_nmae, train_estimator, GradientSet, MlpError, MlpEstimator, TrainConfig,
    TrainReport, HIDDEN_WIDTH, OUTPUT_DIM,
};
pub use taxel::{SensorModel, TaxelReading, READING_DIM, TAXELS};
