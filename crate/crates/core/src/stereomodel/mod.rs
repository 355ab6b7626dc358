//! Cost-volume stereo model with a learned linear patch embedding.

mod adam;
mod descriptor;
mod hypotheses;
mod loss;
mod model;
mod train;
mod volume;

pub use adam::{Adam, AdamConfig};
pub use descriptor::{extract_descriptor, DescriptorConfig, DescriptorField};
pub use hypotheses::DisparityHypotheses;
pub use loss::{entropy_map, loss_gradients, loss_gradients_from, loss_value, pixel_entropy, LossSpec, SparseTarget};
pub use model::{ModelState, Role};
pub use train::{pretrain, train_epoch, validation_epe, PretrainConfig, PretrainReport, TrainView};
pub use volume::{
    backward, forward, predict_disparity, score_volume, softmax_over_hypotheses, Forward, Gradient,
    ProbabilityVolume, ScoreVolume, StereoInput, Volume, INVALID_SCORE,
};
