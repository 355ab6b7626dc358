pub mod error;
pub mod evaluator;
pub mod finetuner;
pub mod grid;
pub mod kv;
pub mod pipeline;
pub mod probesim;
pub mod scalar;
pub mod scenegen;
pub mod selector;
pub mod stereomodel;

pub use error::{Error, Result};
pub use grid::Grid;
pub use scalar::Real;

// Numeric code is generic over `Real`; these are the instantiations the
// pipeline, the CLI and the tests use.
pub type Grid64 = Grid<f64>;
pub type Model = stereomodel::ModelState<f64>;
pub type Hypotheses = stereomodel::DisparityHypotheses<f64>;
pub type Input = stereomodel::StereoInput<f64>;
pub type Forward = stereomodel::Forward<f64>;
pub type Scene = scenegen::SceneSample<f64>;
pub type Label = finetuner::TactileLabel<f64>;
pub type Selection = selector::GreedyOutcome<f64>;
