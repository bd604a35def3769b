//! Visual autoregressive anomaly detection with selective state space
//! predictors.
//!
//! Images become hierarchical token grids (a frozen tokenizer plus a
//! trainable adapter). Each grid is unrolled in four scan directions and a
//! stack of selective-SSM blocks predicts every token from the tokens at
//! least `M` positions before it. Prediction error, folded back onto the grid
//! and upsampled, is the anomaly map.

pub mod autoregressor;
pub mod error;
pub mod gradcheck;
pub mod io;
pub mod metrics;
pub mod params;
pub mod pipeline;
pub mod rng;
pub mod sequencer;
pub mod ssm;
pub mod tensor;
pub mod tokenizer;
pub mod trainer;

pub use error::{Error, FormatError, Result};
pub use params::Parameters;
pub use pipeline::{score_image, AnomalyMap, Model, ModelConfig, ModelSpec, ScoringInput};
pub use tensor::{Matrix, Real};
pub use trainer::{train, TrainConfig, TrainState};
