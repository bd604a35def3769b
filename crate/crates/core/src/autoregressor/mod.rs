//! The token-prediction network: stacked Mamba-style blocks with a linear
//! head, driven by BOS/EOS-padded sequences.

pub mod block;
pub mod predictor;

pub use block::{block_backward, block_forward, block_infer, BlockCache, BlockConfig, MambaBlockParams};
pub use predictor::{
    predict_sequence, predictor_backward, predictor_forward, predictor_infer, PredictorCache, PredictorConfig,
    PredictorParams,
};
