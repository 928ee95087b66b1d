//! Multi-output HAT transducer: causal encoder, two-token prediction network
//! and three joint heads (ASR, capitalization, pause).

mod forward;
mod params;

pub use forward::{
    encode_graph, hat_log_probs, joint_graph, posterior, predict_graph, JointVars, ModelVars, PosteriorSlice,
};
pub use params::{Checkpoint, Head, JointParams, ModelConfig, ModelParams, NamedTensor, CAP_OUTPUTS, PAUSE_OUTPUTS};
