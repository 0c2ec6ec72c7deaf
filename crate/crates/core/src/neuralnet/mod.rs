//! Dense networks with hand-written reverse mode, Adam, the squashed
//! Gaussian actor, the fixed-sigma teacher density and Q networks.

mod checkpoint;
mod mlp;
mod policy;

pub use checkpoint::{content_hash, load_json, save_json, to_json, CHECKPOINT_FORMAT};
pub use mlp::{split_cols, Activation, Adam, Dense, Grads, Mlp, Tape};
pub use policy::{
    entropy_estimate, gaussian_logpdf, log1m_tanh2, ref_logprob_normalized, squashed_logprob,
    GaussianPolicy, NetShape, PolicySample, QNetwork, QTape, ReferencePolicy, ACTION_DIM,
    LOG_STD_MAX, LOG_STD_MIN, REF_LOGPROB_FLOOR, REF_LOG_STD,
};
