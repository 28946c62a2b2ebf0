//! Minimal neural-network layers with hand-written backward passes.
//!
//! Everything is `f64` on ndarray; sequences are `T x d` row matrices.
//! Training uses the caching `forward`/`backward` pairs; prediction uses
//! the pure `infer` paths, which are safe to call concurrently on shared
//! weights.

pub mod attention;
pub mod gradcheck;
pub mod gru;
pub mod layers;
pub mod param;
pub mod pool;

pub use attention::{MultiHeadSelfAttention, TransformerBlock};
pub use gru::{BiGruLayer, GruCell};
pub use layers::{softmax_rows, softmax_vec, Gelu, LayerNorm, Linear};
pub use param::{
    adam_step_all, add_grads, export_grads, max_abs_grad, param_count, scale_grads, zero_grads,
    Adam, Param, Param1, Param2, ParamVisit, VisitParams,
};
pub use pool::AdditivePool;
