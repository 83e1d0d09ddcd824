//! Small dense networks with reverse-mode gradients and a first-order
//! optimizer, all in `f64`.

mod mlp;
mod optim;

pub use mlp::{ForwardCache, Gradients, Layer, Mlp};
pub use optim::{OptimizerKind, OptimizerState};
