//! Reverse-mode differentiation, network layers, the Riemannian Adam
//! optimizer and the checkpoint container.

pub mod checkpoint;
pub mod gradcheck;
pub mod hyp;
pub mod layers;
pub mod optim;
mod params;
pub mod tape;

pub use params::{Param, ParamId, ParamKind, ParamStore};
pub use tape::{Gradients, Tape, Var};

pub type Mat = ndarray::Array2<f64>;
