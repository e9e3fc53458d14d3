//! Minimal tensor library with reverse-mode automatic differentiation.
//!
//! Values live in a [`Graph`]; a [`Tensor`] is a cheap handle into it. Every
//! operation records an analytic backward rule, so a single
//! [`Graph::backward`] call populates gradients for all reachable tensors
//! that require them. Training runs in `f32`; gradient-check tests
//! instantiate the same code with `f64`.

mod adam;
mod checkpoint;
mod conv;
mod element;
mod graph;
pub(crate) mod parallel;
mod params;

pub use adam::AdamState;
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use element::Element;
pub use graph::{Graph, Tensor};
pub use params::{init, Bindings, Param, ParamId, ParamStore};
