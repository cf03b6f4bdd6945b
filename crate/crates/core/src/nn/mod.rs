//! Minimal tensor kernels with hand-derived reverse-mode gradients.

pub mod layers;
pub mod real;

pub use layers::Mode;
pub use real::Real;
