//! Minimal dense/conv network stack with hand-derived backprop.
//!
//! Everything is generic over the float type: production nets run at `f32`
//! (matching the checkpoint format), while gradient checks instantiate the
//! same code at `f64` against central finite differences.

pub mod checkpoint;
pub mod layers;
pub mod net;

pub use checkpoint::{CheckpointMeta, CkptError};
pub use layers::{Conv2d, Dense, MaxPool2, Param};
pub use net::{
    HeadKind, LayerSpec, LossReport, NetError, NetworkConfig, NetworkOutput, OptimConfig,
    PolicyValueNet,
};

/// Float bound shared by every layer. `LinalgScalar` routes the f32/f64
/// matrix products through ndarray's gemm path.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + ndarray::LinalgScalar
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Shorthand for lifting an `f64` constant into the generic float type.
pub fn real<F: Scalar>(x: f64) -> F {
    F::from_f64(x).expect("finite constant")
}
