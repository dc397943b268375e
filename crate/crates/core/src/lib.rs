//! Differentiable rendering of diffuse Gaussian limb primitives into
//! multi-channel feature images.

pub mod autodiff;
pub mod camera;
pub mod error;
pub mod fit;
pub mod geometry;
pub mod io;
pub mod renderer;
pub mod skeleton;

pub use error::{Error, Result};
