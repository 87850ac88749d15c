//! Core grid types, adversarial composition and the small convolution
//! toolbox shared by the regularizers and the optimizer.

mod grid;
mod image;
mod kernel;
pub mod pnm;

pub use grid::Grid;
pub use image::{compose_adversarial, CoverSpec, GrayImage, Mask, MaskKind};
pub use kernel::{
    convolve, convolve3x3, gaussian_kernel, minmax_normalize, Kernel3x3, AGGREGATION_KERNEL,
};
