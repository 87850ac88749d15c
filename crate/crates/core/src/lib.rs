//! Optimization of the shape and location of constant-valued occluding
//! patches against differentiable detectors.
//!
//! The crate is organized bottom-up:
//!
//! * [`imgcore`] grid types, adversarial composition, convolutions and PNM I/O
//! * [`aggreg`] soft local-clustering aggregation regularizer
//! * [`binreg`] binary and sparsity regularizer
//! * [`victim`] detector contract, attack loss, template detector, scenes
//! * [`optim`] the momentum mask optimizer with gradient fine-tuning
//! * [`patchkit`] binarization, connected components, stencil export
//! * [`harness`] experiment protocols, metrics and reports

pub mod aggreg;
pub mod binreg;
pub mod error;
pub mod harness;
pub mod imgcore;
pub mod optim;
pub mod patchkit;
pub mod victim;

pub use error::{Error, Result};
