//! Skeleton-driven Gaussian splatting core.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. The `parallel` feature renders tiles and reduces gradients on a
//! rayon pool; results are bit-identical to the serial path.
//!
//! Module map:
//! - [`geometry`]: vectors, rotations, cameras, skeletons, 6D joint rotations.
//! - [`densify`]: skeleton to point cloud (cylinders per limb, face sphere, torso box).
//! - [`gaussian`]: splat parameters, covariance assembly, residual fields, the deformation MLP.
//! - [`raster`]: projection, tile binning, front-to-back compositing and its reverse pass.
//! - [`skinning`]: linear blend skinning, segmentation splats, cross-entropy training, mIoU.
//! - [`loss`], [`optim`], [`fit`]: image losses and metrics, Adam, the residual fitting loop.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod densify;
pub mod error;
pub mod fit;
pub mod gaussian;
pub mod geometry;
pub mod image;
pub mod loss;
pub mod optim;
pub mod raster;
pub mod rng;
pub mod skinning;

mod float;
mod par;

pub use error::{Error, Result};
