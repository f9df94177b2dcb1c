//! Core algorithms for settlement mapping from single-band overhead imagery.
//!
//! One small CNN is trained on image patches with image-level labels; its
//! internal activations are then reused, without retraining, for three
//! downstream tasks:
//!
//! * block-level scene classification ([`mapping::classify_scene_blocks`]),
//! * pixel-level segmentation by mini-batch k-means over hypercolumn
//!   descriptors ([`mapping::segment_pixels`]),
//! * 2-D neighbor embedding of fully-connected features
//!   ([`embedding::tsne_fit`]) and maximal-activation backprojection
//!   ([`viz::backproject`]).
//!
//! The crate is `no_std` + `alloc`; all file formats, parallel drivers and
//! the CLI live in the companion `hypermap` crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("hypermap-core requires either the `std` or the `libm` feature");

pub mod embedding;
pub mod error;
pub mod features;
pub mod mapping;
pub mod math;
pub mod net;
pub mod raster;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod viz;

pub use error::{Error, Result};
pub use tensor::Tensor;
