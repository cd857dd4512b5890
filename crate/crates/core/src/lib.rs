//! Numerical core for single-image building reconstruction.
//!
//! Everything here is `no_std` + `alloc`: dense grids and the operators the
//! elevation network is built from, hand-derived gradients, evaluation
//! metrics, raster tiling/fusion/smoothing, mask contouring, and the
//! geometry that turns an elevation raster into point clouds, meshes and
//! LOD1 prisms. File formats and the command line live in the `building3d`
//! crate.
#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod error;
pub mod fsum;
pub mod grad;
pub mod grid;
pub mod mask;
pub mod metrics;
pub mod raster;
pub mod recon;
pub mod rng;
pub mod sffde;

pub use error::{Error, Result};
pub use grid::{Grid, KernelSpec, Shape2D};
pub use raster::{Geotransform, Raster, TilePlan};
