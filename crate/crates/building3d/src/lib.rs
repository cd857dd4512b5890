//! File formats, the estimation/reconstruction pipeline and the
//! `building3d` command line, on top of [`building3d_core`].

pub mod asc;
pub mod citygml;
pub mod cli;
pub mod error;
pub mod geojson;
pub mod image_io;
pub mod obj;
pub mod pipeline;
pub mod ply;
pub mod raster_io;
pub mod weights;

pub use building3d_core as core;
pub use error::{Error, Result};
