//! Forward modeling and truncated-SVD reconstruction for a radar that images
//! through a rotating pinhole or inverse-pinhole mask.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod forward;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod mask;
pub mod propagation;
pub mod recon;
pub mod sync;

pub use error::{Error, Result};
