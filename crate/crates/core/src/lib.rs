//! Mesh-embedded Gaussian splatting.
//!
//! The crate renders anisotropic Gaussian scenes, extracts triangle meshes
//! from their summed density, binds kernels to mesh faces and deforms them
//! through an XPBD soft-body solver.

pub mod binding;
pub mod camera;
pub mod edit;
pub mod error;
pub mod extract;
pub mod image;
pub mod io;
pub mod material;
pub mod mesh;
pub mod metrics;
pub mod raster;
pub mod session;
pub mod splat;
pub mod synth;
pub mod xpbd;

pub use camera::Camera;
pub use error::{Error, Result};
pub use image::ImageBuffer;
pub use mesh::TriangleMesh;
pub use splat::{GaussianKernel, SplatScene};
