//! Readers and writers for every artifact the toolkit consumes.

pub mod colmap;
pub mod exposure;
pub mod image;
pub mod ply;
pub mod trajectory;

pub use colmap::{parse_colmap_text, write_colmap_text, ColmapSparseModel};
pub use exposure::{parse_exposure_csv, ExposureRecord};
pub use image::{read_png, write_png, Image8};
pub use ply::{read_ply, write_ply_cloud, write_ply_mesh, PlyEncoding, PlyGeometry};
pub use trajectory::{parse_groundtruth_tf, parse_trajectory, write_trajectory, QuaternionOrder};
