//! Evaluation toolkit for underwater and cross-domain 3D reconstruction:
//! trajectory accuracy, point-cloud and mesh geometry metrics, weak-voxel view
//! selection, and radiometric metrics with preprocessing operators.
//!
//! All lengths are meters unless a name says otherwise (`_mm`, `_cm2`, `_per_cm`).

pub mod alignment;
pub mod cross_domain;
pub mod error;
pub mod geometry;
pub mod geometry_metrics;
pub mod io;
pub mod numeric;
pub mod radiometry;
pub mod spatial;
pub mod trajectory_metrics;

pub use error::{Error, ParseError, Result};
pub use geometry::{
    CameraPinhole, PointCloud, RigidTransform, SimilarityTransform, TimedPose, Trajectory, TriangleMesh, UnitQuat,
    Vec3, VoxelGrid,
};
pub use io::image::Image8;
