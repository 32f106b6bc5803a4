//! Geometric primitives shared by every metric and by the view selector.
//!
//! Conventions: positions are in meters, quaternions are Hamilton with
//! in-memory order `(w, x, y, z)` and are canonicalized to `w >= 0`.
//! Camera poses are world-to-camera.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Matrix4, Quaternion, Rotation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Unit quaternion with a canonical sign (`w >= 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuat(UnitQuaternion<f64>);

impl UnitQuat {
    pub fn identity() -> Self {
        Self(UnitQuaternion::identity())
    }

    /// Normalizes and canonicalizes `(w, x, y, z)`. Fails on zero or non-finite input.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let q = Quaternion::new(w, x, y, z);
        let norm = q.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::invalid(format!(
                "quaternion ({w}, {x}, {y}, {z}) cannot be normalized"
            )));
        }
        Ok(Self::canonical(UnitQuaternion::new_normalize(q)))
    }

    pub fn from_unit_quaternion(q: UnitQuaternion<f64>) -> Self {
        Self::canonical(q)
    }

    /// Rotation matrix to quaternion; the matrix must be orthonormal with det +1.
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        let rot = Rotation3::from_matrix_unchecked(*m);
        Self::canonical(UnitQuaternion::from_rotation_matrix(&rot))
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let axis = nalgebra::Unit::new_normalize(*axis);
        Self::canonical(UnitQuaternion::from_axis_angle(&axis, angle))
    }

    fn canonical(q: UnitQuaternion<f64>) -> Self {
        if q.w < 0.0 {
            Self(UnitQuaternion::new_unchecked(-q.into_inner()))
        } else {
            Self(q)
        }
    }

    pub fn w(&self) -> f64 {
        self.0.w
    }

    pub fn x(&self) -> f64 {
        self.0.i
    }

    pub fn y(&self) -> f64 {
        self.0.j
    }

    pub fn z(&self) -> f64 {
        self.0.k
    }

    pub fn wxyz(&self) -> [f64; 4] {
        [self.0.w, self.0.i, self.0.j, self.0.k]
    }

    pub fn as_unit_quaternion(&self) -> &UnitQuaternion<f64> {
        &self.0
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        self.0.to_rotation_matrix().into_inner()
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    pub fn inverse(&self) -> Self {
        Self::canonical(self.0.inverse())
    }

    /// Rotation angle in radians, in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        let q = self.0.quaternion();
        2.0 * q.vector().norm().atan2(q.w.abs())
    }

    pub fn compose(&self, rhs: &UnitQuat) -> Self {
        Self::canonical(self.0 * rhs.0)
    }
}

impl Default for UnitQuat {
    fn default() -> Self {
        Self::identity()
    }
}

/// Rigid transform `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RigidTransform {
    pub rotation: UnitQuat,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn new(rotation: UnitQuat, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    pub fn inverse(&self) -> Self {
        let inv = self.rotation.inverse();
        Self {
            rotation: inv,
            translation: -inv.rotate(&self.translation),
        }
    }

    /// `self * rhs`: apply `rhs` first.
    pub fn compose(&self, rhs: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation.compose(&rhs.rotation),
            translation: self.rotation.rotate(&rhs.translation) + self.translation,
        }
    }
}

/// Similarity transform `p -> s R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: UnitQuat,
    pub translation: Vec3,
}

impl SimilarityTransform {
    pub fn new(scale: f64, rotation: UnitQuat, translation: Vec3) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::invalid(format!("similarity scale must be > 0, got {scale}")));
        }
        if !translation.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("similarity translation must be finite"));
        }
        Ok(Self {
            scale,
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: UnitQuat::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn rigid(rotation: UnitQuat, translation: Vec3) -> Self {
        Self {
            scale: 1.0,
            rotation,
            translation,
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation.rotate(p) * self.scale + self.translation
    }

    /// Applies the transform to many points using a single rotation matrix.
    pub fn apply_all(&self, points: &[Vec3]) -> Vec<Vec3> {
        let sr = self.rotation.to_matrix() * self.scale;
        points.iter().map(|p| sr * p + self.translation).collect()
    }

    pub fn inverse(&self) -> Self {
        let inv_rot = self.rotation.inverse();
        let inv_scale = 1.0 / self.scale;
        Self {
            scale: inv_scale,
            rotation: inv_rot,
            translation: -(inv_rot.rotate(&self.translation) * inv_scale),
        }
    }

    /// `self * rhs`: apply `rhs` first.
    pub fn compose(&self, rhs: &SimilarityTransform) -> Self {
        Self {
            scale: self.scale * rhs.scale,
            rotation: self.rotation.compose(&rhs.rotation),
            translation: self.apply(&rhs.translation),
        }
    }

    /// Homogeneous 4x4 matrix `[sR t; 0 1]`.
    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        let sr = self.rotation.to_matrix() * self.scale;
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&sr);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn is_rigid(&self) -> bool {
        self.scale == 1.0
    }
}

impl Default for SimilarityTransform {
    fn default() -> Self {
        Self::identity()
    }
}

/// Free-function form of [`SimilarityTransform::apply`].
pub fn apply_similarity(transform: &SimilarityTransform, p: &Vec3) -> Vec3 {
    transform.apply(p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedPose {
    pub t: f64,
    pub position: Vec3,
    pub orientation: UnitQuat,
}

impl TimedPose {
    pub fn new(t: f64, position: Vec3, orientation: UnitQuat) -> Self {
        Self {
            t,
            position,
            orientation,
        }
    }

    /// Pose as a body-to-world rigid transform.
    pub fn as_rigid(&self) -> RigidTransform {
        RigidTransform::new(self.orientation, self.position)
    }
}

/// Timestamped poses with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    poses: Vec<TimedPose>,
}

impl Trajectory {
    pub fn new(poses: Vec<TimedPose>) -> Result<Self> {
        if poses.is_empty() {
            return Err(Error::invalid("trajectory must contain at least one pose"));
        }
        for (i, p) in poses.iter().enumerate() {
            if !p.t.is_finite() || !p.position.iter().all(|c| c.is_finite()) {
                return Err(Error::invalid(format!("pose {i} has non-finite fields")));
            }
        }
        if let Some(i) = poses.windows(2).position(|w| w[1].t <= w[0].t) {
            return Err(Error::invalid(format!(
                "timestamps not strictly increasing at pose {} ({} after {})",
                i + 1,
                poses[i + 1].t,
                poses[i].t
            )));
        }
        Ok(Self { poses })
    }

    pub fn poses(&self) -> &[TimedPose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.poses.iter().map(|p| p.position).collect()
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.poses.iter().map(|p| p.t).collect()
    }

    /// Applies a world-frame similarity: positions map through `transform`,
    /// orientations are pre-multiplied by its rotation.
    pub fn transformed(&self, transform: &SimilarityTransform) -> Self {
        let poses = self
            .poses
            .iter()
            .map(|p| TimedPose {
                t: p.t,
                position: transform.apply(&p.position),
                orientation: transform.rotation.compose(&p.orientation),
            })
            .collect();
        Self { poses }
    }

    /// Median spacing between consecutive timestamps, `None` for a single pose.
    pub fn median_interval(&self) -> Option<f64> {
        if self.poses.len() < 2 {
            return None;
        }
        let gaps: Vec<f64> = self.poses.windows(2).map(|w| w[1].t - w[0].t).collect();
        Some(crate::numeric::median(&gaps))
    }
}

/// 8-bit sRGB color triplet.
pub type Rgb8 = [u8; 3];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub colors: Option<Vec<Rgb8>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid(format!("point {i} is not finite")));
        }
        Ok(Self {
            points,
            colors: None,
        })
    }

    pub fn with_colors(points: Vec<Vec3>, colors: Vec<Rgb8>) -> Result<Self> {
        if colors.len() != points.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} colors for {} points",
                colors.len(),
                points.len()
            )));
        }
        let mut cloud = Self::new(points)?;
        cloud.colors = Some(colors);
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Option<Vec3> {
        if self.points.is_empty() {
            return None;
        }
        let n = self.points.len() as f64;
        let mut sums = [crate::numeric::CompensatedSum::new(); 3];
        for p in &self.points {
            for (acc, c) in sums.iter_mut().zip(p.iter()) {
                acc.add(*c);
            }
        }
        Some(Vec3::new(sums[0].value() / n, sums[1].value() / n, sums[2].value() / n))
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.points.first()?;
        Some(self.points.iter().fold((first, first), |(lo, hi), p| {
            (lo.inf(p), hi.sup(p))
        }))
    }

    pub fn transformed(&self, transform: &SimilarityTransform) -> Self {
        Self {
            points: transform.apply_all(&self.points),
            colors: self.colors.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if let Some(i) = vertices.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid(format!("vertex {i} is not finite")));
        }
        let n = vertices.len();
        if let Some((fi, tri)) = triangles
            .iter()
            .enumerate()
            .find(|(_, t)| t.iter().any(|&v| v >= n))
        {
            return Err(Error::invalid(format!(
                "triangle {fi} references vertex {:?} but mesh has {n} vertices",
                tri
            )));
        }
        Ok(Self {
            vertices,
            triangles,
        })
    }

    pub fn triangle_area(&self, tri: &[usize; 3]) -> f64 {
        let [a, b, c] = tri.map(|i| self.vertices[i]);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| v * factor).collect(),
            triangles: self.triangles.clone(),
        }
    }
}

pub type VoxelIndex = [i64; 3];

/// Sparse occupancy grid: voxel index -> number of points in that voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    voxel_size: f64,
    origin: Vec3,
    counts: BTreeMap<VoxelIndex, usize>,
}

impl VoxelGrid {
    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn index_of(&self, p: &Vec3) -> VoxelIndex {
        voxel_index(p, &self.origin, self.voxel_size)
    }

    pub fn center(&self, index: &VoxelIndex) -> Vec3 {
        voxel_center(index, &self.origin, self.voxel_size)
    }

    pub fn count(&self, index: &VoxelIndex) -> usize {
        self.counts.get(index).copied().unwrap_or(0)
    }

    /// Occupied voxels in ascending index order.
    pub fn iter(&self) -> impl Iterator<Item = (&VoxelIndex, &usize)> {
        self.counts.iter()
    }

    pub fn occupied(&self) -> usize {
        self.counts.len()
    }

    pub fn total_points(&self) -> usize {
        self.counts.values().sum()
    }
}

pub(crate) fn voxel_index(p: &Vec3, origin: &Vec3, voxel_size: f64) -> VoxelIndex {
    let rel = (p - origin) / voxel_size;
    [rel.x.floor() as i64, rel.y.floor() as i64, rel.z.floor() as i64]
}

pub(crate) fn voxel_center(index: &VoxelIndex, origin: &Vec3, voxel_size: f64) -> Vec3 {
    Vec3::new(
        origin.x + (index[0] as f64 + 0.5) * voxel_size,
        origin.y + (index[1] as f64 + 0.5) * voxel_size,
        origin.z + (index[2] as f64 + 0.5) * voxel_size,
    )
}

/// Counts points per voxel with `index = floor((p - origin) / voxel_size)`.
/// `origin` defaults to the cloud's minimum corner.
pub fn voxelize(cloud: &PointCloud, voxel_size: f64, origin: Option<Vec3>) -> Result<VoxelGrid> {
    if !(voxel_size.is_finite() && voxel_size > 0.0) {
        return Err(Error::invalid(format!("voxel size must be > 0, got {voxel_size}")));
    }
    let (lo, _) = cloud.bounds().ok_or(Error::EmptyCloud)?;
    let origin = origin.unwrap_or(lo);
    let mut counts = BTreeMap::new();
    for p in &cloud.points {
        *counts.entry(voxel_index(p, &origin, voxel_size)).or_insert(0) += 1;
    }
    Ok(VoxelGrid {
        voxel_size,
        origin,
        counts,
    })
}

/// Pinhole camera with a world-to-camera pose. Image domain is `[0,width) x [0,height)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraPinhole {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub pose: RigidTransform,
}

impl CameraPinhole {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        pose: RigidTransform,
    ) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(Error::invalid(format!("focal lengths must be > 0, got ({fx}, {fy})")));
        }
        if !(cx > 0.0 && cx < width as f64 && cy > 0.0 && cy < height as f64) {
            return Err(Error::invalid(format!(
                "principal point ({cx}, {cy}) outside image {width}x{height}"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            pose,
        })
    }

    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        self.pose.apply(p)
    }

    /// Pixel coordinates of a world point, `None` when it is not in front of the camera.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64)> {
        let pc = self.to_camera(p);
        if pc.z <= 0.0 {
            return None;
        }
        Some((self.fx * pc.x / pc.z + self.cx, self.fy * pc.y / pc.z + self.cy))
    }

    pub fn in_domain(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && u < self.width as f64 && v >= 0.0 && v < self.height as f64
    }

    /// Positive depth and projection inside the image domain.
    pub fn sees(&self, p: &Vec3) -> bool {
        self.project(p).is_some_and(|(u, v)| self.in_domain(u, v))
    }
}
