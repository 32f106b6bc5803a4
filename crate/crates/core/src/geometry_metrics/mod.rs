//! Point-cloud comparison metrics and mesh statistics.
//!
//! Inputs are in meters. Distances are reported in millimeters, roughness in
//! squared meters, mesh areas and curvatures in the units selected by the
//! caller's meter-to-centimeter factor.

mod mesh;

pub use mesh::{mesh_stats, MeshStats};

use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Vec3};
use crate::numeric::compensated_sum;
use crate::spatial::SpatialIndex;

pub const METERS_TO_MM: f64 = 1000.0;
pub const DEFAULT_ROUGHNESS_NEIGHBORS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudMetrics {
    pub chamfer_rms_mm: f64,
    pub mean_nn_distance_mm: f64,
    /// Mean squared distance to the local total-least-squares plane, m^2.
    pub surface_roughness: f64,
}

/// Metrics of `cloud` against `reference`; both are expected in the same frame.
pub fn cloud_metrics(cloud: &PointCloud, reference: &PointCloud, k: usize) -> Result<CloudMetrics> {
    Ok(CloudMetrics {
        chamfer_rms_mm: chamfer_rms(cloud, reference)?,
        mean_nn_distance_mm: mean_nn_distance(cloud)?,
        surface_roughness: surface_roughness(cloud, k)?,
    })
}

fn sum_sq_nn(from: &[Vec3], to: &SpatialIndex) -> f64 {
    let sq: Vec<f64> = from
        .par_iter()
        .map(|p| {
            let d = to.nearest(p).distance;
            d * d
        })
        .collect();
    compensated_sum(sq)
}

/// Symmetric Chamfer RMS in millimeters:
/// `sqrt((sum_a d(p,b)^2 + sum_b d(q,a)^2) / (|a| + |b|))`.
pub fn chamfer_rms(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let ia = SpatialIndex::new(&a.points)?;
    let ib = SpatialIndex::new(&b.points)?;
    // Two separate sums joined by one addition keeps the metric exactly symmetric.
    let total = sum_sq_nn(&a.points, &ib) + sum_sq_nn(&b.points, &ia);
    Ok((total / (a.len() + b.len()) as f64).sqrt() * METERS_TO_MM)
}

/// Mean distance to the nearest other point, meters.
pub fn mean_nn_distance_m(a: &PointCloud) -> Result<f64> {
    if a.len() < 2 {
        return Err(Error::Insufficient(format!(
            "nearest-neighbor spacing needs at least 2 points, got {}",
            a.len()
        )));
    }
    let index = SpatialIndex::new(&a.points)?;
    let d: Vec<f64> = (0..a.len())
        .into_par_iter()
        .map(|i| index.nearest_other(i).map_or(0.0, |n| n.distance))
        .collect();
    Ok(compensated_sum(d) / a.len() as f64)
}

/// Mean distance to the nearest other point, millimeters.
pub fn mean_nn_distance(a: &PointCloud) -> Result<f64> {
    Ok(mean_nn_distance_m(a)? * METERS_TO_MM)
}

/// Unit normal of the total-least-squares plane through `points` and its centroid.
pub fn fit_plane(points: &[Vec3]) -> (Vec3, Vec3) {
    let n = points.len() as f64;
    let centroid = points.iter().sum::<Vec3>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let min = eig.eigenvalues.imin();
    (centroid, eig.eigenvectors.column(min).normalize())
}

/// Mean over points of the squared orthogonal distance to the plane fitted to
/// their `k` nearest other points (m^2).
pub fn surface_roughness(a: &PointCloud, k: usize) -> Result<f64> {
    if k < 3 {
        return Err(Error::invalid(format!("roughness needs k >= 3, got {k}")));
    }
    if a.len() < k + 1 {
        return Err(Error::Insufficient(format!(
            "roughness with k = {k} needs at least {} points, got {}",
            k + 1,
            a.len()
        )));
    }
    let index = SpatialIndex::new(&a.points)?;
    let per_point: Vec<f64> = (0..a.len())
        .into_par_iter()
        .map(|i| {
            let p = a.points[i];
            let neighbors: Vec<Vec3> = index
                .k_nearest(&p, k + 1)
                .into_iter()
                .filter(|n| n.index != i)
                .take(k)
                .map(|n| a.points[n.index])
                .collect();
            let (c, normal) = fit_plane(&neighbors);
            let d = (p - c).dot(&normal);
            d * d
        })
        .collect();
    Ok(compensated_sum(per_point) / a.len() as f64)
}
