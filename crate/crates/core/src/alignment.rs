//! Closed-form similarity alignment of corresponded point sets, RMS-radius
//! scale normalization between clouds, and point-to-point rigid ICP.

use nalgebra::Matrix3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, SimilarityTransform, UnitQuat, Vec3};
use crate::numeric::compensated_sum;
use crate::spatial::SpatialIndex;

/// Relative singular-value threshold below which the cross-covariance is
/// considered rank deficient.
const RANK_TOLERANCE: f64 = 1e-10;

fn mean(points: &[Vec3]) -> Vec3 {
    let n = points.len() as f64;
    Vec3::new(
        compensated_sum(points.iter().map(|p| p.x)) / n,
        compensated_sum(points.iter().map(|p| p.y)) / n,
        compensated_sum(points.iter().map(|p| p.z)) / n,
    )
}

/// Least-squares transform minimizing `sum |dst_i - (s R src_i + t)|^2`.
///
/// With `with_scale` off the scale is fixed to 1 (rigid fit). The rotation is
/// always proper: when the SVD factors imply a reflection, the axis with the
/// smallest singular value is flipped. Planar inputs (rank 2) are accepted;
/// collinear or coincident inputs are rejected.
pub fn umeyama_align(src: &[Vec3], dst: &[Vec3], with_scale: bool) -> Result<SimilarityTransform> {
    if src.len() != dst.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} source points vs {} destination points",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 3 {
        return Err(Error::Insufficient(format!(
            "alignment needs at least 3 point pairs, got {}",
            src.len()
        )));
    }
    let n = src.len() as f64;
    let mu_src = mean(src);
    let mu_dst = mean(dst);

    let mut cov = Matrix3::zeros();
    let mut var_src = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let sc = s - mu_src;
        let dc = d - mu_dst;
        cov += dc * sc.transpose();
        var_src += sc.norm_squared();
    }
    cov /= n;
    var_src /= n;

    let svd = cov.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Degenerate("SVD did not converge".into())),
    };
    let sv = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let (largest, middle, smallest) = (sv[order[0]], sv[order[1]], order[2]);
    if largest.is_nan() || largest <= 0.0 || middle <= RANK_TOLERANCE * largest {
        return Err(Error::Degenerate(
            "degenerate configuration: point sets are collinear or coincident".into(),
        ));
    }

    let mut sign = [1.0f64; 3];
    if u.determinant() * v_t.determinant() < 0.0 {
        sign[smallest] = -1.0;
    }
    let s_mat = Matrix3::from_diagonal(&Vec3::new(sign[0], sign[1], sign[2]));
    let rotation = u * s_mat * v_t;

    let scale = if with_scale {
        let trace: f64 = (0..3).map(|i| sv[i] * sign[i]).sum();
        trace / var_src
    } else {
        1.0
    };
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::Degenerate(format!("non-positive scale estimate {scale}")));
    }
    let rotation_q = UnitQuat::from_matrix(&rotation);
    let translation = mu_dst - rotation * mu_src * scale;
    SimilarityTransform::new(scale, rotation_q, translation)
}

/// Root-mean-square residual `|dst_i - T src_i|`.
pub fn alignment_rmse(src: &[Vec3], dst: &[Vec3], transform: &SimilarityTransform) -> f64 {
    let moved = transform.apply_all(src);
    let sq = moved.iter().zip(dst).map(|(a, b)| (a - b).norm_squared());
    (compensated_sum(sq) / src.len().max(1) as f64).sqrt()
}

/// `sqrt(mean |p - centroid|^2)`.
pub fn rms_radius(cloud: &PointCloud) -> Result<f64> {
    let c = cloud.centroid().ok_or(Error::EmptyCloud)?;
    let sq = cloud.points.iter().map(|p| (p - c).norm_squared());
    Ok((compensated_sum(sq) / cloud.len() as f64).sqrt())
}

/// Scales `cloud` about its centroid so its RMS radius matches `reference`.
/// Returns the applied factor and the scaled cloud.
pub fn rms_scale_normalize(cloud: &PointCloud, reference: &PointCloud) -> Result<(f64, PointCloud)> {
    let r_ref = rms_radius(reference)?;
    let r_cloud = rms_radius(cloud)?;
    if r_cloud == 0.0 || r_ref == 0.0 {
        return Err(Error::Degenerate("cloud has zero RMS radius (all points identical)".into()));
    }
    let scale = r_ref / r_cloud;
    if scale == 1.0 {
        return Ok((scale, cloud.clone()));
    }
    let c = cloud.centroid().ok_or(Error::EmptyCloud)?;
    let points = cloud.points.iter().map(|p| c + (p - c) * scale).collect();
    Ok((
        scale,
        PointCloud {
            points,
            colors: cloud.colors.clone(),
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpConfig {
    /// Correspondences farther than this (meters) are discarded.
    pub max_correspondence_dist: f64,
    pub max_iterations: usize,
    /// Stop when the inlier RMSE improves by less than this fraction.
    pub convergence_eps: f64,
}

impl IcpConfig {
    pub const DEFAULT_MAX_ITERATIONS: usize = 50;
    pub const DEFAULT_CONVERGENCE_EPS: f64 = 1e-6;
    /// Default correspondence threshold in units of the reference's mean NN spacing.
    pub const DEFAULT_THRESHOLD_FACTOR: f64 = 5.0;

    pub fn new(max_correspondence_dist: f64, max_iterations: usize, convergence_eps: f64) -> Result<Self> {
        let cfg = Self {
            max_correspondence_dist,
            max_iterations,
            convergence_eps,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Threshold = 5 x mean nearest-neighbor spacing of `reference`.
    pub fn for_reference(reference: &PointCloud) -> Result<Self> {
        let spacing = crate::geometry_metrics::mean_nn_distance_m(reference)?;
        Self::new(
            Self::DEFAULT_THRESHOLD_FACTOR * spacing,
            Self::DEFAULT_MAX_ITERATIONS,
            Self::DEFAULT_CONVERGENCE_EPS,
        )
    }

    fn validate(&self) -> Result<()> {
        if !(self.max_correspondence_dist.is_finite() && self.max_correspondence_dist > 0.0) {
            return Err(Error::invalid("max_correspondence_dist must be > 0"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be > 0"));
        }
        if !(self.convergence_eps.is_finite() && self.convergence_eps > 0.0) {
            return Err(Error::invalid("convergence_eps must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    /// Rigid transform (scale 1) mapping source into the destination frame.
    pub transform: SimilarityTransform,
    /// Fraction of source points with a correspondence within the threshold.
    pub fitness: f64,
    pub inlier_rmse: f64,
    /// Correspondence/refit rounds executed, including the one that detected convergence.
    pub iterations: usize,
    /// Inlier RMSE of each accepted state, starting with the initial transform.
    pub rmse_history: Vec<f64>,
}

struct Correspondences {
    src_idx: Vec<usize>,
    dst_idx: Vec<usize>,
    rmse: f64,
}

fn correspond(src: &[Vec3], index: &SpatialIndex, transform: &SimilarityTransform, max_dist: f64) -> Correspondences {
    let moved = transform.apply_all(src);
    let nearest: Vec<_> = moved.par_iter().map(|p| index.nearest(p)).collect();
    let mut src_idx = Vec::new();
    let mut dst_idx = Vec::new();
    let mut sq = Vec::new();
    for (i, n) in nearest.iter().enumerate() {
        if n.distance <= max_dist {
            src_idx.push(i);
            dst_idx.push(n.index);
            sq.push(n.distance * n.distance);
        }
    }
    let rmse = if sq.is_empty() {
        0.0
    } else {
        (compensated_sum(sq.iter().copied()) / sq.len() as f64).sqrt()
    };
    Correspondences {
        src_idx,
        dst_idx,
        rmse,
    }
}

/// Point-to-point rigid ICP.
///
/// Each iteration refits a rigid transform on the current inlier pairs and
/// re-associates. An update is accepted only if the inlier RMSE does not
/// increase, so `rmse_history` is non-increasing. Zero correspondences at the
/// initial transform yield fitness 0 and the initial transform.
pub fn icp_rigid(src: &PointCloud, dst: &PointCloud, cfg: &IcpConfig, init: &SimilarityTransform) -> Result<IcpResult> {
    cfg.validate()?;
    if src.is_empty() || dst.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let index = SpatialIndex::new(&dst.points)?;
    let n_src = src.len() as f64;

    let mut transform = *init;
    let mut current = correspond(&src.points, &index, &transform, cfg.max_correspondence_dist);
    if current.src_idx.is_empty() {
        return Ok(IcpResult {
            transform: *init,
            fitness: 0.0,
            inlier_rmse: 0.0,
            iterations: 0,
            rmse_history: Vec::new(),
        });
    }
    let mut history = vec![current.rmse];
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        iterations += 1;
        if current.rmse == 0.0 {
            break;
        }
        let s: Vec<Vec3> = current.src_idx.iter().map(|&i| src.points[i]).collect();
        let d: Vec<Vec3> = current.dst_idx.iter().map(|&i| dst.points[i]).collect();
        let candidate = match umeyama_align(&s, &d, false) {
            Ok(t) => t,
            Err(_) => break,
        };
        let next = correspond(&src.points, &index, &candidate, cfg.max_correspondence_dist);
        if next.src_idx.is_empty() || next.rmse > current.rmse {
            break;
        }
        let prev_rmse = current.rmse;
        transform = candidate;
        current = next;
        history.push(current.rmse);
        if prev_rmse - current.rmse <= cfg.convergence_eps * prev_rmse {
            break;
        }
    }

    Ok(IcpResult {
        transform,
        fitness: current.src_idx.len() as f64 / n_src,
        inlier_rmse: current.rmse,
        iterations,
        rmse_history: history,
    })
}
