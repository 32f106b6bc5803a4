//! Absolute and relative trajectory error after timestamp association.

use rayon::prelude::*;

use crate::alignment::umeyama_align;
use crate::error::{Error, Result};
use crate::geometry::{SimilarityTransform, Trajectory, Vec3};
use crate::numeric::{compensated_mean, compensated_sum, median};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlignmentMode {
    /// Similarity (scale, rotation, translation). Needed for monocular reconstructions.
    #[default]
    Sim3,
    /// Rigid only.
    Se3,
}

/// Default association window: half the median frame interval of `gt`.
pub fn default_max_dt(gt: &Trajectory) -> Option<f64> {
    gt.median_interval().map(|dt| 0.5 * dt)
}

/// Pairs `(est_idx, gt_idx)` with `|t_est - t_gt| <= max_dt`, sorted by `est_idx`.
///
/// Candidate pairs are accepted greedily by ascending `|dt|` (ties: lower gt
/// index, then lower est index); every pose is used at most once.
pub fn associate(est: &Trajectory, gt: &Trajectory, max_dt: f64) -> Result<Vec<(usize, usize)>> {
    if !(max_dt.is_finite() && max_dt > 0.0) {
        return Err(Error::invalid(format!("max_dt must be > 0, got {max_dt}")));
    }
    let gt_t = gt.timestamps();
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (ei, pose) in est.poses().iter().enumerate() {
        let start = gt_t.partition_point(|&t| t < pose.t - max_dt);
        for (gi, &t) in gt_t.iter().enumerate().skip(start) {
            let dt = (t - pose.t).abs();
            if t > pose.t + max_dt {
                break;
            }
            if dt <= max_dt {
                candidates.push((dt, gi, ei));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut est_used = vec![false; est.len()];
    let mut gt_used = vec![false; gt.len()];
    let mut pairs = Vec::new();
    for (_, gi, ei) in candidates {
        if !est_used[ei] && !gt_used[gi] {
            est_used[ei] = true;
            gt_used[gi] = true;
            pairs.push((ei, gi));
        }
    }
    if pairs.is_empty() {
        return Err(Error::NoTemporalOverlap);
    }
    pairs.sort_unstable();
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AteResult {
    pub rmse: f64,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
    /// Per associated pair, in meters, ordered by estimated pose index.
    pub per_frame_errors: Vec<f64>,
    pub pairs: Vec<(usize, usize)>,
    /// Maps estimated positions into the ground-truth frame.
    pub alignment: SimilarityTransform,
}

/// Absolute trajectory error after aligning estimated positions onto ground truth.
pub fn ate(est: &Trajectory, gt: &Trajectory, mode: AlignmentMode, max_dt: f64) -> Result<AteResult> {
    let pairs = associate(est, gt, max_dt)?;
    if pairs.len() < 3 {
        return Err(Error::Insufficient(format!(
            "ATE needs at least 3 associated poses, got {}",
            pairs.len()
        )));
    }
    let src: Vec<Vec3> = pairs.iter().map(|&(e, _)| est.poses()[e].position).collect();
    let dst: Vec<Vec3> = pairs.iter().map(|&(_, g)| gt.poses()[g].position).collect();
    let alignment = umeyama_align(&src, &dst, mode == AlignmentMode::Sim3)?;
    let aligned = alignment.apply_all(&src);
    let per_frame_errors: Vec<f64> = aligned
        .par_iter()
        .zip(dst.par_iter())
        .map(|(a, g)| (g - a).norm())
        .collect();
    Ok(summarize_ate(per_frame_errors, pairs, alignment))
}

fn summarize_ate(errors: Vec<f64>, pairs: Vec<(usize, usize)>, alignment: SimilarityTransform) -> AteResult {
    let mse = compensated_sum(errors.iter().map(|e| e * e)) / errors.len() as f64;
    AteResult {
        rmse: mse.sqrt(),
        mean: compensated_mean(&errors),
        median: median(&errors),
        max: errors.iter().copied().fold(0.0, f64::max),
        per_frame_errors: errors,
        pairs,
        alignment,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeError {
    /// Translational error, meters.
    pub trans: f64,
    /// Rotational error, radians.
    pub rot: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RpeResult {
    pub mean_trans: f64,
    pub mean_rot: f64,
    pub rmse_trans: f64,
    pub per_pair_errors: Vec<RelativeError>,
    pub delta: usize,
}

/// Relative pose error over associated pose pairs `delta` apart:
/// `E_i = (gt_i^-1 gt_{i+d})^-1 (est_i^-1 est_{i+d})`.
pub fn rpe(est: &Trajectory, gt: &Trajectory, delta: usize, max_dt: f64) -> Result<RpeResult> {
    if delta == 0 {
        return Err(Error::invalid("RPE delta must be >= 1"));
    }
    let pairs = associate(est, gt, max_dt)?;
    if pairs.len() < delta + 1 {
        return Err(Error::Insufficient(format!(
            "RPE with delta {delta} needs at least {} associated poses, got {}",
            delta + 1,
            pairs.len()
        )));
    }
    let est_p = est.poses();
    let gt_p = gt.poses();
    let per_pair_errors: Vec<RelativeError> = (0..pairs.len() - delta)
        .into_par_iter()
        .map(|i| {
            let (ea, ga) = pairs[i];
            let (eb, gb) = pairs[i + delta];
            let rel_gt = gt_p[ga].as_rigid().inverse().compose(&gt_p[gb].as_rigid());
            let rel_est = est_p[ea].as_rigid().inverse().compose(&est_p[eb].as_rigid());
            let err = rel_gt.inverse().compose(&rel_est);
            RelativeError {
                trans: err.translation.norm(),
                rot: err.rotation.angle(),
            }
        })
        .collect();
    let trans: Vec<f64> = per_pair_errors.iter().map(|e| e.trans).collect();
    let rot: Vec<f64> = per_pair_errors.iter().map(|e| e.rot).collect();
    Ok(RpeResult {
        mean_trans: compensated_mean(&trans),
        mean_rot: compensated_mean(&rot),
        rmse_trans: (compensated_sum(trans.iter().map(|t| t * t)) / trans.len() as f64).sqrt(),
        per_pair_errors,
        delta,
    })
}
