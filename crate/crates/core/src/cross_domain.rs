//! Weak-voxel detection on an underwater cloud and greedy selection of in-air
//! views that cover those voxels.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{voxel_center, voxel_index, voxelize, CameraPinhole, PointCloud, Vec3, VoxelIndex};

pub const DEFAULT_VOXEL_SIZE: f64 = 0.02;
pub const DEFAULT_WEAK_THRESHOLD: usize = 3;
/// Upper bound on voxels enumerated in bounding-box mode.
pub const MAX_ENUMERATED_VOXELS: u64 = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakVoxel {
    pub index: VoxelIndex,
    pub center: Vec3,
    pub count: usize,
}

/// Voxels holding fewer than `threshold` points, sorted by index.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakVoxelSet {
    pub voxels: Vec<WeakVoxel>,
    pub voxel_size: f64,
    pub origin: Vec3,
    pub threshold: usize,
}

impl WeakVoxelSet {
    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn centers(&self) -> Vec<Vec3> {
        self.voxels.iter().map(|v| v.center).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakVoxelConfig {
    pub voxel_size: f64,
    pub threshold: usize,
    /// Grid origin; the cloud's minimum corner when unset.
    pub origin: Option<Vec3>,
    /// When set, empty voxels overlapping this box are also reported (count 0).
    pub empty_bounds: Option<(Vec3, Vec3)>,
}

impl Default for WeakVoxelConfig {
    fn default() -> Self {
        Self {
            voxel_size: DEFAULT_VOXEL_SIZE,
            threshold: DEFAULT_WEAK_THRESHOLD,
            origin: None,
            empty_bounds: None,
        }
    }
}

/// Occupied voxels with fewer than `threshold` points.
pub fn find_weak_voxels(cloud: &PointCloud, voxel_size: f64, threshold: usize) -> Result<WeakVoxelSet> {
    find_weak_voxels_with(
        cloud,
        &WeakVoxelConfig {
            voxel_size,
            threshold,
            ..WeakVoxelConfig::default()
        },
    )
}

pub fn find_weak_voxels_with(cloud: &PointCloud, config: &WeakVoxelConfig) -> Result<WeakVoxelSet> {
    if config.threshold == 0 {
        return Err(Error::invalid("weak-voxel threshold must be >= 1"));
    }
    let grid = voxelize(cloud, config.voxel_size, config.origin)?;
    let origin = grid.origin();
    let size = grid.voxel_size();
    let mut voxels: Vec<WeakVoxel> = grid
        .iter()
        .filter(|(_, &count)| count < config.threshold)
        .map(|(index, &count)| WeakVoxel {
            index: *index,
            center: grid.center(index),
            count,
        })
        .collect();

    if let Some((lo, hi)) = config.empty_bounds {
        if !(lo.iter().chain(hi.iter()).all(|c| c.is_finite()) && (0..3).all(|a| lo[a] <= hi[a])) {
            return Err(Error::invalid("empty-voxel bounds must be finite with lo <= hi"));
        }
        let a = voxel_index(&lo, &origin, size);
        let b = voxel_index(&hi, &origin, size);
        let total = (0..3)
            .map(|k| (b[k] - a[k] + 1) as u64)
            .try_fold(1u64, |acc, n| acc.checked_mul(n))
            .filter(|&n| n <= MAX_ENUMERATED_VOXELS)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "bounding box spans more than {MAX_ENUMERATED_VOXELS} voxels"
                ))
            })?;
        voxels.reserve(total as usize);
        for x in a[0]..=b[0] {
            for y in a[1]..=b[1] {
                for z in a[2]..=b[2] {
                    let index = [x, y, z];
                    if grid.count(&index) == 0 {
                        voxels.push(WeakVoxel {
                            index,
                            center: voxel_center(&index, &origin, size),
                            count: 0,
                        });
                    }
                }
            }
        }
        voxels.sort_by_key(|v| v.index);
    }

    Ok(WeakVoxelSet {
        voxels,
        voxel_size: size,
        origin,
        threshold: config.threshold,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateImage {
    pub id: String,
    pub camera: CameraPinhole,
}

/// Optional camera-frame depth band `[min, max]` applied on top of the visibility test.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DepthBand {
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl DepthBand {
    fn contains(&self, z: f64) -> bool {
        self.min.is_none_or(|m| z >= m) && self.max.is_none_or(|m| z <= m)
    }
}

/// Positions in `weak.voxels` of the centers `img` sees.
pub fn visible_voxels(img: &CandidateImage, weak: &WeakVoxelSet, band: DepthBand) -> Vec<usize> {
    weak.voxels
        .iter()
        .enumerate()
        .filter(|(_, v)| {
            img.camera.sees(&v.center) && band.contains(img.camera.to_camera(&v.center).z)
        })
        .map(|(i, _)| i)
        .collect()
}

/// Number of weak-voxel centers with positive depth that project inside the image.
pub fn score_image(img: &CandidateImage, weak: &WeakVoxelSet) -> usize {
    weak.voxels.iter().filter(|v| img.camera.sees(&v.center)).count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub selected: Vec<String>,
    /// Newly covered weak voxels per selection step.
    pub marginal_gains: Vec<usize>,
    pub covered: usize,
    pub total_weak: usize,
    /// Cumulative covered fraction after each step.
    pub coverage_curve: Vec<f64>,
    pub uncovered: Vec<VoxelIndex>,
}

/// Greedy max coverage: repeatedly take the candidate covering the most
/// uncovered weak voxels, until the gain is zero or `budget` images are chosen.
/// Ties go to the lexicographically smallest id.
pub fn greedy_select(candidates: &[CandidateImage], weak: &WeakVoxelSet, budget: Option<usize>) -> SelectionResult {
    greedy_select_with(candidates, weak, budget, DepthBand::default())
}

pub fn greedy_select_with(
    candidates: &[CandidateImage],
    weak: &WeakVoxelSet,
    budget: Option<usize>,
    band: DepthBand,
) -> SelectionResult {
    let coverage: Vec<Vec<usize>> = candidates.par_iter().map(|c| visible_voxels(c, weak, band)).collect();
    let sets: Vec<&[usize]> = coverage.iter().map(Vec::as_slice).collect();
    let ids: Vec<&str> = candidates.iter().map(|c| c.id.as_str()).collect();
    let (order, gains, covered_mask) = greedy_max_coverage(&sets, &ids, weak.len(), budget);

    let total = weak.len();
    let mut running = 0;
    let coverage_curve = gains
        .iter()
        .map(|g| {
            running += g;
            running as f64 / total as f64
        })
        .collect();
    SelectionResult {
        selected: order.iter().map(|&i| candidates[i].id.clone()).collect(),
        covered: gains.iter().sum(),
        marginal_gains: gains,
        total_weak: total,
        coverage_curve,
        uncovered: weak
            .voxels
            .iter()
            .zip(&covered_mask)
            .filter(|(_, &c)| !c)
            .map(|(v, _)| v.index)
            .collect(),
    }
}

/// Set-cover core over element ids `0..universe`. Returns chosen set positions,
/// their gains, and the covered mask.
pub fn greedy_max_coverage(
    sets: &[&[usize]],
    ids: &[&str],
    universe: usize,
    budget: Option<usize>,
) -> (Vec<usize>, Vec<usize>, Vec<bool>) {
    let mut covered = vec![false; universe];
    let mut taken = vec![false; sets.len()];
    let mut order = Vec::new();
    let mut gains = Vec::new();
    let limit = budget.unwrap_or(usize::MAX);
    while order.len() < limit {
        let best = (0..sets.len())
            .into_par_iter()
            .filter(|&i| !taken[i])
            .map(|i| (sets[i].iter().filter(|&&e| !covered[e]).count(), i))
            .filter(|&(g, _)| g > 0)
            .reduce_with(|a, b| {
                let a_wins = a.0 > b.0 || (a.0 == b.0 && (ids[a.1], a.1) < (ids[b.1], b.1));
                if a_wins {
                    a
                } else {
                    b
                }
            });
        let Some((gain, i)) = best else { break };
        taken[i] = true;
        for &e in sets[i] {
            covered[e] = true;
        }
        order.push(i);
        gains.push(gain);
    }
    (order, gains, covered)
}
