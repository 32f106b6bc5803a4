#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use rand::{rngs::StdRng, Rng};
use rand_distr::{Distribution, StandardNormal};

use recon_eval::io::colmap::{
    CameraModel, ColmapCamera, ColmapImage, ColmapPoint3D, ColmapSparseModel, Point2D, TrackElement,
};
use recon_eval::{Image8, PointCloud, SimilarityTransform, TimedPose, Trajectory, TriangleMesh, UnitQuat, Vec3};

pub fn random_unit_quat(rng: &mut StdRng) -> UnitQuat {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
        if let Ok(u) = UnitQuat::from_wxyz(q[0], q[1], q[2], q[3]) {
            return u;
        }
    }
}

pub fn random_vec(rng: &mut StdRng, half_extent: f64) -> Vec3 {
    Vec3::new(
        rng.random_range(-half_extent..half_extent),
        rng.random_range(-half_extent..half_extent),
        rng.random_range(-half_extent..half_extent),
    )
}

pub fn random_similarity(rng: &mut StdRng) -> SimilarityTransform {
    let scale = 10f64.powf(rng.random_range(-1.0..1.0));
    SimilarityTransform::new(scale, random_unit_quat(rng), random_vec(rng, 10.0)).unwrap()
}

pub fn random_rigid(rng: &mut StdRng) -> SimilarityTransform {
    SimilarityTransform::rigid(random_unit_quat(rng), random_vec(rng, 10.0))
}

pub fn random_cloud(rng: &mut StdRng, n: usize, half_extent: f64) -> PointCloud {
    PointCloud::new((0..n).map(|_| random_vec(rng, half_extent)).collect()).unwrap()
}

/// Smooth random walk with slowly varying orientation, 10 Hz.
pub fn random_trajectory(rng: &mut StdRng, n: usize) -> Trajectory {
    let mut p = random_vec(rng, 1.0);
    let mut q = random_unit_quat(rng);
    let mut poses = Vec::with_capacity(n);
    for i in 0..n {
        poses.push(TimedPose::new(i as f64 * 0.1, p, q));
        p += random_vec(rng, 0.1);
        q = q.compose(&UnitQuat::from_axis_angle(&random_vec(rng, 1.0), rng.random_range(0.0..0.05)));
    }
    Trajectory::new(poses).unwrap()
}

/// Textbook closed-form similarity alignment, `dst ~ c R src + t`.
pub fn umeyama_oracle(src: &[Vec3], dst: &[Vec3], with_scale: bool) -> (f64, Matrix3<f64>, Vector3<f64>) {
    let n = src.len() as f64;
    let mx = src.iter().sum::<Vec3>() / n;
    let my = dst.iter().sum::<Vec3>() / n;
    let mut sigma = Matrix3::zeros();
    let mut var_x = 0.0;
    for (x, y) in src.iter().zip(dst) {
        sigma += (y - my) * (x - mx).transpose();
        var_x += (x - mx).norm_squared();
    }
    sigma /= n;
    var_x /= n;
    let svd = sigma.svd(true, true);
    let u = svd.u.unwrap();
    let v_t = svd.v_t.unwrap();
    let flip = u.determinant() * v_t.determinant() < 0.0;
    let smallest = svd.singular_values.imin();
    let mut sflip = Matrix3::identity();
    if flip {
        sflip[(smallest, smallest)] = -1.0;
    }
    let d = Matrix3::from_diagonal(&svd.singular_values);
    let r = u * sflip * v_t;
    let c = if with_scale { (d * sflip).trace() / var_x } else { 1.0 };
    let t = my - c * r * mx;
    (c, r, t)
}

pub fn icosphere(radius: f64, subdivisions: usize) -> TriangleMesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Vec3>| {
            *midpoint.entry((a.min(b), a.max(b))).or_insert_with(|| {
                vertices.push(((vertices[a] + vertices[b]) / 2.0).normalize());
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    TriangleMesh::new(vertices.into_iter().map(|v| v * radius).collect(), faces).unwrap()
}

pub fn unit_cube() -> TriangleMesh {
    let vertices = (0..8)
        .map(|i| Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
        .collect();
    let quads = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
    let triangles = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    TriangleMesh::new(vertices, triangles).unwrap()
}

pub fn random_image(rng: &mut StdRng, w: u32, h: u32, c: u8) -> Image8 {
    Image8::from_fn(w, h, c, |_, _, _| rng.random()).unwrap()
}

/// Consistent sparse model: every observation and track element cross-references.
pub fn random_colmap_model(rng: &mut StdRng) -> ColmapSparseModel {
    let mut model = ColmapSparseModel::default();
    let n_cams = rng.random_range(1..4u32);
    for id in 1..=n_cams {
        let simple = rng.random_bool(0.5);
        let width = rng.random_range(100..4000u32);
        let height = rng.random_range(100..3000u32);
        let fx: f64 = rng.random_range(100.0..5000.0);
        model.cameras.insert(
            id,
            ColmapCamera {
                id,
                model: if simple { CameraModel::SimplePinhole } else { CameraModel::Pinhole },
                width,
                height,
                fx,
                fy: if simple { fx } else { rng.random_range(100.0..5000.0) },
                cx: rng.random_range(1.0..width as f64 - 1.0),
                cy: rng.random_range(1.0..height as f64 - 1.0),
            },
        );
    }
    let n_images = rng.random_range(1..6u32);
    let n_points = rng.random_range(0..30u64);
    for id in 1..=n_images {
        let q = random_unit_quat(rng).wxyz();
        let t = random_vec(rng, 5.0);
        model.images.insert(
            id,
            ColmapImage {
                id,
                qvec: q,
                tvec: [t.x, t.y, t.z],
                camera_id: rng.random_range(1..=n_cams),
                name: format!("img_{id:04}.png"),
                points2d: Vec::new(),
            },
        );
    }
    for pid in 1..=n_points {
        let mut track = Vec::new();
        for _ in 0..rng.random_range(0..4) {
            let image_id = rng.random_range(1..=n_images);
            let image = model.images.get_mut(&image_id).unwrap();
            image.points2d.push(Point2D {
                x: rng.random_range(0.0..1000.0),
                y: rng.random_range(0.0..1000.0),
                point3d_id: Some(pid),
            });
            track.push(TrackElement {
                image_id,
                point2d_idx: (image.points2d.len() - 1) as u32,
            });
        }
        model.points3d.insert(
            pid,
            ColmapPoint3D {
                id: pid,
                xyz: random_vec(rng, 20.0),
                rgb: rng.random(),
                error: rng.random_range(0.0..3.0),
                track,
            },
        );
    }
    for image in model.images.values_mut() {
        for _ in 0..rng.random_range(0..3) {
            image.points2d.push(Point2D {
                x: rng.random_range(0.0..1000.0),
                y: rng.random_range(0.0..1000.0),
                point3d_id: None,
            });
        }
    }
    model
}
