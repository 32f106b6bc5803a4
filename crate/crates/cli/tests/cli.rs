use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{rngs::StdRng, Rng, SeedableRng};
use serde_json::Value;
use tempfile::TempDir;

use recon_eval::alignment::{icp_rigid, rms_scale_normalize, IcpConfig};
use recon_eval::geometry_metrics::cloud_metrics;
use recon_eval::io::colmap::{write_colmap_text, CameraModel, ColmapCamera, ColmapImage, ColmapSparseModel};
use recon_eval::io::image::write_png;
use recon_eval::io::ply::{write_ply_cloud, write_ply_mesh, PlyEncoding};
use recon_eval::io::trajectory::{write_trajectory, QuaternionOrder};
use recon_eval::{Image8, PointCloud, SimilarityTransform, TimedPose, Trajectory, TriangleMesh, UnitQuat, Vec3};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_recon-eval"));
    c.env_remove("RECON_EVAL_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn recon-eval")
}

fn json_ok(args: &[&str]) -> Value {
    let out = run(args);
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("report is JSON")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn random_cloud(rng: &mut StdRng, n: usize) -> PointCloud {
    PointCloud::new(
        (0..n)
            .map(|_| Vec3::new(rng.random_range(0.0..1.0), rng.random_range(0.0..0.5), rng.random_range(0.0..0.2)))
            .collect(),
    )
    .unwrap()
}

fn write_cloud(dir: &Path, name: &str, cloud: &PointCloud) -> PathBuf {
    let p = dir.join(name);
    write_ply_cloud(cloud, &p, PlyEncoding::BinaryLittleEndian).unwrap();
    p
}

fn trajectory(rng: &mut StdRng, n: usize) -> Trajectory {
    Trajectory::new(
        (0..n)
            .map(|i| {
                TimedPose::new(
                    i as f64 * 0.1,
                    Vec3::new(i as f64 * 0.05, rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2)),
                    UnitQuat::from_axis_angle(&Vec3::z(), i as f64 * 0.02),
                )
            })
            .collect(),
    )
    .unwrap()
}

#[test]
fn eval_traj_identical_is_zero() {
    let dir = TempDir::new().unwrap();
    let mut rng = StdRng::seed_from_u64(1);
    let p = dir.path().join("gt.txt");
    write_trajectory(&trajectory(&mut rng, 30), &p, QuaternionOrder::XyzW).unwrap();
    let r = json_ok(&["eval-traj", "--est", s(&p), "--gt", s(&p)]);
    assert_eq!(r["command"], "eval-traj");
    assert!(r["metrics"]["ate"]["rmse_cm"].as_f64().unwrap() < 1e-9);
    assert!(r["metrics"]["rpe"]["mean_trans_cm"].as_f64().unwrap() < 1e-9);
    assert_eq!(r["metrics"]["ate"]["pairs"], 30);
    assert!((r["parameters"]["max_dt"].as_f64().unwrap() - 0.05).abs() < 1e-12);
}

#[test]
fn eval_traj_per_frame_csv() {
    let dir = TempDir::new().unwrap();
    let mut rng = StdRng::seed_from_u64(2);
    let p = dir.path().join("gt.txt");
    write_trajectory(&trajectory(&mut rng, 12), &p, QuaternionOrder::XyzW).unwrap();
    let csv_path = dir.path().join("frames.csv");
    json_ok(&["eval-traj", "--est", s(&p), "--gt", s(&p), "--per-frame", s(&csv_path)]);
    let text = std::fs::read_to_string(csv_path).unwrap();
    assert!(text.starts_with("est_t,gt_t,error_m\n"));
    assert_eq!(text.lines().count(), 13);
}

#[test]
fn missing_file_exit_code_two() {
    let out = run(&["eval-traj", "--est", "/nonexistent/est.txt", "--gt", "/nonexistent/gt.txt"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/nonexistent/est.txt"), "{err}");
    assert!(out.stdout.is_empty());
}

#[test]
fn malformed_trajectory_exit_code_two() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("bad.txt");
    std::fs::write(&p, "0 1 2 3\n").unwrap();
    let out = run(&["eval-traj", "--est", s(&p), "--gt", s(&p)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn bad_flag_exit_code_two() {
    assert_eq!(run(&["eval-traj", "--mode", "affine"]).status.code(), Some(2));
}

#[test]
fn eval_geom_identical_cloud() {
    let dir = TempDir::new().unwrap();
    let mut rng = StdRng::seed_from_u64(3);
    let p = write_cloud(dir.path(), "c.ply", &random_cloud(&mut rng, 400));
    let r = json_ok(&["eval-geom", "--cloud", s(&p), "--reference", s(&p)]);
    let m = &r["metrics"];
    assert!((m["Scale_RMS"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(m["ICP_Fitness"].as_f64().unwrap(), 1.0);
    assert_eq!(m["Chamfer_RMS_mm"].as_f64().unwrap(), 0.0);
}

#[test]
fn eval_geom_reports_applied_scale() {
    let dir = TempDir::new().unwrap();
    let mut rng = StdRng::seed_from_u64(4);
    let reference = random_cloud(&mut rng, 300);
    let c = reference.centroid().unwrap();
    let doubled = PointCloud::new(reference.points.iter().map(|p| c + (p - c) * 2.0).collect()).unwrap();
    let pr = write_cloud(dir.path(), "ref.ply", &reference);
    let pc = write_cloud(dir.path(), "big.ply", &doubled);
    let r = json_ok(&["eval-geom", "--cloud", s(&pc), "--reference", s(&pr)]);
    assert!((r["metrics"]["Scale_RMS"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!(r["metrics"]["Chamfer_RMS_mm"].as_f64().unwrap() < 1e-9);
}

#[test]
fn eval_geom_matches_library_calls() {
    let dir = TempDir::new().unwrap();
    let mut rng = StdRng::seed_from_u64(5);
    let reference = random_cloud(&mut rng, 500);
    let motion = SimilarityTransform::new(
        1.3,
        UnitQuat::from_axis_angle(&Vec3::new(0.2, 1.0, 0.1), 0.03),
        Vec3::new(0.004, -0.002, 0.001),
    )
    .unwrap();
    let sub = PointCloud::new(reference.points.iter().step_by(2).map(|p| motion.apply(p)).collect()).unwrap();
    let pr = write_cloud(dir.path(), "ref.ply", &reference);
    let pc = write_cloud(dir.path(), "sub.ply", &sub);
    let r = json_ok(&["eval-geom", "--cloud", s(&pc), "--reference", s(&pr), "--k", "10"]);

    let (scale, scaled) = rms_scale_normalize(&sub, &reference).unwrap();
    let cfg = IcpConfig::for_reference(&reference).unwrap();
    let icp = icp_rigid(&scaled, &reference, &cfg, &SimilarityTransform::identity()).unwrap();
    let m = cloud_metrics(&scaled.transformed(&icp.transform), &reference, 10).unwrap();
    let got = &r["metrics"];
    assert_eq!(got["Scale_RMS"].as_f64().unwrap(), scale);
    assert_eq!(got["ICP_Fitness"].as_f64().unwrap(), icp.fitness);
    assert_eq!(got["Chamfer_RMS_mm"].as_f64().unwrap(), m.chamfer_rms_mm);
    assert_eq!(got["Surface_Roughness"].as_f64().unwrap(), m.surface_roughness);
    assert_eq!(got["Mean_NN_Distance_mm"].as_f64().unwrap(), m.mean_nn_distance_mm);
}

#[test]
fn eval_geom_csv_columns() {
    let dir = TempDir::new().unwrap();
    let mut rng = StdRng::seed_from_u64(6);
    let p = write_cloud(dir.path(), "c.ply", &random_cloud(&mut rng, 100));
    let out = run(&["eval-geom", "--cloud", s(&p), "--reference", s(&p), "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "cloud,reference,Scale_RMS,ICP_Fitness,Chamfer_RMS_mm,Surface_Roughness,Mean_NN_Distance_mm"
    );
    assert_eq!(text.lines().count(), 2);
}

fn unit_cube() -> TriangleMesh {
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

#[test]
fn eval_mesh_unit_cube() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("cube.ply");
    write_ply_mesh(&unit_cube(), &p, PlyEncoding::Ascii).unwrap();
    let r = json_ok(&["eval-mesh", "--mesh", s(&p)]);
    assert_eq!(r["metrics"]["triangles"], 12);
    assert_eq!(r["metrics"]["surface_area_cm2"].as_f64().unwrap(), 60000.0);
}

#[test]
fn eval_mesh_rejects_point_cloud() {
    let dir = TempDir::new().unwrap();
    let mut rng = StdRng::seed_from_u64(7);
    let p = write_cloud(dir.path(), "c.ply", &random_cloud(&mut rng, 10));
    assert_eq!(run(&["eval-mesh", "--mesh", s(&p)]).status.code(), Some(2));
}

fn toy_model(dir: &Path) -> PathBuf {
    let mut model = ColmapSparseModel::default();
    model.cameras.insert(
        1,
        ColmapCamera {
            id: 1,
            model: CameraModel::Pinhole,
            width: 100,
            height: 100,
            fx: 100.0,
            fy: 100.0,
            cx: 50.0,
            cy: 50.0,
        },
    );
    // Camera centers; identity rotation so tvec = -center.
    for (id, name, center) in [
        (1, "A", [0.0, 0.0, -5.0]),
        (2, "B", [0.0, 0.0, -1.0]),
        (3, "C", [1.0, 0.0, -1.0]),
    ] {
        model.images.insert(
            id,
            ColmapImage {
                id,
                qvec: [1.0, 0.0, 0.0, 0.0],
                tvec: [-center[0], -center[1], -center[2]],
                camera_id: 1,
                name: name.into(),
                points2d: Vec::new(),
            },
        );
    }
    let p = dir.join("model");
    std::fs::create_dir_all(&p).unwrap();
    write_colmap_text(&model, &p).unwrap();
    p
}

#[test]
fn select_views_toy_scene() {
    let dir = TempDir::new().unwrap();
    let cloud = PointCloud::new(vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)]).unwrap();
    let pc = write_cloud(dir.path(), "uw.ply", &cloud);
    let model = toy_model(dir.path());
    let names = dir.path().join("selected.txt");
    let r = json_ok(&["select-views", "--cloud", s(&pc), "--model", s(&model), "--names-out", s(&names)]);
    let m = &r["metrics"];
    assert_eq!(m["total_weak"], 2);
    assert_eq!(m["covered"], 2);
    assert_eq!(m["selected"].as_array().unwrap().len(), 1);
    assert_eq!(m["selected"][0]["name"], "A");
    assert_eq!(std::fs::read_to_string(names).unwrap(), "A\n");
}

#[test]
fn select_views_image_list_restricts_candidates() {
    let dir = TempDir::new().unwrap();
    let cloud = PointCloud::new(vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)]).unwrap();
    let pc = write_cloud(dir.path(), "uw.ply", &cloud);
    let model = toy_model(dir.path());
    let list = dir.path().join("list.txt");
    std::fs::write(&list, "C\nB\n").unwrap();
    let r = json_ok(&["select-views", "--cloud", s(&pc), "--model", s(&model), "--image-list", s(&list)]);
    let names: Vec<&str> = r["metrics"]["selected"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, vec!["B", "C"]);
}

fn image_dir(dir: &Path, name: &str, seed: u64, count: usize) -> PathBuf {
    let p = dir.join(name);
    std::fs::create_dir_all(&p).unwrap();
    let mut rng = StdRng::seed_from_u64(seed);
    for i in 0..count {
        let img = Image8::from_fn(24, 20, 3, |_, _, _| rng.random()).unwrap();
        write_png(&img, p.join(format!("img{i}.png"))).unwrap();
    }
    p
}

#[test]
fn eval_render_identical_dirs() {
    let dir = TempDir::new().unwrap();
    let a = image_dir(dir.path(), "a", 8, 3);
    let r = json_ok(&["eval-render", "--render", s(&a), "--reference", s(&a)]);
    let pairs = r["metrics"]["pairs"].as_object().unwrap();
    assert_eq!(pairs.len(), 3);
    for v in pairs.values() {
        assert_eq!(v["psnr"], "inf");
        assert!((v["ssim"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    }
    assert_eq!(r["metrics"]["mean"]["psnr"], "inf");
}

#[test]
fn eval_color_identical_and_different() {
    let dir = TempDir::new().unwrap();
    let a = image_dir(dir.path(), "a", 9, 2);
    let b = image_dir(dir.path(), "b", 10, 2);
    let r = json_ok(&["eval-color", "--recon", s(&a), "--reference", s(&a)]);
    assert_eq!(r["metrics"]["aggregate"]["dE_max"].as_f64().unwrap(), 0.0);
    let r = json_ok(&["eval-color", "--recon", s(&a), "--reference", s(&b)]);
    let agg = &r["metrics"]["aggregate"];
    assert!(agg["dE_mean"].as_f64().unwrap() > 0.0);
    assert_eq!(agg["pixels"], 2 * 24 * 20);
}

#[test]
fn eval_color_with_mask() {
    let dir = TempDir::new().unwrap();
    let a = image_dir(dir.path(), "a", 11, 1);
    let b = image_dir(dir.path(), "b", 12, 1);
    let mask = dir.path().join("mask.png");
    write_png(&Image8::from_fn(24, 20, 1, |x, _, _| if x < 6 { 255 } else { 0 }).unwrap(), &mask).unwrap();
    let r = json_ok(&["eval-color", "--recon", s(&a), "--reference", s(&b), "--mask", s(&mask)]);
    assert_eq!(r["metrics"]["pairs"]["img0.png"]["pixels"], 6 * 20);
}

#[test]
fn preprocess_crop_then_clahe() {
    let dir = TempDir::new().unwrap();
    let a = image_dir(dir.path(), "in", 13, 2);
    let out = dir.path().join("out");
    let r = json_ok(&[
        "preprocess",
        "--input",
        s(&a),
        "--output",
        s(&out),
        "--op",
        "crop,clahe",
        "--crop",
        "2,3,16,12",
        "--tiles",
        "2,2",
    ]);
    assert_eq!(r["metrics"]["count"], 2);
    let img = recon_eval::io::image::read_png(out.join("img0.png")).unwrap();
    assert_eq!((img.width(), img.height()), (16, 12));
}

#[test]
fn preprocess_exposure_requires_sidecar() {
    let dir = TempDir::new().unwrap();
    let a = image_dir(dir.path(), "in", 14, 1);
    let out = dir.path().join("out");
    let o = run(&["preprocess", "--input", s(&a), "--output", s(&out), "--op", "exposure"]);
    assert_eq!(o.status.code(), Some(2));
    let csv = dir.path().join("exp.csv");
    std::fs::write(&csv, "name,exposure\nimg0.png,0.02\n").unwrap();
    let r = json_ok(&[
        "preprocess",
        "--input",
        s(&a),
        "--output",
        s(&out),
        "--op",
        "exposure",
        "--exposures",
        s(&csv),
        "--reference-exposure",
        "0.01",
    ]);
    assert_eq!(r["parameters"]["reference_exposure"].as_f64().unwrap(), 0.01);
}

fn strip_timing(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("timing_s");
    v
}

#[test]
fn reports_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let mut rng = StdRng::seed_from_u64(15);
    let pa = write_cloud(dir.path(), "a.ply", &random_cloud(&mut rng, 300));
    let pb = write_cloud(dir.path(), "b.ply", &random_cloud(&mut rng, 250));
    let args = ["eval-geom", "--cloud", s(&pa), "--reference", s(&pb)];
    let one = strip_timing(json_ok(&args));
    let out = bin().args(args).env("RECON_EVAL_THREADS", "1").output().unwrap();
    let two = strip_timing(serde_json::from_slice(&out.stdout).unwrap());
    assert_eq!(serde_json::to_string(&one).unwrap(), serde_json::to_string(&two).unwrap());
}

#[test]
fn report_written_to_out_file() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("cube.ply");
    write_ply_mesh(&unit_cube(), &p, PlyEncoding::BinaryLittleEndian).unwrap();
    let report = dir.path().join("r.json");
    let out = run(&["eval-mesh", "--mesh", s(&p), "--out", s(&report)]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(v["tool"], "recon-eval");
    assert_eq!(v["parameters"]["unit_scale"].as_f64().unwrap(), 100.0);
}
