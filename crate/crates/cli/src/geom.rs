use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde_json::{json, Map, Value};

use recon_eval::alignment::{icp_rigid, rms_scale_normalize, IcpConfig};
use recon_eval::geometry_metrics::{cloud_metrics, mesh_stats, DEFAULT_ROUGHNESS_NEIGHBORS};
use recon_eval::io::ply::read_ply;
use recon_eval::{PointCloud, SimilarityTransform, TriangleMesh};

use crate::report::{fmt, input_failure, num, path_value, CmdResult, Outcome, Stage, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IcpInit {
    /// Start from the clouds as given.
    Identity,
    /// Start with the scaled cloud's centroid moved onto the reference centroid.
    Centroid,
}

#[derive(Debug, Args)]
pub struct EvalGeom {
    /// Evaluated point cloud (PLY, meters).
    #[arg(long)]
    pub cloud: PathBuf,
    /// Reference point cloud (PLY, meters).
    #[arg(long)]
    pub reference: PathBuf,
    /// Neighbors used for surface roughness.
    #[arg(long, default_value_t = DEFAULT_ROUGHNESS_NEIGHBORS)]
    pub k: usize,
    /// ICP correspondence threshold in meters; 5x the reference NN spacing by default.
    #[arg(long)]
    pub max_correspondence: Option<f64>,
    #[arg(long, default_value_t = IcpConfig::DEFAULT_MAX_ITERATIONS)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = IcpConfig::DEFAULT_CONVERGENCE_EPS)]
    pub convergence_eps: f64,
    #[arg(long, value_enum, default_value = "identity")]
    pub init: IcpInit,
}

#[derive(Debug, Args)]
pub struct EvalMesh {
    /// Triangle mesh (PLY).
    #[arg(long)]
    pub mesh: PathBuf,
    /// Factor converting mesh units to centimeters.
    #[arg(long, default_value_t = 100.0)]
    pub unit_scale: f64,
}

fn load_cloud(path: &PathBuf, flag: &str) -> CmdResult<PointCloud> {
    let stage = format!("reading --{flag} {}", path.display());
    let cloud = read_ply(path).stage(stage.clone())?.into_cloud();
    if cloud.is_empty() {
        return Err(input_failure(stage, "no vertices"));
    }
    Ok(cloud)
}

pub fn run_geom(args: &EvalGeom) -> CmdResult<Outcome> {
    let cloud = load_cloud(&args.cloud, "cloud")?;
    let reference = load_cloud(&args.reference, "reference")?;

    let (scale, scaled) = rms_scale_normalize(&cloud, &reference).stage("scale normalization")?;
    let cfg = match args.max_correspondence {
        Some(d) => IcpConfig::new(d, args.max_iterations, args.convergence_eps),
        None => IcpConfig::for_reference(&reference).and_then(|c| {
            IcpConfig::new(c.max_correspondence_dist, args.max_iterations, args.convergence_eps)
        }),
    }
    .stage("ICP configuration")?;
    let init = match args.init {
        IcpInit::Identity => SimilarityTransform::identity(),
        IcpInit::Centroid => {
            let shift = reference.centroid().unwrap_or_default() - scaled.centroid().unwrap_or_default();
            SimilarityTransform::rigid(recon_eval::UnitQuat::identity(), shift)
        }
    };
    let icp = icp_rigid(&scaled, &reference, &cfg, &init).stage("ICP")?;
    let aligned = scaled.transformed(&icp.transform);
    let m = cloud_metrics(&aligned, &reference, args.k).stage("cloud metrics")?;

    let mut parameters = Map::new();
    parameters.insert("cloud".into(), path_value(&args.cloud));
    parameters.insert("reference".into(), path_value(&args.reference));
    parameters.insert("k".into(), Value::from(args.k));
    parameters.insert("max_correspondence".into(), num(cfg.max_correspondence_dist));
    parameters.insert("max_iterations".into(), Value::from(cfg.max_iterations));
    parameters.insert("convergence_eps".into(), num(cfg.convergence_eps));
    parameters.insert(
        "init".into(),
        Value::from(match args.init {
            IcpInit::Identity => "identity",
            IcpInit::Centroid => "centroid",
        }),
    );

    let t = &icp.transform;
    let metrics = json!({
        "Scale_RMS": num(scale),
        "ICP_Fitness": num(icp.fitness),
        "Chamfer_RMS_mm": num(m.chamfer_rms_mm),
        "Surface_Roughness": num(m.surface_roughness),
        "Mean_NN_Distance_mm": num(m.mean_nn_distance_mm),
        "icp": {
            "inlier_rmse_mm": num(icp.inlier_rmse * 1000.0),
            "iterations": icp.iterations,
            "rotation_wxyz": t.rotation.wxyz().map(num),
            "translation": [num(t.translation.x), num(t.translation.y), num(t.translation.z)],
        },
        "points": {"cloud": cloud.len(), "reference": reference.len()},
    });
    let mut table = Table::new(&[
        "cloud",
        "reference",
        "Scale_RMS",
        "ICP_Fitness",
        "Chamfer_RMS_mm",
        "Surface_Roughness",
        "Mean_NN_Distance_mm",
    ]);
    table.push(vec![
        args.cloud.display().to_string(),
        args.reference.display().to_string(),
        fmt(scale),
        fmt(icp.fitness),
        fmt(m.chamfer_rms_mm),
        fmt(m.surface_roughness),
        fmt(m.mean_nn_distance_mm),
    ]);
    Ok(Outcome {
        parameters,
        metrics,
        table,
    })
}

pub fn run_mesh(args: &EvalMesh) -> CmdResult<Outcome> {
    let stage = format!("reading --mesh {}", args.mesh.display());
    let mesh: TriangleMesh = read_ply(&args.mesh)
        .stage(stage.clone())?
        .into_mesh()
        .ok_or_else(|| input_failure(stage, "file has no faces"))?;
    let s = mesh_stats(&mesh, args.unit_scale).stage("mesh statistics")?;

    let mut parameters = Map::new();
    parameters.insert("mesh".into(), path_value(&args.mesh));
    parameters.insert("unit_scale".into(), num(args.unit_scale));
    let metrics = json!({
        "triangles": s.triangles,
        "surface_area_cm2": num(s.surface_area_cm2),
        "avg_curvature_per_cm": num(s.avg_curvature_per_cm),
        "degenerate_triangles": s.degenerate_triangles,
        "curvature_vertices": s.curvature_vertices,
        "vertices": mesh.vertices.len(),
    });
    let mut table = Table::new(&["mesh", "Triangles", "Surface_Area_cm2", "Avg_Curvature_per_cm", "Degenerate_Triangles"]);
    table.push(vec![
        args.mesh.display().to_string(),
        s.triangles.to_string(),
        fmt(s.surface_area_cm2),
        fmt(s.avg_curvature_per_cm),
        s.degenerate_triangles.to_string(),
    ]);
    Ok(Outcome {
        parameters,
        metrics,
        table,
    })
}
