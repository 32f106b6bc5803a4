use std::collections::BTreeSet;
use std::path::PathBuf;

use clap::Args;
use serde_json::{json, Map, Value};

use recon_eval::cross_domain::{
    find_weak_voxels_with, greedy_select_with, CandidateImage, DepthBand, WeakVoxelConfig, DEFAULT_VOXEL_SIZE,
    DEFAULT_WEAK_THRESHOLD,
};
use recon_eval::io::colmap::parse_colmap_text;
use recon_eval::io::ply::read_ply;
use recon_eval::Vec3;

use crate::report::{fmt, input_failure, num, path_value, CmdResult, Outcome, Stage, Table};

#[derive(Debug, Args)]
pub struct SelectViews {
    /// Underwater reconstruction (PLY, meters).
    #[arg(long)]
    pub cloud: PathBuf,
    /// COLMAP text model directory holding the candidate in-air cameras.
    #[arg(long)]
    pub model: PathBuf,
    /// Restrict candidates to the image names listed in this file (one per line).
    #[arg(long)]
    pub image_list: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_VOXEL_SIZE)]
    pub voxel_size: f64,
    /// Voxels with fewer points than this are weak.
    #[arg(long, default_value_t = DEFAULT_WEAK_THRESHOLD)]
    pub threshold: usize,
    /// Maximum number of images to select.
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub min_depth: Option<f64>,
    #[arg(long)]
    pub max_depth: Option<f64>,
    /// Also treat empty voxels inside this box as weak: xmin,ymin,zmin,xmax,ymax,zmax.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub empty_bounds: Option<Vec<f64>>,
    /// Write the selected image names, one per line.
    #[arg(long)]
    pub names_out: Option<PathBuf>,
}

pub fn run(args: &SelectViews) -> CmdResult<Outcome> {
    let cloud = read_ply(&args.cloud)
        .stage(format!("reading --cloud {}", args.cloud.display()))?
        .into_cloud();
    let model = parse_colmap_text(&args.model).stage(format!("reading --model {}", args.model.display()))?;
    let allowed: Option<BTreeSet<String>> = match &args.image_list {
        Some(p) => Some(
            std::fs::read_to_string(p)
                .stage(format!("reading --image-list {}", p.display()))?
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect(),
        ),
        None => None,
    };

    let mut candidates = Vec::new();
    for image in model.images.values() {
        if allowed.as_ref().is_some_and(|a| !a.contains(&image.name)) {
            continue;
        }
        let camera = model
            .camera_for_image(image.id)
            .stage(format!("camera for image {}", image.name))?;
        candidates.push(CandidateImage {
            id: image.name.clone(),
            camera,
        });
    }
    if candidates.is_empty() {
        return Err(input_failure("collecting candidates", "no candidate images"));
    }

    if args.empty_bounds.as_ref().is_some_and(|b| b.len() != 6) {
        return Err(input_failure("arguments", "--empty-bounds takes xmin,ymin,zmin,xmax,ymax,zmax"));
    }
    let empty_bounds = args
        .empty_bounds
        .as_ref()
        .map(|b| (Vec3::new(b[0], b[1], b[2]), Vec3::new(b[3], b[4], b[5])));
    let config = WeakVoxelConfig {
        voxel_size: args.voxel_size,
        threshold: args.threshold,
        origin: None,
        empty_bounds,
    };
    let weak = find_weak_voxels_with(&cloud, &config).stage("finding weak voxels")?;
    let band = DepthBand {
        min: args.min_depth,
        max: args.max_depth,
    };
    let result = greedy_select_with(&candidates, &weak, args.budget, band);

    if let Some(path) = &args.names_out {
        let mut text = result.selected.join("\n");
        if !text.is_empty() {
            text.push('\n');
        }
        std::fs::write(path, text).stage(format!("writing {}", path.display()))?;
    }

    let mut parameters = Map::new();
    parameters.insert("cloud".into(), path_value(&args.cloud));
    parameters.insert("model".into(), path_value(&args.model));
    parameters.insert(
        "image_list".into(),
        args.image_list.as_deref().map_or(Value::Null, path_value),
    );
    parameters.insert("voxel_size".into(), num(args.voxel_size));
    parameters.insert("threshold".into(), Value::from(args.threshold));
    parameters.insert("budget".into(), args.budget.map_or(Value::Null, Value::from));
    parameters.insert("min_depth".into(), args.min_depth.map_or(Value::Null, num));
    parameters.insert("max_depth".into(), args.max_depth.map_or(Value::Null, num));
    parameters.insert(
        "empty_bounds".into(),
        args.empty_bounds
            .as_ref()
            .map_or(Value::Null, |b| Value::from(b.iter().map(|&v| num(v)).collect::<Vec<_>>())),
    );

    let steps: Vec<Value> = result
        .selected
        .iter()
        .zip(&result.marginal_gains)
        .zip(&result.coverage_curve)
        .map(|((name, gain), cov)| json!({"name": name, "gain": gain, "coverage": num(*cov)}))
        .collect();
    let fraction = if result.total_weak == 0 {
        0.0
    } else {
        result.covered as f64 / result.total_weak as f64
    };
    let metrics = json!({
        "total_weak": result.total_weak,
        "covered": result.covered,
        "uncovered": result.uncovered.len(),
        "coverage_fraction": num(fraction),
        "candidates": candidates.len(),
        "selected_count": result.selected.len(),
        "selected": steps,
        "origin": [num(weak.origin.x), num(weak.origin.y), num(weak.origin.z)],
    });

    let mut table = Table::new(&["step", "name", "gain", "coverage"]);
    for (i, ((name, gain), cov)) in result
        .selected
        .iter()
        .zip(&result.marginal_gains)
        .zip(&result.coverage_curve)
        .enumerate()
    {
        table.push(vec![(i + 1).to_string(), name.clone(), gain.to_string(), fmt(*cov)]);
    }
    Ok(Outcome {
        parameters,
        metrics,
        table,
    })
}
