use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use recon_eval::io::exposure::parse_exposure_csv;
use recon_eval::io::image::{read_png, write_png};
use recon_eval::numeric::{compensated_mean, median};
use recon_eval::radiometry::{
    clahe, crop, delta_e_stats, delta_e_stats_lab, exposure_normalize, psnr, srgb_to_lab, ssim,
    white_balance_grayworld, DeltaEStats, LabImage, Mask, Rect,
};
use recon_eval::Image8;

use crate::report::{fmt, input_failure, num, path_value, CmdResult, Failure, Outcome, Stage, Table};

/// PNG files of a directory keyed by file name.
fn list_pngs(dir: &Path, flag: &str) -> CmdResult<BTreeMap<String, PathBuf>> {
    let stage = format!("listing --{flag} {}", dir.display());
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).stage(stage.clone())? {
        let path = entry.stage(stage.clone())?.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png && path.is_file() {
            if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                out.insert(name.to_string(), path);
            }
        }
    }
    Ok(out)
}

/// Matching file names of two directories; names present in only one are reported on stderr.
fn pair_dirs(a: &Path, a_flag: &str, b: &Path, b_flag: &str) -> CmdResult<Vec<(String, PathBuf, PathBuf)>> {
    let left = list_pngs(a, a_flag)?;
    let right = list_pngs(b, b_flag)?;
    for name in left.keys().filter(|n| !right.contains_key(*n)) {
        eprintln!("warning: {name} has no counterpart in --{b_flag}");
    }
    for name in right.keys().filter(|n| !left.contains_key(*n)) {
        eprintln!("warning: {name} has no counterpart in --{a_flag}");
    }
    let pairs: Vec<_> = left
        .into_iter()
        .filter_map(|(name, pa)| right.get(&name).map(|pb| (name, pa, pb.clone())))
        .collect();
    if pairs.is_empty() {
        return Err(input_failure("pairing images", "no PNG file names shared by both directories"));
    }
    Ok(pairs)
}

fn load(path: &Path) -> CmdResult<Image8> {
    read_png(path).stage(format!("reading {}", path.display()))
}

fn first_error<T>(results: Vec<CmdResult<T>>) -> CmdResult<Vec<T>> {
    results.into_iter().collect::<Result<Vec<T>, Failure>>()
}

#[derive(Debug, Args)]
pub struct EvalColor {
    /// Directory of reconstructed or restored renderings.
    #[arg(long)]
    pub recon: PathBuf,
    /// Directory of reference images with matching file names.
    #[arg(long)]
    pub reference: PathBuf,
    /// Grayscale PNG; nonzero pixels are evaluated.
    #[arg(long)]
    pub mask: Option<PathBuf>,
}

fn delta_e_json(s: &DeltaEStats) -> Value {
    json!({
        "dE_mean": num(s.mean),
        "dE_std": num(s.std),
        "dE_min": num(s.min),
        "dE_max": num(s.max),
        "L_diff": num(s.mean_l_diff),
        "a_diff": num(s.mean_a_diff),
        "b_diff": num(s.mean_b_diff),
        "pixels": s.pixels,
    })
}

fn delta_e_row(name: &str, s: &DeltaEStats) -> Vec<String> {
    vec![
        name.to_string(),
        fmt(s.mean),
        fmt(s.std),
        fmt(s.min),
        fmt(s.max),
        fmt(s.mean_l_diff),
        fmt(s.mean_a_diff),
        fmt(s.mean_b_diff),
    ]
}

pub fn run_color(args: &EvalColor) -> CmdResult<Outcome> {
    let pairs = pair_dirs(&args.recon, "recon", &args.reference, "reference")?;
    let mask = match &args.mask {
        Some(p) => Some(Mask::from_image(&load(p)?).stage(format!("reading --mask {}", p.display()))?),
        None => None,
    };
    let per_pair: Vec<(String, DeltaEStats, LabImage, LabImage)> = first_error(
        pairs
            .par_iter()
            .map(|(name, pa, pb)| {
                let (a, b) = (load(pa)?, load(pb)?);
                let stats = delta_e_stats(&a, &b, mask.as_ref()).stage(format!("comparing {name}"))?;
                let la = srgb_to_lab(&a).stage(format!("converting {name}"))?;
                let lb = srgb_to_lab(&b).stage(format!("converting {name}"))?;
                Ok((name.clone(), stats, la, lb))
            })
            .collect(),
    )?;

    // Pooled over every evaluated pixel of every pair.
    let mut pooled_a = LabImage {
        width: 0,
        height: 1,
        data: Vec::new(),
    };
    let mut pooled_b = pooled_a.clone();
    let mut pooled_mask = Vec::new();
    for (_, _, la, lb) in &per_pair {
        pooled_a.data.extend_from_slice(&la.data);
        pooled_b.data.extend_from_slice(&lb.data);
        match &mask {
            Some(m) => pooled_mask.extend_from_slice(&m.included),
            None => pooled_mask.extend(std::iter::repeat_n(true, la.data.len())),
        }
    }
    pooled_a.width = pooled_a.data.len() as u32;
    pooled_b.width = pooled_b.data.len() as u32;
    let pooled_mask = Mask {
        width: pooled_a.width,
        height: 1,
        included: pooled_mask,
    };
    let aggregate = delta_e_stats_lab(&pooled_a, &pooled_b, Some(&pooled_mask)).stage("aggregating")?;

    let mut parameters = Map::new();
    parameters.insert("recon".into(), path_value(&args.recon));
    parameters.insert("reference".into(), path_value(&args.reference));
    parameters.insert("mask".into(), args.mask.as_deref().map_or(Value::Null, path_value));

    let mut pairs_json = Map::new();
    let mut table = Table::new(&["image", "dE_mean", "dE_std", "dE_min", "dE_max", "L_diff", "a_diff", "b_diff"]);
    for (name, s, _, _) in &per_pair {
        pairs_json.insert(name.clone(), delta_e_json(s));
        table.push(delta_e_row(name, s));
    }
    table.push(delta_e_row("aggregate", &aggregate));
    let metrics = json!({
        "pairs": pairs_json,
        "aggregate": delta_e_json(&aggregate),
    });
    Ok(Outcome {
        parameters,
        metrics,
        table,
    })
}

#[derive(Debug, Args)]
pub struct EvalRender {
    /// Directory of rendered images.
    #[arg(long)]
    pub render: PathBuf,
    /// Directory of reference images with matching file names.
    #[arg(long)]
    pub reference: PathBuf,
}

pub fn run_render(args: &EvalRender) -> CmdResult<Outcome> {
    let pairs = pair_dirs(&args.render, "render", &args.reference, "reference")?;
    let scores: Vec<(String, f64, f64)> = first_error(
        pairs
            .par_iter()
            .map(|(name, pa, pb)| {
                let (a, b) = (load(pa)?, load(pb)?);
                let p = psnr(&a, &b).stage(format!("PSNR of {name}"))?;
                let s = ssim(&a, &b).stage(format!("SSIM of {name}"))?;
                Ok((name.clone(), p, s))
            })
            .collect(),
    )?;
    let psnrs: Vec<f64> = scores.iter().map(|s| s.1).collect();
    let ssims: Vec<f64> = scores.iter().map(|s| s.2).collect();
    let mean_psnr = if psnrs.iter().any(|p| p.is_infinite()) {
        f64::INFINITY
    } else {
        compensated_mean(&psnrs)
    };
    let mean_ssim = compensated_mean(&ssims);

    let mut parameters = Map::new();
    parameters.insert("render".into(), path_value(&args.render));
    parameters.insert("reference".into(), path_value(&args.reference));
    let mut pairs_json = Map::new();
    let mut table = Table::new(&["image", "PSNR", "SSIM"]);
    for (name, p, s) in &scores {
        pairs_json.insert(name.clone(), json!({"psnr": num(*p), "ssim": num(*s)}));
        table.push(vec![name.clone(), fmt(*p), fmt(*s)]);
    }
    table.push(vec!["mean".into(), fmt(mean_psnr), fmt(mean_ssim)]);
    let metrics = json!({
        "pairs": pairs_json,
        "mean": {"psnr": num(mean_psnr), "ssim": num(mean_ssim)},
    });
    Ok(Outcome {
        parameters,
        metrics,
        table,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Op {
    Crop,
    Clahe,
    WhiteBalance,
    Exposure,
}

impl Op {
    fn name(self) -> &'static str {
        match self {
            Op::Crop => "crop",
            Op::Clahe => "clahe",
            Op::WhiteBalance => "white-balance",
            Op::Exposure => "exposure",
        }
    }
}

#[derive(Debug, Args)]
pub struct Preprocess {
    /// Directory of PNG images.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    pub output: PathBuf,
    /// Operations applied in the given order.
    #[arg(long = "op", value_enum, required = true, value_delimiter = ',')]
    pub ops: Vec<Op>,
    /// Crop rectangle: x,y,width,height.
    #[arg(long, value_delimiter = ',')]
    pub crop: Option<Vec<u32>>,
    #[arg(long, default_value_t = 2.0)]
    pub clip_limit: f64,
    /// CLAHE tile grid: columns,rows.
    #[arg(long, value_delimiter = ',', default_values_t = [8u32, 8u32])]
    pub tiles: Vec<u32>,
    /// CSV with `name,exposure` columns.
    #[arg(long)]
    pub exposures: Option<PathBuf>,
    /// Target exposure; median of the listed exposures by default.
    #[arg(long)]
    pub reference_exposure: Option<f64>,
}

pub fn run_preprocess(args: &Preprocess) -> CmdResult<Outcome> {
    let files = list_pngs(&args.input, "input")?;
    if files.is_empty() {
        return Err(input_failure("listing --input", "no PNG files"));
    }
    if args.crop.as_ref().is_some_and(|c| c.len() != 4) {
        return Err(input_failure("arguments", "--crop takes x,y,width,height"));
    }
    if args.tiles.len() != 2 {
        return Err(input_failure("arguments", "--tiles takes columns,rows"));
    }
    let rect = match (&args.crop, args.ops.contains(&Op::Crop)) {
        (Some(c), _) => Some(Rect::new(c[0], c[1], c[2], c[3])),
        (None, true) => return Err(input_failure("arguments", "--op crop needs --crop x,y,w,h")),
        (None, false) => None,
    };
    let exposures: BTreeMap<String, f64> = match &args.exposures {
        Some(p) => parse_exposure_csv(p)
            .stage(format!("reading --exposures {}", p.display()))?
            .into_iter()
            .map(|r| (r.name, r.exposure))
            .collect(),
        None if args.ops.contains(&Op::Exposure) => {
            return Err(input_failure("arguments", "--op exposure needs --exposures"))
        }
        None => BTreeMap::new(),
    };
    let reference_exposure = match args.reference_exposure {
        Some(v) => Some(v),
        None if !exposures.is_empty() => Some(median(&exposures.values().copied().collect::<Vec<_>>())),
        None => None,
    };
    let tiles = (args.tiles[0], args.tiles[1]);
    std::fs::create_dir_all(&args.output).stage(format!("creating {}", args.output.display()))?;

    let processed: Vec<String> = first_error(
        files
            .par_iter()
            .map(|(name, path)| {
                let mut img = load(path)?;
                for op in &args.ops {
                    let stage = format!("{} on {name}", op.name());
                    img = match op {
                        Op::Crop => crop(&img, rect.expect("checked above")).stage(stage)?,
                        Op::Clahe => clahe(&img, args.clip_limit, tiles).stage(stage)?,
                        Op::WhiteBalance => white_balance_grayworld(&img).stage(stage)?,
                        Op::Exposure => {
                            let e = *exposures
                                .get(name)
                                .ok_or_else(|| input_failure(stage.clone(), "no exposure listed"))?;
                            exposure_normalize(&img, e, reference_exposure.expect("set with exposures")).stage(stage)?
                        }
                    };
                }
                let out = args.output.join(name);
                write_png(&img, &out).stage(format!("writing {}", out.display()))?;
                Ok(name.clone())
            })
            .collect(),
    )?;

    let mut parameters = Map::new();
    parameters.insert("input".into(), path_value(&args.input));
    parameters.insert("output".into(), path_value(&args.output));
    parameters.insert("ops".into(), Value::from(args.ops.iter().map(|o| o.name()).collect::<Vec<_>>()));
    parameters.insert("crop".into(), args.crop.as_ref().map_or(Value::Null, |c| Value::from(c.clone())));
    parameters.insert("clip_limit".into(), num(args.clip_limit));
    parameters.insert("tiles".into(), Value::from(args.tiles.clone()));
    parameters.insert("exposures".into(), args.exposures.as_deref().map_or(Value::Null, path_value));
    parameters.insert("reference_exposure".into(), reference_exposure.map_or(Value::Null, num));

    let mut table = Table::new(&["image", "output"]);
    for name in &processed {
        table.push(vec![name.clone(), args.output.join(name).display().to_string()]);
    }
    let metrics = json!({"processed": processed, "count": processed.len()});
    Ok(Outcome {
        parameters,
        metrics,
        table,
    })
}
