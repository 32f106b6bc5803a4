use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde_json::{json, Map, Value};

use recon_eval::io::trajectory::{parse_trajectory_with, QuaternionOrder};
use recon_eval::trajectory_metrics::{ate, default_max_dt, rpe, AlignmentMode};

use crate::report::{fmt, input_failure, num, path_value, CmdResult, Outcome, Stage, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Sim3,
    Se3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QuatOrder {
    Xyzw,
    Wxyz,
}

#[derive(Debug, Args)]
pub struct EvalTraj {
    /// Estimated trajectory (t x y z q q q q per line).
    #[arg(long)]
    pub est: PathBuf,
    /// Ground-truth trajectory, same format.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, value_enum, default_value = "sim3")]
    pub mode: Mode,
    /// Frame offset for relative pose error.
    #[arg(long, default_value_t = 1)]
    pub delta: usize,
    /// Association window in seconds; half the median ground-truth interval by default.
    #[arg(long)]
    pub max_dt: Option<f64>,
    /// Quaternion component order in both files.
    #[arg(long, value_enum, default_value = "xyzw")]
    pub quat_order: QuatOrder,
    /// Also write per-frame ATE residuals as CSV.
    #[arg(long)]
    pub per_frame: Option<PathBuf>,
}

const M_TO_CM: f64 = 100.0;

pub fn run(args: &EvalTraj) -> CmdResult<Outcome> {
    let order = match args.quat_order {
        QuatOrder::Xyzw => QuaternionOrder::XyzW,
        QuatOrder::Wxyz => QuaternionOrder::WXyz,
    };
    let est = parse_trajectory_with(&args.est, order).stage(format!("reading --est {}", args.est.display()))?;
    let gt = parse_trajectory_with(&args.gt, order).stage(format!("reading --gt {}", args.gt.display()))?;
    let max_dt = match args.max_dt {
        Some(v) => v,
        None => default_max_dt(&gt)
            .ok_or_else(|| input_failure("association", "--gt needs at least 2 poses to derive --max-dt"))?,
    };
    let mode = match args.mode {
        Mode::Sim3 => AlignmentMode::Sim3,
        Mode::Se3 => AlignmentMode::Se3,
    };
    let a = ate(&est, &gt, mode, max_dt).stage("computing ATE")?;
    // Relative errors are measured after removing the global scale/frame so
    // translations are comparable to ground truth.
    let aligned = est.transformed(&a.alignment);
    let r = rpe(&aligned, &gt, args.delta, max_dt).stage("computing RPE")?;

    if let Some(path) = &args.per_frame {
        let mut w = csv::Writer::from_path(path).map_err(|e| input_failure(format!("writing {}", path.display()), e))?;
        let fail = |e: csv::Error| input_failure(format!("writing {}", path.display()), e);
        w.write_record(["est_t", "gt_t", "error_m"]).map_err(fail)?;
        for (&(e, g), err) in a.pairs.iter().zip(&a.per_frame_errors) {
            w.write_record([fmt(est.poses()[e].t), fmt(gt.poses()[g].t), fmt(*err)]).map_err(fail)?;
        }
        w.flush().stage(format!("writing {}", path.display()))?;
    }

    let mode_name = match args.mode {
        Mode::Sim3 => "sim3",
        Mode::Se3 => "se3",
    };
    let mut parameters = Map::new();
    parameters.insert("est".into(), path_value(&args.est));
    parameters.insert("gt".into(), path_value(&args.gt));
    parameters.insert("mode".into(), Value::from(mode_name));
    parameters.insert("delta".into(), Value::from(args.delta));
    parameters.insert("max_dt".into(), num(max_dt));
    parameters.insert(
        "quat_order".into(),
        Value::from(match args.quat_order {
            QuatOrder::Xyzw => "xyzw",
            QuatOrder::Wxyz => "wxyz",
        }),
    );

    let rot_deg: Vec<f64> = r.per_pair_errors.iter().map(|e| e.rot.to_degrees()).collect();
    let mean_rot_deg = r.mean_rot.to_degrees();
    let metrics = json!({
        "ate": {
            "rmse_cm": num(a.rmse * M_TO_CM),
            "mean_cm": num(a.mean * M_TO_CM),
            "median_cm": num(a.median * M_TO_CM),
            "max_cm": num(a.max * M_TO_CM),
            "pairs": a.pairs.len(),
        },
        "rpe": {
            "mean_trans_cm": num(r.mean_trans * M_TO_CM),
            "rmse_trans_cm": num(r.rmse_trans * M_TO_CM),
            "mean_rot_deg": num(mean_rot_deg),
            "max_rot_deg": num(rot_deg.iter().copied().fold(0.0, f64::max)),
            "pairs": r.per_pair_errors.len(),
            "delta": r.delta,
        },
        "alignment": {
            "scale": num(a.alignment.scale),
            "rotation_wxyz": a.alignment.rotation.wxyz().map(num),
            "translation": [num(a.alignment.translation.x), num(a.alignment.translation.y), num(a.alignment.translation.z)],
        },
    });

    let mut table = Table::new(&[
        "est",
        "gt",
        "mode",
        "ATE_RMSE_cm",
        "ATE_Mean_cm",
        "ATE_Median_cm",
        "ATE_Max_cm",
        "RPE_Trans_cm",
        "RPE_Rot_deg",
        "Scale",
        "Pairs",
    ]);
    table.push(vec![
        args.est.display().to_string(),
        args.gt.display().to_string(),
        mode_name.into(),
        fmt(a.rmse * M_TO_CM),
        fmt(a.mean * M_TO_CM),
        fmt(a.median * M_TO_CM),
        fmt(a.max * M_TO_CM),
        fmt(r.mean_trans * M_TO_CM),
        fmt(mean_rot_deg),
        fmt(a.alignment.scale),
        a.pairs.len().to_string(),
    ]);
    Ok(Outcome {
        parameters,
        metrics,
        table,
    })
}
