//! `recon-eval` command-line front end.

mod color;
mod geom;
mod report;
mod select;
mod traj;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use report::{emit, render, CmdResult, Failure, Format, Outcome, EXIT_INPUT};

#[derive(Debug, Parser)]
#[command(name = "recon-eval", version, about = "Evaluation toolkit for underwater 3D reconstruction")]
struct Cli {
    /// Report destination; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "json")]
    format: Format,
    /// Worker threads; all available cores by default.
    #[arg(long, global = true, env = "RECON_EVAL_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Absolute and relative trajectory error.
    EvalTraj(traj::EvalTraj),
    /// Scale normalization, ICP, and cloud metrics against a reference.
    EvalGeom(geom::EvalGeom),
    /// Triangle count, surface area, and mean curvature of a mesh.
    EvalMesh(geom::EvalMesh),
    /// Greedy in-air view selection covering weak voxels.
    SelectViews(select::SelectViews),
    /// CIE Lab color difference statistics.
    EvalColor(color::EvalColor),
    /// PSNR and SSIM of renderings.
    EvalRender(color::EvalRender),
    /// Crop, CLAHE, white balance, exposure normalization.
    Preprocess(color::Preprocess),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::EvalTraj(_) => "eval-traj",
            Command::EvalGeom(_) => "eval-geom",
            Command::EvalMesh(_) => "eval-mesh",
            Command::SelectViews(_) => "select-views",
            Command::EvalColor(_) => "eval-color",
            Command::EvalRender(_) => "eval-render",
            Command::Preprocess(_) => "preprocess",
        }
    }

    fn run(&self) -> CmdResult<Outcome> {
        match self {
            Command::EvalTraj(a) => traj::run(a),
            Command::EvalGeom(a) => geom::run_geom(a),
            Command::EvalMesh(a) => geom::run_mesh(a),
            Command::SelectViews(a) => select::run(a),
            Command::EvalColor(a) => color::run_color(a),
            Command::EvalRender(a) => color::run_render(a),
            Command::Preprocess(a) => color::run_preprocess(a),
        }
    }
}

fn execute(cli: &Cli) -> CmdResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| report::input_failure("configuring threads", e))?;
    }
    let start = Instant::now();
    let outcome = cli.command.run()?;
    let bytes = render(cli.command.name(), &outcome, cli.format, start.elapsed().as_secs_f64())?;
    emit(&bytes, cli.out.as_ref())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INPUT)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, stage, error }) => {
            eprintln!("error: {stage}: {error:#}");
            ExitCode::from(code)
        }
    }
}
