use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use sweepkit::geom::{
    hand_eye_calibrate, CalibrationPairDoc, FrameGraph, FrameGraphDoc, FrameId, IntrinsicsDoc,
};
use sweepkit::imgproc::{
    column_coverage, extract_roi, extract_trajectory, filter_seeds, seed_points, ExtractionParams,
    ImageBundle, MarkerObservation, Plane, Trajectory2D,
};
use sweepkit::io;
use sweepkit::pathplan::KeyPointParams;
use sweepkit::simscene::{
    initial_capture, plan_trajectory, run_compensation_study, run_scenario, CameraSpec, PlanConfig,
    PlannedPath,
};

mod config;
mod plot;
mod report;

use config::{load_experiment, parameters, Experiment};

#[derive(Parser)]
#[command(
    name = "sweepkit",
    version,
    about = "Autonomous ultrasound sweep pipeline on a synthetic phantom"
)]
struct Cli {
    /// Seed for every random draw; overrides the experiment's own seed.
    #[arg(long, global = true, env = "SWEEPKIT_SEED")]
    seed: Option<u64>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the camera-to-base transform from point pairs.
    Calibrate {
        /// JSON array of {"camera": [x,y,z], "base": [x,y,z]} pairs, mm.
        pairs: PathBuf,
        /// Camera intrinsics JSON; defaults to the simulated camera.
        #[arg(long)]
        intrinsics: Option<PathBuf>,
        /// Where to write the frame graph.
        #[arg(long, short, default_value = "graph.json")]
        out: PathBuf,
    },
    /// Extract the painted trajectory from an RGB-D capture.
    Extract {
        #[arg(long)]
        rgb: PathBuf,
        #[arg(long)]
        depth: PathBuf,
        /// The two end-marker observations.
        #[arg(long)]
        markers: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        /// Ground-truth stripe mask; enables the coverage report.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Extraction parameters JSON.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Parameter override, e.g. `crTolerance=25`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        #[arg(long, short, default_value = "extract")]
        out: PathBuf,
    },
    /// Back-project a trajectory and plan the probe orientations.
    Plan {
        /// Centerline JSON written by `extract`.
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        depth: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        /// Planning parameters JSON ({"keyPoints": .., "plan": ..}).
        #[arg(long)]
        params: Option<PathBuf>,
        /// Parameter override, e.g. `plan.mergeThreshold=30`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        #[arg(long, short, default_value = "plan.json")]
        out: PathBuf,
    },
    /// Run a sweep scenario or a compensation study.
    Run {
        /// Experiment file, or `@name` for a bundled one.
        experiment: String,
        /// Override inside the experiment, e.g. `noise.depthSigmaMm=2`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Render the RGB-D capture of a sweep scenario without running it.
    Render {
        experiment: String,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Summarize run directories as tables and plots.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
    /// List the bundled experiments.
    Scenarios,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct PlanParams {
    #[serde(default)]
    key_points: KeyPointParams,
    #[serde(default)]
    plan: PlanConfig,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct PlanOutput<'a> {
    points: Vec<[f64; 3]>,
    normals: Vec<[f64; 3]>,
    key_points: &'a [usize],
    segments: &'a [sweepkit::pathplan::Segment<f64>],
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
    match cli.command {
        Command::Calibrate {
            pairs,
            intrinsics,
            out,
        } => calibrate(&pairs, intrinsics.as_deref(), &out),
        Command::Extract {
            rgb,
            depth,
            markers,
            graph,
            truth,
            params,
            sets,
            out,
        } => extract(
            &rgb,
            &depth,
            &markers,
            &graph,
            truth.as_deref(),
            params.as_deref(),
            &sets,
            &out,
        ),
        Command::Plan {
            trajectory,
            depth,
            graph,
            params,
            sets,
            out,
        } => plan(&trajectory, &depth, &graph, params.as_deref(), &sets, &out),
        Command::Run {
            experiment,
            sets,
            out,
        } => run(&load_experiment(&experiment, cli.seed, &sets)?, &out),
        Command::Render {
            experiment,
            sets,
            out,
        } => render(&load_experiment(&experiment, cli.seed, &sets)?, &out),
        Command::Report { dirs } => report::report(&dirs),
        Command::Scenarios => {
            for (name, _) in config::BUNDLED {
                println!("@{name}");
            }
            Ok(())
        }
    }
}

fn read_graph(path: &Path) -> Result<FrameGraph<f64>> {
    let doc: FrameGraphDoc = io::read_json(path)?;
    FrameGraph::from_doc(&doc).with_context(|| format!("invalid frame graph in {}", path.display()))
}

fn calibrate(pairs: &Path, intrinsics: Option<&Path>, out: &Path) -> Result<()> {
    let docs: Vec<CalibrationPairDoc> = io::read_json(pairs)?;
    let k: sweepkit::CameraIntrinsics = match intrinsics {
        Some(path) => io::read_json::<IntrinsicsDoc>(path)?,
        None => CameraSpec::default().intrinsics,
    }
    .to_intrinsics()?;
    let pairs: Vec<_> = docs.iter().map(|d| d.to_pair()).collect();
    let calibration =
        hand_eye_calibrate(&FrameGraph::new(k), &pairs).context("calibration failed")?;
    io::write_json(out, &calibration.graph.to_doc())?;
    println!("pairs: {}", pairs.len());
    println!("rmse: {:.6} mm", calibration.rmse);
    for row in calibration.base_from_camera.to_rows() {
        println!(
            "  [{:>10.5} {:>10.5} {:>10.5} {:>10.3}]",
            row[0], row[1], row[2], row[3]
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn load_bundle(rgb: Option<&Path>, depth: &Path, graph: &FrameGraph<f64>) -> Result<ImageBundle> {
    let depth = io::read_depth(depth)?;
    let rgb = match rgb {
        Some(path) => io::read_rgb(path)?,
        None => Plane::new(depth.width(), depth.height(), [0, 0, 0]),
    };
    ImageBundle::new(rgb, depth, *graph.intrinsics())
        .context("the images do not match the camera intrinsics")
}

#[allow(clippy::too_many_arguments)]
fn extract(
    rgb: &Path,
    depth: &Path,
    markers: &Path,
    graph: &Path,
    truth: Option<&Path>,
    params: Option<&Path>,
    sets: &[String],
    out: &Path,
) -> Result<()> {
    let params: ExtractionParams = parameters(params, sets)?;
    params.validate()?;
    let graph = read_graph(graph)?;
    let bundle = load_bundle(Some(rgb), depth, &graph)?;
    let [a, b]: [MarkerObservation; 2] = io::read_json(markers)?;
    let roi = extract_roi(&bundle, Some(&a), Some(&b), &params)?;
    let candidates = seed_points(&roi, &params);
    let seeds = filter_seeds(&roi, &candidates, &params);
    let accepted = seeds.iter().filter(|s| s.accepted).count();
    let trajectory = extract_trajectory(&roi, &seeds, &params)?;
    log::info!("{accepted} of {} seeds accepted", seeds.len());

    io::create_dir(out)?;
    let centerline: Vec<[f64; 2]> = trajectory.centerline.iter().map(|p| [p.x, p.y]).collect();
    io::write_json(&out.join("trajectory.json"), &centerline)?;
    let mut overlay = bundle.rgb.clone();
    for p in &trajectory.points {
        overlay.set(p[0] as usize, p[1] as usize, [0, 220, 0]);
    }
    io::write_rgb(&out.join("overlay.png"), &overlay)?;
    println!("seeds: {accepted} accepted of {}", seeds.len());
    println!("pixels: {}", trajectory.len());
    println!("centerline samples: {}", centerline.len());
    if let Some(truth) = truth {
        let mask = io::read_mask(truth)?;
        let coverage = column_coverage(&trajectory, &mask, &roi);
        io::write_json(
            &out.join("coverage.json"),
            &serde_json::json!({
                "fraction": coverage.fraction(),
                "extentRatio": coverage.extent_ratio(),
                "truthColumns": coverage.truth_columns,
                "coveredColumns": coverage.covered_columns,
                "extractedColumns": coverage.extracted_columns,
                "offStripePixels": coverage.off_stripe_pixels,
            }),
        )?;
        println!(
            "coverage: {:.1} % of {} stripe columns (extent ratio {:.3})",
            coverage.fraction() * 100.0,
            coverage.truth_columns,
            coverage.extent_ratio()
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn plan(
    trajectory: &Path,
    depth: &Path,
    graph: &Path,
    params: Option<&Path>,
    sets: &[String],
    out: &Path,
) -> Result<()> {
    let params: PlanParams = parameters(params, sets)?;
    let graph = read_graph(graph)?;
    let bundle = load_bundle(None, depth, &graph)?;
    let centerline: Vec<[f64; 2]> = io::read_json(trajectory)?;
    if centerline.len() < 2 {
        bail!(
            "{} holds fewer than two centerline samples",
            trajectory.display()
        );
    }
    let trajectory = Trajectory2D {
        points: Vec::new(),
        seed_index: Vec::new(),
        rectified: Vec::new(),
        centerline: centerline
            .iter()
            .map(|p| Vector2::new(p[0], p[1]))
            .collect(),
    };
    let PlannedPath {
        points,
        normals,
        key_points,
        plan,
    } = plan_trajectory(
        &trajectory,
        &bundle,
        &graph,
        &params.key_points,
        &params.plan,
    )?;
    let array = |v: &nalgebra::Vector3<f64>| [v.x, v.y, v.z];
    io::write_json(
        out,
        &PlanOutput {
            points: points.iter().map(array).collect(),
            normals: normals.iter().map(array).collect(),
            key_points: &key_points,
            segments: &plan.segments,
        },
    )?;
    println!("points: {}", points.len());
    println!("key points: {key_points:?}");
    for s in &plan.segments {
        println!(
            "segment {:>4}..{:<4} z = [{:.3}, {:.3}, {:.3}]",
            s.start, s.end, s.z_axis.x, s.z_axis.y, s.z_axis.z
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn run(experiment: &Experiment, out: &Path) -> Result<()> {
    match experiment {
        Experiment::Sweep(script) => {
            log::info!("running sweep {:?} with seed {}", script.name, script.seed);
            let run = run_scenario(script)?;
            io::create_dir(out)?;
            run.write_dir(out)?;
            report::print_sweep(&run.metrics);
        }
        Experiment::Compensation(study) => {
            log::info!(
                "running compensation study {:?} with seed {}",
                study.name,
                study.seed
            );
            let report = run_compensation_study(study)?;
            io::create_dir(out)?;
            let mut file = io::create_file(&out.join("trials.jsonl"))?;
            for t in &report.trials {
                serde_json::to_writer(&mut file, t)?;
                std::io::Write::write_all(&mut file, b"\n")?;
            }
            std::io::Write::flush(&mut file)?;
            io::write_json(&out.join("metrics.json"), &report.metrics)?;
            report::print_study(&report.metrics);
        }
    }
    io::write_json(&out.join("experiment.json"), experiment)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn render(experiment: &Experiment, out: &Path) -> Result<()> {
    let Experiment::Sweep(script) = experiment else {
        bail!("render needs a sweep experiment");
    };
    script.validate()?;
    // The same capture a full run of this experiment starts from.
    let (pairs, capture, _) = initial_capture(script)?;
    let k = script.camera.camera_intrinsics()?;
    let graph = FrameGraph::new(k).with_edge(
        FrameId::Base,
        FrameId::Camera,
        script.camera.base_from_camera(),
    );
    io::create_dir(out)?;
    io::write_rgb(&out.join("rgb.png"), &capture.bundle.rgb)?;
    io::write_depth(&out.join("depth.png"), &capture.bundle.depth)?;
    io::write_mask(&out.join("truth_mask.png"), &capture.truth.stripe_mask)?;
    io::write_json(&out.join("markers.json"), &capture.end_observations)?;
    io::write_json(&out.join("graph.json"), &graph.to_doc())?;
    let pair_docs: Vec<CalibrationPairDoc> = pairs.iter().map(CalibrationPairDoc::from).collect();
    io::write_json(&out.join("pairs.json"), &pair_docs)?;
    io::write_json(&out.join("experiment.json"), experiment)?;
    println!("wrote {}", out.display());
    Ok(())
}
