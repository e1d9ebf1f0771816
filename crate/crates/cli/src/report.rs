use std::io::BufRead;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use sweepkit::io;
use sweepkit::simscene::{MotionKind, PoseRecord, StudyMetrics, SweepMetrics, Trial};
use sweepkit::stats::{welch_t_test, Summary};

use crate::plot;

#[derive(Deserialize)]
#[serde(untagged)]
enum Metrics {
    Sweep(SweepMetrics),
    Study(StudyMetrics),
}

fn summary(s: &Option<Summary>) -> String {
    match s {
        Some(s) => format!(
            "mean {:.3}  sd {:.3}  median {:.3}  max {:.3}  (n = {})",
            s.mean, s.sd, s.median, s.max, s.count
        ),
        None => "none".into(),
    }
}

pub fn print_sweep(m: &SweepMetrics) {
    println!("sweep {} (seed {})", m.name, m.seed);
    println!("  {:<22}{}", "steps", m.steps);
    println!(
        "  {:<22}{:.3e} mm",
        "calibration rmse", m.calibration_rmse_mm
    );
    println!("  {:<22}{:.1} %", "stripe coverage", m.coverage * 100.0);
    println!("  {:<22}{} mm", "path error", summary(&m.path_error));
    println!(
        "  {:<22}{} mm",
        "tracking error",
        summary(&m.tracking_error)
    );
    println!("  {:<22}{}", "key points", m.key_points.len());
    for (i, p) in m.key_points.iter().zip(&m.key_point_positions) {
        println!("    #{i:<5} at [{:.1}, {:.1}, {:.1}] mm", p[0], p[1], p[2]);
    }
    println!("  segments");
    for s in &m.segments {
        println!(
            "    {:>4}..{:<4} normal error {:.3} deg",
            s.start, s.end, s.angle_deg
        );
    }
    if m.events.is_empty() {
        println!("  {:<22}none", "motion events");
    }
    for e in &m.events {
        println!(
            "  motion event {} at step {}: e_mc {:.3} mm, {:?}",
            e.stage, e.step, e.e_mc_mm, e.decision
        );
    }
    if let Some(c) = &m.centerline {
        println!(
            "  {:<22}{} slices, max jump {:.2} mm ({:.2} voxels), radius {:.2} mm (true {:.2})",
            "vessel centerline",
            c.slices,
            c.max_jump_mm,
            c.max_jump_voxels,
            c.mean_radius_mm,
            c.true_radius_mm
        );
    }
}

pub fn print_study(m: &StudyMetrics) {
    println!(
        "compensation study {} (seed {}, marker sigma {} mm)",
        m.name, m.seed, m.marker_sigma_mm
    );
    println!(
        "  {:<12}{:>10}{:>6}{:>10}{:>10}{:>10}{:>10}",
        "motion", "magnitude", "n", "mean", "sd", "median", "max"
    );
    for b in &m.by_magnitude {
        let unit = match b.kind {
            MotionKind::Translation => "mm",
            MotionKind::Rotation => "deg",
        };
        println!(
            "  {:<12}{:>7.0} {unit:<3}{:>5}{:>10.3}{:>10.3}{:>10.3}{:>10.3}",
            format!("{:?}", b.kind).to_lowercase(),
            b.magnitude,
            b.e_mc.count,
            b.e_mc.mean,
            b.e_mc.sd,
            b.e_mc.median,
            b.e_mc.max
        );
    }
    for s in &m.sets {
        println!(
            "  {:<12}e_mc {:.3} ± {:.3} mm, {:.0} % below {} mm",
            format!("{:?}", s.kind).to_lowercase(),
            s.e_mc.mean,
            s.e_mc.sd,
            s.fraction_good * 100.0,
            m.good_below_mm
        );
    }
    println!("  {:<12}{} mm", "overall", summary(&m.overall));
    println!(
        "  {:<12}{:.0} % below {} mm",
        "",
        m.fraction_good * 100.0,
        m.good_below_mm
    );
    if let Some(t) = &m.t_test {
        println!(
            "  welch t-test translation vs rotation: t = {:.3}, df = {:.1}, p = {:.4}",
            t.t, t.df, t.p
        );
    }
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(
                serde_json::from_str(&line)
                    .with_context(|| format!("{}:{}", path.display(), i + 1))?,
            );
        }
    }
    Ok(out)
}

/// Prints each run's tables and writes its plot into the run directory.
/// Two or more study directories are also compared pairwise (first two).
pub fn report(dirs: &[PathBuf]) -> Result<()> {
    let mut study_errors = Vec::new();
    for dir in dirs {
        let path = dir.join("metrics.json");
        if !path.is_file() {
            bail!("{} holds no run (metrics.json missing)", dir.display());
        }
        match io::read_json::<Metrics>(&path)
            .with_context(|| format!("{} is not a run's metrics", path.display()))?
        {
            Metrics::Sweep(m) => {
                print_sweep(&m);
                let poses: Vec<PoseRecord> = read_lines(&dir.join("poses.jsonl"))?;
                let errors: Vec<f64> = poses.iter().map(|p| p.tracking_error_mm).collect();
                let out = dir.join("tracking_error.png");
                io::write_rgb(&out, &plot::line_chart(&errors, plot::RED))?;
                println!("  plot: {}", out.display());
            }
            Metrics::Study(m) => {
                print_study(&m);
                let bars: Vec<_> = m
                    .by_magnitude
                    .iter()
                    .map(|b| {
                        let color = match b.kind {
                            MotionKind::Translation => plot::BLUE,
                            MotionKind::Rotation => plot::ORANGE,
                        };
                        (b.e_mc.mean, b.e_mc.sd, color)
                    })
                    .collect();
                let out = dir.join("compensation_error.png");
                io::write_rgb(&out, &plot::bar_chart(&bars))?;
                println!("  plot: {}", out.display());
                let trials: Vec<Trial> = read_lines(&dir.join("trials.jsonl"))?;
                study_errors.push((
                    m.name.clone(),
                    trials.iter().map(|t| t.e_mc_mm).collect::<Vec<_>>(),
                ));
            }
        }
        println!();
    }
    if let [(a, ea), (b, eb), ..] = study_errors.as_slice() {
        match welch_t_test(ea, eb) {
            Some(t) => println!(
                "welch t-test {a} vs {b}: t = {:.3}, df = {:.1}, p = {:.4}",
                t.t, t.df, t.p
            ),
            None => println!("welch t-test {a} vs {b}: not enough trials"),
        }
    }
    Ok(())
}
