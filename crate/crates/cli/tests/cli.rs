use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn sweepkit(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sweepkit"))
        .args(args)
        .current_dir(dir)
        .env_remove("SWEEPKIT_SEED")
        .env("RUST_BACKTRACE", "0")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = sweepkit(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str], dir: &Path) -> String {
    let out = sweepkit(args, dir);
    assert!(!out.status.success(), "{args:?} should fail");
    String::from_utf8(out.stderr).unwrap()
}

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
        .display()
        .to_string()
}

/// The number after `label:` on its own output line.
fn value_after(stdout: &str, label: &str) -> f64 {
    let line = stdout
        .lines()
        .find(|l| l.starts_with(label))
        .unwrap_or_else(|| panic!("no {label} in\n{stdout}"));
    line[label.len()..]
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn lists_bundled_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["scenarios"], dir.path());
    assert!(out.lines().any(|l| l == "@baseline"));
    assert!(out.lines().any(|l| l == "@rotation-set"));
}

#[test]
fn calibrates_exact_and_noisy_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(
        &["calibrate", &fixture("pairs.json"), "-o", "graph.json"],
        dir.path(),
    );
    assert!(value_after(&out, "rmse:") < 1e-6);
    let graph = json(&dir.path().join("graph.json"));
    assert_eq!(graph["edges"].as_array().unwrap().len(), 1);

    // Eight pairs with unit noise: about sqrt((3n - 6) / n) = 1.5 mm residual.
    let out = ok(&["calibrate", &fixture("pairs_noisy.json")], dir.path());
    let rmse = value_after(&out, "rmse:");
    assert!((0.5..2.5).contains(&rmse), "rmse {rmse}");
}

#[test]
fn calibration_needs_four_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let err = fails(&["calibrate", &fixture("pairs_three.json")], dir.path());
    assert!(err.contains("need at least 4 point pairs, got 3"), "{err}");
}

fn render_and_extract(scenario: &str, dir: &Path) -> String {
    ok(&["render", scenario, "-o", "cap"], dir);
    ok(
        &[
            "extract",
            "--rgb",
            "cap/rgb.png",
            "--depth",
            "cap/depth.png",
            "--markers",
            "cap/markers.json",
            "--graph",
            "cap/graph.json",
            "--truth",
            "cap/truth_mask.png",
            "-o",
            "ex",
        ],
        dir,
    )
}

#[test]
fn extraction_covers_the_visible_stripe() {
    let dir = tempfile::tempdir().unwrap();
    let out = render_and_extract("@baseline", dir.path());
    assert!(value_after(&out, "coverage:") >= 95.0, "{out}");
    assert!(dir.path().join("ex/overlay.png").is_file());
    assert!(
        json(&dir.path().join("ex/trajectory.json"))
            .as_array()
            .unwrap()
            .len()
            > 250
    );

    let dir = tempfile::tempdir().unwrap();
    let out = render_and_extract("@occluded", dir.path());
    let coverage = json(&dir.path().join("ex/coverage.json"));
    assert!(
        (coverage["fraction"].as_f64().unwrap() - 1.0).abs() <= 0.05,
        "{out}"
    );
}

#[test]
fn extraction_parameters_can_be_overridden() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["render", "@baseline", "-o", "cap"], dir.path());
    let args = [
        "extract",
        "--rgb",
        "cap/rgb.png",
        "--depth",
        "cap/depth.png",
        "--markers",
        "cap/markers.json",
        "--graph",
        "cap/graph.json",
    ];
    let err = fails(&[&args[..], &["--set", "noSuchKey=3"]].concat(), dir.path());
    assert!(err.contains("noSuchKey"), "{err}");
    ok(&[&args[..], &["--set", "seedCount=4"]].concat(), dir.path());
}

#[test]
fn vee_plan_has_one_key_point_at_the_apex() {
    let dir = tempfile::tempdir().unwrap();
    render_and_extract("@vee", dir.path());
    ok(
        &[
            "plan",
            "--trajectory",
            "ex/trajectory.json",
            "--depth",
            "cap/depth.png",
            "--graph",
            "cap/graph.json",
            "-o",
            "plan.json",
        ],
        dir.path(),
    );
    let plan = json(&dir.path().join("plan.json"));
    let keys = plan["keyPoints"].as_array().unwrap();
    assert_eq!(keys.len(), 1);
    let apex = &plan["points"][keys[0].as_u64().unwrap() as usize];
    assert!(
        apex[0].as_f64().unwrap().abs() < 5.0 && (apex[1].as_f64().unwrap() - 40.0).abs() < 5.0,
        "{apex}"
    );
    assert_eq!(plan["segments"].as_array().unwrap().len(), 2);
}

#[test]
fn compensated_shift_run_and_report() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["run", "@shift", "-o", "run"], dir.path());
    let m = json(&dir.path().join("run/metrics.json"));
    assert_eq!(m["events"].as_array().unwrap().len(), 1);
    assert!(m["centerline"]["maxJumpVoxels"].as_f64().unwrap() < 2.0);
    for name in [
        "poses.jsonl",
        "events.jsonl",
        "volume.raw",
        "volume.json",
        "plan.json",
        "frames/frame_00000.png",
    ] {
        assert!(dir.path().join("run").join(name).is_file(), "{name}");
    }
    let out = ok(&["report", "run"], dir.path());
    assert!(out.contains("motion event 1 at step 140"), "{out}");
    assert!(dir.path().join("run/tracking_error.png").is_file());
}

#[test]
fn uncompensated_shift_breaks_the_volume() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["run", "@shift-uncompensated", "-o", "run"], dir.path());
    let m = json(&dir.path().join("run/metrics.json"));
    assert!(m["centerline"]["maxJumpVoxels"].as_f64().unwrap() > 45.0);
}

#[test]
fn failed_gate_aborts_with_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let err = fails(
        &[
            "run",
            "@shift",
            "-o",
            "run",
            "--set",
            "noise.markerSigmaMm=2",
            "--set",
            "motion.resumeThresholdMm=0.01",
        ],
        dir.path(),
    );
    assert!(err.contains("sweep aborted at motion event 1"), "{err}");
}

#[test]
fn study_sets_compare_by_t_test() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["run", "@translation-set", "-o", "tr"], dir.path());
    ok(&["run", "@rotation-set", "-o", "rot"], dir.path());
    let trials = std::fs::read_to_string(dir.path().join("tr/trials.jsonl")).unwrap();
    assert_eq!(trials.lines().count(), 40);
    let out = ok(&["report", "tr", "rot"], dir.path());
    let line = out
        .lines()
        .find(|l| l.starts_with("welch t-test translation-set vs rotation-set"))
        .unwrap();
    let p: f64 = line.rsplit("p = ").next().unwrap().parse().unwrap();
    assert!(p > 0.05, "{line}");
    assert!(dir.path().join("rot/compensation_error.png").is_file());
}

#[test]
fn seeds_come_from_flag_env_or_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("noseed.json"),
        r#"{"compensation": {"seedsPerMagnitude": 2}}"#,
    )
    .unwrap();
    let err = fails(&["run", "noseed.json", "-o", "a"], dir.path());
    assert!(err.contains("seed"), "{err}");
    ok(
        &["run", "noseed.json", "-o", "a", "--seed", "5"],
        dir.path(),
    );
    assert_eq!(json(&dir.path().join("a/metrics.json"))["seed"], 5);
    let out = Command::new(env!("CARGO_BIN_EXE_sweepkit"))
        .args(["run", "noseed.json", "-o", "b"])
        .current_dir(dir.path())
        .env("SWEEPKIT_SEED", "5")
        .output()
        .unwrap();
    assert!(out.status.success());
    // Same seed, same bytes.
    assert_eq!(
        std::fs::read(dir.path().join("a/trials.jsonl")).unwrap(),
        std::fs::read(dir.path().join("b/trials.jsonl")).unwrap()
    );
}

#[test]
fn unknown_overrides_and_empty_reports_fail() {
    let dir = tempfile::tempdir().unwrap();
    let err = fails(
        &["run", "@baseline", "-o", "x", "--set", "noise.bogus=1"],
        dir.path(),
    );
    assert!(err.contains("bogus"), "{err}");
    std::fs::create_dir(dir.path().join("empty")).unwrap();
    let err = fails(&["report", "empty"], dir.path());
    assert!(err.contains("metrics.json missing"), "{err}");
    let err = fails(&["run", "@nope", "-o", "x"], dir.path());
    assert!(err.contains("no bundled scenario"), "{err}");
}
