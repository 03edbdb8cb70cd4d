use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use matafkit::io::{parse_cohort_stats, scenario_json, HomographyFile};
use matafkit::synth::preset;
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_matafkit"));
    c.env_remove("MATAFKIT_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn error_record(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stderr);
    serde_json::from_str(text.lines().last().unwrap_or("")).unwrap_or_else(|_| panic!("stderr: {text}"))
}

#[test]
fn calibrate_identity_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = dir.path().join("pairs.json");
    fs::write(
        &pairs,
        r#"{"pairs":[{"u":0,"v":0,"x":0,"y":0},{"u":1,"v":0,"x":1,"y":0},
                     {"u":1,"v":1,"x":1,"y":1},{"u":0,"v":1,"x":0,"y":1}]}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = run(&["calibrate", "--calibration", s(&pairs), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let h = HomographyFile::parse(&fs::read_to_string(out.join("homography.json")).unwrap()).unwrap();
    assert_eq!(h.format_version, "1.0");
    assert!(h.rms_error_m <= 1e-9);
    let id = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    for (a, b) in h.h.iter().zip(id) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn density_of_no_tracks_is_blank() {
    let dir = tempfile::tempdir().unwrap();
    let tracks = dir.path().join("empty.csv");
    fs::write(&tracks, "track_id,frame,x,y,space\n").unwrap();
    let out = dir.path().join("out");
    let o = run(&["density", "--tracks", s(&tracks), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("density/frame_000000.csv")).unwrap();
    assert_eq!(csv.lines().count(), 31);
    assert!(csv.lines().all(|l| l.split(',').count() == 21 && l.split(',').all(|v| v == "0")));
    let ppm = fs::read_to_string(out.join("density/mean.ppm")).unwrap();
    let pixels: Vec<&str> = ppm
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(3)
        .flat_map(|l| l.split_whitespace())
        .collect();
    assert_eq!(pixels.len(), 21 * 31 * 3);
    assert!(pixels.iter().all(|&p| p == "255"));
    assert!(out.join("radial_profile.csv").is_file());
}

#[test]
fn synth_then_speeds_recovers_cohorts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&["synth", "--preset", "free_flow", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&[
        "speeds",
        "--tracks",
        s(&out.join("tracks.csv")),
        "--cohorts",
        s(&out.join("cohorts.csv")),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stats = parse_cohort_stats(&fs::read_to_string(out.join("cohort_stats.csv")).unwrap()).unwrap();
    let scenario = preset("free_flow").unwrap();
    for mix in &scenario.cohorts {
        let row = stats.iter().find(|r| r.cohort == mix.cohort.label()).unwrap();
        let se = mix.sigma / (row.n as f64).sqrt();
        assert!(
            (row.mu - mix.mu).abs() <= 3.0 * se,
            "{}: {} vs {} (3 se = {})",
            row.cohort,
            row.mu,
            mix.mu,
            3.0 * se
        );
    }
}

#[test]
fn exit_codes_and_error_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");

    let o = run(&["density", "--tracks", "/no/such/file.csv", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_record(&o)["error"]["kind"], "config");

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "track_id,frame,x,y,space\na,zero,1,2,world\n").unwrap();
    let o = run(&["density", "--tracks", s(&bad), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_record(&o)["error"]["exit_code"], 3);

    let line = dir.path().join("line.json");
    fs::write(
        &line,
        r#"{"pairs":[{"u":0,"v":0,"x":0,"y":0},{"u":1,"v":1,"x":1,"y":0},
                     {"u":2,"v":2,"x":1,"y":1},{"u":3,"v":3,"x":0,"y":1}]}"#,
    )
    .unwrap();
    let o = run(&["calibrate", "--calibration", s(&line), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(error_record(&o)["error"]["kind"], "numeric");

    let o = run(&["density", "--fps", "0", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["synth", "--preset", "carnival", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn out_dir_falls_back_to_env() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = dir.path().join("pairs.json");
    fs::write(
        &pairs,
        r#"{"pairs":[{"u":0,"v":0,"x":0,"y":0},{"u":2,"v":0,"x":1,"y":0},
                     {"u":2,"v":2,"x":1,"y":1},{"u":0,"v":2,"x":0,"y":1}]}"#,
    )
    .unwrap();
    let env_out = dir.path().join("from_env");
    let o = bin()
        .args(["calibrate", "--calibration", s(&pairs)])
        .env("MATAFKIT_OUT", &env_out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(env_out.join("homography.json").is_file());

    // an explicit flag wins over the environment
    let flag_out = dir.path().join("from_flag");
    let o = bin()
        .args(["calibrate", "--calibration", s(&pairs), "--out", s(&flag_out)])
        .env("MATAFKIT_OUT", &env_out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(flag_out.join("homography.json").is_file());
}

#[test]
fn config_file_with_relative_paths_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("pairs.json"),
        r#"{"pairs":[{"u":0,"v":0,"x":0,"y":0},{"u":1,"v":0,"x":1,"y":0},
                     {"u":1,"v":1,"x":1,"y":1},{"u":0,"v":1,"x":0,"y":1}]}"#,
    )
    .unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"calibration": "pairs.json", "out": "results", "fps": 30}"#).unwrap();
    let o = bin().args(["calibrate", "--config", s(&cfg)]).current_dir("/").output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("results/homography.json").is_file());

    fs::write(&cfg, r#"{"calibration": "pairs.json", "frames_per_second": 30}"#).unwrap();
    let o = run(&["calibrate", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn help_documents_flags_and_env() {
    let o = run(&["--help"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    for needle in ["--config", "--cell-size", "--fps", "--bin-width", "--seed", "MATAFKIT_OUT", "report"] {
        assert!(text.contains(needle), "help lacks {needle}");
    }
}

fn small_scenario(dir: &Path) -> PathBuf {
    let mut s = preset("prayer").unwrap();
    s.n_agents = 400;
    s.duration = 100.0;
    let path = dir.join("scenario.json");
    fs::write(&path, scenario_json(&s).unwrap()).unwrap();
    path
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn report_equals_union_of_single_commands() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = small_scenario(dir.path());
    let whole = dir.path().join("whole");
    let o = run(&["report", "--scenario", s(&scenario), "--out", s(&whole)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let parts = dir.path().join("parts");
    let o = run(&["synth", "--scenario", s(&scenario), "--out", s(&parts)]);
    assert!(o.status.success());
    let tracks = parts.join("tracks.csv");
    let cohorts = parts.join("cohorts.csv");
    let site = parts.join("site.json");
    for cmd in ["density", "speeds", "fdiag", "edge", "osc", "timeseries"] {
        let o = run(&[
            cmd,
            "--tracks",
            s(&tracks),
            "--cohorts",
            s(&cohorts),
            "--site",
            s(&site),
            "--out",
            s(&parts),
        ]);
        // the prayer crowd leaves the outer ring empty, which is a data error
        if cmd == "edge" {
            assert_eq!(o.status.code(), Some(3));
        } else {
            assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        }
    }

    let mut expected = files(&parts);
    expected.push(PathBuf::from("report.json"));
    expected.sort();
    assert_eq!(files(&whole), expected);
    for f in files(&parts) {
        assert_eq!(fs::read(whole.join(&f)).unwrap(), fs::read(parts.join(&f)).unwrap(), "{}", f.display());
    }
    let report: Value = serde_json::from_str(&fs::read_to_string(whole.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["format_version"], "1.0");
    let standstills = report["steps"]
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["command"] == "timeseries")
        .unwrap()["results"]["standstills"]
        .clone();
    assert_eq!(standstills, serde_json::json!([[40.0, 80.0]]));
}
