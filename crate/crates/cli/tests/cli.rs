use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hoarir(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hoarir")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn error_json(o: &Output) -> Value {
    let err = String::from_utf8(o.stderr.clone()).unwrap();
    let line = err.lines().rev().find(|l| l.starts_with('{')).expect("json error line");
    serde_json::from_str(line).unwrap()
}

fn write_job(dir: &Path) -> String {
    let obj = "v 0 0 0\nv 3 0 0\nv 3 2.5 0\nv 0 2.5 0\nv 0 0 2.2\nv 3 0 2.2\nv 3 2.5 2.2\nv 0 2.5 2.2\n\
               usemtl wall\nf 1 3 2\nf 1 4 3\nf 5 6 7\nf 5 7 8\nf 1 2 6\nf 1 6 5\n\
               f 2 3 7\nf 2 7 6\nf 3 4 8\nf 3 8 7\nf 4 1 5\nf 4 5 8\n";
    std::fs::write(dir.join("room.obj"), obj).unwrap();
    std::fs::write(
        dir.join("mat.toml"),
        "default = \"wall\"\n[[material]]\nname = \"wall\"\nabsorption = [0.3, 0.3, 0.3, 0.3, 0.3, 0.3]\nscattering = [0.3, 0.3, 0.3, 0.3, 0.3, 0.3]\n",
    )
    .unwrap();
    let job = dir.join("room.toml");
    std::fs::write(
        &job,
        "name = \"room\"\nmesh = \"room.obj\"\nmaterials = \"mat.toml\"\nsources = [[0.9, 0.9, 1.1]]\n\
         receivers = [[2.1, 1.6, 1.2]]\nduration = 0.3\nppw = 5.0\nray_count = 3000\nseed = 3\n",
    )
    .unwrap();
    job.to_str().unwrap().to_owned()
}

#[test]
fn usage_errors_exit_two_with_json() {
    let o = hoarir(&["simulate", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"], "usage");
    assert_eq!(hoarir(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_scene_is_an_io_error() {
    let o = hoarir(&["validate-scene", "--scene", "/nonexistent/room.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_json(&o)["error"], "io");
}

#[test]
fn bad_config_reports_config_kind() {
    let dir = tempfile::tempdir().unwrap();
    let job = dir.path().join("bad.toml");
    std::fs::write(&job, "mesh = \"a.obj\"\norder = 12\n").unwrap();
    let o = hoarir(&["validate-scene", "--scene", job.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_json(&o)["error"], "config");
}

#[test]
fn validate_scene_lists_geometry_and_plan() {
    let dir = tempfile::tempdir().unwrap();
    let job = write_job(dir.path());
    let o = hoarir(&["validate-scene", "--scene", &job]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("triangles\t12\n"), "{text}");
    assert!(text.contains("material\twall\twall\n"));
    assert!(text.contains("air_regions\t1\n"));
    assert!(text.contains("source\t0\t0.900\t0.900\t1.100\n"));
    assert_eq!(text.lines().filter(|l| l.starts_with("sabine_rt60\t")).count(), 6);
}

#[test]
fn simulate_then_inspect_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let job = write_job(dir.path());
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    let o = hoarir(&["simulate", "--scene", &job, "--out", out_s]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.starts_with("room\trirs=1\terrors=0\tgated=false\t"), "{text}");
    assert!(text.contains("solver_runs=1"));

    let wav = out.join("room/s0_r0.wav");
    let o = hoarir(&["metrics", "--rir", wav.to_str().unwrap()]);
    assert!(o.status.success());
    let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let rt = report["broadband"]["t20"].as_f64().unwrap();
    assert!(rt > 0.05 && rt < 1.2, "{rt}");

    let o = hoarir(&["metrics", "--rir", wav.to_str().unwrap(), "--channel", "64"]);
    assert_eq!(o.status.code(), Some(1));

    let o = hoarir(&["compare", "--sim", out_s, "--ref", out_s]);
    assert!(o.status.success());
    let table = stdout(&o);
    assert_eq!(table.lines().count(), 8);
    assert!(table.lines().nth(1).unwrap().starts_with("broadband\t0.000"), "{table}");

    let o = hoarir(&["stats", "--manifest", out.join("manifest.jsonl").to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("# absorption"));
}
