use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use geoflow::sphere_mesh;

fn geoflow(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geoflow"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn files_with_prefix(dir: &Path, prefix: &str) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with(prefix))
        .collect();
    names.sort();
    names
}

#[test]
fn help_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&geoflow(&["--help"], dir.path())), 0);
    assert_eq!(code(&geoflow(&["experiment2", "--bogus"], dir.path())), 2);
    assert_eq!(code(&geoflow(&["no-such-command"], dir.path())), 2);
    assert_eq!(code(&geoflow(&["scaling-test", "--tau", "0"], dir.path())), 2);
}

#[test]
fn geometry_battery_passes_and_catches_mutation() {
    let dir = tempfile::tempdir().unwrap();
    let ok = geoflow(&["check-geometry", "--seed", "7"], dir.path());
    assert_eq!(code(&ok), 0, "{}", stdout(&ok));
    assert!(stdout(&ok).ends_with("result: PASS\n"));
    assert!(dir.path().join("report_check-geometry.txt").exists());
    assert!(!dir.path().join("FAILED").exists());

    let bad = geoflow(&["check-geometry", "--drop-quadratic-term"], dir.path());
    assert_eq!(code(&bad), 1);
    assert!(stdout(&bad).contains("FAIL ellipsoid: covariant Hessian"));
    assert_eq!(fs::read_to_string(dir.path().join("FAILED")).unwrap().trim(), "check-geometry");
}

#[test]
fn variation_battery_catches_flipped_reaction() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&geoflow(&["check-variations"], dir.path())), 0);
    let bad = geoflow(&["check-variations", "--flip-reaction-sign"], dir.path());
    assert_eq!(code(&bad), 1);
    assert!(stdout(&bad).contains("FAIL first variation"));
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"tau": 0.0}"#).unwrap();
    let cfg = cfg.to_str().unwrap();
    assert_eq!(code(&geoflow(&["converge-circle", "--levels", "1,2", "--config", cfg], dir.path())), 2);
    let o = geoflow(
        &["converge-circle", "--levels", "1,2", "--config", cfg, "--tau", "0.001"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS 16-gon error regression"));
    assert!(dir.path().join("summary_converge-circle.csv").exists());

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"tau": 0.001, "unknown": 1}"#).unwrap();
    let o = geoflow(&["converge-circle", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown field"));
}

#[test]
fn printed_deformation_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = geoflow(&["experiment1", "--levels", "2", "--deformation-variant", "printed"], dir.path());
    assert_eq!(code(&o), 2);
    let report = fs::read_to_string(dir.path().join("report_experiment1.txt")).unwrap();
    assert!(report.contains("ERROR level 2: invalid mesh"));
    assert!(dir.path().join("FAILED").exists());
}

#[test]
fn experiment_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = geoflow(&["experiment3", "--level", "3"], dir.path());
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert_eq!(files_with_prefix(dir.path(), "mesh_experiment3_l3_").len(), 2);
    let csv = fs::read_to_string(dir.path().join("monitors_experiment3_l3.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,max_distance,energy,max_velocity,cg_iters"));

    let o = geoflow(&["experiment1", "--levels", "2", "--snapshot-every", "500"], dir.path());
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    // t = 0, steps 500..2000, final
    assert_eq!(files_with_prefix(dir.path(), "mesh_experiment1_l2_").len(), 6);
    assert!(dir.path().join("summary_experiment1.csv").exists());
}

#[test]
fn repeated_runs_are_bitwise_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        let o = geoflow(&["experiment2", "--level", "2", "--deterministic"], dir);
        assert!(matches!(code(&o), 0 | 1), "{}", stdout(&o));
    }
    let name = "monitors_experiment2_l2.csv";
    let x = fs::read(a.path().join(name)).unwrap();
    let y = fs::read(b.path().join(name)).unwrap();
    assert!(!x.is_empty());
    assert_eq!(x, y);
}

fn off_text(level: usize) -> String {
    let mesh = sphere_mesh(level).unwrap();
    let mut s = format!("OFF\n{} {} 0\n", mesh.n_vertices(), mesh.n_simplices());
    for i in 0..mesh.n_vertices() {
        let p = mesh.vertex(i);
        let _ = writeln!(s, "{:?} {:?} {:?}", p[0], p[1], p[2]);
    }
    for t in mesh.simplices() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    s
}

#[test]
fn custom_mesh_flow() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sphere.off");
    fs::write(&path, off_text(2)).unwrap();
    let o = geoflow(&["custom", "--mesh", path.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(dir.path().join("monitors_custom.csv").exists());
    assert_eq!(files_with_prefix(dir.path(), "mesh_custom_").len(), 2);

    let missing = dir.path().join("missing.off");
    assert_eq!(code(&geoflow(&["custom", "--mesh", missing.to_str().unwrap()], dir.path())), 2);
    let broken = dir.path().join("broken.off");
    fs::write(&broken, "OFF\n3 1 0\n0 0 0\n1 0\n").unwrap();
    let o = geoflow(&["custom", "--mesh", broken.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("broken.off:4"));
}
