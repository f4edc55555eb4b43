use geoflow::experiments::{check_geometry, check_variations, converge_circle, write_outcome, PresetOptions};
use geoflow::target::MetricForm;

#[test]
fn geometry_battery_catches_dropped_quadratic_term() {
    let good = check_geometry(3, MetricForm::Full).unwrap();
    assert!(good.passed(), "{}", good.render());
    let bad = check_geometry(3, MetricForm::DropQuadratic).unwrap();
    assert!(!bad.passed());
    let failed: Vec<&str> = bad.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    assert!(failed.iter().all(|n| n.contains("covariant Hessian")), "{failed:?}");
}

#[test]
fn variation_battery_catches_flipped_reaction() {
    assert!(check_variations(5, false).unwrap().passed());
    let bad = check_variations(5, true).unwrap();
    assert!(!bad.check("first variation vs central differences").unwrap().passed);
}

#[test]
fn batteries_are_seed_deterministic() {
    let a = check_variations(11, false).unwrap().render();
    let b = check_variations(11, false).unwrap().render();
    assert_eq!(a, b);
}

#[test]
fn circle_study_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let opts = PresetOptions {
        output_dir: Some(dir.path().to_path_buf()),
        ..PresetOptions::default()
    };
    let (report, rows) = converge_circle(&[1, 2], &opts).unwrap();
    assert!(report.passed(), "{}", report.render());
    assert_eq!(rows.len(), 2);
    write_outcome(dir.path(), "converge-circle", &Ok(report)).unwrap();
    let summary = std::fs::read_to_string(dir.path().join("summary_converge-circle.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(!dir.path().join("FAILED").exists());
}
