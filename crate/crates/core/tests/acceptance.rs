//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Runs as a plain binary so the lines are always shown.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use geoflow::experiments::{
    self, b_form_discrepancies, check_geometry, check_variations, converge_circle, energy_increases,
    monitors_csv, run_experiment, scaling_test, scheme_difference, Experiment, FlowRun, PresetOptions, Report,
    CIRCLE_LEVELS, ENERGY_SLACK, EXPERIMENT1_LEVELS, EXPERIMENT2_LEVEL, SCALING_LEVEL, SCALING_RADII,
};
use geoflow::target::MetricForm;
use geoflow::Result;

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Outcome {
            passed,
            detail: detail.into(),
        }
    }
}

fn failed_checks(report: &Report) -> String {
    let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        format!("{} checks passed", report.checks.len())
    } else {
        format!("failed: {}", failed.join("; "))
    }
}

fn report_outcome(report: &Report, wanted: &[&str]) -> Outcome {
    let missing: Vec<&&str> = wanted.iter().filter(|w| report.check(w).is_none()).collect();
    if !missing.is_empty() {
        return Outcome::new(false, format!("missing checks {missing:?}"));
    }
    print!("{}", indent(&report.render()));
    Outcome::new(report.passed(), failed_checks(report))
}

fn indent(text: &str) -> String {
    text.lines().map(|l| format!("    {l}\n")).collect()
}

fn variational_consistency() -> Result<Outcome> {
    let report = check_variations(0, false)?;
    Ok(report_outcome(
        &report,
        &["first variation vs central differences", "second variation vs second differences"],
    ))
}

fn geometry_identities() -> Result<Outcome> {
    let report = check_geometry(0, MetricForm::Full)?;
    Ok(report_outcome(&report, &["sphere inversion is an involution"]))
}

fn scaling_ode_tracking() -> Result<Outcome> {
    let (report, runs) = scaling_test(SCALING_LEVEL, &SCALING_RADII, &PresetOptions::default())?;
    let mut out = report_outcome(&report, &[]);
    out.passed &= runs.len() == 2;
    Ok(out)
}

fn experiment1_reproduction() -> Result<Outcome> {
    let (report, _) = experiments::experiment1(&EXPERIMENT1_LEVELS, &PresetOptions::default())?;
    Ok(report_outcome(
        &report,
        &[
            "experiment1_l4 terminates",
            "experiment1_l5 terminates",
            "experiment1_l6 terminates",
            "level 4 sup max_distance",
            "sup max_distance decreasing in level",
        ],
    ))
}

fn experiment2_reproduction() -> Result<Outcome> {
    let (report, _) = experiments::experiment2(EXPERIMENT2_LEVEL, &PresetOptions::default())?;
    Ok(report_outcome(
        &report,
        &["initial max_distance", "max_distance below 0.02 by t = 2.8"],
    ))
}

fn h1_recovery() -> Result<Outcome> {
    let (report, rows) = converge_circle(&CIRCLE_LEVELS, &PresetOptions::default())?;
    let mut out = report_outcome(&report, &["EOC >= 0.9"]);
    out.passed &= rows.len() == 4;
    Ok(out)
}

fn b_form_decomposition() -> Result<Outcome> {
    let rows = b_form_discrepancies(&[0, 1, 2, 3])?;
    let values: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let decreasing = values.windows(2).all(|w| w[1] < w[0]);
    let finest = *values.last().unwrap();
    let detail = rows
        .iter()
        .map(|(n, d)| format!("{n}: {d:.3e}"))
        .collect::<Vec<_>>()
        .join(", ");
    Ok(Outcome::new(
        decreasing && finest < 1e-2,
        format!("relative discrepancy by segment count {detail}"),
    ))
}

fn scheme_equivalence() -> Result<Outcome> {
    let diff = scheme_difference(3)?;
    Ok(Outcome::new(diff <= 1e-12, format!("max entrywise difference {diff:.3e} <= 1e-12")))
}

fn level4_runs() -> Result<Vec<FlowRun>> {
    [Experiment::One, Experiment::Two, Experiment::Three]
        .into_iter()
        .map(|e| run_experiment(e, 4, &PresetOptions::default()))
        .collect()
}

fn energy_decay(runs: &[FlowRun]) -> Result<Outcome> {
    let mut passed = true;
    let mut parts = Vec::new();
    for run in runs {
        let (count, worst) = energy_increases(&run.state, ENERGY_SLACK);
        passed &= count == 0;
        parts.push(format!("{}: {} steps, {count} increases, largest increase {worst:.3e}", run.tag, run.state.m));
    }
    Ok(Outcome::new(passed && runs.len() == 3, parts.join("; ")))
}

fn determinism(first: &[FlowRun]) -> Result<Outcome> {
    let opts = PresetOptions::default();
    let mut parts = Vec::new();
    let mut passed = true;
    for run in first {
        let which = match run.tag.as_str() {
            "experiment1_l4" => Experiment::One,
            "experiment2_l4" => Experiment::Two,
            _ => Experiment::Three,
        };
        let again = run_experiment(which, 4, &opts)?;
        let same = run.monitors_csv() == again.monitors_csv();
        passed &= same;
        parts.push(format!("{} {}", run.tag, if same { "identical" } else { "differs" }));
    }
    let a = scaling_test(SCALING_LEVEL, &[0.9], &opts)?.1;
    let b = scaling_test(SCALING_LEVEL, &[0.9], &opts)?.1;
    let same = monitors_csv(&a[0].state) == monitors_csv(&b[0].state);
    passed &= same;
    parts.push(format!("scaling {}", if same { "identical" } else { "differs" }));
    let a = converge_circle(&CIRCLE_LEVELS, &opts)?.1;
    let b = converge_circle(&CIRCLE_LEVELS, &opts)?.1;
    let same = a.iter().zip(&b).all(|(x, y)| x.error.to_bits() == y.error.to_bits());
    passed &= same;
    parts.push(format!("circle {}", if same { "identical" } else { "differs" }));
    Ok(Outcome::new(passed, parts.join(", ")))
}

fn run(number: usize, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Result<Outcome>) -> bool {
    println!("criterion {number}: {name}");
    let start = Instant::now();
    let outcome = f();
    let elapsed = start.elapsed();
    let (mut passed, mut detail) = match outcome {
        Ok(o) => (o.passed, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    if let Some(limit) = limit {
        if elapsed > limit {
            passed = false;
            detail.push_str(&format!("; runtime above {} s", limit.as_secs()));
        }
    }
    println!(
        "{} criterion {number}: {name}: {detail} ({:.1} s)",
        if passed { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    passed
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let mut results = vec![
        run(1, "variational consistency", Some(secs(10)), variational_consistency),
        run(2, "geometry identities", Some(secs(5)), geometry_identities),
        run(3, "scaling ODE tracking", Some(secs(300)), scaling_ode_tracking),
        run(4, "experiment 1 reproduction", Some(secs(1800)), experiment1_reproduction),
        run(5, "experiment 2 reproduction", Some(secs(1200)), experiment2_reproduction),
        run(6, "H1 recovery on the circle", Some(secs(120)), h1_recovery),
        run(7, "b-form decomposition", Some(secs(60)), b_form_decomposition),
        run(8, "scheme equivalence", Some(secs(60)), scheme_equivalence),
    ];
    let runs = level4_runs();
    let (runs, err) = match runs {
        Ok(r) => (r, None),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    results.push(run(9, "energy decay", None, || match &err {
        None => energy_decay(&runs),
        Some(e) => Ok(Outcome::new(false, format!("error: {e}"))),
    }));
    results.push(run(10, "determinism", None, || match &err {
        None => determinism(&runs),
        Some(e) => Ok(Outcome::new(false, format!("error: {e}"))),
    }));
    let passed = results.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
