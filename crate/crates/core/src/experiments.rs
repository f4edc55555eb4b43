//! Experiment presets, convergence studies and property-check batteries.
//!
//! Every command produces a [`Report`]: one pass/fail line per check.
//! Numerical failures (solver breakdown, guard violations, missing
//! stationarity) are returned as errors instead.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cg::{CgSettings, Preconditioner};
use crate::error::{Error, Result};
use crate::fem::FeSpace;
use crate::field::VertexField;
use crate::flow::{run_flow_with, solve_stationary, step, FlowConfig, FlowState, MonitorRecord, Scheme};
use crate::io::{csv_string, export_csv, export_vtk};
use crate::mesh::{deform, polygonal_circle, sphere_mesh, AxialSqueeze, DeformationVariant, MeshStats, SurfaceMesh};
use crate::ode::scaling_ode_trajectory;
use crate::target::{Hypersurface, HypersurfaceTarget, MetricForm, SphereTarget, Target};

/// Default refinement levels of the first experiment.
pub const EXPERIMENT1_LEVELS: [usize; 3] = [4, 5, 6];
pub const EXPERIMENT2_LEVEL: usize = 5;
pub const EXPERIMENT3_LEVEL: usize = 5;
pub const SCALING_LEVEL: usize = 5;
pub const SCALING_RADII: [f64; 2] = [0.9, 1.1];
/// `polygonal_circle(8·2^k)` for each `k`.
pub const CIRCLE_LEVELS: [usize; 4] = [1, 2, 3, 4];

/// Level-4 bound on `sup_t max_distance` in the first experiment, read off
/// the published distance plot with slack.
pub const EXPERIMENT1_LEVEL4_BOUND: f64 = 0.02;
/// Final time of the first experiment at level 5 is expected near this
/// value (±50%), read off the published snapshots.
pub const EXPERIMENT1_FINAL_TIME: f64 = 1.9;
pub const EXPERIMENT3_FINAL_TIME: f64 = 2.6;
/// `max_distance` of the second experiment must drop below this by
/// [`EXPERIMENT2_DEADLINE`].
pub const EXPERIMENT2_THRESHOLD: f64 = 0.02;
pub const EXPERIMENT2_DEADLINE: f64 = 2.8;
/// Regression bound on `sup_t max_distance` of the third experiment at
/// level 5 (observed 3.85e-3).
pub const EXPERIMENT3_SUP_BOUND: f64 = 0.05;
/// Regression constant `C` in `max_distance(t_final) ≤ C·h²` for the first
/// experiment, `h` the mesh size of the undeformed sphere mesh. Calibrated
/// at level 4 (observed 0.263; 0.264 and 0.302 at levels 5 and 6) with 50%
/// slack.
pub const EXPERIMENT1_H2_CONSTANT: f64 = 0.395;
/// H¹ error on the 16-gon at default settings (observed 3.566732e-2),
/// frozen after the first verified run.
pub const CIRCLE_COARSE_ERROR: f64 = 3.5667e-2;
pub const ENERGY_SLACK: f64 = 1e-10;

/// Flow and artifact settings shared by all presets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PresetOptions {
    pub tau: f64,
    pub stop_tol: f64,
    pub max_steps: usize,
    pub cg_rel_tol: f64,
    /// Zero means `10 ·` number of unknowns.
    pub cg_max_iters: usize,
    pub preconditioner: Preconditioner,
    pub scheme: Scheme,
    pub deformation_variant: DeformationVariant,
    pub deterministic: bool,
    /// Snapshot every `k` steps in addition to `t = 0` and the final time.
    pub snapshot_every: Option<usize>,
    /// Where artifacts go; `None` keeps everything in memory.
    pub output_dir: Option<PathBuf>,
}

impl Default for PresetOptions {
    fn default() -> Self {
        PresetOptions {
            tau: 1e-3,
            stop_tol: 1e-5,
            max_steps: 1_000_000,
            cg_rel_tol: 1e-10,
            cg_max_iters: 0,
            preconditioner: Preconditioner::None,
            scheme: Scheme::SphereSpecialized,
            deformation_variant: DeformationVariant::Corrected,
            deterministic: true,
            snapshot_every: None,
            output_dir: None,
        }
    }
}

impl PresetOptions {
    /// Flow configuration for maps into the unit sphere S^n.
    pub fn flow_config(&self, n: usize) -> Result<FlowConfig> {
        let config = FlowConfig {
            tau: self.tau,
            stop_tol: self.stop_tol,
            max_steps: self.max_steps,
            cg: CgSettings {
                rel_tol: self.cg_rel_tol,
                max_iters: self.cg_max_iters,
                preconditioner: self.preconditioner,
            },
            target: Target::unit_sphere(n)?,
            scheme: self.scheme,
            deterministic: self.deterministic,
        };
        config.validate()?;
        Ok(config)
    }

    fn uses_default_flow(&self) -> bool {
        let d = PresetOptions::default();
        self.tau == d.tau && self.stop_tol == d.stop_tol && self.scheme == d.scheme
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    /// Threshold read off a published plot rather than a tabulated value.
    pub figure_derived: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
            figure_derived: false,
        }
    }

    pub fn figure_derived(mut self) -> Self {
        self.figure_derived = true;
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub tag: String,
    pub checks: Vec<Check>,
    /// Informational lines (timings, tables).
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(tag: impl Into<String>) -> Self {
        Report {
            tag: tag.into(),
            ..Default::default()
        }
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.notes.push(line.into());
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn render(&self) -> String {
        let mut s = format!("report {}\n", self.tag);
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            let origin = if c.figure_derived { " [figure-derived bound]" } else { "" };
            let _ = writeln!(s, "{status} {}: {}{origin}", c.name, c.detail);
        }
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        let _ = writeln!(s, "result: {}", if self.passed() { "PASS" } else { "FAIL" });
        s
    }
}

/// Writes `report_<tag>.txt` (or the error for numerical failures) and a
/// `FAILED` marker holding the tag unless everything passed.
pub fn write_outcome(dir: &Path, tag: &str, outcome: &Result<Report>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (text, ok) = match outcome {
        Ok(r) => (r.render(), r.passed()),
        Err(e) => (format!("report {tag}\nERROR {e}\nresult: FAIL\n"), false),
    };
    let path = dir.join(format!("report_{tag}.txt"));
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    let marker = dir.join("FAILED");
    if ok {
        // Only clear a marker left by an earlier run of the same command.
        let ours = fs::read_to_string(&marker).is_ok_and(|s| s.trim() == tag);
        if ours {
            fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
        }
    } else {
        fs::write(&marker, format!("{tag}\n")).map_err(|e| Error::io(&marker, e))?;
    }
    Ok(())
}

/// The three sphere experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    /// Squeezed sphere, `α(x₁) = 0.6x₁² + 0.4`, identity initial data.
    One,
    /// As [`Experiment::One`] with initial data `β(y₁,y₃)·y`,
    /// `β = 0.5 + y₁²y₃²`.
    Two,
    /// Stronger squeeze, `α(x₁) = 0.75x₁² + 0.25`.
    Three,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::One => "experiment1",
            Experiment::Two => "experiment2",
            Experiment::Three => "experiment3",
        }
    }

    pub fn tag(self, level: usize) -> String {
        format!("{}_l{level}", self.name())
    }
}

/// Deformed domain mesh and initial map. The map is the identity on the
/// undeformed sphere mesh, so its vertex values stay on S² while the
/// domain is squeezed.
pub fn experiment_setup(
    which: Experiment,
    level: usize,
    variant: DeformationVariant,
) -> Result<(SurfaceMesh, VertexField)> {
    let sphere = sphere_mesh(level)?;
    let mut f0 = VertexField::identity(&sphere);
    if which == Experiment::Two {
        f0 = f0.map_values(|y| {
            let beta = 0.5 + y[0] * y[0] * y[2] * y[2];
            y.iter().map(|v| beta * v).collect()
        })?;
    }
    let squeeze = match which {
        Experiment::Three => AxialSqueeze::experiment3(variant),
        _ => AxialSqueeze::experiment1(variant),
    };
    let mesh = deform(&sphere, |x| squeeze.apply(x))?;
    Ok((mesh, f0))
}

/// Completed flow of one preset.
#[derive(Debug, Clone)]
pub struct FlowRun {
    pub tag: String,
    pub stats: MeshStats,
    pub state: FlowState,
    pub snapshots: Vec<PathBuf>,
    pub wall_seconds: f64,
}

impl FlowRun {
    pub fn monitors_csv(&self) -> String {
        monitors_csv(&self.state)
    }

    pub fn final_time(&self) -> f64 {
        self.state.t()
    }
}

pub fn monitors_csv(state: &FlowState) -> String {
    csv_string(&MonitorRecord::CSV_HEADER, &state.csv_rows()).expect("monitor rows match header")
}

/// Steps that raised the energy by more than `slack`, as `(count, worst)`.
pub fn energy_increases(state: &FlowState, slack: f64) -> (usize, f64) {
    let mut count = 0;
    let mut worst = 0.0f64;
    for w in state.monitors.windows(2) {
        let rise = w[1].energy - w[0].energy;
        if rise > slack {
            count += 1;
        }
        worst = worst.max(rise);
    }
    (count, worst)
}

fn snapshot(dir: &Path, tag: &str, mesh: &SurfaceMesh, state: &FlowState) -> Result<PathBuf> {
    let path = dir.join(format!("mesh_{tag}_{:.6}.vtk", state.t()));
    export_vtk(mesh, &[("f", &state.f)], &path)?;
    Ok(path)
}

/// Runs the flow from `f0` to the stopping rule, writing
/// `monitors_<tag>.csv` and VTK snapshots when an output directory is set.
/// The monitor file is written even when the flow fails.
pub fn run_preset_flow(
    tag: &str,
    mesh: &SurfaceMesh,
    f0: VertexField,
    config: &FlowConfig,
    opts: &PresetOptions,
) -> Result<FlowRun> {
    let start = Instant::now();
    let mut fe = FeSpace::new(mesh)?;
    fe.set_deterministic(config.deterministic);
    if let Target::Sphere(s) = &config.target {
        fe.set_guard(s.guard_radius);
    }
    let mut state = FlowState::new(&fe, f0, config)?;
    let dir = opts.output_dir.as_deref();
    let mut snapshots = Vec::new();
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        snapshots.push(snapshot(dir, tag, mesh, &state)?);
    }
    let result = run_flow_with(&mut state, &fe, config, |s| {
        if let (Some(dir), Some(k)) = (dir, opts.snapshot_every) {
            if k > 0 && s.m % k == 0 && s.last().max_velocity > config.stop_tol {
                snapshots.push(snapshot(dir, tag, mesh, s)?);
            }
        }
        Ok(())
    });
    if let Some(dir) = dir {
        let path = dir.join(format!("monitors_{tag}.csv"));
        fs::write(&path, monitors_csv(&state)).map_err(|e| Error::io(&path, e))?;
        if result.is_ok() {
            snapshots.push(snapshot(dir, tag, mesh, &state)?);
        }
    }
    result?;
    Ok(FlowRun {
        tag: tag.to_string(),
        stats: mesh.stats(),
        state,
        snapshots,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Sets up and runs one experiment at one level.
pub fn run_experiment(which: Experiment, level: usize, opts: &PresetOptions) -> Result<FlowRun> {
    let (mesh, f0) = experiment_setup(which, level, opts.deformation_variant)?;
    let config = opts.flow_config(2)?;
    run_preset_flow(&which.tag(level), &mesh, f0, &config, opts)
}

fn energy_check(run: &FlowRun) -> Check {
    let (count, worst) = energy_increases(&run.state, ENERGY_SLACK);
    Check::new(
        format!("{} energy non-increasing", run.tag),
        count == 0,
        format!("{count} steps above slack {ENERGY_SLACK:e}, largest increase {worst:.3e}"),
    )
}

fn termination_check(run: &FlowRun, config: &FlowConfig) -> Check {
    Check::new(
        format!("{} terminates", run.tag),
        run.state.last().max_velocity <= config.stop_tol,
        format!(
            "stopped after {} steps at t = {:.3} with max velocity {:.3e}",
            run.state.m,
            run.final_time(),
            run.state.last().max_velocity
        ),
    )
}

fn run_note(run: &FlowRun) -> String {
    format!(
        "{}: {} vertices, h_max {:.4e}, {} steps, final t {:.3}, sup max_distance {:.4e}, final energy {:.8}, {:.1} s",
        run.tag,
        run.stats.n_vertices,
        run.stats.h_max,
        run.state.m,
        run.final_time(),
        run.state.sup_max_distance(),
        run.state.last().energy,
        run.wall_seconds
    )
}

fn fmt_list(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.4e}")).collect::<Vec<_>>().join(", ")
}

fn write_summary(opts: &PresetOptions, tag: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    if let Some(dir) = &opts.output_dir {
        export_csv(header, rows, dir.join(format!("summary_{tag}.csv")))?;
    }
    Ok(())
}

/// First experiment over `levels`; runs are returned for further checks.
pub fn experiment1(levels: &[usize], opts: &PresetOptions) -> Result<(Report, Vec<FlowRun>)> {
    let config = opts.flow_config(2)?;
    let mut report = Report::new("experiment1");
    let mut runs = Vec::new();
    for &level in levels {
        let run = run_experiment(Experiment::One, level, opts).map_err(|e| e.context(format!("level {level}")))?;
        report.note(run_note(&run));
        report.push(termination_check(&run, &config));
        report.push(energy_check(&run));
        let h = sphere_mesh(level)?.stats().h_max;
        let final_distance = run.state.last().max_distance;
        let bound = EXPERIMENT1_H2_CONSTANT * h * h;
        report.push(Check::new(
            format!("{} final max_distance within C·h²", run.tag),
            final_distance <= bound,
            format!(
                "{final_distance:.4e} <= {bound:.4e} (C = {EXPERIMENT1_H2_CONSTANT}, h = {h:.4e} undeformed, regression)"
            ),
        ));
        if level == 4 {
            let sup = run.state.sup_max_distance();
            report.push(
                Check::new(
                    "level 4 sup max_distance",
                    sup <= EXPERIMENT1_LEVEL4_BOUND,
                    format!("{sup:.4e} <= {EXPERIMENT1_LEVEL4_BOUND}"),
                )
                .figure_derived(),
            );
        }
        if level == 5 {
            let t = run.final_time();
            report.push(
                Check::new(
                    "level 5 final time",
                    (t - EXPERIMENT1_FINAL_TIME).abs() <= 0.5 * EXPERIMENT1_FINAL_TIME,
                    format!("{t:.3} within {EXPERIMENT1_FINAL_TIME} ± 50%"),
                )
                .figure_derived(),
            );
        }
        runs.push(run);
    }
    if runs.len() >= 2 {
        let sups: Vec<f64> = runs.iter().map(|r| r.state.sup_max_distance()).collect();
        report.push(
            Check::new(
                "sup max_distance decreasing in level",
                sups.windows(2).all(|w| w[1] < w[0]),
                fmt_list(&sups),
            )
            .figure_derived(),
        );
    }
    let rows: Vec<Vec<f64>> = levels
        .iter()
        .zip(&runs)
        .map(|(&level, r)| {
            vec![
                level as f64,
                r.stats.n_vertices as f64,
                r.stats.h_max,
                r.state.m as f64,
                r.final_time(),
                r.state.sup_max_distance(),
                r.state.last().max_distance,
                r.state.last().energy,
            ]
        })
        .collect();
    write_summary(
        opts,
        "experiment1",
        &[
            "level",
            "n_vertices",
            "h_max",
            "steps",
            "final_t",
            "sup_max_distance",
            "final_max_distance",
            "final_energy",
        ],
        &rows,
    )?;
    Ok((report, runs))
}

/// Second experiment: initial data off the sphere.
pub fn experiment2(level: usize, opts: &PresetOptions) -> Result<(Report, FlowRun)> {
    let config = opts.flow_config(2)?;
    let run = run_experiment(Experiment::Two, level, opts)?;
    let mut report = Report::new("experiment2");
    report.note(run_note(&run));
    report.push(termination_check(&run, &config));
    report.push(energy_check(&run));
    let d0 = run.state.monitors[0].max_distance;
    report.push(Check::new(
        "initial max_distance",
        d0 == 0.5,
        format!("{d0:?} == 0.5"),
    ));
    let hit = run
        .state
        .monitors
        .iter()
        .find(|r| r.max_distance < EXPERIMENT2_THRESHOLD)
        .map(|r| r.t);
    report.push(
        Check::new(
            format!("max_distance below {EXPERIMENT2_THRESHOLD} by t = {EXPERIMENT2_DEADLINE}"),
            hit.is_some_and(|t| t <= EXPERIMENT2_DEADLINE),
            match hit {
                Some(t) => format!("first below at t = {t:.3}"),
                None => "never below".into(),
            },
        )
        .figure_derived(),
    );
    let rises: Vec<(f64, f64)> = run
        .state
        .monitors
        .windows(2)
        .skip(10)
        .filter(|w| w[1].max_distance > w[0].max_distance + 1e-6)
        .map(|w| (w[1].t, w[1].max_distance - w[0].max_distance))
        .collect();
    report.push(
        Check::new(
            "max_distance monotone after 10 steps",
            rises.is_empty(),
            match rises.first() {
                None => "no step increases it by more than 1e-6".into(),
                Some((t, d)) => format!("{} increases, first at t = {t:.3} by {d:.3e}", rises.len()),
            },
        )
        .figure_derived(),
    );
    Ok((report, run))
}

/// Third experiment: stronger squeeze.
pub fn experiment3(level: usize, opts: &PresetOptions) -> Result<(Report, FlowRun)> {
    let config = opts.flow_config(2)?;
    let run = run_experiment(Experiment::Three, level, opts)?;
    let mut report = Report::new("experiment3");
    report.note(run_note(&run));
    report.push(termination_check(&run, &config));
    report.push(energy_check(&run));
    let sup = run.state.sup_max_distance();
    let bounded = if level == 5 {
        sup <= EXPERIMENT3_SUP_BOUND
    } else {
        sup.is_finite()
    };
    report.push(Check::new(
        "sup max_distance bounded",
        bounded,
        if level == 5 {
            format!("{sup:.4e} <= {EXPERIMENT3_SUP_BOUND} (regression)")
        } else {
            format!("{sup:.4e} finite")
        },
    ));
    let t = run.final_time();
    report.push(
        Check::new(
            "final time",
            (t - EXPERIMENT3_FINAL_TIME).abs() <= 0.5 * EXPERIMENT3_FINAL_TIME,
            format!("{t:.3} within {EXPERIMENT3_FINAL_TIME} ± 50%"),
        )
        .figure_derived(),
    );
    if opts.output_dir.is_some() && opts.snapshot_every.is_none() {
        report.push(Check::new(
            "snapshot count",
            run.snapshots.len() == 2,
            format!("{} VTK files", run.snapshots.len()),
        ));
    }
    Ok((report, run))
}

/// One row of the circle convergence table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub level: usize,
    pub segments: usize,
    pub h: f64,
    pub error: f64,
    /// Order against the previous row.
    pub eoc: Option<f64>,
    pub residual: f64,
    pub tolerance: f64,
}

/// Stationary maps from the polygonal circle with `8·2^k` segments into S¹,
/// compared with the identity in the discrete H¹ norm.
pub fn circle_convergence(levels: &[usize], opts: &PresetOptions) -> Result<Vec<ConvergenceRow>> {
    let config = opts.flow_config(1)?;
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for &k in levels {
        let segments = 8usize
            .checked_shl(k as u32)
            .filter(|s| *s <= 1 << 20)
            .ok_or_else(|| Error::InvalidArgument(format!("circle level {k} too fine")))?;
        let mesh = polygonal_circle(segments)?;
        let f0 = VertexField::identity(&mesh);
        let out = solve_stationary(&mesh, f0, &config)?;
        let fe = FeSpace::new(&mesh)?;
        let error = fe.h1_error(out.f(), |x| x.to_vec())?;
        let h = mesh.stats().h_max;
        let eoc = rows.last().map(|p| (p.error / error).ln() / (p.h / h).ln());
        rows.push(ConvergenceRow {
            level: k,
            segments,
            h,
            error,
            eoc,
            residual: out.residual.unwrap_or(f64::NAN),
            tolerance: out.tolerance.unwrap_or(f64::NAN),
        });
    }
    Ok(rows)
}

pub fn converge_circle(levels: &[usize], opts: &PresetOptions) -> Result<(Report, Vec<ConvergenceRow>)> {
    let rows = circle_convergence(levels, opts)?;
    let mut report = Report::new("converge-circle");
    for r in &rows {
        report.note(format!(
            "k {} segments {} h {:.6e} error {:.6e} eoc {}",
            r.level,
            r.segments,
            r.h,
            r.error,
            r.eoc.map_or("-".into(), |e| format!("{e:.4}"))
        ));
        report.push(Check::new(
            format!("k {} stationarity certificate", r.level),
            r.residual <= r.tolerance,
            format!("residual {:.3e} <= {:.3e}", r.residual, r.tolerance),
        ));
    }
    if rows.len() >= 2 {
        report.push(Check::new(
            "error decreasing",
            rows.windows(2).all(|w| w[1].error < w[0].error),
            fmt_list(&rows.iter().map(|r| r.error).collect::<Vec<_>>()),
        ));
        let eocs: Vec<f64> = rows.iter().filter_map(|r| r.eoc).collect();
        report.push(Check::new(
            "EOC >= 0.9",
            eocs.iter().all(|e| *e >= 0.9),
            eocs.iter().map(|e| format!("{e:.4}")).collect::<Vec<_>>().join(", "),
        ));
    }
    if let Some(first) = rows.first() {
        if first.segments == 16 && opts.uses_default_flow() {
            let rel = (first.error - CIRCLE_COARSE_ERROR).abs() / CIRCLE_COARSE_ERROR;
            report.push(Check::new(
                "16-gon error regression",
                rel <= 1e-3,
                format!("{:.6e} vs frozen {CIRCLE_COARSE_ERROR:e} (rel. {rel:.2e})", first.error),
            ));
        }
    }
    let table: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| vec![r.level as f64, r.segments as f64, r.h, r.error, r.eoc.unwrap_or(f64::NAN)])
        .collect();
    write_summary(opts, "converge-circle", &["k", "segments", "h", "h1_error", "eoc"], &table)?;
    Ok((report, rows))
}

/// Mean vertex norm of the flow from `r0·id` on the sphere mesh, per step up
/// to `t = 1`, with the scaling ODE alongside.
#[derive(Debug, Clone)]
pub struct ScalingRun {
    pub r0: f64,
    pub t: Vec<f64>,
    pub mean_norm: Vec<f64>,
    pub ode: Vec<f64>,
    pub state: FlowState,
}

impl ScalingRun {
    pub fn max_deviation(&self) -> f64 {
        self.mean_norm
            .iter()
            .zip(&self.ode)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub fn scaling_run(level: usize, r0: f64, t_end: f64, opts: &PresetOptions) -> Result<ScalingRun> {
    let mesh = sphere_mesh(level)?;
    let config = opts.flow_config(2)?;
    let mut fe = FeSpace::new(&mesh)?;
    fe.set_deterministic(config.deterministic);
    let f0 = VertexField::identity(&mesh).map_values(|x| x.iter().map(|v| r0 * v).collect())?;
    let mean = |f: &VertexField| f.norms().sum::<f64>() / f.n_vertices() as f64;
    let mut state = FlowState::new(&fe, f0, &config)?;
    let steps = (t_end / config.tau).round() as usize;
    let mut t = vec![0.0];
    let mut mean_norm = vec![mean(&state.f)];
    for _ in 0..steps {
        step(&mut state, &fe, &config)?;
        t.push(state.t());
        mean_norm.push(mean(&state.f));
    }
    let ode = scaling_ode_trajectory(r0, 2, config.tau, steps)?;
    Ok(ScalingRun {
        r0,
        t,
        mean_norm,
        ode,
        state,
    })
}

pub fn scaling_test(level: usize, radii: &[f64], opts: &PresetOptions) -> Result<(Report, Vec<ScalingRun>)> {
    let mut report = Report::new("scaling-test");
    let mut runs = Vec::new();
    for &r0 in radii {
        let run = scaling_run(level, r0, 1.0, opts)?;
        let dev = run.max_deviation();
        let tag = format!("scaling_r{r0}");
        report.push(Check::new(
            format!("{tag} tracks scaling ODE"),
            dev <= 0.02,
            format!("max |mean |f| − r(t)| = {dev:.4e} <= 0.02 over t in [0, 1]"),
        ));
        if let Some(dir) = &opts.output_dir {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join(format!("monitors_{tag}.csv"));
            fs::write(&path, monitors_csv(&run.state)).map_err(|e| Error::io(&path, e))?;
            let rows: Vec<Vec<f64>> = (0..run.t.len())
                .map(|i| vec![run.t[i], run.mean_norm[i], run.ode[i]])
                .collect();
            export_csv(&["t", "mean_norm", "ode_reference"], &rows, dir.join(format!("summary_{tag}.csv")))?;
        }
        runs.push(run);
    }
    Ok((report, runs))
}

/// Number of random points per geometry check.
pub const GEOMETRY_POINTS: usize = 1000;

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r > 0.1 && r <= 1.0 {
            return v.into_iter().map(|x| x / r).collect();
        }
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Random point in the tube of `target`: a random direction scaled onto M,
/// then moved along the normal by up to `fraction` of the half-width.
fn tube_point(rng: &mut ChaCha8Rng, target: &HypersurfaceTarget, fraction: f64) -> Result<Vec<f64>> {
    let dim = target.ambient_dim();
    let u = random_unit(rng, dim);
    let axes = match &target.surface {
        Hypersurface::Sphere { radius, .. } => vec![*radius; dim],
        Hypersurface::Ellipsoid { axes } => axes.clone(),
    };
    let scale = u.iter().zip(&axes).map(|(v, a)| (v / a).powi(2)).sum::<f64>().sqrt();
    let on: Vec<f64> = u.iter().map(|v| v / scale).collect();
    let normal = target.distance_unchecked(&on)?.gradient;
    let s = rng.gen_range(-fraction..fraction) * target.tube_halfwidth;
    Ok(on.iter().zip(normal.iter()).map(|(p, n)| p + s * n).collect())
}

/// Geometry identities of the extended metrics on seeded random points.
/// `metric_form` other than [`MetricForm::Full`] is the mutation the
/// battery must catch.
pub fn check_geometry(seed: u64, metric_form: MetricForm) -> Result<Report> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = Report::new("check-geometry");
    let n_pts = GEOMETRY_POINTS;

    let sphere = SphereTarget::new(2)?;
    let mut worst = 0.0f64;
    for _ in 0..n_pts {
        let r = rng.gen_range(0.5..2.0);
        let x: Vec<f64> = random_unit(&mut rng, 3).iter().map(|v| r * v).collect();
        let back = sphere.inversion(&sphere.inversion(&x)?)?;
        worst = worst.max(max_abs_diff(&back, &x));
    }
    report.push(Check::new(
        "sphere inversion is an involution",
        worst <= 1e-12,
        format!("max |i(i(x)) − x| = {worst:.3e} over {n_pts} points"),
    ));

    let mut worst = 0.0f64;
    for _ in 0..n_pts {
        let x = random_unit(&mut rng, 3);
        let g = sphere.metric(&x)?.g;
        worst = worst.max((g - nalgebra::DMatrix::identity(3, 3)).abs().max());
    }
    report.push(Check::new(
        "sphere metric is Id on S²",
        worst <= 1e-12,
        format!("max |G − Id| = {worst:.3e}"),
    ));

    let targets = [
        ("unit sphere", HypersurfaceTarget::unit_sphere(3)?),
        ("ellipsoid", HypersurfaceTarget::ellipsoid(vec![1.0, 0.8, 0.6])?),
    ];
    for (name, target) in targets {
        let target = target.with_metric_form(metric_form);
        let (mut inv, mut on_m, mut g_dd, mut hess) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for _ in 0..n_pts {
            let x = tube_point(&mut rng, &target, 0.9)?;
            let back = target.involution(&target.involution(&x)?)?;
            inv = inv.max(max_abs_diff(&back, &x));

            let p = target.project(&x)?;
            let g = target.metric(&p)?.g;
            on_m = on_m.max((g - nalgebra::DMatrix::identity(3, 3)).abs().max());

            let m = target.metric(&x)?;
            let dd = target.distance(&x)?.gradient;
            g_dd = g_dd.max((&m.g * &dd - &dd).abs().max());

            let lhs = target.covariant_hessian_distance(&x)?;
            let rhs = target.reduced_covariant_hessian(&x)?;
            hess = hess.max((lhs - rhs).abs().max());
        }
        report.push(Check::new(
            format!("{name}: involution"),
            inv <= 1e-12,
            format!("max |i(i(x)) − x| = {inv:.3e}"),
        ));
        report.push(Check::new(
            format!("{name}: G = Id on M"),
            on_m <= 1e-12,
            format!("max |G − Id| = {on_m:.3e}"),
        ));
        report.push(Check::new(
            format!("{name}: G·Dd = Dd in tube"),
            g_dd <= 1e-10,
            format!("max |G·Dd − Dd| = {g_dd:.3e}"),
        ));
        report.push(Check::new(
            format!("{name}: covariant Hessian of d = d·D²d·D²d"),
            hess <= 1e-8,
            format!("max deviation {hess:.3e}"),
        ));
    }
    Ok(report)
}

/// Number of random fields in the variation checks.
pub const VARIATION_FIELDS: usize = 20;

/// Random map near the identity: `r_j·(p_j + 0.2·u_j)` with `r_j` uniform
/// in `[0.7, 1.3]` and `u_j` a random unit vector, so that the interpolant
/// stays well away from the origin.
fn random_map(rng: &mut ChaCha8Rng, mesh: &SurfaceMesh) -> Result<VertexField> {
    let mut values = Vec::with_capacity(3 * mesh.n_vertices());
    for i in 0..mesh.n_vertices() {
        let r = rng.gen_range(0.7..1.3);
        let u = random_unit(rng, 3);
        values.extend(mesh.vertex(i).iter().zip(u).map(|(p, u)| r * (p + 0.2 * u)));
    }
    VertexField::new(3, values)
}

/// Random direction field with vertex values in the unit ball.
fn random_direction(rng: &mut ChaCha8Rng, n_vertices: usize) -> Result<VertexField> {
    let mut values = Vec::with_capacity(3 * n_vertices);
    for _ in 0..n_vertices {
        let r = rng.gen_range(0.0..1.0);
        values.extend(random_unit(rng, 3).into_iter().map(|v| r * v));
    }
    VertexField::new(3, values)
}

/// Worst relative errors of the analytic variations against finite
/// differences of the energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationErrors {
    /// `max_{iα} |E' − FD| / max_{iα} |E'|`.
    pub gradient: f64,
    /// `|E'' − FD| / |E''|`.
    pub hessian: f64,
}

/// Compares the first and second variation with central differences
/// (steps `1e-6` and `1e-4`) on random maps over the level-2 sphere mesh.
pub fn variation_errors(seed: u64, fields: usize, flip_reaction: bool) -> Result<Vec<VariationErrors>> {
    let mesh = sphere_mesh(2)?;
    let fe = FeSpace::new(&mesh)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sign = if flip_reaction { -1.0 } else { 1.0 };
    let mut out = Vec::with_capacity(fields);
    for _ in 0..fields {
        let f = random_map(&mut rng, &mesh)?;
        let psi = random_direction(&mut rng, mesh.n_vertices())?;
        let grad = fe.first_variation_signed(&f, sign)?;
        let eps = 1e-6;
        let mut worst = 0.0f64;
        let mut probe = f.clone();
        for k in 0..grad.len() {
            let orig = probe.as_slice()[k];
            probe.as_mut_slice()[k] = orig + eps;
            let ep = fe.discrete_energy(&probe)?;
            probe.as_mut_slice()[k] = orig - eps;
            let em = fe.discrete_energy(&probe)?;
            probe.as_mut_slice()[k] = orig;
            worst = worst.max((grad[k] - (ep - em) / (2.0 * eps)).abs());
        }
        let scale = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        let eps = 1e-4;
        let e0 = fe.discrete_energy(&f)?;
        let ep = fe.discrete_energy(&f.axpy(eps, &psi))?;
        let em = fe.discrete_energy(&f.axpy(-eps, &psi))?;
        let fd = (ep - 2.0 * e0 + em) / (eps * eps);
        let analytic = fe.second_variation_apply(&f, &psi)?;
        out.push(VariationErrors {
            gradient: worst / scale,
            hessian: (analytic - fd).abs() / analytic.abs(),
        });
    }
    Ok(out)
}

/// First and second variation against finite differences, plus the
/// constant-map sanity check. `flip_reaction` is the mutation the battery
/// must catch.
pub fn check_variations(seed: u64, flip_reaction: bool) -> Result<Report> {
    let mut report = Report::new("check-variations");
    let errors = variation_errors(seed, VARIATION_FIELDS, flip_reaction)?;
    let g = errors.iter().map(|e| e.gradient).fold(0.0, f64::max);
    let h = errors.iter().map(|e| e.hessian).fold(0.0, f64::max);
    report.push(Check::new(
        "first variation vs central differences",
        g <= 1e-5,
        format!("max relative error {g:.3e} over {} fields", errors.len()),
    ));
    report.push(Check::new(
        "second variation vs second differences",
        h <= 1e-4,
        format!("max relative error {h:.3e}"),
    ));

    let mesh = sphere_mesh(2)?;
    let fe = FeSpace::new(&mesh)?;
    let c = VertexField::constant(mesh.n_vertices(), &[0.3, -0.4, 0.8]);
    let sign = if flip_reaction { -1.0 } else { 1.0 };
    let grad = fe.first_variation_signed(&c, sign)?;
    let g_max = grad.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let zero = VertexField::zeros(mesh.n_vertices(), 3);
    let e2 = fe.second_variation_apply(&c, &zero)?;
    report.push(Check::new(
        "constant map has vanishing variations",
        g_max == 0.0 && e2 == 0.0,
        format!("max |E'| = {g_max:e}, E''(0, 0) = {e2:e}"),
    ));
    Ok(report)
}

/// Relative discrepancy `|b − decomposition| / |b|` for the interpolated
/// identity of the circle with `8·2^k` segments, one entry per level.
pub fn b_form_discrepancies(levels: &[usize]) -> Result<Vec<(usize, f64)>> {
    let psi = |x: &[f64]| vec![x[1] + 0.3 * x[0] * x[0], x[0] * x[1] - 0.2];
    levels
        .iter()
        .map(|&k| {
            let mesh = polygonal_circle(8 << k)?;
            let fe = FeSpace::new(&mesh)?;
            let f = VertexField::identity(&mesh);
            let p = VertexField::interpolate(&mesh, 2, psi)?;
            let (b, dec) = fe.bilinear_b(&f, &p)?;
            Ok((8 << k, (b - dec).abs() / b.abs()))
        })
        .collect()
}

/// Largest entrywise difference between the general-metric and the
/// sphere-specialized step systems (matrix and right-hand side) at a
/// perturbed identity on the sphere mesh of `level`.
pub fn scheme_difference(level: usize) -> Result<f64> {
    let mesh = sphere_mesh(level)?;
    let fe = FeSpace::new(&mesh)?;
    let f = VertexField::identity(&mesh)
        .map_values(|x| vec![1.1 * x[0] + 0.05 * x[1] * x[2], 0.95 * x[1], x[2] + 0.1 * x[0] * x[0]])?;
    let sphere = SphereTarget::new(2)?;
    let tau = 1e-3;
    let a = fe.assemble_step_system(&f, tau, &sphere)?;
    let b = fe.assemble_general_system(&f, tau, &Target::Sphere(sphere))?;
    let nc = 3;
    let mut worst = 0.0f64;
    for i in 0..mesh.n_vertices() {
        for (j, _) in a.matrix.row(i) {
            for al in 0..nc {
                for be in 0..nc {
                    worst = worst.max((a.entry(i, al, j, be) - b.entry(i, al, j, be)).abs());
                }
            }
        }
    }
    // Entries outside the scalar pattern must vanish in the coupled system.
    let stored: usize = (0..mesh.n_vertices()).map(|i| a.matrix.row(i).count()).sum();
    if b.matrix.nnz() != stored * nc * nc {
        return Err(Error::InvalidArgument("coupled pattern does not match".into()));
    }
    worst = worst.max(max_abs_diff(&a.rhs, &b.rhs));
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_rendering() {
        let mut r = Report::new("x");
        r.push(Check::new("a", true, "ok"));
        r.push(Check::new("b", false, "bad").figure_derived());
        let s = r.render();
        assert!(s.contains("PASS a: ok"));
        assert!(s.contains("FAIL b: bad [figure-derived bound]"));
        assert!(s.ends_with("result: FAIL\n"));
        assert!(!r.passed());
    }

    #[test]
    fn experiment2_initial_distance_is_exact() {
        let (_, f0) = experiment_setup(Experiment::Two, 1, DeformationVariant::Corrected).unwrap();
        let d = f0.norms().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
        assert_eq!(d, 0.5);
    }

    #[test]
    fn printed_variant_is_rejected() {
        let err = experiment_setup(Experiment::One, 1, DeformationVariant::Printed).unwrap_err();
        assert!(matches!(err, Error::InvalidMesh(_) | Error::DegenerateSimplex { .. }), "{err}");
    }

    #[test]
    fn preset_options_from_partial_json_like_defaults() {
        let d = PresetOptions::default();
        assert_eq!(d.tau, 1e-3);
        assert_eq!(d.stop_tol, 1e-5);
        assert!(d.flow_config(2).is_ok());
        let bad = PresetOptions {
            tau: -1.0,
            ..PresetOptions::default()
        };
        assert!(bad.flow_config(2).is_err());
    }

    #[test]
    fn outcome_marker() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = Report::new("t");
        r.push(Check::new("c", false, "x"));
        write_outcome(dir.path(), "t", &Ok(r.clone())).unwrap();
        assert!(dir.path().join("FAILED").exists());
        assert!(dir.path().join("report_t.txt").exists());
        r.checks[0].passed = true;
        let mut other = Report::new("u");
        other.push(Check::new("c", true, "x"));
        write_outcome(dir.path(), "u", &Ok(other)).unwrap();
        assert!(dir.path().join("FAILED").exists());
        write_outcome(dir.path(), "t", &Ok(r)).unwrap();
        assert!(!dir.path().join("FAILED").exists());
    }

    #[test]
    fn energy_increase_counting() {
        let mesh = sphere_mesh(0).unwrap();
        let fe = FeSpace::new(&mesh).unwrap();
        let config = FlowConfig::sphere(2).unwrap();
        let mut state = FlowState::new(&fe, VertexField::identity(&mesh), &config).unwrap();
        let mut rec = *state.last();
        rec.energy += 1.0;
        state.monitors.push(rec);
        assert_eq!(energy_increases(&state, ENERGY_SLACK).0, 1);
    }
}
