//! `geoflow`: experiment presets, convergence studies and property checks.
//!
//! Exit codes: 0 all checks passed, 1 a check failed, 2 usage error,
//! 3 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use geoflow::experiments::{self, Check, PresetOptions, Report};
use geoflow::target::MetricForm;
use geoflow::{read_off, DeformationVariant, Error, Result, VertexField};

const EXIT_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "geoflow", version, about = "Harmonic map heat flow presets and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON file with preset options; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Time step size.
    #[arg(long, global = true)]
    tau: Option<f64>,
    /// Stopping tolerance on the maximal vertex velocity.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Output directory for CSV, VTK and report files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    deformation_variant: Option<Variant>,
    /// Bitwise reproducible assembly (default on).
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    deterministic: Option<bool>,
    /// Extra VTK snapshot every K steps.
    #[arg(long, global = true, value_name = "K")]
    snapshot_every: Option<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Variant {
    Printed,
    Corrected,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum InitialMap {
    /// Vertex positions.
    Identity,
    /// Vertex positions scaled onto the unit sphere.
    Radial,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Squeezed sphere mapped into S² by the identity.
    Experiment1 {
        #[arg(long, value_delimiter = ',', default_values_t = experiments::EXPERIMENT1_LEVELS)]
        levels: Vec<usize>,
    },
    /// As experiment1 with initial data off the sphere.
    Experiment2 {
        #[arg(long, default_value_t = experiments::EXPERIMENT2_LEVEL)]
        level: usize,
    },
    /// Stronger squeeze.
    Experiment3 {
        #[arg(long, default_value_t = experiments::EXPERIMENT3_LEVEL)]
        level: usize,
    },
    /// H¹ convergence of stationary maps from polygonal circles into S¹.
    ConvergeCircle {
        #[arg(long, value_delimiter = ',', default_values_t = experiments::CIRCLE_LEVELS)]
        levels: Vec<usize>,
    },
    /// Flow from r0·identity against the radial scaling ODE.
    ScalingTest {
        #[arg(long, default_value_t = experiments::SCALING_LEVEL)]
        level: usize,
        #[arg(long, value_delimiter = ',', default_values_t = experiments::SCALING_RADII)]
        radii: Vec<f64>,
    },
    /// Geometry identities of the extended metrics at random points.
    CheckGeometry {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true)]
        drop_quadratic_term: bool,
    },
    /// First and second variation against finite differences.
    CheckVariations {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true)]
        flip_reaction_sign: bool,
    },
    /// Flow of a map from an OFF triangle mesh into S².
    Custom {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long, value_enum, default_value_t = InitialMap::Radial)]
        initial: InitialMap,
    },
}

impl Command {
    fn tag(&self) -> &'static str {
        match self {
            Command::Experiment1 { .. } => "experiment1",
            Command::Experiment2 { .. } => "experiment2",
            Command::Experiment3 { .. } => "experiment3",
            Command::ConvergeCircle { .. } => "converge-circle",
            Command::ScalingTest { .. } => "scaling-test",
            Command::CheckGeometry { .. } => "check-geometry",
            Command::CheckVariations { .. } => "check-variations",
            Command::Custom { .. } => "custom",
        }
    }
}

fn load_options(common: &Common) -> Result<PresetOptions> {
    let mut opts = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: path.clone(),
                line: e.line(),
                message: e.to_string(),
            })?
        }
        None => PresetOptions::default(),
    };
    if let Some(tau) = common.tau {
        opts.tau = tau;
    }
    if let Some(tol) = common.tol {
        opts.stop_tol = tol;
    }
    if let Some(out) = &common.out {
        opts.output_dir = Some(out.clone());
    }
    if let Some(v) = common.deformation_variant {
        opts.deformation_variant = match v {
            Variant::Printed => DeformationVariant::Printed,
            Variant::Corrected => DeformationVariant::Corrected,
        };
    }
    if let Some(d) = common.deterministic {
        opts.deterministic = d;
    }
    if common.snapshot_every.is_some() {
        opts.snapshot_every = common.snapshot_every;
    }
    if opts.output_dir.is_none() {
        opts.output_dir = Some(PathBuf::from("geoflow-out"));
    }
    Ok(opts)
}

fn custom(mesh_path: &Path, initial: InitialMap, opts: &PresetOptions) -> Result<Report> {
    let mesh = read_off(mesh_path)?;
    let f0 = match initial {
        InitialMap::Identity => VertexField::identity(&mesh),
        InitialMap::Radial => VertexField::interpolate(&mesh, 3, |x| {
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            x.iter().map(|v| v / r).collect()
        })?,
    };
    let config = opts.flow_config(2)?;
    let run = experiments::run_preset_flow("custom", &mesh, f0, &config, opts)?;
    let mut report = Report::new("custom");
    report.note(format!(
        "{} vertices, {} steps, final t {:.3}, sup max_distance {:.4e}, final energy {:.8}",
        mesh.n_vertices(),
        run.state.m,
        run.final_time(),
        run.state.sup_max_distance(),
        run.state.last().energy
    ));
    let (count, worst) = experiments::energy_increases(&run.state, experiments::ENERGY_SLACK);
    report.push(Check::new(
        "custom terminates",
        run.state.last().max_velocity <= config.stop_tol,
        format!("max velocity {:.3e}", run.state.last().max_velocity),
    ));
    report.push(Check::new(
        "custom energy non-increasing",
        count == 0,
        format!("{count} steps above slack, largest increase {worst:.3e}"),
    ));
    Ok(report)
}

fn execute(command: &Command, opts: &PresetOptions) -> Result<Report> {
    match command {
        Command::Experiment1 { levels } => experiments::experiment1(levels, opts).map(|r| r.0),
        Command::Experiment2 { level } => experiments::experiment2(*level, opts).map(|r| r.0),
        Command::Experiment3 { level } => experiments::experiment3(*level, opts).map(|r| r.0),
        Command::ConvergeCircle { levels } => experiments::converge_circle(levels, opts).map(|r| r.0),
        Command::ScalingTest { level, radii } => experiments::scaling_test(*level, radii, opts).map(|r| r.0),
        Command::CheckGeometry {
            seed,
            drop_quadratic_term,
        } => {
            let form = if *drop_quadratic_term {
                MetricForm::DropQuadratic
            } else {
                MetricForm::Full
            };
            experiments::check_geometry(*seed, form)
        }
        Command::CheckVariations {
            seed,
            flip_reaction_sign,
        } => experiments::check_variations(*seed, *flip_reaction_sign),
        Command::Custom { mesh, initial } => custom(mesh, *initial, opts),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let opts = match load_options(&cli.common) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let tag = cli.command.tag();
    let outcome = execute(&cli.command, &opts);
    let dir = opts.output_dir.as_deref().unwrap_or(Path::new("."));
    if let Err(e) = experiments::write_outcome(dir, tag, &outcome) {
        eprintln!("error: {e}");
    }
    match outcome {
        Ok(report) => {
            print!("{}", report.render());
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAILED)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::from(EXIT_NUMERICAL)
            }
        }
    }
}
