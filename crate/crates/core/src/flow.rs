//! Semi-implicit time stepping of the harmonic map heat flow.
//!
//! Each step freezes the nonlinear weights at `f^m` and solves the SPD system
//! `((1/τ)M + S) f^{m+1} = b` by conjugate gradients warm-started at `f^m`.

use serde::{Deserialize, Serialize};

use crate::cg::{cg, CgSettings};
use crate::error::{Error, Result};
use crate::fem::{FeSpace, SparseSystem, SystemLayout};
use crate::field::VertexField;
use crate::mesh::SurfaceMesh;
use crate::target::Target;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Scalar system shared by all components; sphere targets only.
    #[default]
    SphereSpecialized,
    /// Component-coupled system with `G(f^m)` at quadrature points.
    GeneralMetric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub tau: f64,
    /// Stop once the maximal vertex velocity drops to this value.
    pub stop_tol: f64,
    pub max_steps: usize,
    pub cg: CgSettings,
    pub target: Target,
    pub scheme: Scheme,
    /// Merge element contributions in index order.
    pub deterministic: bool,
}

impl FlowConfig {
    /// Defaults for maps into the unit sphere S^n.
    pub fn sphere(n: usize) -> Result<Self> {
        Ok(FlowConfig {
            tau: 1e-3,
            stop_tol: 1e-5,
            max_steps: 1_000_000,
            cg: CgSettings::default(),
            target: Target::unit_sphere(n)?,
            scheme: Scheme::SphereSpecialized,
            deterministic: true,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidArgument(format!("tau = {} must be positive", self.tau)));
        }
        if !(self.stop_tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "stop_tol = {} must be positive",
                self.stop_tol
            )));
        }
        if self.scheme == Scheme::SphereSpecialized && !matches!(self.target, Target::Sphere(_)) {
            return Err(Error::InvalidArgument(
                "the sphere-specialized scheme needs a sphere target".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorRecord {
    pub t: f64,
    /// `max_j ||f(p_j)| − 1|` for spheres, `max_j |d(f(p_j))|` otherwise.
    pub max_distance: f64,
    pub energy: f64,
    /// `max_j |f^{m+1}(p_j) − f^m(p_j)| / τ`; zero for the initial record.
    pub max_velocity: f64,
    pub cg_iters: usize,
}

impl MonitorRecord {
    pub const CSV_HEADER: [&'static str; 5] = ["t", "max_distance", "energy", "max_velocity", "cg_iters"];

    pub fn csv_row(&self) -> Vec<f64> {
        vec![
            self.t,
            self.max_distance,
            self.energy,
            self.max_velocity,
            self.cg_iters as f64,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub f: VertexField,
    pub m: usize,
    pub tau: f64,
    /// One record per time level, starting with `t = 0`.
    pub monitors: Vec<MonitorRecord>,
}

impl FlowState {
    /// State at `t = 0` with its initial monitor record.
    pub fn new(fe: &FeSpace, f0: VertexField, config: &FlowConfig) -> Result<Self> {
        config.validate()?;
        f0.check_mesh(fe.mesh())?;
        if f0.n_components() != config.target.ambient_dim() {
            return Err(Error::InvalidArgument(format!(
                "initial map has {} components, target lives in R^{}",
                f0.n_components(),
                config.target.ambient_dim()
            )));
        }
        let record = MonitorRecord {
            t: 0.0,
            max_distance: max_distance(&f0, &config.target)?,
            energy: energy(fe, &f0, &config.target)?,
            max_velocity: 0.0,
            cg_iters: 0,
        };
        Ok(FlowState {
            f: f0,
            m: 0,
            tau: config.tau,
            monitors: vec![record],
        })
    }

    /// `t = m·τ`.
    pub fn t(&self) -> f64 {
        self.m as f64 * self.tau
    }

    pub fn last(&self) -> &MonitorRecord {
        self.monitors.last().expect("monitor history is never empty")
    }

    pub fn csv_rows(&self) -> Vec<Vec<f64>> {
        self.monitors.iter().map(MonitorRecord::csv_row).collect()
    }

    /// Supremum over time of the monitored distance.
    pub fn sup_max_distance(&self) -> f64 {
        self.monitors.iter().map(|r| r.max_distance).fold(0.0, f64::max)
    }
}

fn max_distance(f: &VertexField, target: &Target) -> Result<f64> {
    let mut worst = 0.0f64;
    for i in 0..f.n_vertices() {
        let d = match target {
            Target::Sphere(_) => {
                let x = f.get(i);
                (x.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs()
            }
            Target::Hypersurface(h) => h.signed_distance(f.get(i))?.abs(),
        };
        worst = worst.max(d);
    }
    Ok(worst)
}

fn energy(fe: &FeSpace, f: &VertexField, target: &Target) -> Result<f64> {
    match target {
        Target::Sphere(_) => fe.discrete_energy(f),
        Target::Hypersurface(_) => fe.metric_energy(f, target),
    }
}

/// Solves `system` starting from `x0`; returns the solution and the total
/// number of CG iterations (summed over components for the scalar layout).
pub fn cg_solve(system: &SparseSystem, x0: &[f64], settings: &CgSettings) -> Result<(Vec<f64>, usize)> {
    let mut x = x0.to_vec();
    match system.layout {
        SystemLayout::Coupled => {
            let out = cg(&system.matrix, &system.rhs, &mut x, settings)?;
            Ok((x, out.iterations))
        }
        SystemLayout::ComponentDiagonal => {
            let nc = system.n_components;
            let n = system.n_vertices;
            let mut iterations = 0;
            let mut xa = vec![0.0; n];
            let mut ba = vec![0.0; n];
            for alpha in 0..nc {
                for i in 0..n {
                    xa[i] = x[i * nc + alpha];
                    ba[i] = system.rhs[i * nc + alpha];
                }
                iterations += cg(&system.matrix, &ba, &mut xa, settings)?.iterations;
                for i in 0..n {
                    x[i * nc + alpha] = xa[i];
                }
            }
            Ok((x, iterations))
        }
    }
}

/// Assembles the step system of `config.scheme` at `f`.
pub fn assemble(fe: &FeSpace, f: &VertexField, config: &FlowConfig) -> Result<SparseSystem> {
    match (config.scheme, &config.target) {
        (Scheme::SphereSpecialized, Target::Sphere(s)) => fe.assemble_step_system(f, config.tau, s),
        (Scheme::SphereSpecialized, _) => Err(Error::InvalidArgument(
            "the sphere-specialized scheme needs a sphere target".into(),
        )),
        (Scheme::GeneralMetric, target) => fe.assemble_general_system(f, config.tau, target),
    }
}

/// Advances `state` by one time step. On error `state` is left unchanged
/// and the error carries the index of the failed step.
pub fn step(state: &mut FlowState, fe: &FeSpace, config: &FlowConfig) -> Result<()> {
    let next = state.m + 1;
    let wrap = |e: Error| Error::Step {
        step: next,
        source: Box::new(e),
    };
    let system = assemble(fe, &state.f, config).map_err(wrap)?;
    let (x, cg_iters) = cg_solve(&system, state.f.as_slice(), &config.cg).map_err(wrap)?;
    let f_new = VertexField::new(state.f.n_components(), x).map_err(wrap)?;
    let max_velocity = state.f.max_vertex_distance(&f_new) / config.tau;
    let record = MonitorRecord {
        t: next as f64 * config.tau,
        max_distance: max_distance(&f_new, &config.target).map_err(wrap)?,
        energy: energy(fe, &f_new, &config.target).map_err(wrap)?,
        max_velocity,
        cg_iters,
    };
    state.f = f_new;
    state.m = next;
    state.monitors.push(record);
    Ok(())
}

/// Steps until the maximal velocity is at most `stop_tol`, calling
/// `observer` after every accepted step.
pub fn run_flow_with<O>(
    state: &mut FlowState,
    fe: &FeSpace,
    config: &FlowConfig,
    mut observer: O,
) -> Result<()>
where
    O: FnMut(&FlowState) -> Result<()>,
{
    while state.m < config.max_steps {
        step(state, fe, config)?;
        observer(state)?;
        if state.last().max_velocity <= config.stop_tol {
            return Ok(());
        }
    }
    Err(Error::NotStationary {
        steps: state.m,
        state: Box::new(state.clone()),
    })
}

/// Runs the flow from `f0` to the stopping rule.
pub fn run_flow(mesh: &SurfaceMesh, f0: VertexField, config: &FlowConfig) -> Result<FlowState> {
    let fe = space(mesh, config)?;
    let mut state = FlowState::new(&fe, f0, config)?;
    run_flow_with(&mut state, &fe, config, |_| Ok(()))?;
    Ok(state)
}

fn space(mesh: &SurfaceMesh, config: &FlowConfig) -> Result<FeSpace> {
    let mut fe = FeSpace::new(mesh)?;
    fe.set_deterministic(config.deterministic);
    if let Target::Sphere(s) = &config.target {
        fe.set_guard(s.guard_radius);
    }
    Ok(fe)
}

/// Result of [`solve_stationary`].
#[derive(Debug, Clone)]
pub struct Stationary {
    pub state: FlowState,
    /// `max_{iα} |E'_h(f)(φ_i e_α)|` at the returned map; `None` for
    /// non-sphere targets, where no discrete energy is defined.
    pub residual: Option<f64>,
    /// Bound the residual must meet for the certificate.
    pub tolerance: Option<f64>,
}

impl Stationary {
    pub fn f(&self) -> &VertexField {
        &self.state.f
    }

    pub fn certified(&self) -> bool {
        matches!((self.residual, self.tolerance), (Some(r), Some(t)) if r <= t)
    }
}

/// Runs the flow to stationarity and certifies the discrete stationary
/// equations `E'_h(f)(φ_i e_α) = 0`.
///
/// At the last step `(1/τ)M(f^{m+1} − f^m) + S f^{m+1} − R f^m = 0`, so the
/// residual at `f^m` is `(1/τ)MΔf + SΔf`, bounded by
/// `stop_tol·(‖M‖_∞ + τ‖S‖_∞)`. The tolerance doubles this to absorb the
/// weight change between `f^m` and `f^{m+1}`.
pub fn solve_stationary(mesh: &SurfaceMesh, f0: VertexField, config: &FlowConfig) -> Result<Stationary> {
    let fe = space(mesh, config)?;
    let mut state = FlowState::new(&fe, f0, config)?;
    run_flow_with(&mut state, &fe, config, |_| Ok(()))?;
    let (residual, tolerance) = match &config.target {
        Target::Sphere(s) => {
            let residual = fe
                .first_variation(&state.f)?
                .into_iter()
                .fold(0.0f64, |a, v| a.max(v.abs()));
            let system = fe.assemble_step_system(&state.f, config.tau, s)?;
            let bound = max_abs_row_sum(&system.mass) + config.tau * max_abs_row_sum(&system.stiffness);
            (Some(residual), Some(2.0 * config.stop_tol * bound))
        }
        Target::Hypersurface(_) => (None, None),
    };
    Ok(Stationary {
        state,
        residual,
        tolerance,
    })
}

fn max_abs_row_sum(a: &crate::sparse::CsrMatrix) -> f64 {
    (0..a.nrows())
        .map(|r| a.row(r).map(|(_, v)| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
