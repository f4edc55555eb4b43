//! Harmonic map heat flow on triangulated closed hypersurfaces.
//!
//! Maps from a polyhedral surface (or polygonal curve) into a sphere or a
//! closed hypersurface are discretized with P1 surface finite elements. The
//! target constraint is replaced by an extended metric on a neighbourhood of
//! the target in which the target is totally geodesic, so every time step is
//! an unconstrained linear SPD solve.
//!
//! ```
//! use geoflow::{sphere_mesh, FlowConfig, VertexField, run_flow};
//!
//! let mesh = sphere_mesh(1).unwrap();
//! let f0 = VertexField::constant(mesh.n_vertices(), &[0.0, 0.0, 1.0]);
//! let state = run_flow(&mesh, f0, &FlowConfig::sphere(2).unwrap()).unwrap();
//! assert_eq!(state.m, 1);
//! ```

pub mod cg;
pub mod error;
pub mod experiments;
pub mod fem;
pub mod field;
pub mod flow;
pub mod io;
pub mod mesh;
pub mod ode;
pub mod quadrature;
pub mod sparse;
pub mod target;

/// Largest supported ambient dimension.
pub const MAX_DIM: usize = 3;

pub use cg::{cg, CgOutcome, CgSettings, Preconditioner};
pub use error::{Error, Result};
pub use fem::{element_geometry, ElementGeometry, FeSpace, SparseSystem, SystemLayout};
pub use field::VertexField;
pub use flow::{
    cg_solve, run_flow, run_flow_with, solve_stationary, step, FlowConfig, FlowState, MonitorRecord,
    Scheme, Stationary,
};
pub use io::{export_csv, export_vtk, read_off};
pub use mesh::{
    deform, mesh_stats, octahedron, polygonal_circle, refine_global, sphere_mesh, AxialSqueeze,
    DeformationVariant, MeshStats, SurfaceMesh,
};
pub use ode::{scaling_ode_reference, unstable_extension_ode};
pub use quadrature::{quadrature_rule, QuadratureRule};
pub use sparse::CsrMatrix;
pub use target::{Hypersurface, HypersurfaceTarget, MetricEval, SphereTarget, Target};
