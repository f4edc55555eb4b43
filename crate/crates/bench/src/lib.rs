//! Fixtures shared by the criterion benchmarks in `benches/`.

use geoflow::experiments::{experiment_setup, Experiment};
use geoflow::{DeformationVariant, FeSpace, FlowConfig, SurfaceMesh, VertexField};

/// Squeezed sphere of the first experiment at `level` with its initial map,
/// perturbed off the sphere so that the weights are not trivially one.
pub fn fixture(level: usize) -> (SurfaceMesh, VertexField) {
    let (mesh, f0) = experiment_setup(Experiment::One, level, DeformationVariant::Corrected).expect("preset mesh");
    let f = f0
        .map_values(|y| y.iter().enumerate().map(|(k, v)| v * (1.0 + 0.05 * k as f64)).collect())
        .expect("same component count");
    (mesh, f)
}

pub fn fe_space(mesh: &SurfaceMesh, deterministic: bool) -> FeSpace {
    let mut fe = FeSpace::new(mesh).expect("valid mesh");
    fe.set_deterministic(deterministic);
    fe
}

pub fn sphere_config() -> FlowConfig {
    FlowConfig::sphere(2).expect("valid config")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_is_usable() {
        let (mesh, f) = fixture(1);
        let fe = fe_space(&mesh, true);
        assert!(fe.discrete_energy(&f).unwrap() > 0.0);
    }
}
