use crate::error::{Error, Result};
use crate::mesh::SurfaceMesh;

/// A P1 map from a mesh into R^{n+1}: one value per vertex.
///
/// Values are stored vertex-major, so the coefficient of the basis function
/// `φ_i e_α` sits at index `i * n_components + α`.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexField {
    n_components: usize,
    values: Vec<f64>,
}

impl VertexField {
    pub fn new(n_components: usize, values: Vec<f64>) -> Result<Self> {
        if n_components == 0 || n_components > crate::MAX_DIM {
            return Err(Error::InvalidArgument(format!(
                "unsupported component count {n_components}"
            )));
        }
        if values.len() % n_components != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} values do not split into {n_components} components",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite value at vertex {}",
                i / n_components
            )));
        }
        Ok(VertexField {
            n_components,
            values,
        })
    }

    pub fn zeros(n_vertices: usize, n_components: usize) -> Self {
        VertexField {
            n_components,
            values: vec![0.0; n_vertices * n_components],
        }
    }

    pub fn constant(n_vertices: usize, value: &[f64]) -> Self {
        let values = (0..n_vertices).flat_map(|_| value.iter().copied()).collect();
        VertexField {
            n_components: value.len(),
            values,
        }
    }

    /// Nodal interpolant of `map`.
    pub fn interpolate<F>(mesh: &SurfaceMesh, n_components: usize, map: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        let mut values = Vec::with_capacity(mesh.n_vertices() * n_components);
        for i in 0..mesh.n_vertices() {
            let v = map(mesh.vertex(i));
            if v.len() != n_components {
                return Err(Error::InvalidArgument(format!(
                    "map returned {} components, expected {n_components}",
                    v.len()
                )));
            }
            values.extend(v);
        }
        Self::new(n_components, values)
    }

    /// Interpolant of the identity map (vertex positions).
    pub fn identity(mesh: &SurfaceMesh) -> Self {
        Self::interpolate(mesh, mesh.dim_ambient(), |x| x.to_vec())
            .expect("vertex coordinates are finite")
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn n_vertices(&self) -> usize {
        self.values.len() / self.n_components
    }

    pub fn get(&self, vertex: usize) -> &[f64] {
        let k = self.n_components;
        &self.values[vertex * k..(vertex + 1) * k]
    }

    pub fn get_mut(&mut self, vertex: usize) -> &mut [f64] {
        let k = self.n_components;
        &mut self.values[vertex * k..(vertex + 1) * k]
    }

    /// Value at `vertex` padded with zeros to three components.
    pub fn padded(&self, vertex: usize) -> [f64; 3] {
        let mut p = [0.0; 3];
        p[..self.n_components].copy_from_slice(self.get(vertex));
        p
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn map_values<F>(&self, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        let mut values = Vec::with_capacity(self.values.len());
        for v in self.values.chunks_exact(self.n_components) {
            values.extend(f(v));
        }
        Self::new(self.n_components, values)
    }

    pub fn norms(&self) -> impl Iterator<Item = f64> + '_ {
        self.values
            .chunks_exact(self.n_components)
            .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
    }

    /// Checks that the field belongs to `mesh`.
    pub fn check_mesh(&self, mesh: &SurfaceMesh) -> Result<()> {
        if self.n_vertices() != mesh.n_vertices() {
            return Err(Error::InvalidArgument(format!(
                "field has {} vertices, mesh has {}",
                self.n_vertices(),
                mesh.n_vertices()
            )));
        }
        Ok(())
    }

    /// `self + eps * dir`.
    pub fn axpy(&self, eps: f64, dir: &VertexField) -> VertexField {
        debug_assert_eq!(self.values.len(), dir.values.len());
        VertexField {
            n_components: self.n_components,
            values: self
                .values
                .iter()
                .zip(&dir.values)
                .map(|(a, b)| a + eps * b)
                .collect(),
        }
    }

    /// `max_j |self(p_j) - other(p_j)|`.
    pub fn max_vertex_distance(&self, other: &VertexField) -> f64 {
        self.values
            .chunks_exact(self.n_components)
            .zip(other.values.chunks_exact(self.n_components))
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }
}
