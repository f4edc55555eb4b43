//! Closed simplicial hypersurfaces: polygonal curves in R² and polyhedral
//! surfaces in R³.
//!
//! A [`SurfaceMesh`] is validated on construction and immutable afterwards.
//! Every constructor, refinement and deformation re-runs the full set of
//! checks (closedness, orientation, vertex-link manifoldness, positive
//! measure), so a mesh value in hand is always admissible.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Simplices whose measure falls below this fraction of `diameter^d` are
/// rejected as degenerate.
const DEGENERACY_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh {
    dim_surface: usize,
    /// Stored padded to three coordinates; unused coordinates are zero.
    vertices: Vec<[f64; 3]>,
    /// Flat connectivity with stride `dim_surface + 1`.
    simplices: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeshStats {
    pub h_max: f64,
    pub h_min: f64,
    pub min_radius_ratio: f64,
    pub n_vertices: usize,
    pub n_simplices: usize,
}

impl SurfaceMesh {
    /// Polyhedral surface in R³.
    pub fn from_triangles(vertices: Vec<[f64; 3]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = SurfaceMesh {
            dim_surface: 2,
            vertices,
            simplices: triangles.into_iter().flatten().collect(),
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Polygonal curve in R².
    pub fn from_segments(vertices: Vec<[f64; 2]>, segments: Vec<[usize; 2]>) -> Result<Self> {
        let mesh = SurfaceMesh {
            dim_surface: 1,
            vertices: vertices.into_iter().map(|[x, y]| [x, y, 0.0]).collect(),
            simplices: segments.into_iter().flatten().collect(),
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn dim_surface(&self) -> usize {
        self.dim_surface
    }

    pub fn dim_ambient(&self) -> usize {
        self.dim_surface + 1
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_simplices(&self) -> usize {
        self.simplices.len() / self.nodes_per_simplex()
    }

    pub fn nodes_per_simplex(&self) -> usize {
        self.dim_surface + 1
    }

    /// Coordinates of vertex `i` in R^{d+1}.
    pub fn vertex(&self, i: usize) -> &[f64] {
        &self.vertices[i][..self.dim_ambient()]
    }

    /// Vertex coordinates padded with zeros to three components.
    pub fn vertex_padded(&self, i: usize) -> [f64; 3] {
        self.vertices[i]
    }

    pub fn simplex(&self, t: usize) -> &[usize] {
        let k = self.nodes_per_simplex();
        &self.simplices[t * k..(t + 1) * k]
    }

    pub fn simplices(&self) -> impl Iterator<Item = &[usize]> {
        self.simplices.chunks_exact(self.nodes_per_simplex())
    }

    /// Unique edges as sorted index pairs, in order of first appearance.
    pub fn edges(&self) -> Vec<[usize; 2]> {
        let mut seen = HashMap::new();
        let mut edges = Vec::new();
        for s in self.simplices() {
            for (a, b) in local_edges(s) {
                let key = sorted_pair(a, b);
                seen.entry(key).or_insert_with(|| {
                    edges.push(key);
                });
            }
        }
        edges
    }

    /// d-dimensional measure (length or area) of simplex `t`.
    pub fn simplex_measure(&self, t: usize) -> f64 {
        let s = self.simplex(t);
        match self.dim_surface {
            1 => dist(&self.vertices[s[0]], &self.vertices[s[1]]),
            _ => {
                let e1 = sub(&self.vertices[s[1]], &self.vertices[s[0]]);
                let e2 = sub(&self.vertices[s[2]], &self.vertices[s[0]]);
                0.5 * norm(&cross(&e1, &e2))
            }
        }
    }

    /// Longest edge of simplex `t`.
    pub fn simplex_diameter(&self, t: usize) -> f64 {
        local_edges(self.simplex(t))
            .map(|(a, b)| dist(&self.vertices[a], &self.vertices[b]))
            .fold(0.0, f64::max)
    }

    /// Radius of the largest ball inscribed in simplex `t`.
    pub fn simplex_inradius(&self, t: usize) -> f64 {
        match self.dim_surface {
            1 => 0.5 * self.simplex_measure(t),
            _ => {
                let s = self.simplex(t);
                let perimeter: f64 = local_edges(s)
                    .map(|(a, b)| dist(&self.vertices[a], &self.vertices[b]))
                    .sum();
                2.0 * self.simplex_measure(t) / perimeter
            }
        }
    }

    pub fn total_measure(&self) -> f64 {
        (0..self.n_simplices()).map(|t| self.simplex_measure(t)).sum()
    }

    pub fn stats(&self) -> MeshStats {
        mesh_stats(self)
    }

    fn validate(&self) -> Result<()> {
        let k = self.nodes_per_simplex();
        let nv = self.vertices.len();
        if self.simplices.is_empty() {
            return Err(Error::InvalidMesh("mesh has no simplices".into()));
        }
        if self.simplices.len() % k != 0 {
            return Err(Error::InvalidMesh("ragged connectivity".into()));
        }
        for (i, v) in self.vertices.iter().enumerate() {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidMesh(format!("vertex {i} is not finite")));
            }
        }
        let mut used = vec![false; nv];
        for (t, s) in self.simplices().enumerate() {
            for (a, &i) in s.iter().enumerate() {
                if i >= nv {
                    return Err(Error::InvalidMesh(format!(
                        "simplex {t} references vertex {i} of {nv}"
                    )));
                }
                if s[..a].contains(&i) {
                    return Err(Error::InvalidMesh(format!(
                        "simplex {t} repeats vertex {i}"
                    )));
                }
                used[i] = true;
            }
        }
        if let Some(i) = used.iter().position(|u| !u) {
            return Err(Error::InvalidMesh(format!("vertex {i} is unreferenced")));
        }
        self.check_distinct_vertices()?;
        for t in 0..self.n_simplices() {
            let measure = self.simplex_measure(t);
            let diam = self.simplex_diameter(t);
            if !(measure > DEGENERACY_RATIO * diam.powi(self.dim_surface as i32)) {
                return Err(Error::DegenerateSimplex { simplex: t, measure });
            }
        }
        match self.dim_surface {
            1 => self.check_closed_curve(),
            2 => self.check_closed_surface(),
            d => Err(Error::InvalidMesh(format!("unsupported dimension {d}"))),
        }
    }

    /// Two vertex indices sharing bitwise-identical coordinates would make
    /// the triangulation non-admissible.
    fn check_distinct_vertices(&self) -> Result<()> {
        let mut keys: Vec<([u64; 3], usize)> = self
            .vertices
            .iter()
            .enumerate()
            .map(|(i, v)| (v.map(f64::to_bits), i))
            .collect();
        keys.sort_unstable();
        for w in keys.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidMesh(format!(
                    "vertices {} and {} coincide",
                    w[0].1, w[1].1
                )));
            }
        }
        Ok(())
    }

    fn check_closed_curve(&self) -> Result<()> {
        let nv = self.vertices.len();
        let mut starts = vec![0usize; nv];
        let mut ends = vec![0usize; nv];
        for s in self.simplices() {
            starts[s[0]] += 1;
            ends[s[1]] += 1;
        }
        for i in 0..nv {
            if starts[i] + ends[i] != 2 {
                return Err(Error::InvalidMesh(format!(
                    "vertex {i} is shared by {} segments, expected 2",
                    starts[i] + ends[i]
                )));
            }
            if starts[i] != 1 {
                return Err(Error::InvalidMesh(format!(
                    "inconsistent orientation at vertex {i}"
                )));
            }
        }
        Ok(())
    }

    fn check_closed_surface(&self) -> Result<()> {
        let mut edge_count: HashMap<[usize; 2], usize> = HashMap::new();
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for s in self.simplices() {
            for (a, b) in local_edges(s) {
                *edge_count.entry(sorted_pair(a, b)).or_default() += 1;
                *directed.entry((a, b)).or_default() += 1;
            }
        }
        for (e, &c) in &edge_count {
            if c != 2 {
                return Err(Error::InvalidMesh(format!(
                    "edge {e:?} is shared by {c} triangles, expected 2"
                )));
            }
        }
        for (&(a, b), &c) in &directed {
            if c != 1 || !directed.contains_key(&(b, a)) {
                return Err(Error::InvalidMesh(format!(
                    "inconsistent orientation across edge ({a}, {b})"
                )));
            }
        }
        // Each vertex link must be a single cycle.
        let mut link: Vec<Vec<(usize, usize)>> = vec![Vec::new(); self.vertices.len()];
        for s in self.simplices() {
            for r in 0..3 {
                link[s[r]].push((s[(r + 1) % 3], s[(r + 2) % 3]));
            }
        }
        for (v, arcs) in link.iter().enumerate() {
            let next: HashMap<usize, usize> = arcs.iter().copied().collect();
            if next.len() != arcs.len() {
                return Err(Error::InvalidMesh(format!("vertex {v} is non-manifold")));
            }
            let start = arcs[0].0;
            let mut cur = start;
            let mut steps = 0;
            loop {
                cur = next[&cur];
                steps += 1;
                if cur == start || steps > arcs.len() {
                    break;
                }
            }
            if steps != arcs.len() {
                return Err(Error::InvalidMesh(format!(
                    "link of vertex {v} is not a single cycle"
                )));
            }
        }
        Ok(())
    }
}

/// Regular octahedron with vertices ±e₁, ±e₂, ±e₃ and outward orientation.
pub fn octahedron() -> SurfaceMesh {
    let vertices = vec![
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ];
    let mut triangles = Vec::with_capacity(8);
    for sx in [0, 1] {
        for sy in [2, 3] {
            for sz in [4, 5] {
                // An odd number of negative axes flips the orientation.
                let flips = sx + (sy - 2) + (sz - 4);
                if flips % 2 == 0 {
                    triangles.push([sx, sy, sz]);
                } else {
                    triangles.push([sx, sz, sy]);
                }
            }
        }
    }
    SurfaceMesh::from_triangles(vertices, triangles).expect("octahedron is a valid mesh")
}

/// `k` equispaced vertices on the unit circle, counter-clockwise.
pub fn polygonal_circle(k: usize) -> Result<SurfaceMesh> {
    if k < 3 {
        return Err(Error::InvalidArgument(format!(
            "polygonal circle needs at least 3 vertices, got {k}"
        )));
    }
    let vertices = (0..k)
        .map(|j| {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / k as f64;
            [theta.cos(), theta.sin()]
        })
        .collect();
    let segments = (0..k).map(|j| [j, (j + 1) % k]).collect();
    SurfaceMesh::from_segments(vertices, segments)
}

/// Octahedron refined `levels` times with new vertices projected to S².
pub fn sphere_mesh(levels: usize) -> Result<SurfaceMesh> {
    let mut mesh = octahedron();
    for _ in 0..levels {
        mesh = refine_global(&mesh, true)?;
    }
    Ok(mesh)
}

/// One level of uniform refinement: triangles split 1:4 and segments 1:2 at
/// edge midpoints. Midpoints are shared through an edge-keyed table; with
/// `project_to_unit_sphere` only the new vertices are moved to `x / |x|`.
pub fn refine_global(mesh: &SurfaceMesh, project_to_unit_sphere: bool) -> Result<SurfaceMesh> {
    let mut vertices = mesh.vertices.clone();
    let mut midpoints: HashMap<[usize; 2], usize> = HashMap::new();
    let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<[f64; 3]>| -> Result<usize> {
        let key = sorted_pair(a, b);
        if let Some(&m) = midpoints.get(&key) {
            return Ok(m);
        }
        let (pa, pb) = (vertices[a], vertices[b]);
        let mut p = [0.0; 3];
        for c in 0..3 {
            p[c] = 0.5 * (pa[c] + pb[c]);
        }
        if project_to_unit_sphere {
            let r = norm(&p);
            if r == 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "midpoint of edge ({a}, {b}) is the origin"
                )));
            }
            p.iter_mut().for_each(|x| *x /= r);
        }
        vertices.push(p);
        let id = vertices.len() - 1;
        midpoints.insert(key, id);
        Ok(id)
    };

    let mut simplices = Vec::with_capacity(mesh.simplices.len() * 4);
    match mesh.dim_surface {
        1 => {
            for s in mesh.simplices() {
                let m = midpoint(s[0], s[1], &mut vertices)?;
                simplices.extend_from_slice(&[s[0], m, m, s[1]]);
            }
        }
        _ => {
            for s in mesh.simplices() {
                let (a, b, c) = (s[0], s[1], s[2]);
                let ab = midpoint(a, b, &mut vertices)?;
                let bc = midpoint(b, c, &mut vertices)?;
                let ca = midpoint(c, a, &mut vertices)?;
                simplices.extend_from_slice(&[a, ab, ca, ab, b, bc, ca, bc, c, ab, bc, ca]);
            }
        }
    }
    let refined = SurfaceMesh {
        dim_surface: mesh.dim_surface,
        vertices,
        simplices,
    };
    refined.validate().map_err(|e| match e {
        Error::DegenerateSimplex { simplex, .. } => Error::DegenerateRefinement { simplex },
        other => other,
    })?;
    Ok(refined)
}

/// Applies `map` to every vertex; connectivity is kept and re-validated.
pub fn deform<F>(mesh: &SurfaceMesh, map: F) -> Result<SurfaceMesh>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let dim = mesh.dim_ambient();
    let mut vertices = Vec::with_capacity(mesh.n_vertices());
    for i in 0..mesh.n_vertices() {
        let image = map(mesh.vertex(i));
        if image.len() != dim || image.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "deformation is not a finite point of R^{dim} at vertex {i}"
            )));
        }
        let mut p = [0.0; 3];
        p[..dim].copy_from_slice(&image);
        vertices.push(p);
    }
    let deformed = SurfaceMesh {
        dim_surface: mesh.dim_surface,
        vertices,
        simplices: mesh.simplices.clone(),
    };
    deformed.validate()?;
    Ok(deformed)
}

/// Which form of the axial squeeze to apply; see [`AxialSqueeze`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DeformationVariant {
    /// `(x₁, α(x₁)x₂, α(x₁)x₂)`, exactly as printed in the experiment
    /// description. It collapses the surface onto the plane x₂ = x₃.
    Printed,
    /// `(x₁, α(x₁)x₂, α(x₁)x₃)`.
    #[default]
    Corrected,
}

/// Squeeze of a surface in R³ towards the x₁-axis with factor
/// `α(x₁) = quadratic·x₁² + constant`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxialSqueeze {
    pub quadratic: f64,
    pub constant: f64,
    pub variant: DeformationVariant,
}

impl AxialSqueeze {
    /// α(x₁) = 0.6 x₁² + 0.4.
    pub fn experiment1(variant: DeformationVariant) -> Self {
        AxialSqueeze {
            quadratic: 0.6,
            constant: 0.4,
            variant,
        }
    }

    /// α(x₁) = 0.75 x₁² + 0.25.
    pub fn experiment3(variant: DeformationVariant) -> Self {
        AxialSqueeze {
            quadratic: 0.75,
            constant: 0.25,
            variant,
        }
    }

    pub fn alpha(&self, x1: f64) -> f64 {
        self.quadratic * x1 * x1 + self.constant
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let a = self.alpha(x[0]);
        match self.variant {
            DeformationVariant::Printed => vec![x[0], a * x[1], a * x[1]],
            DeformationVariant::Corrected => vec![x[0], a * x[1], a * x[2]],
        }
    }
}

pub fn mesh_stats(mesh: &SurfaceMesh) -> MeshStats {
    let mut h_max = 0.0f64;
    let mut h_min = f64::INFINITY;
    let mut r_min = f64::INFINITY;
    for t in 0..mesh.n_simplices() {
        let h = mesh.simplex_diameter(t);
        h_max = h_max.max(h);
        h_min = h_min.min(h);
        r_min = r_min.min(mesh.simplex_inradius(t));
    }
    MeshStats {
        h_max,
        h_min,
        min_radius_ratio: r_min / h_max,
        n_vertices: mesh.n_vertices(),
        n_simplices: mesh.n_simplices(),
    }
}

fn local_edges(s: &[usize]) -> impl Iterator<Item = (usize, usize)> + '_ {
    let k = s.len();
    let count = if k == 2 { 1 } else { k };
    (0..count).map(move |r| (s[r], s[(r + 1) % k]))
}

fn sorted_pair(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

pub(crate) fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm(a: &[f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    norm(&sub(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn equilateral_pillow() -> SurfaceMesh {
        let h = 3f64.sqrt() / 2.0;
        SurfaceMesh::from_triangles(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, h, 0.0]],
            vec![[0, 1, 2], [0, 2, 1]],
        )
        .unwrap()
    }

    #[test]
    fn octahedron_counts() {
        let m = octahedron();
        assert_eq!(m.n_vertices(), 6);
        assert_eq!(m.n_simplices(), 8);
        assert_eq!(m.edges().len(), 12);
        for i in 0..6 {
            let v = m.vertex(i);
            assert_eq!(v.iter().map(|x| x * x).sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn octahedron_is_outward_oriented() {
        let m = octahedron();
        for s in m.simplices() {
            let (a, b, c) = (m.vertex_padded(s[0]), m.vertex_padded(s[1]), m.vertex_padded(s[2]));
            let n = cross(&sub(&b, &a), &sub(&c, &a));
            assert!(dot(&n, &a) > 0.0);
        }
    }

    #[test]
    fn octahedron_edge_lengths_are_sqrt2() {
        let m = octahedron();
        let stats = m.stats();
        // direct enumeration over edges
        for [a, b] in m.edges() {
            let d = dist(&m.vertex_padded(a), &m.vertex_padded(b));
            assert_eq!(d, 2f64.sqrt());
        }
        assert_eq!(stats.h_max, 2f64.sqrt());
        assert_eq!(stats.h_min, 2f64.sqrt());
    }

    #[test]
    fn equilateral_radius_ratio() {
        let m = equilateral_pillow();
        let s = m.stats();
        let expected = 1.0 / (2.0 * 3f64.sqrt());
        assert!((s.h_max - 1.0).abs() < 1e-15);
        assert!((s.min_radius_ratio - expected).abs() < 1e-15);
    }

    #[test]
    fn one_projected_refinement() {
        let m = refine_global(&octahedron(), true).unwrap();
        assert_eq!(m.n_vertices(), 18);
        assert_eq!(m.n_simplices(), 32);
        for i in 0..m.n_vertices() {
            let r = norm(&m.vertex_padded(i));
            assert!((r - 1.0).abs() <= 1e-14);
        }
    }

    #[test]
    fn refinement_counts_quadruple() {
        let mut m = octahedron();
        for n in 1..=4 {
            m = refine_global(&m, true).unwrap();
            assert_eq!(m.n_simplices(), 8 * 4usize.pow(n));
            // Euler characteristic 2
            assert_eq!(
                m.n_vertices() as i64 - m.edges().len() as i64 + m.n_simplices() as i64,
                2
            );
        }
    }

    #[test]
    fn refinement_keeps_old_vertices() {
        let coarse = sphere_mesh(1).unwrap();
        let fine = refine_global(&coarse, true).unwrap();
        for i in 0..coarse.n_vertices() {
            assert_eq!(coarse.vertex(i), fine.vertex(i));
        }
    }

    #[test]
    fn unprojected_refinement_preserves_area() {
        let m = deform(&sphere_mesh(2).unwrap(), |x| vec![2.0 * x[0], x[1], 0.5 * x[2]]).unwrap();
        let r = refine_global(&m, false).unwrap();
        let (a0, a1) = (m.total_measure(), r.total_measure());
        assert!(((a1 - a0) / a0).abs() <= 1e-12);
    }

    #[test]
    fn projected_h_ratio_regression() {
        // Observed ratios for levels 1..5: 0.7071, 0.5774, 0.5222, 0.5058, 0.5015.
        let mut m = octahedron();
        let mut h = m.stats().h_max;
        for _ in 0..5 {
            m = refine_global(&m, true).unwrap();
            let h_new = m.stats().h_max;
            assert!(h_new / h <= 0.75, "ratio {}", h_new / h);
            h = h_new;
        }
    }

    #[test]
    fn circle_examples() {
        let sq = polygonal_circle(4).unwrap();
        assert!((sq.stats().h_max - 2f64.sqrt()).abs() < 1e-15);
        let hex = polygonal_circle(6).unwrap();
        assert!((hex.stats().h_max - 1.0).abs() < 1e-15);
        for k in [3, 5, 17, 64] {
            let c = polygonal_circle(k).unwrap();
            let len = c.total_measure();
            let chord = k as f64 * 2.0 * (std::f64::consts::PI / k as f64).sin();
            assert!((len - chord).abs() < 1e-12);
            assert!(len < 2.0 * std::f64::consts::PI);
        }
        assert!(polygonal_circle(2).is_err());
    }

    #[test]
    fn circle_refines_to_circle_double() {
        let c = refine_global(&polygonal_circle(8).unwrap(), true).unwrap();
        assert_eq!(c.n_vertices(), 16);
        assert_eq!(c.n_simplices(), 16);
    }

    #[test]
    fn identity_deformation_is_bitwise() {
        let m = sphere_mesh(2).unwrap();
        let d = deform(&m, |x| x.to_vec()).unwrap();
        assert_eq!(m, d);
    }

    #[test]
    fn experiment_deformations() {
        let e1 = AxialSqueeze::experiment1(DeformationVariant::Corrected);
        assert_eq!(e1.apply(&[1.0, 0.0, 0.0]), vec![1.0, 0.0, 0.0]);
        assert_eq!(e1.apply(&[-1.0, 0.0, 0.0]), vec![-1.0, 0.0, 0.0]);
        let printed = AxialSqueeze::experiment3(DeformationVariant::Printed);
        assert_eq!(printed.apply(&[0.0, 1.0, 0.0]), vec![0.0, 0.25, 0.25]);
        let corrected = AxialSqueeze::experiment3(DeformationVariant::Corrected);
        assert_eq!(corrected.apply(&[0.0, 1.0, 0.0]), vec![0.0, 0.25, 0.0]);
    }

    #[test]
    fn printed_variant_collapses_octahedron() {
        // ±e₃ both land on the origin, so the vertex positions coincide.
        let m = octahedron();
        let sq = AxialSqueeze::experiment1(DeformationVariant::Printed);
        assert!(deform(&m, |x| sq.apply(x)).is_err());
    }

    #[test]
    fn rejects_open_and_misoriented_meshes() {
        let v = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        // open: single triangle
        assert!(SurfaceMesh::from_triangles(v.clone(), vec![[0, 1, 2]]).is_err());
        // tetrahedron, consistent
        let good = vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]];
        assert!(SurfaceMesh::from_triangles(v.clone(), good).is_ok());
        // one face flipped
        let bad = vec![[0, 1, 2], [0, 1, 3], [1, 2, 3], [0, 3, 2]];
        assert!(SurfaceMesh::from_triangles(v.clone(), bad).is_err());
        // degenerate
        let flat = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        let tets = vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]];
        assert!(matches!(
            SurfaceMesh::from_triangles(flat, tets),
            Err(Error::DegenerateSimplex { .. })
        ));
    }

    #[test]
    fn rejects_pinched_vertex() {
        // Two tetrahedra sharing one vertex: closed and oriented, but the
        // shared vertex has a link made of two cycles.
        let mut v = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        v.extend([[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]]);
        let mut t = vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]];
        t.extend([[0, 4, 5], [0, 6, 4], [4, 6, 5], [0, 5, 6]]);
        let err = SurfaceMesh::from_triangles(v, t).unwrap_err();
        assert!(err.to_string().contains("link"), "{err}");
    }

    #[test]
    fn h_max_decreases_under_refinement() {
        let m = deform(&sphere_mesh(1).unwrap(), |x| vec![x[0], 2.0 * x[1], x[2]]).unwrap();
        let r = refine_global(&m, false).unwrap();
        assert!(r.stats().h_max < m.stats().h_max);
    }
}
