//! P1 surface finite elements on a [`SurfaceMesh`].
//!
//! Tangential gradients of the hat functions are constant per simplex and
//! cached in [`FeSpace`] together with the scalar sparsity pattern. All
//! nonlinear weights (`½ + 1/(2|f|⁴)`, `|∇f|²/|f|⁶`, metric entries) are
//! evaluated at quadrature points from the P1 interpolant of the map.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::VertexField;
use crate::mesh::{cross, dot, norm, sub, SurfaceMesh};
use crate::quadrature::{quadrature_rule, quadrature_rule_of_degree, QuadratureRule};
use crate::sparse::CsrMatrix;
use crate::target::{SphereTarget, Target, DEFAULT_GUARD_RADIUS};
use crate::MAX_DIM;

type Local = [[f64; 3]; 3];

/// Per-simplex P1 data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    /// Length or area.
    pub measure: f64,
    /// `grads[k]` is `∇_Γh φ_k` for local node `k`, padded to R³.
    pub grads: Local,
    /// Unit normal of the simplex (sign follows the orientation).
    pub normal: [f64; 3],
}

/// Tangential gradients, measure and normal of simplex `t`.
pub fn element_geometry(mesh: &SurfaceMesh, t: usize) -> Result<ElementGeometry> {
    let s = mesh.simplex(t);
    let p: Vec<[f64; 3]> = s.iter().map(|&i| mesh.vertex_padded(i)).collect();
    let degenerate = |measure| Error::DegenerateSimplex { simplex: t, measure };
    match mesh.dim_surface() {
        1 => {
            let e = sub(&p[1], &p[0]);
            let len2 = dot(&e, &e);
            let len = len2.sqrt();
            if !(len > 0.0) {
                return Err(degenerate(len));
            }
            let g1 = e.map(|c| c / len2);
            let g0 = g1.map(|c| -c);
            Ok(ElementGeometry {
                measure: len,
                grads: [g0, g1, [0.0; 3]],
                normal: [e[1] / len, -e[0] / len, 0.0],
            })
        }
        _ => {
            let e1 = sub(&p[1], &p[0]);
            let e2 = sub(&p[2], &p[0]);
            let n = cross(&e1, &e2);
            let twice_area = norm(&n);
            if !(twice_area > 0.0) {
                return Err(degenerate(0.5 * twice_area));
            }
            let unit = n.map(|c| c / twice_area);
            // ∇λ_k = (n × e_k) / |n|², with e_k the edge opposite node k
            // traversed in orientation order.
            let grad = |a: &[f64; 3], b: &[f64; 3]| {
                let edge = sub(b, a);
                cross(&n, &edge).map(|c| c / (twice_area * twice_area))
            };
            Ok(ElementGeometry {
                measure: 0.5 * twice_area,
                grads: [grad(&p[1], &p[2]), grad(&p[2], &p[0]), grad(&p[0], &p[1])],
                normal: unit,
            })
        }
    }
}

/// Block structure of a [`SparseSystem`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemLayout {
    /// One scalar `N × N` matrix shared by every component.
    ComponentDiagonal,
    /// Full `N(n+1) × N(n+1)` matrix, index `i·(n+1) + α`.
    Coupled,
}

/// Linear system of one time step: `((1/τ)M + S) f = b`.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub layout: SystemLayout,
    pub n_vertices: usize,
    pub n_components: usize,
    pub tau: f64,
    pub mass: CsrMatrix,
    pub stiffness: CsrMatrix,
    /// `(1/τ)M + S`.
    pub matrix: CsrMatrix,
    /// Vertex-major, index `i·(n+1) + α`.
    pub rhs: Vec<f64>,
}

impl SparseSystem {
    /// Entry `(iα, jβ)` of the full operator regardless of layout.
    pub fn entry(&self, i: usize, alpha: usize, j: usize, beta: usize) -> f64 {
        match self.layout {
            SystemLayout::ComponentDiagonal => {
                if alpha == beta {
                    self.matrix.get(i, j)
                } else {
                    0.0
                }
            }
            SystemLayout::Coupled => {
                let nc = self.n_components;
                self.matrix.get(i * nc + alpha, j * nc + beta)
            }
        }
    }

    /// Number of scalar unknowns.
    pub fn n_unknowns(&self) -> usize {
        self.n_vertices * self.n_components
    }

    /// `A x` on the full vertex-major vector.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self.layout {
            SystemLayout::Coupled => self.matrix.mul_vec(x),
            SystemLayout::ComponentDiagonal => {
                let nc = self.n_components;
                let mut out = vec![0.0; x.len()];
                for alpha in 0..nc {
                    let xa: Vec<f64> = x.iter().skip(alpha).step_by(nc).copied().collect();
                    let ya = self.matrix.mul_vec(&xa);
                    for (i, v) in ya.into_iter().enumerate() {
                        out[i * nc + alpha] = v;
                    }
                }
                out
            }
        }
    }
}

/// Cached P1 data for one mesh.
#[derive(Debug, Clone)]
pub struct FeSpace {
    mesh: SurfaceMesh,
    elements: Vec<ElementGeometry>,
    quadrature: QuadratureRule,
    pattern: CsrMatrix,
    /// `slots[t][k][l]`: value index of entry `(v_k, v_l)` in `pattern`.
    slots: Vec<[[usize; 3]; 3]>,
    guard: f64,
    deterministic: bool,
}

impl FeSpace {
    pub fn new(mesh: &SurfaceMesh) -> Result<Self> {
        Self::with_quadrature(mesh, quadrature_rule(mesh.dim_surface())?)
    }

    pub fn with_quadrature_degree(mesh: &SurfaceMesh, degree: usize) -> Result<Self> {
        Self::with_quadrature(mesh, quadrature_rule_of_degree(mesh.dim_surface(), degree)?)
    }

    fn with_quadrature(mesh: &SurfaceMesh, quadrature: QuadratureRule) -> Result<Self> {
        let elements = (0..mesh.n_simplices())
            .map(|t| element_geometry(mesh, t))
            .collect::<Result<Vec<_>>>()?;
        let mut rows = vec![BTreeSet::new(); mesh.n_vertices()];
        for s in mesh.simplices() {
            for &a in s {
                rows[a].extend(s.iter().copied());
            }
        }
        let pattern = CsrMatrix::from_pattern(mesh.n_vertices(), &rows);
        let slots = mesh
            .simplices()
            .map(|s| {
                let mut slot = [[0usize; 3]; 3];
                for (k, &a) in s.iter().enumerate() {
                    for (l, &b) in s.iter().enumerate() {
                        slot[k][l] = pattern.position(a, b).expect("pattern covers simplex");
                    }
                }
                slot
            })
            .collect();
        Ok(FeSpace {
            mesh: mesh.clone(),
            elements,
            quadrature,
            pattern,
            slots,
            guard: DEFAULT_GUARD_RADIUS,
            deterministic: true,
        })
    }

    /// With `false`, element contributions are merged in whatever order the
    /// worker threads finish; results then agree only up to reassociation.
    pub fn set_deterministic(&mut self, deterministic: bool) {
        self.deterministic = deterministic;
    }

    pub fn set_guard(&mut self, guard: f64) {
        self.guard = guard;
    }

    pub fn mesh(&self) -> &SurfaceMesh {
        &self.mesh
    }

    pub fn elements(&self) -> &[ElementGeometry] {
        &self.elements
    }

    pub fn quadrature(&self) -> &QuadratureRule {
        &self.quadrature
    }

    fn nodes(&self) -> usize {
        self.mesh.nodes_per_simplex()
    }

    fn check_field(&self, f: &VertexField) -> Result<()> {
        f.check_mesh(&self.mesh)
    }

    /// Nodal values of `f` on simplex `t` and its tangential Jacobian
    /// (`jac[α]` is `∇f^α`).
    fn local_field(&self, t: usize, f: &VertexField) -> (Local, Local) {
        let el = &self.elements[t];
        let mut nodal = [[0.0; 3]; 3];
        for (k, &v) in self.mesh.simplex(t).iter().enumerate() {
            nodal[k] = f.padded(v);
        }
        // Differences against node 0 (the gradients sum to zero) make the
        // Jacobian of a constant map exactly zero.
        let mut jac = [[0.0; 3]; 3];
        for alpha in 0..f.n_components() {
            for k in 1..self.nodes() {
                let diff = nodal[k][alpha] - nodal[0][alpha];
                for c in 0..3 {
                    jac[alpha][c] += diff * el.grads[k][c];
                }
            }
        }
        (nodal, jac)
    }

    fn at_point(&self, nodal: &Local, lambda: &[f64; 3]) -> [f64; 3] {
        let mut x = [0.0; 3];
        for k in 0..self.nodes() {
            for c in 0..3 {
                x[c] += lambda[k] * nodal[k][c];
            }
        }
        x
    }

    fn guarded_norm2(&self, t: usize, x: &[f64; 3]) -> Result<f64> {
        let r2 = dot(x, x);
        if !(r2.sqrt() >= self.guard) {
            return Err(Error::GuardViolation {
                simplex: t,
                norm: r2.sqrt(),
                guard: self.guard,
            });
        }
        Ok(r2)
    }

    /// Computes a per-element quantity for every simplex and folds it into
    /// an accumulator, in element order when deterministic.
    fn accumulate<T, A>(
        &self,
        compute: impl Fn(usize) -> Result<T> + Sync,
        init: impl Fn() -> A + Sync,
        merge: impl Fn(&mut A, usize, &T) + Sync,
        combine: impl Fn(A, A) -> A + Sync + Send,
    ) -> Result<A>
    where
        T: Send,
        A: Send,
    {
        let n = self.mesh.n_simplices();
        if self.deterministic {
            let locals = (0..n)
                .into_par_iter()
                .map(&compute)
                .collect::<Result<Vec<T>>>()?;
            let mut acc = init();
            for (t, local) in locals.iter().enumerate() {
                merge(&mut acc, t, local);
            }
            Ok(acc)
        } else {
            (0..n)
                .into_par_iter()
                .try_fold(&init, |mut acc, t| {
                    let local = compute(t)?;
                    merge(&mut acc, t, &local);
                    Ok(acc)
                })
                .try_reduce(&init, |a, b| Ok(combine(a, b)))
        }
    }

    /// Integral of a per-element scalar, summed in element order.
    fn integrate(&self, compute: impl Fn(usize) -> Result<f64> + Sync) -> Result<f64> {
        self.accumulate(compute, || 0.0, |acc, _, v| *acc += v, |a, b| a + b)
    }

    /// Vertex-major vector assembled from per-element nodal contributions.
    fn assemble_vector(
        &self,
        nc: usize,
        compute: impl Fn(usize) -> Result<Local> + Sync,
    ) -> Result<Vec<f64>> {
        let len = self.mesh.n_vertices() * nc;
        self.accumulate(
            compute,
            || vec![0.0; len],
            |acc, t, local| {
                for (k, &v) in self.mesh.simplex(t).iter().enumerate() {
                    for alpha in 0..nc {
                        acc[v * nc + alpha] += local[k][alpha];
                    }
                }
            },
            add_vecs,
        )
    }

    /// Sphere-target step system with weights frozen at `f_prev`.
    pub fn assemble_step_system(
        &self,
        f_prev: &VertexField,
        tau: f64,
        target: &SphereTarget,
    ) -> Result<SparseSystem> {
        self.check_field(f_prev)?;
        check_tau(tau)?;
        let nc = f_prev.n_components();
        if nc != target.ambient_dim() {
            return Err(Error::InvalidArgument(format!(
                "map has {nc} components, target lives in R^{}",
                target.ambient_dim()
            )));
        }
        let nodes = self.nodes();
        let compute = |t: usize| -> Result<(Local, Local, Local)> {
            let el = &self.elements[t];
            let (nodal, jac) = self.local_field(t, f_prev);
            let grad2: f64 = jac.iter().map(|g| dot(g, g)).sum();
            let mut mass = [[0.0; 3]; 3];
            let mut react = [[0.0; 3]; 3];
            let mut rho_mean = 0.0;
            for (lambda, w) in self.quadrature.iter() {
                let x = self.at_point(&nodal, lambda);
                let r2 = self.guarded_norm2(t, &x)?;
                let r4 = r2 * r2;
                let rho = 0.5 + 0.5 / r4;
                let reaction = grad2 / (r4 * r2);
                let wm = w * el.measure;
                rho_mean += w * rho;
                for k in 0..nodes {
                    for l in 0..nodes {
                        let ll = lambda[k] * lambda[l] * wm;
                        mass[k][l] += rho * ll;
                        react[k][l] += reaction * ll;
                    }
                }
            }
            let mut stiff = [[0.0; 3]; 3];
            for k in 0..nodes {
                for l in 0..nodes {
                    stiff[k][l] = rho_mean * el.measure * dot(&el.grads[k], &el.grads[l]);
                }
            }
            let mut rhs = [[0.0; 3]; 3];
            for k in 0..nodes {
                for l in 0..nodes {
                    let c = mass[k][l] / tau + react[k][l];
                    for alpha in 0..nc {
                        rhs[k][alpha] += c * nodal[l][alpha];
                    }
                }
            }
            Ok((mass, stiff, rhs))
        };
        let n_vertices = self.mesh.n_vertices();
        let (mass, stiffness, rhs) = self.accumulate(
            compute,
            || {
                (
                    self.pattern.zeros_like(),
                    self.pattern.zeros_like(),
                    vec![0.0; n_vertices * nc],
                )
            },
            |(m, s, b), t, (ml, sl, bl)| {
                let slot = &self.slots[t];
                let (mv, sv) = (m.values_mut(), s.values_mut());
                for k in 0..nodes {
                    for l in 0..nodes {
                        mv[slot[k][l]] += ml[k][l];
                        sv[slot[k][l]] += sl[k][l];
                    }
                }
                for (k, &v) in self.mesh.simplex(t).iter().enumerate() {
                    for alpha in 0..nc {
                        b[v * nc + alpha] += bl[k][alpha];
                    }
                }
            },
            |(m1, s1, b1), (m2, s2, b2)| {
                (
                    m1.linear_combination(1.0, &m2, 1.0),
                    s1.linear_combination(1.0, &s2, 1.0),
                    add_vecs(b1, b2),
                )
            },
        )?;
        let matrix = mass.linear_combination(1.0 / tau, &stiffness, 1.0);
        Ok(SparseSystem {
            layout: SystemLayout::ComponentDiagonal,
            n_vertices,
            n_components: nc,
            tau,
            mass,
            stiffness,
            matrix,
            rhs,
        })
    }

    /// Component-coupled step system for an arbitrary target metric, with
    /// `G` and `DG` evaluated at the quadrature points of `f_prev`.
    pub fn assemble_general_system(
        &self,
        f_prev: &VertexField,
        tau: f64,
        target: &Target,
    ) -> Result<SparseSystem> {
        self.check_field(f_prev)?;
        check_tau(tau)?;
        let nc = f_prev.n_components();
        if nc != target.ambient_dim() {
            return Err(Error::InvalidArgument(format!(
                "map has {nc} components, target lives in R^{}",
                target.ambient_dim()
            )));
        }
        let nodes = self.nodes();
        let n_vertices = self.mesh.n_vertices();
        // local[k][l][α][β]
        type Block = [[[[f64; 3]; 3]; 3]; 3];
        let compute = |t: usize| -> Result<(Box<Block>, Box<Block>, Local)> {
            let el = &self.elements[t];
            let (nodal, jac) = self.local_field(t, f_prev);
            let mut mass: Box<Block> = Box::default();
            let mut stiff: Box<Block> = Box::default();
            let mut reaction = [[0.0; 3]; 3];
            for (lambda, w) in self.quadrature.iter() {
                let x = self.at_point(&nodal, lambda);
                self.guarded_norm2(t, &x)?;
                let m = target.metric(&x[..nc])?;
                let wm = w * el.measure;
                // −½ D_βG_{κι} ∇f^κ·∇f^ι
                let mut force = [0.0; 3];
                for (beta, f) in force.iter_mut().enumerate().take(nc) {
                    let mut s = 0.0;
                    for kappa in 0..nc {
                        for iota in 0..nc {
                            s += m.dg[beta][(kappa, iota)] * dot(&jac[kappa], &jac[iota]);
                        }
                    }
                    *f = -0.5 * s;
                }
                for k in 0..nodes {
                    for beta in 0..nc {
                        reaction[k][beta] += wm * lambda[k] * force[beta];
                    }
                    for l in 0..nodes {
                        let ll = lambda[k] * lambda[l] * wm;
                        let gg = dot(&el.grads[k], &el.grads[l]) * wm;
                        for a in 0..nc {
                            for b in 0..nc {
                                mass[k][l][a][b] += m.g[(a, b)] * ll;
                                stiff[k][l][a][b] += m.g[(a, b)] * gg;
                            }
                        }
                    }
                }
            }
            let mut rhs = reaction;
            for k in 0..nodes {
                for l in 0..nodes {
                    for a in 0..nc {
                        for b in 0..nc {
                            rhs[k][a] += mass[k][l][a][b] * nodal[l][b] / tau;
                        }
                    }
                }
            }
            Ok((mass, stiff, rhs))
        };
        let mut rows = vec![BTreeSet::new(); n_vertices * nc];
        for i in 0..n_vertices {
            for (j, _) in self.pattern.row(i) {
                for a in 0..nc {
                    rows[i * nc + a].extend((0..nc).map(|b| j * nc + b));
                }
            }
        }
        let pattern = CsrMatrix::from_pattern(n_vertices * nc, &rows);
        let (mass, stiffness, rhs) = self.accumulate(
            compute,
            || {
                (
                    pattern.zeros_like(),
                    pattern.zeros_like(),
                    vec![0.0; n_vertices * nc],
                )
            },
            |(m, s, b), t, (ml, sl, bl)| {
                let simplex = self.mesh.simplex(t);
                for (k, &vi) in simplex.iter().enumerate() {
                    for (l, &vj) in simplex.iter().enumerate() {
                        for a in 0..nc {
                            for c in 0..nc {
                                m.add(vi * nc + a, vj * nc + c, ml[k][l][a][c]);
                                s.add(vi * nc + a, vj * nc + c, sl[k][l][a][c]);
                            }
                        }
                    }
                    for a in 0..nc {
                        b[vi * nc + a] += bl[k][a];
                    }
                }
            },
            |(m1, s1, b1), (m2, s2, b2)| {
                (
                    m1.linear_combination(1.0, &m2, 1.0),
                    s1.linear_combination(1.0, &s2, 1.0),
                    add_vecs(b1, b2),
                )
            },
        )?;
        let matrix = mass.linear_combination(1.0 / tau, &stiffness, 1.0);
        Ok(SparseSystem {
            layout: SystemLayout::Coupled,
            n_vertices,
            n_components: nc,
            tau,
            mass,
            stiffness,
            matrix,
            rhs,
        })
    }

    /// `E_h(f) = ½ ∫ |∇f|² (½ + 1/(2|f|⁴))`.
    pub fn discrete_energy(&self, f: &VertexField) -> Result<f64> {
        self.check_field(f)?;
        self.integrate(|t| {
            let el = &self.elements[t];
            let (nodal, jac) = self.local_field(t, f);
            let grad2: f64 = jac.iter().map(|g| dot(g, g)).sum();
            let mut acc = 0.0;
            for (lambda, w) in self.quadrature.iter() {
                let r2 = self.guarded_norm2(t, &self.at_point(&nodal, lambda))?;
                acc += w * (0.5 + 0.5 / (r2 * r2));
            }
            Ok(0.5 * grad2 * acc * el.measure)
        })
    }

    /// `½ ∫ G_{αβ}(f) ∇f^α·∇f^β` for an arbitrary target.
    pub fn metric_energy(&self, f: &VertexField, target: &Target) -> Result<f64> {
        self.check_field(f)?;
        let nc = f.n_components();
        self.integrate(|t| {
            let el = &self.elements[t];
            let (nodal, jac) = self.local_field(t, f);
            let mut acc = 0.0;
            for (lambda, w) in self.quadrature.iter() {
                let x = self.at_point(&nodal, lambda);
                self.guarded_norm2(t, &x)?;
                let g = match target {
                    Target::Sphere(s) => {
                        let rho = s.rho(&x[..nc])?;
                        acc += w * rho * jac.iter().map(|g| dot(g, g)).sum::<f64>();
                        continue;
                    }
                    Target::Hypersurface(_) => target.metric(&x[..nc])?.g,
                };
                let mut s = 0.0;
                for a in 0..nc {
                    for b in 0..nc {
                        s += g[(a, b)] * dot(&jac[a], &jac[b]);
                    }
                }
                acc += w * s;
            }
            Ok(0.5 * acc * el.measure)
        })
    }

    /// `E'_h(f)(φ_i e_α)` for every basis function, vertex-major.
    pub fn first_variation(&self, f: &VertexField) -> Result<Vec<f64>> {
        self.first_variation_signed(f, 1.0)
    }

    /// First variation with the reaction term scaled by `reaction_sign`;
    /// `-1.0` is the mutation the variation checks must catch.
    pub(crate) fn first_variation_signed(
        &self,
        f: &VertexField,
        reaction_sign: f64,
    ) -> Result<Vec<f64>> {
        self.check_field(f)?;
        let nc = f.n_components();
        let nodes = self.nodes();
        self.assemble_vector(nc, |t| {
            let el = &self.elements[t];
            let (nodal, jac) = self.local_field(t, f);
            let grad2: f64 = jac.iter().map(|g| dot(g, g)).sum();
            let mut local = [[0.0; 3]; 3];
            let mut rho_mean = 0.0;
            for (lambda, w) in self.quadrature.iter() {
                let x = self.at_point(&nodal, lambda);
                let r2 = self.guarded_norm2(t, &x)?;
                rho_mean += w * (0.5 + 0.5 / (r2 * r2));
                let react = reaction_sign * w * el.measure * grad2 / (r2 * r2 * r2);
                for k in 0..nodes {
                    for alpha in 0..nc {
                        local[k][alpha] -= react * x[alpha] * lambda[k];
                    }
                }
            }
            for k in 0..nodes {
                for alpha in 0..nc {
                    local[k][alpha] += rho_mean * el.measure * dot(&jac[alpha], &el.grads[k]);
                }
            }
            Ok(local)
        })
    }

    /// `E''_h(f)(ψ, ψ)`.
    pub fn second_variation_apply(&self, f: &VertexField, psi: &VertexField) -> Result<f64> {
        self.check_field(f)?;
        self.check_field(psi)?;
        if psi.n_components() != f.n_components() {
            return Err(Error::InvalidArgument("ψ and f differ in components".into()));
        }
        self.integrate(|t| {
            let el = &self.elements[t];
            let (f_nodal, f_jac) = self.local_field(t, f);
            let (p_nodal, p_jac) = self.local_field(t, psi);
            let grad_f2: f64 = f_jac.iter().map(|g| dot(g, g)).sum();
            let grad_p2: f64 = p_jac.iter().map(|g| dot(g, g)).sum();
            let grad_fp: f64 = f_jac.iter().zip(&p_jac).map(|(a, b)| dot(a, b)).sum();
            let mut acc = 0.0;
            for (lambda, w) in self.quadrature.iter() {
                let x = self.at_point(&f_nodal, lambda);
                let p = self.at_point(&p_nodal, lambda);
                let r2 = self.guarded_norm2(t, &x)?;
                let r6 = r2 * r2 * r2;
                let fp = dot(&x, &p);
                acc += w
                    * (grad_p2 * (0.5 + 0.5 / (r2 * r2)) - 4.0 * grad_fp * fp / r6
                        - grad_f2 * dot(&p, &p) / r6
                        + 6.0 * grad_f2 * fp * fp / (r6 * r2));
            }
            Ok(acc * el.measure)
        })
    }

    /// Direct and decomposed values of the bilinear form
    /// `b(ψ, ψ) = ∫ |∇ψ|² − 4(∇f:∇ψ)(f·ψ) − |∇f|²|ψ|² + 6|∇f|²(f·ψ)²`
    /// for maps into S¹, where the decomposition is
    /// `∫ |∇ψ_ν|² + |∇ψ_τ|² + 2|∇f|²ψ_ν²` with `ψ_ν = ψ·f`, `ψ_τ = ψ·f^⊥`.
    pub fn bilinear_b(&self, f: &VertexField, psi: &VertexField) -> Result<(f64, f64)> {
        self.check_field(f)?;
        self.check_field(psi)?;
        if self.mesh.dim_surface() != 1 || f.n_components() != 2 || psi.n_components() != 2 {
            return Err(Error::InvalidArgument(
                "bilinear form b needs a curve mesh and maps into R²".into(),
            ));
        }
        let (b, dec) = self.accumulate(
            |t| {
                let el = &self.elements[t];
                let (f_nodal, f_jac) = self.local_field(t, f);
                let (p_nodal, p_jac) = self.local_field(t, psi);
                let grad_f2: f64 = f_jac.iter().map(|g| dot(g, g)).sum();
                let grad_p2: f64 = p_jac.iter().map(|g| dot(g, g)).sum();
                let grad_fp: f64 = f_jac.iter().zip(&p_jac).map(|(a, b)| dot(a, b)).sum();
                let perp_jac = [f_jac[1].map(|c| -c), f_jac[0]];
                let (mut b, mut dec) = (0.0, 0.0);
                for (lambda, w) in self.quadrature.iter() {
                    let fx = self.at_point(&f_nodal, lambda);
                    let px = self.at_point(&p_nodal, lambda);
                    let fp = dot(&fx, &px);
                    b += w
                        * (grad_p2 - 4.0 * grad_fp * fp - grad_f2 * dot(&px, &px)
                            + 6.0 * grad_f2 * fp * fp);
                    let perp = [-fx[1], fx[0]];
                    let mut grad_nu = [0.0; 3];
                    let mut grad_tau = [0.0; 3];
                    for c in 0..3 {
                        for a in 0..2 {
                            grad_nu[c] += p_jac[a][c] * fx[a] + f_jac[a][c] * px[a];
                            grad_tau[c] += p_jac[a][c] * perp[a] + perp_jac[a][c] * px[a];
                        }
                    }
                    dec += w
                        * (dot(&grad_nu, &grad_nu)
                            + dot(&grad_tau, &grad_tau)
                            + 2.0 * grad_f2 * fp * fp);
                }
                Ok((b * el.measure, dec * el.measure))
            },
            || (0.0, 0.0),
            |acc, _, v| {
                acc.0 += v.0;
                acc.1 += v.1;
            },
            |a, b| (a.0 + b.0, a.1 + b.1),
        )?;
        Ok((b, dec))
    }

    /// Discrete H¹ distance between `f_h` and `exact`, using the radial
    /// projection `x/|x|` as the lift from Γ_h to the sphere/circle:
    /// `√(‖f_h − f∘π‖²_{L²} + ‖∇(f_h − I_h(f∘π))‖²_{L²})`.
    pub fn h1_error<F>(&self, f_h: &VertexField, exact: F) -> Result<f64>
    where
        F: Fn(&[f64]) -> Vec<f64> + Sync,
    {
        self.check_field(f_h)?;
        let dim = self.mesh.dim_ambient();
        let nc = f_h.n_components();
        let lift = |x: &[f64]| -> Vec<f64> {
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let p: Vec<f64> = x.iter().map(|v| v / r).collect();
            exact(&p)
        };
        let interp = VertexField::interpolate(&self.mesh, nc, |x| lift(x))?;
        let diff = f_h.axpy(-1.0, &interp);
        let total = self.integrate(|t| {
            let el = &self.elements[t];
            let (f_nodal, _) = self.local_field(t, f_h);
            let (_, d_jac) = self.local_field(t, &diff);
            let mut l2 = 0.0;
            let mut xs = [[0.0; 3]; 3];
            for (k, &v) in self.mesh.simplex(t).iter().enumerate() {
                xs[k] = self.mesh.vertex_padded(v);
            }
            for (lambda, w) in self.quadrature.iter() {
                let x = self.at_point(&xs, lambda);
                let fx = self.at_point(&f_nodal, lambda);
                let ex = lift(&x[..dim]);
                l2 += w * (0..nc).map(|a| (fx[a] - ex[a]).powi(2)).sum::<f64>();
            }
            let grad2: f64 = d_jac.iter().map(|g| dot(g, g)).sum();
            Ok((l2 + grad2) * el.measure)
        })?;
        Ok(total.sqrt())
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("time step {tau} must be positive")));
    }
    Ok(())
}

fn add_vecs(mut a: Vec<f64>, b: Vec<f64>) -> Vec<f64> {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
    a
}

const _: () = assert!(MAX_DIM == 3);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{octahedron, polygonal_circle, sphere_mesh, SurfaceMesh};

    fn right_triangle_pillow() -> SurfaceMesh {
        SurfaceMesh::from_triangles(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2], [0, 2, 1]],
        )
        .unwrap()
    }

    /// Solve for the affine hat functions directly: rows (v_j − v_0)·∇φ_i
    /// and ν·∇φ_i = 0.
    fn gradient_oracle(p: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
        use nalgebra::{Matrix3, Vector3};
        let e1 = Vector3::from(p[1]) - Vector3::from(p[0]);
        let e2 = Vector3::from(p[2]) - Vector3::from(p[0]);
        let n = e1.cross(&e2);
        let a = Matrix3::from_rows(&[e1.transpose(), e2.transpose(), n.transpose()]);
        let inv = a.try_inverse().unwrap();
        let mut out = [[0.0; 3]; 3];
        for (i, rhs) in [[-1.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]].iter().enumerate() {
            let g = inv * Vector3::from(*rhs);
            out[i] = [g[0], g[1], g[2]];
        }
        out
    }

    #[test]
    fn right_triangle_gradients() {
        let m = right_triangle_pillow();
        let el = element_geometry(&m, 0).unwrap();
        assert_eq!(el.grads[0], [-1.0, -1.0, 0.0]);
        assert_eq!(el.grads[1], [1.0, 0.0, 0.0]);
        assert_eq!(el.grads[2], [0.0, 1.0, 0.0]);
        assert_eq!(el.measure, 0.5);
    }

    #[test]
    fn gradients_match_linear_solve_and_are_tangential() {
        let m = sphere_mesh(2).unwrap();
        for t in 0..m.n_simplices() {
            let el = element_geometry(&m, t).unwrap();
            let s = m.simplex(t);
            let p = [m.vertex_padded(s[0]), m.vertex_padded(s[1]), m.vertex_padded(s[2])];
            let oracle = gradient_oracle(p);
            let mut sum = [0.0; 3];
            for k in 0..3 {
                for c in 0..3 {
                    assert!((el.grads[k][c] - oracle[k][c]).abs() < 1e-12);
                    sum[c] += el.grads[k][c];
                }
                assert!(dot(&el.grads[k], &el.normal).abs() < 1e-12);
                for j in 0..3 {
                    let val = dot(&el.grads[k], &sub(&p[j], &p[0]));
                    let expected = if k == j { 1.0 } else { 0.0 } - if k == 0 { 1.0 } else { 0.0 };
                    assert!((val - expected).abs() < 1e-12);
                }
            }
            assert!(norm(&sum) < 1e-12);
        }
    }

    #[test]
    fn translation_leaves_gradients_unchanged() {
        let m = sphere_mesh(1).unwrap();
        let shifted = crate::mesh::deform(&m, |x| vec![x[0] + 3.0, x[1] - 1.0, x[2] + 0.5]).unwrap();
        for t in 0..m.n_simplices() {
            let a = element_geometry(&m, t).unwrap();
            let b = element_geometry(&shifted, t).unwrap();
            for k in 0..3 {
                for c in 0..3 {
                    assert!((a.grads[k][c] - b.grads[k][c]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn segment_gradients() {
        let m = polygonal_circle(4).unwrap();
        let el = element_geometry(&m, 0).unwrap();
        // segment from (1,0) to (0,1)
        assert!((el.measure - 2f64.sqrt()).abs() < 1e-15);
        assert!((el.grads[1][0] + 0.5).abs() < 1e-15 && (el.grads[1][1] - 0.5).abs() < 1e-15);
        assert!(dot(&el.grads[1], &el.normal).abs() < 1e-15);
    }

    #[test]
    fn constant_unit_map_gives_plain_matrices() {
        let m = right_triangle_pillow();
        let fe = FeSpace::new(&m).unwrap();
        let f = VertexField::constant(3, &[0.0, 0.0, 1.0]);
        let target = SphereTarget::new(2).unwrap();
        let sys = fe.assemble_step_system(&f, 0.1, &target).unwrap();
        // Two coincident triangles: the P1 mass matrix doubles.
        let area = 0.5;
        for i in 0..3 {
            for j in 0..3 {
                let expected = 2.0 * area / 12.0 * if i == j { 2.0 } else { 1.0 };
                assert!((sys.mass.get(i, j) - expected).abs() < 1e-15);
            }
        }
        for s in sys.stiffness.row_sums() {
            assert!(s.abs() < 1e-15);
        }
        // b = (1/τ) M f_old
        for i in 0..3 {
            for a in 0..3 {
                let mut expected = 0.0;
                for j in 0..3 {
                    expected += sys.mass.get(i, j) / 0.1 * f.get(j)[a];
                }
                assert!((sys.rhs[i * 3 + a] - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn step_matrix_is_symmetric_positive_definite() {
        let m = sphere_mesh(2).unwrap();
        let fe = FeSpace::new(&m).unwrap();
        let f = VertexField::identity(&m).map_values(|x| vec![1.1 * x[0], x[1], 0.9 * x[2]]).unwrap();
        let sys = fe.assemble_step_system(&f, 1e-3, &SphereTarget::new(2).unwrap()).unwrap();
        assert!(sys.matrix.asymmetry() <= 1e-13);
        let eig = sys.matrix.to_dense().symmetric_eigenvalues();
        assert!(eig.min() > 0.0);
    }

    #[test]
    fn guard_violation_names_simplex() {
        let m = octahedron();
        let fe = FeSpace::new(&m).unwrap();
        let f = VertexField::constant(6, &[0.01, 0.0, 0.0]);
        let err = fe.discrete_energy(&f).unwrap_err();
        assert!(matches!(err, Error::GuardViolation { simplex: 0, .. }), "{err}");
    }

    #[test]
    fn constant_map_has_zero_energy_and_gradient() {
        let m = sphere_mesh(1).unwrap();
        let fe = FeSpace::new(&m).unwrap();
        let f = VertexField::constant(m.n_vertices(), &[0.3, 0.4, 1.2]);
        assert_eq!(fe.discrete_energy(&f).unwrap(), 0.0);
        assert!(fe.first_variation(&f).unwrap().iter().all(|v| v.abs() < 1e-15));
        let zero = VertexField::zeros(m.n_vertices(), 3);
        assert_eq!(fe.second_variation_apply(&f, &zero).unwrap(), 0.0);
    }

    #[test]
    fn second_variation_at_constant_unit_map_is_dirichlet() {
        let m = sphere_mesh(1).unwrap();
        let fe = FeSpace::new(&m).unwrap();
        let f = VertexField::constant(m.n_vertices(), &[0.0, 1.0, 0.0]);
        let psi = VertexField::identity(&m).map_values(|x| vec![x[0] * x[1], x[2], 1.0]).unwrap();
        let dirichlet: f64 = (0..m.n_simplices())
            .map(|t| {
                let (_, jac) = fe.local_field(t, &psi);
                fe.elements[t].measure * jac.iter().map(|g| dot(g, g)).sum::<f64>()
            })
            .sum();
        let e2 = fe.second_variation_apply(&f, &psi).unwrap();
        assert!((e2 - dirichlet).abs() < 1e-13 * dirichlet);
    }

    #[test]
    fn general_assembly_reduces_to_sphere_assembly() {
        let m = sphere_mesh(2).unwrap();
        let fe = FeSpace::new(&m).unwrap();
        let f = VertexField::identity(&m).map_values(|x| vec![1.2 * x[0], x[1], 0.8 * x[2]]).unwrap();
        let sphere = SphereTarget::new(2).unwrap();
        let a = fe.assemble_step_system(&f, 1e-3, &sphere).unwrap();
        let b = fe.assemble_general_system(&f, 1e-3, &Target::Sphere(sphere)).unwrap();
        let n = m.n_vertices();
        let mut worst = 0.0f64;
        for i in 0..n {
            for (j, _) in a.matrix.row(i) {
                for al in 0..3 {
                    for be in 0..3 {
                        worst = worst.max((a.entry(i, al, j, be) - b.entry(i, al, j, be)).abs());
                    }
                }
            }
        }
        for (x, y) in a.rhs.iter().zip(&b.rhs) {
            worst = worst.max((x - y).abs());
        }
        assert!(worst <= 1e-12, "max difference {worst}");
    }

    #[test]
    fn parallel_merge_matches_ordered_merge() {
        let m = sphere_mesh(3).unwrap();
        let mut fe = FeSpace::new(&m).unwrap();
        let f = VertexField::identity(&m);
        let sphere = SphereTarget::new(2).unwrap();
        let a = fe.assemble_step_system(&f, 1e-3, &sphere).unwrap();
        fe.set_deterministic(false);
        let b = fe.assemble_step_system(&f, 1e-3, &sphere).unwrap();
        for (x, y) in a.matrix.values().iter().zip(b.matrix.values()) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
        for (x, y) in a.rhs.iter().zip(&b.rhs) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn b_form_with_constant_map_is_dirichlet() {
        let m = polygonal_circle(12).unwrap();
        let fe = FeSpace::new(&m).unwrap();
        let f = VertexField::constant(12, &[0.6, 0.8]);
        let psi = VertexField::interpolate(&m, 2, |x| vec![x[0] * x[0], x[1] + 0.3]).unwrap();
        let (b, dec) = fe.bilinear_b(&f, &psi).unwrap();
        let dirichlet: f64 = (0..m.n_simplices())
            .map(|t| {
                let (_, jac) = fe.local_field(t, &psi);
                fe.elements[t].measure * jac.iter().map(|g| dot(g, g)).sum::<f64>()
            })
            .sum();
        assert!((b - dirichlet).abs() < 1e-13 * dirichlet);
        assert!((dec - dirichlet).abs() < 1e-13 * dirichlet);
    }

    #[test]
    fn b_form_rejects_surfaces() {
        let m = octahedron();
        let fe = FeSpace::new(&m).unwrap();
        let f = VertexField::identity(&m);
        assert!(fe.bilinear_b(&f, &f).is_err());
    }

    #[test]
    fn h1_error_of_interpolant_has_no_gradient_part() {
        let m = sphere_mesh(2).unwrap();
        let fe = FeSpace::new(&m).unwrap();
        let f = VertexField::identity(&m);
        let e = fe.h1_error(&f, |x| x.to_vec()).unwrap();
        // pure L² interpolation error: |x − x/|x|| at quadrature points
        let l2: f64 = (0..m.n_simplices())
            .map(|t| {
                let (nodal, _) = fe.local_field(t, &f);
                fe.quadrature
                    .iter()
                    .map(|(l, w)| {
                        let x = fe.at_point(&nodal, l);
                        let r = norm(&x);
                        w * (1.0 - r).powi(2)
                    })
                    .sum::<f64>()
                    * fe.elements[t].measure
            })
            .sum::<f64>()
            .sqrt();
        assert!((e - l2).abs() < 1e-14);
        let c = VertexField::constant(m.n_vertices(), &[0.0, 0.0, 1.0]);
        assert!(fe.h1_error(&c, |_| vec![0.0, 0.0, 1.0]).unwrap() < 1e-14);
    }
}
