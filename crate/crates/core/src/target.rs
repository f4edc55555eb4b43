//! Target manifolds and their extended metrics.
//!
//! Each target is a hypersurface M ⊂ R^{n+1} together with an involution of
//! a neighbourhood whose fixed point set is M, and the Euclidean metric
//! averaged under that involution. Under the averaged metric M is totally
//! geodesic, so maps can evolve freely in the ambient space.
//!
//! * [`SphereTarget`]: the unit sphere with the inversion `x/|x|²` and the
//!   conformal metric `ρ(x)·Id`, `ρ = ½ + 1/(2|x|⁴)`.
//! * [`HypersurfaceTarget`]: a closed hypersurface given by its signed
//!   distance `d`, the reflection `x − 2d(x)Dd(x)`, and the metric
//!   `Id − 2d·D²d + 2d²·D²d·D²d`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Evaluations closer than this to the origin are refused.
pub const DEFAULT_GUARD_RADIUS: f64 = 0.1;

/// Central difference step for the metric derivative of hypersurface targets.
pub const METRIC_FD_STEP: f64 = 1e-6;

const CLOSEST_POINT_TOL: f64 = 1e-12;
const CLOSEST_POINT_MAX_ITERS: usize = 50;

/// `G` and its first derivatives at `point`; `dg[β]` holds `D_β G`.
#[derive(Debug, Clone)]
pub struct MetricEval {
    pub point: DVector<f64>,
    pub g: DMatrix<f64>,
    pub dg: Vec<DMatrix<f64>>,
}

/// Christoffel symbols, `symbols[γ][(α, β)] = Γ^γ_{αβ}`.
pub type Christoffel = Vec<DMatrix<f64>>;

/// Signed distance with first and second derivatives.
#[derive(Debug, Clone)]
pub struct DistanceEval {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereTarget {
    /// Dimension of the sphere S^n; the ambient space is R^{n+1}.
    pub n: usize,
    pub guard_radius: f64,
}

impl SphereTarget {
    pub fn new(n: usize) -> Result<Self> {
        Self::with_guard(n, DEFAULT_GUARD_RADIUS)
    }

    pub fn with_guard(n: usize, guard_radius: f64) -> Result<Self> {
        if n == 0 || n + 1 > crate::MAX_DIM {
            return Err(Error::InvalidArgument(format!("unsupported sphere S^{n}")));
        }
        if !(guard_radius > 0.0 && guard_radius < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "guard radius {guard_radius} outside (0, 1)"
            )));
        }
        Ok(SphereTarget { n, guard_radius })
    }

    pub fn ambient_dim(&self) -> usize {
        self.n + 1
    }

    fn guarded_norm(&self, x: &[f64]) -> Result<f64> {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r < self.guard_radius {
            return Err(Error::NearOrigin {
                norm: r,
                guard: self.guard_radius,
            });
        }
        Ok(r)
    }

    /// `ρ(x) = ½ + 1/(2|x|⁴)`.
    pub fn rho(&self, x: &[f64]) -> Result<f64> {
        let r = self.guarded_norm(x)?;
        Ok(0.5 + 0.5 / r.powi(4))
    }

    /// `Dρ(x) = −2x/|x|⁶`.
    pub fn drho(&self, x: &[f64]) -> Result<Vec<f64>> {
        let r = self.guarded_norm(x)?;
        let s = -2.0 / r.powi(6);
        Ok(x.iter().map(|v| s * v).collect())
    }

    /// Sphere inversion `x/|x|²`.
    pub fn inversion(&self, x: &[f64]) -> Result<Vec<f64>> {
        let r = self.guarded_norm(x)?;
        Ok(x.iter().map(|v| v / (r * r)).collect())
    }

    pub fn metric(&self, x: &[f64]) -> Result<MetricEval> {
        let rho = self.rho(x)?;
        let drho = self.drho(x)?;
        let dim = x.len();
        let id = DMatrix::identity(dim, dim);
        Ok(MetricEval {
            point: DVector::from_column_slice(x),
            g: &id * rho,
            dg: drho.iter().map(|&d| &id * d).collect(),
        })
    }

    /// Closed form `Γ^γ_{αβ} = (δ_{γβ}D_αρ + δ_{γα}D_βρ − δ_{αβ}D_γρ)/(2ρ)`.
    pub fn christoffel(&self, x: &[f64]) -> Result<Christoffel> {
        let rho = self.rho(x)?;
        let drho = self.drho(x)?;
        let dim = x.len();
        let k = 0.5 / rho;
        Ok((0..dim)
            .map(|gamma| {
                DMatrix::from_fn(dim, dim, |a, b| {
                    let mut v = 0.0;
                    if gamma == b {
                        v += drho[a];
                    }
                    if gamma == a {
                        v += drho[b];
                    }
                    if a == b {
                        v -= drho[gamma];
                    }
                    k * v
                })
            })
            .collect())
    }

    /// `σ(x) = |x| − 1` with its derivatives.
    pub fn distance(&self, x: &[f64]) -> Result<DistanceEval> {
        let r = self.guarded_norm(x)?;
        Ok(radial_distance(x, r, 1.0))
    }

    /// Closed form of `∇^G∇^G σ` for the inversion metric:
    /// `[δ(1+|x|)(1+|x|²)σ + (3−|x|⁴) Dσ⊗Dσ] / (|x|(1+|x|⁴))`.
    pub fn covariant_hessian_distance(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let r = self.guarded_norm(x)?;
        let sigma = r - 1.0;
        let nu = DVector::from_iterator(x.len(), x.iter().map(|v| v / r));
        let r4 = r.powi(4);
        let id = DMatrix::<f64>::identity(x.len(), x.len());
        let h = id * ((1.0 + r) * (1.0 + r * r) * sigma) + (&nu * nu.transpose()) * (3.0 - r4);
        Ok(h / (r * (1.0 + r4)))
    }
}

/// Built-in hypersurfaces with analytic signed distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Hypersurface {
    Sphere { dim: usize, radius: f64 },
    /// `Σ x_i²/a_i² = 1`; closest points by Newton iteration on the
    /// Lagrange multiplier.
    Ellipsoid { axes: Vec<f64> },
}

/// Form of the averaged metric. [`MetricForm::DropQuadratic`] omits the
/// `2d²·D²d·D²d` term and exists so the geometry checks can be shown to
/// catch it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MetricForm {
    #[default]
    Full,
    DropQuadratic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypersurfaceTarget {
    pub surface: Hypersurface,
    pub tube_halfwidth: f64,
    pub metric_form: MetricForm,
}

impl HypersurfaceTarget {
    /// Target with the default tube `0.4 / max|curvature|`.
    pub fn new(surface: Hypersurface) -> Result<Self> {
        let kappa = match &surface {
            Hypersurface::Sphere { dim, radius } => {
                if *dim < 2 || *dim > crate::MAX_DIM || !(*radius > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "invalid sphere (dim {dim}, radius {radius})"
                    )));
                }
                1.0 / radius
            }
            Hypersurface::Ellipsoid { axes } => {
                if axes.len() < 2 || axes.len() > crate::MAX_DIM || axes.iter().any(|a| !(*a > 0.0))
                {
                    return Err(Error::InvalidArgument(format!("invalid ellipsoid axes {axes:?}")));
                }
                let a_max = axes.iter().cloned().fold(0.0, f64::max);
                let a_min = axes.iter().cloned().fold(f64::INFINITY, f64::min);
                a_max / (a_min * a_min)
            }
        };
        Ok(HypersurfaceTarget {
            surface,
            tube_halfwidth: 0.4 / kappa,
            metric_form: MetricForm::Full,
        })
    }

    pub fn unit_sphere(dim: usize) -> Result<Self> {
        Self::new(Hypersurface::Sphere { dim, radius: 1.0 })
    }

    pub fn ellipsoid(axes: Vec<f64>) -> Result<Self> {
        Self::new(Hypersurface::Ellipsoid { axes })
    }

    pub fn with_tube_halfwidth(mut self, halfwidth: f64) -> Self {
        self.tube_halfwidth = halfwidth;
        self
    }

    pub fn with_metric_form(mut self, form: MetricForm) -> Self {
        self.metric_form = form;
        self
    }

    pub fn ambient_dim(&self) -> usize {
        match &self.surface {
            Hypersurface::Sphere { dim, .. } => *dim,
            Hypersurface::Ellipsoid { axes } => axes.len(),
        }
    }

    /// Signed distance, positive outside, without the tube check.
    pub fn distance_unchecked(&self, x: &[f64]) -> Result<DistanceEval> {
        match &self.surface {
            Hypersurface::Sphere { radius, .. } => {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if r == 0.0 {
                    return Err(Error::ClosestPointFailed { point: x.to_vec() });
                }
                Ok(radial_distance(x, r, *radius))
            }
            Hypersurface::Ellipsoid { axes } => ellipsoid_distance(axes, x),
        }
    }

    /// Signed distance with derivatives; errors outside the tube.
    pub fn distance(&self, x: &[f64]) -> Result<DistanceEval> {
        let eval = self.distance_unchecked(x)?;
        if eval.value.abs() > self.tube_halfwidth {
            return Err(Error::OutsideTube {
                distance: eval.value.abs(),
                halfwidth: self.tube_halfwidth,
            });
        }
        Ok(eval)
    }

    pub fn signed_distance(&self, x: &[f64]) -> Result<f64> {
        Ok(self.distance(x)?.value)
    }

    /// Closest point `a(x) = x − d(x)Dd(x)`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        let e = self.distance(x)?;
        Ok(x.iter()
            .zip(e.gradient.iter())
            .map(|(xi, ni)| xi - e.value * ni)
            .collect())
    }

    /// Reflection through M: `x − 2d(x)Dd(x)`.
    pub fn involution(&self, x: &[f64]) -> Result<Vec<f64>> {
        let e = self.distance(x)?;
        Ok(x.iter()
            .zip(e.gradient.iter())
            .map(|(xi, ni)| xi - 2.0 * e.value * ni)
            .collect())
    }

    fn metric_value(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let e = self.distance(x)?;
        Ok(self.metric_from_distance(&e))
    }

    fn metric_from_distance(&self, e: &DistanceEval) -> DMatrix<f64> {
        let dim = e.gradient.len();
        let h = &e.hessian;
        let mut g = DMatrix::identity(dim, dim) - h * (2.0 * e.value);
        if self.metric_form == MetricForm::Full {
            g += (h * h) * (2.0 * e.value * e.value);
        }
        g
    }

    /// `G` with central-difference `DG`.
    pub fn metric(&self, x: &[f64]) -> Result<MetricEval> {
        let g = self.metric_value(x)?;
        if g.clone().cholesky().is_none() {
            return Err(Error::MetricNotPositiveDefinite { point: x.to_vec() });
        }
        let dim = x.len();
        let mut dg = Vec::with_capacity(dim);
        let mut xp = x.to_vec();
        for beta in 0..dim {
            xp[beta] = x[beta] + METRIC_FD_STEP;
            let gp = self.metric_value(&xp)?;
            xp[beta] = x[beta] - METRIC_FD_STEP;
            let gm = self.metric_value(&xp)?;
            xp[beta] = x[beta];
            dg.push((gp - gm) / (2.0 * METRIC_FD_STEP));
        }
        Ok(MetricEval {
            point: DVector::from_column_slice(x),
            g,
            dg,
        })
    }

    pub fn christoffel(&self, x: &[f64]) -> Result<Christoffel> {
        christoffel_from_metric(&self.metric(x)?)
    }

    /// `∇^G∇^G d = D²d − Γ^γ D_γd`, computed from the Christoffel symbols.
    pub fn covariant_hessian_distance(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let e = self.distance(x)?;
        let gamma = self.christoffel(x)?;
        Ok(covariant_hessian(&e, &gamma))
    }

    /// `d·D²d·D²d`, the closed form the covariant Hessian must reduce to.
    pub fn reduced_covariant_hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let e = self.distance(x)?;
        Ok((&e.hessian * &e.hessian) * e.value)
    }
}

/// Target selector shared by the flow and the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Sphere(SphereTarget),
    Hypersurface(HypersurfaceTarget),
}

impl Target {
    pub fn unit_sphere(n: usize) -> Result<Self> {
        Ok(Target::Sphere(SphereTarget::new(n)?))
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            Target::Sphere(s) => s.ambient_dim(),
            Target::Hypersurface(h) => h.ambient_dim(),
        }
    }

    pub fn metric(&self, x: &[f64]) -> Result<MetricEval> {
        match self {
            Target::Sphere(s) => s.metric(x),
            Target::Hypersurface(h) => h.metric(x),
        }
    }

    pub fn christoffel(&self, x: &[f64]) -> Result<Christoffel> {
        match self {
            Target::Sphere(s) => s.christoffel(x),
            Target::Hypersurface(h) => h.christoffel(x),
        }
    }

    pub fn covariant_hessian_distance(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        match self {
            Target::Sphere(s) => s.covariant_hessian_distance(x),
            Target::Hypersurface(h) => h.covariant_hessian_distance(x),
        }
    }

    /// `|x| − 1` for the sphere, `d(x)` for hypersurfaces.
    pub fn signed_distance(&self, x: &[f64]) -> Result<f64> {
        match self {
            Target::Sphere(s) => Ok(s.distance(x)?.value),
            Target::Hypersurface(h) => h.signed_distance(x),
        }
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Target::Sphere(s) => {
                let r = s.guarded_norm(x)?;
                Ok(x.iter().map(|v| v / r).collect())
            }
            Target::Hypersurface(h) => h.project(x),
        }
    }

    pub fn involution(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Target::Sphere(s) => s.inversion(x),
            Target::Hypersurface(h) => h.involution(x),
        }
    }
}

/// `Γ^γ_{αβ} = ½ G^{γκ}(D_α G_{βκ} + D_β G_{ακ} − D_κ G_{αβ})`.
pub fn christoffel_from_metric(m: &MetricEval) -> Result<Christoffel> {
    let dim = m.g.nrows();
    let g_inv = m
        .g
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::MetricNotPositiveDefinite {
            point: m.point.iter().copied().collect(),
        })?;
    // lowered[κ](α, β) = ½(D_α G_{βκ} + D_β G_{ακ} − D_κ G_{αβ})
    let lowered: Vec<DMatrix<f64>> = (0..dim)
        .map(|kappa| {
            DMatrix::from_fn(dim, dim, |a, b| {
                0.5 * (m.dg[a][(b, kappa)] + m.dg[b][(a, kappa)] - m.dg[kappa][(a, b)])
            })
        })
        .collect();
    Ok((0..dim)
        .map(|gamma| {
            let mut out = DMatrix::zeros(dim, dim);
            for (kappa, low) in lowered.iter().enumerate() {
                out += low * g_inv[(gamma, kappa)];
            }
            out
        })
        .collect())
}

/// `D²σ − Γ^γ D_γσ` for a distance-like function σ.
pub fn covariant_hessian(e: &DistanceEval, gamma: &Christoffel) -> DMatrix<f64> {
    let mut h = e.hessian.clone();
    for (g, sym) in gamma.iter().enumerate() {
        h -= sym * e.gradient[g];
    }
    h
}

fn radial_distance(x: &[f64], r: f64, radius: f64) -> DistanceEval {
    let dim = x.len();
    let nu = DVector::from_iterator(dim, x.iter().map(|v| v / r));
    let hessian = (DMatrix::identity(dim, dim) - &nu * nu.transpose()) / r;
    DistanceEval {
        value: r - radius,
        gradient: nu,
        hessian,
    }
}

/// Closest point on `Σ p_i²/a_i² = 1`: `p_i = a_i² x_i/(a_i² + t)` where `t`
/// is the largest root of `F(t) = Σ (a_i x_i/(a_i² + t))² − 1`, found by
/// bracketed Newton iteration. `F` is convex and decreasing on the bracket.
fn ellipsoid_distance(axes: &[f64], x: &[f64]) -> Result<DistanceEval> {
    let dim = axes.len();
    if x.len() != dim {
        return Err(Error::InvalidArgument(format!(
            "point of dimension {} for ellipsoid in R^{dim}",
            x.len()
        )));
    }
    let fail = || Error::ClosestPointFailed { point: x.to_vec() };
    let a2: Vec<f64> = axes.iter().map(|a| a * a).collect();
    let a2_min = a2.iter().cloned().fold(f64::INFINITY, f64::min);
    let eval = |t: f64| -> (f64, f64) {
        let mut f = -1.0;
        let mut df = 0.0;
        for i in 0..dim {
            let q = axes[i] * x[i] / (a2[i] + t);
            f += q * q;
            df -= 2.0 * q * q / (a2[i] + t);
        }
        (f, df)
    };
    let xnorm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let a_max = axes.iter().cloned().fold(0.0, f64::max);
    let mut hi = a_max * xnorm;
    let mut lo = (0..dim)
        .map(|i| -a2[i] + axes[i] * x[i].abs())
        .fold(f64::NEG_INFINITY, f64::max)
        .max(-a2_min * (1.0 - 1e-12));
    if !(lo <= hi) {
        return Err(fail());
    }
    let mut t = lo;
    let mut converged = false;
    for _ in 0..CLOSEST_POINT_MAX_ITERS {
        let (f, df) = eval(t);
        if !f.is_finite() {
            return Err(fail());
        }
        if f > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        if f.abs() <= CLOSEST_POINT_TOL {
            // one more Newton step brings the root to full precision
            if df != 0.0 {
                let polished = t - f / df;
                if polished > -a2_min {
                    t = polished;
                }
            }
            converged = true;
            break;
        }
        let mut next = if df < 0.0 { t - f / df } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        t = next;
    }
    if !converged {
        return Err(fail());
    }
    let p: Vec<f64> = (0..dim).map(|i| a2[i] * x[i] / (a2[i] + t)).collect();
    let grad_phi = DVector::from_iterator(dim, (0..dim).map(|i| 2.0 * p[i] / a2[i]));
    let gnorm = grad_phi.norm();
    let nu = &grad_phi / gnorm;
    let dist = (0..dim).map(|i| (x[i] - p[i]).powi(2)).sum::<f64>().sqrt();
    let phi: f64 = (0..dim).map(|i| x[i] * x[i] / a2[i]).sum::<f64>() - 1.0;
    let value = if phi >= 0.0 { dist } else { -dist };
    // Weingarten map at p and D²d = (Id + dW)⁻¹W.
    let proj = DMatrix::identity(dim, dim) - &nu * nu.transpose();
    let hess_phi = DMatrix::from_diagonal(&DVector::from_iterator(dim, a2.iter().map(|v| 2.0 / v)));
    let w = &proj * hess_phi * &proj / gnorm;
    let inv = (DMatrix::identity(dim, dim) + &w * value)
        .try_inverse()
        .ok_or_else(fail)?;
    let mut hessian = inv * w;
    hessian = (&hessian + hessian.transpose()) * 0.5;
    Ok(DistanceEval {
        value,
        gradient: nu,
        hessian,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere() -> SphereTarget {
        SphereTarget::new(2).unwrap()
    }

    #[test]
    fn rho_examples() {
        let s = sphere();
        assert_eq!(s.rho(&[1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(s.drho(&[0.0, 1.0, 0.0]).unwrap(), vec![0.0, -2.0, 0.0]);
        assert_eq!(s.rho(&[2.0, 0.0, 0.0]).unwrap(), 17.0 / 32.0);
    }

    #[test]
    fn guard_is_enforced() {
        let s = sphere();
        let err = s.rho(&[0.05, 0.0, 0.0]).unwrap_err();
        assert!(err.to_string().contains("too close to origin"));
        assert!(s.inversion(&[0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn inversion_examples() {
        let s = sphere();
        assert_eq!(s.inversion(&[2.0, 0.0, 0.0]).unwrap(), vec![0.5, 0.0, 0.0]);
        let x = [0.6, 0.0, 0.8];
        let ix = s.inversion(&x).unwrap();
        for (a, b) in ix.iter().zip(x) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn sphere_christoffel_at_unit_norm() {
        let s = sphere();
        let x = [0.48, -0.6, 0.64];
        let g = s.christoffel(&x).unwrap();
        let d = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
        for c in 0..3 {
            for a in 0..3 {
                for b in 0..3 {
                    let expected = -(d(c, b) * x[a] + d(c, a) * x[b] - d(a, b) * x[c]);
                    assert!((g[c][(a, b)] - expected).abs() < 1e-14);
                    assert_eq!(g[c][(a, b)], g[c][(b, a)]);
                }
            }
        }
    }

    #[test]
    fn sphere_closed_forms_match_generic_path() {
        let s = sphere();
        for x in [[1.3, -0.2, 0.4], [0.3, 0.5, -0.2], [0.0, 0.0, 1.0]] {
            let closed = s.christoffel(&x).unwrap();
            let generic = christoffel_from_metric(&s.metric(&x).unwrap()).unwrap();
            for c in 0..3 {
                assert!((&closed[c] - &generic[c]).amax() < 1e-12);
            }
            let h_closed = s.covariant_hessian_distance(&x).unwrap();
            let h_generic = covariant_hessian(&s.distance(&x).unwrap(), &closed);
            assert!((h_closed - h_generic).amax() < 1e-12);
        }
    }

    #[test]
    fn sphere_hessian_on_target_is_outer_product() {
        let s = sphere();
        let x = [0.0, 0.6, 0.8];
        let h = s.covariant_hessian_distance(&x).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                assert!((h[(a, b)] - x[a] * x[b]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn hypersurface_examples() {
        let t = HypersurfaceTarget::unit_sphere(3).unwrap();
        assert!((t.tube_halfwidth - 0.4).abs() < 1e-15);
        let x = [1.2, 0.0, 0.0];
        let ix = t.involution(&x).unwrap();
        assert!((ix[0] - 0.8).abs() < 1e-15 && ix[1] == 0.0 && ix[2] == 0.0);
        let on = [0.0, 1.0, 0.0];
        assert_eq!(t.involution(&on).unwrap(), on.to_vec());
        assert!((t.metric(&on).unwrap().g - DMatrix::identity(3, 3)).amax() < 1e-15);
        assert!(t.covariant_hessian_distance(&on).unwrap().amax() < 1e-8);
        let err = t.involution(&[2.0, 0.0, 0.0]).unwrap_err();
        assert!(err.to_string().contains("outside tubular neighbourhood"));
    }

    #[test]
    fn sphere_projection_examples() {
        let t = Target::unit_sphere(2).unwrap();
        assert_eq!(t.signed_distance(&[2.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(t.project(&[2.0, 0.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn ellipsoid_reduces_to_sphere() {
        let e = HypersurfaceTarget::ellipsoid(vec![1.0, 1.0, 1.0]).unwrap();
        let s = HypersurfaceTarget::unit_sphere(3).unwrap();
        let x = [0.9, 0.3, -0.2];
        let de = e.distance(&x).unwrap();
        let ds = s.distance(&x).unwrap();
        assert!((de.value - ds.value).abs() < 1e-14);
        assert!((de.gradient - ds.gradient).amax() < 1e-14);
        assert!((de.hessian - ds.hessian).amax() < 1e-13);
    }

    #[test]
    fn ellipsoid_distance_along_axes() {
        let e = HypersurfaceTarget::ellipsoid(vec![2.0, 1.0, 1.5]).unwrap();
        // tube = 0.4 · 1² / 2 = 0.2
        assert!((e.tube_halfwidth - 0.2).abs() < 1e-15);
        let d = e.distance(&[2.1, 0.0, 0.0]).unwrap();
        assert!((d.value - 0.1).abs() < 1e-14);
        let d = e.distance(&[0.0, 0.9, 0.0]).unwrap();
        assert!((d.value + 0.1).abs() < 1e-14);
        // principal curvature at (0, 1, 0) along x₁ is b/a² = 1/4
        let on = e.distance(&[0.0, 1.0, 0.0]).unwrap();
        assert!((on.hessian[(0, 0)] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn dropped_term_breaks_appendix_identity() {
        let t = HypersurfaceTarget::unit_sphere(3)
            .unwrap()
            .with_metric_form(MetricForm::DropQuadratic);
        let x = [1.25, 0.1, 0.0];
        let lhs = t.covariant_hessian_distance(&x).unwrap();
        let rhs = t.reduced_covariant_hessian(&x).unwrap();
        assert!((lhs - rhs).amax() > 1e-4);
    }
}
