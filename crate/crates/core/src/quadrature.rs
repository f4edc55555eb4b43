//! Quadrature on reference simplices in barycentric coordinates.
//!
//! Weights are normalized to sum to one, so `Σ w_q f(λ_q)` approximates the
//! mean of `f` over the simplex; multiply by the simplex measure to integrate.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    dim: usize,
    degree: usize,
    /// Barycentric coordinates, `dim + 1` per point.
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Polynomial degree integrated exactly.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64; 3], f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }
}

/// The degree-5 rule: 3-point Gauss on segments, 7-point Radon rule on
/// triangles.
pub fn quadrature_rule(dim: usize) -> Result<QuadratureRule> {
    quadrature_rule_of_degree(dim, 5)
}

/// Rule exact for polynomials of total degree `degree` (3, 5 or 7).
pub fn quadrature_rule_of_degree(dim: usize, degree: usize) -> Result<QuadratureRule> {
    if !matches!(degree, 3 | 5 | 7) {
        return Err(Error::InvalidArgument(format!(
            "quadrature degree {degree} not supported (3, 5, 7)"
        )));
    }
    match dim {
        1 => Ok(segment_rule(degree)),
        2 if degree == 5 => Ok(radon7()),
        2 => Ok(conical_product_rule(degree)),
        _ => Err(Error::InvalidArgument(format!(
            "no quadrature rule for simplices of dimension {dim}"
        ))),
    }
}

fn segment_rule(degree: usize) -> QuadratureRule {
    let (nodes, weights) = gauss_legendre_unit((degree + 2) / 2);
    QuadratureRule {
        dim: 1,
        degree,
        points: nodes.iter().map(|&s| [1.0 - s, s, 0.0]).collect(),
        weights,
    }
}

fn radon7() -> QuadratureRule {
    let s15 = 15f64.sqrt();
    let a1 = (6.0 - s15) / 21.0;
    let b1 = (9.0 + 2.0 * s15) / 21.0;
    let w1 = (155.0 - s15) / 1200.0;
    let a2 = (6.0 + s15) / 21.0;
    let b2 = (9.0 - 2.0 * s15) / 21.0;
    let w2 = (155.0 + s15) / 1200.0;
    let c = 1.0 / 3.0;
    QuadratureRule {
        dim: 2,
        degree: 5,
        points: vec![
            [c, c, c],
            [b1, a1, a1],
            [a1, b1, a1],
            [a1, a1, b1],
            [b2, a2, a2],
            [a2, b2, a2],
            [a2, a2, b2],
        ],
        weights: vec![9.0 / 40.0, w1, w1, w1, w2, w2, w2],
    }
}

/// Collapsed tensor Gauss rule: `λ₁ = u`, `λ₂ = (1−u)v`, with the `(1−u)`
/// Jacobian folded into the weights.
fn conical_product_rule(degree: usize) -> QuadratureRule {
    let (us, wu) = gauss_legendre_unit((degree + 3) / 2);
    let (vs, wv) = gauss_legendre_unit((degree + 2) / 2);
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (u, a) in us.iter().zip(&wu) {
        for (v, b) in vs.iter().zip(&wv) {
            let l1 = *u;
            let l2 = (1.0 - u) * v;
            points.push([l1, l2, 1.0 - l1 - l2]);
            weights.push(2.0 * a * b * (1.0 - u));
        }
    }
    QuadratureRule {
        dim: 2,
        degree,
        points,
        weights,
    }
}

/// Gauss–Legendre nodes and weights on [0, 1], weights summing to one.
fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        // Newton on P_n from the Chebyshev-like initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes.push(0.5 * (1.0 - x));
        weights.push(0.5 * w);
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
