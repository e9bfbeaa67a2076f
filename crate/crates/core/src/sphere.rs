//! Quadrature on circles and spheres, plus the exact unit-sphere moments of
//! monomials up to degree 4. The moment identity ∫x₁⁴ = 3∫x₁²x₂² is what the
//! proof replay machinery differentiates against, so it is kept exact in the
//! closed-form table and cross-checkable by quadrature.

use std::f64::consts::PI;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SphereError {
    #[error("unsupported dimension {0} (only 2 and 3)")]
    UnsupportedDimension(usize),
    #[error("resolution {0} too low (minimum 8)")]
    ResolutionTooLow(usize),
    #[error("integrand returned a non-finite value at node {index}")]
    NonFiniteSample { index: usize },
    #[error("radius must be positive, got {0}")]
    BadRadius(f64),
}

/// Quadrature nodes and weights on the unit sphere, weights in surface
/// measure (they sum to 2π for n=2, 4π for n=3).
#[derive(Debug, Clone)]
pub struct SphereRule {
    dim: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Exact unit-sphere moments: ω = |∂B₁|, S2 = ∫x_i², S4 = ∫x_i⁴,
/// S22 = ∫x_i²x_j² for i ≠ j.
#[derive(Debug, Clone, Copy)]
pub struct MomentTable {
    pub dim: usize,
    pub omega: f64,
    pub s2: f64,
    pub s4: f64,
    pub s22: f64,
}

impl SphereRule {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.nodes[k * self.dim..(k + 1) * self.dim]
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.weights[k]
    }

    /// ∫_{∂B_r} f dH^{n−1} as Σ w_k f(r·x_k) r^{n−1}. The integrand sees the
    /// scaled point; homogeneity is its own business.
    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, f: F, radius: f64) -> Result<f64, SphereError> {
        if !radius.is_finite() || radius <= 0.0 {
            return Err(SphereError::BadRadius(radius));
        }
        let measure_scale = radius.powi(self.dim as i32 - 1);
        let mut scaled = vec![0.0; self.dim];
        let mut acc = 0.0;
        for k in 0..self.len() {
            for (s, x) in scaled.iter_mut().zip(self.node(k)) {
                *s = radius * x;
            }
            let v = f(&scaled);
            if !v.is_finite() {
                return Err(SphereError::NonFiniteSample { index: k });
            }
            acc += self.weights[k] * v;
        }
        Ok(acc * measure_scale)
    }
}

/// Equispaced angles on the circle (n=2, exact for trigonometric polynomials
/// of degree < resolution) or a Gauss–Legendre × uniform-azimuth product rule
/// on the sphere (n=3, exact for polynomial degree ≤ 2·resolution − 1).
pub fn make_rule(dim: usize, resolution: usize) -> Result<SphereRule, SphereError> {
    if resolution < 8 {
        return Err(SphereError::ResolutionTooLow(resolution));
    }
    match dim {
        2 => {
            let mut nodes = Vec::with_capacity(2 * resolution);
            let w = 2.0 * PI / resolution as f64;
            for k in 0..resolution {
                let theta = 2.0 * PI * k as f64 / resolution as f64;
                nodes.push(theta.cos());
                nodes.push(theta.sin());
            }
            Ok(SphereRule {
                dim,
                nodes,
                weights: vec![w; resolution],
            })
        }
        3 => {
            let (z, wz) = gauss_legendre(resolution);
            let n_az = 2 * resolution;
            let w_az = PI / resolution as f64;
            let mut nodes = Vec::with_capacity(3 * resolution * n_az);
            let mut weights = Vec::with_capacity(resolution * n_az);
            for (zi, wzi) in z.iter().zip(wz.iter()) {
                let s = (1.0 - zi * zi).max(0.0).sqrt();
                for j in 0..n_az {
                    let psi = 2.0 * PI * j as f64 / n_az as f64;
                    nodes.push(s * psi.cos());
                    nodes.push(s * psi.sin());
                    nodes.push(*zi);
                    weights.push(wzi * w_az);
                }
            }
            Ok(SphereRule {
                dim,
                nodes,
                weights,
            })
        }
        other => Err(SphereError::UnsupportedDimension(other)),
    }
}

/// Closed-form moments: ω₁ = 2π, ω₂ = 4π, S2 = ω/n, S22 = ω/(n(n+2)),
/// S4 = 3·S22 (exactly, by construction).
pub fn exact_moments(dim: usize) -> Result<MomentTable, SphereError> {
    let omega = match dim {
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        other => return Err(SphereError::UnsupportedDimension(other)),
    };
    let n = dim as f64;
    let s22 = omega / (n * (n + 2.0));
    Ok(MomentTable {
        dim,
        omega,
        s2: omega / n,
        s4: 3.0 * s22,
        s22,
    })
}

/// Gauss–Legendre nodes/weights on [−1, 1] by Newton iteration on P_k.
fn gauss_legendre(k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; k];
    let mut weights = vec![0.0; k];
    for i in 0..k {
        let mut x = (PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(k, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(k, x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre_with_derivative(k: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if k == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=k {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let d = k as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
