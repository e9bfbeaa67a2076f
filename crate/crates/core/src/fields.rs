//! Scalar fields on a cube containing the closed unit ball: grid-backed
//! fields with multilinear interpolation, closed-form analytic presets, and
//! rescaled views u_{x⁰,r}(x) = u(x⁰ + rx)/r². The perturbed quadratic preset
//! adds a harmonic cubic, so its Laplacian stays exactly 1 while its blowup
//! at the origin is the unperturbed quadratic — a manufactured test field.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::io_util::fmt_full;
use crate::quadratic_forms::SymMatrix;
use crate::sphere::SphereRule;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("point {point:?} outside the field domain")]
    OutOfDomain { point: Vec<f64> },
    #[error("ball of radius {radius} around {center:?} leaves the base domain")]
    ScaleOutOfDomain { center: Vec<f64>, radius: f64 },
    #[error("non-finite sample at node {index}")]
    NonFiniteSample { index: usize },
    #[error("grid needs at least 3 nodes per axis, got {0}")]
    GridTooSmall(usize),
    #[error("grid half-width {0} does not cover the unit ball")]
    DomainTooSmall(f64),
    #[error("field values must be finite")]
    NonFiniteValue,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("quadratic preset needs trace 1, got {0}")]
    TraceViolation(f64),
    #[error("half-space direction must be a unit vector, |e| = {0}")]
    NotUnitDirection(f64),
    #[error("preset {0:?} is not defined in dimension {1}")]
    UnsupportedPresetDimension(String, usize),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("preset parameter {0}: {1}")]
    BadPresetParam(String, String),
    #[error("scale must be positive, got {0}")]
    BadScale(f64),
    #[error("expected {expected} grid values, got {got}")]
    BadValueCount { expected: usize, got: usize },
    #[error("field file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A scalar field with point evaluation and gradient. All implementations
/// here are immutable after construction and freely shareable.
pub trait Field {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64]) -> Result<f64, FieldError>;

    fn grad(&self, x: &[f64]) -> Result<Vec<f64>, FieldError>;

    /// Largest ρ such that the closed ball B_ρ(center) is evaluable;
    /// infinite for analytic fields.
    fn inner_radius(&self, center: &[f64]) -> f64;

    /// Effective grid spacing seen through this field, if grid-backed.
    fn grid_spacing(&self) -> Option<f64> {
        None
    }
}

impl<F: Field + ?Sized> Field for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &[f64]) -> Result<f64, FieldError> {
        (**self).eval(x)
    }
    fn grad(&self, x: &[f64]) -> Result<Vec<f64>, FieldError> {
        (**self).grad(x)
    }
    fn inner_radius(&self, center: &[f64]) -> f64 {
        (**self).inner_radius(center)
    }
    fn grid_spacing(&self) -> Option<f64> {
        (**self).grid_spacing()
    }
}

const DOMAIN_SLACK: f64 = 1e-12;

/// Uniform grid over the cube [−L, L]^n with L = h(m−1)/2 ≥ 1, values
/// row-major with the last axis fastest. Evaluation is multilinear
/// interpolation (O(h²)); gradients are central differences of it.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    dim: usize,
    m: usize,
    h: f64,
    values: Vec<f64>,
}

impl GridField {
    pub fn from_values(dim: usize, m: usize, h: f64, values: Vec<f64>) -> Result<Self, FieldError> {
        if m < 3 {
            return Err(FieldError::GridTooSmall(m));
        }
        let expected = m.pow(dim as u32);
        if values.len() != expected {
            return Err(FieldError::BadValueCount {
                expected,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FieldError::NonFiniteValue);
        }
        let half_width = h * (m - 1) as f64 / 2.0;
        if !half_width.is_finite() || half_width < 1.0 {
            return Err(FieldError::DomainTooSmall(half_width));
        }
        Ok(GridField { dim, m, h, values })
    }

    pub fn from_fn<F: Fn(&[f64]) -> f64>(
        dim: usize,
        m: usize,
        h: f64,
        f: F,
    ) -> Result<Self, FieldError> {
        let mut values = vec![0.0; m.pow(dim as u32)];
        let half_width = h * (m - 1) as f64 / 2.0;
        let mut point = vec![0.0; dim];
        for_each_multi(dim, m, |multi| {
            for (p, &i) in point.iter_mut().zip(multi) {
                *p = -half_width + h * i as f64;
            }
            values[multi_to_flat(multi, m)] = f(&point);
        });
        Self::from_values(dim, m, h, values)
    }

    /// Sample an analytic preset on the default cube (half-width 1.25).
    pub fn sample(preset: &AnalyticField, m: usize) -> Result<Self, FieldError> {
        if m < 2 {
            return Err(FieldError::GridTooSmall(m));
        }
        let h = 2.0 * DEFAULT_HALF_WIDTH / (m - 1) as f64;
        Self::from_fn(preset.dim(), m, h, |x| preset.eval_exact(x))
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.m
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn half_width(&self) -> f64 {
        self.h * (self.m - 1) as f64 / 2.0
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, multi: &[usize]) -> f64 {
        self.values[multi_to_flat(multi, self.m)]
    }

    pub fn node_coord(&self, index: usize) -> f64 {
        -self.half_width() + self.h * index as f64
    }

    pub fn node_point(&self, multi: &[usize]) -> Vec<f64> {
        multi.iter().map(|&i| self.node_coord(i)).collect()
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi_to_flat(multi, self.m)
    }

    /// Central-difference gradient at an interior node.
    pub fn node_gradient(&self, multi: &[usize]) -> Vec<f64> {
        let mut grad = vec![0.0; self.dim];
        let mut shifted = multi.to_vec();
        for axis in 0..self.dim {
            shifted[axis] = multi[axis] + 1;
            let plus = self.value(&shifted);
            shifted[axis] = multi[axis] - 1;
            let minus = self.value(&shifted);
            shifted[axis] = multi[axis];
            grad[axis] = (plus - minus) / (2.0 * self.h);
        }
        grad
    }

    /// 2n+1-point discrete Laplacian. Interior nodes carry
    /// (Σ neighbors − 2n·center)/h²; boundary nodes hold a NaN sentinel and
    /// must be excluded from any norm.
    pub fn discrete_laplacian(&self) -> Result<GridField, FieldError> {
        if self.m < 3 {
            return Err(FieldError::GridTooSmall(self.m));
        }
        let mut out = vec![f64::NAN; self.values.len()];
        let h2 = self.h * self.h;
        let dim = self.dim;
        let m = self.m;
        let mut shifted = vec![0usize; dim];
        for_each_multi(dim, m, |multi| {
            if multi.iter().any(|&i| i == 0 || i == m - 1) {
                return;
            }
            let center = self.value(multi);
            let mut acc = -2.0 * dim as f64 * center;
            shifted.copy_from_slice(multi);
            for axis in 0..dim {
                shifted[axis] = multi[axis] + 1;
                acc += self.value(&shifted);
                shifted[axis] = multi[axis] - 1;
                acc += self.value(&shifted);
                shifted[axis] = multi[axis];
            }
            out[multi_to_flat(multi, m)] = acc / h2;
        });
        Ok(GridField {
            dim,
            m,
            h: self.h,
            values: out,
        })
    }

    /// Field file format: header "n m h", then m^n whitespace-separated
    /// values, row-major with the last axis fastest, 17 significant digits.
    pub fn write(&self, path: &Path) -> Result<(), FieldError> {
        let mut out = String::with_capacity(self.values.len() * 24);
        out.push_str(&format!("{} {} {}\n", self.dim, self.m, fmt_full(self.h)));
        for (k, v) in self.values.iter().enumerate() {
            out.push_str(&fmt_full(*v));
            if (k + 1).is_multiple_of(self.m) {
                out.push('\n');
            } else {
                out.push(' ');
            }
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, FieldError> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, FieldError> {
        let mut tokens = text.split_whitespace();
        let dim: usize = tokens
            .next()
            .ok_or_else(|| FieldError::Parse("empty field file".into()))?
            .parse()
            .map_err(|e| FieldError::Parse(format!("bad dimension: {e}")))?;
        let m: usize = tokens
            .next()
            .ok_or_else(|| FieldError::Parse("missing node count".into()))?
            .parse()
            .map_err(|e| FieldError::Parse(format!("bad node count: {e}")))?;
        let h: f64 = tokens
            .next()
            .ok_or_else(|| FieldError::Parse("missing spacing".into()))?
            .parse()
            .map_err(|e| FieldError::Parse(format!("bad spacing: {e}")))?;
        let mut values = Vec::new();
        for tok in tokens {
            values.push(
                tok.parse::<f64>()
                    .map_err(|e| FieldError::Parse(format!("bad value {tok:?}: {e}")))?,
            );
        }
        Self::from_values(dim, m, h, values)
    }

    fn contains(&self, x: &[f64]) -> bool {
        let bound = self.half_width() + DOMAIN_SLACK * self.half_width().max(1.0);
        x.iter().all(|v| v.abs() <= bound)
    }
}

impl Field for GridField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> Result<f64, FieldError> {
        assert_eq!(x.len(), self.dim);
        if !self.contains(x) {
            return Err(FieldError::OutOfDomain { point: x.to_vec() });
        }
        let half = self.half_width();
        let mut cell = vec![0usize; self.dim];
        let mut frac = vec![0.0; self.dim];
        for axis in 0..self.dim {
            let u = (x[axis] + half) / self.h;
            let i = (u.floor() as isize).clamp(0, self.m as isize - 2) as usize;
            cell[axis] = i;
            frac[axis] = (u - i as f64).clamp(0.0, 1.0);
        }
        let mut acc = 0.0;
        let corners = 1usize << self.dim;
        let mut multi = vec![0usize; self.dim];
        for corner in 0..corners {
            let mut w = 1.0;
            for axis in 0..self.dim {
                if corner >> axis & 1 == 1 {
                    w *= frac[axis];
                    multi[axis] = cell[axis] + 1;
                } else {
                    w *= 1.0 - frac[axis];
                    multi[axis] = cell[axis];
                }
            }
            acc += w * self.value(&multi);
        }
        Ok(acc)
    }

    fn grad(&self, x: &[f64]) -> Result<Vec<f64>, FieldError> {
        assert_eq!(x.len(), self.dim);
        // Central differences at spacing h need an h margin to the boundary.
        let margin = self.half_width() - self.h + DOMAIN_SLACK;
        if x.iter().any(|v| v.abs() > margin) {
            return Err(FieldError::OutOfDomain { point: x.to_vec() });
        }
        let mut grad = vec![0.0; self.dim];
        let mut probe = x.to_vec();
        for axis in 0..self.dim {
            probe[axis] = x[axis] + self.h;
            let plus = self.eval(&probe)?;
            probe[axis] = x[axis] - self.h;
            let minus = self.eval(&probe)?;
            probe[axis] = x[axis];
            grad[axis] = (plus - minus) / (2.0 * self.h);
        }
        Ok(grad)
    }

    fn inner_radius(&self, center: &[f64]) -> f64 {
        let half = self.half_width();
        center
            .iter()
            .fold(f64::INFINITY, |acc, v| acc.min(half - v.abs()))
    }

    fn grid_spacing(&self) -> Option<f64> {
        Some(self.h)
    }
}

/// Default cube half-width; the grid extends past the unit ball so spheres
/// of radius ≤ 1 around interior centers stay interpolable.
pub const DEFAULT_HALF_WIDTH: f64 = 1.25;

/// Closed-form presets. `PerturbedQuadratic` is ½x·Ax + ε·Re((x₁+ix₂)³);
/// the cubic is harmonic, so Δu = Tr A = 1 everywhere.
#[derive(Debug, Clone)]
pub enum AnalyticField {
    Quadratic(SymMatrix),
    HalfSpace(Vec<f64>),
    PerturbedQuadratic { mat: SymMatrix, eps: f64 },
}

impl AnalyticField {
    pub fn quadratic(mat: SymMatrix) -> Result<Self, FieldError> {
        check_unit_trace(&mat)?;
        Ok(AnalyticField::Quadratic(mat))
    }

    pub fn half_space(direction: Vec<f64>) -> Result<Self, FieldError> {
        let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(FieldError::NotUnitDirection(norm));
        }
        Ok(AnalyticField::HalfSpace(direction))
    }

    pub fn perturbed_quadratic(mat: SymMatrix, eps: f64) -> Result<Self, FieldError> {
        check_unit_trace(&mat)?;
        if mat.dim() != 2 {
            return Err(FieldError::UnsupportedPresetDimension(
                "perturbed_quadratic".into(),
                mat.dim(),
            ));
        }
        Ok(AnalyticField::PerturbedQuadratic { mat, eps })
    }

    /// Build a preset from its name and a k=v parameter map. Vector-valued
    /// parameters are colon-separated (`a=2:0:0:-1`, `e=1:0`).
    pub fn from_preset(name: &str, params: &BTreeMap<String, String>) -> Result<Self, FieldError> {
        match name {
            "quadratic" => AnalyticField::quadratic(matrix_param(params, "a")?),
            "half_space" => AnalyticField::half_space(vector_param(params, "e")?),
            "perturbed_quadratic" => {
                let mat = matrix_param(params, "a")?;
                let eps = scalar_param(params, "eps")?;
                AnalyticField::perturbed_quadratic(mat, eps)
            }
            other => Err(FieldError::UnknownPreset(other.into())),
        }
    }

    pub fn eval_exact(&self, x: &[f64]) -> f64 {
        match self {
            AnalyticField::Quadratic(mat) => 0.5 * mat.quad_form(x),
            AnalyticField::HalfSpace(e) => {
                let s = dot(x, e);
                if s > 0.0 {
                    0.5 * s * s
                } else {
                    0.0
                }
            }
            AnalyticField::PerturbedQuadratic { mat, eps } => {
                0.5 * mat.quad_form(x) + eps * harmonic_cubic(x)
            }
        }
    }

    pub fn grad_exact(&self, x: &[f64]) -> Vec<f64> {
        match self {
            AnalyticField::Quadratic(mat) => mat.mul_vec(x),
            AnalyticField::HalfSpace(e) => {
                let s = dot(x, e);
                if s > 0.0 {
                    e.iter().map(|c| s * c).collect()
                } else {
                    vec![0.0; e.len()]
                }
            }
            AnalyticField::PerturbedQuadratic { mat, eps } => {
                let mut g = mat.mul_vec(x);
                g[0] += eps * 3.0 * (x[0] * x[0] - x[1] * x[1]);
                g[1] -= eps * 6.0 * x[0] * x[1];
                g
            }
        }
    }
}

fn check_unit_trace(mat: &SymMatrix) -> Result<(), FieldError> {
    let trace = mat.trace();
    if (trace - 1.0).abs() > 1e-12 {
        return Err(FieldError::TraceViolation(trace));
    }
    Ok(())
}

/// Re((x₁ + i x₂)³) = x₁³ − 3x₁x₂².
fn harmonic_cubic(x: &[f64]) -> f64 {
    x[0] * x[0] * x[0] - 3.0 * x[0] * x[1] * x[1]
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn scalar_param(params: &BTreeMap<String, String>, key: &str) -> Result<f64, FieldError> {
    let raw = params
        .get(key)
        .ok_or_else(|| FieldError::BadPresetParam(key.into(), "missing".into()))?;
    raw.parse()
        .map_err(|e| FieldError::BadPresetParam(key.into(), format!("{e}")))
}

fn vector_param(params: &BTreeMap<String, String>, key: &str) -> Result<Vec<f64>, FieldError> {
    let raw = params
        .get(key)
        .ok_or_else(|| FieldError::BadPresetParam(key.into(), "missing".into()))?;
    raw.split(':')
        .map(|tok| {
            tok.parse::<f64>().map_err(|e| {
                FieldError::BadPresetParam(key.into(), format!("bad entry {tok:?}: {e}"))
            })
        })
        .collect()
}

fn matrix_param(params: &BTreeMap<String, String>, key: &str) -> Result<SymMatrix, FieldError> {
    let entries = vector_param(params, key)?;
    let n = (entries.len() as f64).sqrt().round() as usize;
    if n * n != entries.len() {
        return Err(FieldError::BadPresetParam(
            key.into(),
            format!("{} entries do not form a square matrix", entries.len()),
        ));
    }
    SymMatrix::new(n, entries).map_err(|e| FieldError::BadPresetParam(key.into(), format!("{e}")))
}

impl Field for AnalyticField {
    fn dim(&self) -> usize {
        match self {
            AnalyticField::Quadratic(mat) => mat.dim(),
            AnalyticField::HalfSpace(e) => e.len(),
            AnalyticField::PerturbedQuadratic { mat, .. } => mat.dim(),
        }
    }

    fn eval(&self, x: &[f64]) -> Result<f64, FieldError> {
        assert_eq!(x.len(), self.dim());
        Ok(self.eval_exact(x))
    }

    fn grad(&self, x: &[f64]) -> Result<Vec<f64>, FieldError> {
        assert_eq!(x.len(), self.dim());
        Ok(self.grad_exact(x))
    }

    fn inner_radius(&self, _center: &[f64]) -> f64 {
        f64::INFINITY
    }
}

/// The rescaling u_{x⁰,r}(x) = u(x⁰ + rx)/r². Views compose:
/// (u_{x⁰,r})_{0,s} evaluates identically to u_{x⁰,rs}.
#[derive(Debug, Clone)]
pub struct FieldView<F> {
    base: F,
    center: Vec<f64>,
    scale: f64,
}

impl<F: Field> FieldView<F> {
    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn base(&self) -> &F {
        &self.base
    }

    fn map_point(&self, x: &[f64]) -> Vec<f64> {
        self.center
            .iter()
            .zip(x.iter())
            .map(|(c, v)| c + self.scale * v)
            .collect()
    }
}

/// Rescale a field around `center`. Requires the closed ball of radius
/// `scale` around the center to sit inside the base domain.
pub fn rescale<F: Field>(base: F, center: &[f64], scale: f64) -> Result<FieldView<F>, FieldError> {
    if !scale.is_finite() || scale <= 0.0 {
        return Err(FieldError::BadScale(scale));
    }
    if base.dim() != center.len() {
        return Err(FieldError::DimensionMismatch {
            left: base.dim(),
            right: center.len(),
        });
    }
    if base.inner_radius(center) + DOMAIN_SLACK < scale {
        return Err(FieldError::ScaleOutOfDomain {
            center: center.to_vec(),
            radius: scale,
        });
    }
    Ok(FieldView {
        base,
        center: center.to_vec(),
        scale,
    })
}

impl<F: Field> Field for FieldView<F> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn eval(&self, x: &[f64]) -> Result<f64, FieldError> {
        let y = self.map_point(x);
        Ok(self.base.eval(&y)? / (self.scale * self.scale))
    }

    fn grad(&self, x: &[f64]) -> Result<Vec<f64>, FieldError> {
        let y = self.map_point(x);
        let g = self.base.grad(&y)?;
        Ok(g.into_iter().map(|v| v / self.scale).collect())
    }

    fn inner_radius(&self, center: &[f64]) -> f64 {
        let y = self.map_point(center);
        self.base.inner_radius(&y) / self.scale
    }

    fn grid_spacing(&self) -> Option<f64> {
        self.base.grid_spacing().map(|h| h / self.scale)
    }
}

/// Field values u(x⁰ + r·node) at every node of the rule.
pub fn sphere_samples<F: Field>(
    field: &F,
    center: &[f64],
    radius: f64,
    rule: &SphereRule,
) -> Result<Vec<f64>, FieldError> {
    if field.dim() != rule.dim() {
        return Err(FieldError::DimensionMismatch {
            left: field.dim(),
            right: rule.dim(),
        });
    }
    if field.inner_radius(center) + DOMAIN_SLACK < radius {
        return Err(FieldError::ScaleOutOfDomain {
            center: center.to_vec(),
            radius,
        });
    }
    let mut out = Vec::with_capacity(rule.len());
    let mut point = vec![0.0; field.dim()];
    for k in 0..rule.len() {
        for ((p, c), n) in point.iter_mut().zip(center).zip(rule.node(k)) {
            *p = c + radius * n;
        }
        let v = field.eval(&point)?;
        if !v.is_finite() {
            return Err(FieldError::NonFiniteSample { index: k });
        }
        out.push(v);
    }
    Ok(out)
}

/// Visit every multi-index of the m^dim lattice, last axis fastest.
pub(crate) fn for_each_multi<F: FnMut(&[usize])>(dim: usize, m: usize, mut f: F) {
    let mut idx = vec![0usize; dim];
    loop {
        f(&idx);
        let mut axis = dim;
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < m {
                break;
            }
            idx[axis] = 0;
            if axis == 0 {
                return;
            }
        }
    }
}

pub(crate) fn multi_to_flat(multi: &[usize], m: usize) -> usize {
    multi.iter().fold(0, |acc, &i| acc * m + i)
}
