//! Monneau-functional traces M(r, u, q) = r^{−(n+3)} ∫_{∂B_r} (u − q)² dH^{n−1},
//! quadratic blowup fitting on annuli, the cross-scale uniqueness diagnostic,
//! and singular/regular point classification.
//!
//! Fitting happens on an annulus rather than a single sphere: on one sphere
//! ½x·(A + cI)x is indistinguishable from ½x·Ax plus a constant, so the trace
//! direction is unidentifiable. The default sample set is a deterministic
//! golden-ratio spiral; it deliberately has no antipodal symmetry, so odd
//! lower-order structure in the field shows up in the fit instead of being
//! silently projected out.

use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::fields::{Field, FieldError, GridField};
use crate::io_util::fmt_full;
use crate::matrix::solve_spd_eigen;
use crate::quadratic_forms::{QuadraticBlowup, QuadraticFormError, SymMatrix};
use crate::sphere::{SphereError, SphereRule};

const GOLDEN_FRAC: f64 = 0.618_033_988_749_894_9;
const SHELL_OFFSET: f64 = 0.381_966_011_250_105_1;
const COND_LIMIT: f64 = 1e10;

#[derive(Debug, Error)]
pub enum BlowupError {
    #[error("radii list is empty")]
    EmptyRadii,
    #[error("radii must be strictly increasing and positive")]
    RadiiNotIncreasing,
    #[error("shell inner fraction must lie in (0,1), got {0}")]
    BadShellFraction(f64),
    #[error("need at least 3 levels, got {0}")]
    BadLevels(usize),
    #[error("fitting system is rank deficient (condition number {cond:.3e})")]
    RankDeficient { cond: f64 },
    #[error("every requested scale sits below the grid floor {floor}")]
    ScaleFloorReached { floor: f64 },
    #[error("sampling produced only {got} points for {unknowns} unknowns")]
    TooFewSamples { got: usize, unknowns: usize },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Sphere(#[from] SphereError),
    #[error(transparent)]
    Quadratic(#[from] QuadraticFormError),
}

/// Sampled Monneau curve r ↦ M(r, u, q). `q_is_qplus` records whether the
/// comparison polynomial is actually PSD — monotonicity is only guaranteed
/// on Q⁺, so traces against sign-changing q are produced but never asserted.
#[derive(Debug, Clone)]
pub struct MonneauTrace {
    pub center: Vec<f64>,
    pub q_is_qplus: bool,
    samples: Vec<(f64, f64)>,
}

impl MonneauTrace {
    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "r,M")?;
        for (r, m) in &self.samples {
            writeln!(w, "{},{}", fmt_full(*r), fmt_full(*m))?;
        }
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        #[derive(Serialize)]
        struct Row {
            r: f64,
            m: f64,
        }
        #[derive(Serialize)]
        struct Summary<'a> {
            center: &'a [f64],
            q_is_qplus: bool,
            samples: usize,
        }
        for (r, m) in &self.samples {
            serde_json::to_writer(&mut w, &Row { r: *r, m: *m })?;
            w.write_all(b"\n")?;
        }
        serde_json::to_writer(
            &mut w,
            &Summary {
                center: &self.center,
                q_is_qplus: self.q_is_qplus,
                samples: self.samples.len(),
            },
        )?;
        w.write_all(b"\n")
    }
}

/// Sample M(r, u, q) at the given radii. Satisfies M(r, u, q) = M(1, u_r, q)
/// by construction, since both sides reduce to the same weighted sum over
/// the rule nodes.
pub fn monneau<F: Field>(
    u: &F,
    center: &[f64],
    q: &QuadraticBlowup,
    radii: &[f64],
    rule: &SphereRule,
) -> Result<MonneauTrace, BlowupError> {
    let dim = u.dim();
    if q.dim() != dim || rule.dim() != dim || center.len() != dim {
        return Err(FieldError::DimensionMismatch {
            left: dim,
            right: q.dim(),
        }
        .into());
    }
    if radii.is_empty() {
        return Err(BlowupError::EmptyRadii);
    }
    if radii[0] <= 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(BlowupError::RadiiNotIncreasing);
    }
    let r_max = *radii.last().unwrap();
    if u.inner_radius(center) + 1e-12 < r_max {
        return Err(FieldError::ScaleOutOfDomain {
            center: center.to_vec(),
            radius: r_max,
        }
        .into());
    }
    let mut samples = Vec::with_capacity(radii.len());
    let mut scaled = vec![0.0; dim];
    let mut point = vec![0.0; dim];
    for &r in radii {
        let mut acc = 0.0;
        for k in 0..rule.len() {
            for ((s, p), (c, node)) in scaled
                .iter_mut()
                .zip(point.iter_mut())
                .zip(center.iter().zip(rule.node(k)))
            {
                *s = r * node;
                *p = c + *s;
            }
            let uv = u.eval(&point)?;
            if !uv.is_finite() {
                return Err(SphereError::NonFiniteSample { index: k }.into());
            }
            let diff = uv - q.eval(&scaled);
            acc += rule.weight(k) * diff * diff;
        }
        let m = acc * r.powi(dim as i32 - 1) / r.powi(dim as i32 + 3);
        samples.push((r, m));
    }
    Ok(MonneauTrace {
        center: center.to_vec(),
        q_is_qplus: q.is_psd(),
        samples,
    })
}

/// Nondecreasing check with slack: passes iff M(r_{k+1}) ≥ M(r_k) − slack for
/// every consecutive pair. Returns the worst observed drop as well.
pub fn check_monotone(trace: &MonneauTrace, slack: f64) -> (bool, f64) {
    let mut worst = 0.0_f64;
    for w in trace.samples.windows(2) {
        worst = worst.max(w[0].1 - w[1].1);
    }
    let worst = worst.max(0.0);
    (worst <= slack, worst)
}

/// How fit_blowup draws its annulus samples.
#[derive(Debug, Clone)]
pub enum FitSamples<'a> {
    /// Deterministic golden-ratio spiral: `shells` radii, `per_shell` points
    /// each, no antipodal symmetry.
    Spiral { shells: usize, per_shell: usize },
    /// Nodes of the given grid that fall inside the annulus.
    GridNodes(&'a GridField),
}

impl FitSamples<'_> {
    pub fn default_spiral(dim: usize) -> FitSamples<'static> {
        FitSamples::Spiral {
            shells: 4,
            per_shell: if dim == 2 { 48 } else { 160 },
        }
    }
}

/// Least-squares fit of u_{x⁰,r}(x) ≈ c₀ + c₁·x + ½x·Ax over the annulus
/// {inner ≤ |x| ≤ 1}. The lower-order terms are fitted and reported, never
/// subtracted silently: at a genuine singular point they vanish, so their
/// size is a consistency diagnostic.
#[derive(Debug, Clone)]
pub struct BlowupFit {
    pub r: f64,
    pub a_fit: SymMatrix,
    pub c0: f64,
    pub c1: Vec<f64>,
    pub rms_residual: f64,
    pub condition: f64,
}

pub fn fit_blowup<F: Field>(
    u: &F,
    center: &[f64],
    r: f64,
    shell_inner_fraction: f64,
    sampling: &FitSamples<'_>,
) -> Result<BlowupFit, BlowupError> {
    let dim = u.dim();
    if !(shell_inner_fraction > 0.0 && shell_inner_fraction < 1.0) {
        return Err(BlowupError::BadShellFraction(shell_inner_fraction));
    }
    if u.inner_radius(center) + 1e-12 < r {
        return Err(FieldError::ScaleOutOfDomain {
            center: center.to_vec(),
            radius: r,
        }
        .into());
    }
    let points = annulus_points(dim, shell_inner_fraction, sampling, center, r)?;
    let unknowns = 1 + dim + dim * (dim + 1) / 2;
    if points.len() < 2 * unknowns {
        return Err(BlowupError::TooFewSamples {
            got: points.len(),
            unknowns,
        });
    }
    let mut values = Vec::with_capacity(points.len());
    let mut y = vec![0.0; dim];
    let r2 = r * r;
    for x in &points {
        for ((yy, c), xx) in y.iter_mut().zip(center).zip(x.iter()) {
            *yy = c + r * xx;
        }
        values.push(u.eval(&y)? / r2);
    }
    let (beta, cond, rms) = quadratic_least_squares(dim, &points, &values)?;
    let (c0, c1, a_fit) = unpack_model(dim, &beta);
    Ok(BlowupFit {
        r,
        a_fit,
        c0,
        c1,
        rms_residual: rms,
        condition: cond,
    })
}

/// Basis order: 1, x_1..x_n, ½x_1²..½x_n², x_i x_j (i < j lexicographic).
fn design_row(dim: usize, x: &[f64], row: &mut Vec<f64>) {
    row.clear();
    row.push(1.0);
    row.extend_from_slice(x);
    for &xi in x.iter().take(dim) {
        row.push(0.5 * xi * xi);
    }
    for i in 0..dim {
        for j in (i + 1)..dim {
            row.push(x[i] * x[j]);
        }
    }
}

fn quadratic_least_squares(
    dim: usize,
    points: &[Vec<f64>],
    values: &[f64],
) -> Result<(Vec<f64>, f64, f64), BlowupError> {
    let k = 1 + dim + dim * (dim + 1) / 2;
    let mut normal = vec![0.0; k * k];
    let mut rhs = vec![0.0; k];
    let mut row = Vec::with_capacity(k);
    for (x, &v) in points.iter().zip(values) {
        design_row(dim, x, &mut row);
        for i in 0..k {
            rhs[i] += row[i] * v;
            for j in 0..k {
                normal[i * k + j] += row[i] * row[j];
            }
        }
    }
    let (beta, cond) = solve_spd_eigen(k, &normal, &rhs).ok_or(BlowupError::RankDeficient {
        cond: f64::INFINITY,
    })?;
    if cond > COND_LIMIT {
        return Err(BlowupError::RankDeficient { cond });
    }
    let mut ss = 0.0;
    for (x, &v) in points.iter().zip(values) {
        design_row(dim, x, &mut row);
        let fitted: f64 = row.iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
        ss += (v - fitted) * (v - fitted);
    }
    let rms = (ss / points.len() as f64).sqrt();
    Ok((beta, cond, rms))
}

fn unpack_model(dim: usize, beta: &[f64]) -> (f64, Vec<f64>, SymMatrix) {
    let c0 = beta[0];
    let c1 = beta[1..1 + dim].to_vec();
    let mut entries = vec![0.0; dim * dim];
    for i in 0..dim {
        entries[i * dim + i] = beta[1 + dim + i];
    }
    let mut idx = 1 + 2 * dim;
    for i in 0..dim {
        for j in (i + 1)..dim {
            entries[i * dim + j] = beta[idx];
            entries[j * dim + i] = beta[idx];
            idx += 1;
        }
    }
    let a_fit = SymMatrix::new(dim, entries).expect("symmetric by construction");
    (c0, c1, a_fit)
}

fn annulus_points(
    dim: usize,
    inner: f64,
    sampling: &FitSamples<'_>,
    center: &[f64],
    r: f64,
) -> Result<Vec<Vec<f64>>, BlowupError> {
    match sampling {
        FitSamples::Spiral { shells, per_shell } => {
            let mut out = Vec::with_capacity(shells * per_shell);
            for s in 0..*shells {
                let rho = inner + (1.0 - inner) * (s as f64 + 0.5) / *shells as f64;
                let offset = s as f64 * SHELL_OFFSET;
                for k in 0..*per_shell {
                    let phase = (k as f64 * GOLDEN_FRAC + offset).fract();
                    let phi = std::f64::consts::TAU * phase;
                    match dim {
                        2 => out.push(vec![rho * phi.cos(), rho * phi.sin()]),
                        3 => {
                            let z = 1.0 - (2.0 * k as f64 + 1.0) / *per_shell as f64;
                            let sq = (1.0 - z * z).max(0.0).sqrt();
                            out.push(vec![rho * sq * phi.cos(), rho * sq * phi.sin(), rho * z]);
                        }
                        _ => {
                            return Err(FieldError::DimensionMismatch {
                                left: dim,
                                right: 3,
                            }
                            .into())
                        }
                    }
                }
            }
            Ok(out)
        }
        FitSamples::GridNodes(grid) => {
            if grid.dim() != dim {
                return Err(FieldError::DimensionMismatch {
                    left: dim,
                    right: grid.dim(),
                }
                .into());
            }
            let m = grid.nodes_per_axis();
            let mut out = Vec::new();
            let mut multi_point = vec![0.0; dim];
            crate::fields::for_each_multi(dim, m, |multi| {
                for (p, &i) in multi_point.iter_mut().zip(multi) {
                    *p = grid.node_coord(i);
                }
                let dist2: f64 = multi_point
                    .iter()
                    .zip(center)
                    .map(|(p, c)| (p - c) * (p - c))
                    .sum();
                let rho = dist2.sqrt() / r;
                if rho >= inner && rho <= 1.0 {
                    out.push(
                        multi_point
                            .iter()
                            .zip(center)
                            .map(|(p, c)| (p - c) / r)
                            .collect(),
                    );
                }
            });
            Ok(out)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UniquenessVerdict {
    UniqueBlowupConsistent,
    Inconclusive,
}

/// Quadratic fits down a dyadic scale ladder r_j = r₀2^{−j}, compared after
/// projecting each fitted matrix back to trace 1 (the constant-on-sphere
/// ambiguity lives in the identity direction).
#[derive(Debug, Clone)]
pub struct UniquenessReport {
    pub center: Vec<f64>,
    pub scales: Vec<f64>,
    pub fits: Vec<BlowupFit>,
    pub normalized: Vec<SymMatrix>,
    /// ‖A_norm(r_{j+1}) − A_norm(r_j)‖_F per consecutive pair.
    pub trend: Vec<f64>,
    pub max_pairwise: f64,
    pub verdict: UniquenessVerdict,
    pub tol: f64,
    pub truncated: bool,
}

/// Shift a fit back to trace 1: A ↦ A + ((1 − Tr A)/n) I.
pub fn trace_normalize(a: &SymMatrix) -> SymMatrix {
    let n = a.dim();
    let shift = (1.0 - a.trace()) / n as f64;
    let mut entries = a.entries().to_vec();
    for i in 0..n {
        entries[i * n + i] += shift;
    }
    SymMatrix::new(n, entries).expect("shifted copy stays symmetric")
}

pub fn uniqueness_diagnostic<F: Field>(
    u: &F,
    center: &[f64],
    r0: f64,
    levels: usize,
    tol: f64,
    sampling: &FitSamples<'_>,
) -> Result<UniquenessReport, BlowupError> {
    if levels < 3 {
        return Err(BlowupError::BadLevels(levels));
    }
    let mut scales: Vec<f64> = (0..=levels).map(|j| r0 * 0.5_f64.powi(j as i32)).collect();
    let mut truncated = false;
    if let Some(h) = u.grid_spacing() {
        let floor = 4.0 * h;
        let keep = scales.iter().filter(|&&r| r >= floor).count();
        if keep == 0 {
            return Err(BlowupError::ScaleFloorReached { floor });
        }
        if keep < scales.len() {
            scales.truncate(keep);
            truncated = true;
        }
    }
    let mut fits = Vec::with_capacity(scales.len());
    for &r in &scales {
        fits.push(fit_blowup(u, center, r, 0.5, sampling)?);
    }
    let normalized: Vec<SymMatrix> = fits.iter().map(|f| trace_normalize(&f.a_fit)).collect();
    let trend: Vec<f64> = normalized
        .windows(2)
        .map(|w| w[1].frobenius_distance(&w[0]))
        .collect();
    let mut max_pairwise = 0.0_f64;
    for i in 0..normalized.len() {
        for j in (i + 1)..normalized.len() {
            max_pairwise = max_pairwise.max(normalized[i].frobenius_distance(&normalized[j]));
        }
    }
    let verdict = if normalized.len() >= 3 {
        let tail = &normalized[normalized.len() - 3..];
        let mut tail_max = 0.0_f64;
        for i in 0..tail.len() {
            for j in (i + 1)..tail.len() {
                tail_max = tail_max.max(tail[i].frobenius_distance(&tail[j]));
            }
        }
        if tail_max <= tol {
            UniquenessVerdict::UniqueBlowupConsistent
        } else {
            UniquenessVerdict::Inconclusive
        }
    } else {
        UniquenessVerdict::Inconclusive
    };
    Ok(UniquenessReport {
        center: center.to_vec(),
        scales,
        fits,
        normalized,
        trend,
        max_pairwise,
        verdict,
        tol,
        truncated,
    })
}

impl UniquenessReport {
    fn dim(&self) -> usize {
        self.fits.first().map(|f| f.a_fit.dim()).unwrap_or(0)
    }

    /// Columns: level, r, fitted matrix entries row-major, rms_residual,
    /// pairwise_dist (distance to the previous level; empty on level 0).
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.dim();
        let mut header = String::from("level,r");
        for i in 0..n {
            for j in 0..n {
                header.push_str(&format!(",a{}{}", i + 1, j + 1));
            }
        }
        header.push_str(",rms_residual,pairwise_dist");
        writeln!(w, "{header}")?;
        for (level, fit) in self.fits.iter().enumerate() {
            let mut line = format!("{},{}", level, fmt_full(self.scales[level]));
            for v in fit.a_fit.entries() {
                line.push_str(&format!(",{}", fmt_full(*v)));
            }
            line.push_str(&format!(",{}", fmt_full(fit.rms_residual)));
            if level == 0 {
                line.push(',');
            } else {
                line.push_str(&format!(",{}", fmt_full(self.trend[level - 1])));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        #[derive(Serialize)]
        struct Row<'a> {
            level: usize,
            r: f64,
            a: &'a [f64],
            rms_residual: f64,
            pairwise_dist: Option<f64>,
        }
        #[derive(Serialize)]
        struct Summary<'a> {
            center: &'a [f64],
            verdict: UniquenessVerdict,
            max_pairwise: f64,
            tol: f64,
            truncated: bool,
        }
        for (level, fit) in self.fits.iter().enumerate() {
            let row = Row {
                level,
                r: self.scales[level],
                a: fit.a_fit.entries(),
                rms_residual: fit.rms_residual,
                pairwise_dist: if level == 0 {
                    None
                } else {
                    Some(self.trend[level - 1])
                },
            };
            serde_json::to_writer(&mut w, &row)?;
            w.write_all(b"\n")?;
        }
        serde_json::to_writer(
            &mut w,
            &Summary {
                center: &self.center,
                verdict: self.verdict,
                max_pairwise: self.max_pairwise,
                tol: self.tol,
                truncated: self.truncated,
            },
        )?;
        w.write_all(b"\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnresolvedReason {
    NotFreeBoundary,
    AmbiguousResiduals,
    InsufficientScales,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointClass {
    Singular,
    Regular,
    Unresolved(UnresolvedReason),
}

impl PointClass {
    pub fn label(&self) -> &'static str {
        match self {
            PointClass::Singular => "singular",
            PointClass::Regular => "regular",
            PointClass::Unresolved(_) => "unresolved",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ClassifyParams {
    /// Free-boundary filter: the point must satisfy |u(x⁰)| ≤ value_tol and
    /// |∇u(x⁰)| ≤ grad_tol before any model comparison runs.
    pub fb_value_tol: f64,
    pub fb_grad_tol: f64,
    /// Decade separation required between the losing and winning model rms
    /// at the last two scales.
    pub residual_ratio: f64,
}

impl Default for ClassifyParams {
    fn default() -> Self {
        ClassifyParams {
            fb_value_tol: 1e-8,
            fb_grad_tol: 1e-8,
            residual_ratio: 10.0,
        }
    }
}

/// Compare the quadratic blowup model against the best half-space model
/// ½((x·e)⁺)² across the deepest two scales of the dyadic ladder.
pub fn classify_point<F: Field>(
    u: &F,
    center: &[f64],
    r0: f64,
    levels: usize,
    params: &ClassifyParams,
    sampling: &FitSamples<'_>,
) -> Result<PointClass, BlowupError> {
    if levels < 3 {
        return Err(BlowupError::BadLevels(levels));
    }
    let value = u.eval(center)?;
    let grad = u.grad(center)?;
    let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if value.abs() > params.fb_value_tol || grad_norm > params.fb_grad_tol {
        return Ok(PointClass::Unresolved(UnresolvedReason::NotFreeBoundary));
    }
    let mut scales: Vec<f64> = (0..=levels).map(|j| r0 * 0.5_f64.powi(j as i32)).collect();
    if let Some(h) = u.grid_spacing() {
        let floor = 4.0 * h;
        scales.retain(|&r| r >= floor);
    }
    if scales.len() < 2 {
        return Ok(PointClass::Unresolved(UnresolvedReason::InsufficientScales));
    }
    let deepest = &scales[scales.len() - 2..];
    let mut quad_wins = 0usize;
    let mut half_wins = 0usize;
    for &r in deepest {
        let quad_rms = fit_blowup(u, center, r, 0.5, sampling)?.rms_residual;
        let half_rms = best_half_space_rms(u, center, r, 0.5, sampling)?;
        if half_rms >= params.residual_ratio * quad_rms {
            quad_wins += 1;
        }
        if quad_rms >= params.residual_ratio * half_rms {
            half_wins += 1;
        }
    }
    Ok(if quad_wins == deepest.len() {
        PointClass::Singular
    } else if half_wins == deepest.len() {
        PointClass::Regular
    } else {
        PointClass::Unresolved(UnresolvedReason::AmbiguousResiduals)
    })
}

/// rms of u_{x⁰,r} against ½((x·e)⁺)², minimized over the direction e via a
/// candidate sweep (64 directions for n=2, 512 for n=3) plus a shrinking
/// local search.
pub fn best_half_space_rms<F: Field>(
    u: &F,
    center: &[f64],
    r: f64,
    shell_inner_fraction: f64,
    sampling: &FitSamples<'_>,
) -> Result<f64, BlowupError> {
    let dim = u.dim();
    if u.inner_radius(center) + 1e-12 < r {
        return Err(FieldError::ScaleOutOfDomain {
            center: center.to_vec(),
            radius: r,
        }
        .into());
    }
    let points = annulus_points(dim, shell_inner_fraction, sampling, center, r)?;
    let mut values = Vec::with_capacity(points.len());
    let mut y = vec![0.0; dim];
    for x in &points {
        for ((yy, c), xx) in y.iter_mut().zip(center).zip(x.iter()) {
            *yy = c + r * xx;
        }
        values.push(u.eval(&y)? / (r * r));
    }
    let rms_for = |e: &[f64]| -> f64 {
        let mut ss = 0.0;
        for (x, &v) in points.iter().zip(values.iter()) {
            let s = x.iter().zip(e).map(|(a, b)| a * b).sum::<f64>().max(0.0);
            let model = 0.5 * s * s;
            ss += (v - model) * (v - model);
        }
        (ss / points.len() as f64).sqrt()
    };

    let candidates: Vec<Vec<f64>> = match dim {
        2 => (0..64)
            .map(|k| {
                let th = std::f64::consts::TAU * k as f64 / 64.0;
                vec![th.cos(), th.sin()]
            })
            .collect(),
        3 => (0..512)
            .map(|k| {
                let z = 1.0 - (2.0 * k as f64 + 1.0) / 512.0;
                let sq = (1.0 - z * z).max(0.0).sqrt();
                let phi = std::f64::consts::TAU * (k as f64 * GOLDEN_FRAC).fract();
                vec![sq * phi.cos(), sq * phi.sin(), z]
            })
            .collect(),
        other => {
            return Err(FieldError::DimensionMismatch {
                left: other,
                right: 3,
            }
            .into())
        }
    };
    let mut best_e = candidates[0].clone();
    let mut best = rms_for(&best_e);
    for cand in &candidates[1..] {
        let v = rms_for(cand);
        if v < best {
            best = v;
            best_e = cand.clone();
        }
    }
    // Local polish: perturb along coordinate directions, renormalize, shrink.
    let mut step = if dim == 2 { 0.1 } else { 0.2 };
    while step > 1e-10 {
        let mut improved = false;
        for axis in 0..dim {
            for sign in [-1.0, 1.0] {
                let mut cand = best_e.clone();
                cand[axis] += sign * step;
                let norm = cand.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 {
                    continue;
                }
                for c in cand.iter_mut() {
                    *c /= norm;
                }
                let v = rms_for(&cand);
                if v < best {
                    best = v;
                    best_e = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok(best)
}
