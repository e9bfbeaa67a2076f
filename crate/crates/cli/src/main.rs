//! Batch front-end: solve instances from config files, sample preset fields,
//! and emit Monneau traces, blowup reports, classifications, and the proof
//! replay as CSV/JSON-lines artifacts.
//!
//! Exit codes: 0 success; 1 moment table beyond tolerance; 2 validation,
//! config, or I/O failure; 3 solver did not converge (outputs still
//! written); 4 replay verdict "distinct".

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use nosign_lab::blowup::{
    check_monotone, classify_point, monneau, uniqueness_diagnostic, ClassifyParams, FitSamples,
    PointClass, UniquenessVerdict, UnresolvedReason,
};
use nosign_lab::fields::{AnalyticField, Field, GridField, DEFAULT_HALF_WIDTH};
use nosign_lab::io_util::fmt_full;
use nosign_lab::quadratic_forms::{read_matrix, ClassTag, QuadraticBlowup, ReplayVerdict};
use nosign_lab::solver::{
    parse_config, parse_param_list, solve_classical, solve_no_sign, SolveMode,
};
use nosign_lab::sphere::{exact_moments, make_rule};

const DEFAULT_RESOLUTION: usize = 32;
const MOMENTS_GATE: f64 = 1e-10;

#[derive(Parser)]
#[command(
    name = "nosign",
    version,
    about = "No-sign obstacle problem laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the exact-vs-quadrature moment table as CSV.
    Moments {
        #[arg(long)]
        dim: usize,
    },
    /// Sample an analytic preset onto a grid file.
    MakeField {
        /// quadratic | half_space | perturbed_quadratic
        #[arg(long)]
        preset: String,
        /// k=v list, e.g. "m=129,a=2:0:0:-1" (vector values colon-separated)
        #[arg(long)]
        params: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a solve described by a key=value config file.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Field file target; the JSON-lines report lands at <out>.jsonl
        #[arg(long)]
        out: PathBuf,
    },
    /// Monneau trace r -> M(r, u, q) over a radius sweep.
    Monneau {
        #[arg(long)]
        field: PathBuf,
        /// Comma-separated center, e.g. "0,0"
        #[arg(long)]
        center: String,
        /// Matrix file for the comparison polynomial q
        #[arg(long)]
        q: PathBuf,
        /// start:stop:count radius sweep
        #[arg(long)]
        radii: String,
        /// Geometric instead of linear spacing
        #[arg(long)]
        geometric: bool,
        /// CSV target; JSON-lines lands at <out>.jsonl
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-scale blowup uniqueness diagnostic.
    Blowup {
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        center: String,
        #[arg(long)]
        r0: f64,
        #[arg(long)]
        levels: usize,
        #[arg(long)]
        tol: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Singular/regular classification at a candidate point.
    Classify {
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        center: String,
        #[arg(long)]
        r0: f64,
        #[arg(long)]
        levels: usize,
    },
    /// Replay the uniqueness decision procedure on two matrices.
    Replay {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Moments { dim } => run_moments(dim),
        Command::MakeField {
            preset,
            params,
            out,
        } => run_make_field(&preset, &params, &out),
        Command::Solve { config, out } => run_solve(&config, &out),
        Command::Monneau {
            field,
            center,
            q,
            radii,
            geometric,
            out,
        } => run_monneau(&field, &center, &q, &radii, geometric, &out),
        Command::Blowup {
            field,
            center,
            r0,
            levels,
            tol,
            out,
        } => run_blowup(&field, &center, r0, levels, tol, &out),
        Command::Classify {
            field,
            center,
            r0,
            levels,
        } => run_classify(&field, &center, r0, levels),
        Command::Replay { a, b, tol } => run_replay(&a, &b, tol),
    }
}

fn run_moments(dim: usize) -> Result<u8> {
    let table = exact_moments(dim)?;
    let rule = make_rule(dim, DEFAULT_RESOLUTION)?;
    let q_omega = rule.integrate(|_| 1.0, 1.0)?;
    let q_s2 = rule.integrate(|x| x[0] * x[0], 1.0)?;
    let q_s4 = rule.integrate(|x| x[0].powi(4), 1.0)?;
    let q_s22 = rule.integrate(|x| x[0] * x[0] * x[1] * x[1], 1.0)?;
    let rows: [(&str, f64, f64); 5] = [
        ("omega", table.omega, q_omega),
        ("S2", table.s2, q_s2),
        ("S4", table.s4, q_s4),
        ("S22", table.s22, q_s22),
        ("S4/S22", table.s4 / table.s22, q_s4 / q_s22),
    ];
    println!("name,exact,quadrature,abs_error");
    let mut worst = 0.0_f64;
    for (name, exact, quad) in rows {
        let err = (exact - quad).abs();
        worst = worst.max(err);
        println!(
            "{name},{},{},{}",
            fmt_full(exact),
            fmt_full(quad),
            fmt_full(err)
        );
    }
    Ok(if worst <= MOMENTS_GATE { 0 } else { 1 })
}

fn run_make_field(preset: &str, raw_params: &str, out: &Path) -> Result<u8> {
    let params = parse_param_list(raw_params).map_err(|e| anyhow!(e))?;
    let allowed: &[&str] = match preset {
        "quadratic" => &["m", "spacing", "a"],
        "half_space" => &["m", "spacing", "e"],
        "perturbed_quadratic" => &["m", "spacing", "a", "eps"],
        other => bail!("unknown preset {other:?}"),
    };
    for key in params.keys() {
        if !allowed.contains(&key.as_str()) {
            bail!("unknown parameter {key:?} for preset {preset:?}");
        }
    }
    let m: usize = require_param(&params, "m")?;
    let field = AnalyticField::from_preset(preset, &params)?;
    let spacing = match params.get("spacing") {
        Some(raw) => raw
            .parse::<f64>()
            .with_context(|| format!("bad spacing {raw:?}"))?,
        None => 2.0 * DEFAULT_HALF_WIDTH / (m.max(2) - 1) as f64,
    };
    let grid = GridField::from_fn(field.dim(), m, spacing, |x| field.eval_exact(x))?;
    grid.write(out)?;
    println!(
        "wrote {} ({}^{} nodes, spacing {})",
        out.display(),
        m,
        field.dim(),
        fmt_full(spacing)
    );
    Ok(0)
}

fn require_param<T: std::str::FromStr>(params: &BTreeMap<String, String>, key: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = params
        .get(key)
        .ok_or_else(|| anyhow!("missing parameter `{key}`"))?;
    raw.parse()
        .map_err(|e: T::Err| anyhow!("parameter `{key}`: {e}"))
}

fn run_solve(config: &Path, out: &Path) -> Result<u8> {
    let text =
        fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let (mode, spec) = parse_config(&text)?;
    let (field, report) = match mode {
        SolveMode::Classical => solve_classical(&spec)?,
        SolveMode::NoSign => solve_no_sign(&spec)?,
    };
    field.write(out)?;
    let report_path = append_ext(out, "jsonl");
    let mut buf = Vec::new();
    report.write_jsonl(&mut buf)?;
    fs::write(&report_path, buf)?;
    let mode_label = match mode {
        SolveMode::Classical => "classical",
        SolveMode::NoSign => "no_sign",
    };
    println!(
        "mode={mode_label} converged={} outer={} sweeps={} final_residual={}",
        report.converged,
        report.outer_iterations,
        report.sweeps,
        fmt_full(report.final_residual)
    );
    Ok(if report.converged { 0 } else { 3 })
}

fn run_monneau(
    field_path: &Path,
    center: &str,
    q_path: &Path,
    radii_spec: &str,
    geometric: bool,
    out: &Path,
) -> Result<u8> {
    let field = GridField::read(field_path)?;
    let center = parse_center(center, field.dim())?;
    let mat = read_matrix(q_path)?;
    let tag = if nosign_lab::quadratic_forms::QuadraticBlowup::new(mat.clone(), ClassTag::Qplus)
        .is_ok()
    {
        ClassTag::Qplus
    } else {
        ClassTag::Q
    };
    let q = QuadraticBlowup::new(mat, tag)?;
    if q.class_tag() != ClassTag::Qplus {
        eprintln!("warning: q is not in Q+; Monneau monotonicity is not guaranteed");
    }
    let radii = parse_radii(radii_spec, geometric)?;
    let rule = make_rule(field.dim(), DEFAULT_RESOLUTION)?;
    let trace = monneau(&field, &center, &q, &radii, &rule)?;
    write_csv_jsonl(out, |w| trace.write_csv(w), |w| trace.write_jsonl(w))?;
    // Grid fields inherit O(h²) interpolation error amplified along the
    // trace; 10h is the documented slack envelope.
    let slack = 10.0 * field.spacing();
    let (monotone, worst) = check_monotone(&trace, slack);
    println!(
        "samples={} monotone={} worst_violation={} slack={}",
        radii.len(),
        monotone,
        fmt_full(worst),
        fmt_full(slack)
    );
    Ok(0)
}

fn run_blowup(
    field_path: &Path,
    center: &str,
    r0: f64,
    levels: usize,
    tol: f64,
    out: &Path,
) -> Result<u8> {
    let field = GridField::read(field_path)?;
    let center = parse_center(center, field.dim())?;
    let sampling = FitSamples::default_spiral(field.dim());
    let report = uniqueness_diagnostic(&field, &center, r0, levels, tol, &sampling)?;
    write_csv_jsonl(out, |w| report.write_csv(w), |w| report.write_jsonl(w))?;
    let verdict = match report.verdict {
        UniquenessVerdict::UniqueBlowupConsistent => "unique_blowup_consistent",
        UniquenessVerdict::Inconclusive => "inconclusive",
    };
    println!(
        "levels={} verdict={} max_pairwise={} truncated={}",
        report.fits.len(),
        verdict,
        fmt_full(report.max_pairwise),
        report.truncated
    );
    Ok(0)
}

fn run_classify(field_path: &Path, center: &str, r0: f64, levels: usize) -> Result<u8> {
    let field = GridField::read(field_path)?;
    let center = parse_center(center, field.dim())?;
    let sampling = FitSamples::default_spiral(field.dim());
    let class = classify_point(
        &field,
        &center,
        r0,
        levels,
        &ClassifyParams::default(),
        &sampling,
    )?;
    match class {
        PointClass::Unresolved(reason) => {
            let reason = match reason {
                UnresolvedReason::NotFreeBoundary => "not_free_boundary",
                UnresolvedReason::AmbiguousResiduals => "ambiguous_residuals",
                UnresolvedReason::InsufficientScales => "insufficient_scales",
            };
            println!("classification=unresolved reason={reason}");
        }
        other => println!("classification={}", other.label()),
    }
    Ok(0)
}

fn run_replay(a_path: &Path, b_path: &Path, tol: f64) -> Result<u8> {
    let a = QuadraticBlowup::new(read_matrix(a_path)?, ClassTag::Q)?;
    let b = QuadraticBlowup::new(read_matrix(b_path)?, ClassTag::Q)?;
    let report = nosign_lab::quadratic_forms::replay_uniqueness(&a, &b, tol)?;
    println!("{report}");
    Ok(match report.verdict {
        ReplayVerdict::Equal => 0,
        ReplayVerdict::Distinct => 4,
    })
}

fn parse_center(raw: &str, dim: usize) -> Result<Vec<f64>> {
    let parts: Vec<f64> = raw
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .with_context(|| format!("bad coordinate {tok:?}"))
        })
        .collect::<Result<_>>()?;
    if parts.len() != dim {
        bail!(
            "center has {} coordinates, field dimension is {dim}",
            parts.len()
        );
    }
    Ok(parts)
}

/// start:stop:count, inclusive; linear by default, geometric on request.
fn parse_radii(spec: &str, geometric: bool) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        bail!("radii spec must be start:stop:count, got {spec:?}");
    }
    let start: f64 = parts[0]
        .parse()
        .with_context(|| format!("bad start {:?}", parts[0]))?;
    let stop: f64 = parts[1]
        .parse()
        .with_context(|| format!("bad stop {:?}", parts[1]))?;
    let count: usize = parts[2]
        .parse()
        .with_context(|| format!("bad count {:?}", parts[2]))?;
    if count == 0 {
        bail!("radii count must be positive");
    }
    if !start.is_finite() || !stop.is_finite() || start <= 0.0 || stop < start {
        bail!("need 0 < start <= stop, got {start}..{stop}");
    }
    if count == 1 {
        return Ok(vec![start]);
    }
    let steps = (count - 1) as f64;
    let radii: Vec<f64> = if geometric {
        let ratio = stop / start;
        (0..count)
            .map(|k| start * ratio.powf(k as f64 / steps))
            .collect()
    } else {
        (0..count)
            .map(|k| start + (stop - start) * k as f64 / steps)
            .collect()
    };
    Ok(radii)
}

fn append_ext(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn write_csv_jsonl<C, J>(out: &Path, csv: C, jsonl: J) -> Result<()>
where
    C: Fn(&mut Vec<u8>) -> std::io::Result<()>,
    J: Fn(&mut Vec<u8>) -> std::io::Result<()>,
{
    let mut buf = Vec::new();
    csv(&mut buf)?;
    fs::write(out, &buf).with_context(|| format!("writing {}", out.display()))?;
    buf.clear();
    jsonl(&mut buf)?;
    let jl = append_ext(out, "jsonl");
    fs::write(&jl, &buf).with_context(|| format!("writing {}", jl.display()))?;
    Ok(())
}
