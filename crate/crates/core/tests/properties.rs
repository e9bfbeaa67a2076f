//! Cross-module invariants: pencil membership, affinity and slope identities
//! of the sphere integral, replay soundness, rescaling composition, and the
//! Monneau scaling identity.

use proptest::prelude::*;

use nosign_lab::blowup::{fit_blowup, monneau, trace_normalize, FitSamples};
use nosign_lab::fields::{rescale, AnalyticField, Field, GridField};
use nosign_lab::quadratic_forms::{
    eigen_split, f_of_t, fprime_closed, pencil, replay_uniqueness, ClassTag, QuadraticBlowup,
    ReplayVerdict, SymMatrix,
};
use nosign_lab::sphere::{exact_moments, make_rule};

fn trace1_2d(a11: f64, a12: f64) -> QuadraticBlowup {
    QuadraticBlowup::from_entries(2, &[a11, a12, a12, 1.0 - a11], ClassTag::Q).unwrap()
}

fn trace1_3d(d: [f64; 2], o: [f64; 3]) -> QuadraticBlowup {
    let entries = [
        d[0],
        o[0],
        o[1],
        o[0],
        d[1],
        o[2],
        o[1],
        o[2],
        1.0 - d[0] - d[1],
    ];
    QuadraticBlowup::from_entries(3, &entries, ClassTag::Q).unwrap()
}

proptest! {
    #[test]
    fn pencil_stays_in_qplus(t in -1.0..=1.0f64, pair in 0usize..4) {
        let (n, i0, j0) = [(2, 0, 1), (3, 0, 1), (3, 0, 2), (3, 1, 2)][pair];
        let b = pencil(n, i0, j0, t).unwrap();
        prop_assert_eq!(b.matrix().trace(), 1.0);
        prop_assert!(b.matrix().min_eigenvalue() >= -1e-15);
    }

    #[test]
    fn f_is_affine_in_t(
        a11 in -1.0..1.0f64, a12 in -1.0..1.0f64,
        b11 in -1.0..1.0f64, b12 in -1.0..1.0f64,
        ta in -1.0..1.0f64, tb in -1.0..1.0f64,
    ) {
        let a = trace1_2d(a11, a12);
        let at = trace1_2d(b11, b12);
        let moments = exact_moments(2).unwrap();
        let fa = f_of_t(&a, &at, 0, 1, ta, &moments).unwrap();
        let fb = f_of_t(&a, &at, 0, 1, tb, &moments).unwrap();
        let fm = f_of_t(&a, &at, 0, 1, (ta + tb) / 2.0, &moments).unwrap();
        let scale = fa.abs().max(fb.abs()).max(1.0);
        prop_assert!((fm - (fa + fb) / 2.0).abs() <= 1e-12 * scale);
    }

    #[test]
    fn finite_difference_slope_matches_closed_form(
        a11 in -1.0..1.0f64, a12 in -1.0..1.0f64,
        b11 in -1.0..1.0f64, b12 in -1.0..1.0f64,
    ) {
        let a = trace1_2d(a11, a12);
        let at = trace1_2d(b11, b12);
        let moments = exact_moments(2).unwrap();
        let f1 = f_of_t(&a, &at, 0, 1, -0.5, &moments).unwrap();
        let f2 = f_of_t(&a, &at, 0, 1, 0.5, &moments).unwrap();
        let slope = (f2 - f1) / 1.0;
        let closed = fprime_closed(&a, &at, 0, 1, &moments).unwrap();
        prop_assert!((slope - closed).abs() <= 1e-10);
    }

    #[test]
    fn slope_matches_in_three_dimensions(
        d0 in -0.8..0.8f64, d1 in -0.8..0.8f64,
        o0 in -0.5..0.5f64, o1 in -0.5..0.5f64, o2 in -0.5..0.5f64,
        e0 in -0.8..0.8f64, e1 in -0.8..0.8f64,
        p0 in -0.5..0.5f64, p1 in -0.5..0.5f64, p2 in -0.5..0.5f64,
        pair in 0usize..3,
    ) {
        let a = trace1_3d([d0, d1], [o0, o1, o2]);
        let at = trace1_3d([e0, e1], [p0, p1, p2]);
        let (i0, j0) = [(0, 1), (0, 2), (1, 2)][pair];
        let moments = exact_moments(3).unwrap();
        let f1 = f_of_t(&a, &at, i0, j0, -0.4, &moments).unwrap();
        let f2 = f_of_t(&a, &at, i0, j0, 0.6, &moments).unwrap();
        let slope = (f2 - f1) / 1.0;
        let closed = fprime_closed(&a, &at, i0, j0, &moments).unwrap();
        prop_assert!((slope - closed).abs() <= 1e-10);
    }

    #[test]
    fn moment_expansion_matches_quadrature(
        a11 in -1.0..1.0f64, a12 in -1.0..1.0f64,
        b11 in -1.0..1.0f64, b12 in -1.0..1.0f64,
        t in -1.0..=1.0f64,
    ) {
        let a = trace1_2d(a11, a12);
        let at = trace1_2d(b11, b12);
        let moments = exact_moments(2).unwrap();
        let closed = f_of_t(&a, &at, 0, 1, t, &moments).unwrap();

        // Oracle: integrate the rotated-frame integrand with a high-order rule.
        let split = eigen_split(&a, &at).unwrap();
        let n = 2usize;
        let mut m_rot = [0.0; 4];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for p in 0..n {
                    for q in 0..n {
                        let s = a.matrix().entry(p, q) + at.matrix().entry(p, q);
                        acc += split.rotation_entry(p, i) * s * split.rotation_entry(q, j);
                    }
                }
                m_rot[i * n + j] = acc;
            }
        }
        m_rot[0] -= 2.0 * (0.5 - 0.5 * t);
        m_rot[3] -= 2.0 * (0.5 + 0.5 * t);
        let lambdas = split.lambdas().to_vec();
        let rule = make_rule(2, 64).unwrap();
        let numeric = rule
            .integrate(
                |z| {
                    let first = lambdas[0] * z[0] * z[0] + lambdas[1] * z[1] * z[1];
                    let second = m_rot[0] * z[0] * z[0]
                        + 2.0 * m_rot[1] * z[0] * z[1]
                        + m_rot[3] * z[1] * z[1];
                    first * second
                },
                1.0,
            )
            .unwrap();
        prop_assert!((closed - numeric).abs() <= 1e-8, "closed {} vs quadrature {}", closed, numeric);
    }

    #[test]
    fn replay_is_sound_and_complete_at_tolerance_scale(
        a11 in -1.0..1.0f64, a12 in -1.0..1.0f64,
        d11 in -1.0..1.0f64, d12 in -1.0..1.0f64,
        mag in 0usize..6,
    ) {
        // Ã = A + δ·E with trace-free symmetric E, δ swept over decades.
        let delta = [0.0, 1e-12, 1e-9, 1e-7, 1e-4, 1e-1][mag];
        let a = trace1_2d(a11, a12);
        let entries = [
            a11 + delta * d11,
            a12 + delta * d12,
            a12 + delta * d12,
            1.0 - a11 - delta * d11,
        ];
        let at = QuadraticBlowup::from_entries(2, &entries, ClassTag::Q).unwrap();
        let tol = 1e-9;
        let report = replay_uniqueness(&a, &at, tol).unwrap();
        let dist = a.matrix().frobenius_distance(at.matrix());
        match report.verdict {
            ReplayVerdict::Equal => prop_assert!(dist <= 2.0 * tol, "equal verdict at distance {}", dist),
            ReplayVerdict::Distinct => {
                prop_assert!(report.witness.is_some());
                prop_assert!(dist > 0.0);
            }
        }
        if dist > 2.0 * tol {
            prop_assert_eq!(report.verdict, ReplayVerdict::Distinct);
        }
        // The eigenvalues of a trace-1 pair difference always sum to ~0.
        let split = eigen_split(&a, &at).unwrap();
        let sum: f64 = split.lambdas().iter().sum();
        prop_assert!(sum.abs() <= 1e-10);
        // Reconstruction: R diag(λ) Rᵀ = A − Ã.
        let back = split.reconstruct();
        for i in 0..2 {
            for j in 0..2 {
                let want = a.matrix().entry(i, j) - at.matrix().entry(i, j);
                prop_assert!((back[i * 2 + j] - want).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn rescaling_composes_for_analytic_fields(
        c0 in -0.3..0.3f64, c1 in -0.3..0.3f64,
        r in 0.3..0.9f64, s in 0.3..0.9f64,
        px in -0.9..0.9f64, py in -0.9..0.9f64,
    ) {
        let mat = SymMatrix::new(2, vec![2.0, 0.3, 0.3, -1.0]).unwrap();
        let u = AnalyticField::perturbed_quadratic(mat, 0.1).unwrap();
        let center = [c0, c1];
        let x = [px, py];
        let inner = rescale(&u, &center, r).unwrap();
        let nested = rescale(&inner, &[0.0, 0.0], s).unwrap();
        let direct = rescale(&u, &center, r * s).unwrap();
        let lhs = nested.eval(&x).unwrap();
        let rhs = direct.eval(&x).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        let gl = nested.grad(&x).unwrap();
        let gr = direct.grad(&x).unwrap();
        for (a, b) in gl.iter().zip(gr.iter()) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}

#[test]
fn rescaling_composes_for_grid_fields() {
    let mat = SymMatrix::new(2, vec![0.7, 0.2, 0.2, 0.3]).unwrap();
    let u = AnalyticField::quadratic(mat).unwrap();
    let grid = GridField::sample(&u, 161).unwrap();
    let center = [0.1, -0.05];
    for (r, s) in [(0.5, 0.5), (0.8, 0.4), (0.3, 0.9)] {
        let inner = rescale(&grid, &center, r).unwrap();
        let nested = rescale(&inner, &[0.0, 0.0], s).unwrap();
        let direct = rescale(&grid, &center, r * s).unwrap();
        for x in [[0.6, -0.2], [0.0, 0.9], [-0.7, 0.3]] {
            let lhs = nested.eval(&x).unwrap();
            let rhs = direct.eval(&x).unwrap();
            assert!(
                (lhs - rhs).abs() <= 1e-8,
                "composition drift {lhs} vs {rhs}"
            );
        }
    }
}

#[test]
fn rotated_fourth_moment_is_invariant() {
    // Integrating (Rx)₁⁴ must give S4 for any rotation R.
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let m2 = exact_moments(2).unwrap();
    let rule2 = make_rule(2, 32).unwrap();
    for _ in 0..20 {
        let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let v = rule2
            .integrate(|x| (th.cos() * x[0] + th.sin() * x[1]).powi(4), 1.0)
            .unwrap();
        assert!((v - m2.s4).abs() <= 1e-10);
    }
    let m3 = exact_moments(3).unwrap();
    let rule3 = make_rule(3, 32).unwrap();
    for _ in 0..20 {
        // Random unit direction; ∫(e·x)⁴ = S4 by rotation invariance.
        let e = random_unit3(&mut rng);
        let v = rule3
            .integrate(|x| (e[0] * x[0] + e[1] * x[1] + e[2] * x[2]).powi(4), 1.0)
            .unwrap();
        assert!((v - m3.s4).abs() <= 1e-10);
    }
}

fn random_unit3(rng: &mut impl rand::Rng) -> [f64; 3] {
    loop {
        let v = [
            rng.random_range(-1.0..1.0f64),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.1 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

#[test]
fn monneau_trace_constant_on_homogeneous_pairs() {
    // u and q both homogeneous quadratics: M(r) is r-independent.
    let u =
        AnalyticField::quadratic(SymMatrix::new(2, vec![2.0, 0.4, 0.4, -1.0]).unwrap()).unwrap();
    let q = QuadraticBlowup::from_entries(2, &[0.3, -0.1, -0.1, 0.7], ClassTag::Q).unwrap();
    let rule = make_rule(2, 32).unwrap();
    let radii: Vec<f64> = (1..=12).map(|k| 0.05 * k as f64).collect();
    let trace = monneau(&u, &[0.0, 0.0], &q, &radii, &rule).unwrap();
    let m0 = trace.samples()[0].1;
    for (_, m) in trace.samples() {
        assert!((m - m0).abs() <= 1e-12 * m0.abs(), "variation {m} vs {m0}");
        assert!(*m >= 0.0);
    }
}

#[test]
fn trace_normalization_fixes_unit_trace_fits() {
    let mat = SymMatrix::new(2, vec![2.0, 0.5, 0.5, -1.0]).unwrap();
    let u = AnalyticField::quadratic(mat.clone()).unwrap();
    let fit = fit_blowup(&u, &[0.0, 0.0], 0.5, 0.5, &FitSamples::default_spiral(2)).unwrap();
    let normalized = trace_normalize(&fit.a_fit);
    assert!(normalized.frobenius_distance(&fit.a_fit) <= 1e-12);
    assert!((normalized.trace() - 1.0).abs() <= 1e-13);
    assert!(normalized.frobenius_distance(&mat) <= 1e-10);
}
