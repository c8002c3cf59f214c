use g2deform::chartfield::{
    check_dphi_dpsi, check_torsion_compat, christoffel, full_torsion, torsion_components, Chart, DerivativePolicy,
    G2Field, ScalarField, TorsionClass, DEFAULT_OUTER_STEP,
};
use g2deform::deform::conformal_deform;
use g2deform::g2algebra::phi0;
use g2deform::linalg::{max_abs7, max_abs_diff7};
use g2deform::registry::BumpChi;
use g2deform::warped::{build_warped_field, integrate_model, trajectory_points, Branch, HPrimeRule};
use proptest::prelude::*;

fn bump_field(seed: u64, policy: DerivativePolicy<f64>) -> G2Field<f64> {
    let chi = BumpChi::seeded(seed).closure();
    G2Field::new(Chart::cube(0.5), move |x| phi0::<f64>().add(&chi(x))).with_policy(policy)
}

#[test]
fn flat_field_has_no_torsion() {
    let f = G2Field::<f64>::flat(Chart::cube(0.5)).with_policy(DerivativePolicy::central_default());
    for x in f.chart().samples(5, 0.0) {
        assert!(max_abs7(&full_torsion(&f, &x).unwrap().lower) <= 1e-8);
    }
}

#[test]
fn central_differences_converge_at_second_order() {
    let x = [0.02, 0.05, -0.04, 0.01, 0.0, 0.03, -0.02];
    let t = |h: f64| full_torsion(&bump_field(9, DerivativePolicy::Central { step: h }), &x).unwrap().lower;
    let (a, b, c) = (t(0.02), t(0.01), t(0.005));
    let ratio = max_abs_diff7(&a, &b) / max_abs_diff7(&b, &c);
    assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn richardson_beats_central_at_coarse_steps() {
    let x = [0.02, 0.05, -0.04, 0.01, 0.0, 0.03, -0.02];
    let reference = full_torsion(&bump_field(4, DerivativePolicy::Central { step: 1e-4 }), &x).unwrap().lower;
    let central = full_torsion(&bump_field(4, DerivativePolicy::Central { step: 0.02 }), &x).unwrap().lower;
    let rich = full_torsion(&bump_field(4, DerivativePolicy::Richardson { step: 0.02 }), &x).unwrap().lower;
    assert!(max_abs_diff7(&rich, &reference) < 0.1 * max_abs_diff7(&central, &reference));
}

#[test]
fn analytic_and_fd_conformal_torsion_agree() {
    let f = ScalarField::new(|x: &[f64; 7]| (0.4 * x[0] - 0.2 * x[3]).exp())
        .with_gradient(|x| {
            let e = (0.4 * x[0] - 0.2 * x[3]).exp();
            [0.4 * e, 0.0, 0.0, -0.2 * e, 0.0, 0.0, 0.0]
        });
    let flat = G2Field::<f64>::flat(Chart::cube(0.5));
    let analytic = conformal_deform(&flat, &f, 8).unwrap();
    assert!(analytic.has_analytic());
    let fd = analytic.clone().with_policy(DerivativePolicy::central_default());
    let x = [0.1, -0.1, 0.2, 0.0, 0.05, -0.2, 0.1];
    let a = full_torsion(&analytic, &x).unwrap().lower;
    let b = full_torsion(&fd, &x).unwrap().lower;
    assert!(max_abs_diff7(&a, &b) < 1e-8);
}

#[test]
fn exterior_derivative_identities_hold_on_bumps() {
    for seed in 0..3 {
        let f = bump_field(seed, DerivativePolicy::central_default());
        for x in f.chart().samples(2, 0.05) {
            let r = check_dphi_dpsi(&f, &x).unwrap();
            assert!(r.dphi < 1e-6 && r.dpsi < 1e-6, "{} {}", r.dphi, r.dpsi);
        }
    }
}

#[test]
fn warped_field_satisfies_the_w1w7_condition() {
    let m = integrate_model(1.0, 1.0, 1.0, HPrimeRule::Case2(Branch::Plus), [0.0, 0.2], 1e-3).unwrap();
    let f = build_warped_field(&m).unwrap();
    for x in trajectory_points(&m, 2) {
        let r = check_torsion_compat(&f, &x, TorsionClass::W1W7, DEFAULT_OUTER_STEP).unwrap();
        assert!(r.residual < 1e-5 && !r.flagged);
        let t = full_torsion(&f, &x).unwrap();
        let d = torsion_components(&t.lower, &t.point);
        assert!(d.tau14_norm(&t.point) < 1e-6 && d.tau27_norm(&t.point) < 1e-6);
    }
}

#[test]
fn christoffel_of_a_conformally_flat_metric() {
    // g = e^{2u} δ with u = 0.3 x¹: Γ^a_bc = δ^a_b ∂_c u + δ^a_c ∂_b u − δ_bc ∂^a u.
    let metric = |x: &[f64; 7]| {
        let mut g = [[0.0; 7]; 7];
        for (i, row) in g.iter_mut().enumerate() {
            row[i] = (0.6 * x[0]).exp();
        }
        g
    };
    let x = [0.2, 0.0, 0.1, 0.0, 0.0, -0.1, 0.0];
    let gamma = christoffel(&metric, &x, 1e-4).unwrap();
    let du = [0.3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    for a in 0..7 {
        for b in 0..7 {
            for c in 0..7 {
                let d = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
                let want = d(a, b) * du[c] + d(a, c) * du[b] - d(b, c) * du[a];
                assert!((gamma[a][b][c] - want).abs() < 1e-8);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn clamped_points_stay_inside(x in prop::array::uniform7(-2.0..2.0f64), margin in 0.0..0.2f64) {
        let c = Chart::cube(0.5);
        prop_assert!(c.contains(&c.clamp(&x, margin), margin));
    }

    #[test]
    fn torsion_reconstruction_residual_is_small(seed in 0u64..1000) {
        let f = bump_field(seed, DerivativePolicy::central_default());
        let t = full_torsion(&f, &[0.0; 7]).unwrap();
        prop_assert!(t.residual < 1e-8);
    }
}
