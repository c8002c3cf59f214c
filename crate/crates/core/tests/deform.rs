use g2deform::chartfield::{full_torsion, torsion_components, Chart, DerivativePolicy, G2Field, ScalarField};
use g2deform::deform::{
    closed_form_torsion_at, conformal_deform, conformal_torsion, deformed_metric_inverse, insert_vector,
    vector_deform_report,
};
use g2deform::g2algebra::{decompose_3form, phi0, G2Point};
use g2deform::linalg::{matmul7, max_abs_diff7};
use g2deform::registry::{scalar, BumpChi};
use g2deform::scalar::identity_mat;
use g2deform::warped::{build_warped_field, integrate_model, trajectory_points, HPrimeRule};
use proptest::prelude::*;

fn point(noise: &[f64]) -> G2Point<f64> {
    let mut a = identity_mat::<f64>();
    for (k, x) in noise.iter().enumerate() {
        a[k / 7][k % 7] += x;
    }
    G2Point::new(phi0::<f64>().apply_all_slots(&a)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn vector_deformation_closed_forms(
        n in prop::collection::vec(-0.2..0.2f64, 49),
        v in prop::array::uniform7(-3.0..3.0f64),
    ) {
        let pt = point(&n);
        let r = vector_deform_report(&pt, &v).unwrap();
        prop_assert!(r.metric_agreement < 1e-10 * (1.0 + r.m));
        prop_assert!(r.det_agreement < 1e-10 * (1.0 + r.m));
        prop_assert!(r.inverse_agreement < 1e-10 * (1.0 + r.m));
        prop_assert!(r.s_agreement < 1e-10 * (1.0 + r.m));
        let inv = deformed_metric_inverse(&r.s_tilde, &pt).unwrap();
        prop_assert!(max_abs_diff7(&matmul7(&inv, &r.g_tilde), &identity_mat()) < 1e-10 * (1.0 + r.m));
    }

    #[test]
    fn inserted_vectors_lie_in_lambda3_7(
        n in prop::collection::vec(-0.2..0.2f64, 49),
        v in prop::array::uniform7(-1.0..1.0f64),
    ) {
        let pt = point(&n);
        let d = decompose_3form(&insert_vector(&v, pt.psi()), &pt);
        prop_assert!(d.lambda1.abs() < 1e-12);
        prop_assert!(d.h27.iter().flatten().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn conformal_law_on_linear_exponents(k in prop::array::uniform7(-0.5..0.5f64)) {
        let f = ScalarField::new(move |x: &[f64; 7]| (0..7).map(|i| k[i] * x[i]).sum::<f64>().exp());
        let flat = G2Field::<f64>::flat(Chart::cube(0.4)).with_policy(DerivativePolicy::central_default());
        let fc = f.clone();
        let field = G2Field::new(Chart::cube(0.4), move |x| phi0::<f64>().scale(fc.at(x).powi(3)))
            .with_policy(DerivativePolicy::central_default());
        let x = [0.1, -0.05, 0.0, 0.2, -0.1, 0.05, 0.0];
        let old = full_torsion(&flat, &x).unwrap();
        let new = full_torsion(&field, &x).unwrap();
        let closed = conformal_torsion(&old.lower, f.at(&x), &f.gradient(&x, 1e-5), &old.point);
        prop_assert!(max_abs_diff7(&closed, &new.lower) < 5e-6);
        let d = torsion_components(&new.lower, &new.point);
        prop_assert!(d.tau1.abs() < 5e-6 && d.tau14_norm(&new.point) < 5e-6 && d.tau27_norm(&new.point) < 5e-6);
    }
}

#[test]
fn conformal_deformations_compose() {
    let base = G2Field::<f64>::flat(Chart::cube(0.5));
    let (f, h) = (scalar("exp_linear").unwrap(), scalar("gauss_bump").unwrap());
    let (fc, hc) = (f.clone(), h.clone());
    let fh = ScalarField::new(move |x| fc.at(x) * hc.at(x));
    let nested = conformal_deform(&conformal_deform(&base, &h, 8).unwrap(), &f, 8).unwrap();
    let direct = conformal_deform(&base, &fh, 8).unwrap();
    for x in base.chart().samples(8, 0.0) {
        assert!(nested.phi_at(&x).max_abs_diff(&direct.phi_at(&x)) < 1e-13);
    }
}

#[test]
fn non_positive_factor_is_rejected() {
    let base = G2Field::<f64>::flat(Chart::cube(0.5));
    let f = ScalarField::new(|x: &[f64; 7]| x[0]);
    assert!(conformal_deform(&base, &f, 8).is_err());
}

#[test]
fn conformal_law_on_a_curved_base() {
    let m = integrate_model(1.0, 1.0, 0.9, HPrimeRule::Case1, [0.0, 0.2], 1e-3).unwrap();
    let base = build_warped_field(&m).unwrap();
    let f = scalar("exp_x1").unwrap();
    let field = conformal_deform(&base, &f, 16).unwrap();
    for x in trajectory_points(&m, 2) {
        let old = full_torsion(&base, &x).unwrap();
        let new = full_torsion(&field, &x).unwrap();
        let closed = conformal_torsion(&old.lower, f.at(&old.x), &f.gradient(&old.x, 0.0), &old.point);
        assert!(max_abs_diff7(&closed, &new.lower) < 1e-6);
    }
}

#[test]
fn closed_form_torsion_on_a_curved_base() {
    let m = integrate_model(1.0, 1.0, 0.9, HPrimeRule::Case1, [0.0, 0.2], 1e-3).unwrap();
    let base = build_warped_field(&m).unwrap();
    let mut bump = BumpChi::seeded(1);
    bump.center = [0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let chi = bump.closure();
    let (b2, c2) = (base.clone(), chi.clone());
    let deformed = G2Field::new(base.chart().clone(), move |x| b2.phi_at(x).add(&c2(x)))
        .with_policy(DerivativePolicy::central_default());
    for x in trajectory_points(&m, 2) {
        let closed = closed_form_torsion_at(&base, &*chi, &x).unwrap();
        let fd = full_torsion(&deformed, &x).unwrap();
        assert!(max_abs_diff7(&closed, &fd.lower) < 5e-5);
    }
}
