use g2deform::tensor7::wedge;
use g2deform::warped::{
    f_law, hessian_warp_detect, integrate_model, predicted_ttilde1_cubed, proof_scalars, s6_frame, sphere_chart,
    theorem_case_check, Branch, CaseCheckOptions, HPrimeRule,
};
use g2deform::Error;
use proptest::prelude::*;

fn exact_theta(sigma: f64, h0: f64, theta0: f64, t: f64) -> f64 {
    2.0 * ((sigma * t / h0).exp() * (theta0 / 2.0).tan()).atan()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn constant_h_matches_the_exact_solution(
        sigma in -1.5..1.5f64,
        h0 in 0.5..2.0f64,
        theta0 in 0.2..2.9f64,
    ) {
        let m = integrate_model(sigma, h0, theta0, HPrimeRule::Zero, [0.0, 1.0], 1e-2).unwrap();
        prop_assert!(m.truncated().is_none());
        for (t, h, th) in m.samples() {
            prop_assert!((h - h0).abs() < 1e-14);
            prop_assert!((th - exact_theta(sigma, h0, theta0, t)).abs() < 1e-8);
        }
    }

    #[test]
    fn sphere_structure_is_nearly_kahler(q in prop::array::uniform7(-1.0..1.0f64)) {
        let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(n > 0.1);
        let s6 = s6_frame(&q.map(|x| x / n)).unwrap();
        for e in s6.frame() {
            let jj = s6.j(&s6.j(e));
            prop_assert!((0..7).all(|k| (jj[k] + e[k]).abs() < 1e-12));
        }
        prop_assert!(wedge(s6.omega(), s6.psi_plus()).unwrap().max_abs() < 1e-12);
        prop_assert!(wedge(s6.omega(), s6.psi_minus()).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn f_law_solves_its_defining_equation(a in 0.5..3.0f64, tau1 in 1.05..3.0f64) {
        prop_assume!(a * tau1.powi(3) > 1.01);
        let f = f_law(a, tau1).unwrap();
        let q = a * tau1.powi(3);
        prop_assert!(f > 3.0);
        prop_assert!((f * f * (q - 1.0) - 9.0 * q).abs() < 1e-9 * f * f * q);
    }
}

#[test]
fn rk4_is_fourth_order() {
    let rule = HPrimeRule::Case2(Branch::Plus);
    let end = |step: f64| {
        let m = integrate_model(1.0, 1.0, 1.0, rule, [0.0, 0.4], step).unwrap();
        m.samples().last().unwrap()
    };
    let (a, b, c) = (end(0.05), end(0.025), end(0.0125));
    let ratio = (a.1 - b.1).abs().max((a.2 - b.2).abs()) / (b.1 - c.1).abs().max((b.2 - c.2).abs());
    assert!((ratio - 16.0).abs() < 4.0, "ratio {ratio}");
}

#[test]
fn f_law_examples() {
    let f = f_law(1.0f64, 2f64.cbrt()).unwrap();
    assert!((f - 18f64.sqrt()).abs() < 1e-12);
    assert!(matches!(f_law(1.0f64, 1.0), Err(Error::Precondition(_))));
    assert!(matches!(f_law(-1.0f64, 2.0), Err(Error::Precondition(_))));
}

#[test]
fn predicted_ttilde1_per_case() {
    for n2 in [0.0, 2.0] {
        assert_eq!(predicted_ttilde1_cubed(&HPrimeRule::Case1, 1.3f64, n2).unwrap(), 0.0);
    }
    let c2 = predicted_ttilde1_cubed(&HPrimeRule::Case2(Branch::Minus), 2.0f64, 1.0).unwrap();
    assert!((c2 - 0.25 * (4.0 + 9.0)).abs() < 1e-14);
    assert!(predicted_ttilde1_cubed(&HPrimeRule::Zero, 1.0f64, 1.0).is_err());
}

fn cone_metric(x: &[f64; 7]) -> [[f64; 7]; 7] {
    let (_, e) = sphere_chart(&x[1..]);
    let mut g = [[0.0; 7]; 7];
    g[0][0] = 1.0;
    for i in 0..6 {
        for j in 0..6 {
            g[i + 1][j + 1] = x[0] * x[0] * (0..7).map(|k| e[i][k] * e[j][k]).sum::<f64>();
        }
    }
    g
}

#[test]
fn hessian_detector_accepts_the_cone() {
    let points = [
        [1.0, 0.1, -0.1, 0.0, 0.05, 0.0, 0.1],
        [0.8, 0.0, 0.2, -0.1, 0.0, 0.1, 0.0],
        [1.3, -0.2, 0.0, 0.1, -0.1, 0.0, 0.05],
    ];
    let yes = hessian_warp_detect(&cone_metric, &|x: &[f64; 7]| x[0] * x[0] / 2.0, &points, 1e-4, 1e-6).unwrap();
    assert!(yes.is_warped, "residual {}", yes.residual);
    assert!(yes.lambda.iter().all(|l| (l - 1.0).abs() < 1e-6));
    let no = hessian_warp_detect(&cone_metric, &|x: &[f64; 7]| x[1] * x[2], &points, 1e-4, 1e-6).unwrap();
    assert!(!no.is_warped);
}

#[test]
fn theta_outside_the_interval_is_rejected() {
    for th in [0.0, std::f64::consts::PI, -1.0] {
        assert!(integrate_model(1.0, 1.0, th, HPrimeRule::Zero, [0.0, 1.0], 1e-2).is_err());
    }
}

#[test]
fn long_case_three_runs_are_truncated_not_failed() {
    let rule = HPrimeRule::Case3 { a: 1.0, branch: Branch::Minus };
    let m = integrate_model(1.0, 0.3, 1.2, rule, [0.0, 0.2], 1e-3).unwrap();
    assert!(m.truncated().is_some());
    assert!(m.t_end() < 0.2 && m.len() > 10);
}

#[test]
fn case_checks_refuse_a_mismatched_model() {
    let m = integrate_model(1.0, 1.0, 1.0, HPrimeRule::Case1, [0.0, 0.2], 1e-3).unwrap();
    assert!(theorem_case_check(2, &m, None, &CaseCheckOptions::default()).is_err());
}

#[test]
fn proof_identities_hold_along_case_three() {
    let rule = HPrimeRule::Case3 { a: 1.0, branch: Branch::Minus };
    let m = integrate_model(1.0, 0.3, 1.2, rule, [0.0, 0.05], 1e-3).unwrap();
    let p = proof_scalars(&m, 10).unwrap();
    assert!(p.dv_residual < 1e-6 && p.df_residual < 1e-6 && p.dm_residual < 1e-6);
    assert!(p.f_law_residual < 1e-6);
}
