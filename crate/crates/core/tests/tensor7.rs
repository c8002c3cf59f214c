use g2deform::linalg::{matmul7, transpose7};
use g2deform::scalar::identity_mat;
use g2deform::tensor7::{hodge, inner, interior, top_coefficient, wedge, Metric7, Symmetry, Tensor7};
use proptest::prelude::*;

fn form(p: usize, coeffs: &[f64]) -> Tensor7<f64> {
    let mut it = coeffs.iter().cycle();
    Tensor7::form_from_fn(p, |_| *it.next().unwrap())
}

fn metric(noise: &[f64]) -> Metric7<f64> {
    let mut a = identity_mat::<f64>();
    for (k, x) in noise.iter().enumerate().take(49) {
        a[k / 7][k % 7] += x;
    }
    Metric7::new(matmul7(&a, &transpose7(&a))).unwrap()
}

fn coeffs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, 35)
}

fn noise() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.25..0.25f64, 49)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn alt_is_idempotent(data in prop::collection::vec(-1.0..1.0f64, 343)) {
        let t = Tensor7::from_vec(3, data, Symmetry::None);
        let once = t.antisymmetrize();
        prop_assert!(once.antisymmetrize().max_abs_diff(&once) < 1e-14);
        prop_assert!(once.antisymmetry_defect() < 1e-14);
    }

    #[test]
    fn hodge_is_an_involution(p in 0usize..=7, c in coeffs(), n in noise()) {
        let g = metric(&n);
        let a = form(p, &c);
        let back = hodge(&hodge(&a, &g).unwrap(), &g).unwrap();
        prop_assert!(back.max_abs_diff(&a) < 1e-10 * (1.0 + a.max_abs()));
    }

    #[test]
    fn norm_times_volume_is_a_wedge_star_a(p in 1usize..=6, c in coeffs(), n in noise()) {
        let g = metric(&n);
        let a = form(p, &c);
        let top = top_coefficient(&wedge(&a, &hodge(&a, &g).unwrap()).unwrap());
        let want = inner(&a, &a, &g) * g.sqrt_det().unwrap();
        prop_assert!((top - want).abs() < 1e-10 * (1.0 + want.abs()));
    }

    #[test]
    fn wedge_is_associative(c1 in coeffs(), c2 in coeffs(), c3 in coeffs()) {
        let (a, b, c) = (form(1, &c1), form(2, &c2), form(3, &c3));
        let left = wedge(&wedge(&a, &b).unwrap(), &c).unwrap();
        let right = wedge(&a, &wedge(&b, &c).unwrap()).unwrap();
        prop_assert!(left.max_abs_diff(&right) < 1e-12);
    }

    #[test]
    fn wedge_is_graded_commutative(p in 1usize..=3, q in 1usize..=3, c1 in coeffs(), c2 in coeffs()) {
        let (a, b) = (form(p, &c1), form(q, &c2));
        let sign = if (p * q) % 2 == 0 { 1.0 } else { -1.0 };
        let ab = wedge(&a, &b).unwrap();
        let ba = wedge(&b, &a).unwrap().scale(sign);
        prop_assert!(ab.max_abs_diff(&ba) < 1e-12);
    }

    #[test]
    fn interior_is_an_antiderivation(u in prop::array::uniform7(-1.0..1.0f64), c1 in coeffs(), c2 in coeffs()) {
        let (a, b) = (form(2, &c1), form(3, &c2));
        let left = interior(&u, &wedge(&a, &b).unwrap());
        let right = wedge(&interior(&u, &a), &b).unwrap().add(&wedge(&a, &interior(&u, &b)).unwrap());
        prop_assert!(left.max_abs_diff(&right) < 1e-12);
    }
}

#[test]
fn euclidean_hodge_of_basis_three_form() {
    let g = Metric7::<f64>::euclidean();
    let star = hodge(&Tensor7::basis_form(&[0, 1, 2]), &g).unwrap();
    assert_eq!(star.get(&[3, 4, 5, 6]), 1.0);
    assert_eq!(star.max_abs(), 1.0);
}

#[test]
fn indefinite_metric_has_no_hodge_star() {
    let mut g = identity_mat::<f64>();
    g[3][3] = -1.0;
    let g = Metric7::new(g).unwrap();
    assert!(!g.is_positive_definite());
    assert!(hodge(&Tensor7::basis_form(&[0]), &g).is_err());
}
