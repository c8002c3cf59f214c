use g2deform::chartfield::torsion_from_nabla_phi;
use g2deform::g2algebra::{
    bilinear_form_b, cross, decompose_2form, decompose_3form, deformed_s, metric_from_deformed_s, metric_from_phi,
    phi0, projector_ranks, psi0, s_tensor, vec7_to_2form, G2Point,
};
use g2deform::linalg::{det7, matmul7, max_abs_diff7, transpose7};
use g2deform::scalar::identity_mat;
use g2deform::tensor7::{hodge, interior, Tensor7};
use g2deform::Mat7;
use proptest::prelude::*;

fn near_identity(noise: &[f64]) -> Mat7<f64> {
    let mut a = identity_mat::<f64>();
    for (k, x) in noise.iter().enumerate() {
        a[k / 7][k % 7] += x;
    }
    a
}

fn noise() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.2..0.2f64, 49)
}

fn point(noise: &[f64]) -> G2Point<f64> {
    G2Point::new(phi0::<f64>().apply_all_slots(&near_identity(noise))).unwrap()
}

fn form(p: usize, coeffs: &[f64]) -> Tensor7<f64> {
    let mut it = coeffs.iter().cycle();
    Tensor7::form_from_fn(p, |_| *it.next().unwrap())
}

#[test]
fn standard_structure_conventions() {
    let id = identity_mat::<f64>();
    assert!(max_abs_diff7(&s_tensor(&phi0::<f64>()), &id) < 1e-14);
    assert!(max_abs_diff7(metric_from_phi(&phi0::<f64>()).unwrap().g(), &id) < 1e-14);
    let b = bilinear_form_b(&phi0::<f64>());
    assert!((det7(&b) - 1.0).abs() < 1e-12);
    let pt = G2Point::<f64>::standard();
    assert!(pt.psi().max_abs_diff(&psi0()) < 1e-14);
}

#[test]
fn degenerate_form_is_rejected() {
    assert!(G2Point::new(Tensor7::<f64>::basis_form(&[0, 1, 2])).is_err());
    assert!(metric_from_phi(&Tensor7::<f64>::zeros(3)).is_err());
}

#[test]
fn cross_product_is_normed() {
    let phi = phi0::<f64>();
    let u = [0.3, -1.0, 0.2, 0.5, 0.0, 0.7, -0.4];
    let w = [1.0, 0.1, -0.6, 0.0, 0.9, -0.2, 0.3];
    let c = cross(&phi, &u, &w);
    let dot = |a: &[f64; 7], b: &[f64; 7]| (0..7).map(|i| a[i] * b[i]).sum::<f64>();
    let lhs = dot(&c, &c);
    let rhs = dot(&u, &u) * dot(&w, &w) - dot(&u, &w).powi(2);
    assert!((lhs - rhs).abs() < 1e-12);
    assert!(dot(&c, &u).abs() < 1e-14 && dot(&c, &w).abs() < 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn metric_is_gl_equivariant(n in noise()) {
        let a = near_identity(&n);
        prop_assume!(det7(&a) > 0.1);
        let g = metric_from_phi(&phi0::<f64>().apply_all_slots(&a)).unwrap();
        prop_assert!(max_abs_diff7(g.g(), &matmul7(&a, &transpose7(&a))) < 1e-11);
    }

    #[test]
    fn projector_ranks_are_generic(n in noise()) {
        prop_assert_eq!(projector_ranks(&point(&n), 1e-9), ([7, 14], [1, 7, 27]));
    }

    #[test]
    fn two_form_split_round_trips(n in noise(), c in prop::collection::vec(-1.0..1.0f64, 21)) {
        let pt = point(&n);
        let w = form(2, &c);
        let d = decompose_2form(&w, &pt);
        prop_assert!(d.reconstruct(&pt).max_abs_diff(&w) < 1e-10);
        // Splitting the Λ²₁₄ part again leaves no Λ²₇ component.
        let again = decompose_2form(&d.om14, &pt);
        prop_assert!(again.vec7.iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn three_form_split_round_trips(n in noise(), c in prop::collection::vec(-1.0..1.0f64, 35)) {
        let pt = point(&n);
        let chi = form(3, &c);
        let d = decompose_3form(&chi, &pt);
        prop_assert!(d.reconstruct(&pt).max_abs_diff(&chi) < 1e-10);
        let asym = max_abs_diff7(&d.h27, &transpose7(&d.h27));
        let tr: f64 = (0..7).flat_map(|a| (0..7).map(move |b| (a, b))).map(|(a, b)| pt.g_inv()[a][b] * d.h27[a][b]).sum();
        prop_assert!(asym < 1e-12 && tr.abs() < 1e-10);
    }

    #[test]
    fn torsion_map_is_injective(n in noise(), t in prop::collection::vec(-1.0..1.0f64, 49)) {
        let pt = point(&n);
        let mut mixed = [[0.0; 7]; 7];
        for (k, x) in t.iter().enumerate() {
            mixed[k / 7][k % 7] = *x;
        }
        let nabla = Tensor7::from_fn(4, |i| {
            (0..7).map(|e| mixed[i[0]][e] * pt.psi().at4(e, i[1], i[2], i[3])).sum()
        });
        let (back, residual) = torsion_from_nabla_phi(&nabla, &pt);
        prop_assert!(max_abs_diff7(&back, &mixed) < 1e-10);
        prop_assert!(residual < 1e-10);
    }

    #[test]
    fn vector_two_forms_contract_back(n in noise(), v in prop::array::uniform7(-1.0..1.0f64)) {
        let pt = point(&n);
        let d = decompose_2form(&vec7_to_2form(&v, &pt), &pt);
        prop_assert!(d.vec7.iter().zip(v.iter()).all(|(a, b)| (a - b).abs() < 1e-10));
        prop_assert!(d.om14.max_abs() < 1e-10);
    }

    #[test]
    fn deformed_metric_matches_direct_metric(n in noise(), c in prop::collection::vec(-0.1..0.1f64, 35)) {
        let pt = point(&n);
        let chi = form(3, &c);
        let via_s = metric_from_deformed_s(&deformed_s(&chi, &pt).unwrap(), &pt).unwrap();
        let direct = metric_from_phi(&pt.phi().add(&chi)).unwrap();
        prop_assert!(max_abs_diff7(via_s.g(), direct.g()) < 1e-10);
    }
}

#[test]
fn psi_is_star_phi_at_a_generic_point() {
    let pt = point(&[0.05; 49]);
    let star = hodge(pt.phi(), pt.metric()).unwrap();
    assert!(star.max_abs_diff(pt.psi()) < 1e-12);
    // u⌟φ has norm² 3|u|² for the induced metric.
    let u = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let w = interior(&u, pt.phi());
    let n2 = g2deform::tensor7::inner(&w, &w, pt.metric());
    let u2 = pt.metric().inner_vectors(&u, &u);
    assert!((n2 - 3.0 * u2).abs() < 1e-10);
}
