//! Pointwise G₂-structure algebra: the standard form, metric from a 3-form,
//! representation-theoretic splittings of 2- and 3-forms, and the deformed `s̃`.

use crate::combinatorics::{complement, perm_sign};
use crate::error::{Error, Result};
use crate::linalg::{det7, inverse7, is_positive_definite, matmul7, rank};
use crate::scalar::{zero_mat, Mat7, Real};
use crate::tensor7::{hodge, inner, interior, top_coefficient, wedge, Metric7, Symmetry, Tensor7};

/// Increasing index triples of the standard 3-form and their signs.
pub const PHI0_TERMS: [([usize; 3], f64); 7] = [
    ([0, 1, 2], 1.0),
    ([0, 3, 4], 1.0),
    ([0, 5, 6], 1.0),
    ([1, 3, 5], 1.0),
    ([1, 4, 6], -1.0),
    ([2, 3, 6], -1.0),
    ([2, 4, 5], -1.0),
];

/// Increasing index quadruples of `ψ₀ = *φ₀` and their signs.
pub const PSI0_TERMS: [([usize; 4], f64); 7] = [
    ([0, 1, 3, 6], -1.0),
    ([0, 1, 4, 5], -1.0),
    ([0, 2, 3, 5], -1.0),
    ([0, 2, 4, 6], 1.0),
    ([1, 2, 3, 4], 1.0),
    ([1, 2, 5, 6], 1.0),
    ([3, 4, 5, 6], 1.0),
];

/// `φ₀ = e¹²³ + e¹⁴⁵ + e¹⁶⁷ + e²⁴⁶ − e²⁵⁷ − e³⁴⁷ − e³⁵⁶`.
pub fn phi0<S: Real>() -> Tensor7<S> {
    let terms: Vec<(S, &[usize])> = PHI0_TERMS.iter().map(|(i, c)| (S::lit(*c), &i[..])).collect();
    Tensor7::form(&terms)
}

pub fn psi0<S: Real>() -> Tensor7<S> {
    let terms: Vec<(S, &[usize])> = PSI0_TERMS.iter().map(|(i, c)| (S::lit(*c), &i[..])).collect();
    Tensor7::form(&terms)
}

/// Cross product `(u × w)_c = φ_abc u^a w^b` with Euclidean index placement.
pub fn cross<S: Real>(phi: &Tensor7<S>, u: &[S; 7], w: &[S; 7]) -> [S; 7] {
    let uw = interior(w, &interior(u, phi));
    uw.to_vec7()
}

/// `B(u,v) = (1/6)(u⌟φ)∧(v⌟φ)∧φ` as coefficients of `e^{1..7}`.
pub fn bilinear_form_b<S: Real>(phi: &Tensor7<S>) -> Mat7<S> {
    let mut b = zero_mat::<S>();
    let slices: Vec<Tensor7<S>> = (0..7)
        .map(|a| {
            let mut e = [S::zero(); 7];
            e[a] = S::one();
            interior(&e, phi)
        })
        .collect();
    let sixth = S::one() / S::lit(6.0);
    for a in 0..7 {
        for c in a..7 {
            let w = wedge(&wedge(&slices[a], &slices[c]).expect("2+2 <= 7"), phi).expect("4+3 <= 7");
            let v = top_coefficient(&w) * sixth;
            b[a][c] = v;
            b[c][a] = v;
        }
    }
    b
}

/// `Ω(γ)^{mnpq} = γ_rst ε̂^{mnpqrst}`.
fn epsilon_dual<S: Real>(gamma: &Tensor7<S>) -> Tensor7<S> {
    let six = S::lit(6.0);
    Tensor7::form_from_fn(4, |i| {
        let (c, _) = complement(i);
        let mut seq = i.to_vec();
        seq.extend_from_slice(&c);
        let s = perm_sign(&seq);
        let v = gamma.get(&c) * six;
        if s > 0 {
            v
        } else {
            -v
        }
    })
}

/// `Σ a_amn b_bpq C^{mnpq}`.
fn quad_contract<S: Real>(a: &Tensor7<S>, b: &Tensor7<S>, c: &Tensor7<S>) -> Mat7<S> {
    let ad = a.data();
    let bd = b.data();
    let cd = c.data();
    let mut x = [S::zero(); 7 * 49];
    for i in 0..7 {
        for mn in 0..49 {
            let aim = ad[i * 49 + mn];
            if aim != S::zero() {
                let row = &cd[mn * 49..mn * 49 + 49];
                for (pq, &cv) in row.iter().enumerate() {
                    x[i * 49 + pq] = x[i * 49 + pq] + aim * cv;
                }
            }
        }
    }
    let mut out = zero_mat::<S>();
    for i in 0..7 {
        for j in 0..7 {
            out[i][j] = (0..49).map(|pq| x[i * 49 + pq] * bd[j * 49 + pq]).sum();
        }
    }
    out
}

/// Trilinear `s(α,β,γ)_ab = (1/144) α_amn β_bpq γ_rst ε̂^{mnpqrst}`.
pub fn s_trilinear<S: Real>(alpha: &Tensor7<S>, beta: &Tensor7<S>, gamma: &Tensor7<S>) -> Mat7<S> {
    let omega = epsilon_dual(gamma);
    let mut s = quad_contract(alpha, beta, &omega);
    let w = S::one() / S::lit(144.0);
    for row in s.iter_mut() {
        for x in row.iter_mut() {
            *x = *x * w;
        }
    }
    s
}

/// `s_ab = (1/144) φ_amn φ_bpq φ_rst ε̂^{mnpqrst}`, symmetrized against rounding.
pub fn s_tensor<S: Real>(phi: &Tensor7<S>) -> Mat7<S> {
    symmetrize(&s_trilinear(phi, phi, phi))
}

pub(crate) fn symmetrize<S: Real>(m: &Mat7<S>) -> Mat7<S> {
    let half = S::lit(0.5);
    let mut out = *m;
    for i in 0..7 {
        for j in 0..7 {
            out[i][j] = (m[i][j] + m[j][i]) * half;
        }
    }
    out
}

/// `g = (det s)^{-1/9} s`; fails with `NotPositive` unless `s` is positive definite.
pub fn metric_from_phi<S: Real>(phi: &Tensor7<S>) -> Result<Metric7<S>> {
    let s = s_tensor(phi);
    metric_from_s(&s)
}

pub(crate) fn metric_from_s<S: Real>(s: &Mat7<S>) -> Result<Metric7<S>> {
    if !is_positive_definite(s, S::lit(1e-12)) {
        return Err(Error::NotPositive);
    }
    let det = det7(s);
    let scale = det.powf(-S::one() / S::lit(9.0));
    let mut g = *s;
    for row in g.iter_mut() {
        for x in row.iter_mut() {
            *x = *x * scale;
        }
    }
    Metric7::new(g)
}

/// Directional derivative of the metric along `dphi` at `phi` (chain rule through `s`).
pub fn metric_derivative<S: Real>(phi: &Tensor7<S>, dphi: &Tensor7<S>, s: &Mat7<S>) -> Mat7<S> {
    let ds = symmetrize(&{
        let a = s_trilinear(dphi, phi, phi);
        let b = s_trilinear(phi, dphi, phi);
        let c = s_trilinear(phi, phi, dphi);
        let mut out = zero_mat::<S>();
        for i in 0..7 {
            for j in 0..7 {
                out[i][j] = a[i][j] + b[i][j] + c[i][j];
            }
        }
        out
    });
    let s_inv = inverse7(s).expect("s is invertible for a positive form");
    let tr: S = {
        let p = matmul7(&s_inv, &ds);
        (0..7).map(|i| p[i][i]).sum()
    };
    let scale = det7(s).powf(-S::one() / S::lit(9.0));
    let ninth = S::one() / S::lit(9.0);
    let mut dg = zero_mat::<S>();
    for i in 0..7 {
        for j in 0..7 {
            dg[i][j] = scale * (ds[i][j] - ninth * tr * s[i][j]);
        }
    }
    dg
}

/// A G₂-structure at a point with its derived data cached.
#[derive(Clone, Debug)]
pub struct G2Point<S> {
    phi: Tensor7<S>,
    s: Mat7<S>,
    metric: Metric7<S>,
    vol: S,
    psi: Tensor7<S>,
    phi_up: Tensor7<S>,
    psi_up: Tensor7<S>,
}

impl<S: Real> G2Point<S> {
    pub fn new(phi: Tensor7<S>) -> Result<Self> {
        let s = s_tensor(&phi);
        let metric = metric_from_s(&s)?;
        let vol = metric.sqrt_det()?;
        let psi = hodge(&phi, &metric)?;
        let phi_up = phi.apply_all_slots(metric.inv());
        let psi_up = psi.apply_all_slots(metric.inv());
        Ok(Self {
            phi,
            s,
            metric,
            vol,
            psi,
            phi_up,
            psi_up,
        })
    }

    /// The flat structure `(φ₀, δ)`.
    pub fn standard() -> Self {
        Self::new(phi0()).expect("φ₀ is positive")
    }

    pub fn phi(&self) -> &Tensor7<S> {
        &self.phi
    }

    /// The unnormalized `s_ab` of `φ`.
    pub fn s(&self) -> &Mat7<S> {
        &self.s
    }

    pub fn metric(&self) -> &Metric7<S> {
        &self.metric
    }

    pub fn g(&self) -> &Mat7<S> {
        self.metric.g()
    }

    pub fn g_inv(&self) -> &Mat7<S> {
        self.metric.inv()
    }

    /// `√det g`.
    pub fn vol(&self) -> S {
        self.vol
    }

    pub fn psi(&self) -> &Tensor7<S> {
        &self.psi
    }

    /// `φ^{abc}` with all indices raised.
    pub fn phi_up(&self) -> &Tensor7<S> {
        &self.phi_up
    }

    /// `ψ^{abcd}` with all indices raised.
    pub fn psi_up(&self) -> &Tensor7<S> {
        &self.psi_up
    }

    pub fn raise(&self, v: &[S; 7]) -> [S; 7] {
        self.metric.raise_vec(v)
    }

    pub fn lower(&self, v: &[S; 7]) -> [S; 7] {
        self.metric.lower_vec(v)
    }

    /// `|α|²` of a covector.
    pub fn norm2(&self, alpha: &[S; 7]) -> S {
        self.metric.inner_covectors(alpha, alpha)
    }
}

/// `(α⌟φ)_ab = α^c φ_cab` for a covector `α`.
pub fn vec7_to_2form<S: Real>(alpha: &[S; 7], pt: &G2Point<S>) -> Tensor7<S> {
    interior(&pt.raise(alpha), pt.phi())
}

/// `χ_bcd = α^e ψ_bcde` for a covector `α` (insertion into the last slot).
pub fn vec7_to_3form<S: Real>(alpha: &[S; 7], pt: &G2Point<S>) -> Tensor7<S> {
    interior(&pt.raise(alpha), pt.psi()).scale(-S::one())
}

/// `χ_abc = h_[a^d φ_bc]d` with weight-one antisymmetrization.
pub fn sym27_to_3form<S: Real>(h: &Mat7<S>, pt: &G2Point<S>) -> Tensor7<S> {
    let h_mixed = matmul7(h, pt.g_inv());
    let raw = Tensor7::from_fn(3, |i| {
        (0..7).map(|d| h_mixed[i[0]][d] * pt.phi().at3(i[1], i[2], d)).sum()
    });
    raw.antisymmetrize()
}

/// Splitting `Λ² = Λ²₇ ⊕ Λ²₁₄`.
#[derive(Clone, Debug)]
pub struct TwoFormDecomp<S> {
    /// Lowered vector `α` of the `α⌟φ` part.
    pub vec7: [S; 7],
    pub om14: Tensor7<S>,
}

impl<S: Real> TwoFormDecomp<S> {
    pub fn reconstruct(&self, pt: &G2Point<S>) -> Tensor7<S> {
        vec7_to_2form(&self.vec7, pt).add(&self.om14).with_symmetry(Symmetry::Antisymmetric)
    }
}

/// `α^a = (1/6) φ^{abc} ω_bc`, returned lowered.
pub(crate) fn extract_vec7_from_2form<S: Real>(om: &Tensor7<S>, pt: &G2Point<S>) -> [S; 7] {
    let sixth = S::one() / S::lit(6.0);
    let up = pt.phi_up();
    let mut v = [S::zero(); 7];
    for (a, va) in v.iter_mut().enumerate() {
        let mut acc = S::zero();
        for bc in 0..49 {
            acc = acc + up.data()[a * 49 + bc] * om.data()[bc];
        }
        *va = acc * sixth;
    }
    pt.lower(&v)
}

pub fn decompose_2form<S: Real>(om: &Tensor7<S>, pt: &G2Point<S>) -> TwoFormDecomp<S> {
    let vec7 = extract_vec7_from_2form(om, pt);
    let om14 = om.sub(&vec7_to_2form(&vec7, pt)).with_symmetry(Symmetry::Antisymmetric);
    TwoFormDecomp { vec7, om14 }
}

/// Splitting `Λ³ = Λ³₁ ⊕ Λ³₇ ⊕ Λ³₂₇`.
#[derive(Clone, Debug)]
pub struct ThreeFormDecomp<S> {
    pub lambda1: S,
    /// Lowered vector `α` of the `α^e ψ_bcde` part.
    pub vec7: [S; 7],
    /// Traceless symmetric `h` with the `Λ³₂₇` part equal to `h_[a^d φ_bc]d`.
    pub h27: Mat7<S>,
}

impl<S: Real> ThreeFormDecomp<S> {
    pub fn reconstruct(&self, pt: &G2Point<S>) -> Tensor7<S> {
        pt.phi()
            .scale(self.lambda1)
            .add(&vec7_to_3form(&self.vec7, pt))
            .add(&sym27_to_3form(&self.h27, pt))
            .with_symmetry(Symmetry::Antisymmetric)
    }
}

pub fn decompose_3form<S: Real>(chi: &Tensor7<S>, pt: &G2Point<S>) -> ThreeFormDecomp<S> {
    let lambda1 = inner(chi, pt.phi(), pt.metric()) / inner(pt.phi(), pt.phi(), pt.metric());
    let psi_up = pt.psi_up();
    let w = S::one() / S::lit(24.0);
    let mut v_up = [S::zero(); 7];
    for (m, vm) in v_up.iter_mut().enumerate() {
        let mut acc = S::zero();
        for bcd in 0..343 {
            let c = chi.data()[bcd];
            if c != S::zero() {
                acc = acc + c * psi_up.data()[bcd * 7 + m];
            }
        }
        *vm = acc * w;
    }
    let vec7 = pt.lower(&v_up);
    let rest = chi
        .sub(&pt.phi().scale(lambda1))
        .sub(&vec7_to_3form(&vec7, pt));
    let rest_up = rest.apply_slot(1, pt.g_inv()).and_then(|t| t.apply_slot(2, pt.g_inv())).expect("rank 3");
    let mut j = zero_mat::<S>();
    for a in 0..7 {
        for b in 0..7 {
            j[a][b] = (0..49).map(|cd| rest_up.data()[a * 49 + cd] * pt.phi().data()[b * 49 + cd]).sum();
        }
    }
    let mut h = symmetrize(&j);
    let three_quarters = S::lit(0.75);
    for row in h.iter_mut() {
        for x in row.iter_mut() {
            *x = *x * three_quarters;
        }
    }
    let tr = (0..7)
        .flat_map(|a| (0..7).map(move |b| (a, b)))
        .map(|(a, b)| pt.g_inv()[a][b] * h[a][b])
        .sum::<S>()
        / S::lit(7.0);
    for a in 0..7 {
        for b in 0..7 {
            h[a][b] = h[a][b] - tr * pt.g()[a][b];
        }
    }
    ThreeFormDecomp { lambda1, vec7, h27: h }
}

fn form_row<S: Real>(t: &Tensor7<S>, p: usize) -> Vec<S> {
    crate::combinatorics::sorted_subsets(p).iter().map(|i| t.get(i)).collect()
}

/// Ranks of the projections onto `Λ²₇, Λ²₁₄` and `Λ³₁, Λ³₇, Λ³₂₇`, sampled on basis forms.
pub fn projector_ranks<S: Real>(pt: &G2Point<S>, rel_tol: S) -> ([usize; 2], [usize; 3]) {
    let (mut r7, mut r14) = (Vec::new(), Vec::new());
    for idx in crate::combinatorics::sorted_subsets(2) {
        let d = decompose_2form(&Tensor7::basis_form(idx), pt);
        r7.push(form_row(&vec7_to_2form(&d.vec7, pt), 2));
        r14.push(form_row(&d.om14, 2));
    }
    let (mut s1, mut s7, mut s27) = (Vec::new(), Vec::new(), Vec::new());
    for idx in crate::combinatorics::sorted_subsets(3) {
        let d = decompose_3form(&Tensor7::basis_form(idx), pt);
        s1.push(form_row(&pt.phi().scale(d.lambda1), 3));
        s7.push(form_row(&vec7_to_3form(&d.vec7, pt), 3));
        s27.push(form_row(&sym27_to_3form(&d.h27, pt), 3));
    }
    (
        [rank(&r7, rel_tol), rank(&r14, rel_tol)],
        [rank(&s1, rel_tol), rank(&s7, rel_tol), rank(&s27, rel_tol)],
    )
}

/// The unnormalized deformed metric `s̃` of `φ + χ`:
/// `s̃_ab = g_ab + ½ χ_mn(a φ_b)^mn + ⅛ χ_amn χ_bpq ψ^mnpq + (1/24) χ_amn χ_bpq (*χ)^mnpq`.
pub fn deformed_s<S: Real>(chi: &Tensor7<S>, pt: &G2Point<S>) -> Result<Mat7<S>> {
    let phi_mid = pt
        .phi()
        .apply_slot(1, pt.g_inv())
        .and_then(|t| t.apply_slot(2, pt.g_inv()))?;
    let star_chi_up = hodge(chi, pt.metric())?.apply_all_slots(pt.g_inv());
    let mut lin = zero_mat::<S>();
    for a in 0..7 {
        for b in 0..7 {
            lin[a][b] = (0..49).map(|mn| chi.data()[a * 49 + mn] * phi_mid.data()[b * 49 + mn]).sum();
        }
    }
    let lin = symmetrize(&lin);
    let q1 = quad_contract(chi, chi, pt.psi_up());
    let q2 = quad_contract(chi, chi, &star_chi_up);
    let (half, eighth, w24) = (S::lit(0.5), S::lit(0.125), S::one() / S::lit(24.0));
    let mut s = *pt.g();
    for a in 0..7 {
        for b in 0..7 {
            s[a][b] = s[a][b] + half * lin[a][b] + eighth * q1[a][b] + w24 * q2[a][b];
        }
    }
    Ok(symmetrize(&s))
}

/// Metric of `φ + χ` from `s̃`: `g̃ = (det g / det s̃)^{1/9} s̃`.
pub fn metric_from_deformed_s<S: Real>(s_tilde: &Mat7<S>, pt: &G2Point<S>) -> Result<Metric7<S>> {
    if !is_positive_definite(s_tilde, S::lit(1e-12)) {
        return Err(Error::NotPositive);
    }
    let rho = (pt.metric().det() / det7(s_tilde)).powf(S::one() / S::lit(9.0));
    let mut g = *s_tilde;
    for row in g.iter_mut() {
        for x in row.iter_mut() {
            *x = *x * rho;
        }
    }
    Metric7::new(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff7;
    use crate::scalar::identity_mat;

    #[test]
    fn standard_form_gives_euclidean_metric() {
        let phi = phi0::<f64>();
        assert!(max_abs_diff7(&s_tensor(&phi), &identity_mat()) < 1e-14);
        assert!(max_abs_diff7(&bilinear_form_b(&phi), &identity_mat()) < 1e-14);
        let pt = G2Point::new(phi).unwrap();
        assert!(max_abs_diff7(pt.g(), &identity_mat()) < 1e-14);
        assert!((pt.vol() - 1.0).abs() < 1e-14);
        assert!(pt.psi().max_abs_diff(&psi0()) < 1e-14);
    }

    #[test]
    fn interior_of_e1() {
        let phi = phi0::<f64>();
        let e1 = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(interior(&e1, &phi).at2(1, 2), 1.0);
    }

    #[test]
    fn zero_form_is_not_positive() {
        assert_eq!(metric_from_phi(&Tensor7::<f64>::zeros(3)).unwrap_err(), Error::NotPositive);
        assert!(bilinear_form_b(&Tensor7::<f64>::zeros(3)).iter().flatten().all(|x| *x == 0.0));
    }

    #[test]
    fn scaled_form_scales_metric() {
        let phi = phi0::<f64>().scale(8.0);
        let g = metric_from_phi(&phi).unwrap();
        let mut want = identity_mat::<f64>();
        for (i, row) in want.iter_mut().enumerate() {
            row[i] = 4.0;
        }
        assert!(max_abs_diff7(g.g(), &want) < 1e-13);
        assert!(max_abs_diff7(&s_tensor(&phi), &{
            let mut m = identity_mat::<f64>();
            for (i, row) in m.iter_mut().enumerate() {
                row[i] = 512.0;
            }
            m
        }) < 1e-10);
    }

    #[test]
    fn cross_product_pattern() {
        let phi = phi0::<f64>();
        let mut e1 = [0.0; 7];
        e1[0] = 1.0;
        let mut e2 = [0.0; 7];
        e2[1] = 1.0;
        let c = cross(&phi, &e1, &e2);
        assert_eq!(c, [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn deformed_s_examples() {
        let pt = G2Point::<f64>::standard();
        assert!(max_abs_diff7(&deformed_s(&Tensor7::zeros(3), &pt).unwrap(), pt.g()) < 1e-15);
        let chi = vec7_to_3form(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], &pt);
        let s = deformed_s(&chi, &pt).unwrap();
        let mut want = identity_mat::<f64>();
        for (i, row) in want.iter_mut().enumerate() {
            row[i] = if i == 0 { 1.0 } else { 2.0 };
        }
        assert!(max_abs_diff7(&s, &want) < 1e-13);
    }

    #[test]
    fn three_form_split_of_basic_pieces() {
        let pt = G2Point::<f64>::standard();
        let d = decompose_3form(pt.phi(), &pt);
        assert!((d.lambda1 - 1.0).abs() < 1e-14);
        let mut e3 = [0.0; 7];
        e3[2] = 1.0;
        let d = decompose_3form(&vec7_to_3form(&e3, &pt), &pt);
        assert!(d.lambda1.abs() < 1e-14);
        assert!(d.vec7.iter().zip(e3).all(|(x, y)| (x - y).abs() < 1e-14));
        assert!(d.h27.iter().flatten().all(|x| x.abs() < 1e-14));
    }
}
