//! Conformal and `Λ³₇` deformations, the closed-form torsion of a deformed
//! structure, and the equations governing `W₁ ⊕ W₇ → W₁` deformations.

use std::sync::Arc;

use crate::chartfield::{
    covariant_derivative, partials, torsion_components, Christoffel, G2Field, ScalarField, TorsionDecomp,
    VectorField,
};
use crate::error::{Error, Result};
use crate::g2algebra::{decompose_3form, deformed_s, metric_from_deformed_s, metric_from_phi, vec7_to_2form, G2Point};
use crate::linalg::{inverse7, matmul7, max_abs_diff7, max_abs7};
use crate::scalar::{zero_mat, Mat7, Point7, Real};
use crate::tensor7::{hodge, interior, Symmetry, Tensor7};

/// The field `x ↦ f(x)³ φ(x)`; fails if `f ≤ 0` at any of `samples` chart points.
pub fn conformal_deform<S: Real>(field: &G2Field<S>, f: &ScalarField<S>, samples: usize) -> Result<G2Field<S>> {
    let chart = field.chart().clone();
    let mut pts = chart.samples(samples, S::zero());
    pts.push(chart.center());
    for x in &pts {
        let v = f.at(x);
        if !(v > S::zero()) {
            return Err(Error::NonPositiveFactor(v.to_f64_lossy()));
        }
    }
    let phi = field.phi_fn();
    let fv = f.clone();
    let mut out = G2Field::new(chart, move |x| {
        let c = fv.at(x);
        phi(x).scale(c * c * c)
    });
    match (field.dphi_fn(), f.has_gradient()) {
        (Some(dphi), true) if field.has_analytic() => {
            let phi = field.phi_fn();
            let fv = f.clone();
            out = out.with_analytic(move |x| {
                let c = fv.at(x);
                let df = fv.gradient(x, S::zero());
                let p = phi(x);
                dphi(x)
                    .iter()
                    .enumerate()
                    .map(|(a, d)| d.lin_comb(c * c * c, &p, S::lit(3.0) * c * c * df[a]))
                    .collect()
            });
        }
        _ => out = out.with_policy(field.policy()),
    }
    Ok(out)
}

/// `T̃ = f T − df⌟φ` with `(df⌟φ)_ab = g^{cd} ∂_d f φ_cab`; `t` is lowered by the old metric, the result by the new one.
pub fn conformal_torsion<S: Real>(t: &Mat7<S>, f: S, df: &[S; 7], pt: &G2Point<S>) -> Mat7<S> {
    let dfphi = vec7_to_2form(df, pt).to_mat();
    let mut out = zero_mat::<S>();
    for i in 0..7 {
        for j in 0..7 {
            out[i][j] = f * t[i][j] - dfphi[i][j];
        }
    }
    out
}

/// `v^e ψ_bcde` for an upper-index `v`.
pub fn insert_vector<S: Real>(v_up: &[S; 7], psi: &Tensor7<S>) -> Tensor7<S> {
    interior(v_up, psi).scale(-S::one())
}

/// The field `φ̃ = φ + v^e ψ_bcde`.
pub fn vector_deform<S: Real>(field: &G2Field<S>, v: &VectorField<S>) -> G2Field<S> {
    let phi = field.phi_fn();
    let v = v.clone();
    let out = G2Field::new(field.chart().clone(), move |x| {
        let p = phi(x);
        match G2Point::new(p.clone()) {
            Ok(pt) => p.add(&insert_vector(&v.upper_at(x, &pt), pt.psi())),
            Err(_) => Tensor7::zeros(3).scale(S::nan()),
        }
    });
    let policy = match field.policy() {
        crate::chartfield::DerivativePolicy::Analytic => crate::chartfield::DerivativePolicy::central_default(),
        p => p,
    };
    out.with_policy(policy)
}

/// Closed-form metric data of `φ + v^e ψ_bcde` with cross-checks against the direct construction.
#[derive(Clone, Debug)]
pub struct VectorDeformReport<S> {
    pub m: S,
    /// `(1+M) g − v♭⊗v♭`.
    pub s_tilde: Mat7<S>,
    /// `(det g̃ / det g)^{1/2}` predicted as `(1+M)^{2/3}`.
    pub det_ratio: S,
    pub g_tilde: Mat7<S>,
    pub g_tilde_inv: Mat7<S>,
    /// `max |g̃ − metric_from_phi(φ̃)|`.
    pub metric_agreement: S,
    /// `|(det g̃/det g)^{1/2} − (1+M)^{2/3}|` with `g̃` built directly.
    pub det_agreement: S,
    /// `max |g̃^{-1} g̃ − id|` for the closed-form pair.
    pub inverse_agreement: S,
    /// `max |deformed_s − (1+M) g + v♭⊗v♭|`.
    pub s_agreement: S,
}

pub fn vector_deform_report<S: Real>(pt: &G2Point<S>, v_up: &[S; 7]) -> Result<VectorDeformReport<S>> {
    let v_low = pt.lower(v_up);
    let m: S = (0..7).map(|i| v_up[i] * v_low[i]).sum();
    let q = S::one() + m;
    let two_thirds = S::lit(2.0) / S::lit(3.0);
    let mut s_tilde = zero_mat::<S>();
    let mut g_tilde = zero_mat::<S>();
    let mut g_tilde_inv = zero_mat::<S>();
    let down = q.powf(-two_thirds);
    let up = q.powf(-S::one() / S::lit(3.0));
    for a in 0..7 {
        for b in 0..7 {
            s_tilde[a][b] = q * pt.g()[a][b] - v_low[a] * v_low[b];
            g_tilde[a][b] = down * s_tilde[a][b];
            g_tilde_inv[a][b] = up * (pt.g_inv()[a][b] + v_up[a] * v_up[b]);
        }
    }
    let chi = insert_vector(v_up, pt.psi());
    let direct = metric_from_phi(&pt.phi().add(&chi))?;
    let det_ratio = q.powf(two_thirds);
    let direct_ratio = (direct.det() / pt.metric().det()).sqrt();
    let prod = matmul7(&g_tilde_inv, &g_tilde);
    let s_gen = deformed_s(&chi, pt)?;
    Ok(VectorDeformReport {
        m,
        s_tilde,
        det_ratio,
        g_tilde,
        g_tilde_inv,
        metric_agreement: max_abs_diff7(&g_tilde, direct.g()),
        det_agreement: (direct_ratio - det_ratio).abs(),
        inverse_agreement: max_abs_diff7(&prod, &crate::scalar::identity_mat()),
        s_agreement: max_abs_diff7(&s_gen, &s_tilde),
    })
}

/// New torsion `T̃_an` of `φ + χ` from the old structure.
///
/// `t_mixed` is the old `T_a^m`, `grad_chi[a,b,c,d] = ∇_a χ_bcd` and
/// `grad_s_tilde[d,a,b] = ∇_d s̃_ab`, all with the old connection. Raised
/// indices in the correction terms use the old metric, `*χ` is taken with the
/// old metric, and the trace term uses `g̃^{pq}`.
pub fn new_torsion_closed_form<S: Real>(
    t_mixed: &Mat7<S>,
    chi: &Tensor7<S>,
    grad_chi: &Tensor7<S>,
    grad_s_tilde: &Tensor7<S>,
    pt: &G2Point<S>,
) -> Result<Mat7<S>> {
    let s_tilde = deformed_s(chi, pt)?;
    let g_tilde = metric_from_deformed_s(&s_tilde, pt)?;
    let ratio = pt.metric().det() / g_tilde.det();
    let g_inv = pt.g_inv();
    let star_chi_up = hodge(chi, pt.metric())?.apply_all_slots(g_inv);
    let psi_up = pt.psi_up().data();
    let psi = pt.psi().data();
    let sc = star_chi_up.data();
    let gc = grad_chi.data();

    let mut first = zero_mat::<S>();
    for a in 0..7 {
        for m in 0..7 {
            let mut acc = S::lit(24.0) * t_mixed[a][m];
            for e in 0..7 {
                let tae = t_mixed[a][e];
                if tae != S::zero() {
                    let pe = &psi[e * 343..e * 343 + 343];
                    let sm = &sc[m * 343..m * 343 + 343];
                    acc = acc + tae * pe.iter().zip(sm).map(|(&x, &y)| x * y).sum::<S>();
                }
            }
            let ga = &gc[a * 343..a * 343 + 343];
            for bcd in 0..343 {
                let gv = ga[bcd];
                if gv != S::zero() {
                    acc = acc + gv * (psi_up[m * 343 + bcd] + sc[m * 343 + bcd]);
                }
            }
            first[a][m] = acc;
        }
    }
    let first = matmul7(&first, &s_tilde);

    // K_c^{bd} = 4φ_c^{bd} + φ_cpq *χ^{pqbd} + χ_cpq ψ^{pqbd} + χ_cpq *χ^{pqbd}
    let phi_mid = pt.phi().apply_slot(1, g_inv)?.apply_slot(2, g_inv)?;
    let phi = pt.phi().data();
    let chd = chi.data();
    let mut k = [S::zero(); 343];
    for c in 0..7 {
        for bd in 0..49 {
            let mut acc = S::lit(4.0) * phi_mid.data()[c * 49 + bd];
            for pq in 0..49 {
                let (fp, xp) = (phi[c * 49 + pq], chd[c * 49 + pq]);
                if fp != S::zero() || xp != S::zero() {
                    let scv = sc[pq * 49 + bd];
                    acc = acc + fp * scv + xp * (psi_up[pq * 49 + bd] + scv);
                }
            }
            k[c * 49 + bd] = acc;
        }
    }
    let gs = grad_s_tilde.data();
    let gt_inv = g_tilde.inv();
    let mut trd = [S::zero(); 7];
    for (d, t) in trd.iter_mut().enumerate() {
        let mut acc = S::zero();
        for p in 0..7 {
            for q in 0..7 {
                acc = acc + gt_inv[p][q] * gs[(d * 7 + p) * 7 + q];
            }
        }
        *t = acc;
    }
    let ninth = S::one() / S::lit(9.0);
    let mut second = zero_mat::<S>();
    for a in 0..7 {
        for n in 0..7 {
            let mut acc = S::zero();
            for b in 0..7 {
                for d in 0..7 {
                    acc = acc + k[(n * 7 + b) * 7 + d] * gs[(b * 7 + a) * 7 + d];
                    acc = acc - ninth * k[(a * 7 + b) * 7 + d] * g_tilde.g()[b][n] * trd[d];
                }
            }
            second[a][n] = acc;
        }
    }
    let w = ratio / S::lit(24.0);
    let three = S::lit(3.0);
    let mut out = zero_mat::<S>();
    for a in 0..7 {
        for n in 0..7 {
            out[a][n] = w * (first[a][n] - three * second[a][n]);
        }
    }
    Ok(out)
}

/// Evaluates [`new_torsion_closed_form`] for `field + chi` at `x`, differentiating
/// `χ` and `s̃` with the field's step and the old Levi-Civita connection.
pub fn closed_form_torsion_at<S: Real>(
    field: &G2Field<S>,
    chi: &(impl Fn(&Point7<S>) -> Tensor7<S> + ?Sized),
    x: &Point7<S>,
) -> Result<Mat7<S>> {
    let y = field.chart().clamp(x, S::lit(3.0) * field.step());
    let jet = field.jet(&y)?;
    let t = crate::chartfield::torsion_from_jet(&jet, y);
    let step = field.step();
    let chi_at = |z: &Point7<S>| chi(z);
    let chi0 = chi_at(&y);
    let grad_chi = covariant_derivative(&chi0, &partials(&chi_at, &y, step, false), &jet.gamma);
    let s_at = |z: &Point7<S>| match field.point_at(z) {
        Ok(p) => match deformed_s(&chi(z), &p) {
            Ok(s) => Tensor7::from_mat(&s, Symmetry::SymmetricPair),
            Err(_) => Tensor7::zeros(2).scale(S::nan()),
        },
        Err(_) => Tensor7::zeros(2).scale(S::nan()),
    };
    let grad_s = covariant_derivative(&s_at(&y), &partials(&s_at, &y, step, false), &jet.gamma);
    new_torsion_closed_form(&t.mixed, &chi0, &grad_chi, &grad_s, &jet.point)
}

/// `∇v = v₁ g + v₇⌟φ + v₁₄ + v₂₇` for `∇_a v_b` (derivative index first).
#[derive(Clone, Debug, PartialEq)]
pub struct GradVDecomp<S> {
    pub v1: S,
    pub v7: [S; 7],
    pub v14: Mat7<S>,
    pub v27: Mat7<S>,
}

impl<S: Real> GradVDecomp<S> {
    pub fn reconstruct(&self, pt: &G2Point<S>) -> Mat7<S> {
        TorsionDecomp {
            tau1: self.v1,
            tau7: self.v7,
            tau14: self.v14,
            tau27: self.v27,
        }
        .reconstruct(pt)
    }
}

pub fn grad_v_decompose<S: Real>(grad_v: &Mat7<S>, pt: &G2Point<S>) -> GradVDecomp<S> {
    let d = torsion_components(grad_v, pt);
    GradVDecomp {
        v1: d.tau1,
        v7: d.tau7,
        v14: d.tau14,
        v27: d.tau27,
    }
}

/// `∇_a v_b` of a vector field at `x` with the connection of `field`.
pub fn grad_covector<S: Real>(field: &G2Field<S>, v: &VectorField<S>, x: &Point7<S>) -> Result<Mat7<S>> {
    let jet = field.jet(x)?;
    Ok(grad_covector_with(field, v, x, &jet.point, &jet.gamma))
}

fn grad_covector_with<S: Real>(
    field: &G2Field<S>,
    v: &VectorField<S>,
    x: &Point7<S>,
    pt: &G2Point<S>,
    gamma: &Christoffel<S>,
) -> Mat7<S> {
    let low = |z: &Point7<S>| match field.point_at(z) {
        Ok(p) => Tensor7::vector(&v.lower_at(z, &p)),
        Err(_) => Tensor7::zeros(1).scale(S::nan()),
    };
    let value = Tensor7::vector(&v.lower_at(x, pt));
    covariant_derivative(&value, &partials(&low, x, field.step(), false), gamma).to_mat()
}

fn dot7<S: Real>(a: &[S; 7], b: &[S; 7]) -> S {
    (0..7).map(|i| a[i] * b[i]).sum()
}

/// `τ̃₁` and `τ̃₇` of `φ + v^e ψ_bcde` for a `W₁ ⊕ W₇` structure.
///
/// `tau7` and `v` are lowered; `M = |v|²` is recomputed from `pt`.
pub fn tilde_tau1_tau7<S: Real>(
    tau1: S,
    tau7: &[S; 7],
    v: &[S; 7],
    gvd: &GradVDecomp<S>,
    pt: &G2Point<S>,
) -> (S, [S; 7]) {
    let v_up = pt.raise(v);
    let t7_up = pt.raise(tau7);
    let v7_up = pt.raise(&gvd.v7);
    let m = dot7(v, &v_up);
    let q = S::one() + m;
    let c = |x: f64| S::lit(x);
    let t7v = dot7(tau7, &v_up);
    let v7v = dot7(&gvd.v7, &v_up);
    let ttilde1 = ((S::one() + m / c(7.0)) * tau1 - gvd.v1 - c(6.0 / 7.0) * t7v + c(3.0 / 7.0) * v7v)
        / q.powf(c(2.0 / 3.0));

    let phi = pt.phi();
    let g_inv = pt.g_inv();
    // v^a (v₂₇)_ab and its contraction with v.
    let mut v27v = [S::zero(); 7];
    for (b, out) in v27v.iter_mut().enumerate() {
        *out = (0..7).map(|a| v_up[a] * gvd.v27[a][b]).sum();
    }
    let mut v27v_up = [S::zero(); 7];
    for (b, out) in v27v_up.iter_mut().enumerate() {
        *out = (0..7).map(|j| g_inv[b][j] * v27v[j]).sum();
    }
    let mut t7 = [S::zero(); 7];
    let scalar_block = (c(6.0) * tau1 - c(6.0) * t7v - c(8.0) * gvd.v1 + c(3.0) * v7v) / (c(6.0) * q);
    for (cc, out) in t7.iter_mut().enumerate() {
        // φ_c^{ab} (τ₇)_a v_b = φ_cab τ₇^a v^b
        let mut phi_tv = S::zero();
        let mut phi_v_v27v = S::zero();
        let mut phi_v_v7 = S::zero();
        for a in 0..7 {
            for b in 0..7 {
                let p = phi.at3(cc, a, b);
                if p != S::zero() {
                    phi_tv = phi_tv + p * t7_up[a] * v_up[b];
                    phi_v_v27v = phi_v_v27v + p * v_up[a] * v27v_up[b];
                    phi_v_v7 = phi_v_v7 + p * v_up[a] * v7_up[b];
                }
            }
        }
        let tail = c(3.0) * (m + c(2.0)) * gvd.v7[cc] + v27v[cc] + phi_v_v27v + c(3.0) * phi_v_v7;
        *out = tau7[cc] - phi_tv / c(6.0) + v[cc] * scalar_block - tail / (c(6.0) * q);
    }
    (ttilde1, t7)
}

/// Right-hand side for `∇_a v_b` that makes `φ + v^e ψ_bcde` of class `W̃₁`.
///
/// With `q = 1 + M`, `w_b = φ_bcd τ₇^c v^d` and `φ^c_ab = g^{cd} φ_dab`:
/// ```text
/// (τ₁ − q^{2/3}τ̃₁ − ⟨τ₇,v⟩) g_ab + 4 q^{-1/3} τ̃₁ v_a v_b + (1/(M+9)) [3(M−3) τ₇_c φ^c_ab
///   + 3(1+M) v_a τ₇_b + (M+33) τ₇_a v_b + ⅓ v^c φ_cab (9τ₁ − 4τ̃₁(M+9)q^{-1/3} + τ₁M − 12⟨τ₇,v⟩)
///   − 12 v_a w_b + 12 w_a v_b − 12 τ₇^c v^d ψ_cdab]
/// ```
pub fn nabla_v_rhs<S: Real>(tau1: S, tau7: &[S; 7], v: &[S; 7], ttilde1: S, pt: &G2Point<S>) -> Mat7<S> {
    let parts = NablaVParts::new(tau1, tau7, v, ttilde1, pt);
    let c = |x: f64| S::lit(x);
    let mut out = zero_mat::<S>();
    for a in 0..7 {
        for b in 0..7 {
            let block = c(3.0) * (parts.m - c(3.0)) * parts.t_phi[a][b]
                + c(3.0) * parts.q * v[a] * tau7[b]
                + (parts.m + c(33.0)) * tau7[a] * v[b]
                + parts.v_phi[a][b] * parts.bracket / c(3.0)
                - c(12.0) * v[a] * parts.w[b]
                + c(12.0) * parts.w[a] * v[b]
                - c(12.0) * parts.tv_psi[a][b];
            out[a][b] = parts.g_coef * pt.g()[a][b] + parts.vv_coef * v[a] * v[b] + block / (parts.m + c(9.0));
        }
    }
    out
}

/// Variant of [`nabla_v_rhs`] with transposed indices and the opposite sign on the `(M+33)` term.
///
/// Kept to measure how far that reading is from the verified one.
pub fn nabla_v_rhs_literal<S: Real>(tau1: S, tau7: &[S; 7], v: &[S; 7], ttilde1: S, pt: &G2Point<S>) -> Mat7<S> {
    let parts = NablaVParts::new(tau1, tau7, v, ttilde1, pt);
    let c = |x: f64| S::lit(x);
    let mut out = zero_mat::<S>();
    for a in 0..7 {
        for b in 0..7 {
            let block = -c(3.0) * (parts.m - c(3.0)) * parts.t_phi[a][b]
                - (parts.m + c(33.0)) * v[a] * tau7[b]
                + c(3.0) * parts.q * tau7[a] * v[b]
                - parts.v_phi[a][b] * parts.bracket / c(3.0)
                + c(12.0) * v[a] * parts.w[b]
                - c(12.0) * v[b] * parts.w[a]
                + c(12.0) * parts.tv_psi[a][b];
            out[a][b] = parts.g_coef * pt.g()[a][b] + parts.vv_coef * v[a] * v[b] + block / (parts.m + c(9.0));
        }
    }
    out
}

struct NablaVParts<S> {
    m: S,
    q: S,
    g_coef: S,
    vv_coef: S,
    bracket: S,
    w: [S; 7],
    t_phi: Mat7<S>,
    v_phi: Mat7<S>,
    tv_psi: Mat7<S>,
}

impl<S: Real> NablaVParts<S> {
    fn new(tau1: S, tau7: &[S; 7], v: &[S; 7], ttilde1: S, pt: &G2Point<S>) -> Self {
        let c = |x: f64| S::lit(x);
        let v_up = pt.raise(v);
        let t_up = pt.raise(tau7);
        let m = dot7(v, &v_up);
        let q = S::one() + m;
        let tv = dot7(tau7, &v_up);
        let g_coef = tau1 - q.powf(c(2.0 / 3.0)) * ttilde1 - tv;
        let vv_coef = c(4.0) * q.powf(-c(1.0 / 3.0)) * ttilde1;
        let bracket = c(9.0) * tau1 - c(4.0) * ttilde1 * (m + c(9.0)) * q.powf(-c(1.0 / 3.0)) + tau1 * m - c(12.0) * tv;
        let t_phi = vec7_to_2form(tau7, pt).to_mat();
        let v_phi = vec7_to_2form(v, pt).to_mat();
        let phi = pt.phi();
        let mut w = [S::zero(); 7];
        for (b, wb) in w.iter_mut().enumerate() {
            let mut acc = S::zero();
            for cc in 0..7 {
                for d in 0..7 {
                    acc = acc + phi.at3(b, cc, d) * t_up[cc] * v_up[d];
                }
            }
            *wb = acc;
        }
        let tv_psi = interior(&v_up, &interior(&t_up, pt.psi())).to_mat();
        Self {
            m,
            q,
            g_coef,
            vv_coef,
            bracket,
            w,
            t_phi,
            v_phi,
            tv_psi,
        }
    }
}

/// `(τ₁, τ₇)` of a `W₁ ⊕ W₇` structure as functions on the chart; `τ₇` lowered.
pub type W1W7Fn<S> = Arc<dyn Fn(&Point7<S>) -> (S, [S; 7]) + Send + Sync>;

/// `(τ₁, τ₇)` read from FD torsion of `field`.
pub fn torsion_source<S: Real>(field: &G2Field<S>) -> W1W7Fn<S> {
    let f = field.clone();
    Arc::new(move |x| match crate::chartfield::torsion_decomp_at(&f, x) {
        Ok((d, _)) => (d.tau1, d.tau7),
        Err(_) => (S::nan(), [S::nan(); 7]),
    })
}

/// Residual `∇_a v_b − RHS_ab` at `x`, with `∇v` by central differences.
pub fn nabla_v_residual<S: Real>(
    field: &G2Field<S>,
    v: &VectorField<S>,
    tau: &W1W7Fn<S>,
    ttilde1: S,
    x: &Point7<S>,
) -> Result<Mat7<S>> {
    let y = field.chart().clamp(x, S::lit(3.0) * field.step());
    let jet = field.jet(&y)?;
    let gv = grad_covector_with(field, v, &y, &jet.point, &jet.gamma);
    let (t1, t7) = tau(&y);
    let rhs = nabla_v_rhs(t1, &t7, &v.lower_at(&y, &jet.point), ttilde1, &jet.point);
    let mut out = zero_mat::<S>();
    for a in 0..7 {
        for b in 0..7 {
            out[a][b] = gv[a][b] - rhs[a][b];
        }
    }
    Ok(out)
}

/// `W₁ ⊕ W₇` data with the proportionality function `V` (`v♭ = V τ₇`) and constant `A`.
#[derive(Clone)]
pub struct W1W7Data<S> {
    pub tau: W1W7Fn<S>,
    pub v_scale: ScalarField<S>,
    pub a: S,
}

impl<S: Real> W1W7Data<S> {
    /// `f = V τ₁`.
    pub fn f_at(&self, x: &Point7<S>) -> S {
        self.v_scale.at(x) * (self.tau)(x).0
    }

    /// The field `v♭ = V τ₇`.
    pub fn v_field(&self) -> VectorField<S> {
        let tau = Arc::clone(&self.tau);
        let vs = self.v_scale.clone();
        VectorField::new(crate::chartfield::Slot::Lower, move |x| {
            let (_, t7) = tau(x);
            let s = vs.at(x);
            let mut out = t7;
            for o in out.iter_mut() {
                *o = *o * s;
            }
            out
        })
    }
}

/// `τ̃₁ = (1/(4V)) (1 + V²|τ₇|²)^{1/3} (Vτ₁ − 3)`.
pub fn ttilde1_value<S: Real>(v_scale: S, tau1: S, tau7_norm2: S) -> Result<S> {
    if v_scale == S::zero() {
        return Err(Error::Degenerate("V = 0 gives the degenerate solution f = 0".into()));
    }
    Ok((S::one() + v_scale * v_scale * tau7_norm2).cbrt() * (v_scale * tau1 - S::lit(3.0)) / (S::lit(4.0) * v_scale))
}

/// `−¼ (V²|τ₇|² − 3)(Vτ₁ + 1)/V² g + ⅙ (V²τ₁² + 6Vτ₁ + 3) τ₇⊗τ₇`.
pub fn deltau7_rhs<S: Real>(v_scale: S, tau1: S, tau7: &[S; 7], pt: &G2Point<S>) -> Result<Mat7<S>> {
    if v_scale == S::zero() {
        return Err(Error::Degenerate("V = 0".into()));
    }
    let n2 = pt.norm2(tau7);
    let v2 = v_scale * v_scale;
    let g_coef = -(v2 * n2 - S::lit(3.0)) * (v_scale * tau1 + S::one()) / (S::lit(4.0) * v2);
    let tt_coef = (v2 * tau1 * tau1 + S::lit(6.0) * v_scale * tau1 + S::lit(3.0)) / S::lit(6.0);
    let mut out = zero_mat::<S>();
    for a in 0..7 {
        for b in 0..7 {
            out[a][b] = g_coef * pt.g()[a][b] + tt_coef * tau7[a] * tau7[b];
        }
    }
    Ok(out)
}

/// Pointwise report on the conditions characterizing `W₁ ⊕ W₇ → W̃₁` deformations.
#[derive(Clone, Debug)]
pub struct W1W7ConditionReport<S> {
    /// `max |v♭ − V τ₇|`.
    pub vprop_residual: S,
    /// `∇τ₇ − RHS`.
    pub deltau7_residual: Mat7<S>,
    pub deltau7_max: S,
    pub ttilde1_value: S,
}

pub fn w1w7_conditions<S: Real>(
    field: &G2Field<S>,
    w: &W1W7Data<S>,
    v: &VectorField<S>,
    x: &Point7<S>,
) -> Result<W1W7ConditionReport<S>> {
    let y = field.chart().clamp(x, S::lit(3.0) * field.step());
    let jet = field.jet(&y)?;
    let pt = &jet.point;
    let (t1, t7) = (w.tau)(&y);
    if t1 == S::zero() {
        return Err(Error::Precondition("τ₁ vanishes at the point".into()));
    }
    let vs = w.v_scale.at(&y);
    let ttilde1 = ttilde1_value(vs, t1, pt.norm2(&t7))?;
    let vl = v.lower_at(&y, pt);
    let vprop_residual = (0..7).fold(S::zero(), |m, i| m.max((vl[i] - vs * t7[i]).abs()));
    let tau = Arc::clone(&w.tau);
    let t7_of = move |z: &Point7<S>| Tensor7::vector(&tau(z).1);
    let grad_t7 = covariant_derivative(&Tensor7::vector(&t7), &partials(&t7_of, &y, field.step(), false), &jet.gamma)
        .to_mat();
    let rhs = deltau7_rhs(vs, t1, &t7, pt)?;
    let mut res = zero_mat::<S>();
    for a in 0..7 {
        for b in 0..7 {
            res[a][b] = grad_t7[a][b] - rhs[a][b];
        }
    }
    Ok(W1W7ConditionReport {
        vprop_residual,
        deltau7_max: max_abs7(&res),
        deltau7_residual: res,
        ttilde1_value: ttilde1,
    })
}

/// `Λ³₁`, `Λ³₇`, `Λ³₂₇` parts of the obstruction `∇_[a R_bc]` for a prescribed `∇v = R`.
#[derive(Clone, Debug)]
pub struct ConsistencyResidual<S> {
    pub xi1: S,
    pub xi7: [S; 7],
    pub xi27: Mat7<S>,
}

impl<S: Real> ConsistencyResidual<S> {
    pub fn max_abs(&self) -> S {
        let m7 = self.xi7.iter().fold(S::zero(), |m, v| m.max(v.abs()));
        self.xi1.abs().max(m7).max(max_abs7(&self.xi27))
    }
}

/// Which right-hand side feeds the consistency check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RhsForm {
    Verified,
    Literal,
}

/// Differentiates `RHS(x)` along the chart, antisymmetrizes and splits the resulting 3-form.
///
/// The full antisymmetrization removes the connection terms, so plain partials suffice.
pub fn consistency_residual<S: Real>(
    field: &G2Field<S>,
    v: &VectorField<S>,
    tau: &W1W7Fn<S>,
    ttilde1: S,
    x: &Point7<S>,
    outer_step: S,
    form: RhsForm,
) -> Result<ConsistencyResidual<S>> {
    let y = field.chart().clamp(x, outer_step + S::lit(3.0) * field.step());
    let pt = field.point_at(&y)?;
    let rhs_at = |z: &Point7<S>| match field.point_at(z) {
        Ok(p) => {
            let (t1, t7) = tau(z);
            let vl = v.lower_at(z, &p);
            let r = match form {
                RhsForm::Verified => nabla_v_rhs(t1, &t7, &vl, ttilde1, &p),
                RhsForm::Literal => nabla_v_rhs_literal(t1, &t7, &vl, ttilde1, &p),
            };
            Tensor7::from_mat(&r, Symmetry::None)
        }
        Err(_) => Tensor7::zeros(2).scale(S::nan()),
    };
    let d = partials(&rhs_at, &y, outer_step, false);
    let raw = Tensor7::from_fn(3, |i| d[i[0]].at2(i[1], i[2]));
    let xi = raw.antisymmetrize();
    if xi.max_abs().is_nan() {
        return Err(Error::NotPositive);
    }
    let dec = decompose_3form(&xi, &pt);
    Ok(ConsistencyResidual {
        xi1: dec.lambda1,
        xi7: dec.vec7,
        xi27: dec.h27,
    })
}

/// Inverse of `g̃` via the numeric inverse, for callers that want it directly.
pub fn deformed_metric_inverse<S: Real>(s_tilde: &Mat7<S>, pt: &G2Point<S>) -> Result<Mat7<S>> {
    let g = metric_from_deformed_s(s_tilde, pt)?;
    inverse7(g.g()).ok_or(Error::SingularMetric(g.det().to_f64_lossy()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn e1_vector_deformation_metric() {
        let pt = G2Point::<f64>::standard();
        let r = vector_deform_report(&pt, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((r.det_ratio - 2f64.powf(2.0 / 3.0)).abs() < 1e-14);
        assert!(r.metric_agreement < 1e-12 && r.det_agreement < 1e-12);
        assert!(r.inverse_agreement < 1e-12 && r.s_agreement < 1e-12);
        let k = 2f64.powf(-2.0 / 3.0);
        assert!((r.g_tilde[0][0] - k).abs() < 1e-14 && (r.g_tilde[3][3] - 2.0 * k).abs() < 1e-14);
    }

    #[test]
    fn ttilde1_examples() {
        assert_eq!(ttilde1_value(1.5, 2.0, 0.7).unwrap(), 0.0);
        assert!((ttilde1_value(1.0f64, 7.0, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(ttilde1_value(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn deltau7_g_coefficient_vanishes() {
        let pt = G2Point::<f64>::standard();
        let t7 = [3f64.sqrt(), 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let r = deltau7_rhs(1.0, 0.4, &t7, &pt).unwrap();
        assert!(r[1][1].abs() < 1e-14);
    }

    #[test]
    fn tilde_formulas_reduce_at_zero_v() {
        let pt = G2Point::<f64>::standard();
        let t7 = [0.1, -0.2, 0.3, 0.0, 0.5, 0.0, 0.7];
        let gvd = grad_v_decompose(&zero_mat(), &pt);
        let (t1, t7t) = tilde_tau1_tau7(1.3, &t7, &[0.0; 7], &gvd, &pt);
        assert_eq!(t1, 1.3);
        assert_eq!(t7t, t7);
    }
}
