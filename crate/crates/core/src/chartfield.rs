//! G₂-structure fields on a box chart: differentiation, Levi-Civita data,
//! intrinsic torsion and the differential identities it satisfies.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::g2algebra::{
    extract_vec7_from_2form, metric_derivative, sym27_to_3form, vec7_to_2form, G2Point,
};
use crate::linalg::{inverse7, matmul7};
use crate::scalar::{zero_mat, Mat7, Point7, Real};
use crate::tensor7::{hodge, wedge, Symmetry, Tensor7};

/// Default central-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-4;

/// Christoffel symbols `gamma[a][b][c] = Γ^a_bc`.
pub type Christoffel<S> = [[[S; 7]; 7]; 7];

pub type PhiFn<S> = Arc<dyn Fn(&Point7<S>) -> Tensor7<S> + Send + Sync>;
/// Returns the seven partials `∂_a φ`.
pub type DPhiFn<S> = Arc<dyn Fn(&Point7<S>) -> Vec<Tensor7<S>> + Send + Sync>;
type ScalarFn<S> = Arc<dyn Fn(&Point7<S>) -> S + Send + Sync>;
type VecFn<S> = Arc<dyn Fn(&Point7<S>) -> [S; 7] + Send + Sync>;

/// How partial derivatives of a field are produced.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DerivativePolicy<S> {
    Analytic,
    Central { step: S },
    Richardson { step: S },
}

impl<S: Real> DerivativePolicy<S> {
    pub fn central_default() -> Self {
        Self::Central { step: S::lit(DEFAULT_FD_STEP) }
    }

    /// Step used for FD work the policy itself does not cover.
    pub fn step(&self) -> S {
        match *self {
            Self::Analytic => S::lit(DEFAULT_FD_STEP),
            Self::Central { step } | Self::Richardson { step } => step,
        }
    }

    fn richardson(&self) -> bool {
        matches!(self, Self::Richardson { .. })
    }
}

/// Values that can be combined linearly by difference stencils.
pub trait FdValue<S>: Clone {
    /// `a * self + b * other`.
    fn lin(&self, a: S, other: &Self, b: S) -> Self;
}

impl<S: Real> FdValue<S> for S {
    fn lin(&self, a: S, other: &Self, b: S) -> Self {
        a * *self + b * *other
    }
}

impl<S: Real> FdValue<S> for [S; 7] {
    fn lin(&self, a: S, other: &Self, b: S) -> Self {
        let mut out = *self;
        for (o, y) in out.iter_mut().zip(other) {
            *o = a * *o + b * *y;
        }
        out
    }
}

impl<S: Real> FdValue<S> for Mat7<S> {
    fn lin(&self, a: S, other: &Self, b: S) -> Self {
        let mut out = *self;
        for (ro, ry) in out.iter_mut().zip(other) {
            for (o, y) in ro.iter_mut().zip(ry) {
                *o = a * *o + b * *y;
            }
        }
        out
    }
}

impl<S: Real> FdValue<S> for Tensor7<S> {
    fn lin(&self, a: S, other: &Self, b: S) -> Self {
        self.lin_comb(a, other, b)
    }
}

fn shifted<S: Real>(x: &Point7<S>, axis: usize, h: S) -> Point7<S> {
    let mut y = *x;
    y[axis] = y[axis] + h;
    y
}

fn central_diff<S: Real, T: FdValue<S>>(f: &impl Fn(&Point7<S>) -> T, x: &Point7<S>, axis: usize, h: S) -> T {
    let inv = S::one() / (h + h);
    f(&shifted(x, axis, h)).lin(inv, &f(&shifted(x, axis, -h)), -inv)
}

/// Partial derivative along one axis by central differences, optionally Richardson-extrapolated.
pub fn partial<S: Real, T: FdValue<S>>(
    f: &impl Fn(&Point7<S>) -> T,
    x: &Point7<S>,
    axis: usize,
    step: S,
    richardson: bool,
) -> T {
    let coarse = central_diff(f, x, axis, step);
    if !richardson {
        return coarse;
    }
    let fine = central_diff(f, x, axis, step / S::lit(2.0));
    let third = S::one() / S::lit(3.0);
    fine.lin(S::lit(4.0) * third, &coarse, -third)
}

/// All seven partials `∂_a f`.
pub fn partials<S: Real, T: FdValue<S>>(
    f: &impl Fn(&Point7<S>) -> T,
    x: &Point7<S>,
    step: S,
    richardson: bool,
) -> Vec<T> {
    (0..7).map(|a| partial(f, x, a, step, richardson)).collect()
}

/// Open coordinate box.
#[derive(Clone, Debug, PartialEq)]
pub struct Chart<S> {
    lo: Point7<S>,
    hi: Point7<S>,
}

impl<S: Real> Chart<S> {
    pub fn new(lo: Point7<S>, hi: Point7<S>) -> Result<Self> {
        if lo.iter().zip(&hi).any(|(l, h)| !(l < h)) {
            return Err(Error::InvalidChart("lo must be below hi componentwise".into()));
        }
        Ok(Self { lo, hi })
    }

    /// The box `(-r, r)^7`.
    pub fn cube(r: S) -> Self {
        Self::new([-r; 7], [r; 7]).expect("r > 0")
    }

    pub fn lo(&self) -> &Point7<S> {
        &self.lo
    }

    pub fn hi(&self) -> &Point7<S> {
        &self.hi
    }

    /// Default evaluation point.
    pub fn center(&self) -> Point7<S> {
        let mut c = self.lo;
        for (ci, hi) in c.iter_mut().zip(&self.hi) {
            *ci = (*ci + *hi) / S::lit(2.0);
        }
        c
    }

    pub fn contains(&self, x: &Point7<S>, margin: S) -> bool {
        (0..7).all(|i| x[i] >= self.lo[i] + margin && x[i] <= self.hi[i] - margin)
    }

    /// Moves `x` to be at least `margin` from every face.
    pub fn clamp(&self, x: &Point7<S>, margin: S) -> Point7<S> {
        let mut y = *x;
        for i in 0..7 {
            let (a, b) = (self.lo[i] + margin, self.hi[i] - margin);
            if a > b {
                y[i] = (self.lo[i] + self.hi[i]) / S::lit(2.0);
            } else {
                y[i] = y[i].max(a).min(b);
            }
        }
        y
    }

    /// Deterministic interior samples from an additive recurrence.
    pub fn samples(&self, n: usize, margin: S) -> Vec<Point7<S>> {
        const ALPHA: [f64; 7] = [
            0.7548776662466927,
            0.5698402909980532,
            0.4142135623730951,
            0.7320508075688772,
            0.2360679774997897,
            0.6457513110645906,
            0.3166247903554,
        ];
        (0..n)
            .map(|k| {
                let mut x = self.lo;
                for i in 0..7 {
                    let u = ((k as f64 + 0.5) * ALPHA[i]).fract();
                    let lo = self.lo[i] + margin;
                    let hi = self.hi[i] - margin;
                    x[i] = lo + (hi - lo) * S::lit(u);
                }
                x
            })
            .collect()
    }
}

/// A scalar function on the chart with an optional exact gradient.
#[derive(Clone)]
pub struct ScalarField<S> {
    value: ScalarFn<S>,
    grad: Option<VecFn<S>>,
}

impl<S: Real> ScalarField<S> {
    pub fn new(value: impl Fn(&Point7<S>) -> S + Send + Sync + 'static) -> Self {
        Self { value: Arc::new(value), grad: None }
    }

    pub fn with_gradient(mut self, grad: impl Fn(&Point7<S>) -> [S; 7] + Send + Sync + 'static) -> Self {
        self.grad = Some(Arc::new(grad));
        self
    }

    pub fn constant(c: S) -> Self {
        Self::new(move |_| c).with_gradient(|_| [S::zero(); 7])
    }

    pub fn at(&self, x: &Point7<S>) -> S {
        (self.value)(x)
    }

    pub fn has_gradient(&self) -> bool {
        self.grad.is_some()
    }

    /// Exact gradient when available, central differences otherwise.
    pub fn gradient(&self, x: &Point7<S>, step: S) -> [S; 7] {
        match &self.grad {
            Some(g) => g(x),
            None => {
                let f = |y: &Point7<S>| (self.value)(y);
                let p = partials(&f, x, step, false);
                let mut out = [S::zero(); 7];
                out.copy_from_slice(&p);
                out
            }
        }
    }
}

/// Whether a vector field's components carry an upper or lower index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Upper,
    Lower,
}

/// A vector field on the chart.
#[derive(Clone)]
pub struct VectorField<S> {
    value: VecFn<S>,
    slot: Slot,
}

impl<S: Real> VectorField<S> {
    pub fn new(slot: Slot, value: impl Fn(&Point7<S>) -> [S; 7] + Send + Sync + 'static) -> Self {
        Self { value: Arc::new(value), slot }
    }

    pub fn zero() -> Self {
        Self::new(Slot::Upper, |_| [S::zero(); 7])
    }

    pub fn slot(&self) -> Slot {
        self.slot
    }

    pub fn raw(&self, x: &Point7<S>) -> [S; 7] {
        (self.value)(x)
    }

    /// Lowered components `v_a` with respect to `pt`.
    pub fn lower_at(&self, x: &Point7<S>, pt: &G2Point<S>) -> [S; 7] {
        match self.slot {
            Slot::Lower => (self.value)(x),
            Slot::Upper => pt.lower(&(self.value)(x)),
        }
    }

    pub fn upper_at(&self, x: &Point7<S>, pt: &G2Point<S>) -> [S; 7] {
        match self.slot {
            Slot::Upper => (self.value)(x),
            Slot::Lower => pt.raise(&(self.value)(x)),
        }
    }
}

/// A G₂-structure field `x ↦ φ(x)` on a chart.
#[derive(Clone)]
pub struct G2Field<S> {
    chart: Chart<S>,
    phi: PhiFn<S>,
    dphi: Option<DPhiFn<S>>,
    policy: DerivativePolicy<S>,
}

impl<S: Real> G2Field<S> {
    pub fn new(chart: Chart<S>, phi: impl Fn(&Point7<S>) -> Tensor7<S> + Send + Sync + 'static) -> Self {
        Self {
            chart,
            phi: Arc::new(phi),
            dphi: None,
            policy: DerivativePolicy::central_default(),
        }
    }

    /// The constant field `φ₀`.
    pub fn flat(chart: Chart<S>) -> Self {
        let phi = crate::g2algebra::phi0::<S>();
        Self::new(chart, move |_| phi.clone()).with_analytic(|_| vec![Tensor7::zeros(3); 7])
    }

    /// Supplies exact partials and switches to the analytic policy.
    pub fn with_analytic(mut self, dphi: impl Fn(&Point7<S>) -> Vec<Tensor7<S>> + Send + Sync + 'static) -> Self {
        self.dphi = Some(Arc::new(dphi));
        self.policy = DerivativePolicy::Analytic;
        self
    }

    /// Sets the policy; `Analytic` without exact partials falls back to central differences.
    pub fn with_policy(mut self, policy: DerivativePolicy<S>) -> Self {
        self.policy = match policy {
            DerivativePolicy::Analytic if self.dphi.is_none() => DerivativePolicy::central_default(),
            p => p,
        };
        self
    }

    pub fn chart(&self) -> &Chart<S> {
        &self.chart
    }

    pub fn phi_fn(&self) -> PhiFn<S> {
        Arc::clone(&self.phi)
    }

    pub fn dphi_fn(&self) -> Option<DPhiFn<S>> {
        self.dphi.clone()
    }

    /// Same structure on another chart.
    pub fn with_chart(mut self, chart: Chart<S>) -> Self {
        self.chart = chart;
        self
    }

    pub fn policy(&self) -> DerivativePolicy<S> {
        self.policy
    }

    pub fn has_analytic(&self) -> bool {
        self.dphi.is_some()
    }

    /// FD step used by this field and by nested differences built on it.
    pub fn step(&self) -> S {
        self.policy.step()
    }

    pub fn phi_at(&self, x: &Point7<S>) -> Tensor7<S> {
        (self.phi)(x)
    }

    pub fn point_at(&self, x: &Point7<S>) -> Result<G2Point<S>> {
        G2Point::new(self.phi_at(x))
    }

    /// Clamps to at least two steps inside the chart.
    pub fn interior(&self, x: &Point7<S>) -> Point7<S> {
        self.chart.clamp(x, S::lit(2.0) * self.step())
    }

    /// `∂_a φ` per the derivative policy.
    pub fn grad_phi(&self, x: &Point7<S>) -> Vec<Tensor7<S>> {
        match (&self.policy, &self.dphi) {
            (DerivativePolicy::Analytic, Some(d)) => d(x),
            (policy, _) => {
                let f = |y: &Point7<S>| (self.phi)(y);
                partials(&f, x, policy.step(), policy.richardson())
            }
        }
    }

    /// Checks positivity on `n` deterministic interior samples plus the center.
    pub fn check_positive(&self, n: usize) -> Result<()> {
        let mut pts = self.chart.samples(n, S::zero());
        pts.push(self.chart.center());
        for x in pts {
            self.point_at(&x)?;
        }
        Ok(())
    }

    /// First-order jet of the structure at `x`.
    pub fn jet(&self, x: &Point7<S>) -> Result<G2Jet<S>> {
        let point = self.point_at(x)?;
        let dphi = self.grad_phi(x);
        let mut dg = [zero_mat::<S>(); 7];
        for (a, d) in dphi.iter().enumerate() {
            dg[a] = metric_derivative(point.phi(), d, point.s());
        }
        let gamma = christoffel_from_derivatives(point.g_inv(), &dg);
        Ok(G2Jet { point, dphi, dg, gamma })
    }
}

/// Structure, partials of `φ` and of `g`, and the Levi-Civita connection at a point.
#[derive(Clone, Debug)]
pub struct G2Jet<S> {
    pub point: G2Point<S>,
    pub dphi: Vec<Tensor7<S>>,
    /// `dg[a] = ∂_a g`.
    pub dg: [Mat7<S>; 7],
    pub gamma: Christoffel<S>,
}

/// `Γ^a_bc = ½ g^{ad}(∂_b g_dc + ∂_c g_db − ∂_d g_bc)`.
pub fn christoffel_from_derivatives<S: Real>(g_inv: &Mat7<S>, dg: &[Mat7<S>; 7]) -> Christoffel<S> {
    let half = S::lit(0.5);
    let mut lower = [[[S::zero(); 7]; 7]; 7];
    for d in 0..7 {
        for b in 0..7 {
            for c in 0..7 {
                lower[d][b][c] = half * (dg[b][d][c] + dg[c][d][b] - dg[d][b][c]);
            }
        }
    }
    let mut gamma = [[[S::zero(); 7]; 7]; 7];
    for a in 0..7 {
        for b in 0..7 {
            for c in 0..7 {
                gamma[a][b][c] = (0..7).map(|d| g_inv[a][d] * lower[d][b][c]).sum();
            }
        }
    }
    gamma
}

/// Christoffel symbols of a metric field by central differences.
pub fn christoffel<S: Real>(
    metric: &impl Fn(&Point7<S>) -> Mat7<S>,
    x: &Point7<S>,
    step: S,
) -> Result<Christoffel<S>> {
    let g = metric(x);
    let g_inv = inverse7(&g).ok_or(Error::SingularMetric(crate::linalg::det7(&g).to_f64_lossy()))?;
    let p = partials(metric, x, step, false);
    let mut dg = [zero_mat::<S>(); 7];
    dg.copy_from_slice(&p);
    Ok(christoffel_from_derivatives(&g_inv, &dg))
}

/// `∇_a T_{b...}` of an all-lower tensor from its value and partials; the new index comes first.
pub fn covariant_derivative<S: Real>(value: &Tensor7<S>, partials: &[Tensor7<S>], gamma: &Christoffel<S>) -> Tensor7<S> {
    let k = value.rank();
    let inner = value.data().len();
    let mut out = Tensor7::zeros(k + 1);
    {
        let data = out.data_mut();
        for a in 0..7 {
            data[a * inner..(a + 1) * inner].copy_from_slice(partials[a].data());
        }
    }
    for slot in 0..k {
        let stride = 7usize.pow((k - 1 - slot) as u32);
        for a in 0..7 {
            for flat in 0..inner {
                let b = (flat / stride) % 7;
                let base = flat - b * stride;
                let mut corr = S::zero();
                for e in 0..7 {
                    let ge = gamma[e][a][b];
                    if ge != S::zero() {
                        corr = corr + ge * value.data()[base + e * stride];
                    }
                }
                let off = a * inner + flat;
                let v = out.data()[off] - corr;
                out.data_mut()[off] = v;
            }
        }
    }
    out
}

/// `∇_a φ_bcd` at `x`.
pub fn covariant_derivative_phi<S: Real>(field: &G2Field<S>, x: &Point7<S>) -> Result<Tensor7<S>> {
    let jet = field.jet(&field.interior(x))?;
    Ok(covariant_derivative(jet.point.phi(), &jet.dphi, &jet.gamma))
}

/// Full torsion at a point.
#[derive(Clone, Debug)]
pub struct Torsion<S> {
    /// `T_a^m`.
    pub mixed: Mat7<S>,
    /// `T_am`.
    pub lower: Mat7<S>,
    /// `max |∇_a φ_bcd − T_a^e ψ_ebcd|`.
    pub residual: S,
    pub point: G2Point<S>,
    pub x: Point7<S>,
}

/// `T_a^m = (1/24) ∇_a φ_bcd ψ^{mbcd}` from `∇φ`.
pub fn torsion_from_nabla_phi<S: Real>(nabla_phi: &Tensor7<S>, pt: &G2Point<S>) -> (Mat7<S>, S) {
    let w = S::one() / S::lit(24.0);
    let psi_up = pt.psi_up().data();
    let nd = nabla_phi.data();
    let mut mixed = zero_mat::<S>();
    for a in 0..7 {
        for m in 0..7 {
            mixed[a][m] = (0..343).map(|bcd| nd[a * 343 + bcd] * psi_up[m * 343 + bcd]).sum::<S>() * w;
        }
    }
    let psi = pt.psi().data();
    let mut residual = S::zero();
    for a in 0..7 {
        for bcd in 0..343 {
            let tp: S = (0..7).map(|e| mixed[a][e] * psi[e * 343 + bcd]).sum();
            residual = residual.max((nd[a * 343 + bcd] - tp).abs());
        }
    }
    (mixed, residual)
}

pub fn torsion_from_jet<S: Real>(jet: &G2Jet<S>, x: Point7<S>) -> Torsion<S> {
    let nabla = covariant_derivative(jet.point.phi(), &jet.dphi, &jet.gamma);
    let (mixed, residual) = torsion_from_nabla_phi(&nabla, &jet.point);
    let lower = matmul7(&mixed, jet.point.g());
    Torsion {
        mixed,
        lower,
        residual,
        point: jet.point.clone(),
        x,
    }
}

/// Full torsion `T` of `field` at `x` (clamped to the chart interior).
pub fn full_torsion<S: Real>(field: &G2Field<S>, x: &Point7<S>) -> Result<Torsion<S>> {
    let y = field.interior(x);
    let jet = field.jet(&y)?;
    Ok(torsion_from_jet(&jet, y))
}

/// Irreducible pieces of a torsion-like 2-tensor, all with lower indices.
#[derive(Clone, Debug, PartialEq)]
pub struct TorsionDecomp<S> {
    pub tau1: S,
    pub tau7: [S; 7],
    pub tau14: Mat7<S>,
    pub tau27: Mat7<S>,
}

/// `g^{ac} g^{bd} A_ab B_cd`.
pub fn mat_inner<S: Real>(a: &Mat7<S>, b: &Mat7<S>, g_inv: &Mat7<S>) -> S {
    let left = matmul7(&matmul7(g_inv, a), g_inv);
    let mut acc = S::zero();
    for i in 0..7 {
        for j in 0..7 {
            acc = acc + left[i][j] * b[i][j];
        }
    }
    acc
}

impl<S: Real> TorsionDecomp<S> {
    /// `τ₁ g + τ₇⌟φ + τ₁₄ + τ₂₇`.
    pub fn reconstruct(&self, pt: &G2Point<S>) -> Mat7<S> {
        let t7 = vec7_to_2form(&self.tau7, pt).to_mat();
        let mut out = zero_mat::<S>();
        for i in 0..7 {
            for j in 0..7 {
                out[i][j] = self.tau1 * pt.g()[i][j] + t7[i][j] + self.tau14[i][j] + self.tau27[i][j];
            }
        }
        out
    }

    pub fn tau7_norm(&self, pt: &G2Point<S>) -> S {
        pt.norm2(&self.tau7).sqrt()
    }

    pub fn tau14_norm(&self, pt: &G2Point<S>) -> S {
        mat_inner(&self.tau14, &self.tau14, pt.g_inv()).sqrt()
    }

    pub fn tau27_norm(&self, pt: &G2Point<S>) -> S {
        mat_inner(&self.tau27, &self.tau27, pt.g_inv()).sqrt()
    }
}

/// Splits a lower-index 2-tensor into its `W₁ ⊕ W₇ ⊕ W₁₄ ⊕ W₂₇` parts.
pub fn torsion_components<S: Real>(t: &Mat7<S>, pt: &G2Point<S>) -> TorsionDecomp<S> {
    let half = S::lit(0.5);
    let g = pt.g();
    let g_inv = pt.g_inv();
    let tr: S = (0..7).flat_map(|a| (0..7).map(move |b| (a, b))).map(|(a, b)| g_inv[a][b] * t[a][b]).sum();
    let tau1 = tr / S::lit(7.0);
    let mut skew = zero_mat::<S>();
    let mut tau27 = zero_mat::<S>();
    for i in 0..7 {
        for j in 0..7 {
            skew[i][j] = half * (t[i][j] - t[j][i]);
            tau27[i][j] = half * (t[i][j] + t[j][i]) - tau1 * g[i][j];
        }
    }
    let skew_t = Tensor7::from_mat(&skew, Symmetry::Antisymmetric);
    let tau7 = extract_vec7_from_2form(&skew_t, pt);
    let t7 = vec7_to_2form(&tau7, pt).to_mat();
    let mut tau14 = zero_mat::<S>();
    for i in 0..7 {
        for j in 0..7 {
            tau14[i][j] = skew[i][j] - t7[i][j];
        }
    }
    TorsionDecomp { tau1, tau7, tau14, tau27 }
}

/// Torsion decomposition of a field at `x`.
pub fn torsion_decomp_at<S: Real>(field: &G2Field<S>, x: &Point7<S>) -> Result<(TorsionDecomp<S>, Torsion<S>)> {
    let t = full_torsion(field, x)?;
    Ok((torsion_components(&t.lower, &t.point), t))
}

/// Exterior derivative `(dα)_{a0..ap} = Σ (−1)^i ∂_{ai} α_{a0..âi..ap}` from partials.
pub fn exterior_derivative<S: Real>(partials: &[Tensor7<S>]) -> Tensor7<S> {
    let p = partials[0].rank();
    Tensor7::form_from_fn(p + 1, |idx| {
        let mut acc = S::zero();
        for i in 0..=p {
            let rest: Vec<usize> = idx.iter().enumerate().filter(|(k, _)| *k != i).map(|(_, &v)| v).collect();
            let v = partials[idx[i]].get(&rest);
            acc = if i % 2 == 0 { acc + v } else { acc - v };
        }
        acc
    })
}

/// Residuals of the `dφ` and `dψ` torsion identities.
#[derive(Clone, Debug)]
pub struct DiffFormResidual<S> {
    /// `max |dφ − (4τ₁ψ − 3τ₇∧φ − 3 *ι(τ₂₇))|`.
    pub dphi: S,
    /// `max |dψ − (−4τ₇∧ψ + 2 *τ₁₄)|`.
    pub dpsi: S,
    pub x: Point7<S>,
}

/// Compares FD `dφ`, `dψ` with their torsion expressions.
///
/// `ι(h)_abc = h_[a^d φ_bc]d`; the `τ₁₄` term enters `dψ` with a plus sign
/// under the orientation and `φ₀` used here.
pub fn check_dphi_dpsi<S: Real>(field: &G2Field<S>, x: &Point7<S>) -> Result<DiffFormResidual<S>> {
    let y = field.chart().clamp(x, S::lit(3.0) * field.step());
    let t = full_torsion(field, &y)?;
    let pt = &t.point;
    let dec = torsion_components(&t.lower, pt);
    let dphi = exterior_derivative(&field.grad_phi(&y));
    let psi_of = |z: &Point7<S>| match field.point_at(z) {
        Ok(p) => p.psi().clone(),
        Err(_) => Tensor7::zeros(4).scale(S::nan()),
    };
    let dpsi = exterior_derivative(&partials(&psi_of, &y, field.step(), false));
    let tau7 = Tensor7::vector(&dec.tau7);
    let three = S::lit(3.0);
    let rhs_phi = pt
        .psi()
        .scale(S::lit(4.0) * dec.tau1)
        .sub(&wedge(&tau7, pt.phi())?.scale(three))
        .sub(&hodge(&sym27_to_3form(&dec.tau27, pt), pt.metric())?.scale(three));
    let tau14 = Tensor7::from_mat(&dec.tau14, Symmetry::Antisymmetric);
    let rhs_psi = wedge(&tau7, pt.psi())?
        .scale(-S::lit(4.0))
        .add(&hodge(&tau14, pt.metric())?.scale(S::lit(2.0)));
    let r1 = dphi.max_abs_diff(&rhs_phi);
    let r2 = dpsi.max_abs_diff(&rhs_psi);
    if r1.is_nan() || r2.is_nan() {
        return Err(Error::NotPositive);
    }
    Ok(DiffFormResidual { dphi: r1, dpsi: r2, x: y })
}

/// Torsion class declared for [`check_torsion_compat`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TorsionClass {
    W1,
    W7,
    W1W7,
}

/// Outcome of a class compatibility check.
#[derive(Clone, Debug)]
pub struct CompatReport<S> {
    pub class: TorsionClass,
    pub residual: S,
    pub tau1: S,
    /// Set when `τ₁` vanishes at the point while `W₁ ⊕ W₇` is declared.
    pub flagged: bool,
    pub x: Point7<S>,
}

/// Default outer step for differences of FD torsion.
pub const DEFAULT_OUTER_STEP: f64 = 1e-3;

/// Evaluates the differential condition of the declared class by nested differences.
///
/// W₁: `|dτ₁|`; W₇: `|dτ₇|`; W₁⊕W₇: `|dτ₁ − τ₁τ₇|`.
pub fn check_torsion_compat<S: Real>(
    field: &G2Field<S>,
    x: &Point7<S>,
    class: TorsionClass,
    outer_step: S,
) -> Result<CompatReport<S>> {
    let y = field.chart().clamp(x, outer_step + S::lit(3.0) * field.step());
    let (dec, _) = torsion_decomp_at(field, &y)?;
    let tau1_of = |z: &Point7<S>| torsion_decomp_at(field, z).map(|d| d.0.tau1).unwrap_or(S::nan());
    let tau7_of = |z: &Point7<S>| torsion_decomp_at(field, z).map(|d| d.0.tau7).unwrap_or([S::nan(); 7]);
    let tiny = S::lit(1e-8);
    let (residual, flagged) = match class {
        TorsionClass::W1 => {
            let d = partials(&tau1_of, &y, outer_step, false);
            (d.iter().fold(S::zero(), |m, v| m.max(v.abs())), false)
        }
        TorsionClass::W7 => {
            let d = partials(&tau7_of, &y, outer_step, false);
            let mut m = S::zero();
            for a in 0..7 {
                for b in 0..7 {
                    m = m.max((d[a][b] - d[b][a]).abs());
                }
            }
            (m, false)
        }
        TorsionClass::W1W7 => {
            let d = partials(&tau1_of, &y, outer_step, false);
            let m = (0..7).fold(S::zero(), |m, a| m.max((d[a] - dec.tau1 * dec.tau7[a]).abs()));
            (m, dec.tau1.abs() < tiny)
        }
    };
    if residual.is_nan() {
        return Err(Error::NotPositive);
    }
    Ok(CompatReport {
        class,
        residual,
        tau1: dec.tau1,
        flagged,
        x: y,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::g2algebra::phi0;

    #[test]
    fn flat_field_is_torsion_free() {
        let field = G2Field::<f64>::flat(Chart::cube(1.0)).with_policy(DerivativePolicy::Central { step: 1e-4 });
        let t = full_torsion(&field, &[0.1; 7]).unwrap();
        assert!(crate::linalg::max_abs7(&t.lower) < 1e-12);
    }

    #[test]
    fn chart_rejects_inverted_box() {
        assert!(Chart::new([1.0; 7], [0.0; 7]).is_err());
    }

    #[test]
    fn clamp_keeps_margin() {
        let c = Chart::<f64>::cube(1.0);
        let y = c.clamp(&[2.0; 7], 0.1);
        assert!(y.iter().all(|v| (*v - 0.9).abs() < 1e-15));
    }

    #[test]
    fn exterior_derivative_of_linear_function() {
        let f = |x: &Point7<f64>| Tensor7::scalar(3.0 * x[0] - x[4]);
        let d = exterior_derivative(&partials(&f, &[0.2; 7], 1e-3, false));
        assert!((d.get(&[0]) - 3.0).abs() < 1e-10 && (d.get(&[4]) + 1.0).abs() < 1e-10);
    }

    #[test]
    fn decomposition_of_identity_and_slice() {
        let pt = G2Point::<f64>::standard();
        let d = torsion_components(pt.g(), &pt);
        assert!((d.tau1 - 1.0).abs() < 1e-14 && d.tau7.iter().all(|v| v.abs() < 1e-14));
        let mut e1 = [0.0; 7];
        e1[0] = 1.0;
        let slice = crate::tensor7::interior(&e1, &phi0::<f64>()).to_mat();
        let d = torsion_components(&slice, &pt);
        assert!((d.tau7[0] - 1.0).abs() < 1e-14);
        assert!(d.tau14.iter().flatten().all(|v| v.abs() < 1e-14));
    }
}
