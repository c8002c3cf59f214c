//! Dense tensors over a 7-dimensional fiber, exterior algebra and metric operations.
//!
//! Indices are zero-based: `e¹` of the usual notation is slot value `0`.
//! Forms are stored as fully antisymmetric arrays over all `7^p` entries, so
//! `(a)_{i1..ip}` is read directly and no `1/p!` is hidden in the storage.

use crate::combinatorics::{complement, flat_index, multi_index, perm_sign, permutations, sorted_subsets};
use crate::error::{Error, Result};
use crate::linalg::{det7, inverse7, is_positive_definite, max_abs_diff7};
use crate::scalar::{identity_mat, Mat7, Real};

/// Symmetry tag carried by a tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Symmetry {
    None,
    Antisymmetric,
    SymmetricPair,
}

/// Index variance for [`raise_lower`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variance {
    Up,
    Down,
}

/// Dense rank-k tensor with `7^k` components.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor7<S> {
    rank: usize,
    data: Vec<S>,
    symmetry: Symmetry,
}

impl<S: Real> Tensor7<S> {
    pub fn zeros(rank: usize) -> Self {
        Self {
            rank,
            data: vec![S::zero(); 7usize.pow(rank as u32)],
            symmetry: Symmetry::None,
        }
    }

    pub fn scalar(x: S) -> Self {
        Self {
            rank: 0,
            data: vec![x],
            symmetry: Symmetry::Antisymmetric,
        }
    }

    /// Wraps a component vector; panics if its length is not `7^rank`.
    pub fn from_vec(rank: usize, data: Vec<S>, symmetry: Symmetry) -> Self {
        assert_eq!(data.len(), 7usize.pow(rank as u32), "component count must be 7^rank");
        Self { rank, data, symmetry }
    }

    pub fn vector(v: &[S; 7]) -> Self {
        Self::from_vec(1, v.to_vec(), Symmetry::Antisymmetric)
    }

    pub fn from_mat(m: &Mat7<S>, symmetry: Symmetry) -> Self {
        Self::from_vec(2, m.iter().flatten().copied().collect(), symmetry)
    }

    /// Builds a form from `(coefficient, increasing index list)` terms.
    pub fn form(terms: &[(S, &[usize])]) -> Self {
        let p = terms.first().map_or(0, |t| t.1.len());
        let mut out = Self::zeros(p);
        out.symmetry = Symmetry::Antisymmetric;
        for (c, idx) in terms {
            assert_eq!(idx.len(), p, "all terms of a form share one degree");
            out.add_form_component(idx, *c);
        }
        out
    }

    /// The basis form `e^{i1} ∧ ... ∧ e^{ip}`.
    pub fn basis_form(idx: &[usize]) -> Self {
        let mut out = Self::zeros(idx.len());
        out.symmetry = Symmetry::Antisymmetric;
        out.add_form_component(idx, S::one());
        out
    }

    /// Adds `c` to component `idx` and all its signed permutations.
    pub fn add_form_component(&mut self, idx: &[usize], c: S) {
        let sign = perm_sign(idx);
        if sign == 0 {
            return;
        }
        for (perm, s) in permutations(idx.len()) {
            let permuted: Vec<usize> = perm.iter().map(|&k| idx[k]).collect();
            let off = flat_index(&permuted);
            let signed = if *s == sign { c } else { -c };
            self.data[off] = self.data[off] + signed;
        }
    }

    /// Fills a form from a function of increasing index lists.
    pub fn form_from_fn(p: usize, mut f: impl FnMut(&[usize]) -> S) -> Self {
        let mut out = Self::zeros(p);
        out.symmetry = Symmetry::Antisymmetric;
        for idx in sorted_subsets(p) {
            let v = f(idx);
            if v != S::zero() {
                out.add_form_component(idx, v);
            }
        }
        out
    }

    pub fn from_fn(rank: usize, mut f: impl FnMut(&[usize]) -> S) -> Self {
        let n = 7usize.pow(rank as u32);
        let data = (0..n).map(|flat| f(&multi_index(flat, rank))).collect();
        Self::from_vec(rank, data, Symmetry::None)
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn with_symmetry(mut self, symmetry: Symmetry) -> Self {
        self.symmetry = symmetry;
        self
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, idx: &[usize]) -> S {
        debug_assert_eq!(idx.len(), self.rank);
        self.data[flat_index(idx)]
    }

    #[inline]
    pub fn set(&mut self, idx: &[usize], v: S) {
        self.data[flat_index(idx)] = v;
    }

    #[inline]
    pub fn at2(&self, a: usize, b: usize) -> S {
        self.data[a * 7 + b]
    }

    #[inline]
    pub fn at3(&self, a: usize, b: usize, c: usize) -> S {
        self.data[(a * 7 + b) * 7 + c]
    }

    #[inline]
    pub fn at4(&self, a: usize, b: usize, c: usize, d: usize) -> S {
        self.data[((a * 7 + b) * 7 + c) * 7 + d]
    }

    /// Rank-2 tensor as a matrix; panics on other ranks.
    pub fn to_mat(&self) -> Mat7<S> {
        assert_eq!(self.rank, 2);
        let mut m = [[S::zero(); 7]; 7];
        for (i, row) in m.iter_mut().enumerate() {
            row.copy_from_slice(&self.data[i * 7..i * 7 + 7]);
        }
        m
    }

    /// Rank-1 tensor as an array; panics on other ranks.
    pub fn to_vec7(&self) -> [S; 7] {
        assert_eq!(self.rank, 1);
        let mut v = [S::zero(); 7];
        v.copy_from_slice(&self.data);
        v
    }

    pub fn add(&self, other: &Self) -> Self {
        self.lin_comb(S::one(), other, S::one())
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.lin_comb(S::one(), other, -S::one())
    }

    pub fn scale(&self, s: S) -> Self {
        Self {
            rank: self.rank,
            data: self.data.iter().map(|&x| x * s).collect(),
            symmetry: self.symmetry,
        }
    }

    /// `a * self + b * other`.
    pub fn lin_comb(&self, a: S, other: &Self, b: S) -> Self {
        assert_eq!(self.rank, other.rank, "rank mismatch in linear combination");
        let symmetry = if self.symmetry == other.symmetry { self.symmetry } else { Symmetry::None };
        Self {
            rank: self.rank,
            data: self.data.iter().zip(&other.data).map(|(&x, &y)| a * x + b * y).collect(),
            symmetry,
        }
    }

    pub fn max_abs(&self) -> S {
        self.data.iter().fold(S::zero(), |acc, x| acc.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> S {
        assert_eq!(self.rank, other.rank);
        self.data
            .iter()
            .zip(&other.data)
            .fold(S::zero(), |acc, (x, y)| acc.max((*x - *y).abs()))
    }

    /// Plain component sum `Σ a_I b_I` over all entries.
    pub fn component_dot(&self, other: &Self) -> S {
        assert_eq!(self.rank, other.rank);
        self.data.iter().zip(&other.data).map(|(&x, &y)| x * y).sum()
    }

    /// Weight-one antisymmetrization `Alt(T)`.
    pub fn antisymmetrize(&self) -> Self {
        let k = self.rank;
        let perms = permutations(k);
        let norm = S::one() / S::from_usize_lossy(perms.len());
        let mut out = Self::zeros(k);
        out.symmetry = Symmetry::Antisymmetric;
        let mut permuted = vec![0; k];
        for flat in 0..self.data.len() {
            let idx = multi_index(flat, k);
            let mut acc = S::zero();
            for (perm, s) in perms {
                for (slot, &p) in perm.iter().enumerate() {
                    permuted[slot] = idx[p];
                }
                let v = self.data[flat_index(&permuted)];
                acc = if *s > 0 { acc + v } else { acc - v };
            }
            out.data[flat] = acc * norm;
        }
        out
    }

    /// Largest violation of antisymmetry over all adjacent and non-adjacent transpositions.
    pub fn antisymmetry_defect(&self) -> S {
        let k = self.rank;
        let mut worst = S::zero();
        for flat in 0..self.data.len() {
            let idx = multi_index(flat, k);
            for i in 0..k {
                for j in i + 1..k {
                    let mut sw = idx.clone();
                    sw.swap(i, j);
                    worst = worst.max((self.data[flat] + self.data[flat_index(&sw)]).abs());
                }
            }
        }
        worst
    }

    /// Applies `m` on one slot: `out_{..i..} = Σ_j m[i][j] self_{..j..}`.
    pub fn apply_slot(&self, slot: usize, m: &Mat7<S>) -> Result<Self> {
        if slot >= self.rank {
            return Err(Error::SlotOutOfRange { slot, rank: self.rank });
        }
        let stride = 7usize.pow((self.rank - 1 - slot) as u32);
        let mut out = Self::zeros(self.rank);
        for flat in 0..self.data.len() {
            let i = (flat / stride) % 7;
            let base = flat - i * stride;
            let mut acc = S::zero();
            for (j, &mij) in m[i].iter().enumerate() {
                if mij != S::zero() {
                    acc = acc + mij * self.data[base + j * stride];
                }
            }
            out.data[flat] = acc;
        }
        out.symmetry = if self.symmetry == Symmetry::Antisymmetric || self.symmetry == Symmetry::SymmetricPair {
            Symmetry::None
        } else {
            self.symmetry
        };
        Ok(out)
    }

    /// Applies `m` on every slot, preserving the symmetry tag.
    pub fn apply_all_slots(&self, m: &Mat7<S>) -> Self {
        let mut out = self.clone();
        for slot in 0..self.rank {
            out = out.apply_slot(slot, m).expect("slot in range");
        }
        out.symmetry = self.symmetry;
        out
    }
}

/// Contraction of a vector into the first slot: `(u⌟a)_{...} = u^i a_{i...}`.
pub fn interior<S: Real>(u: &[S; 7], a: &Tensor7<S>) -> Tensor7<S> {
    assert!(a.rank >= 1, "interior product needs rank >= 1");
    let inner = a.data.len() / 7;
    let mut data = vec![S::zero(); inner];
    for (i, &ui) in u.iter().enumerate() {
        if ui != S::zero() {
            for (k, slot) in data.iter_mut().enumerate() {
                *slot = *slot + ui * a.data[i * inner + k];
            }
        }
    }
    Tensor7::from_vec(a.rank - 1, data, a.symmetry)
}

/// Alternating wedge product with the `(p+q)!/(p!q!) Alt(a⊗b)` normalization.
pub fn wedge<S: Real>(a: &Tensor7<S>, b: &Tensor7<S>) -> Result<Tensor7<S>> {
    let (p, q) = (a.rank, b.rank);
    if p + q > 7 {
        return Err(Error::RankOverflow { p, q });
    }
    Ok(Tensor7::form_from_fn(p + q, |k| {
        let mut acc = S::zero();
        for left in sorted_subsets(p) {
            if left.iter().any(|&i| i >= p + q) {
                continue;
            }
            let pi: Vec<usize> = left.iter().map(|&i| k[i]).collect();
            let qi: Vec<usize> = (0..p + q).filter(|i| !left.contains(i)).map(|i| k[i]).collect();
            let mut seq = left.clone();
            seq.extend((0..p + q).filter(|i| !left.contains(i)));
            let s = perm_sign(&seq);
            let term = a.get(&pi) * b.get(&qi);
            acc = if s > 0 { acc + term } else { acc - term };
        }
        acc
    }))
}

/// Metric on the fiber with cached inverse and determinant.
#[derive(Clone, Debug, PartialEq)]
pub struct Metric7<S> {
    g: Mat7<S>,
    inv: Mat7<S>,
    det: S,
    orientation: S,
    positive_definite: bool,
}

impl<S: Real> Metric7<S> {
    /// Validates symmetry and invertibility; positive definiteness is recorded, not required.
    pub fn new(g: Mat7<S>) -> Result<Self> {
        let scale = crate::linalg::max_abs7(&g);
        let asym = max_abs_diff7(&g, &crate::linalg::transpose7(&g));
        if asym > scale * S::epsilon() * S::lit(1024.0) {
            return Err(Error::NonSymmetricMetric(asym.to_f64_lossy()));
        }
        let det = det7(&g);
        let inv = inverse7(&g).ok_or(Error::SingularMetric(det.to_f64_lossy()))?;
        let positive_definite = is_positive_definite(&g, S::lit(1e-12));
        Ok(Self {
            g,
            inv,
            det,
            orientation: S::one(),
            positive_definite,
        })
    }

    pub fn euclidean() -> Self {
        Self {
            g: identity_mat(),
            inv: identity_mat(),
            det: S::one(),
            orientation: S::one(),
            positive_definite: true,
        }
    }

    pub fn diagonal(d: &[S; 7]) -> Result<Self> {
        let mut g = [[S::zero(); 7]; 7];
        for i in 0..7 {
            g[i][i] = d[i];
        }
        Self::new(g)
    }

    /// Flips the orientation sign used by the Hodge star.
    pub fn with_orientation(mut self, sign: S) -> Self {
        self.orientation = sign.signum();
        self
    }

    pub fn g(&self) -> &Mat7<S> {
        &self.g
    }

    pub fn inv(&self) -> &Mat7<S> {
        &self.inv
    }

    pub fn det(&self) -> S {
        self.det
    }

    pub fn orientation(&self) -> S {
        self.orientation
    }

    pub fn is_positive_definite(&self) -> bool {
        self.positive_definite
    }

    /// `√det g`; requires a positive-definite metric.
    pub fn sqrt_det(&self) -> Result<S> {
        if !self.positive_definite {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(self.det.sqrt())
    }

    pub fn lower_vec(&self, v: &[S; 7]) -> [S; 7] {
        crate::linalg::matvec7(&self.g, v)
    }

    pub fn raise_vec(&self, v: &[S; 7]) -> [S; 7] {
        crate::linalg::matvec7(&self.inv, v)
    }

    /// `g^{ab} α_a β_b`.
    pub fn inner_covectors(&self, a: &[S; 7], b: &[S; 7]) -> S {
        let mut acc = S::zero();
        for i in 0..7 {
            for j in 0..7 {
                acc = acc + self.inv[i][j] * a[i] * b[j];
            }
        }
        acc
    }

    /// `g_{ab} u^a w^b`.
    pub fn inner_vectors(&self, u: &[S; 7], w: &[S; 7]) -> S {
        let mut acc = S::zero();
        for i in 0..7 {
            for j in 0..7 {
                acc = acc + self.g[i][j] * u[i] * w[j];
            }
        }
        acc
    }
}

/// Raises or lowers the listed slots.
pub fn raise_lower<S: Real>(a: &Tensor7<S>, slots: &[usize], g: &Metric7<S>, to: Variance) -> Result<Tensor7<S>> {
    let m = match to {
        Variance::Up => g.inv(),
        Variance::Down => g.g(),
    };
    let mut out = a.clone();
    for &slot in slots {
        out = out.apply_slot(slot, m)?;
    }
    if slots.len() == a.rank || a.rank <= 1 {
        out.symmetry = a.symmetry;
    }
    Ok(out)
}

/// Contracts `a` with `b` over the given `(slot of a, slot of b)` pairs.
///
/// Without a metric the paired indices are summed directly. With a metric
/// both paired indices are taken as lower and joined through `g^{-1}`.
/// Free indices of `a` come first, then those of `b`.
pub fn contract<S: Real>(
    a: &Tensor7<S>,
    b: &Tensor7<S>,
    pairs: &[(usize, usize)],
    metric: Option<&Metric7<S>>,
) -> Result<Tensor7<S>> {
    for &(i, j) in pairs {
        if i >= a.rank {
            return Err(Error::SlotOutOfRange { slot: i, rank: a.rank });
        }
        if j >= b.rank {
            return Err(Error::SlotOutOfRange { slot: j, rank: b.rank });
        }
    }
    let b_eff = match metric {
        Some(g) => {
            let slots: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            raise_lower(b, &slots, g, Variance::Up)?
        }
        None => b.clone(),
    };
    let free_a: Vec<usize> = (0..a.rank).filter(|s| !pairs.iter().any(|p| p.0 == *s)).collect();
    let free_b: Vec<usize> = (0..b.rank).filter(|s| !pairs.iter().any(|p| p.1 == *s)).collect();
    let out_rank = free_a.len() + free_b.len();
    let n_sum = 7usize.pow(pairs.len() as u32);
    let mut ia = vec![0; a.rank];
    let mut ib = vec![0; b.rank];
    let out = Tensor7::from_fn(out_rank, |free| {
        for (k, &s) in free_a.iter().enumerate() {
            ia[s] = free[k];
        }
        for (k, &s) in free_b.iter().enumerate() {
            ib[s] = free[free_a.len() + k];
        }
        let mut acc = S::zero();
        for flat in 0..n_sum {
            let summed = multi_index(flat, pairs.len());
            let mut ia2 = ia.clone();
            let mut ib2 = ib.clone();
            for (k, &(sa, sb)) in pairs.iter().enumerate() {
                ia2[sa] = summed[k];
                ib2[sb] = summed[k];
            }
            acc = acc + a.get(&ia2) * b_eff.get(&ib2);
        }
        acc
    });
    Ok(out)
}

/// Hodge star `(*a)_J = √det g · a^I ε̂_{IJ} / p!`, with the metric's orientation.
pub fn hodge<S: Real>(a: &Tensor7<S>, g: &Metric7<S>) -> Result<Tensor7<S>> {
    let vol = g.sqrt_det()? * g.orientation();
    let p = a.rank;
    let up = a.apply_all_slots(g.inv());
    Ok(Tensor7::form_from_fn(7 - p, |j| {
        let (i, _) = complement(j);
        let mut seq = i.clone();
        seq.extend_from_slice(j);
        let s = perm_sign(&seq);
        let v = up.get(&i) * vol;
        if s > 0 {
            v
        } else {
            -v
        }
    }))
}

/// Inner product of forms `⟨a, b⟩ = a_I b^I / p!`.
pub fn inner<S: Real>(a: &Tensor7<S>, b: &Tensor7<S>, g: &Metric7<S>) -> S {
    assert_eq!(a.rank, b.rank);
    let up = b.apply_all_slots(g.inv());
    let fact: usize = (1..=a.rank).product();
    a.component_dot(&up) / S::from_usize_lossy(fact)
}

/// Coefficient of `e^{1...7}` in a 7-form.
pub fn top_coefficient<S: Real>(a: &Tensor7<S>) -> S {
    assert_eq!(a.rank, 7);
    a.get(&[0, 1, 2, 3, 4, 5, 6])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_form(p: usize, seed: u64) -> Tensor7<f64> {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        Tensor7::form_from_fn(p, |_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
    }

    #[test]
    fn basis_wedge() {
        let e1 = Tensor7::<f64>::basis_form(&[0]);
        let e2 = Tensor7::<f64>::basis_form(&[1]);
        let w = wedge(&e1, &e2).unwrap();
        assert_eq!(w.at2(0, 1), 1.0);
        assert_eq!(w.at2(1, 0), -1.0);
        assert_eq!(w.max_abs_diff(&Tensor7::basis_form(&[0, 1])), 0.0);
    }

    #[test]
    fn wedge_to_top_form() {
        let a = Tensor7::<f64>::basis_form(&[0, 1]);
        let b = Tensor7::<f64>::basis_form(&[2, 3, 4, 5, 6]);
        let top = wedge(&a, &b).unwrap();
        assert_eq!(top_coefficient(&top), 1.0);
    }

    #[test]
    fn wedge_overflow() {
        let a = Tensor7::<f64>::basis_form(&[0, 1, 2, 3]);
        let b = Tensor7::<f64>::basis_form(&[4, 5, 6, 0]);
        assert!(matches!(wedge(&a, &b), Err(Error::RankOverflow { p: 4, q: 4 })));
    }

    #[test]
    fn hodge_of_one_is_volume() {
        let g = Metric7::diagonal(&[4.0f64, 1.0, 1.0, 9.0, 1.0, 1.0, 1.0]).unwrap();
        let vol = hodge(&Tensor7::scalar(1.0), &g).unwrap();
        assert!((top_coefficient(&vol) - 6.0).abs() < 1e-14);
    }

    #[test]
    fn hodge_is_involution_every_degree() {
        let g = Metric7::<f64>::euclidean();
        for p in 0..=7 {
            let a = random_form(p, p as u64 + 3);
            let back = hodge(&hodge(&a, &g).unwrap(), &g).unwrap();
            assert!(back.max_abs_diff(&a) < 1e-12, "p = {p}");
        }
    }

    #[test]
    fn hodge_rejects_indefinite() {
        let g = Metric7::diagonal(&[-1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(!g.is_positive_definite());
        assert_eq!(hodge(&Tensor7::scalar(1.0), &g), Err(Error::NotPositiveDefinite));
    }

    #[test]
    fn singular_metric_rejected() {
        let mut d = [1.0; 7];
        d[4] = 0.0;
        assert!(matches!(Metric7::diagonal(&d), Err(Error::SingularMetric(_))));
    }

    #[test]
    fn diagonal_lowering() {
        let g = Metric7::diagonal(&[4.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let t = random_form(2, 11);
        let low = raise_lower(&t, &[0], &g, Variance::Down).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                let want = if i == 0 { 4.0 * t.at2(i, j) } else { t.at2(i, j) };
                assert!((low.at2(i, j) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn contraction_trace_of_identity() {
        let id = Tensor7::from_mat(&identity_mat::<f64>(), Symmetry::SymmetricPair);
        let tr = contract(&id, &id, &[(0, 0), (1, 1)], None).unwrap();
        assert_eq!(tr.rank(), 0);
        assert!((tr.data()[0] - 7.0).abs() < 1e-15);
        assert!(contract(&id, &id, &[(2, 0)], None).is_err());
    }

    #[test]
    fn alt_is_idempotent() {
        let t = Tensor7::from_fn(3, |i| ((i[0] * 13 + i[1] * 7 + i[2] * 3) % 11) as f64 - 5.0);
        let a = t.antisymmetrize();
        assert!(a.antisymmetrize().max_abs_diff(&a) < 1e-13);
        assert!(a.antisymmetry_defect() < 1e-13);
    }

    #[test]
    fn generic_over_f32() {
        let a = Tensor7::<f32>::basis_form(&[0, 1, 2]);
        let g = Metric7::<f32>::euclidean();
        let back = hodge(&hodge(&a, &g).unwrap(), &g).unwrap();
        assert!(back.max_abs_diff(&a) < 1e-6);
    }
}
