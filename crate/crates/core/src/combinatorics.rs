//! Index combinatorics on {0..7}: permutations with signs, sorted subsets, complements.

use std::sync::OnceLock;

/// Sign of the permutation sorting `seq`, or 0 if an index repeats.
pub fn perm_sign(seq: &[usize]) -> i8 {
    let mut sign = 1i8;
    for i in 0..seq.len() {
        for j in i + 1..seq.len() {
            if seq[i] == seq[j] {
                return 0;
            }
            if seq[i] > seq[j] {
                sign = -sign;
            }
        }
    }
    sign
}

fn build_perms(k: usize) -> Vec<(Vec<usize>, i8)> {
    fn rec(k: usize, cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<(Vec<usize>, i8)>) {
        if cur.len() == k {
            out.push((cur.clone(), perm_sign(cur)));
            return;
        }
        for i in 0..k {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(k, cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(k, &mut Vec::with_capacity(k), &mut vec![false; k], &mut out);
    out
}

type Signed = (Vec<usize>, i8);

/// All permutations of `0..k` with their signs, for `k <= 7`.
pub fn permutations(k: usize) -> &'static [(Vec<usize>, i8)] {
    static TABLE: OnceLock<Vec<Vec<Signed>>> = OnceLock::new();
    let table = TABLE.get_or_init(|| (0..=7).map(build_perms).collect());
    &table[k]
}

fn build_subsets(k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..7 {
            cur.push(i);
            rec(i + 1, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, k, &mut Vec::new(), &mut out);
    out
}

/// Increasing `k`-subsets of `0..7` in lexicographic order.
pub fn sorted_subsets(k: usize) -> &'static [Vec<usize>] {
    static TABLE: OnceLock<Vec<Vec<Vec<usize>>>> = OnceLock::new();
    let table = TABLE.get_or_init(|| (0..=7).map(build_subsets).collect());
    &table[k]
}

/// Increasing complement of `subset` in `0..7`, and the sign of `subset ++ complement`.
pub fn complement(subset: &[usize]) -> (Vec<usize>, i8) {
    let comp: Vec<usize> = (0..7).filter(|i| !subset.contains(i)).collect();
    let mut all = subset.to_vec();
    all.extend_from_slice(&comp);
    (comp, perm_sign(&all))
}

/// Row-major offset of a multi-index.
#[inline]
pub fn flat_index(idx: &[usize]) -> usize {
    idx.iter().fold(0, |acc, &i| acc * 7 + i)
}

/// Inverse of [`flat_index`] for the given rank.
pub fn multi_index(mut flat: usize, rank: usize) -> Vec<usize> {
    let mut out = vec![0; rank];
    for slot in (0..rank).rev() {
        out[slot] = flat % 7;
        flat /= 7;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        assert_eq!(permutations(7).len(), 5040);
        assert_eq!(sorted_subsets(3).len(), 35);
        assert_eq!(sorted_subsets(4).len(), 35);
        assert_eq!(permutations(0).len(), 1);
    }

    #[test]
    fn signs() {
        assert_eq!(perm_sign(&[0, 1, 2]), 1);
        assert_eq!(perm_sign(&[1, 0, 2]), -1);
        assert_eq!(perm_sign(&[2, 0, 1]), 1);
        assert_eq!(perm_sign(&[1, 1, 2]), 0);
        let total: i32 = permutations(5).iter().map(|(_, s)| *s as i32).sum();
        assert_eq!(total, 0);
    }

    #[test]
    fn complement_sign() {
        let (c, s) = complement(&[0, 1, 2]);
        assert_eq!(c, vec![3, 4, 5, 6]);
        assert_eq!(s, 1);
        let (_, s) = complement(&[1]);
        assert_eq!(s, -1);
    }

    #[test]
    fn index_roundtrip() {
        for flat in [0, 1, 48, 342, 2400] {
            assert_eq!(flat_index(&multi_index(flat, 4)), flat);
        }
    }
}
