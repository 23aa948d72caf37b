//! Tensor-product wavelet indices, finite index sets with tree/multitree
//! structure, and sparse coefficient vectors with best-N-term machinery.

use crate::error::{Error, Result};
use crate::wavelet::{Basis1D, Support, WaveletIndex1D};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};

/// Number of tensor directions. Both benchmark problems are bivariate; the
/// second direction of univariate problems is pinned to a constant scaling
/// function.
pub const DIM: usize = 2;

/// A tensor-product index: one univariate index per direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TensorIndex {
    pub components: [WaveletIndex1D; DIM],
}

impl TensorIndex {
    pub fn new(a: WaveletIndex1D, b: WaveletIndex1D) -> Self {
        Self { components: [a, b] }
    }
    pub fn level_sum(&self) -> u32 {
        self.components.iter().map(|c| c.level as u32).sum()
    }
    pub fn packed(&self) -> u128 {
        ((self.components[0].packed() as u128) << 64) | self.components[1].packed() as u128
    }
}

/// The pair of univariate bases the tensor indices refer to.
pub struct TensorBasis {
    pub dirs: [Basis1D; DIM],
}

impl TensorBasis {
    pub fn new(a: Basis1D, b: Basis1D) -> Self {
        Self { dirs: [a, b] }
    }
    pub fn valid(&self, idx: &TensorIndex) -> bool {
        idx.components
            .iter()
            .zip(self.dirs.iter())
            .all(|(c, b)| b.valid(*c))
    }
    pub fn support(&self, idx: &TensorIndex, dir: usize) -> Support {
        self.dirs[dir]
            .support_of(idx.components[dir])
            .expect("valid index")
    }
}

/// An ordered finite set of tensor indices with deterministic iteration
/// order (lexicographic by direction, level, kind, translation) and O(1)
/// membership and position lookup.
#[derive(Debug, Clone, Default)]
pub struct IndexSet {
    indices: Vec<TensorIndex>,
    pos: HashMap<TensorIndex, u32>,
}

impl IndexSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_iter<I: IntoIterator<Item = TensorIndex>>(iter: I) -> Self {
        let mut seen = HashSet::new();
        let mut indices: Vec<TensorIndex> = iter.into_iter().filter(|i| seen.insert(*i)).collect();
        indices.sort();
        let pos = indices
            .iter()
            .enumerate()
            .map(|(p, &i)| (i, p as u32))
            .collect();
        Self { indices, pos }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
    pub fn contains(&self, idx: &TensorIndex) -> bool {
        self.pos.contains_key(idx)
    }
    pub fn position(&self, idx: &TensorIndex) -> Option<usize> {
        self.pos.get(idx).map(|&p| p as usize)
    }
    pub fn iter(&self) -> std::slice::Iter<'_, TensorIndex> {
        self.indices.iter()
    }
    pub fn as_slice(&self) -> &[TensorIndex] {
        &self.indices
    }

    pub fn union(&self, other: &IndexSet) -> IndexSet {
        IndexSet::from_iter(self.iter().chain(other.iter()).cloned())
    }

    pub fn max_level(&self, dir: usize) -> u8 {
        self.indices.iter().map(|i| i.components[dir].level).max().unwrap_or(0)
    }
}

impl FromIterator<TensorIndex> for IndexSet {
    fn from_iter<I: IntoIterator<Item = TensorIndex>>(iter: I) -> Self {
        IndexSet::from_iter(iter)
    }
}

/// A sparse coefficient vector over tensor indices. Exact zeros are dropped
/// on compaction; iteration order is deterministic where it matters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoeffVector {
    data: HashMap<TensorIndex, f64>,
}

impl CoeffVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<I: IntoIterator<Item = (TensorIndex, f64)>>(iter: I) -> Self {
        let mut v = Self::new();
        for (i, c) in iter {
            v.add(i, c);
        }
        v.compact();
        v
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
    pub fn get(&self, idx: &TensorIndex) -> f64 {
        self.data.get(idx).copied().unwrap_or(0.0)
    }
    pub fn set(&mut self, idx: TensorIndex, v: f64) {
        if v == 0.0 {
            self.data.remove(&idx);
        } else {
            self.data.insert(idx, v);
        }
    }
    pub fn add(&mut self, idx: TensorIndex, v: f64) {
        *self.data.entry(idx).or_insert(0.0) += v;
    }
    pub fn compact(&mut self) {
        self.data.retain(|_, v| *v != 0.0);
    }
    pub fn iter(&self) -> impl Iterator<Item = (&TensorIndex, &f64)> {
        self.data.iter()
    }
    /// Entries sorted by index (deterministic).
    pub fn sorted_entries(&self) -> Vec<(TensorIndex, f64)> {
        let mut v: Vec<(TensorIndex, f64)> = self.data.iter().map(|(&i, &c)| (i, c)).collect();
        v.sort_by_key(|(i, _)| *i);
        v
    }

    pub fn norm(&self) -> f64 {
        self.data.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &CoeffVector) -> f64 {
        let (small, big) = if self.len() <= other.len() { (self, other) } else { (other, self) };
        small.iter().map(|(i, c)| c * big.get(i)).sum()
    }

    pub fn axpy(&mut self, alpha: f64, other: &CoeffVector) {
        for (i, c) in other.iter() {
            self.add(*i, alpha * c);
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for v in self.data.values_mut() {
            *v *= alpha;
        }
    }

    pub fn support(&self) -> IndexSet {
        IndexSet::from_iter(self.data.keys().cloned())
    }

    /// Restriction to a set: entries outside are dropped.
    pub fn restricted(&self, set: &IndexSet) -> CoeffVector {
        CoeffVector {
            data: self
                .data
                .iter()
                .filter(|(i, _)| set.contains(i))
                .map(|(&i, &c)| (i, c))
                .collect(),
        }
    }

    /// Dense view over a set's positions (zeros where absent).
    pub fn to_dense(&self, set: &IndexSet) -> Vec<f64> {
        let mut out = vec![0.0; set.len()];
        for (i, &c) in &self.data {
            if let Some(p) = set.position(i) {
                out[p] = c;
            }
        }
        out
    }

    pub fn from_dense(set: &IndexSet, dense: &[f64]) -> CoeffVector {
        let mut v = CoeffVector::new();
        for (p, &c) in dense.iter().enumerate() {
            if c != 0.0 {
                v.set(set.as_slice()[p], c);
            }
        }
        v
    }
}

/// True iff the 1D index list is a tree in direction `dir`'s basis: each
/// level-j index's support (j > 0) is covered by the union of supports of
/// its level-(j-1) members.
pub fn is_tree(set: &[WaveletIndex1D], basis: &Basis1D) -> bool {
    let mut by_level: HashMap<u8, Vec<&WaveletIndex1D>> = HashMap::new();
    for i in set {
        by_level.entry(i.level).or_default().push(i);
    }
    for i in set {
        if i.level == 0 {
            continue;
        }
        let sup = basis.support_of(*i).expect("valid index");
        let parents = match by_level.get(&(i.level - 1)) {
            Some(p) => p,
            None => return false,
        };
        let cover: Vec<Support> = parents
            .iter()
            .map(|p| basis.support_of(**p).expect("valid index"))
            .collect();
        if !support_covered(&sup, &cover) {
            return false;
        }
    }
    true
}

/// Whether `sup` is covered (up to measure zero) by the union of `cover`.
fn support_covered(sup: &Support, cover: &[Support]) -> bool {
    // subtract intervals one by one; remaining measure must vanish
    let mut remaining: Vec<(f64, f64)> = sup.intervals.clone();
    for c in cover {
        for &(clo, chi) in &c.intervals {
            let mut next = Vec::new();
            for (lo, hi) in remaining {
                if chi <= lo + 1e-14 || clo >= hi - 1e-14 {
                    next.push((lo, hi));
                } else {
                    if clo > lo + 1e-14 {
                        next.push((lo, clo));
                    }
                    if chi < hi - 1e-14 {
                        next.push((chi, hi));
                    }
                }
            }
            remaining = next;
        }
    }
    remaining.iter().map(|(a, b)| b - a).sum::<f64>() < 1e-12
}

/// Per eq:tree_from_multitree: every 1D slice in every direction must be
/// empty or a tree.
pub fn is_multitree(set: &IndexSet, basis: &TensorBasis) -> bool {
    for dir in 0..DIM {
        let other = 1 - dir;
        let mut slices: HashMap<WaveletIndex1D, Vec<WaveletIndex1D>> = HashMap::new();
        for idx in set.iter() {
            slices
                .entry(idx.components[other])
                .or_default()
                .push(idx.components[dir]);
        }
        for slice in slices.values() {
            if !is_tree(slice, &basis.dirs[dir]) {
                return false;
            }
        }
    }
    true
}

/// Parents of a 1D index: the level-(j-1) indices whose supports overlap
/// its support (materialized lazily from support overlap).
pub fn parents_1d(idx: WaveletIndex1D, basis: &Basis1D) -> Vec<WaveletIndex1D> {
    if idx.level == 0 {
        return Vec::new();
    }
    let sup = basis.support_of(idx).expect("valid index");
    let level = idx.level - 1;
    let kind = if level == 0 { crate::wavelet::Kind::Scaling } else { crate::wavelet::Kind::Wavelet };
    let count = basis.translation_count(level, kind);
    let mut out = Vec::new();
    for k in 0..count as u32 {
        let p = WaveletIndex1D { level, k, kind };
        let ps = basis.support_of(p).expect("valid index");
        if ps.overlaps(&sup) {
            out.push(p);
        }
    }
    out
}

/// Smallest multitree containing the input under the per-slice tree closure
/// with support-overlap parents.
pub fn multitree_completion(set: &IndexSet, basis: &TensorBasis) -> IndexSet {
    let mut all: HashSet<TensorIndex> = set.iter().cloned().collect();
    let mut frontier: Vec<TensorIndex> = set.iter().cloned().collect();
    while let Some(idx) = frontier.pop() {
        for dir in 0..DIM {
            let c = idx.components[dir];
            if c.level == 0 {
                continue;
            }
            for p in parents_1d(c, &basis.dirs[dir]) {
                let mut parent = idx;
                parent.components[dir] = p;
                if all.insert(parent) {
                    frontier.push(parent);
                }
            }
        }
    }
    IndexSet::from_iter(all)
}

/// Restriction to the N largest entries in modulus; ties broken by index
/// order so greedy runs are reproducible.
pub fn best_n_term(v: &CoeffVector, n: usize) -> CoeffVector {
    if n >= v.len() {
        return v.clone();
    }
    let mut entries = v.sorted_entries();
    entries.sort_by(|a, b| {
        b.1.abs()
            .partial_cmp(&a.1.abs())
            .unwrap()
            .then_with(|| a.0.cmp(&b.0))
    });
    CoeffVector::from_pairs(entries.into_iter().take(n))
}

/// Least-squares slope s of log ||v - v_N|| vs log N over dyadic N;
/// diagnostic only.
pub fn approx_rate_estimate(v: &CoeffVector) -> Result<f64> {
    if v.len() < 16 {
        return Err(Error::Contract(format!(
            "approx_rate_estimate needs at least 16 entries, got {}",
            v.len()
        )));
    }
    let mut mags: Vec<f64> = v.iter().map(|(_, c)| c.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if (mags[0] - mags[mags.len() - 1]).abs() <= 1e-12 * mags[0] {
        return Err(Error::UndefinedRate("all-equal magnitudes"));
    }
    // tail^2 after keeping the N largest
    let total_sq: f64 = mags.iter().map(|m| m * m).sum();
    let mut prefix = 0.0;
    let mut tails: Vec<(f64, f64)> = Vec::new(); // (N, tail norm)
    let mut n = 1usize;
    for (i, m) in mags.iter().enumerate() {
        prefix += m * m;
        if i + 1 == n {
            let tail_sq = (total_sq - prefix).max(0.0);
            if n < v.len() {
                tails.push((n as f64, tail_sq.sqrt()));
            }
            n *= 2;
        }
    }
    let usable: Vec<(f64, f64)> = tails.iter().filter(|(_, t)| *t > 0.0).cloned().collect();
    if usable.len() < 3 {
        return Err(Error::UndefinedRate("finite support"));
    }
    if usable.iter().all(|(_, t)| (t / usable[0].1 - 1.0).abs() < 1e-12) {
        return Err(Error::UndefinedRate("all-equal tail"));
    }
    // least squares on (log N, log tail)
    let pts: Vec<(f64, f64)> = usable.iter().map(|(n, t)| (n.ln(), t.ln())).collect();
    let m = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = m * sxx - sx * sx;
    if denom.abs() < 1e-30 {
        return Err(Error::UndefinedRate("degenerate abscissae"));
    }
    let slope = (m * sxy - sx * sy) / denom;
    Ok(-slope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavelet::{Boundary, Kind, UnivariateBasisSpec};

    fn basis2d() -> TensorBasis {
        TensorBasis::new(
            Basis1D::new(UnivariateBasisSpec::bspline22(Boundary::DirichletHomog, 0.0)).unwrap(),
            Basis1D::new(UnivariateBasisSpec::multiwavelet2()).unwrap(),
        )
    }

    fn full_box(basis: &TensorBasis, lx: u8, ly: u8) -> IndexSet {
        let xs = basis.dirs[0].indices_up_to(lx);
        let ys = basis.dirs[1].indices_up_to(ly);
        IndexSet::from_iter(
            xs.iter()
                .flat_map(|&x| ys.iter().map(move |&y| TensorIndex::new(x, y))),
        )
    }

    #[test]
    fn full_sets_are_trees_and_multitrees() {
        let basis = basis2d();
        let all = basis.dirs[0].indices_up_to(3);
        assert!(is_tree(&all, &basis.dirs[0]));
        let boxy = full_box(&basis, 2, 2);
        assert!(is_multitree(&boxy, &basis));
        assert!(is_multitree(&IndexSet::new(), &basis));
    }

    #[test]
    fn lone_deep_wavelet_is_not_a_tree() {
        let basis = basis2d();
        let set = vec![WaveletIndex1D::wavelet(3, 2)];
        assert!(!is_tree(&set, &basis.dirs[0]));
    }

    #[test]
    fn completion_produces_multitrees_and_is_idempotent() {
        let basis = basis2d();
        let deep = TensorIndex::new(WaveletIndex1D::wavelet(4, 7), WaveletIndex1D::wavelet(3, 5));
        let set = IndexSet::from_iter([deep]);
        let completed = multitree_completion(&set, &basis);
        assert!(is_multitree(&completed, &basis));
        assert!(completed.contains(&deep));
        let twice = multitree_completion(&completed, &basis);
        assert_eq!(twice.len(), completed.len());
    }

    #[test]
    fn completion_monotone_and_union_closed() {
        let basis = basis2d();
        let a = IndexSet::from_iter([TensorIndex::new(
            WaveletIndex1D::wavelet(3, 1),
            WaveletIndex1D::scaling(0),
        )]);
        let b = IndexSet::from_iter([
            TensorIndex::new(WaveletIndex1D::wavelet(3, 1), WaveletIndex1D::scaling(0)),
            TensorIndex::new(WaveletIndex1D::wavelet(2, 3), WaveletIndex1D::wavelet(2, 1)),
        ]);
        let ca = multitree_completion(&a, &basis);
        let cb = multitree_completion(&b, &basis);
        for i in ca.iter() {
            assert!(cb.contains(i), "monotonicity violated");
        }
        // union of two completions is already complete
        let u = ca.union(&cb);
        assert_eq!(multitree_completion(&u, &basis).len(), u.len());
    }

    #[test]
    fn best_n_term_basics() {
        let basis = basis2d();
        let i = |k: u32| TensorIndex::new(WaveletIndex1D::wavelet(1, k), WaveletIndex1D::scaling(0));
        let v = CoeffVector::from_pairs([(i(0), 3.0), (i(1), -2.0), (i(2), 1.0)]);
        let _ = &basis;
        let kept = best_n_term(&v, 2);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept.get(&i(0)), 3.0);
        assert_eq!(kept.get(&i(1)), -2.0);
        assert_eq!(kept.get(&i(2)), 0.0);
        assert_eq!(best_n_term(&v, 0).len(), 0);
        assert_eq!(best_n_term(&v, 10), v);
    }

    #[test]
    fn pythagoras_for_best_n_term() {
        let mut v = CoeffVector::new();
        for k in 0..40u32 {
            v.set(
                TensorIndex::new(WaveletIndex1D::wavelet(4, k), WaveletIndex1D::scaling(0)),
                ((k as f64) * 1.37).sin() / (1.0 + k as f64),
            );
        }
        let kept = best_n_term(&v, 17);
        let mut rest = v.clone();
        rest.axpy(-1.0, &kept);
        let lhs = kept.norm().powi(2) + rest.norm().powi(2);
        assert!((lhs - v.norm().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn restriction_composes_as_intersection() {
        let mk = |k: u32| TensorIndex::new(WaveletIndex1D::wavelet(2, k), WaveletIndex1D::scaling(1));
        let v = CoeffVector::from_pairs((0..10).map(|k| (mk(k), k as f64 + 1.0)));
        let s1 = IndexSet::from_iter((0..6).map(mk));
        let s2 = IndexSet::from_iter((4..10).map(mk));
        let r12 = v.restricted(&s1).restricted(&s2);
        let inter = IndexSet::from_iter((4..6).map(mk));
        assert_eq!(r12, v.restricted(&inter));
    }

    #[test]
    fn approx_rate_on_synthetic_tail() {
        // |v|_(n) = n^{-(s+1/2)} with s = 1
        let mut v = CoeffVector::new();
        let mut n = 0u32;
        for l in 1..=5u8 {
            for k in 0..(1u32 << (l + 2)) {
                n += 1;
                v.set(
                    TensorIndex::new(WaveletIndex1D::wavelet(l, k), WaveletIndex1D::scaling(0)),
                    (n as f64).powf(-1.5),
                );
                if n >= 512 {
                    break;
                }
            }
        }
        let s = approx_rate_estimate(&v).unwrap();
        assert!((0.9..=1.1).contains(&s), "estimated rate {s}");
    }

    #[test]
    fn approx_rate_rearrangement_invariant_and_finite_support() {
        let mk = |l: u8, k: u32| TensorIndex::new(WaveletIndex1D::wavelet(l, k), WaveletIndex1D::scaling(0));
        let vals: Vec<f64> = (1..=64).map(|n| (n as f64).powf(-1.2)).collect();
        let v1 = CoeffVector::from_pairs((0..64).map(|i| (mk(3, i as u32 % 8 + 8 * (i as u32 / 8)), vals[i])));
        // permuted assignment of the same magnitudes
        let v2 = CoeffVector::from_pairs((0..64).map(|i| (mk(3, (63 - i) as u32), vals[i])));
        let s1 = approx_rate_estimate(&v1).unwrap();
        let s2 = approx_rate_estimate(&v2).unwrap();
        assert!((s1 - s2).abs() < 1e-12);
        // finitely supported vector with abrupt zero tail
        let flat = CoeffVector::from_pairs((0..16).map(|k| (mk(2, k), 1.0)));
        assert!(approx_rate_estimate(&flat).is_err());
    }

    #[test]
    fn kind_validity_in_sets() {
        let basis = basis2d();
        let bad = TensorIndex::new(
            WaveletIndex1D { level: 2, k: 0, kind: Kind::Scaling },
            WaveletIndex1D::scaling(0),
        );
        assert!(!basis.valid(&bad));
    }
}
