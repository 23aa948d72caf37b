//! Parameter-affine bilinear forms and functionals in wavelet coordinates:
//! exact entry computation and restricted (multitree) operator application.
//!
//! Every component is a sum of separable terms, each a tensor product of
//! univariate integrals `int w(x) D^a(trial) D^b(test) dx` over an optional
//! box restriction; entries are exact (Gauss quadrature on the merged
//! breakpoint mesh) and univariate factor values are memoized globally.

use crate::error::{Error, Result};
use crate::index::{CoeffVector, IndexSet, TensorIndex, DIM};
use crate::wavelet::piecewise::{integrate_against_cos, integrate_product, integrate_single};
use crate::wavelet::{Basis1D, PwLinear, WaveletIndex1D};
use dashmap::DashMap;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

/// A point in parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterPoint {
    pub values: Vec<f64>,
}

impl ParameterPoint {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }
    pub fn of(a: f64, b: f64) -> Self {
        Self { values: vec![a, b] }
    }
}

/// Axis-aligned parameter box.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParameterBox {
    pub ranges: Vec<(f64, f64)>,
}

impl ParameterBox {
    pub fn contains(&self, mu: &ParameterPoint) -> bool {
        mu.values.len() == self.ranges.len()
            && mu
                .values
                .iter()
                .zip(self.ranges.iter())
                .all(|(v, (lo, hi))| *v >= lo - 1e-12 && *v <= hi + 1e-12)
    }

    /// Domain policy: error or warn when a parameter leaves the box.
    pub fn check(&self, mu: &ParameterPoint, warn_only: bool) -> Result<()> {
        if self.contains(mu) {
            return Ok(());
        }
        if warn_only {
            log::warn!("parameter {:?} outside the declared box", mu.values);
            Ok(())
        } else {
            Err(Error::ParameterOutsideDomain(mu.values.clone()))
        }
    }
}

/// Theta expression grammar: constants, coordinates, Kronecker delta on a
/// (numerically integer-valued) coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ThetaExpr {
    Const(f64),
    Mu(usize),
    MuDelta { index: usize, equals: f64 },
}

impl ThetaExpr {
    pub fn eval(&self, mu: &ParameterPoint) -> f64 {
        match self {
            ThetaExpr::Const(c) => *c,
            ThetaExpr::Mu(i) => mu.values[*i],
            ThetaExpr::MuDelta { index, equals } => {
                if (mu.values[*index] - equals).abs() < 1e-9 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Norm weight of a tensor-product function space; the basis is scaled by
/// the reciprocal weight (standard wavelet preconditioning).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NormWeight {
    /// L2 of the tensor domain.
    L2,
    /// H^1-type weight sqrt(1 + sum_d 4^{l_d}) over the listed directions.
    SpaceH1 { dirs: Vec<usize> },
    /// Space-time trial weight sqrt(4^{lx} + 4^{lt - lx}) for
    /// X = L2(0,T;V) ∩ H1(0,T;V').
    SpaceTimeX { time: usize, space: usize },
    /// Bochner test weight 2^{lx} for Y = L2(0,T;V).
    BochnerL2H1 { space: usize },
}

impl NormWeight {
    pub fn weight(&self, idx: &TensorIndex) -> f64 {
        match self {
            NormWeight::L2 => 1.0,
            NormWeight::SpaceH1 { dirs } => {
                let mut s = 1.0;
                for &d in dirs {
                    s += 4f64.powi(idx.components[d].level as i32);
                }
                s.sqrt()
            }
            NormWeight::SpaceTimeX { time, space } => {
                let lt = idx.components[*time].level as i32;
                let lx = idx.components[*space].level as i32;
                (4f64.powi(lx) + 4f64.powi(lt - lx)).sqrt()
            }
            NormWeight::BochnerL2H1 { space } => 2f64.powi(idx.components[*space].level as i32),
        }
    }
    /// The diagonal scaling factor applied to the basis function.
    pub fn scaling(&self, idx: &TensorIndex) -> f64 {
        1.0 / self.weight(idx)
    }
}

/// Trial and test spaces of a problem: bases plus norm weights. Trial and
/// test may share the same basis (Galerkin).
pub struct ProblemSpaces {
    pub trial: Arc<crate::index::TensorBasis>,
    pub test: Arc<crate::index::TensorBasis>,
    pub trial_weight: NormWeight,
    pub test_weight: NormWeight,
}

/// One univariate bilinear factor: int over the interval of
/// `poly(x) * D^{da} trial * D^{db} test`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorForm {
    pub da: u8,
    pub db: u8,
    /// polynomial coefficients in ascending powers; [1.0] is the plain form
    pub poly: Vec<f64>,
    /// optional subinterval restriction
    pub interval: Option<(f64, f64)>,
}

impl FactorForm {
    pub fn mass() -> Self {
        Self { da: 0, db: 0, poly: vec![1.0], interval: None }
    }
    pub fn stiffness() -> Self {
        Self { da: 1, db: 1, poly: vec![1.0], interval: None }
    }
    pub fn du_v(poly: Vec<f64>) -> Self {
        Self { da: 1, db: 0, poly, interval: None }
    }
    pub fn on(mut self, interval: (f64, f64)) -> Self {
        self.interval = Some(interval);
        self
    }
}

/// A separable term: product of one factor per direction, times a scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparableTerm {
    pub coef: f64,
    pub factors: [FactorForm; DIM],
}

/// A parameter-independent operator component (sum of separable terms).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorComponent {
    pub terms: Vec<SeparableTerm>,
}

/// One univariate functional factor: int over the interval of `w(x) psi(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalFactor {
    pub weight: WeightFn,
    pub interval: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WeightFn {
    Poly(Vec<f64>),
    Cos { freq: f64 },
}

/// A parameter-independent functional component (separable).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalComponent {
    pub factors: [FunctionalFactor; DIM],
}

/// Parameter-affine bilinear form: sum_q theta_q(mu) * component_q.
pub struct AffineBilinearOperator {
    pub components: Vec<OperatorComponent>,
    pub thetas: Vec<ThetaExpr>,
    pub spaces: Arc<ProblemSpaces>,
    cache: IntegralCache,
    /// stable ids per (component, term, direction) for memoization
    factor_ids: Vec<Vec<[u32; DIM]>>,
}

/// Parameter-affine right-hand side: sum_q theta_q(mu) * f_q.
pub struct AffineFunctional {
    pub components: Vec<FunctionalComponent>,
    pub thetas: Vec<ThetaExpr>,
    pub spaces: Arc<ProblemSpaces>,
    cache: IntegralCache,
    factor_ids: Vec<[u32; DIM]>,
}

/// Global memo of univariate integral values, shared per problem.
#[derive(Clone, Default)]
pub struct IntegralCache {
    vals: Arc<DashMap<(u32, u64, u64), f64>>,
    pieces: Arc<DashMap<(u8, u64), Arc<PwLinear>>>,
    work: Arc<AtomicU64>,
}

impl IntegralCache {
    /// Number of univariate factor evaluations since the last reset
    /// (work instrumentation for the cost-scaling checks).
    pub fn work_counter(&self) -> u64 {
        self.work.load(Ordering::Relaxed)
    }
    pub fn reset_work_counter(&self) {
        self.work.store(0, Ordering::Relaxed);
    }
}

impl IntegralCache {
    fn piece(&self, basis: &Basis1D, dir: usize, idx: WaveletIndex1D) -> Arc<PwLinear> {
        let key = (dir as u8, idx.packed());
        if let Some(p) = self.pieces.get(&key) {
            return p.clone();
        }
        let p = Arc::new(basis.piecewise(idx));
        self.pieces.insert(key, p.clone());
        p
    }

    #[allow(clippy::too_many_arguments)]
    fn factor_value(
        &self,
        id: u32,
        form: &FactorForm,
        trial_basis: &Basis1D,
        test_basis: &Basis1D,
        dir: usize,
        col: WaveletIndex1D,
        row: WaveletIndex1D,
    ) -> f64 {
        self.work.fetch_add(1, Ordering::Relaxed);
        let key = (id, col.packed(), row.packed());
        if let Some(v) = self.vals.get(&key) {
            return *v;
        }
        let fc = self.piece(trial_basis, dir, col);
        let fr = self.piece(test_basis, dir + DIM, row);
        let v = integrate_product(&fc, &fr, form.da as u32, form.db as u32, &form.poly, form.interval);
        self.vals.insert(key, v);
        v
    }

    fn functional_value(
        &self,
        id: u32,
        factor: &FunctionalFactor,
        test_basis: &Basis1D,
        dir: usize,
        row: WaveletIndex1D,
    ) -> f64 {
        let key = (id, 0, row.packed());
        if let Some(v) = self.vals.get(&key) {
            return *v;
        }
        let fr = self.piece(test_basis, dir + DIM, row);
        let v = match &factor.weight {
            WeightFn::Poly(p) => integrate_single(&fr, 0, p, factor.interval),
            WeightFn::Cos { freq } => integrate_against_cos(&fr, *freq, factor.interval),
        };
        self.vals.insert(key, v);
        v
    }
}

static FACTOR_ID: AtomicU64 = AtomicU64::new(1);

fn next_ids<const N: usize>() -> [u32; N] {
    let base = FACTOR_ID.fetch_add(N as u64, Ordering::Relaxed) as u32;
    std::array::from_fn(|i| base + i as u32)
}

impl AffineBilinearOperator {
    pub fn new(
        components: Vec<OperatorComponent>,
        thetas: Vec<ThetaExpr>,
        spaces: Arc<ProblemSpaces>,
    ) -> Result<Self> {
        if components.is_empty() || components.len() != thetas.len() {
            return Err(Error::Config(format!(
                "operator needs matching component/theta counts, got {}/{}",
                components.len(),
                thetas.len()
            )));
        }
        let factor_ids = components
            .iter()
            .map(|c| c.terms.iter().map(|_| next_ids::<DIM>()).collect())
            .collect();
        Ok(Self { components, thetas, spaces, cache: IntegralCache::default(), factor_ids })
    }

    pub fn q_b(&self) -> usize {
        self.components.len()
    }

    pub fn cache(&self) -> &IntegralCache {
        &self.cache
    }

    /// theta vector at mu.
    pub fn evaluate_thetas(&self, mu: &ParameterPoint) -> Vec<f64> {
        self.thetas.iter().map(|t| t.eval(mu)).collect()
    }

    /// Exact bilinear-form value of one component between scaled basis
    /// functions: b_q(psi_col, psi_row); zero when supports are disjoint.
    pub fn entry(&self, comp: usize, row: &TensorIndex, col: &TensorIndex) -> f64 {
        let raw = self.entry_raw(comp, row, col);
        raw * self.spaces.trial_weight.scaling(col) * self.spaces.test_weight.scaling(row)
    }

    fn entry_raw(&self, comp: usize, row: &TensorIndex, col: &TensorIndex) -> f64 {
        let component = &self.components[comp];
        let ids = &self.factor_ids[comp];
        let mut acc = 0.0;
        for (t, term) in component.terms.iter().enumerate() {
            let mut prod = term.coef;
            for d in 0..DIM {
                if prod == 0.0 {
                    break;
                }
                prod *= self.cache.factor_value(
                    ids[t][d],
                    &term.factors[d],
                    &self.spaces.trial.dirs[d],
                    &self.spaces.test.dirs[d],
                    d,
                    col.components[d],
                    row.components[d],
                );
            }
            acc += prod;
        }
        acc
    }

    /// Restricted application `(_rows A_cols) v` of one component; the result
    /// is supported in `rows`. Inputs must be multitrees per the evaluation
    /// scheme's contract.
    pub fn apply_restricted(
        &self,
        comp: usize,
        rows: &IndexSet,
        cols: &IndexSet,
        v: &CoeffVector,
    ) -> CoeffVector {
        let rows_struct = DirStructure::build(rows);
        self.apply_with_structure(comp, &rows_struct, cols, v)
    }

    /// Same as `apply_restricted` with a prebuilt row structure.
    pub fn apply_with_structure(
        &self,
        comp: usize,
        rows: &DirStructure,
        _cols: &IndexSet,
        v: &CoeffVector,
    ) -> CoeffVector {
        // pass 1: contract direction 0 -> intermediate over (row_x, col_y)
        let ids = &self.factor_ids[comp];
        let component = &self.components[comp];
        let mut out = CoeffVector::new();
        for (t, term) in component.terms.iter().enumerate() {
            let mut inter: std::collections::HashMap<(WaveletIndex1D, WaveletIndex1D), f64> =
                std::collections::HashMap::new();
            for (ci, &cval) in v.iter() {
                let scaled = cval * self.spaces.trial_weight.scaling(ci);
                let cx = ci.components[0];
                let cy = ci.components[1];
                rows.xs.for_overlapping(&self.spaces.test.dirs[0], cx, |rx| {
                    let f = self.cache.factor_value(
                        ids[t][0],
                        &term.factors[0],
                        &self.spaces.trial.dirs[0],
                        &self.spaces.test.dirs[0],
                        0,
                        cx,
                        rx,
                    );
                    if f != 0.0 {
                        *inter.entry((rx, cy)).or_insert(0.0) += f * scaled;
                    }
                });
            }
            // pass 2: contract direction 1 against the rows present
            for ((rx, cy), tval) in inter {
                if tval == 0.0 {
                    continue;
                }
                if let Some(rys) = rows.slice(rx) {
                    for &ry in rys {
                        if !self.spaces.test.dirs[1].bounds_overlap(ry, cy) {
                            continue;
                        }
                        let f = self.cache.factor_value(
                            ids[t][1],
                            &term.factors[1],
                            &self.spaces.trial.dirs[1],
                            &self.spaces.test.dirs[1],
                            1,
                            cy,
                            ry,
                        );
                        if f != 0.0 {
                            let row = TensorIndex::new(rx, ry);
                            out.add(row, term.coef * f * tval * self.spaces.test_weight.scaling(&row));
                        }
                    }
                }
            }
        }
        out.compact();
        out
    }

    /// Assemble the restricted sparse matrix of one component over
    /// rows x cols (CSR, row-major), in parallel over rows.
    pub fn assemble_csr(&self, comp: usize, rows: &IndexSet, cols: &IndexSet) -> CsrMatrix {
        use rayon::prelude::*;
        let cols_struct = DirStructure::build(cols);
        let rows_slice = rows.as_slice();
        let per_row: Vec<(Vec<u32>, Vec<f64>)> = rows_slice
            .par_iter()
            .map(|row| {
                let mut idxs: Vec<u32> = Vec::new();
                let mut vals: Vec<f64> = Vec::new();
                let rx = row.components[0];
                let ry = row.components[1];
                let wrow = self.spaces.test_weight.scaling(row);
                cols_struct.xs.for_overlapping(&self.spaces.trial.dirs[0], rx, |cx| {
                    if let Some(cys) = cols_struct.slice(cx) {
                        for &cy in cys {
                            if !self.spaces.trial.dirs[1].bounds_overlap(cy, ry) {
                                continue;
                            }
                            let col = TensorIndex::new(cx, cy);
                            let v = self.entry_raw(comp, row, &col)
                                * wrow
                                * self.spaces.trial_weight.scaling(&col);
                            if v != 0.0 {
                                idxs.push(cols.position(&col).expect("col in set") as u32);
                                vals.push(v);
                            }
                        }
                    }
                });
                (idxs, vals)
            })
            .collect();
        let mut indptr = Vec::with_capacity(rows_slice.len() + 1);
        indptr.push(0u64);
        let nnz: usize = per_row.iter().map(|(i, _)| i.len()).sum();
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for (i, v) in per_row {
            indices.extend_from_slice(&i);
            values.extend_from_slice(&v);
            indptr.push(indices.len() as u64);
        }
        CsrMatrix { nrows: rows_slice.len(), ncols: cols.len(), indptr, indices, values }
    }
}

impl AffineFunctional {
    pub fn new(
        components: Vec<FunctionalComponent>,
        thetas: Vec<ThetaExpr>,
        spaces: Arc<ProblemSpaces>,
    ) -> Result<Self> {
        if components.is_empty() || components.len() != thetas.len() {
            return Err(Error::Config("functional needs matching component/theta counts".into()));
        }
        let factor_ids = components.iter().map(|_| next_ids::<DIM>()).collect();
        Ok(Self { components, thetas, spaces, cache: IntegralCache::default(), factor_ids })
    }

    pub fn q_f(&self) -> usize {
        self.components.len()
    }

    pub fn evaluate_thetas(&self, mu: &ParameterPoint) -> Vec<f64> {
        self.thetas.iter().map(|t| t.eval(mu)).collect()
    }

    /// Exact dual pairings of component q with the scaled test functions on
    /// `rows`.
    pub fn assemble_rhs(&self, comp: usize, rows: &IndexSet) -> CoeffVector {
        let mut out = CoeffVector::new();
        for &row in rows.iter() {
            let v = self.value_at(comp, &row);
            if v != 0.0 {
                out.set(row, v);
            }
        }
        out
    }

    /// Single pairing `<f_q, psi_row>` with the scaled test function.
    pub fn value_at(&self, comp: usize, row: &TensorIndex) -> f64 {
        let ids = &self.factor_ids[comp];
        let mut prod = self.spaces.test_weight.scaling(row);
        for d in 0..DIM {
            if prod == 0.0 {
                break;
            }
            prod *= self.cache.functional_value(
                ids[d],
                &self.components[comp].factors[d],
                &self.spaces.test.dirs[d],
                d,
                row.components[d],
            );
        }
        prod
    }
}

/// Plain CSR sparse matrix for restricted operator blocks.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<u64>,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for p in self.indptr[r] as usize..self.indptr[r + 1] as usize {
                acc += self.values[p] * x[self.indices[p] as usize];
            }
            y[r] = acc;
        }
    }

    /// y += alpha * A x
    pub fn matvec_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for p in self.indptr[r] as usize..self.indptr[r + 1] as usize {
                acc += self.values[p] * x[self.indices[p] as usize];
            }
            y[r] += alpha * acc;
        }
    }

    /// y += alpha * A^T x
    pub fn matvec_transpose_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        for r in 0..self.nrows {
            let xv = alpha * x[r];
            if xv == 0.0 {
                continue;
            }
            for p in self.indptr[r] as usize..self.indptr[r + 1] as usize {
                y[self.indices[p] as usize] += self.values[p] * xv;
            }
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }
}

/// Distinct 1D indices of one direction, grouped by (kind, level) with
/// sorted translation lists for range queries.
#[derive(Debug, Clone, Default)]
pub struct DirIndex {
    /// groups keyed by level; index 0 is the scaling group
    groups: Vec<Vec<u32>>,
}

impl DirIndex {
    pub fn insert(&mut self, idx: WaveletIndex1D) {
        let g = idx.level as usize;
        if self.groups.len() <= g {
            self.groups.resize(g + 1, Vec::new());
        }
        self.groups[g].push(idx.k);
    }

    pub fn finish(&mut self) {
        for g in self.groups.iter_mut() {
            g.sort_unstable();
            g.dedup();
        }
    }

    /// Visit all indices in this direction whose (conservative) support
    /// bounds overlap those of `target`.
    pub fn for_overlapping(
        &self,
        basis: &Basis1D,
        target: WaveletIndex1D,
        mut visit: impl FnMut(WaveletIndex1D),
    ) {
        let (lo, hi) = basis.support_bounds(target);
        let periodic = basis.is_periodic();
        for (g, ks) in self.groups.iter().enumerate() {
            if ks.is_empty() {
                continue;
            }
            let level = g as u8;
            let kind = if level == 0 { crate::wavelet::Kind::Scaling } else { crate::wavelet::Kind::Wavelet };
            if level == 0 {
                // few scaling functions; scan
                for &k in ks {
                    let idx = WaveletIndex1D { level, k, kind };
                    if basis.bounds_overlap(idx, target) {
                        visit(idx);
                    }
                }
                continue;
            }
            // conservative k-window from the group support formulas
            let windows: &[(f64, f64)] = if periodic {
                &[(lo - 1.0, hi - 1.0), (lo, hi), (lo + 1.0, hi + 1.0)]
            } else {
                &[(lo, hi)]
            };
            let (step, pad_lo, pad_hi) = match basis.spec.family {
                crate::wavelet::Family::BiorthoBSpline => {
                    let hf = 0.5f64.powi((basis.dyadic_level(WaveletIndex1D { level, k: 0, kind })) as i32);
                    (2.0 * hf, 12.0 * hf, 10.0 * hf)
                }
                crate::wavelet::Family::OrthonormalMultiwavelet => {
                    let h = 0.5f64.powi(level as i32 - 1);
                    (0.5 * h, h, 0.0)
                }
            };
            let kmax = ks[ks.len() - 1];
            for &(wlo, whi) in windows {
                let k_from = (((wlo - pad_lo) / step).floor().max(0.0)) as i64;
                let k_to = (((whi + pad_hi) / step).ceil().min(kmax as f64 + 1.0)) as i64;
                if k_to < k_from {
                    continue;
                }
                let a = ks.partition_point(|&k| (k as i64) < k_from);
                let b = ks.partition_point(|&k| (k as i64) <= k_to);
                for &k in &ks[a..b] {
                    visit(WaveletIndex1D { level, k, kind });
                }
            }
        }
    }
}

/// Direction-indexed view of an index set: the direction-0 index universe
/// plus per-x slices of direction-1 indices.
pub struct DirStructure {
    pub xs: DirIndex,
    slices: std::collections::HashMap<WaveletIndex1D, Vec<WaveletIndex1D>>,
}

impl DirStructure {
    pub fn build(set: &IndexSet) -> Self {
        let mut slices: std::collections::HashMap<WaveletIndex1D, Vec<WaveletIndex1D>> =
            std::collections::HashMap::new();
        for idx in set.iter() {
            slices.entry(idx.components[0]).or_default().push(idx.components[1]);
        }
        let mut xs = DirIndex::default();
        for (x, ys) in slices.iter_mut() {
            ys.sort();
            xs.insert(*x);
        }
        xs.finish();
        Self { xs, slices }
    }

    pub fn slice(&self, x: WaveletIndex1D) -> Option<&Vec<WaveletIndex1D>> {
        self.slices.get(&x)
    }
}
