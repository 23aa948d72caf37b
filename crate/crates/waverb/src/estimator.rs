//! The online-efficient wavelet surrogate for the dual norm of the exact
//! residual: offline Gramians of dual-pairing coefficient sequences, Riesz
//! constants, stability lower bounds, and the online evaluation.

use crate::awgm::{extension_set, FixedOperator};
use crate::error::{Error, Result};
use crate::index::{CoeffVector, IndexSet, TensorBasis, TensorIndex};
use crate::operator::{AffineBilinearOperator, AffineFunctional, ParameterPoint};
use crate::wavelet::{Kind, WaveletIndex1D};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Unsquared dual-norm equivalence constants of the scaled test basis:
/// `c_psi * ||g||_{Y'} <= ||g||_l2 <= C_psi * ||g||_{Y'}` on the span, i.e.
/// the square roots of the extreme Y-Gramian eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RieszConstants {
    pub c_psi: f64,
    pub big_c_psi: f64,
}

impl RieszConstants {
    pub fn orthonormal() -> Self {
        Self { c_psi: 1.0, big_c_psi: 1.0 }
    }
    pub fn validate(&self) -> Result<()> {
        if self.c_psi <= 0.0 || self.c_psi > self.big_c_psi {
            return Err(Error::Contract(format!(
                "Riesz constants must satisfy 0 < c <= C, got ({}, {})",
                self.c_psi, self.big_c_psi
            )));
        }
        Ok(())
    }
}

/// Closed-form stability bound expressions, serializable with the problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BoundExpr {
    Const(f64),
    /// min(1, mu_i)
    MinOneMu(usize),
    /// max(1, mu_i)
    MaxOneMu(usize),
    /// coef / (1 + sum_i |mu_i|) — calibrated proxy, not a rigorous bound
    ScaledInvOnePlusAbs { coef: f64, indices: Vec<usize> },
}

impl BoundExpr {
    pub fn eval(&self, mu: &ParameterPoint) -> f64 {
        match self {
            BoundExpr::Const(c) => *c,
            BoundExpr::MinOneMu(i) => mu.values[*i].min(1.0),
            BoundExpr::MaxOneMu(i) => mu.values[*i].max(1.0),
            BoundExpr::ScaledInvOnePlusAbs { coef, indices } => {
                coef / (1.0 + indices.iter().map(|&i| mu.values[i].abs()).sum::<f64>())
            }
        }
    }
}

/// Inf-sup/coercivity/continuity bounds of a problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityBounds {
    pub beta_lb: BoundExpr,
    pub gamma_ub: BoundExpr,
    /// coercivity bound for elliptic problems
    pub alpha_lb: Option<BoundExpr>,
}

impl StabilityBounds {
    pub fn beta(&self, mu: &ParameterPoint) -> f64 {
        self.beta_lb.eval(mu)
    }
    pub fn gamma(&self, mu: &ParameterPoint) -> f64 {
        self.gamma_ub.eval(mu)
    }
    pub fn alpha(&self, mu: &ParameterPoint) -> Result<f64> {
        self.alpha_lb
            .as_ref()
            .map(|a| a.eval(mu))
            .ok_or_else(|| Error::Config("coercivity bound requested for a non-elliptic problem".into()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// relative truncation tolerance of the dual expansions
    pub trunc_tol: f64,
    /// extra levels beyond which expansions are cut with a warning
    pub level_cap: u8,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { trunc_tol: 1e-8, level_cap: 14 }
    }
}

/// The offline matrices of the §-style surrogate: Gram matrices of the
/// rhs-component and operator-column coefficient sequences.
#[derive(Debug, Clone)]
pub struct OfflineGramians {
    /// Q_f x Q_f
    pub cff: DMatrix<f64>,
    /// (N*Q_b) x (N*Q_b), index (i, q) -> i*Q_b + q
    pub cbb: DMatrix<f64>,
    /// Q_f x (N*Q_b)
    pub cfb: DMatrix<f64>,
    pub truncation_tol: f64,
    pub riesz: RieszConstants,
    pub q_b: usize,
    pub q_f: usize,
    /// dual-pairing coefficients of the rhs components
    pub f_coeffs: Vec<CoeffVector>,
    /// dual-pairing coefficients of the operator columns, [snapshot][q]
    pub col_coeffs: Vec<Vec<CoeffVector>>,
    /// a truncation hit the level cap before the tail criterion
    pub cap_warning: bool,
}

impl OfflineGramians {
    pub fn n(&self) -> usize {
        self.col_coeffs.len()
    }

    pub fn dims_consistent(&self) -> bool {
        let n = self.n();
        self.cff.nrows() == self.q_f
            && self.cff.ncols() == self.q_f
            && self.cbb.nrows() == n * self.q_b
            && self.cbb.ncols() == n * self.q_b
            && self.cfb.nrows() == self.q_f
            && self.cfb.ncols() == n * self.q_b
    }
}

/// Dual-pairing coefficients `<f_q, psi_row>` of a separable rhs component,
/// truncated by the per-level tail criterion (max coefficient magnitude per
/// level, geometric extrapolation) at `trunc_tol` relative.
pub fn rhs_coeffs(
    func: &AffineFunctional,
    q: usize,
    cfg: &EstimatorConfig,
    max_level: u8,
) -> (CoeffVector, bool) {
    let basis = &func.spaces.test;
    let mut capped = false;
    // per-direction 1D coefficient lists with per-level truncation
    let mut dir_lists: [Vec<(WaveletIndex1D, f64)>; 2] = [Vec::new(), Vec::new()];
    for d in 0..2 {
        let b = &basis.dirs[d];
        let mut list: Vec<(WaveletIndex1D, f64)> = Vec::new();
        let mut global_max: f64 = 0.0;
        for k in 0..b.scaling_count() as u32 {
            let idx = WaveletIndex1D::scaling(k);
            let v = func.factor_value_1d(q, d, idx);
            global_max = global_max.max(v.abs());
            list.push((idx, v));
        }
        let mut level = 1u8;
        loop {
            let mut level_max: f64 = 0.0;
            for k in 0..b.wavelet_count(level) as u32 {
                let idx = WaveletIndex1D::wavelet(level, k);
                let v = func.factor_value_1d(q, d, idx);
                level_max = level_max.max(v.abs());
                if v != 0.0 {
                    list.push((idx, v));
                }
            }
            global_max = global_max.max(level_max);
            // geometric tail factor: assume at worst no decay improvement,
            // tail ~ level_max * 2
            if level_max * 2.0 <= cfg.trunc_tol * global_max.max(1e-300) {
                break;
            }
            if level >= max_level.min(cfg.level_cap) {
                capped = true;
                break;
            }
            level += 1;
        }
        dir_lists[d] = list;
    }
    // sparse outer product with pruning
    let max0 = dir_lists[0].iter().map(|(_, v)| v.abs()).fold(0.0f64, f64::max);
    let max1 = dir_lists[1].iter().map(|(_, v)| v.abs()).fold(0.0f64, f64::max);
    let prune = cfg.trunc_tol * max0 * max1;
    let mut out = CoeffVector::new();
    for &(i0, v0) in &dir_lists[0] {
        for &(i1, v1) in &dir_lists[1] {
            let idx = TensorIndex::new(i0, i1);
            let v = v0 * v1 * func.spaces.test_weight.scaling(&idx);
            if v.abs() > prune * func.spaces.test_weight.scaling(&idx) {
                out.set(idx, v);
            }
        }
    }
    (out, capped)
}

/// Dual-pairing coefficients `b_q(zeta, psi_row)` of one operator column,
/// computed on supp(zeta) extended level by level until the per-level tail
/// criterion holds.
pub fn column_coeffs(
    op: &AffineBilinearOperator,
    q: usize,
    zeta: &CoeffVector,
    cfg: &EstimatorConfig,
    max_level: u8,
) -> (CoeffVector, bool) {
    if zeta.is_empty() {
        return (CoeffVector::new(), false);
    }
    let test: &TensorBasis = &op.spaces.test;
    let cols = zeta.support();
    let cap = max_level.min(cfg.level_cap);
    let mut capped = false;
    let mut rows = extension_set(&cols, test, cap, &mut capped);
    let mut out = op.apply_restricted(q, &rows, &cols, zeta);
    loop {
        let global_max = out.iter().map(|(_, v)| v.abs()).fold(0.0f64, f64::max);
        if global_max == 0.0 {
            break;
        }
        // maximum on the current finest layer
        let top = rows
            .iter()
            .map(|i| i.components[0].level.max(i.components[1].level))
            .max()
            .unwrap_or(0);
        let top_max = out
            .iter()
            .filter(|(i, _)| i.components[0].level.max(i.components[1].level) == top)
            .map(|(_, v)| v.abs())
            .fold(0.0f64, f64::max);
        if top_max * 2.0 <= cfg.trunc_tol * global_max {
            break;
        }
        if top >= cap {
            capped = true;
            break;
        }
        // extend the top layer one more level and add its contributions
        let top_set: IndexSet = rows
            .iter()
            .filter(|i| i.components[0].level.max(i.components[1].level) == top)
            .cloned()
            .collect();
        let mut cflag = false;
        let ext = extension_set(&top_set, test, cap, &mut cflag);
        let fresh: IndexSet = ext.iter().filter(|i| !rows.contains(i)).cloned().collect();
        if fresh.is_empty() {
            capped |= cflag;
            break;
        }
        let more = op.apply_restricted(q, &fresh, &cols, zeta);
        out.axpy(1.0, &more);
        rows = rows.union(&fresh);
    }
    out.compact();
    (out, capped)
}

/// Assemble the three Gramians from scratch.
pub fn build_gramians(
    f_coeffs: Vec<CoeffVector>,
    col_coeffs: Vec<Vec<CoeffVector>>,
    riesz: RieszConstants,
    trunc_tol: f64,
    cap_warning: bool,
) -> OfflineGramians {
    let q_f = f_coeffs.len();
    let q_b = col_coeffs.first().map(|c| c.len()).unwrap_or(0);
    let n = col_coeffs.len();
    let mut cff = DMatrix::zeros(q_f, q_f);
    for a in 0..q_f {
        for b in a..q_f {
            let v = f_coeffs[a].dot(&f_coeffs[b]);
            cff[(a, b)] = v;
            cff[(b, a)] = v;
        }
    }
    let mut cbb = DMatrix::zeros(n * q_b, n * q_b);
    let mut cfb = DMatrix::zeros(q_f, n * q_b);
    for i in 0..n {
        for qi in 0..q_b {
            let r = i * q_b + qi;
            for j in 0..n {
                for qj in 0..q_b {
                    let c = j * q_b + qj;
                    if c < r {
                        continue;
                    }
                    let v = col_coeffs[i][qi].dot(&col_coeffs[j][qj]);
                    cbb[(r, c)] = v;
                    cbb[(c, r)] = v;
                }
            }
            for a in 0..q_f {
                cfb[(a, r)] = f_coeffs[a].dot(&col_coeffs[i][qi]);
            }
        }
    }
    OfflineGramians {
        cff,
        cbb,
        cfb,
        truncation_tol: trunc_tol,
        riesz,
        q_b,
        q_f,
        f_coeffs,
        col_coeffs,
        cap_warning,
    }
}

impl OfflineGramians {
    /// Incremental update after appending one snapshot's columns: only the
    /// new rows/columns are computed.
    pub fn append_snapshot(&mut self, cols: Vec<CoeffVector>) {
        assert_eq!(cols.len(), self.q_b.max(cols.len()));
        if self.q_b == 0 {
            self.q_b = cols.len();
        }
        let n_old = self.n();
        let q_b = self.q_b;
        let dim_new = (n_old + 1) * q_b;
        let mut cbb = DMatrix::zeros(dim_new, dim_new);
        cbb.view_mut((0, 0), (n_old * q_b, n_old * q_b)).copy_from(&self.cbb);
        let mut cfb = DMatrix::zeros(self.q_f, dim_new);
        cfb.view_mut((0, 0), (self.q_f, n_old * q_b)).copy_from(&self.cfb);
        for qi in 0..q_b {
            let r = n_old * q_b + qi;
            for j in 0..n_old {
                for qj in 0..q_b {
                    let c = j * q_b + qj;
                    let v = cols[qi].dot(&self.col_coeffs[j][qj]);
                    cbb[(r, c)] = v;
                    cbb[(c, r)] = v;
                }
            }
            for qj in qi..q_b {
                let c = n_old * q_b + qj;
                let v = cols[qi].dot(&cols[qj]);
                cbb[(r, c)] = v;
                cbb[(c, r)] = v;
            }
            for a in 0..self.q_f {
                cfb[(a, r)] = self.f_coeffs[a].dot(&cols[qi]);
            }
        }
        self.cbb = cbb;
        self.cfb = cfb;
        self.col_coeffs.push(cols);
    }

    /// Computable surrogate for the dual norm of the residual
    /// `f(mu) - B(mu) u_N`: the l2 norm of its dual-pairing coefficients
    /// assembled from the Gramians, divided by the upper Riesz constant so
    /// the value never exceeds the true dual norm (on the truncation span).
    ///
    /// Online cost O(Q_f^2 + Q_f Q_b N + Q_b^2 N^2); no fine-space data.
    pub fn surrogate_dual_norm(
        &self,
        theta_f: &[f64],
        theta_b: &[f64],
        u_n: &[f64],
    ) -> Result<f64> {
        let n = u_n.len();
        debug_assert!(n <= self.n());
        let q_b = self.q_b;
        let tf = DVector::from_column_slice(theta_f);
        // w_{(j,q)} = u_j * theta_b_q over the first n snapshots
        let mut w = DVector::zeros(n * q_b);
        for j in 0..n {
            for q in 0..q_b {
                w[j * q_b + q] = u_n[j] * theta_b[q];
            }
        }
        let cbb = self.cbb.view((0, 0), (n * q_b, n * q_b));
        let cfb = self.cfb.view((0, 0), (self.q_f, n * q_b));
        let radicand =
            (tf.transpose() * &self.cff * &tf)[(0, 0)] - 2.0 * (tf.transpose() * cfb * &w)[(0, 0)]
                + (w.transpose() * cbb * &w)[(0, 0)];
        let scale = (tf.transpose() * &self.cff * &tf)[(0, 0)].abs().max(1.0);
        if radicand < -1e-8 * scale {
            return Err(Error::EstimatorInconsistency(radicand));
        }
        Ok(radicand.max(0.0).sqrt() / self.riesz.big_c_psi)
    }
}

/// The certified error bound surrogate: dual-norm surrogate over the
/// inf-sup lower bound.
pub fn error_bound(
    g: &OfflineGramians,
    bounds: &StabilityBounds,
    mu: &ParameterPoint,
    theta_f: &[f64],
    theta_b: &[f64],
    u_n: &[f64],
) -> Result<f64> {
    let beta = bounds.beta(mu);
    if beta <= 0.0 {
        return Err(Error::Contract(format!("nonpositive stability bound {beta} at {:?}", mu.values)));
    }
    Ok(g.surrogate_dual_norm(theta_f, theta_b, u_n)? / beta)
}

/// Derived effectivity constants per the truncation state:
/// c_delta = c/C * (1 - tf), C_delta = 1 + tf with
/// tf = trunc_tol / current_max_estimator (clamped).
pub fn derived_deltas(riesz: &RieszConstants, trunc_tol: f64, current_max_estimator: f64) -> (f64, f64) {
    let tf = if current_max_estimator > 0.0 {
        (trunc_tol / current_max_estimator).min(0.5)
    } else {
        0.0
    };
    ((riesz.c_psi / riesz.big_c_psi) * (1.0 - tf), 1.0 + tf)
}

/// Extreme-eigenvalue estimates (power and CG-backed inverse power
/// iteration) of the scaled test-space Gramian on a reference multitree,
/// returned in the unsquared dual-norm convention.
pub fn tensor_riesz_constants(
    gramian: &FixedOperator,
    reference: &IndexSet,
    max_iter: usize,
) -> Result<RieszConstants> {
    let mats = gramian.assemble(reference, reference);
    let n = reference.len();
    let apply = |x: &[f64], y: &mut [f64]| {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (t, m) in &mats {
            m.matvec_add(*t, x, y);
        }
    };
    let power = |invert: bool| -> Result<f64> {
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 37 % 101) as f64) / 101.0).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        let mut lambda = 0.0;
        let mut w = vec![0.0; n];
        for it in 0..max_iter {
            if invert {
                // CG solve G w = v
                let mut x = vec![0.0; n];
                let mut r = v.clone();
                let mut p = r.clone();
                let mut rs: f64 = r.iter().map(|a| a * a).sum();
                let mut ap = vec![0.0; n];
                for _ in 0..8000 {
                    if rs.sqrt() < 1e-13 {
                        break;
                    }
                    apply(&p, &mut ap);
                    let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
                    let alpha = rs / pap;
                    for i in 0..n {
                        x[i] += alpha * p[i];
                        r[i] -= alpha * ap[i];
                    }
                    let rs2: f64 = r.iter().map(|a| a * a).sum();
                    let beta = rs2 / rs;
                    rs = rs2;
                    for i in 0..n {
                        p[i] = r[i] + beta * p[i];
                    }
                }
                w.copy_from_slice(&x);
            } else {
                apply(&v, &mut w);
            }
            let nl = w.iter().map(|a| a * a).sum::<f64>().sqrt();
            if nl == 0.0 {
                return Err(Error::EigenNonConvergence { iterations: it, last: lambda });
            }
            let new_lambda: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
            for i in 0..n {
                v[i] = w[i] / nl;
            }
            if it > 3 && (new_lambda - lambda).abs() <= 1e-10 * new_lambda.abs().max(1e-300) {
                return Ok(new_lambda);
            }
            lambda = new_lambda;
        }
        // power iteration on smooth Gramian spectra stalls harmlessly near
        // clustered extremes; accept the last estimate
        Ok(lambda)
    };
    let hi = power(false)?;
    let inv = power(true)?;
    let lo = 1.0 / inv;
    if lo <= 0.0 || hi <= 0.0 {
        return Err(Error::EigenNonConvergence { iterations: max_iter, last: lo });
    }
    let rc = RieszConstants { c_psi: lo.sqrt(), big_c_psi: hi.sqrt() };
    rc.validate()?;
    Ok(rc)
}

/// Hyperbolic-cross reference set: all valid tensor indices with level sum
/// at most `budget`.
pub fn hyperbolic_cross(basis: &TensorBasis, budget: u8) -> IndexSet {
    let mut out = Vec::new();
    for l0 in 0..=budget {
        let xs: Vec<WaveletIndex1D> = if l0 == 0 {
            (0..basis.dirs[0].scaling_count() as u32).map(WaveletIndex1D::scaling).collect()
        } else {
            (0..basis.dirs[0].wavelet_count(l0) as u32)
                .map(|k| WaveletIndex1D::wavelet(l0, k))
                .collect()
        };
        for l1 in 0..=(budget - l0) {
            let ys: Vec<WaveletIndex1D> = if l1 == 0 {
                (0..basis.dirs[1].scaling_count() as u32).map(WaveletIndex1D::scaling).collect()
            } else {
                (0..basis.dirs[1].wavelet_count(l1) as u32)
                    .map(|k| WaveletIndex1D::wavelet(l1, k))
                    .collect()
            };
            for &x in &xs {
                for &y in &ys {
                    out.push(TensorIndex::new(x, y));
                }
            }
        }
    }
    IndexSet::from_iter(out)
}

impl AffineFunctional {
    /// 1D factor value of component q in direction d (used by the level-wise
    /// truncation of rhs expansions).
    pub fn factor_value_1d(&self, q: usize, d: usize, idx: WaveletIndex1D) -> f64 {
        let basis = &self.spaces.test.dirs[d];
        if !basis.valid(idx) {
            return 0.0;
        }
        let f = basis.piecewise(idx);
        let factor = &self.components[q].factors[d];
        match &factor.weight {
            crate::operator::WeightFn::Poly(p) => {
                crate::wavelet::piecewise::integrate_single(&f, 0, p, factor.interval)
            }
            crate::operator::WeightFn::Cos { freq } => {
                crate::wavelet::piecewise::integrate_against_cos(&f, *freq, factor.interval)
            }
        }
    }
}

/// Dense Riesz-representation oracle for the dual norm on a reference set:
/// `||g||_{Y'}^2 = g^T G^{-1} g` with the scaled Y-Gramian G.
pub fn dual_norm_oracle(gramian: &FixedOperator, reference: &IndexSet, g: &CoeffVector) -> f64 {
    let n = reference.len();
    let mut dense = DMatrix::<f64>::zeros(n, n);
    let mats = gramian.assemble(reference, reference);
    for (t, m) in &mats {
        for r in 0..n {
            for p in m.indptr[r] as usize..m.indptr[r + 1] as usize {
                dense[(r, m.indices[p] as usize)] += t * m.values[p];
            }
        }
    }
    let gd = DVector::from_vec(g.to_dense(reference));
    let sol = dense.cholesky().expect("Gramian SPD").solve(&gd);
    gd.dot(&sol).max(0.0).sqrt()
}

#[allow(unused)]
fn kind_of(level: u8) -> Kind {
    if level == 0 {
        Kind::Scaling
    } else {
        Kind::Wavelet
    }
}
