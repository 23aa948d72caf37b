//! Univariate wavelet bases: biorthogonal B-splines on interval and circle,
//! and L2-orthonormal multiwavelets, with exact evaluation and supports.

pub mod bspline;
pub mod multiwavelet;
pub mod piecewise;

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub use bspline::{pair_primal_dual, BsplineBasis1D, DualVec};
pub use multiwavelet::AlpertBasis1D;
pub use piecewise::PwLinear;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    BiorthoBSpline,
    OrthonormalMultiwavelet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    DirichletHomog,
    Periodic,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Kind {
    Scaling,
    Wavelet,
}

/// Index of one univariate basis function. Level 0 holds the scaling
/// functions of the coarsest mesh; levels >= 1 hold wavelets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WaveletIndex1D {
    pub level: u8,
    pub k: u32,
    pub kind: Kind,
}

impl WaveletIndex1D {
    pub fn scaling(k: u32) -> Self {
        Self { level: 0, k, kind: Kind::Scaling }
    }
    pub fn wavelet(level: u8, k: u32) -> Self {
        Self { level, k, kind: Kind::Wavelet }
    }
    /// Packed form used as a cheap hash/sort key.
    pub fn packed(self) -> u64 {
        ((self.level as u64) << 33) | ((matches!(self.kind, Kind::Wavelet) as u64) << 32) | self.k as u64
    }
}

impl PartialOrd for WaveletIndex1D {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for WaveletIndex1D {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.level, self.kind, self.k).cmp(&(other.level, other.kind, other.k))
    }
}

/// Declares the univariate basis of one tensor direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnivariateBasisSpec {
    pub family: Family,
    /// Primal spline order d (degree plus one).
    pub order: u8,
    /// Dual order; equals `order` for the orthonormal family.
    pub dual_order: u8,
    pub vanishing_moments: u8,
    pub boundary: Boundary,
    /// Norm scaling exponent s: a level-j function carries 2^{-js} relative
    /// to its L2-normalized version.
    pub sobolev_scale: f64,
}

impl UnivariateBasisSpec {
    pub fn bspline22(boundary: Boundary, sobolev_scale: f64) -> Self {
        Self {
            family: Family::BiorthoBSpline,
            order: 2,
            dual_order: 2,
            vanishing_moments: 2,
            boundary,
            sobolev_scale,
        }
    }

    pub fn multiwavelet2() -> Self {
        Self {
            family: Family::OrthonormalMultiwavelet,
            order: 2,
            dual_order: 2,
            vanishing_moments: 2,
            boundary: Boundary::Free,
            sobolev_scale: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order < 2 {
            return Err(Error::InvalidBasisSpec(format!("order d = {} must be >= 2", self.order)));
        }
        if self.vanishing_moments < 1 {
            return Err(Error::InvalidBasisSpec("need m >= 1 vanishing moments".into()));
        }
        match self.family {
            Family::BiorthoBSpline => {
                if self.order != 2 || self.dual_order != 2 {
                    return Err(Error::InvalidBasisSpec(
                        "only the (d, d~) = (2, 2) B-spline construction is implemented".into(),
                    ));
                }
            }
            Family::OrthonormalMultiwavelet => {
                if self.order != self.dual_order {
                    return Err(Error::InvalidBasisSpec(
                        "orthonormal multiwavelets are self-dual (d = d~)".into(),
                    ));
                }
                if self.order != 2 {
                    return Err(Error::InvalidBasisSpec("only order 2 multiwavelets are implemented".into()));
                }
                if self.boundary != Boundary::Free {
                    return Err(Error::InvalidBasisSpec(
                        "multiwavelets are implemented with free boundary only".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Support of a basis function: one interval, or two for wrapped periodic
/// functions.
#[derive(Debug, Clone, PartialEq)]
pub struct Support {
    pub intervals: Vec<(f64, f64)>,
}

impl Support {
    pub fn total_length(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }
    pub fn overlaps(&self, other: &Support) -> bool {
        self.intervals
            .iter()
            .any(|&(a, b)| other.intervals.iter().any(|&(c, d)| a < d && c < b))
    }
    pub fn covers_point(&self, x: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| a <= x && x <= b)
    }
}

enum BasisImpl {
    Bspline(BsplineBasis1D),
    Multi(AlpertBasis1D),
}

/// A fully constructed univariate basis. Immutable after construction;
/// evaluation is reentrant.
pub struct Basis1D {
    pub spec: UnivariateBasisSpec,
    imp: BasisImpl,
}

impl Basis1D {
    pub fn new(spec: UnivariateBasisSpec) -> Result<Self> {
        spec.validate()?;
        let imp = match spec.family {
            Family::BiorthoBSpline => BasisImpl::Bspline(BsplineBasis1D::new(spec.boundary)),
            Family::OrthonormalMultiwavelet => BasisImpl::Multi(AlpertBasis1D),
        };
        Ok(Self { spec, imp })
    }

    pub fn scaling_count(&self) -> usize {
        match &self.imp {
            BasisImpl::Bspline(b) => b.scaling_count(),
            BasisImpl::Multi(m) => m.scaling_count(),
        }
    }

    pub fn wavelet_count(&self, level: u8) -> usize {
        match &self.imp {
            BasisImpl::Bspline(b) => b.wavelet_count(level),
            BasisImpl::Multi(m) => m.wavelet_count(level),
        }
    }

    /// Total translation range of (level, kind); the valid k are 0..count.
    pub fn translation_count(&self, level: u8, kind: Kind) -> usize {
        match kind {
            Kind::Scaling => {
                if level == 0 {
                    self.scaling_count()
                } else {
                    0
                }
            }
            Kind::Wavelet => {
                if level == 0 {
                    0
                } else {
                    self.wavelet_count(level)
                }
            }
        }
    }

    pub fn valid(&self, idx: WaveletIndex1D) -> bool {
        (idx.k as usize) < self.translation_count(idx.level, idx.kind)
    }

    pub fn check(&self, idx: WaveletIndex1D) -> Result<()> {
        if self.valid(idx) {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange(format!("{idx:?} invalid for {:?}", self.spec.family)))
        }
    }

    /// Dyadic mesh level on which the function is piecewise polynomial.
    pub fn dyadic_level(&self, idx: WaveletIndex1D) -> u32 {
        match &self.imp {
            BasisImpl::Bspline(b) => b.dyadic_level(idx),
            BasisImpl::Multi(m) => m.dyadic_level(idx),
        }
    }

    /// L2-normalized piecewise representation (no Sobolev factor).
    pub fn piecewise(&self, idx: WaveletIndex1D) -> PwLinear {
        match &self.imp {
            BasisImpl::Bspline(b) => b.piecewise(idx),
            BasisImpl::Multi(m) => m.piecewise(idx),
        }
    }

    /// The 2^{-level*s} factor of the spec's normalization.
    pub fn scale_factor(&self, idx: WaveletIndex1D) -> f64 {
        2f64.powf(-(idx.level as f64) * self.spec.sobolev_scale)
    }

    /// Point value under the spec's normalization; exact.
    pub fn eval_primal(&self, idx: WaveletIndex1D, x: f64) -> Result<f64> {
        self.check(idx)?;
        Ok(self.piecewise(idx).eval(x) * self.scale_factor(idx))
    }

    /// Exact support; `eval_primal` vanishes outside it. Periodic wavelets
    /// near the seam report two intervals.
    pub fn support_of(&self, idx: WaveletIndex1D) -> Result<Support> {
        self.check(idx)?;
        let f = self.piecewise(idx);
        let mut intervals: Vec<(f64, f64)> = Vec::new();
        for p in &f.pieces {
            if let Some(last) = intervals.last_mut() {
                if (p.x0 - last.1).abs() < 1e-14 {
                    last.1 = p.x1;
                    continue;
                }
            }
            intervals.push((p.x0, p.x1));
        }
        Ok(Support { intervals })
    }

    /// Exact integral of x^r times the (normalized) wavelet. Seam-crossing
    /// periodic wavelets are integrated on their unwrapped lift, where the
    /// moment statement is meaningful.
    pub fn vanishing_moment(&self, idx: WaveletIndex1D, r: u32) -> Result<f64> {
        self.check(idx)?;
        if idx.kind != Kind::Wavelet {
            return Err(Error::IndexOutOfRange("vanishing_moment requires a wavelet index".into()));
        }
        let f = match &self.imp {
            BasisImpl::Bspline(b) => b.piecewise_unwrapped(idx),
            BasisImpl::Multi(m) => m.piecewise(idx),
        };
        Ok(f.moment(r) * self.scale_factor(idx))
    }

    pub fn is_periodic(&self) -> bool {
        self.spec.boundary == Boundary::Periodic
    }

    /// Cheap conservative support bounds (unwrapped for periodic functions:
    /// the interval may extend beyond [0,1]). Guaranteed to contain the true
    /// support; used for overlap candidate enumeration.
    pub fn support_bounds(&self, idx: WaveletIndex1D) -> (f64, f64) {
        match &self.imp {
            BasisImpl::Multi(_) => match idx.kind {
                Kind::Scaling => (0.0, 1.0),
                Kind::Wavelet => {
                    let cells = 1u32 << (idx.level - 1);
                    let h = 1.0 / cells as f64;
                    let c = (idx.k / 2) as f64;
                    (c * h, (c + 1.0) * h)
                }
            },
            BasisImpl::Bspline(b) => match idx.kind {
                Kind::Scaling => {
                    let h = 0.5f64.powi(b.j0 as i32);
                    if self.is_periodic() && b.j0 == 0 {
                        return (0.0, 1.0);
                    }
                    let node = match self.spec.boundary {
                        Boundary::DirichletHomog => idx.k as f64 + 1.0,
                        _ => idx.k as f64,
                    };
                    ((node - 1.0) * h, (node + 1.0) * h)
                }
                Kind::Wavelet => {
                    let hf = 0.5f64.powi((b.j0 + idx.level as u32) as i32);
                    let k = idx.k as f64;
                    // interior mask spans fine nodes 2k-2 .. 2k+4; edge
                    // wavelets span at most 12 fine nodes from their corner
                    (2.0 * k * hf - 10.0 * hf, 2.0 * k * hf + 12.0 * hf)
                }
            },
        }
    }

    /// Conservative overlap test on (possibly unwrapped periodic) bounds.
    pub fn bounds_overlap(&self, a: WaveletIndex1D, b: WaveletIndex1D) -> bool {
        let (alo, ahi) = self.support_bounds(a);
        let (blo, bhi) = self.support_bounds(b);
        if !self.is_periodic() {
            return alo < bhi && blo < ahi;
        }
        // compare on the circle: shift each by -1, 0, +1
        for s in [-1.0, 0.0, 1.0] {
            if alo + s < bhi && blo < ahi + s {
                return true;
            }
        }
        false
    }

    /// All indices with level <= max_level, in the canonical order.
    pub fn indices_up_to(&self, max_level: u8) -> Vec<WaveletIndex1D> {
        let mut v: Vec<WaveletIndex1D> =
            (0..self.scaling_count() as u32).map(WaveletIndex1D::scaling).collect();
        for l in 1..=max_level {
            for k in 0..self.wavelet_count(l) as u32 {
                v.push(WaveletIndex1D::wavelet(l, k));
            }
        }
        v
    }

    /// Extreme-eigenvalue estimates of the Gramian of the basis restricted
    /// to levels <= max_level, in the inner product selected by the spec's
    /// Sobolev scale (s = 0: L2; s = 1: H1). Returned unsquared so that
    /// `c * ||v||_l2 <= ||sum v_i psi_i|| <= C * ||v||_l2` holds on the span
    /// with (c^2, C^2) the returned Gramian eigenvalue bounds' squares, i.e.
    /// the pair (c, C) = (sqrt(lambda_min), sqrt(lambda_max)).
    ///
    /// With `dual = true` the constants of the dual basis are returned
    /// (reciprocal spectrum of the same Gramian).
    pub fn riesz_constants(&self, max_level: u8, dual: bool) -> Result<(f64, f64)> {
        let idxs = self.indices_up_to(max_level);
        let n = idxs.len();
        let s = self.spec.sobolev_scale;
        if s != 0.0 && s != 1.0 {
            return Err(Error::Config(format!("riesz_constants supports s in {{0, 1}}, got {s}")));
        }
        let reps: Vec<PwLinear> = idxs.iter().map(|&i| self.piecewise(i)).collect();
        let scales: Vec<f64> = idxs.iter().map(|&i| self.scale_factor(i)).collect();
        let mut g = nalgebra::DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut v = piecewise::integrate_product(&reps[i], &reps[j], 0, 0, &[1.0], None);
                if s == 1.0 {
                    v += piecewise::integrate_product(&reps[i], &reps[j], 1, 1, &[1.0], None);
                }
                v *= scales[i] * scales[j];
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        let (lo, hi) = extreme_eigenvalues(&g)?;
        if lo <= 0.0 {
            return Err(Error::EigenNonConvergence { iterations: 0, last: lo });
        }
        if dual {
            Ok(((1.0 / hi).sqrt(), (1.0 / lo).sqrt()))
        } else {
            Ok((lo.sqrt(), hi.sqrt()))
        }
    }
}

/// Largest and smallest eigenvalue of a symmetric positive definite matrix
/// by power and inverse-power iteration (Cholesky-backed), with a bounded
/// iteration count.
pub fn extreme_eigenvalues(g: &nalgebra::DMatrix<f64>) -> Result<(f64, f64)> {
    let n = g.nrows();
    if n == 1 {
        return Ok((g[(0, 0)], g[(0, 0)]));
    }
    if n <= 1200 {
        // dense path; the iterative one below handles large spans and
        // reports non-convergence diagnostics
        let eig = g.clone().symmetric_eigen();
        let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        return Ok((lo, hi));
    }
    let max_iter = 20000;
    let tol = 1e-12;

    let power = |apply: &dyn Fn(&nalgebra::DVector<f64>) -> nalgebra::DVector<f64>| -> Result<f64> {
        let mut v = nalgebra::DVector::from_fn(n, |i, _| 1.0 + (i as f64 * 0.7).sin());
        v /= v.norm();
        let mut lambda = 0.0;
        for it in 0..max_iter {
            let w = apply(&v);
            let nl = w.norm();
            if nl == 0.0 {
                return Err(Error::EigenNonConvergence { iterations: it, last: lambda });
            }
            let newv = &w / nl;
            let new_lambda = v.dot(&w);
            if it > 2 && (new_lambda - lambda).abs() <= tol * new_lambda.abs().max(1e-300) {
                return Ok(new_lambda);
            }
            lambda = new_lambda;
            v = newv;
        }
        Err(Error::EigenNonConvergence { iterations: max_iter, last: lambda })
    };

    let hi = power(&|v| g * v)?;
    let chol = nalgebra::Cholesky::new(g.clone())
        .ok_or_else(|| Error::Contract("Gramian not positive definite".into()))?;
    let inv_hi = power(&|v| chol.solve(v))?;
    Ok((1.0 / inv_hi, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn orthonormal_family_riesz_is_one() {
        let b = Basis1D::new(UnivariateBasisSpec::multiwavelet2()).unwrap();
        let (c, cc) = b.riesz_constants(3, false).unwrap();
        assert_abs_diff_eq!(c, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(cc, 1.0, epsilon = 1e-10);
        let (dc, dcc) = b.riesz_constants(3, true).unwrap();
        assert_abs_diff_eq!(dc, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(dcc, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn riesz_constants_ordered_and_level_robust() {
        // ordering and monotone widening on the L2-normalized system
        let b = Basis1D::new(UnivariateBasisSpec::bspline22(Boundary::DirichletHomog, 0.0)).unwrap();
        let (c4, cc4) = b.riesz_constants(3, false).unwrap();
        assert!(c4 > 0.0 && c4 <= cc4);
        let (c6, cc6) = b.riesz_constants(5, false).unwrap();
        assert!(c6 <= c4 * (1.0 + 1e-9) && cc6 >= cc4 * (1.0 - 1e-9));
        // level robustness within 5% between J and J+2 on the H1-scaled
        // system (the variant used for H1-type directions)
        let bh = Basis1D::new(UnivariateBasisSpec::bspline22(Boundary::DirichletHomog, 1.0)).unwrap();
        let (h4, hh4) = bh.riesz_constants(4, false).unwrap();
        let (h6, hh6) = bh.riesz_constants(6, false).unwrap();
        assert!((h6 / h4 - 1.0).abs() < 0.05, "cPsi drift {} -> {}", h4, h6);
        assert!((hh6 / hh4 - 1.0).abs() < 0.05, "CPsi drift {} -> {}", hh4, hh6);
    }

    #[test]
    fn eval_outside_support_is_zero() {
        let b = Basis1D::new(UnivariateBasisSpec::bspline22(Boundary::DirichletHomog, 0.0)).unwrap();
        let idx = WaveletIndex1D::wavelet(2, 10);
        let sup = b.support_of(idx).unwrap();
        let x = sup.intervals[0].0 / 2.0;
        assert_eq!(b.eval_primal(idx, x).unwrap(), 0.0);
    }

    #[test]
    fn invalid_index_rejected() {
        let b = Basis1D::new(UnivariateBasisSpec::bspline22(Boundary::Free, 0.0)).unwrap();
        assert!(b.eval_primal(WaveletIndex1D::wavelet(1, 99), 0.5).is_err());
        assert!(b.eval_primal(WaveletIndex1D { level: 2, k: 0, kind: Kind::Scaling }, 0.5).is_err());
    }

    #[test]
    fn sobolev_scaling_factor() {
        let b = Basis1D::new(UnivariateBasisSpec::bspline22(Boundary::DirichletHomog, 1.0)).unwrap();
        let idx = WaveletIndex1D::wavelet(3, 4);
        let f = b.piecewise(idx);
        let x = 0.5 * (f.support().unwrap().0 + f.support().unwrap().1);
        let v = b.eval_primal(idx, x).unwrap();
        assert_abs_diff_eq!(v, f.eval(x) * 0.125, epsilon = 1e-14);
    }

    #[test]
    fn periodic_support_wraps_as_two_intervals() {
        let b = Basis1D::new(UnivariateBasisSpec::bspline22(Boundary::Periodic, 0.0)).unwrap();
        // find a wavelet whose support crosses the seam
        let mut found = false;
        for k in 0..b.wavelet_count(3) as u32 {
            let sup = b.support_of(WaveletIndex1D::wavelet(3, k)).unwrap();
            if sup.intervals.len() == 2 {
                found = true;
                let interior = b
                    .support_of(WaveletIndex1D::wavelet(3, 2))
                    .unwrap()
                    .total_length();
                assert_abs_diff_eq!(sup.total_length(), interior, epsilon = 1e-12);
            }
        }
        assert!(found, "expected a seam-crossing periodic wavelet");
    }
}
