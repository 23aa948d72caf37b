//! Biorthogonal B-spline wavelets of order d = d̃ = 2 on the interval and
//! on the circle (CDF(2,2) family).
//!
//! Primal functions are continuous piecewise linears built from hat
//! functions; since hats interpolate, a primal function's coefficient vector
//! at any finer dyadic level is simply its node values, which keeps all
//! multi-level algebra exact.
//!
//! Dual functions are never evaluated pointwise at runtime. For the
//! biorthogonality suite they are represented as finite combinations of
//! restricted real-line dual scaling functions; pairings against primal
//! functions reduce to Kronecker deltas plus exact half-line corrections
//! (the Dahmen-Micchelli fixed point for this family has the closed form
//! used in `omega_halfline`).

use super::piecewise::PwLinear;
use super::{Boundary, Kind, WaveletIndex1D};

/// Hat refinement mask: hat(x) = 1/2 hat(2x+1) + hat(2x) + 1/2 hat(2x-1).
pub const HAT_MASK: [(i64, f64); 3] = [(-1, 0.5), (0, 1.0), (1, 0.5)];

/// CDF(2,2) dual scaling refinement on the 2^j-normalized duals:
/// dual_{j,k} = sum_m DUAL_MASK[m] dual_{j+1,2k+m}.
pub const DUAL_MASK: [(i64, f64); 5] = [
    (-2, -0.125),
    (-1, 0.25),
    (0, 0.75),
    (1, 0.25),
    (2, -0.125),
];

/// Interior primal wavelet over fine hats 2k+m.
pub const INTERIOR_WAVELET: [(i64, f64); 5] = [
    (-1, -0.125),
    (0, -0.25),
    (1, 0.75),
    (2, -0.25),
    (3, -0.125),
];

/// Interior dual wavelet over fine duals 2k+m, normalized so that
/// <psi_{j,k}, dual-psi_{j,k}> = 1 with `INTERIOR_WAVELET` on the primal side.
pub const INTERIOR_DUAL_WAVELET: [(i64, f64); 3] = [(0, -0.5), (1, 1.0), (2, -0.5)];

/// Exact value of the half-line pairing
/// `int_{-inf}^0 hat(u - a) * dualphi(u - b) du`
/// for the CDF(2,2) pair with `<hat(.-k), dualphi(.-l)>_R = delta_{kl}`.
pub fn omega_halfline(a: i64, b: i64) -> f64 {
    if a >= 1 || b >= 2 || (a - b).abs() >= 3 {
        return 0.0;
    }
    if a <= -1 || b <= -2 {
        return if a == b { 1.0 } else { 0.0 };
    }
    // remaining cases: a == 0, b in {-1, 0, 1}
    match b {
        -1 => 1.0 / 12.0,
        0 => 0.5,
        1 => -1.0 / 12.0,
        _ => unreachable!(),
    }
}

/// A dual-side function on [0,1]: finite combination of restricted
/// real-line dual scaling functions `dualphi_{level,k}|_[0,1]`.
#[derive(Debug, Clone)]
pub struct DualVec {
    pub level: u32,
    pub terms: Vec<(i64, f64)>,
}

impl DualVec {
    pub(crate) fn cleaned(level: u32, mut terms: Vec<(i64, f64)>, periodic: bool) -> Self {
        let n = 1i64 << level;
        if periodic {
            for t in terms.iter_mut() {
                t.0 = t.0.rem_euclid(n);
            }
        } else {
            // duals entirely left of 0 or right of 1 vanish after restriction
            terms.retain(|&(k, _)| k >= -1 && k <= n + 1);
        }
        terms.sort_by_key(|t| t.0);
        let mut merged: Vec<(i64, f64)> = Vec::with_capacity(terms.len());
        for (k, c) in terms {
            if let Some(last) = merged.last_mut() {
                if last.0 == k {
                    last.1 += c;
                    continue;
                }
            }
            merged.push((k, c));
        }
        merged.retain(|&(_, c)| c != 0.0);
        DualVec { level, terms: merged }
    }

    /// One exact refinement step to level + 1.
    pub fn refined(&self, periodic: bool) -> DualVec {
        let mut terms = Vec::with_capacity(self.terms.len() * 5);
        for &(k, c) in &self.terms {
            for &(m, cm) in &DUAL_MASK {
                terms.push((2 * k + m, c * cm));
            }
        }
        DualVec::cleaned(self.level + 1, terms, periodic)
    }

    pub fn refined_to(&self, level: u32, periodic: bool) -> DualVec {
        let mut d = self.clone();
        while d.level < level {
            d = d.refined(periodic);
        }
        d
    }
}

/// Exact pairing `<b_m|_[0,1], dualphi_{level,k}|_[0,1]>` of the height-one
/// hat at node m with a restricted dual, both at the same dyadic level.
fn hat_dual_pairing(level: u32, m: i64, k: i64, periodic: bool) -> f64 {
    let n = 1i64 << level;
    if periodic {
        // wrapped Kronecker delta
        return if (m - k).rem_euclid(n) == 0 { 1.0 } else { 0.0 };
    }
    let mut v = if m == k { 1.0 } else { 0.0 };
    v -= omega_halfline(m, k);
    v -= omega_halfline(n - m, n - k);
    v
}

/// Smallest dyadic level whose mesh contains all breakpoints of `f`.
fn breakpoint_level(f: &PwLinear) -> u32 {
    let mut level = 0u32;
    for p in &f.pieces {
        for &x in &[p.x0, p.x1] {
            let mut l = 0u32;
            while l < 52 && (x * (1u64 << l) as f64).fract() != 0.0 {
                l += 1;
            }
            level = level.max(l);
        }
    }
    level
}

/// Exact pairing of a primal piecewise-linear function against a dual
/// combination. The dual is refined until its mesh resolves the primal's
/// breakpoints; the primal's hat coefficients at that level are its node
/// values, so the pairing is a finite weighted sum of `hat_dual_pairing`s.
pub fn pair_primal_dual(f: &PwLinear, d: &DualVec, periodic: bool) -> f64 {
    let d_ref;
    let d = if breakpoint_level(f) > d.level {
        d_ref = d.refined_to(breakpoint_level(f), periodic);
        &d_ref
    } else {
        d
    };
    let n = 1i64 << d.level;
    let h = 1.0 / n as f64;
    let mut acc = 0.0;
    if periodic {
        for &(k, c) in &d.terms {
            // wrapped Kronecker delta against the periodized hat at node k
            acc += c * f.eval(k.rem_euclid(n) as f64 * h);
        }
        return acc;
    }
    for &(k, c) in &d.terms {
        // window of hats whose pairing with this dual can deviate from delta
        let lo = (k - 3).max(0);
        let hi = (k + 3).min(n);
        for m in lo..=hi {
            let fv = f.eval(m as f64 * h);
            if fv != 0.0 {
                acc += fv * c * hat_dual_pairing(d.level, m, k, periodic);
            }
        }
    }
    acc
}

/// The fully constructed d = 2 basis for one boundary variant.
///
/// `j0` is the coarsest dyadic mesh level; basis level 0 holds the scaling
/// functions on that mesh, basis level l >= 1 the wavelets spanning the
/// detail between dyadic levels j0+l-1 and j0+l.
#[derive(Debug, Clone)]
pub struct BsplineBasis1D {
    pub boundary: Boundary,
    pub j0: u32,
    left_wavelet: Vec<f64>,  // node values over fine nodes starting at 0
    right_wavelet: Vec<f64>, // mirror image, stored from the right edge
}

fn dyadic_scaling_nodes(boundary: Boundary, j: u32, k: u32) -> (i64, Vec<f64>) {
    match boundary {
        Boundary::DirichletHomog | Boundary::Free => {
            let n = 1i64 << j;
            let kk = k as i64;
            if kk == 0 {
                (0, vec![1.0, 0.0])
            } else if kk == n {
                (n - 1, vec![0.0, 1.0])
            } else {
                (kk - 1, vec![0.0, 1.0, 0.0])
            }
        }
        Boundary::Periodic => unreachable!("periodic handled separately"),
    }
}

impl BsplineBasis1D {
    pub fn new(boundary: Boundary) -> Self {
        let j0 = match boundary {
            Boundary::Periodic => 0,
            _ => 3,
        };
        let (left_wavelet, right_wavelet) = match boundary {
            Boundary::Periodic => (Vec::new(), Vec::new()),
            _ => {
                let lw = construct_edge_wavelet(boundary);
                let mut rw = lw.clone();
                rw.reverse();
                (lw, rw)
            }
        };
        Self { boundary, j0, left_wavelet, right_wavelet }
    }

    pub fn scaling_count(&self) -> usize {
        let n = 1usize << self.j0;
        match self.boundary {
            Boundary::Free => n + 1,
            Boundary::DirichletHomog => n - 1,
            Boundary::Periodic => n,
        }
    }

    pub fn wavelet_count(&self, level: u8) -> usize {
        debug_assert!(level >= 1);
        1usize << (self.j0 + level as u32 - 1)
    }

    /// Dyadic mesh level on which the function `idx` is piecewise linear.
    pub fn dyadic_level(&self, idx: WaveletIndex1D) -> u32 {
        match idx.kind {
            Kind::Scaling => self.j0,
            Kind::Wavelet => self.j0 + idx.level as u32,
        }
    }

    /// Unnormalized node values of the primal function on its fine mesh.
    /// Returns (fine dyadic level, start node, values). Periodic functions
    /// are returned as circular node vectors starting at node 0.
    pub fn raw_nodes(&self, idx: WaveletIndex1D) -> (u32, i64, Vec<f64>) {
        match (idx.kind, self.boundary) {
            (Kind::Scaling, Boundary::Periodic) => {
                let j = self.j0;
                let n = 1i64 << j;
                let mut vals = vec![0.0; n as usize];
                for &(m, c) in &HAT_MASK[..] {
                    // hat node values are just the mask deltas at level j
                    let node = (idx.k as i64 + 0 * m).rem_euclid(n);
                    let _ = node;
                    let _ = c;
                }
                // periodized hat: value 1 at its node, linear to 0 at neighbors
                vals[(idx.k as i64).rem_euclid(n) as usize] = 1.0;
                if n == 1 {
                    vals[0] = 1.0; // periodization of the hat at level 0 is constant one
                }
                (j, 0, vals)
            }
            (Kind::Scaling, _) => {
                // positional index -> hat node (Dirichlet drops node 0)
                let node = match self.boundary {
                    Boundary::DirichletHomog => idx.k + 1,
                    _ => idx.k,
                };
                let (s, v) = dyadic_scaling_nodes(self.boundary, self.j0, node);
                (self.j0, s, v)
            }
            (Kind::Wavelet, Boundary::Periodic) => {
                let jm = self.j0 + idx.level as u32 - 1; // mask level
                let jf = jm + 1;
                let nf = 1i64 << jf;
                let mut vals = vec![0.0; nf as usize];
                for &(m, c) in &INTERIOR_WAVELET[..] {
                    let node = (2 * idx.k as i64 + m).rem_euclid(nf);
                    vals[node as usize] += c;
                }
                (jf, 0, vals)
            }
            (Kind::Wavelet, _) => {
                let jm = self.j0 + idx.level as u32 - 1;
                let jf = jm + 1;
                let n = 1i64 << jm;
                let nf = 1i64 << jf;
                let k = idx.k as i64;
                if k == 0 {
                    (jf, 0, self.left_wavelet.clone())
                } else if k == n - 1 {
                    let start = nf - self.right_wavelet.len() as i64 + 1;
                    (jf, start, self.right_wavelet.clone())
                } else {
                    let mut vals = vec![0.0; 5];
                    let start = 2 * k - 1;
                    for &(m, c) in &INTERIOR_WAVELET[..] {
                        vals[(m + 1) as usize] = c;
                    }
                    (jf, start, vals)
                }
            }
        }
    }

    /// Unwrapped (universal-cover) representation of a periodic function:
    /// identical to `piecewise` except that seam-crossing supports extend
    /// beyond x = 1 instead of wrapping. Used for moment integrals.
    pub fn piecewise_unwrapped(&self, idx: WaveletIndex1D) -> PwLinear {
        if self.boundary != Boundary::Periodic {
            return self.piecewise(idx);
        }
        match idx.kind {
            Kind::Scaling => self.piecewise(idx),
            Kind::Wavelet => {
                let jm = self.j0 + idx.level as u32 - 1;
                let jf = jm + 1;
                let mut vals = vec![0.0; 5];
                for &(m, c) in &INTERIOR_WAVELET[..] {
                    vals[(m + 1) as usize] = c;
                }
                vals.insert(0, 0.0);
                vals.push(0.0);
                let mut f = PwLinear::from_nodes(jf, 2 * idx.k as i64 - 2, &vals);
                let norm = f.l2_norm();
                f.scale_values(1.0 / norm);
                f
            }
        }
    }

    /// L2-normalized piecewise-linear representation.
    pub fn piecewise(&self, idx: WaveletIndex1D) -> PwLinear {
        let (jf, start, vals) = self.raw_nodes(idx);
        let mut f = if self.boundary == Boundary::Periodic {
            let n = 1usize << jf;
            let mut circ = vals;
            circ.resize(n, 0.0);
            let mut nodes = circ.clone();
            nodes.push(circ[0]);
            PwLinear::from_nodes(jf, 0, &nodes)
        } else {
            // hat combinations ramp to zero one node beyond the coefficient
            // window; pad so the outer pieces are present
            let nmax = 1i64 << jf;
            let mut start = start;
            let mut vals = vals;
            if start > 0 {
                vals.insert(0, 0.0);
                start -= 1;
            }
            if start + vals.len() as i64 - 1 < nmax {
                vals.push(0.0);
            }
            PwLinear::from_nodes(jf, start, &vals)
        };
        let norm = f.l2_norm();
        debug_assert!(norm > 0.0);
        f.scale_values(1.0 / norm);
        f
    }

    /// Dual scaling functions at dyadic level j, indexed like the primal
    /// scaling functions of that level.
    pub fn dual_scaling(&self, j: u32, k: u32) -> DualVec {
        dual_scaling_at(self.boundary, j, k)
    }

    /// Number of primal scaling functions at dyadic level j.
    pub fn scaling_count_at(&self, j: u32) -> usize {
        let n = 1usize << j;
        match self.boundary {
            Boundary::Free => n + 1,
            Boundary::DirichletHomog => n - 1,
            Boundary::Periodic => n,
        }
    }

    /// Scaling index list at dyadic level j (hat node positions).
    pub fn scaling_nodes_at(&self, j: u32) -> Vec<i64> {
        scaling_nodes_at(self.boundary, j)
    }
}

/// Hat node positions of the primal scaling functions at dyadic level j.
pub fn scaling_nodes_at(boundary: Boundary, j: u32) -> Vec<i64> {
    let n = 1i64 << j;
    match boundary {
        Boundary::Free => (0..=n).collect(),
        Boundary::DirichletHomog => (1..n).collect(),
        Boundary::Periodic => (0..n).collect(),
    }
}

/// Dual scaling function paired with the primal hat at node k, dyadic level j.
pub fn dual_scaling_at(boundary: Boundary, j: u32, k: u32) -> DualVec {
    let n = 1i64 << j;
    let kk = k as i64;
    match boundary {
        Boundary::Periodic => DualVec { level: j, terms: vec![(kk.rem_euclid(n), 1.0)] },
        Boundary::DirichletHomog => {
            // Dirichlet scaling indices run in 1..n-1. The two boundary
            // duals per edge carry both monomial tails so the dual span
            // reproduces P1 on [0,1]; interior duals start at k = 3.
            if kk == 1 {
                DualVec { level: j, terms: vec![(-1, 3.0), (0, 2.0), (1, 1.0)] }
            } else if kk == 2 {
                DualVec { level: j, terms: vec![(-1, -2.0), (0, -1.0), (2, 1.0)] }
            } else if kk == n - 1 {
                DualVec { level: j, terms: vec![(n + 1, 3.0), (n, 2.0), (n - 1, 1.0)] }
            } else if kk == n - 2 {
                DualVec { level: j, terms: vec![(n + 1, -2.0), (n, -1.0), (n - 2, 1.0)] }
            } else {
                DualVec { level: j, terms: vec![(kk, 1.0)] }
            }
        }
        Boundary::Free => {
            if kk == 0 {
                DualVec { level: j, terms: vec![(-1, 6.0), (0, 3.0)] }
            } else if kk == 1 {
                DualVec { level: j, terms: vec![(-1, -2.0), (0, -0.5), (1, 1.0)] }
            } else if kk == n {
                DualVec { level: j, terms: vec![(n + 1, 6.0), (n, 3.0)] }
            } else if kk == n - 1 {
                DualVec { level: j, terms: vec![(n + 1, -2.0), (n, -0.5), (n - 1, 1.0)] }
            } else {
                DualVec { level: j, terms: vec![(kk, 1.0)] }
            }
        }
    }
}

impl BsplineBasis1D {
    /// Dual wavelets of basis level `level`, as combinations of dual scaling
    /// functions one dyadic level finer, computed by the exact completion
    /// solve `[M0 | M1]^T C = [0; I]`.
    pub fn dual_wavelets(&self, level: u8) -> Vec<DualVec> {
        let periodic = self.boundary == Boundary::Periodic;
        let jc = self.j0 + level as u32 - 1;
        let jf = jc + 1;
        let hf = 0.5f64.powi(jf as i32);
        let fine_nodes = scaling_nodes_at(self.boundary, jf);
        let coarse_nodes = scaling_nodes_at(self.boundary, jc);
        let nf = fine_nodes.len();
        let nw = self.wavelet_count(level);
        assert_eq!(nf, coarse_nodes.len() + nw);
        let mut t = nalgebra::DMatrix::<f64>::zeros(nf, nf);
        for (col, &kc) in coarse_nodes.iter().enumerate() {
            if periodic {
                // periodized coarse hat sampled on the fine circle
                let nc = 1i64 << jc;
                let hc = 1.0 / nc as f64;
                for (row, &mf) in fine_nodes.iter().enumerate() {
                    let x = (mf as f64 * hf) % 1.0;
                    t[(row, col)] = if nc == 1 {
                        1.0
                    } else {
                        let mut d = (x - kc as f64 * hc).abs();
                        if d > 0.5 {
                            d = 1.0 - d;
                        }
                        (1.0 - d / hc).max(0.0)
                    };
                }
            } else {
                let (s, v) = dyadic_scaling_nodes(self.boundary, jc, kc as u32);
                let f = PwLinear::from_nodes(jc, s, &v);
                for (row, &mf) in fine_nodes.iter().enumerate() {
                    t[(row, col)] = f.eval(mf as f64 * hf);
                }
            }
        }
        for kw in 0..nw {
            let w = self.piecewise(WaveletIndex1D {
                level,
                k: kw as u32,
                kind: Kind::Wavelet,
            });
            for (row, &mf) in fine_nodes.iter().enumerate() {
                let x = if periodic { (mf as f64 * hf) % 1.0 } else { mf as f64 * hf };
                t[(row, coarse_nodes.len() + kw)] = w.eval(x);
            }
        }
        let lu = t.transpose().lu();
        let mut duals = Vec::with_capacity(nw);
        for kw in 0..nw {
            let mut rhs = nalgebra::DVector::<f64>::zeros(nf);
            rhs[coarse_nodes.len() + kw] = 1.0;
            let c = lu.solve(&rhs).expect("two-scale transform singular");
            // assemble the combination of fine dual scaling functions
            let mut terms: Vec<(i64, f64)> = Vec::new();
            for (row, &mf) in fine_nodes.iter().enumerate() {
                if c[row] != 0.0 {
                    let d = dual_scaling_at(self.boundary, jf, mf as u32);
                    for &(a, coef) in &d.terms {
                        terms.push((a, coef * c[row]));
                    }
                }
            }
            duals.push(DualVec::cleaned(jf, terms, periodic));
        }
        duals
    }
}

/// The edge wavelet of an interval variant: the canonical completion
/// `(I - P_j) b'_1`, where `b'_1` is the first odd fine-level hat and `P_j`
/// the biorthogonal projector onto the coarse scaling space. Away from the
/// boundary the same formula reproduces the interior CDF(2,2) mask, so the
/// edge function inherits the interior multilevel structure; both vanishing
/// moments follow because the dual span contains P1.
fn construct_edge_wavelet(boundary: Boundary) -> Vec<f64> {
    let jr: u32 = 5; // reference level; edge blocks are level-independent
    let jf = jr + 1;
    let nf = 1i64 << jf;
    // fine-level node-value accumulator for the result
    let mut vals = vec![0.0f64; 12];
    vals[1] = 1.0; // b'_1
    let b1 = PwLinear::from_nodes(jf, 0, &[0.0, 1.0, 0.0]);
    for knode in scaling_nodes_at(boundary, jr) {
        if knode > 6 {
            continue;
        }
        let d = dual_scaling_at(boundary, jr, knode as u32);
        let p = pair_primal_dual(&b1, &d, false);
        if p == 0.0 {
            continue;
        }
        // subtract p * b_knode expanded into fine hats
        for &(m, c) in &HAT_MASK[..] {
            let fine = 2 * knode + m;
            if (0..=nf).contains(&fine) && (fine as usize) < vals.len() {
                vals[fine as usize] -= p * c;
            }
        }
    }
    while vals.last() == Some(&0.0) {
        vals.pop();
    }
    // sanity: orthogonal to every coarse dual its support meets
    let mut padded = vals.clone();
    padded.push(0.0);
    let f = PwLinear::from_nodes(jf, 0, &padded);
    for knode in scaling_nodes_at(boundary, jr) {
        if knode > 8 {
            continue;
        }
        let d = dual_scaling_at(boundary, jr, knode as u32);
        let p = pair_primal_dual(&f, &d, false);
        assert!(p.abs() < 1e-12, "edge wavelet not in the detail space: {p:.2e}");
    }
    for r in 0..2 {
        let m = f.moment(r);
        assert!(m.abs() < 1e-12, "edge wavelet moment {r} = {m:.2e}");
    }
    vals
}
