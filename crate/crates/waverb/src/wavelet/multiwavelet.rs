//! L2(0,1)-orthonormal piecewise-linear multiwavelets (Alpert construction,
//! order 2, two vanishing moments).
//!
//! Scaling functions are the Legendre pair on [0,1]; each dyadic cell at
//! level l-1 carries two wavelets (even/odd under reflection about the cell
//! midpoint) supported on exactly that cell, which makes the whole system
//! orthonormal across levels by construction.

use super::piecewise::{Piece, PwLinear};
use super::{Kind, WaveletIndex1D};

const SQRT3: f64 = 1.7320508075688772;

/// Reference even wavelet on [0,1]: 4*sqrt(3)*(x - 1/4) on [0, 1/2], mirrored.
fn ref_even() -> PwLinear {
    PwLinear::from_nodes(2, 0, &[-SQRT3, 0.0, SQRT3, 0.0, -SQRT3])
}

/// Reference odd wavelet on [0,1]: 6x - 1 on [0, 1/2], 6x - 5 on [1/2, 1].
fn ref_odd() -> PwLinear {
    PwLinear::new(vec![
        Piece { x0: 0.0, x1: 0.25, v0: -1.0, v1: 0.5 },
        Piece { x0: 0.25, x1: 0.5, v0: 0.5, v1: 2.0 },
        Piece { x0: 0.5, x1: 0.75, v0: -2.0, v1: -0.5 },
        Piece { x0: 0.75, x1: 1.0, v0: -0.5, v1: 1.0 },
    ])
}

#[derive(Debug, Clone)]
pub struct AlpertBasis1D;

impl AlpertBasis1D {
    pub fn scaling_count(&self) -> usize {
        2
    }

    pub fn wavelet_count(&self, level: u8) -> usize {
        debug_assert!(level >= 1);
        1usize << level
    }

    pub fn dyadic_level(&self, idx: WaveletIndex1D) -> u32 {
        match idx.kind {
            Kind::Scaling =>2,
            Kind::Wavelet => idx.level as u32 + 1,
        }
    }

    pub fn piecewise(&self, idx: WaveletIndex1D) -> PwLinear {
        match idx.kind {
            Kind::Scaling => {
                if idx.k == 0 {
                    PwLinear::new(vec![Piece { x0: 0.0, x1: 1.0, v0: 1.0, v1: 1.0 }])
                } else {
                    // sqrt(3) * (2x - 1)
                    PwLinear::new(vec![Piece { x0: 0.0, x1: 1.0, v0: -SQRT3, v1: SQRT3 }])
                }
            }
            Kind::Wavelet => {
                let cells = 1u32 << (idx.level - 1);
                let cell = idx.k / 2;
                let which = idx.k % 2;
                let h = 1.0 / cells as f64;
                let shape = if which == 0 { ref_even() } else { ref_odd() };
                let scale = (cells as f64).sqrt();
                let pieces = shape
                    .pieces
                    .iter()
                    .map(|p| Piece {
                        x0: (cell as f64 + p.x0) * h,
                        x1: (cell as f64 + p.x1) * h,
                        v0: p.v0 * scale,
                        v1: p.v1 * scale,
                    })
                    .collect();
                PwLinear::new(pieces)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavelet::piecewise::integrate_product;
    use approx::assert_abs_diff_eq;

    fn all_up_to(level: u8) -> Vec<WaveletIndex1D> {
        let b = AlpertBasis1D;
        let mut v: Vec<WaveletIndex1D> = (0..2)
            .map(|k| WaveletIndex1D { level: 0, k, kind: Kind::Scaling })
            .collect();
        for l in 1..=level {
            for k in 0..b.wavelet_count(l) as u32 {
                v.push(WaveletIndex1D { level: l, k, kind: Kind::Wavelet });
            }
        }
        v
    }

    #[test]
    fn fully_orthonormal_across_levels() {
        let b = AlpertBasis1D;
        let idxs = all_up_to(3);
        for (i, &a) in idxs.iter().enumerate() {
            let fa = b.piecewise(a);
            for &c in &idxs[i..] {
                let fc = b.piecewise(c);
                let want = if a == c { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(
                    integrate_product(&fa, &fc, 0, 0, &[1.0], None),
                    want,
                    epsilon = 1e-13
                );
            }
        }
    }

    #[test]
    fn two_vanishing_moments() {
        let b = AlpertBasis1D;
        for l in 1..=3u8 {
            for k in 0..b.wavelet_count(l) as u32 {
                let f = b.piecewise(WaveletIndex1D { level: l, k, kind: Kind::Wavelet });
                assert!(f.moment(0).abs() < 1e-13);
                assert!(f.moment(1).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn support_is_one_cell() {
        let b = AlpertBasis1D;
        let f = b.piecewise(WaveletIndex1D { level: 3, k: 5, kind: Kind::Wavelet });
        let (lo, hi) = f.support().unwrap();
        assert_abs_diff_eq!(lo, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(hi, 0.75, epsilon = 1e-15);
    }
}
