use waverb::wavelet::piecewise::integrate_product;
use waverb::wavelet::*;

fn main() {
    let b = Basis1D::new(UnivariateBasisSpec::bspline22(Boundary::DirichletHomog, 0.0)).unwrap();
    // edge wavelet moments at several levels
    for l in 1..=6u8 {
        let idx = WaveletIndex1D::wavelet(l, 0);
        let f = b.piecewise(idx);
        println!(
            "level {l}: supp {:?} m0 {:.2e} m1 {:.2e} norm {:.4}",
            f.support().unwrap(),
            f.moment(0),
            f.moment(1),
            f.l2_norm()
        );
    }
    // cross-level inner products of edge wavelets
    for l in 1..=5u8 {
        let f = b.piecewise(WaveletIndex1D::wavelet(l, 0));
        let g = b.piecewise(WaveletIndex1D::wavelet(l + 1, 0));
        let h = b.piecewise(WaveletIndex1D::wavelet((l + 2).min(6), 0));
        println!(
            "edge <{l},{}>: {:.5}   <{l},{}>: {:.5}",
            l + 1,
            integrate_product(&f, &g, 0, 0, &[1.0], None),
            l + 2,
            integrate_product(&f, &h, 0, 0, &[1.0], None)
        );
    }
    // edge wavelet vs same-level scalings and neighbors
    let f = b.piecewise(WaveletIndex1D::wavelet(3, 0));
    for k in 0..4u32 {
        let s = b.piecewise(WaveletIndex1D::scaling(k));
        println!("edge3 vs scal{k}: {:.5}", integrate_product(&f, &s, 0, 0, &[1.0], None));
    }
    for k in 1..4u32 {
        let w = b.piecewise(WaveletIndex1D::wavelet(3, k));
        println!("edge3 vs w3_{k}: {:.5}", integrate_product(&f, &w, 0, 0, &[1.0], None));
    }
}
