use waverb::wavelet::piecewise::integrate_product;
use waverb::wavelet::*;

fn main() {
    let spec = UnivariateBasisSpec::bspline22(Boundary::DirichletHomog, 0.0);
    let b = Basis1D::new(spec).unwrap();
    let idxs = b.indices_up_to(6);
    let n = idxs.len();
    let reps: Vec<PwLinear> = idxs.iter().map(|&i| b.piecewise(i)).collect();
    let mut g = nalgebra::DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = integrate_product(&reps[i], &reps[j], 0, 0, &[1.0], None);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    let eig = g.clone().symmetric_eigen();
    let (imin, lmin) = eig.eigenvalues.iter().enumerate().min_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap();
    println!("lambda_min {lmin:.5}");
    let v = eig.eigenvectors.column(imin);
    let mut weights: Vec<(f64, WaveletIndex1D)> = idxs.iter().zip(v.iter()).map(|(&i, &c)| (c.abs(), i)).collect();
    weights.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    for (w, i) in weights.iter().take(14) {
        println!("  |c|={w:.4}  {i:?}");
    }
}
