use nalgebra::{DMatrix, DVector};
use waverb::wavelet::bspline::*;
use waverb::wavelet::piecewise::PwLinear;
use waverb::wavelet::piecewise::integrate_product;
use waverb::wavelet::Boundary;

// profile -> function at basis level l (dirichlet, j0=3)
fn as_fn(profile: &DVector<f64>, l: u8) -> PwLinear {
    let jf = 3 + l as u32;
    let mut vals: Vec<f64> = profile.iter().cloned().collect();
    vals.insert(0, 0.0); // node 0 (dirichlet)
    vals.push(0.0);
    let mut f = PwLinear::from_nodes(jf, 0, &vals);
    let n = f.l2_norm();
    f.scale_values(1.0 / n);
    f
}

fn coupling(p: &DVector<f64>, d: u8) -> f64 {
    let f = as_fn(p, 1);
    let g = as_fn(p, 1 + d);
    integrate_product(&f, &g, 0, 0, &[1.0], None)
}

fn main() {
    // conditions at reference level jr=5 as in the constructor
    let jr: u32 = 5;
    let jf = jr + 1;
    let hf = 0.5f64.powi(jf as i32);
    let boundary = Boundary::DirichletHomog;
    let fine_hats: Vec<i64> = (1..=11).collect();
    let hats: Vec<PwLinear> = fine_hats.iter().map(|&m| PwLinear::from_nodes(jf, m - 1, &[0.0, 1.0, 0.0])).collect();
    let sup_hi = (*fine_hats.last().unwrap() as f64 + 1.0) * hf;
    let n = 1i64 << jr;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for knode in scaling_nodes_at(boundary, jr) {
        if knode > n / 2 { continue; }
        let d = dual_scaling_at(boundary, jr, knode as u32).refined(false);
        let dual_lo = (d.terms.first().unwrap().0 - 2).max(0) as f64 * hf;
        if dual_lo >= sup_hi { continue; }
        rows.push(hats.iter().map(|h| pair_primal_dual(h, &d, false)).collect());
    }
    let ncols = fine_hats.len();
    let nrows = rows.len().max(ncols);
    let a = DMatrix::from_fn(nrows, ncols, |i, j| if i < rows.len() { rows[i][j] } else { 0.0 });
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let vt = svd.v_t.unwrap();
    let mut null_vecs: Vec<DVector<f64>> = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s <= 1e-10 * smax { null_vecs.push(vt.row(i).transpose()); }
    }
    println!("nullspace dim {}", null_vecs.len());
    // basis of the coset: seed + interior directions
    let mut interiors: Vec<DVector<f64>> = Vec::new();
    for k in 1i64..=4 {
        interiors.push(DVector::from_fn(ncols, |i, _| {
            INTERIOR_WAVELET.iter().find(|&&(off, _)| 2 * k + off == fine_hats[i]).map(|&(_, c)| c).unwrap_or(0.0)
        }));
    }
    let mut seed = None;
    for nv in &null_vecs {
        let mut w = nv.clone();
        for int in &interiors {
            w -= int * (w.dot(int) / int.dot(int));
        }
        if w.norm() > 1e-6 { let nn = w.norm(); seed = Some(w / nn); break; }
    }
    let w0 = seed.unwrap();
    println!("seed couplings: d1 {:.4} d2 {:.4} d3 {:.4}", coupling(&w0, 1), coupling(&w0, 2), coupling(&w0, 3));
    // newton on (S1, S2) over 4 params, min-norm step
    let mut c = DVector::<f64>::zeros(4);
    for it in 0..60 {
        let p = &w0 + interiors.iter().zip(c.iter()).fold(DVector::zeros(ncols), |acc, (v, &ci)| acc + v * ci);
        let s = DVector::from_vec(vec![coupling(&p, 1), coupling(&p, 2)]);
        if s.norm() < 1e-13 { println!("converged at it {it}"); break; }
        let mut jac = DMatrix::<f64>::zeros(2, 4);
        let eps = 1e-7;
        for k in 0..4 {
            let mut c2 = c.clone();
            c2[k] += eps;
            let p2 = &w0 + interiors.iter().zip(c2.iter()).fold(DVector::zeros(ncols), |acc, (v, &ci)| acc + v * ci);
            jac[(0, k)] = (coupling(&p2, 1) - s[0]) / eps;
            jac[(1, k)] = (coupling(&p2, 2) - s[1]) / eps;
        }
        let step = jac.clone().svd(true, true).solve(&s, 1e-12).unwrap();
        c -= step;
    }
    let p = &w0 + interiors.iter().zip(c.iter()).fold(DVector::zeros(ncols), |acc, (v, &ci)| acc + v * ci);
    println!("final couplings: d1 {:.2e} d2 {:.2e} d3 {:.4} d4 {:.4}", coupling(&p, 1), coupling(&p, 2), coupling(&p, 3), coupling(&p, 4));
    println!("profile {:?}", p.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>());
}
