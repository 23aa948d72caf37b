use nalgebra::{DMatrix, DVector};
use waverb::wavelet::bspline::*;
use waverb::wavelet::piecewise::{integrate_product, PwLinear};
use waverb::wavelet::Boundary;

const JMAX: u8 = 9;

// edge-local multilevel subsystem: scalings near 0, edge wavelets all levels,
// interior wavelets k<=5 all levels (dirichlet, j0=3)
fn lambda_min(profile: &[f64], boundary: Boundary) -> f64 {
    let mut fns: Vec<PwLinear> = Vec::new();
    let j0 = 3u32;
    let nodes = scaling_nodes_at(boundary, j0);
    for &m in nodes.iter().take(6) {
        let (s, v) = if m == 0 { (0i64, vec![1.0, 0.0]) } else { (m - 1, vec![0.0, 1.0, 0.0]) };
        let mut f = PwLinear::from_nodes(j0, s, &v);
        let n = f.l2_norm();
        f.scale_values(1.0 / n);
        fns.push(f);
    }
    for l in 1..=JMAX {
        let jf = j0 + l as u32;
        // edge wavelet from profile (node values starting at node 0)
        let mut vals = profile.to_vec();
        vals.push(0.0);
        let mut f = PwLinear::from_nodes(jf, 0, &vals);
        let n = f.l2_norm();
        f.scale_values(1.0 / n);
        fns.push(f);
        for k in 1..=5i64 {
            let mut v = vec![0.0; 7];
            for &(m, c) in &INTERIOR_WAVELET[..] {
                v[(m + 1) as usize] = c;
            }
            let mut f = PwLinear::from_nodes(jf, 2 * k - 2, &v);
            let n = f.l2_norm();
            f.scale_values(1.0 / n);
            fns.push(f);
        }
    }
    let n = fns.len();
    let mut g = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = integrate_product(&fns[i], &fns[j], 0, 0, &[1.0], None);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g.symmetric_eigen().eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn main() {
    let boundary = Boundary::DirichletHomog;
    // canonical completion seed and interior directions (node values, node 0..)
    let seed = vec![0.0, 0.625, -0.75, -0.25, 0.25, 0.125];
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for k in 1..=4i64 {
        let mut v = vec![0.0; (2 * k + 4) as usize];
        for &(m, c) in &INTERIOR_WAVELET[..] {
            v[(2 * k + m) as usize] = c;
        }
        dirs.push(v);
    }
    let assemble = |c: &DVector<f64>| -> Vec<f64> {
        let mut p = vec![0.0; 13];
        for (i, &s) in seed.iter().enumerate() {
            p[i] += s;
        }
        for (d, &ci) in dirs.iter().zip(c.iter()) {
            for (i, &v) in d.iter().enumerate() {
                p[i] += ci * v;
            }
        }
        while p.last() == Some(&0.0) {
            p.pop();
        }
        p
    };
    let f = |c: &DVector<f64>| -> f64 { -lambda_min(&assemble(c), boundary) };
    // Nelder-Mead over 4 params
    let n = 4;
    let mut simplex: Vec<DVector<f64>> = (0..=n)
        .map(|i| {
            let mut v = DVector::zeros(n);
            if i > 0 {
                v[i - 1] = 0.4;
            }
            v
        })
        .collect();
    let mut fv: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    for it in 0..220 {
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| fv[a].partial_cmp(&fv[b]).unwrap());
        let best = idx[0];
        let worst = idx[n];
        let mut centroid = DVector::zeros(n);
        for &i in &idx[..n] {
            centroid += &simplex[i];
        }
        centroid /= n as f64;
        let refl = &centroid * 2.0 - &simplex[worst];
        let fr = f(&refl);
        if fr < fv[best] {
            let exp = &centroid * 3.0 - &simplex[worst] * 2.0;
            let fe = f(&exp);
            if fe < fr {
                simplex[worst] = exp;
                fv[worst] = fe;
            } else {
                simplex[worst] = refl;
                fv[worst] = fr;
            }
        } else if fr < fv[idx[n - 1]] {
            simplex[worst] = refl;
            fv[worst] = fr;
        } else {
            let con = (&centroid + &simplex[worst]) * 0.5;
            let fc = f(&con);
            if fc < fv[worst] {
                simplex[worst] = con;
                fv[worst] = fc;
            } else {
                for &i in &idx[1..] {
                    simplex[i] = (&simplex[i] + &simplex[best]) * 0.5;
                    fv[i] = f(&simplex[i]);
                }
            }
        }
        if it % 40 == 0 {
            println!("it {it}: lambda_min {:.5}", -fv.iter().cloned().fold(f64::INFINITY, f64::min));
        }
    }
    let mut idx: Vec<usize> = (0..=n).collect();
    idx.sort_by(|&a, &b| fv[a].partial_cmp(&fv[b]).unwrap());
    let copt = simplex[idx[0]].clone();
    println!("best lambda_min {:.5} at c = {:?}", -fv[idx[0]], copt.as_slice());
    let p = assemble(&copt);
    println!("profile = {:?}", p);
}
