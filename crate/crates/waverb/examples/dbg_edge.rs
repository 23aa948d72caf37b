use waverb::wavelet::bspline::*;
use waverb::wavelet::piecewise::PwLinear;
use waverb::wavelet::Boundary;

fn main() {
    let jr: u32 = 5;
    let jf = jr + 1;
    let hf = 0.5f64.powi(jf as i32);
    let boundary = Boundary::DirichletHomog;
    let fine_hats: Vec<i64> = (1..=9).collect();
    let hats: Vec<PwLinear> = fine_hats
        .iter()
        .map(|&m| PwLinear::from_nodes(jf, m - 1, &[0.0, 1.0, 0.0]))
        .collect();
    let sup_hi = (*fine_hats.last().unwrap() as f64 + 1.0) * hf;
    let n = 1i64 << jr;
    let mut rows: Vec<(String, Vec<f64>)> = Vec::new();
    for knode in scaling_nodes_at(boundary, jr) {
        if knode > n / 2 { continue; }
        let d = dual_scaling_at(boundary, jr, knode as u32).refined(false);
        let dual_lo = (d.terms.first().unwrap().0 - 2).max(0) as f64 * hf;
        if dual_lo >= sup_hi { continue; }
        rows.push((format!("dual k={knode}"), hats.iter().map(|h| pair_primal_dual(h, &d, false)).collect()));
    }
    for r in 0..2u32 {
        rows.push((format!("moment {r}"), hats.iter().map(|h| h.moment(r) / hf / hf).collect()));
    }
    for (name, row) in &rows {
        println!("{name:12} {:?}", row.iter().map(|v| (v * 1e6).round() / 1e6).collect::<Vec<_>>());
    }
    let a = nalgebra::DMatrix::from_fn(rows.len(), fine_hats.len(), |i, j| rows[i].1[j]);
    let svd = a.clone().svd(false, false);
    let mut sv: Vec<f64> = svd.singular_values.iter().cloned().collect();
    sv.sort_by(|x, y| y.partial_cmp(x).unwrap());
    println!("singular values: {sv:?}");
}
