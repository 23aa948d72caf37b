use waverb::wavelet::bspline::*;
use waverb::wavelet::piecewise::PwLinear;
use waverb::wavelet::Boundary;

fn rank_of(rows: &[Vec<f64>], ncols: usize) -> (usize, Vec<f64>) {
    let nrows = rows.len().max(ncols);
    let a = nalgebra::DMatrix::from_fn(nrows, ncols, |i, j| if i < rows.len() { rows[i][j] } else { 0.0 });
    let svd = a.svd(false, false);
    let mut sv: Vec<f64> = svd.singular_values.iter().cloned().collect();
    sv.sort_by(|x, y| y.partial_cmp(x).unwrap());
    let tol = 1e-10 * sv[0];
    (sv.iter().filter(|&&s| s > tol).count(), sv)
}

fn main() {
    let jr: u32 = 5;
    let jf = jr + 1;
    let hf = 0.5f64.powi(jf as i32);
    let boundary = Boundary::DirichletHomog;
    let fine_hats: Vec<i64> = (1..=9).collect();
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
    println!("dual rows: {} rank {:?}", rows.len(), rank_of(&rows, 9));
    for r in 0..2u32 {
        rows.push(hats.iter().map(|h| h.moment(r)).collect());
    }
    println!("+moments: {} rank {:?}", rows.len(), rank_of(&rows, 9));
    for k in 1i64.. {
        let lo = 2 * k - 1;
        let hi = 2 * k + 3;
        if !fine_hats.contains(&lo) || !fine_hats.contains(&hi) { break; }
        let row: Vec<f64> = fine_hats.iter().map(|&m| {
            INTERIOR_WAVELET.iter().find(|&&(off, _)| 2 * k + off == m).map(|&(_, c)| c).unwrap_or(0.0)
        }).collect();
        rows.push(row);
    }
    println!("+deflation: {} rank {:?}", rows.len(), rank_of(&rows, 9));
}
