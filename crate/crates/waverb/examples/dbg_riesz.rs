use waverb::wavelet::*;

fn main() {
    for (name, spec) in [
        ("dirichlet L2", UnivariateBasisSpec::bspline22(Boundary::DirichletHomog, 0.0)),
        ("free L2", UnivariateBasisSpec::bspline22(Boundary::Free, 0.0)),
        ("periodic L2", UnivariateBasisSpec::bspline22(Boundary::Periodic, 0.0)),
        ("dirichlet H1", UnivariateBasisSpec::bspline22(Boundary::DirichletHomog, 1.0)),
    ] {
        let b = Basis1D::new(spec).unwrap();
        print!("{name:14}");
        for j in 1..=7u8 {
            match b.riesz_constants(j, false) {
                Ok((c, cc)) => print!("  J{j}: {:.4}/{:.3}", c, cc),
                Err(e) => print!("  J{j}: err {e}"),
            }
        }
        println!();
    }
}
