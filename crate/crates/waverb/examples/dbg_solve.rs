use std::sync::Arc;
use waverb::awgm::*;
use waverb::index::*;
use waverb::operator::*;
use waverb::wavelet::*;

fn main() {
    let mk = || {
        Arc::new(TensorBasis::new(
            Basis1D::new(UnivariateBasisSpec::bspline22(Boundary::DirichletHomog, 0.0)).unwrap(),
            Basis1D::new(UnivariateBasisSpec::multiwavelet2()).unwrap(),
        ))
    };
    let spaces = Arc::new(ProblemSpaces {
        trial: mk(),
        test: mk(),
        trial_weight: NormWeight::SpaceH1 { dirs: vec![0] },
        test_weight: NormWeight::SpaceH1 { dirs: vec![0] },
    });
    let op = Arc::new(
        AffineBilinearOperator::new(
            vec![OperatorComponent {
                terms: vec![SeparableTerm { coef: 1.0, factors: [FactorForm::stiffness(), FactorForm::mass()] }],
            }],
            vec![ThetaExpr::Const(1.0)],
            spaces.clone(),
        )
        .unwrap(),
    );
    let f = Arc::new(
        AffineFunctional::new(
            vec![FunctionalComponent {
                factors: [
                    FunctionalFactor { weight: WeightFn::Poly(vec![1.0]), interval: None },
                    FunctionalFactor { weight: WeightFn::Poly(vec![1.0]), interval: None },
                ],
            }],
            vec![ThetaExpr::Const(1.0)],
            spaces.clone(),
        )
        .unwrap(),
    );
    let a = FixedOperator::new(op, &ParameterPoint::of(0.0, 0.0));
    let solver = Solver {
        fixed: a,
        rhs: Rhs::Affine { func: f, thetas: vec![1.0] },
        kind: SolverKind::SymmetricGalerkin,
        measure: ErrorMeasure::DualResidual,
        stop: StopContext::default(),
        config: AwgmConfig { max_level: 14, max_outer: 8, ..Default::default() },
        mu: None,
    };
    let t0 = std::time::Instant::now();
    let report = match solver.solve(3e-2) {
        Ok(snap) => {
            println!("converged, {} unknowns", snap.coeffs.len());
            snap.report
        }
        Err(e) => {
            println!("failed: {} achieved {:.3e}", e.reason, e.achieved);
            e.partial.report
        }
    };
    for it in &report.iterations {
        println!(
            "  N={:5} Next={:6} res={:.3e} inner={} {:.2}s",
            it.set_size, it.test_set_size, it.residual, it.inner_iterations, it.seconds
        );
    }
    println!("total {:.2}s", t0.elapsed().as_secs_f64());
}
