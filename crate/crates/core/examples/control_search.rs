//! Searching sine-series controls coefficient by coefficient on nested grids.

use magsplit::control::{sine_control, ControlProblem, CostFunctionalSpec, PenaltyOperator};
use magsplit::fields::{AnalyticForm, ScalarFunction};
use magsplit::splitting::{InitialState, SplittingConfig};

fn main() {
    let mut cfg = SplittingConfig::new(
        4.0,
        0.25,
        1,
        1.0,
        20,
        InitialState::Gaussian {
            center: vec![0.5],
            width: 0.8,
            amplitude: 1.0,
            momentum: None,
        },
    );
    cfg.potential.w_reg = AnalyticForm::Harmonic { scale: 0.5 }.to_function();
    cfg.potential.v_con = ScalarFunction::new(|x| x[0]);
    let z = InitialState::Gaussian {
        center: vec![-0.8],
        width: 0.6,
        amplitude: 1.0,
        momentum: None,
    }
    .sample(&cfg.grid().unwrap())
    .unwrap();
    let spec = CostFunctionalSpec {
        operator: PenaltyOperator::TargetProjection(z.scale((1.0 / z.norm()).into())),
        kappa: 0.005,
    };
    let problem = ControlProblem::new(&spec, &cfg).unwrap();

    for modes in 0..=3 {
        let r = problem.fourier_search(modes, 5).unwrap();
        println!(
            "K={modes} I={:.6} (I(0)={:.6}, {} evaluations) a={:?}",
            r.best, r.baseline, r.evaluations, r.coefficients
        );
        if modes == 3 {
            let u = sine_control(&r.coefficients, cfg.final_time, cfg.steps);
            println!("check: I(u*) = {:.6}, ||u*'||^2 = {:.4}", problem.cost(&u).unwrap(), u.h10_sq());
        }
    }
}
