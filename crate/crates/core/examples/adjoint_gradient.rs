//! Derivative of the control functional from one forward and one backward
//! sweep, checked against central differences.

use magsplit::control::{optimality_residual, sine_control, ControlProblem, CostFunctionalSpec, PenaltyOperator};
use magsplit::fields::{AnalyticForm, ControlFunction, ScalarFunction};
use magsplit::splitting::{InitialState, SplittingConfig};

fn main() {
    let mut cfg = SplittingConfig::new(
        4.0,
        0.25,
        1,
        1.0,
        40,
        InitialState::Gaussian {
            center: vec![0.5],
            width: 0.8,
            amplitude: 1.0,
            momentum: None,
        },
    );
    cfg.potential.w_reg = AnalyticForm::Harmonic { scale: 0.5 }.to_function();
    cfg.potential.v_con = ScalarFunction::new(|x| x[0]);

    let target = InitialState::Gaussian {
        center: vec![-0.8],
        width: 0.6,
        amplitude: 1.0,
        momentum: None,
    }
    .sample(&cfg.grid().unwrap())
    .unwrap();
    let target = target.scale((1.0 / target.norm()).into());
    let spec = CostFunctionalSpec {
        operator: PenaltyOperator::TargetProjection(target),
        kappa: 0.02,
    };
    let problem = ControlProblem::new(&spec, &cfg).unwrap();

    let u = sine_control(&[0.8, -0.3], 1.0, 40);
    println!("I(u) = {:.10}", problem.cost(&u).unwrap());
    let data = problem.gradient_data(&u).unwrap();
    for (i, bump_at) in [0.25, 0.5, 0.75].into_iter().enumerate() {
        let dir = ControlFunction::new(vec![(0.0, 0.0), (bump_at, 1.0), (1.0, 0.0)]).unwrap();
        let adj = problem.derivative_from(&data, &u, &dir);
        let d = 1e-5;
        let fd = (problem.cost(&u.add_scaled(&dir, d)).unwrap() - problem.cost(&u.add_scaled(&dir, -d)).unwrap()) / (2.0 * d);
        println!("direction {i}: adjoint {adj:+.10} central difference {fd:+.10}");
    }
    let residual = optimality_residual(&u, &data, problem.kappa()).unwrap();
    let worst = residual.iter().map(|(_, r)| r.abs()).fold(0.0, f64::max);
    println!("optimality residual at {} knots, max |r| = {worst:.4}", residual.len());
}
