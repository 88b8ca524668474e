//! Global time convergence of the split-step scheme with the mean-field term
//! switched on, measured by halving τ.

use magsplit::fields::ScalarFunction;
use magsplit::splitting::{loglog_slope, pairwise_rates, InitialState, Propagator, SplittingConfig};

fn main() {
    let run = |steps: usize| {
        let mut cfg = SplittingConfig::new(
            4.0,
            0.125,
            1,
            1.0,
            steps,
            InitialState::Gaussian {
                center: vec![0.5],
                width: 0.8,
                amplitude: 1.0,
                momentum: Some(vec![1.0]),
            },
        );
        cfg.potential.w_reg = ScalarFunction::new(|x| 0.5 * x[0] * x[0] + (2.0 * x[0]).sin());
        cfg.epsilon = 0.125;
        Propagator::new(&cfg).unwrap().final_state(None).unwrap()
    };
    let steps = [10, 20, 40, 80, 160, 320];
    let finals: Vec<_> = steps.iter().map(|&n| run(n)).collect();
    let taus: Vec<f64> = steps[..steps.len() - 1].iter().map(|&n| 1.0 / n as f64).collect();
    let errs: Vec<f64> = finals.windows(2).map(|w| w[0].distance(&w[1])).collect();
    for ((tau, e), r) in taus.iter().zip(&errs).zip(pairwise_rates(&taus, &errs)) {
        let rate = r.map(|r| format!("{r:.3}")).unwrap_or_default();
        println!("tau={tau:<8} |u_tau - u_tau/2|={e:.3e} rate={rate}");
    }
    println!("fitted slope {:.3}", loglog_slope(&taus, &errs));
}
