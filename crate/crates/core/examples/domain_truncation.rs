//! Error from cutting space off at `|x_i| = R`, against a run on a larger box.

use magsplit::fields::{AnalyticForm, MagneticPotential};
use magsplit::splitting::{pairwise_rates, InitialState, Propagator, SplittingConfig};

fn config(radius: f64) -> SplittingConfig {
    let mut cfg = SplittingConfig::new(radius, 0.25, 2, 0.5, 25, InitialState::saddle_packet());
    cfg.potential.w_reg = AnalyticForm::Saddle { scale: 1.0 }.to_function();
    cfg.magnetic = MagneticPotential::ConstantField { b0: 1.0 };
    cfg
}

fn main() {
    let reference = Propagator::new(&config(12.0)).unwrap().final_state(None).unwrap();
    let radii = [5.0, 6.0, 7.0, 8.0];
    let errs: Vec<f64> = radii
        .iter()
        .map(|&r| {
            let psi = Propagator::new(&config(r)).unwrap().final_state(None).unwrap();
            psi.transfer(reference.grid()).unwrap().distance(&reference)
        })
        .collect();
    for ((r, e), rate) in radii.iter().zip(&errs).zip(pairwise_rates(&radii, &errs)) {
        println!("R={r:<4} error={e:.3e} rate={}", rate.map(|x| format!("{x:.2}")).unwrap_or_default());
    }
}
