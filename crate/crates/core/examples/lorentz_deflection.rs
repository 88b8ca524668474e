//! A Gaussian packet in the saddle potential `x₁² − x₂²`, with and without a
//! unit magnetic field. The Lorentz force turns the centroid's path.

use magsplit::fields::{AnalyticForm, MagneticPotential};
use magsplit::splitting::{evolve, InitialState, SplittingConfig};

fn main() {
    let mut shifts = Vec::new();
    for b0 in [1.0, 0.0] {
        let mut cfg = SplittingConfig::new(10.0, 0.25, 2, 2.0, 100, InitialState::saddle_packet());
        cfg.potential.w_reg = AnalyticForm::Saddle { scale: 1.0 }.to_function();
        cfg.magnetic = if b0 == 0.0 {
            MagneticPotential::Zero
        } else {
            MagneticPotential::ConstantField { b0 }
        };
        cfg.cadence = 25;
        let res = evolve(&cfg).expect("evolution");
        println!("B0 = {b0}");
        for d in &res.series {
            println!("  t={:.2} mass={:.12} centroid=({:+.4}, {:+.4})", d.t, d.mass, d.centroid[0], d.centroid[1]);
        }
        let (a, z) = (res.series[0].centroid, res.series.last().unwrap().centroid);
        shifts.push((z[0] - a[0], z[1] - a[1]));
    }
    let angle = (shifts[0].1.atan2(shifts[0].0) - shifts[1].1.atan2(shifts[1].0)).to_degrees();
    println!("displacement angle between runs: {:.2} degrees", angle.abs());
}
