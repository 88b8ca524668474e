//! Mean-field potential of a Gaussian density: FFT against direct summation,
//! and how far the smoothed kernel sits from the Coulomb kernel.

use std::time::Instant;

use magsplit::fields::SmoothedKernel;
use magsplit::grid::Grid;
use magsplit::hartree::{coulomb_l1_distance, hartree_potential, ConvolutionMethod, ConvolutionPlan, KernelSampling};
use magsplit::splitting::{loglog_slope, InitialState};

fn main() {
    let grid = Grid::new(3.0, 0.125, 2).unwrap();
    let psi = InitialState::saddle_packet().sample(&grid).unwrap();
    let kernel = SmoothedKernel::new(0.2).unwrap();

    let t = Instant::now();
    let fast = ConvolutionPlan::new(&grid, kernel.clone(), ConvolutionMethod::Fast).unwrap();
    let vf = hartree_potential(&psi, &fast).unwrap();
    println!("fft     {:>8.1?}  max V_H = {:.6}", t.elapsed(), vf.max_abs());
    let t = Instant::now();
    let direct = ConvolutionPlan::new(&grid, kernel.clone(), ConvolutionMethod::Direct).unwrap();
    let vd = hartree_potential(&psi, &direct).unwrap();
    println!("direct  {:>8.1?}  max V_H = {:.6}", t.elapsed(), vd.max_abs());
    let diff = vf.values().iter().zip(vd.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("max difference {diff:.2e}");

    let cell = ConvolutionPlan::with_sampling(&grid, kernel, ConvolutionMethod::Fast, KernelSampling::CellAveraged).unwrap();
    let vc = hartree_potential(&psi, &cell).unwrap();
    println!("cell-averaged kernel: max V_H = {:.6}", vc.max_abs());

    let eps = [0.4, 0.2, 0.1, 0.05];
    for dim in [2, 3] {
        let l1: Vec<f64> = eps
            .iter()
            .map(|&e| coulomb_l1_distance(&SmoothedKernel::new(e).unwrap(), dim, 4.0).unwrap())
            .collect();
        println!("{dim}D  ||f_eps - 1/|x|||_L1(B_4) = {:?}  slope {:.3}", l1, loglog_slope(&eps, &l1));
    }
}
