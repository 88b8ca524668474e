//! One Cayley step against the exact exponential of the same matrix. The
//! local error shrinks like τ³.

use magsplit::fields::{sample_vector_potential, AnalyticForm, MagneticPotential, ScalarFunction};
use magsplit::grid::{Grid, Stencil};
use magsplit::linalg::{assemble_hamiltonian, CayleyStepper, DensePropagator, SolveStrategy};
use magsplit::splitting::{loglog_slope, InitialState};

fn main() {
    let grid = Grid::new(4.0, 0.25, 2).unwrap();
    let a = sample_vector_potential(
        &grid,
        &MagneticPotential::BoundedSampled {
            components: vec![ScalarFunction::new(|x| (x[1]).sin()), ScalarFunction::new(|x| 0.5 * (x[0]).cos())],
        },
    )
    .unwrap();
    let v = AnalyticForm::Harmonic { scale: 1.0 }.to_function().cell_average(&grid).unwrap();
    let h = assemble_hamiltonian(&grid, &a, Some(&v), Stencil::Paper).unwrap();
    println!("{} nodes, {} nonzeros, bandwidth {}", h.dim(), h.nnz(), h.bandwidth());

    let psi = InitialState::saddle_packet().sample(&grid).unwrap();
    let exact = DensePropagator::new(&h).unwrap();
    let taus = [0.04, 0.02, 0.01, 0.005];
    let mut errs = Vec::new();
    for tau in taus {
        let stepper = CayleyStepper::new(h.clone(), tau, SolveStrategy::Auto).unwrap();
        let one = stepper.step(&psi).unwrap();
        let err = one.distance(&exact.propagate(tau, &psi).unwrap());
        println!("tau={tau:<6} error={err:.3e} mass change={:.1e}", (one.mass() - psi.mass()).abs());
        errs.push(err);
    }
    println!("slope {:.3}", loglog_slope(&taus, &errs));
}
