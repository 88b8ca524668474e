//! Assemble the discrete magnetic Hamiltonian for a constant field and look at
//! its low spectrum, with both Laplacian stencils.

use magsplit::fields::{sample_vector_potential, MagneticPotential};
use magsplit::grid::{Grid, Stencil};
use magsplit::linalg::{assemble_hamiltonian, DensePropagator};

fn main() {
    let grid = Grid::new(3.0, 0.25, 2).unwrap();
    let a = sample_vector_potential(&grid, &MagneticPotential::ConstantField { b0: 2.0 }).unwrap();
    for stencil in [Stencil::Paper, Stencil::Compact] {
        let h = assemble_hamiltonian(&grid, &a, None, stencil).unwrap();
        let eig = DensePropagator::new(&h).unwrap();
        let mut low = eig.eigenvalues().to_vec();
        low.sort_by(f64::total_cmp);
        println!("{stencil:?}: {} nonzeros, lowest {:.4?}", h.nnz(), &low[..6]);
    }
    // Landau levels for b0 = 2 sit at 2, 6, 10, ...
}
