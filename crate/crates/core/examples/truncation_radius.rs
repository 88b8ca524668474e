//! Choosing a box size from a weighted norm: the tail outside `|x| ≥ R` is at
//! most `‖|x|^η ψ‖ R^{−η}`.

use magsplit::grid::Grid;
use magsplit::splitting::{tail_norm, truncation_radius, weighted_norm, InitialState};

fn main() {
    let grid = Grid::new(12.0, 0.125, 2).unwrap();
    let psi = InitialState::saddle_packet().sample(&grid).unwrap();
    for eta in [2u32, 3, 4] {
        let m = weighted_norm(&psi, eta);
        println!("eta={eta} M={m:.4}");
        for tol in [1e-1, 1e-2, 1e-3] {
            let r = truncation_radius(eta as f64, m, tol).unwrap();
            let tail = if r < grid.radius() { format!("{:.3e}", tail_norm(&psi, r)) } else { "beyond grid".into() };
            println!("  tol={tol:.0e} R={r:7.3} measured tail {tail}");
        }
    }
}
