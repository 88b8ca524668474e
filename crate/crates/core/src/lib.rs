pub mod grid;
pub mod fields;
pub mod linalg;
pub mod hartree;
pub mod splitting;
pub mod control;
pub mod cli;
