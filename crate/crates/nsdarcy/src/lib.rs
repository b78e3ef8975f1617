//! Coupled steady Navier-Stokes/Darcy solver.
//!
//! The crate couples the steady Navier-Stokes equations in a fluid region to
//! Darcy flow in a porous region through Beavers-Joseph-Saffman interface
//! conditions, discretizes with Taylor-Hood mixed finite elements, and solves
//! the nonlinear system with a monolithic Newton iteration. A residual-network
//! training phase can provide Newton's initial guess: a briefly trained
//! network is interpolated onto the velocity space, which keeps the iteration
//! converging where classical initializers fail.
//!
//! Start with the runnable programs in `examples/`: each one exercises a
//! major capability (fixed-mesh solve, convergence study, initializer
//! robustness, network training, the hybrid method, and the lid-driven
//! configuration).

pub mod analysis;
pub mod assembly;
pub mod cli;
pub mod fespace;
pub mod fields;
pub mod linalg;
pub mod intdeep;
pub mod mesh;
pub mod pinn;
pub mod problems;
pub mod solver;
pub mod vtk;
