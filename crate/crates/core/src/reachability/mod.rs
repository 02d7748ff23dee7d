//! Backward reachable set of the two-vehicle relative Dubins game.

mod file;
mod grid;
mod query;
mod solver;

pub use file::{grid_to_bytes, read_grid, write_grid};
pub use grid::{signed_distance_init, Axis, GameParams, GridSpec, ValueGrid};
pub use query::{
    avoid_control_from_costate, game_rollout, pursuit_control_from_costate, Rollout,
};
pub use solver::{
    cfl_limit, dissipation_bounds, Dissipation, hamiltonian, lax_friedrichs_sweep, solve_brs,
    solve_brs_observed, SolveOptions, SweepEvent,
};
