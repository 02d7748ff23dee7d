//! Level-set iteration for the infinite-horizon avoid game.
//!
//! The value function evolves in pseudo-time as `W_τ = min(0, H(x, ∇W))` from
//! the signed distance to the danger zone. The `min` freezes every node once
//! its value stops decreasing, so the zero sublevel set only grows and the
//! iteration settles on the infinite-horizon backward reachable set.
//!
//! Spatial derivatives use first-order one-sided differences combined through
//! a Lax-Friedrichs numerical Hamiltonian. The dissipation coefficients bound
//! `|∂H/∂p_k|` over the whole costate space and control sets, either at each
//! node ([`Dissipation::Local`]) or over the entire domain
//! ([`Dissipation::Global`]). The heading axis wraps; the position axes
//! extrapolate linearly past the boundary.

use rayon::prelude::*;

use super::grid::{GameParams, GridSpec, ValueGrid};
use crate::dynamics::RelativeState;
use crate::error::{Error, Result};

/// Closed-form `max_{ω_i} min_{ω_j} p · f(r, ω_i, ω_j)` for the relative Dubins game.
///
/// The avoiding vehicle `i` maximizes, the other vehicle minimizes.
#[inline]
pub fn hamiltonian(r: &RelativeState, p: [f64; 3], v: f64, omega_bar: f64) -> f64 {
    let (sin_r, cos_r) = r.thetar.sin_cos();
    hamiltonian_trig(r.xr, r.yr, sin_r, cos_r, p, v, omega_bar)
}

#[inline(always)]
fn hamiltonian_trig(
    xr: f64,
    yr: f64,
    sin_r: f64,
    cos_r: f64,
    p: [f64; 3],
    v: f64,
    omega_bar: f64,
) -> f64 {
    p[0] * (-v + v * cos_r)
        + p[1] * v * sin_r
        + omega_bar * (p[0] * yr - p[1] * xr - p[2]).abs()
        - omega_bar * p[2].abs()
}

/// Upper bounds on `|∂H/∂p_k|` over the grid domain and both control sets.
pub fn dissipation_bounds(spec: &GridSpec, v: f64, omega_bar: f64) -> [f64; 3] {
    [
        2.0 * v + omega_bar * spec.axes[1].max_abs(),
        v + omega_bar * spec.axes[0].max_abs(),
        2.0 * omega_bar,
    ]
}

/// Node-wise version of [`dissipation_bounds`] at `(x, y, θ)`.
#[inline(always)]
fn local_bounds(x: f64, y: f64, sin_r: f64, cos_r: f64, v: f64, omega_bar: f64) -> [f64; 3] {
    [
        (v * cos_r - v).abs() + omega_bar * y.abs(),
        (v * sin_r).abs() + omega_bar * x.abs(),
        2.0 * omega_bar,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dissipation {
    /// Coefficients from the node's own position and heading.
    #[default]
    Local,
    /// One set of coefficients for the whole domain.
    Global,
}

/// Largest pseudo-time step for which the Lax-Friedrichs update stays monotone.
pub fn cfl_limit(spec: &GridSpec, v: f64, omega_bar: f64) -> f64 {
    let alpha = dissipation_bounds(spec, v, omega_bar);
    let h = spec.spacing();
    let rate: f64 = (0..3).map(|k| alpha[k] / h[k]).sum();
    1.0 / rate
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Convergence threshold on the node change per unit pseudo-time (m).
    pub tol: f64,
    /// Pseudo-time budget (s).
    pub t_max: f64,
    /// Step size as a fraction of [`cfl_limit`].
    pub cfl_fraction: f64,
    /// Consecutive rising sweep residuals treated as divergence.
    pub divergence_window: usize,
    pub dissipation: Dissipation,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            t_max: 40.0,
            cfl_fraction: 0.9,
            divergence_window: 100,
            dissipation: Dissipation::Local,
        }
    }
}

/// Per-sweep view handed to solver observers.
pub struct SweepEvent<'a> {
    pub sweep: usize,
    pub time: f64,
    pub residual: f64,
    pub previous: &'a [f64],
    pub current: &'a [f64],
}

/// One synchronous update of every node; returns the largest absolute change.
#[allow(clippy::too_many_arguments)]
fn sweep_into(
    spec: &GridSpec,
    v: f64,
    omega_bar: f64,
    dt: f64,
    dissipation: Dissipation,
    src: &[f64],
    dst: &mut [f64],
) -> f64 {
    let [nx, ny, nt] = spec.dims();
    let [hx, hy, ht] = spec.spacing();
    let alpha = dissipation_bounds(spec, v, omega_bar);
    let plane = nx * ny;
    let xs: Vec<f64> = (0..nx).map(|i| spec.axes[0].coord(i)).collect();
    let ys: Vec<f64> = (0..ny).map(|i| spec.axes[1].coord(i)).collect();

    dst.par_chunks_mut(plane)
        .enumerate()
        .map(|(it, out)| {
            let (sin_r, cos_r) = spec.axes[2].coord(it).sin_cos();
            let below = &src[((it + nt - 1) % nt) * plane..][..plane];
            let here = &src[it * plane..][..plane];
            let above = &src[((it + 1) % nt) * plane..][..plane];
            let mut worst = 0.0f64;
            for iy in 0..ny {
                let y = ys[iy];
                let row = iy * nx;
                for ix in 0..nx {
                    let k = row + ix;
                    let w = here[k];

                    // Linear extrapolation at a bounded edge makes both one-sided
                    // differences equal to the interior one.
                    let (px_m, px_p) = if ix == 0 {
                        let d = (here[k + 1] - w) / hx;
                        (d, d)
                    } else if ix == nx - 1 {
                        let d = (w - here[k - 1]) / hx;
                        (d, d)
                    } else {
                        ((w - here[k - 1]) / hx, (here[k + 1] - w) / hx)
                    };
                    let (py_m, py_p) = if iy == 0 {
                        let d = (here[k + nx] - w) / hy;
                        (d, d)
                    } else if iy == ny - 1 {
                        let d = (w - here[k - nx]) / hy;
                        (d, d)
                    } else {
                        ((w - here[k - nx]) / hy, (here[k + nx] - w) / hy)
                    };
                    let pt_m = (w - below[k]) / ht;
                    let pt_p = (above[k] - w) / ht;

                    let p = [
                        0.5 * (px_m + px_p),
                        0.5 * (py_m + py_p),
                        0.5 * (pt_m + pt_p),
                    ];
                    let alpha = match dissipation {
                        Dissipation::Global => alpha,
                        Dissipation::Local => local_bounds(xs[ix], y, sin_r, cos_r, v, omega_bar),
                    };
                    let h = hamiltonian_trig(xs[ix], y, sin_r, cos_r, p, v, omega_bar)
                        + 0.5
                            * (alpha[0] * (px_p - px_m)
                                + alpha[1] * (py_p - py_m)
                                + alpha[2] * (pt_p - pt_m));
                    let step = dt * h.min(0.0);
                    out[k] = w + step;
                    worst = worst.max(-step);
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max)
}

/// Applies one Lax-Friedrichs sweep with pseudo-time step `dt_pde`.
pub fn lax_friedrichs_sweep(
    grid: &ValueGrid,
    v: f64,
    omega_bar: f64,
    dt_pde: f64,
    dissipation: Dissipation,
) -> Result<(ValueGrid, f64)> {
    let bound = cfl_limit(&grid.spec, v, omega_bar);
    if !(dt_pde > 0.0 && dt_pde <= bound) {
        return Err(Error::Cfl { dt: dt_pde, bound });
    }
    let mut out = grid.clone();
    let residual = sweep_into(&grid.spec, v, omega_bar, dt_pde, dissipation, &grid.values, &mut out.values);
    out.sweeps += 1;
    out.params.v = v;
    out.params.omega_bar = omega_bar;
    Ok((out, residual))
}

/// Runs the level-set iteration with default options.
pub fn solve_brs(init: &ValueGrid, v: f64, omega_bar: f64, tol: f64, t_max: f64) -> Result<ValueGrid> {
    let opts = SolveOptions {
        tol,
        t_max,
        ..SolveOptions::default()
    };
    solve_brs_observed(init, v, omega_bar, &opts, |_| {})
}

/// Runs the level-set iteration, calling `observe` after every sweep.
///
/// Convergence is checked once per unit of pseudo-time: the largest node
/// change over that unit must fall below `opts.tol`. On budget exhaustion the
/// partially converged grid is returned with `converged = false`.
pub fn solve_brs_observed<F>(
    init: &ValueGrid,
    v: f64,
    omega_bar: f64,
    opts: &SolveOptions,
    mut observe: F,
) -> Result<ValueGrid>
where
    F: FnMut(&SweepEvent<'_>),
{
    if !(opts.tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {}", opts.tol)));
    }
    if !(v > 0.0 && omega_bar > 0.0) {
        return Err(Error::Config(format!(
            "speed and turn-rate bound must be positive, got v={v}, ω̄={omega_bar}"
        )));
    }
    if !(opts.cfl_fraction > 0.0 && opts.cfl_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "CFL fraction must lie in (0, 1], got {}",
            opts.cfl_fraction
        )));
    }
    let spec = init.spec;
    let dt = opts.cfl_fraction * cfl_limit(&spec, v, omega_bar);
    let steps_per_check = (1.0 / dt).ceil() as usize;

    let mut current = init.values.clone();
    let mut next = vec![0.0; current.len()];
    let mut checkpoint = current.clone();
    let mut time = 0.0;
    let mut sweeps = 0usize;
    let mut last_residual = f64::INFINITY;
    let mut block_residual = f64::INFINITY;
    let mut rising = 0usize;
    let mut converged = false;

    while time < opts.t_max {
        let residual = sweep_into(&spec, v, omega_bar, dt, opts.dissipation, &current, &mut next);
        sweeps += 1;
        time += dt;
        if !residual.is_finite() {
            return Err(Error::Divergence {
                sweeps,
                time,
                residual,
            });
        }
        rising = if residual > last_residual { rising + 1 } else { 0 };
        if rising >= opts.divergence_window {
            return Err(Error::Divergence {
                sweeps,
                time,
                residual,
            });
        }
        last_residual = residual;
        observe(&SweepEvent {
            sweep: sweeps,
            time,
            residual,
            previous: &current,
            current: &next,
        });
        std::mem::swap(&mut current, &mut next);

        if sweeps % steps_per_check == 0 {
            block_residual = current
                .iter()
                .zip(&checkpoint)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if block_residual < opts.tol {
                converged = true;
                break;
            }
            checkpoint.copy_from_slice(&current);
        }
    }

    Ok(ValueGrid {
        spec,
        values: current,
        converged,
        residual: block_residual,
        sweeps: init.sweeps + sweeps,
        params: GameParams {
            v,
            omega_bar,
            rc: init.params.rc,
        },
    })
}
