use super::grid::ValueGrid;
use crate::dynamics::{step_relative_rk4, wrap, ControlInput, RelativeState};

/// Cell corner indices and trilinear weights for a query point.
struct Stencil {
    ix: [usize; 2],
    iy: [usize; 2],
    it: [usize; 2],
    t: [f64; 3],
}

fn locate_bounded(coord: f64, min: f64, h: f64, n: usize) -> (usize, usize, f64) {
    let f = (coord - min) / h;
    let i0 = (f.floor().max(0.0) as usize).min(n - 2);
    (i0, i0 + 1, (f - i0 as f64).clamp(0.0, 1.0))
}

impl ValueGrid {
    fn stencil(&self, r: &RelativeState) -> Option<Stencil> {
        if !self.spec.contains_position(r.xr, r.yr) || !r.thetar.is_finite() {
            return None;
        }
        let [ax, ay, at] = &self.spec.axes;
        let (x0, x1, tx) = locate_bounded(r.xr, ax.min, ax.spacing(), ax.dim);
        let (y0, y1, ty) = locate_bounded(r.yr, ay.min, ay.spacing(), ay.dim);
        let ft = (wrap(r.thetar) - at.min) / at.spacing();
        let t0 = (ft.floor() as usize).min(at.dim - 1);
        let tt = (ft - t0 as f64).clamp(0.0, 1.0);
        Some(Stencil {
            ix: [x0, x1],
            iy: [y0, y1],
            it: [t0, (t0 + 1) % at.dim],
            t: [tx, ty, tt],
        })
    }

    fn blend<const K: usize>(&self, s: &Stencil, mut sample: impl FnMut(usize, usize, usize) -> [f64; K]) -> [f64; K] {
        let mut acc = [0.0; K];
        for (c, &it) in s.it.iter().enumerate() {
            let wt = if c == 0 { 1.0 - s.t[2] } else { s.t[2] };
            for (b, &iy) in s.iy.iter().enumerate() {
                let wy = if b == 0 { 1.0 - s.t[1] } else { s.t[1] };
                for (a, &ix) in s.ix.iter().enumerate() {
                    let wx = if a == 0 { 1.0 - s.t[0] } else { s.t[0] };
                    let w = wx * wy * wt;
                    if w == 0.0 {
                        continue;
                    }
                    let val = sample(ix, iy, it);
                    for k in 0..K {
                        acc[k] += w * val[k];
                    }
                }
            }
        }
        acc
    }

    /// Trilinear interpolation of the value function, periodic in heading.
    ///
    /// Positions outside the grid return `+∞`: vehicles that far apart are
    /// treated as unconditionally safe.
    pub fn value_at(&self, r: &RelativeState) -> f64 {
        match self.stencil(r) {
            Some(s) => self.blend::<1>(&s, |ix, iy, it| [self.at(ix, iy, it)])[0],
            None => f64::INFINITY,
        }
    }

    /// Central-difference gradient at a node (one-sided on bounded edges).
    pub fn node_gradient(&self, ix: usize, iy: usize, it: usize) -> [f64; 3] {
        let [nx, ny, nt] = self.spec.dims();
        let [hx, hy, ht] = self.spec.spacing();
        let diff = |lo: f64, hi: f64, span: f64| (hi - lo) / span;
        let gx = if ix == 0 {
            diff(self.at(0, iy, it), self.at(1, iy, it), hx)
        } else if ix == nx - 1 {
            diff(self.at(nx - 2, iy, it), self.at(nx - 1, iy, it), hx)
        } else {
            diff(self.at(ix - 1, iy, it), self.at(ix + 1, iy, it), 2.0 * hx)
        };
        let gy = if iy == 0 {
            diff(self.at(ix, 0, it), self.at(ix, 1, it), hy)
        } else if iy == ny - 1 {
            diff(self.at(ix, ny - 2, it), self.at(ix, ny - 1, it), hy)
        } else {
            diff(self.at(ix, iy - 1, it), self.at(ix, iy + 1, it), 2.0 * hy)
        };
        let gt = diff(
            self.at(ix, iy, (it + nt - 1) % nt),
            self.at(ix, iy, (it + 1) % nt),
            2.0 * ht,
        );
        [gx, gy, gt]
    }

    /// Spatial gradient: node central differences, trilinearly interpolated.
    /// Zero outside the grid.
    pub fn gradient_at(&self, r: &RelativeState) -> [f64; 3] {
        match self.stencil(r) {
            Some(s) => self.blend::<3>(&s, |ix, iy, it| self.node_gradient(ix, iy, it)),
            None => [0.0; 3],
        }
    }

    pub fn optimal_avoid_control(&self, r: &RelativeState, omega_bar: f64) -> ControlInput {
        avoid_control_from_costate(self.gradient_at(r), r, omega_bar)
    }

    pub fn optimal_pursuit_control(&self, r: &RelativeState, omega_bar: f64) -> ControlInput {
        pursuit_control_from_costate(self.gradient_at(r), omega_bar)
    }
}

/// Relative size below which a switching function counts as zero.
///
/// On a symmetric configuration the interpolated costate carries round-off
/// of either sign; without a band two mirror-image vehicles can resolve the
/// same tie in opposite directions.
const SWITCH_TIE: f64 = 1e-9;

/// Turn rate of the avoiding vehicle maximizing `p · f`; a switching
/// argument that is zero up to round-off resolves to `+ω̄`.
pub fn avoid_control_from_costate(p: [f64; 3], r: &RelativeState, omega_bar: f64) -> ControlInput {
    let switching = p[0] * r.yr - p[1] * r.xr - p[2];
    let scale = (p[0].abs() + p[1].abs() + p[2].abs()) * (1.0 + r.xr.abs() + r.yr.abs());
    let turn = if switching >= -SWITCH_TIE * scale { omega_bar } else { -omega_bar };
    ControlInput::new(turn)
}

/// Turn rate of the other vehicle minimizing `p · f`; `p3` that is zero up
/// to round-off resolves to `+ω̄`.
pub fn pursuit_control_from_costate(p: [f64; 3], omega_bar: f64) -> ControlInput {
    let scale = p[0].abs() + p[1].abs() + p[2].abs();
    ControlInput::new(if p[2] > SWITCH_TIE * scale { -omega_bar } else { omega_bar })
}

/// Outcome of a worst-case game rollout in relative coordinates.
#[derive(Debug, Clone, Copy)]
pub struct Rollout {
    pub min_distance: f64,
    pub final_state: RelativeState,
}

/// Plays the avoid control against the worst-case opponent, both derived
/// from the same grid, and reports the closest approach.
pub fn game_rollout(grid: &ValueGrid, start: RelativeState, dt: f64, horizon: f64) -> Rollout {
    let (v, omega_bar) = (grid.params.v, grid.params.omega_bar);
    let steps = (horizon / dt).round() as usize;
    let mut r = start;
    let mut min_distance = r.distance();
    for _ in 0..steps {
        let p = grid.gradient_at(&r);
        let wi = avoid_control_from_costate(p, &r, omega_bar).omega;
        let wj = pursuit_control_from_costate(p, omega_bar).omega;
        r = step_relative_rk4(&r, wi, wj, v, dt);
        min_distance = min_distance.min(r.distance());
    }
    Rollout {
        min_distance,
        final_state: r,
    }
}
