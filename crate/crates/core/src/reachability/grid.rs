use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub dim: usize,
    pub periodic: bool,
}

impl Axis {
    pub fn bounded(min: f64, max: f64, dim: usize) -> Self {
        Self {
            min,
            max,
            dim,
            periodic: false,
        }
    }

    /// The half-open heading axis `[-π, π)`.
    pub fn heading(dim: usize) -> Self {
        Self {
            min: -PI,
            max: PI,
            dim,
            periodic: true,
        }
    }

    /// Node spacing. A periodic axis does not store its `max` endpoint.
    pub fn spacing(&self) -> f64 {
        if self.periodic {
            (self.max - self.min) / self.dim as f64
        } else {
            (self.max - self.min) / (self.dim - 1) as f64
        }
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.min + i as f64 * self.spacing()
    }

    pub fn max_abs(&self) -> f64 {
        self.min.abs().max(self.max.abs())
    }
}

/// Discretization of the relative state space `(xr, yr, θr)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: [Axis; 3],
}

impl GridSpec {
    pub fn new(x: Axis, y: Axis, theta: Axis) -> Result<Self> {
        let spec = Self { axes: [x, y, theta] };
        spec.validate()?;
        Ok(spec)
    }

    /// Square `[-half, half]²` position domain with a full heading axis.
    pub fn square(half_extent: f64, n_xy: usize, n_theta: usize) -> Result<Self> {
        Self::new(
            Axis::bounded(-half_extent, half_extent, n_xy),
            Axis::bounded(-half_extent, half_extent, n_xy),
            Axis::heading(n_theta),
        )
    }

    pub fn validate(&self) -> Result<()> {
        for (k, a) in self.axes.iter().enumerate() {
            if !(a.min.is_finite() && a.max.is_finite()) || a.min >= a.max {
                return Err(Error::InvalidGrid(format!(
                    "axis {k}: bounds [{}, {}] are not increasing",
                    a.min, a.max
                )));
            }
            if a.dim < 3 {
                return Err(Error::InvalidGrid(format!(
                    "axis {k}: {} nodes, need at least 3",
                    a.dim
                )));
            }
        }
        if self.axes[0].periodic || self.axes[1].periodic {
            return Err(Error::InvalidGrid("only the heading axis may be periodic".into()));
        }
        let th = &self.axes[2];
        if th.periodic && ((th.min + PI).abs() > 1e-12 || (th.max - PI).abs() > 1e-12) {
            return Err(Error::InvalidGrid(format!(
                "periodic heading axis must span [-π, π), got [{}, {})",
                th.min, th.max
            )));
        }
        if !th.periodic {
            return Err(Error::InvalidGrid("heading axis must be periodic".into()));
        }
        Ok(())
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.axes[0].dim, self.axes[1].dim, self.axes[2].dim]
    }

    pub fn spacing(&self) -> [f64; 3] {
        [
            self.axes[0].spacing(),
            self.axes[1].spacing(),
            self.axes[2].spacing(),
        ]
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.dim).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major index with x fastest, then y, then θ.
    #[inline]
    pub fn index(&self, ix: usize, iy: usize, it: usize) -> usize {
        (it * self.axes[1].dim + iy) * self.axes[0].dim + ix
    }

    pub fn node(&self, ix: usize, iy: usize, it: usize) -> [f64; 3] {
        [
            self.axes[0].coord(ix),
            self.axes[1].coord(iy),
            self.axes[2].coord(it),
        ]
    }

    /// Length of the diagonal of one grid cell.
    pub fn cell_diagonal(&self) -> f64 {
        let [dx, dy, dt] = self.spacing();
        (dx * dx + dy * dy + dt * dt).sqrt()
    }

    /// Smallest distance from the origin to the edge of the position domain.
    pub fn half_extent(&self) -> f64 {
        let x = &self.axes[0];
        let y = &self.axes[1];
        (-x.min).min(x.max).min(-y.min).min(y.max)
    }

    pub fn contains_position(&self, xr: f64, yr: f64) -> bool {
        let x = &self.axes[0];
        let y = &self.axes[1];
        xr >= x.min && xr <= x.max && yr >= y.min && yr <= y.max
    }
}

impl Default for GridSpec {
    /// 81 × 81 × 61 nodes over `[-20, 20]² × [-π, π)`.
    fn default() -> Self {
        Self::square(20.0, 81, 61).expect("default grid is valid")
    }
}

/// Game parameters a value grid was computed for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameParams {
    pub v: f64,
    pub omega_bar: f64,
    pub rc: f64,
}

/// Sampled value function over a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrid {
    pub spec: GridSpec,
    pub values: Vec<f64>,
    pub converged: bool,
    /// Largest node change over the last unit of pseudo-time.
    pub residual: f64,
    /// Level-set sweeps performed to reach these values.
    pub sweeps: usize,
    pub params: GameParams,
}

impl ValueGrid {
    #[inline]
    pub fn at(&self, ix: usize, iy: usize, it: usize) -> f64 {
        self.values[self.spec.index(ix, iy, it)]
    }

    /// True when the stored node values and parameters coincide exactly.
    pub fn same_field(&self, other: &ValueGrid) -> bool {
        self.spec == other.spec
            && self.params == other.params
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// Checks that the grid was built for the given game.
    pub fn check_params(&self, v: f64, omega_bar: f64, rc: f64) -> Result<()> {
        let p = self.params;
        if p.v != v || p.omega_bar != omega_bar || p.rc != rc {
            return Err(Error::Config(format!(
                "grid computed for (v={}, ω̄={}, Rc={}) but (v={v}, ω̄={omega_bar}, Rc={rc}) requested",
                p.v, p.omega_bar, p.rc
            )));
        }
        Ok(())
    }
}

/// Initial level-set function: signed distance to the danger-zone disk.
///
/// Speed and turn-rate parameters stay zero until the grid is solved.
pub fn signed_distance_init(spec: GridSpec, rc: f64) -> Result<ValueGrid> {
    spec.validate()?;
    if !(rc > 0.0 && rc.is_finite()) {
        return Err(Error::Config(format!("danger-zone radius must be positive, got {rc}")));
    }
    let half = spec.half_extent();
    if rc >= half {
        return Err(Error::DangerZoneTooLarge {
            rc,
            half_extent: half,
        });
    }
    let [nx, ny, nt] = spec.dims();
    let mut values = Vec::with_capacity(spec.len());
    for _ in 0..nt {
        for iy in 0..ny {
            let y = spec.axes[1].coord(iy);
            for ix in 0..nx {
                let x = spec.axes[0].coord(ix);
                values.push(x.hypot(y) - rc);
            }
        }
    }
    Ok(ValueGrid {
        spec,
        values,
        converged: false,
        residual: f64::INFINITY,
        sweeps: 0,
        params: GameParams {
            v: 0.0,
            omega_bar: 0.0,
            rc,
        },
    })
}
