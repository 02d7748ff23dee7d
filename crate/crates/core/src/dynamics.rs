//! Dubins-car kinematics and the body-frame relative dynamics between two cars.
//!
//! Every vehicle moves at a constant speed `v` and steers with a bounded turn
//! rate. Relative states are expressed in the frame of the first vehicle, which
//! makes the relative dynamics autonomous (independent of the absolute heading).

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle into `[-π, π)`, rejecting non-finite input.
pub fn wrap_angle(a: f64) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::NonFinite(format!("angle {a}")));
    }
    Ok(wrap(a))
}

/// Unchecked variant of [`wrap_angle`]; NaN and infinities propagate as NaN.
#[inline]
pub fn wrap(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(TAU) - PI;
    // rem_euclid may round up to exactly TAU for inputs just below a multiple of 2π.
    if r >= PI {
        r - TAU
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub qx: f64,
    pub qy: f64,
    pub theta: f64,
}

impl VehicleState {
    pub fn new(qx: f64, qy: f64, theta: f64) -> Self {
        Self {
            qx,
            qy,
            theta: wrap(theta),
        }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.qx, self.qy]
    }

    pub fn is_finite(&self) -> bool {
        self.qx.is_finite() && self.qy.is_finite() && self.theta.is_finite()
    }

    pub fn distance_to(&self, other: &VehicleState) -> f64 {
        (other.qx - self.qx).hypot(other.qy - self.qy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub omega: f64,
}

impl ControlInput {
    pub fn new(omega: f64) -> Self {
        Self { omega }
    }

    /// Clamps a raw turn rate into `[-omega_bar, omega_bar]`.
    pub fn clamped(omega: f64, omega_bar: f64) -> Self {
        Self {
            omega: omega.clamp(-omega_bar, omega_bar),
        }
    }
}

/// State of vehicle `j` seen from the body frame of vehicle `i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeState {
    pub xr: f64,
    pub yr: f64,
    pub thetar: f64,
}

impl RelativeState {
    pub fn new(xr: f64, yr: f64, thetar: f64) -> Self {
        Self {
            xr,
            yr,
            thetar: wrap(thetar),
        }
    }

    pub fn distance(&self) -> f64 {
        self.xr.hypot(self.yr)
    }
}

/// Time derivative `(v cos θ, v sin θ, ω)` of a single Dubins car.
#[inline]
pub fn dubins_derivative(s: &VehicleState, u: ControlInput, v: f64) -> [f64; 3] {
    [v * s.theta.cos(), v * s.theta.sin(), u.omega]
}

/// Rotates the world-frame offset `p_j - p_i` into the body frame of `si`.
pub fn relative_state(si: &VehicleState, sj: &VehicleState) -> RelativeState {
    let dx = sj.qx - si.qx;
    let dy = sj.qy - si.qy;
    let (sin_i, cos_i) = si.theta.sin_cos();
    RelativeState {
        xr: cos_i * dx + sin_i * dy,
        yr: -sin_i * dx + cos_i * dy,
        thetar: wrap(sj.theta - si.theta),
    }
}

/// Body-frame relative dynamics for two cars of equal speed `v`.
#[inline]
pub fn relative_derivative(r: &RelativeState, omega_i: f64, omega_j: f64, v: f64) -> [f64; 3] {
    let (sin_r, cos_r) = r.thetar.sin_cos();
    [
        -v + v * cos_r + omega_i * r.yr,
        v * sin_r - omega_i * r.xr,
        omega_j - omega_i,
    ]
}

/// One classical Runge-Kutta step with the turn rate held over the step.
pub fn step_rk4(s: &VehicleState, u: ControlInput, v: f64, dt: f64) -> VehicleState {
    let shifted = |base: &VehicleState, k: &[f64; 3], h: f64| VehicleState {
        qx: base.qx + h * k[0],
        qy: base.qy + h * k[1],
        theta: base.theta + h * k[2],
    };
    let k1 = dubins_derivative(s, u, v);
    let k2 = dubins_derivative(&shifted(s, &k1, 0.5 * dt), u, v);
    let k3 = dubins_derivative(&shifted(s, &k2, 0.5 * dt), u, v);
    let k4 = dubins_derivative(&shifted(s, &k3, dt), u, v);
    let w = dt / 6.0;
    VehicleState {
        qx: s.qx + w * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        qy: s.qy + w * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        theta: wrap(s.theta + w * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])),
    }
}

/// RK4 step of the relative dynamics, both turn rates held over the step.
pub fn step_relative_rk4(
    r: &RelativeState,
    omega_i: f64,
    omega_j: f64,
    v: f64,
    dt: f64,
) -> RelativeState {
    let shifted = |k: &[f64; 3], h: f64| RelativeState {
        xr: r.xr + h * k[0],
        yr: r.yr + h * k[1],
        thetar: r.thetar + h * k[2],
    };
    let k1 = relative_derivative(r, omega_i, omega_j, v);
    let k2 = relative_derivative(&shifted(&k1, 0.5 * dt), omega_i, omega_j, v);
    let k3 = relative_derivative(&shifted(&k2, 0.5 * dt), omega_i, omega_j, v);
    let k4 = relative_derivative(&shifted(&k3, dt), omega_i, omega_j, v);
    let w = dt / 6.0;
    RelativeState {
        xr: r.xr + w * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        yr: r.yr + w * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        thetar: wrap(r.thetar + w * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])),
    }
}
