//! Scenarios, candidate initializations and the order-normalized feature map.

use std::f64::consts::{PI, TAU};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{wrap, VehicleState};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub initial_states: Vec<VehicleState>,
    pub goals: Vec<[f64; 2]>,
    /// `true` for vehicles whose proposed initial state may not be changed.
    pub fixed_mask: Vec<bool>,
}

impl Scenario {
    pub fn new(initial_states: Vec<VehicleState>, goals: Vec<[f64; 2]>, fixed_mask: Vec<bool>) -> Result<Self> {
        let sc = Self {
            initial_states,
            goals,
            fixed_mask,
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.initial_states.len();
        if n == 0 {
            return Err(Error::Config("scenario needs at least one vehicle".into()));
        }
        if self.goals.len() != n || self.fixed_mask.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: if self.goals.len() != n {
                    self.goals.len()
                } else {
                    self.fixed_mask.len()
                },
            });
        }
        if let Some(s) = self.initial_states.iter().find(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("initial state {s:?}")));
        }
        for (a, ga) in self.goals.iter().enumerate() {
            if !(ga[0].is_finite() && ga[1].is_finite()) {
                return Err(Error::NonFinite(format!("goal {a}: {ga:?}")));
            }
            if self.goals[..a].contains(ga) {
                return Err(Error::Config(format!("goal {a} duplicates an earlier goal")));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.initial_states.len()
    }

    pub fn n_fixed(&self) -> usize {
        self.fixed_mask.iter().filter(|&&f| f).count()
    }

    pub fn positions(&self) -> Vec<[f64; 2]> {
        self.initial_states.iter().map(VehicleState::position).collect()
    }

    /// Joint relabeling: vehicle `k` of the result is vehicle `sigma[k]` here.
    pub fn permuted(&self, sigma: &[usize]) -> Scenario {
        Scenario {
            initial_states: sigma.iter().map(|&k| self.initial_states[k]).collect(),
            goals: sigma.iter().map(|&k| self.goals[k]).collect(),
            fixed_mask: sigma.iter().map(|&k| self.fixed_mask[k]).collect(),
        }
    }

    /// Copy with `n_fixed` vehicles, chosen uniformly, marked as fixed.
    pub fn with_random_fixed<R: Rng + ?Sized>(&self, n_fixed: usize, rng: &mut R) -> Result<Scenario> {
        if n_fixed > self.n() {
            return Err(Error::Config(format!(
                "cannot fix {n_fixed} of {} vehicles",
                self.n()
            )));
        }
        let mut mask = vec![false; self.n()];
        for k in rand::seq::index::sample(rng, self.n(), n_fixed) {
            mask[k] = true;
        }
        Ok(Scenario {
            fixed_mask: mask,
            ..self.clone()
        })
    }
}

/// Half-widths of the box a candidate initial state may be drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateBox {
    pub eps_x: f64,
    pub eps_y: f64,
    pub eps_theta: f64,
}

impl Default for CandidateBox {
    fn default() -> Self {
        Self {
            eps_x: 3.0,
            eps_y: 3.0,
            eps_theta: PI / 5.0,
        }
    }
}

impl CandidateBox {
    pub const ZERO: CandidateBox = CandidateBox {
        eps_x: 0.0,
        eps_y: 0.0,
        eps_theta: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        let ok = |e: f64| e.is_finite() && e >= 0.0;
        if ok(self.eps_x) && ok(self.eps_y) && ok(self.eps_theta) {
            Ok(())
        } else {
            Err(Error::Config(format!("candidate box half-widths must be non-negative: {self:?}")))
        }
    }

    /// Uniform perturbation of one state. Always consumes three draws.
    pub fn perturb<R: Rng + ?Sized>(&self, s: &VehicleState, rng: &mut R) -> VehicleState {
        let qx = jitter(s.qx, self.eps_x, rng);
        let qy = jitter(s.qy, self.eps_y, rng);
        let dtheta = (2.0 * rng.gen::<f64>() - 1.0) * self.eps_theta;
        VehicleState {
            qx,
            qy,
            theta: wrap(s.theta + dtheta),
        }
    }

    pub fn contains(&self, base: &VehicleState, s: &VehicleState) -> bool {
        (s.qx - base.qx).abs() <= self.eps_x
            && (s.qy - base.qy).abs() <= self.eps_y
            && wrap(s.theta - base.theta).abs() <= self.eps_theta + 1e-12
    }
}

fn jitter<R: Rng + ?Sized>(x: f64, eps: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.gen();
    (x + (2.0 * u - 1.0) * eps).clamp(x - eps, x + eps)
}

/// Order-normalized feature vector `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn circle_radius(n: usize) -> f64 {
    10.0 + 2.0 * (n as f64 - 3.0)
}

/// Slot `k` of `n` on the initialization circle, facing the centre.
pub fn circle_slot(n: usize, k: usize) -> VehicleState {
    let radius = circle_radius(n);
    let angle = TAU * k as f64 / n as f64;
    VehicleState::new(radius * angle.cos(), radius * angle.sin(), angle + PI)
}

/// Symmetric circle layout with antipodal goals under the given assignment,
/// perturbed inside `bx`. `assignment[k]` is the slot whose antipode is
/// vehicle `k`'s goal.
pub fn make_base_scenario_with_assignment<R: Rng + ?Sized>(
    n: usize,
    bx: &CandidateBox,
    assignment: &[usize],
    rng: &mut R,
) -> Result<Scenario> {
    if !(3..=10).contains(&n) {
        return Err(Error::Config(format!("base scenarios need 3 to 10 vehicles, got {n}")));
    }
    bx.validate()?;
    let mut seen = vec![false; n];
    if assignment.len() != n || assignment.iter().any(|&a| a >= n || std::mem::replace(&mut seen[a], true)) {
        return Err(Error::Config(format!("goal assignment {assignment:?} is not a permutation")));
    }
    let radius = circle_radius(n);
    let states = (0..n).map(|k| bx.perturb(&circle_slot(n, k), rng)).collect();
    let goals = assignment
        .iter()
        .map(|&slot| {
            let angle = TAU * slot as f64 / n as f64 + PI;
            [radius * angle.cos(), radius * angle.sin()]
        })
        .collect();
    Scenario::new(states, goals, vec![false; n])
}

/// Base scenario with a uniformly random goal assignment.
pub fn make_base_scenario<R: Rng + ?Sized>(n: usize, rng: &mut R, bx: &CandidateBox) -> Result<Scenario> {
    let mut assignment: Vec<usize> = (0..n).collect();
    assignment.shuffle(rng);
    make_base_scenario_with_assignment(n, bx, &assignment, rng)
}

/// Uniform candidate inside the box around every non-fixed vehicle.
///
/// Fixed vehicles still consume their draws so candidate streams stay aligned
/// regardless of which vehicles are fixed.
pub fn sample_candidate<R: Rng + ?Sized>(base: &Scenario, bx: &CandidateBox, rng: &mut R) -> Scenario {
    let initial_states = base
        .initial_states
        .iter()
        .zip(&base.fixed_mask)
        .map(|(s, &fixed)| {
            let moved = bx.perturb(s, rng);
            if fixed {
                *s
            } else {
                moved
            }
        })
        .collect();
    Scenario {
        initial_states,
        goals: base.goals.clone(),
        fixed_mask: base.fixed_mask.clone(),
    }
}

/// Two vehicles on opposite sides of a circle with swapped goals, perturbed
/// inside `bx` and redrawn until their initial separation exceeds `min_gap`.
pub fn make_pair_scenario<R: Rng + ?Sized>(radius: f64, bx: &CandidateBox, min_gap: f64, rng: &mut R) -> Result<Scenario> {
    bx.validate()?;
    let angle = rng.gen::<f64>() * TAU;
    let (s, c) = angle.sin_cos();
    let slots = [
        VehicleState::new(radius * c, radius * s, angle + PI),
        VehicleState::new(-radius * c, -radius * s, angle),
    ];
    let goals = vec![slots[1].position(), slots[0].position()];
    for _ in 0..1000 {
        let states: Vec<VehicleState> = slots.iter().map(|s| bx.perturb(s, rng)).collect();
        if states[0].distance_to(&states[1]) > min_gap {
            return Scenario::new(states, goals, vec![false; 2]);
        }
    }
    Err(Error::Config(format!(
        "no pair with separation above {min_gap} found at radius {radius}"
    )))
}

/// Counter-clockwise angle from the +y axis, in `[0, 2π)`.
fn twelve_oclock_angle(dx: f64, dy: f64) -> f64 {
    let a = (-dx).atan2(dy);
    if a < 0.0 {
        a + TAU
    } else {
        a
    }
}

/// Vehicle indices sorted counter-clockwise around the centroid, starting
/// at twelve o'clock. Ties go to the closer vehicle, then the lower index.
pub fn ccw_order(positions: &[[f64; 2]]) -> Vec<usize> {
    let n = positions.len();
    if n == 0 {
        return Vec::new();
    }
    // Sum in a canonical order so relabeling cannot change the centroid bits.
    let mut sorted = positions.to_vec();
    sorted.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let cx = sorted.iter().map(|p| p[0]).sum::<f64>() / n as f64;
    let cy = sorted.iter().map(|p| p[1]).sum::<f64>() / n as f64;

    if positions.iter().all(|p| p == &positions[0]) {
        return (0..n).collect();
    }
    let keys: Vec<(f64, f64)> = positions
        .iter()
        .map(|p| {
            let (dx, dy) = (p[0] - cx, p[1] - cy);
            (twelve_oclock_angle(dx, dy), dx.hypot(dy))
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        keys[a]
            .0
            .total_cmp(&keys[b].0)
            .then(keys[a].1.total_cmp(&keys[b].1))
            .then(a.cmp(&b))
    });
    order
}

/// `h = [x_(1), ..., x_(N), g_(1), ..., g_(N)]` in counter-clockwise order.
pub fn feature_map(sc: &Scenario) -> FeatureVector {
    let order = ccw_order(&sc.positions());
    let mut h = Vec::with_capacity(5 * sc.n());
    for &k in &order {
        let s = &sc.initial_states[k];
        h.extend_from_slice(&[s.qx, s.qy, s.theta]);
    }
    for &k in &order {
        h.extend_from_slice(&sc.goals[k]);
    }
    FeatureVector(h)
}
