//! Least-restrictive safety-aware control.
//!
//! Each vehicle runs a goal-seeking controller until the value function of
//! some pair it belongs to drops to the safety threshold. It then applies the
//! optimal avoidance control against the most threatening vehicle only.

use serde::{Deserialize, Serialize};

use crate::dynamics::{relative_state, wrap, ControlInput, VehicleState};
use crate::error::{Error, Result};
use crate::reachability::ValueGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    /// Value at or below which the avoidance control takes over (m).
    pub safety_threshold: f64,
    /// Proportional heading gain of the goal controller (1/s).
    pub goal_gain: f64,
    /// Distance at which a vehicle counts as arrived (m).
    pub goal_radius: f64,
    pub omega_bar: f64,
    pub v: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            safety_threshold: 0.5,
            goal_gain: 2.0,
            goal_radius: 1.0,
            omega_bar: 1.0,
            v: 5.0,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.safety_threshold >= 0.0) {
            return Err(Error::Config(format!(
                "safety threshold must be non-negative, got {}",
                self.safety_threshold
            )));
        }
        if !(self.goal_radius > 0.0 && self.goal_gain > 0.0 && self.omega_bar > 0.0 && self.v > 0.0) {
            return Err(Error::Config(format!(
                "goal radius, gain, turn-rate bound and speed must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Goal,
    /// Avoiding the vehicle with this index.
    Avoid(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlDecision {
    pub omega: f64,
    pub mode: Mode,
}

/// Proportional homing law on the bearing error, saturated at `±ω̄`.
pub fn goal_controller(s: &VehicleState, goal: [f64; 2], cfg: &PolicyConfig) -> ControlInput {
    let bearing = (goal[1] - s.qy).atan2(goal[0] - s.qx);
    let error = wrap(bearing - s.theta);
    ControlInput::clamped(cfg.goal_gain * error, cfg.omega_bar)
}

/// Dense matrix of pairwise values `V(x_ij)`; `+∞` on the diagonal and for
/// pairs involving a vehicle outside the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreatMatrix {
    n: usize,
    values: Vec<f64>,
}

impl ThreatMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}

fn pair_value(states: &[VehicleState], i: usize, j: usize, grid: &ValueGrid) -> f64 {
    grid.value_at(&relative_state(&states[i], &states[j]))
}

pub fn threat_assessment(states: &[VehicleState], active: &[bool], grid: &ValueGrid) -> ThreatMatrix {
    let n = states.len();
    let mut values = vec![f64::INFINITY; n * n];
    for i in (0..n).filter(|&i| active[i]) {
        for j in (0..n).filter(|&j| j != i && active[j]) {
            values[i * n + j] = pair_value(states, i, j, grid);
        }
    }
    ThreatMatrix { n, values }
}

/// Decision for vehicle `i` given a snapshot of all vehicles.
///
/// `threats` marks which other vehicles are treated as potential colliders.
/// The lowest-index vehicle wins ties for the most threatening pair.
pub fn least_restrictive_control(
    i: usize,
    states: &[VehicleState],
    threats: &[bool],
    goals: &[[f64; 2]],
    grid: &ValueGrid,
    cfg: &PolicyConfig,
) -> ControlDecision {
    let mut worst: Option<(usize, f64)> = None;
    for j in (0..states.len()).filter(|&j| j != i && threats[j]) {
        let value = pair_value(states, i, j, grid);
        if worst.is_none_or(|(_, w)| value < w) {
            worst = Some((j, value));
        }
    }
    match worst {
        Some((j, value)) if value <= cfg.safety_threshold => {
            let r = relative_state(&states[i], &states[j]);
            ControlDecision {
                omega: grid.optimal_avoid_control(&r, cfg.omega_bar).omega,
                mode: Mode::Avoid(j),
            }
        }
        _ => ControlDecision {
            omega: goal_controller(&states[i], goals[i], cfg).omega,
            mode: Mode::Goal,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reachability::{signed_distance_init, GridSpec};
    use std::f64::consts::{FRAC_PI_2, PI};

    fn cfg() -> PolicyConfig {
        PolicyConfig::default()
    }

    #[test]
    fn goal_controller_examples() {
        let c = cfg();
        assert_eq!(goal_controller(&VehicleState::new(0.0, 0.0, 0.0), [10.0, 0.0], &c).omega, 0.0);
        assert_eq!(goal_controller(&VehicleState::new(0.0, 0.0, 0.0), [0.0, 10.0], &c).omega, 1.0);
        assert_eq!(
            goal_controller(&VehicleState::new(0.0, 0.0, FRAC_PI_2), [10.0, 0.0], &c).omega,
            -1.0
        );
        // small errors stay proportional
        let w = goal_controller(&VehicleState::new(0.0, 0.0, 0.1), [10.0, 0.0], &c).omega;
        assert!((w + 0.2).abs() < 1e-12);
    }

    /// Grid whose value is a fixed function of the distance only.
    fn distance_grid(shift: f64) -> ValueGrid {
        let mut g = signed_distance_init(GridSpec::square(20.0, 41, 11).unwrap(), 5.0).unwrap();
        g.values.iter_mut().for_each(|x| *x += shift);
        g.params.v = 5.0;
        g.params.omega_bar = 1.0;
        g
    }

    #[test]
    fn threat_matrix_sentinels() {
        let g = distance_grid(0.0);
        let far = [VehicleState::new(0.0, 0.0, 0.0), VehicleState::new(40.0, 0.0, PI)];
        let m = threat_assessment(&far, &[true, true], &g);
        assert_eq!(m.get(0, 1), f64::INFINITY);
        assert_eq!(m.get(1, 0), f64::INFINITY);
        assert_eq!(m.get(0, 0), f64::INFINITY);

        let same = [VehicleState::new(1.0, 1.0, 0.3); 2];
        let m = threat_assessment(&same, &[true, true], &g);
        assert!(m.get(0, 1) <= -5.0 + g.spec.cell_diagonal());

        let head_on = [VehicleState::new(-4.0, 0.0, 0.0), VehicleState::new(4.0, 0.0, PI)];
        let m = threat_assessment(&head_on, &[true, true], &g);
        assert!((m.get(0, 1) - m.get(1, 0)).abs() < 1e-9);

        let m = threat_assessment(&head_on, &[true, false], &g);
        assert_eq!(m.get(0, 1), f64::INFINITY);
    }

    #[test]
    fn no_threats_means_goal_mode_bit_identical() {
        let g = distance_grid(0.0);
        let states = [
            VehicleState::new(-15.0, 0.0, 0.4),
            VehicleState::new(30.0, 30.0, PI),
        ];
        let goals = [[0.0, 10.0], [50.0, 50.0]];
        let d = least_restrictive_control(0, &states, &[true, true], &goals, &g, &cfg());
        assert_eq!(d.mode, Mode::Goal);
        let direct = goal_controller(&states[0], goals[0], &cfg());
        assert_eq!(d.omega.to_bits(), direct.omega.to_bits());
    }

    #[test]
    fn threshold_crossing_and_argmin() {
        let c = cfg();
        // values are distance - 5 - shift; put vehicle 1 at value τ - 0.01
        let g = distance_grid(0.0);
        let d1 = 5.0 + c.safety_threshold - 0.01;
        let states = [VehicleState::new(0.0, 0.0, 0.0), VehicleState::new(d1, 0.0, 0.0)];
        let goals = [[10.0, 10.0], [20.0, 0.0]];
        let d = least_restrictive_control(0, &states, &[true, true], &goals, &g, &c);
        assert_eq!(d.mode, Mode::Avoid(1));
        assert_eq!(d.omega.abs(), c.omega_bar);

        // just above the threshold stays in goal mode
        let states = [VehicleState::new(0.0, 0.0, 0.0), VehicleState::new(5.0 + c.safety_threshold + 0.01, 0.0, 0.0)];
        let d = least_restrictive_control(0, &states, &[true, true], &goals, &g, &c);
        assert_eq!(d.mode, Mode::Goal);

        // two threats at values 0.3 and 0.1
        let states = [
            VehicleState::new(0.0, 0.0, 0.0),
            VehicleState::new(0.0, 5.3, 0.0),
            VehicleState::new(-5.1, 0.0, 0.0),
        ];
        let goals = [[10.0, 10.0], [20.0, 0.0], [0.0, -20.0]];
        let d = least_restrictive_control(0, &states, &[true; 3], &goals, &g, &c);
        assert_eq!(d.mode, Mode::Avoid(2));

        // equal threats resolve to the lower index
        let states = [
            VehicleState::new(0.0, 0.0, 0.0),
            VehicleState::new(0.0, 5.2, 0.0),
            VehicleState::new(0.0, -5.2, 0.0),
        ];
        let d = least_restrictive_control(0, &states, &[true; 3], &goals, &g, &c);
        assert_eq!(d.mode, Mode::Avoid(1));

        // masked-out vehicles are ignored
        let d = least_restrictive_control(0, &states, &[true, false, false], &goals, &g, &c);
        assert_eq!(d.mode, Mode::Goal);
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        let bad = PolicyConfig {
            safety_threshold: -1.0,
            ..cfg()
        };
        assert!(bad.validate().is_err());
        let bad = PolicyConfig {
            goal_radius: 0.0,
            ..cfg()
        };
        assert!(bad.validate().is_err());
    }
}
