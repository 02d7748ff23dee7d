//! Synchronous multi-vehicle simulation under the least-restrictive policy.

use serde::{Deserialize, Serialize};

use crate::dynamics::{step_rk4, ControlInput, VehicleState};
use crate::error::{Error, Result};
use crate::reachability::ValueGrid;
use crate::safety_policy::{least_restrictive_control, Mode, PolicyConfig};
use crate::scenario_features::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub v: f64,
    pub omega_bar: f64,
    pub rc: f64,
    pub dt: f64,
    pub t_max: f64,
    pub policy: PolicyConfig,
    /// Keep arrived vehicles as (stationary) threats and violation partners.
    pub arrived_are_obstacles: bool,
    pub record_trajectories: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::new(5.0, 5.0)
    }
}

impl SimConfig {
    /// Defaults for a `(v, Rc)` setting with `ω̄ = 1`.
    pub fn new(v: f64, rc: f64) -> Self {
        Self {
            v,
            omega_bar: 1.0,
            rc,
            dt: 0.1,
            t_max: 60.0,
            policy: PolicyConfig {
                v,
                omega_bar: 1.0,
                ..PolicyConfig::default()
            },
            arrived_are_obstacles: false,
            record_trajectories: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.t_max >= self.dt && self.rc > 0.0 && self.v > 0.0 && self.omega_bar > 0.0) {
            return Err(Error::Config(format!(
                "need dt > 0, t_max ≥ dt and positive v, ω̄, Rc: {self:?}"
            )));
        }
        if !(self.dt.is_finite() && self.t_max.is_finite()) {
            return Err(Error::Config("dt and t_max must be finite".into()));
        }
        self.policy.validate()?;
        if self.policy.v != self.v || self.policy.omega_bar != self.omega_bar {
            return Err(Error::Config(format!(
                "policy built for (v={}, ω̄={}) but simulation uses (v={}, ω̄={})",
                self.policy.v, self.policy.omega_bar, self.v, self.omega_bar
            )));
        }
        Ok(())
    }
}

/// One recorded sample of a vehicle. `mode` is the decision applied over the
/// following step; `None` once the vehicle has stopped or the run has ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub state: VehicleState,
    pub mode: Option<Mode>,
    pub active: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub step: usize,
    pub i: usize,
    pub j: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub success: bool,
    pub violation_count: usize,
    pub reached_all: bool,
    pub timed_out: bool,
    pub steps: usize,
    pub dt: f64,
    /// Time at which the run ended (last arrival, or the timeout).
    pub completion_time: f64,
    pub final_states: Vec<VehicleState>,
    /// Per-vehicle series; empty unless trajectories were requested.
    pub trajectories: Vec<Vec<TrajectoryPoint>>,
    pub violation_log: Vec<Violation>,
}

impl SimResult {
    pub fn violation_time(&self, v: &Violation) -> f64 {
        v.step as f64 * self.dt
    }
}

/// Unordered pairs of flagged vehicles within `rc` of each other (inclusive),
/// in lexicographic order.
pub fn count_step_violations(states: &[VehicleState], active: &[bool], rc: f64) -> Vec<(usize, usize)> {
    let n = states.len();
    let mut out = Vec::new();
    for i in (0..n).filter(|&i| active[i]) {
        for j in (i + 1..n).filter(|&j| active[j]) {
            if states[i].distance_to(&states[j]) <= rc {
                out.push((i, j));
            }
        }
    }
    out
}

fn at_goal(s: &VehicleState, goal: [f64; 2], radius: f64) -> bool {
    (s.qx - goal[0]).hypot(s.qy - goal[1]) <= radius
}

pub fn run_simulation(scenario: &Scenario, grid: &ValueGrid, cfg: &SimConfig) -> Result<SimResult> {
    scenario.validate()?;
    cfg.validate()?;
    grid.check_params(cfg.v, cfg.omega_bar, cfg.rc)?;

    let n = scenario.n();
    let goals = &scenario.goals;
    let radius = cfg.policy.goal_radius;
    let max_steps = (cfg.t_max / cfg.dt).round() as usize;

    let mut states = scenario.initial_states.clone();
    let mut active: Vec<bool> = states
        .iter()
        .zip(goals)
        .map(|(s, &g)| !at_goal(s, g, radius))
        .collect();
    let mut trajectories: Vec<Vec<TrajectoryPoint>> = vec![Vec::new(); if cfg.record_trajectories { n } else { 0 }];
    let mut violation_log = Vec::new();
    let mut modes: Vec<Option<Mode>> = vec![None; n];
    let mut decisions = vec![0.0; n];

    // Which vehicles count for threats and violations.
    let present = |active: &[bool]| -> Vec<bool> {
        if cfg.arrived_are_obstacles {
            vec![true; active.len()]
        } else {
            active.to_vec()
        }
    };

    let record_violations = |step: usize, states: &[VehicleState], active: &[bool], log: &mut Vec<Violation>| {
        let mask = present(active);
        // a pair of two parked vehicles cannot be a new event
        for (i, j) in count_step_violations(states, &mask, cfg.rc) {
            if active[i] || active[j] {
                log.push(Violation { step, i, j });
            }
        }
    };
    record_violations(0, &states, &active, &mut violation_log);

    let mut step = 0;
    while active.iter().any(|&a| a) && step < max_steps {
        let threats = present(&active);
        for i in 0..n {
            if active[i] {
                let d = least_restrictive_control(i, &states, &threats, goals, grid, &cfg.policy);
                decisions[i] = d.omega;
                modes[i] = Some(d.mode);
            } else {
                modes[i] = None;
            }
        }
        if cfg.record_trajectories {
            for i in 0..n {
                trajectories[i].push(TrajectoryPoint {
                    t: step as f64 * cfg.dt,
                    state: states[i],
                    mode: modes[i],
                    active: active[i],
                });
            }
        }
        for i in (0..n).filter(|&i| active[i]) {
            states[i] = step_rk4(&states[i], ControlInput::new(decisions[i]), cfg.v, cfg.dt);
            if !states[i].is_finite() {
                return Err(Error::SimulationBlowup {
                    t: (step + 1) as f64 * cfg.dt,
                    dump: format!("vehicle {i}: states {states:?}, active {active:?}, omegas {decisions:?}"),
                });
            }
        }
        step += 1;
        for i in 0..n {
            if active[i] && at_goal(&states[i], goals[i], radius) {
                active[i] = false;
            }
        }
        record_violations(step, &states, &active, &mut violation_log);
    }

    // vehicles only stop by arriving
    let timed_out = active.iter().any(|&a| a);
    let reached_all = !timed_out;
    if cfg.record_trajectories {
        for i in 0..n {
            trajectories[i].push(TrajectoryPoint {
                t: step as f64 * cfg.dt,
                state: states[i],
                mode: None,
                active: active[i],
            });
        }
    }
    Ok(SimResult {
        success: reached_all && violation_log.is_empty() && !timed_out,
        violation_count: violation_log.len(),
        reached_all,
        timed_out,
        steps: step,
        dt: cfg.dt,
        completion_time: step as f64 * cfg.dt,
        final_states: states,
        trajectories,
        violation_log,
    })
}
