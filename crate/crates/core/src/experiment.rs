//! Data-generation campaigns, candidate selection and paired evaluation.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::VehicleState;
use crate::error::{Error, Result};
use crate::learner::{predict_success, LabeledSample, MlpParams};
use crate::reachability::ValueGrid;
use crate::scenario_features::{feature_map, make_base_scenario, sample_candidate, CandidateBox, Scenario};
use crate::simulator::{run_simulation, SimConfig, SimResult};

/// Independent random streams derived from one base seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    DatasetBase,
    DatasetCandidate,
    EvalBase,
    EvalFixed,
    EvalCandidates,
    EvalRandomPick,
    PairScenario,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::DatasetBase => 1,
            Stream::DatasetCandidate => 2,
            Stream::EvalBase => 3,
            Stream::EvalFixed => 4,
            Stream::EvalCandidates => 5,
            Stream::EvalRandomPick => 6,
            Stream::PairScenario => 7,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based seed for run `index` of a stream.
pub fn derive_seed(base_seed: u64, index: u64, stream: Stream) -> u64 {
    splitmix(splitmix(splitmix(base_seed) ^ index) ^ stream.tag())
}

pub fn stream_rng(base_seed: u64, index: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base_seed, index, stream))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub n: usize,
    /// Dataset size.
    pub m: usize,
    /// Candidates per evaluation run.
    pub l: usize,
    pub n_runs: usize,
    pub n_fixed: usize,
    pub sim: SimConfig,
    #[serde(rename = "box")]
    pub bx: CandidateBox,
    pub base_seed: u64,
}

impl CampaignConfig {
    pub fn new(n: usize, sim: SimConfig, base_seed: u64) -> Self {
        Self {
            n,
            m: 1000,
            l: 10,
            n_runs: 200,
            n_fixed: 0,
            sim,
            bx: CandidateBox::default(),
            base_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(3..=10).contains(&self.n) {
            return Err(Error::Config(format!("vehicle count must lie in 3..=10, got {}", self.n)));
        }
        if self.n_fixed >= self.n {
            return Err(Error::Config(format!(
                "at most {} of {} vehicles may be fixed, got {}",
                self.n - 1,
                self.n,
                self.n_fixed
            )));
        }
        if self.l == 0 || self.m == 0 || self.n_runs == 0 {
            return Err(Error::Config("M, L and N_runs must be at least 1".into()));
        }
        self.bx.validate()?;
        self.sim.validate()
    }
}

/// Serialized view of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub states: Vec<[f64; 3]>,
    pub goals: Vec<[f64; 2]>,
    pub fixed: Vec<bool>,
}

impl From<&Scenario> for ScenarioRecord {
    fn from(sc: &Scenario) -> Self {
        Self {
            states: sc.initial_states.iter().map(|s| [s.qx, s.qy, s.theta]).collect(),
            goals: sc.goals.clone(),
            fixed: sc.fixed_mask.clone(),
        }
    }
}

impl ScenarioRecord {
    pub fn to_scenario(&self) -> Result<Scenario> {
        let states = self
            .states
            .iter()
            .map(|s| VehicleState {
                qx: s[0],
                qy: s[1],
                theta: s[2],
            })
            .collect();
        Scenario::new(states, self.goals.clone(), self.fixed.clone())
    }
}

/// One line of the dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub run: u64,
    pub h: Vec<f64>,
    pub y: u8,
    pub scenario: ScenarioRecord,
}

impl DatasetRecord {
    pub fn sample(&self) -> LabeledSample {
        LabeledSample {
            h: crate::scenario_features::FeatureVector(self.h.clone()),
            y: self.y,
        }
    }
}

pub fn write_jsonl(records: &[DatasetRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn read_jsonl(text: &str) -> Result<Vec<DatasetRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            let r: DatasetRecord =
                serde_json::from_str(l).map_err(|e| Error::Format(format!("dataset line {}: {e}", k + 1)))?;
            if r.y > 1 {
                return Err(Error::Format(format!("dataset line {}: label {} is not binary", k + 1, r.y)));
            }
            Ok(r)
        })
        .collect()
}

/// Base scenario and realized candidate for dataset run `r`.
pub fn dataset_scenario(cfg: &CampaignConfig, r: u64) -> Result<Scenario> {
    let base = make_base_scenario(cfg.n, &mut stream_rng(cfg.base_seed, r, Stream::DatasetBase), &cfg.bx)?;
    Ok(sample_candidate(&base, &cfg.bx, &mut stream_rng(cfg.base_seed, r, Stream::DatasetCandidate)))
}

/// Simulates `M` randomized candidates and labels each with its outcome.
pub fn generate_dataset(cfg: &CampaignConfig, grid: &ValueGrid) -> Result<Vec<DatasetRecord>> {
    cfg.validate()?;
    grid.check_params(cfg.sim.v, cfg.sim.omega_bar, cfg.sim.rc)?;
    let sim = SimConfig {
        record_trajectories: false,
        ..cfg.sim
    };
    (0..cfg.m as u64)
        .into_par_iter()
        .map(|r| {
            let sc = dataset_scenario(cfg, r)?;
            let res = run_simulation(&sc, grid, &sim)?;
            Ok(DatasetRecord {
                run: r,
                h: feature_map(&sc).0,
                y: res.success as u8,
                scenario: ScenarioRecord::from(&sc),
            })
        })
        .collect()
}

/// Highest-scoring candidate; ties go to the lowest index.
pub fn select_initialization(candidates: &[Scenario], model: &MlpParams) -> Result<(usize, f64)> {
    if candidates.is_empty() {
        return Err(Error::Config("no candidates to select from".into()));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (k, c) in candidates.iter().enumerate() {
        let p = predict_success(model, c)?;
        if p > best.1 {
            best = (k, p);
        }
    }
    Ok(best)
}

pub fn select_random<R: Rng + ?Sized>(candidates: &[Scenario], rng: &mut R) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::Config("no candidates to select from".into()));
    }
    Ok(rng.gen_range(0..candidates.len()))
}

/// Base scenario (with its fixed vehicles) and the `L` candidates of
/// evaluation run `r`. Both arms of a paired evaluation use these.
pub fn eval_run_candidates(cfg: &CampaignConfig, r: u64) -> Result<(Scenario, Vec<Scenario>)> {
    let base = make_base_scenario(cfg.n, &mut stream_rng(cfg.base_seed, r, Stream::EvalBase), &cfg.bx)?;
    let base = base.with_random_fixed(cfg.n_fixed, &mut stream_rng(cfg.base_seed, r, Stream::EvalFixed))?;
    let mut rng = stream_rng(cfg.base_seed, r, Stream::EvalCandidates);
    let candidates = (0..cfg.l).map(|_| sample_candidate(&base, &cfg.bx, &mut rng)).collect();
    Ok((base, candidates))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Learned,
    Random,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Learned => "learned",
            Strategy::Random => "random",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: u64,
    pub strategy: Strategy,
    pub success: bool,
    pub violations: usize,
    pub time_to_completion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    /// Percentage of successful runs.
    pub p_s: f64,
    /// Violations per vehicle per run.
    pub n_col: f64,
    pub successes: usize,
    pub total_violations: usize,
    pub records: Vec<RunRecord>,
}

pub fn compute_metrics(results: &[SimResult], n: usize, n_runs: usize, strategy: Strategy) -> Result<EvalSummary> {
    if results.len() != n_runs || n_runs == 0 || n == 0 {
        return Err(Error::DimensionMismatch {
            expected: n_runs,
            got: results.len(),
        });
    }
    let records: Vec<RunRecord> = results
        .iter()
        .enumerate()
        .map(|(r, res)| RunRecord {
            run: r as u64,
            strategy,
            success: res.success,
            violations: res.violation_count,
            time_to_completion: res.completion_time,
        })
        .collect();
    let successes = records.iter().filter(|r| r.success).count();
    let total_violations: usize = records.iter().map(|r| r.violations).sum();
    Ok(EvalSummary {
        p_s: 100.0 * successes as f64 / n_runs as f64,
        n_col: total_violations as f64 / (n * n_runs) as f64,
        successes,
        total_violations,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedEvaluation {
    pub learned: EvalSummary,
    pub random: EvalSummary,
    /// Per run: (learned pick, its predicted probability, random pick).
    pub picks: Vec<(usize, f64, usize)>,
}

struct RunOutcome {
    learned: SimResult,
    random: SimResult,
    pick: (usize, f64, usize),
}

/// Learned and random selection over the same candidates in every run.
pub fn evaluate_paired(cfg: &CampaignConfig, grid: &ValueGrid, model: &MlpParams) -> Result<PairedEvaluation> {
    cfg.validate()?;
    grid.check_params(cfg.sim.v, cfg.sim.omega_bar, cfg.sim.rc)?;
    if model.n_in != 5 * cfg.n {
        return Err(Error::DimensionMismatch {
            expected: 5 * cfg.n,
            got: model.n_in,
        });
    }
    let sim = SimConfig {
        record_trajectories: false,
        ..cfg.sim
    };
    let outcomes: Vec<RunOutcome> = (0..cfg.n_runs as u64)
        .into_par_iter()
        .map(|r| {
            let (_, candidates) = eval_run_candidates(cfg, r)?;
            let (li, lp) = select_initialization(&candidates, model)?;
            let ri = select_random(&candidates, &mut stream_rng(cfg.base_seed, r, Stream::EvalRandomPick))?;
            let learned = run_simulation(&candidates[li], grid, &sim)?;
            let random = if ri == li {
                learned.clone()
            } else {
                run_simulation(&candidates[ri], grid, &sim)?
            };
            Ok(RunOutcome {
                learned,
                random,
                pick: (li, lp, ri),
            })
        })
        .collect::<Result<_>>()?;

    let learned: Vec<SimResult> = outcomes.iter().map(|o| o.learned.clone()).collect();
    let random: Vec<SimResult> = outcomes.iter().map(|o| o.random.clone()).collect();
    Ok(PairedEvaluation {
        learned: compute_metrics(&learned, cfg.n, cfg.n_runs, Strategy::Learned)?,
        random: compute_metrics(&random, cfg.n, cfg.n_runs, Strategy::Random)?,
        picks: outcomes.iter().map(|o| o.pick).collect(),
    })
}
