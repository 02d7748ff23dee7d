use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use serde::Serialize;
use serde_json::json;

use safeinit_core::experiment::{
    evaluate_paired, generate_dataset, read_jsonl, stream_rng, write_jsonl, CampaignConfig, EvalSummary, RunRecord,
    ScenarioRecord, Stream,
};
use safeinit_core::learner::{default_hidden_width, train as fit, Dataset, LabeledSample, ModelFile, TrainConfig};
use safeinit_core::reachability::{grid_to_bytes, read_grid, signed_distance_init, solve_brs_observed, GridSpec, SolveOptions, ValueGrid};
use safeinit_core::scenario_features::{make_base_scenario, sample_candidate, CandidateBox, Scenario};
use safeinit_core::simulator::{run_simulation, SimConfig};

use crate::manifest::{read_verified, write_atomic, RunManifest};
use crate::traj::{read_csv, render_svg, rows_from_result, write_csv};
use crate::{GameArgs, Global, NotConverged, SimArgs};

#[derive(Args, Debug)]
pub struct BrsArgs {
    #[command(flatten)]
    game: GameArgs,
    /// Nodes per position axis.
    #[arg(long, default_value_t = 81)]
    grid_n: usize,
    /// Nodes on the heading axis.
    #[arg(long, default_value_t = 61)]
    grid_theta: usize,
    /// Half-width of the square position domain (m).
    #[arg(long, default_value_t = 20.0)]
    extent: f64,
    /// Convergence threshold on the node change per unit pseudo-time.
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    /// Pseudo-time budget (s).
    #[arg(long, default_value_t = 40.0)]
    budget: f64,
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[command(flatten)]
    game: GameArgs,
    #[command(flatten)]
    sim: SimArgs,
    /// Number of vehicles.
    #[arg(long)]
    n: usize,
    /// Number of samples.
    #[arg(long, default_value_t = 1000)]
    m: usize,
    /// Grid file produced by `brs`.
    #[arg(long)]
    brs: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset produced by `gen-data`.
    #[arg(long)]
    data: PathBuf,
    /// Hidden width; defaults to 5(N-2).
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    /// Share of samples held out for validation accuracy.
    #[arg(long, default_value_t = 0.1)]
    holdout: f64,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    game: GameArgs,
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long)]
    n: usize,
    /// Vehicles whose proposed initial state may not move.
    #[arg(long, default_value_t = 0)]
    n_fixed: usize,
    #[arg(long, default_value_t = 200)]
    runs: usize,
    /// Candidates per run.
    #[arg(long, default_value_t = 10)]
    candidates: usize,
    #[arg(long)]
    brs: PathBuf,
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    game: GameArgs,
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long)]
    brs: PathBuf,
    /// Scenario JSON ({"states", "goals", "fixed"}); otherwise one is drawn with --n and --seed.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    /// Also render the run to this SVG file.
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Write the simulated scenario as JSON.
    #[arg(long)]
    save_scenario: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// Trajectory CSV produced by `simulate`.
    #[arg(long)]
    trajectory: PathBuf,
    /// Scenario JSON for goal markers.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 5.0)]
    rc: f64,
}

fn out_path(g: &Global, default: &str) -> PathBuf {
    g.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn require_seed(g: &Global, command: &str) -> Result<u64> {
    g.seed.ok_or_else(|| anyhow!("`{command}` draws random numbers and needs an explicit --seed"))
}

fn sim_config(game: &GameArgs, sim: &SimArgs) -> SimConfig {
    let mut c = SimConfig::new(game.speed, game.rc);
    c.omega_bar = game.omega_bar;
    c.policy.omega_bar = game.omega_bar;
    c.t_max = sim.t_max;
    c.arrived_are_obstacles = sim.arrived_obstacles;
    c
}

fn load_grid(path: &Path, game: &GameArgs) -> Result<(ValueGrid, Vec<u8>)> {
    let (bytes, manifest) = read_verified(path, "grid")?;
    let grid = read_grid(bytes.as_slice()).with_context(|| format!("loading {}", path.display()))?;
    if manifest.and_then(|m| m.converged) == Some(false) {
        bail!("{} holds an unconverged grid", path.display());
    }
    grid.check_params(game.speed, game.omega_bar, game.rc)?;
    Ok((grid, bytes))
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("configuration serializes")
}

pub fn brs(a: &BrsArgs, g: &Global) -> Result<()> {
    let start = Instant::now();
    let out = out_path(g, "brs.grid");
    let spec = GridSpec::square(a.extent, a.grid_n, a.grid_theta)?;
    let init = signed_distance_init(spec, a.game.rc)?;
    let opts = SolveOptions {
        tol: a.tol,
        t_max: a.budget,
        ..SolveOptions::default()
    };
    let grid = solve_brs_observed(&init, a.game.speed, a.game.omega_bar, &opts, |_| {})?;
    let bytes = grid_to_bytes(&grid);
    write_atomic(&out, &bytes)?;

    let config = json!({ "game": to_json(&grid.params), "grid": to_json(&spec), "solver": {
        "tol": a.tol, "budget": a.budget, "cfl_fraction": opts.cfl_fraction,
        "dissipation": format!("{:?}", opts.dissipation),
    }});
    let mut m = RunManifest::new("brs", config, g.seed, start.elapsed());
    m.add("grid", &out, &bytes);
    m.converged = Some(grid.converged);
    m.write_for(&out)?;
    println!(
        "{}: {} sweeps, residual {:.3e}, converged {}",
        out.display(),
        grid.sweeps,
        grid.residual,
        grid.converged
    );
    if grid.converged {
        Ok(())
    } else {
        Err(NotConverged { residual: grid.residual }.into())
    }
}

pub fn gen_data(a: &GenDataArgs, g: &Global) -> Result<()> {
    let start = Instant::now();
    let seed = require_seed(g, "gen-data")?;
    let out = out_path(g, "data.jsonl");
    let (grid, grid_bytes) = load_grid(&a.brs, &a.game)?;
    let cfg = CampaignConfig {
        m: a.m,
        ..CampaignConfig::new(a.n, sim_config(&a.game, &a.sim), seed)
    };
    let records = generate_dataset(&cfg, &grid)?;
    let text = write_jsonl(&records)?;
    write_atomic(&out, text.as_bytes())?;

    let successes = records.iter().filter(|r| r.y == 1).count();
    let mut m = RunManifest::new("gen-data", to_json(&cfg), Some(seed), start.elapsed());
    m.add("grid", &a.brs, &grid_bytes);
    m.add("dataset", &out, text.as_bytes());
    m.write_for(&out)?;
    println!("{}: {} samples, {} successful", out.display(), records.len(), successes);
    Ok(())
}

pub fn train(a: &TrainArgs, g: &Global) -> Result<()> {
    let start = Instant::now();
    let seed = require_seed(g, "train")?;
    let out = out_path(g, "model.json");
    let (bytes, _) = read_verified(&a.data, "dataset")?;
    let text = String::from_utf8(bytes).context("dataset is not UTF-8")?;
    let records = read_jsonl(&text)?;
    let Some(first) = records.first() else {
        bail!("{} is empty", a.data.display());
    };
    let n = first.scenario.states.len();
    if let Some(r) = records.iter().find(|r| r.scenario.states.len() != n) {
        bail!("run {} has {} vehicles, expected {n}", r.run, r.scenario.states.len());
    }
    let samples: Vec<LabeledSample> = records.iter().map(|r| r.sample()).collect();
    let hidden = a.hidden.unwrap_or_else(|| default_hidden_width(n));
    let cfg = TrainConfig {
        lr: a.lr,
        epochs: a.epochs,
        batch_size: a.batch,
        seed,
        holdout_fraction: a.holdout,
        ..TrainConfig::default()
    };
    let report = fit(&Dataset::scenarios(samples, n), hidden, &cfg)?;
    let final_loss = report.loss_history.last().copied().unwrap_or(f64::NAN);
    let model = ModelFile::new(&report.params, n, cfg, final_loss).to_json()?;
    write_atomic(&out, model.as_bytes())?;

    let config = json!({ "n_vehicles": n, "hidden": hidden, "train": to_json(&cfg) });
    let mut m = RunManifest::new("train", config, Some(seed), start.elapsed());
    m.add("dataset", &a.data, text.as_bytes());
    m.add("model", &out, model.as_bytes());
    m.write_for(&out)?;
    let val = report
        .validation_accuracy
        .map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"));
    println!(
        "{}: final loss {final_loss:.4}, training accuracy {:.3}, validation accuracy {val} ({} / {} samples)",
        out.display(),
        report.train_accuracy,
        report.n_train,
        report.n_validation
    );
    Ok(())
}

fn results_csv(rows: &[&RunRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(w.into_inner()?)
}

fn summary_line(s: &EvalSummary, name: &str) -> String {
    format!("{name:<9} {:>8.1} {:>9.3}", s.p_s, s.n_col)
}

pub fn eval(a: &EvalArgs, g: &Global) -> Result<()> {
    let start = Instant::now();
    let seed = require_seed(g, "eval")?;
    let out = out_path(g, "results.csv");
    let (grid, grid_bytes) = load_grid(&a.brs, &a.game)?;
    let (model_bytes, _) = read_verified(&a.model, "model")?;
    let model = ModelFile::from_json(std::str::from_utf8(&model_bytes).context("model is not UTF-8")?)?;
    if model.n_vehicles != a.n {
        bail!("model was trained for {} vehicles, --n is {}", model.n_vehicles, a.n);
    }
    let params = model.params()?;
    let cfg = CampaignConfig {
        n_fixed: a.n_fixed,
        n_runs: a.runs,
        l: a.candidates,
        ..CampaignConfig::new(a.n, sim_config(&a.game, &a.sim), seed)
    };
    let paired = evaluate_paired(&cfg, &grid, &params)?;
    let rows: Vec<&RunRecord> = paired
        .learned
        .records
        .iter()
        .zip(&paired.random.records)
        .flat_map(|(l, r)| [l, r])
        .collect();
    let csv_bytes = results_csv(&rows)?;
    write_atomic(&out, &csv_bytes)?;

    let mut m = RunManifest::new("eval", to_json(&cfg), Some(seed), start.elapsed());
    m.add("grid", &a.brs, &grid_bytes);
    m.add("model", &a.model, &model_bytes);
    m.add("results", &out, &csv_bytes);
    m.write_for(&out)?;
    println!("N = {}, N_fixed = {}, {} runs, L = {}", a.n, a.n_fixed, a.runs, a.candidates);
    println!("{:<9} {:>8} {:>9}", "strategy", "p_s (%)", "N_col");
    println!("{}", summary_line(&paired.learned, "learned"));
    println!("{}", summary_line(&paired.random, "random"));
    Ok(())
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let rec: ScenarioRecord = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(rec.to_scenario()?)
}

pub fn simulate(a: &SimulateArgs, g: &Global) -> Result<()> {
    let start = Instant::now();
    let out = out_path(g, "trajectory.csv");
    let (grid, grid_bytes) = load_grid(&a.brs, &a.game)?;
    let scenario = match (&a.scenario, a.n) {
        (Some(path), None) => load_scenario(path)?,
        (None, Some(n)) => {
            let seed = require_seed(g, "simulate --n")?;
            let bx = CandidateBox::default();
            let base = make_base_scenario(n, &mut stream_rng(seed, 0, Stream::EvalBase), &bx)?;
            sample_candidate(&base, &bx, &mut stream_rng(seed, 0, Stream::EvalCandidates))
        }
        _ => bail!("give exactly one of --scenario and --n"),
    };
    let cfg = SimConfig {
        record_trajectories: true,
        ..sim_config(&a.game, &a.sim)
    };
    let res = run_simulation(&scenario, &grid, &cfg)?;
    let csv_bytes = write_csv(&rows_from_result(&res))?;
    write_atomic(&out, &csv_bytes)?;

    let record = ScenarioRecord::from(&scenario);
    let mut m = RunManifest::new(
        "simulate",
        json!({ "sim": to_json(&cfg), "scenario": to_json(&record) }),
        g.seed,
        start.elapsed(),
    );
    m.add("grid", &a.brs, &grid_bytes);
    m.add("trajectory", &out, &csv_bytes);
    if let Some(path) = &a.save_scenario {
        let text = serde_json::to_string_pretty(&record)?;
        write_atomic(path, text.as_bytes())?;
        m.add("scenario", path, text.as_bytes());
    }
    if let Some(path) = &a.svg {
        // rendered from the written rows so `plot` reproduces it exactly
        let svg = render_svg(&read_csv(&csv_bytes)?, Some(&scenario.goals), cfg.rc)?;
        write_atomic(path, svg.as_bytes())?;
        m.add("svg", path, svg.as_bytes());
    }
    m.write_for(&out)?;
    println!(
        "{}: success {}, {} violations, {} at t = {:.1} s",
        out.display(),
        res.success,
        res.violation_count,
        if res.timed_out { "timed out" } else { "all arrived" },
        res.completion_time
    );
    Ok(())
}

pub fn plot(a: &PlotArgs, g: &Global) -> Result<()> {
    let out = out_path(g, "trajectory.svg");
    let bytes = fs::read(&a.trajectory).with_context(|| format!("reading {}", a.trajectory.display()))?;
    let rows = read_csv(&bytes)?;
    let goals = a.scenario.as_deref().map(load_scenario).transpose()?.map(|s| s.goals);
    let svg = render_svg(&rows, goals.as_deref(), a.rc)?;
    write_atomic(&out, svg.as_bytes())?;
    println!("{}", out.display());
    Ok(())
}
