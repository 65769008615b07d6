//! The five subcommands. Each returns the paths it wrote.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use ufo_core::control::NoiseModel;
use ufo_core::dynamics::{self, Space};
use ufo_core::evaluate::{fidelity_variance, robustness_check, EvalOptions};
use ufo_core::objective::{evaluate, CostBreakdown, CostOptions, UfoWeights};
use ufo_core::targets::{n_gate, synthesis_runtime};
use ufo_core::tswt::{self, GapMode};
use ufo_core::{Model, Target, Trajectory};
use ufo_learn::baseline::{adam_optimize, initial_params, SgdConfig, TrajectoryObjective};
use ufo_learn::checkpoint::Checkpoint;
use ufo_learn::env::GateEnv;
use ufo_learn::train::{curriculum_step, train as train_agent};
use ufo_learn::trpo::Agent;

use crate::config::{ExperimentConfig, Optimizer};
use crate::error::CliError;
use crate::output::{self, Stamp};

/// A validated configuration together with its provenance stamp.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub target: Target,
    pub stamp: Stamp,
}

impl Prepared {
    pub fn new(config: ExperimentConfig) -> Result<Self, CliError> {
        let target = config.target()?;
        let stamp = Stamp { seed: config.seed, config_hash: config.hash() };
        Ok(Self { config, target, stamp })
    }

    fn out(&self, name: &str) -> Result<PathBuf, CliError> {
        output::ensure_dir(&self.config.output_dir)?;
        Ok(self.config.output_dir.join(name))
    }

    fn eta(&self) -> f64 {
        match self.config.optimizer {
            Optimizer::Rl => self.config.env.eta_mhz,
            Optimizer::Sgd => self.config.sgd.eta_mhz,
        }
    }

    fn model(&self) -> Result<Model, CliError> {
        Ok(Model::new(self.eta())?)
    }
}

/// Full-space cost, fidelity and leakage ledger of a noiseless trajectory.
fn full_space_report(traj: &Trajectory, model: &Model, target: &Target, weights: &UfoWeights, gap_mode: GapMode) -> Result<serde_json::Value, CliError> {
    let e = evaluate(traj, model, &target.matrix, weights, &CostOptions { space: Space::Full, leakage: true, gap_mode })?;
    Ok(json!({ "cost": e.cost, "fidelity": e.fidelity, "ledger": e.ledger }))
}

#[derive(Serialize)]
struct SgdRow(usize, f64, f64);

#[derive(Serialize)]
struct TrainSummary<'a> {
    command: &'static str,
    optimizer: Optimizer,
    target: &'a str,
    space: Space,
    success: bool,
    iterations: usize,
    best_iteration: u64,
    gate_time_ns: f64,
    cost: CostBreakdown<f64>,
    fidelity: f64,
    full_space: serde_json::Value,
}

pub fn train(p: &Prepared, iterations: Option<usize>, stop_on_success: bool, resume: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
    match p.config.optimizer {
        Optimizer::Rl => train_rl(p, iterations.unwrap_or(p.config.rl.iterations), stop_on_success, resume),
        Optimizer::Sgd => {
            if resume.is_some() {
                return Err(CliError::Config("--resume needs the rl optimizer".into()));
            }
            train_sgd(p, iterations.unwrap_or(p.config.sgd.iters))
        }
    }
}

fn train_rl(p: &Prepared, iterations: usize, stop_on_success: bool, resume: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
    let cfg = &p.config;
    let env = GateEnv::new(cfg.env.clone(), p.target.matrix.clone())?;
    let mut agent = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            if ck.config_hash != p.stamp.config_hash {
                log::warn!("checkpoint was written under configuration {}", ck.config_hash);
            }
            ck.agent
        }
        None => Agent::new(env.obs_dim(), cfg.rl.trpo.clone())?,
    };
    let outcome = train_agent(&mut agent, &env, iterations, stop_on_success)?;
    let best = outcome.best.ok_or_else(|| CliError::Config("no training iteration ran".into()))?;
    let model = p.model()?;

    let header = [
        "iteration", "episodes", "mean_return", "mean_infidelity", "mean_leakage", "mean_boundary", "mean_time", "mean_total", "kl",
        "kl_reverse", "entropy", "accepted", "greedy_cost",
    ];
    let rows: Vec<_> = outcome
        .log
        .iter()
        .map(|r| {
            (
                r.iteration, r.episodes, r.mean_return, r.mean_infidelity, r.mean_leakage, r.mean_boundary, r.mean_time, r.mean_total,
                r.kl, r.kl_reverse, r.entropy, r.accepted, r.greedy_cost,
            )
        })
        .collect();
    let mut written = vec![output::write_csv(&p.out("training.csv")?, &p.stamp, &header, &rows)?];
    written.push(output::write_text(&p.out("checkpoint.json")?, &Checkpoint::new(&agent, &p.stamp.config_hash).to_json())?);
    written.push(output::write_trajectory(&p.out("trajectory.json")?, &p.stamp, &best.commanded)?);
    let summary = TrainSummary {
        command: "train",
        optimizer: Optimizer::Rl,
        target: &p.target.label,
        space: cfg.env.space,
        success: outcome.success,
        iterations: outcome.iterations,
        best_iteration: best.iteration,
        gate_time_ns: best.commanded.duration_ns(),
        cost: best.cost,
        fidelity: best.fidelity,
        full_space: full_space_report(&best.commanded, &model, &p.target, &cfg.env.weights, cfg.env.gap_mode)?,
    };
    written.push(output::write_json(&p.out("summary.json")?, &p.stamp, &summary)?);
    Ok(written)
}

fn run_sgd(config: SgdConfig, target: &Target) -> Result<(Trajectory, CostBreakdown<f64>, f64, ufo_learn::baseline::SgdResult), CliError> {
    let obj = TrajectoryObjective::new(config, target.matrix.clone())?;
    let res = adam_optimize(&obj, initial_params(&obj.config))?;
    let traj = obj.trajectory(&res.params)?;
    let cost = obj.breakdown(&res.params)?;
    let model = Model::new(obj.config.eta_mhz)?;
    let u = dynamics::propagate(&traj, &model, None, obj.config.space)?.unitary;
    let fidelity = dynamics::gate_fidelity(&dynamics::computational_block(&u, &model.layout)?, &target.matrix)?;
    Ok((traj, cost, fidelity, res))
}

fn train_sgd(p: &Prepared, iterations: usize) -> Result<Vec<PathBuf>, CliError> {
    let cfg = &p.config;
    let sgd = SgdConfig { iters: iterations, ..cfg.sgd.clone() };
    let (traj, cost, fidelity, res) = run_sgd(sgd, &p.target)?;
    let rows: Vec<SgdRow> = res.history.iter().zip(&res.best_history).enumerate().map(|(i, (c, b))| SgdRow(i, *c, *b)).collect();
    let mut written = vec![output::write_csv(&p.out("training.csv")?, &p.stamp, &["iteration", "cost", "best_cost"], &rows)?];
    written.push(output::write_trajectory(&p.out("trajectory.json")?, &p.stamp, &traj)?);
    let best_iteration = res.history.iter().position(|c| *c == res.best_cost).unwrap_or(0) as u64;
    let summary = TrainSummary {
        command: "train",
        optimizer: Optimizer::Sgd,
        target: &p.target.label,
        space: cfg.sgd.space,
        success: cost.total <= cfg.env.cost_threshold,
        iterations,
        best_iteration,
        gate_time_ns: traj.duration_ns(),
        cost,
        fidelity,
        full_space: full_space_report(&traj, &p.model()?, &p.target, &cfg.sgd.weights, cfg.sgd.gap_mode)?,
    };
    written.push(output::write_json(&p.out("summary.json")?, &p.stamp, &summary)?);
    Ok(written)
}

#[derive(Clone, Debug, Serialize)]
struct SweepRow {
    alpha: f64,
    gamma: f64,
    success: bool,
    iterations: usize,
    gate_time_ns: f64,
    cost_total: f64,
    fidelity: f64,
    reference_ns: f64,
    speedup: f64,
}

/// α grid `start, start + step, …` capped at `min(end, π)`; the cap itself
/// is always the last point, as in the curriculum.
pub fn alpha_grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    let end = end.min(std::f64::consts::PI);
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let a = start + k as f64 * step;
        if a > end - 1e-9 {
            break;
        }
        out.push(a);
        k += 1;
    }
    out.push(end);
    out
}

pub fn sweep_alpha(p: &Prepared) -> Result<Vec<PathBuf>, CliError> {
    let cfg = &p.config;
    let s = &cfg.sweep;
    let grid = alpha_grid(s.alpha_start, s.alpha_end, s.alpha_step);
    let reference_ns = synthesis_runtime().total_ns;
    let rows: Vec<SweepRow> = match cfg.optimizer {
        // Weights carry over from one α to the next, so this runs in order.
        Optimizer::Rl => {
            let probe = GateEnv::new(cfg.env.clone(), n_gate(grid[0], s.gamma).matrix)?;
            let mut agent = Agent::new(probe.obs_dim(), cfg.rl.trpo.clone())?;
            let mut rows = Vec::with_capacity(grid.len());
            for &alpha in &grid {
                let env = GateEnv::new(cfg.env.clone(), n_gate(alpha, s.gamma).matrix)?;
                let pt = curriculum_step(&mut agent, &env, alpha, s.gamma, s.budget)?;
                rows.push(SweepRow {
                    alpha,
                    gamma: s.gamma,
                    success: pt.success,
                    iterations: pt.iterations,
                    gate_time_ns: pt.gate_time_ns,
                    cost_total: pt.cost.total,
                    fidelity: pt.fidelity,
                    reference_ns,
                    speedup: reference_ns / pt.gate_time_ns,
                });
            }
            rows
        }
        Optimizer::Sgd => grid
            .par_iter()
            .map(|&alpha| sgd_shortest(cfg, alpha, reference_ns))
            .collect::<Result<Vec<_>, _>>()?,
    };
    let header = ["alpha", "gamma", "success", "iterations", "gate_time_ns", "cost_total", "fidelity", "reference_ns", "speedup"];
    let tuples: Vec<_> = rows
        .iter()
        .map(|r| (r.alpha, r.gamma, r.success, r.iterations, r.gate_time_ns, r.cost_total, r.fidelity, r.reference_ns, r.speedup))
        .collect();
    let mut written = vec![output::write_csv(&p.out("sweep.csv")?, &p.stamp, &header, &tuples)?];
    let body = json!({
        "command": "sweep-alpha",
        "optimizer": cfg.optimizer,
        "points": rows,
        "reference": synthesis_runtime(),
    });
    written.push(output::write_json(&p.out("sweep.json")?, &p.stamp, &body)?);
    Ok(written)
}

/// Shortest SGD gate for one α: lengths grow in steps of
/// `sgd_length_step` until the cost threshold is met or `sgd.n_steps` is
/// reached.
fn sgd_shortest(cfg: &ExperimentConfig, alpha: f64, reference_ns: f64) -> Result<SweepRow, CliError> {
    let s = &cfg.sweep;
    let target = n_gate(alpha, s.gamma);
    let mut best: Option<SweepRow> = None;
    let mut spent = 0;
    let mut n = s.sgd_length_step;
    while n <= cfg.sgd.n_steps.max(s.sgd_length_step) {
        let sgd = SgdConfig { n_steps: n, iters: s.budget, ..cfg.sgd.clone() };
        let (traj, cost, fidelity, _) = run_sgd(sgd, &target)?;
        spent += s.budget;
        let row = SweepRow {
            alpha,
            gamma: s.gamma,
            success: cost.total <= cfg.env.cost_threshold,
            iterations: spent,
            gate_time_ns: traj.duration_ns(),
            cost_total: cost.total,
            fidelity,
            reference_ns,
            speedup: reference_ns / traj.duration_ns(),
        };
        let done = row.success;
        if done || best.as_ref().is_none_or(|b| row.cost_total < b.cost_total) {
            best = Some(row);
        }
        if done {
            break;
        }
        n += s.sgd_length_step;
    }
    Ok(best.expect("at least one length is tried"))
}

#[derive(Serialize)]
struct RobustnessRow(f64, f64, Option<f64>, f64, f64, usize);

pub fn robustness(p: &Prepared, trajectory: &Path) -> Result<Vec<PathBuf>, CliError> {
    let cfg = &p.config;
    let traj = output::read_trajectory(trajectory)?;
    let model = p.model()?;
    let space = eval_space(cfg);
    let u = dynamics::propagate(&traj, &model, None, space)?.unitary;
    let f_ideal = dynamics::gate_fidelity(&dynamics::computational_block(&u, &model.layout)?, &p.target.matrix)?;
    let opts = EvalOptions { space, haar_states: cfg.haar_states, haar_seed: cfg.seed };
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for &sigma in &cfg.robustness.sigma_grid {
        let noise = NoiseModel { eta_noise: cfg.env.noise.eta_noise, ..NoiseModel::new(sigma, cfg.seed)? };
        let rep = fidelity_variance(&traj, &model, &p.target.matrix, &noise, cfg.robustness.samples_per_point, &opts)?;
        let pass = robustness_check(&rep, f_ideal, &cfg.robustness);
        rows.push(RobustnessRow(sigma, rep.f_mean, rep.f_ave_haar, rep.f_ave_nielsen, rep.sigma_fidelity, rep.n_samples));
        points.push(json!({
            "sigma_mhz": sigma,
            "f_mean": rep.f_mean,
            "f_ave_haar": rep.f_ave_haar,
            "f_ave_nielsen": rep.f_ave_nielsen,
            "f_ave_kraus": rep.f_ave_kraus,
            "sigma_fidelity": rep.sigma_fidelity,
            "leaked_population": rep.leaked_population,
            "within_epsilon0": pass,
        }));
    }
    let header = ["sigma_mhz", "f_ave", "f_ave_haar", "f_ave_nielsen", "sigma_fidelity", "n_samples"];
    let mut written = vec![output::write_csv(&p.out("robustness.csv")?, &p.stamp, &header, &rows)?];
    let all_pass = points.iter().all(|v| v["within_epsilon0"] == true);
    let body = json!({
        "command": "robustness",
        "target": p.target.label,
        "space": space,
        "f_ideal": f_ideal,
        "epsilon0": cfg.robustness.epsilon0,
        "all_within_epsilon0": all_pass,
        "points": points,
    });
    written.push(output::write_json(&p.out("robustness.json")?, &p.stamp, &body)?);
    Ok(written)
}

fn eval_space(cfg: &ExperimentConfig) -> Space {
    match cfg.optimizer {
        Optimizer::Rl => cfg.env.space,
        Optimizer::Sgd => cfg.sgd.space,
    }
}

fn gap_mode(cfg: &ExperimentConfig) -> GapMode {
    match cfg.optimizer {
        Optimizer::Rl => cfg.env.gap_mode,
        Optimizer::Sgd => cfg.sgd.gap_mode,
    }
}

pub fn leakage_audit(p: &Prepared, trajectory: &Path) -> Result<Vec<PathBuf>, CliError> {
    let traj = output::read_trajectory(trajectory)?;
    let model = p.model()?;
    let mode = gap_mode(&p.config);
    let frames = tswt::trajectory_frames(&traj, &model)?;
    let ledger = tswt::leakage_bound(&frames, traj.dt_us(), &model.layout, mode)?;
    let adiabatic = tswt::adiabatic_bound_from_frames(&frames, &model, traj.duration_us(), mode)?;
    let bare = dynamics::exact_leakage(&traj, &model, dynamics::Frame::Bare)?;
    let dressed = dynamics::exact_leakage(&traj, &model, dynamics::Frame::Dressed)?;
    let ratio = |x: f64, bound: f64| if bound > 0.0 { x / bound } else { f64::INFINITY };
    let body = json!({
        "command": "leakage-audit",
        "n_steps": traj.len(),
        "dt_ns": traj.dt_ns(),
        "gap_mode": mode,
        "bound_three_term": ledger.l_tot,
        "bound_five_term": ledger.five_term(),
        "ledger": ledger,
        "adiabatic": adiabatic,
        "exact_bare": bare,
        "exact_dressed": dressed,
        "ratio_exact_to_three_term": ratio(dressed.max_amplitude, ledger.l_tot),
        "ratio_exact_to_five_term": ratio(dressed.max_amplitude, ledger.five_term()),
        "ratio_adiabatic_to_three_term": ratio(adiabatic.total, ledger.l_tot),
        "exact_within_three_term": dressed.max_amplitude <= ledger.l_tot,
        "exact_within_five_term": dressed.max_amplitude <= ledger.five_term(),
    });
    Ok(vec![output::write_json(&p.out("leakage_audit.json")?, &p.stamp, &body)?])
}

pub fn evaluate_cmd(p: &Prepared, trajectory: &Path, sigma: Option<f64>, samples: Option<usize>) -> Result<Vec<PathBuf>, CliError> {
    let cfg = &p.config;
    let traj = output::read_trajectory(trajectory)?;
    let model = p.model()?;
    let (weights, leakage) = match cfg.optimizer {
        Optimizer::Rl => (cfg.env.weights, cfg.env.leakage),
        Optimizer::Sgd => (cfg.sgd.weights, cfg.sgd.leakage),
    };
    let space = eval_space(cfg);
    let e = evaluate(&traj, &model, &p.target.matrix, &weights, &CostOptions { space, leakage, gap_mode: gap_mode(cfg) })?;
    let sigma = sigma.unwrap_or(cfg.env.noise.sigma_mhz);
    let noise_report = if sigma > 0.0 {
        let noise = NoiseModel { eta_noise: cfg.env.noise.eta_noise, ..NoiseModel::new(sigma, cfg.seed)? };
        let n = samples.unwrap_or(cfg.robustness.samples_per_point);
        let opts = EvalOptions { space, haar_states: cfg.haar_states, haar_seed: cfg.seed };
        Some(fidelity_variance(&traj, &model, &p.target.matrix, &noise, n, &opts)?)
    } else {
        None
    };
    let body = json!({
        "command": "evaluate",
        "target": p.target.label,
        "space": space,
        "n_steps": traj.len(),
        "gate_time_ns": traj.duration_ns(),
        "cost": e.cost,
        "fidelity": e.fidelity,
        "ledger": e.ledger,
        "noise": noise_report,
    });
    Ok(vec![output::write_json(&p.out("evaluation.json")?, &p.stamp, &body)?])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints() {
        let g = alpha_grid(0.1, 0.5, 0.1);
        assert_eq!(g.len(), 5);
        assert!((g[4] - 0.5).abs() < 1e-12);
        let g = alpha_grid(3.0, 10.0, 0.1);
        assert_eq!(g.len(), 3);
        assert_eq!(*g.last().unwrap(), std::f64::consts::PI);
    }
}
