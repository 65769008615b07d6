//! Training loop and the adaptive-α curriculum.

use serde::{Deserialize, Serialize};
use ufo_core::objective::CostBreakdown;
use ufo_core::Trajectory;

use crate::env::GateEnv;
use crate::error::Result;
use crate::trpo::{Agent, Episode};

/// Noise stream used for the greedy evaluation rollout.
pub const GREEDY_EPISODE: u64 = u64::MAX;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub iteration: u64,
    pub episodes: usize,
    pub mean_return: f64,
    pub mean_infidelity: f64,
    pub mean_leakage: f64,
    pub mean_boundary: f64,
    pub mean_time: f64,
    pub mean_total: f64,
    pub kl: f64,
    pub kl_reverse: f64,
    pub entropy: f64,
    pub accepted: bool,
    pub greedy_cost: f64,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub commanded: Trajectory,
    pub cost: CostBreakdown<f64>,
    pub fidelity: f64,
    pub iteration: u64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub log: Vec<TrainLogRow>,
    pub best: Option<Solution>,
    /// The greedy policy reached the cost threshold.
    pub success: bool,
    pub iterations: usize,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn log_row(iteration: u64, episodes: &[Episode], stats: &crate::trpo::UpdateStats, greedy_cost: f64) -> TrainLogRow {
    let c = |f: fn(&CostBreakdown<f64>) -> f64| mean(episodes.iter().map(|e| f(&e.terminal_cost)));
    TrainLogRow {
        iteration,
        episodes: episodes.len(),
        mean_return: mean(episodes.iter().map(Episode::episode_return)),
        mean_infidelity: c(|b| b.infidelity_term),
        mean_leakage: c(|b| b.leakage_term),
        mean_boundary: c(|b| b.boundary_term),
        mean_time: c(|b| b.time_term),
        mean_total: c(|b| b.total),
        kl: stats.kl,
        kl_reverse: stats.kl_reverse,
        entropy: stats.entropy,
        accepted: stats.accepted,
        greedy_cost,
    }
}

/// Runs up to `iterations` TRPO iterations. With `stop_on_success` the loop
/// ends as soon as the greedy rollout meets the environment's threshold.
pub fn train(agent: &mut Agent, env: &GateEnv, iterations: usize, stop_on_success: bool) -> Result<TrainOutcome> {
    let threshold = env.config().cost_threshold;
    let mut log = Vec::with_capacity(iterations);
    let mut best: Option<Solution> = None;
    let mut success = false;
    let mut done = 0;
    for _ in 0..iterations {
        let episodes = agent.sample_batch(env, agent.config.batch_steps)?;
        let stats = agent.update(&episodes)?;
        let greedy = agent.greedy_rollout(env, GREEDY_EPISODE)?;
        let row = log_row(agent.iteration, &episodes, &stats, greedy.cost.total);
        log::debug!("iteration {} mean return {:.4} greedy cost {:.4}", row.iteration, row.mean_return, row.greedy_cost);
        log.push(row);
        done += 1;
        if best.as_ref().is_none_or(|b| greedy.cost.total < b.cost.total) {
            best = Some(Solution {
                commanded: greedy.commanded,
                cost: greedy.cost,
                fidelity: greedy.fidelity,
                iteration: agent.iteration,
            });
        }
        success = best.as_ref().is_some_and(|b| b.cost.total <= threshold);
        if success && stop_on_success {
            break;
        }
    }
    Ok(TrainOutcome { log, best, success, iterations: done })
}

pub const ALPHA_STEP: f64 = 0.1;

/// Next α of the curriculum: one step up after either a success or an
/// exhausted budget, clamped to π.
pub fn curriculum_advance(alpha: f64, step: f64) -> f64 {
    (alpha + step).min(std::f64::consts::PI)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurriculumPoint {
    pub alpha: f64,
    pub gamma: f64,
    pub success: bool,
    pub iterations: usize,
    pub gate_time_ns: f64,
    pub cost: CostBreakdown<f64>,
    pub fidelity: f64,
    pub next_alpha: f64,
}

/// Trains at one α with a budget of `budget` iterations (weights carry over
/// between calls) and reports the point.
pub fn curriculum_step(agent: &mut Agent, env: &GateEnv, alpha: f64, gamma: f64, budget: usize) -> Result<CurriculumPoint> {
    let out = train(agent, env, budget, true)?;
    let (gate_time_ns, cost, fidelity) = match &out.best {
        Some(b) => (b.commanded.duration_ns(), b.cost, b.fidelity),
        None => (f64::NAN, CostBreakdown::default(), 0.0),
    };
    if !out.success {
        log::info!("alpha {alpha:.2}: budget of {budget} iterations exhausted");
    }
    Ok(CurriculumPoint {
        alpha,
        gamma,
        success: out.success,
        iterations: out.iterations,
        gate_time_ns,
        cost,
        fidelity,
        next_alpha: curriculum_advance(alpha, ALPHA_STEP),
    })
}
