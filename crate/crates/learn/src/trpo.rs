//! Trust-region policy optimization: batch collection, advantage
//! estimation, the natural-gradient step and the value regression.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use ufo_core::objective::CostBreakdown;
use ufo_core::Trajectory;

use crate::adam::AdamState;
use crate::env::{GateEnv, ACTION_DIM};
use crate::error::{LearnError, Result};
use crate::mlp::{Activation, Mlp, Trace};
use crate::policy::{entropy, kl_divergence, log_prob, GaussianPolicy, HIDDEN};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrpoConfig {
    /// Trust-region radius δ on the mean KL.
    pub max_kl: f64,
    /// Accepted steps must keep the measured KL below `kl_slack · δ`.
    pub kl_slack: f64,
    pub cg_iters: usize,
    pub cg_damping: f64,
    /// Fisher-vector products use every `fisher_subsample`-th state.
    pub fisher_subsample: usize,
    pub backtrack_iters: usize,
    pub backtrack_ratio: f64,
    pub discount: f64,
    pub gae_lambda: f64,
    /// Environment steps per batch; whole episodes are kept.
    pub batch_steps: usize,
    pub init_log_std: f64,
    pub value_lr: f64,
    pub value_epochs: usize,
    pub value_minibatch: usize,
    pub seed: u64,
}

impl Default for TrpoConfig {
    fn default() -> Self {
        Self {
            max_kl: 0.01,
            kl_slack: 1.5,
            cg_iters: 10,
            cg_damping: 0.1,
            fisher_subsample: 4,
            backtrack_iters: 10,
            backtrack_ratio: 0.5,
            discount: 0.99,
            gae_lambda: 0.97,
            batch_steps: 2048,
            init_log_std: -0.5,
            value_lr: 1e-3,
            value_epochs: 5,
            value_minibatch: 64,
            seed: 0,
        }
    }
}

impl TrpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(LearnError::Config(m.to_string()));
        if !(self.max_kl > 0.0) {
            return bad("max_kl must be positive");
        }
        if !(self.kl_slack >= 1.0) {
            return bad("kl_slack must be ≥ 1");
        }
        if !(0.0..=1.0).contains(&self.discount) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("discount and gae_lambda must lie in [0, 1]");
        }
        if self.batch_steps == 0 || self.value_minibatch == 0 || self.fisher_subsample == 0 {
            return bad("batch_steps, value_minibatch and fisher_subsample must be positive");
        }
        if !(self.backtrack_ratio > 0.0 && self.backtrack_ratio < 1.0) {
            return bad("backtrack_ratio must lie in (0, 1)");
        }
        Ok(())
    }
}

/// One collected episode.
#[derive(Clone, Debug)]
pub struct Episode {
    pub index: u64,
    /// `length + 1` observations, the last one after the final step.
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub terminal_cost: CostBreakdown<f64>,
    pub fidelity: f64,
    pub commanded: Trajectory,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn episode_return(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// Policy, value network and the value optimizer state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub policy: GaussianPolicy,
    pub value: Mlp,
    pub value_opt: AdamState,
    pub config: TrpoConfig,
    pub iteration: u64,
    /// Episodes collected so far; the next episode gets this index.
    pub episodes_seen: u64,
}

impl Agent {
    pub fn new(obs_dim: usize, config: TrpoConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let policy = GaussianPolicy::new(obs_dim, ACTION_DIM, config.init_log_std, &mut rng)?;
        let value = Mlp::new(&[obs_dim, HIDDEN[0], HIDDEN[1], HIDDEN[2], 1], Activation::Identity, 1.0, &mut rng)?;
        let value_opt = AdamState::new(value.num_params(), config.value_lr);
        Ok(Self { policy, value, value_opt, config, iteration: 0, episodes_seen: 0 })
    }

    fn episode_rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(index);
        rng
    }

    /// Collects whole episodes until at least `n_steps` transitions exist.
    /// Episodes run in parallel in waves; episode `i` draws its actions from
    /// stream `i` of the agent seed and its environment noise from stream `i`
    /// of the noise seed, so the batch does not depend on scheduling.
    pub fn sample_batch(&mut self, env: &GateEnv, n_steps: usize) -> Result<Vec<Episode>> {
        if n_steps == 0 {
            return Err(LearnError::Config("n_steps must be positive".into()));
        }
        let horizon = env.config().horizon;
        let mut episodes: Vec<Episode> = Vec::new();
        let mut steps = 0;
        while steps < n_steps {
            let wave = (n_steps - steps).div_ceil(horizon).max(1) as u64;
            let start = self.episodes_seen;
            let batch: Vec<Episode> = (start..start + wave)
                .into_par_iter()
                .map(|i| self.run_episode(env, i))
                .collect::<Result<_>>()?;
            self.episodes_seen += wave;
            for e in batch {
                steps += e.len();
                episodes.push(e);
                if steps >= n_steps {
                    break;
                }
            }
        }
        Ok(episodes)
    }

    fn run_episode(&self, env: &GateEnv, index: u64) -> Result<Episode> {
        let mut rng = self.episode_rng(index);
        let mut run = env.reset(index);
        let mut states = vec![env.observe(&run).features];
        let mut actions = Vec::new();
        let mut rewards = Vec::new();
        loop {
            let a = self.policy.sample(states.last().expect("non-empty"), &mut rng);
            let r = env.step(&mut run, &a)?;
            actions.push(a);
            rewards.push(r.reward);
            states.push(r.state.features);
            if let Some(cost) = r.cost {
                return Ok(Episode {
                    index,
                    states,
                    actions,
                    rewards,
                    terminal_cost: cost,
                    fidelity: r.fidelity,
                    commanded: ufo_core::control::ControlTrajectory::new(env.config().dt_ns, run.commanded().to_vec())?,
                });
            }
        }
    }

    /// Deterministic rollout with the mean action.
    pub fn greedy_rollout(&self, env: &GateEnv, episode_index: u64) -> Result<crate::env::Rollout> {
        env.rollout(episode_index, |s| self.policy.mean_action(&s.features))
    }

    pub fn value_of(&self, obs: &[f64]) -> f64 {
        self.value.forward(obs)[0]
    }

    /// One full iteration: advantages, policy step, value regression.
    pub fn update(&mut self, episodes: &[Episode]) -> Result<UpdateStats> {
        let batch = self.prepare(episodes)?;
        let mut stats = trpo_step(&mut self.policy, &batch, &self.config);
        stats.value_loss = self.fit_value(&batch)?;
        self.iteration += 1;
        Ok(stats)
    }

    /// Flattens episodes and computes GAE advantages and discounted
    /// returns-to-go. Every episode ends in a terminal state, whose value is
    /// zero.
    pub fn prepare(&self, episodes: &[Episode]) -> Result<Batch> {
        if episodes.is_empty() {
            return Err(LearnError::Config("empty batch".into()));
        }
        let (g, lam) = (self.config.discount, self.config.gae_lambda);
        let mut b = Batch::default();
        for e in episodes {
            let v: Vec<f64> = e.states[..e.len()].iter().map(|s| self.value_of(s)).collect();
            let n = e.len();
            let mut adv = vec![0.0; n];
            let mut ret = vec![0.0; n];
            let (mut gae, mut acc) = (0.0, 0.0);
            for t in (0..n).rev() {
                let next_v = if t + 1 < n { v[t + 1] } else { 0.0 };
                let delta = e.rewards[t] + g * next_v - v[t];
                gae = delta + g * lam * gae;
                acc = e.rewards[t] + g * acc;
                adv[t] = gae;
                ret[t] = acc;
            }
            b.obs.extend(e.states[..n].iter().cloned());
            b.actions.extend(e.actions.iter().cloned());
            b.advantages.extend(adv);
            b.returns.extend(ret);
        }
        let n = b.advantages.len() as f64;
        let mean = b.advantages.iter().sum::<f64>() / n;
        let std = (b.advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
        for a in &mut b.advantages {
            *a = (*a - mean) / (std + 1e-8);
        }
        Ok(b)
    }

    /// Adam regression of the value net on the returns; shuffling is seeded
    /// by the iteration number.
    fn fit_value(&mut self, batch: &Batch) -> Result<f64> {
        let n = batch.obs.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x5eed_0000_0000_0000);
        rng.set_stream(self.iteration);
        let mut params = self.value.params();
        for _ in 0..self.config.value_epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(self.config.value_minibatch) {
                let mut grad = vec![0.0; params.len()];
                for &i in chunk {
                    let tr = self.value.forward_trace(&batch.obs[i]);
                    let err = tr.output()[0] - batch.returns[i];
                    self.value.backward(&tr, &[err], 2.0 / chunk.len() as f64, &mut grad);
                }
                self.value_opt.update(&mut params, &grad)?;
                self.value.set_params(&params)?;
            }
        }
        let loss = batch
            .obs
            .iter()
            .zip(&batch.returns)
            .map(|(o, r)| (self.value_of(o) - r).powi(2))
            .sum::<f64>()
            / n as f64;
        Ok(loss)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Batch {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub accepted: bool,
    /// Mean `KL(old ‖ new)` over the batch after the step.
    pub kl: f64,
    pub kl_reverse: f64,
    pub surrogate_before: f64,
    pub surrogate_after: f64,
    pub backtracks: usize,
    pub entropy: f64,
    pub value_loss: f64,
}

struct Cached {
    traces: Vec<Trace>,
    means: Vec<Vec<f64>>,
    log_std: Vec<f64>,
    old_logp: Vec<f64>,
}

fn cache(policy: &GaussianPolicy, batch: &Batch) -> Cached {
    let traces: Vec<Trace> = batch.obs.par_iter().map(|o| policy.mean.forward_trace(o)).collect();
    let means: Vec<Vec<f64>> = traces.iter().map(|t| t.output().to_vec()).collect();
    let old_logp = means.iter().zip(&batch.actions).map(|(m, a)| log_prob(m, &policy.log_std, a)).collect();
    Cached { traces, means, log_std: policy.log_std.clone(), old_logp }
}

/// Gradient of the surrogate `mean[A·π/π_old]` at the old parameters.
fn surrogate_gradient(policy: &GaussianPolicy, batch: &Batch, c: &Cached) -> Vec<f64> {
    let np = policy.mean.num_params();
    let d = policy.action_dim();
    let n = batch.len() as f64;
    let mut g = vec![0.0; np + d];
    let inv_var: Vec<f64> = c.log_std.iter().map(|ls| (-2.0 * ls).exp()).collect();
    for i in 0..batch.len() {
        let a = &batch.actions[i];
        let m = &c.means[i];
        let adv = batch.advantages[i];
        let dmu: Vec<f64> = (0..d).map(|k| (a[k] - m[k]) * inv_var[k]).collect();
        policy.mean.backward(&c.traces[i], &dmu, adv / n, &mut g[..np]);
        for k in 0..d {
            g[np + k] += adv / n * ((a[k] - m[k]).powi(2) * inv_var[k] - 1.0);
        }
    }
    g
}

/// Fisher-vector product of the mean KL at the old parameters, plus
/// damping. For a Gaussian with state-independent log std the Fisher matrix
/// is `E[J_μᵀ Σ⁻¹ J_μ]` on the mean weights and `2·I` on `log_std`.
fn fisher_vector(policy: &GaussianPolicy, c: &Cached, v: &[f64], damping: f64, subsample: usize) -> Vec<f64> {
    let np = policy.mean.num_params();
    let d = policy.action_dim();
    let n = c.traces.len().div_ceil(subsample) as f64;
    let inv_var: Vec<f64> = c.log_std.iter().map(|ls| (-2.0 * ls).exp()).collect();
    let mut out = vec![0.0; np + d];
    for tr in c.traces.iter().step_by(subsample) {
        let jv = policy.mean.jvp(tr, &v[..np]);
        let w: Vec<f64> = jv.iter().zip(&inv_var).map(|(x, iv)| x * iv).collect();
        policy.mean.backward(tr, &w, 1.0 / n, &mut out[..np]);
    }
    for k in 0..d {
        out[np + k] = 2.0 * v[np + k];
    }
    for (o, vi) in out.iter_mut().zip(v) {
        *o += damping * vi;
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` by conjugate gradients from zero.
pub fn conjugate_gradient(mut apply: impl FnMut(&[f64]) -> Vec<f64>, b: &[f64], iters: usize) -> Vec<f64> {
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut p = b.to_vec();
    let mut rr = dot(&r, &r);
    for _ in 0..iters {
        if rr < 1e-20 {
            break;
        }
        let ap = apply(&p);
        let alpha = rr / dot(&p, &ap);
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    x
}

/// Surrogate and both KL directions of `candidate` relative to the cache.
fn evaluate_candidate(candidate: &GaussianPolicy, batch: &Batch, c: &Cached) -> (f64, f64, f64) {
    let n = batch.len() as f64;
    let parts: Vec<(f64, f64, f64)> = (0..batch.len())
        .into_par_iter()
        .map(|i| {
            let m = candidate.mean.forward(&batch.obs[i]);
            let lp = log_prob(&m, &candidate.log_std, &batch.actions[i]);
            let ratio = (lp - c.old_logp[i]).exp();
            (
                ratio * batch.advantages[i],
                kl_divergence(&c.means[i], &c.log_std, &m, &candidate.log_std),
                kl_divergence(&m, &candidate.log_std, &c.means[i], &c.log_std),
            )
        })
        .collect();
    let (s, kl, klr) = parts.iter().fold((0.0, 0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1, a.2 + p.2));
    (s / n, kl / n, klr / n)
}

/// One natural-gradient step with backtracking. A step is accepted only if
/// the surrogate improves and both KL directions stay within
/// `kl_slack · max_kl`; otherwise the policy is left unchanged.
pub fn trpo_step(policy: &mut GaussianPolicy, batch: &Batch, cfg: &TrpoConfig) -> UpdateStats {
    let c = cache(policy, batch);
    let surrogate_before = batch.advantages.iter().sum::<f64>() / batch.len() as f64;
    let mut stats = UpdateStats {
        surrogate_before,
        surrogate_after: surrogate_before,
        entropy: entropy(&policy.log_std),
        ..UpdateStats::default()
    };
    let g = surrogate_gradient(policy, batch, &c);
    if dot(&g, &g) == 0.0 {
        return stats;
    }
    let step = conjugate_gradient(|v| fisher_vector(policy, &c, v, cfg.cg_damping, cfg.fisher_subsample), &g, cfg.cg_iters);
    let shs = dot(&step, &fisher_vector(policy, &c, &step, cfg.cg_damping, cfg.fisher_subsample));
    if !(shs > 0.0) || !shs.is_finite() {
        log::warn!("non-positive curvature along the search direction; policy unchanged");
        return stats;
    }
    let scale = (2.0 * cfg.max_kl / shs).sqrt();
    let old = policy.params();
    let mut candidate = policy.clone();
    let limit = cfg.kl_slack * cfg.max_kl;
    let mut frac = 1.0;
    for k in 0..=cfg.backtrack_iters {
        let p: Vec<f64> = old.iter().zip(&step).map(|(o, s)| o + frac * scale * s).collect();
        candidate.set_params(&p).expect("same shape");
        let (sur, kl, klr) = evaluate_candidate(&candidate, batch, &c);
        if sur.is_finite() && sur > surrogate_before && kl <= limit && klr <= limit {
            *policy = candidate;
            stats.accepted = true;
            stats.kl = kl;
            stats.kl_reverse = klr;
            stats.surrogate_after = sur;
            stats.backtracks = k;
            stats.entropy = entropy(&policy.log_std);
            return stats;
        }
        frac *= cfg.backtrack_ratio;
    }
    log::info!("line search found no acceptable step; policy unchanged");
    stats.backtracks = cfg.backtrack_iters + 1;
    stats
}

/// Mean KL between two policies on a set of observations.
pub fn mean_kl(old: &GaussianPolicy, new: &GaussianPolicy, obs: &[Vec<f64>]) -> f64 {
    let total: f64 = obs
        .iter()
        .map(|o| kl_divergence(&old.mean_action(o), &old.log_std, &new.mean_action(o), &new.log_std))
        .sum();
    total / obs.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cg_solves_spd_system() {
        let a = [[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 2.0]];
        let apply = |v: &[f64]| (0..3).map(|i| (0..3).map(|j| a[i][j] * v[j]).sum()).collect::<Vec<f64>>();
        let b = [1.0, 2.0, 3.0];
        let x = conjugate_gradient(apply, &b, 10);
        let ax = apply(&x);
        for i in 0..3 {
            assert!((ax[i] - b[i]).abs() < 1e-10);
        }
    }

    fn toy_policy() -> (GaussianPolicy, Batch) {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = GaussianPolicy::new(3, 2, -0.3, &mut rng).unwrap();
        let mut b = Batch::default();
        for i in 0..40 {
            let x = i as f64 / 40.0;
            let o = vec![x, 1.0 - x, (3.0 * x).sin()];
            let a = p.sample(&o, &mut rng);
            b.advantages.push(a[0] - a[1]);
            b.returns.push(0.0);
            b.obs.push(o);
            b.actions.push(a);
        }
        (p, b)
    }

    #[test]
    fn fisher_matches_kl_hessian() {
        // vᵀFv equals the second directional derivative of the mean KL.
        let (p, b) = toy_policy();
        let c = cache(&p, &b);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v: Vec<f64> = (0..p.num_params()).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let fv = fisher_vector(&p, &c, &v, 0.0, 1);
        let h = 1e-4;
        let kl_at = |s: f64| {
            let mut q = p.clone();
            q.set_params(&p.params().iter().zip(&v).map(|(a, b)| a + s * b).collect::<Vec<_>>()).unwrap();
            mean_kl(&p, &q, &b.obs)
        };
        let second = (kl_at(h) - 2.0 * kl_at(0.0) + kl_at(-h)) / (h * h);
        assert!((second - dot(&v, &fv)).abs() < 1e-3 * second.abs(), "{second} {}", dot(&v, &fv));
    }

    #[test]
    fn gradient_matches_surrogate_difference() {
        let (p, b) = toy_policy();
        let c = cache(&p, &b);
        let g = surrogate_gradient(&p, &b, &c);
        let h = 1e-6;
        let base = p.params();
        for i in [0, 7, 100, base.len() - 1] {
            let at = |s: f64| {
                let mut q = p.clone();
                let mut x = base.clone();
                x[i] += s;
                q.set_params(&x).unwrap();
                evaluate_candidate(&q, &b, &c).0
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-4 * fd.abs().max(1e-4), "{i}: {fd} {}", g[i]);
        }
    }

    #[test]
    fn accepted_step_respects_trust_region() {
        let (mut p, b) = toy_policy();
        let old = p.clone();
        let cfg = TrpoConfig::default();
        let s = trpo_step(&mut p, &b, &cfg);
        assert!(s.accepted);
        assert!(s.surrogate_after > s.surrogate_before);
        let kl = mean_kl(&old, &p, &b.obs);
        assert!((kl - s.kl).abs() < 1e-12 && kl <= 1.5 * cfg.max_kl);
    }
}
