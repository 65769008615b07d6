//! Gate-synthesis environment: one action per control step, noisy
//! propagation, rewards that add up to the negative UFO cost.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use ufo_core::control::{boundary_values, ControlFilter, ControlTrajectory, EtaNoise, FilterConfig, NoiseModel};
use ufo_core::dynamics::{self, Space};
use ufo_core::gmon::{wrap_phase, ControlKnobs, GmonModel, DEFAULT_ETA_MHZ, KNOB_RANGE_MHZ};
use ufo_core::objective::{terminal_check, CostBreakdown, RewardMode, StepwiseReward, UfoWeights};
use ufo_core::tswt::{GapMode, LeakageLedger};
use ufo_core::{Matrix, Trajectory};

use crate::error::{LearnError, Result};

pub const ACTION_DIM: usize = ControlKnobs::<f64>::LEN;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub eta_mhz: f64,
    pub dt_ns: f64,
    /// Maximum number of control steps.
    pub horizon: usize,
    pub weights: UfoWeights,
    pub reward_mode: RewardMode,
    pub noise: NoiseModel,
    /// `None` disables the control filter.
    pub filter_bandwidth_mhz: Option<f64>,
    pub space: Space,
    /// Include the leakage bound in the cost; only meaningful in the full
    /// space.
    pub leakage: bool,
    pub gap_mode: GapMode,
    /// Episodes end early once the running cost drops to this value.
    pub cost_threshold: f64,
    /// Observe the full unitary instead of its computational block.
    pub full_state_features: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            eta_mhz: DEFAULT_ETA_MHZ,
            dt_ns: ufo_core::control::DEFAULT_DT_NS,
            horizon: ufo_core::control::DEFAULT_HORIZON,
            weights: UfoWeights::default(),
            reward_mode: RewardMode::Stepwise,
            noise: NoiseModel::noiseless(),
            filter_bandwidth_mhz: Some(ufo_core::control::DEFAULT_BANDWIDTH_MHZ),
            space: Space::Full,
            leakage: true,
            gap_mode: GapMode::Constant,
            cost_threshold: 0.05,
            full_state_features: false,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LearnError::Config(m));
        if !(self.dt_ns > 0.0) || !self.dt_ns.is_finite() {
            return bad(format!("dt_ns must be positive, got {}", self.dt_ns));
        }
        if self.horizon == 0 {
            return bad("horizon must be at least one step".into());
        }
        if !(self.eta_mhz > 0.0) || !self.eta_mhz.is_finite() {
            return bad(format!("eta_mhz must be positive, got {}", self.eta_mhz));
        }
        if !self.cost_threshold.is_finite() {
            return bad("cost_threshold must be finite".into());
        }
        if self.leakage && self.space == Space::Qubit {
            return bad("the leakage term needs the full space".into());
        }
        self.weights.validate()?;
        if let Some(b) = self.filter_bandwidth_mhz {
            FilterConfig::new(b, self.dt_ns)?;
        }
        NoiseModel::new(self.noise.sigma_mhz, self.noise.seed)?;
        Ok(())
    }
}

/// Observation handed to the policy.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub features: Vec<f64>,
    pub step_index: usize,
}

/// Mutable state of one running episode.
#[derive(Clone, Debug)]
pub struct EpisodeRun {
    unitary: Matrix,
    step: usize,
    filter: Option<ControlFilter<f64>>,
    reward: StepwiseReward<f64>,
    proposed: Vec<ControlKnobs<f64>>,
    realized: Vec<ControlKnobs<f64>>,
    etas: Vec<f64>,
    noise_rng: ChaCha8Rng,
    episode_eta: Option<f64>,
    done: bool,
}

impl EpisodeRun {
    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn unitary(&self) -> &Matrix {
        &self.unitary
    }

    /// Filtered knobs before noise.
    pub fn commanded(&self) -> &[ControlKnobs<f64>] {
        &self.proposed
    }

    /// Knobs actually applied, noise included.
    pub fn realized(&self) -> &[ControlKnobs<f64>] {
        &self.realized
    }

    pub fn etas(&self) -> &[f64] {
        &self.etas
    }

    pub fn paid(&self) -> f64 {
        self.reward.paid()
    }
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub state: EnvState,
    pub reward: f64,
    pub done: bool,
    /// Final cost, present on the terminal step.
    pub cost: Option<CostBreakdown<f64>>,
    pub fidelity: f64,
}

#[derive(Clone, Debug)]
pub struct GateEnv {
    config: EnvConfig,
    model: GmonModel<f64>,
    target: Matrix,
    filter: Option<FilterConfig<f64>>,
}

/// Scales `[−1, 1]` actions to knob values: amplitudes to ±20 MHz, phases
/// `(a + 1)π`. Out-of-range components saturate.
pub fn action_to_knobs(action: &[f64]) -> ControlKnobs<f64> {
    let a: [f64; ACTION_DIM] = std::array::from_fn(|k| {
        let v = action.get(k).copied().unwrap_or(0.0);
        if v.is_nan() {
            0.0
        } else {
            v.clamp(-1.0, 1.0)
        }
    });
    let amp = |x: f64| x * KNOB_RANGE_MHZ;
    let phase = |x: f64| wrap_phase((x + 1.0) * std::f64::consts::PI);
    ControlKnobs::from_array([amp(a[0]), amp(a[1]), amp(a[2]), amp(a[3]), amp(a[4]), phase(a[5]), phase(a[6])])
}

impl GateEnv {
    pub fn new(config: EnvConfig, target: Matrix) -> Result<Self> {
        config.validate()?;
        if target.rows() != 4 || target.cols() != 4 {
            return Err(LearnError::Config("target must be a 4x4 matrix".into()));
        }
        let model = GmonModel::new(config.eta_mhz)?;
        let filter = config.filter_bandwidth_mhz.map(|b| FilterConfig::new(b, config.dt_ns)).transpose()?;
        Ok(Self { config, model, target, filter })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn model(&self) -> &GmonModel<f64> {
        &self.model
    }

    pub fn target(&self) -> &Matrix {
        &self.target
    }

    pub fn obs_dim(&self) -> usize {
        let d = if self.config.full_state_features { self.config.space.dim() } else { 4 };
        2 * d * d + 1
    }

    fn dt_us(&self) -> f64 {
        self.config.dt_ns / 1000.0
    }

    fn tracks_leakage(&self) -> bool {
        self.config.leakage && self.config.space == Space::Full
    }

    /// Fresh episode; environment noise uses stream `episode_index` of the
    /// noise seed.
    pub fn reset(&self, episode_index: u64) -> EpisodeRun {
        let leakage = self.tracks_leakage().then(|| (self.model.clone(), self.config.gap_mode));
        EpisodeRun {
            unitary: Matrix::identity(self.config.space.dim()),
            step: 0,
            filter: self.filter.map(ControlFilter::new),
            reward: StepwiseReward::new(self.config.weights, self.config.reward_mode, self.dt_us(), leakage),
            proposed: Vec::with_capacity(self.config.horizon),
            realized: Vec::with_capacity(self.config.horizon),
            etas: Vec::with_capacity(self.config.horizon),
            noise_rng: self.config.noise.rng_stream(episode_index),
            episode_eta: None,
            done: false,
        }
    }

    pub fn observe(&self, run: &EpisodeRun) -> EnvState {
        let m = if self.config.full_state_features {
            run.unitary.clone()
        } else {
            dynamics::computational_block(&run.unitary, &self.model.layout).expect("unitary has a valid shape")
        };
        let mut features: Vec<f64> = m.entries().iter().map(|z| z.re).collect();
        features.extend(m.entries().iter().map(|z| z.im));
        features.push(run.step as f64 / self.config.horizon as f64);
        EnvState { features, step_index: run.step }
    }

    pub fn fidelity(&self, run: &EpisodeRun) -> Result<f64> {
        let block = dynamics::computational_block(&run.unitary, &self.model.layout)?;
        Ok(dynamics::gate_fidelity(&block, &self.target)?)
    }

    fn realized_trajectory(&self, run: &EpisodeRun) -> Result<Trajectory> {
        Ok(ControlTrajectory::new(self.config.dt_ns, run.realized.clone())?)
    }

    /// Cost of the realized prefix. The leakage term is included once at
    /// least three steps exist.
    pub fn cost(&self, run: &EpisodeRun) -> Result<(CostBreakdown<f64>, f64, Option<LeakageLedger<f64>>)> {
        let fidelity = self.fidelity(run)?;
        let traj = self.realized_trajectory(run)?;
        let ledger = run.reward.ledger()?;
        let l_tot = ledger.map_or(0.0, |l| l.l_tot);
        let cost = CostBreakdown::from_parts(&self.config.weights, fidelity, l_tot, boundary_values(&traj).total(), traj.duration_us());
        Ok((cost, fidelity, ledger))
    }

    /// Applies one action. Out-of-range actions saturate; calling after the
    /// episode ended is an error.
    pub fn step(&self, run: &mut EpisodeRun, action: &[f64]) -> Result<StepResult> {
        if run.done {
            return Err(LearnError::Config("step called on a finished episode".into()));
        }
        if action.len() != ACTION_DIM || action.iter().any(|a| !a.is_finite()) {
            return Err(LearnError::Shape(format!("action must be {ACTION_DIM} finite values")));
        }
        let proposed = action_to_knobs(action);
        let commanded = match run.filter.as_mut() {
            Some(f) => f.push(&proposed),
            None => proposed,
        };
        let (realized, eta) = self.apply_noise(run, &commanded);
        let h = dynamics::step_hamiltonian(&realized, eta, &self.model, self.config.space)?;
        run.unitary = h.expm_hermitian(self.dt_us())?.matmul(&run.unitary);
        run.proposed.push(commanded);
        run.realized.push(realized);
        run.etas.push(eta);
        run.step += 1;
        let mut reward = run.reward.step(self.tracks_leakage().then_some(h))?;

        let horizon_hit = run.step >= self.config.horizon;
        let mut cost = None;
        let fidelity = self.fidelity(run)?;
        if horizon_hit || self.may_terminate(run, fidelity)? {
            let (c, _, _) = self.cost(run)?;
            if horizon_hit || terminal_check(&c, self.config.cost_threshold) {
                reward += run.reward.terminal(c.total);
                cost = Some(c);
                run.done = true;
            }
        }
        Ok(StepResult { state: self.observe(run), reward, done: run.done, cost, fidelity })
    }

    /// Cheap precheck: the leakage-free part of the cost is a lower bound,
    /// and with leakage tracked the bound needs three steps.
    fn may_terminate(&self, run: &EpisodeRun, fidelity: f64) -> Result<bool> {
        if self.tracks_leakage() && run.step < 3 {
            return Ok(false);
        }
        let traj = self.realized_trajectory(run)?;
        let partial =
            CostBreakdown::from_parts(&self.config.weights, fidelity, 0.0, boundary_values(&traj).total(), traj.duration_us());
        Ok(partial.total <= self.config.cost_threshold)
    }

    fn apply_noise(&self, run: &mut EpisodeRun, commanded: &ControlKnobs<f64>) -> (ControlKnobs<f64>, f64) {
        let noise = &self.config.noise;
        if noise.is_noiseless() {
            return (*commanded, self.model.eta);
        }
        // Same draw order as NoiseModel::perturb_with_rng.
        let d = noise.sample_step::<f64, _>(&mut run.noise_rng);
        let de = match noise.eta_noise {
            EtaNoise::PerStep => d.eta,
            EtaNoise::PerEpisode => *run.episode_eta.get_or_insert(d.eta),
        };
        let a = commanded.amplitudes();
        (commanded.with_amplitudes(std::array::from_fn(|k| a[k] + d.amplitudes[k])), self.model.eta + de)
    }

    /// Runs `policy` to the end of an episode, returning the commanded
    /// (pre-noise) trajectory and the terminal cost.
    pub fn rollout(&self, episode_index: u64, mut policy: impl FnMut(&EnvState) -> Vec<f64>) -> Result<Rollout> {
        let mut run = self.reset(episode_index);
        let mut state = self.observe(&run);
        let mut ret = 0.0;
        loop {
            let action = policy(&state);
            let r = self.step(&mut run, &action)?;
            ret += r.reward;
            state = r.state;
            if let Some(cost) = r.cost {
                return Ok(Rollout {
                    commanded: ControlTrajectory::new(self.config.dt_ns, run.proposed.clone())?,
                    realized: self.realized_trajectory(&run)?,
                    etas: run.etas.clone(),
                    cost,
                    fidelity: r.fidelity,
                    episode_return: ret,
                });
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Rollout {
    pub commanded: Trajectory,
    pub realized: Trajectory,
    pub etas: Vec<f64>,
    pub cost: CostBreakdown<f64>,
    pub fidelity: f64,
    pub episode_return: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_scaling() {
        let k = action_to_knobs(&[1.0, -1.0, 0.5, 2.0, -3.0, -1.0, 0.0]);
        assert_eq!(k.to_array()[..5], [20.0, -20.0, 10.0, 20.0, -20.0]);
        assert_eq!(k.phi1, 0.0);
        assert!((k.phi2 - std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn leakage_needs_full_space() {
        let cfg = EnvConfig { space: Space::Qubit, ..EnvConfig::default() };
        assert!(cfg.validate().is_err());
        assert!(EnvConfig { leakage: false, ..cfg }.validate().is_ok());
    }
}
