//! Direct Adam descent on the flattened control trajectory with
//! finite-difference gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use ufo_core::control::{boundary_values, ControlTrajectory, NoiseModel};
use ufo_core::dynamics::{self, Space};
use ufo_core::gmon::{ControlKnobs, GmonModel, DEFAULT_ETA_MHZ, KNOB_RANGE_MHZ};
use ufo_core::objective::{self, CostBreakdown, CostOptions, UfoWeights};
use ufo_core::tswt::GapMode;
use ufo_core::{Matrix, Trajectory};

use crate::adam::AdamState;
use crate::error::{LearnError, Result};

/// Costs above this abort the run.
pub const DIVERGENCE_COST: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdConfig {
    pub lr: f64,
    pub iters: usize,
    /// Finite-difference step in MHz (radians for phases).
    pub fd_step: f64,
    pub n_steps: usize,
    pub dt_ns: f64,
    pub eta_mhz: f64,
    pub space: Space,
    pub leakage: bool,
    pub gap_mode: GapMode,
    pub weights: UfoWeights,
    /// Initial amplitudes are uniform in `±init_scale_mhz`.
    pub init_scale_mhz: f64,
    /// Noise realizations averaged per cost evaluation; zero is noiseless.
    pub noise_samples: usize,
    pub noise: NoiseModel,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            iters: 500,
            fd_step: 1e-3,
            n_steps: 60,
            dt_ns: 1.0,
            eta_mhz: DEFAULT_ETA_MHZ,
            space: Space::Qubit,
            leakage: false,
            gap_mode: GapMode::Constant,
            weights: UfoWeights::default(),
            init_scale_mhz: 5.0,
            noise_samples: 0,
            noise: NoiseModel::noiseless(),
            seed: 0,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LearnError::Config(m));
        if !(self.lr >= 0.0) || !(self.fd_step > 0.0) {
            return bad("lr must be ≥ 0 and fd_step > 0".into());
        }
        if self.n_steps == 0 || !(self.dt_ns > 0.0) {
            return bad("n_steps and dt_ns must be positive".into());
        }
        if self.leakage && self.space == Space::Qubit {
            return bad("the leakage term needs the full space".into());
        }
        if self.leakage && self.n_steps < 3 {
            return bad("the leakage term needs at least three steps".into());
        }
        self.weights.validate()?;
        Ok(())
    }
}

/// UFO cost of a flattened trajectory for a fixed target.
#[derive(Clone, Debug)]
pub struct TrajectoryObjective {
    pub config: SgdConfig,
    pub model: GmonModel<f64>,
    pub target: Matrix,
}

impl TrajectoryObjective {
    pub fn new(config: SgdConfig, target: Matrix) -> Result<Self> {
        config.validate()?;
        let model = GmonModel::new(config.eta_mhz)?;
        Ok(Self { config, model, target })
    }

    pub fn num_params(&self) -> usize {
        self.config.n_steps * ControlKnobs::<f64>::LEN
    }

    pub fn trajectory(&self, params: &[f64]) -> Result<Trajectory> {
        Ok(ControlTrajectory::from_flat(self.config.dt_ns, params)?)
    }

    fn opts(&self) -> CostOptions {
        CostOptions { space: self.config.space, leakage: self.config.leakage, gap_mode: self.config.gap_mode }
    }

    pub fn breakdown(&self, params: &[f64]) -> Result<CostBreakdown<f64>> {
        let traj = self.trajectory(params)?;
        Ok(objective::evaluate(&traj, &self.model, &self.target, &self.config.weights, &self.opts())?.cost)
    }

    /// Total cost; in noisy mode the mean over `noise_samples` realizations
    /// with fixed streams, so the same parameters always give the same value.
    pub fn cost(&self, params: &[f64]) -> Result<f64> {
        if self.config.noise_samples == 0 || self.config.noise.is_noiseless() {
            return Ok(self.breakdown(params)?.total);
        }
        let traj = self.trajectory(params)?;
        let noise = self.config.noise;
        let mut total = 0.0;
        for s in 0..self.config.noise_samples {
            let (noisy, etas) = noise.perturb_with_rng(&traj, self.model.eta, &mut noise.rng_stream(s as u64));
            let u = dynamics::propagate_with_etas(&noisy, &self.model, &etas, self.config.space, false)?.unitary;
            let f = dynamics::gate_fidelity(&dynamics::computational_block(&u, &self.model.layout)?, &self.target)?;
            let ledger = if self.config.leakage {
                let hs = noisy
                    .steps()
                    .iter()
                    .zip(&etas)
                    .map(|(k, e)| self.model.assemble_h_with_eta(k, *e))
                    .collect::<ufo_core::Result<Vec<_>>>()?;
                let frames = ufo_core::tswt::frames_from_hamiltonians(&hs, traj.dt_us(), &self.model)?;
                Some(ufo_core::tswt::leakage_bound(&frames, traj.dt_us(), &self.model.layout, self.config.gap_mode)?)
            } else {
                None
            };
            let l = ledger.map_or(0.0, |l| l.l_tot);
            total += CostBreakdown::from_parts(&self.config.weights, f, l, boundary_values(&noisy).total(), traj.duration_us()).total;
        }
        Ok(total / self.config.noise_samples as f64)
    }

    /// Central-difference gradient with step `fd_step` per coordinate.
    pub fn gradient(&self, params: &[f64]) -> Result<Vec<f64>> {
        if params.iter().any(|p| !p.is_finite()) {
            return Err(LearnError::Core(ufo_core::Error::NonFinite("trajectory parameters".into())));
        }
        if self.fast_path() {
            return self.gradient_cached(params);
        }
        let h = self.config.fd_step;
        (0..params.len())
            .into_par_iter()
            .map(|i| {
                let mut p = params.to_vec();
                p[i] = params[i] + h;
                let up = self.cost(&p)?;
                p[i] = params[i] - h;
                let dn = self.cost(&p)?;
                Ok((up - dn) / (2.0 * h))
            })
            .collect()
    }

    /// Forward-difference gradient, used to cross-check the central scheme.
    pub fn gradient_forward(&self, params: &[f64]) -> Result<Vec<f64>> {
        let h = self.config.fd_step;
        let base = self.cost(params)?;
        (0..params.len())
            .into_par_iter()
            .map(|i| {
                let mut p = params.to_vec();
                p[i] += h;
                Ok((self.cost(&p)? - base) / h)
            })
            .collect()
    }

    fn fast_path(&self) -> bool {
        !self.config.leakage && (self.config.noise_samples == 0 || self.config.noise.is_noiseless())
    }

    /// Without leakage or noise a coordinate only changes its own step
    /// unitary, so `U' = S_k U_k' P_k` with cached prefix `P_k` and suffix
    /// `S_k`, and the fidelity only needs `Tr(P_k T† S_k U_k')`.
    fn gradient_cached(&self, params: &[f64]) -> Result<Vec<f64>> {
        let traj = self.trajectory(params)?;
        let space = self.config.space;
        let dt = traj.dt_us();
        let eta = self.model.eta;
        let n = traj.len();
        let units: Vec<Matrix> = traj
            .steps()
            .iter()
            .map(|k| dynamics::step_unitary(k, eta, dt, &self.model, space))
            .collect::<ufo_core::Result<_>>()?;
        let dim = space.dim();
        let mut prefix = Vec::with_capacity(n);
        let mut acc = Matrix::identity(dim);
        for u in &units {
            prefix.push(acc.clone());
            acc = u.matmul(&acc);
        }
        let mut suffix = vec![Matrix::identity(dim); n];
        let mut acc = Matrix::identity(dim);
        for k in (0..n).rev() {
            suffix[k] = acc.clone();
            acc = acc.matmul(&units[k]);
        }
        // Embed the target so the trace runs over Ω₀ only.
        let proj_target = match space {
            Space::Qubit => self.target.dagger(),
            Space::Full => {
                let omega0 = &self.model.layout.omega0;
                let mut m = Matrix::zeros(dim, dim);
                for (a, &i) in omega0.iter().enumerate() {
                    for (b, &j) in omega0.iter().enumerate() {
                        m[(i, j)] = self.target[(b, a)].conj();
                    }
                }
                m
            }
        };
        let w = self.config.weights;
        let h = self.config.fd_step;
        let len = ControlKnobs::<f64>::LEN;
        let steps = traj.steps().to_vec();
        let duration = traj.duration_us();
        let cost_with = |k: usize, knobs: ControlKnobs<f64>| -> Result<f64> {
            let u = dynamics::step_unitary(&knobs, eta, dt, &self.model, space)?;
            let m = prefix[k].matmul(&proj_target).matmul(&suffix[k]);
            let tr = m.matmul(&u).trace();
            let f = (tr.norm_sqr() / 16.0).min(1.0);
            let mut first = steps[0];
            let mut last = steps[n - 1];
            if k == 0 {
                first = knobs;
            }
            if k == n - 1 {
                last = knobs;
            }
            let b = boundary_pair(&first, &last);
            Ok(CostBreakdown::from_parts(&w, f, 0.0, b, duration).total)
        };
        (0..params.len())
            .into_par_iter()
            .map(|i| {
                let (k, j) = (i / len, i % len);
                let mut a = steps[k].to_array();
                a[j] = params[i] + h;
                let up = cost_with(k, ControlKnobs::from_array(a))?;
                a[j] = params[i] - h;
                let dn = cost_with(k, ControlKnobs::from_array(a))?;
                Ok((up - dn) / (2.0 * h))
            })
            .collect()
    }
}

fn boundary_pair(first: &ControlKnobs<f64>, last: &ControlKnobs<f64>) -> f64 {
    let t = ControlTrajectory::new(1.0, vec![*first, *last]).expect("two finite steps");
    boundary_values(&t).total()
}

/// Seeded initial parameters: amplitudes uniform in `±init_scale_mhz`,
/// phases uniform in `[0, 2π)`.
pub fn initial_params(config: &SgdConfig) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut p = Vec::with_capacity(config.n_steps * ControlKnobs::<f64>::LEN);
    for _ in 0..config.n_steps {
        for _ in 0..ControlKnobs::<f64>::AMPLITUDES {
            p.push(rng.random_range(-config.init_scale_mhz..=config.init_scale_mhz));
        }
        for _ in 0..2 {
            p.push(rng.random_range(0.0..std::f64::consts::TAU));
        }
    }
    p
}

/// Clamps amplitudes to the knob range after each step.
fn project(params: &mut [f64]) {
    let len = ControlKnobs::<f64>::LEN;
    for (i, p) in params.iter_mut().enumerate() {
        if i % len < ControlKnobs::<f64>::AMPLITUDES {
            *p = p.clamp(-KNOB_RANGE_MHZ, KNOB_RANGE_MHZ);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdResult {
    /// Best parameters seen.
    pub params: Vec<f64>,
    pub best_cost: f64,
    /// Cost at every iterate, starting with the initial point.
    pub history: Vec<f64>,
    /// Running minimum of `history`.
    pub best_history: Vec<f64>,
}

/// Generic Adam loop: `cost` and `grad` are queried at every iterate; the
/// best point is retained. With `box_constrain`, amplitudes are clamped to
/// the knob range after every update.
pub fn adam_minimize(
    init: Vec<f64>,
    lr: f64,
    iters: usize,
    box_constrain: bool,
    mut cost: impl FnMut(&[f64]) -> Result<f64>,
    mut grad: impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<SgdResult> {
    if iters == 0 {
        return Err(LearnError::Config("iters must be positive".into()));
    }
    let mut params = init;
    let mut adam = AdamState::new(params.len(), lr);
    let mut best = params.clone();
    let mut best_cost = f64::INFINITY;
    let mut history = Vec::with_capacity(iters + 1);
    let mut best_history = Vec::with_capacity(iters + 1);
    for it in 0..=iters {
        let c = cost(&params)?;
        if !c.is_finite() || c > DIVERGENCE_COST {
            return Err(LearnError::Divergence { iteration: it, cost: c });
        }
        if c < best_cost {
            best_cost = c;
            best.clone_from(&params);
        }
        history.push(c);
        best_history.push(best_cost);
        if it == iters {
            break;
        }
        let g = grad(&params)?;
        adam.update(&mut params, &g)?;
        if box_constrain {
            project(&mut params);
        }
    }
    Ok(SgdResult { params: best, best_cost, history, best_history })
}

/// Adam on the trajectory objective starting from `init`.
pub fn adam_optimize(objective: &TrajectoryObjective, init: Vec<f64>) -> Result<SgdResult> {
    if init.len() != objective.num_params() {
        return Err(LearnError::Shape(format!("{} initial parameters, expected {}", init.len(), objective.num_params())));
    }
    adam_minimize(
        init,
        objective.config.lr,
        objective.config.iters,
        true,
        |p| objective.cost(p),
        |p| objective.gradient(p),
    )
}
