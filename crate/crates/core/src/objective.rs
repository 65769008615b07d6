//! The UFO cost and its split into per-step rewards.

use serde::{Deserialize, Serialize};

use crate::control::{boundary_values, ControlTrajectory};
use crate::dynamics::{self, Space};
use crate::error::{Error, Result};
use crate::gmon::GmonModel;
use crate::linalg::CMatrix;
use crate::scalar::Real;
use crate::tswt::{self, GapMode, LeakageAccumulator, LeakageLedger};

/// Weights `(χ, β, μ, κ)`; κ is per µs of gate time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UfoWeights {
    pub chi: f64,
    pub beta: f64,
    pub mu: f64,
    pub kappa: f64,
}

impl Default for UfoWeights {
    fn default() -> Self {
        Self { chi: 10.0, beta: 10.0, mu: 0.2, kappa: 0.1 }
    }
}

impl UfoWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("chi", self.chi), ("beta", self.beta), ("mu", self.mu), ("kappa", self.kappa)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("weight {name} must be finite and ≥ 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CostBreakdown<T: Real> {
    pub infidelity_term: T,
    pub leakage_term: T,
    pub boundary_term: T,
    pub time_term: T,
    pub total: T,
}

impl<T: Real> CostBreakdown<T> {
    /// Assembles the four weighted terms. `boundary` is in MHz² and
    /// `duration_us` in µs.
    pub fn from_parts(weights: &UfoWeights, fidelity: T, l_tot: T, boundary: T, duration_us: T) -> Self {
        let w = |x: f64| T::lit(x);
        let infidelity_term = w(weights.chi) * (T::one() - fidelity).max(T::zero());
        let leakage_term = w(weights.beta) * l_tot;
        let boundary_term = w(weights.mu) * boundary;
        let time_term = w(weights.kappa) * duration_us;
        Self {
            infidelity_term,
            leakage_term,
            boundary_term,
            time_term,
            total: infidelity_term + leakage_term + boundary_term + time_term,
        }
    }
}

/// Cost of a trajectory. The fidelity comes from noiseless propagation in
/// `space`; the leakage term uses `ledger` when given and is zero otherwise.
pub fn ufo_cost<T: Real>(
    traj: &ControlTrajectory<T>,
    model: &GmonModel<T>,
    target: &CMatrix<T>,
    weights: &UfoWeights,
    ledger: Option<&LeakageLedger<T>>,
    space: Space,
) -> Result<CostBreakdown<T>> {
    let u = dynamics::propagate(traj, model, None, space)?.unitary;
    let block = dynamics::computational_block(&u, &model.layout)?;
    let fidelity = dynamics::gate_fidelity(&block, target)?;
    let l_tot = ledger.map_or(T::zero(), |l| l.l_tot);
    Ok(CostBreakdown::from_parts(weights, fidelity, l_tot, boundary_values(traj).total(), traj.duration_us()))
}

/// Everything needed to score a trajectory in one call.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostOptions {
    pub space: Space,
    /// Evaluate the leakage bound (needs at least three steps).
    pub leakage: bool,
    pub gap_mode: GapMode,
}

impl Default for CostOptions {
    fn default() -> Self {
        Self { space: Space::Full, leakage: true, gap_mode: GapMode::Constant }
    }
}

/// Cost together with the ledger and fidelity it was built from.
#[derive(Clone, Debug)]
pub struct Evaluation<T: Real> {
    pub cost: CostBreakdown<T>,
    pub fidelity: T,
    pub ledger: Option<LeakageLedger<T>>,
}

pub fn evaluate<T: Real>(
    traj: &ControlTrajectory<T>,
    model: &GmonModel<T>,
    target: &CMatrix<T>,
    weights: &UfoWeights,
    opts: &CostOptions,
) -> Result<Evaluation<T>> {
    let ledger = if opts.leakage && traj.len() >= 3 {
        let frames = tswt::trajectory_frames(traj, model)?;
        Some(tswt::leakage_bound(&frames, traj.dt_us(), &model.layout, opts.gap_mode)?)
    } else {
        None
    };
    let u = dynamics::propagate(traj, model, None, opts.space)?.unitary;
    let fidelity = dynamics::gate_fidelity(&dynamics::computational_block(&u, &model.layout)?, target)?;
    let l_tot = ledger.map_or(T::zero(), |l| l.l_tot);
    let cost = CostBreakdown::from_parts(weights, fidelity, l_tot, boundary_values(traj).total(), traj.duration_us());
    Ok(Evaluation { cost, fidelity, ledger })
}

/// True iff the cost is satisfiable.
pub fn terminal_check<T: Real>(cost: &CostBreakdown<T>, threshold: T) -> bool {
    cost.total <= threshold
}

/// When rewards are paid out.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Time and leakage-integral increments every step, the rest at the end.
    #[default]
    Stepwise,
    /// Everything at the last step.
    Terminal,
}

/// Splits `−total cost` of an episode into per-step rewards so that the
/// undiscounted return equals `−total` exactly: every step pays `κΔt` and
/// the newly final part of the leakage integral, and the terminal step pays
/// whatever remains.
#[derive(Clone, Debug)]
pub struct StepwiseReward<T: Real> {
    weights: UfoWeights,
    mode: RewardMode,
    dt_us: T,
    leakage: Option<LeakageAccumulator<T>>,
    paid: T,
    steps: usize,
}

impl<T: Real> StepwiseReward<T> {
    /// `leakage` carries the model whose Hamiltonians will be pushed, or
    /// `None` when the episode is scored without a leakage term.
    pub fn new(weights: UfoWeights, mode: RewardMode, dt_us: T, leakage: Option<(GmonModel<T>, GapMode)>) -> Self {
        Self {
            weights,
            mode,
            dt_us,
            leakage: leakage.map(|(m, g)| LeakageAccumulator::new(m, dt_us, g)),
            paid: T::zero(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Cost already handed out as negative reward.
    pub fn paid(&self) -> T {
        self.paid
    }

    pub fn leakage(&self) -> Option<&LeakageAccumulator<T>> {
        self.leakage.as_ref()
    }

    /// Reward for one non-terminal step. `h_full` is the realized
    /// full-space Hamiltonian of the step (ignored without a leakage term).
    pub fn step(&mut self, h_full: Option<CMatrix<T>>) -> Result<T> {
        self.steps += 1;
        let mut cost = T::zero();
        if let Some(acc) = self.leakage.as_mut() {
            let h = h_full.ok_or_else(|| Error::InvalidArgument("leakage accounting needs the step Hamiltonian".into()))?;
            let gained = acc.push(h)?;
            cost = cost + T::lit(self.weights.beta) * gained;
        }
        cost = cost + T::lit(self.weights.kappa) * self.dt_us;
        match self.mode {
            RewardMode::Stepwise => {
                self.paid = self.paid + cost;
                Ok(-cost)
            }
            RewardMode::Terminal => Ok(T::zero()),
        }
    }

    /// Ledger of everything pushed so far, if leakage is tracked and at
    /// least three steps exist.
    pub fn ledger(&self) -> Result<Option<LeakageLedger<T>>> {
        match &self.leakage {
            Some(acc) if acc.len() >= 3 => Ok(Some(acc.finish()?)),
            _ => Ok(None),
        }
    }

    /// Final reward given the episode's total cost.
    pub fn terminal(&mut self, total_cost: T) -> T {
        let r = -(total_cost - self.paid);
        self.paid = total_cost;
        r
    }
}
