//! Piecewise-constant control trajectories, the two-pole smoothing filter,
//! Gaussian control noise and the boundary penalty inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmon::ControlKnobs;
use crate::linalg::C;
use crate::scalar::Real;

pub const TRAJECTORY_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_DT_NS: f64 = 1.0;
pub const DEFAULT_HORIZON: usize = 100;
pub const DEFAULT_BANDWIDTH_MHZ: f64 = 10.0;

/// Sequence of knob settings, each held for `dt_ns`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlTrajectory<T: Real> {
    dt_ns: T,
    steps: Vec<ControlKnobs<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "")]
struct TrajectoryFile<T: Real> {
    dt_ns: T,
    version: u32,
    steps: Vec<ControlKnobs<T>>,
}

impl<T: Real> ControlTrajectory<T> {
    pub fn new(dt_ns: T, steps: Vec<ControlKnobs<T>>) -> Result<Self> {
        if !(dt_ns > T::zero()) || !dt_ns.is_finite() {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt_ns} ns")));
        }
        if steps.is_empty() {
            return Err(Error::InvalidArgument("trajectory needs at least one step".into()));
        }
        if let Some(k) = steps.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("trajectory step {k}")));
        }
        Ok(Self { dt_ns, steps })
    }

    pub fn constant(knobs: ControlKnobs<T>, n_steps: usize, dt_ns: T) -> Result<Self> {
        Self::new(dt_ns, vec![knobs; n_steps])
    }

    pub fn zeros(n_steps: usize, dt_ns: T) -> Result<Self> {
        Self::constant(ControlKnobs::zero(), n_steps, dt_ns)
    }

    pub fn dt_ns(&self) -> T {
        self.dt_ns
    }

    pub fn dt_us(&self) -> T {
        self.dt_ns / T::lit(1000.0)
    }

    pub fn steps(&self) -> &[ControlKnobs<T>] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn duration_ns(&self) -> T {
        self.dt_ns * T::lit(self.steps.len() as f64)
    }

    pub fn duration_us(&self) -> T {
        self.duration_ns() / T::lit(1000.0)
    }

    /// First `n` steps.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        Self::new(self.dt_ns, self.steps[..n.min(self.steps.len())].to_vec())
    }

    /// `self` followed by `other`; both must share the same step size.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.dt_ns != other.dt_ns {
            return Err(Error::InvalidArgument("cannot join trajectories with different time steps".into()));
        }
        let mut steps = self.steps.clone();
        steps.extend_from_slice(&other.steps);
        Self::new(self.dt_ns, steps)
    }

    pub fn map_steps(&self, f: impl FnMut(&ControlKnobs<T>) -> ControlKnobs<T>) -> Result<Self> {
        Self::new(self.dt_ns, self.steps.iter().map(f).collect())
    }

    /// Row-major `[g, δ₁, δ₂, f₁, f₂, φ₁, φ₂]` per step.
    pub fn flatten(&self) -> Vec<T> {
        self.steps.iter().flat_map(|s| s.to_array()).collect()
    }

    pub fn from_flat(dt_ns: T, params: &[T]) -> Result<Self> {
        if params.is_empty() || !params.len().is_multiple_of(ControlKnobs::<T>::LEN) {
            return Err(Error::Dimension(format!(
                "flattened trajectory length {} is not a positive multiple of {}",
                params.len(),
                ControlKnobs::<T>::LEN
            )));
        }
        let steps = params
            .chunks_exact(ControlKnobs::<T>::LEN)
            .map(|c| ControlKnobs::from_array([c[0], c[1], c[2], c[3], c[4], c[5], c[6]]))
            .collect();
        Self::new(dt_ns, steps)
    }

    pub fn to_json(&self) -> String {
        let file = TrajectoryFile { dt_ns: self.dt_ns, version: TRAJECTORY_FORMAT_VERSION, steps: self.steps.clone() };
        serde_json::to_string_pretty(&file).expect("trajectory serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TrajectoryFile<T> = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if file.version != TRAJECTORY_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported trajectory version {} (expected {TRAJECTORY_FORMAT_VERSION})",
                file.version
            )));
        }
        Self::new(file.dt_ns, file.steps)
    }
}

/// Coefficients of `c_n = a₁ x_n − b₁ c_{n−1} − b₂ c_{n−2}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FilterConfig<T: Real> {
    pub bandwidth_mhz: T,
    pub sample_rate_mhz: T,
    pub alpha: T,
    pub a1: T,
    pub b1: T,
    pub b2: T,
}

impl<T: Real> FilterConfig<T> {
    pub fn new(bandwidth_mhz: T, dt_ns: T) -> Result<Self> {
        if !(dt_ns > T::zero()) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt_ns} ns")));
        }
        let sample_rate_mhz = T::lit(1000.0) / dt_ns;
        if !(bandwidth_mhz > T::zero()) || !(bandwidth_mhz <= sample_rate_mhz / T::lit(2.0)) {
            return Err(Error::InvalidArgument(format!(
                "filter bandwidth {bandwidth_mhz} MHz must lie in (0, {}] MHz",
                sample_rate_mhz / T::lit(2.0)
            )));
        }
        let alpha = (-T::PI() * bandwidth_mhz / sample_rate_mhz).exp();
        let one_minus = T::one() - alpha;
        Ok(Self {
            bandwidth_mhz,
            sample_rate_mhz,
            alpha,
            a1: one_minus * one_minus,
            b1: -(T::lit(2.0) * alpha),
            b2: alpha * alpha,
        })
    }

    /// Magnitude response at `freq_mhz`.
    pub fn gain(&self, freq_mhz: T) -> Result<T> {
        let nyquist = self.sample_rate_mhz / T::lit(2.0);
        if !(freq_mhz >= T::zero() && freq_mhz <= nyquist) {
            return Err(Error::InvalidArgument(format!("frequency {freq_mhz} MHz outside [0, {nyquist}] MHz")));
        }
        let w = T::two_pi() * freq_mhz / self.sample_rate_mhz;
        let z1 = C::new(w.cos(), -w.sin());
        let z2 = z1 * z1;
        let den = C::new(T::one(), T::zero()) + z1 * self.b1 + z2 * self.b2;
        Ok(self.a1 / den.norm())
    }
}

/// One application of the recurrence to the amplitude knobs; phases of the
/// proposal pass through unchanged.
pub fn filter_step<T: Real>(
    proposed: &ControlKnobs<T>,
    prev: &ControlKnobs<T>,
    prev2: &ControlKnobs<T>,
    cfg: &FilterConfig<T>,
) -> ControlKnobs<T> {
    let x = proposed.amplitudes();
    let p1 = prev.amplitudes();
    let p2 = prev2.amplitudes();
    let mut out = [T::zero(); 5];
    for k in 0..5 {
        out[k] = cfg.a1 * x[k] - cfg.b1 * p1[k] - cfg.b2 * p2[k];
    }
    proposed.with_amplitudes(out)
}

/// Running filter state with zero initial history.
#[derive(Clone, Debug)]
pub struct ControlFilter<T: Real> {
    cfg: FilterConfig<T>,
    prev: ControlKnobs<T>,
    prev2: ControlKnobs<T>,
}

impl<T: Real> ControlFilter<T> {
    pub fn new(cfg: FilterConfig<T>) -> Self {
        Self { cfg, prev: ControlKnobs::zero(), prev2: ControlKnobs::zero() }
    }

    pub fn config(&self) -> &FilterConfig<T> {
        &self.cfg
    }

    pub fn push(&mut self, proposed: &ControlKnobs<T>) -> ControlKnobs<T> {
        let out = filter_step(proposed, &self.prev, &self.prev2, &self.cfg);
        self.prev2 = self.prev;
        self.prev = out;
        out
    }
}

/// Filters a whole trajectory starting from rest.
pub fn filter_trajectory<T: Real>(traj: &ControlTrajectory<T>, cfg: &FilterConfig<T>) -> Result<ControlTrajectory<T>> {
    let mut f = ControlFilter::new(*cfg);
    traj.map_steps(|s| f.push(s))
}

/// How anharmonicity noise is drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaNoise {
    /// Fresh draw every time step.
    #[default]
    PerStep,
    /// One draw per trajectory realization.
    PerEpisode,
}

/// Zero-mean Gaussian noise of standard deviation `sigma_mhz` on η, g, δ₁,
/// δ₂, f₁, f₂. Phases are never perturbed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma_mhz: f64,
    pub seed: u64,
    #[serde(default)]
    pub eta_noise: EtaNoise,
}

/// One draw of the six noisy channels, in MHz.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NoiseDraw<T: Real> {
    pub eta: T,
    /// `[δg, δδ₁, δδ₂, δf₁, δf₂]`.
    pub amplitudes: [T; 5],
}

impl NoiseModel {
    pub fn new(sigma_mhz: f64, seed: u64) -> Result<Self> {
        if !(sigma_mhz >= 0.0) || !sigma_mhz.is_finite() {
            return Err(Error::InvalidArgument(format!("noise sigma must be ≥ 0, got {sigma_mhz}")));
        }
        Ok(Self { sigma_mhz, seed, eta_noise: EtaNoise::PerStep })
    }

    pub fn noiseless() -> Self {
        Self { sigma_mhz: 0.0, seed: 0, eta_noise: EtaNoise::PerStep }
    }

    pub fn is_noiseless(&self) -> bool {
        self.sigma_mhz == 0.0
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    /// Independent stream `stream` of this model's seed.
    pub fn rng_stream(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = self.rng();
        rng.set_stream(stream);
        rng
    }

    /// Draws the six channels for one time step. The draw order is fixed:
    /// η, g, δ₁, δ₂, f₁, f₂.
    pub fn sample_step<T: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> NoiseDraw<T> {
        let mut draw = || T::lit(self.sigma_mhz * rng.sample::<f64, _>(StandardNormal));
        let eta = draw();
        let amplitudes = [draw(), draw(), draw(), draw(), draw()];
        NoiseDraw { eta, amplitudes }
    }

    /// Perturbed trajectory and per-step anharmonicity sequence, drawn from
    /// this model's own seed.
    pub fn perturb<T: Real>(&self, traj: &ControlTrajectory<T>, eta_mhz: T) -> (ControlTrajectory<T>, Vec<T>) {
        self.perturb_with_rng(traj, eta_mhz, &mut self.rng())
    }

    pub fn perturb_with_rng<T: Real, R: Rng + ?Sized>(
        &self,
        traj: &ControlTrajectory<T>,
        eta_mhz: T,
        rng: &mut R,
    ) -> (ControlTrajectory<T>, Vec<T>) {
        if self.is_noiseless() {
            return (traj.clone(), vec![eta_mhz; traj.len()]);
        }
        let mut etas = Vec::with_capacity(traj.len());
        let mut episode_eta = None;
        let steps = traj
            .steps()
            .iter()
            .map(|s| {
                let d = self.sample_step::<T, R>(rng);
                let de = match self.eta_noise {
                    EtaNoise::PerStep => d.eta,
                    EtaNoise::PerEpisode => *episode_eta.get_or_insert(d.eta),
                };
                etas.push(eta_mhz + de);
                let a = s.amplitudes();
                s.with_amplitudes(std::array::from_fn(|k| a[k] + d.amplitudes[k]))
            })
            .collect();
        let out = ControlTrajectory { dt_ns: traj.dt_ns, steps };
        (out, etas)
    }
}

/// Squared boundary amplitudes entering the μ penalty, in MHz².
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct BoundaryValues<T: Real> {
    pub g0: T,
    pub gt: T,
    pub f0_sq_sum: T,
    pub ft_sq_sum: T,
}

impl<T: Real> BoundaryValues<T> {
    pub fn total(&self) -> T {
        self.g0 + self.gt + self.f0_sq_sum + self.ft_sq_sum
    }
}

pub fn boundary_values<T: Real>(traj: &ControlTrajectory<T>) -> BoundaryValues<T> {
    let first = traj.steps.first().expect("trajectory is nonempty");
    let last = traj.steps.last().expect("trajectory is nonempty");
    BoundaryValues {
        g0: first.g * first.g,
        gt: last.g * last.g,
        f0_sq_sum: first.f1 * first.f1 + first.f2 * first.f2,
        ft_sq_sum: last.f1 * last.f1 + last.f2 * last.f2,
    }
}

/// Random smooth trajectory whose amplitude knobs are sums of `components`
/// sinusoids with frequencies in `[0, bandwidth_mhz]` and peak value at most
/// `eps_mhz`. Drive phases are random constants.
pub fn random_band_limited<T: Real, R: Rng + ?Sized>(
    n_steps: usize,
    dt_ns: T,
    bandwidth_mhz: f64,
    eps_mhz: f64,
    components: usize,
    rng: &mut R,
) -> Result<ControlTrajectory<T>> {
    if components == 0 {
        return Err(Error::InvalidArgument("need at least one frequency component".into()));
    }
    let tau = std::f64::consts::TAU;
    let mut series = Vec::with_capacity(5);
    for _ in 0..5 {
        let weights: Vec<f64> = (0..components).map(|_| rng.random::<f64>()).collect();
        let total: f64 = weights.iter().sum::<f64>().max(f64::MIN_POSITIVE);
        let terms: Vec<(f64, f64, f64)> = weights
            .iter()
            .map(|w| (eps_mhz * w / total, bandwidth_mhz * rng.random::<f64>(), tau * rng.random::<f64>()))
            .collect();
        series.push(terms);
    }
    let p1 = tau * rng.random::<f64>();
    let p2 = tau * rng.random::<f64>();
    let dt_us = dt_ns.as_f64() / 1000.0;
    let steps = (0..n_steps)
        .map(|k| {
            let t = (k as f64 + 0.5) * dt_us;
            let a: [T; 5] = std::array::from_fn(|c| {
                T::lit(series[c].iter().map(|&(amp, f, ph)| amp * (tau * f * t + ph).cos()).sum())
            });
            ControlKnobs::from_array([a[0], a[1], a[2], a[3], a[4], T::lit(p1), T::lit(p2)])
        })
        .collect();
    ControlTrajectory::new(dt_ns, steps)
}
