//! Time-ordered propagation, gate fidelity and the exact leakage oracle.

use serde::{Deserialize, Serialize};

use crate::control::{ControlTrajectory, NoiseModel};
use crate::error::{Error, Result};
use crate::gmon::{ControlKnobs, GmonModel};
use crate::linalg::CMatrix;
use crate::qops::SubspaceLayout;
use crate::scalar::Real;
use crate::tswt;

/// Hilbert space the Schrödinger equation is solved in.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    /// Two three-level modes (9 states).
    #[default]
    Full,
    /// Projected two-qubit Hamiltonian (4 states).
    Qubit,
}

impl Space {
    pub fn dim(self) -> usize {
        match self {
            Space::Full => 9,
            Space::Qubit => 4,
        }
    }
}

/// Basis in which a propagator is reported.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    #[default]
    Bare,
    /// Conjugated by the transformation generators at the end points.
    Dressed,
}

#[derive(Clone, Debug)]
pub struct PropagationResult<T: Real> {
    pub unitary: CMatrix<T>,
    pub per_step_unitaries: Option<Vec<CMatrix<T>>>,
    pub frame: Frame,
    pub space: Space,
}

/// Hamiltonian of one step in the chosen space.
pub fn step_hamiltonian<T: Real>(knobs: &ControlKnobs<T>, eta_mhz: T, model: &GmonModel<T>, space: Space) -> Result<CMatrix<T>> {
    let h = match space {
        Space::Full => model.assemble_h_with_eta(knobs, eta_mhz)?,
        Space::Qubit => model.project_to_qubits(knobs)?,
    };
    if !h.is_finite() {
        return Err(Error::NonFinite("step Hamiltonian".into()));
    }
    Ok(h)
}

/// `exp(−i H Δt)` for one step.
pub fn step_unitary<T: Real>(knobs: &ControlKnobs<T>, eta_mhz: T, dt_us: T, model: &GmonModel<T>, space: Space) -> Result<CMatrix<T>> {
    step_hamiltonian(knobs, eta_mhz, model, space)?.expm_hermitian(dt_us)
}

/// `U = Π_k exp(−i H(t_k) Δt)` with later steps multiplied on the left.
/// With a noise model the trajectory is perturbed (from the model's own
/// seed) before exponentiation.
pub fn propagate<T: Real>(
    traj: &ControlTrajectory<T>,
    model: &GmonModel<T>,
    noise: Option<&NoiseModel>,
    space: Space,
) -> Result<PropagationResult<T>> {
    match noise {
        Some(n) => {
            let (noisy, etas) = n.perturb(traj, model.eta);
            propagate_with_etas(&noisy, model, &etas, space, false)
        }
        None => propagate_with_etas(traj, model, &vec![model.eta; traj.len()], space, false),
    }
}

/// Propagation with an explicit per-step anharmonicity, optionally keeping
/// every step's unitary.
pub fn propagate_with_etas<T: Real>(
    traj: &ControlTrajectory<T>,
    model: &GmonModel<T>,
    etas: &[T],
    space: Space,
    keep_steps: bool,
) -> Result<PropagationResult<T>> {
    if etas.len() != traj.len() {
        return Err(Error::Dimension(format!("{} anharmonicity values for {} steps", etas.len(), traj.len())));
    }
    let dt = traj.dt_us();
    let mut u = CMatrix::identity(space.dim());
    let mut steps = keep_steps.then(|| Vec::with_capacity(traj.len()));
    for (k, eta) in traj.steps().iter().zip(etas) {
        let s = step_unitary(k, *eta, dt, model, space)?;
        u = s.matmul(&u);
        if let Some(v) = steps.as_mut() {
            v.push(s);
        }
    }
    Ok(PropagationResult { unitary: u, per_step_unitaries: steps, frame: Frame::Bare, space })
}

/// Ω₀ block of a full-space operator; 4×4 inputs are returned unchanged.
pub fn computational_block<T: Real>(u: &CMatrix<T>, layout: &SubspaceLayout<T>) -> Result<CMatrix<T>> {
    match (u.rows(), u.cols()) {
        (4, 4) => Ok(u.clone()),
        (9, 9) => Ok(u.submatrix(&layout.omega0, &layout.omega0)),
        (r, c) => Err(Error::Dimension(format!("expected a 4x4 or 9x9 operator, got {r}x{c}"))),
    }
}

/// `|Tr(U†V)|²/16`, insensitive to global phase.
pub fn gate_fidelity<T: Real>(u: &CMatrix<T>, target: &CMatrix<T>) -> Result<T> {
    for m in [u, target] {
        if m.rows() != 4 || m.cols() != 4 {
            return Err(Error::Dimension(format!("gate fidelity needs 4x4 operators, got {}x{}", m.rows(), m.cols())));
        }
    }
    let mut tr = crate::linalg::C::new(T::zero(), T::zero());
    for i in 0..4 {
        for k in 0..4 {
            tr = tr + u[(k, i)].conj() * target[(k, i)];
        }
    }
    Ok((tr.norm_sqr() / T::lit(16.0)).min(T::one()))
}

/// Amplitude and population that left Ω₀, per computational basis input.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LeakageReport<T: Real> {
    /// `max_m Σ_{l∉Ω₀} |U_lm|`.
    pub max_amplitude: T,
    pub mean_amplitude: T,
    /// `max_m Σ_{l∉Ω₀} |U_lm|²`.
    pub max_population: T,
    pub mean_population: T,
}

/// Leakage of a full-space propagator.
pub fn leakage_of_unitary<T: Real>(u: &CMatrix<T>, layout: &SubspaceLayout<T>) -> LeakageReport<T> {
    let outside: Vec<usize> = (0..layout.dim()).filter(|i| !layout.omega0.contains(i)).collect();
    let mut report = LeakageReport::<T>::default();
    let n = T::lit(layout.omega0.len() as f64);
    for &m in &layout.omega0 {
        let amp = outside.iter().map(|&l| u[(l, m)].norm()).fold(T::zero(), |a, b| a + b);
        let pop = outside.iter().map(|&l| u[(l, m)].norm_sqr()).fold(T::zero(), |a, b| a + b);
        report.max_amplitude = report.max_amplitude.max(amp);
        report.max_population = report.max_population.max(pop);
        report.mean_amplitude = report.mean_amplitude + amp / n;
        report.mean_population = report.mean_population + pop / n;
    }
    report
}

/// `e^{−S(T)} U e^{S(0)}`.
pub fn dressed_unitary<T: Real>(u: &CMatrix<T>, s_start: &CMatrix<T>, s_end: &CMatrix<T>) -> Result<CMatrix<T>> {
    let enter = s_start.expm_anti_hermitian()?;
    let leave = (-s_end).expm_anti_hermitian()?;
    Ok(leave.matmul(u).matmul(&enter))
}

/// Noiseless full-space propagator in the requested frame.
pub fn full_unitary_in_frame<T: Real>(traj: &ControlTrajectory<T>, model: &GmonModel<T>, frame: Frame) -> Result<CMatrix<T>> {
    let u = propagate(traj, model, None, Space::Full)?.unitary;
    match frame {
        Frame::Bare => Ok(u),
        Frame::Dressed => {
            let frames = tswt::trajectory_frames(traj, model)?;
            let first = frames.first().expect("frames nonempty").generator();
            let last = frames.last().expect("frames nonempty").generator();
            dressed_unitary(&u, &first, &last)
        }
    }
}

/// Exact leakage out of Ω₀ for a noiseless trajectory.
pub fn exact_leakage<T: Real>(traj: &ControlTrajectory<T>, model: &GmonModel<T>, frame: Frame) -> Result<LeakageReport<T>> {
    let u = full_unitary_in_frame(traj, model, frame)?;
    Ok(leakage_of_unitary(&u, &model.layout))
}

/// `1 − σ_min` of the Ω₀ block: zero exactly when nothing leaks.
pub fn qubit_block_unitarity_defect<T: Real>(u: &CMatrix<T>, layout: &SubspaceLayout<T>) -> Result<T> {
    if u.rows() != layout.dim() || u.cols() != layout.dim() {
        return Err(Error::Dimension("expected a full-space operator".into()));
    }
    let block = u.submatrix(&layout.omega0, &layout.omega0);
    let smin = block.singular_values().first().copied().unwrap_or(T::zero());
    Ok((T::one() - smin).max(T::zero()).min(T::one()))
}
