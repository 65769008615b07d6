//! Average gate fidelity of noisy channels and the fidelity spread over
//! noise realizations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{ControlTrajectory, NoiseModel};
use crate::dynamics::{self, Space};
use crate::error::{Error, Result};
use crate::gmon::{single_paulis, GmonModel};
use crate::linalg::{CMatrix, C};
use crate::scalar::Real;

/// A linear map on 4×4 operators.
pub trait Channel<T: Real>: Sync {
    fn apply(&self, x: &CMatrix<T>) -> CMatrix<T>;

    /// `⟨φ|ℰ(|ψ⟩⟨ψ|)|φ⟩` with `φ = target·ψ`.
    fn state_fidelity(&self, psi: &[C<T>], target: &CMatrix<T>) -> T {
        let n = psi.len();
        let rho = CMatrix::from_fn(n, n, |i, j| psi[i] * psi[j].conj());
        let out = self.apply(&rho);
        let phi = matvec(target, psi);
        let mut acc = C::new(T::zero(), T::zero());
        for i in 0..n {
            for j in 0..n {
                acc = acc + phi[i].conj() * out[(i, j)] * phi[j];
            }
        }
        acc.re
    }
}

fn matvec<T: Real>(m: &CMatrix<T>, v: &[C<T>]) -> Vec<C<T>> {
    (0..m.rows())
        .map(|i| (0..m.cols()).fold(C::new(T::zero(), T::zero()), |acc, j| acc + m[(i, j)] * v[j]))
        .collect()
}

/// Empirical ensemble `ℰ(X) = (1/n) Σ_k K_k X K_k†`.
#[derive(Clone, Debug)]
pub struct SampledChannel<T: Real> {
    pub operators: Vec<CMatrix<T>>,
}

impl<T: Real> SampledChannel<T> {
    pub fn new(operators: Vec<CMatrix<T>>) -> Result<Self> {
        let Some(first) = operators.first() else {
            return Err(Error::InvalidArgument("a sampled channel needs at least one operator".into()));
        };
        let d = first.rows();
        if operators.iter().any(|k| k.rows() != d || k.cols() != d) {
            return Err(Error::Dimension("channel operators must share one square shape".into()));
        }
        Ok(Self { operators })
    }

    pub fn unitary(u: CMatrix<T>) -> Self {
        Self { operators: vec![u] }
    }

    pub fn dim(&self) -> usize {
        self.operators[0].rows()
    }

    /// `1 − Tr ℰ(I/d)`: population lost from the block, averaged.
    pub fn trace_defect(&self) -> T {
        let d = T::lit(self.dim() as f64);
        let n = T::lit(self.operators.len() as f64);
        let kept = self
            .operators
            .iter()
            .fold(T::zero(), |acc, k| acc + k.frobenius_norm().powi(2) / d);
        T::one() - kept / n
    }
}

impl<T: Real> Channel<T> for SampledChannel<T> {
    fn apply(&self, x: &CMatrix<T>) -> CMatrix<T> {
        let n = T::lit(self.operators.len() as f64);
        let mut acc = CMatrix::zeros(x.rows(), x.cols());
        for k in &self.operators {
            acc += &k.matmul(x).matmul(&k.dagger());
        }
        acc.scale_real(T::one() / n)
    }

    fn state_fidelity(&self, psi: &[C<T>], target: &CMatrix<T>) -> T {
        let phi = matvec(target, psi);
        let n = T::lit(self.operators.len() as f64);
        let total = self.operators.iter().fold(T::zero(), |acc, k| {
            let kpsi = matvec(k, psi);
            let amp = phi.iter().zip(&kpsi).fold(C::new(T::zero(), T::zero()), |a, (p, q)| a + p.conj() * q);
            acc + amp.norm_sqr()
        });
        total / n
    }
}

/// `ℰ(X) = (1−p)X + p·Tr(X)·I/d`.
#[derive(Clone, Copy, Debug)]
pub struct Depolarizing<T: Real> {
    pub p: T,
    pub dim: usize,
}

impl<T: Real> Channel<T> for Depolarizing<T> {
    fn apply(&self, x: &CMatrix<T>) -> CMatrix<T> {
        let mixed = CMatrix::identity(self.dim).scale(x.trace() * C::new(self.p / T::lit(self.dim as f64), T::zero()));
        x.scale_real(T::one() - self.p) + mixed
    }
}

/// The 16 two-qubit Pauli products `σ_a ⊗ σ_b`, with `Tr(U_j U_k†) = 4δ_jk`.
pub fn two_qubit_paulis<T: Real>() -> Vec<CMatrix<T>> {
    let s = single_paulis::<T>();
    let mut out = Vec::with_capacity(16);
    for a in &s {
        for b in &s {
            out.push(a.kron(b));
        }
    }
    out
}

/// `F̄ = [Σ_j Tr(U U_j† U† ℰ(U_j)) + d²] / (d²(d+1))`. Exact for
/// trace-preserving channels; overestimates when the block leaks.
pub fn average_fidelity_nielsen<T: Real>(channel: &dyn Channel<T>, target: &CMatrix<T>) -> T {
    let d = target.rows();
    let ud = target.dagger();
    let paulis = if d == 4 { two_qubit_paulis() } else { single_paulis().to_vec() };
    let sum = paulis.iter().fold(C::new(T::zero(), T::zero()), |acc, p| {
        acc + target.matmul(&p.dagger()).matmul(&ud).matmul(&channel.apply(p)).trace()
    });
    let d = T::lit(d as f64);
    ((sum.re + d * d) / (d * d * (d + T::one()))).max(T::zero()).min(T::one())
}

/// Closed form for an operator-sum channel: with `M_k = U†K_k`,
/// `F̄ = mean_k [Tr(M_k M_k†) + |Tr M_k|²] / (d(d+1))`. Also valid when the
/// block leaks.
pub fn average_fidelity_kraus<T: Real>(channel: &SampledChannel<T>, target: &CMatrix<T>) -> T {
    let d = T::lit(target.rows() as f64);
    let ud = target.dagger();
    let n = T::lit(channel.operators.len() as f64);
    let total = channel.operators.iter().fold(T::zero(), |acc, k| {
        let m = ud.matmul(k);
        acc + m.frobenius_norm().powi(2) + m.trace().norm_sqr()
    });
    total / (n * d * (d + T::one()))
}

/// Haar-random pure state from a normalized complex Gaussian vector.
pub fn haar_state<T: Real, R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<C<T>> {
    let mut v: Vec<C<T>> = (0..dim)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C::new(T::lit(re), T::lit(im))
        })
        .collect();
    let norm = v.iter().fold(T::zero(), |a, z| a + z.norm_sqr()).sqrt();
    for z in &mut v {
        *z = *z / C::new(norm, T::zero());
    }
    v
}

const HAAR_CHUNK: usize = 1024;

/// Monte-Carlo average of the state fidelity over `n_states` Haar states.
/// Chunks use independent streams of `seed` and are summed in order, so the
/// result does not depend on the thread count.
pub fn average_fidelity_haar_mc<T: Real>(channel: &dyn Channel<T>, target: &CMatrix<T>, n_states: usize, seed: u64) -> T {
    if n_states == 0 {
        return T::zero();
    }
    let d = target.rows();
    let chunks = n_states.div_ceil(HAAR_CHUNK);
    let sums: Vec<T> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = HAAR_CHUNK.min(n_states - c * HAAR_CHUNK);
            (0..count).fold(T::zero(), |acc, _| acc + channel.state_fidelity(&haar_state(d, &mut rng), target))
        })
        .collect();
    sums.into_iter().fold(T::zero(), |a, b| a + b) / T::lit(n_states as f64)
}

/// Per-realization Ω₀ blocks of `traj` under `noise`; sample `i` uses
/// stream `i` of the noise seed.
pub fn sampled_blocks<T: Real>(
    traj: &ControlTrajectory<T>,
    model: &GmonModel<T>,
    noise: &NoiseModel,
    n_samples: usize,
    space: Space,
) -> Result<Vec<CMatrix<T>>> {
    (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let (noisy, etas) = noise.perturb_with_rng(traj, model.eta, &mut noise.rng_stream(i as u64));
            let u = dynamics::propagate_with_etas(&noisy, model, &etas, space, false)?.unitary;
            dynamics::computational_block(&u, &model.layout)
        })
        .collect()
}

pub fn noisy_channel<T: Real>(
    traj: &ControlTrajectory<T>,
    model: &GmonModel<T>,
    noise: &NoiseModel,
    n_samples: usize,
    space: Space,
) -> Result<SampledChannel<T>> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be ≥ 1".into()));
    }
    SampledChannel::new(sampled_blocks(traj, model, noise, n_samples, space)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub space: Space,
    /// Haar states for the Monte-Carlo average; zero skips it.
    pub haar_states: usize,
    pub haar_seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { space: Space::Full, haar_states: 10_000, haar_seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EvaluationReport<T: Real> {
    pub sigma_mhz: f64,
    pub seed: u64,
    pub n_samples: usize,
    /// Mean of the per-realization gate fidelities.
    pub f_mean: T,
    pub f_ave_haar: Option<T>,
    pub f_ave_nielsen: T,
    pub f_ave_kraus: T,
    /// Population variance of the per-realization gate fidelities.
    pub sigma_fidelity: T,
    pub leaked_population: T,
    pub per_sample_fidelities: Vec<T>,
}

/// Mean and population variance, summed in index order.
pub fn mean_and_variance<T: Real>(xs: &[T]) -> (T, T) {
    if xs.is_empty() {
        return (T::zero(), T::zero());
    }
    let n = T::lit(xs.len() as f64);
    let mean = xs.iter().fold(T::zero(), |a, &x| a + x) / n;
    let var = xs.iter().fold(T::zero(), |a, &x| a + (x - mean).powi(2)) / n;
    (mean, var)
}

pub fn fidelity_variance<T: Real>(
    traj: &ControlTrajectory<T>,
    model: &GmonModel<T>,
    target: &CMatrix<T>,
    noise: &NoiseModel,
    n_samples: usize,
    opts: &EvalOptions,
) -> Result<EvaluationReport<T>> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument("fidelity variance needs at least two samples".into()));
    }
    let channel = noisy_channel(traj, model, noise, n_samples, opts.space)?;
    let per_sample_fidelities = channel
        .operators
        .iter()
        .map(|k| dynamics::gate_fidelity(k, target))
        .collect::<Result<Vec<_>>>()?;
    let (f_mean, sigma_fidelity) = mean_and_variance(&per_sample_fidelities);
    let f_ave_haar = (opts.haar_states > 0).then(|| average_fidelity_haar_mc(&channel, target, opts.haar_states, opts.haar_seed));
    Ok(EvaluationReport {
        sigma_mhz: noise.sigma_mhz,
        seed: noise.seed,
        n_samples,
        f_mean,
        f_ave_haar,
        f_ave_nielsen: average_fidelity_nielsen(&channel, target),
        f_ave_kraus: average_fidelity_kraus(&channel, target),
        sigma_fidelity,
        leaked_population: channel.trace_defect().max(T::zero()),
        per_sample_fidelities,
    })
}

/// Robustness threshold and the noise grid it is checked on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobustnessSpec {
    pub epsilon0: f64,
    pub sigma_grid: Vec<f64>,
    pub samples_per_point: usize,
}

impl Default for RobustnessSpec {
    fn default() -> Self {
        Self {
            epsilon0: 0.007,
            sigma_grid: (1..=35).map(|k| k as f64 / 10.0).collect(),
            samples_per_point: 60,
        }
    }
}

impl RobustnessSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon0 > 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon0 must be > 0, got {}", self.epsilon0)));
        }
        if self.sigma_grid.windows(2).any(|w| !(w[0] <= w[1])) || self.sigma_grid.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::InvalidArgument("sigma grid must be sorted and non-negative".into()));
        }
        if self.samples_per_point < 2 {
            return Err(Error::InvalidArgument("samples_per_point must be ≥ 2".into()));
        }
        Ok(())
    }
}

/// `|F̄ − f_ideal| < ε₀`, with F̄ the Pauli-sum average fidelity.
pub fn robustness_check<T: Real>(report: &EvaluationReport<T>, f_ideal: T, spec: &RobustnessSpec) -> bool {
    (report.f_ave_nielsen - f_ideal).abs() < T::lit(spec.epsilon0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::{canonical_gate, CanonicalGate};

    fn random_unitary(rng: &mut ChaCha8Rng) -> CMatrix<f64> {
        let h = CMatrix::from_fn(4, 4, |_, _| C::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
        let h = (&h + &h.dagger()).scale_real(0.5);
        h.expm_hermitian(1.0).unwrap()
    }

    #[test]
    fn depolarizing_exact() {
        let id = CMatrix::<f64>::identity(4);
        for p in [0.0, 0.1, 0.5] {
            let f = average_fidelity_nielsen(&Depolarizing { p, dim: 4 }, &id);
            assert!((f - (1.0 - 0.75 * p)).abs() < 1e-12);
        }
    }

    #[test]
    fn unitary_channel_is_perfect() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_unitary(&mut rng);
        let ch = SampledChannel::unitary(u.clone());
        assert!((average_fidelity_nielsen(&ch, &u) - 1.0).abs() < 1e-12);
        assert!((average_fidelity_kraus(&ch, &u) - 1.0).abs() < 1e-12);
        assert!((ch.state_fidelity(&haar_state(4, &mut rng), &u) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nielsen_equals_kraus_for_unitary_ensembles() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ops: Vec<_> = (0..5).map(|_| random_unitary(&mut rng)).collect();
        let ch = SampledChannel::new(ops).unwrap();
        let target = canonical_gate::<f64>(CanonicalGate::Cz).matrix;
        let n = average_fidelity_nielsen(&ch, &target);
        let k = average_fidelity_kraus(&ch, &target);
        assert!((n - k).abs() < 1e-12, "{n} {k}");
        // Generic application path agrees with the specialized one.
        let psi = haar_state::<f64, _>(4, &mut rng);
        let generic = {
            let rho = CMatrix::from_fn(4, 4, |i, j| psi[i] * psi[j].conj());
            let out = ch.apply(&rho);
            let phi = matvec(&target, &psi);
            (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).fold(C::new(0.0, 0.0), |a, (i, j)| a + phi[i].conj() * out[(i, j)] * phi[j]).re
        };
        assert!((generic - ch.state_fidelity(&psi, &target)).abs() < 1e-12);
    }

    #[test]
    fn haar_states_are_normalized_and_paulis_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = haar_state::<f64, _>(4, &mut rng);
        assert!((v.iter().map(|z| z.norm_sqr()).sum::<f64>() - 1.0).abs() < 1e-14);
        let p = two_qubit_paulis::<f64>();
        for (j, a) in p.iter().enumerate() {
            for (k, b) in p.iter().enumerate() {
                let t = a.matmul(&b.dagger()).trace();
                let expect = if j == k { 4.0 } else { 0.0 };
                assert!((t - C::new(expect, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn variance_helpers_and_robustness() {
        let (m, v) = mean_and_variance(&[1.0, 3.0]);
        assert_eq!((m, v), (2.0, 1.0));
        let (_, v2) = mean_and_variance(&[3.0, 1.0]);
        assert_eq!(v, v2);
        let mut report = EvaluationReport::<f64> {
            sigma_mhz: 1.0,
            seed: 0,
            n_samples: 2,
            f_mean: 0.9,
            f_ave_haar: None,
            f_ave_nielsen: 0.9,
            f_ave_kraus: 0.9,
            sigma_fidelity: 0.0,
            leaked_population: 0.0,
            per_sample_fidelities: vec![0.9, 0.9],
        };
        let spec = RobustnessSpec::default();
        assert!(robustness_check(&report, 0.9, &spec));
        report.f_ave_nielsen = 0.89;
        assert!(!robustness_check(&report, 0.9, &spec));
        assert!(spec.validate().is_ok());
        assert!(RobustnessSpec { sigma_grid: vec![2.0, 1.0], ..spec.clone() }.validate().is_err());
    }
}
