//! Time-dependent Schrieffer–Wolff transformation to second order, the
//! coherent leakage bound built on it, and the non-adiabatic leakage bound.
//!
//! Conventions: the rotated state is `e^{−S}ψ`, so the effective Hamiltonian
//! is `e^{−S} H e^{S} + i(∂ₜe^{−S})e^{S}`. Time is in µs and energies in
//! rad/µs. Time derivatives count as one extra order of the small parameter.
//!
//! For a layout with three subspaces the products `Ĥ₂Ŝ₁` connect Ω₀ with Ω₂
//! at second order, so the second-order generator carries an extra
//! `½[Ĥ₂,Ŝ₁]` piece on those blocks; [`s2_generator`] keeps the two-subspace
//! form, while [`Generators`] and every frame use the complete one.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmon::GmonModel;
use crate::linalg::{imag_unit, CMatrix};
use crate::qops::{self, SubspaceLayout};
use crate::scalar::Real;

/// Relative size below which an inter-subspace energy difference counts as
/// degenerate.
const DEGENERATE_GAP: f64 = 1e-6;

/// `X_ij / (E_j − E_i)` on inter-subspace entries, zero elsewhere.
fn gap_divide<T: Real>(x: &CMatrix<T>, h0: &CMatrix<T>, layout: &SubspaceLayout<T>) -> Result<CMatrix<T>> {
    let labels = layout.block_labels();
    let floor = T::lit(DEGENERATE_GAP) * layout.gap;
    let mut out = CMatrix::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            if labels[i] == labels[j] {
                continue;
            }
            let de = h0[(j, j)].re - h0[(i, i)].re;
            if de.abs() < floor {
                return Err(Error::DegenerateGap { from: labels[i], to: labels[j], gap: de.as_f64() });
            }
            out[(i, j)] = x[(i, j)] / de;
        }
    }
    Ok(out)
}

fn check_h0<T: Real>(h0: &CMatrix<T>, layout: &SubspaceLayout<T>) -> Result<()> {
    if h0.rows() != layout.dim() || !h0.is_square() {
        return Err(Error::Dimension(format!("H0 must be {0}x{0}", layout.dim())));
    }
    let off = qops::block_off_diagonal(h0, layout).max_abs();
    if off > T::zero() {
        return Err(Error::InvalidArgument("H0 must be block diagonal".into()));
    }
    Ok(())
}

/// First-order generator `Ŝ₁^{αα′} = Ĥ₂^{αα′}/(E_{α′} − E_α)`.
pub fn s1_generator<T: Real>(h0: &CMatrix<T>, h2: &CMatrix<T>, layout: &SubspaceLayout<T>) -> Result<CMatrix<T>> {
    check_h0(h0, layout)?;
    gap_divide(h2, h0, layout)
}

/// Second-order generator in the two-subspace form
/// `([Ĥ₁,Ĥ₂] − iḢ₂)^{αα′}/(E_{α′} − E_α)²`.
pub fn s2_generator<T: Real>(
    h0: &CMatrix<T>,
    h1: &CMatrix<T>,
    h2: &CMatrix<T>,
    dh2_dt: &CMatrix<T>,
    layout: &SubspaceLayout<T>,
) -> Result<CMatrix<T>> {
    check_h0(h0, layout)?;
    let s1 = gap_divide(h2, h0, layout)?;
    let s1_dot = gap_divide(dh2_dt, h0, layout)?;
    let r2 = &h1.commutator(&s1) - &s1_dot.scale(imag_unit());
    gap_divide(&r2, h0, layout)
}

/// Generators and their time derivatives at one instant.
#[derive(Clone, Debug)]
pub struct Generators<T: Real> {
    pub s1: CMatrix<T>,
    pub s1_dot: CMatrix<T>,
    pub s2: CMatrix<T>,
    pub s2_dot: CMatrix<T>,
}

/// Instantaneous Hamiltonian pieces and the derivatives the transformation
/// needs.
#[derive(Clone, Copy, Debug)]
pub struct TswtInput<'a, T: Real> {
    pub h0: &'a CMatrix<T>,
    pub h1: &'a CMatrix<T>,
    pub h2: &'a CMatrix<T>,
    pub dh1_dt: &'a CMatrix<T>,
    pub dh2_dt: &'a CMatrix<T>,
    pub d2h2_dt2: &'a CMatrix<T>,
}

impl<T: Real> Generators<T> {
    pub fn compute(input: &TswtInput<'_, T>, layout: &SubspaceLayout<T>) -> Result<Self> {
        check_h0(input.h0, layout)?;
        let g = |x: &CMatrix<T>| gap_divide(x, input.h0, layout);
        let i = imag_unit::<T>();
        let half = T::lit(0.5);
        let s1 = g(input.h2)?;
        let s1_dot = g(input.dh2_dt)?;
        let s1_ddot = g(input.d2h2_dt2)?;
        let r2 = &(&input.h1.commutator(&s1) + &input.h2.commutator(&s1).scale_real(half)) - &s1_dot.scale(i);
        let s2 = g(&r2)?;
        let r2_dot = &(&(&input.dh1_dt.commutator(&s1) + &input.h1.commutator(&s1_dot))
            + &(&input.dh2_dt.commutator(&s1) + &input.h2.commutator(&s1_dot)).scale_real(half))
            - &s1_ddot.scale(i);
        let s2_dot = g(&r2_dot)?;
        Ok(Self { s1, s1_dot, s2, s2_dot })
    }

    /// `Ŝ = Ŝ₁ + Ŝ₂`.
    pub fn total(&self) -> CMatrix<T> {
        &self.s1 + &self.s2
    }
}

/// Effective block-diagonal and block-off-diagonal Hamiltonians through
/// third order.
pub fn effective_hamiltonians<T: Real>(
    input: &TswtInput<'_, T>,
    layout: &SubspaceLayout<T>,
) -> Result<(CMatrix<T>, CMatrix<T>)> {
    let gens = Generators::compute(input, layout)?;
    Ok(effective_from_generators(input, &gens, layout))
}

fn effective_from_generators<T: Real>(
    input: &TswtInput<'_, T>,
    gens: &Generators<T>,
    layout: &SubspaceLayout<T>,
) -> (CMatrix<T>, CMatrix<T>) {
    let c21 = input.h2.commutator(&gens.s1);
    let (c21_d, c21_od) = qops::block_split(&c21, layout);
    let r3 = &(&(&input.h1.commutator(&gens.s2) + &input.h2.commutator(&gens.s2).scale_real(T::lit(0.5)))
        + &(&c21.commutator(&gens.s1).scale_real(T::lit(1.0 / 3.0))
            - &c21_od.commutator(&gens.s1).scale_real(T::lit(0.25))))
        - &gens.s2_dot.scale(imag_unit());
    let (r3_d, r3_od) = qops::block_split(&r3, layout);
    let hd = &(&(input.h0 + input.h1) + &c21_d.scale_real(T::lit(0.5))) + &r3_d;
    (hd, r3_od)
}

/// Transformation data at one time step.
#[derive(Clone, Debug)]
pub struct TswtFrame<T: Real> {
    pub s1: CMatrix<T>,
    pub s2: CMatrix<T>,
    pub h_eff_d: CMatrix<T>,
    pub h_eff_od: CMatrix<T>,
    /// Midpoint of the step, µs.
    pub timestamp: T,
}

impl<T: Real> TswtFrame<T> {
    pub fn generator(&self) -> CMatrix<T> {
        &self.s1 + &self.s2
    }
}

/// Central difference, one-sided at the ends.
fn first_difference<T: Real>(xs: &[CMatrix<T>], k: usize, dt: T) -> CMatrix<T> {
    let n = xs.len();
    if k == 0 {
        (&xs[1] - &xs[0]).scale_real(T::one() / dt)
    } else if k == n - 1 {
        (&xs[n - 1] - &xs[n - 2]).scale_real(T::one() / dt)
    } else {
        (&xs[k + 1] - &xs[k - 1]).scale_real(T::one() / (T::lit(2.0) * dt))
    }
}

/// Second difference; the end points reuse their neighbour's stencil.
fn second_difference<T: Real>(xs: &[CMatrix<T>], k: usize, dt: T) -> CMatrix<T> {
    let j = k.clamp(1, xs.len() - 2);
    let two = T::lit(2.0);
    (&(&xs[j + 1] - &xs[j].scale_real(two)) + &xs[j - 1]).scale_real(T::one() / (dt * dt))
}

/// Frame `k` of a sampled Hamiltonian sequence `hs` with spacing `dt_us`.
/// Derivatives are finite differences along the sequence.
pub fn frame_at<T: Real>(hs: &[CMatrix<T>], k: usize, dt_us: T, model: &GmonModel<T>) -> Result<TswtFrame<T>> {
    if hs.len() < 3 {
        return Err(Error::TooFewFrames { needed: 3, got: hs.len() });
    }
    let layout = &model.layout;
    let (h0, h1, h2) = model.decompose(&hs[k]);
    let (dh1, dh2) = qops::block_split(&first_difference(hs, k, dt_us), layout);
    let d2h2 = qops::block_off_diagonal(&second_difference(hs, k, dt_us), layout);
    let input = TswtInput { h0: &h0, h1: &h1, h2: &h2, dh1_dt: &dh1, dh2_dt: &dh2, d2h2_dt2: &d2h2 };
    let gens = Generators::compute(&input, layout)?;
    let (h_eff_d, h_eff_od) = effective_from_generators(&input, &gens, layout);
    Ok(TswtFrame {
        s1: gens.s1,
        s2: gens.s2,
        h_eff_d,
        h_eff_od,
        timestamp: (T::lit(k as f64) + T::lit(0.5)) * dt_us,
    })
}

/// Frames for every step of a Hamiltonian sequence.
pub fn frames_from_hamiltonians<T: Real>(
    hs: &[CMatrix<T>],
    dt_us: T,
    model: &GmonModel<T>,
) -> Result<Vec<TswtFrame<T>>> {
    (0..hs.len()).into_par_iter().map(|k| frame_at(hs, k, dt_us, model)).collect()
}

/// Frames along a (noiseless) control trajectory.
pub fn trajectory_frames<T: Real>(
    traj: &crate::control::ControlTrajectory<T>,
    model: &GmonModel<T>,
) -> Result<Vec<TswtFrame<T>>> {
    let hs = traj.steps().iter().map(|k| model.assemble_h(k)).collect::<Result<Vec<_>>>()?;
    frames_from_hamiltonians(&hs, traj.dt_us(), model)
}

/// How the gap `Δ(t)` entering the bounds is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapMode {
    /// `Δ = 2π·η`.
    #[default]
    Constant,
    /// Smallest distance between the Ω₀ spectrum of `ℍ_d` and the spectra
    /// of the higher blocks.
    Dynamic,
}

/// Instantaneous gap of a frame.
pub fn frame_gap<T: Real>(frame: &TswtFrame<T>, layout: &SubspaceLayout<T>, mode: GapMode) -> Result<T> {
    match mode {
        GapMode::Constant => Ok(layout.gap),
        GapMode::Dynamic => {
            let block_eigs = |a: usize| -> Result<Vec<T>> {
                let idx = layout.omega(a);
                Ok(frame.h_eff_d.submatrix(idx, idx).hermitian_eigen()?.values)
            };
            let top0 = block_eigs(0)?.into_iter().fold(T::neg_infinity(), T::max);
            let mut gap = T::infinity();
            for a in 1..layout.num_subspaces() {
                let low = block_eigs(a)?.into_iter().fold(T::infinity(), T::min);
                gap = gap.min(low - top0);
            }
            if gap < T::lit(DEGENERATE_GAP) * layout.gap {
                return Err(Error::DegenerateGap { from: 0, to: 1, gap: gap.as_f64() });
            }
            Ok(gap)
        }
    }
}

/// Terms of the coherent leakage bound (all dimensionless).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LeakageLedger<T: Real> {
    pub boundary_start: T,
    pub boundary_end: T,
    /// `2‖ℍ̇_od‖/Δ²` summed over both end points.
    pub derivative_terms: T,
    pub integral_term: T,
    /// Three-term bound `boundary_start + boundary_end + integral_term`.
    pub l_tot: T,
}

impl<T: Real> LeakageLedger<T> {
    /// Five-term variant including the derivative terms.
    pub fn five_term(&self) -> T {
        self.l_tot + self.derivative_terms
    }
}

fn gaps_of<T: Real>(frames: &[TswtFrame<T>], layout: &SubspaceLayout<T>, mode: GapMode) -> Result<Vec<T>> {
    frames.iter().map(|f| frame_gap(f, layout, mode)).collect()
}

/// `‖d²ℍ_od/dt²‖/Δ² · dt` at frame `j`.
fn integrand<T: Real>(hod: &[CMatrix<T>], gaps: &[T], j: usize, dt_us: T) -> T {
    second_difference(hod, j, dt_us).spectral_norm() / (gaps[j] * gaps[j]) * dt_us
}

/// Coherent leakage bound along a sequence of frames spaced `dt_us` apart.
pub fn leakage_bound<T: Real>(
    frames: &[TswtFrame<T>],
    dt_us: T,
    layout: &SubspaceLayout<T>,
    mode: GapMode,
) -> Result<LeakageLedger<T>> {
    if frames.len() < 3 {
        return Err(Error::TooFewFrames { needed: 3, got: frames.len() });
    }
    let gaps = gaps_of(frames, layout, mode)?;
    let hod: Vec<CMatrix<T>> = frames.iter().map(|f| f.h_eff_od.clone()).collect();
    let n = frames.len();
    let integral_term = (0..n).map(|j| integrand(&hod, &gaps, j, dt_us)).fold(T::zero(), |a, b| a + b);
    Ok(ledger_from_parts(&hod, &gaps, dt_us, integral_term))
}

fn ledger_from_parts<T: Real>(hod: &[CMatrix<T>], gaps: &[T], dt_us: T, integral_term: T) -> LeakageLedger<T> {
    let n = hod.len();
    let two = T::lit(2.0);
    let boundary_start = hod[0].spectral_norm() / gaps[0];
    let boundary_end = hod[n - 1].spectral_norm() / gaps[n - 1];
    let derivative_terms = two * first_difference(hod, 0, dt_us).spectral_norm() / (gaps[0] * gaps[0])
        + two * first_difference(hod, n - 1, dt_us).spectral_norm() / (gaps[n - 1] * gaps[n - 1]);
    LeakageLedger {
        boundary_start,
        boundary_end,
        derivative_terms,
        integral_term,
        l_tot: boundary_start + boundary_end + integral_term,
    }
}

/// Incremental evaluation of the leakage ledger as Hamiltonians arrive one
/// step at a time. Integrand contributions are released as soon as no
/// future step can change them, and `finish` returns the same ledger
/// [`leakage_bound`] would compute on the whole sequence.
#[derive(Clone, Debug)]
pub struct LeakageAccumulator<T: Real> {
    model: GmonModel<T>,
    dt_us: T,
    mode: GapMode,
    hs: Vec<CMatrix<T>>,
    hod: Vec<CMatrix<T>>,
    gaps: Vec<T>,
    released: usize,
    released_sum: T,
}

impl<T: Real> LeakageAccumulator<T> {
    pub fn new(model: GmonModel<T>, dt_us: T, mode: GapMode) -> Self {
        Self {
            model,
            dt_us,
            mode,
            hs: Vec::new(),
            hod: Vec::new(),
            gaps: Vec::new(),
            released: 0,
            released_sum: T::zero(),
        }
    }

    pub fn len(&self) -> usize {
        self.hs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hs.is_empty()
    }

    /// Integral contributions released so far.
    pub fn released_integral(&self) -> T {
        self.released_sum
    }

    /// Adds the Hamiltonian of the next step and returns the integral
    /// contribution that became final.
    pub fn push(&mut self, h: CMatrix<T>) -> Result<T> {
        self.hs.push(h);
        let n = self.hs.len();
        if n < 3 {
            return Ok(T::zero());
        }
        // Frame k is final once step k + 1 exists (frame 0 also needs step 2).
        while self.hod.len() + 1 < n {
            let k = self.hod.len();
            let frame = frame_at(&self.hs, k, self.dt_us, &self.model)?;
            self.gaps.push(frame_gap(&frame, &self.model.layout, self.mode)?);
            self.hod.push(frame.h_eff_od);
        }
        // Integrand j needs final frames up to j + 1, and at least three.
        let mut gained = T::zero();
        while self.hod.len() >= 3 && self.released + 2 <= self.hod.len() {
            let j = self.released;
            let v = integrand(&self.hod, &self.gaps, j, self.dt_us);
            gained = gained + v;
            self.released += 1;
        }
        self.released_sum = self.released_sum + gained;
        Ok(gained)
    }

    /// Ledger over everything pushed so far.
    pub fn finish(&self) -> Result<LeakageLedger<T>> {
        let frames = frames_from_hamiltonians(&self.hs, self.dt_us, &self.model)?;
        leakage_bound(&frames, self.dt_us, &self.model.layout, self.mode)
    }
}

/// Terms of the non-adiabatic leakage bound.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AdiabaticBound<T: Real> {
    pub boundary: T,
    pub quadratic: T,
    pub integral: T,
    pub total: T,
}

/// Non-adiabatic leakage bound for `H = H₀ + ℍ_d(s) + ℍ_od(s)` sampled on a
/// uniform grid of step `1/n` over `s ∈ [0, 1]`, with total time `t_total`
/// (µs). `hd_frames` must exclude the constant `H₀`.
///
/// The quadratic integral carries a factor `1/T` so every term is
/// dimensionless.
pub fn adiabatic_bound<T: Real>(
    hd_frames: &[CMatrix<T>],
    hod_frames: &[CMatrix<T>],
    gap_frames: &[T],
    t_total: T,
) -> Result<AdiabaticBound<T>> {
    if !(t_total > T::zero()) {
        return Err(Error::InvalidArgument(format!("total time must be positive, got {t_total}")));
    }
    let n = hod_frames.len();
    if hd_frames.len() != n || gap_frames.len() != n {
        return Err(Error::Dimension("frame sequences must have equal length".into()));
    }
    if n < 3 {
        return Err(Error::TooFewFrames { needed: 3, got: n });
    }
    let ds = T::one() / T::lit(n as f64);
    let two = T::lit(2.0);
    let first_order = |k: usize| {
        let dod = first_difference(hod_frames, k, ds);
        dod.spectral_norm() + t_total * hd_frames[k].commutator(&hod_frames[k]).spectral_norm()
    };
    let boundary = (first_order(0) / (gap_frames[0] * gap_frames[0])
        + first_order(n - 1) / (gap_frames[n - 1] * gap_frames[n - 1]))
        / t_total;
    let mut quadratic = T::zero();
    let mut integral = T::zero();
    for k in 0..n {
        let gap = gap_frames[k];
        let f = first_order(k);
        quadratic = quadratic + T::lit(5.0) * f * f / (gap * gap * gap) / t_total * ds;
        let hd = &hd_frames[k];
        let hod = &hod_frames[k];
        let dod = first_difference(hod_frames, k, ds);
        let dd = first_difference(hd_frames, k, ds);
        let d2od = second_difference(hod_frames, k, ds);
        let term = t_total * hd.commutator(&hd.commutator(hod)).spectral_norm()
            + two * hd.commutator(&dod).spectral_norm()
            + two * dd.commutator(hod).spectral_norm()
            + d2od.spectral_norm() / t_total;
        integral = integral + term / (gap * gap) * ds;
    }
    Ok(AdiabaticBound { boundary, quadratic, integral, total: boundary + quadratic + integral })
}

/// [`adiabatic_bound`] evaluated on transformation frames, using
/// `ℍ_d − H₀` as the time-varying diagonal part.
pub fn adiabatic_bound_from_frames<T: Real>(
    frames: &[TswtFrame<T>],
    model: &GmonModel<T>,
    t_total: T,
    mode: GapMode,
) -> Result<AdiabaticBound<T>> {
    let h0 = model.h0();
    let hd: Vec<CMatrix<T>> = frames.iter().map(|f| &f.h_eff_d - &h0).collect();
    let hod: Vec<CMatrix<T>> = frames.iter().map(|f| f.h_eff_od.clone()).collect();
    let gaps = gaps_of(frames, &model.layout, mode)?;
    adiabatic_bound(&hd, &hod, &gaps, t_total)
}

/// Exact block-off-diagonal zero check used by tests and audits.
pub fn is_block_off_diagonal<T: Real>(x: &CMatrix<T>, layout: &SubspaceLayout<T>) -> bool {
    qops::block_diagonal(x, layout).max_abs() == T::zero()
}
