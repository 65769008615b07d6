//! The two-mode gmon Hamiltonian in the rotating frame.
//!
//! Knobs are cyclic frequencies in MHz; every matrix returned here is in
//! angular units (rad/µs), i.e. already multiplied by 2π.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{imag_unit, real, CMatrix, C};
use crate::qops::{self, SubspaceLayout, DIM};
use crate::scalar::Real;

/// Amplitude range of every knob in MHz.
pub const KNOB_RANGE_MHZ: f64 = 20.0;
/// Default anharmonicity in MHz.
pub const DEFAULT_ETA_MHZ: f64 = 200.0;

/// One time step worth of control settings.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ControlKnobs<T: Real> {
    pub g: T,
    #[serde(rename = "d1")]
    pub delta1: T,
    #[serde(rename = "d2")]
    pub delta2: T,
    pub f1: T,
    pub f2: T,
    #[serde(rename = "p1")]
    pub phi1: T,
    #[serde(rename = "p2")]
    pub phi2: T,
}

impl<T: Real> ControlKnobs<T> {
    pub const LEN: usize = 7;
    pub const AMPLITUDES: usize = 5;

    pub fn zero() -> Self {
        Self::from_array([T::zero(); 7])
    }

    /// `[g, δ₁, δ₂, f₁, f₂, φ₁, φ₂]`.
    pub fn to_array(&self) -> [T; 7] {
        [self.g, self.delta1, self.delta2, self.f1, self.f2, self.phi1, self.phi2]
    }

    pub fn from_array(a: [T; 7]) -> Self {
        Self { g: a[0], delta1: a[1], delta2: a[2], f1: a[3], f2: a[4], phi1: a[5], phi2: a[6] }
    }

    /// `[g, δ₁, δ₂, f₁, f₂]`.
    pub fn amplitudes(&self) -> [T; 5] {
        [self.g, self.delta1, self.delta2, self.f1, self.f2]
    }

    pub fn with_amplitudes(&self, a: [T; 5]) -> Self {
        Self { g: a[0], delta1: a[1], delta2: a[2], f1: a[3], f2: a[4], ..*self }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }

    /// Checks `|g|, |δ|, |f| ≤ 20 MHz`.
    pub fn check_range(&self) -> Result<()> {
        let lim = T::lit(KNOB_RANGE_MHZ) * (T::one() + T::lit(1e-12));
        for (name, v) in ["g", "delta1", "delta2", "f1", "f2"].iter().zip(self.amplitudes()) {
            if !(v.abs() <= lim) {
                return Err(Error::InvalidArgument(format!(
                    "{name} = {v} MHz outside ±{KNOB_RANGE_MHZ} MHz"
                )));
            }
        }
        Ok(())
    }

    /// Amplitudes clamped to the knob range, phases wrapped into `[0, 2π)`.
    pub fn normalized(&self) -> Self {
        let lim = T::lit(KNOB_RANGE_MHZ);
        let a = self.amplitudes().map(|v| v.max(-lim).min(lim));
        Self { phi1: wrap_phase(self.phi1), phi2: wrap_phase(self.phi2), ..self.with_amplitudes(a) }
    }

    fn check_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(format!("control knobs {:?}", self.to_array())))
        }
    }
}

pub fn wrap_phase<T: Real>(phi: T) -> T {
    let tau = T::two_pi();
    let r = phi % tau;
    let r = if r < T::zero() { r + tau } else { r };
    if r >= tau {
        T::zero()
    } else {
        r
    }
}

/// Model parameters plus the constant operators `Ĥ` is assembled from.
#[derive(Clone, Debug)]
pub struct GmonModel<T: Real> {
    pub eta: T,
    pub layout: SubspaceLayout<T>,
    a: [CMatrix<T>; 2],
    n: [CMatrix<T>; 2],
    /// `Σ n̂(n̂−1)/2`, the anharmonic term per unit η.
    anharm: CMatrix<T>,
    /// `â₂†â₁ + â₁†â₂`.
    hop: CMatrix<T>,
    paulis: Paulis<T>,
}

impl<T: Real> GmonModel<T> {
    pub fn new(eta_mhz: T) -> Result<Self> {
        if !(eta_mhz > T::zero()) || !eta_mhz.is_finite() {
            return Err(Error::InvalidArgument(format!("anharmonicity must be positive, got {eta_mhz}")));
        }
        let layout = SubspaceLayout::new(eta_mhz);
        let a = [qops::annihilation(1, &layout)?, qops::annihilation(2, &layout)?];
        let n = [qops::number_op(1, &layout)?, qops::number_op(2, &layout)?];
        let id = CMatrix::identity(DIM);
        let half = T::lit(0.5);
        let anharm = &n[0].matmul(&(&n[0] - &id)).scale_real(half) + &n[1].matmul(&(&n[1] - &id)).scale_real(half);
        let hop = &a[1].dagger().matmul(&a[0]) + &a[0].dagger().matmul(&a[1]);
        Ok(Self { eta: eta_mhz, layout, a, n, anharm, hop, paulis: Paulis::new() })
    }

    pub fn annihilation(&self, mode: usize) -> &CMatrix<T> {
        &self.a[mode - 1]
    }

    pub fn number(&self, mode: usize) -> &CMatrix<T> {
        &self.n[mode - 1]
    }

    /// Bare energies `E_i` (rad/µs) of the Fock states.
    pub fn bare_energies(&self) -> Vec<T> {
        (0..DIM).map(|i| self.anharm[(i, i)].re * T::two_pi() * self.eta).collect()
    }

    /// `Ĥ₀ = (η/2)Σ n̂(n̂−1)` in rad/µs.
    pub fn h0(&self) -> CMatrix<T> {
        self.anharm.scale_real(T::two_pi() * self.eta)
    }

    /// Full Hamiltonian for the given knobs.
    pub fn assemble_h(&self, knobs: &ControlKnobs<T>) -> Result<CMatrix<T>> {
        self.assemble_h_with_eta(knobs, self.eta)
    }

    /// Full Hamiltonian with an explicit (possibly perturbed) anharmonicity.
    pub fn assemble_h_with_eta(&self, knobs: &ControlKnobs<T>, eta_mhz: T) -> Result<CMatrix<T>> {
        knobs.check_finite()?;
        if !eta_mhz.is_finite() {
            return Err(Error::NonFinite("anharmonicity".into()));
        }
        let w = T::two_pi();
        let i = imag_unit::<T>();
        // i f (â e^{−iφ} − â† e^{iφ}) has matrix elements c·â + conj(c)·â† with c = i f e^{−iφ}.
        let drive = |f: T, phi: T| i * C::new(phi.cos(), -phi.sin()) * f;
        let c1 = drive(knobs.f1, knobs.phi1);
        let c2 = drive(knobs.f2, knobs.phi2);
        let mut h = CMatrix::zeros(DIM, DIM);
        for r in 0..DIM {
            for c in 0..DIM {
                let mut z = real(eta_mhz * self.anharm[(r, c)].re + knobs.g * self.hop[(r, c)].re);
                z = z + real(knobs.delta1 * self.n[0][(r, c)].re + knobs.delta2 * self.n[1][(r, c)].re);
                z = z + c1 * self.a[0][(r, c)].re + c1.conj() * self.a[0][(c, r)].re;
                z = z + c2 * self.a[1][(r, c)].re + c2.conj() * self.a[1][(c, r)].re;
                h[(r, c)] = z * w;
            }
        }
        Ok(h)
    }

    /// `(Ĥ₀, Ĥ₁, Ĥ₂)` with `Ĥ₁` the intra-subspace and `Ĥ₂` the
    /// inter-subspace part of `Ĥ − Ĥ₀`.
    pub fn decompose(&self, h: &CMatrix<T>) -> (CMatrix<T>, CMatrix<T>, CMatrix<T>) {
        let h0 = self.h0();
        let rest = h - &h0;
        let (h1, h2) = qops::block_split(&rest, &self.layout);
        (h0, h1, h2)
    }

    /// Qubit-subspace Hamiltonian in the `|00⟩,|01⟩,|10⟩,|11⟩` basis with
    /// `σᶻ|0⟩ = +|0⟩`:
    /// `(g/2)(XX+YY) + Σ_j [(δ_j/2) Z_j − f_j (sin φ_j X_j + cos φ_j Y_j)]`.
    pub fn project_to_qubits(&self, knobs: &ControlKnobs<T>) -> Result<CMatrix<T>> {
        knobs.check_finite()?;
        let p = &self.paulis;
        let half = T::lit(0.5);
        let mut h = (&p.xx + &p.yy).scale_real(half * knobs.g);
        let singles = [
            (knobs.delta1, knobs.f1, knobs.phi1, &p.x1, &p.y1, &p.z1),
            (knobs.delta2, knobs.f2, knobs.phi2, &p.x2, &p.y2, &p.z2),
        ];
        for (d, f, phi, x, y, z) in singles {
            h += &z.scale_real(half * d);
            h -= &(&x.scale_real(f * phi.sin()) + &y.scale_real(f * phi.cos()));
        }
        Ok(h.scale_real(T::two_pi()))
    }
}

/// Two-qubit Pauli products in the `|00⟩,|01⟩,|10⟩,|11⟩` basis (qubit 1 is
/// the left tensor factor).
#[derive(Clone, Debug)]
pub struct Paulis<T: Real> {
    pub x1: CMatrix<T>,
    pub y1: CMatrix<T>,
    pub z1: CMatrix<T>,
    pub x2: CMatrix<T>,
    pub y2: CMatrix<T>,
    pub z2: CMatrix<T>,
    pub xx: CMatrix<T>,
    pub yy: CMatrix<T>,
    pub zz: CMatrix<T>,
}

impl<T: Real> Paulis<T> {
    pub fn new() -> Self {
        let [i, x, y, z] = single_paulis();
        let x1 = x.kron(&i);
        let y1 = y.kron(&i);
        let z1 = z.kron(&i);
        let x2 = i.kron(&x);
        let y2 = i.kron(&y);
        let z2 = i.kron(&z);
        Self {
            xx: x.kron(&x),
            yy: y.kron(&y),
            zz: z.kron(&z),
            x1,
            y1,
            z1,
            x2,
            y2,
            z2,
        }
    }
}

impl<T: Real> Default for Paulis<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// `[I, X, Y, Z]` on one qubit.
pub fn single_paulis<T: Real>() -> [CMatrix<T>; 4] {
    let o = T::one();
    let z = T::zero();
    let c = |re: T, im: T| C::new(re, im);
    [
        CMatrix::from_vec(2, 2, vec![c(o, z), c(z, z), c(z, z), c(o, z)]),
        CMatrix::from_vec(2, 2, vec![c(z, z), c(o, z), c(o, z), c(z, z)]),
        CMatrix::from_vec(2, 2, vec![c(z, z), c(z, -o), c(z, o), c(z, z)]),
        CMatrix::from_vec(2, 2, vec![c(o, z), c(z, z), c(z, z), c(-o, z)]),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qops::fock_index;
    use std::f64::consts::PI;

    fn model() -> GmonModel<f64> {
        GmonModel::new(200.0).unwrap()
    }

    fn knobs(g: f64, d1: f64, d2: f64, f1: f64, f2: f64, p1: f64, p2: f64) -> ControlKnobs<f64> {
        ControlKnobs::from_array([g, d1, d2, f1, f2, p1, p2])
    }

    #[test]
    fn controls_off_is_h0() {
        let m = model();
        let h = m.assemble_h(&ControlKnobs::zero()).unwrap();
        assert_eq!(h, m.h0());
        assert!((h[(fock_index(2, 0), fock_index(2, 0))].re - 2.0 * PI * 200.0).abs() < 1e-9);
        assert_eq!(h[(fock_index(1, 1), fock_index(1, 1))].re, 0.0);
        assert!((h[(fock_index(2, 2), fock_index(2, 2))].re - 4.0 * PI * 200.0).abs() < 1e-9);
        let (h0, h1, h2) = m.decompose(&h);
        assert_eq!(h0, h);
        assert_eq!(h1.max_abs(), 0.0);
        assert_eq!(h2.max_abs(), 0.0);
    }

    #[test]
    fn coupling_matrix_elements() {
        let m = model();
        let h = m.assemble_h(&knobs(20.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)).unwrap();
        let w = 2.0 * PI * 20.0;
        assert!((h[(fock_index(1, 0), fock_index(0, 1))].re - w).abs() < 1e-12);
        assert!((h[(fock_index(2, 0), fock_index(1, 1))].re - 2f64.sqrt() * w).abs() < 1e-12);
        let (_, h1, h2) = m.decompose(&h);
        assert!(h1[(fock_index(1, 0), fock_index(0, 1))].norm() > 0.0);
        assert!(h1[(fock_index(2, 1), fock_index(1, 2))].norm() > 0.0);
        assert!(h2[(fock_index(2, 0), fock_index(1, 1))].norm() > 0.0);
        assert!(h2[(fock_index(0, 2), fock_index(1, 1))].norm() > 0.0);
    }

    #[test]
    fn drive_term_matches_operator_form() {
        let m = model();
        let (f, phi) = (7.0, 0.9);
        let h = m.assemble_h(&knobs(0.0, 0.0, 0.0, f, 0.0, phi, 0.0)).unwrap();
        let a = m.annihilation(1);
        let i = C::new(0.0, 1.0);
        let e = C::new(phi.cos(), -phi.sin());
        let expect = &m.h0()
            + &(&a.scale(i * e) - &a.dagger().scale(i * e.conj())).scale_real(2.0 * PI * f);
        assert!((&h - &expect).max_abs() < 1e-12);
        assert!(h.is_hermitian(1e-12));
    }

    #[test]
    fn projected_detuning_sign_convention() {
        let m = model();
        let hq = m.project_to_qubits(&knobs(0.0, 10.0, 0.0, 0.0, 0.0, 0.0, 0.0)).unwrap();
        let w = 2.0 * PI * 5.0;
        let expect = CMatrix::from_real_diagonal(&[w, w, -w, -w]);
        assert!((&hq - &expect).max_abs() < 1e-12);
        assert_eq!(m.project_to_qubits(&ControlKnobs::zero()).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn projected_coupling_equals_computational_block() {
        let m = model();
        let k = knobs(-13.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let h = m.assemble_h(&k).unwrap();
        let block = h.submatrix(&m.layout.omega0, &m.layout.omega0);
        let hq = m.project_to_qubits(&k).unwrap();
        assert!((&block - &hq).max_abs() < 1e-12);
    }

    #[test]
    fn knob_linearity() {
        let m = model();
        let k = knobs(3.0, 1.0, -2.0, 4.0, 5.0, 0.3, 1.1);
        let k2 = ControlKnobs { g: 2.0 * k.g, ..k };
        let diff = &m.assemble_h(&k2).unwrap() - &m.assemble_h(&k).unwrap();
        let g_term = m.hop.scale_real(2.0 * PI * k.g);
        assert!((&diff - &g_term).max_abs() < 1e-11);
    }

    #[test]
    fn non_finite_knobs_rejected() {
        let m = model();
        let k = knobs(f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert!(matches!(m.assemble_h(&k), Err(Error::NonFinite(_))));
        assert!(GmonModel::<f64>::new(0.0).is_err());
    }

    #[test]
    fn phase_wrapping_and_range() {
        assert!((wrap_phase(-0.5f64) - (2.0 * PI - 0.5)).abs() < 1e-12);
        assert!((wrap_phase(7.0f64) - (7.0 - 2.0 * PI)).abs() < 1e-12);
        let k = knobs(25.0, -30.0, 0.0, 0.0, 0.0, -1.0, 0.0).normalized();
        assert_eq!(k.g, 20.0);
        assert_eq!(k.delta1, -20.0);
        assert!(k.check_range().is_ok());
        assert!(knobs(20.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0).check_range().is_err());
    }

    #[test]
    fn single_precision_model() {
        let m = GmonModel::<f32>::new(200.0).unwrap();
        let h = m.assemble_h(&ControlKnobs::from_array([5.0, 1.0, 2.0, 3.0, 4.0, 0.1, 0.2])).unwrap();
        assert!(h.hermiticity_defect() < 1e-3);
    }
}
