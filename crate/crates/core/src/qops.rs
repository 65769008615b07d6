//! Bosonic operators on two modes truncated to three levels, and the
//! bookkeeping of the energy subspaces Ω₀, Ω₁, Ω₂.
//!
//! Basis order is mode-1-major: index = 3·n₁ + n₂, so
//! `|00⟩,|01⟩,|02⟩,|10⟩,|11⟩,|12⟩,|20⟩,|21⟩,|22⟩`.

use crate::error::{Error, Result};
use crate::linalg::{real, CMatrix};
use crate::scalar::Real;

pub const LEVELS: usize = 3;
pub const DIM: usize = LEVELS * LEVELS;

/// Index of the Fock state `|n₁ n₂⟩`.
pub const fn fock_index(n1: usize, n2: usize) -> usize {
    n1 * LEVELS + n2
}

/// Occupations `(n₁, n₂)` of basis index `i`.
pub const fn occupations(i: usize) -> (usize, usize) {
    (i / LEVELS, i % LEVELS)
}

pub fn label(i: usize) -> String {
    let (a, b) = occupations(i);
    format!("|{a}{b}⟩")
}

/// Partition of the 9 Fock states into energy subspaces.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceLayout<T: Real> {
    pub levels_per_mode: usize,
    /// Computational subspace, ordered `|00⟩,|01⟩,|10⟩,|11⟩`.
    pub omega0: Vec<usize>,
    /// First excited manifold `|20⟩,|21⟩,|12⟩,|02⟩`.
    pub omega1: Vec<usize>,
    /// Top level `|22⟩`.
    pub omega2: Vec<usize>,
    /// Ω₀ ↔ Ω₁ gap in rad/µs.
    pub gap: T,
}

impl<T: Real> SubspaceLayout<T> {
    /// Standard layout for anharmonicity `eta_mhz` (gap = 2π·η).
    pub fn new(eta_mhz: T) -> Self {
        Self {
            levels_per_mode: LEVELS,
            omega0: vec![fock_index(0, 0), fock_index(0, 1), fock_index(1, 0), fock_index(1, 1)],
            omega1: vec![fock_index(2, 0), fock_index(2, 1), fock_index(1, 2), fock_index(0, 2)],
            omega2: vec![fock_index(2, 2)],
            gap: T::two_pi() * eta_mhz,
        }
    }

    pub fn dim(&self) -> usize {
        self.levels_per_mode * self.levels_per_mode
    }

    pub fn num_subspaces(&self) -> usize {
        3
    }

    pub fn omega(&self, alpha: usize) -> &[usize] {
        match alpha {
            0 => &self.omega0,
            1 => &self.omega1,
            2 => &self.omega2,
            _ => panic!("subspace index {alpha} out of range"),
        }
    }

    /// Subspace label α of basis index `i`.
    pub fn subspace_of(&self, i: usize) -> usize {
        (0..self.num_subspaces())
            .find(|&a| self.omega(a).contains(&i))
            .expect("layout partitions every basis state")
    }

    /// Per-basis-state subspace labels.
    pub fn block_labels(&self) -> Vec<usize> {
        (0..self.dim()).map(|i| self.subspace_of(i)).collect()
    }

    pub fn same_block(&self, i: usize, j: usize) -> bool {
        self.subspace_of(i) == self.subspace_of(j)
    }

    /// Every basis index appears in exactly one subspace.
    pub fn validate(&self) -> Result<()> {
        if self.levels_per_mode != LEVELS {
            return Err(Error::InvalidArgument(format!(
                "only {LEVELS} levels per mode are supported, got {}",
                self.levels_per_mode
            )));
        }
        let mut seen = vec![0usize; self.dim()];
        for a in 0..self.num_subspaces() {
            for &i in self.omega(a) {
                if i >= self.dim() {
                    return Err(Error::InvalidArgument(format!("basis index {i} out of range")));
                }
                seen[i] += 1;
            }
        }
        if seen.iter().any(|&c| c != 1) {
            return Err(Error::InvalidArgument("subspaces must partition the basis".into()));
        }
        if !(self.gap > T::zero()) {
            return Err(Error::InvalidArgument("gap must be positive".into()));
        }
        Ok(())
    }

    /// Orthogonal projector onto Ω_α.
    pub fn projector(&self, alpha: usize) -> CMatrix<T> {
        let mut p = CMatrix::zeros(self.dim(), self.dim());
        for &i in self.omega(alpha) {
            p[(i, i)] = real(T::one());
        }
        p
    }
}

fn check_mode(mode: usize) -> Result<()> {
    if mode == 1 || mode == 2 {
        Ok(())
    } else {
        Err(Error::InvalidMode(mode))
    }
}

/// Lowering operator `â_mode` with hard truncation at level 2.
pub fn annihilation<T: Real>(mode: usize, layout: &SubspaceLayout<T>) -> Result<CMatrix<T>> {
    check_mode(mode)?;
    layout.validate()?;
    let mut a = CMatrix::zeros(DIM, DIM);
    for col in 0..DIM {
        let (n1, n2) = occupations(col);
        let (n, target) = if mode == 1 {
            (n1, n1.checked_sub(1).map(|m| fock_index(m, n2)))
        } else {
            (n2, n2.checked_sub(1).map(|m| fock_index(n1, m)))
        };
        if let Some(row) = target {
            a[(row, col)] = real(T::lit(n as f64).sqrt());
        }
    }
    Ok(a)
}

pub fn creation<T: Real>(mode: usize, layout: &SubspaceLayout<T>) -> Result<CMatrix<T>> {
    Ok(annihilation(mode, layout)?.dagger())
}

/// `n̂_mode = â†â`, diagonal with entries 0, 1, 2.
pub fn number_op<T: Real>(mode: usize, layout: &SubspaceLayout<T>) -> Result<CMatrix<T>> {
    let a = annihilation(mode, layout)?;
    Ok(a.dagger().matmul(&a))
}

/// Split `h` into its intra-subspace (block-diagonal) and inter-subspace
/// (block-off-diagonal) parts. The two parts sum to `h` exactly.
pub fn block_split<T: Real>(h: &CMatrix<T>, layout: &SubspaceLayout<T>) -> (CMatrix<T>, CMatrix<T>) {
    assert_eq!((h.rows(), h.cols()), (layout.dim(), layout.dim()), "operator must act on the full space");
    let scale = h.frobenius_norm().max(T::one());
    if h.hermiticity_defect() > T::lit(1e-10) * scale {
        log::warn!("block_split: input is not Hermitian (defect {:.3e})", h.hermiticity_defect().as_f64());
    }
    let labels = layout.block_labels();
    let zero = real(T::zero());
    let diag = h.map(|i, j, z| if labels[i] == labels[j] { z } else { zero });
    let off = h.map(|i, j, z| if labels[i] == labels[j] { zero } else { z });
    (diag, off)
}

pub fn block_diagonal<T: Real>(h: &CMatrix<T>, layout: &SubspaceLayout<T>) -> CMatrix<T> {
    let labels = layout.block_labels();
    h.map(|i, j, z| if labels[i] == labels[j] { z } else { real(T::zero()) })
}

pub fn block_off_diagonal<T: Real>(h: &CMatrix<T>, layout: &SubspaceLayout<T>) -> CMatrix<T> {
    let labels = layout.block_labels();
    h.map(|i, j, z| if labels[i] == labels[j] { real(T::zero()) } else { z })
}
