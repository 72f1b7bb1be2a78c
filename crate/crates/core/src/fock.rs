//! Truncated symmetric Fock space over ℂ^M and the ε-scaled field operators
//! on it.
//!
//! Conventions fixed here and inherited by every downstream module:
//! - the inner product ⟨·,·⟩ is antilinear in the FIRST argument;
//! - `a_ε(f)` is antilinear in `f`, creation is its adjoint;
//! - `[a_ε(f), a*_ε(g)] = ε⟨f,g⟩` away from the truncation boundary;
//! - basis enumeration is lexicographic with mode 0 most significant.
//!
//! Truncation by independent per-mode cutoffs (dimension Π(cutoff_j + 1))
//! keeps coherent states and the phase flow e^{−itνω} factorized over modes,
//! so truncation error is analyzable mode by mode.

use crate::linalg::{unitary_exp, CMatrix, CVector, C64, MAX_KRON_DIM};
use thiserror::Error;

/// Complex amplitudes over the M modes (form factors g, test vectors η/z).
pub type ModeVector = CVector;

#[derive(Debug, Error)]
pub enum FockError {
    #[error("epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("Fock dimension {0} exceeds maximum {MAX_KRON_DIM}")]
    DimensionOverflow(usize),
    #[error("mode-vector length {found} does not match mode count {expected}")]
    ModeMismatch { expected: usize, found: usize },
    #[error("dispersion frequencies must be strictly positive, got {0}")]
    NonPositiveFrequency(f64),
    #[error(
        "coherent state unsafe for truncation: mode {mode} mean occupation {mean_occ:.3} \
         exceeds 0.25 x cutoff {cutoff} (raise the cutoff or lower |z|^2/epsilon)"
    )]
    TruncationUnsafe {
        mode: usize,
        mean_occ: f64,
        cutoff: usize,
    },
    #[error(transparent)]
    Linalg(#[from] crate::linalg::LinalgError),
}

pub type Result<T> = std::result::Result<T, FockError>;

/// Positive mode frequencies ω₁…ω_M (the dispersion restricted to diagonal
/// form; any positive finite-mode dispersion can be pre-diagonalized).
#[derive(Debug, Clone, PartialEq)]
pub struct Dispersion(Vec<f64>);

impl Dispersion {
    pub fn new(frequencies: Vec<f64>) -> Result<Self> {
        for &w in &frequencies {
            if !(w > 0.0) || !w.is_finite() {
                return Err(FockError::NonPositiveFrequency(w));
            }
        }
        Ok(Dispersion(frequencies))
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.0
    }

    pub fn modes(&self) -> usize {
        self.0.len()
    }
}

/// Truncated multimode bosonic space descriptor.
#[derive(Debug, Clone)]
pub struct FockSpace {
    cutoffs: Vec<usize>,
    epsilon: f64,
    dim: usize,
    /// stride of each mode in the lexicographic enumeration (mode 0 most
    /// significant): index = Σ_j n_j · stride_j.
    strides: Vec<usize>,
}

impl FockSpace {
    pub fn new(cutoffs: Vec<usize>, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(FockError::InvalidEpsilon(epsilon));
        }
        let mut dim: usize = 1;
        for &c in &cutoffs {
            dim = dim
                .checked_mul(c + 1)
                .filter(|&d| d <= MAX_KRON_DIM)
                .ok_or(FockError::DimensionOverflow(usize::MAX))?;
        }
        let m = cutoffs.len();
        let mut strides = vec![1usize; m];
        for j in (0..m.saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * (cutoffs[j + 1] + 1);
        }
        Ok(FockSpace {
            cutoffs,
            epsilon,
            dim,
            strides,
        })
    }

    pub fn modes(&self) -> usize {
        self.cutoffs.len()
    }

    pub fn cutoffs(&self) -> &[usize] {
        &self.cutoffs
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Multi-index of basis state `index`.
    pub fn occupation(&self, index: usize) -> Vec<usize> {
        debug_assert!(index < self.dim);
        let mut occ = vec![0usize; self.modes()];
        let mut rem = index;
        for j in 0..self.modes() {
            occ[j] = rem / self.strides[j];
            rem %= self.strides[j];
        }
        occ
    }

    /// Basis index of a multi-index (inverse of [`occupation`]).
    pub fn index(&self, occ: &[usize]) -> usize {
        debug_assert_eq!(occ.len(), self.modes());
        occ.iter()
            .zip(&self.strides)
            .map(|(&n, &s)| n * s)
            .sum()
    }

    /// Total occupation Σ_j n_j of basis state `index`.
    pub fn total_occupation(&self, index: usize) -> usize {
        self.occupation(index).iter().sum()
    }

    /// Indices whose occupations stay at least `margin` below every per-mode
    /// cutoff; CCR-type identities hold exactly there (margin 1).
    pub fn safe_indices(&self, margin: usize) -> Vec<usize> {
        (0..self.dim)
            .filter(|&i| {
                self.occupation(i)
                    .iter()
                    .zip(&self.cutoffs)
                    .all(|(&n, &c)| n + margin <= c)
            })
            .collect()
    }

    fn check_mode_vector(&self, f: &ModeVector) -> Result<()> {
        if f.len() != self.modes() {
            return Err(FockError::ModeMismatch {
                expected: self.modes(),
                found: f.len(),
            });
        }
        Ok(())
    }

    /// Annihilation operator `a_ε(f) = Σ_j conj(f_j) a_{ε,j}`, antilinear in
    /// `f`; lowers mode j with amplitude √(ε·n_j).
    pub fn annihilation(&self, f: &ModeVector) -> Result<CMatrix> {
        self.check_mode_vector(f)?;
        let mut a = CMatrix::zeros(self.dim, self.dim);
        for col in 0..self.dim {
            let occ = self.occupation(col);
            for j in 0..self.modes() {
                if occ[j] >= 1 {
                    let row = col - self.strides[j];
                    a[(row, col)] += f[j].conj() * (self.epsilon * occ[j] as f64).sqrt();
                }
            }
        }
        Ok(a)
    }

    /// Creation operator `a*_ε(f)`, linear in `f` (adjoint of annihilation).
    pub fn creation(&self, f: &ModeVector) -> Result<CMatrix> {
        Ok(self.annihilation(f)?.adjoint())
    }

    /// Second quantization dΓ_ε(ω): diagonal with eigenvalue ε·Σ_j ω_j n_j.
    pub fn d_gamma(&self, omega: &Dispersion) -> Result<CMatrix> {
        if omega.modes() != self.modes() {
            return Err(FockError::ModeMismatch {
                expected: self.modes(),
                found: omega.modes(),
            });
        }
        let diag = self.d_gamma_diagonal(omega);
        Ok(CMatrix::from_diagonal(&CVector::from_iterator(
            self.dim,
            diag.into_iter().map(|x| C64::new(x, 0.0)),
        )))
    }

    /// Diagonal entries of dΓ_ε(ω) in basis order.
    pub fn d_gamma_diagonal(&self, omega: &Dispersion) -> Vec<f64> {
        (0..self.dim)
            .map(|i| {
                let occ = self.occupation(i);
                self.epsilon
                    * occ
                        .iter()
                        .zip(omega.frequencies())
                        .map(|(&n, &w)| w * n as f64)
                        .sum::<f64>()
            })
            .collect()
    }

    /// Segal field φ_ε(g) = a*_ε(g) + a_ε(g); Hermitian.
    pub fn field_op(&self, g: &ModeVector) -> Result<CMatrix> {
        let a = self.annihilation(g)?;
        Ok(&a.adjoint() + &a)
    }

    /// Weyl operator W_ε(η) = e^{iφ_ε(η)}.
    pub fn weyl_op(&self, eta: &ModeVector) -> Result<CMatrix> {
        Ok(unitary_exp(&self.field_op(eta)?, 1.0)?)
    }

    fn check_coherent_safety(&self, z: &ModeVector) -> Result<()> {
        self.check_mode_vector(z)?;
        for j in 0..self.modes() {
            let mean_occ = z[j].norm_sqr() / self.epsilon;
            if mean_occ > 0.25 * self.cutoffs[j] as f64 {
                return Err(FockError::TruncationUnsafe {
                    mode: j,
                    mean_occ,
                    cutoff: self.cutoffs[j],
                });
            }
        }
        Ok(())
    }

    /// Normalized coherent state vector with amplitude on |n₁…n_M⟩
    /// proportional to Π_j (z_j/√ε)^{n_j}/√(n_j!).
    ///
    /// Refuses to run when any mode's mean occupation |z_j|²/ε exceeds a
    /// quarter of its cutoff — past that margin the truncation tail would
    /// silently corrupt convergence studies.
    pub fn coherent_vector(&self, z: &ModeVector) -> Result<CVector> {
        self.check_coherent_safety(z)?;
        let sqrt_eps = self.epsilon.sqrt();
        // per-mode amplitude ladders via a_n = a_{n-1}·(z_j/√ε)/√n
        let mut amps = vec![C64::new(1.0, 0.0)];
        for j in 0..self.modes() {
            let scale = z[j] / sqrt_eps;
            let mut mode_amp = Vec::with_capacity(self.cutoffs[j] + 1);
            let mut a = C64::new(1.0, 0.0);
            mode_amp.push(a);
            for n in 1..=self.cutoffs[j] {
                a = a * scale / (n as f64).sqrt();
                mode_amp.push(a);
            }
            let mut next = Vec::with_capacity(amps.len() * mode_amp.len());
            for &hi in &amps {
                for &lo in &mode_amp {
                    next.push(hi * lo);
                }
            }
            amps = next;
        }
        let mut v = CVector::from_vec(amps);
        let norm = v.norm();
        v.scale_mut(1.0 / norm);
        Ok(v)
    }

    /// Coherent state as a pure density matrix |Ψ_z⟩⟨Ψ_z|.
    pub fn coherent_state(&self, z: &ModeVector) -> Result<CMatrix> {
        let v = self.coherent_vector(z)?;
        Ok(&v * v.adjoint())
    }

    /// Probability mass the un-truncated coherent state carries beyond the
    /// cutoffs: 1 − Π_j P(Poisson(|z_j|²/ε) ≤ cutoff_j).
    pub fn coherent_tail(&self, z: &ModeVector) -> Result<f64> {
        self.check_mode_vector(z)?;
        let mut retained = 1.0f64;
        for j in 0..self.modes() {
            let lambda = z[j].norm_sqr() / self.epsilon;
            retained *= poisson_cdf(lambda, self.cutoffs[j]);
        }
        Ok((1.0 - retained).max(0.0))
    }

    /// Antilinear-in-first inner product ⟨f,g⟩ = Σ_j conj(f_j) g_j.
    pub fn inner(f: &ModeVector, g: &ModeVector) -> C64 {
        f.iter().zip(g.iter()).map(|(a, b)| a.conj() * b).sum()
    }

    /// Max-norm of `[a_ε(f), a*_ε(g)] − ε⟨f,g⟩·I` over columns in the
    /// truncation-safe sub-block (occupations ≥ 1 below every cutoff).
    pub fn ccr_deviation(&self, f: &ModeVector, g: &ModeVector) -> Result<f64> {
        let a_f = self.annihilation(f)?;
        let c_g = self.creation(g)?;
        let comm = &a_f * &c_g - &c_g * &a_f;
        let expect = Self::inner(f, g) * self.epsilon;
        let safe = self.safe_indices(1);
        let mut dev: f64 = 0.0;
        for &col in &safe {
            for row in 0..self.dim {
                let want = if row == col { expect } else { C64::new(0.0, 0.0) };
                dev = dev.max((comm[(row, col)] - want).norm());
            }
        }
        Ok(dev)
    }
}

/// P(Poisson(λ) ≤ n), evaluated by the stable term recurrence.
pub fn poisson_cdf(lambda: f64, n: usize) -> f64 {
    if lambda == 0.0 {
        return 1.0;
    }
    let mut term = (-lambda).exp();
    let mut cdf = term;
    for k in 1..=n {
        term *= lambda / k as f64;
        cdf += term;
    }
    cdf.min(1.0)
}

/// Smallest cutoff that keeps the Poisson(λ) tail below `tail_bound`,
/// starting from the 4λ safety margin (and a floor of 8).
pub fn auto_cutoff(lambda: f64, tail_bound: f64) -> usize {
    let mut n = ((4.0 * lambda).ceil() as usize).max(8);
    while 1.0 - poisson_cdf(lambda, n) >= tail_bound {
        n += 4;
    }
    n
}
