//! State-valued measures on mode space: finite atomic ensembles
//! Σᵢ wᵢ δ_{zᵢ} ⊗ γᵢ with wᵢ > 0 and γᵢ density matrices on the spin space.
//!
//! These are the effective-side objects the microscopic dynamics converges
//! to. The noncommutative Fourier transform 𝔪̂(η) = Σᵢ wᵢ e^{2i Re⟨η,zᵢ⟩} γᵢ
//! is how measures are compared against reduced quantum states.

use crate::fock::{FockError, FockSpace, ModeVector};
use crate::linalg::{density_deviation, CMatrix, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("atom {index}: weight {weight} is not positive and finite")]
    BadWeight { index: usize, weight: f64 },
    #[error("atom {index}: point has {found} modes, expected {expected}")]
    ModeMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("atom {index}: spin block is {found}x{found}, expected {expected}x{expected}")]
    SpinDimMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("atom {index}: spin block is not a density matrix (deviation {deviation:.3e})")]
    NotDensity { index: usize, deviation: f64 },
    #[error("measure must contain at least one atom")]
    Empty,
    #[error("variance for mode {0} is not positive and finite")]
    BadVariance(usize),
    #[error(transparent)]
    Fock(#[from] FockError),
}

pub type Result<T> = std::result::Result<T, MeasureError>;

/// One atom wᵢ δ_{zᵢ} ⊗ γᵢ of an atomic state-valued measure.
#[derive(Debug, Clone)]
pub struct Atom {
    pub weight: f64,
    pub z: ModeVector,
    pub gamma: CMatrix,
}

/// Finite atomic state-valued measure. Atoms share the mode count and the
/// spin dimension; weights are positive but need not sum to one (the mass is
/// whatever the atoms carry).
#[derive(Debug, Clone)]
pub struct StateValuedMeasure {
    atoms: Vec<Atom>,
    modes: usize,
    d_spin: usize,
}

impl StateValuedMeasure {
    /// Validate and wrap a list of atoms. `strict_density` additionally
    /// requires every γᵢ to be a density matrix to 10⁻⁸ (trace, hermiticity,
    /// positivity); construction paths that normalize later can skip it.
    pub fn new(atoms: Vec<Atom>, strict_density: bool) -> Result<Self> {
        let first = atoms.first().ok_or(MeasureError::Empty)?;
        let modes = first.z.len();
        let d_spin = first.gamma.nrows();
        for (i, a) in atoms.iter().enumerate() {
            if !(a.weight > 0.0 && a.weight.is_finite()) {
                return Err(MeasureError::BadWeight {
                    index: i,
                    weight: a.weight,
                });
            }
            if a.z.len() != modes {
                return Err(MeasureError::ModeMismatch {
                    index: i,
                    expected: modes,
                    found: a.z.len(),
                });
            }
            if a.gamma.nrows() != d_spin || a.gamma.ncols() != d_spin {
                return Err(MeasureError::SpinDimMismatch {
                    index: i,
                    expected: d_spin,
                    found: a.gamma.nrows(),
                });
            }
            if strict_density {
                let (tr_dev, herm_dev, min_eig) =
                    density_deviation(&a.gamma).map_err(|_| MeasureError::NotDensity {
                        index: i,
                        deviation: f64::INFINITY,
                    })?;
                let dev = tr_dev.max(herm_dev).max((-min_eig).max(0.0));
                if dev > 1e-8 {
                    return Err(MeasureError::NotDensity { index: i, deviation: dev });
                }
            }
        }
        Ok(StateValuedMeasure {
            atoms,
            modes,
            d_spin,
        })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atoms_mut(&mut self) -> &mut [Atom] {
        &mut self.atoms
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn d_spin(&self) -> usize {
        self.d_spin
    }

    /// Total mass Σᵢ wᵢ·tr(γᵢ).
    pub fn total_mass(&self) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.weight * a.gamma.trace().re)
            .sum()
    }

    /// Noncommutative Fourier transform 𝔪̂(η) = Σᵢ wᵢ e^{2i Re⟨η,zᵢ⟩} γᵢ.
    pub fn fourier(&self, eta: &ModeVector) -> Result<CMatrix> {
        if eta.len() != self.modes {
            return Err(MeasureError::ModeMismatch {
                index: 0,
                expected: self.modes,
                found: eta.len(),
            });
        }
        let mut out = CMatrix::zeros(self.d_spin, self.d_spin);
        for a in &self.atoms {
            let phase = 2.0 * FockSpace::inner(eta, &a.z).re;
            let scalar = C64::new(0.0, phase).exp() * a.weight;
            out += a.gamma.map(|x| x * scalar);
        }
        Ok(out)
    }

    /// Barycenter of the spin marginal, Σᵢ wᵢ γᵢ (the Fourier transform at
    /// η = 0).
    pub fn barycenter(&self) -> CMatrix {
        let mut out = CMatrix::zeros(self.d_spin, self.d_spin);
        for a in &self.atoms {
            out += a.gamma.map(|x| x * a.weight);
        }
        out
    }

    /// Pushforward along the free-field mode rotation z ↦ e^{−itν}·diag rotation:
    /// z_j ↦ e^{−i t ν ω_j} z_j. Spin blocks and weights are untouched.
    pub fn pushforward_free_field(&self, omega: &[f64], nu: f64, t: f64) -> Result<Self> {
        if omega.len() != self.modes {
            return Err(MeasureError::ModeMismatch {
                index: 0,
                expected: self.modes,
                found: omega.len(),
            });
        }
        let atoms = self
            .atoms
            .iter()
            .map(|a| {
                let mut z = a.z.clone();
                for j in 0..z.len() {
                    z[j] *= C64::new(0.0, -t * nu * omega[j]).exp();
                }
                Atom {
                    weight: a.weight,
                    z,
                    gamma: a.gamma.clone(),
                }
            })
            .collect();
        Ok(StateValuedMeasure {
            atoms,
            modes: self.modes,
            d_spin: self.d_spin,
        })
    }
}

/// Sample K atoms of a Gaussian state-valued measure: points zᵢ are i.i.d.
/// circular complex Gaussians with the given per-mode variances
/// (E|z_j|² = variance_j), every spin block is `gamma0`, weights are 1/K.
/// Deterministic in `seed`.
pub fn sample_gaussian_measure(
    modes: usize,
    variances: &[f64],
    gamma0: &CMatrix,
    count: usize,
    seed: u64,
) -> Result<StateValuedMeasure> {
    if count == 0 {
        return Err(MeasureError::Empty);
    }
    if variances.len() != modes {
        return Err(MeasureError::ModeMismatch {
            index: 0,
            expected: modes,
            found: variances.len(),
        });
    }
    for (j, v) in variances.iter().enumerate() {
        if !(v.is_finite() && *v > 0.0) {
            return Err(MeasureError::BadVariance(j));
        }
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0f64, 1.0).expect("unit normal");
    let weight = 1.0 / count as f64;
    let mut atoms = Vec::with_capacity(count);
    for _ in 0..count {
        let mut z = ModeVector::zeros(modes);
        for j in 0..modes {
            // circular: re and im each N(0, variance/2)
            let sd = (variances[j] / 2.0).sqrt();
            let re = unit.sample(&mut rng) * sd;
            let im = unit.sample(&mut rng) * sd;
            z[j] = C64::new(re, im);
        }
        atoms.push(Atom {
            weight,
            z,
            gamma: gamma0.clone(),
        });
    }
    StateValuedMeasure::new(atoms, true)
}
