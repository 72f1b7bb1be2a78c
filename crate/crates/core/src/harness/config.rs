//! Experiment configuration: TOML schema, validation, and derived builders
//! (Fock spaces with safe cutoffs, microscopic/effective models, η-grids).
//!
//! Schema (complex scalars are `[re, im]` pairs, matrices are rows of them):
//!
//! ```toml
//! [model]
//! spin_h    = [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [-1.0, 0.0]]]
//! coupling  = [[[0.0, 0.0], [1.0, 0.0]], [[1.0, 0.0], [0.0, 0.0]]]
//! omega     = [1.0]
//! g         = [[1.0, 0.0]]
//! nu_regime = "stationary"          # or "freefield"
//!
//! [[initial.atoms]]                 # alternatively [initial.gaussian]
//! weight = 1.0
//! z      = [[1.0, 0.0]]
//! gamma  = [[[0.75, 0.0], [0.25, 0.0]], [[0.25, 0.0], [0.25, 0.0]]]
//!
//! [sweep]
//! epsilon_grid = [0.25, 0.125, 0.0625, 0.03125]   # strictly decreasing
//! time_grid    = [0.5, 1.0, 2.0]
//!
//! [output]
//! dir = "out"
//! ```

use crate::effective::EffectiveModel;
use crate::fock::{auto_cutoff, Dispersion, FockSpace, ModeVector};
use crate::linalg::{spectral_norm, CMatrix, C64};
use crate::measure::{sample_gaussian_measure, Atom, StateValuedMeasure};
use crate::micro::{NuRegime, SpinBosonModel};
use serde::Deserialize;
use std::path::{Path, PathBuf};

use super::{HarnessError, Result};

fn err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: RawModel,
    initial: RawInitial,
    #[serde(default)]
    sweep: RawSweep,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    spin_h: Vec<Vec<[f64; 2]>>,
    coupling: Vec<Vec<[f64; 2]>>,
    omega: Vec<f64>,
    g: Vec<[f64; 2]>,
    nu_regime: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    #[serde(default)]
    atoms: Vec<RawAtom>,
    gaussian: Option<RawGaussian>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAtom {
    weight: f64,
    z: Vec<[f64; 2]>,
    gamma: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGaussian {
    variances: Vec<f64>,
    gamma: Vec<Vec<[f64; 2]>>,
    count: usize,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSweep {
    epsilon_grid: Option<Vec<f64>>,
    time_grid: Option<Vec<f64>>,
    cutoffs: Option<Vec<Vec<usize>>>,
    tail_bound: Option<f64>,
    eta_points_per_ray: Option<usize>,
    eta_max: Option<f64>,
    duhamel_eta: Option<Vec<[f64; 2]>>,
    residual_steps: Option<usize>,
    effective_steps: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawOutput {
    dir: Option<String>,
    dump_states: Option<bool>,
}

/// Initial data: either an explicit atomic measure or the parameters of a
/// seeded Gaussian sampler (resolved to atoms at runtime).
#[derive(Debug, Clone)]
pub enum InitialData {
    Atoms(Vec<Atom>),
    Gaussian {
        variances: Vec<f64>,
        gamma0: CMatrix,
        count: usize,
    },
}

/// Validated experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub spin_h: CMatrix,
    pub coupling: CMatrix,
    pub omega: Dispersion,
    pub g: ModeVector,
    pub regime: NuRegime,
    pub initial: InitialData,
    /// Strictly decreasing positive ε values.
    pub epsilon_grid: Vec<f64>,
    pub time_grid: Vec<f64>,
    /// Explicit per-ε cutoffs (aligned with `epsilon_grid`); `None` = auto.
    pub cutoffs: Option<Vec<Vec<usize>>>,
    /// Poisson tail bound driving the auto cutoff rule.
    pub tail_bound: f64,
    /// η-grid: this many points per ray, on two rays (real and imaginary
    /// direction) per mode.
    pub eta_points_per_ray: usize,
    pub eta_max: f64,
    /// Probe direction for the Duhamel/transport residual columns.
    pub duhamel_eta: ModeVector,
    /// Quadrature intervals per unit time for residual columns (minimum
    /// total, scaled up with t).
    pub residual_steps: usize,
    /// Fixed effective-integrator step count; `None` applies the step rule.
    pub effective_steps: Option<usize>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub dump_states: bool,
}

fn complex(entry: [f64; 2]) -> C64 {
    C64::new(entry[0], entry[1])
}

fn matrix(rows: &[Vec<[f64; 2]>], what: &str) -> Result<CMatrix> {
    let n = rows.len();
    if n == 0 {
        return Err(err(format!("{what}: empty matrix")));
    }
    for r in rows {
        if r.len() != n {
            return Err(err(format!("{what}: matrix must be square")));
        }
    }
    Ok(CMatrix::from_fn(n, n, |i, j| complex(rows[i][j])))
}

fn mode_vector(entries: &[[f64; 2]]) -> ModeVector {
    ModeVector::from_fn(entries.len(), |j, _| complex(entries[j]))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text)?;
        Self::from_raw(raw)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    fn from_raw(raw: RawConfig) -> Result<Self> {
        let spin_h = matrix(&raw.model.spin_h, "model.spin_h")?;
        let coupling = matrix(&raw.model.coupling, "model.coupling")?;
        if coupling.nrows() != spin_h.nrows() {
            return Err(err("model: spin_h and coupling dimensions differ"));
        }
        let omega = Dispersion::new(raw.model.omega.clone())?;
        let g = mode_vector(&raw.model.g);
        if g.len() != omega.modes() {
            return Err(err("model: omega and g mode counts differ"));
        }
        let regime = NuRegime::parse(&raw.model.nu_regime)
            .map_err(|e| err(format!("model.nu_regime: {e}")))?;

        let initial = match (&raw.initial.atoms[..], &raw.initial.gaussian) {
            ([], None) => return Err(err("initial: provide atoms or a gaussian block")),
            (atoms, None) => {
                let mut parsed = Vec::with_capacity(atoms.len());
                for (i, a) in atoms.iter().enumerate() {
                    let z = mode_vector(&a.z);
                    if z.len() != omega.modes() {
                        return Err(err(format!(
                            "initial.atoms[{i}]: z has {} modes, model has {}",
                            z.len(),
                            omega.modes()
                        )));
                    }
                    let gamma = matrix(&a.gamma, &format!("initial.atoms[{i}].gamma"))?;
                    if gamma.nrows() != spin_h.nrows() {
                        return Err(err(format!(
                            "initial.atoms[{i}]: gamma dimension mismatch"
                        )));
                    }
                    parsed.push(Atom {
                        weight: a.weight,
                        z,
                        gamma,
                    });
                }
                InitialData::Atoms(parsed)
            }
            ([], Some(gauss)) => {
                if gauss.variances.len() != omega.modes() {
                    return Err(err("initial.gaussian: variance count != mode count"));
                }
                let gamma0 = matrix(&gauss.gamma, "initial.gaussian.gamma")?;
                if gamma0.nrows() != spin_h.nrows() {
                    return Err(err("initial.gaussian: gamma dimension mismatch"));
                }
                InitialData::Gaussian {
                    variances: gauss.variances.clone(),
                    gamma0,
                    count: gauss.count,
                }
            }
            (_, Some(_)) => {
                return Err(err("initial: atoms and gaussian are mutually exclusive"))
            }
        };

        let epsilon_grid = raw
            .sweep
            .epsilon_grid
            .unwrap_or_else(|| vec![0.25, 0.125, 0.0625, 0.03125]);
        if epsilon_grid.is_empty() {
            return Err(err("sweep.epsilon_grid: empty"));
        }
        for w in epsilon_grid.windows(2) {
            if !(w[1] < w[0]) {
                return Err(err("sweep.epsilon_grid: must be strictly decreasing"));
            }
        }
        if !epsilon_grid.iter().all(|e| *e > 0.0 && e.is_finite()) {
            return Err(err("sweep.epsilon_grid: entries must be positive"));
        }

        let time_grid = raw.sweep.time_grid.unwrap_or_else(|| vec![0.5, 1.0, 2.0]);
        if time_grid.is_empty() || !time_grid.iter().all(|t| *t >= 0.0 && t.is_finite()) {
            return Err(err("sweep.time_grid: need finite non-negative times"));
        }

        if let Some(cuts) = &raw.sweep.cutoffs {
            if cuts.len() != epsilon_grid.len() {
                return Err(err("sweep.cutoffs: one entry per epsilon required"));
            }
            for c in cuts {
                if c.len() != omega.modes() {
                    return Err(err("sweep.cutoffs: per-mode entry count mismatch"));
                }
            }
        }

        let duhamel_eta = match &raw.sweep.duhamel_eta {
            Some(entries) => {
                if entries.len() != omega.modes() {
                    return Err(err("sweep.duhamel_eta: mode count mismatch"));
                }
                mode_vector(entries)
            }
            None => ModeVector::from_element(omega.modes(), C64::new(0.5, 0.0)),
        };

        let eta_points_per_ray = raw.sweep.eta_points_per_ray.unwrap_or(4);
        if eta_points_per_ray == 0 {
            return Err(err("sweep.eta_points_per_ray: must be >= 1"));
        }

        Ok(ExperimentConfig {
            spin_h,
            coupling,
            omega,
            g,
            regime,
            initial,
            epsilon_grid,
            time_grid,
            cutoffs: raw.sweep.cutoffs,
            tail_bound: raw.sweep.tail_bound.unwrap_or(1e-8),
            eta_points_per_ray,
            eta_max: raw.sweep.eta_max.unwrap_or(1.0),
            duhamel_eta,
            residual_steps: raw.sweep.residual_steps.unwrap_or(256),
            effective_steps: raw.sweep.effective_steps,
            seed: raw.sweep.seed.unwrap_or(7),
            out_dir: PathBuf::from(raw.output.dir.unwrap_or_else(|| "out".to_string())),
            dump_states: raw.output.dump_states.unwrap_or(false),
        })
    }

    /// The canonical 2-level test configuration: 𝔖 = σ_z, 𝔰 = σ_x, one mode
    /// with ω = 1, g = 1, a single coherent atom at z = 1 carrying the mixed
    /// spin state [[3/4, 1/4], [1/4, 1/4]].
    pub fn standard(regime: NuRegime) -> Self {
        let c = C64::new;
        let spin_h = CMatrix::from_row_slice(
            2,
            2,
            &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)],
        );
        let coupling = CMatrix::from_row_slice(
            2,
            2,
            &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)],
        );
        let gamma0 = CMatrix::from_row_slice(
            2,
            2,
            &[c(0.75, 0.), c(0.25, 0.), c(0.25, 0.), c(0.25, 0.)],
        );
        ExperimentConfig {
            spin_h,
            coupling,
            omega: Dispersion::new(vec![1.0]).expect("positive"),
            g: ModeVector::from_element(1, c(1.0, 0.0)),
            regime,
            initial: InitialData::Atoms(vec![Atom {
                weight: 1.0,
                z: ModeVector::from_element(1, c(1.0, 0.0)),
                gamma: gamma0,
            }]),
            epsilon_grid: vec![0.25, 0.125, 0.0625, 0.03125],
            time_grid: vec![0.5, 1.0, 2.0],
            cutoffs: None,
            tail_bound: 1e-8,
            eta_points_per_ray: 4,
            eta_max: 1.0,
            duhamel_eta: ModeVector::from_element(1, c(0.5, 0.0)),
            residual_steps: 256,
            effective_steps: None,
            seed: 7,
            out_dir: PathBuf::from("out"),
            dump_states: false,
        }
    }

    pub fn modes(&self) -> usize {
        self.omega.modes()
    }

    pub fn d_spin(&self) -> usize {
        self.spin_h.nrows()
    }

    pub fn max_time(&self) -> f64 {
        self.time_grid.iter().cloned().fold(0.0, f64::max)
    }

    /// Resolve the initial measure (sampling the Gaussian case with `seed`).
    pub fn initial_measure(&self, seed: u64) -> Result<StateValuedMeasure> {
        match &self.initial {
            InitialData::Atoms(atoms) => Ok(StateValuedMeasure::new(atoms.clone(), true)?),
            InitialData::Gaussian {
                variances,
                gamma0,
                count,
            } => Ok(sample_gaussian_measure(
                self.modes(),
                variances,
                gamma0,
                *count,
                seed,
            )?),
        }
    }

    /// Per-mode cutoffs for ε index `idx`: explicit if configured, otherwise
    /// `auto_cutoff` on the worst-case mean occupation over atoms, inflated
    /// by the dynamical displacement bound ‖𝔰‖·|g_j|·ε·t_max.
    pub fn cutoffs_for(&self, measure: &StateValuedMeasure, idx: usize) -> Result<Vec<usize>> {
        if let Some(explicit) = &self.cutoffs {
            return Ok(explicit[idx].clone());
        }
        let eps = self.epsilon_grid[idx];
        let coupling_norm = spectral_norm(&self.coupling);
        let t_max = self.max_time();
        let mut cutoffs = Vec::with_capacity(self.modes());
        for j in 0..self.modes() {
            let drift = eps * coupling_norm * self.g[j].norm() * t_max;
            let mut lambda: f64 = 0.0;
            for a in measure.atoms() {
                let amp = a.z[j].norm() + drift;
                lambda = lambda.max(amp * amp / eps);
            }
            cutoffs.push(auto_cutoff(lambda, self.tail_bound));
        }
        Ok(cutoffs)
    }

    /// Microscopic model at ε index `idx` with safe cutoffs for `measure`.
    pub fn micro_model(
        &self,
        measure: &StateValuedMeasure,
        idx: usize,
    ) -> Result<SpinBosonModel> {
        let cutoffs = self.cutoffs_for(measure, idx)?;
        let fock = FockSpace::new(cutoffs, self.epsilon_grid[idx])?;
        Ok(SpinBosonModel::new(
            self.spin_h.clone(),
            self.coupling.clone(),
            self.omega.clone(),
            self.g.clone(),
            self.regime,
            fock,
        )?)
    }

    /// The ν-limit effective model of this configuration.
    pub fn effective_model(&self) -> Result<EffectiveModel> {
        Ok(EffectiveModel::new(
            self.spin_h.clone(),
            self.coupling.clone(),
            self.omega.clone(),
            self.g.clone(),
            self.regime.nu_limit(),
        )?)
    }

    /// Fourier probe grid: per mode, `eta_points_per_ray` points on the real
    /// ray c·e_j and the same on the imaginary ray ic·e_j, with c spaced
    /// uniformly up to `eta_max`.
    pub fn eta_grid(&self) -> Vec<ModeVector> {
        let mut grid = Vec::new();
        let n = self.eta_points_per_ray;
        for j in 0..self.modes() {
            for ray in 0..2 {
                for k in 1..=n {
                    let c = self.eta_max * k as f64 / n as f64;
                    let mut eta = ModeVector::zeros(self.modes());
                    eta[j] = if ray == 0 {
                        C64::new(c, 0.0)
                    } else {
                        C64::new(0.0, c)
                    };
                    grid.push(eta);
                }
            }
        }
        grid
    }
}
