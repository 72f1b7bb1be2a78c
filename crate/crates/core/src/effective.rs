//! Effective quasi-classical dynamics on state-valued measures.
//!
//! For each mode point z the spin evolves under the time-dependent
//! Hamiltonian 𝔥(z,s) = 𝔖 + α_s(z)·𝔰 with the real classical field
//! α_s(z) = 2·Re⟨z, e^{iνsω}g⟩, while the point itself rotates freely,
//! z_j ↦ e^{−itνω_j}z_j. ν = 0 freezes the rotation (stationary regime),
//! ν = 1 keeps the full free-field motion.
//!
//! Propagators are built with a midpoint-exponential stepper (second order,
//! exactly unitary). Closed forms for commuting 𝔖, 𝔰 and a Dyson expansion
//! of the interaction-picture propagator serve as independent cross-checks.

use crate::fock::{Dispersion, FockSpace, ModeVector};
use crate::linalg::{
    herm_eig, hermiticity_deviation, max_abs, nuclear_norm, unitary_exp, CMatrix, LinalgError, C64,
};
use crate::measure::{Atom, MeasureError, StateValuedMeasure};
use crate::micro::SpinBosonModel;
use thiserror::Error;

/// Hard cap on the Dyson expansion depth; iterated trapezoid integrals lose
/// accuracy faster than they gain terms beyond this.
pub const MAX_DYSON_ORDER: usize = 8;

/// Target bound for one step's phase budget in the default step rule:
/// Δτ·(‖𝔖‖ + max|α|·‖𝔰‖) stays below this.
const STEP_BUDGET: f64 = 0.05;

#[derive(Debug, Error)]
pub enum EffectiveError {
    #[error("spin matrices must be square, Hermitian, and of equal dimension >= 2")]
    BadSpinBlock,
    #[error("nu must be finite and non-negative, got {0}")]
    BadNu(f64),
    #[error("mode count mismatch: omega has {omega}, g has {g}, z has {z}")]
    ModeMismatch { omega: usize, g: usize, z: usize },
    #[error("propagation needs at least 1 step")]
    NoSteps,
    #[error("Dyson order {0} exceeds the supported maximum {MAX_DYSON_ORDER}")]
    DysonOrderTooHigh(usize),
    #[error("closed form requires commuting spin blocks, max |[S,s]| = {0:.3e}")]
    NonCommuting(f64),
    #[error("time grid needs at least 2 points, got {0}")]
    GridTooCoarse(usize),
    #[error("measure spin dimension {found} does not match model dimension {expected}")]
    SpinDimMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

pub type Result<T> = std::result::Result<T, EffectiveError>;

/// Unitary effective propagator for a fixed mode point. `z` is the label at
/// the interval start: the generator over [t_from, t_to] is 𝔥(z,·) with that
/// label, where α continues the phase rotation from t_from.
#[derive(Debug, Clone)]
pub struct Propagator {
    pub u: CMatrix,
    pub t_from: f64,
    pub t_to: f64,
    pub z: ModeVector,
}

/// The limit dynamics datum (𝔖, 𝔰, ω, g, ν).
#[derive(Debug, Clone)]
pub struct EffectiveModel {
    spin_h: CMatrix,
    coupling: CMatrix,
    omega: Dispersion,
    form_factor: ModeVector,
    nu: f64,
}

impl EffectiveModel {
    pub fn new(
        spin_h: CMatrix,
        coupling: CMatrix,
        omega: Dispersion,
        form_factor: ModeVector,
        nu: f64,
    ) -> Result<Self> {
        let d = spin_h.nrows();
        if d < 2 || !spin_h.is_square() || !coupling.is_square() || coupling.nrows() != d {
            return Err(EffectiveError::BadSpinBlock);
        }
        for m in [&spin_h, &coupling] {
            if hermiticity_deviation(m) > 1e-8 * (1.0 + max_abs(m)) {
                return Err(EffectiveError::BadSpinBlock);
            }
        }
        if !(nu.is_finite() && nu >= 0.0) {
            return Err(EffectiveError::BadNu(nu));
        }
        if omega.modes() != form_factor.len() {
            return Err(EffectiveError::ModeMismatch {
                omega: omega.modes(),
                g: form_factor.len(),
                z: form_factor.len(),
            });
        }
        Ok(EffectiveModel {
            spin_h,
            coupling,
            omega,
            form_factor,
            nu,
        })
    }

    /// The limit companion of a microscopic model (ν = lim ε·ν(ε)).
    pub fn from_micro(model: &SpinBosonModel) -> Result<Self> {
        EffectiveModel::new(
            model.spin_h().clone(),
            model.coupling().clone(),
            model.omega().clone(),
            model.form_factor().clone(),
            model.regime().nu_limit(),
        )
    }

    pub fn spin_h(&self) -> &CMatrix {
        &self.spin_h
    }

    pub fn coupling(&self) -> &CMatrix {
        &self.coupling
    }

    pub fn omega(&self) -> &Dispersion {
        &self.omega
    }

    pub fn form_factor(&self) -> &ModeVector {
        &self.form_factor
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn d_spin(&self) -> usize {
        self.spin_h.nrows()
    }

    fn check_modes(&self, z: &ModeVector) -> Result<()> {
        if z.len() != self.omega.modes() {
            return Err(EffectiveError::ModeMismatch {
                omega: self.omega.modes(),
                g: self.form_factor.len(),
                z: z.len(),
            });
        }
        Ok(())
    }

    fn check_measure(&self, m: &StateValuedMeasure) -> Result<()> {
        if m.d_spin() != self.d_spin() {
            return Err(EffectiveError::SpinDimMismatch {
                expected: self.d_spin(),
                found: m.d_spin(),
            });
        }
        if m.modes() != self.omega.modes() {
            return Err(EffectiveError::ModeMismatch {
                omega: self.omega.modes(),
                g: self.form_factor.len(),
                z: m.modes(),
            });
        }
        Ok(())
    }

    /// Classical field α_s(z) = 2·Re Σ_j conj(z_j)·e^{iνsω_j}·g_j.
    pub fn alpha(&self, z: &ModeVector, s: f64) -> Result<f64> {
        self.check_modes(z)?;
        Ok(self.alpha_unchecked(z, s))
    }

    fn alpha_unchecked(&self, z: &ModeVector, s: f64) -> f64 {
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..z.len() {
            let phase = C64::new(0.0, self.nu * s * self.omega.frequencies()[j]).exp();
            acc += z[j].conj() * phase * self.form_factor[j];
        }
        2.0 * acc.re
    }

    /// 𝔥(z,s) = 𝔖 + α_s(z)·𝔰.
    pub fn hamiltonian(&self, z: &ModeVector, s: f64) -> Result<CMatrix> {
        let a = self.alpha(z, s)?;
        Ok(&self.spin_h + self.coupling.map(|x| x * a))
    }

    /// Step count making Δτ·(‖𝔖‖ + max|α|·‖𝔰‖) ≤ 0.05, with
    /// max|α| ≤ 2‖z‖‖g‖ by Cauchy-Schwarz. At least one step.
    pub fn default_steps(&self, z: &ModeVector, t_from: f64, t_to: f64) -> usize {
        let span = (t_to - t_from).abs();
        if span == 0.0 {
            return 1;
        }
        let alpha_max = 2.0 * z.norm() * self.form_factor.norm();
        let rate = spin_norm(&self.spin_h) + alpha_max * spin_norm(&self.coupling);
        ((span * rate / STEP_BUDGET).ceil() as usize).max(1)
    }

    /// Midpoint-exponential propagator over [t_from, t_to]:
    /// U = Π_k exp(−iΔτ·𝔥(z, τ_k + Δτ/2)). Second order, exactly unitary.
    pub fn propagate(
        &self,
        z: &ModeVector,
        t_from: f64,
        t_to: f64,
        steps: usize,
    ) -> Result<Propagator> {
        if steps == 0 {
            return Err(EffectiveError::NoSteps);
        }
        self.check_modes(z)?;
        let d = self.d_spin();
        let dt = (t_to - t_from) / steps as f64;
        let mut u = CMatrix::identity(d, d);
        for k in 0..steps {
            let mid = t_from + (k as f64 + 0.5) * dt;
            let h = self.hamiltonian(z, mid)?;
            u = unitary_exp(&h, -dt)? * u;
        }
        Ok(Propagator {
            u,
            t_from,
            t_to,
            z: z.clone(),
        })
    }

    /// [`propagate`][Self::propagate] with the default step rule.
    pub fn propagate_default(&self, z: &ModeVector, t_from: f64, t_to: f64) -> Result<Propagator> {
        self.propagate(z, t_from, t_to, self.default_steps(z, t_from, t_to))
    }

    /// Exact propagator over [0, t] when [𝔖, 𝔰] = 0:
    /// U(t) = exp(−it𝔖 − iA(t)𝔰) with A(t) = ∫₀ᵗ α_s(z) ds evaluated in
    /// closed form (mode-wise (e^{iνω_jt} − 1)/(iνω_j), with a series guard
    /// for |νω_jt| below 10⁻⁶).
    pub fn commuting_propagator(&self, z: &ModeVector, t: f64) -> Result<CMatrix> {
        self.check_modes(z)?;
        let comm = &self.spin_h * &self.coupling - &self.coupling * &self.spin_h;
        let dev = max_abs(&comm);
        if dev > 1e-10 * (1.0 + max_abs(&self.spin_h) * max_abs(&self.coupling)) {
            return Err(EffectiveError::NonCommuting(dev));
        }
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..z.len() {
            let nu_om = self.nu * self.omega.frequencies()[j];
            let theta = nu_om * t;
            // ∫₀ᵗ e^{iνω_j s} ds
            let window = if theta.abs() < 1e-6 {
                let it = C64::new(0.0, theta);
                (C64::new(1.0, 0.0) + it / 2.0 + it * it / 6.0) * t
            } else {
                (C64::new(0.0, theta).exp() - C64::new(1.0, 0.0)) / C64::new(0.0, nu_om)
            };
            acc += z[j].conj() * self.form_factor[j] * window;
        }
        let a_int = 2.0 * acc.re;
        let generator = self.spin_h.map(|x| x * t) + self.coupling.map(|x| x * a_int);
        Ok(unitary_exp(&generator, -1.0)?)
    }

    /// Interaction-picture coupling 𝔰(τ) = e^{iτ𝔖}·𝔰·e^{−iτ𝔖}.
    pub fn rotated_coupling(&self, tau: f64) -> Result<CMatrix> {
        let eig = herm_eig(&self.spin_h)?;
        let rot = eig.exp_is(tau);
        Ok(&rot * &self.coupling * rot.adjoint())
    }

    /// Interaction-picture propagator 𝔘̃ over [t_from, t_to]: midpoint rule
    /// for the generator B(τ) = α_τ(z)·𝔰(τ). Satisfies the factorization
    /// U_{t,0}(z) = e^{−it𝔖}·𝔘̃_{t,0}(z) up to integrator error.
    pub fn interaction_propagate(
        &self,
        z: &ModeVector,
        t_from: f64,
        t_to: f64,
        steps: usize,
    ) -> Result<CMatrix> {
        if steps == 0 {
            return Err(EffectiveError::NoSteps);
        }
        self.check_modes(z)?;
        let d = self.d_spin();
        let spin_eig = herm_eig(&self.spin_h)?;
        let dt = (t_to - t_from) / steps as f64;
        let mut u = CMatrix::identity(d, d);
        for k in 0..steps {
            let mid = t_from + (k as f64 + 0.5) * dt;
            let rot = spin_eig.exp_is(mid);
            let b = (&rot * &self.coupling * rot.adjoint()).map(|x| x * self.alpha_unchecked(z, mid));
            u = unitary_exp(&b, -dt)? * u;
        }
        Ok(u)
    }

    /// Dyson partial sum for the interaction-picture propagator:
    /// 𝔘̃(t) ≈ Σ_{m=0}^{order} (−i)^m K_m(t) with
    /// K_m(s) = ∫₀ˢ B(u)·K_{m−1}(u) du (time-ordered: the latest time sits
    /// leftmost), iterated with cumulative trapezoid sums on a uniform grid
    /// of `grid_steps` intervals. Returned in the full picture,
    /// e^{−it𝔖}·Σ(−i)^m K_m(t).
    pub fn dyson_partial_sum(
        &self,
        z: &ModeVector,
        t: f64,
        order: usize,
        grid_steps: usize,
    ) -> Result<CMatrix> {
        if order > MAX_DYSON_ORDER {
            return Err(EffectiveError::DysonOrderTooHigh(order));
        }
        if grid_steps == 0 {
            return Err(EffectiveError::NoSteps);
        }
        self.check_modes(z)?;
        let d = self.d_spin();
        let n = grid_steps + 1;
        let dt = t / grid_steps as f64;
        let spin_eig = herm_eig(&self.spin_h)?;
        let b_grid: Vec<CMatrix> = (0..n)
            .map(|i| {
                let u = i as f64 * dt;
                let rot = spin_eig.exp_is(u);
                (&rot * &self.coupling * rot.adjoint()).map(|x| x * self.alpha_unchecked(z, u))
            })
            .collect();
        let mut sum = CMatrix::identity(d, d);
        let mut k_prev: Vec<CMatrix> = vec![CMatrix::identity(d, d); n];
        let minus_i = C64::new(0.0, -1.0);
        let mut phase = C64::new(1.0, 0.0);
        for _m in 1..=order {
            let mut k_next = vec![CMatrix::zeros(d, d); n];
            for i in 1..n {
                let increment =
                    (&b_grid[i - 1] * &k_prev[i - 1] + &b_grid[i] * &k_prev[i]).map(|x| x * (dt / 2.0));
                k_next[i] = &k_next[i - 1] + increment;
            }
            phase *= minus_i;
            sum += k_next[n - 1].map(|x| x * phase);
            k_prev = k_next;
        }
        Ok(spin_eig.exp_is(-t) * sum)
    }

    /// Push a measure through the effective flow for a duration `t`:
    /// spin blocks γ ↦ U γ U† with U built from each atom's current point,
    /// then points rotate z_j ↦ e^{−itνω_j}z_j. Weights (hence total mass)
    /// are untouched. `steps = None` applies the default step rule per atom.
    pub fn evolve_measure(
        &self,
        measure: &StateValuedMeasure,
        t: f64,
        steps: Option<usize>,
    ) -> Result<StateValuedMeasure> {
        self.check_measure(measure)?;
        let mut atoms = Vec::with_capacity(measure.atoms().len());
        for a in measure.atoms() {
            let n = steps.unwrap_or_else(|| self.default_steps(&a.z, 0.0, t));
            let prop = self.propagate(&a.z, 0.0, t, n)?;
            let gamma = &prop.u * &a.gamma * prop.u.adjoint();
            let mut z = a.z.clone();
            for j in 0..z.len() {
                z[j] *= C64::new(0.0, -t * self.nu * self.omega.frequencies()[j]).exp();
            }
            atoms.push(Atom {
                weight: a.weight,
                z,
                gamma,
            });
        }
        Ok(StateValuedMeasure::new(atoms, false)?)
    }

    /// Time grid of the interaction-picture measure flow over [s, t]:
    /// points stay fixed, spin blocks follow 𝔘̃ with generator α_τ(z)·𝔰(τ).
    /// Returns `intervals + 1` measures; each interval is crossed with
    /// `substeps` midpoint steps. The initial measure is taken at time 0 and
    /// first carried to s with the default step rule.
    pub fn interaction_family(
        &self,
        measure: &StateValuedMeasure,
        s: f64,
        t: f64,
        intervals: usize,
        substeps: usize,
    ) -> Result<Vec<StateValuedMeasure>> {
        if intervals == 0 || substeps == 0 {
            return Err(EffectiveError::NoSteps);
        }
        self.check_measure(measure)?;
        let mut current: Vec<Atom> = Vec::with_capacity(measure.atoms().len());
        for a in measure.atoms() {
            let gamma = if s == 0.0 {
                a.gamma.clone()
            } else {
                let n = self.default_steps(&a.z, 0.0, s);
                let u = self.interaction_propagate(&a.z, 0.0, s, n)?;
                &u * &a.gamma * u.adjoint()
            };
            current.push(Atom {
                weight: a.weight,
                z: a.z.clone(),
                gamma,
            });
        }
        let mut family = Vec::with_capacity(intervals + 1);
        family.push(StateValuedMeasure::new(current.clone(), false)?);
        let dt = (t - s) / intervals as f64;
        for i in 0..intervals {
            let from = s + i as f64 * dt;
            let to = from + dt;
            for a in current.iter_mut() {
                let u = self.interaction_propagate(&a.z, from, to, substeps)?;
                a.gamma = &u * &a.gamma * u.adjoint();
            }
            family.push(StateValuedMeasure::new(current.clone(), false)?);
        }
        Ok(family)
    }

    /// Trace-norm residual of the measure transport identity over [s, t]:
    /// ‖(𝔪̂_t(η) − 𝔪̂_s(η)) − i∫ₛᵗ Σᵢ wᵢ·αᵢ(τ)·e^{2iRe⟨η,zᵢ⟩}·[γᵢ(τ), 𝔰(τ)] dτ‖₁
    /// with trapezoidal quadrature on the family's uniform grid. `family`
    /// must come from the interaction-picture flow (points fixed).
    pub fn transport_residual(
        &self,
        family: &[StateValuedMeasure],
        eta: &ModeVector,
        s: f64,
        t: f64,
    ) -> Result<f64> {
        self.transport_residual_hooked(family, eta, s, t, false)
    }

    /// [`transport_residual`][Self::transport_residual] with a negative-control
    /// hook: `flip_alpha` deliberately mis-signs the classical field in the
    /// integrand, which must break the identity. Used by the invariant suite.
    pub fn transport_residual_hooked(
        &self,
        family: &[StateValuedMeasure],
        eta: &ModeVector,
        s: f64,
        t: f64,
        flip_alpha: bool,
    ) -> Result<f64> {
        let n = family.len();
        if n < 2 {
            return Err(EffectiveError::GridTooCoarse(n));
        }
        self.check_modes(eta)?;
        for m in family {
            self.check_measure(m)?;
        }
        let d = self.d_spin();
        let dt = (t - s) / (n - 1) as f64;
        let sign = if flip_alpha { -1.0 } else { 1.0 };
        let mut integral = CMatrix::zeros(d, d);
        for (i, m) in family.iter().enumerate() {
            let tau = s + i as f64 * dt;
            let s_tau = self.rotated_coupling(tau)?;
            let mut slice = CMatrix::zeros(d, d);
            for a in m.atoms() {
                let alpha = sign * self.alpha_unchecked(&a.z, tau);
                let phase = C64::new(0.0, 2.0 * FockSpace::inner(eta, &a.z).re).exp();
                let comm = &a.gamma * &s_tau - &s_tau * &a.gamma;
                slice += comm.map(|x| x * (phase * (a.weight * alpha)));
            }
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            integral += slice.map(|x| x * (w * dt));
        }
        let delta = family[n - 1].fourier(eta)? - family[0].fourier(eta)?;
        let residual = delta - integral.map(|x| x * C64::new(0.0, 1.0));
        Ok(nuclear_norm(&residual))
    }
}

/// Operator (spectral) norm of a small Hermitian matrix.
fn spin_norm(a: &CMatrix) -> f64 {
    match herm_eig(a) {
        Ok(e) => e.eigenvalues.iter().map(|l| l.abs()).fold(0.0, f64::max),
        Err(_) => max_abs(a) * a.nrows() as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{trace_distance, unitarity_deviation};
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn sigma_z() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
    }

    fn sigma_x() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
    }

    fn mixed_gamma() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(0.75, 0.), c(0.25, 0.), c(0.25, 0.), c(0.25, 0.)])
    }

    fn standard(nu: f64) -> EffectiveModel {
        EffectiveModel::new(
            sigma_z(),
            sigma_x(),
            Dispersion::new(vec![1.0]).unwrap(),
            ModeVector::from_row_slice(&[c(1., 0.)]),
            nu,
        )
        .unwrap()
    }

    fn unit_z() -> ModeVector {
        ModeVector::from_row_slice(&[c(1., 0.)])
    }

    #[test]
    fn alpha_oracles() {
        let frozen = standard(0.0);
        let moving = standard(1.0);
        let z = unit_z();
        for s in [0.0, 0.4, 1.7] {
            assert_abs_diff_eq!(frozen.alpha(&z, s).unwrap(), 2.0, epsilon = 1e-14);
            assert_abs_diff_eq!(moving.alpha(&z, s).unwrap(), 2.0 * s.cos(), epsilon = 1e-14);
        }
        // complex z against complex g: α = 2 Re(conj(z)·e^{is}·g)
        let m2 = EffectiveModel::new(
            sigma_z(),
            sigma_x(),
            Dispersion::new(vec![2.0]).unwrap(),
            ModeVector::from_row_slice(&[c(0.3, -0.4)]),
            1.0,
        )
        .unwrap();
        let zc = ModeVector::from_row_slice(&[c(0.5, 0.2)]);
        let s = 0.9;
        let expect = 2.0 * (zc[0].conj() * C64::new(0.0, 2.0 * s).exp() * c(0.3, -0.4)).re;
        assert_abs_diff_eq!(m2.alpha(&zc, s).unwrap(), expect, epsilon = 1e-14);
    }

    #[test]
    fn propagator_is_unitary_and_composes() {
        let model = standard(1.0);
        let z = ModeVector::from_row_slice(&[c(0.8, -0.5)]);
        let full = model.propagate(&z, 0.0, 1.2, 480).unwrap();
        assert!(unitarity_deviation(&full.u) < 1e-12);
        let first = model.propagate(&z, 0.0, 0.5, 200).unwrap();
        let second = model.propagate(&z, 0.5, 1.2, 280).unwrap();
        let composed = &second.u * &first.u;
        assert!(max_abs(&(composed - full.u)) < 1e-5);
    }

    #[test]
    fn commuting_closed_form_matches_integrator() {
        // dephasing setup: 𝔰 commutes with 𝔖
        for nu in [0.0, 1.0] {
            let model = EffectiveModel::new(
                sigma_z(),
                sigma_z().map(|x| x * 0.7),
                Dispersion::new(vec![1.3]).unwrap(),
                ModeVector::from_row_slice(&[c(0.6, 0.2)]),
                nu,
            )
            .unwrap();
            let z = ModeVector::from_row_slice(&[c(0.9, -0.3)]);
            let t = 1.1;
            let exact = model.commuting_propagator(&z, t).unwrap();
            let stepped = model.propagate(&z, 0.0, t, 2000).unwrap();
            assert!(
                max_abs(&(exact.clone() - stepped.u)) < 1e-6,
                "nu = {nu}"
            );
            assert!(unitarity_deviation(&exact) < 1e-12);
        }
        // non-commuting pair is rejected
        let bad = standard(0.0).commuting_propagator(&unit_z(), 1.0);
        assert!(matches!(bad, Err(EffectiveError::NonCommuting(_))));
    }

    #[test]
    fn interaction_picture_factorization() {
        let model = standard(1.0);
        let z = ModeVector::from_row_slice(&[c(0.7, 0.4)]);
        let t = 0.9;
        let full = model.propagate(&z, 0.0, t, 1600).unwrap();
        let tilde = model.interaction_propagate(&z, 0.0, t, 1600).unwrap();
        let free = unitary_exp(&sigma_z(), -t).unwrap();
        assert!(max_abs(&(free * tilde - full.u)) < 2e-6);
    }

    #[test]
    fn dyson_expansion_converges_to_propagator() {
        let model = standard(1.0);
        let z = ModeVector::from_row_slice(&[c(0.4, 0.1)]);
        let t = 0.3;
        let reference = model.propagate(&z, 0.0, t, 4000).unwrap().u;
        // order 0 is just the free rotation
        let d0 = model.dyson_partial_sum(&z, t, 0, 64).unwrap();
        assert!(max_abs(&(d0 - unitary_exp(&sigma_z(), -t).unwrap())) < 1e-12);
        // successive orders shrink the defect
        let mut last = f64::INFINITY;
        for order in [1usize, 2, 4, 6] {
            let d = model.dyson_partial_sum(&z, t, order, 512).unwrap();
            let err = max_abs(&(d - reference.clone()));
            assert!(err < last, "order {order}: {err} !< {last}");
            last = err;
        }
        assert!(last < 1e-6, "order-6 defect {last}");
        assert!(matches!(
            model.dyson_partial_sum(&z, t, 9, 64),
            Err(EffectiveError::DysonOrderTooHigh(9))
        ));
    }

    fn three_atom_measure() -> StateValuedMeasure {
        StateValuedMeasure::new(
            vec![
                Atom {
                    weight: 0.5,
                    z: unit_z(),
                    gamma: mixed_gamma(),
                },
                Atom {
                    weight: 0.3,
                    z: ModeVector::from_row_slice(&[c(0.6, -0.4)]),
                    gamma: CMatrix::from_row_slice(
                        2,
                        2,
                        &[c(0.5, 0.), c(0.5, 0.), c(0.5, 0.), c(0.5, 0.)],
                    ),
                },
                Atom {
                    weight: 0.2,
                    z: ModeVector::from_row_slice(&[c(-0.3, 0.8)]),
                    gamma: CMatrix::from_row_slice(
                        2,
                        2,
                        &[c(1., 0.), c(0., 0.), c(0., 0.), c(0., 0.)],
                    ),
                },
            ],
            true,
        )
        .unwrap()
    }

    #[test]
    fn measure_evolution_conserves_mass_and_composes() {
        let model = standard(1.0);
        let m0 = three_atom_measure();
        let m1 = model.evolve_measure(&m0, 0.8, None).unwrap();
        // weights are copied bit-exactly; traces drift only at machine level
        assert_abs_diff_eq!(m1.total_mass(), m0.total_mass(), epsilon = 1e-13);
        for (a, b) in m0.atoms().iter().zip(m1.atoms().iter()) {
            assert_abs_diff_eq!(a.weight, b.weight, epsilon = 0.0);
            assert_abs_diff_eq!(a.z.norm(), b.z.norm(), epsilon = 1e-14);
            assert!((b.gamma.trace() - a.gamma.trace()).norm() < 1e-13);
        }
        // two short pushes agree with one long one up to integrator error
        let two = model
            .evolve_measure(&model.evolve_measure(&m0, 0.4, Some(400)).unwrap(), 0.4, Some(400))
            .unwrap();
        let one = model.evolve_measure(&m0, 0.8, Some(800)).unwrap();
        for (a, b) in two.atoms().iter().zip(one.atoms().iter()) {
            assert!(trace_distance(&a.gamma, &b.gamma).unwrap() < 1e-6);
            assert!((a.z[0] - b.z[0]).norm() < 1e-13);
        }
    }

    #[test]
    fn g_zero_dynamics_is_free_spin_rotation() {
        let model = EffectiveModel::new(
            sigma_z(),
            sigma_x(),
            Dispersion::new(vec![1.0]).unwrap(),
            ModeVector::from_row_slice(&[c(0., 0.)]),
            1.0,
        )
        .unwrap();
        let m0 = three_atom_measure();
        let t = 1.4;
        let m1 = model.evolve_measure(&m0, t, None).unwrap();
        let u = unitary_exp(&sigma_z(), -t).unwrap();
        for (a, b) in m0.atoms().iter().zip(m1.atoms().iter()) {
            let expect = &u * &a.gamma * u.adjoint();
            assert!(max_abs(&(expect - b.gamma.clone())) < 1e-12);
        }
    }

    #[test]
    fn transport_identity_holds_and_sign_flip_breaks_it() {
        for nu in [0.0, 1.0] {
            let model = standard(nu);
            let m0 = three_atom_measure();
            let (s, t) = (0.0, 0.6);
            let eta = ModeVector::from_row_slice(&[c(0.5, 0.0)]);
            let family = model.interaction_family(&m0, s, t, 192, 1).unwrap();
            let r = model.transport_residual(&family, &eta, s, t).unwrap();
            assert!(r < 5e-5, "nu = {nu}: residual {r}");
            let coarse = model.interaction_family(&m0, s, t, 48, 1).unwrap();
            let r_coarse = model.transport_residual(&coarse, &eta, s, t).unwrap();
            // second-order quadrature: 4x finer grid cuts the residual ~16x
            assert!(
                r_coarse / r > 8.0,
                "nu = {nu}: coarse {r_coarse} vs fine {r}"
            );
            let flipped = model
                .transport_residual_hooked(&family, &eta, s, t, true)
                .unwrap();
            assert!(flipped > 100.0 * r, "nu = {nu}: flipped {flipped} vs {r}");
        }
    }

    #[test]
    fn transport_residual_vanishes_for_g_zero() {
        let model = EffectiveModel::new(
            sigma_z(),
            sigma_x(),
            Dispersion::new(vec![1.0]).unwrap(),
            ModeVector::from_row_slice(&[c(0., 0.)]),
            1.0,
        )
        .unwrap();
        let m0 = three_atom_measure();
        let family = model.interaction_family(&m0, 0.0, 1.0, 16, 1).unwrap();
        let eta = ModeVector::from_row_slice(&[c(0.7, -0.2)]);
        let r = model
            .transport_residual(&family, &eta, 0.0, 1.0)
            .unwrap();
        assert!(r < 1e-12, "residual {r}");
    }

    #[test]
    fn default_steps_scale_with_field_strength() {
        let model = standard(1.0);
        let small = model.default_steps(&ModeVector::from_row_slice(&[c(0.1, 0.)]), 0.0, 1.0);
        let large = model.default_steps(&ModeVector::from_row_slice(&[c(3.0, 0.)]), 0.0, 1.0);
        assert!(large > small);
        // budget satisfied: Δτ·rate ≤ 0.05
        let z = ModeVector::from_row_slice(&[c(3.0, 0.)]);
        let rate = 1.0 + 2.0 * 3.0;
        assert!(1.0 / large as f64 * rate <= 0.05 + 1e-12);
        assert_eq!(model.default_steps(&z, 0.7, 0.7), 1);
    }
}
