//! Microscopic spin-boson model: assembly of H_ε, exact evolution on the
//! truncated joint space, and the diagnostics (quantum Fourier transform,
//! number moments, Duhamel residual) the limit theorem is stated through.
//!
//! The Hamiltonian is H_ε = 𝔖⊗1 + ν(ε)·1⊗dΓ_ε(ω) + 𝔰⊗φ_ε(g) with ν(ε)
//! resolved from the regime. Evolution diagonalizes H_ε (and the free part)
//! once per model and conjugates for every t.
//!
//! Two state representations coexist:
//! - [`JointState`]: a full density matrix, the contract every operation is
//!   specified through;
//! - pure branches `(weight, joint vector)`: mixtures of coherent blocks are
//!   rank-≤d_spin, so sweeps evolve vectors instead of conjugating matrices.
//!   Both paths are cross-checked in tests.

use crate::fock::{Dispersion, FockError, FockSpace, ModeVector};
use crate::linalg::{
    hermiticity_deviation, kron, max_abs, partial_trace_boson, CMatrix, CVector, HermitianEig,
    LinalgError, C64,
};
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MicroError {
    #[error("spin matrices must be square and of equal dimension >= 2")]
    BadSpinBlock,
    #[error("spin matrix not Hermitian (deviation {0:.3e})")]
    NonHermitianSpin(f64),
    #[error("mode count mismatch: omega has {omega}, g has {g}, fock has {fock}")]
    ModeCountMismatch { omega: usize, g: usize, fock: usize },
    #[error("state dimension {found} does not match joint dimension {expected}")]
    StateDimension { expected: usize, found: usize },
    #[error("trajectory needs at least 2 grid points, got {0}")]
    GridTooCoarse(usize),
    #[error("unknown nu regime '{0}' (expected 'stationary' or 'freefield')")]
    UnknownRegime(String),
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, MicroError>;

/// The ν(ε) dichotomy: `Stationary` freezes the field in the limit
/// (ν(ε)=1, ν=0), `FreeField` keeps it moving (ν(ε)=1/ε, ν=1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NuRegime {
    Stationary,
    FreeField,
}

impl NuRegime {
    /// Microscopic coefficient ν(ε) of the free field term.
    pub fn nu_eps(self, epsilon: f64) -> f64 {
        match self {
            NuRegime::Stationary => 1.0,
            NuRegime::FreeField => 1.0 / epsilon,
        }
    }

    /// Limit value ν = lim_{ε→0} ε·ν(ε) driving the effective dynamics.
    pub fn nu_limit(self) -> f64 {
        match self {
            NuRegime::Stationary => 0.0,
            NuRegime::FreeField => 1.0,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "stationary" => Ok(NuRegime::Stationary),
            "freefield" | "free_field" | "free-field" => Ok(NuRegime::FreeField),
            other => Err(MicroError::UnknownRegime(other.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NuRegime::Stationary => "stationary",
            NuRegime::FreeField => "freefield",
        }
    }
}

/// Joint density matrix on spin⊗boson tagged with its ε and time stamp.
#[derive(Debug, Clone)]
pub struct JointState {
    pub rho: CMatrix,
    pub epsilon: f64,
    pub time: f64,
}

/// Mixture of pure joint vectors: Σ weightₖ |vₖ⟩⟨vₖ| without forming the
/// matrix. The fast path for coherent-block initial data.
#[derive(Debug, Clone)]
pub struct PureBranches {
    pub branches: Vec<(f64, CVector)>,
    pub time: f64,
}

impl PureBranches {
    pub fn to_density(&self, epsilon: f64) -> JointState {
        let dim = self.branches[0].1.len();
        let mut rho = CMatrix::zeros(dim, dim);
        for (w, v) in &self.branches {
            rho += (v * v.adjoint()).scale(*w);
        }
        JointState {
            rho,
            epsilon,
            time: self.time,
        }
    }
}

/// The tuple (𝔖, 𝔰, ω, g, ν-regime, Fock descriptor) defining H_ε, with
/// cached eigendecompositions of H_ε and of the free part.
#[derive(Debug)]
pub struct SpinBosonModel {
    spin_h: CMatrix,
    coupling: CMatrix,
    omega: Dispersion,
    form_factor: ModeVector,
    regime: NuRegime,
    fock: FockSpace,
    full_eig: OnceLock<HermitianEig>,
    free_eig: OnceLock<HermitianEig>,
}

impl SpinBosonModel {
    pub fn new(
        spin_h: CMatrix,
        coupling: CMatrix,
        omega: Dispersion,
        form_factor: ModeVector,
        regime: NuRegime,
        fock: FockSpace,
    ) -> Result<Self> {
        let d = spin_h.nrows();
        if d < 2 || !spin_h.is_square() || !coupling.is_square() || coupling.nrows() != d {
            return Err(MicroError::BadSpinBlock);
        }
        for m in [&spin_h, &coupling] {
            let dev = hermiticity_deviation(m);
            if dev > 1e-8 * (1.0 + max_abs(m)) {
                return Err(MicroError::NonHermitianSpin(dev));
            }
        }
        if omega.modes() != fock.modes() || form_factor.len() != fock.modes() {
            return Err(MicroError::ModeCountMismatch {
                omega: omega.modes(),
                g: form_factor.len(),
                fock: fock.modes(),
            });
        }
        Ok(SpinBosonModel {
            spin_h,
            coupling,
            omega,
            form_factor,
            regime,
            fock,
            full_eig: OnceLock::new(),
            free_eig: OnceLock::new(),
        })
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

    pub fn regime(&self) -> NuRegime {
        self.regime
    }

    pub fn fock(&self) -> &FockSpace {
        &self.fock
    }

    pub fn epsilon(&self) -> f64 {
        self.fock.epsilon()
    }

    pub fn d_spin(&self) -> usize {
        self.spin_h.nrows()
    }

    pub fn d_boson(&self) -> usize {
        self.fock.dim()
    }

    pub fn joint_dim(&self) -> usize {
        self.d_spin() * self.d_boson()
    }

    /// 𝔖⊗1 + ν(ε)·1⊗dΓ_ε(ω) (the free Hamiltonian H_ε^f).
    pub fn free_hamiltonian(&self) -> Result<CMatrix> {
        let nu_eps = self.regime.nu_eps(self.epsilon());
        let i_spin = CMatrix::identity(self.d_spin(), self.d_spin());
        let i_boson = CMatrix::identity(self.d_boson(), self.d_boson());
        let dg = self.fock.d_gamma(&self.omega)?;
        Ok(kron(&self.spin_h, &i_boson)? + kron(&i_spin, &dg)?.scale(nu_eps))
    }

    /// 𝔰⊗φ_ε(g) (the interaction term).
    pub fn interaction_hamiltonian(&self) -> Result<CMatrix> {
        let phi = self.fock.field_op(&self.form_factor)?;
        Ok(kron(&self.coupling, &phi)?)
    }

    /// Full H_ε; Hermitian by construction.
    pub fn assemble_hamiltonian(&self) -> Result<CMatrix> {
        Ok(self.free_hamiltonian()? + self.interaction_hamiltonian()?)
    }

    fn full(&self) -> Result<&HermitianEig> {
        if self.full_eig.get().is_none() {
            let eig = crate::linalg::herm_eig(&self.assemble_hamiltonian()?)?;
            let _ = self.full_eig.set(eig);
        }
        Ok(self.full_eig.get().expect("just set"))
    }

    fn free(&self) -> Result<&HermitianEig> {
        if self.free_eig.get().is_none() {
            let eig = crate::linalg::herm_eig(&self.free_hamiltonian()?)?;
            let _ = self.free_eig.set(eig);
        }
        Ok(self.free_eig.get().expect("just set"))
    }

    fn check_state(&self, rho: &CMatrix) -> Result<()> {
        if rho.nrows() != self.joint_dim() || rho.ncols() != self.joint_dim() {
            return Err(MicroError::StateDimension {
                expected: self.joint_dim(),
                found: rho.nrows(),
            });
        }
        Ok(())
    }

    /// Γ(t₀+t) = e^{−itH_ε} Γ(t₀) e^{itH_ε}.
    pub fn evolve(&self, state: &JointState, t: f64) -> Result<JointState> {
        self.check_state(&state.rho)?;
        let u = self.full()?.exp_is(-t);
        Ok(JointState {
            rho: &u * &state.rho * u.adjoint(),
            epsilon: state.epsilon,
            time: state.time + t,
        })
    }

    /// e^{−itH_ε} v, the pure-state counterpart of [`evolve`].
    pub fn evolve_vector(&self, v: &CVector, t: f64) -> Result<CVector> {
        Ok(self.full()?.apply_exp_is(-t, v))
    }

    /// Υ(t) = e^{itH_ε^f} Γ(t) e^{−itH_ε^f} at the state's own time stamp.
    pub fn interaction_picture(&self, state: &JointState) -> Result<JointState> {
        self.check_state(&state.rho)?;
        let u = self.free()?.exp_is(state.time);
        Ok(JointState {
            rho: &u * &state.rho * u.adjoint(),
            epsilon: state.epsilon,
            time: state.time,
        })
    }

    /// Inverse of [`interaction_picture`].
    pub fn from_interaction_picture(&self, state: &JointState) -> Result<JointState> {
        self.check_state(&state.rho)?;
        let u = self.free()?.exp_is(-state.time);
        Ok(JointState {
            rho: &u * &state.rho * u.adjoint(),
            epsilon: state.epsilon,
            time: state.time,
        })
    }

    /// Interaction-picture joint vector e^{iτH_ε^f} e^{−iτH_ε} v₀.
    pub fn interaction_vector(&self, v0: &CVector, tau: f64) -> Result<CVector> {
        let moved = self.full()?.apply_exp_is(-tau, v0);
        Ok(self.free()?.apply_exp_is(tau, &moved))
    }

    /// Quantum Fourier transform Γ̂(η) = tr_B(Γ·(1⊗W_ε(η))); the reduced spin
    /// state at η = 0.
    pub fn quantum_fourier(&self, state: &JointState, eta: &ModeVector) -> Result<CMatrix> {
        let w = self.fock.weyl_op(eta)?;
        self.quantum_fourier_with(state, &w)
    }

    /// Same with a caller-cached Weyl matrix.
    pub fn quantum_fourier_with(&self, state: &JointState, weyl: &CMatrix) -> Result<CMatrix> {
        self.check_state(&state.rho)?;
        let (ds, db) = (self.d_spin(), self.d_boson());
        let mut out = CMatrix::zeros(ds, ds);
        // tr_B(Γ(1⊗W))[i,j] = Σ_{b,c} Γ[(i,b),(j,c)] W[c,b]
        for i in 0..ds {
            for j in 0..ds {
                let mut acc = C64::new(0.0, 0.0);
                for b in 0..db {
                    for cix in 0..db {
                        acc += state.rho[(i * db + b, j * db + cix)] * weyl[(cix, b)];
                    }
                }
                out[(i, j)] = acc;
            }
        }
        Ok(out)
    }

    /// Reduced spin state tr_B Γ.
    pub fn reduced_spin(&self, state: &JointState) -> Result<CMatrix> {
        self.check_state(&state.rho)?;
        Ok(partial_trace_boson(
            &state.rho,
            self.d_spin(),
            self.d_boson(),
        )?)
    }

    /// Fourier transform of a pure-branch mixture: Σₖ wₖ Mₖ Wᵀ Mₖ† with Mₖ
    /// the d_spin×d_boson reshape of branch k.
    pub fn fourier_from_branches(
        &self,
        branches: &[(f64, CVector)],
        weyl: &CMatrix,
    ) -> Result<CMatrix> {
        let (ds, db) = (self.d_spin(), self.d_boson());
        let mut out = CMatrix::zeros(ds, ds);
        for (wgt, v) in branches {
            if v.len() != ds * db {
                return Err(MicroError::StateDimension {
                    expected: ds * db,
                    found: v.len(),
                });
            }
            let m = reshape_spin_boson(v, ds, db);
            let mw = &m * weyl.transpose();
            out += (mw * m.adjoint()).scale(*wgt);
        }
        Ok(out)
    }

    /// Reduced spin state of a pure-branch mixture: Σₖ wₖ Mₖ Mₖ†.
    pub fn reduced_from_branches(&self, branches: &[(f64, CVector)]) -> Result<CMatrix> {
        let (ds, db) = (self.d_spin(), self.d_boson());
        let mut out = CMatrix::zeros(ds, ds);
        for (wgt, v) in branches {
            let m = reshape_spin_boson(v, ds, db);
            out += (&m * m.adjoint()).scale(*wgt);
        }
        Ok(out)
    }

    /// tr((ε·N_total + 1)^δ Γ) over the boson marginal.
    pub fn number_moment(&self, state: &JointState, delta: f64) -> Result<f64> {
        self.check_state(&state.rho)?;
        let (ds, db) = (self.d_spin(), self.d_boson());
        let eps = self.epsilon();
        let mut acc = 0.0;
        for b in 0..db {
            let n_tot = self.fock.total_occupation(b) as f64;
            let mut p = 0.0;
            for i in 0..ds {
                p += state.rho[(i * db + b, i * db + b)].re;
            }
            acc += (eps * n_tot + 1.0).powf(delta) * p;
        }
        Ok(acc)
    }

    /// [`number_moment`] on pure branches.
    pub fn number_moment_branches(&self, branches: &[(f64, CVector)], delta: f64) -> Result<f64> {
        let (ds, db) = (self.d_spin(), self.d_boson());
        let eps = self.epsilon();
        let mut acc = 0.0;
        for (wgt, v) in branches {
            for b in 0..db {
                let n_tot = self.fock.total_occupation(b) as f64;
                let mut p = 0.0;
                for i in 0..ds {
                    p += v[i * db + b].norm_sqr();
                }
                acc += wgt * (eps * n_tot + 1.0).powf(delta) * p;
            }
        }
        Ok(acc)
    }

    /// Integral-equation residual of the interaction-picture evolution:
    /// |tr(Υ̂(t)(η)𝔨) − tr(Υ̂(s)(η)𝔨) + i∫ₛᵗ tr([𝔰(τ)⊗φ_ε(τ), Υ(τ)](𝔨⊗W(η))) dτ|
    /// with composite trapezoidal quadrature on the trajectory's uniform grid.
    ///
    /// `trajectory` must hold interaction-picture states on a uniform time
    /// grid over [s,t]; a small residual certifies both sides of the identity.
    pub fn duhamel_residual(
        &self,
        trajectory: &[JointState],
        eta: &ModeVector,
        test_op: &CMatrix,
    ) -> Result<f64> {
        if trajectory.len() < 2 {
            return Err(MicroError::GridTooCoarse(trajectory.len()));
        }
        let w = self.fock.weyl_op(eta)?;
        let k = kron(test_op, &w)?;
        let h_int = self.interaction_hamiltonian()?;
        let free = self.free()?;
        let n = trajectory.len();
        let dt = (trajectory[n - 1].time - trajectory[0].time) / (n - 1) as f64;
        let mut integral = C64::new(0.0, 0.0);
        let mut endpoint = C64::new(0.0, 0.0);
        for (i, st) in trajectory.iter().enumerate() {
            self.check_state(&st.rho)?;
            let u0 = free.exp_is(st.time);
            let a = &u0 * &h_int * u0.adjoint();
            let comm = &a * &st.rho - &st.rho * &a;
            let f = (&comm * &k).trace();
            let weight = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            integral += f * weight;
            if i == 0 {
                endpoint -= (&st.rho * &k).trace();
            }
            if i == n - 1 {
                endpoint += (&st.rho * &k).trace();
            }
        }
        integral *= dt;
        Ok((endpoint + C64::new(0.0, 1.0) * integral).norm())
    }

    /// Fast-path Duhamel residual for pure-branch initial data: evolves
    /// branch vectors to a uniform grid of `steps+1` points over [s,t] and
    /// evaluates the same residual as [`duhamel_residual`] through vector
    /// sandwiches instead of density conjugations.
    pub fn duhamel_residual_pure(
        &self,
        initial: &PureBranches,
        s: f64,
        t: f64,
        steps: usize,
        eta: &ModeVector,
        test_op: &CMatrix,
    ) -> Result<f64> {
        if steps < 1 {
            return Err(MicroError::GridTooCoarse(steps + 1));
        }
        let (ds, db) = (self.d_spin(), self.d_boson());
        if test_op.nrows() != ds || test_op.ncols() != ds {
            return Err(MicroError::StateDimension {
                expected: ds,
                found: test_op.nrows(),
            });
        }
        let w = self.fock.weyl_op(eta)?;
        let wt = w.transpose();
        let w_conj = w.conjugate();
        let h_int = self.interaction_hamiltonian()?;
        let free = self.free()?;
        let dt = (t - s) / steps as f64;
        let mut integral = C64::new(0.0, 0.0);
        let mut endpoint = C64::new(0.0, 0.0);
        for i in 0..=steps {
            let tau = s + dt * i as f64;
            let mut f = C64::new(0.0, 0.0);
            let mut tr_k = C64::new(0.0, 0.0);
            for (wgt, v0) in &initial.branches {
                let u = self.interaction_vector(v0, tau)?;
                // A(τ)u with A = U₀ H_I U₀†
                let au = {
                    let x = free.apply_exp_is(-tau, &u);
                    let y = &h_int * x;
                    free.apply_exp_is(tau, &y)
                };
                // K u and K† u for K = 𝔨⊗W, applied blockwise
                let m = reshape_spin_boson(&u, ds, db);
                let ku = flatten_spin_boson(&(test_op * &m * &wt));
                let kdu = flatten_spin_boson(&(test_op.adjoint() * &m * &w_conj));
                // tr([A,|u⟩⟨u|]K) = ⟨K†u, Au⟩ − ⟨Au, Ku⟩
                let t1 = kdu.dotc(&au);
                let t2 = au.dotc(&ku);
                f += (t1 - t2) * *wgt;
                if i == 0 || i == steps {
                    tr_k += u.dotc(&ku) * *wgt;
                }
            }
            let weight = if i == 0 || i == steps { 0.5 } else { 1.0 };
            integral += f * weight;
            if i == 0 {
                endpoint -= tr_k;
            }
            if i == steps {
                endpoint += tr_k;
            }
        }
        integral *= dt;
        Ok((endpoint + C64::new(0.0, 1.0) * integral).norm())
    }
}

/// View a joint vector (spin-major) as the d_spin×d_boson coefficient matrix.
pub fn reshape_spin_boson(v: &CVector, d_spin: usize, d_boson: usize) -> CMatrix {
    CMatrix::from_fn(d_spin, d_boson, |i, b| v[i * d_boson + b])
}

/// Inverse of [`reshape_spin_boson`].
pub fn flatten_spin_boson(m: &CMatrix) -> CVector {
    let (ds, db) = m.shape();
    CVector::from_fn(ds * db, |k, _| m[(k / db, k % db)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::trace_distance;
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

    fn standard_model(eps: f64, cutoff: usize, regime: NuRegime) -> SpinBosonModel {
        SpinBosonModel::new(
            sigma_z(),
            sigma_x(),
            Dispersion::new(vec![1.0]).unwrap(),
            ModeVector::from_row_slice(&[c(1., 0.)]),
            regime,
            FockSpace::new(vec![cutoff], eps).unwrap(),
        )
        .unwrap()
    }

    fn coherent_joint(model: &SpinBosonModel, gamma0: &CMatrix, z: &ModeVector) -> JointState {
        let psi = model.fock().coherent_state(z).unwrap();
        JointState {
            rho: kron(gamma0, &psi).unwrap(),
            epsilon: model.epsilon(),
            time: 0.0,
        }
    }

    fn plus_state() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(0.5, 0.), c(0.5, 0.), c(0.5, 0.), c(0.5, 0.)])
    }

    #[test]
    fn hamiltonian_matches_hand_assembly() {
        let eps = 0.36;
        let model = standard_model(eps, 1, NuRegime::Stationary);
        let h = model.assemble_hamiltonian().unwrap();
        let r = eps.sqrt();
        let expect = CMatrix::from_row_slice(
            4,
            4,
            &[
                c(1., 0.), c(0., 0.), c(0., 0.), c(r, 0.),
                c(0., 0.), c(1. + eps, 0.), c(r, 0.), c(0., 0.),
                c(0., 0.), c(r, 0.), c(-1., 0.), c(0., 0.),
                c(r, 0.), c(0., 0.), c(0., 0.), c(-1. + eps, 0.),
            ],
        );
        assert!(max_abs(&(h.clone() - expect)) < 1e-14);
        assert!(hermiticity_deviation(&h) < 1e-12);
    }

    #[test]
    fn free_field_regime_scales_dgamma() {
        let eps = 0.25;
        let stat = standard_model(eps, 3, NuRegime::Stationary);
        let free = standard_model(eps, 3, NuRegime::FreeField);
        let idx = 1 * 4 + 1; // spin 1, boson occupation 1 (d_boson = 4)
        let h_s = stat.assemble_hamiltonian().unwrap();
        let h_f = free.assemble_hamiltonian().unwrap();
        // diagonal difference is (1/ε − 1)·ε·n = (1−ε)·n
        assert_abs_diff_eq!(
            (h_f[(idx, idx)] - h_s[(idx, idx)]).re,
            (1.0 - eps) * 1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn evolve_preserves_spectrum_and_t0_is_identity() {
        let model = standard_model(0.5, 8, NuRegime::Stationary);
        let z = ModeVector::from_row_slice(&[c(0.6, 0.2)]);
        let st = coherent_joint(&model, &plus_state(), &z);
        let same = model.evolve(&st, 0.0).unwrap();
        assert!(max_abs(&(same.rho.clone() - st.rho.clone())) < 1e-12);

        let moved = model.evolve(&st, 0.7).unwrap();
        let e0 = crate::linalg::herm_eig(&st.rho).unwrap();
        let e1 = crate::linalg::herm_eig(&moved.rho).unwrap();
        for k in 0..e0.eigenvalues.len() {
            assert_abs_diff_eq!(e0.eigenvalues[k], e1.eigenvalues[k], epsilon = 1e-9);
        }
        assert_abs_diff_eq!(moved.rho.trace().re, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn g_zero_reduces_to_free_spin_motion() {
        let eps = 0.5;
        let model = SpinBosonModel::new(
            sigma_z(),
            sigma_x(),
            Dispersion::new(vec![1.0]).unwrap(),
            ModeVector::from_row_slice(&[c(0., 0.)]),
            NuRegime::Stationary,
            FockSpace::new(vec![6], eps).unwrap(),
        )
        .unwrap();
        let z = ModeVector::from_row_slice(&[c(0.5, -0.3)]);
        let st = coherent_joint(&model, &plus_state(), &z);
        let t = 1.3;
        let moved = model.evolve(&st, t).unwrap();
        let red = model.reduced_spin(&moved).unwrap();
        let us = crate::linalg::unitary_exp(&sigma_z(), -t).unwrap();
        let expect = &us * plus_state() * us.adjoint();
        assert!(trace_distance(&red, &expect).unwrap() < 1e-10);

        // interaction picture freezes everything when g = 0
        let ip = model.interaction_picture(&moved).unwrap();
        assert!(max_abs(&(ip.rho.clone() - st.rho.clone())) < 1e-9);
    }

    #[test]
    fn interaction_picture_round_trip() {
        let model = standard_model(0.5, 10, NuRegime::FreeField);
        let z = ModeVector::from_row_slice(&[c(0.7, 0.1)]);
        let st = coherent_joint(&model, &plus_state(), &z);
        let moved = model.evolve(&st, 0.9).unwrap();
        let ip = model.interaction_picture(&moved).unwrap();
        let back = model.from_interaction_picture(&ip).unwrap();
        assert!(max_abs(&(back.rho - moved.rho)) < 1e-10);
    }

    #[test]
    fn quantum_fourier_coherent_closed_form() {
        let eps = 0.25;
        let model = standard_model(eps, 24, NuRegime::Stationary);
        let z = ModeVector::from_row_slice(&[c(0.8, -0.2)]);
        let gamma0 = plus_state();
        let st = coherent_joint(&model, &gamma0, &z);
        let eta = ModeVector::from_row_slice(&[c(0.4, 0.9)]);
        let got = model.quantum_fourier(&st, &eta).unwrap();
        let phase = 2.0 * FockSpace::inner(&eta, &z).re;
        let scalar = C64::new(0.0, phase).exp() * (-eps * eta.norm_squared() / 2.0).exp();
        let expect = gamma0.map(|x| x * scalar);
        assert!(max_abs(&(got.clone() - expect)) < 1e-8);

        // η = 0 returns the reduced state
        let red = model
            .quantum_fourier(&st, &ModeVector::from_row_slice(&[c(0., 0.)]))
            .unwrap();
        assert!(max_abs(&(red - model.reduced_spin(&st).unwrap())) < 1e-12);
    }

    #[test]
    fn branch_paths_match_density_paths() {
        let eps = 0.25;
        let model = standard_model(eps, 16, NuRegime::FreeField);
        let z = ModeVector::from_row_slice(&[c(0.7, 0.3)]);
        let psi = model.fock().coherent_vector(&z).unwrap();
        // γ0 = plus state = |+⟩⟨+| is pure: single branch
        let spin_plus = CVector::from_row_slice(&[
            c(std::f64::consts::FRAC_1_SQRT_2, 0.),
            c(std::f64::consts::FRAC_1_SQRT_2, 0.),
        ]);
        let mut joint = CVector::zeros(model.joint_dim());
        for i in 0..2 {
            for b in 0..model.d_boson() {
                joint[i * model.d_boson() + b] = spin_plus[i] * psi[b];
            }
        }
        let t = 0.8;
        let branches = PureBranches {
            branches: vec![(1.0, model.evolve_vector(&joint, t).unwrap())],
            time: t,
        };
        let st = coherent_joint(&model, &plus_state(), &z);
        let moved = model.evolve(&st, t).unwrap();

        let red_a = model.reduced_spin(&moved).unwrap();
        let red_b = model.reduced_from_branches(&branches.branches).unwrap();
        assert!(max_abs(&(red_a - red_b)) < 1e-11);

        let eta = ModeVector::from_row_slice(&[c(0.3, -0.5)]);
        let w = model.fock().weyl_op(&eta).unwrap();
        let qf_a = model.quantum_fourier_with(&moved, &w).unwrap();
        let qf_b = model.fourier_from_branches(&branches.branches, &w).unwrap();
        assert!(max_abs(&(qf_a - qf_b)) < 1e-11);

        let m_a = model.number_moment(&moved, 0.5).unwrap();
        let m_b = model.number_moment_branches(&branches.branches, 0.5).unwrap();
        assert_abs_diff_eq!(m_a, m_b, epsilon = 1e-11);
    }

    #[test]
    fn number_moment_oracles() {
        let eps = 0.2;
        let model = standard_model(eps, 40, NuRegime::Stationary);
        // vacuum ⊗ anything → 1 for any δ
        let vac = coherent_joint(&model, &plus_state(), &ModeVector::from_row_slice(&[c(0., 0.)]));
        assert_abs_diff_eq!(model.number_moment(&vac, 0.7).unwrap(), 1.0, epsilon = 1e-12);

        // coherent z, δ = 1 → 1 + ‖z‖²
        let z = ModeVector::from_row_slice(&[c(1.0, 0.5)]);
        let st = coherent_joint(&model, &plus_state(), &z);
        let m = model.number_moment(&st, 1.0).unwrap();
        assert!((m - (1.0 + z.norm_squared())).abs() < 1e-6);

        // monotone in δ when ε·n+1 ≥ 1
        let m_half = model.number_moment(&st, 0.5).unwrap();
        assert!(m_half <= m + 1e-12);
    }

    #[test]
    fn duhamel_residual_g_zero_and_identity_case() {
        let eps = 0.5;
        let model = SpinBosonModel::new(
            sigma_z(),
            sigma_x(),
            Dispersion::new(vec![1.0]).unwrap(),
            ModeVector::from_row_slice(&[c(0., 0.)]),
            NuRegime::Stationary,
            FockSpace::new(vec![6], eps).unwrap(),
        )
        .unwrap();
        let z = ModeVector::from_row_slice(&[c(0.4, 0.1)]);
        let st = coherent_joint(&model, &plus_state(), &z);
        let mut traj = Vec::new();
        for i in 0..=16 {
            let tau = i as f64 / 16.0;
            let moved = model.evolve(&st, tau).unwrap();
            traj.push(model.interaction_picture(&moved).unwrap());
        }
        let eta = ModeVector::from_row_slice(&[c(0.3, 0.2)]);
        let r = model
            .duhamel_residual(&traj, &eta, &sigma_x())
            .unwrap();
        assert!(r < 1e-10, "g=0 residual {r}");
    }

    #[test]
    fn duhamel_density_and_pure_paths_agree() {
        let eps = 0.25;
        let model = standard_model(eps, 18, NuRegime::Stationary);
        let z = ModeVector::from_row_slice(&[c(0.6, 0.0)]);
        let psi = model.fock().coherent_vector(&z).unwrap();
        let spin_plus = CVector::from_row_slice(&[
            c(std::f64::consts::FRAC_1_SQRT_2, 0.),
            c(std::f64::consts::FRAC_1_SQRT_2, 0.),
        ]);
        let mut joint = CVector::zeros(model.joint_dim());
        for i in 0..2 {
            for b in 0..model.d_boson() {
                joint[i * model.d_boson() + b] = spin_plus[i] * psi[b];
            }
        }
        let steps = 24;
        let st = coherent_joint(&model, &plus_state(), &z);
        let mut traj = Vec::new();
        for i in 0..=steps {
            let tau = i as f64 / steps as f64;
            let moved = model.evolve(&st, tau).unwrap();
            traj.push(model.interaction_picture(&moved).unwrap());
        }
        let eta = ModeVector::from_row_slice(&[c(0.5, 0.0)]);
        let k = sigma_x();
        let dense = model.duhamel_residual(&traj, &eta, &k).unwrap();
        let pure = model
            .duhamel_residual_pure(
                &PureBranches {
                    branches: vec![(1.0, joint)],
                    time: 0.0,
                },
                0.0,
                1.0,
                steps,
                &eta,
                &k,
            )
            .unwrap();
        assert_abs_diff_eq!(dense, pure, epsilon = 1e-10);
    }
}
