//! Closed-form reduced dynamics for the pure-dephasing (independent-boson)
//! case: 𝔖 and 𝔰 both diagonal in the same basis.
//!
//! With 𝔖 = diag(E_k) and 𝔰 = diag(σ_k), the joint Hamiltonian splits per
//! spin level k into a displaced oscillator per mode,
//!   h_k = Σ_j [ Ω_j b_j†b_j + λ_{kj} b_j† + conj(λ_{kj}) b_j ] + E_k,
//! with Ω_j = ν(ε)·ε·ω_j and λ_{kj} = √ε·σ_k·g_j in terms of the unscaled
//! ladder b_j = a_j/√ε. Each off-diagonal matrix element of the reduced spin
//! state picks up an exactly computable displacement-operator overlap:
//!   γ(t)_{kl} = γ0_{kl} · e^{−it(E_k−E_l)} · Π_j ⟨α_j| e^{it h_l} e^{−it h_k} |α_j⟩
//! on a coherent state with unscaled amplitude α_j = z_j/√ε. The product of
//! exponentials reduces, through the displacement algebra
//! D(a)D(b) = e^{(a·conj(b) − conj(a)·b)/2} D(a+b), to a single displacement
//! with an accumulated phase — no truncation enters anywhere.
//!
//! This is the independent oracle the microscopic diagonalization is checked
//! against: it shares no code path with operator assembly or `herm_eig`.

use crate::fock::ModeVector;
use crate::linalg::{CMatrix, C64};

/// Scalar-phase + displacement accumulator for folding D(a)D(b) products.
#[derive(Clone, Copy)]
struct Displacement {
    scalar: C64,
    v: C64,
}

impl Displacement {
    fn fold(self, b: C64) -> Self {
        let phase = (self.v * b.conj() - self.v.conj() * b) / 2.0;
        Displacement {
            scalar: self.scalar * phase.exp(),
            v: self.v + b,
        }
    }
}

/// Reduced spin state at time t for the diagonal (pure-dephasing) model,
/// starting from γ0 ⊗ |coherent z⟩⟨coherent z|.
///
/// * `energies` — diagonal of 𝔖 (E_k)
/// * `couplings` — diagonal of 𝔰 (σ_k)
/// * `nu_eps` — the microscopic coefficient ν(ε)
#[allow(clippy::too_many_arguments)]
pub fn dephasing_reduced_state(
    energies: &[f64],
    couplings: &[f64],
    omega: &[f64],
    g: &ModeVector,
    epsilon: f64,
    nu_eps: f64,
    z: &ModeVector,
    gamma0: &CMatrix,
    t: f64,
) -> CMatrix {
    let d = energies.len();
    debug_assert_eq!(couplings.len(), d);
    debug_assert_eq!(gamma0.nrows(), d);
    let modes = omega.len();
    debug_assert_eq!(g.len(), modes);
    debug_assert_eq!(z.len(), modes);

    let sqrt_eps = epsilon.sqrt();
    let mut out = CMatrix::zeros(d, d);
    for k in 0..d {
        for l in 0..d {
            let mut factor = C64::new(0.0, -t * (energies[k] - energies[l])).exp();
            for j in 0..modes {
                let big_omega = nu_eps * epsilon * omega[j];
                let lambda_k = sqrt_eps * couplings[k] * g[j];
                let lambda_l = sqrt_eps * couplings[l] * g[j];
                let beta_k = -lambda_k / big_omega;
                let beta_l = -lambda_l / big_omega;
                let c_k = -lambda_k.norm_sqr() / big_omega;
                let c_l = -lambda_l.norm_sqr() / big_omega;
                let rot = C64::new(0.0, t * big_omega).exp();
                // e^{it h_l} e^{−it h_k} as a single displacement with phase
                let acc = Displacement {
                    scalar: C64::new(0.0, t * (c_l - c_k)).exp(),
                    v: C64::new(0.0, 0.0),
                }
                .fold(beta_l)
                .fold(-rot * beta_l)
                .fold(rot * beta_k)
                .fold(-beta_k);
                // coherent-state expectation ⟨α|D(v)|α⟩ = e^{v·conj(α)−conj(v)·α}·e^{−|v|²/2}
                let alpha = z[j] / sqrt_eps;
                let overlap = (acc.v * alpha.conj() - acc.v.conj() * alpha).exp()
                    * (-acc.v.norm_sqr() / 2.0).exp();
                factor *= acc.scalar * overlap;
            }
            out[(k, l)] = gamma0[(k, l)] * factor;
        }
    }
    out
}
