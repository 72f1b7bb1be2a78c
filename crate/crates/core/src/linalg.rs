//! Dense complex linear algebra primitives shared by every other module.
//!
//! Everything here is a pure function of its inputs. All exponentiated
//! generators in this crate are Hermitian, so matrix exponentials go through
//! the eigendecomposition (exact unitarity, no Padé path).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Largest dimension `kron` will produce. Joint spaces in this crate stay in
/// the low thousands; anything bigger is a configuration mistake.
pub const MAX_KRON_DIM: usize = 1 << 14;

/// Relative scale of the Hermiticity check in [`herm_eig`].
pub const HERMITICITY_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian: max |A - A'| = {deviation:.3e}, tolerance {tolerance:.3e}")]
    NotHermitian { deviation: f64, tolerance: f64 },
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("kron output dimension {0} exceeds maximum {MAX_KRON_DIM}")]
    DimensionOverflow(usize),
    #[error("non-finite entry encountered in {0}")]
    NonFinite(&'static str),
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Eigendecomposition of a Hermitian matrix: `A = V diag(λ) V†` with `λ`
/// ascending and `V` unitary.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: CMatrix,
}

impl HermitianEig {
    /// `V diag(f(λ)) V†`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> C64) -> CMatrix {
        let n = self.eigenvalues.len();
        let mut scaled = self.eigenvectors.clone();
        for j in 0..n {
            let w = f(self.eigenvalues[j]);
            for i in 0..n {
                scaled[(i, j)] *= w;
            }
        }
        &scaled * self.eigenvectors.adjoint()
    }

    /// `e^{isA}` as a matrix.
    pub fn exp_is(&self, s: f64) -> CMatrix {
        self.map_spectrum(|l| (C64::new(0.0, s * l)).exp())
    }

    /// `e^{isA} v` without forming the matrix.
    pub fn apply_exp_is(&self, s: f64, v: &CVector) -> CVector {
        let mut coeffs = self.eigenvectors.adjoint() * v;
        for (j, c) in coeffs.iter_mut().enumerate() {
            *c *= (C64::new(0.0, s * self.eigenvalues[j])).exp();
        }
        &self.eigenvectors * coeffs
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.map_spectrum(|l| C64::new(l, 0.0))
    }
}

fn check_finite(a: &CMatrix, context: &'static str) -> Result<()> {
    if a.iter().all(|x| x.re.is_finite() && x.im.is_finite()) {
        Ok(())
    } else {
        Err(LinalgError::NonFinite(context))
    }
}

/// Max-norm deviation from Hermiticity, `max_ij |A_ij - conj(A_ji)|`.
pub fn hermiticity_deviation(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Hermitian eigendecomposition with ascending eigenvalues.
///
/// Rejects input whose Hermiticity deviation exceeds
/// `HERMITICITY_TOL * (1 + max|A_ij|)`; the symmetric average `(A + A†)/2`
/// is what gets decomposed, so assembly round-off below the tolerance cannot
/// leak into the spectrum.
pub fn herm_eig(a: &CMatrix) -> Result<HermitianEig> {
    if a.nrows() != a.ncols() {
        return Err(LinalgError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    check_finite(a, "herm_eig input")?;
    let max_abs = a.iter().fold(0.0f64, |m, x| m.max(x.norm()));
    let tol = HERMITICITY_TOL * (1.0 + max_abs);
    let dev = hermiticity_deviation(a);
    if dev > tol {
        return Err(LinalgError::NotHermitian {
            deviation: dev,
            tolerance: tol,
        });
    }
    let herm = (a + a.adjoint()).scale(0.5);
    let se = herm.symmetric_eigen();
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        se.eigenvalues[i]
            .partial_cmp(&se.eigenvalues[j])
            .expect("finite eigenvalues")
    });
    let mut eigenvalues = DVector::zeros(n);
    let mut eigenvectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvalues[dst] = se.eigenvalues[src];
        eigenvectors.column_mut(dst).copy_from(&se.eigenvectors.column(src));
    }
    Ok(HermitianEig {
        eigenvalues,
        eigenvectors,
    })
}

/// `exp(i s A)` for Hermitian `A`; exactly unitary up to round-off.
pub fn unitary_exp(a: &CMatrix, s: f64) -> Result<CMatrix> {
    Ok(herm_eig(a)?.exp_is(s))
}

/// Kronecker product with an output-size guard.
pub fn kron(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    let rows = a.nrows().checked_mul(b.nrows());
    let cols = a.ncols().checked_mul(b.ncols());
    match (rows, cols) {
        (Some(r), Some(c)) if r <= MAX_KRON_DIM && c <= MAX_KRON_DIM => Ok(a.kronecker(b)),
        (Some(r), Some(c)) => Err(LinalgError::DimensionOverflow(r.max(c))),
        _ => Err(LinalgError::DimensionOverflow(usize::MAX)),
    }
}

/// Partial trace over the boson factor of a `spin ⊗ boson` operator.
pub fn partial_trace_boson(joint: &CMatrix, d_spin: usize, d_boson: usize) -> Result<CMatrix> {
    let d = d_spin * d_boson;
    if joint.nrows() != d || joint.ncols() != d {
        return Err(LinalgError::DimensionMismatch {
            context: "partial_trace_boson",
            expected: d,
            found: joint.nrows(),
        });
    }
    let mut reduced = CMatrix::zeros(d_spin, d_spin);
    for i in 0..d_spin {
        for j in 0..d_spin {
            let mut acc = C64::new(0.0, 0.0);
            for b in 0..d_boson {
                acc += joint[(i * d_boson + b, j * d_boson + b)];
            }
            reduced[(i, j)] = acc;
        }
    }
    Ok(reduced)
}

/// `(1/2) Σ |λ_k(ρ − σ)|`; lies in [0, 1] for unit-trace inputs.
pub fn trace_distance(rho: &CMatrix, sigma: &CMatrix) -> Result<f64> {
    if rho.shape() != sigma.shape() {
        return Err(LinalgError::DimensionMismatch {
            context: "trace_distance",
            expected: rho.nrows(),
            found: sigma.nrows(),
        });
    }
    let diff = rho - sigma;
    Ok(0.5 * trace_norm(&diff)?)
}

/// Trace norm `Σ |λ_k|` of a Hermitian matrix.
pub fn trace_norm(a: &CMatrix) -> Result<f64> {
    let eig = herm_eig(a)?;
    Ok(eig.eigenvalues.iter().map(|l| l.abs()).sum())
}

/// Nuclear norm `Σ σ_k` (sum of singular values) of an arbitrary matrix.
pub fn nuclear_norm(a: &CMatrix) -> f64 {
    a.clone().svd(false, false).singular_values.iter().sum()
}

/// Spectral norm (largest singular value) of an arbitrary matrix.
pub fn spectral_norm(a: &CMatrix) -> f64 {
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Diagnostics for density-matrix validity: `(|tr − 1|, Hermiticity deviation,
/// most negative eigenvalue)`.
pub fn density_deviation(rho: &CMatrix) -> Result<(f64, f64, f64)> {
    let trace_dev = (rho.trace() - C64::new(1.0, 0.0)).norm();
    let herm_dev = hermiticity_deviation(rho);
    let eig = herm_eig(&(rho + rho.adjoint()).scale(0.5))?;
    let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok((trace_dev, herm_dev, min_eig))
}

/// Max-norm distance from the identity of `U†U`.
pub fn unitarity_deviation(u: &CMatrix) -> f64 {
    let n = u.ncols();
    let prod = u.adjoint() * u;
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let expect = if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            dev = dev.max((prod[(i, j)] - expect).norm());
        }
    }
    dev
}

/// Largest entry magnitude.
pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.norm()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn sigma_x() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
    }

    fn sigma_z() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
    }

    #[test]
    fn herm_eig_diagonal() {
        let a = CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(3., 0.)]);
        let eig = herm_eig(&a).unwrap();
        assert_abs_diff_eq!(eig.eigenvalues[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eig.eigenvalues[1], 3.0, epsilon = 1e-12);
        assert!(max_abs(&(eig.reconstruct() - a)) < 1e-12);
    }

    #[test]
    fn herm_eig_pauli_x_spectrum() {
        let eig = herm_eig(&sigma_x()).unwrap();
        assert_abs_diff_eq!(eig.eigenvalues[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eig.eigenvalues[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn herm_eig_complex_reconstruction() {
        let a = CMatrix::from_row_slice(
            3,
            3,
            &[
                c(2., 0.), c(0.3, -0.4), c(0., 1.),
                c(0.3, 0.4), c(-1., 0.), c(0.2, 0.),
                c(0., -1.), c(0.2, 0.), c(0.5, 0.),
            ],
        );
        let eig = herm_eig(&a).unwrap();
        assert!(max_abs(&(eig.reconstruct() - &a)) < 1e-10 * (1.0 + a.norm()));
        assert!(unitarity_deviation(&eig.eigenvectors) < 1e-10);
        for k in 1..3 {
            assert!(eig.eigenvalues[k] >= eig.eigenvalues[k - 1]);
        }
    }

    #[test]
    fn herm_eig_rejects_non_hermitian() {
        let a = CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(0., 0.), c(0., 0.)]);
        assert!(matches!(herm_eig(&a), Err(LinalgError::NotHermitian { .. })));
    }

    #[test]
    fn unitary_exp_identity_and_pauli() {
        let zero = CMatrix::zeros(2, 2);
        let u = unitary_exp(&zero, 1.0).unwrap();
        assert!(max_abs(&(u - CMatrix::identity(2, 2))) < 1e-14);

        // exp(i π σ_z) = -I
        let u = unitary_exp(&sigma_z(), std::f64::consts::PI).unwrap();
        assert!(max_abs(&(u + CMatrix::identity(2, 2))) < 1e-12);

        // exp(i (π/2) σ_x) = i σ_x
        let u = unitary_exp(&sigma_x(), std::f64::consts::FRAC_PI_2).unwrap();
        let expect = sigma_x().map(|x| x * c(0., 1.));
        assert!(max_abs(&(u - expect)) < 1e-12);
    }

    #[test]
    fn kron_identities_and_mixed_product() {
        let i2 = CMatrix::identity(2, 2);
        let i3 = CMatrix::identity(3, 3);
        assert!(max_abs(&(kron(&i2, &i3).unwrap() - CMatrix::identity(6, 6))) == 0.0);

        let d = CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., 0.), c(0., 0.), c(1., 0.)]);
        let k = kron(&sigma_z(), &d).unwrap();
        let expect = CMatrix::from_diagonal(&CVector::from_vec(vec![
            c(0., 0.), c(1., 0.), c(0., 0.), c(-1., 0.),
        ]));
        assert!(max_abs(&(k - expect)) == 0.0);

        // (A⊗B)(C⊗D) = (AC)⊗(BD)
        let a = CMatrix::from_row_slice(2, 2, &[c(1., 2.), c(0., -1.), c(3., 0.), c(0.5, 0.5)]);
        let b = CMatrix::from_row_slice(2, 2, &[c(0., 1.), c(2., 0.), c(1., 1.), c(-1., 0.)]);
        let lhs = kron(&a, &b).unwrap() * kron(&b, &a).unwrap();
        let rhs = kron(&(&a * &b), &(&b * &a)).unwrap();
        assert!(max_abs(&(lhs - rhs)) < 1e-12);
    }

    #[test]
    fn kron_overflow_guarded() {
        let big = CMatrix::identity(200, 200);
        assert!(matches!(
            kron(&big, &big),
            Err(LinalgError::DimensionOverflow(_))
        ));
    }

    #[test]
    fn partial_trace_product_and_bell() {
        let gamma = CMatrix::from_row_slice(2, 2, &[c(0.7, 0.), c(0.1, 0.2), c(0.1, -0.2), c(0.3, 0.)]);
        let xi = CMatrix::from_row_slice(2, 2, &[c(0.5, 0.), c(0., 0.), c(0., 0.), c(0.5, 0.)]);
        let joint = kron(&gamma, &xi).unwrap();
        let red = partial_trace_boson(&joint, 2, 2).unwrap();
        assert!(max_abs(&(red - &gamma)) < 1e-14);

        // Bell state (|00> + |11>)/√2 → maximally mixed marginal
        let mut v = CVector::zeros(4);
        v[0] = c(std::f64::consts::FRAC_1_SQRT_2, 0.);
        v[3] = c(std::f64::consts::FRAC_1_SQRT_2, 0.);
        let bell = &v * v.adjoint();
        let red = partial_trace_boson(&bell, 2, 2).unwrap();
        let expect = CMatrix::identity(2, 2).scale(0.5);
        assert!(max_abs(&(red - expect)) < 1e-14);
    }

    #[test]
    fn trace_distance_examples() {
        let rho = CMatrix::from_row_slice(2, 2, &[c(0.7, 0.), c(0., 0.), c(0., 0.), c(0.3, 0.)]);
        let sigma = CMatrix::from_row_slice(2, 2, &[c(0.5, 0.), c(0., 0.), c(0., 0.), c(0.5, 0.)]);
        assert_abs_diff_eq!(trace_distance(&rho, &rho).unwrap(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(trace_distance(&rho, &sigma).unwrap(), 0.2, epsilon = 1e-12);

        let p0 = CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(0., 0.)]);
        let p1 = CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., 0.), c(0., 0.), c(1., 0.)]);
        assert_abs_diff_eq!(trace_distance(&p0, &p1).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn density_deviation_flags_healthy_state() {
        let rho = CMatrix::from_row_slice(2, 2, &[c(0.6, 0.), c(0.2, 0.1), c(0.2, -0.1), c(0.4, 0.)]);
        let (tr, herm, min_eig) = density_deviation(&rho).unwrap();
        assert!(tr < 1e-14 && herm < 1e-14 && min_eig > 0.0);
    }

    #[test]
    fn nuclear_and_spectral_norms() {
        // diag(3, -4i) has singular values {3, 4}
        let a = CMatrix::from_row_slice(2, 2, &[c(3., 0.), c(0., 0.), c(0., 0.), c(0., -4.)]);
        assert!((nuclear_norm(&a) - 7.0).abs() < 1e-12);
        assert!((spectral_norm(&a) - 4.0).abs() < 1e-12);
        // nuclear norm of a Hermitian matrix equals the trace norm
        let h = CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0.5, 0.2), c(0.5, -0.2), c(-2., 0.)]);
        assert!((nuclear_norm(&h) - trace_norm(&h).unwrap()).abs() < 1e-12);
    }
}
