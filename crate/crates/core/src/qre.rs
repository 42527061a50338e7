//! Quantum relative entropy between single-photon states, computed in a
//! truncated two-dimensional Hermite-Gauss basis.
//!
//! For a Gaussian PSF a point source at image-plane offset `s` prepares the
//! coherent-like state with overlaps
//! `⟨HG_nm|ψ_s⟩ = e^{−|s|²/8} (sₓ/2)ⁿ (s_y/2)ᵐ / √(n! m!)`.
//! An incoherent object is the mixture of these states weighted by the
//! object's intensity.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::channels::Scenario;
use crate::optics::PsfKind;
use crate::scene::Vec2;

/// Eigenvalues of the reference state below this are treated as zero.
pub const EIGEN_FLOOR: f64 = 1e-14;
/// Weight of the post-change state on the reference state's null space
/// above which the relative entropy is declared infinite.
pub const SUPPORT_TOL: f64 = 1e-6;
pub const DEFAULT_N_MAX: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QreError {
    #[error("numerical QRE needs a Gaussian PSF")]
    NonGaussianPsf,
    #[error("numerical QRE needs point-mass objects; `{0}` is a raster")]
    RasterObject(String),
    #[error("basis order {0} is below the minimum of 2")]
    BasisTooSmall(usize),
    #[error("QRE not converged in basis order: {coarse} at n_max-2 vs {fine} at n_max")]
    NotConverged { coarse: f64, fine: f64 },
    #[error("eigendecomposition produced non-finite values")]
    Eigen,
}

/// Basis labels `(n, m)` with n + m ≤ n_max, ordered by total order.
pub fn basis_labels(n_max: usize) -> Vec<(usize, usize)> {
    (0..=n_max)
        .flat_map(|order| (0..=order).map(move |m| (order - m, m)))
        .collect()
}

/// Overlaps of the displaced PSF with each basis function.
pub fn hg_overlaps(s: Vec2, labels: &[(usize, usize)]) -> DVector<f64> {
    let envelope = (-s.norm_sq() / 8.0).exp();
    let (ax, ay) = (s.x / 2.0, s.y / 2.0);
    DVector::from_iterator(
        labels.len(),
        labels.iter().map(|&(n, m)| {
            envelope * ax.powi(n as i32) * ay.powi(m as i32) / (factorial(n) * factorial(m)).sqrt()
        }),
    )
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Entries below this are set to zero before diagonalization. They cannot
/// move an eigenvalue across [`EIGEN_FLOOR`], and the symmetric QR iteration
/// can lose finiteness on matrices spanning fifty orders of magnitude.
const ENTRY_FLUSH: f64 = 1e-30;

/// Truncated, trace-renormalized density matrix of a weighted point set.
pub fn density_matrix(points: &[(Vec2, f64)], n_max: usize) -> DMatrix<f64> {
    let labels = basis_labels(n_max);
    let d = labels.len();
    let mut rho = DMatrix::<f64>::zeros(d, d);
    for &(s, w) in points {
        let v = hg_overlaps(s, &labels);
        rho.syger(w, &v, &v, 1.0);
    }
    rho.fill_upper_triangle_with_lower_triangle();
    let trace = rho.trace();
    if trace > 0.0 {
        rho /= trace;
    }
    rho.apply(|v| {
        if v.abs() < ENTRY_FLUSH {
            *v = 0.0
        }
    });
    rho
}

/// Eigenvalues and eigenvectors of a symmetric positive semidefinite
/// matrix. The symmetric QR iteration occasionally returns non-finite values
/// on strongly graded matrices; the SVD, whose singular values and left
/// vectors coincide with the eigenpairs here, is the fallback.
fn psd_eigen(m: &DMatrix<f64>) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let e = SymmetricEigen::new(m.clone());
    if e.eigenvalues.iter().chain(e.eigenvectors.iter()).all(|v| v.is_finite()) {
        return Some((e.eigenvalues, e.eigenvectors));
    }
    log::debug!("symmetric eigensolver lost finiteness; using the SVD");
    let svd = nalgebra::SVD::new(m.clone(), true, false);
    let u = svd.u?;
    if svd.singular_values.iter().chain(u.iter()).all(|v| v.is_finite()) {
        Some((svd.singular_values, u))
    } else {
        None
    }
}

/// `Tr[ρ₂(ln ρ₂ − ln ρ₁)]` for symmetric positive semidefinite matrices.
///
/// Eigenvalues below [`EIGEN_FLOOR`] are dropped (0·ln 0 = 0). If ρ₂ puts
/// more than [`SUPPORT_TOL`] of its weight on the null space of ρ₁ the result
/// is +∞. Returns NaN if either decomposition fails.
pub fn relative_entropy(rho2: &DMatrix<f64>, rho1: &DMatrix<f64>) -> f64 {
    let (Some((l2, _)), Some((l1, v1))) = (psd_eigen(rho2), psd_eigen(rho1)) else {
        return f64::NAN;
    };
    let entropy_term: f64 = l2
        .iter()
        .filter(|&&l| l > EIGEN_FLOOR)
        .map(|&l| l * l.ln())
        .sum();
    let mut cross = 0.0;
    let mut null_weight = 0.0;
    for (k, &l) in l1.iter().enumerate() {
        let u = v1.column(k);
        let weight = (rho2 * u).dot(&u);
        if l > EIGEN_FLOOR {
            cross += weight * l.ln();
        } else {
            null_weight += weight;
        }
    }
    if null_weight > SUPPORT_TOL {
        log::warn!(
            "post-change state has weight {null_weight:e} outside the pre-change support; relative entropy is infinite"
        );
        return f64::INFINITY;
    }
    (entropy_term - cross).max(0.0)
}

/// Numerical QRE per photon (nats) at basis order `n_max`.
pub fn qre_numerical(sc: &Scenario, n_max: usize) -> Result<f64, QreError> {
    if sc.psf.kind() != PsfKind::Gaussian {
        return Err(QreError::NonGaussianPsf);
    }
    if n_max < 2 {
        return Err(QreError::BasisTooSmall(n_max));
    }
    let mut rhos = Vec::with_capacity(2);
    for obj in sc.objects() {
        if obj.has_raster() {
            return Err(QreError::RasterObject(obj.label().to_string()));
        }
        let pts: Vec<(Vec2, f64)> = obj
            .nonzero_masses()
            .into_iter()
            .map(|(p, w)| (p.scale(sc.gamma), w))
            .collect();
        rhos.push(density_matrix(&pts, n_max));
    }
    let d = relative_entropy(&rhos[1], &rhos[0]);
    if d.is_nan() {
        return Err(QreError::Eigen);
    }
    Ok(d)
}

/// [`qre_numerical`] at `n_max`, checked against `n_max − 2`: the two must
/// agree within 1% relative (or 1e-12 absolute for vanishing values).
pub fn qre_numerical_checked(sc: &Scenario, n_max: usize) -> Result<f64, QreError> {
    let fine = qre_numerical(sc, n_max)?;
    if n_max < 4 {
        return Ok(fine);
    }
    let coarse = qre_numerical(sc, n_max - 2)?;
    if fine.is_infinite() || coarse.is_infinite() {
        return Ok(fine);
    }
    if (fine - coarse).abs() > 0.01 * fine.abs().max(1e-10) {
        return Err(QreError::NotConverged { coarse, fine });
    }
    Ok(fine)
}
