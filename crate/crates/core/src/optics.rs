//! Point-spread functions, their autocorrelations, and the photon
//! probabilities of the three-mode (TriSPADE) sorter.
//!
//! Lengths are in units of the PSF width σ. Both supported PSFs are real,
//! even and rotationally symmetric, so the first-order PSF-adapted modes are
//! the normalized partial derivatives of the PSF and the projection of a
//! displaced point source onto them is a derivative of the autocorrelation:
//! `⟨∂ₓψ|ψ_s⟩ = ∂Γ/∂sₓ`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bessel::{bessel_j012, j1};
use crate::quadrature::CompositeRule;
use crate::scene::Vec2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpticsError {
    #[error("quadrature did not converge to {tolerance:e} (last change {last_change:e})")]
    NonConvergence { tolerance: f64, last_change: f64 },
    #[error("{kind:?} PSF fails the L2 normalization check: {norm}")]
    Normalization { kind: PsfKind, norm: f64 },
    #[error("{kind:?} PSF has nonzero cross curvature {gxy:e}")]
    CrossCurvature { kind: PsfKind, gxy: f64 },
    #[error("mode probabilities inconsistent at offset ({x}, {y}): residual {p_res:e}")]
    NegativeResidual { x: f64, y: f64, p_res: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsfKind {
    /// Gaussian aperture: ψ(x) = (2π)^{-1/2} exp(−|x|²/4).
    Gaussian,
    /// Hard circular aperture: ψ(x) = J₁(π|x|)/(√π |x|).
    Airy,
}

/// Curvatures of the autocorrelation at the origin, `−∂²Γ/∂x²` and
/// `−∂²Γ/∂y²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Curvatures {
    pub gx2: f64,
    pub gy2: f64,
}

/// Per-photon detection probabilities of the TriSPADE modes for a point
/// source; `p_res` is the probability of landing in an unmonitored mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeProbabilities {
    pub p00: f64,
    pub p10: f64,
    pub p01: f64,
    pub p_res: f64,
}

impl ModeProbabilities {
    pub fn as_array(&self) -> [f64; 3] {
        [self.p00, self.p10, self.p01]
    }
}

/// Finite-difference steps for the Airy derivatives, refined by Richardson
/// extrapolation.
const FD_STEPS: [f64; 3] = [0.1, 0.05, 0.025];
const NORMALIZATION_TOL: f64 = 1e-6;
const RESIDUAL_FLOOR: f64 = -1e-9;

/// Coherent point-spread function with σ = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Psf {
    kind: PsfKind,
    curvatures: Curvatures,
}

impl Psf {
    /// Builds a PSF and verifies its L2 normalization by quadrature and the
    /// vanishing of the cross curvature Γ_xy.
    pub fn new(kind: PsfKind) -> Result<Self, OpticsError> {
        let mut psf = Psf {
            kind,
            curvatures: Curvatures { gx2: 0.0, gy2: 0.0 },
        };
        let norm = psf.l2_norm_sq();
        if (norm - 1.0).abs() > NORMALIZATION_TOL {
            return Err(OpticsError::Normalization { kind, norm });
        }
        let gxy = psf.cross_curvature();
        if gxy.abs() > 1e-9 {
            return Err(OpticsError::CrossCurvature { kind, gxy });
        }
        psf.curvatures = match kind {
            PsfKind::Gaussian => Curvatures { gx2: 0.25, gy2: 0.25 },
            PsfKind::Airy => Curvatures {
                gx2: -richardson(|h| second_difference(&psf, Vec2::new(h, 0.0))),
                gy2: -richardson(|h| second_difference(&psf, Vec2::new(0.0, h))),
            },
        };
        Ok(psf)
    }

    pub fn gaussian() -> Self {
        Self::new(PsfKind::Gaussian).expect("Gaussian PSF is normalized")
    }

    pub fn airy() -> Self {
        Self::new(PsfKind::Airy).expect("Airy PSF is normalized")
    }

    pub fn kind(&self) -> PsfKind {
        self.kind
    }

    /// Amplitude ψ̃ at a point in σ units.
    pub fn amplitude(&self, p: Vec2) -> f64 {
        match self.kind {
            PsfKind::Gaussian => (-p.norm_sq() / 4.0).exp() / (2.0 * PI).sqrt(),
            PsfKind::Airy => airy_amplitude(p.norm()),
        }
    }

    pub fn intensity(&self, p: Vec2) -> f64 {
        let a = self.amplitude(p);
        a * a
    }

    /// Autocorrelation Γ̃(d) = ∬ ψ̃(a) ψ̃(a − d) d²a.
    ///
    /// Gaussian: exp(−|d|²/8). Airy: the amplitude of a circular pupil is
    /// the Fourier transform of the pupil indicator, so its autocorrelation
    /// is the transform of the indicator again, 2J₁(π|d|)/(π|d|).
    pub fn autocorrelation(&self, d: Vec2) -> f64 {
        match self.kind {
            PsfKind::Gaussian => (-d.norm_sq() / 8.0).exp(),
            PsfKind::Airy => jinc(PI * d.norm()),
        }
    }

    /// ∇Γ̃ at `s`: analytic for the Gaussian, Richardson-extrapolated
    /// central differences for the Airy disk.
    pub fn autocorrelation_gradient(&self, s: Vec2) -> Vec2 {
        match self.kind {
            PsfKind::Gaussian => s.scale(-self.autocorrelation(s) / 4.0),
            PsfKind::Airy => Vec2::new(
                richardson(|h| self.central_difference(s, Vec2::new(h, 0.0))),
                richardson(|h| self.central_difference(s, Vec2::new(0.0, h))),
            ),
        }
    }

    pub fn curvatures(&self) -> Curvatures {
        self.curvatures
    }

    /// TriSPADE photon probabilities for a point source at `offset`.
    pub fn mode_probabilities(&self, offset: Vec2) -> Result<ModeProbabilities, OpticsError> {
        let g = self.autocorrelation(offset);
        let grad = self.autocorrelation_gradient(offset);
        let p00 = g * g;
        let p10 = grad.x * grad.x / self.curvatures.gx2;
        let p01 = grad.y * grad.y / self.curvatures.gy2;
        let p_res = 1.0 - p00 - p10 - p01;
        if p_res < RESIDUAL_FLOOR {
            return Err(OpticsError::NegativeResidual {
                x: offset.x,
                y: offset.y,
                p_res,
            });
        }
        Ok(ModeProbabilities {
            p00,
            p10,
            p01,
            p_res: p_res.max(0.0),
        })
    }

    fn central_difference(&self, s: Vec2, h: Vec2) -> f64 {
        let step = h.x + h.y;
        (self.autocorrelation(s + h) - self.autocorrelation(s - h)) / (2.0 * step)
    }

    fn cross_curvature(&self) -> f64 {
        let h = 0.05;
        let g = |x, y| self.autocorrelation(Vec2::new(x, y));
        (g(h, h) - g(h, -h) - g(-h, h) + g(-h, -h)) / (4.0 * h * h)
    }

    /// ∬|ψ̃|² by radial quadrature (both kinds are rotationally symmetric).
    fn l2_norm_sq(&self) -> f64 {
        let radius = 12.0;
        let rule = CompositeRule::new(0.0, radius, 96, 8);
        let core = rule.integrate(|r| 2.0 * PI * r * self.intensity(Vec2::new(r, 0.0)));
        let tail = match self.kind {
            // exp(−R²/2) at R = 12 is far below double precision.
            PsfKind::Gaussian => 0.0,
            // Encircled energy of the Airy pattern: 1 − J₀(πR)² − J₁(πR)².
            PsfKind::Airy => {
                let [a, b, _] = bessel_j012(PI * radius);
                a * a + b * b
            }
        };
        core + tail
    }
}

fn airy_amplitude(r: f64) -> f64 {
    let z = PI * r;
    if z < 1e-8 {
        // J₁(z)/z → 1/2.
        PI.sqrt() / 2.0 * (1.0 - z * z / 8.0)
    } else {
        j1(z) / (PI.sqrt() * r)
    }
}

/// 2J₁(z)/z with its limit 1 at the origin.
fn jinc(z: f64) -> f64 {
    if z < 1e-8 {
        1.0 - z * z / 8.0
    } else {
        2.0 * j1(z) / z
    }
}

fn second_difference(psf: &Psf, h: Vec2) -> f64 {
    let step = h.x + h.y;
    (psf.autocorrelation(h) - 2.0 * psf.autocorrelation(Vec2::ZERO) + psf.autocorrelation(-h))
        / (step * step)
}

/// Two rounds of Richardson extrapolation over the steps in `FD_STEPS`
/// (each half the previous), removing the h² and h⁴ error terms of a
/// symmetric difference.
fn richardson(f: impl Fn(f64) -> f64) -> f64 {
    let d: Vec<f64> = FD_STEPS.iter().map(|&h| f(h)).collect();
    let r1a = (4.0 * d[1] - d[0]) / 3.0;
    let r1b = (4.0 * d[2] - d[1]) / 3.0;
    (16.0 * r1b - r1a) / 15.0
}

/// Controls for [`autocorrelation_quadrature`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    /// Integration domain is the disk |a| ≤ radius.
    pub radius: f64,
    /// Convergence tolerance between successive refinements.
    pub tolerance: f64,
    pub max_refinements: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            radius: 12.0,
            tolerance: 1e-9,
            max_refinements: 6,
        }
    }
}

/// Real-space quadrature of ∬_{|a|≤R} ψ̃(a) ψ̃(a − d) d²a.
///
/// Polar Gauss-Legendre panels in radius, trapezoid in angle; the grid is
/// doubled until successive values agree within the tolerance. The result
/// is the truncated-domain integral: for the Airy PSF the mass outside the
/// disk (≈ 2/(π²R)) is not included.
pub fn autocorrelation_quadrature(
    psf: &Psf,
    d: Vec2,
    opts: QuadratureOptions,
) -> Result<f64, OpticsError> {
    let eval = |panels: usize, angles: usize| {
        let rule = CompositeRule::new(0.0, opts.radius, panels, 8);
        let dt = 2.0 * PI / angles as f64;
        let mut sum = 0.0;
        for (&r, &w) in rule.nodes.iter().zip(&rule.weights) {
            let mut ring = 0.0;
            for k in 0..angles {
                let t = k as f64 * dt;
                let a = Vec2::new(r * t.cos(), r * t.sin());
                ring += psf.amplitude(a) * psf.amplitude(a - d);
            }
            sum += w * r * ring * dt;
        }
        sum
    };
    let mut panels = (opts.radius * 2.0).ceil() as usize;
    let mut angles = 64;
    let mut prev = eval(panels, angles);
    let mut last_change = f64::INFINITY;
    for _ in 0..opts.max_refinements {
        panels *= 2;
        angles *= 2;
        let next = eval(panels, angles);
        last_change = (next - prev).abs();
        if last_change <= opts.tolerance {
            return Ok(next);
        }
        prev = next;
    }
    Err(OpticsError::NonConvergence {
        tolerance: opts.tolerance,
        last_change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_amplitude_values() {
        let psf = Psf::gaussian();
        assert!((psf.amplitude(Vec2::ZERO) - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert!((psf.amplitude(Vec2::new(2.0, 0.0)) - 0.146_762_663_173_739_6).abs() < 1e-15);
    }

    #[test]
    fn airy_amplitude_limit_at_origin() {
        let psf = Psf::airy();
        let expected = PI / (2.0 * PI.sqrt());
        assert!((psf.amplitude(Vec2::ZERO) - expected).abs() < 1e-15);
        assert!((expected - 0.886_226_925_452_758).abs() < 1e-14);
        // Continuous across the small-argument branch.
        let near = psf.amplitude(Vec2::new(1e-7, 0.0));
        assert!((near - expected).abs() < 1e-12);
    }

    #[test]
    fn autocorrelation_values() {
        let g = Psf::gaussian();
        assert_eq!(g.autocorrelation(Vec2::ZERO), 1.0);
        assert!((g.autocorrelation(Vec2::new(2.0, 0.0)) - (-0.5f64).exp()).abs() < 1e-15);
        let a = Psf::airy();
        assert!((a.autocorrelation(Vec2::ZERO) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn curvatures() {
        let g = Psf::gaussian().curvatures();
        assert_eq!((g.gx2, g.gy2), (0.25, 0.25));
        let a = Psf::airy().curvatures();
        assert!(a.gx2 > 0.0);
        assert_eq!(a.gx2, a.gy2);
    }

    #[test]
    fn centered_source_couples_only_to_fundamental_mode() {
        for psf in [Psf::gaussian(), Psf::airy()] {
            let p = psf.mode_probabilities(Vec2::ZERO).unwrap();
            assert!((p.p00 - 1.0).abs() < 1e-12);
            assert!(p.p10.abs() < 1e-12 && p.p01.abs() < 1e-12 && p.p_res.abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_mode_probabilities_at_unit_offset() {
        let psf = Psf::gaussian();
        let p = psf.mode_probabilities(Vec2::new(1.0, 0.0)).unwrap();
        let e = (-0.25f64).exp();
        assert!((p.p00 - e).abs() < 1e-15);
        assert!((p.p10 - 0.25 * e).abs() < 1e-15);
        assert_eq!(p.p01, 0.0);
        assert!((p.p_res - (1.0 - 1.25 * e)).abs() < 1e-15);
        assert!((p.p_res - 0.026_499).abs() < 1e-5);
        let q = psf.mode_probabilities(Vec2::new(0.0, 1.0)).unwrap();
        assert!((q.p01 - p.p10).abs() < 1e-15);
        assert_eq!(q.p10, 0.0);
    }

    #[test]
    fn gaussian_quadrature_matches_closed_form() {
        let psf = Psf::gaussian();
        let q = autocorrelation_quadrature(&psf, Vec2::new(2.0, 0.0), QuadratureOptions::default()).unwrap();
        assert!((q - (-0.5f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn quadrature_reports_non_convergence() {
        let opts = QuadratureOptions {
            tolerance: 0.0,
            max_refinements: 1,
            ..QuadratureOptions::default()
        };
        let err = autocorrelation_quadrature(&Psf::gaussian(), Vec2::ZERO, opts).unwrap_err();
        assert!(matches!(err, OpticsError::NonConvergence { .. }));
    }
}
