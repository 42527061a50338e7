//! Closed-form optics checked against independent numerical oracles.

use std::f64::consts::PI;

use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spade_core::bessel::bessel_j012;
use spade_core::optics::{autocorrelation_quadrature, QuadratureOptions};
use spade_core::quadrature::CompositeRule;
use spade_core::{Psf, Vec2};

/// Tensor Gauss-Legendre rule on [−12, 12]².
fn plane_rule() -> CompositeRule {
    CompositeRule::new(-12.0, 12.0, 32, 8)
}

/// Overlaps of a displaced Gaussian PSF with ψ, ∂ₓψ/‖∂ₓψ‖ and ∂_yψ/‖∂_yψ‖,
/// by brute-force 2D quadrature. For the Gaussian, ∂ₓψ = −(x/2)ψ and
/// ‖∂ₓψ‖ = 1/2.
fn gaussian_overlaps(s: Vec2) -> [f64; 3] {
    let psf = Psf::gaussian();
    let rule = plane_rule();
    let mut acc = [0.0; 3];
    for (&y, &wy) in rule.nodes.iter().zip(&rule.weights) {
        for (&x, &wx) in rule.nodes.iter().zip(&rule.weights) {
            let p = Vec2::new(x, y);
            let prod = wx * wy * psf.amplitude(p) * psf.amplitude(p - s);
            acc[0] += prod;
            acc[1] += -x * prod;
            acc[2] += -y * prod;
        }
    }
    acc
}

#[test]
fn gaussian_mode_probabilities_match_quadrature_overlaps() {
    let psf = Psf::gaussian();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let s = Vec2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let q = gaussian_overlaps(s);
        let p = psf.mode_probabilities(s).unwrap();
        assert!((p.p00 - q[0] * q[0]).abs() < 1e-6, "p00 at {s:?}");
        assert!((p.p10 - q[1] * q[1]).abs() < 1e-6, "p10 at {s:?}");
        assert!((p.p01 - q[2] * q[2]).abs() < 1e-6, "p01 at {s:?}");
    }
}

#[test]
fn gaussian_mode_probabilities_match_hermite_gauss_overlaps() {
    // ⟨HG_10|ψ_s⟩ = e^{−|s|²/8} sₓ/2.
    let psf = Psf::gaussian();
    let s = Vec2::new(1.0, 0.0);
    let p = psf.mode_probabilities(s).unwrap();
    let hg10 = (-s.norm_sq() / 8.0).exp() * s.x / 2.0;
    assert!((p.p10 - hg10 * hg10).abs() < 1e-15);
    assert!((p.p00 - 0.778_800_783).abs() < 1e-9);
    assert!((p.p10 - 0.194_700_196).abs() < 1e-9);
    assert!((p.p_res - 0.026_499_021).abs() < 1e-9);
}

#[test]
fn gaussian_autocorrelation_matches_real_space_quadrature() {
    let psf = Psf::gaussian();
    for d in [Vec2::ZERO, Vec2::new(2.0, 0.0), Vec2::new(-0.7, 1.3)] {
        let q = autocorrelation_quadrature(&psf, d, QuadratureOptions::default()).unwrap();
        assert!((q - psf.autocorrelation(d)).abs() < 1e-9, "{d:?}");
    }
    assert!((psf.autocorrelation(Vec2::new(2.0, 0.0)) - 0.606_530_66).abs() < 1e-8);
}

#[test]
fn gaussian_curvature_matches_finite_difference_of_quadrature() {
    let psf = Psf::gaussian();
    let opts = QuadratureOptions {
        tolerance: 1e-12,
        ..QuadratureOptions::default()
    };
    let h = 0.05;
    let g = |x: f64| autocorrelation_quadrature(&psf, Vec2::new(x, 0.0), opts).unwrap();
    let fd = -(g(h) - 2.0 * g(0.0) + g(-h)) / (h * h);
    assert!((fd - 0.25).abs() < 1e-4);
    assert_eq!(psf.curvatures().gx2, 0.25);
}

/// Truncated real-space Airy autocorrelation approaches the closed form
/// as the domain grows, with the error bounded by the tail mass
/// 2/(π²R) outside the integration disk.
#[test]
fn airy_autocorrelation_matches_truncated_quadrature() {
    let psf = Psf::airy();
    for d in [Vec2::ZERO, Vec2::new(0.4, 0.0), Vec2::new(0.3, -0.5), Vec2::new(1.2, 0.0)] {
        let mut errs = vec![];
        for radius in [8.0, 16.0] {
            let opts = QuadratureOptions {
                radius,
                tolerance: 1e-7,
                max_refinements: 5,
            };
            let q = autocorrelation_quadrature(&psf, d, opts).unwrap();
            let err = (q - psf.autocorrelation(d)).abs();
            assert!(err <= 1.5 * 2.0 / (PI * PI * radius), "{d:?} R={radius}: err {err}");
            errs.push(err);
        }
        assert!(errs[1] < errs[0], "{d:?}: error must shrink with the domain");
    }
}

#[test]
fn airy_zero_offset_quadrature_plus_tail_is_one() {
    let psf = Psf::airy();
    let radius = 12.0;
    let opts = QuadratureOptions {
        radius,
        tolerance: 1e-9,
        max_refinements: 6,
    };
    let q = autocorrelation_quadrature(&psf, Vec2::ZERO, opts).unwrap();
    let [j0, j1, _] = bessel_j012(PI * radius);
    assert!((q + j0 * j0 + j1 * j1 - 1.0).abs() < 1e-6);
    assert!((psf.autocorrelation(Vec2::ZERO) - 1.0).abs() < 1e-5);
}

#[test]
fn airy_curvature_matches_pupil_moment() {
    // For a uniform unit-diameter pupil, −∂²Γ/∂x² = (2π)² ⟨kₓ²⟩ = π²/4.
    let c = Psf::airy().curvatures();
    assert_relative_eq!(c.gx2, PI * PI / 4.0, max_relative = 1e-3);
    assert_eq!(c.gx2, c.gy2);
    // Golden value frozen from the Richardson estimate.
    assert!((c.gx2 - 2.467_401_1).abs() < 1e-7);
}

#[test]
fn airy_gradient_matches_analytic_derivative() {
    // d/ds [2J₁(πs)/(πs)] = −2π J₂(πs)/(πs).
    let psf = Psf::airy();
    for r in [0.1, 0.35, 0.8, 1.5, 2.9] {
        let z = PI * r;
        let exact = -2.0 * PI * bessel_j012(z)[2] / z;
        let g = psf.autocorrelation_gradient(Vec2::new(r, 0.0));
        assert!((g.x - exact).abs() < 1e-7, "r={r}: {} vs {exact}", g.x);
        assert!(g.y.abs() < 1e-12);
    }
}

#[test]
fn small_offset_expansion_of_first_order_modes() {
    for psf in [Psf::gaussian(), Psf::airy()] {
        let g = psf.curvatures().gx2;
        for sx in [0.01, 0.03, 0.05] {
            let p = psf.mode_probabilities(Vec2::new(sx, 0.02)).unwrap();
            assert_relative_eq!(p.p10, g * sx * sx, max_relative = 0.05);
        }
    }
}

#[test]
fn psf_amplitude_examples() {
    let g = Psf::gaussian();
    assert_relative_eq!(g.amplitude(Vec2::ZERO), 0.398_94, max_relative = 1e-4);
    assert_relative_eq!(g.amplitude(Vec2::new(2.0, 0.0)), 0.146_76, max_relative = 1e-4);
    assert_relative_eq!(Psf::airy().amplitude(Vec2::ZERO), 0.886_23, max_relative = 1e-4);
}
