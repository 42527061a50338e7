//! Fast self-checks run by `spade verify`.

use spade_core::channels::{direct_channels, poisson_re_per_step, qre_leading_order, trispade_channels};
use spade_core::qre::qre_numerical;
use spade_core::scene::{build_object, build_object_pair, ObjectSpec, SquareQuadrature};
use spade_core::sim::fit_log_slope;
use spade_core::{Psf, PsfKind, Scenario};

use crate::config::ExperimentConfig;
use crate::experiments::{scenario_at, ExperimentError};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn points(p: &[(f64, f64, f64)]) -> ObjectSpec {
    ObjectSpec::points(p)
}

/// Square of side 1 against its four corners, where the leading-order QRE
/// has the closed form `2·g·[1/12 − 1/4 + ln(3)/4]·γ²`.
fn leading_order_closed_form() -> Result<Check, ExperimentError> {
    let sq = build_object(&ObjectSpec::uniform_square(1.0, SquareQuadrature::Gauss, 4), "square")
        .expect("unit square is valid");
    let corners = build_object(
        &points(&[(-0.5, -0.5, 1.0), (0.5, -0.5, 1.0), (-0.5, 0.5, 1.0), (0.5, 0.5, 1.0)]),
        "corners",
    )
    .expect("corner points are valid");
    let gamma = 0.1;
    let sc = Scenario::new(sq, corners, gamma, 500.0, Psf::gaussian())?;
    let expected = 2.0 * 0.25 * (1.0 / 12.0 - 0.25 + 0.25 * 3f64.ln()) * gamma * gamma;
    let got = qre_leading_order(&sc);
    let rel = (got - expected).abs() / expected;
    Ok(check(
        "leading-order QRE closed form",
        rel <= 1e-9,
        format!("{got:.12e} vs {expected:.12e} (rel {rel:.1e})"),
    ))
}

fn numerical_matches_leading_order() -> Result<Check, ExperimentError> {
    let (a, b) = build_object_pair(
        &points(&[(-0.1, 0.0, 1.0), (0.1, 0.0, 1.0)]),
        &points(&[(-0.4, 0.0, 1.0), (0.4, 0.0, 1.0)]),
    )
    .expect("two-point objects are valid");
    let sc = Scenario::new(a, b, 0.05, 500.0, Psf::gaussian())?;
    let q = qre_numerical(&sc, 8)?;
    let lo = qre_leading_order(&sc);
    let rel = (q - lo).abs() / lo;
    Ok(check(
        "numerical QRE vs leading order",
        rel <= 0.02,
        format!("{q:.6e} vs {lo:.6e} (rel {rel:.2e})"),
    ))
}

fn degenerate_cases() -> Result<Check, ExperimentError> {
    let dot = build_object(&points(&[(0.0, 0.0, 1.0)]), "dot").expect("valid");
    let sc = Scenario::new(dot.clone(), dot, 0.3, 500.0, Psf::gaussian())?;
    let cm = trispade_channels(&sc)?;
    let rates_ok = cm.lambda_pre() == [500.0, 0.0, 0.0] && cm.lambda_post() == [500.0, 0.0, 0.0];
    let zero_info = poisson_re_per_step(&cm) == 0.0 && qre_leading_order(&sc) == 0.0;
    let off = build_object(&points(&[(0.2, 0.1, 1.0)]), "dot").expect("valid");
    let shifted = off.shifted(spade_core::Vec2::new(0.2, 0.1));
    let rejected = Scenario::new(shifted, off, 0.3, 500.0, Psf::gaussian()).is_err();
    Ok(check(
        "degenerate scenarios",
        rates_ok && zero_info && rejected,
        format!("point rates {rates_ok}, zero information {zero_info}, off-centroid rejected {rejected}"),
    ))
}

fn trispade_saturates(cfg: &ExperimentConfig) -> Result<Check, ExperimentError> {
    let gammas: Vec<f64> = cfg.entropy_sweep.gammas.iter().copied().filter(|&g| g <= 0.1).collect();
    let mut worst: f64 = 0.0;
    for &g in &gammas {
        let sc = scenario_at(cfg, g)?;
        let q = qre_leading_order(&sc);
        let t = poisson_re_per_step(&trispade_channels(&sc)?) / sc.photons_per_step;
        let gap = match (t, q) {
            (0.0, 0.0) => 0.0,
            _ if q > 0.0 && q.is_finite() && t.is_finite() => (t / q - 1.0).abs(),
            _ => f64::INFINITY,
        };
        worst = worst.max(gap);
    }
    Ok(check(
        "TriSPADE within 5% of the QRE for gamma <= 0.1",
        !gammas.is_empty() && worst <= 0.05,
        format!("{} grid points, worst relative gap {worst:.2e}", gammas.len()),
    ))
}

fn direct_slope(cfg: &ExperimentConfig) -> Result<Check, ExperimentError> {
    let grid = cfg.scenario.pixel_grid();
    let mut pts = vec![];
    for &g in &cfg.entropy_sweep.gammas {
        let sc = scenario_at(cfg, g)?;
        pts.push((g, poisson_re_per_step(&direct_channels(&sc, &grid)?)));
    }
    let slope = fit_log_slope(&pts)?;
    let expected = match cfg.scenario.psf {
        PsfKind::Gaussian => 4.0,
        PsfKind::Airy => 3.0,
    };
    Ok(check(
        "direct-imaging scaling exponent",
        (slope - expected).abs() <= 0.2,
        format!("slope {slope:.4}, expected {expected} +/- 0.2"),
    ))
}

/// Runs every check. Scenario-dependent checks use the configured scenario
/// and entropy-sweep γ-grid.
pub fn run_checks(cfg: &ExperimentConfig) -> Result<Vec<Check>, ExperimentError> {
    let mut out = vec![
        leading_order_closed_form()?,
        numerical_matches_leading_order()?,
        degenerate_cases()?,
    ];
    if cfg.scenario.psf == PsfKind::Gaussian {
        out.push(trispade_saturates(cfg)?);
    }
    out.push(direct_slope(cfg)?);
    Ok(out)
}
