//! The experiments behind each subcommand. Each returns plain tables; the
//! `report` module turns them into files.

use log::info;
use spade_core::channels::{
    direct_channels, poisson_re_per_step, qre_leading_order, trispade_channels, ChannelError,
};
use spade_core::qre::{qre_numerical_checked, QreError};
use spade_core::sim::{
    fa_max_steps, fit_log_slope, run_ensemble, run_trials, EnsembleSpec, EnsembleStats, Outcome, SimError,
};
use spade_core::{ChannelModel, Psf, Receiver, Scenario, TrialEngine};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, ThresholdSpec};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Qre(#[from] QreError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Scenario at the configured γ.
pub fn scenario(cfg: &ExperimentConfig) -> Result<Scenario, ExperimentError> {
    scenario_at(cfg, cfg.scenario.gamma)
}

pub fn scenario_at(cfg: &ExperimentConfig, gamma: f64) -> Result<Scenario, ExperimentError> {
    let (pre, post) = cfg.scenario.objects()?;
    let psf = Psf::new(cfg.scenario.psf).map_err(ChannelError::from)?;
    Ok(Scenario::new(pre, post, gamma, cfg.scenario.photons_per_step, psf)?)
}

pub fn channel_model(
    cfg: &ExperimentConfig,
    sc: &Scenario,
    receiver: Receiver,
) -> Result<ChannelModel, ExperimentError> {
    Ok(match receiver {
        Receiver::TriSpade => trispade_channels(sc)?,
        Receiver::DirectImaging => direct_channels(sc, &cfg.scenario.pixel_grid())?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyRow {
    pub gamma: f64,
    pub qre_leading_order: f64,
    /// Only for a Gaussian PSF and point-mass objects.
    pub qre_numerical: Option<f64>,
    pub trispade_re: f64,
    pub direct_re: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeRow {
    pub quantity: &'static str,
    pub slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropySweep {
    pub rows: Vec<EntropyRow>,
    pub slopes: Vec<SlopeRow>,
}

/// Per-photon relative entropies over the configured γ-grid.
pub fn entropy_sweep(cfg: &ExperimentConfig) -> Result<EntropySweep, ExperimentError> {
    let n = cfg.scenario.photons_per_step;
    let grid = cfg.scenario.pixel_grid();
    let mut rows = Vec::with_capacity(cfg.entropy_sweep.gammas.len());
    for &gamma in &cfg.entropy_sweep.gammas {
        let sc = scenario_at(cfg, gamma)?;
        let numerical = match qre_numerical_checked(&sc, cfg.entropy_sweep.n_max) {
            Ok(v) => Some(v),
            Err(QreError::NonGaussianPsf | QreError::RasterObject(_)) => None,
            Err(e) => return Err(e.into()),
        };
        let row = EntropyRow {
            gamma,
            qre_leading_order: qre_leading_order(&sc),
            qre_numerical: numerical,
            trispade_re: poisson_re_per_step(&trispade_channels(&sc)?) / n,
            direct_re: poisson_re_per_step(&direct_channels(&sc, &grid)?) / n,
        };
        info!("entropy sweep: gamma = {gamma}: {row:?}");
        rows.push(row);
    }
    let slope = |f: &dyn Fn(&EntropyRow) -> Option<f64>| {
        let pts: Option<Vec<(f64, f64)>> = rows.iter().map(|r| f(r).map(|v| (r.gamma, v))).collect();
        pts.and_then(|p| fit_log_slope(&p).ok())
    };
    let slopes = vec![
        SlopeRow {
            quantity: "qre_leading_order",
            slope: slope(&|r| Some(r.qre_leading_order)),
        },
        SlopeRow {
            quantity: "qre_numerical",
            slope: slope(&|r| r.qre_numerical),
        },
        SlopeRow {
            quantity: "trispade_re",
            slope: slope(&|r| Some(r.trispade_re)),
        },
        SlopeRow {
            quantity: "direct_re",
            slope: slope(&|r| Some(r.direct_re)),
        },
    ];
    Ok(EntropySweep { rows, slopes })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdRow {
    pub h: f64,
    pub mean_latency: Option<f64>,
    pub latency_se: Option<f64>,
    pub e0_overshoot: Option<f64>,
    /// `(h + E₀[x]) / (N·S)` with S the leading-order QRE.
    pub predicted_latency: Option<f64>,
    /// Standard error of the prediction from `E₀[x]`.
    pub predicted_latency_se: Option<f64>,
    pub latency_censored_fraction: f64,
    pub mean_tfa: Option<f64>,
    pub tfa_se: Option<f64>,
    pub einf_exp_neg_overshoot: Option<f64>,
    /// `e^h / E_∞[e^{−x}]`.
    pub tfa_bound: Option<f64>,
    pub tfa_bound_se: Option<f64>,
    pub fa_censored_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowRow {
    pub h: f64,
    pub window: u64,
    pub trials: usize,
    pub false_alarms: usize,
    pub probability: f64,
    /// `window · e^{−h}`.
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSweep {
    pub receiver: Receiver,
    pub info_rate: f64,
    pub rows: Vec<ThresholdRow>,
    pub window: Option<WindowRow>,
}

/// Like [`run_ensemble`], but an ensemble where every trial was censored
/// yields empty means instead of an error.
pub fn ensemble(engine: &TrialEngine, spec: &EnsembleSpec) -> Result<EnsembleStats, SimError> {
    match run_ensemble(engine, spec) {
        Err(SimError::AllCensored(n)) => Ok(EnsembleStats {
            n_trials: n,
            n_detected: 0,
            n_false_alarm: 0,
            n_censored: n,
            censored_fraction: 1.0,
            fa_rate: 0.0,
            mean_latency: None,
            latency_se: None,
            mean_tfa: None,
            tfa_se: None,
            e0_overshoot: None,
            e0_overshoot_se: None,
            einf_exp_neg_overshoot: None,
            einf_exp_neg_overshoot_se: None,
        }),
        other => other,
    }
}

fn ensemble_spec(cfg: &ExperimentConfig, h: f64, workers: Option<usize>) -> EnsembleSpec {
    EnsembleSpec {
        h,
        change_time: Some(cfg.detector.change_time),
        n_trials: cfg.detector.n_trials,
        max_steps: cfg.detector.max_steps,
        master_seed: cfg.detector.master_seed,
        workers,
    }
}

fn fa_spec(cfg: &ExperimentConfig, h: f64, n_trials: usize, cap: u64, workers: Option<usize>) -> EnsembleSpec {
    EnsembleSpec {
        h,
        change_time: None,
        n_trials,
        max_steps: fa_max_steps(h, cap),
        // Independent of the change-run streams.
        master_seed: cfg.detector.master_seed ^ 0xFA,
        workers,
    }
}

/// Latency and false-alarm statistics across the configured thresholds.
pub fn threshold_sweep(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<ThresholdSweep, ExperimentError> {
    let ts = &cfg.threshold_sweep;
    let sc = scenario(cfg)?;
    let cm = channel_model(cfg, &sc, ts.receiver)?;
    let engine = TrialEngine::new(&cm);
    let info_rate = cfg.scenario.photons_per_step * qre_leading_order(&sc);
    let mut rows = Vec::with_capacity(ts.thresholds.len());
    for &h in &ts.thresholds {
        let lat = ensemble(&engine, &ensemble_spec(cfg, h, workers))?;
        let fa = ensemble(&engine, &fa_spec(cfg, h, ts.fa_trials, ts.fa_max_steps, workers))?;
        let predicted = match lat.e0_overshoot {
            Some(x) if info_rate > 0.0 => Some(spade_core::sim::latency_prediction(h, x, info_rate)?),
            _ => None,
        };
        let bound = fa
            .einf_exp_neg_overshoot
            .map(|e| spade_core::sim::false_alarm_bound(h, e))
            .transpose()?;
        let bound_se = match (fa.einf_exp_neg_overshoot, fa.einf_exp_neg_overshoot_se) {
            (Some(e), Some(se)) => Some(h.exp() * se / (e * e)),
            _ => None,
        };
        let row = ThresholdRow {
            h,
            mean_latency: lat.mean_latency,
            latency_se: lat.latency_se,
            e0_overshoot: lat.e0_overshoot,
            predicted_latency: predicted,
            predicted_latency_se: predicted.and(lat.e0_overshoot_se.map(|se| se / info_rate)),
            latency_censored_fraction: lat.censored_fraction,
            mean_tfa: fa.mean_tfa,
            tfa_se: fa.tfa_se,
            einf_exp_neg_overshoot: fa.einf_exp_neg_overshoot,
            tfa_bound: bound,
            tfa_bound_se: bound_se,
            fa_censored_fraction: fa.censored_fraction,
        };
        info!("threshold sweep: h = {h}: {row:?}");
        rows.push(row);
    }
    let window = if ts.window_trials > 0 {
        Some(window_false_alarms(cfg, &engine, workers)?)
    } else {
        None
    };
    Ok(ThresholdSweep {
        receiver: ts.receiver,
        info_rate,
        rows,
        window,
    })
}

/// Fraction of no-change runs that alarm within one window at the detector
/// threshold. The window is the configured false-alarm window, or `t_c`
/// when the threshold is given directly.
pub fn window_false_alarms(
    cfg: &ExperimentConfig,
    engine: &TrialEngine,
    workers: Option<usize>,
) -> Result<WindowRow, ExperimentError> {
    let h = cfg.threshold();
    let window = match cfg.detector.threshold {
        ThresholdSpec::FalseAlarm { window, .. } => window,
        ThresholdSpec::Value(_) => cfg.detector.change_time.max(1),
    };
    let trials = cfg.threshold_sweep.window_trials;
    let spec = EnsembleSpec {
        h,
        change_time: None,
        n_trials: trials,
        max_steps: window,
        master_seed: cfg.detector.master_seed ^ 0x57,
        workers,
    };
    let recs = run_trials(engine, &spec)?;
    let false_alarms = recs.iter().filter(|r| r.outcome == Outcome::FalseAlarm).count();
    Ok(WindowRow {
        h,
        window,
        trials,
        false_alarms,
        probability: false_alarms as f64 / trials as f64,
        target: window as f64 * (-h).exp(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyRow {
    pub gamma: f64,
    pub receiver: Receiver,
    pub n_trials: usize,
    pub mean_latency: Option<f64>,
    pub latency_se: Option<f64>,
    pub censored_fraction: f64,
    /// Receiver relative entropy per step.
    pub receiver_rate: f64,
    /// `N·S` with S the leading-order QRE.
    pub quantum_rate: f64,
    /// Measured TriSPADE `T̄_FA` at the detector threshold.
    pub mean_tfa: Option<f64>,
    pub fa_censored_fraction: f64,
    /// `ln(T̄_FA) / (N·S)`.
    pub quantum_limit: Option<f64>,
    /// `(h + E₀[x]) / receiver_rate`.
    pub predicted_latency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyEnsemble {
    pub h: f64,
    pub rows: Vec<LatencyRow>,
}

/// Mean detection latency against γ for each receiver, with the quantum
/// limit computed from the TriSPADE mean time to false alarm.
pub fn latency_ensemble(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<LatencyEnsemble, ExperimentError> {
    let le = &cfg.latency_ensemble;
    let h = cfg.threshold();
    let mut rows = Vec::new();
    for &gamma in &le.gammas {
        let sc = scenario_at(cfg, gamma)?;
        let quantum_rate = cfg.scenario.photons_per_step * qre_leading_order(&sc);
        let tri = trispade_channels(&sc)?;
        let fa = ensemble(&TrialEngine::new(&tri), &fa_spec(cfg, h, le.fa_trials, le.fa_max_steps, workers))?;
        let quantum_limit = match fa.mean_tfa {
            Some(t) if t >= 1.0 && quantum_rate > 0.0 => Some(spade_core::sim::quantum_limit_latency(t, quantum_rate)?),
            _ => None,
        };
        for &receiver in &le.receivers {
            let cm = match receiver {
                Receiver::TriSpade => tri.clone(),
                Receiver::DirectImaging => channel_model(cfg, &sc, receiver)?,
            };
            let mut spec = ensemble_spec(cfg, h, workers);
            if receiver == Receiver::DirectImaging {
                spec.n_trials = le.direct_trials;
            }
            let st = ensemble(&TrialEngine::new(&cm), &spec)?;
            let receiver_rate = poisson_re_per_step(&cm);
            let predicted = match st.e0_overshoot {
                Some(x) if receiver_rate > 0.0 => Some(spade_core::sim::latency_prediction(h, x, receiver_rate)?),
                _ => None,
            };
            let row = LatencyRow {
                gamma,
                receiver,
                n_trials: st.n_trials,
                mean_latency: st.mean_latency,
                latency_se: st.latency_se,
                censored_fraction: st.censored_fraction,
                receiver_rate,
                quantum_rate,
                mean_tfa: fa.mean_tfa,
                fa_censored_fraction: fa.censored_fraction,
                quantum_limit,
                predicted_latency: predicted,
            };
            info!("latency ensemble: gamma = {gamma}, {receiver}: {row:?}");
            rows.push(row);
        }
    }
    Ok(LatencyEnsemble { h, rows })
}

