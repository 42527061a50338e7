//! Monte Carlo trials of the CUSUM detector and the theory predictions
//! they are checked against.
//!
//! Each trial owns a ChaCha8 generator seeded from a hash of
//! `(master_seed, trial_index)`, so results do not depend on how trials are
//! scheduled across worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::channels::ChannelModel;
use crate::detect::{CusumState, DetectError, LlrTable};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "SPADE_WORKERS";

/// Channel models with more channels than this are sampled by splitting a
/// total Poisson count.
const SPLIT_THRESHOLD: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("all {0} trials were censored; no mean can be reported")]
    AllCensored(usize),
    #[error("log-log fit needs at least 3 points with distinct abscissae and positive values")]
    DegenerateFit,
    #[error("could not start worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Detect(#[from] DetectError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Hypothesis {
    Pre,
    Post,
}

/// SplitMix64 finalizer applied to the master seed and trial index.
pub fn trial_seed(master_seed: u64, index: u64) -> u64 {
    let mut z = master_seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn trial_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn poisson(lambda: f64) -> Option<Poisson<f64>> {
    (lambda > 0.0).then(|| Poisson::new(lambda).expect("finite positive rate"))
}

fn draw(dist: &Option<Poisson<f64>>, rng: &mut impl Rng) -> u64 {
    dist.as_ref().map_or(0, |d| d.sample(rng) as u64)
}

/// Independent Poisson counts, one per channel, under `hyp`.
pub fn sample_counts(cm: &ChannelModel, hyp: Hypothesis, rng: &mut impl Rng) -> Vec<u64> {
    let rates = match hyp {
        Hypothesis::Pre => cm.lambda_pre(),
        Hypothesis::Post => cm.lambda_post(),
    };
    rates.iter().map(|&l| draw(&poisson(l), rng)).collect()
}

#[derive(Debug, Clone)]
enum HypSampler {
    PerChannel(Vec<Option<Poisson<f64>>>),
    /// Total count ~ Poisson(Σλ), each photon assigned to a channel with
    /// probability λ_k/Σλ. Same joint law as independent channel draws.
    Split {
        total: Option<Poisson<f64>>,
        alias: Option<WeightedAliasIndex<f64>>,
        support: Vec<usize>,
    },
}

impl HypSampler {
    fn new(rates: &[f64]) -> Self {
        if rates.len() <= SPLIT_THRESHOLD {
            return HypSampler::PerChannel(rates.iter().map(|&l| poisson(l)).collect());
        }
        let support: Vec<usize> = (0..rates.len()).filter(|&k| rates[k] > 0.0).collect();
        let weights: Vec<f64> = support.iter().map(|&k| rates[k]).collect();
        let total: f64 = weights.iter().sum();
        HypSampler::Split {
            total: poisson(total),
            alias: (!weights.is_empty()).then(|| WeightedAliasIndex::new(weights).expect("positive weights")),
            support,
        }
    }

    fn llr(&self, table: &LlrTable, rng: &mut impl Rng) -> Result<f64, DetectError> {
        match self {
            HypSampler::PerChannel(dists) => {
                let mut counts = [0u64; SPLIT_THRESHOLD];
                for (c, d) in counts.iter_mut().zip(dists) {
                    *c = draw(d, rng);
                }
                table.eval_sparse(counts[..dists.len()].iter().copied().enumerate())
            }
            HypSampler::Split { total, alias, support } => {
                let m = draw(total, rng);
                match alias {
                    Some(alias) => table.eval_sparse((0..m).map(|_| (support[alias.sample(rng)], 1))),
                    None => table.eval_sparse(std::iter::empty()),
                }
            }
        }
    }
}

/// Everything a trial needs from a channel model, precomputed once and
/// shared read-only across workers.
#[derive(Debug, Clone)]
pub struct TrialEngine {
    table: LlrTable,
    pre: HypSampler,
    post: HypSampler,
}

impl TrialEngine {
    pub fn new(cm: &ChannelModel) -> Self {
        Self {
            table: LlrTable::new(cm),
            pre: HypSampler::new(cm.lambda_pre()),
            post: HypSampler::new(cm.lambda_post()),
        }
    }

    /// LLR of one freshly sampled step.
    pub fn sample_llr(&self, hyp: Hypothesis, rng: &mut impl Rng) -> Result<f64, DetectError> {
        match hyp {
            Hypothesis::Pre => self.pre.llr(&self.table, rng),
            Hypothesis::Post => self.post.llr(&self.table, rng),
        }
    }

    /// One trial: pre-change counts for steps `t ≤ change_time`, post-change
    /// after; `None` never changes.
    pub fn run(&self, h: f64, change_time: Option<u64>, max_steps: u64, seed: u64) -> Result<TrialRecord, SimError> {
        if max_steps < 1 {
            return Err(SimError::InvalidArgument("max_steps must be at least 1".into()));
        }
        let mut state = CusumState::new(h)?;
        let mut rng = trial_rng(seed);
        while state.t < max_steps {
            let t = state.t + 1;
            let hyp = match change_time {
                Some(tc) if t > tc => Hypothesis::Post,
                _ => Hypothesis::Pre,
            };
            let llr = self.sample_llr(hyp, &mut rng)?;
            if state.step(llr)? {
                break;
            }
        }
        Ok(TrialRecord::from_state(&state, change_time, seed))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    /// Triggered after the change.
    Detected,
    /// Triggered at or before the change (or with no change at all).
    FalseAlarm,
    /// Reached `max_steps` without triggering.
    Censored,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub change_time: Option<u64>,
    pub trigger_time: Option<u64>,
    pub outcome: Outcome,
    /// `T − t_c` for detected trials.
    pub latency: Option<u64>,
    /// `g − h` at the trigger.
    pub overshoot: Option<f64>,
    pub steps: u64,
}

impl TrialRecord {
    fn from_state(state: &CusumState, change_time: Option<u64>, seed: u64) -> Self {
        let (outcome, latency) = match (state.trigger_time, change_time) {
            (None, _) => (Outcome::Censored, None),
            (Some(t), Some(tc)) if t > tc => (Outcome::Detected, Some(t - tc)),
            (Some(_), _) => (Outcome::FalseAlarm, None),
        };
        Self {
            seed,
            change_time,
            trigger_time: state.trigger_time,
            outcome,
            latency,
            overshoot: state.overshoot(),
            steps: state.t,
        }
    }
}

/// Convenience wrapper building a [`TrialEngine`] for a single trial.
pub fn run_trial(
    cm: &ChannelModel,
    h: f64,
    change_time: Option<u64>,
    max_steps: u64,
    seed: u64,
) -> Result<TrialRecord, SimError> {
    TrialEngine::new(cm).run(h, change_time, max_steps, seed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleSpec {
    pub h: f64,
    /// `None` runs no-change (false-alarm) trials.
    pub change_time: Option<u64>,
    pub n_trials: usize,
    pub max_steps: u64,
    pub master_seed: u64,
    /// Worker threads; `None` reads [`WORKERS_ENV`], else uses all cores.
    pub workers: Option<usize>,
}

/// Resolves a worker count from an explicit value, the environment, or the
/// machine.
pub fn worker_count(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse().ok()))
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs all trials; records come back in trial-index order regardless of
/// the worker count.
pub fn run_trials(engine: &TrialEngine, spec: &EnsembleSpec) -> Result<Vec<TrialRecord>, SimError> {
    if spec.n_trials < 1 {
        return Err(SimError::InvalidArgument("n_trials must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(spec.workers))
        .build()
        .map_err(|e| SimError::Pool(e.to_string()))?;
    pool.install(|| {
        (0..spec.n_trials as u64)
            .into_par_iter()
            .map(|i| engine.run(spec.h, spec.change_time, spec.max_steps, trial_seed(spec.master_seed, i)))
            .collect()
    })
}

pub fn run_ensemble(engine: &TrialEngine, spec: &EnsembleSpec) -> Result<EnsembleStats, SimError> {
    EnsembleStats::from_records(&run_trials(engine, spec)?)
}

/// Sample mean and standard error of the mean (0 for a single sample).
pub fn mean_and_se(xs: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len();
    if n == 0 {
        return None;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Some((mean, 0.0));
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Some((mean, (var / n as f64).sqrt()))
}

/// Aggregates over an ensemble.
///
/// Latency and `E₀[x]` come from trials that triggered after the change;
/// `T̄_FA` and `E_∞[e^{−x}]` from triggered no-change trials. Censored
/// trials are excluded from means and counted in `censored_fraction`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub n_trials: usize,
    pub n_detected: usize,
    pub n_false_alarm: usize,
    pub n_censored: usize,
    pub censored_fraction: f64,
    /// Fraction of trials that triggered at or before the change.
    pub fa_rate: f64,
    pub mean_latency: Option<f64>,
    pub latency_se: Option<f64>,
    pub mean_tfa: Option<f64>,
    pub tfa_se: Option<f64>,
    pub e0_overshoot: Option<f64>,
    pub e0_overshoot_se: Option<f64>,
    pub einf_exp_neg_overshoot: Option<f64>,
    pub einf_exp_neg_overshoot_se: Option<f64>,
}

impl EnsembleStats {
    pub fn from_records(records: &[TrialRecord]) -> Result<Self, SimError> {
        let n = records.len();
        let count = |o| records.iter().filter(|r| r.outcome == o).count();
        let (n_detected, n_false_alarm, n_censored) =
            (count(Outcome::Detected), count(Outcome::FalseAlarm), count(Outcome::Censored));
        if n == 0 || n_censored == n {
            return Err(SimError::AllCensored(n));
        }
        let detected: Vec<&TrialRecord> = records.iter().filter(|r| r.outcome == Outcome::Detected).collect();
        let lat: Vec<f64> = detected.iter().filter_map(|r| r.latency).map(|l| l as f64).collect();
        let x0: Vec<f64> = detected.iter().filter_map(|r| r.overshoot).collect();
        let no_change: Vec<&TrialRecord> = records
            .iter()
            .filter(|r| r.change_time.is_none() && r.outcome == Outcome::FalseAlarm)
            .collect();
        let tfa: Vec<f64> = no_change.iter().filter_map(|r| r.trigger_time).map(|t| t as f64).collect();
        let xinf: Vec<f64> = no_change.iter().filter_map(|r| r.overshoot).map(|x| (-x).exp()).collect();
        let lat = mean_and_se(&lat);
        let x0 = mean_and_se(&x0);
        let tfa = mean_and_se(&tfa);
        let xinf = mean_and_se(&xinf);
        Ok(Self {
            n_trials: n,
            n_detected,
            n_false_alarm,
            n_censored,
            censored_fraction: n_censored as f64 / n as f64,
            fa_rate: n_false_alarm as f64 / n as f64,
            mean_latency: lat.map(|v| v.0),
            latency_se: lat.map(|v| v.1),
            mean_tfa: tfa.map(|v| v.0),
            tfa_se: tfa.map(|v| v.1),
            e0_overshoot: x0.map(|v| v.0),
            e0_overshoot_se: x0.map(|v| v.1),
            einf_exp_neg_overshoot: xinf.map(|v| v.0),
            einf_exp_neg_overshoot_se: xinf.map(|v| v.1),
        })
    }
}

/// Lower bound on worst-case mean latency at a given mean time to false
/// alarm: `ln(T̄_FA) / (N·S)`.
pub fn quantum_limit_latency(tfa: f64, info_rate: f64) -> Result<f64, SimError> {
    if !(tfa >= 1.0) {
        return Err(SimError::InvalidArgument(format!("mean time to false alarm {tfa} must be at least 1")));
    }
    if !(info_rate > 0.0) {
        return Err(SimError::InvalidArgument(format!("information rate {info_rate} must be positive")));
    }
    Ok(tfa.ln() / info_rate)
}

/// Overshoot-corrected mean latency `(h + E₀[x]) / rate`.
pub fn latency_prediction(h: f64, e0_overshoot: f64, info_rate: f64) -> Result<f64, SimError> {
    if !(info_rate > 0.0) {
        return Err(SimError::InvalidArgument(format!("information rate {info_rate} must be positive")));
    }
    if !(h > 0.0) || !(e0_overshoot >= 0.0) {
        return Err(SimError::InvalidArgument("threshold must be positive and overshoot non-negative".into()));
    }
    Ok((h + e0_overshoot) / info_rate)
}

/// Lower bound on the mean time to false alarm, `e^h / E_∞[e^{−x}]`.
pub fn false_alarm_bound(h: f64, einf_exp_neg_overshoot: f64) -> Result<f64, SimError> {
    if !(einf_exp_neg_overshoot > 0.0 && einf_exp_neg_overshoot <= 1.0) {
        return Err(SimError::InvalidArgument(format!(
            "E[exp(-x)] = {einf_exp_neg_overshoot} must lie in (0, 1]"
        )));
    }
    Ok(h.exp() / einf_exp_neg_overshoot)
}

/// Least-squares slope of `ln(value)` against `ln(γ)`.
pub fn fit_log_slope(points: &[(f64, f64)]) -> Result<f64, SimError> {
    if points.len() < 3 || points.iter().any(|&(g, v)| !(g > 0.0 && v > 0.0 && v.is_finite())) {
        return Err(SimError::DegenerateFit);
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx < 1e-24 {
        return Err(SimError::DegenerateFit);
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

/// Step cap for no-change runs: `min(⌈200 e^h⌉, cap)`.
pub fn fa_max_steps(h: f64, cap: u64) -> u64 {
    let natural = (200.0 * h.exp()).ceil();
    if natural >= cap as f64 {
        cap
    } else {
        natural as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predictors() {
        assert!((quantum_limit_latency(25000.0, 0.4).unwrap() - 25.3166).abs() < 1e-4);
        assert_eq!(quantum_limit_latency(1.0, 0.4).unwrap(), 0.0);
        let e10 = 10f64.exp();
        assert!((quantum_limit_latency(e10, 1.0).unwrap() - 10.0).abs() < 1e-12);
        assert!((quantum_limit_latency(e10, 2.0).unwrap() - 5.0).abs() < 1e-12);
        assert!(quantum_limit_latency(0.5, 1.0).is_err());
        assert!(quantum_limit_latency(10.0, 0.0).is_err());
        assert_eq!(latency_prediction(10.0, 0.0, 0.5).unwrap(), 20.0);
        assert!(latency_prediction(10.0, 0.0, -1.0).is_err());
        assert!((false_alarm_bound(2.0, 0.5).unwrap() - 2.0 * 2f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn log_slopes() {
        let g: [f64; 5] = [0.05, 0.07, 0.1, 0.14, 0.2];
        let quartic: Vec<_> = g.iter().map(|&x| (x, 3.0 * x.powi(4))).collect();
        let quadratic: Vec<_> = g.iter().map(|&x| (x, 0.1 * x * x)).collect();
        assert!((fit_log_slope(&quartic).unwrap() - 4.0).abs() < 1e-12);
        assert!((fit_log_slope(&quadratic).unwrap() - 2.0).abs() < 1e-12);
        assert!(fit_log_slope(&[(0.1, 1.0), (0.1, 2.0), (0.1, 3.0)]).is_err());
        assert!(fit_log_slope(&quartic[..2]).is_err());
    }

    #[test]
    fn seeds_differ_per_trial() {
        let a: Vec<u64> = (0..1000).map(|i| trial_seed(7, i)).collect();
        let mut b = a.clone();
        b.sort_unstable();
        b.dedup();
        assert_eq!(b.len(), a.len());
        assert_ne!(trial_seed(7, 0), trial_seed(8, 0));
    }

    #[test]
    fn zero_rate_channel_never_counts() {
        let cm = ChannelModel::from_rates(vec![0.0, 3.0], vec![0.0, 3.0]).unwrap();
        let mut rng = trial_rng(1);
        for _ in 0..100 {
            assert_eq!(sample_counts(&cm, Hypothesis::Pre, &mut rng)[0], 0);
        }
    }

    #[test]
    fn fa_cap() {
        assert_eq!(fa_max_steps(0.0, 1_000_000), 200);
        assert_eq!(fa_max_steps(30.0, 1_000_000), 1_000_000);
    }

    #[test]
    fn dominant_channel_detects_in_one_step() {
        let cm = ChannelModel::from_rates(vec![0.01], vec![50.0]).unwrap();
        let rec = run_trial(&cm, 5.0, Some(0), 100, 3).unwrap();
        assert_eq!(rec.outcome, Outcome::Detected);
        assert_eq!(rec.latency, Some(1));
    }

    #[test]
    fn all_censored_is_an_error() {
        let cm = ChannelModel::from_rates(vec![1.0], vec![1.0]).unwrap();
        let engine = TrialEngine::new(&cm);
        let spec = EnsembleSpec {
            h: 1.0,
            change_time: None,
            n_trials: 4,
            max_steps: 50,
            master_seed: 0,
            workers: Some(1),
        };
        assert_eq!(run_ensemble(&engine, &spec), Err(SimError::AllCensored(4)));
    }
}
