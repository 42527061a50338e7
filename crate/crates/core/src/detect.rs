//! CUSUM change detection on per-step Poisson count vectors.

use thiserror::Error;

use crate::channels::ChannelModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error("count vector has {got} entries, channel model has {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("detector already triggered at step {0}")]
    AlreadyTriggered(u64),
    #[error("threshold must be positive and finite, got {0}")]
    InvalidThreshold(f64),
    #[error("false-alarm probability must lie in (0, 1), got {0}")]
    InvalidPfa(f64),
    #[error("false-alarm window must be at least 1 step")]
    InvalidWindow,
    #[error("count on channel {0} is impossible under both hypotheses")]
    ImpossibleObservation(usize),
}

/// Per-channel log rate ratios and the constant term of the Poisson
/// log-likelihood ratio, precomputed once per channel model.
#[derive(Debug, Clone, PartialEq)]
pub struct LlrTable {
    log_ratio: Vec<f64>,
    offset: f64,
}

impl LlrTable {
    pub fn new(cm: &ChannelModel) -> Self {
        let log_ratio = cm
            .lambda_pre()
            .iter()
            .zip(cm.lambda_post())
            .map(|(&l1, &l2)| match (l1 == 0.0, l2 == 0.0) {
                (true, true) => f64::NAN,
                (true, false) => f64::INFINITY,
                (false, true) => f64::NEG_INFINITY,
                (false, false) => (l2 / l1).ln(),
            })
            .collect();
        let offset = cm.total_post() - cm.total_pre();
        Self { log_ratio, offset }
    }

    pub fn len(&self) -> usize {
        self.log_ratio.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_ratio.is_empty()
    }

    /// `Σ_k (λ₂ₖ − λ₁ₖ)`.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn log_ratio(&self) -> &[f64] {
        &self.log_ratio
    }

    /// LLR of a dense count vector.
    pub fn eval(&self, counts: &[u64]) -> Result<f64, DetectError> {
        if counts.len() != self.log_ratio.len() {
            return Err(DetectError::LengthMismatch {
                expected: self.log_ratio.len(),
                got: counts.len(),
            });
        }
        self.eval_sparse(counts.iter().copied().enumerate().filter(|&(_, n)| n > 0))
    }

    /// LLR from `(channel, count)` pairs; channels not listed saw zero
    /// counts. Channels may repeat (counts add).
    pub fn eval_sparse(&self, counts: impl IntoIterator<Item = (usize, u64)>) -> Result<f64, DetectError> {
        let mut sum = -self.offset;
        let mut pos_inf = false;
        let mut neg_inf = false;
        for (k, n) in counts {
            if n == 0 {
                continue;
            }
            let r = self.log_ratio[k];
            if r.is_nan() {
                return Err(DetectError::ImpossibleObservation(k));
            } else if r == f64::INFINITY {
                pos_inf = true;
            } else if r == f64::NEG_INFINITY {
                neg_inf = true;
            } else {
                sum += n as f64 * r;
            }
        }
        match (pos_inf, neg_inf) {
            (true, true) => Err(DetectError::ImpossibleObservation(usize::MAX)),
            (true, false) => Ok(f64::INFINITY),
            (false, true) => Ok(f64::NEG_INFINITY),
            (false, false) => Ok(sum),
        }
    }
}

/// `Σ_k [n_k ln(λ₂ₖ/λ₁ₖ) − (λ₂ₖ − λ₁ₖ)]` for one step's counts.
pub fn llr_step(cm: &ChannelModel, counts: &[u64]) -> Result<f64, DetectError> {
    LlrTable::new(cm).eval(counts)
}

/// CUSUM statistic `G_t = max(0, G_{t−1} + llr_t)` with a strict threshold
/// test `G_t > h`. Frozen once triggered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CusumState {
    pub g: f64,
    pub t: u64,
    pub h: f64,
    pub triggered: bool,
    pub trigger_time: Option<u64>,
}

impl CusumState {
    pub fn new(h: f64) -> Result<Self, DetectError> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(DetectError::InvalidThreshold(h));
        }
        Ok(Self {
            g: 0.0,
            t: 0,
            h,
            triggered: false,
            trigger_time: None,
        })
    }

    /// Advances one step in place. Returns whether the detector fired.
    pub fn step(&mut self, llr: f64) -> Result<bool, DetectError> {
        if let Some(t) = self.trigger_time {
            return Err(DetectError::AlreadyTriggered(t));
        }
        self.g = (self.g + llr).max(0.0);
        self.t += 1;
        if self.g > self.h {
            self.triggered = true;
            self.trigger_time = Some(self.t);
        }
        Ok(self.triggered)
    }

    /// `g − h` once triggered.
    pub fn overshoot(&self) -> Option<f64> {
        self.triggered.then(|| self.g - self.h)
    }
}

pub fn cusum_update(state: CusumState, llr: f64) -> Result<CusumState, DetectError> {
    let mut next = state;
    next.step(llr)?;
    Ok(next)
}

/// `h = ln(window / pfa)`.
pub fn threshold_for_pfa(pfa: f64, window: u64) -> Result<f64, DetectError> {
    if !(pfa > 0.0 && pfa < 1.0) {
        return Err(DetectError::InvalidPfa(pfa));
    }
    if window < 1 {
        return Err(DetectError::InvalidWindow);
    }
    Ok((window as f64 / pfa).ln())
}

/// One row of a detector trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub t: u64,
    pub llr: f64,
    pub g: f64,
}

/// Runs CUSUM over a precomputed LLR sequence, recording every step until
/// the trigger (inclusive) or the end of the sequence.
pub fn trace(h: f64, llrs: &[f64]) -> Result<(Vec<TracePoint>, CusumState), DetectError> {
    let mut state = CusumState::new(h)?;
    let mut out = Vec::new();
    for &llr in llrs {
        let fired = state.step(llr)?;
        out.push(TracePoint {
            t: state.t,
            llr,
            g: state.g,
        });
        if fired {
            break;
        }
    }
    Ok((out, state))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(l1: f64, l2: f64) -> ChannelModel {
        ChannelModel::from_rates(vec![l1], vec![l2]).unwrap()
    }

    #[test]
    fn llr_examples() {
        assert_eq!(llr_step(&single(2.0, 2.0), &[7]).unwrap(), 0.0);
        let v = llr_step(&single(1.0, 2.0), &[3]).unwrap();
        assert!((v - (3.0 * 2f64.ln() - 1.0)).abs() < 1e-15);
        assert!((v - 1.079_44).abs() < 1e-5);
        let cm = ChannelModel::from_rates(vec![1.0, 4.0], vec![2.0, 1.5]).unwrap();
        assert!((llr_step(&cm, &[0, 0]).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn llr_singular_channels() {
        assert_eq!(llr_step(&single(1.0, 0.0), &[1]).unwrap(), f64::NEG_INFINITY);
        assert_eq!(llr_step(&single(0.0, 1.0), &[1]).unwrap(), f64::INFINITY);
        assert_eq!(llr_step(&single(0.0, 1.0), &[0]).unwrap(), -1.0);
        let cm = ChannelModel::from_rates(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert_eq!(llr_step(&cm, &[0, 2]).unwrap(), 0.0);
        assert!(matches!(llr_step(&cm, &[1, 2]), Err(DetectError::ImpossibleObservation(0))));
        assert!(matches!(llr_step(&cm, &[1]), Err(DetectError::LengthMismatch { .. })));
    }

    #[test]
    fn cusum_examples() {
        let s = CusumState::new(10.13).unwrap();
        let a = cusum_update(s, -1.0).unwrap();
        assert_eq!((a.g, a.t, a.triggered), (0.0, 1, false));
        let b = cusum_update(CusumState { g: 2.0, ..s }, 1.5).unwrap();
        assert_eq!((b.g, b.triggered), (3.5, false));
        let h = 25000f64.ln();
        let c = cusum_update(CusumState { g: 9.0, h, ..s }, 2.0).unwrap();
        assert!(c.triggered);
        assert_eq!(c.trigger_time, Some(1));
        assert!(matches!(cusum_update(c, 0.0), Err(DetectError::AlreadyTriggered(1))));
    }

    #[test]
    fn strict_threshold() {
        let s = CusumState::new(1.0).unwrap();
        assert!(!cusum_update(s, 1.0).unwrap().triggered);
    }

    #[test]
    fn thresholds() {
        assert!((threshold_for_pfa(0.001, 25).unwrap() - 10.126_631).abs() < 1e-6);
        assert!((threshold_for_pfa(0.5, 1).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((threshold_for_pfa(0.01, 100).unwrap() - 9.210_340).abs() < 1e-6);
        assert!(threshold_for_pfa(1.0, 25).is_err());
        assert!(threshold_for_pfa(0.1, 0).is_err());
    }

    #[test]
    fn trace_stops_at_trigger() {
        let (pts, st) = trace(2.0, &[1.0, -5.0, 1.5, 1.0, 9.0]).unwrap();
        assert_eq!(pts.len(), 4);
        assert_eq!(st.trigger_time, Some(4));
        assert_eq!(pts[1].g, 0.0);
        assert!((st.overshoot().unwrap() - 0.5).abs() < 1e-15);
    }
}
