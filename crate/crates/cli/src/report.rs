//! File outputs: CSV tables with a units comment, SVG views of them, and
//! the resolved config as JSON.
//!
//! Column names and order are part of the output format; see the `*_COLUMNS`
//! constants.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use spade_core::ChannelModel;
use thiserror::Error;

use crate::config::{ExperimentConfig, OutputFormat};
use crate::experiments::{EntropySweep, LatencyEnsemble, ThresholdSweep};
use crate::svg::{Plot, Scale, Series};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("could not write `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("could not write CSV `{path}`: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub const ENTROPY_COLUMNS: [&str; 5] = ["gamma", "qre_leading_order", "qre_numerical", "trispade_re", "direct_re"];
pub const ENTROPY_UNITS: &str = "gamma: object size / PSF width; entropies: nats per photon; qre_numerical empty when not applicable";

pub const SLOPE_COLUMNS: [&str; 2] = ["quantity", "slope"];
pub const SLOPE_UNITS: &str = "slope: d ln(value) / d ln(gamma), least squares over the sweep";

pub const THRESHOLD_COLUMNS: [&str; 14] = [
    "h",
    "mean_latency",
    "latency_se",
    "e0_overshoot",
    "predicted_latency",
    "predicted_latency_se",
    "latency_censored_fraction",
    "mean_tfa",
    "tfa_se",
    "einf_exp_neg_overshoot",
    "tfa_bound",
    "tfa_bound_se",
    "fa_censored_fraction",
    "receiver",
];
pub const THRESHOLD_UNITS: &str =
    "h: nats; latencies and times to false alarm: steps; overshoots: nats; prediction uses N*S from the leading-order QRE";

pub const WINDOW_COLUMNS: [&str; 6] = ["h", "window", "trials", "false_alarms", "probability", "target"];
pub const WINDOW_UNITS: &str = "h: nats; window: steps; probability: fraction of no-change runs alarming within the window; target: window*exp(-h)";

pub const LATENCY_COLUMNS: [&str; 12] = [
    "gamma",
    "receiver",
    "n_trials",
    "mean_latency",
    "latency_se",
    "censored_fraction",
    "receiver_rate",
    "quantum_rate",
    "mean_tfa",
    "fa_censored_fraction",
    "quantum_limit",
    "predicted_latency",
];
pub const LATENCY_UNITS: &str = "gamma: object size / PSF width; latencies and times: steps; rates: nats per step; quantum_limit: ln(mean_tfa)/quantum_rate; mean_tfa from TriSPADE no-change runs";

pub const CHANNEL_COLUMNS: [&str; 3] = ["id", "lambda_pre", "lambda_post"];
pub const CHANNEL_UNITS: &str = "lambda: mean photons per step";

/// Shortest round-trip formatting; exponent form outside `[1e-4, 1e15)`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else if v == 0.0 || (1e-4..1e15).contains(&v.abs()) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `# units: ...`, then the header and rows.
pub fn write_csv(path: &Path, units: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), ReportError> {
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    writeln!(file, "# units: {units}").map_err(io_err(path))?;
    let csv_err = |source| ReportError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

fn write_text(path: &Path, text: &str) -> Result<(), ReportError> {
    fs::write(path, text).map_err(io_err(path))
}

pub fn entropy_rows(s: &EntropySweep) -> Vec<Vec<String>> {
    s.rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.gamma),
                fmt_f64(r.qre_leading_order),
                opt(r.qre_numerical),
                fmt_f64(r.trispade_re),
                fmt_f64(r.direct_re),
            ]
        })
        .collect()
}

pub fn slope_rows(s: &EntropySweep) -> Vec<Vec<String>> {
    s.slopes.iter().map(|r| vec![r.quantity.to_string(), opt(r.slope)]).collect()
}

pub fn threshold_rows(s: &ThresholdSweep) -> Vec<Vec<String>> {
    s.rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.h),
                opt(r.mean_latency),
                opt(r.latency_se),
                opt(r.e0_overshoot),
                opt(r.predicted_latency),
                opt(r.predicted_latency_se),
                fmt_f64(r.latency_censored_fraction),
                opt(r.mean_tfa),
                opt(r.tfa_se),
                opt(r.einf_exp_neg_overshoot),
                opt(r.tfa_bound),
                opt(r.tfa_bound_se),
                fmt_f64(r.fa_censored_fraction),
                s.receiver.to_string(),
            ]
        })
        .collect()
}

pub fn window_rows(s: &ThresholdSweep) -> Vec<Vec<String>> {
    s.window
        .iter()
        .map(|w| {
            vec![
                fmt_f64(w.h),
                w.window.to_string(),
                w.trials.to_string(),
                w.false_alarms.to_string(),
                fmt_f64(w.probability),
                fmt_f64(w.target),
            ]
        })
        .collect()
}

pub fn latency_rows(s: &LatencyEnsemble) -> Vec<Vec<String>> {
    s.rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.gamma),
                r.receiver.to_string(),
                r.n_trials.to_string(),
                opt(r.mean_latency),
                opt(r.latency_se),
                fmt_f64(r.censored_fraction),
                fmt_f64(r.receiver_rate),
                fmt_f64(r.quantum_rate),
                opt(r.mean_tfa),
                fmt_f64(r.fa_censored_fraction),
                opt(r.quantum_limit),
                opt(r.predicted_latency),
            ]
        })
        .collect()
}

pub fn channel_rows(cm: &ChannelModel) -> Vec<Vec<String>> {
    cm.channels()
        .map(|c| vec![c.id.to_string(), fmt_f64(c.lambda_pre), fmt_f64(c.lambda_post)])
        .collect()
}

/// Collects the files an experiment writes into one output directory.
pub struct Reporter<'a> {
    dir: PathBuf,
    cfg: &'a ExperimentConfig,
    written: Vec<PathBuf>,
}

impl<'a> Reporter<'a> {
    pub fn new(dir: &Path, cfg: &'a ExperimentConfig) -> Result<Self, ReportError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            cfg,
            written: vec![],
        })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn csv(&mut self, name: &str, units: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), ReportError> {
        let path = self.dir.join(name);
        write_csv(&path, units, header, rows)?;
        self.written.push(path);
        Ok(())
    }

    fn svg(&mut self, name: &str, plot: &Plot) -> Result<(), ReportError> {
        if self.cfg.output.wants(OutputFormat::Svg) {
            let path = self.dir.join(name);
            write_text(&path, &plot.render())?;
            self.written.push(path);
        }
        Ok(())
    }

    /// Resolved config next to the results.
    pub fn config_json(&mut self, experiment: &str) -> Result<(), ReportError> {
        if self.cfg.output.wants(OutputFormat::Json) {
            let path = self.dir.join(format!("{experiment}_config.json"));
            let value = serde_json::json!({
                "experiment": experiment,
                "resolved_threshold": self.cfg.threshold(),
                "config": self.cfg,
            });
            let text = serde_json::to_string_pretty(&value).expect("config serializes") + "\n";
            write_text(&path, &text)?;
            self.written.push(path);
        }
        Ok(())
    }

    pub fn entropy_sweep(&mut self, s: &EntropySweep) -> Result<(), ReportError> {
        self.csv("entropy_sweep.csv", ENTROPY_UNITS, &ENTROPY_COLUMNS, &entropy_rows(s))?;
        self.csv("entropy_slopes.csv", SLOPE_UNITS, &SLOPE_COLUMNS, &slope_rows(s))?;
        let col = |f: &dyn Fn(&crate::experiments::EntropyRow) -> Option<f64>| -> Vec<(f64, f64)> {
            s.rows.iter().filter_map(|r| f(r).map(|v| (r.gamma, v))).collect()
        };
        let mut series = vec![Series::line("QRE (leading order)", col(&|r| Some(r.qre_leading_order)))];
        if s.rows.iter().any(|r| r.qre_numerical.is_some()) {
            series.push(Series::line("QRE (numerical)", col(&|r| r.qre_numerical)).dashed());
        }
        series.push(Series::line("TriSPADE", col(&|r| Some(r.trispade_re))));
        series.push(Series::line("direct imaging", col(&|r| Some(r.direct_re))));
        self.svg(
            "entropy_sweep.svg",
            &Plot {
                title: "Relative entropy per photon".into(),
                x_label: "gamma".into(),
                y_label: "nats per photon".into(),
                x_scale: Scale::Log,
                y_scale: Scale::Log,
                series,
            },
        )?;
        self.config_json("entropy_sweep")
    }

    pub fn threshold_sweep(&mut self, s: &ThresholdSweep) -> Result<(), ReportError> {
        self.csv("threshold_sweep.csv", THRESHOLD_UNITS, &THRESHOLD_COLUMNS, &threshold_rows(s))?;
        if s.window.is_some() {
            self.csv("false_alarm_window.csv", WINDOW_UNITS, &WINDOW_COLUMNS, &window_rows(s))?;
        }
        let pick = |f: &dyn Fn(&crate::experiments::ThresholdRow) -> Option<f64>| -> Vec<(f64, f64)> {
            s.rows.iter().filter_map(|r| f(r).map(|v| (r.h, v))).collect()
        };
        let errs = |f: &dyn Fn(&crate::experiments::ThresholdRow) -> Option<(f64, f64)>| -> Vec<f64> {
            s.rows.iter().filter_map(|r| f(r).map(|v| v.1)).collect()
        };
        self.svg(
            "threshold_latency.svg",
            &Plot {
                title: format!("Mean latency vs threshold ({})", s.receiver),
                x_label: "h (nats)".into(),
                y_label: "mean latency (steps)".into(),
                x_scale: Scale::Linear,
                y_scale: Scale::Linear,
                series: vec![
                    Series::line("measured", pick(&|r| r.mean_latency))
                        .with_errors(errs(&|r| r.mean_latency.zip(r.latency_se))),
                    Series::line("(h + E0[x]) / NS", pick(&|r| r.predicted_latency)).dashed(),
                ],
            },
        )?;
        self.svg(
            "threshold_false_alarm.svg",
            &Plot {
                title: format!("Mean time to false alarm vs threshold ({})", s.receiver),
                x_label: "h (nats)".into(),
                y_label: "mean time to false alarm (steps)".into(),
                x_scale: Scale::Linear,
                y_scale: Scale::Log,
                series: vec![
                    Series::line("measured", pick(&|r| r.mean_tfa)).with_errors(errs(&|r| r.mean_tfa.zip(r.tfa_se))),
                    Series::line("exp(h) / E[exp(-x)]", pick(&|r| r.tfa_bound)).dashed(),
                ],
            },
        )?;
        self.config_json("threshold_sweep")
    }

    pub fn latency_ensemble(&mut self, s: &LatencyEnsemble) -> Result<(), ReportError> {
        self.csv("latency_ensemble.csv", LATENCY_UNITS, &LATENCY_COLUMNS, &latency_rows(s))?;
        let mut receivers: Vec<_> = s.rows.iter().map(|r| r.receiver).collect();
        receivers.dedup();
        let mut series: Vec<Series> = receivers
            .iter()
            .map(|&rc| {
                let rows: Vec<_> = s.rows.iter().filter(|r| r.receiver == rc && r.mean_latency.is_some()).collect();
                Series::line(rc.to_string(), rows.iter().map(|r| (r.gamma, r.mean_latency.unwrap())).collect())
                    .with_errors(rows.iter().map(|r| r.latency_se.unwrap_or(0.0)).collect())
            })
            .collect();
        let mut limit: Vec<(f64, f64)> = vec![];
        for r in &s.rows {
            if let Some(q) = r.quantum_limit {
                if limit.last().map(|p| p.0) != Some(r.gamma) {
                    limit.push((r.gamma, q));
                }
            }
        }
        series.push(Series::line("quantum limit", limit).dashed());
        self.svg(
            "latency_ensemble.svg",
            &Plot {
                title: format!("Mean detection latency (h = {:.3})", s.h),
                x_label: "gamma".into(),
                y_label: "mean latency (steps)".into(),
                x_scale: Scale::Log,
                y_scale: Scale::Log,
                series,
            },
        )?;
        self.config_json("latency_ensemble")
    }

    pub fn channels(&mut self, name: &str, cm: &ChannelModel) -> Result<(), ReportError> {
        self.csv(name, CHANNEL_UNITS, &CHANNEL_COLUMNS, &channel_rows(cm))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_formatting_round_trips() {
        for v in [0.0, 1.0, 0.25, 1e-20, 123456.789, 2.5e17, -3e-7, 0.1 + 0.2] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(fmt_f64(1e-20), "1e-20");
        assert_eq!(fmt_f64(0.5), "0.5");
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
    }
}
