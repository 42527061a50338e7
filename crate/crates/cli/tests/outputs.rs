//! End-to-end runs of the binary: file layout, frozen CSV schemas and exit
//! codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_spade");

fn golden(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn spade(args: &[&str], config: Option<&str>, dir: &Path) -> Output {
    let mut cmd = Command::new(BIN);
    if let Some(text) = config {
        let path = dir.join("config.toml");
        fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.arg("--out").arg(dir.join("out")).args(args).output().unwrap()
}

fn head(path: &Path) -> String {
    let text = fs::read_to_string(path).unwrap();
    text.lines().take(2).map(|l| format!("{l}\n")).collect()
}

/// A small configuration for the Monte Carlo commands.
const SMALL: &str = r#"
[detector]
threshold = 4.0
n_trials = 50

[threshold_sweep]
thresholds = [3.0, 4.0]
fa_trials = 20
window_trials = 500

[latency_ensemble]
gammas = [0.5, 1.0]
direct_trials = 20
fa_trials = 20
"#;

#[test]
fn entropy_sweep_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = spade(&["entropy-sweep"], None, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let o = dir.path().join("out");
    for f in ["entropy_sweep.csv", "entropy_slopes.csv"] {
        assert_eq!(head(&o.join(f)), golden(&format!("{f}.head")), "{f}");
    }
    assert!(fs::read_to_string(o.join("entropy_sweep.svg")).unwrap().contains("</svg>"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(o.join("entropy_sweep_config.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["scenario"]["gamma"], 0.25);
    let rows = fs::read_to_string(o.join("entropy_sweep.csv")).unwrap();
    assert_eq!(rows.lines().count(), 2 + 5);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("slope direct_re"), "{stdout}");
}

#[test]
fn monte_carlo_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = spade(&["threshold-sweep"], Some(SMALL), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = spade(&["latency-ensemble"], Some(SMALL), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let o = dir.path().join("out");
    for f in ["threshold_sweep.csv", "false_alarm_window.csv", "latency_ensemble.csv"] {
        assert_eq!(head(&o.join(f)), golden(&format!("{f}.head")), "{f}");
    }
    for f in ["threshold_latency.svg", "threshold_false_alarm.svg", "latency_ensemble.svg"] {
        assert!(o.join(f).exists(), "{f}");
    }
    let lat = fs::read_to_string(o.join("latency_ensemble.csv")).unwrap();
    assert_eq!(lat.lines().count(), 2 + 4);
    assert!(lat.lines().nth(2).unwrap().starts_with("0.5,trispade,50,"));
}

#[test]
fn formats_can_drop_plots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL}\n[output]\nformats = [\"csv\"]\n");
    let out = spade(&["threshold-sweep"], Some(&cfg), dir.path());
    assert!(out.status.success());
    let o = dir.path().join("out");
    assert!(o.join("threshold_sweep.csv").exists());
    assert!(!o.join("threshold_latency.svg").exists());
    assert!(!o.join("threshold_sweep_config.json").exists());
}

#[test]
fn channel_export_matches_golden() {
    let cfg = r#"
[scenario]
preset = "custom"
[scenario.pre]
kind = "points"
points = [[0.0, 0.0, 1.0]]
[scenario.post]
kind = "points"
points = [[0.0, 0.0, 1.0]]
"#;
    let dir = tempfile::tempdir().unwrap();
    let out = spade(&["channels", "--receiver", "trispade"], Some(cfg), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("out/channels_trispade.csv")).unwrap();
    assert_eq!(text, golden("channels_trispade.csv"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = spade(&["verify"], Some("[scenario]\ngamma = -1.0\n"), dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario.gamma"));

    let out = spade(&["verify"], Some("[scenario]\ngama = 1.0\n"), dir.path());
    assert_eq!(out.status.code(), Some(2));

    let out = spade(&["verify"], None, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().all(|l| l.starts_with("PASS")), "{stdout}");

    // A custom scenario whose direct-imaging slope is not 4 fails a check.
    let cfg = r#"
[scenario]
preset = "custom"
[scenario.pre]
kind = "points"
points = [[0.0, 0.0, 1.0]]
[scenario.post]
kind = "points"
points = [[-0.3, 0.0, 1.0], [0.3, 0.0, 1.0]]
"#;
    let out = spade(&["verify"], Some(cfg), dir.path());
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stdout));

    // An Airy direct-imaging grid that misses too much light is a numerical failure.
    let cfg = "[scenario]\npsf = \"airy\"\ngrid = { pitch = 0.1, half_extent = 3.0 }\n";
    let out = spade(&["channels", "--receiver", "direct"], Some(cfg), dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

/// Identical objects carry no information, so no run triggers; the sweep
/// reports fully censored rows with empty means.
#[test]
fn zero_information_sweep_is_fully_censored() {
    let cfg = r#"
[scenario]
preset = "custom"
[scenario.pre]
kind = "points"
points = [[0.0, 0.0, 1.0]]
[scenario.post]
kind = "points"
points = [[0.0, 0.0, 1.0]]
[detector]
threshold = 3.0
max_steps = 100
n_trials = 5
[threshold_sweep]
thresholds = [3.0]
fa_trials = 2
fa_max_steps = 100
window_trials = 10
"#;
    let dir = tempfile::tempdir().unwrap();
    let out = spade(&["threshold-sweep"], Some(cfg), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("out/threshold_sweep.csv")).unwrap();
    assert_eq!(text.lines().nth(2).unwrap(), "3,,,,,,1,,,,,,1,trispade");
    let text = fs::read_to_string(dir.path().join("out/false_alarm_window.csv")).unwrap();
    assert!(text.lines().nth(2).unwrap().starts_with("3,25,10,0,0,"), "{text}");
}

#[test]
fn default_config_command_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = spade(&["default-config"], None, dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let cfg = spade_cli::config::parse_config(&text).unwrap();
    assert_eq!(cfg.output.directory, dir.path().join("out"));
}
