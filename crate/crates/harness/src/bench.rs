//! Plain versus tunneled wall time over repeated runs of one script.

use serde::{Deserialize, Serialize};

use crate::launch::Topology;
use crate::runner::{differences, run_scenario, Mode, RunError, RunReport};
use crate::script::Script;

pub const DEFAULT_ITERATIONS: usize = 30;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("benchmarks need at least one iteration")]
    NoIterations,
    #[error("script {0} revokes credentials and cannot be repeated")]
    NotRepeatable(String),
    #[error("runs of different scripts cannot be compared: {0} vs {1}")]
    ScriptMismatch(String, String),
    #[error("no {0} iteration completed")]
    NoSamples(Mode),
    #[error("warm-up failed: {0}")]
    Warmup(Box<RunError>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ModeStats {
    pub mode: Mode,
    pub wall_times_ms: Vec<f64>,
    pub mean_ms: f64,
    /// Sample standard deviation; zero for a single sample.
    pub stddev_ms: f64,
    pub handshakes: u64,
    pub envelopes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VoidedIteration {
    pub mode: Mode,
    pub iteration: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BenchReport {
    pub script: String,
    pub script_digest: String,
    pub steps: usize,
    pub iterations: usize,
    pub warmup_discarded: usize,
    pub plain: ModeStats,
    pub tunneled: ModeStats,
    /// (tunneled mean / plain mean - 1) * 100.
    pub overhead_percent: f64,
    /// Every counted tunneled iteration returned the same statuses and bodies as plain.
    pub mode_equivalent: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub differences: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub voided: Vec<VoidedIteration>,
}

pub fn mean_stddev(samples: &[f64]) -> (f64, f64) {
    if samples.is_empty() {
        return (0.0, 0.0);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn overhead_percent(plain_mean: f64, tunneled_mean: f64) -> f64 {
    (tunneled_mean / plain_mean - 1.0) * 100.0
}

fn stats(mode: Mode, runs: &[RunReport]) -> ModeStats {
    let wall_times_ms: Vec<f64> = runs
        .iter()
        .map(|r| r.elapsed_micros as f64 / 1000.0)
        .collect();
    let (mean_ms, stddev_ms) = mean_stddev(&wall_times_ms);
    ModeStats {
        mode,
        wall_times_ms,
        mean_ms,
        stddev_ms,
        handshakes: runs.iter().map(|r| r.handshakes).sum(),
        envelopes: runs.iter().map(|r| r.envelopes).sum(),
    }
}

impl BenchReport {
    /// Summarizes completed runs; `baseline` is the reference every tunneled run is compared with.
    pub fn from_runs(
        baseline: &RunReport,
        plain: &[RunReport],
        tunneled: &[RunReport],
        warmup_discarded: usize,
        voided: Vec<VoidedIteration>,
    ) -> Result<Self, BenchError> {
        for r in plain.iter().chain(tunneled) {
            if r.script_digest != baseline.script_digest {
                return Err(BenchError::ScriptMismatch(
                    baseline.script_digest.clone(),
                    r.script_digest.clone(),
                ));
            }
        }
        if plain.is_empty() {
            return Err(BenchError::NoSamples(Mode::Plain));
        }
        if tunneled.is_empty() {
            return Err(BenchError::NoSamples(Mode::Tunneled));
        }
        let mut diffs = Vec::new();
        for (i, t) in tunneled.iter().enumerate() {
            diffs.extend(
                differences(baseline, t)
                    .into_iter()
                    .map(|d| format!("tunneled run {i}: {d}")),
            );
        }
        let plain = stats(Mode::Plain, plain);
        let tunneled_stats = stats(Mode::Tunneled, tunneled);
        Ok(Self {
            script: baseline.script.clone(),
            script_digest: baseline.script_digest.clone(),
            steps: baseline.steps.len(),
            iterations: plain
                .wall_times_ms
                .len()
                .max(tunneled_stats.wall_times_ms.len()),
            warmup_discarded,
            overhead_percent: overhead_percent(plain.mean_ms, tunneled_stats.mean_ms),
            plain,
            tunneled: tunneled_stats,
            mode_equivalent: diffs.is_empty(),
            differences: diffs,
            voided,
        })
    }

    pub fn table(&self) -> String {
        let mut out = format!(
            "script {} ({} steps, digest {}...)\n",
            self.script,
            self.steps,
            &self.script_digest[..self.script_digest.len().min(12)]
        );
        out.push_str(&format!(
            "{:<10} {:>6} {:>12} {:>12} {:>11}\n",
            "mode", "runs", "mean ms", "stddev ms", "handshakes"
        ));
        for s in [&self.plain, &self.tunneled] {
            out.push_str(&format!(
                "{:<10} {:>6} {:>12.3} {:>12.3} {:>11}\n",
                s.mode.to_string(),
                s.wall_times_ms.len(),
                s.mean_ms,
                s.stddev_ms,
                s.handshakes
            ));
        }
        out.push_str(&format!(
            "overhead {:+.1}%  equivalent {}  voided {}\n",
            self.overhead_percent,
            if self.mode_equivalent { "yes" } else { "NO" },
            self.voided.len()
        ));
        out
    }
}

/// One warm-up run per mode, then `iterations` runs of each mode, alternating.
pub async fn benchmark(
    topology: &Topology,
    script: &Script,
    iterations: usize,
) -> Result<BenchReport, BenchError> {
    if iterations == 0 {
        return Err(BenchError::NoIterations);
    }
    if script.has_revocations() {
        return Err(BenchError::NotRepeatable(script.name.clone()));
    }
    let baseline = run_scenario(topology, script, Mode::Plain)
        .await
        .map_err(|e| BenchError::Warmup(Box::new(e)))?;
    run_scenario(topology, script, Mode::Tunneled)
        .await
        .map_err(|e| BenchError::Warmup(Box::new(e)))?;

    let mut plain = Vec::new();
    let mut tunneled = Vec::new();
    let mut voided = Vec::new();
    for iteration in 0..iterations {
        for mode in [Mode::Plain, Mode::Tunneled] {
            match run_scenario(topology, script, mode).await {
                Ok(r) if mode == Mode::Plain => plain.push(r),
                Ok(r) => tunneled.push(r),
                Err(e) => {
                    tracing::warn!(%mode, iteration, error = %e, "iteration voided");
                    voided.push(VoidedIteration {
                        mode,
                        iteration,
                        reason: e.to_string(),
                    });
                }
            }
        }
    }
    BenchReport::from_runs(&baseline, &plain, &tunneled, 2, voided)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(digest: &str, mode: Mode, micros: u64) -> RunReport {
        RunReport {
            script: "s".into(),
            script_digest: digest.into(),
            mode,
            steps: Vec::new(),
            handshakes: 0,
            envelopes: 0,
            elapsed_micros: micros,
        }
    }

    #[test]
    fn sample_statistics() {
        let (m, s) = mean_stddev(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_stddev(&[3.0]), (3.0, 0.0));
        assert!((overhead_percent(10.0, 12.5) - 25.0).abs() < 1e-12);
    }

    #[test]
    fn runs_of_different_scripts_are_refused() {
        let base = run("a", Mode::Plain, 1000);
        let err = BenchReport::from_runs(
            &base,
            std::slice::from_ref(&base),
            &[run("b", Mode::Tunneled, 2000)],
            0,
            vec![],
        );
        assert!(matches!(err, Err(BenchError::ScriptMismatch(..))));
    }

    #[test]
    fn report_fields_follow_the_samples() {
        let base = run("a", Mode::Plain, 1000);
        let report = BenchReport::from_runs(
            &base,
            &[run("a", Mode::Plain, 1000), run("a", Mode::Plain, 3000)],
            &[
                run("a", Mode::Tunneled, 3000),
                run("a", Mode::Tunneled, 5000),
            ],
            2,
            vec![],
        )
        .unwrap();
        assert_eq!(report.plain.mean_ms, 2.0);
        assert_eq!(report.tunneled.mean_ms, 4.0);
        assert!((report.overhead_percent - 100.0).abs() < 1e-9);
        assert!(report.mode_equivalent);
        let json = serde_json::to_value(&report).unwrap();
        for key in [
            "plain",
            "tunneled",
            "overheadPercent",
            "modeEquivalent",
            "scriptDigest",
            "iterations",
        ] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert!(report.table().contains("overhead +100.0%"));
    }
}
