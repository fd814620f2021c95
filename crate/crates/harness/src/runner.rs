//! Replays a script against a launched topology, directly or through the sidecars.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nfid_core::canonical::sha256;
use nfid_node::mock_nf::CALLER_HEADER;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::launch::{RevokeError, Topology};
use crate::script::{Script, ScriptError, Step};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Callers reach the callee's mock NF directly.
    Plain,
    /// Callers go through their own sidecar, which tunnels to the callee's.
    Tunneled,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Plain => "plain",
            Mode::Tunneled => "tunneled",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plain" => Ok(Mode::Plain),
            "tunneled" => Ok(Mode::Tunneled),
            other => Err(format!(
                "unknown mode {other:?}; expected plain or tunneled"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StepOutcome {
    pub index: usize,
    pub caller: String,
    pub callee: String,
    pub method: String,
    pub path: String,
    pub expect_status: u16,
    pub status: u16,
    /// Response body as JSON, a JSON string for non-JSON bodies, null when empty.
    pub body: Value,
    /// Hex SHA-256 of the raw response body bytes.
    pub body_sha256: String,
    pub elapsed_micros: u64,
}

impl StepOutcome {
    pub fn passed(&self) -> bool {
        self.status == self.expect_status
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunReport {
    pub script: String,
    pub script_digest: String,
    pub mode: Mode,
    pub steps: Vec<StepOutcome>,
    /// Handshakes initiated during the run, over all sidecars.
    pub handshakes: u64,
    /// Envelopes recorded during the run, over all sidecars.
    pub envelopes: u64,
    pub elapsed_micros: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Script(#[from] ScriptError),
    #[error("step {step} revokes a credential; revocation steps only run tunneled")]
    TunneledOnly { step: usize },
    #[error("step {step}: {source}")]
    Revoke {
        step: usize,
        #[source]
        source: RevokeError,
    },
    #[error("step {step}: {caller} -> {callee} {method} {path}: {detail}")]
    Transport {
        step: usize,
        caller: String,
        callee: String,
        method: String,
        path: String,
        detail: String,
    },
    #[error(
        "step {}: {} -> {} {} {} returned {}, expected {}; body {}",
        .outcome.index, .outcome.caller, .outcome.callee, .outcome.method, .outcome.path,
        .outcome.status, .outcome.expect_status, .outcome.body
    )]
    StepFailed { outcome: Box<StepOutcome> },
}

fn decode_body(bytes: &[u8]) -> Value {
    if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(bytes)
            .unwrap_or_else(|_| Value::String(String::from_utf8_lossy(bytes).into_owned()))
    }
}

fn hex_sha256(bytes: &[u8]) -> String {
    sha256(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs every step in order and stops at the first unexpected status.
pub async fn run_scenario(
    topology: &Topology,
    script: &Script,
    mode: Mode,
) -> Result<RunReport, RunError> {
    script.check(&topology.config)?;
    if mode == Mode::Plain {
        if let Some(step) = script
            .steps
            .iter()
            .position(|s| matches!(s, Step::Revoke { .. }))
        {
            return Err(RunError::TunneledOnly { step });
        }
    }
    let client = reqwest::Client::builder()
        .timeout(Duration::from_secs(
            topology.config.request_timeout_secs + 5,
        ))
        .build()
        .map_err(|e| RunError::Transport {
            step: 0,
            caller: String::new(),
            callee: String::new(),
            method: String::new(),
            path: String::new(),
            detail: e.to_string(),
        })?;
    let handshakes_before = topology.handshakes();
    let envelopes_before = topology.envelopes();
    let started = Instant::now();
    let mut steps = Vec::new();

    for (index, step) in script.steps.iter().enumerate() {
        let call = match step {
            Step::Revoke { revoke } => {
                topology
                    .revoke_grants(&revoke.holder, &revoke.producer)
                    .await
                    .map_err(|source| RunError::Revoke {
                        step: index,
                        source,
                    })?;
                continue;
            }
            Step::Call(call) => script.render_call(index, call)?,
        };
        let base = match mode {
            Mode::Plain => topology.nf(&call.callee).expect("checked").mock_url(),
            Mode::Tunneled => topology.nf(&call.caller).expect("checked").intercept_url(),
        };
        let transport = |detail: String| RunError::Transport {
            step: index,
            caller: call.caller.clone(),
            callee: call.callee.clone(),
            method: call.method.clone(),
            path: call.path.clone(),
            detail,
        };
        let method = reqwest::Method::from_bytes(call.method.as_bytes())
            .map_err(|e| transport(e.to_string()))?;
        let mut request = client
            .request(method, format!("{base}{}", call.path))
            .header(CALLER_HEADER, &call.caller);
        if let Some(body) = &call.body {
            request = request.json(body);
        }
        let t0 = Instant::now();
        let response = request.send().await.map_err(|e| transport(e.to_string()))?;
        let status = response.status().as_u16();
        let bytes = response
            .bytes()
            .await
            .map_err(|e| transport(e.to_string()))?;
        let outcome = StepOutcome {
            index,
            caller: call.caller,
            callee: call.callee,
            method: call.method,
            path: call.path,
            expect_status: call.expect_status,
            status,
            body: decode_body(&bytes),
            body_sha256: hex_sha256(&bytes),
            elapsed_micros: t0.elapsed().as_micros() as u64,
        };
        tracing::debug!(step = index, status, "step done");
        if !outcome.passed() {
            return Err(RunError::StepFailed {
                outcome: Box::new(outcome),
            });
        }
        steps.push(outcome);
    }

    Ok(RunReport {
        script: script.name.clone(),
        script_digest: script.digest(),
        mode,
        steps,
        handshakes: topology.handshakes() - handshakes_before,
        envelopes: topology.envelopes() - envelopes_before,
        elapsed_micros: started.elapsed().as_micros() as u64,
    })
}

/// Per-step differences in status or body between two runs of the same script.
pub fn differences(a: &RunReport, b: &RunReport) -> Vec<String> {
    let mut v = Vec::new();
    if a.script_digest != b.script_digest {
        v.push(format!(
            "different scripts: {} vs {}",
            a.script_digest, b.script_digest
        ));
        return v;
    }
    if a.steps.len() != b.steps.len() {
        v.push(format!("{} steps vs {}", a.steps.len(), b.steps.len()));
    }
    for (x, y) in a.steps.iter().zip(&b.steps) {
        if x.status != y.status {
            v.push(format!(
                "step {}: status {} vs {}",
                x.index, x.status, y.status
            ));
        }
        if x.body_sha256 != y.body_sha256 {
            v.push(format!("step {}: body {} vs {}", x.index, x.body, y.body));
        }
    }
    v
}
