//! Call scripts: ordered REST calls between named NFs, with `{{var}}` templating.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nfid_core::canonical::{sha256, value_to_canonical_bytes};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::topology::TopologyConfig;

/// The 58-call UE registration and PDU session script.
pub const BUNDLED_SCRIPT: &str = include_str!("../scenarios/registration.script.json");

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error("cannot read script: {0}")]
    Io(#[from] std::io::Error),
    #[error("script is not valid JSON: {0}")]
    Format(#[from] serde_json::Error),
    #[error("step {step}: unknown variable {{{{{var}}}}}")]
    UnknownVar { step: usize, var: String },
    #[error("step {step}: unterminated template in {text:?}")]
    Unterminated { step: usize, text: String },
    #[error("script does not fit the topology:\n  {}", .0.join("\n  "))]
    Mismatch(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CallStep {
    pub caller: String,
    pub callee: String,
    pub method: String,
    /// Path with optional query; may contain `{{var}}`.
    pub path: String,
    pub expect_status: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Revokes every AuthZ credential `holder` has for `producer`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RevokeStep {
    pub holder: String,
    pub producer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Step {
    Revoke { revoke: RevokeStep },
    Call(CallStep),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Script {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub vars: BTreeMap<String, String>,
    pub steps: Vec<Step>,
}

/// A call with its templates filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedCall {
    pub index: usize,
    pub caller: String,
    pub callee: String,
    pub method: String,
    pub path: String,
    pub expect_status: u16,
    pub body: Option<Value>,
}

fn render(step: usize, text: &str, vars: &BTreeMap<String, String>) -> Result<String, ScriptError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after.find("}}").ok_or_else(|| ScriptError::Unterminated {
            step,
            text: text.to_string(),
        })?;
        let name = after[..end].trim();
        let value = vars.get(name).ok_or_else(|| ScriptError::UnknownVar {
            step,
            var: name.to_string(),
        })?;
        out.push_str(value);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

fn render_value(
    step: usize,
    value: &Value,
    vars: &BTreeMap<String, String>,
) -> Result<Value, ScriptError> {
    Ok(match value {
        Value::String(s) => Value::String(render(step, s, vars)?),
        Value::Array(items) => Value::Array(
            items
                .iter()
                .map(|v| render_value(step, v, vars))
                .collect::<Result<_, _>>()?,
        ),
        Value::Object(map) => Value::Object(
            map.iter()
                .map(|(k, v)| Ok((k.clone(), render_value(step, v, vars)?)))
                .collect::<Result<_, ScriptError>>()?,
        ),
        other => other.clone(),
    })
}

impl Script {
    pub fn bundled() -> Self {
        serde_json::from_str(BUNDLED_SCRIPT).expect("bundled script parses")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScriptError> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    /// Hex SHA-256 over the canonical JSON of the script, identifying it in reports.
    pub fn digest(&self) -> String {
        let value = serde_json::to_value(self).expect("script serializes");
        let bytes = value_to_canonical_bytes(&value).expect("script has no non-finite numbers");
        sha256(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn calls(&self) -> impl Iterator<Item = &CallStep> {
        self.steps.iter().filter_map(|s| match s {
            Step::Call(c) => Some(c),
            Step::Revoke { .. } => None,
        })
    }

    pub fn has_revocations(&self) -> bool {
        self.steps.iter().any(|s| matches!(s, Step::Revoke { .. }))
    }

    /// Ordered (caller, callee) pairs that appear in the script.
    pub fn distinct_pairs(&self) -> BTreeSet<(String, String)> {
        self.calls()
            .map(|c| (c.caller.clone(), c.callee.clone()))
            .collect()
    }

    pub fn render_call(&self, index: usize, call: &CallStep) -> Result<RenderedCall, ScriptError> {
        Ok(RenderedCall {
            index,
            caller: call.caller.clone(),
            callee: call.callee.clone(),
            method: call.method.to_ascii_uppercase(),
            path: render(index, &call.path, &self.vars)?,
            expect_status: call.expect_status,
            body: call
                .body
                .as_ref()
                .map(|b| render_value(index, b, &self.vars))
                .transpose()?,
        })
    }

    /// Everything that would make a run fail before any request is sent.
    pub fn mismatches(&self, topology: &TopologyConfig) -> Vec<String> {
        let mut v = Vec::new();
        let known = |name: &str| topology.nf(name).is_some();
        for (index, step) in self.steps.iter().enumerate() {
            match step {
                Step::Revoke { revoke } => {
                    for name in [&revoke.holder, &revoke.producer] {
                        if !known(name) {
                            v.push(format!("step {index}: no NF named {name:?}"));
                        }
                    }
                }
                Step::Call(call) => {
                    for name in [&call.caller, &call.callee] {
                        if !known(name) {
                            v.push(format!("step {index}: no NF named {name:?}"));
                        }
                    }
                    if call.caller == call.callee {
                        v.push(format!("step {index}: {} calls itself", call.caller));
                    }
                    if reqwest::Method::from_bytes(call.method.to_ascii_uppercase().as_bytes())
                        .is_err()
                    {
                        v.push(format!("step {index}: bad method {:?}", call.method));
                    }
                    match self.render_call(index, call) {
                        Err(e) => v.push(e.to_string()),
                        Ok(r) if known(&r.caller) => {
                            let path = r.path.split('?').next().unwrap_or_default();
                            match topology.route(&r.caller, path) {
                                Some(target) if target == r.callee => {}
                                Some(target) => v.push(format!(
                                    "step {index}: {} {} from {} routes to {target}, not {}",
                                    r.method, path, r.caller, r.callee
                                )),
                                None => v.push(format!(
                                    "step {index}: {} has no route for {path}",
                                    r.caller
                                )),
                            }
                        }
                        Ok(_) => {}
                    }
                }
            }
        }
        v
    }

    pub fn check(&self, topology: &TopologyConfig) -> Result<(), ScriptError> {
        let v = self.mismatches(topology);
        if v.is_empty() {
            Ok(())
        } else {
            Err(ScriptError::Mismatch(v))
        }
    }
}
