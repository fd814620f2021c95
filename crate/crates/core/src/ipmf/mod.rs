//! Identity and Permission Management Function.
//!
//! An IPMF issues AuthN/AuthZ credentials to NFs according to a first-match
//! rule list, hands subsets of its rights to child IPMFs as Del credentials,
//! and revokes what it issued. A root IPMF holds all rights; every other IPMF
//! holds exactly the rights of the last Del credential in its parent chain.

mod config;
mod log;
mod policy;
mod service;

pub use config::{load_config, ConfigError, IpmfConfig};
pub use log::{IssuanceLog, IssuedRecord, LogEntry, LogError};
pub use policy::{first_match, render_claims, render_template, Decision, Grant, PolicyRule, RuleMatch, CLAIM_OPERATOR, CLAIM_SLICE};
pub use service::{IpmfError, IpmfService};
