use nfid_core::identity::Did;
use serde::{Deserialize, Serialize};

/// Maps outbound requests to the DID of the producer that serves them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RouteRule {
    /// Host the request must be addressed to (port ignored); any host when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub host: Option<String>,
    pub path_prefix: String,
    pub target: Did,
}

impl RouteRule {
    pub fn new(path_prefix: impl Into<String>, target: Did) -> Self {
        Self {
            host: None,
            path_prefix: path_prefix.into(),
            target,
        }
    }

    fn matches(&self, host: Option<&str>, path: &str) -> bool {
        let host_ok = match (&self.host, host) {
            (None, _) => true,
            (Some(want), Some(got)) => got.split(':').next() == Some(want.as_str()),
            (Some(_), None) => false,
        };
        host_ok && path.starts_with(&self.path_prefix)
    }
}

/// Ordered rules; the first match wins and unmatched requests have no route.
#[derive(Debug, Clone, Default)]
pub struct RouteTable {
    rules: Vec<RouteRule>,
}

impl RouteTable {
    pub fn new(rules: Vec<RouteRule>) -> Self {
        Self { rules }
    }

    pub fn resolve(&self, host: Option<&str>, path: &str) -> Option<&Did> {
        self.rules.iter().find(|r| r.matches(host, path)).map(|r| &r.target)
    }

    pub fn rules(&self) -> &[RouteRule] {
        &self.rules
    }
}
