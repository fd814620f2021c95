use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::credentials::{Claims, CredentialKind, WILDCARD};

pub const CLAIM_SLICE: &str = "slice";
pub const CLAIM_OPERATOR: &str = "operator";

/// Predicates over the requester's verified AuthN claims. Absent fields match anything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RuleMatch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nf_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slice: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<String>,
}

impl RuleMatch {
    pub fn matches(&self, claims: &Claims) -> bool {
        let field = |want: &Option<String>, key: &str| match want {
            None => true,
            Some(w) if w == WILDCARD => claims.contains_key(key),
            Some(w) => claims.get(key) == Some(w),
        };
        field(&self.nf_type, crate::protocols::CLAIM_NF_TYPE)
            && field(&self.slice, CLAIM_SLICE)
            && field(&self.operator, CLAIM_OPERATOR)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Grant {
    pub kind: CredentialKind,
    /// Claim values may contain `{{claim}}` placeholders filled from the requester's AuthN claims.
    #[serde(default)]
    pub claims: Claims,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validity_secs: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PolicyRule {
    #[serde(rename = "match", default)]
    pub matcher: RuleMatch,
    pub grant: Grant,
}

/// Fills `{{name}}` placeholders; `None` if a placeholder has no value.
pub fn render_template(template: &str, values: &Claims) -> Option<String> {
    let mut out = String::new();
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after.find("}}")?;
        out.push_str(values.get(after[..end].trim())?);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Some(out)
}

pub fn render_claims(template: &Claims, values: &Claims) -> Option<Claims> {
    template
        .iter()
        .map(|(k, v)| render_template(v, values).map(|v| (k.clone(), v)))
        .collect()
}

/// The grant a rule yields for one request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decision {
    pub rule_index: usize,
    pub claims: Claims,
    pub validity: Option<Duration>,
}

/// First rule (in declaration order) whose predicates match, whose kind is the wanted
/// kind, and whose rendered claims contain every requested claim.
pub fn first_match(rules: &[PolicyRule], authn: &Claims, kind: CredentialKind, requested: &Claims) -> Option<Decision> {
    rules.iter().enumerate().find_map(|(i, rule)| {
        if rule.grant.kind != kind || !rule.matcher.matches(authn) {
            return None;
        }
        let claims = render_claims(&rule.grant.claims, authn)?;
        if requested.iter().any(|(k, v)| claims.get(k) != Some(v)) {
            return None;
        }
        Some(Decision {
            rule_index: i,
            claims,
            validity: rule.grant.validity_secs.map(Duration::from_secs),
        })
    })
}
