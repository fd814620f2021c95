use serde::{Deserialize, Serialize};

use super::model::{Claims, CredentialKind, VerifiableCredential};

pub const CLAIM_PRODUCER: &str = "producer";
pub const CLAIM_SERVICE: &str = "service";
pub const CLAIM_OPS: &str = "ops";
pub const WILDCARD: &str = "*";

/// A request to invoke `operation` on `service` of a producer NF type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AccessRequest {
    pub producer: String,
    pub service: String,
    pub operation: String,
}

impl AccessRequest {
    pub fn new(producer: impl Into<String>, service: impl Into<String>, operation: impl Into<String>) -> Self {
        Self {
            producer: producer.into(),
            service: service.into(),
            operation: operation.into(),
        }
    }
}

fn field_matches(claims: &Claims, key: &str, wanted: &str) -> bool {
    matches!(claims.get(key), Some(v) if v == WILDCARD || v == wanted)
}

fn ops_match(claims: &Claims, operation: &str) -> bool {
    let Some(ops) = claims.get(CLAIM_OPS) else {
        return false;
    };
    ops.split(',')
        .map(str::trim)
        .any(|op| op == WILDCARD || op.eq_ignore_ascii_case(operation))
}

/// Whether a single AuthZ claim set grants the request.
pub fn claims_grant(claims: &Claims, request: &AccessRequest) -> bool {
    field_matches(claims, CLAIM_PRODUCER, &request.producer)
        && field_matches(claims, CLAIM_SERVICE, &request.service)
        && ops_match(claims, &request.operation)
}

/// Whether a claim set names `producer` at all (any service, any operation).
pub fn claims_target_producer(claims: &Claims, producer: &str) -> bool {
    field_matches(claims, CLAIM_PRODUCER, producer)
}

/// True iff some AuthZ credential among already-verified `credentials` grants the request.
pub fn evaluate_authorization<'a>(
    credentials: impl IntoIterator<Item = &'a VerifiableCredential>,
    request: &AccessRequest,
) -> bool {
    credentials
        .into_iter()
        .filter(|c| c.kind == CredentialKind::AuthZ)
        .any(|c| claims_grant(&c.claims, request))
}
