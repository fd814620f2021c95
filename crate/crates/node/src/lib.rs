//! Network-facing services: the registry over HTTP, the envelope transport,
//! IPMF and sidecar runners, and the mock NFs and wire tap used by tests and
//! the scenario harness.

pub mod ipmf_admin;
pub mod ipmf_node;
pub mod keystore;
pub mod mock_nf;
pub mod server;
pub mod sidecar;
pub mod transport;
pub mod vdr_http;
pub mod wiretap;
