//! Decentralized identity and mutual authentication for network functions.

pub mod canonical;
pub mod clock;
pub mod credentials;
pub mod envelope;
pub mod identity;
pub mod vdr;
pub mod protocols;
pub mod ipmf;
pub mod testkit;
