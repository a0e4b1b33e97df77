//! Certificate-based proxy re-encryption for sensor data, plus a deterministic
//! simulation of the surrounding marketplace: a proof-of-work-style ledger with
//! registry and data-request contracts, an untrusted storage proxy, and the
//! actors (certificate authority, data owner, sensors, requesters) that drive
//! the nine-step sharing flow end to end.
//!
//! The crate is organized bottom-up:
//!
//! * [`group`] — prime-order group backends (secp256k1, and an insecure mock
//!   group of integers mod a small prime for exhaustive testing).
//! * [`pre`] — the re-encryption scheme itself: certified key generation,
//!   encrypt, re-key, re-encrypt, and the two decrypt paths.
//! * [`ledger`] — single-writer block simulation with deterministic pseudo
//!   random block intervals, escrowed data requests, and an event log.
//! * [`storage`] — the honest-but-curious store/proxy holding only ciphertext
//!   and re-encryption keys, never private key material.
//! * [`actors`] — discrete-event scenario runner wiring the above together.
//! * [`bench`] — latency and scaling measurements over scenario runs, CSV out.

pub mod actors;
pub mod bench;
pub mod group;
pub mod ledger;
pub mod pre;
pub mod storage;
