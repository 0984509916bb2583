//! Metrics for overlay-text hallucination in video question answering, and
//! a small consistency-routed mixture-of-experts model with its training
//! objective.
//!
//! * [`numerics`]: matrices, kernels, statistics, a reverse-mode tape and a
//!   finite-difference gradient checker.
//! * [`datamodel`]: benchmark samples, model responses, JSONL I/O and a
//!   seeded response simulator.
//! * [`metrics`]: resistance, escalation and cognitive-load indices plus the
//!   probability-shift analysis.
//! * [`moe`]: the routing model (patch selection, three-token layout,
//!   consistency-weighted top-1 routing).
//! * [`training`]: loss terms, synthetic conflict data and the optimizer loop.

pub mod datamodel;
pub mod metrics;
pub mod moe;
pub mod numerics;
pub mod rng;
pub mod training;
