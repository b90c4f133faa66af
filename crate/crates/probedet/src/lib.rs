//! Packet-to-verdict probing detection pipeline.
//!
//! The crate takes classic pcap captures (or its own synthetic generator's
//! output), assembles bidirectional flows, computes flow-level and temporal
//! probe-signal features, runs hybrid feature selection, and trains either a
//! bagging ensemble over from-scratch base learners or a small CNN on a
//! tabular-to-image encoding. An evaluation module provides confusion-matrix
//! metrics, ROC/AUC, and a misuse-rule baseline for anomaly-vs-misuse
//! comparisons.

// Indexed loops are the clearer idiom in the numeric kernels here.
#![allow(clippy::needless_range_loop)]

pub mod capture;
pub mod cnn;
pub mod dataset;
pub mod ensemble;
pub mod eval;
pub mod flow;
pub mod learners;
pub mod selection;
pub mod synth;
pub mod temporal;
