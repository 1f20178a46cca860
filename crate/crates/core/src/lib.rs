//! Differential testing of binary lifters.
//!
//! Random checksum-instrumented C programs are compiled at O0 and O3, lifted
//! by the tool under evaluation, recompiled and executed. The lifted
//! program's checksum is compared against the original's, and round-trip
//! assembly similarity (BLEU, CodeBLEU) is correlated with that outcome.

pub mod config;
pub mod generator;
pub mod lifters;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod selftest;
pub mod stats;
pub mod toolchain;
