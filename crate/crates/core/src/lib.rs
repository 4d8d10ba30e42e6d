//! Simulation and sizing library for off-grid renewable power-to-hydrogen plants.
//!
//! The plant model is a wind/PV fleet feeding alkaline electrolyzers, with a
//! grid-forming battery providing the frequency and voltage reference. The
//! library covers:
//!
//! - meteorological ingest and renewable power conversion ([`ingest`]),
//! - device models for electrolyzers and the battery ([`plant`]),
//! - rolling optimal scheduling of the electrolyzer fleet as a MILP ([`rose`]),
//! - the seconds-scale self-driven load-following controller ([`slf`]),
//! - the emergency continuous-operation strategy ([`socode`]),
//! - the tiered-time-step production simulator ([`simulator`]),
//! - levelized cost of hydrogen accounting ([`costing`]),
//! - iterative grid-forming battery sizing ([`sizing`]).

pub mod costing;
pub mod ingest;
pub mod lp;
pub mod plant;
pub mod rose;
pub mod simulator;
pub mod sizing;
pub mod slf;
pub mod socode;
pub mod synth;
