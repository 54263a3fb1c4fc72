//! Discrete-event simulation of TCP bulk transfer across inter-system
//! handovers between terrestrial access networks (WLAN, GPRS) and a
//! geostationary satellite, with a receiver-side proactive window engine.

pub mod handover;
pub mod mobility;
pub mod netmodel;
pub mod scenario;
pub mod simkernel;
pub mod tcp;

pub use scenario::{compare, load_scenario, run, run_with, Mode, RunOptions, RunOutput, Scenario, SimError};
pub use simkernel::SimTime;
