//! Proactive handover engine.
//!
//! Before moving onto the satellite the mobile node shrinks its advertised
//! window to the satellite BDP and delays registration by `δ` so that data
//! sent under the old window clears the home agent before redirection.
//! Before leaving the satellite it briefly boosts the window, then closes it,
//! suppresses duplicate ACKs while the satellite path drains, and ramps the
//! window up on the terrestrial link.

pub mod alloc;
pub mod control;
pub mod estimate;
pub mod plan;

use thiserror::Error;

use crate::simkernel::SimTime;
use crate::tcp::TcpReceiverState;

pub use alloc::{allocate_flow_windows, FlowDemand};
pub use control::{ControlPhase, WindowControl};
pub use estimate::{
    compute_delta, compute_w_rec, estimate_bdp, sat_window_estimate, PathEstimate, PathEstimateCache, WindowChoice,
};
pub use plan::{plan_sat_to_terr, plan_terr_to_sat, Direction, EngineConfig, HandoverPlan, Observed};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HandoverError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("handover aborted: {0}")]
    Abort(String),
}

/// Delays every ACK the receiver emits from now on by `extra_delay`.
pub fn set_ack_pacing(receiver: &mut TcpReceiverState, extra_delay: SimTime) {
    receiver.ack_delay = extra_delay;
}
