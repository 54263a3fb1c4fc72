//! Simplified Reno endpoints: a sender at the correspondent node and a
//! receiver at the mobile node whose advertised window can be steered.

pub mod receiver;
pub mod sender;

use thiserror::Error;

use crate::simkernel::SimTime;

pub use receiver::{AckKind, AckOut, Arrival, TcpReceiverState, REFRESH_INTERVAL};
pub use sender::{Phase, SenderEvent, SenderOutput, SenderStats, TcpSenderState, TimerAction, TxSegment};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TcpError {
    #[error("ACK {ack} acknowledges data never sent (snd_max {snd_max})")]
    AckBeyondSent { ack: u64, snd_max: u64 },
    #[error("window cap {cap} exceeds receive buffer {buffer}")]
    CapExceedsBuffer { cap: u64, buffer: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TcpConfig {
    pub mss: u64,
    pub initial_window: u64,
    pub initial_ssthresh: u64,
    pub initial_rto: SimTime,
    pub min_rto: SimTime,
    pub max_rto: SimTime,
}

impl TcpConfig {
    pub fn with_mss(mss: u64) -> Self {
        TcpConfig { mss, initial_window: 2 * mss, ..TcpConfig::default() }
    }
}

impl Default for TcpConfig {
    fn default() -> Self {
        TcpConfig {
            mss: 1460,
            initial_window: 2 * 1460,
            initial_ssthresh: 64 * 1024,
            initial_rto: SimTime::from_secs(1),
            min_rto: SimTime::from_secs(1),
            max_rto: SimTime::from_secs(60),
        }
    }
}
