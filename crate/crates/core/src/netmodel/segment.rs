use crate::netmodel::topology::{LinkId, NodeId};
use crate::simkernel::SimTime;

/// Header bytes charged to every TCP segment on the wire.
pub const TCP_HEADER_BYTES: u64 = 40;
/// Size of a binding update or binding acknowledgement.
pub const CONTROL_SEGMENT_BYTES: u64 = 60;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SegmentKind {
    Data,
    Ack,
    BindingUpdate,
    BindingAck,
}

impl SegmentKind {
    pub fn label(self) -> &'static str {
        match self {
            SegmentKind::Data => "DATA",
            SegmentKind::Ack => "ACK",
            SegmentKind::BindingUpdate => "BU",
            SegmentKind::BindingAck => "BUACK",
        }
    }
}

/// Registration payload carried by BU/BUACK segments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BindingInfo {
    pub mn: NodeId,
    pub attachment: LinkId,
    pub handover: usize,
    pub attempt: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub kind: SegmentKind,
    pub flow: Option<FlowId>,
    /// First payload byte (DATA).
    pub seq: u64,
    pub payload_len: u32,
    /// Cumulative acknowledgement (ACK).
    pub ack: u64,
    /// Advertised receive window in bytes (ACK).
    pub rwnd: u64,
    /// Emission order of the receiver's ACKs; lets the sender discard window
    /// updates that were overtaken by a newer ACK on a faster path.
    pub ack_seq: u64,
    /// State-refresh ACK emitted while duplicate ACKs are suppressed.
    pub refresh: bool,
    pub retransmit: bool,
    pub sent_at: SimTime,
    /// Access link that carried (or will carry) the segment.
    pub path_tag: Option<LinkId>,
    pub binding: Option<BindingInfo>,
}

impl Segment {
    pub fn data(flow: FlowId, seq: u64, payload_len: u32, retransmit: bool, sent_at: SimTime) -> Self {
        Segment {
            kind: SegmentKind::Data,
            flow: Some(flow),
            seq,
            payload_len,
            ack: 0,
            rwnd: 0,
            ack_seq: 0,
            refresh: false,
            retransmit,
            sent_at,
            path_tag: None,
            binding: None,
        }
    }

    pub fn ack(flow: FlowId, ack: u64, rwnd: u64, ack_seq: u64, refresh: bool, sent_at: SimTime) -> Self {
        Segment {
            kind: SegmentKind::Ack,
            flow: Some(flow),
            seq: 0,
            payload_len: 0,
            ack,
            rwnd,
            ack_seq,
            refresh,
            retransmit: false,
            sent_at,
            path_tag: None,
            binding: None,
        }
    }

    pub fn control(kind: SegmentKind, binding: BindingInfo, sent_at: SimTime) -> Self {
        debug_assert!(matches!(kind, SegmentKind::BindingUpdate | SegmentKind::BindingAck));
        Segment {
            kind,
            flow: None,
            seq: 0,
            payload_len: 0,
            ack: 0,
            rwnd: 0,
            ack_seq: 0,
            refresh: false,
            retransmit: false,
            sent_at,
            path_tag: Some(binding.attachment),
            binding: Some(binding),
        }
    }

    pub fn seq_end(&self) -> u64 {
        self.seq + u64::from(self.payload_len)
    }

    /// Bytes the segment occupies in a queue and on the wire.
    pub fn wire_size(&self) -> u64 {
        match self.kind {
            SegmentKind::Data => u64::from(self.payload_len) + TCP_HEADER_BYTES,
            SegmentKind::Ack => TCP_HEADER_BYTES,
            SegmentKind::BindingUpdate | SegmentKind::BindingAck => CONTROL_SEGMENT_BYTES,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_sizes() {
        let d = Segment::data(FlowId(0), 0, 1460, false, SimTime::ZERO);
        assert_eq!(d.wire_size(), 1500);
        assert_eq!(d.seq_end(), 1460);
        let a = Segment::ack(FlowId(0), 1460, 1000, 1, false, SimTime::ZERO);
        assert_eq!(a.wire_size(), 40);
        assert_eq!(a.payload_len, 0);
        let bu = Segment::control(
            SegmentKind::BindingUpdate,
            BindingInfo { mn: NodeId(0), attachment: LinkId(0), handover: 0, attempt: 0 },
            SimTime::ZERO,
        );
        assert_eq!(bu.wire_size(), 60);
    }
}
