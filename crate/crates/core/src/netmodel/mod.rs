//! Links, queues, segments and topology.

pub mod link;
pub mod segment;
pub mod topology;

pub use link::{transmit, Channel, DropReason, DropTailQueue, Interval, LinkSpec, NetworkKind, Transmit};
pub use segment::{BindingInfo, FlowId, Segment, SegmentKind, CONTROL_SEGMENT_BYTES, TCP_HEADER_BYTES};
pub use topology::{rtt_table, ChannelId, Link, LinkId, NetError, Node, NodeId, Path, Role, RttTable, Topology};
