//! Home agent bindings and registration signalling.
//!
//! The home agent and rendezvous server are one node. Registration costs
//! nothing at the agent; all latency comes from the path the BU travels.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::netmodel::{BindingInfo, LinkId, NetError, NodeId, Path, Role, Segment, SegmentKind, Topology};
use crate::simkernel::SimTime;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MobilityError {
    #[error("binding for node {mn:?} registered at {at}, not after previous {prev}")]
    NonIncreasing { mn: NodeId, at: SimTime, prev: SimTime },
    #[error("segment is not a binding update")]
    NotBindingUpdate,
    #[error("proxy location `{0}` is not a gateway")]
    ProxyNotGateway(String),
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Binding {
    pub attachment: LinkId,
    pub registered_at: SimTime,
}

/// Mobile node → ordered bindings; the newest one is active.
#[derive(Clone, Debug, Default)]
pub struct BindingTable {
    entries: BTreeMap<NodeId, Vec<Binding>>,
}

impl BindingTable {
    pub fn register(&mut self, mn: NodeId, attachment: LinkId, at: SimTime) -> Result<(), MobilityError> {
        let list = self.entries.entry(mn).or_default();
        if let Some(last) = list.last() {
            if at <= last.registered_at {
                return Err(MobilityError::NonIncreasing { mn, at, prev: last.registered_at });
            }
        }
        list.push(Binding { attachment, registered_at: at });
        Ok(())
    }

    /// Seeds the binding a node holds when the run starts.
    pub fn register_initial(&mut self, mn: NodeId, attachment: LinkId) {
        self.entries.insert(mn, vec![Binding { attachment, registered_at: SimTime::ZERO }]);
    }

    pub fn active(&self, mn: NodeId) -> Option<&Binding> {
        self.entries.get(&mn).and_then(|l| l.last())
    }

    pub fn bindings(&self, mn: NodeId) -> &[Binding] {
        self.entries.get(&mn).map_or(&[], |l| l.as_slice())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegistrationOrigin {
    Mn,
    Proxy,
}

impl RegistrationOrigin {
    pub fn as_str(self) -> &'static str {
        match self {
            RegistrationOrigin::Mn => "mn",
            RegistrationOrigin::Proxy => "proxy",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RegistrationConfig {
    pub origin: RegistrationOrigin,
    /// Fixed proxy node; when unset the new access network's gateway acts as proxy.
    pub proxy_location: Option<NodeId>,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        RegistrationConfig { origin: RegistrationOrigin::Mn, proxy_location: None }
    }
}

impl RegistrationConfig {
    pub fn validate(&self, topo: &Topology) -> Result<(), MobilityError> {
        if let Some(p) = self.proxy_location {
            if topo.node(p).role != Role::Gateway {
                return Err(MobilityError::ProxyNotGateway(topo.node(p).name.clone()));
            }
        }
        Ok(())
    }

    /// Node that sends the BU and receives the BUACK.
    pub fn registrar(&self, topo: &Topology, new_access: LinkId) -> Result<NodeId, MobilityError> {
        Ok(match self.origin {
            RegistrationOrigin::Mn => topo.mn_of(new_access)?,
            RegistrationOrigin::Proxy => match self.proxy_location {
                Some(p) => p,
                None => topo.gateway_of(new_access)?,
            },
        })
    }

    /// Path of the BU to the home agent.
    pub fn update_path(&self, topo: &Topology, new_access: LinkId) -> Result<Path, MobilityError> {
        let ha = topo.first_with_role(Role::Ha)?;
        Ok(match self.origin {
            RegistrationOrigin::Mn => topo.uplink(new_access, ha)?,
            RegistrationOrigin::Proxy => topo.core_path(self.registrar(topo, new_access)?, ha)?,
        })
    }

    /// Path of the BUACK back to the registrar.
    pub fn ack_path(&self, topo: &Topology, new_access: LinkId) -> Result<Path, MobilityError> {
        let ha = topo.first_with_role(Role::Ha)?;
        Ok(match self.origin {
            RegistrationOrigin::Mn => topo.downlink(ha, new_access)?,
            RegistrationOrigin::Proxy => topo.core_path(ha, self.registrar(topo, new_access)?)?,
        })
    }
}

/// Builds the BU for `mn` moving to `new_access`.
pub fn binding_update(mn: NodeId, new_access: LinkId, handover: usize, attempt: u32, at: SimTime) -> Segment {
    Segment::control(SegmentKind::BindingUpdate, BindingInfo { mn, attachment: new_access, handover, attempt }, at)
}

/// Processes a BU at the home agent: the new binding becomes active and the
/// acknowledgement is returned.
pub fn ha_on_binding_update(table: &mut BindingTable, bu: &Segment, at: SimTime) -> Result<Segment, MobilityError> {
    let info = match (bu.kind, bu.binding) {
        (SegmentKind::BindingUpdate, Some(info)) => info,
        _ => return Err(MobilityError::NotBindingUpdate),
    };
    table.register(info.mn, info.attachment, at)?;
    Ok(Segment::control(SegmentKind::BindingAck, info, at))
}

/// Access link the home agent forwards to for a segment reaching it at `at`.
/// `None` means the node has no binding and the segment is dropped.
pub fn ha_route(table: &BindingTable, mn: NodeId, at: SimTime) -> Option<LinkId> {
    table.bindings(mn).iter().rev().find(|b| b.registered_at <= at).map(|b| b.attachment)
}
