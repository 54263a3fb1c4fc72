//! Nodes, duplex links and route computation.
//!
//! Links attached to the mobile node are access links; everything else is
//! core. Core routes are minimum-hop paths that never transit the mobile node.

use std::collections::VecDeque;

use thiserror::Error;

use crate::netmodel::link::{Channel, LinkSpec, NetworkKind};
use crate::simkernel::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkId(pub u32);

/// One direction of a link: `forward` is a→b.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChannelId {
    pub link: LinkId,
    pub forward: bool,
}

impl ChannelId {
    fn index(self) -> usize {
        self.link.0 as usize * 2 + usize::from(!self.forward)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Cn,
    Ha,
    Gateway,
    Mn,
}

impl Role {
    pub fn parse(s: &str) -> Option<Role> {
        match s.to_ascii_lowercase().as_str() {
            "cn" => Some(Role::Cn),
            "ha" => Some(Role::Ha),
            "gateway" => Some(Role::Gateway),
            "mn" => Some(Role::Mn),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Cn => "cn",
            Role::Ha => "ha",
            Role::Gateway => "gateway",
            Role::Mn => "mn",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Node {
    pub name: String,
    pub role: Role,
}

#[derive(Clone, Debug)]
pub struct Link {
    pub name: String,
    pub a: NodeId,
    pub b: NodeId,
    pub spec: LinkSpec,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetError {
    #[error("link `{0}` is unavailable at {1}")]
    Unreachable(String, SimTime),
    #[error("no route from `{0}` to `{1}`")]
    NoRoute(String, String),
    #[error("topology has no node with role `{0}`")]
    MissingRole(&'static str),
    #[error("`{0}` is not an access link of the mobile node")]
    NotAccess(String),
}

/// Ordered hops; each hop is the channel a segment enters at that node.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Path {
    pub hops: Vec<ChannelId>,
}

impl Path {
    pub fn concat(mut self, other: Path) -> Path {
        self.hops.extend(other.hops);
        self
    }
}

#[derive(Clone, Debug)]
pub struct Topology {
    pub nodes: Vec<Node>,
    pub links: Vec<Link>,
    channels: Vec<Channel>,
}

impl Topology {
    pub fn new(nodes: Vec<Node>, links: Vec<Link>) -> Self {
        let channels = links.iter().flat_map(|l| [Channel::new(&l.spec), Channel::new(&l.spec)]).collect();
        Topology { nodes, links, channels }
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0 as usize]
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.0 as usize]
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.name == name).map(|i| NodeId(i as u32))
    }

    pub fn link_by_name(&self, name: &str) -> Option<LinkId> {
        self.links.iter().position(|l| l.name == name).map(|i| LinkId(i as u32))
    }

    pub fn first_with_role(&self, role: Role) -> Result<NodeId, NetError> {
        self.nodes
            .iter()
            .position(|n| n.role == role)
            .map(|i| NodeId(i as u32))
            .ok_or(NetError::MissingRole(role.as_str()))
    }

    /// Channel leaving `from` on `link`.
    pub fn channel_from(&self, link: LinkId, from: NodeId) -> ChannelId {
        let l = self.link(link);
        debug_assert!(l.a == from || l.b == from);
        ChannelId { link, forward: l.a == from }
    }

    pub fn channel_mut(&mut self, id: ChannelId) -> (&LinkSpec, &mut Channel) {
        let spec = &self.links[id.link.0 as usize].spec;
        let ch = &mut self.channels[id.index()];
        (spec, ch)
    }

    /// Node a channel delivers to.
    pub fn channel_dst(&self, id: ChannelId) -> NodeId {
        let l = self.link(id.link);
        if id.forward {
            l.b
        } else {
            l.a
        }
    }

    pub fn channel_src(&self, id: ChannelId) -> NodeId {
        let l = self.link(id.link);
        if id.forward {
            l.a
        } else {
            l.b
        }
    }

    pub fn channel_label(&self, id: ChannelId) -> String {
        format!("{}->{}", self.node(self.channel_src(id)).name, self.node(self.channel_dst(id)).name)
    }

    pub fn is_access(&self, link: LinkId) -> bool {
        let l = self.link(link);
        self.node(l.a).role == Role::Mn || self.node(l.b).role == Role::Mn
    }

    /// Gateway end of an access link.
    pub fn gateway_of(&self, access: LinkId) -> Result<NodeId, NetError> {
        let l = self.link(access);
        if self.node(l.b).role == Role::Mn {
            Ok(l.a)
        } else if self.node(l.a).role == Role::Mn {
            Ok(l.b)
        } else {
            Err(NetError::NotAccess(l.name.clone()))
        }
    }

    pub fn mn_of(&self, access: LinkId) -> Result<NodeId, NetError> {
        let l = self.link(access);
        if self.node(l.a).role == Role::Mn {
            Ok(l.a)
        } else if self.node(l.b).role == Role::Mn {
            Ok(l.b)
        } else {
            Err(NetError::NotAccess(l.name.clone()))
        }
    }

    /// Minimum-hop path over core links. Ties resolve to the lowest link id.
    pub fn core_path(&self, from: NodeId, to: NodeId) -> Result<Path, NetError> {
        if from == to {
            return Ok(Path::default());
        }
        let n = self.nodes.len();
        let mut prev: Vec<Option<(NodeId, LinkId)>> = vec![None; n];
        let mut seen = vec![false; n];
        seen[from.0 as usize] = true;
        let mut queue = VecDeque::from([from]);
        while let Some(u) = queue.pop_front() {
            if u == to {
                break;
            }
            for (i, l) in self.links.iter().enumerate() {
                let id = LinkId(i as u32);
                if self.is_access(id) {
                    continue;
                }
                let v = if l.a == u {
                    l.b
                } else if l.b == u {
                    l.a
                } else {
                    continue;
                };
                if !seen[v.0 as usize] {
                    seen[v.0 as usize] = true;
                    prev[v.0 as usize] = Some((u, id));
                    queue.push_back(v);
                }
            }
        }
        if !seen[to.0 as usize] {
            return Err(NetError::NoRoute(self.node(from).name.clone(), self.node(to).name.clone()));
        }
        let mut hops = Vec::new();
        let mut cur = to;
        while let Some((p, link)) = prev[cur.0 as usize] {
            hops.push(self.channel_from(link, p));
            cur = p;
        }
        hops.reverse();
        Ok(Path { hops })
    }

    /// `from` (a core node) down to the mobile node over `access`.
    pub fn downlink(&self, from: NodeId, access: LinkId) -> Result<Path, NetError> {
        let gw = self.gateway_of(access)?;
        let core = self.core_path(from, gw)?;
        Ok(core.concat(Path { hops: vec![self.channel_from(access, gw)] }))
    }

    /// Mobile node over `access`, then up to core node `to`.
    pub fn uplink(&self, access: LinkId, to: NodeId) -> Result<Path, NetError> {
        let gw = self.gateway_of(access)?;
        let mn = self.mn_of(access)?;
        let first = Path { hops: vec![self.channel_from(access, mn)] };
        Ok(first.concat(self.core_path(gw, to)?))
    }

    /// Round trip of a `probe`-byte packet over `path` and back, empty
    /// queues, ignoring coverage.
    pub fn round_trip(&self, path: &Path, probe: u64) -> SimTime {
        path.hops.iter().fold(SimTime::ZERO, |acc, h| {
            let spec = &self.link(h.link).spec;
            acc + (spec.prop_delay + spec.serialization(probe)).times(2)
        })
    }

    /// Round trip over `path` for a probe sent at `at`; every hop must be up.
    pub fn path_rtt(&self, path: &Path, probe: u64, at: SimTime) -> Result<SimTime, NetError> {
        for h in &path.hops {
            let l = self.link(h.link);
            if !l.spec.is_available(at) {
                return Err(NetError::Unreachable(l.name.clone(), at));
            }
        }
        Ok(self.round_trip(path, probe))
    }

    pub fn access_kind(&self, access: LinkId) -> NetworkKind {
        self.link(access).spec.kind
    }
}

/// The three round-trip terms used to pick the registration delay.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RttTable {
    /// MN over the new (satellite) access to the CN.
    pub rtt_mn_sat_cn: SimTime,
    /// MN over the new access to the home agent.
    pub rtt_mn_sat_ha: SimTime,
    /// MN over the old (terrestrial) access to the home agent.
    pub rtt_mn_old_ha: SimTime,
}

/// Propagation-only round trips (zero-size probe) for a handover from
/// `old_access` to `new_access`.
pub fn rtt_table(topo: &Topology, cn: NodeId, old_access: LinkId, new_access: LinkId) -> Result<RttTable, NetError> {
    let ha = topo.first_with_role(Role::Ha)?;
    if topo.node(cn).role != Role::Cn {
        return Err(NetError::MissingRole("cn"));
    }
    let sat_cn = topo.uplink(new_access, cn)?;
    let sat_ha = topo.uplink(new_access, ha)?;
    let old_ha = topo.uplink(old_access, ha)?;
    Ok(RttTable {
        rtt_mn_sat_cn: topo.round_trip(&sat_cn, 0),
        rtt_mn_sat_ha: topo.round_trip(&sat_ha, 0),
        rtt_mn_old_ha: topo.round_trip(&old_ha, 0),
    })
}
