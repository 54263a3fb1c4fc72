//! One simulation run: endpoints, links, the home agent and the handover
//! engine, all driven by the kernel.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::RngExt;

use crate::handover::{
    allocate_flow_windows, compute_w_rec, plan_sat_to_terr, plan_terr_to_sat, sat_window_estimate, set_ack_pacing,
    ControlPhase, Direction, EngineConfig, FlowDemand, HandoverPlan, PathEstimate, PathEstimateCache, WindowControl,
};
use crate::mobility::{
    binding_update, ha_on_binding_update, ha_route, BindingTable, MobilityError, RegistrationConfig,
};
use crate::netmodel::{
    rtt_table, ChannelId, FlowId, Link, LinkId, NetError, NetworkKind, Node, NodeId, Role, Segment, SegmentKind,
    Topology, Transmit,
};
use crate::scenario::config::{CacheSetting, Scenario};
use crate::scenario::metrics::{FlowMetrics, HandoverMetrics, QueueMetrics, RunMetrics};
use crate::scenario::trace::Trace;
use crate::scenario::{Mode, SimError};
use crate::simkernel::{EventId, Kernel, SimTime};
use crate::tcp::{
    AckKind, AckOut, SenderEvent, SenderOutput, TcpConfig, TcpReceiverState, TcpSenderState, TimerAction,
};

/// Spacing of binding-update retransmissions.
const BU_RETRY: SimTime = SimTime::from_secs(1);
/// Window after detection over which the delivery gap is measured.
const GAP_WINDOW: SimTime = SimTime::from_secs(10);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    pub trace: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { trace: true }
    }
}

#[derive(Debug)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub trace: String,
}

type Route = Arc<[ChannelId]>;

#[derive(Debug)]
enum Ev {
    FlowStart(usize),
    /// `seg` reaches the far end of `route[hop]`.
    Arrive {
        seg: Segment,
        route: Route,
        hop: usize,
    },
    Rto(usize),
    AckRelease {
        flow: usize,
        ack: AckOut,
    },
    Pacing,
    Trigger(usize),
    Execute(usize),
    DrainTimeout(usize),
    BuRetry {
        ho: usize,
        attempt: u32,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum HoState {
    Pending,
    /// Window reduced, registration not yet sent.
    Waiting,
    Boosting,
    Registering,
    Draining,
    Done,
    Aborted,
}

struct Flow {
    id: FlowId,
    name: String,
    src: NodeId,
    start: SimTime,
    weight: u64,
    min_share: u64,
    started: bool,
    sender: TcpSenderState,
    receiver: TcpReceiverState,
    control: WindowControl,
    rto: Option<EventId>,
    m: FlowMetrics,
    last_rwnd: Option<u64>,
    /// `ack_seq` of the window advertisement whose arrival at the CN is t_a1.
    adv_wait: Option<u64>,
    /// End of the last segment sent under the old window (for t_a2).
    old_window_end: Option<u64>,
    /// `ack_seq` whose arrival makes the CN enter congestion avoidance.
    ca_wait: Option<u64>,
    /// Highest sequence end the home agent forwarded onto each access link.
    ha_high: BTreeMap<LinkId, u64>,
    gap_last: Option<SimTime>,
    gap_max: SimTime,
    ramp_target: u64,
    ramp_step: u64,
    pre_boost_cap: Option<u64>,
}

struct Ho {
    name: String,
    direction: Direction,
    target: LinkId,
    time: SimTime,
    from: Option<LinkId>,
    state: HoState,
    plan: Option<HandoverPlan>,
    t_a0: Option<SimTime>,
    t_r0: Option<SimTime>,
    t_r1: Option<SimTime>,
    t_r3: Option<SimTime>,
    old_channels: Vec<ChannelId>,
    new_channels: Vec<ChannelId>,
    old_enqueues: u64,
    bu_timer: Option<EventId>,
    exec_timer: Option<EventId>,
    drain_timer: Option<EventId>,
    drain_timed_out: bool,
    aborted: Option<String>,
}

struct World<'s> {
    sc: &'s Scenario,
    mode: Mode,
    topo: Topology,
    ha: Option<NodeId>,
    mn: NodeId,
    flows: Vec<Flow>,
    bindings: BindingTable,
    attached: LinkId,
    cache: PathEstimateCache,
    engine: EngineConfig,
    reg: RegistrationConfig,
    hos: Vec<Ho>,
    current_ho: Option<usize>,
    first_ho: Option<usize>,
    first_detect: Option<SimTime>,
    boosting: Option<usize>,
    routes: BTreeMap<(NodeId, NodeId, Option<LinkId>), Route>,
    queues: Vec<QueueMetrics>,
    no_binding_drops: u64,
    trace: Trace,
}

fn net(e: NetError) -> SimError {
    SimError::Config(e.to_string())
}

fn mob(e: MobilityError) -> SimError {
    SimError::Config(e.to_string())
}

fn channel_index(ch: ChannelId) -> usize {
    ch.link.0 as usize * 2 + usize::from(!ch.forward)
}

/// Runs `scenario` under `mode` with `seed`.
pub fn run_with(scenario: &Scenario, mode: Mode, seed: u64, opts: RunOptions) -> Result<RunOutput, SimError> {
    scenario.validate()?;
    let mut kernel: Kernel<Ev> = Kernel::new(seed);
    let mut world = World::new(scenario, mode, opts)?;
    world.init(&mut kernel)?;
    let events = kernel.run_until(scenario.sim.end, |k, ev| world.handle(k, ev))?;
    Ok(world.finish(&kernel, seed, events))
}

impl<'s> World<'s> {
    fn new(sc: &'s Scenario, mode: Mode, opts: RunOptions) -> Result<Self, SimError> {
        let nodes: Vec<Node> = sc.nodes.iter().map(|n| Node { name: n.name.clone(), role: n.role }).collect();
        let node_id = |name: &str| NodeId(sc.nodes.iter().position(|n| n.name == name).expect("validated") as u32);
        let links: Vec<Link> = sc
            .links
            .iter()
            .map(|l| Link { name: l.name.clone(), a: node_id(&l.a), b: node_id(&l.b), spec: l.spec.clone() })
            .collect();
        let topo = Topology::new(nodes, links);
        let ha = topo.first_with_role(Role::Ha).ok();
        let mn = topo.first_with_role(Role::Mn).map_err(net)?;
        let attached = topo.link_by_name(&sc.sim.initial).expect("validated");
        let reg = RegistrationConfig {
            origin: sc.sim.registration,
            proxy_location: sc.sim.proxy_location.as_deref().map(node_id),
        };
        reg.validate(&topo).map_err(mob)?;

        let mut cache = PathEstimateCache::default();
        for l in &topo.links {
            let kind = l.spec.kind;
            if !topo.is_access(topo.link_by_name(&l.name).expect("own link")) || cache.get(kind).is_some() {
                continue;
            }
            let setting = if kind == NetworkKind::Sat { sc.sim.sat_cache } else { sc.sim.terr_cache };
            let rtt = l.spec.prop_delay.times(2);
            match setting {
                CacheSetting::Measured => {
                    let _ = cache.record(kind, l.spec.bandwidth, rtt, SimTime::ZERO);
                }
                CacheSetting::Bytes(bdp) => cache.insert(kind, PathEstimate { bdp, rtt, measured_at: SimTime::ZERO }),
                CacheSetting::Absent => {}
            }
        }

        let tcp = TcpConfig { initial_ssthresh: sc.sim.initial_ssthresh, ..TcpConfig::with_mss(sc.sim.mss) };
        let flows = sc
            .flows
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let receiver = TcpReceiverState::new(sc.sim.rcv_buffer);
                Flow {
                    id: FlowId(i as u32),
                    name: f.name.clone(),
                    src: node_id(&f.src),
                    start: f.start,
                    weight: f.weight,
                    min_share: f.min_share.unwrap_or(2 * sc.sim.mss),
                    started: false,
                    sender: TcpSenderState::new(&tcp, receiver.advertised_window(), f.volume),
                    receiver,
                    control: WindowControl::default(),
                    rto: None,
                    m: FlowMetrics { name: f.name.clone(), ..FlowMetrics::default() },
                    last_rwnd: None,
                    adv_wait: None,
                    old_window_end: None,
                    ca_wait: None,
                    ha_high: BTreeMap::new(),
                    gap_last: None,
                    gap_max: SimTime::ZERO,
                    ramp_target: 0,
                    ramp_step: 0,
                    pre_boost_cap: None,
                }
            })
            .collect();

        let mut hos: Vec<Ho> = sc
            .handovers
            .iter()
            .map(|h| Ho {
                name: h.name.clone(),
                direction: h.direction,
                target: topo.link_by_name(&h.target).expect("validated"),
                time: h.time,
                from: None,
                state: HoState::Pending,
                plan: None,
                t_a0: None,
                t_r0: None,
                t_r1: None,
                t_r3: None,
                old_channels: Vec::new(),
                new_channels: Vec::new(),
                old_enqueues: 0,
                bu_timer: None,
                exec_timer: None,
                drain_timer: None,
                drain_timed_out: false,
                aborted: None,
            })
            .collect();
        hos.sort_by_key(|h| h.time);

        let queues = topo
            .links
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                [true, false].map(|forward| {
                    let ch = ChannelId { link: LinkId(i as u32), forward };
                    QueueMetrics { channel: topo.channel_label(ch), link: l.name.clone(), ..QueueMetrics::default() }
                })
            })
            .collect();

        Ok(World {
            sc,
            mode,
            engine: EngineConfig {
                w_default: sc.sim.w_default,
                sat_default_window: sc.sim.sat_default_window,
                mss: sc.sim.mss,
                rcv_buffer: sc.sim.rcv_buffer,
            },
            topo,
            ha,
            mn,
            flows,
            bindings: BindingTable::default(),
            attached,
            cache,
            reg,
            hos,
            current_ho: None,
            first_ho: None,
            first_detect: None,
            boosting: None,
            routes: BTreeMap::new(),
            queues,
            no_binding_drops: 0,
            trace: Trace::new(opts.trace),
        })
    }

    fn init(&mut self, k: &mut Kernel<Ev>) -> Result<(), SimError> {
        self.bindings.register_initial(self.mn, self.attached);
        // routes are resolved up front so topology problems surface as config errors
        for f in 0..self.flows.len() {
            let src = self.flows[f].src;
            let access: Vec<LinkId> =
                (0..self.topo.links.len() as u32).map(LinkId).filter(|&id| self.topo.is_access(id)).collect();
            for id in access {
                self.route_up(id, src)?;
                self.route_down(self.ha.unwrap_or(src), id)?;
            }
            if let Some(ha) = self.ha {
                self.route_core(src, ha)?;
            }
        }

        if self.mode == Mode::Proactive && self.topo.access_kind(self.attached) == NetworkKind::Sat {
            let est = sat_window_estimate(&self.cache, self.engine.sat_default_window);
            let w = compute_w_rec(est, self.engine.w_default).w_rec.min(self.engine.rcv_buffer);
            let shares = self.shares(w)?;
            for (f, s) in self.flows.iter_mut().zip(shares) {
                f.receiver.set_cap_silently(Some(s));
                f.sender.peer_rwnd = f.receiver.advertised_window();
            }
        }

        for (i, f) in self.flows.iter().enumerate() {
            k.schedule(f.start, Ev::FlowStart(i)).map_err(|e| SimError::Invariant(e.to_string()))?;
        }
        for (i, h) in self.hos.iter().enumerate() {
            k.schedule(h.time, Ev::Trigger(i)).map_err(|e| SimError::Invariant(e.to_string()))?;
        }
        if self.sc.sim.ack_pacing > SimTime::ZERO {
            k.schedule(self.sc.sim.ack_pacing_from, Ev::Pacing).map_err(|e| SimError::Invariant(e.to_string()))?;
        }
        Ok(())
    }

    fn handle(&mut self, k: &mut Kernel<Ev>, ev: Ev) -> Result<(), SimError> {
        match ev {
            Ev::FlowStart(f) => self.flow_start(k, f),
            Ev::Arrive { seg, route, hop } => self.arrive(k, seg, route, hop),
            Ev::Rto(f) => self.on_rto(k, f),
            Ev::AckRelease { flow, ack } => self.send_ack(k, flow, ack),
            Ev::Pacing => {
                let now = k.now();
                for f in &mut self.flows {
                    set_ack_pacing(&mut f.receiver, self.sc.sim.ack_pacing);
                }
                let mn = self.node_name(self.mn);
                self.trace.log(now, "ack_pacing", &mn, &[("delay", &self.sc.sim.ack_pacing)]);
                Ok(())
            }
            Ev::Trigger(h) => self.trigger(k, h),
            Ev::Execute(h) => self.execute(k, h),
            Ev::DrainTimeout(h) => {
                if self.hos[h].state == HoState::Draining {
                    self.hos[h].drain_timer = None;
                    self.finish_drain(k, h, true)?;
                }
                Ok(())
            }
            Ev::BuRetry { ho, attempt } => {
                let h = &mut self.hos[ho];
                h.bu_timer = None;
                if h.t_r3.is_none() && h.state != HoState::Aborted {
                    self.send_bu(k, ho, attempt)?;
                }
                Ok(())
            }
        }
    }

    fn node_name(&self, n: NodeId) -> String {
        self.topo.node(n).name.clone()
    }

    fn link_name(&self, l: LinkId) -> String {
        self.topo.link(l).name.clone()
    }

    // ---- routes ----

    fn route_core(&mut self, from: NodeId, to: NodeId) -> Result<Route, SimError> {
        if let Some(r) = self.routes.get(&(from, to, None)) {
            return Ok(r.clone());
        }
        let r: Route = self.topo.core_path(from, to).map_err(net)?.hops.into();
        self.routes.insert((from, to, None), r.clone());
        Ok(r)
    }

    fn route_down(&mut self, from: NodeId, access: LinkId) -> Result<Route, SimError> {
        let key = (from, self.mn, Some(access));
        if let Some(r) = self.routes.get(&key) {
            return Ok(r.clone());
        }
        let r: Route = self.topo.downlink(from, access).map_err(net)?.hops.into();
        self.routes.insert(key, r.clone());
        Ok(r)
    }

    fn route_up(&mut self, access: LinkId, to: NodeId) -> Result<Route, SimError> {
        let key = (self.mn, to, Some(access));
        if let Some(r) = self.routes.get(&key) {
            return Ok(r.clone());
        }
        let r: Route = self.topo.uplink(access, to).map_err(net)?.hops.into();
        self.routes.insert(key, r.clone());
        Ok(r)
    }

    // ---- transport ----

    fn forward(&mut self, k: &mut Kernel<Ev>, mut seg: Segment, route: Route, hop: usize) -> Result<(), SimError> {
        let now = k.now();
        let ch = route[hop];
        if self.topo.is_access(ch.link) && seg.kind == SegmentKind::Data {
            seg.path_tag = Some(ch.link);
        }
        let jitter = self.topo.link(ch.link).spec.jitter;
        let extra = if jitter > SimTime::ZERO {
            SimTime::from_micros(k.rng().random_range(0..=jitter.as_micros()))
        } else {
            SimTime::ZERO
        };
        let (spec, chan) = self.topo.channel_mut(ch);
        let outcome = chan.transmit(spec, seg.wire_size(), now, extra);
        let occupancy = chan.queue.occupancy();
        let q = &mut self.queues[channel_index(ch)];
        match outcome {
            Transmit::Arrives(at) => {
                q.peak_occupancy = q.peak_occupancy.max(occupancy);
                if seg.kind == SegmentKind::Data {
                    if let Some(h) = self.current_ho {
                        let ho = &mut self.hos[h];
                        if ho.t_r1.is_some_and(|t| now >= t) && ho.old_channels.contains(&ch) {
                            ho.old_enqueues += 1;
                        }
                    }
                }
                k.schedule(at, Ev::Arrive { seg, route, hop }).map_err(|e| SimError::Invariant(e.to_string()))?;
            }
            Transmit::Dropped(reason) => {
                match reason {
                    crate::netmodel::DropReason::Overflow => q.overflow_drops += 1,
                    crate::netmodel::DropReason::NoCoverage => q.no_coverage_drops += 1,
                }
                let label = q.channel.clone();
                let src = self.node_name(self.topo.channel_src(ch));
                if let (SegmentKind::Data, Some(fid)) = (seg.kind, seg.flow) {
                    let first = self.first_ho.map(|h| &self.hos[h]);
                    let (old, new) = match first {
                        Some(ho) if self.first_detect.is_some_and(|t| now >= t) => {
                            (ho.old_channels.contains(&ch), ho.new_channels.contains(&ch))
                        }
                        _ => (false, false),
                    };
                    let f = &mut self.flows[fid.0 as usize];
                    f.m.bytes_dropped += u64::from(seg.payload_len);
                    f.m.drops_old_path += u64::from(old);
                    f.m.drops_new_path += u64::from(new);
                    self.trace.log(
                        now,
                        "drop",
                        &src,
                        &[
                            ("link", &label),
                            ("reason", &reason.as_str()),
                            ("kind", &"DATA"),
                            ("flow", &f.name),
                            ("seq", &seg.seq),
                        ],
                    );
                } else {
                    self.trace.log(
                        now,
                        "drop",
                        &src,
                        &[("link", &label), ("reason", &reason.as_str()), ("kind", &seg.kind.label())],
                    );
                }
            }
        }
        Ok(())
    }

    fn arrive(&mut self, k: &mut Kernel<Ev>, seg: Segment, route: Route, hop: usize) -> Result<(), SimError> {
        if hop + 1 < route.len() {
            return self.forward(k, seg, route, hop + 1);
        }
        let node = self.topo.channel_dst(route[hop]);
        match seg.kind {
            SegmentKind::Data if Some(node) == self.ha => self.ha_forward(k, seg),
            SegmentKind::Data if node == self.mn => self.mn_data(k, seg),
            SegmentKind::Ack => self.cn_ack(k, seg),
            SegmentKind::BindingUpdate => self.ha_binding_update(k, seg),
            SegmentKind::BindingAck => self.registrar_ack(k, seg, node),
            SegmentKind::Data => {
                Err(SimError::Invariant(format!("data segment ended its route at `{}`", self.topo.node(node).name)))
            }
        }
    }

    fn flow_start(&mut self, k: &mut Kernel<Ev>, f: usize) -> Result<(), SimError> {
        let now = k.now();
        let flow = &mut self.flows[f];
        flow.started = true;
        flow.sender.peer_rwnd = flow.receiver.advertised_window();
        let out = flow.sender.start(now);
        let src = self.topo.node(flow.src).name.clone();
        self.trace.log(now, "flow_start", &src, &[("flow", &flow.name), ("rwnd", &flow.sender.peer_rwnd)]);
        self.apply(k, f, out)
    }

    fn data_route(&mut self, f: usize) -> Result<Route, SimError> {
        let src = self.flows[f].src;
        match self.ha {
            Some(ha) => self.route_core(src, ha),
            None => self.route_down(src, self.attached),
        }
    }

    fn apply(&mut self, k: &mut Kernel<Ev>, f: usize, out: SenderOutput) -> Result<(), SimError> {
        let now = k.now();
        if !out.sends.is_empty() {
            let route = self.data_route(f)?;
            for tx in &out.sends {
                let flow = &self.flows[f];
                let seg = Segment::data(flow.id, tx.seq, tx.len, tx.retransmit, now);
                if self.trace.enabled() {
                    let src = self.node_name(flow.src);
                    self.trace.log(
                        now,
                        "send",
                        &src,
                        &[("flow", &flow.name), ("seq", &tx.seq), ("len", &tx.len), ("rtx", &u8::from(tx.retransmit))],
                    );
                }
                self.forward(k, seg, route.clone(), 0)?;
            }
        }
        let flow = &mut self.flows[f];
        match out.timer {
            TimerAction::Restart(d) => {
                if let Some(id) = flow.rto.take() {
                    k.cancel(id);
                }
                flow.rto = Some(k.schedule_in(d, Ev::Rto(f)));
            }
            TimerAction::Stop => {
                if let Some(id) = flow.rto.take() {
                    k.cancel(id);
                }
            }
            TimerAction::Keep => {}
        }
        if out.event == Some(SenderEvent::FastRetransmit) {
            flow.m.fast_retransmit_times.push(now);
            let src = self.topo.node(flow.src).name.clone();
            self.trace.log(
                now,
                "fast_retransmit",
                &src,
                &[("flow", &flow.name), ("seq", &flow.sender.snd_una), ("ssthresh", &flow.sender.ssthresh)],
            );
        }
        let flow = &self.flows[f];
        flow.sender.check_invariants().map_err(|m| SimError::Invariant(format!("flow `{}`: {m}", flow.name)))
    }

    fn on_rto(&mut self, k: &mut Kernel<Ev>, f: usize) -> Result<(), SimError> {
        let now = k.now();
        let flow = &mut self.flows[f];
        flow.rto = None;
        let out = flow.sender.on_rto(now);
        if out.event == Some(SenderEvent::Timeout) {
            flow.m.rto_times.push(now);
            let src = self.topo.node(flow.src).name.clone();
            self.trace.log(
                now,
                "rto",
                &src,
                &[
                    ("flow", &flow.name),
                    ("seq", &flow.sender.snd_una),
                    ("rto", &flow.sender.rto),
                    ("ssthresh", &flow.sender.ssthresh),
                ],
            );
        }
        self.apply(k, f, out)
    }

    fn ha_forward(&mut self, k: &mut Kernel<Ev>, seg: Segment) -> Result<(), SimError> {
        let now = k.now();
        let ha = self.ha.expect("segment routed to the home agent");
        let f = seg.flow.expect("data carries a flow").0 as usize;
        let Some(access) = ha_route(&self.bindings, self.mn, now) else {
            self.no_binding_drops += 1;
            let flow = &mut self.flows[f];
            flow.m.bytes_dropped += u64::from(seg.payload_len);
            let name = self.node_name(ha);
            self.trace.log(
                now,
                "drop",
                &name,
                &[("reason", &"NO_BINDING"), ("flow", &self.flows[f].name), ("seq", &seg.seq)],
            );
            return Ok(());
        };
        let flow = &mut self.flows[f];
        if let (Some(end), Some(t_a1)) = (flow.old_window_end, flow.m.t_a1) {
            if flow.m.t_a2.is_none() && seg.seq_end() == end && seg.sent_at <= t_a1 {
                flow.m.t_a2 = Some(now);
                let name = self.node_name(ha);
                self.trace.log(now, "t_a2", &name, &[("flow", &self.flows[f].name), ("seq_end", &end)]);
            }
        }
        let high = self.flows[f].ha_high.entry(access).or_insert(0);
        *high = (*high).max(seg.seq_end());
        let route = self.route_down(ha, access)?;
        self.forward(k, seg, route, 0)
    }

    fn mn_data(&mut self, k: &mut Kernel<Ev>, seg: Segment) -> Result<(), SimError> {
        let now = k.now();
        let f = seg.flow.expect("data carries a flow").0 as usize;
        let first_detect = self.first_detect;
        let flow = &mut self.flows[f];
        let arr = flow.receiver.on_segment(seg.seq, seg.payload_len, now);
        if arr.dropped {
            flow.m.bytes_dropped += u64::from(seg.payload_len);
        } else {
            flow.m.bytes_delivered += u64::from(seg.payload_len);
        }
        let spurious = seg.retransmit && arr.already_held;
        if spurious {
            flow.m.spurious_retransmits += 1;
        }
        if arr.delivered > 0 {
            if let Some(td) = first_detect {
                if now >= td && now <= td + GAP_WINDOW {
                    let since = flow.gap_last.unwrap_or(td).max(td);
                    flow.gap_max = flow.gap_max.max(now - since);
                    flow.gap_last = Some(now);
                }
            }
        }
        if self.trace.enabled() {
            let mn = self.node_name(self.mn);
            let flow = &self.flows[f];
            let via = seg.path_tag.map(|l| self.link_name(l)).unwrap_or_default();
            self.trace.log(
                now,
                if arr.dropped { "rcv_drop" } else { "deliver" },
                &mn,
                &[
                    ("flow", &flow.name),
                    ("seq", &seg.seq),
                    ("len", &seg.payload_len),
                    ("rcv_nxt", &flow.receiver.rcv_nxt),
                    ("via", &via),
                    ("rtx", &u8::from(seg.retransmit)),
                    ("spurious", &u8::from(spurious)),
                ],
            );
        }
        if let Some(ack) = arr.ack {
            self.emit_ack(k, f, ack)?;
        }
        self.check_drain(k)
    }

    /// Passes an ACK through the window controller, then releases it now or
    /// after the pacing delay.
    fn emit_ack(&mut self, k: &mut Kernel<Ev>, f: usize, mut ack: AckOut) -> Result<(), SimError> {
        let now = k.now();
        let first_detect = self.first_detect;
        let flow = &mut self.flows[f];
        let before = flow.control.phase;
        flow.control
            .on_emit(&mut flow.receiver, &mut ack)
            .map_err(|m| SimError::Invariant(format!("flow `{}`: {m}", flow.name)))?;
        if let Some(prev) = flow.last_rwnd {
            if first_detect.is_some_and(|t| now >= t) && ack.rwnd > prev {
                flow.m.max_window_increase = flow.m.max_window_increase.max(ack.rwnd - prev);
            }
        }
        flow.last_rwnd = Some(ack.rwnd);
        let after = flow.control.phase;
        if before == ControlPhase::Ramp && after == ControlPhase::Hold {
            flow.control.start(ControlPhase::Release, flow.receiver.buffer_capacity, flow.ramp_step);
            let mn = self.node_name(self.mn);
            self.trace.log(now, "ramp_done", &mn, &[("flow", &self.flows[f].name), ("rwnd", &ack.rwnd)]);
        }
        if self.trace.enabled() {
            let mn = self.node_name(self.mn);
            let kind = match ack.kind {
                AckKind::Cumulative => "cumulative",
                AckKind::Duplicate => "duplicate",
                AckKind::Refresh => "refresh",
                AckKind::WindowUpdate => "window_update",
            };
            self.trace.log(
                now,
                "ack_tx",
                &mn,
                &[
                    ("flow", &self.flows[f].name),
                    ("ack", &ack.ack),
                    ("rwnd", &ack.rwnd),
                    ("ack_seq", &ack.ack_seq),
                    ("type", &kind),
                ],
            );
        }
        let delay = self.flows[f].receiver.ack_delay;
        if delay > SimTime::ZERO {
            k.schedule_in(delay, Ev::AckRelease { flow: f, ack });
        } else {
            self.send_ack(k, f, ack)?;
        }
        if let Some(h) = self.boosting {
            if self.flows.iter().all(|fl| fl.control.phase != ControlPhase::Boost) {
                self.execute_sat_to_terr(k, h)?;
            }
        }
        Ok(())
    }

    fn send_ack(&mut self, k: &mut Kernel<Ev>, f: usize, ack: AckOut) -> Result<(), SimError> {
        let now = k.now();
        let flow = &self.flows[f];
        let seg = Segment::ack(flow.id, ack.ack, ack.rwnd, ack.ack_seq, ack.kind == AckKind::Refresh, now);
        let route = self.route_up(self.attached, flow.src)?;
        self.forward(k, seg, route, 0)
    }

    fn cn_ack(&mut self, k: &mut Kernel<Ev>, seg: Segment) -> Result<(), SimError> {
        let now = k.now();
        let f = seg.flow.expect("ack carries a flow").0 as usize;
        let flow = &mut self.flows[f];
        if !flow.started {
            return Ok(());
        }
        let src = self.topo.node(flow.src).name.clone();
        if flow.ca_wait.is_some_and(|s| seg.ack_seq >= s) {
            flow.ca_wait = None;
            flow.sender.external_congestion_avoidance();
            self.trace.log(now, "congestion_avoidance", &src, &[("flow", &flow.name), ("cwnd", &flow.sender.cwnd)]);
        }
        let snd_max_before = flow.sender.snd_max;
        let out = flow
            .sender
            .on_ack(seg.ack, seg.rwnd, seg.ack_seq, seg.refresh, now)
            .map_err(|e| SimError::Invariant(format!("flow `{}`: {e}", flow.name)))?;
        if flow.adv_wait.is_some_and(|s| seg.ack_seq >= s) {
            flow.adv_wait = None;
            flow.m.t_a1 = Some(now);
            flow.old_window_end = Some(snd_max_before);
            self.trace.log(
                now,
                "t_a1",
                &src,
                &[("flow", &flow.name), ("rwnd", &seg.rwnd), ("last_old_seq_end", &snd_max_before)],
            );
        }
        if self.trace.enabled() {
            let s = &flow.sender;
            self.trace.log(
                now,
                "ack_rx",
                &src,
                &[
                    ("flow", &flow.name),
                    ("ack", &seg.ack),
                    ("rwnd", &seg.rwnd),
                    ("ack_seq", &seg.ack_seq),
                    ("cwnd", &s.cwnd),
                    ("ssthresh", &s.ssthresh),
                    ("flight", &s.flight()),
                    ("phase", &s.phase.as_str()),
                ],
            );
        }
        self.apply(k, f, out)
    }

    // ---- handover engine ----

    /// Splits `capacity` across flows by weight; raised to the sum of the
    /// minimum shares when it falls short.
    fn shares(&self, capacity: u64) -> Result<Vec<u64>, SimError> {
        let demands: Vec<FlowDemand> = self
            .flows
            .iter()
            .map(|f| FlowDemand { flow: f.id, requirement: f.weight, min_share: f.min_share })
            .collect();
        let floor: u64 = demands.iter().map(|d| d.min_share).sum();
        let alloc =
            allocate_flow_windows(&demands, capacity.max(floor)).map_err(|e| SimError::Config(e.to_string()))?;
        Ok(self.flows.iter().map(|f| alloc[&f.id].min(f.receiver.buffer_capacity)).collect())
    }

    fn attach(&mut self, now: SimTime, to: LinkId) {
        self.attached = to;
        let mn = self.node_name(self.mn);
        let name = self.link_name(to);
        self.trace.log(now, "uplink", &mn, &[("link", &name)]);
    }

    fn trigger(&mut self, k: &mut Kernel<Ev>, h: usize) -> Result<(), SimError> {
        let now = k.now();
        let from = self.attached;
        let to = self.hos[h].target;
        self.current_ho = Some(h);
        if self.first_ho.is_none() {
            self.first_ho = Some(h);
            self.first_detect = Some(now);
        }
        if let Some(b) = self.boosting.take() {
            self.abort(k, b, "superseded by a later handover");
        }
        if let Some(ha) = self.ha {
            let old = self.route_down(ha, from)?;
            let new = self.route_down(ha, to)?;
            let ho = &mut self.hos[h];
            ho.old_channels = old.iter().copied().filter(|c| !new.contains(c)).collect();
            ho.new_channels = new.iter().copied().filter(|c| !old.contains(c)).collect();
        }
        self.hos[h].from = Some(from);
        let mn = self.node_name(self.mn);
        let (fname, tname) = (self.link_name(from), self.link_name(to));
        let dir = self.hos[h].direction;
        self.trace.log(
            now,
            "handover_detect",
            &mn,
            &[("handover", &self.hos[h].name), ("from", &fname), ("to", &tname), ("direction", &dir)],
        );

        let (fk, tk) = (self.topo.access_kind(from), self.topo.access_kind(to));
        let consistent = from != to
            && match dir {
                Direction::TerrToSat => fk.is_terrestrial() && tk == NetworkKind::Sat,
                Direction::SatToTerr => fk == NetworkKind::Sat && tk.is_terrestrial(),
            };
        if !consistent {
            self.abort(k, h, &format!("attached to `{fname}` ({fk}), which does not match {dir} to `{tname}`"));
            return Ok(());
        }

        match (self.mode, dir) {
            (Mode::Baseline, _) => {
                self.attach(now, to);
                self.hos[h].state = HoState::Registering;
                self.send_bu(k, h, 1)
            }
            (Mode::ResetCwnd, _) => {
                let src = self.flows.first().map(|f| self.node_name(f.src)).unwrap_or_default();
                for f in &mut self.flows {
                    f.sender.suspend();
                }
                self.trace.log(now, "suspend", &src, &[]);
                self.attach(now, to);
                self.hos[h].state = HoState::Registering;
                self.send_bu(k, h, 1)
            }
            (Mode::Proactive, Direction::TerrToSat) => self.proactive_terr_to_sat(k, h, from, to),
            (Mode::Proactive, Direction::SatToTerr) => self.proactive_sat_to_terr(k, h, from, to),
        }
    }

    fn rtts(&self, old: LinkId, new: LinkId) -> Result<crate::netmodel::RttTable, SimError> {
        let cn = self.flows[0].src;
        rtt_table(&self.topo, cn, old, new).map_err(net)
    }

    fn proactive_terr_to_sat(
        &mut self,
        k: &mut Kernel<Ev>,
        h: usize,
        from: LinkId,
        to: LinkId,
    ) -> Result<(), SimError> {
        let now = k.now();
        let rtt = self.rtts(from, to)?;
        let sat = self.topo.link(to).spec.clone();
        let plan = match plan_terr_to_sat(&self.cache, &self.engine, &rtt, &sat, now) {
            Ok(p) => p,
            Err(e) => {
                self.abort(k, h, &e.to_string());
                return Ok(());
            }
        };
        let mn = self.node_name(self.mn);
        self.trace.log(
            now,
            "t_a0",
            &mn,
            &[
                ("handover", &self.hos[h].name),
                ("w_rec", &plan.w_rec),
                ("delta", &plan.delta),
                ("t_r0", &plan.t_r0),
                ("chain_violation", &u8::from(plan.chain_violation)),
            ],
        );
        if plan.chain_violation {
            self.trace.log(
                now,
                "warn_chain_violation",
                &mn,
                &[("w_rec", &plan.w_rec), ("w_default", &self.engine.w_default)],
            );
        }
        let ho = &mut self.hos[h];
        ho.plan = Some(plan);
        ho.t_a0 = Some(now);
        ho.state = HoState::Waiting;
        let shares = self.shares(plan.w_rec)?;
        for (f, cap) in shares.into_iter().enumerate() {
            let flow = &mut self.flows[f];
            if !flow.started {
                flow.receiver.set_cap_silently(Some(cap));
                continue;
            }
            let ack = match flow.receiver.set_window_policy(Some(cap)) {
                Ok(Some(a)) => a,
                Ok(None) => flow.receiver.window_update(),
                Err(e) => return Err(SimError::Invariant(e.to_string())),
            };
            flow.adv_wait = Some(ack.ack_seq);
            self.emit_ack(k, f, ack)?;
        }
        let id = k.schedule(plan.t_r0, Ev::Execute(h)).map_err(|e| SimError::Invariant(e.to_string()))?;
        self.hos[h].exec_timer = Some(id);
        Ok(())
    }

    fn proactive_sat_to_terr(
        &mut self,
        k: &mut Kernel<Ev>,
        h: usize,
        from: LinkId,
        to: LinkId,
    ) -> Result<(), SimError> {
        let now = k.now();
        // the satellite is the "new" side of the table in this direction
        let rtt = self.rtts(to, from)?;
        let terr = self.topo.link(to).spec.clone();
        let current = self.flows.iter().map(|f| f.receiver.advertised_window()).sum::<u64>();
        let plan = match plan_sat_to_terr(&self.cache, &self.engine, current, terr.kind, &rtt, &terr, now) {
            Ok(p) => p,
            Err(e) => {
                self.abort(k, h, &e.to_string());
                return Ok(());
            }
        };
        let sat_bdp = sat_window_estimate(&self.cache, self.engine.sat_default_window);
        let extra = self.shares(sat_bdp)?;
        let ramp = self.shares(plan.ramp_target)?;
        for (f, flow) in self.flows.iter_mut().enumerate() {
            flow.ramp_target = ramp[f];
            flow.ramp_step = plan.ramp_step;
            flow.pre_boost_cap = flow.receiver.adv_policy_cap;
            if flow.started {
                let cur = flow.receiver.advertised_window();
                let target = (cur + extra[f]).min(flow.receiver.buffer_capacity);
                flow.control.start(ControlPhase::Boost, target, plan.boost_step);
            }
        }
        let mn = self.node_name(self.mn);
        self.trace.log(
            now,
            "t_a0",
            &mn,
            &[
                ("handover", &self.hos[h].name),
                ("boost_target", &plan.boost_target),
                ("boost_step", &plan.boost_step),
                ("ramp_target", &plan.ramp_target),
                ("max_boost", &plan.delta),
            ],
        );
        let ho = &mut self.hos[h];
        ho.plan = Some(plan);
        ho.t_a0 = Some(now);
        ho.state = HoState::Boosting;
        self.boosting = Some(h);
        let id = k.schedule(now + plan.delta, Ev::Execute(h)).map_err(|e| SimError::Invariant(e.to_string()))?;
        self.hos[h].exec_timer = Some(id);
        Ok(())
    }

    fn execute(&mut self, k: &mut Kernel<Ev>, h: usize) -> Result<(), SimError> {
        self.hos[h].exec_timer = None;
        match self.hos[h].state {
            HoState::Waiting => {
                let now = k.now();
                let to = self.hos[h].target;
                self.attach(now, to);
                self.hos[h].state = HoState::Registering;
                self.send_bu(k, h, 1)
            }
            HoState::Boosting => self.execute_sat_to_terr(k, h),
            _ => Ok(()),
        }
    }

    fn execute_sat_to_terr(&mut self, k: &mut Kernel<Ev>, h: usize) -> Result<(), SimError> {
        let now = k.now();
        self.boosting = None;
        if let Some(id) = self.hos[h].exec_timer.take() {
            k.cancel(id);
        }
        let to = self.hos[h].target;
        if !self.topo.link(to).spec.is_available(now) {
            for f in 0..self.flows.len() {
                let flow = &mut self.flows[f];
                flow.control.start(ControlPhase::Hold, 0, 0);
                if !flow.started {
                    continue;
                }
                let cap = flow.pre_boost_cap;
                flow.receiver.set_cap_silently(cap);
                let ack = flow.receiver.window_update();
                self.emit_ack(k, f, ack)?;
            }
            let name = self.link_name(to);
            self.abort(k, h, &format!("`{name}` unavailable at execution; staying on the satellite"));
            return Ok(());
        }
        let ho = &mut self.hos[h];
        if let (Some(plan), Some(t_a0)) = (ho.plan.as_mut(), ho.t_a0) {
            plan.t_r0 = now;
            plan.delta = now - t_a0;
        }
        self.attach(now, to);
        for f in 0..self.flows.len() {
            let flow = &mut self.flows[f];
            if !flow.started {
                continue;
            }
            flow.control.start(ControlPhase::Drain, 0, 0);
            flow.receiver.suppress_dupacks = true;
            let ack = match flow.receiver.set_window_policy(Some(0)) {
                Ok(Some(a)) => a,
                Ok(None) => flow.receiver.window_update(),
                Err(e) => return Err(SimError::Invariant(e.to_string())),
            };
            flow.ca_wait = Some(ack.ack_seq);
            self.emit_ack(k, f, ack)?;
        }
        let timeout = self.hos[h].plan.map_or(SimTime::ZERO, |p| p.drain_timeout);
        let mn = self.node_name(self.mn);
        self.trace.log(now, "drain_start", &mn, &[("handover", &self.hos[h].name), ("timeout", &timeout)]);
        self.hos[h].state = HoState::Draining;
        self.hos[h].drain_timer = Some(k.schedule_in(timeout, Ev::DrainTimeout(h)));
        self.send_bu(k, h, 1)?;
        self.check_drain(k)
    }

    fn check_drain(&mut self, k: &mut Kernel<Ev>) -> Result<(), SimError> {
        let Some(h) = self.current_ho else { return Ok(()) };
        let ho = &self.hos[h];
        if ho.state != HoState::Draining || ho.t_r1.is_none() {
            return Ok(());
        }
        let sat = ho.from.expect("set at trigger");
        let drained = self
            .flows
            .iter()
            .filter(|f| f.started)
            .all(|f| f.receiver.rcv_nxt >= f.ha_high.get(&sat).copied().unwrap_or(0));
        if drained {
            self.finish_drain(k, h, false)?;
        }
        Ok(())
    }

    fn finish_drain(&mut self, k: &mut Kernel<Ev>, h: usize, timed_out: bool) -> Result<(), SimError> {
        let now = k.now();
        let ho = &mut self.hos[h];
        if let Some(id) = ho.drain_timer.take() {
            k.cancel(id);
        }
        ho.drain_timed_out = timed_out;
        ho.state = if ho.t_r3.is_some() { HoState::Done } else { HoState::Registering };
        let mn = self.node_name(self.mn);
        self.trace.log(
            now,
            if timed_out { "drain_timeout" } else { "drain_done" },
            &mn,
            &[("handover", &self.hos[h].name)],
        );
        for f in 0..self.flows.len() {
            let flow = &mut self.flows[f];
            if !flow.started {
                continue;
            }
            flow.receiver.suppress_dupacks = false;
            flow.control.start(ControlPhase::Ramp, flow.ramp_target, flow.ramp_step);
            let ack = flow.receiver.window_update();
            self.trace.log(
                now,
                "ramp_start",
                &mn,
                &[("flow", &self.flows[f].name), ("target", &self.flows[f].ramp_target)],
            );
            self.emit_ack(k, f, ack)?;
        }
        Ok(())
    }

    fn abort(&mut self, k: &mut Kernel<Ev>, h: usize, reason: &str) {
        let now = k.now();
        let ho = &mut self.hos[h];
        for id in [ho.bu_timer.take(), ho.exec_timer.take(), ho.drain_timer.take()].into_iter().flatten() {
            k.cancel(id);
        }
        ho.state = HoState::Aborted;
        ho.aborted = Some(reason.to_string());
        if self.boosting == Some(h) {
            self.boosting = None;
        }
        if let Some(from) = ho.from {
            if self.attached != from && ho.t_r1.is_none() {
                self.attach(now, from);
            }
        }
        let mn = self.node_name(self.mn);
        let reason = reason.replace(' ', "_");
        self.trace.log(now, "handover_abort", &mn, &[("handover", &self.hos[h].name), ("reason", &reason)]);
    }

    // ---- registration ----

    fn send_bu(&mut self, k: &mut Kernel<Ev>, h: usize, attempt: u32) -> Result<(), SimError> {
        let now = k.now();
        let to = self.hos[h].target;
        let registrar = self.reg.registrar(&self.topo, to).map_err(mob)?;
        let route: Route = self.reg.update_path(&self.topo, to).map_err(mob)?.hops.into();
        let first = self.topo.link(route[0].link).spec.clone();
        let reg_name = self.node_name(registrar);
        if !first.is_available(now) {
            match first.next_available(now) {
                Some(t) => {
                    self.trace.log(now, "bu_deferred", &reg_name, &[("handover", &self.hos[h].name), ("until", &t)]);
                    let id = k
                        .schedule(t, Ev::BuRetry { ho: h, attempt: attempt + 1 })
                        .map_err(|e| SimError::Invariant(e.to_string()))?;
                    self.hos[h].bu_timer = Some(id);
                }
                None => {
                    let name = self.link_name(route[0].link);
                    self.abort(k, h, &format!("`{name}` never becomes available for registration"));
                }
            }
            return Ok(());
        }
        let ho = &mut self.hos[h];
        let first_send = ho.t_r0.is_none();
        if first_send {
            ho.t_r0 = Some(now);
        }
        self.trace.log(
            now,
            if first_send { "t_r0" } else { "bu_retry" },
            &reg_name,
            &[("handover", &self.hos[h].name), ("attempt", &attempt), ("target", &self.link_name(to))],
        );
        let seg = binding_update(self.mn, to, h, attempt, now);
        self.forward(k, seg, route, 0)?;
        self.hos[h].bu_timer = Some(k.schedule_in(BU_RETRY, Ev::BuRetry { ho: h, attempt: attempt + 1 }));
        Ok(())
    }

    fn ha_binding_update(&mut self, k: &mut Kernel<Ev>, seg: Segment) -> Result<(), SimError> {
        let now = k.now();
        let info = seg.binding.ok_or_else(|| SimError::Invariant("binding update without binding info".into()))?;
        let h = info.handover;
        let ha = self.node_name(self.ha.expect("binding update routed to the home agent"));
        if self.current_ho != Some(h) || self.hos[h].state == HoState::Aborted {
            self.trace.log(now, "bu_stale", &ha, &[("handover", &self.hos[h].name)]);
            return Ok(());
        }
        let ack = match ha_on_binding_update(&mut self.bindings, &seg, now) {
            Ok(a) => a,
            Err(MobilityError::NonIncreasing { .. }) => return Ok(()),
            Err(e) => return Err(SimError::Invariant(e.to_string())),
        };
        let ho = &mut self.hos[h];
        if ho.t_r1.is_none() {
            ho.t_r1 = Some(now);
            let to = self.link_name(info.attachment);
            self.trace.log(now, "t_r1", &ha, &[("handover", &self.hos[h].name), ("binding", &to)]);
        }
        let route: Route = self.reg.ack_path(&self.topo, info.attachment).map_err(mob)?.hops.into();
        self.forward(k, ack, route, 0)?;
        self.check_drain(k)
    }

    fn registrar_ack(&mut self, k: &mut Kernel<Ev>, seg: Segment, node: NodeId) -> Result<(), SimError> {
        let now = k.now();
        let info = seg.binding.ok_or_else(|| SimError::Invariant("binding ack without binding info".into()))?;
        let h = info.handover;
        if self.hos[h].t_r3.is_some() || self.hos[h].state == HoState::Aborted {
            return Ok(());
        }
        let ho = &mut self.hos[h];
        ho.t_r3 = Some(now);
        if let Some(id) = ho.bu_timer.take() {
            k.cancel(id);
        }
        if ho.state == HoState::Registering {
            ho.state = HoState::Done;
        }
        let name = self.node_name(node);
        self.trace.log(now, "t_r3", &name, &[("handover", &self.hos[h].name)]);
        if self.mode == Mode::ResetCwnd {
            let kind = self.topo.access_kind(info.attachment);
            let fallback =
                if kind == NetworkKind::Sat { self.engine.sat_default_window } else { self.engine.rcv_buffer };
            let ssthresh = self.cache.bdp(kind).unwrap_or(fallback).max(2 * self.engine.mss);
            for f in 0..self.flows.len() {
                if !self.flows[f].started {
                    continue;
                }
                let out = self.flows[f].sender.reset_for_new_path(ssthresh, now);
                let src = self.node_name(self.flows[f].src);
                self.trace.log(now, "reset_cwnd", &src, &[("flow", &self.flows[f].name), ("ssthresh", &ssthresh)]);
                self.apply(k, f, out)?;
            }
        }
        Ok(())
    }

    // ---- results ----

    fn finish(mut self, k: &Kernel<Ev>, seed: u64, events: u64) -> RunOutput {
        let end = self.sc.sim.end;
        let mut in_flight = vec![0u64; self.flows.len()];
        for (_, ev) in k.pending() {
            if let Ev::Arrive { seg, .. } = ev {
                if let (SegmentKind::Data, Some(fid)) = (seg.kind, seg.flow) {
                    in_flight[fid.0 as usize] += u64::from(seg.payload_len);
                }
            }
        }
        let first_detect = self.first_detect;
        let flows = self
            .flows
            .iter_mut()
            .zip(in_flight)
            .map(|(f, inflight)| {
                let mut m = std::mem::take(&mut f.m);
                let s = &f.sender.stats;
                m.retransmits = s.retransmits;
                m.fast_retransmits = s.fast_retransmits;
                m.rto_count = s.timeouts;
                m.bytes_sent = s.bytes_sent;
                m.bytes_in_flight_at_end = inflight;
                m.bytes_in_order = f.receiver.rcv_nxt;
                let lifetime = end.saturating_sub(f.start).as_micros().max(1);
                m.goodput_bps = (u128::from(f.receiver.rcv_nxt) * 8 * 1_000_000 / u128::from(lifetime)) as u64;
                if let Some(td) = first_detect {
                    let window_end = (td + GAP_WINDOW).min(end);
                    let since = f.gap_last.unwrap_or(td).max(td);
                    let tail = window_end.saturating_sub(since);
                    m.handover_gap = Some(f.gap_max.max(tail));
                }
                m
            })
            .collect();
        let handovers = self
            .hos
            .iter()
            .map(|h| HandoverMetrics {
                name: h.name.clone(),
                direction: h.direction,
                from: h.from.map(|l| self.topo.link(l).name.clone()).unwrap_or_default(),
                to: self.topo.link(h.target).name.clone(),
                t_detect: h.time,
                plan: h.plan,
                aborted: h.aborted.clone(),
                t_a0: h.t_a0,
                t_r0: h.t_r0,
                t_r1: h.t_r1,
                t_r3: h.t_r3,
                old_path_enqueues_after_tr1: h.old_enqueues,
                drain_timed_out: h.drain_timed_out,
            })
            .collect();
        let metrics = RunMetrics {
            scenario: self.sc.sim.name.clone(),
            mode: self.mode,
            seed,
            flows,
            handovers,
            queues: std::mem::take(&mut self.queues),
            no_binding_drops: self.no_binding_drops,
            events,
        };
        RunOutput { metrics, trace: self.trace.into_string() }
    }
}
