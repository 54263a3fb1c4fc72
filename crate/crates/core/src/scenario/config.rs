//! Scenario files.
//!
//! ```text
//! # comment
//! [sim]
//! name = s1
//! end = 20
//! [node.mn]
//! role = mn
//! [link.sat]
//! a = gw_sat
//! b = mn
//! kind = sat
//! bandwidth = 1000000   # bits per second
//! delay = 0.25          # one way, seconds
//! queue = 65536         # bytes
//! ```
//!
//! Unknown sections and keys are rejected. Every error names the line and
//! key it comes from.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path as FsPath;

use crate::handover::Direction;
use crate::mobility::RegistrationOrigin;
use crate::netmodel::{Interval, LinkSpec, NetworkKind, Role, TCP_HEADER_BYTES};
use crate::scenario::SimError;
use crate::simkernel::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    Baseline,
    Proactive,
    ResetCwnd,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Baseline, Mode::Proactive, Mode::ResetCwnd];

    pub fn parse(s: &str) -> Option<Mode> {
        match s.trim().to_ascii_lowercase().as_str() {
            "baseline" => Some(Mode::Baseline),
            "proactive" => Some(Mode::Proactive),
            "reset-cwnd" | "reset_cwnd" => Some(Mode::ResetCwnd),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Proactive => "proactive",
            Mode::ResetCwnd => "reset-cwnd",
        }
    }

    pub fn parse_or_err(s: &str) -> Result<Mode, String> {
        Mode::parse(s).ok_or_else(|| {
            let valid: Vec<&str> = Mode::ALL.iter().map(|m| m.as_str()).collect();
            format!("unknown mode `{}` (valid modes: {})", s.trim(), valid.join(", "))
        })
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where the mobile node's cached path estimate for a network kind comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CacheSetting {
    /// Bandwidth times round trip of the access link in the topology.
    Measured,
    /// Never measured; the engine falls back to configured defaults.
    Absent,
    Bytes(u64),
}

impl CacheSetting {
    fn parse(s: &str) -> Option<CacheSetting> {
        match s {
            "measured" => Some(CacheSetting::Measured),
            "absent" => Some(CacheSetting::Absent),
            _ => s.parse().ok().filter(|&b| b > 0).map(CacheSetting::Bytes),
        }
    }

    fn render(self) -> String {
        match self {
            CacheSetting::Measured => "measured".into(),
            CacheSetting::Absent => "absent".into(),
            CacheSetting::Bytes(b) => b.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimSettings {
    pub name: String,
    pub end: SimTime,
    pub seed: u64,
    pub mode: Mode,
    pub mss: u64,
    pub w_default: u64,
    pub sat_default_window: u64,
    pub rcv_buffer: u64,
    pub initial_ssthresh: u64,
    pub sat_cache: CacheSetting,
    pub terr_cache: CacheSetting,
    pub registration: RegistrationOrigin,
    pub proxy_location: Option<String>,
    /// Access link the mobile node is attached to at time zero.
    pub initial: String,
    pub ack_pacing: SimTime,
    pub ack_pacing_from: SimTime,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeDef {
    pub name: String,
    pub role: Role,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinkDef {
    pub name: String,
    pub a: String,
    pub b: String,
    pub spec: LinkSpec,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlowDef {
    pub name: String,
    pub src: String,
    pub dst: String,
    pub start: SimTime,
    /// `None` is an unlimited bulk transfer.
    pub volume: Option<u64>,
    pub weight: u64,
    /// Defaults to two segments.
    pub min_share: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HandoverDef {
    pub name: String,
    pub time: SimTime,
    pub direction: Direction,
    pub target: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub sim: SimSettings,
    pub nodes: Vec<NodeDef>,
    pub links: Vec<LinkDef>,
    pub flows: Vec<FlowDef>,
    pub handovers: Vec<HandoverDef>,
}

/// A validation problem located by section and key; the loader turns it
/// into a line number.
struct Problem {
    section: String,
    key: String,
    msg: String,
}

fn problem(section: impl Into<String>, key: &str, msg: impl Into<String>) -> Problem {
    Problem { section: section.into(), key: key.into(), msg: msg.into() }
}

fn config_err(line: usize, key: &str, msg: impl std::fmt::Display) -> SimError {
    if key.is_empty() {
        SimError::Config(format!("line {line}: {msg}"))
    } else {
        SimError::Config(format!("line {line}, key `{key}`: {msg}"))
    }
}

struct Entry {
    key: String,
    value: String,
    line: usize,
}

struct Section {
    header: String,
    line: usize,
    entries: Vec<Entry>,
}

fn split_sections(text: &str) -> Result<Vec<Section>, SimError> {
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let header = rest
                .strip_suffix(']')
                .ok_or_else(|| config_err(line, "", "unterminated section header"))?
                .trim()
                .to_string();
            if sections.iter().any(|s| s.header == header) {
                return Err(config_err(line, "", format!("duplicate section [{header}]")));
            }
            sections.push(Section { header, line, entries: Vec::new() });
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| config_err(line, "", format!("expected `key = value`, found `{content}`")))?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        let section = sections.last_mut().ok_or_else(|| config_err(line, &key, "key outside of any section"))?;
        if section.entries.iter().any(|e| e.key == key) {
            return Err(config_err(line, &key, "duplicate key"));
        }
        section.entries.push(Entry { key, value, line });
    }
    Ok(sections)
}

/// Reads one section's keys, remembering which were used so leftovers can
/// be reported as unknown.
struct Reader<'a> {
    section: &'a Section,
    used: BTreeSet<&'a str>,
}

impl<'a> Reader<'a> {
    fn new(section: &'a Section) -> Self {
        Reader { section, used: BTreeSet::new() }
    }

    fn raw(&mut self, key: &'a str) -> Option<&'a Entry> {
        let e = self.section.entries.iter().find(|e| e.key == key)?;
        self.used.insert(key);
        Some(e)
    }

    fn required(&mut self, key: &'a str) -> Result<&'a Entry, SimError> {
        let line = self.section.line;
        let header = &self.section.header;
        self.raw(key).ok_or_else(|| config_err(line, key, format!("missing required key in [{header}]")))
    }

    fn parse<T>(&mut self, key: &'a str, what: &str, f: impl Fn(&str) -> Option<T>) -> Result<Option<T>, SimError> {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => f(&e.value)
                .map(Some)
                .ok_or_else(|| config_err(e.line, key, format!("expected {what}, found `{}`", e.value))),
        }
    }

    fn parse_req<T>(&mut self, key: &'a str, what: &str, f: impl Fn(&str) -> Option<T>) -> Result<T, SimError> {
        let e = self.required(key)?;
        f(&e.value).ok_or_else(|| config_err(e.line, key, format!("expected {what}, found `{}`", e.value)))
    }

    fn finish(self) -> Result<(), SimError> {
        for e in &self.section.entries {
            if !self.used.contains(e.key.as_str()) {
                return Err(config_err(e.line, &e.key, format!("unknown key in [{}]", self.section.header)));
            }
        }
        Ok(())
    }
}

fn parse_u64(s: &str) -> Option<u64> {
    s.parse().ok()
}

fn parse_positive(s: &str) -> Option<u64> {
    s.parse().ok().filter(|&v| v > 0)
}

fn parse_time(s: &str) -> Option<SimTime> {
    SimTime::parse_secs(s)
}

fn parse_availability(s: &str) -> Option<Vec<Interval>> {
    if s == "always" {
        return Some(vec![Interval { start: SimTime::ZERO, end: SimTime::MAX }]);
    }
    if s == "never" {
        return Some(Vec::new());
    }
    s.split(',')
        .map(|part| {
            let (a, b) = part.trim().split_once('-')?;
            let start = SimTime::parse_secs(a)?;
            let end = if b.trim() == "inf" { SimTime::MAX } else { SimTime::parse_secs(b)? };
            Some(Interval { start, end })
        })
        .collect()
}

fn render_availability(ivs: &[Interval]) -> String {
    if ivs.is_empty() {
        return "never".into();
    }
    if ivs == [Interval { start: SimTime::ZERO, end: SimTime::MAX }] {
        return "always".into();
    }
    ivs.iter()
        .map(|iv| {
            let end = if iv.end == SimTime::MAX { "inf".to_string() } else { iv.end.to_string() };
            format!("{}-{}", iv.start, end)
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: impl AsRef<FsPath>) -> Result<Scenario, SimError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| SimError::Config(format!("cannot read scenario `{}`: {e}", path.display())))?;
    parse_scenario(&text)
}

/// Parses and validates scenario text.
pub fn parse_scenario(text: &str) -> Result<Scenario, SimError> {
    let sections = split_sections(text)?;
    let mut lines: BTreeMap<(String, String), usize> = BTreeMap::new();
    for s in &sections {
        lines.insert((s.header.clone(), String::new()), s.line);
        for e in &s.entries {
            lines.insert((s.header.clone(), e.key.clone()), e.line);
        }
    }

    let mut sim = None;
    let mut nodes = Vec::new();
    let mut links = Vec::new();
    let mut flows = Vec::new();
    let mut handovers = Vec::new();
    for s in &sections {
        let (kind, name) = match s.header.split_once('.') {
            Some((k, n)) if !n.is_empty() => (k, n.to_string()),
            _ => (s.header.as_str(), String::new()),
        };
        match (kind, name.is_empty()) {
            ("sim", true) => sim = Some(read_sim(s)?),
            ("node", false) => nodes.push(read_node(s, name)?),
            ("link", false) => links.push(read_link(s, name)?),
            ("flow", false) => flows.push(read_flow(s, name)?),
            ("handover", false) => handovers.push(read_handover(s, name)?),
            _ => {
                return Err(config_err(
                    s.line,
                    "",
                    format!(
                        "unknown section [{}] (expected sim, node.<name>, link.<name>, flow.<name>, handover.<name>)",
                        s.header
                    ),
                ))
            }
        }
    }
    let (mut sim, initial_given) = sim.ok_or_else(|| SimError::Config("line 1: missing [sim] section".into()))?;
    if !initial_given {
        sim.initial = default_initial(&nodes, &links).unwrap_or_default();
    }
    let scenario = Scenario { sim, nodes, links, flows, handovers };
    scenario.check().map_err(|p| {
        let line = lines
            .get(&(p.section.clone(), p.key.clone()))
            .or_else(|| lines.get(&(p.section.clone(), String::new())))
            .copied()
            .unwrap_or(1);
        config_err(line, &p.key, p.msg)
    })?;
    Ok(scenario)
}

fn default_initial(nodes: &[NodeDef], links: &[LinkDef]) -> Option<String> {
    let is_mn = |n: &str| nodes.iter().any(|d| d.name == n && d.role == Role::Mn);
    let access: Vec<&LinkDef> = links.iter().filter(|l| is_mn(&l.a) || is_mn(&l.b)).collect();
    match access.as_slice() {
        [only] => Some(only.name.clone()),
        _ => None,
    }
}

fn read_sim(s: &Section) -> Result<(SimSettings, bool), SimError> {
    let mut r = Reader::new(s);
    let name = r.raw("name").map_or_else(|| "scenario".to_string(), |e| e.value.clone());
    let end = r.parse_req("end", "a time in seconds", parse_time)?;
    let seed = r.parse("seed", "an unsigned integer", parse_u64)?.unwrap_or(1);
    let mode = match r.raw("mode") {
        None => Mode::Baseline,
        Some(e) => Mode::parse_or_err(&e.value).map_err(|m| config_err(e.line, "mode", m))?,
    };
    let mss = r.parse("mss", "a positive byte count", parse_positive)?.unwrap_or(1460);
    let w_default = r.parse("w_default", "a positive byte count", parse_positive)?.unwrap_or(131_072);
    let sat_default_window = r.parse("sat_default_window", "a positive byte count", parse_positive)?.unwrap_or(48_000);
    let rcv_buffer = r.parse("rcv_buffer", "a positive byte count", parse_positive)?.unwrap_or(w_default);
    let initial_ssthresh = r.parse("initial_ssthresh", "a positive byte count", parse_positive)?.unwrap_or(65_536);
    let cache_what = "`measured`, `absent` or a positive byte count";
    let sat_cache = r.parse("sat_cache", cache_what, CacheSetting::parse)?.unwrap_or(CacheSetting::Measured);
    let terr_cache = r.parse("terr_cache", cache_what, CacheSetting::parse)?.unwrap_or(CacheSetting::Measured);
    let registration = r
        .parse("registration", "`mn` or `proxy`", |v| match v {
            "mn" => Some(RegistrationOrigin::Mn),
            "proxy" => Some(RegistrationOrigin::Proxy),
            _ => None,
        })?
        .unwrap_or(RegistrationOrigin::Mn);
    let proxy_location = r.raw("proxy_location").map(|e| e.value.clone());
    let initial = r.raw("initial").map(|e| e.value.clone());
    let ack_pacing = r.parse("ack_pacing", "a time in seconds", parse_time)?.unwrap_or(SimTime::ZERO);
    let ack_pacing_from = r.parse("ack_pacing_from", "a time in seconds", parse_time)?.unwrap_or(SimTime::ZERO);
    r.finish()?;
    let given = initial.is_some();
    Ok((
        SimSettings {
            name,
            end,
            seed,
            mode,
            mss,
            w_default,
            sat_default_window,
            rcv_buffer,
            initial_ssthresh,
            sat_cache,
            terr_cache,
            registration,
            proxy_location,
            initial: initial.unwrap_or_default(),
            ack_pacing,
            ack_pacing_from,
        },
        given,
    ))
}

fn read_node(s: &Section, name: String) -> Result<NodeDef, SimError> {
    let mut r = Reader::new(s);
    let role = r.parse_req("role", "one of cn, ha, gateway, mn", Role::parse)?;
    r.finish()?;
    Ok(NodeDef { name, role })
}

fn read_link(s: &Section, name: String) -> Result<LinkDef, SimError> {
    let mut r = Reader::new(s);
    let a = r.required("a")?.value.clone();
    let b = r.required("b")?.value.clone();
    let kind = r.parse_req("kind", "one of wlan, gprs, sat, wired", NetworkKind::parse)?;
    let bw = r.required("bandwidth")?;
    let bits: u64 = bw.value.parse().ok().filter(|&v| v > 0).ok_or_else(|| {
        config_err(bw.line, "bandwidth", format!("expected a positive bit rate, found `{}`", bw.value))
    })?;
    if !bits.is_multiple_of(8) {
        return Err(config_err(
            bw.line,
            "bandwidth",
            format!("{bits} bit/s is not a whole number of bytes per second"),
        ));
    }
    let delay = r.parse_req("delay", "a time in seconds", parse_time)?;
    let queue = r.parse_req("queue", "a byte count", parse_u64)?;
    let availability = r
        .parse("availability", "`always`, `never` or intervals like `0-10, 12-inf`", parse_availability)?
        .unwrap_or_else(|| vec![Interval { start: SimTime::ZERO, end: SimTime::MAX }]);
    let jitter = r.parse("jitter", "a time in seconds", parse_time)?.unwrap_or(SimTime::ZERO);
    r.finish()?;
    let mut spec = LinkSpec::new(kind, bits / 8, delay, queue).with_availability(availability);
    spec.jitter = jitter;
    Ok(LinkDef { name, a, b, spec })
}

fn read_flow(s: &Section, name: String) -> Result<FlowDef, SimError> {
    let mut r = Reader::new(s);
    let src = r.required("src")?.value.clone();
    let dst = r.required("dst")?.value.clone();
    let start = r.parse("start", "a time in seconds", parse_time)?.unwrap_or(SimTime::ZERO);
    let volume = r
        .parse("volume", "`unlimited` or a positive byte count", |v| {
            if v == "unlimited" {
                Some(None)
            } else {
                parse_positive(v).map(Some)
            }
        })?
        .unwrap_or(None);
    let weight = r.parse("weight", "a positive integer", parse_positive)?.unwrap_or(1);
    let min_share = r.parse("min_share", "a byte count", parse_u64)?;
    r.finish()?;
    Ok(FlowDef { name, src, dst, start, volume, weight, min_share })
}

fn read_handover(s: &Section, name: String) -> Result<HandoverDef, SimError> {
    let mut r = Reader::new(s);
    let time = r.parse_req("time", "a time in seconds", parse_time)?;
    let direction = r.parse_req("direction", "`terr_to_sat` or `sat_to_terr`", Direction::parse)?;
    let target = r.required("target")?.value.clone();
    r.finish()?;
    Ok(HandoverDef { name, time, direction, target })
}

impl Scenario {
    /// Checks every cross-reference and range constraint.
    pub fn validate(&self) -> Result<(), SimError> {
        self.check().map_err(|p| SimError::Config(format!("[{}] key `{}`: {}", p.section, p.key, p.msg)))
    }

    pub fn node(&self, name: &str) -> Option<&NodeDef> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn link(&self, name: &str) -> Option<&LinkDef> {
        self.links.iter().find(|l| l.name == name)
    }

    pub fn is_access(&self, link: &LinkDef) -> bool {
        [&link.a, &link.b].iter().any(|n| self.node(n).is_some_and(|d| d.role == Role::Mn))
    }

    fn check(&self) -> Result<(), Problem> {
        let sim = &self.sim;
        if sim.end == SimTime::ZERO {
            return Err(problem("sim", "end", "end time must be positive"));
        }
        if sim.mss < 1 || sim.rcv_buffer < 2 * sim.mss {
            return Err(problem("sim", "rcv_buffer", "receive buffer must hold at least two segments"));
        }
        if sim.ack_pacing_from >= sim.end && sim.ack_pacing > SimTime::ZERO {
            return Err(problem("sim", "ack_pacing_from", "ACK pacing starts after the end of the run"));
        }

        let mut names = BTreeSet::new();
        for n in &self.nodes {
            if !names.insert(n.name.as_str()) {
                return Err(problem(format!("node.{}", n.name), "", "duplicate node name"));
            }
        }
        let mns: Vec<&NodeDef> = self.nodes.iter().filter(|n| n.role == Role::Mn).collect();
        if mns.len() != 1 {
            let section = mns.get(1).map_or("sim".to_string(), |n| format!("node.{}", n.name));
            return Err(problem(section, "role", format!("exactly one node must have role mn, found {}", mns.len())));
        }

        let max_segment = sim.mss + TCP_HEADER_BYTES;
        for l in &self.links {
            let section = format!("link.{}", l.name);
            for (key, end) in [("a", &l.a), ("b", &l.b)] {
                if self.node(end).is_none() {
                    return Err(problem(&section, key, format!("unknown node `{end}`")));
                }
            }
            if l.a == l.b {
                return Err(problem(&section, "b", "link endpoints must differ"));
            }
            l.spec.validate(max_segment).map_err(|m| {
                let key = if m.contains("queue") {
                    "queue"
                } else if m.contains("bandwidth") {
                    "bandwidth"
                } else {
                    "availability"
                };
                problem(&section, key, m)
            })?;
            if self.is_access(l) {
                let gw = if self.node(&l.a).is_some_and(|n| n.role == Role::Mn) { &l.b } else { &l.a };
                if l.spec.kind == NetworkKind::Wired {
                    return Err(problem(&section, "kind", "an access link must be wlan, gprs or sat"));
                }
                if self.node(gw).is_some_and(|n| n.role == Role::Mn) {
                    return Err(problem(&section, "b", "link joins the mobile node to itself"));
                }
            }
        }

        let initial = self.link(&sim.initial).filter(|l| self.is_access(l)).ok_or_else(|| {
            if sim.initial.is_empty() {
                problem("sim", "initial", "several access links exist; name the initial one")
            } else {
                problem("sim", "initial", format!("`{}` is not an access link of the mobile node", sim.initial))
            }
        })?;

        if let Some(p) = &sim.proxy_location {
            match self.node(p) {
                None => return Err(problem("sim", "proxy_location", format!("unknown node `{p}`"))),
                Some(n) if n.role != Role::Gateway => {
                    return Err(problem("sim", "proxy_location", format!("`{p}` is not a gateway")))
                }
                _ => {}
            }
        }

        if self.flows.is_empty() {
            return Err(problem("sim", "", "scenario defines no flows"));
        }
        for f in &self.flows {
            let section = format!("flow.{}", f.name);
            match self.node(&f.src) {
                None => return Err(problem(&section, "src", format!("unknown node `{}`", f.src))),
                Some(n) if n.role != Role::Cn => {
                    return Err(problem(&section, "src", format!("`{}` is not a correspondent node", f.src)))
                }
                _ => {}
            }
            match self.node(&f.dst) {
                None => return Err(problem(&section, "dst", format!("unknown node `{}`", f.dst))),
                Some(n) if n.role != Role::Mn => {
                    return Err(problem(&section, "dst", format!("`{}` is not the mobile node", f.dst)))
                }
                _ => {}
            }
            if f.start >= sim.end {
                return Err(problem(
                    &section,
                    "start",
                    format!("flow starts at {} but the run ends at {}", f.start, sim.end),
                ));
            }
        }

        let has_ha = self.nodes.iter().any(|n| n.role == Role::Ha);
        let mut ordered: Vec<&HandoverDef> = self.handovers.iter().collect();
        ordered.sort_by_key(|h| h.time);
        let mut current = initial;
        for h in ordered {
            let section = format!("handover.{}", h.name);
            if h.time >= sim.end {
                return Err(problem(
                    &section,
                    "time",
                    format!("handover at {} is not before the end of the run ({})", h.time, sim.end),
                ));
            }
            if !has_ha {
                return Err(problem(&section, "target", "handovers need a node with role ha"));
            }
            let target = self.link(&h.target).filter(|l| self.is_access(l)).ok_or_else(|| {
                problem(&section, "target", format!("`{}` is not an access link of the mobile node", h.target))
            })?;
            if target.name == current.name {
                return Err(problem(
                    &section,
                    "target",
                    format!("the mobile node is already attached to `{}`", target.name),
                ));
            }
            let (from, to) = (current.spec.kind, target.spec.kind);
            let ok = match h.direction {
                Direction::TerrToSat => from.is_terrestrial() && to == NetworkKind::Sat,
                Direction::SatToTerr => from == NetworkKind::Sat && to.is_terrestrial(),
            };
            if !ok {
                return Err(problem(
                    &section,
                    "direction",
                    format!(
                        "{} does not match a move from {} (`{}`) to {} (`{}`)",
                        h.direction, from, current.name, to, target.name
                    ),
                ));
            }
            current = target;
        }
        Ok(())
    }

    /// Canonical text form; [`parse_scenario`] on it yields an equal scenario.
    pub fn to_canonical(&self) -> String {
        let s = &self.sim;
        let mut out = String::new();
        let _ = writeln!(out, "[sim]");
        let _ = writeln!(out, "name = {}", s.name);
        let _ = writeln!(out, "end = {}", s.end);
        let _ = writeln!(out, "seed = {}", s.seed);
        let _ = writeln!(out, "mode = {}", s.mode);
        let _ = writeln!(out, "mss = {}", s.mss);
        let _ = writeln!(out, "w_default = {}", s.w_default);
        let _ = writeln!(out, "sat_default_window = {}", s.sat_default_window);
        let _ = writeln!(out, "rcv_buffer = {}", s.rcv_buffer);
        let _ = writeln!(out, "initial_ssthresh = {}", s.initial_ssthresh);
        let _ = writeln!(out, "sat_cache = {}", s.sat_cache.render());
        let _ = writeln!(out, "terr_cache = {}", s.terr_cache.render());
        let _ = writeln!(out, "registration = {}", s.registration.as_str());
        if let Some(p) = &s.proxy_location {
            let _ = writeln!(out, "proxy_location = {p}");
        }
        let _ = writeln!(out, "initial = {}", s.initial);
        let _ = writeln!(out, "ack_pacing = {}", s.ack_pacing);
        let _ = writeln!(out, "ack_pacing_from = {}", s.ack_pacing_from);
        for n in &self.nodes {
            let _ = writeln!(out, "\n[node.{}]\nrole = {}", n.name, n.role.as_str());
        }
        for l in &self.links {
            let _ = writeln!(out, "\n[link.{}]", l.name);
            let _ = writeln!(out, "a = {}\nb = {}\nkind = {}", l.a, l.b, l.spec.kind);
            let _ = writeln!(out, "bandwidth = {}", l.spec.bandwidth * 8);
            let _ = writeln!(out, "delay = {}", l.spec.prop_delay);
            let _ = writeln!(out, "queue = {}", l.spec.queue_capacity);
            let _ = writeln!(out, "availability = {}", render_availability(&l.spec.availability));
            let _ = writeln!(out, "jitter = {}", l.spec.jitter);
        }
        for f in &self.flows {
            let _ = writeln!(out, "\n[flow.{}]", f.name);
            let _ = writeln!(out, "src = {}\ndst = {}\nstart = {}", f.src, f.dst, f.start);
            let _ = writeln!(out, "volume = {}", f.volume.map_or_else(|| "unlimited".to_string(), |v| v.to_string()));
            let _ = writeln!(out, "weight = {}", f.weight);
            if let Some(m) = f.min_share {
                let _ = writeln!(out, "min_share = {m}");
            }
        }
        for h in &self.handovers {
            let _ = writeln!(out, "\n[handover.{}]", h.name);
            let _ = writeln!(out, "time = {}\ndirection = {}\ntarget = {}", h.time, h.direction, h.target);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
[sim]
end = 5

[node.cn]
role = cn
[node.mn]
role = mn

[link.wlan]
a = cn
b = mn
kind = wlan
bandwidth = 10000000
delay = 0.01
queue = 32768

[flow.bulk]
src = cn
dst = mn
volume = 1000000
";

    fn expect_err(text: &str) -> String {
        match parse_scenario(text) {
            Err(SimError::Config(m)) => m,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_file_loads() {
        let s = parse_scenario(MINIMAL).unwrap();
        assert_eq!(s.links.len(), 1);
        assert_eq!(s.links[0].spec.bandwidth, 1_250_000);
        assert_eq!(s.links[0].spec.prop_delay, SimTime::from_millis(10));
        assert_eq!(s.sim.initial, "wlan");
        assert_eq!(s.sim.rcv_buffer, 131_072);
        assert_eq!(s.flows[0].volume, Some(1_000_000));
        assert!(s.handovers.is_empty());
    }

    #[test]
    fn canonical_form_round_trips() {
        let s = parse_scenario(MINIMAL).unwrap();
        let again = parse_scenario(&s.to_canonical()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn unknown_mode_lists_valid_modes() {
        let m = expect_err(&MINIMAL.replace("end = 5", "end = 5\nmode = fast"));
        assert!(m.contains("line 3"), "{m}");
        assert!(m.contains("baseline, proactive, reset-cwnd"), "{m}");
    }

    #[test]
    fn unknown_key_names_line_and_key() {
        let m = expect_err(&MINIMAL.replace("queue = 32768", "queue = 32768\ncolour = red"));
        assert!(m.contains("line 16") && m.contains("`colour`"), "{m}");
    }

    #[test]
    fn dangling_reference_points_at_its_line() {
        let m = expect_err(&MINIMAL.replace("src = cn", "src = nowhere"));
        assert!(m.contains("line 18") && m.contains("`src`") && m.contains("nowhere"), "{m}");
    }

    #[test]
    fn handover_after_end_is_rejected() {
        let text = "\
[sim]
end = 5
initial = wlan
[node.cn]
role = cn
[node.ha]
role = ha
[node.gw_w]
role = gateway
[node.gw_s]
role = gateway
[node.mn]
role = mn
[link.core]
a = cn
b = ha
kind = wired
bandwidth = 100000000
delay = 0.01
queue = 100000
[link.bh_w]
a = ha
b = gw_w
kind = wired
bandwidth = 100000000
delay = 0.005
queue = 100000
[link.bh_s]
a = ha
b = gw_s
kind = wired
bandwidth = 100000000
delay = 0.005
queue = 100000
[link.wlan]
a = gw_w
b = mn
kind = wlan
bandwidth = 10000000
delay = 0.01
queue = 32768
[link.sat]
a = gw_s
b = mn
kind = sat
bandwidth = 1000000
delay = 0.25
queue = 65536
[flow.f]
src = cn
dst = mn
[handover.1]
time = 6
direction = terr_to_sat
target = sat
";
        let m = expect_err(text);
        assert!(m.contains("`time`") && m.contains("line 53"), "{m}");
        let ok = parse_scenario(&text.replace("time = 6", "time = 2")).unwrap();
        assert_eq!(ok.handovers[0].time, SimTime::from_secs(2));
        let m = expect_err(&text.replace("time = 6", "time = 2").replace("terr_to_sat", "sat_to_terr"));
        assert!(m.contains("`direction`"), "{m}");
    }

    #[test]
    fn bandwidth_must_be_whole_bytes() {
        let m = expect_err(&MINIMAL.replace("10000000", "10000001"));
        assert!(m.contains("`bandwidth`"), "{m}");
    }

    #[test]
    fn availability_syntax() {
        let ivs = parse_availability("0-10, 12.5-inf").unwrap();
        assert_eq!(ivs.len(), 2);
        assert_eq!(ivs[1].end, SimTime::MAX);
        assert_eq!(render_availability(&ivs), "0.000000-10.000000, 12.500000-inf");
        assert!(parse_availability("5").is_none());
    }
}
