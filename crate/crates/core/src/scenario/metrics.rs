//! Run results and the metrics CSV.

use serde::Serialize;

use crate::handover::{Direction, HandoverPlan};
use crate::scenario::{Mode, SimError};
use crate::simkernel::SimTime;

/// Column order of the metrics CSV. Stable across releases.
pub const CSV_COLUMNS: [&str; 18] = [
    "scenario",
    "mode",
    "seed",
    "flow_id",
    "goodput_bps",
    "retransmits",
    "spurious_retransmits",
    "rto_count",
    "drops_old_path",
    "drops_new_path",
    "handover_gap_ms",
    "t_a0",
    "t_a1",
    "t_a2",
    "t_r0",
    "t_r1",
    "t_r3",
    "old_path_enqueues_after_tr1",
];

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FlowMetrics {
    pub name: String,
    /// In-order bytes delivered, times eight, per second of flow lifetime.
    pub goodput_bps: u64,
    pub bytes_in_order: u64,
    pub retransmits: u64,
    pub fast_retransmits: u64,
    pub spurious_retransmits: u64,
    pub rto_count: u64,
    /// Payload bytes of every DATA transmission, retransmissions included.
    pub bytes_sent: u64,
    /// Payload bytes that reached the mobile node.
    pub bytes_delivered: u64,
    pub bytes_dropped: u64,
    pub bytes_in_flight_at_end: u64,
    /// DATA drops on the old / new downlink beyond the home agent, first handover.
    pub drops_old_path: u64,
    pub drops_new_path: u64,
    pub handover_gap: Option<SimTime>,
    pub t_a1: Option<SimTime>,
    pub t_a2: Option<SimTime>,
    pub rto_times: Vec<SimTime>,
    pub fast_retransmit_times: Vec<SimTime>,
    /// Largest rise between consecutive advertised windows after the first
    /// handover was detected.
    pub max_window_increase: u64,
}

impl FlowMetrics {
    /// `bytes_sent = delivered + dropped + in flight`.
    pub fn conserved(&self) -> bool {
        self.bytes_sent == self.bytes_delivered + self.bytes_dropped + self.bytes_in_flight_at_end
    }

    /// RTOs plus fast retransmits in `[from, to)`.
    pub fn loss_events_between(&self, from: SimTime, to: SimTime) -> usize {
        self.rto_times.iter().chain(&self.fast_retransmit_times).filter(|&&t| t >= from && t < to).count()
    }

    pub fn rtos_between(&self, from: SimTime, to: SimTime) -> usize {
        self.rto_times.iter().filter(|&&t| t >= from && t < to).count()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HandoverMetrics {
    pub name: String,
    pub direction: Direction,
    pub from: String,
    pub to: String,
    pub t_detect: SimTime,
    pub plan: Option<HandoverPlan>,
    pub aborted: Option<String>,
    pub t_a0: Option<SimTime>,
    pub t_r0: Option<SimTime>,
    pub t_r1: Option<SimTime>,
    pub t_r3: Option<SimTime>,
    pub old_path_enqueues_after_tr1: u64,
    pub drain_timed_out: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct QueueMetrics {
    /// `a->b`.
    pub channel: String,
    pub link: String,
    pub overflow_drops: u64,
    pub no_coverage_drops: u64,
    pub peak_occupancy: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunMetrics {
    pub scenario: String,
    pub mode: Mode,
    pub seed: u64,
    pub flows: Vec<FlowMetrics>,
    pub handovers: Vec<HandoverMetrics>,
    pub queues: Vec<QueueMetrics>,
    pub no_binding_drops: u64,
    pub events: u64,
}

impl RunMetrics {
    pub fn queue(&self, channel: &str) -> Option<&QueueMetrics> {
        self.queues.iter().find(|q| q.channel == channel)
    }

    pub fn flow(&self, name: &str) -> Option<&FlowMetrics> {
        self.flows.iter().find(|f| f.name == name)
    }
}

#[derive(Serialize)]
struct Row<'a> {
    scenario: &'a str,
    mode: &'a str,
    seed: u64,
    flow_id: &'a str,
    goodput_bps: u64,
    retransmits: u64,
    spurious_retransmits: u64,
    rto_count: u64,
    drops_old_path: u64,
    drops_new_path: u64,
    handover_gap_ms: String,
    t_a0: String,
    t_a1: String,
    t_a2: String,
    t_r0: String,
    t_r1: String,
    t_r3: String,
    old_path_enqueues_after_tr1: String,
}

fn stamp(t: Option<SimTime>) -> String {
    t.map(|t| t.to_string()).unwrap_or_default()
}

/// Writes one row per flow of each run. Timeline columns describe the
/// run's first handover and are empty when it has none.
pub fn write_csv<W: std::io::Write>(out: W, runs: &[RunMetrics]) -> Result<(), SimError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let io = |e: csv::Error| SimError::Output(e.to_string());
    w.write_record(CSV_COLUMNS).map_err(io)?;
    for run in runs {
        let ho = run.handovers.first();
        for f in &run.flows {
            let row = Row {
                scenario: &run.scenario,
                mode: run.mode.as_str(),
                seed: run.seed,
                flow_id: &f.name,
                goodput_bps: f.goodput_bps,
                retransmits: f.retransmits,
                spurious_retransmits: f.spurious_retransmits,
                rto_count: f.rto_count,
                drops_old_path: f.drops_old_path,
                drops_new_path: f.drops_new_path,
                handover_gap_ms: f
                    .handover_gap
                    .map(|g| format!("{}.{:03}", g.as_micros() / 1000, g.as_micros() % 1000))
                    .unwrap_or_default(),
                t_a0: stamp(ho.and_then(|h| h.t_a0)),
                t_a1: stamp(f.t_a1),
                t_a2: stamp(f.t_a2),
                t_r0: stamp(ho.and_then(|h| h.t_r0)),
                t_r1: stamp(ho.and_then(|h| h.t_r1)),
                t_r3: stamp(ho.and_then(|h| h.t_r3)),
                old_path_enqueues_after_tr1: ho
                    .filter(|h| h.t_r1.is_some())
                    .map(|h| h.old_path_enqueues_after_tr1.to_string())
                    .unwrap_or_default(),
            };
            w.serialize(row).map_err(io)?;
        }
    }
    w.flush().map_err(|e| SimError::Output(e.to_string()))?;
    Ok(())
}

pub fn csv_string(runs: &[RunMetrics]) -> Result<String, SimError> {
    let mut buf = Vec::new();
    write_csv(&mut buf, runs)?;
    String::from_utf8(buf).map_err(|e| SimError::Output(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(mode: Mode) -> RunMetrics {
        RunMetrics {
            scenario: "s".into(),
            mode,
            seed: 3,
            flows: vec![FlowMetrics { name: "bulk".into(), goodput_bps: 800, ..FlowMetrics::default() }],
            handovers: Vec::new(),
            queues: Vec::new(),
            no_binding_drops: 0,
            events: 0,
        }
    }

    #[test]
    fn header_and_rows() {
        let s = csv_string(&[run(Mode::Baseline), run(Mode::Proactive)]).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], CSV_COLUMNS.join(","));
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "s,baseline,3,bulk,800,0,0,0,0,0,,,,,,,,");
        assert!(lines[2].starts_with("s,proactive,3,"));
    }

    #[test]
    fn conservation_check() {
        let f = FlowMetrics {
            bytes_sent: 10,
            bytes_delivered: 6,
            bytes_dropped: 3,
            bytes_in_flight_at_end: 1,
            ..FlowMetrics::default()
        };
        assert!(f.conserved());
    }
}
