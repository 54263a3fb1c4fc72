//! Reno congestion control at the correspondent node.

use std::collections::BTreeMap;

use crate::simkernel::SimTime;
use crate::tcp::{TcpConfig, TcpError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    SlowStart,
    CongAvoid,
    FastRecovery,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::SlowStart => "SS",
            Phase::CongAvoid => "CA",
            Phase::FastRecovery => "FR",
        }
    }
}

/// A segment the sender wants on the wire.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TxSegment {
    pub seq: u64,
    pub len: u32,
    pub retransmit: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimerAction {
    Restart(SimTime),
    Stop,
    Keep,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SenderEvent {
    FastRetransmit,
    Timeout,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SenderOutput {
    pub sends: Vec<TxSegment>,
    pub timer: TimerAction,
    pub event: Option<SenderEvent>,
}

impl SenderOutput {
    fn keep() -> Self {
        SenderOutput { sends: Vec::new(), timer: TimerAction::Keep, event: None }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SenderStats {
    pub retransmits: u64,
    pub fast_retransmits: u64,
    pub timeouts: u64,
    pub bytes_sent: u64,
}

#[derive(Clone, Debug)]
pub struct TcpSenderState {
    pub mss: u64,
    pub cwnd: u64,
    pub ssthresh: u64,
    pub snd_una: u64,
    pub snd_nxt: u64,
    /// Highest sequence ever sent; `snd_nxt` falls back to `snd_una` after a timeout.
    pub snd_max: u64,
    pub peer_rwnd: u64,
    pub dupack_count: u32,
    pub srtt: Option<SimTime>,
    pub rttvar: SimTime,
    pub rto: SimTime,
    pub phase: Phase,
    pub recover: u64,
    pub retransmit_log: BTreeMap<u64, u32>,
    /// Total bytes to send; `None` is an unbounded bulk transfer.
    pub volume: Option<u64>,
    /// Transmission frozen by the cwnd-reset comparison policy.
    pub suspended: bool,
    pub stats: SenderStats,
    last_window_ack_seq: u64,
    timed: Option<(u64, SimTime)>,
    min_rto: SimTime,
    max_rto: SimTime,
}

impl TcpSenderState {
    pub fn new(cfg: &TcpConfig, initial_rwnd: u64, volume: Option<u64>) -> Self {
        TcpSenderState {
            mss: cfg.mss,
            cwnd: cfg.initial_window,
            ssthresh: cfg.initial_ssthresh.max(2 * cfg.mss),
            snd_una: 0,
            snd_nxt: 0,
            snd_max: 0,
            peer_rwnd: initial_rwnd,
            dupack_count: 0,
            srtt: None,
            rttvar: SimTime::ZERO,
            rto: cfg.initial_rto,
            phase: if cfg.initial_window < cfg.initial_ssthresh { Phase::SlowStart } else { Phase::CongAvoid },
            recover: 0,
            retransmit_log: BTreeMap::new(),
            volume,
            suspended: false,
            stats: SenderStats::default(),
            last_window_ack_seq: 0,
            timed: None,
            min_rto: cfg.min_rto,
            max_rto: cfg.max_rto,
        }
    }

    pub fn flight(&self) -> u64 {
        self.snd_nxt - self.snd_una
    }

    pub fn outstanding(&self) -> u64 {
        self.snd_max - self.snd_una
    }

    pub fn is_done(&self) -> bool {
        self.volume.is_some_and(|v| self.snd_una >= v)
    }

    /// Sends whatever the windows allow at flow start.
    pub fn start(&mut self, now: SimTime) -> SenderOutput {
        let sends = self.fill_window(now);
        let timer = if sends.is_empty() { TimerAction::Keep } else { TimerAction::Restart(self.rto) };
        SenderOutput { sends, timer, event: None }
    }

    pub fn on_ack(
        &mut self,
        ack: u64,
        rwnd: u64,
        ack_seq: u64,
        refresh: bool,
        now: SimTime,
    ) -> Result<SenderOutput, TcpError> {
        if ack > self.snd_max {
            return Err(TcpError::AckBeyondSent { ack, snd_max: self.snd_max });
        }
        if ack < self.snd_una || ack_seq <= self.last_window_ack_seq {
            // overtaken by a newer ACK
            return Ok(SenderOutput::keep());
        }
        let window_changed = rwnd != self.peer_rwnd;
        self.peer_rwnd = rwnd;
        self.last_window_ack_seq = ack_seq;
        let flight_before = self.flight();

        let mut out = SenderOutput::keep();
        if ack > self.snd_una {
            self.on_new_ack(ack, flight_before, now);
            out.timer = if self.snd_una < self.snd_max { TimerAction::Restart(self.rto) } else { TimerAction::Stop };
        } else if !refresh && !window_changed && self.snd_max > self.snd_una {
            self.dupack_count += 1;
            if self.phase == Phase::FastRecovery {
                self.cwnd += self.mss;
            } else if self.dupack_count == 3 {
                self.ssthresh = (flight_before / 2).max(2 * self.mss);
                self.recover = self.snd_max;
                self.cwnd = self.ssthresh + 3 * self.mss;
                self.phase = Phase::FastRecovery;
                self.stats.fast_retransmits += 1;
                out.event = Some(SenderEvent::FastRetransmit);
                if self.peer_rwnd > 0 {
                    let len = self.mss.min(self.snd_max - self.snd_una) as u32;
                    out.sends.push(self.retransmission(self.snd_una, len));
                }
            }
        }

        let before = self.flight();
        let new = self.fill_window(now);
        if before == 0 && !new.is_empty() {
            out.timer = TimerAction::Restart(self.rto);
        }
        out.sends.extend(new);
        Ok(out)
    }

    fn on_new_ack(&mut self, ack: u64, flight_before: u64, now: SimTime) {
        if let Some((end, sent_at)) = self.timed {
            if ack >= end {
                self.rtt_sample(now - sent_at);
                self.timed = None;
            }
        }
        self.snd_una = ack;
        if self.snd_nxt < ack {
            self.snd_nxt = ack;
        }
        self.dupack_count = 0;
        let cwnd_limited = flight_before + self.mss > self.cwnd;
        match self.phase {
            Phase::FastRecovery => {
                self.cwnd = self.ssthresh;
                self.phase = Phase::CongAvoid;
            }
            Phase::SlowStart => {
                if cwnd_limited {
                    self.cwnd += self.mss;
                }
                if self.cwnd >= self.ssthresh {
                    self.phase = Phase::CongAvoid;
                }
            }
            Phase::CongAvoid => {
                if cwnd_limited {
                    self.cwnd += (self.mss * self.mss / self.cwnd).max(1);
                }
            }
        }
    }

    fn rtt_sample(&mut self, r: SimTime) {
        match self.srtt {
            None => {
                self.srtt = Some(r);
                self.rttvar = SimTime::from_micros(r.as_micros() / 2);
            }
            Some(srtt) => {
                let diff = srtt.as_micros().abs_diff(r.as_micros());
                self.rttvar = SimTime::from_micros((3 * self.rttvar.as_micros() + diff) / 4);
                self.srtt = Some(SimTime::from_micros((7 * srtt.as_micros() + r.as_micros()) / 8));
            }
        }
        let srtt = self.srtt.unwrap_or(r);
        let var = self.rttvar.times(4).max(SimTime::from_micros(1));
        self.rto = (srtt + var).max(self.min_rto).min(self.max_rto);
    }

    /// Retransmission timeout for `snd_una`.
    pub fn on_rto(&mut self, now: SimTime) -> SenderOutput {
        if self.snd_una == self.snd_max {
            return SenderOutput { sends: Vec::new(), timer: TimerAction::Stop, event: None };
        }
        self.ssthresh = (self.flight() / 2).max(2 * self.mss);
        self.cwnd = self.mss;
        self.phase = Phase::SlowStart;
        self.dupack_count = 0;
        self.rto = self.rto.times(2).min(self.max_rto);
        self.snd_nxt = self.snd_una;
        self.recover = self.snd_max;
        self.timed = None;
        self.stats.timeouts += 1;
        let sends = self.fill_window(now);
        SenderOutput { sends, timer: TimerAction::Restart(self.rto), event: Some(SenderEvent::Timeout) }
    }

    /// Enters congestion avoidance at half the current window, as requested
    /// by the peer's handover engine.
    pub fn external_congestion_avoidance(&mut self) {
        self.ssthresh = (self.cwnd / 2).max(2 * self.mss);
        self.cwnd = self.ssthresh;
        self.phase = Phase::CongAvoid;
        self.dupack_count = 0;
    }

    pub fn suspend(&mut self) {
        self.suspended = true;
    }

    /// Resumes with `cwnd = 1·mss` and a new threshold, then sends.
    pub fn reset_for_new_path(&mut self, ssthresh: u64, now: SimTime) -> SenderOutput {
        self.suspended = false;
        self.cwnd = self.mss;
        self.ssthresh = ssthresh.max(2 * self.mss);
        self.phase = Phase::SlowStart;
        self.dupack_count = 0;
        let before = self.flight();
        let sends = self.fill_window(now);
        let timer = if before == 0 && !sends.is_empty() { TimerAction::Restart(self.rto) } else { TimerAction::Keep };
        SenderOutput { sends, timer, event: None }
    }

    fn retransmission(&mut self, seq: u64, len: u32) -> TxSegment {
        *self.retransmit_log.entry(seq).or_insert(0) += 1;
        self.stats.retransmits += 1;
        self.stats.bytes_sent += u64::from(len);
        self.timed = None;
        TxSegment { seq, len, retransmit: true }
    }

    fn fill_window(&mut self, now: SimTime) -> Vec<TxSegment> {
        let mut out = Vec::new();
        if self.suspended {
            return out;
        }
        let wnd = self.cwnd.min(self.peer_rwnd);
        let limit = self.volume.unwrap_or(u64::MAX);
        while self.snd_nxt < limit {
            let len = self.mss.min(limit - self.snd_nxt);
            if self.snd_nxt + len > self.snd_una + wnd {
                break;
            }
            let seq = self.snd_nxt;
            self.snd_nxt += len;
            assert!(self.flight() <= wnd + self.mss, "flight bound violated");
            if seq < self.snd_max {
                out.push(self.retransmission(seq, len as u32));
            } else {
                self.snd_max = self.snd_nxt;
                self.stats.bytes_sent += len;
                if self.timed.is_none() {
                    self.timed = Some((self.snd_nxt, now));
                }
                out.push(TxSegment { seq, len: len as u32, retransmit: false });
            }
        }
        out
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        if !(self.snd_una <= self.snd_nxt && self.snd_nxt <= self.snd_max) {
            return Err(format!(
                "sequence order broken: una={} nxt={} max={}",
                self.snd_una, self.snd_nxt, self.snd_max
            ));
        }
        if self.cwnd < self.mss {
            return Err(format!("cwnd {} below one mss", self.cwnd));
        }
        if self.ssthresh < 2 * self.mss {
            return Err(format!("ssthresh {} below two mss", self.ssthresh));
        }
        if self.phase != Phase::FastRecovery && (self.phase == Phase::SlowStart) != (self.cwnd < self.ssthresh) {
            return Err(format!(
                "phase {:?} inconsistent with cwnd {} ssthresh {}",
                self.phase, self.cwnd, self.ssthresh
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MSS: u64 = 1460;

    fn sender() -> TcpSenderState {
        TcpSenderState::new(&TcpConfig::default(), 1 << 30, None)
    }

    fn t(ms: u64) -> SimTime {
        SimTime::from_millis(ms)
    }

    #[test]
    fn slow_start_adds_one_mss_per_ack() {
        let mut s = sender();
        let out = s.start(t(0));
        assert_eq!(out.sends.len(), 2);
        assert_eq!(s.cwnd, 2920);
        let out = s.on_ack(1460, 1 << 30, 1, false, t(100)).unwrap();
        assert_eq!(s.cwnd, 4380);
        // one acked segment frees one slot, the extra mss adds another
        assert_eq!(out.sends.len(), 2);
        assert!(s.srtt.is_some());
    }

    fn fast_retransmit_setup() -> TcpSenderState {
        let mut s = sender();
        s.phase = Phase::CongAvoid;
        s.cwnd = 8 * MSS;
        s.ssthresh = 4 * MSS;
        s.start(t(0));
        assert_eq!(s.flight(), 11680);
        s
    }

    #[test]
    fn third_dupack_triggers_fast_retransmit() {
        let mut s = fast_retransmit_setup();
        let rwnd = 1 << 30;
        for i in 1..=2 {
            let out = s.on_ack(0, rwnd, i, false, t(10)).unwrap();
            assert!(out.sends.is_empty());
        }
        let out = s.on_ack(0, rwnd, 3, false, t(10)).unwrap();
        assert_eq!(s.ssthresh, 5840);
        assert_eq!(s.cwnd, 10220);
        assert_eq!(s.phase, Phase::FastRecovery);
        assert_eq!(out.sends, vec![TxSegment { seq: 0, len: 1460, retransmit: true }]);
        assert_eq!(out.event, Some(SenderEvent::FastRetransmit));
        // inflation then deflation on the new ack
        s.on_ack(0, rwnd, 4, false, t(11)).unwrap();
        assert_eq!(s.cwnd, 10220 + MSS);
        s.on_ack(11680, rwnd, 5, false, t(20)).unwrap();
        assert_eq!(s.cwnd, 5840);
        assert_eq!(s.phase, Phase::CongAvoid);
    }

    #[test]
    fn refresh_and_window_updates_are_not_duplicates() {
        let mut s = fast_retransmit_setup();
        let rwnd = 1 << 30;
        for i in 1..=5 {
            s.on_ack(0, rwnd, i, true, t(10)).unwrap();
        }
        assert_eq!(s.dupack_count, 0);
        s.on_ack(0, 20_000, 6, false, t(10)).unwrap();
        assert_eq!(s.dupack_count, 0);
    }

    #[test]
    fn zero_window_stalls_sender() {
        let mut s = sender();
        s.start(t(0));
        let out = s.on_ack(1460, 0, 1, false, t(50)).unwrap();
        assert_eq!(s.peer_rwnd, 0);
        assert!(out.sends.is_empty());
        let out = s.on_ack(2920, 0, 2, false, t(60)).unwrap();
        assert!(out.sends.is_empty());
        assert_eq!(out.timer, TimerAction::Stop);
        // reopening sends again
        let out = s.on_ack(2920, 2920, 3, false, t(70)).unwrap();
        assert_eq!(out.sends.len(), 2);
        assert_eq!(out.timer, TimerAction::Restart(s.rto));
    }

    #[test]
    fn stale_window_update_is_ignored() {
        let mut s = sender();
        s.start(t(0));
        s.on_ack(1460, 0, 5, false, t(10)).unwrap();
        // an older ACK overtaken on a slower path
        let out = s.on_ack(1460, 100_000, 4, false, t(20)).unwrap();
        assert_eq!(s.peer_rwnd, 0);
        assert!(out.sends.is_empty());
    }

    #[test]
    fn ack_beyond_sent_is_an_error() {
        let mut s = sender();
        s.start(t(0));
        assert_eq!(s.on_ack(10_000, 1000, 1, false, t(1)), Err(TcpError::AckBeyondSent { ack: 10_000, snd_max: 2920 }));
    }

    #[test]
    fn timeout_halves_and_collapses() {
        let mut s = sender();
        s.phase = Phase::CongAvoid;
        s.cwnd = 10 * MSS;
        s.ssthresh = 4 * MSS;
        s.start(t(0));
        assert_eq!(s.flight(), 10 * MSS);
        let out = s.on_rto(t(1000));
        assert_eq!(s.ssthresh, 5 * MSS);
        assert_eq!(s.cwnd, MSS);
        assert_eq!(s.phase, Phase::SlowStart);
        assert_eq!(out.sends, vec![TxSegment { seq: 0, len: 1460, retransmit: true }]);
    }

    #[test]
    fn timeout_backoff_doubles_and_caps() {
        let mut s = sender();
        s.start(t(0));
        assert_eq!(s.rto, SimTime::from_secs(1));
        s.on_rto(t(1000));
        assert_eq!(s.rto, SimTime::from_secs(2));
        s.on_rto(t(3000));
        assert_eq!(s.rto, SimTime::from_secs(4));
        for _ in 0..10 {
            s.on_rto(t(3000));
        }
        assert_eq!(s.rto, SimTime::from_secs(60));
    }

    #[test]
    fn timeout_without_outstanding_data_is_noop() {
        let mut s = sender();
        let cwnd = s.cwnd;
        let out = s.on_rto(t(1000));
        assert!(out.sends.is_empty());
        assert_eq!(out.timer, TimerAction::Stop);
        assert_eq!(s.cwnd, cwnd);
    }

    #[test]
    fn external_congestion_avoidance_rule() {
        let mut s = sender();
        s.cwnd = 20 * MSS;
        s.external_congestion_avoidance();
        assert_eq!((s.ssthresh, s.cwnd, s.phase), (10 * MSS, 10 * MSS, Phase::CongAvoid));

        s.cwnd = 2 * MSS;
        s.external_congestion_avoidance();
        assert_eq!((s.ssthresh, s.cwnd), (2 * MSS, 2 * MSS));

        s.cwnd = 8 * MSS;
        s.external_congestion_avoidance();
        assert_eq!((s.ssthresh, s.cwnd, s.phase), (4 * MSS, 4 * MSS, Phase::CongAvoid));
        assert!(s.check_invariants().is_ok());
    }

    #[test]
    fn karn_skips_retransmitted_samples() {
        let mut s = sender();
        s.start(t(0));
        s.on_rto(t(1000));
        assert!(s.srtt.is_none());
        s.on_ack(1460, 1 << 30, 1, false, t(1100)).unwrap();
        assert!(s.srtt.is_none());
    }

    #[test]
    fn volume_limits_transmission() {
        let mut s = TcpSenderState::new(&TcpConfig::default(), 1 << 20, Some(2000));
        let out = s.start(t(0));
        assert_eq!(
            out.sends,
            vec![
                TxSegment { seq: 0, len: 1460, retransmit: false },
                TxSegment { seq: 1460, len: 540, retransmit: false },
            ]
        );
        s.on_ack(2000, 1 << 20, 1, false, t(10)).unwrap();
        assert!(s.is_done());
    }
}
