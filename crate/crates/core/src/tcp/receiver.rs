//! Mobile-node receiver: reassembly, cumulative ACKs and an externally
//! steerable advertised window.

use std::collections::BTreeMap;

use crate::simkernel::SimTime;
use crate::tcp::TcpError;

/// Minimum spacing of state-refresh ACKs while duplicates are suppressed.
pub const REFRESH_INTERVAL: SimTime = SimTime::from_millis(100);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AckKind {
    Cumulative,
    Duplicate,
    Refresh,
    WindowUpdate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AckOut {
    pub ack: u64,
    pub rwnd: u64,
    pub ack_seq: u64,
    pub kind: AckKind,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Arrival {
    pub ack: Option<AckOut>,
    /// Bytes newly delivered in order.
    pub delivered: u64,
    /// Every byte of the segment was already held.
    pub already_held: bool,
    /// Rejected for lack of buffer space.
    pub dropped: bool,
}

#[derive(Clone, Debug)]
pub struct TcpReceiverState {
    pub rcv_nxt: u64,
    pub buffer_capacity: u64,
    /// `None` means unlimited.
    pub adv_policy_cap: Option<u64>,
    pub suppress_dupacks: bool,
    pub ack_delay: SimTime,
    out_of_order: BTreeMap<u64, u64>,
    ooo_bytes: u64,
    last_refresh: Option<SimTime>,
    next_ack_seq: u64,
}

impl TcpReceiverState {
    pub fn new(buffer_capacity: u64) -> Self {
        TcpReceiverState {
            rcv_nxt: 0,
            buffer_capacity,
            adv_policy_cap: None,
            suppress_dupacks: false,
            ack_delay: SimTime::ZERO,
            out_of_order: BTreeMap::new(),
            ooo_bytes: 0,
            last_refresh: None,
            next_ack_seq: 1,
        }
    }

    pub fn free_buffer(&self) -> u64 {
        self.buffer_capacity - self.ooo_bytes
    }

    pub fn advertised_window(&self) -> u64 {
        let free = self.free_buffer();
        self.adv_policy_cap.map_or(free, |cap| free.min(cap))
    }

    pub fn out_of_order_bytes(&self) -> u64 {
        self.ooo_bytes
    }

    fn holds(&self, seq: u64, end: u64) -> bool {
        if end <= self.rcv_nxt {
            return true;
        }
        let start = seq.max(self.rcv_nxt);
        self.out_of_order.range(..=start).next_back().is_some_and(|(&s, &e)| s <= start && e >= end)
    }

    fn emit(&mut self, kind: AckKind) -> AckOut {
        let ack_seq = self.next_ack_seq;
        self.next_ack_seq += 1;
        AckOut { ack: self.rcv_nxt, rwnd: self.advertised_window(), ack_seq, kind }
    }

    pub fn on_segment(&mut self, seq: u64, len: u32, now: SimTime) -> Arrival {
        let end = seq + u64::from(len);
        let mut arrival = Arrival { already_held: self.holds(seq, end), ..Arrival::default() };
        if end > self.rcv_nxt && end - self.rcv_nxt > self.buffer_capacity {
            arrival.dropped = true;
            return arrival;
        }
        if seq <= self.rcv_nxt && end > self.rcv_nxt {
            let before = self.rcv_nxt;
            self.rcv_nxt = end;
            self.absorb();
            arrival.delivered = self.rcv_nxt - before;
            arrival.ack = Some(self.emit(AckKind::Cumulative));
            return arrival;
        }
        if seq > self.rcv_nxt {
            self.insert_range(seq, end);
        }
        arrival.ack = if self.suppress_dupacks {
            let due = self.last_refresh.is_none_or(|t| now >= t + REFRESH_INTERVAL);
            if due {
                self.last_refresh = Some(now);
                Some(self.emit(AckKind::Refresh))
            } else {
                None
            }
        } else {
            Some(self.emit(AckKind::Duplicate))
        };
        arrival
    }

    fn insert_range(&mut self, mut start: u64, mut end: u64) {
        let overlapping: Vec<(u64, u64)> =
            self.out_of_order.range(..=end).filter(|(_, &e)| e >= start).map(|(&s, &e)| (s, e)).collect();
        for (s, e) in overlapping {
            self.out_of_order.remove(&s);
            self.ooo_bytes -= e - s;
            start = start.min(s);
            end = end.max(e);
        }
        self.out_of_order.insert(start, end);
        self.ooo_bytes += end - start;
    }

    fn absorb(&mut self) {
        while let Some((&s, &e)) = self.out_of_order.first_key_value() {
            if s > self.rcv_nxt {
                break;
            }
            self.out_of_order.remove(&s);
            self.ooo_bytes -= e - s;
            self.rcv_nxt = self.rcv_nxt.max(e);
        }
    }

    /// Caps the advertised window; returns a window-update ACK when the cap changed.
    pub fn set_window_policy(&mut self, cap: Option<u64>) -> Result<Option<AckOut>, TcpError> {
        if let Some(c) = cap {
            if c > self.buffer_capacity {
                return Err(TcpError::CapExceedsBuffer { cap: c, buffer: self.buffer_capacity });
            }
        }
        if cap == self.adv_policy_cap {
            return Ok(None);
        }
        self.adv_policy_cap = cap;
        Ok(Some(self.emit(AckKind::WindowUpdate)))
    }

    /// Changes the cap without emitting an ACK; the next ACK carries it.
    pub fn set_cap_silently(&mut self, cap: Option<u64>) {
        self.adv_policy_cap = cap.map(|c| c.min(self.buffer_capacity));
    }

    /// Emits an ACK carrying the current state.
    pub fn window_update(&mut self) -> AckOut {
        self.emit(AckKind::WindowUpdate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(ms: u64) -> SimTime {
        SimTime::from_millis(ms)
    }

    #[test]
    fn in_order_advances() {
        let mut r = TcpReceiverState::new(64_000);
        let a = r.on_segment(0, 1460, t(0));
        assert_eq!(r.rcv_nxt, 1460);
        assert_eq!(a.delivered, 1460);
        let ack = a.ack.unwrap();
        assert_eq!((ack.ack, ack.kind, ack.rwnd), (1460, AckKind::Cumulative, 64_000));
    }

    #[test]
    fn out_of_order_produces_duplicate() {
        let mut r = TcpReceiverState::new(64_000);
        let a = r.on_segment(1460, 1460, t(0));
        assert_eq!(r.rcv_nxt, 0);
        let ack = a.ack.unwrap();
        assert_eq!((ack.ack, ack.kind), (0, AckKind::Duplicate));
        assert_eq!(ack.rwnd, 64_000 - 1460);
        // filling the hole absorbs the buffered range
        let a = r.on_segment(0, 1460, t(1));
        assert_eq!(r.rcv_nxt, 2920);
        assert_eq!(a.delivered, 2920);
        assert_eq!(r.out_of_order_bytes(), 0);
    }

    #[test]
    fn suppression_withholds_duplicates() {
        let mut r = TcpReceiverState::new(64_000);
        r.suppress_dupacks = true;
        // first out-of-order arrival may carry a refresh, later ones within 100 ms do not
        let a = r.on_segment(1460, 1460, t(0));
        assert_eq!(a.ack.map(|a| a.kind), Some(AckKind::Refresh));
        for i in 2..6 {
            let a = r.on_segment(1460 * i, 1460, t(10 * i));
            assert!(a.ack.is_none());
        }
        let a = r.on_segment(1460 * 7, 1460, t(100));
        assert_eq!(a.ack.map(|a| a.kind), Some(AckKind::Refresh));
        assert_eq!(a.ack.unwrap().ack, 0);
    }

    #[test]
    fn already_held_detection() {
        let mut r = TcpReceiverState::new(64_000);
        r.on_segment(0, 1460, t(0));
        r.on_segment(2920, 1460, t(1));
        assert!(r.on_segment(0, 1460, t(2)).already_held);
        assert!(r.on_segment(2920, 1460, t(3)).already_held);
        assert!(!r.on_segment(1460, 1460, t(4)).already_held);
    }

    #[test]
    fn beyond_buffer_is_dropped() {
        let mut r = TcpReceiverState::new(4000);
        let a = r.on_segment(4000, 1460, t(0));
        assert!(a.dropped);
        assert!(a.ack.is_none());
        assert_eq!(r.out_of_order_bytes(), 0);
    }

    #[test]
    fn window_policy() {
        let mut r = TcpReceiverState::new(64_000);
        let up = r.set_window_policy(Some(32_000)).unwrap().unwrap();
        assert_eq!((up.rwnd, up.kind), (32_000, AckKind::WindowUpdate));
        assert_eq!(r.on_segment(0, 1000, t(0)).ack.unwrap().rwnd, 32_000);
        assert_eq!(r.set_window_policy(Some(32_000)).unwrap(), None);

        let up = r.set_window_policy(Some(0)).unwrap().unwrap();
        assert_eq!(up.rwnd, 0);

        let up = r.set_window_policy(None).unwrap().unwrap();
        assert_eq!(up.rwnd, 64_000);

        assert_eq!(r.set_window_policy(Some(70_000)), Err(TcpError::CapExceedsBuffer { cap: 70_000, buffer: 64_000 }));
    }

    #[test]
    fn ack_seq_increases() {
        let mut r = TcpReceiverState::new(64_000);
        let a = r.on_segment(0, 100, t(0)).ack.unwrap();
        let b = r.on_segment(100, 100, t(0)).ack.unwrap();
        assert!(b.ack_seq > a.ack_seq);
    }
}
