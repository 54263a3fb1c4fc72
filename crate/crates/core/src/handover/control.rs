//! Per-flow advertised-window controller driven by ACK emission.

use crate::tcp::{AckOut, TcpReceiverState};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControlPhase {
    /// No stepping; the cap (if any) stays where it was set.
    Hold,
    /// Raising the window toward the boost target before leaving the satellite.
    Boost,
    /// Zero window until the satellite path has drained.
    Drain,
    /// Raising the window from zero on the new link.
    Ramp,
    /// Stepping past the ramp target until the cap can be dropped.
    Release,
}

#[derive(Clone, Copy, Debug)]
pub struct WindowControl {
    pub phase: ControlPhase,
    pub target: u64,
    pub step: u64,
    last_advertised: Option<u64>,
}

impl Default for WindowControl {
    fn default() -> Self {
        WindowControl { phase: ControlPhase::Hold, target: 0, step: 0, last_advertised: None }
    }
}

impl WindowControl {
    pub fn start(&mut self, phase: ControlPhase, target: u64, step: u64) {
        self.phase = phase;
        self.target = target;
        self.step = step;
    }

    /// Applies one step for an ACK about to leave and rewrites the ACK's
    /// window. Steps are taken from the last advertised window, so a single
    /// ACK never raises the window by more than `step`.
    pub fn on_emit(&mut self, receiver: &mut TcpReceiverState, ack: &mut AckOut) -> Result<(), String> {
        let stepping = matches!(self.phase, ControlPhase::Boost | ControlPhase::Ramp | ControlPhase::Release);
        if stepping {
            let base =
                self.last_advertised.unwrap_or_else(|| receiver.adv_policy_cap.unwrap_or(receiver.buffer_capacity));
            let next = (base + self.step).min(self.target);
            if next >= self.target {
                if self.phase == ControlPhase::Release && next >= receiver.buffer_capacity {
                    receiver.set_cap_silently(None);
                } else {
                    receiver.set_cap_silently(Some(next));
                }
                self.phase = ControlPhase::Hold;
            } else {
                receiver.set_cap_silently(Some(next));
            }
        }
        ack.rwnd = receiver.advertised_window();
        if stepping {
            if let Some(prev) = self.last_advertised {
                if ack.rwnd > prev + self.step {
                    return Err(format!("advertised window rose {prev} -> {} in one step of {}", ack.rwnd, self.step));
                }
            }
        }
        self.last_advertised = Some(ack.rwnd);
        Ok(())
    }

    /// Records a window the engine set directly.
    pub fn note_advertised(&mut self, rwnd: u64) {
        self.last_advertised = Some(rwnd);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tcp::AckKind;

    fn ack() -> AckOut {
        AckOut { ack: 0, rwnd: 0, ack_seq: 1, kind: AckKind::Cumulative }
    }

    #[test]
    fn boost_reaches_target_in_expected_steps() {
        let mut r = TcpReceiverState::new(200_000);
        r.set_cap_silently(Some(65_000));
        let mut c = WindowControl::default();
        c.note_advertised(65_000);
        c.start(ControlPhase::Boost, 130_000, 2920);
        let mut n = 0;
        let mut prev = 65_000;
        while c.phase == ControlPhase::Boost {
            let mut a = ack();
            c.on_emit(&mut r, &mut a).unwrap();
            assert!(a.rwnd - prev <= 2920);
            prev = a.rwnd;
            n += 1;
        }
        assert_eq!(n, 23);
        assert_eq!(prev, 130_000);
    }

    #[test]
    fn release_drops_the_cap_at_the_buffer() {
        let mut r = TcpReceiverState::new(10_000);
        r.set_cap_silently(Some(4_000));
        let mut c = WindowControl::default();
        c.note_advertised(4_000);
        c.start(ControlPhase::Release, 10_000, 2920);
        let mut seen = Vec::new();
        while c.phase == ControlPhase::Release {
            let mut a = ack();
            c.on_emit(&mut r, &mut a).unwrap();
            seen.push(a.rwnd);
        }
        assert_eq!(seen, vec![6920, 9840, 10_000]);
        assert_eq!(r.adv_policy_cap, None);
    }

    #[test]
    fn ramp_is_monotone() {
        let mut r = TcpReceiverState::new(200_000);
        r.set_cap_silently(Some(2920));
        let mut c = WindowControl::default();
        c.note_advertised(2920);
        c.start(ControlPhase::Ramp, 25_000, 2920);
        let mut seen = vec![2920];
        for _ in 0..20 {
            let mut a = ack();
            c.on_emit(&mut r, &mut a).unwrap();
            seen.push(a.rwnd);
        }
        assert!(seen.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*seen.last().unwrap(), 25_000);
    }
}
