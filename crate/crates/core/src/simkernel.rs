//! Deterministic discrete-event kernel.
//!
//! Time is kept as an integer count of microseconds, and simultaneous events
//! are ordered by insertion. Both choices make a run reproducible bit for bit
//! given the same scenario and seed.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Simulated time with exact microsecond resolution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1e3
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    pub fn checked_sub(self, rhs: SimTime) -> Option<SimTime> {
        self.0.checked_sub(rhs.0).map(SimTime)
    }

    pub fn times(self, k: u64) -> SimTime {
        SimTime(self.0 * k)
    }

    /// Parses a non-negative decimal number of seconds (`"0.25"`, `"10"`).
    /// More than six fractional digits is rejected rather than rounded.
    pub fn parse_secs(s: &str) -> Option<SimTime> {
        let s = s.trim();
        let (int, frac) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if int.is_empty() && frac.is_empty() {
            return None;
        }
        if !int.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
        if frac.len() > 6 {
            return None;
        }
        let whole: u64 = if int.is_empty() { 0 } else { int.parse().ok()? };
        let mut micros: u64 = 0;
        if !frac.is_empty() {
            let padded = format!("{frac:0<6}");
            micros = padded.parse().ok()?;
        }
        whole.checked_mul(1_000_000)?.checked_add(micros).map(SimTime)
    }
}

impl fmt::Display for SimTime {
    /// Decimal seconds with all six fractional digits, e.g. `10.205000`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

/// Handle for a scheduled event; doubles as its position in the queue.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId {
    fire_at: SimTime,
    seqno: u64,
}

impl EventId {
    pub fn fire_at(&self) -> SimTime {
        self.fire_at
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KernelError {
    #[error("event scheduled in the past: at {at}, clock is {now}")]
    ScheduleInPast { at: SimTime, now: SimTime },
}

/// Event queue, clock and random source for one simulation instance.
pub struct Kernel<E> {
    now: SimTime,
    next_seqno: u64,
    pending: BTreeMap<EventId, E>,
    rng: ChaCha8Rng,
}

impl<E> Kernel<E> {
    pub fn new(seed: u64) -> Self {
        Kernel { now: SimTime::ZERO, next_seqno: 0, pending: BTreeMap::new(), rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Iterates pending events in firing order.
    pub fn pending(&self) -> impl Iterator<Item = (&EventId, &E)> {
        self.pending.iter()
    }

    pub fn schedule(&mut self, fire_at: SimTime, event: E) -> Result<EventId, KernelError> {
        if fire_at < self.now {
            return Err(KernelError::ScheduleInPast { at: fire_at, now: self.now });
        }
        let id = EventId { fire_at, seqno: self.next_seqno };
        self.next_seqno += 1;
        self.pending.insert(id, event);
        Ok(id)
    }

    pub fn schedule_in(&mut self, delay: SimTime, event: E) -> EventId {
        let at = self.now + delay;
        // a non-negative delay can never land in the past
        self.schedule(at, event).expect("relative schedule")
    }

    pub fn cancel(&mut self, id: EventId) -> bool {
        self.pending.remove(&id).is_some()
    }

    /// Removes and returns the next event if it fires no later than `limit`,
    /// advancing the clock to its firing time.
    pub fn pop_until(&mut self, limit: SimTime) -> Option<(EventId, E)> {
        let (&id, _) = self.pending.first_key_value()?;
        if id.fire_at > limit {
            return None;
        }
        let (id, ev) = self.pending.pop_first()?;
        debug_assert!(id.fire_at >= self.now);
        self.now = id.fire_at;
        Some((id, ev))
    }

    /// Processes every event with `fire_at <= t_end`, including events the
    /// handler schedules along the way. Returns the number of events run.
    pub fn run_until<F, Err>(&mut self, t_end: SimTime, mut handler: F) -> Result<u64, Err>
    where
        F: FnMut(&mut Kernel<E>, E) -> Result<(), Err>,
    {
        let mut steps = 0;
        while let Some((_, ev)) = self.pop_until(t_end) {
            handler(self, ev)?;
            steps += 1;
        }
        if self.now < t_end {
            self.now = t_end;
        }
        Ok(steps)
    }
}
