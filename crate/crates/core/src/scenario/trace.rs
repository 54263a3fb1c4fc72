//! Event log: one line per event, `<time_s> <event> <node> k=v ...`.

use std::fmt::{Display, Write as _};

use crate::simkernel::SimTime;

#[derive(Debug, Default)]
pub struct Trace {
    enabled: bool,
    buf: String,
}

impl Trace {
    pub fn new(enabled: bool) -> Self {
        Trace { enabled, buf: String::new() }
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    /// Appends a line. `fields` are written as `k=v` in the order given.
    pub fn log(&mut self, at: SimTime, event: &str, node: &str, fields: &[(&str, &dyn Display)]) {
        if !self.enabled {
            return;
        }
        let _ = write!(self.buf, "{at} {event} {node}");
        for (k, v) in fields {
            let _ = write!(self.buf, " {k}={v}");
        }
        self.buf.push('\n');
    }

    pub fn into_string(self) -> String {
        self.buf
    }
}

/// One parsed trace line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceLine {
    pub at: SimTime,
    pub event: String,
    pub node: String,
    pub fields: Vec<(String, String)>,
}

impl TraceLine {
    pub fn parse(line: &str) -> Option<TraceLine> {
        let mut parts = line.split_whitespace();
        let at = SimTime::parse_secs(parts.next()?)?;
        let event = parts.next()?.to_string();
        let node = parts.next()?.to_string();
        let fields = parts
            .map(|p| p.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
            .collect::<Option<Vec<_>>>()?;
        Some(TraceLine { at, event, node, fields })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_u64(&self, key: &str) -> Option<u64> {
        self.get(key)?.parse().ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lines_round_trip() {
        let mut t = Trace::new(true);
        t.log(SimTime::from_millis(1500), "ack_rx", "cn", &[("flow", &"bulk"), ("cwnd", &2920u64)]);
        let s = t.into_string();
        assert_eq!(s, "1.500000 ack_rx cn flow=bulk cwnd=2920\n");
        let l = TraceLine::parse(s.trim_end()).unwrap();
        assert_eq!(l.get_u64("cwnd"), Some(2920));
        assert_eq!(l.node, "cn");
    }

    #[test]
    fn disabled_trace_is_empty() {
        let mut t = Trace::new(false);
        t.log(SimTime::ZERO, "x", "y", &[]);
        assert!(t.into_string().is_empty());
    }
}
