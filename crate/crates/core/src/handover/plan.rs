//! Handover schedules computed when the mobile node detects an upcoming move.

use std::fmt;

use crate::handover::estimate::{compute_delta, compute_w_rec, sat_window_estimate, PathEstimateCache};
use crate::handover::HandoverError;
use crate::netmodel::{LinkSpec, NetworkKind, RttTable};
use crate::simkernel::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    TerrToSat,
    SatToTerr,
}

impl Direction {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "terr_to_sat" => Some(Direction::TerrToSat),
            "sat_to_terr" => Some(Direction::SatToTerr),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::TerrToSat => "terr_to_sat",
            Direction::SatToTerr => "sat_to_terr",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Timeline stamps filled in while the handover executes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Observed {
    /// CN receives the window advertisement.
    pub t_a1: Option<SimTime>,
    /// HA receives the last segment the CN sent under the old window.
    pub t_a2: Option<SimTime>,
    /// HA registers the new binding.
    pub t_r1: Option<SimTime>,
    /// Registrar receives the BUACK.
    pub t_r3: Option<SimTime>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HandoverPlan {
    pub direction: Direction,
    pub w_rec: u64,
    pub chain_violation: bool,
    pub delta: SimTime,
    /// Window advertisement (or boost start).
    pub t_a0: SimTime,
    /// Registration send.
    pub t_r0: SimTime,
    pub boost_target: u64,
    pub boost_step: u64,
    pub ramp_step: u64,
    pub ramp_target: u64,
    pub drain_timeout: SimTime,
    pub observed: Observed,
}

/// Static inputs the engine needs besides the cache and RTTs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EngineConfig {
    pub w_default: u64,
    pub sat_default_window: u64,
    pub mss: u64,
    pub rcv_buffer: u64,
}

/// Move from a terrestrial network onto the satellite: shrink the window
/// now, register `δ` later.
pub fn plan_terr_to_sat(
    cache: &PathEstimateCache,
    cfg: &EngineConfig,
    rtt: &RttTable,
    sat_link: &LinkSpec,
    t_detect: SimTime,
) -> Result<HandoverPlan, HandoverError> {
    let sat_win = sat_window_estimate(cache, cfg.sat_default_window);
    let choice = compute_w_rec(sat_win, cfg.w_default);
    let delta = compute_delta(rtt.rtt_mn_sat_cn, rtt.rtt_mn_sat_ha, rtt.rtt_mn_old_ha);
    let t_r0 = t_detect + delta;
    if !sat_link.is_available(t_r0) {
        return Err(HandoverError::Abort(format!("satellite link unavailable at registration time {t_r0}")));
    }
    Ok(HandoverPlan {
        direction: Direction::TerrToSat,
        w_rec: choice.w_rec.min(cfg.rcv_buffer),
        chain_violation: choice.chain_violation,
        delta,
        t_a0: t_detect,
        t_r0,
        boost_target: 0,
        boost_step: 0,
        ramp_step: 0,
        ramp_target: 0,
        drain_timeout: SimTime::ZERO,
        observed: Observed::default(),
    })
}

/// Move from the satellite onto a terrestrial network: boost, then close the
/// window, drain the satellite path and ramp up on the new link.
///
/// `delta` here is the longest the boost may run; execution happens earlier
/// if the boost target is reached first, and `t_r0` is then rewritten.
pub fn plan_sat_to_terr(
    cache: &PathEstimateCache,
    cfg: &EngineConfig,
    current_win: u64,
    terr_kind: NetworkKind,
    rtt: &RttTable,
    terr_link: &LinkSpec,
    t_detect: SimTime,
) -> Result<HandoverPlan, HandoverError> {
    if terr_link.next_available(t_detect).is_none() {
        return Err(HandoverError::Abort("terrestrial link never becomes available".into()));
    }
    let sat_bdp = sat_window_estimate(cache, cfg.sat_default_window);
    let step = 2 * cfg.mss;
    let terr_bdp = cache.bdp(terr_kind).unwrap_or(cfg.rcv_buffer);
    let delta = rtt.rtt_mn_sat_cn;
    Ok(HandoverPlan {
        direction: Direction::SatToTerr,
        w_rec: current_win,
        chain_violation: false,
        delta,
        t_a0: t_detect,
        t_r0: t_detect + delta,
        boost_target: (current_win + sat_bdp).min(cfg.rcv_buffer),
        boost_step: step,
        ramp_step: step,
        ramp_target: terr_bdp.min(cfg.rcv_buffer).max(step),
        drain_timeout: rtt.rtt_mn_sat_cn.times(2),
        observed: Observed::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ms(v: u64) -> SimTime {
        SimTime::from_millis(v)
    }

    fn sat_link() -> LinkSpec {
        LinkSpec::new(NetworkKind::Sat, 125_000, ms(250), 65_536)
    }

    fn rtts() -> RttTable {
        RttTable { rtt_mn_sat_cn: ms(520), rtt_mn_sat_ha: ms(550), rtt_mn_old_ha: ms(80) }
    }

    fn cache_with_sat(bdp: u64) -> PathEstimateCache {
        let mut c = PathEstimateCache::default();
        c.insert(NetworkKind::Sat, crate::handover::PathEstimate { bdp, rtt: ms(520), measured_at: SimTime::ZERO });
        c
    }

    fn cfg(w_default: u64) -> EngineConfig {
        EngineConfig { w_default, sat_default_window: 48_000, mss: 1460, rcv_buffer: 1 << 20 }
    }

    #[test]
    fn terr_to_sat_composition() {
        let p = plan_terr_to_sat(&cache_with_sat(65_000), &cfg(131_072), &rtts(), &sat_link(), SimTime::from_secs(10))
            .unwrap();
        assert_eq!(p.w_rec, 65_000);
        assert!(!p.chain_violation);
        assert_eq!(p.delta, ms(205));
        assert_eq!(p.t_a0, SimTime::from_secs(10));
        assert_eq!(p.t_r0, SimTime::from_micros(10_205_000));
        assert_eq!(p.t_r0, p.t_a0 + p.delta);
    }

    #[test]
    fn terr_to_sat_small_default_warns() {
        let p = plan_terr_to_sat(&cache_with_sat(65_000), &cfg(32_000), &rtts(), &sat_link(), SimTime::from_secs(10))
            .unwrap();
        assert_eq!(p.w_rec, 32_000);
        assert!(p.chain_violation);
    }

    #[test]
    fn terr_to_sat_without_cache_uses_fallback() {
        let p = plan_terr_to_sat(&PathEstimateCache::default(), &cfg(131_072), &rtts(), &sat_link(), SimTime::ZERO)
            .unwrap();
        assert_eq!(p.w_rec, 48_000);
    }

    #[test]
    fn terr_to_sat_aborts_without_coverage() {
        let dark = sat_link().with_availability(vec![crate::netmodel::Interval { start: SimTime::ZERO, end: ms(100) }]);
        let r = plan_terr_to_sat(&cache_with_sat(65_000), &cfg(131_072), &rtts(), &dark, SimTime::from_secs(1));
        assert!(matches!(r, Err(HandoverError::Abort(_))));
    }

    #[test]
    fn sat_to_terr_boost_arithmetic() {
        let wlan = LinkSpec::new(NetworkKind::Wlan, 1_250_000, ms(10), 32_768);
        let mut cache = cache_with_sat(65_000);
        cache.record(NetworkKind::Wlan, 1_250_000, ms(20), SimTime::ZERO).unwrap();
        let p =
            plan_sat_to_terr(&cache, &cfg(131_072), 65_000, NetworkKind::Wlan, &rtts(), &wlan, SimTime::from_secs(20))
                .unwrap();
        assert_eq!(p.boost_target, 130_000);
        assert_eq!(p.boost_step, 2920);
        assert_eq!((p.boost_target - 65_000).div_ceil(p.boost_step), 23);
        assert_eq!(p.ramp_target, 25_000);
        assert_eq!(p.drain_timeout, ms(1040));
        assert!(p.boost_step <= 2 * 1460);
    }
}
