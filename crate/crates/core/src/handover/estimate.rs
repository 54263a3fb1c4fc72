use std::collections::BTreeMap;

use crate::handover::HandoverError;
use crate::netmodel::NetworkKind;
use crate::simkernel::SimTime;

/// Bandwidth-delay product in whole bytes, rounded down.
pub fn estimate_bdp(bandwidth: u64, rtt: SimTime) -> Result<u64, HandoverError> {
    if bandwidth == 0 {
        return Err(HandoverError::Config("bandwidth must be positive".into()));
    }
    if rtt == SimTime::ZERO {
        return Err(HandoverError::Config("rtt must be positive".into()));
    }
    Ok((u128::from(bandwidth) * u128::from(rtt.as_micros()) / 1_000_000) as u64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PathEstimate {
    pub bdp: u64,
    pub rtt: SimTime,
    pub measured_at: SimTime,
}

/// Last measured BDP per access-network kind.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PathEstimateCache {
    entries: BTreeMap<NetworkKind, PathEstimate>,
}

impl PathEstimateCache {
    pub fn record(
        &mut self,
        kind: NetworkKind,
        bandwidth: u64,
        rtt: SimTime,
        at: SimTime,
    ) -> Result<u64, HandoverError> {
        let bdp = estimate_bdp(bandwidth, rtt)?;
        self.entries.insert(kind, PathEstimate { bdp, rtt, measured_at: at });
        Ok(bdp)
    }

    /// Stores an externally supplied window estimate.
    pub fn insert(&mut self, kind: NetworkKind, estimate: PathEstimate) {
        self.entries.insert(kind, estimate);
    }

    pub fn get(&self, kind: NetworkKind) -> Option<&PathEstimate> {
        self.entries.get(&kind)
    }

    pub fn bdp(&self, kind: NetworkKind) -> Option<u64> {
        self.get(kind).map(|e| e.bdp)
    }
}

/// Window advertised ahead of a move onto the satellite.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowChoice {
    pub w_rec: u64,
    /// `W_Default > SATWin_max` does not hold for the inputs.
    pub chain_violation: bool,
}

/// `W_REC = min(SATWin_max, W_Default)`; flags the case where the satellite
/// estimate is not below the default window.
pub fn compute_w_rec(sat_win_max: u64, w_default: u64) -> WindowChoice {
    WindowChoice { w_rec: sat_win_max.min(w_default), chain_violation: sat_win_max >= w_default }
}

/// Satellite window estimate: the cached BDP, or the configured fallback
/// when the node has never measured the satellite path.
pub fn sat_window_estimate(cache: &PathEstimateCache, sat_default_window: u64) -> u64 {
    cache.bdp(NetworkKind::Sat).unwrap_or(sat_default_window)
}

/// Registration delay: the largest `δ` with
/// `δ ≤ RTT_sat_cn − (RTT_sat_ha + RTT_old_ha)/2`, clamped at zero.
pub fn compute_delta(rtt_mn_sat_cn: SimTime, rtt_mn_sat_ha: SimTime, rtt_mn_old_ha: SimTime) -> SimTime {
    let twice = 2 * i128::from(rtt_mn_sat_cn.as_micros())
        - i128::from(rtt_mn_sat_ha.as_micros())
        - i128::from(rtt_mn_old_ha.as_micros());
    if twice <= 0 {
        SimTime::ZERO
    } else {
        SimTime::from_micros((twice / 2) as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ms(v: u64) -> SimTime {
        SimTime::from_millis(v)
    }

    #[test]
    fn bdp_examples() {
        assert_eq!(estimate_bdp(125_000, ms(520)), Ok(65_000));
        assert_eq!(estimate_bdp(1_250_000, ms(20)), Ok(25_000));
        assert!(estimate_bdp(125_000, SimTime::ZERO).is_err());
        assert!(estimate_bdp(0, ms(10)).is_err());
    }

    #[test]
    fn w_rec_examples() {
        assert_eq!(compute_w_rec(32_000, 65_535), WindowChoice { w_rec: 32_000, chain_violation: false });
        assert_eq!(compute_w_rec(65_000, 65_000), WindowChoice { w_rec: 65_000, chain_violation: true });
        let empty = PathEstimateCache::default();
        assert_eq!(sat_window_estimate(&empty, 48_000), 48_000);
        let mut cache = PathEstimateCache::default();
        cache.record(NetworkKind::Sat, 125_000, ms(500), SimTime::ZERO).unwrap();
        assert_eq!(sat_window_estimate(&cache, 48_000), 62_500);
    }

    #[test]
    fn delta_examples() {
        assert_eq!(compute_delta(ms(600), ms(550), ms(80)), ms(285));
        assert_eq!(compute_delta(ms(520), ms(550), ms(80)), ms(205));
        assert_eq!(compute_delta(ms(500), ms(600), ms(400)), SimTime::ZERO);
        assert_eq!(compute_delta(ms(500), ms(500), ms(500)), SimTime::ZERO);
    }

    #[test]
    fn delta_half_microsecond_rounds_down() {
        let d = compute_delta(SimTime::from_micros(10), SimTime::from_micros(3), SimTime::from_micros(4));
        // 10 - 3.5 = 6.5 µs
        assert_eq!(d, SimTime::from_micros(6));
    }

    proptest! {
        #[test]
        fn delta_is_boundary_value(a in 0u64..2_000_000, b in 0u64..2_000_000, c in 0u64..2_000_000) {
            let d = compute_delta(SimTime::from_micros(a), SimTime::from_micros(b), SimTime::from_micros(c));
            let rhs2 = 2 * a as i128 - b as i128 - c as i128;
            if rhs2 >= 0 {
                // d ≤ rhs and d is within half a microsecond of it
                prop_assert!(2 * d.as_micros() as i128 <= rhs2);
                prop_assert!(rhs2 - 2 * d.as_micros() as i128 <= 1);
            } else {
                prop_assert_eq!(d, SimTime::ZERO);
            }
        }
    }
}
