//! Proportional split of a window budget across concurrent flows.

use std::collections::BTreeMap;

use crate::handover::HandoverError;
use crate::netmodel::FlowId;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlowDemand {
    pub flow: FlowId,
    /// Relative weight, > 0.
    pub requirement: u64,
    pub min_share: u64,
}

/// Splits `capacity` bytes in proportion to each flow's requirement.
///
/// Flows whose proportional share falls below their `min_share` are pinned
/// at the minimum and the rest is re-split among the others. Shares are
/// floored; the few bytes lost to flooring go one at a time to the flows
/// with the largest fractional remainder (ties: lower flow id first), so the
/// result always sums to `capacity`.
pub fn allocate_flow_windows(demands: &[FlowDemand], capacity: u64) -> Result<BTreeMap<FlowId, u64>, HandoverError> {
    if demands.is_empty() {
        return Ok(BTreeMap::new());
    }
    if let Some(d) = demands.iter().find(|d| d.requirement == 0) {
        return Err(HandoverError::Config(format!("flow {} has zero requirement", d.flow.0)));
    }
    let min_total: u64 = demands.iter().map(|d| d.min_share).sum();
    if capacity < min_total {
        return Err(HandoverError::Config(format!(
            "window capacity {capacity} is below the sum of minimum shares {min_total}"
        )));
    }

    let mut pinned = vec![false; demands.len()];
    let (free, weight_sum) = loop {
        let free: u64 =
            capacity - demands.iter().zip(&pinned).filter(|(_, p)| **p).map(|(d, _)| d.min_share).sum::<u64>();
        let weight_sum: u128 =
            demands.iter().zip(&pinned).filter(|(_, p)| !**p).map(|(d, _)| u128::from(d.requirement)).sum();
        let mut changed = false;
        for (i, d) in demands.iter().enumerate() {
            if !pinned[i] && u128::from(free) * u128::from(d.requirement) < u128::from(d.min_share) * weight_sum {
                pinned[i] = true;
                changed = true;
            }
        }
        if !changed {
            break (free, weight_sum);
        }
    };

    let mut alloc: Vec<u64> = Vec::with_capacity(demands.len());
    let mut remainders: Vec<(u128, FlowId, usize)> = Vec::new();
    for (i, d) in demands.iter().enumerate() {
        if pinned[i] {
            alloc.push(d.min_share);
        } else {
            let num = u128::from(free) * u128::from(d.requirement);
            alloc.push((num / weight_sum) as u64);
            remainders.push((num % weight_sum, d.flow, i));
        }
    }
    let mut leftover = capacity - alloc.iter().sum::<u64>();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, _, i) in remainders.iter().cycle() {
        if leftover == 0 {
            break;
        }
        alloc[i] += 1;
        leftover -= 1;
    }

    Ok(demands.iter().zip(alloc).map(|(d, a)| (d.flow, a)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demand(id: u32, req: u64) -> FlowDemand {
        FlowDemand { flow: FlowId(id), requirement: req, min_share: 0 }
    }

    #[test]
    fn exact_proportionality() {
        let a = allocate_flow_windows(&[demand(0, 2), demand(1, 1)], 60_000).unwrap();
        assert_eq!(a[&FlowId(0)], 40_000);
        assert_eq!(a[&FlowId(1)], 20_000);
    }

    #[test]
    fn single_flow_takes_all() {
        let a = allocate_flow_windows(&[demand(7, 3)], 12_345).unwrap();
        assert_eq!(a[&FlowId(7)], 12_345);
    }

    #[test]
    fn thirds() {
        let a = allocate_flow_windows(&[demand(0, 1), demand(1, 1), demand(2, 1)], 10_000).unwrap();
        assert_eq!(a.values().sum::<u64>(), 10_000);
        for v in a.values() {
            assert!(v.abs_diff(3333) <= 1460);
        }
        // tie on remainder: lowest id gets the spare byte
        assert_eq!(a[&FlowId(0)], 3334);
    }

    #[test]
    fn min_share_pins_small_flows() {
        let d = [
            FlowDemand { flow: FlowId(0), requirement: 1, min_share: 5_000 },
            FlowDemand { flow: FlowId(1), requirement: 9, min_share: 0 },
        ];
        let a = allocate_flow_windows(&d, 20_000).unwrap();
        assert_eq!(a[&FlowId(0)], 5_000);
        assert_eq!(a[&FlowId(1)], 15_000);
    }

    #[test]
    fn capacity_below_minimums_is_rejected() {
        let d = [FlowDemand { flow: FlowId(0), requirement: 1, min_share: 5_000 }];
        assert!(allocate_flow_windows(&d, 4_000).is_err());
        assert!(allocate_flow_windows(&[demand(0, 0)], 4_000).is_err());
    }
}
