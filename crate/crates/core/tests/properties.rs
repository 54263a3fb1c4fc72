//! Property tests for the invariants of each module.

use std::collections::{BTreeSet, VecDeque};
use std::convert::Infallible;

use proptest::prelude::*;

use handover_sim::handover::{
    allocate_flow_windows, compute_delta, compute_w_rec, ControlPhase, FlowDemand, WindowControl,
};
use handover_sim::netmodel::{Channel, FlowId, LinkSpec, NetworkKind, Transmit};
use handover_sim::scenario::parse_scenario;
use handover_sim::simkernel::Kernel;
use handover_sim::tcp::{AckKind, AckOut, TcpConfig, TcpReceiverState, TcpSenderState};
use handover_sim::SimTime;

proptest! {
    #[test]
    fn kernel_clock_is_monotone_and_cancelled_events_never_run(
        times in prop::collection::vec(0u64..1_000, 1..60),
        cancel_mask in prop::collection::vec(any::<bool>(), 60),
        chain in 0u64..50,
    ) {
        let mut k: Kernel<usize> = Kernel::new(0);
        let ids: Vec<_> = times.iter().enumerate().map(|(i, &t)| k.schedule(SimTime::from_micros(t), i).unwrap()).collect();
        let mut cancelled = BTreeSet::new();
        for (i, id) in ids.iter().enumerate() {
            if cancel_mask[i] && k.cancel(*id) {
                cancelled.insert(i);
            }
        }
        let mut seen: Vec<(SimTime, usize)> = Vec::new();
        k.run_until(SimTime::MAX, |k, e| {
            seen.push((k.now(), e));
            // events scheduled from handlers keep the clock monotone too
            if e < times.len() && (e as u64).is_multiple_of(7) {
                k.schedule_in(SimTime::from_micros(chain), 1_000 + e);
            }
            Ok::<_, Infallible>(())
        }).unwrap();
        prop_assert!(seen.windows(2).all(|w| w[0].0 <= w[1].0));
        prop_assert!(seen.iter().all(|(_, e)| !cancelled.contains(e)));
        let ran: BTreeSet<usize> = seen.iter().map(|s| s.1).filter(|&e| e < 1_000).collect();
        prop_assert_eq!(ran.len() + cancelled.len(), times.len());
        // equal timestamps fire in insertion order
        for w in seen.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 < 1_000 && w[1].1 < 1_000 {
                prop_assert!(w[0].1 < w[1].1);
            }
        }
    }

    #[test]
    fn channel_is_fifo_and_bounded(
        pkts in prop::collection::vec((40u64..1_500, 0u64..3_000, 0u64..2_000), 1..200),
        capacity in 1_500u64..20_000,
    ) {
        let spec = LinkSpec::new(NetworkKind::Wlan, 125_000, SimTime::from_millis(10), capacity);
        let mut ch = Channel::new(&spec);
        let mut now = SimTime::ZERO;
        let mut last = SimTime::ZERO;
        for (size, gap, jitter) in pkts {
            now += SimTime::from_micros(gap);
            if let Transmit::Arrives(at) = ch.transmit(&spec, size, now, SimTime::from_micros(jitter)) {
                prop_assert!(at >= last, "reordered: {at} before {last}");
                prop_assert!(at >= now + spec.prop_delay);
                last = at;
            }
            prop_assert!(ch.queue.occupancy() <= capacity);
        }
    }

    #[test]
    fn w_rec_chain_holds(sat in 1u64..10_000_000, w_default in 1u64..10_000_000) {
        let c = compute_w_rec(sat, w_default);
        if c.chain_violation {
            prop_assert!(sat >= w_default);
        } else {
            prop_assert!(w_default > sat && sat >= c.w_rec);
        }
    }

    #[test]
    fn delta_sits_on_the_boundary(a in 0u64..5_000_000, b in 0u64..5_000_000, c in 0u64..5_000_000) {
        let d = compute_delta(SimTime::from_micros(a), SimTime::from_micros(b), SimTime::from_micros(c)).as_micros();
        let twice_rhs = 2 * i128::from(a) - i128::from(b) - i128::from(c);
        if twice_rhs >= 0 {
            prop_assert!(2 * i128::from(d) <= twice_rhs);
            prop_assert!(2 * i128::from(d) + 2 > twice_rhs);
        } else {
            prop_assert_eq!(d, 0);
        }
    }

    #[test]
    fn allocation_is_scale_invariant_and_exhaustive(
        reqs in prop::collection::vec(1u64..1_000, 1..8),
        extra in 0u64..1_000_000,
        scale in 2u64..1_000,
        min_share in 0u64..3_000,
    ) {
        let demands = |k: u64| -> Vec<FlowDemand> {
            reqs.iter().enumerate().map(|(i, &r)| FlowDemand { flow: FlowId(i as u32), requirement: r * k, min_share }).collect()
        };
        let capacity = min_share * reqs.len() as u64 + extra;
        let a = allocate_flow_windows(&demands(1), capacity).unwrap();
        prop_assert_eq!(a.values().sum::<u64>(), capacity);
        prop_assert!(a.values().all(|&v| v >= min_share));
        prop_assert_eq!(a, allocate_flow_windows(&demands(scale), capacity).unwrap());
    }

    #[test]
    fn boost_and_ramp_never_rise_more_than_one_step(
        start in 0u64..100_000,
        target in 0u64..200_000,
        buffer_extra in 0u64..100_000,
        step in 1u64..5_000,
        ramp in any::<bool>(),
    ) {
        let buffer = start.max(target) + buffer_extra + 1;
        let mut r = TcpReceiverState::new(buffer);
        r.set_cap_silently(Some(start));
        let mut c = WindowControl::default();
        c.note_advertised(start);
        let phase = if ramp { ControlPhase::Ramp } else { ControlPhase::Boost };
        c.start(phase, target, step);
        let mut prev = start;
        for _ in 0..=target.abs_diff(start) / step + 1 {
            if c.phase != phase {
                break;
            }
            let mut a = AckOut { ack: 0, rwnd: 0, ack_seq: 1, kind: AckKind::Cumulative };
            c.on_emit(&mut r, &mut a).unwrap();
            prop_assert!(a.rwnd <= prev + step);
            if target >= start {
                prop_assert!(a.rwnd >= prev, "not monotone: {prev} -> {}", a.rwnd);
            }
            prev = a.rwnd;
        }
        prop_assert_eq!(c.phase, ControlPhase::Hold);
        prop_assert_eq!(prev, target);
    }

    /// Sender and receiver joined by lossy, reordering pipes.
    #[test]
    fn tcp_loop_keeps_flight_bound_and_monotone_acks(
        ops in prop::collection::vec((0u8..6, any::<u16>()), 1..400),
        buffer in 2_920u64..40_000,
    ) {
        let cfg = TcpConfig::with_mss(1460);
        let mut rcv = TcpReceiverState::new(buffer);
        let mut snd = TcpSenderState::new(&cfg, rcv.advertised_window(), Some(200_000));
        let mut now = SimTime::ZERO;
        let mut data: VecDeque<(u64, u32)> = VecDeque::new();
        let mut acks: VecDeque<AckOut> = VecDeque::new();
        let mut last_ack = 0;
        let out = snd.start(now);
        data.extend(out.sends.iter().map(|s| (s.seq, s.len)));
        for (op, pick) in ops {
            now += SimTime::from_millis(5);
            let sends = match op {
                // deliver one data segment, possibly out of order
                0 | 1 if !data.is_empty() => {
                    let i = usize::from(pick) % data.len().min(3);
                    let (seq, len) = data.remove(i).unwrap();
                    if let Some(a) = rcv.on_segment(seq, len, now).ack {
                        prop_assert!(a.ack >= last_ack);
                        last_ack = a.ack;
                        acks.push_back(a);
                    }
                    Vec::new()
                }
                2 if !acks.is_empty() => {
                    let i = usize::from(pick) % acks.len().min(2);
                    let a = acks.remove(i).unwrap();
                    let zero = a.rwnd == 0;
                    let out = snd.on_ack(a.ack, a.rwnd, a.ack_seq, a.kind == AckKind::Refresh, now).unwrap();
                    if zero && snd.peer_rwnd == 0 {
                        prop_assert!(out.sends.is_empty());
                    }
                    out.sends
                }
                3 if !data.is_empty() => {
                    data.pop_front();
                    Vec::new()
                }
                4 => {
                    let cap = u64::from(pick) % (buffer + 1);
                    if let Some(a) = rcv.set_window_policy(if pick % 5 == 0 { None } else { Some(cap) }).unwrap() {
                        acks.push_back(a);
                    }
                    Vec::new()
                }
                5 => snd.on_rto(now).sends,
                _ => Vec::new(),
            };
            if snd.peer_rwnd == 0 {
                prop_assert!(sends.is_empty());
            }
            data.extend(sends.iter().map(|s| (s.seq, s.len)));
            // the receiver may shrink its window under data already in flight,
            // so the bound is checked whenever new data leaves
            if sends.last().is_some_and(|s| s.seq + u64::from(s.len) == snd.snd_nxt) {
                prop_assert!(snd.snd_nxt - snd.snd_una <= snd.cwnd.min(snd.peer_rwnd) + snd.mss);
            }
            prop_assert!(snd.check_invariants().is_ok());
        }
    }

    #[test]
    fn canonical_form_round_trips(
        end in 1u64..1_000,
        mss in 500u64..1_500,
        bw_bytes in 1u64..10_000_000,
        delay_us in 0u64..2_000_000,
        queue_extra in 0u64..100_000,
        volume in prop::option::of(1u64..100_000_000),
        weight in 1u64..10,
        seed in any::<u64>(),
    ) {
        let text = format!(
            "[sim]\nend = {end}\nseed = {seed}\nmss = {mss}\n\n[node.cn]\nrole = cn\n[node.mn]\nrole = mn\n\n\
             [link.l]\na = cn\nb = mn\nkind = gprs\nbandwidth = {}\ndelay = {}.{:06}\nqueue = {}\n\n\
             [flow.f]\nsrc = cn\ndst = mn\nweight = {weight}\nvolume = {}\n",
            bw_bytes * 8,
            delay_us / 1_000_000,
            delay_us % 1_000_000,
            mss + 40 + queue_extra,
            volume.map_or("unlimited".to_string(), |v| v.to_string()),
        );
        let s = parse_scenario(&text).unwrap();
        prop_assert_eq!(&parse_scenario(&s.to_canonical()).unwrap(), &s);
    }
}
