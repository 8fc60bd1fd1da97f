//! Byte and time totals checked against closed forms worked out by hand from
//! the hop sequences, independent of the planner.

use circulate::bench::{Calibration, Locality, PatternFamily, Scenario};
use circulate::engine::run;
use circulate::model::{expected_transfer, Case, LinkClass, LinkModel, Mode, ServiceCall, Topology, WorkflowPattern};
use circulate::services::{preset_behavior, ServiceBehavior};
use circulate::transport::TransportHandle;

const MB: u64 = 1_000_000;

fn specs(b: &[ServiceBehavior]) -> Vec<circulate::model::ServiceSpec> {
    b.iter().map(|b| b.spec.clone()).collect()
}

fn sim() -> TransportHandle {
    TransportHandle::simulated()
}

/// Per-class bytes from both the engine and the analytic model, which must agree.
fn bytes(s: &Scenario, mode: Mode, case: Case) -> (u64, u64, u64) {
    let trace = run(&s.pattern, mode, case, &s.topology, &sim(), &s.behaviors).unwrap();
    let model = expected_transfer(&s.pattern, mode, &s.topology, case, &specs(&s.behaviors)).unwrap();
    assert_eq!(trace.per_class_bytes, model, "{mode} {case}");
    let a = trace.per_class_bytes;
    (a.bytes(LinkClass::Wan), a.bytes(LinkClass::Lan), a.bytes(LinkClass::SameServer))
}

/// Sizes along a chain of floor(6/5 x) steps.
fn grow_chain(s: u64, n: usize) -> Vec<u64> {
    let mut x = vec![s];
    for _ in 0..n {
        x.push(x.last().unwrap() * 6 / 5);
    }
    x
}

#[test]
fn sequence_of_four_growing_services() {
    let s =
        Scenario::reference(PatternFamily::Sequence, 4, Locality::Remote, &Calibration::default(), 10 * MB).unwrap();
    assert_eq!(grow_chain(10 * MB, 4), vec![10_000_000, 12_000_000, 14_400_000, 17_280_000, 20_736_000]);
    // Every input goes out from the engine and every output comes back.
    assert_eq!(bytes(&s, Mode::Centralized, Case::Best), (118_096_000, 0, 0));
    // Upload over the WAN, then three proxy-to-proxy hand-offs on the LAN.
    assert_eq!(bytes(&s, Mode::Circulate, Case::Best), (10_000_000, 43_680_000, 0));
    assert_eq!(bytes(&s, Mode::Circulate, Case::Worst), (30_736_000, 43_680_000, 0));
}

#[test]
fn sequence_closed_forms_hold_for_every_length() {
    let cal = Calibration::default();
    for n in 3..=17 {
        for loc in [Locality::Remote, Locality::Local] {
            let s = Scenario::reference(PatternFamily::Sequence, n, loc, &cal, 10 * MB).unwrap();
            let x = grow_chain(10 * MB, n);
            let central: u64 = (0..n).map(|i| x[i] + x[i + 1]).sum();
            let handoffs: u64 = x[1..n].iter().sum();
            let engine_side = |b: (u64, u64, u64)| match loc {
                Locality::Remote => b,
                Locality::Local => (b.1, b.0, b.2),
            };
            assert_eq!(engine_side(bytes(&s, Mode::Centralized, Case::Best)), (central, 0, 0), "n={n}");
            let best = bytes(&s, Mode::Circulate, Case::Best);
            let worst = bytes(&s, Mode::Circulate, Case::Worst);
            match loc {
                Locality::Remote => {
                    assert_eq!(best, (x[0], handoffs, 0));
                    assert_eq!(worst, (x[0] + x[n], handoffs, 0));
                }
                Locality::Local => {
                    assert_eq!(best, (0, x[0] + handoffs, 0));
                    assert_eq!(worst, (0, x[0] + handoffs + x[n], 0));
                }
            }
        }
    }
}

/// A chain of identity services on their own servers.
fn identity_chain(n: usize, s: u64) -> (WorkflowPattern, Vec<ServiceBehavior>, Topology) {
    let mut reg = Vec::new();
    let mut b = Topology::builder("E");
    for i in 0..n {
        let mut beh = preset_behavior("patterns", "identity").unwrap();
        beh.spec.service_id = format!("id{i}");
        reg.push(beh);
        let host = format!("h{i}");
        b = b.place(format!("id{i}"), host.clone(), host.clone()).link(
            "E",
            host.as_str(),
            LinkModel::wan(10.0, 40_000.0),
        );
        for j in 0..i {
            b = b.link(format!("h{j}").as_str(), host.as_str(), LinkModel::lan(1.0, 100_000.0));
        }
    }
    let p = WorkflowPattern::sequence((0..n).map(|i| ServiceCall::new(format!("id{i}"))).collect(), s);
    (p, reg, b.build().unwrap())
}

#[test]
fn identity_chain_moves_half_as_much_plus_one() {
    // Centralized: 2N transfers of S. Circulate worst: upload, N-1 hand-offs
    // and one return, N+1 in all.
    let s = 10 * MB;
    for n in 1..=12 {
        let (p, reg, topo) = identity_chain(n, s);
        let c = run(&p, Mode::Centralized, Case::Best, &topo, &sim(), &reg).unwrap().per_class_bytes;
        let w = run(&p, Mode::Circulate, Case::Worst, &topo, &sim(), &reg).unwrap().per_class_bytes;
        assert_eq!(c.bytes(LinkClass::Wan), 2 * n as u64 * s);
        assert_eq!(w.total_bytes, (n as u64 + 1) * s);
        let ratio = w.total_bytes as f64 / c.total_bytes as f64;
        assert!((ratio - (n as f64 + 1.0) / (2.0 * n as f64)).abs() < 1e-12);
    }
}

#[test]
fn fan_in_closed_forms() {
    let cal = Calibration::default();
    let s = 10 * MB;
    for n in [3, 8, 17] {
        let k = (n - 1) as u64;
        let sink_out = k * s / 5;
        let sc = Scenario::reference(PatternFamily::FanIn, n, Locality::Remote, &cal, s).unwrap();
        // Sources read resident data; their outputs come to the engine and go
        // on to the sink, whose output comes back.
        assert_eq!(bytes(&sc, Mode::Centralized, Case::Best), (2 * k * s + sink_out, 0, 0));
        assert_eq!(bytes(&sc, Mode::Circulate, Case::Best), (0, k * s, 0));
        assert_eq!(bytes(&sc, Mode::Circulate, Case::Worst), (sink_out, k * s, 0));
    }
}

#[test]
fn fan_out_closed_forms() {
    let cal = Calibration::default();
    let s = 10 * MB;
    for n in [3, 8, 17] {
        let k = (n - 1) as u64;
        let sc = Scenario::reference(PatternFamily::FanOut, n, Locality::Remote, &cal, s).unwrap();
        let beh = &sc.behaviors;
        let specs = specs(beh);
        // Derive the branch output size from the registered transform rather
        // than assuming a preset.
        let branch = specs.iter().find(|sp| sp.service_id != "source").unwrap();
        let b_out = branch.operations[0].transform.output_size(s);
        let src_out = specs.iter().find(|sp| sp.service_id == "source").unwrap().operations[0].transform.output_size(s);
        assert_eq!(src_out, s);
        assert_eq!(bytes(&sc, Mode::Centralized, Case::Best), (s + k * s + k * b_out, 0, 0));
        assert_eq!(bytes(&sc, Mode::Circulate, Case::Best), (0, k * s, 0));
        assert_eq!(bytes(&sc, Mode::Circulate, Case::Worst), (k * b_out, k * s, 0));
    }
}

#[test]
fn zero_byte_input_counts_messages_but_no_bytes() {
    let s = Scenario::reference(PatternFamily::Sequence, 3, Locality::Remote, &Calibration::default(), 0).unwrap();
    for (mode, case) in [(Mode::Centralized, Case::Best), (Mode::Circulate, Case::Best), (Mode::Circulate, Case::Worst)]
    {
        let a = run(&s.pattern, mode, case, &s.topology, &sim(), &s.behaviors).unwrap().per_class_bytes;
        assert_eq!(a.total_bytes, 0);
        for class in LinkClass::ALL {
            assert_eq!(a.bytes(class), 0);
        }
        assert!(a.total_messages() > 0);
    }
}

#[test]
fn elapsed_time_of_a_single_service() {
    // One identity service behind a WAN link, 10 MB in.
    let (p, reg, topo) = identity_chain(1, 10 * MB);
    let wan = |bytes: u64| 10.0 + bytes as f64 / 40_000.0;
    let ctrl = |refs: u64| wan(64 + 36 * refs);

    let c = run(&p, Mode::Centralized, Case::Best, &topo, &sim(), &reg).unwrap();
    assert!((c.elapsed_ms - 2.0 * wan(10 * MB)).abs() < 1e-9, "{}", c.elapsed_ms);

    // Upload (data out, overhead, ack with one ref), then invoke (request
    // with one ref, overhead, same-server hops, reply with one ref).
    let upload = wan(10 * MB) + 5.0 + ctrl(1);
    let invoke = ctrl(1) + 5.0 + ctrl(1);
    let b = run(&p, Mode::Circulate, Case::Best, &topo, &sim(), &reg).unwrap();
    assert!((b.elapsed_ms - (upload + invoke)).abs() < 1e-9, "{}", b.elapsed_ms);

    // Return: request with one ref, overhead, payload back.
    let w = run(&p, Mode::Circulate, Case::Worst, &topo, &sim(), &reg).unwrap();
    assert!((w.elapsed_ms - (upload + invoke + ctrl(1) + 5.0 + wan(10 * MB))).abs() < 1e-9, "{}", w.elapsed_ms);
}
