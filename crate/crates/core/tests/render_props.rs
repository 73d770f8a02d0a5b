mod common;

use std::collections::BTreeMap;

use forestfw_core::header_space::{HeaderPoint, Interval, IntervalSet};
use forestfw_core::netgen::{Acl, AclRule, Action, State, ANY};
use forestfw_core::render::{load_iptables, parse_neutral, render_acls, render_device, Vendor};
use forestfw_core::sim::{
    vet_negative, vet_positive, ConnTable, Intent, Packet, ScanSpec, SimNetwork,
};
use ipnet::Ipv4Net;
use proptest::prelude::*;

fn ports() -> impl Strategy<Value = IntervalSet> {
    prop::collection::vec((0..=65_535u32, 0..=65_535u32), 1..4).prop_map(|v| {
        v.into_iter()
            .map(|(a, b)| Interval::new(a.min(b), a.max(b)))
            .collect()
    })
}

fn net() -> impl Strategy<Value = Ipv4Net> {
    (any::<u32>(), 0..=32u8).prop_map(|(a, p)| Ipv4Net::new(a.into(), p).unwrap().trunc())
}

fn acl_rule() -> impl Strategy<Value = AclRule> {
    (
        prop::sample::select(vec![None, Some(1u8), Some(6), Some(17), Some(89)]),
        any::<bool>(),
        net(),
        net(),
        ports(),
        ports(),
        (any::<bool>(), any::<bool>(), any::<bool>()),
        "[a-z ()_]{0,12}",
    )
        .prop_map(
            |(protocol, permit, src, dst, sport, dport, (new, established, log), comment)| {
                let (sport, dport, icmp) = match protocol {
                    Some(6 | 17) => (sport, dport, IntervalSet::empty()),
                    Some(1) => (
                        IntervalSet::empty(),
                        IntervalSet::empty(),
                        sport.intersect(&IntervalSet::full(255)),
                    ),
                    _ => (
                        IntervalSet::empty(),
                        IntervalSet::empty(),
                        IntervalSet::empty(),
                    ),
                };
                AclRule {
                    action: if permit || protocol.is_none() {
                        Action::Permit
                    } else {
                        Action::Deny
                    },
                    protocol,
                    src,
                    dst,
                    sport,
                    dport,
                    icmp,
                    state: State { new, established },
                    log,
                    comment,
                }
            },
        )
}

fn acls() -> impl Strategy<Value = Vec<Acl>> {
    prop::collection::vec(prop::collection::vec(acl_rule(), 0..6), 1..3).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, mut rules)| {
                rules.push(AclRule::terminal_deny());
                Acl {
                    name: format!("acl_{}", i + 1),
                    rules,
                }
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn neutral_format_round_trips(a in acls()) {
        prop_assert_eq!(parse_neutral(&render_acls(&a)).unwrap(), a);
    }
}

fn loaded_network(vendor_text: impl Fn(&str) -> String) -> SimNetwork {
    let p = common::compiled();
    let mut acls = BTreeMap::new();
    let mut assignments = Vec::new();
    for fw in p.acls.keys() {
        let set = load_iptables(fw, &vendor_text(fw)).unwrap();
        acls.insert(fw.clone(), set.acls);
        assignments.extend(set.assignments);
    }
    SimNetwork::new(p.model.clone(), p.flows.clone(), acls, &assignments)
}

#[test]
fn iptables_rendering_is_decision_equivalent() {
    let p = common::compiled();
    let neutral = SimNetwork::from_policy(&p);
    let loaded = loaded_network(|fw| render_device(&p, fw, Vendor::IptablesLike).unwrap());
    let strip = |v: Vec<forestfw_core::sim::VetResult>| {
        v.into_iter()
            .map(|r| (r.rule, r.outcome))
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(vet_positive(&neutral)), strip(vet_positive(&loaded)));
    assert!(vet_negative(&loaded, &ScanSpec::default_for(&p.flows)).is_empty());

    let addrs = [
        "10.0.0.1",
        "10.0.128.5",
        "10.0.0.17",
        "10.0.0.25",
        "203.0.113.9",
        "10.255.0.1",
        "10.255.0.2",
        "10.255.0.3",
    ]
    .map(|a| u32::from(a.parse::<std::net::Ipv4Addr>().unwrap()));
    let mut checked = 0;
    for &src in &addrs {
        for &dst in &addrs {
            let zone = neutral.model.zone_of_addr(src).unwrap().name.clone();
            for (protocol, sport, dport) in [
                (6, 40000, 443),
                (6, 443, 40000),
                (17, 53, 1024),
                (17, 1024, 53),
                (1, 0, 0),
                (6, 1, 22),
                (17, 7, 514),
            ] {
                for intent in [Intent::New, Intent::Established] {
                    let header = HeaderPoint {
                        src_addr: src,
                        dst_addr: dst,
                        protocol,
                        sport,
                        dport,
                        icmp_type: 8,
                    };
                    let pkt = Packet {
                        header,
                        ingress_zone: zone.clone(),
                        intent,
                    };
                    let a = neutral.inject(&mut ConnTable::new(), &pkt).unwrap();
                    let b = loaded.inject(&mut ConnTable::new(), &pkt).unwrap();
                    assert_eq!(a.verdict, b.verdict, "{pkt:?}");
                    checked += 1;
                }
            }
        }
    }
    assert_eq!(checked, 8 * 8 * 7 * 2);
}

#[test]
fn templates_render_every_firewall() {
    let p = common::compiled();
    for fw in p.acls.keys() {
        let ipt = render_device(&p, fw, Vendor::IptablesLike).unwrap();
        assert!(ipt.contains("\n*filter\n") && ipt.trim_end().ends_with("COMMIT"));
        let asa = render_device(&p, fw, Vendor::AsaLike).unwrap();
        assert!(asa.contains("access-group acl_1 in interface eth0"));
        assert!(asa.lines().any(|l| l.contains("deny ip any any")));
    }
    let r1 = render_device(&p, "R1", Vendor::AsaLike).unwrap();
    assert!(r1.contains("web_rule"), "provenance missing");
}

#[test]
fn any_prints_as_any() {
    let mut r = AclRule::terminal_deny();
    r.dst = ANY;
    assert!(forestfw_core::render::rule_line(&r).contains("to~any~"));
}
