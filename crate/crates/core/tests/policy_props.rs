use std::collections::BTreeSet;
use std::path::PathBuf;

use forestfw_core::checker::{find_rule_overlaps, ReportKind};
use forestfw_core::header_space::{matches, HeaderPoint, Interval, IntervalSet};
use forestfw_core::policy_lang::{
    expand_rules, parse_policy_file, pretty_print, BuiltinLibrary, FlowRule, PolicySpec, Service,
    ServiceSet,
};
use proptest::prelude::*;

fn fixture_text() -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/policy.policyml");
    std::fs::read_to_string(p).unwrap()
}

fn parse(text: &str) -> PolicySpec {
    parse_policy_file("policy.policyml", text, &BuiltinLibrary).unwrap()
}

fn flow_set(flows: &[FlowRule]) -> BTreeSet<String> {
    flows
        .iter()
        .map(|f| format!("{f} {:?}", f.service.key()))
        .collect()
}

const TOP: u32 = 7;

fn service() -> impl Strategy<Value = Service> {
    let iv = || {
        (0..=TOP, 0..=TOP)
            .prop_map(|(a, b)| IntervalSet::from_interval(Interval::new(a.min(b), a.max(b))))
    };
    (prop::sample::select(vec![1u8, 6, 17]), iv(), iv(), iv()).prop_map(|(p, s, d, i)| {
        let mut svc = Service::new(format!("s{p}"), p);
        if p == 1 {
            svc.icmp_types = i;
        } else {
            svc.source_ports = s;
            svc.dest_ports = d;
        }
        svc
    })
}

fn service_set() -> impl Strategy<Value = ServiceSet> {
    prop::collection::vec(service(), 0..5).prop_map(|v| v.into_iter().collect())
}

fn grid() -> Vec<HeaderPoint> {
    let mut out = BTreeSet::new();
    for p in [1u8, 6, 17] {
        for a in 0..=TOP as u16 {
            for b in 0..=TOP as u16 {
                out.insert(HeaderPoint::service(p, a, b, a as u8));
            }
        }
    }
    out.into_iter().collect()
}

fn flows() -> impl Strategy<Value = Vec<FlowRule>> {
    let zones = prop::sample::select(vec![("za", "zb"), ("zb", "za"), ("za", "zc")]);
    prop::collection::vec((0..4usize, zones, service()), 0..8).prop_map(|v| {
        v.into_iter()
            .map(|(r, (a, b), service)| FlowRule {
                rule_name: format!("rule_{r}"),
                src_zone: a.into(),
                dst_zone: b.into(),
                service,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn service_set_algebra(a in service_set(), b in service_set(), c in service_set()) {
        prop_assert_eq!(a.union(&a).keys(), a.keys());
        prop_assert_eq!(a.intersect(&a).keys(), a.keys());
        prop_assert!(a.difference(&a).is_empty());
        let l = a.union(&b).intersect(&c);
        let r = a.intersect(&c).union(&b.intersect(&c));
        prop_assert_eq!(l.keys(), r.keys());
        let u = a.union(&b);
        prop_assert_eq!(u.keys(), a.keys().union(&b.keys()).cloned().collect());
    }

    #[test]
    fn overlap_reports_match_brute_force(fs in flows()) {
        let mut oracle = BTreeSet::new();
        for (i, f) in fs.iter().enumerate() {
            for g in &fs[i + 1..] {
                if f.rule_name == g.rule_name || (&f.src_zone, &f.dst_zone) != (&g.src_zone, &g.dst_zone) {
                    continue;
                }
                let (p, q) = (f.service.predicate(), g.service.predicate());
                if grid().iter().any(|x| matches(&p, x) && matches(&q, x)) {
                    let mut pair = [f.rule_name.clone(), g.rule_name.clone()];
                    pair.sort();
                    oracle.insert((pair[0].clone(), pair[1].clone()));
                }
            }
        }
        let reports = find_rule_overlaps(&fs);
        let got: BTreeSet<(String, String)> = reports.iter().map(|r| (r.rule_a.clone(), r.rule_b.clone())).collect();
        prop_assert_eq!(got.len(), reports.len());
        prop_assert_eq!(&got, &oracle);
        for r in &reports {
            prop_assert_eq!(r.kind, ReportKind::HighLevelOverlap);
            let x = r.witness.sample().unwrap();
            let hit = |name: &str| fs.iter().any(|f| f.rule_name == name && matches(&f.service.predicate(), &x));
            prop_assert!(hit(&r.rule_a) && hit(&r.rule_b));
        }
    }

    #[test]
    fn rule_order_does_not_matter(seed in any::<u64>()) {
        let text = fixture_text();
        let start = text.find("rule_group security_policy {").unwrap();
        let open = start + "rule_group security_policy {".len();
        let close = open + text[open..].find('}').unwrap();
        let mut names: Vec<&str> = text[open..close].split(',').map(str::trim).collect();
        let n = names.len();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            names.swap(i, (s >> 33) as usize % (i + 1));
        }
        let shuffled = format!("{}{} {}", &text[..open], names.join(", "), &text[close..]);
        let a = expand_rules(&parse(&text)).unwrap();
        let b = expand_rules(&parse(&shuffled)).unwrap();
        prop_assert_eq!(flow_set(&a), flow_set(&b));
    }
}

#[test]
fn fixture_round_trips_through_the_printer() {
    let spec = parse(&fixture_text());
    let printed = pretty_print(&spec);
    let again = parse(&printed);
    assert_eq!(pretty_print(&again), printed);
    assert_eq!(
        flow_set(&expand_rules(&spec).unwrap()),
        flow_set(&expand_rules(&again).unwrap())
    );
}

#[test]
fn expansion_stays_within_declared_zones() {
    let spec = parse(&fixture_text());
    for f in expand_rules(&spec).unwrap() {
        let r = &spec.rules[&f.rule_name];
        let ends: BTreeSet<String> = spec
            .zones_of(&r.left)
            .union(&spec.zones_of(&r.right))
            .cloned()
            .collect();
        assert!(
            ends.contains(&f.src_zone) && ends.contains(&f.dst_zone),
            "{f}"
        );
        assert_ne!(f.src_zone, f.dst_zone);
        assert!(r.services.contains(&f.service), "{f}");
    }
}
