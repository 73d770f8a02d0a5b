//! Rule-overlap and ACL anomaly detection with concrete witnesses.

mod alloy;

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::diag::Diagnostic;
use crate::header_space::{IntervalSet, Predicate};
use crate::netgen::{Acl, Action};
use crate::policy_lang::{FlowRule, PolicySpec, Service, ALL_PROTOCOLS};

pub use alloy::export_alloy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    HighLevelOverlap,
    AclRedundancy,
    AclShadow,
}

impl fmt::Display for ReportKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportKind::HighLevelOverlap => "high_level_overlap",
            ReportKind::AclRedundancy => "acl_redundancy",
            ReportKind::AclShadow => "acl_shadow",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OverlapReport {
    pub rule_a: String,
    pub rule_b: String,
    pub kind: ReportKind,
    /// First shared region found.
    pub witness: Predicate,
    /// Zone pairs (source, destination) on which the rules meet.
    pub zones: Vec<(String, String)>,
    /// Every shared region, witness first.
    pub regions: Vec<Predicate>,
}

impl fmt::Display for OverlapReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: `{}` and `{}`", self.kind, self.rule_a, self.rule_b)?;
        if !self.zones.is_empty() {
            let z: Vec<String> = self
                .zones
                .iter()
                .map(|(a, b)| format!("{a} -> {b}"))
                .collect();
            write!(f, " on {}", z.join(", "))?;
        }
        write!(f, ": {}", self.witness)
    }
}

impl OverlapReport {
    pub fn to_diagnostic(&self, spec: &PolicySpec) -> Diagnostic {
        let (file, pos) = spec.source.locate(&self.rule_a);
        Diagnostic::error(file, pos, format!("overlapping rules: {self}"))
    }
}

/// Dimension-wise intersection of two services, `None` when empty.
pub fn service_intersection(a: &Service, b: &Service) -> Option<Service> {
    let (a, b) = match (a.protocol, b.protocol) {
        (ALL_PROTOCOLS, ALL_PROTOCOLS) => return Some(a.clone()),
        (ALL_PROTOCOLS, _) => return Some(b.clone()),
        (_, ALL_PROTOCOLS) => return Some(a.clone()),
        (x, y) if x != y => return None,
        _ => (a, b),
    };
    let both = |x: &IntervalSet, y: &IntervalSet| x.intersect(y);
    let s = Service {
        name: if a.name == b.name {
            a.name.clone()
        } else {
            format!("{}^{}", a.name, b.name)
        },
        protocol: a.protocol,
        source_ports: both(&a.source_ports, &b.source_ports),
        dest_ports: both(&a.dest_ports, &b.dest_ports),
        icmp_types: both(&a.icmp_types, &b.icmp_types),
        comment: String::new(),
    };
    if s.predicate().is_empty() {
        None
    } else {
        Some(s)
    }
}

/// Pairs of flows from different rules sharing a zone pair and some
/// traffic, aggregated per rule pair and ordered by rule names.
pub fn find_rule_overlaps(flows: &[FlowRule]) -> Vec<OverlapReport> {
    let mut by_pair: BTreeMap<(&str, &str), Vec<&FlowRule>> = BTreeMap::new();
    for f in flows {
        by_pair
            .entry((&f.src_zone, &f.dst_zone))
            .or_default()
            .push(f);
    }
    let mut reports: BTreeMap<(String, String), OverlapReport> = BTreeMap::new();
    for ((src, dst), group) in &by_pair {
        for (i, x) in group.iter().enumerate() {
            for y in &group[i + 1..] {
                if x.rule_name == y.rule_name {
                    continue;
                }
                let Some(s) = service_intersection(&x.service, &y.service) else {
                    continue;
                };
                let (a, b) = if x.rule_name < y.rule_name {
                    (x, y)
                } else {
                    (y, x)
                };
                let region = s.predicate();
                let r = reports
                    .entry((a.rule_name.clone(), b.rule_name.clone()))
                    .or_insert_with(|| OverlapReport {
                        rule_a: a.rule_name.clone(),
                        rule_b: b.rule_name.clone(),
                        kind: ReportKind::HighLevelOverlap,
                        witness: region.clone(),
                        zones: Vec::new(),
                        regions: Vec::new(),
                    });
                let zp = (src.to_string(), dst.to_string());
                if !r.zones.contains(&zp) {
                    r.zones.push(zp);
                }
                if !r.regions.contains(&region) {
                    r.regions.push(region);
                }
            }
        }
    }
    reports.into_values().collect()
}

/// A rule's match region with the connection-state dimension appended.
type Region = (Predicate, IntervalSet);

fn region_dims(r: &Region) -> [&IntervalSet; 7] {
    let [a, b, c, d, e, f] = r.0.dims();
    [a, b, c, d, e, f, &r.1]
}

fn rebuild(d: [IntervalSet; 7]) -> Region {
    let [src, dst, protocol, sport, dport, icmp, state] = d;
    (
        Predicate {
            src,
            dst,
            protocol,
            sport,
            dport,
            icmp,
        },
        state,
    )
}

fn region_empty(r: &Region) -> bool {
    region_dims(r).iter().any(|d| d.is_empty())
}

fn region_intersect(a: &Region, b: &Region) -> Region {
    (a.0.intersect(&b.0), a.1.intersect(&b.1))
}

/// `a \ b` as disjoint boxes.
fn subtract(a: &Region, b: &Region) -> Vec<Region> {
    if region_empty(&region_intersect(a, b)) {
        return vec![a.clone()];
    }
    let da = region_dims(a);
    let db = region_dims(b);
    let mut out = Vec::new();
    for i in 0..7 {
        let rest = da[i].difference(db[i]);
        if rest.is_empty() {
            continue;
        }
        let dims: [IntervalSet; 7] = std::array::from_fn(|j| match j.cmp(&i) {
            std::cmp::Ordering::Less => da[j].intersect(db[j]),
            std::cmp::Ordering::Equal => rest.clone(),
            std::cmp::Ordering::Greater => da[j].clone(),
        });
        out.push(rebuild(dims));
    }
    out
}

fn covered(target: &Region, by: &[&Region]) -> bool {
    let mut left = vec![target.clone()];
    for b in by {
        left = left.iter().flat_map(|r| subtract(r, b)).collect();
        if left.is_empty() {
            return true;
        }
    }
    left.is_empty()
}

/// Redundant permits (covered by earlier permits) and shadowed rules
/// (covered only once earlier denies are counted too). The terminal
/// deny-all is exempt.
pub fn find_acl_anomalies(acl: &Acl) -> Vec<OverlapReport> {
    let regions: Vec<Region> = acl
        .rules
        .iter()
        .map(|r| (r.predicate(), r.state.matched()))
        .collect();
    let tag = |i: usize| format!("acl:{}#{}", acl.name, i + 1);
    let mut out = Vec::new();
    for (i, rule) in acl.rules.iter().enumerate() {
        if rule.is_terminal_deny() && i + 1 == acl.rules.len() {
            continue;
        }
        let me = &regions[i];
        if region_empty(me) {
            continue;
        }
        let permits: Vec<&Region> = (0..i)
            .filter(|&j| acl.rules[j].action == Action::Permit)
            .map(|j| &regions[j])
            .collect();
        let kind = if rule.action == Action::Permit && covered(me, &permits) {
            ReportKind::AclRedundancy
        } else if covered(me, &regions[..i].iter().collect::<Vec<_>>()) {
            ReportKind::AclShadow
        } else {
            continue;
        };
        let Some(j) = (0..i).find(|&j| {
            (kind == ReportKind::AclShadow || acl.rules[j].action == Action::Permit)
                && !region_empty(&region_intersect(me, &regions[j]))
        }) else {
            continue;
        };
        let witness = region_intersect(me, &regions[j]).0;
        out.push(OverlapReport {
            rule_a: tag(j),
            rule_b: tag(i),
            kind,
            witness: witness.clone(),
            zones: Vec::new(),
            regions: vec![witness],
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::header_space::{matches, Interval};
    use crate::netgen::{AclRule, State};

    fn tcp(name: &str, lo: u32, hi: u32) -> Service {
        Service::tcp(name, Interval::new(lo, hi))
    }

    fn flow(rule: &str, src: &str, dst: &str, s: Service) -> FlowRule {
        FlowRule {
            rule_name: rule.into(),
            src_zone: src.into(),
            dst_zone: dst.into(),
            service: s,
        }
    }

    #[test]
    fn intersection_examples() {
        assert!(
            service_intersection(&tcp("http", 80, 80), &tcp("custom_http", 8080, 8080)).is_none()
        );
        let http = tcp("http", 80, 80);
        assert_eq!(service_intersection(&http, &http), Some(http.clone()));
        let s = service_intersection(&tcp("a", 80, 90), &tcp("b", 85, 100)).unwrap();
        for (p, inside) in [(84, false), (85, true), (90, true), (91, false)] {
            assert_eq!(s.dest_ports.contains(p), inside, "port {p}");
        }
        assert!(service_intersection(&http, &Service::udp("u", Interval::single(80))).is_none());
    }

    #[test]
    fn overlap_reported_once_per_rule_pair() {
        let flows = vec![
            flow("web_rule", "z3", "z1", tcp("http", 80, 80)),
            flow("web_rule", "z3", "z1", tcp("https", 443, 443)),
            flow("file_transfer_rule", "z3", "z1", tcp("http", 80, 80)),
            flow("file_transfer_rule", "z3", "z1", tcp("ftp", 21, 21)),
        ];
        let r = find_rule_overlaps(&flows);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].rule_a, "file_transfer_rule");
        assert_eq!(r[0].rule_b, "web_rule");
        assert_eq!(r[0].zones, vec![("z3".to_string(), "z1".to_string())]);
        assert_eq!(r[0].witness.dport, IntervalSet::single(80));
    }

    #[test]
    fn different_zone_pairs_do_not_overlap() {
        let flows = vec![
            flow("a", "z1", "z2", tcp("http", 80, 80)),
            flow("b", "z1", "z3", tcp("http", 80, 80)),
        ];
        assert!(find_rule_overlaps(&flows).is_empty());
    }

    #[test]
    fn same_rule_never_self_reports() {
        let flows = vec![
            flow("a", "z1", "z2", tcp("x", 80, 90)),
            flow("a", "z1", "z2", tcp("y", 85, 95)),
        ];
        assert!(find_rule_overlaps(&flows).is_empty());
    }

    fn permit(lo: u32, hi: u32) -> AclRule {
        AclRule {
            action: Action::Permit,
            protocol: Some(6),
            src: "10.0.0.0/24".parse().unwrap(),
            dst: "10.0.1.0/24".parse().unwrap(),
            sport: IntervalSet::full(65_535),
            dport: IntervalSet::from_interval(Interval::new(lo, hi)),
            icmp: IntervalSet::empty(),
            state: State::STATELESS,
            log: false,
            comment: String::new(),
        }
    }

    fn acl(rules: Vec<AclRule>) -> Acl {
        let mut rules = rules;
        rules.push(AclRule::terminal_deny());
        Acl {
            name: "acl_1".into(),
            rules,
        }
    }

    #[test]
    fn duplicate_is_redundant() {
        let r = find_acl_anomalies(&acl(vec![permit(80, 80), permit(80, 80)]));
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].kind, ReportKind::AclRedundancy);
        assert_eq!(
            (r[0].rule_a.as_str(), r[0].rule_b.as_str()),
            ("acl:acl_1#1", "acl:acl_1#2")
        );
    }

    #[test]
    fn strict_coverage_is_redundant() {
        let r = find_acl_anomalies(&acl(vec![permit(80, 100), permit(85, 90)]));
        assert_eq!(r.len(), 1);
        for (p, inside) in [(84, false), (85, true), (90, true), (91, false)] {
            assert_eq!(r[0].witness.dport.contains(p), inside);
        }
    }

    #[test]
    fn coverage_by_union_of_earlier_rules() {
        let r = find_acl_anomalies(&acl(vec![permit(80, 85), permit(86, 90), permit(82, 88)]));
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].rule_b, "acl:acl_1#3");
        let r = find_acl_anomalies(&acl(vec![permit(80, 85), permit(87, 90), permit(82, 88)]));
        assert!(r.is_empty());
    }

    #[test]
    fn state_distinguishes_rules() {
        let mut est = permit(80, 80);
        est.state = State::ESTABLISHED;
        let mut new = permit(80, 80);
        new.state = State::NEW_ESTABLISHED;
        assert!(find_acl_anomalies(&acl(vec![est.clone(), new.clone()])).is_empty());
        assert_eq!(find_acl_anomalies(&acl(vec![new, est])).len(), 1);
    }

    #[test]
    fn shadow_by_deny() {
        let mut deny = permit(80, 100);
        deny.action = Action::Deny;
        let r = find_acl_anomalies(&acl(vec![deny, permit(85, 90)]));
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].kind, ReportKind::AclShadow);
    }

    #[test]
    fn witness_matches_both_rules() {
        let a = acl(vec![permit(80, 100), permit(85, 90)]);
        let r = &find_acl_anomalies(&a)[0];
        let x = r.witness.sample().unwrap();
        assert!(matches(&a.rules[0].predicate(), &x) && matches(&a.rules[1].predicate(), &x));
    }
}
