//! Packet-header space: interval sets, rectangle predicates and the rule
//! combination strategies (first match, last match, whitelist).
//!
//! A [`HeaderPoint`] stands for every packet sequence sharing its header
//! values. Rules only accept or deny, so a decision on a point is a decision
//! on the whole class.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_ADDR: u32 = u32::MAX;
pub const MAX_PORT: u32 = 65_535;
pub const MAX_PROTO: u32 = 255;
pub const MAX_ICMP: u32 = 255;

pub const PROTO_ICMP: u8 = 1;
pub const PROTO_TCP: u8 = 6;
pub const PROTO_UDP: u8 = 17;
pub const PROTO_OSPF: u8 = 89;

/// Value used for the port dimensions of non-TCP/UDP traffic and for the
/// ICMP-type dimension of non-ICMP traffic.
pub const SENTINEL: u32 = 0;

pub fn has_ports(protocol: u8) -> bool {
    protocol == PROTO_TCP || protocol == PROTO_UDP
}

/// Inclusive integer interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub lo: u32,
    pub hi: u32,
}

impl Interval {
    pub const fn new(lo: u32, hi: u32) -> Self {
        Interval { lo, hi }
    }

    pub const fn single(v: u32) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn contains(&self, v: u32) -> bool {
        self.lo <= v && v <= self.hi
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> u64 {
        u64::from(self.hi - self.lo) + 1
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.lo == self.hi {
            write!(f, "{}", self.lo)
        } else {
            write!(f, "{}-{}", self.lo, self.hi)
        }
    }
}

/// A set of integers kept as sorted, disjoint, non-adjacent intervals.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntervalSet {
    ranges: Vec<Interval>,
}

impl IntervalSet {
    pub fn empty() -> Self {
        IntervalSet { ranges: Vec::new() }
    }

    pub fn full(max: u32) -> Self {
        IntervalSet::from_interval(Interval::new(0, max))
    }

    pub fn single(v: u32) -> Self {
        IntervalSet::from_interval(Interval::single(v))
    }

    pub fn from_interval(iv: Interval) -> Self {
        IntervalSet::from_intervals([iv])
    }

    /// Builds a normalized set; intervals with `lo > hi` are dropped.
    pub fn from_intervals<I: IntoIterator<Item = Interval>>(it: I) -> Self {
        let mut ranges: Vec<Interval> = it.into_iter().filter(|iv| iv.lo <= iv.hi).collect();
        ranges.sort();
        let mut out: Vec<Interval> = Vec::with_capacity(ranges.len());
        for iv in ranges {
            match out.last_mut() {
                Some(last) if u64::from(iv.lo) <= u64::from(last.hi) + 1 => {
                    last.hi = last.hi.max(iv.hi);
                }
                _ => out.push(iv),
            }
        }
        IntervalSet { ranges: out }
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.ranges
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn min_value(&self) -> Option<u32> {
        self.ranges.first().map(|iv| iv.lo)
    }

    pub fn max_value(&self) -> Option<u32> {
        self.ranges.last().map(|iv| iv.hi)
    }

    pub fn is_full(&self, max: u32) -> bool {
        self.ranges.len() == 1 && self.ranges[0] == Interval::new(0, max)
    }

    pub fn cardinality(&self) -> u64 {
        self.ranges.iter().map(Interval::len).sum()
    }

    pub fn contains(&self, v: u32) -> bool {
        // ranges are sorted; binary search on the upper bound
        let idx = self.ranges.partition_point(|iv| iv.hi < v);
        self.ranges.get(idx).is_some_and(|iv| iv.lo <= v)
    }

    pub fn union(&self, other: &IntervalSet) -> IntervalSet {
        IntervalSet::from_intervals(self.ranges.iter().chain(other.ranges.iter()).copied())
    }

    pub fn intersect(&self, other: &IntervalSet) -> IntervalSet {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.ranges.len() && j < other.ranges.len() {
            let a = self.ranges[i];
            let b = other.ranges[j];
            let lo = a.lo.max(b.lo);
            let hi = a.hi.min(b.hi);
            if lo <= hi {
                out.push(Interval::new(lo, hi));
            }
            if a.hi < b.hi {
                i += 1;
            } else {
                j += 1;
            }
        }
        IntervalSet { ranges: out }
    }

    pub fn difference(&self, other: &IntervalSet) -> IntervalSet {
        let mut out = Vec::new();
        let mut j = 0;
        for &a in &self.ranges {
            let mut lo = u64::from(a.lo);
            let hi = u64::from(a.hi);
            while j < other.ranges.len() && u64::from(other.ranges[j].hi) < lo {
                j += 1;
            }
            let mut k = j;
            while lo <= hi && k < other.ranges.len() && u64::from(other.ranges[k].lo) <= hi {
                let b = other.ranges[k];
                if u64::from(b.lo) > lo {
                    out.push(Interval::new(lo as u32, b.lo - 1));
                }
                lo = u64::from(b.hi) + 1;
                k += 1;
            }
            if lo <= hi {
                out.push(Interval::new(lo as u32, hi as u32));
            }
        }
        IntervalSet { ranges: out }
    }

    pub fn is_subset(&self, other: &IntervalSet) -> bool {
        self.difference(other).is_empty()
    }

    pub fn overlaps(&self, other: &IntervalSet) -> bool {
        !self.intersect(other).is_empty()
    }
}

impl fmt::Display for IntervalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, iv) in self.ranges.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{iv}")?;
        }
        Ok(())
    }
}

impl FromIterator<Interval> for IntervalSet {
    fn from_iter<T: IntoIterator<Item = Interval>>(iter: T) -> Self {
        IntervalSet::from_intervals(iter)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HeaderPoint {
    pub src_addr: u32,
    pub dst_addr: u32,
    pub protocol: u8,
    pub sport: u16,
    pub dport: u16,
    pub icmp_type: u8,
}

impl HeaderPoint {
    /// A point with zero addresses and sentinel values in the dimensions the
    /// protocol does not use.
    pub fn service(protocol: u8, sport: u16, dport: u16, icmp_type: u8) -> Self {
        let (sport, dport) = if has_ports(protocol) {
            (sport, dport)
        } else {
            (0, 0)
        };
        let icmp_type = if protocol == PROTO_ICMP { icmp_type } else { 0 };
        HeaderPoint {
            src_addr: 0,
            dst_addr: 0,
            protocol,
            sport,
            dport,
            icmp_type,
        }
    }
}

/// Cross product of one integer set per header dimension.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Predicate {
    pub src: IntervalSet,
    pub dst: IntervalSet,
    pub protocol: IntervalSet,
    pub sport: IntervalSet,
    pub dport: IntervalSet,
    pub icmp: IntervalSet,
}

impl Predicate {
    pub fn full() -> Self {
        Predicate {
            src: IntervalSet::full(MAX_ADDR),
            dst: IntervalSet::full(MAX_ADDR),
            protocol: IntervalSet::full(MAX_PROTO),
            sport: IntervalSet::full(MAX_PORT),
            dport: IntervalSet::full(MAX_PORT),
            icmp: IntervalSet::full(MAX_ICMP),
        }
    }

    /// Predicate for one protocol; port and ICMP dimensions not used by the
    /// protocol are pinned to [`SENTINEL`] whatever the arguments say.
    pub fn for_protocol(
        protocol: u8,
        sport: IntervalSet,
        dport: IntervalSet,
        icmp: IntervalSet,
    ) -> Self {
        let sentinel = IntervalSet::single(SENTINEL);
        let (sport, dport) = if has_ports(protocol) {
            (sport, dport)
        } else {
            (sentinel.clone(), sentinel.clone())
        };
        let icmp = if protocol == PROTO_ICMP {
            icmp
        } else {
            sentinel
        };
        Predicate {
            src: IntervalSet::full(MAX_ADDR),
            dst: IntervalSet::full(MAX_ADDR),
            protocol: IntervalSet::single(u32::from(protocol)),
            sport,
            dport,
            icmp,
        }
    }

    pub fn with_addresses(mut self, src: IntervalSet, dst: IntervalSet) -> Self {
        self.src = src;
        self.dst = dst;
        self
    }

    pub fn dims(&self) -> [&IntervalSet; 6] {
        [
            &self.src,
            &self.dst,
            &self.protocol,
            &self.sport,
            &self.dport,
            &self.icmp,
        ]
    }

    pub fn is_empty(&self) -> bool {
        self.dims().iter().any(|d| d.is_empty())
    }

    pub fn intersect(&self, other: &Predicate) -> Predicate {
        Predicate {
            src: self.src.intersect(&other.src),
            dst: self.dst.intersect(&other.dst),
            protocol: self.protocol.intersect(&other.protocol),
            sport: self.sport.intersect(&other.sport),
            dport: self.dport.intersect(&other.dport),
            icmp: self.icmp.intersect(&other.icmp),
        }
    }

    /// Dimension-wise union. This over-approximates the set union of the two
    /// rectangles but always contains both.
    pub fn hull(&self, other: &Predicate) -> Predicate {
        Predicate {
            src: self.src.union(&other.src),
            dst: self.dst.union(&other.dst),
            protocol: self.protocol.union(&other.protocol),
            sport: self.sport.union(&other.sport),
            dport: self.dport.union(&other.dport),
            icmp: self.icmp.union(&other.icmp),
        }
    }

    pub fn is_subset(&self, other: &Predicate) -> bool {
        self.is_empty()
            || self
                .dims()
                .iter()
                .zip(other.dims())
                .all(|(a, b)| a.is_subset(b))
    }

    /// Smallest point of the predicate, if any.
    pub fn sample(&self) -> Option<HeaderPoint> {
        if self.is_empty() {
            return None;
        }
        Some(HeaderPoint {
            src_addr: self.src.min_value()?,
            dst_addr: self.dst.min_value()?,
            protocol: u8::try_from(self.protocol.min_value()?).ok()?,
            sport: u16::try_from(self.sport.min_value()?).ok()?,
            dport: u16::try_from(self.dport.min_value()?).ok()?,
            icmp_type: u8::try_from(self.icmp.min_value()?).ok()?,
        })
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ip_protocol={}", self.protocol)?;
        if !self.src.is_full(MAX_ADDR) {
            write!(f, " src={}", AddrSet(&self.src))?;
        }
        if !self.dst.is_full(MAX_ADDR) {
            write!(f, " dst={}", AddrSet(&self.dst))?;
        }
        let ported = self
            .protocol
            .intervals()
            .iter()
            .any(|iv| (iv.lo..=iv.hi).any(|p| has_ports(p as u8)));
        if ported {
            write!(f, " source_port={} dest_port={}", self.sport, self.dport)?;
        }
        if self.protocol.contains(u32::from(PROTO_ICMP)) {
            write!(f, " icmp_type={}", self.icmp)?;
        }
        Ok(())
    }
}

struct AddrSet<'a>(&'a IntervalSet);

impl fmt::Display for AddrSet<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, iv) in self.0.intervals().iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            let lo = std::net::Ipv4Addr::from(iv.lo);
            if iv.lo == iv.hi {
                write!(f, "{lo}")?;
            } else {
                write!(f, "{lo}-{}", std::net::Ipv4Addr::from(iv.hi))?;
            }
        }
        Ok(())
    }
}

pub fn matches(p: &Predicate, x: &HeaderPoint) -> bool {
    p.src.contains(x.src_addr)
        && p.dst.contains(x.dst_addr)
        && p.protocol.contains(u32::from(x.protocol))
        && p.sport.contains(u32::from(x.sport))
        && p.dport.contains(u32::from(x.dport))
        && p.icmp.contains(u32::from(x.icmp_type))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Deny,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MatchRule {
    pub action: Decision,
    pub predicate: Predicate,
    pub origin: String,
}

impl MatchRule {
    pub fn accept(predicate: Predicate, origin: impl Into<String>) -> Self {
        MatchRule {
            action: Decision::Accept,
            predicate,
            origin: origin.into(),
        }
    }

    pub fn deny(predicate: Predicate, origin: impl Into<String>) -> Self {
        MatchRule {
            action: Decision::Deny,
            predicate,
            origin: origin.into(),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HeaderSpaceError {
    #[error("deny rule `{0}` in a whitelist")]
    DenyInWhitelist(String),
}

/// `⊘`: the first matching rule decides; no match means deny.
pub fn eval_first_match(rules: &[MatchRule], x: &HeaderPoint) -> Decision {
    rules
        .iter()
        .find(|r| matches(&r.predicate, x))
        .map_or(Decision::Deny, |r| r.action)
}

/// `⊖`: the last matching rule decides; no match means deny.
pub fn eval_last_match(rules: &[MatchRule], x: &HeaderPoint) -> Decision {
    rules
        .iter()
        .rev()
        .find(|r| matches(&r.predicate, x))
        .map_or(Decision::Deny, |r| r.action)
}

/// Accept-only evaluation: accept iff any rule matches.
pub fn eval_whitelist(rules: &[MatchRule], x: &HeaderPoint) -> Result<Decision, HeaderSpaceError> {
    if let Some(r) = rules.iter().find(|r| r.action == Decision::Deny) {
        return Err(HeaderSpaceError::DenyInWhitelist(r.origin.clone()));
    }
    Ok(if rules.iter().any(|r| matches(&r.predicate, x)) {
        Decision::Accept
    } else {
        Decision::Deny
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tcp(dport: Interval) -> Predicate {
        Predicate::for_protocol(
            PROTO_TCP,
            IntervalSet::full(MAX_PORT),
            IntervalSet::from_interval(dport),
            IntervalSet::empty(),
        )
    }

    #[test]
    fn interval_set_normalizes_adjacent_and_overlapping() {
        let s = IntervalSet::from_intervals([
            Interval::new(81, 81),
            Interval::new(80, 80),
            Interval::new(90, 100),
            Interval::new(95, 120),
            Interval::new(5, 3),
        ]);
        assert_eq!(
            s.intervals(),
            &[Interval::new(80, 81), Interval::new(90, 120)]
        );
    }

    #[test]
    fn interval_set_difference_edges() {
        let a = IntervalSet::from_interval(Interval::new(0, MAX_ADDR));
        let b =
            IntervalSet::from_intervals([Interval::new(0, 0), Interval::new(MAX_ADDR, MAX_ADDR)]);
        assert_eq!(
            a.difference(&b).intervals(),
            &[Interval::new(1, MAX_ADDR - 1)]
        );
        let c = IntervalSet::from_interval(Interval::new(10, 20));
        let d = IntervalSet::from_intervals([Interval::new(12, 13), Interval::new(15, 15)]);
        assert_eq!(
            c.difference(&d).intervals(),
            &[
                Interval::new(10, 11),
                Interval::new(14, 14),
                Interval::new(16, 20)
            ]
        );
        assert!(c.difference(&c).is_empty());
    }

    #[test]
    fn matches_examples() {
        let x = HeaderPoint {
            src_addr: 7,
            dst_addr: 9,
            protocol: 6,
            sport: 1234,
            dport: 80,
            icmp_type: 0,
        };
        assert!(matches(&Predicate::full(), &x));
        assert!(matches(&tcp(Interval::single(80)), &x));
        let udp = HeaderPoint { protocol: 17, ..x };
        let mut proto_only = Predicate::full();
        proto_only.protocol = IntervalSet::single(6);
        assert!(!matches(&proto_only, &udp));
    }

    #[test]
    fn empty_rule_list_denies() {
        let x = HeaderPoint::service(6, 1, 2, 0);
        assert_eq!(eval_first_match(&[], &x), Decision::Deny);
        assert_eq!(eval_last_match(&[], &x), Decision::Deny);
        assert_eq!(eval_whitelist(&[], &x), Ok(Decision::Deny));
    }

    #[test]
    fn first_and_last_match_disagree_on_conflict() {
        let p = tcp(Interval::single(80));
        let rules = vec![MatchRule::accept(p.clone(), "a"), MatchRule::deny(p, "d")];
        let x = HeaderPoint::service(6, 1000, 80, 0);
        assert_eq!(eval_first_match(&rules, &x), Decision::Accept);
        assert_eq!(eval_last_match(&rules, &x), Decision::Deny);
    }

    #[test]
    fn whitelist_rejects_deny_rules() {
        let rules = vec![MatchRule::deny(Predicate::full(), "bad")];
        let x = HeaderPoint::service(6, 1, 2, 0);
        assert_eq!(
            eval_whitelist(&rules, &x),
            Err(HeaderSpaceError::DenyInWhitelist("bad".into()))
        );
    }

    #[test]
    fn whitelist_accepts_matching_https() {
        let rules = vec![MatchRule::accept(tcp(Interval::single(443)), "https")];
        assert_eq!(
            eval_whitelist(&rules, &HeaderPoint::service(6, 5000, 443, 0)),
            Ok(Decision::Accept)
        );
        assert_eq!(
            eval_whitelist(&rules, &HeaderPoint::service(6, 5000, 80, 0)),
            Ok(Decision::Deny)
        );
    }

    #[test]
    fn sample_lies_inside() {
        let p = tcp(Interval::new(85, 90)).with_addresses(
            IntervalSet::from_interval(Interval::new(10, 20)),
            IntervalSet::single(99),
        );
        let x = p.sample().unwrap();
        assert!(matches(&p, &x));
        assert_eq!(x.dport, 85);
    }
}
