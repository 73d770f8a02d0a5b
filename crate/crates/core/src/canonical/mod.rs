//! Canonical form of conduit policies.
//!
//! Each (protocol, icmp type) slice of a whitelist is cut into horizontal
//! strips along the destination-port axis. Every strip carries the set of
//! source ports accepted for all destination ports in it, and neighbouring
//! strips with the same source-port set are merged. Two whitelists accept
//! the same headers exactly when their canonical forms are equal.

mod best_practice;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::header_space::{
    Decision, HeaderPoint, Interval, IntervalSet, MatchRule, Predicate, PROTO_ICMP, SENTINEL,
};
use crate::policy_lang::{protocol_name, Service};

pub use best_practice::{
    check_best_practice, conduit_policies, BestPractice, BestPracticeError, Bound, Violation,
    ANY_ZONE, PROTECTED_GROUP,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CanonicalError {
    #[error("deny rule `{0}` cannot be canonicalized as a whitelist")]
    DenyRule(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Strip {
    pub dport: Interval,
    pub sport: IntervalSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CanonicalSlice {
    pub protocol: u8,
    pub icmp_type: Option<u8>,
    pub strips: Vec<Strip>,
}

impl CanonicalSlice {
    fn key(&self) -> (u8, Option<u8>) {
        (self.protocol, self.icmp_type)
    }

    fn sport_at(&self, dport: u32) -> Option<&IntervalSet> {
        let i = self.strips.partition_point(|s| s.dport.hi < dport);
        self.strips
            .get(i)
            .filter(|s| s.dport.contains(dport))
            .map(|s| &s.sport)
    }
}

impl fmt::Display for CanonicalSlice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let proto =
            protocol_name(self.protocol).map_or_else(|| self.protocol.to_string(), str::to_string);
        for (i, s) in self.strips.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "protocol={} ({proto})", self.protocol)?;
            if let Some(t) = self.icmp_type {
                write!(f, " icmp_type={t}")?;
            } else {
                write!(f, " dport={} sport={}", s.dport, s.sport)?;
            }
        }
        Ok(())
    }
}

/// A point of the canonical space: slices ordered by (protocol, icmp type).
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CanonicalPolicy {
    pub slices: Vec<CanonicalSlice>,
}

type Rect = (IntervalSet, IntervalSet);

/// Turns rectangles (sport, dport) into maximal dport strips.
fn sweep(rects: &[Rect]) -> Vec<Strip> {
    let mut bounds: Vec<u64> = Vec::new();
    for (_, d) in rects {
        for iv in d.intervals() {
            bounds.push(u64::from(iv.lo));
            bounds.push(u64::from(iv.hi) + 1);
        }
    }
    bounds.sort_unstable();
    bounds.dedup();
    let mut strips: Vec<Strip> = Vec::new();
    for w in bounds.windows(2) {
        let lo = w[0] as u32;
        let hi = (w[1] - 1) as u32;
        let sport = rects
            .iter()
            .filter(|(_, d)| d.contains(lo))
            .fold(IntervalSet::empty(), |acc, (s, _)| acc.union(s));
        push_strip(&mut strips, Interval::new(lo, hi), sport);
    }
    strips
}

fn push_strip(strips: &mut Vec<Strip>, dport: Interval, sport: IntervalSet) {
    if sport.is_empty() {
        return;
    }
    if let Some(last) = strips.last_mut() {
        if u64::from(last.dport.hi) + 1 == u64::from(dport.lo) && last.sport == sport {
            last.dport.hi = dport.hi;
            return;
        }
    }
    strips.push(Strip { dport, sport });
}

impl CanonicalPolicy {
    fn from_groups(groups: BTreeMap<(u8, Option<u8>), Vec<Rect>>) -> Self {
        let slices = groups
            .into_iter()
            .map(|((protocol, icmp_type), rects)| CanonicalSlice {
                protocol,
                icmp_type,
                strips: sweep(&rects),
            })
            .filter(|s| !s.strips.is_empty())
            .collect();
        CanonicalPolicy { slices }
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn slice(&self, protocol: u8, icmp_type: Option<u8>) -> Option<&CanonicalSlice> {
        self.slices
            .iter()
            .find(|s| s.key() == (protocol, icmp_type))
    }

    /// Membership, ignoring the address dimensions.
    pub fn accepts(&self, x: &HeaderPoint) -> bool {
        let icmp = (x.protocol == PROTO_ICMP).then_some(x.icmp_type);
        let Some(slice) = self.slice(x.protocol, icmp) else {
            return false;
        };
        slice
            .sport_at(u32::from(x.dport))
            .is_some_and(|s| s.contains(u32::from(x.sport)))
    }

    /// Strip-wise combination of two canonical forms.
    fn combine(
        &self,
        other: &Self,
        op: impl Fn(&IntervalSet, &IntervalSet) -> IntervalSet,
    ) -> Self {
        let keys: BTreeSet<(u8, Option<u8>)> = self
            .slices
            .iter()
            .chain(&other.slices)
            .map(CanonicalSlice::key)
            .collect();
        let empty = IntervalSet::empty();
        let mut slices = Vec::new();
        for (protocol, icmp_type) in keys {
            let a = self.slice(protocol, icmp_type);
            let b = other.slice(protocol, icmp_type);
            let mut bounds: Vec<u64> = Vec::new();
            for s in a.into_iter().chain(b).flat_map(|s| &s.strips) {
                bounds.push(u64::from(s.dport.lo));
                bounds.push(u64::from(s.dport.hi) + 1);
            }
            bounds.sort_unstable();
            bounds.dedup();
            let mut strips = Vec::new();
            for w in bounds.windows(2) {
                let lo = w[0] as u32;
                let sa = a.and_then(|s| s.sport_at(lo)).unwrap_or(&empty);
                let sb = b.and_then(|s| s.sport_at(lo)).unwrap_or(&empty);
                push_strip(
                    &mut strips,
                    Interval::new(lo, (w[1] - 1) as u32),
                    op(sa, sb),
                );
            }
            if !strips.is_empty() {
                slices.push(CanonicalSlice {
                    protocol,
                    icmp_type,
                    strips,
                });
            }
        }
        CanonicalPolicy { slices }
    }

    pub fn union(&self, other: &Self) -> Self {
        self.combine(other, IntervalSet::union)
    }

    pub fn intersect(&self, other: &Self) -> Self {
        self.combine(other, IntervalSet::intersect)
    }

    /// Headers accepted by `self` but not by `other`.
    pub fn difference(&self, other: &Self) -> Self {
        self.combine(other, IntervalSet::difference)
    }

    /// Accept-set containment `self ⊆ other`.
    pub fn is_included_in(&self, other: &Self) -> bool {
        self.slices.iter().all(|a| {
            let Some(b) = other.slice(a.protocol, a.icmp_type) else {
                return false;
            };
            a.strips.iter().all(|s| {
                let mut d = s.dport.lo;
                loop {
                    let i = b.strips.partition_point(|t| t.dport.hi < d);
                    let Some(t) = b.strips.get(i).filter(|t| t.dport.contains(d)) else {
                        return false;
                    };
                    if !s.sport.is_subset(&t.sport) {
                        return false;
                    }
                    if t.dport.hi >= s.dport.hi {
                        return true;
                    }
                    d = t.dport.hi + 1;
                }
            })
        })
    }

    /// The strips as header-space rectangles over all addresses.
    pub fn rectangles(&self) -> Vec<Predicate> {
        let mut out = Vec::new();
        for slice in &self.slices {
            let icmp = IntervalSet::single(slice.icmp_type.map_or(SENTINEL, u32::from));
            for s in &slice.strips {
                let p = Predicate::for_protocol(
                    slice.protocol,
                    s.sport.clone(),
                    IntervalSet::from_interval(s.dport),
                    icmp.clone(),
                );
                out.push(p);
            }
        }
        out
    }
}

impl fmt::Display for CanonicalPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.slices.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

/// Canonical form of a whitelist. Address dimensions are ignored: a
/// conduit's end zones already fix them.
pub fn canonicalize(rules: &[MatchRule]) -> Result<CanonicalPolicy, CanonicalError> {
    let mut groups: BTreeMap<(u8, Option<u8>), Vec<Rect>> = BTreeMap::new();
    for r in rules {
        if r.action == Decision::Deny {
            return Err(CanonicalError::DenyRule(r.origin.clone()));
        }
        let p = &r.predicate;
        if p.is_empty() {
            continue;
        }
        for piv in p.protocol.intervals() {
            for proto in piv.lo..=piv.hi.min(255) {
                let proto = proto as u8;
                if proto == PROTO_ICMP {
                    for tiv in p.icmp.intervals() {
                        for t in tiv.lo..=tiv.hi.min(255) {
                            groups
                                .entry((proto, Some(t as u8)))
                                .or_default()
                                .push((p.sport.clone(), p.dport.clone()));
                        }
                    }
                } else {
                    groups
                        .entry((proto, None))
                        .or_default()
                        .push((p.sport.clone(), p.dport.clone()));
                }
            }
        }
    }
    Ok(CanonicalPolicy::from_groups(groups))
}

/// Canonical form of the services a conduit direction admits.
pub fn canonicalize_services<'a>(
    services: impl IntoIterator<Item = &'a Service>,
) -> CanonicalPolicy {
    let rules: Vec<MatchRule> = services
        .into_iter()
        .map(|s| MatchRule::accept(s.predicate(), s.name.clone()))
        .collect();
    canonicalize(&rules).expect("services only produce accept rules")
}

/// `p ≡ q`: same accept set.
pub fn equivalent(p: &[MatchRule], q: &[MatchRule]) -> Result<bool, CanonicalError> {
    Ok(canonicalize(p)? == canonicalize(q)?)
}

/// `p ⊆ q`: `p` accepts nothing `q` would deny.
pub fn includes(p: &[MatchRule], q: &[MatchRule]) -> Result<bool, CanonicalError> {
    Ok(canonicalize(p)?.is_included_in(&canonicalize(q)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::header_space::{IntervalSet as S, PROTO_TCP, PROTO_UDP};

    fn rect(sport: (u32, u32), dport: (u32, u32)) -> MatchRule {
        MatchRule::accept(
            Predicate::for_protocol(
                PROTO_TCP,
                S::from_interval(Interval::new(sport.0, sport.1)),
                S::from_interval(Interval::new(dport.0, dport.1)),
                S::empty(),
            ),
            "r",
        )
    }

    #[test]
    fn single_rectangle_is_identity() {
        let c = canonicalize(&[rect((0, 100), (80, 90))]).unwrap();
        assert_eq!(c.slices.len(), 1);
        assert_eq!(
            c.slices[0].strips,
            vec![Strip {
                dport: Interval::new(80, 90),
                sport: S::from_interval(Interval::new(0, 100))
            }]
        );
    }

    #[test]
    fn different_covers_same_form() {
        let a = [rect((0, 65535), (80, 90)), rect((0, 100), (91, 100))];
        let b = [
            rect((0, 65535), (80, 85)),
            rect((0, 65535), (86, 90)),
            rect((0, 100), (91, 100)),
        ];
        assert_eq!(canonicalize(&a).unwrap(), canonicalize(&b).unwrap());
        assert!(equivalent(&a, &b).unwrap());
    }

    #[test]
    fn adjacent_strips_merge() {
        let c = canonicalize(&[rect((0, 65535), (80, 80)), rect((0, 65535), (81, 81))]).unwrap();
        assert_eq!(c.slices[0].strips.len(), 1);
        assert_eq!(c.slices[0].strips[0].dport, Interval::new(80, 81));
    }

    #[test]
    fn disjoint_not_equivalent() {
        assert!(!equivalent(&[rect((0, 65535), (80, 80))], &[rect((0, 65535), (81, 81))]).unwrap());
    }

    #[test]
    fn inclusion_subset() {
        let p = [rect((0, 65535), (443, 443))];
        let q = [rect((0, 65535), (80, 80)), rect((0, 65535), (443, 443))];
        assert!(includes(&p, &q).unwrap());
        assert!(!includes(&q, &p).unwrap());
        assert!(includes(&q, &q).unwrap());
    }

    #[test]
    fn deny_rejected() {
        let mut r = rect((0, 1), (0, 1));
        r.action = Decision::Deny;
        assert!(matches!(
            canonicalize(&[r]),
            Err(CanonicalError::DenyRule(_))
        ));
    }

    #[test]
    fn difference_gives_evidence() {
        let p = canonicalize(&[rect((0, 65535), (80, 80)), rect((0, 65535), (443, 443))]).unwrap();
        let q = canonicalize(&[rect((0, 65535), (443, 443))]).unwrap();
        let d = p.difference(&q);
        assert_eq!(d.slices[0].strips.len(), 1);
        assert_eq!(d.slices[0].strips[0].dport, Interval::single(80));
    }

    #[test]
    fn icmp_types_get_own_slices() {
        let echo = Service::icmp("echo", 8);
        let reply = Service::icmp("reply", 0);
        let c = canonicalize_services([&echo, &reply]);
        let keys: Vec<_> = c.slices.iter().map(|s| (s.protocol, s.icmp_type)).collect();
        assert_eq!(keys, vec![(1, Some(0)), (1, Some(8))]);
    }

    #[test]
    fn protocol_order() {
        let c = canonicalize_services([
            &Service::udp("dns", Interval::single(53)),
            &Service::tcp("dns", Interval::single(53)),
        ]);
        assert_eq!(
            c.slices.iter().map(|s| s.protocol).collect::<Vec<_>>(),
            vec![PROTO_TCP, PROTO_UDP]
        );
    }
}
