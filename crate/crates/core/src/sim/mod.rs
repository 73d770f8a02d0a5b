//! Packet-filter simulation of a compiled policy: positive vetting of every
//! flow rule and negative vetting by exhaustive scan.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::net::Ipv4Addr;

use serde::Serialize;
use thiserror::Error;

use crate::header_space::{
    matches, HeaderPoint, Interval, IntervalSet, MAX_ICMP, MAX_PORT, PROTO_ICMP, PROTO_TCP,
    PROTO_UDP,
};
use crate::netgen::{
    enumerate_paths, realize, Acl, AclRule, Action, Direction, Hop, InterfaceAssignment,
    NetworkPolicy,
};
use crate::policy_lang::FlowRule;
use crate::topo_model::{cidr_interval, ZoneConduitModel};

/// Source port used by scan packets, the first IANA dynamic port.
pub const SCAN_SOURCE_PORT: u16 = 49152;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("address {0} is in no zone")]
    NoZone(Ipv4Addr),
    #[error("unknown zone `{0}`")]
    UnknownZone(String),
}

/// What the sender means the packet to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Intent {
    /// Opens a connection.
    New,
    /// Belongs to an existing connection.
    Established,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub header: HeaderPoint,
    pub ingress_zone: String,
    pub intent: Intent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Delivered,
    Dropped,
}

/// A firewall decision on the way.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceHop {
    pub firewall: String,
    pub interface: String,
    pub acl: String,
    /// 1-based index of the matching rule.
    pub rule: usize,
    pub action: Action,
}

impl fmt::Display for TraceHop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}#{}={}",
            self.firewall, self.interface, self.acl, self.rule, self.action
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Outcome {
    pub verdict: Verdict,
    pub trace: Vec<TraceHop>,
}

/// Connection entries per firewall: (protocol, src, dst, sport, dport).
type ConnKey = (u8, u32, u32, u16, u16);

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConnTable {
    entries: BTreeSet<(String, ConnKey)>,
}

impl ConnTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn key(h: &HeaderPoint) -> ConnKey {
        (h.protocol, h.src_addr, h.dst_addr, h.sport, h.dport)
    }

    fn tracks(&self, fw: &str, h: &HeaderPoint) -> bool {
        let k = Self::key(h);
        let rev = (k.0, k.2, k.1, k.4, k.3);
        self.entries.contains(&(fw.to_string(), k)) || self.entries.contains(&(fw.to_string(), rev))
    }
}

/// Connection state a firewall sees for a packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CtState {
    New,
    Established,
    /// Claims to belong to a connection the firewall does not know.
    Invalid,
}

fn rule_matches(r: &AclRule, h: &HeaderPoint, ct: CtState) -> bool {
    let state_ok = match ct {
        _ if !r.state.new && !r.state.established => true,
        CtState::New => r.state.new,
        CtState::Established => r.state.established,
        CtState::Invalid => false,
    };
    state_ok && matches(&r.predicate(), h)
}

/// First matching rule (1-based) and its action for a packet the
/// firewall sees as opening a connection, or as part of a tracked one.
/// Deny when nothing matches.
pub fn first_match(acl: &Acl, h: &HeaderPoint, established: bool) -> (usize, Action) {
    eval_ct(
        acl,
        h,
        if established {
            CtState::Established
        } else {
            CtState::New
        },
    )
}

fn eval_ct(acl: &Acl, h: &HeaderPoint, ct: CtState) -> (usize, Action) {
    acl.rules
        .iter()
        .position(|r| rule_matches(r, h, ct))
        .map_or((acl.rules.len() + 1, Action::Deny), |i| {
            (i + 1, acl.rules[i].action)
        })
}

type RouteCache = BTreeMap<(String, String), Vec<Vec<Hop>>>;

/// A compiled policy loaded for simulation.
#[derive(Debug, Clone)]
pub struct SimNetwork {
    pub model: ZoneConduitModel,
    pub flows: Vec<FlowRule>,
    acls: BTreeMap<String, Vec<Acl>>,
    bindings: BTreeMap<(String, String, Direction), String>,
    routes: RefCell<RouteCache>,
}

impl SimNetwork {
    pub fn new(
        model: ZoneConduitModel,
        flows: Vec<FlowRule>,
        acls: BTreeMap<String, Vec<Acl>>,
        assignments: &[InterfaceAssignment],
    ) -> Self {
        let bindings = assignments
            .iter()
            .map(|a| {
                (
                    (a.firewall.clone(), a.interface.clone(), a.direction),
                    a.acl.clone(),
                )
            })
            .collect();
        SimNetwork {
            model,
            flows,
            acls,
            bindings,
            routes: RefCell::new(BTreeMap::new()),
        }
    }

    pub fn from_policy(p: &NetworkPolicy) -> Self {
        Self::new(
            p.model.clone(),
            p.flows.clone(),
            p.acls.clone(),
            &p.assignments,
        )
    }

    pub fn acls(&self) -> &BTreeMap<String, Vec<Acl>> {
        &self.acls
    }

    pub fn acls_mut(&mut self) -> &mut BTreeMap<String, Vec<Acl>> {
        &mut self.acls
    }

    /// Every realization of every valid path, in path order.
    pub fn routes(&self, src: &str, dst: &str) -> Vec<Vec<Hop>> {
        let key = (src.to_string(), dst.to_string());
        if let Some(r) = self.routes.borrow().get(&key) {
            return r.clone();
        }
        let r: Vec<Vec<Hop>> = enumerate_paths(&self.model, src, dst)
            .unwrap_or_default()
            .iter()
            .flat_map(|p| realize(&self.model, p))
            .collect();
        self.routes.borrow_mut().insert(key, r.clone());
        r
    }

    fn acl_for(&self, fw: &str, iface: &str, dir: Direction) -> Option<&Acl> {
        let name = self
            .bindings
            .get(&(fw.to_string(), iface.to_string(), dir))?;
        self.acls.get(fw)?.iter().find(|a| &a.name == name)
    }

    /// Walks one route; returns the outcome and the entries to record.
    fn walk(
        &self,
        conn: &ConnTable,
        route: &[Hop],
        pkt: &Packet,
    ) -> (Outcome, Vec<(String, ConnKey)>) {
        let h = &pkt.header;
        let mut trace = Vec::new();
        let mut created = Vec::new();
        for hop in route {
            let (iface, dir) = match (&hop.ingress, &hop.egress) {
                (Some(i), _) => (i, Direction::Inbound),
                (None, Some(e)) => (e, Direction::Outbound),
                (None, None) => continue,
            };
            let ct = if conn.tracks(&hop.firewall, h) {
                CtState::Established
            } else if pkt.intent == Intent::New {
                CtState::New
            } else {
                CtState::Invalid
            };
            let Some(acl) = self.acl_for(&hop.firewall, iface, dir) else {
                trace.push(TraceHop {
                    firewall: hop.firewall.clone(),
                    interface: iface.clone(),
                    acl: String::new(),
                    rule: 0,
                    action: Action::Deny,
                });
                return (
                    Outcome {
                        verdict: Verdict::Dropped,
                        trace,
                    },
                    created,
                );
            };
            let (rule, action) = eval_ct(acl, h, ct);
            trace.push(TraceHop {
                firewall: hop.firewall.clone(),
                interface: iface.clone(),
                acl: acl.name.clone(),
                rule,
                action,
            });
            if action == Action::Deny {
                return (
                    Outcome {
                        verdict: Verdict::Dropped,
                        trace,
                    },
                    created,
                );
            }
            if ct == CtState::New {
                created.push((hop.firewall.clone(), ConnTable::key(h)));
            }
        }
        (
            Outcome {
                verdict: Verdict::Delivered,
                trace,
            },
            created,
        )
    }

    /// Sends a packet from its ingress zone toward the zone owning its
    /// destination address. It is delivered when some route accepts it at
    /// every firewall; connection entries of that route are recorded.
    pub fn inject(&self, conn: &mut ConnTable, pkt: &Packet) -> Result<Outcome, SimError> {
        if self.model.zone(&pkt.ingress_zone).is_none() {
            return Err(SimError::UnknownZone(pkt.ingress_zone.clone()));
        }
        let dst = self
            .model
            .zone_of_addr(pkt.header.dst_addr)
            .ok_or(SimError::NoZone(Ipv4Addr::from(pkt.header.dst_addr)))?;
        if dst.name == pkt.ingress_zone {
            return Ok(Outcome {
                verdict: Verdict::Delivered,
                trace: Vec::new(),
            });
        }
        let mut first: Option<Outcome> = None;
        for route in self.routes(&pkt.ingress_zone, &dst.name) {
            let (out, created) = self.walk(conn, &route, pkt);
            if out.verdict == Verdict::Delivered {
                conn.entries.extend(created);
                return Ok(out);
            }
            first.get_or_insert(out);
        }
        Ok(first.unwrap_or(Outcome {
            verdict: Verdict::Dropped,
            trace: Vec::new(),
        }))
    }
}

/// Result function for one flow rule: 1 when its test packets got through.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VetResult {
    pub rule: String,
    pub outcome: u8,
    pub trace: Vec<TraceHop>,
}

impl fmt::Display for VetResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let hops: Vec<String> = self.trace.iter().map(ToString::to_string).collect();
        let status = if self.outcome == 1 { "PASS" } else { "FAIL" };
        write!(
            f,
            "{status} {} {}",
            self.rule.replace(' ', ""),
            hops.join(",")
        )
    }
}

fn lowest(s: &IntervalSet) -> u32 {
    s.min_value().unwrap_or(0)
}

fn representatives(m: &ZoneConduitModel, zone: &str) -> Vec<u32> {
    m.zone(zone)
        .map(|z| z.cidrs.iter().map(|c| cidr_interval(c).lo).collect())
        .unwrap_or_default()
}

/// One packet per flow rule and address pair, lowest value in every
/// dimension; TCP also needs the established reply back.
pub fn vet_positive(net: &SimNetwork) -> Vec<VetResult> {
    let mut out = Vec::new();
    for f in &net.flows {
        let s = &f.service;
        let (sport, dport, icmp) = match s.protocol {
            PROTO_TCP | PROTO_UDP => (lowest(&s.source_ports), lowest(&s.dest_ports), 0),
            PROTO_ICMP => (0, 0, lowest(&s.icmp_types)),
            _ => (0, 0, 0),
        };
        let mut ok = true;
        let mut trace = Vec::new();
        'pairs: for a in representatives(&net.model, &f.src_zone) {
            for b in representatives(&net.model, &f.dst_zone) {
                let mut conn = ConnTable::new();
                let header = HeaderPoint {
                    src_addr: a,
                    dst_addr: b,
                    protocol: s.protocol,
                    sport: sport as u16,
                    dport: dport as u16,
                    icmp_type: icmp as u8,
                };
                let fwd = Packet {
                    header,
                    ingress_zone: f.src_zone.clone(),
                    intent: Intent::New,
                };
                let Ok(o) = net.inject(&mut conn, &fwd) else {
                    ok = false;
                    break 'pairs;
                };
                trace.extend(o.trace);
                if o.verdict != Verdict::Delivered {
                    ok = false;
                    break 'pairs;
                }
                if s.protocol == PROTO_TCP {
                    let reply = HeaderPoint {
                        src_addr: b,
                        dst_addr: a,
                        sport: header.dport,
                        dport: header.sport,
                        ..header
                    };
                    let back = Packet {
                        header: reply,
                        ingress_zone: f.dst_zone.clone(),
                        intent: Intent::Established,
                    };
                    match net.inject(&mut conn, &back) {
                        Ok(o) => {
                            trace.extend(o.trace);
                            if o.verdict != Verdict::Delivered {
                                ok = false;
                                break 'pairs;
                            }
                        }
                        Err(_) => {
                            ok = false;
                            break 'pairs;
                        }
                    }
                }
            }
        }
        if representatives(&net.model, &f.src_zone).is_empty()
            || representatives(&net.model, &f.dst_zone).is_empty()
        {
            ok = false;
        }
        out.push(VetResult {
            rule: f.to_string(),
            outcome: u8::from(ok),
            trace,
        });
    }
    out
}

/// What negative vetting scans.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanSpec {
    pub protocols: Vec<u8>,
    /// Destination ports for TCP and UDP.
    pub ports: IntervalSet,
    pub icmp_types: IntervalSet,
}

impl ScanSpec {
    pub fn new(protocols: Vec<u8>, ports: IntervalSet) -> Self {
        ScanSpec {
            protocols,
            ports,
            icmp_types: IntervalSet::full(MAX_ICMP),
        }
    }

    /// Protocols 1, 6, 17; ports 0-1023 and every destination port a flow
    /// names.
    pub fn default_for(flows: &[FlowRule]) -> Self {
        let mut ports = IntervalSet::from_interval(Interval::new(0, 1023));
        for f in flows {
            if matches!(f.service.protocol, PROTO_TCP | PROTO_UDP)
                && !f.service.dest_ports.is_full(MAX_PORT)
            {
                ports = ports.union(&f.service.dest_ports);
            }
        }
        ScanSpec::new(vec![PROTO_ICMP, PROTO_TCP, PROTO_UDP], ports)
    }

    pub fn empty() -> Self {
        ScanSpec {
            protocols: Vec::new(),
            ports: IntervalSet::empty(),
            icmp_types: IntervalSet::empty(),
        }
    }
}

/// A delivery no flow rule asked for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Leak {
    pub src_zone: String,
    pub dst_zone: String,
    pub header: HeaderPoint,
    pub trace: Vec<TraceHop>,
}

impl fmt::Display for Leak {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let h = &self.header;
        let hops: Vec<String> = self.trace.iter().map(ToString::to_string).collect();
        write!(
            f,
            "LEAK {}->{} proto={} {}->{} sport={} dport={} icmp={} {}",
            self.src_zone,
            self.dst_zone,
            h.protocol,
            Ipv4Addr::from(h.src_addr),
            Ipv4Addr::from(h.dst_addr),
            h.sport,
            h.dport,
            h.icmp_type,
            hops.join(",")
        )
    }
}

fn implied(flows: &[FlowRule], src: &str, dst: &str, h: &HeaderPoint) -> bool {
    flows
        .iter()
        .any(|f| f.src_zone == src && f.dst_zone == dst && matches(&f.service.predicate(), h))
}

/// NEW packets between every ordered zone pair over the scan space, from
/// each address block of the source zone to each block of the destination.
pub fn vet_negative(net: &SimNetwork, scan: &ScanSpec) -> Vec<Leak> {
    let mut leaks = Vec::new();
    let zones: Vec<String> = net.model.zone_names().into_iter().collect();
    for a in &zones {
        for b in &zones {
            if a == b {
                continue;
            }
            for sa in representatives(&net.model, a) {
                for da in representatives(&net.model, b) {
                    // a block nested in a firewall zone's address answers for that zone
                    if net.model.zone_of_addr(da).map(|z| &z.name) != Some(b) {
                        continue;
                    }
                    for &proto in &scan.protocols {
                        let values: Vec<u32> = match proto {
                            PROTO_TCP | PROTO_UDP => scan
                                .ports
                                .intervals()
                                .iter()
                                .flat_map(|iv| iv.lo..=iv.hi)
                                .collect(),
                            PROTO_ICMP => scan
                                .icmp_types
                                .intervals()
                                .iter()
                                .flat_map(|iv| iv.lo..=iv.hi)
                                .collect(),
                            _ => vec![0],
                        };
                        for v in values {
                            let ported = matches!(proto, PROTO_TCP | PROTO_UDP);
                            let header = HeaderPoint {
                                src_addr: sa,
                                dst_addr: da,
                                protocol: proto,
                                sport: if ported { SCAN_SOURCE_PORT } else { 0 },
                                dport: if ported { v as u16 } else { 0 },
                                icmp_type: if proto == PROTO_ICMP { v as u8 } else { 0 },
                            };
                            let pkt = Packet {
                                header,
                                ingress_zone: a.clone(),
                                intent: Intent::New,
                            };
                            let Ok(o) = net.inject(&mut ConnTable::new(), &pkt) else {
                                continue;
                            };
                            if o.verdict == Verdict::Delivered
                                && !implied(&net.flows, a, b, &header)
                            {
                                leaks.push(Leak {
                                    src_zone: a.clone(),
                                    dst_zone: b.clone(),
                                    header,
                                    trace: o.trace,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    leaks
}
