//! The high-level policy language: lexer, parser, import resolution,
//! validation and rule expansion into inter-zone flows.

pub mod ast;
mod expand;
mod lexer;
pub mod library;
mod parser;
mod printer;
mod resolve;
mod validate;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diag::{Diagnostic, Pos};
use crate::header_space::{
    has_ports, Interval, IntervalSet, Predicate, MAX_ICMP, MAX_PORT, PROTO_ICMP, PROTO_OSPF,
    PROTO_TCP, PROTO_UDP,
};

pub use ast::{Attr, Operator, SetExpr, Value};
pub use expand::{expand_rules, ExpandError};
pub use lexer::{tokenize, Token, TokenKind};
pub use library::{BuiltinLibrary, ChainImporter, DirImporter, Importer};
pub use parser::parse_source;
pub use printer::pretty_print;
pub use resolve::{parse_policy, parse_policy_file, resolve_service_expr};
pub use validate::{validate_spec, validate_zone_refs};

pub type PortRange = Interval;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyErrorKind {
    #[error("{0}")]
    Lex(String),
    #[error("unexpected {found}, expected {expected}")]
    Parse { found: String, expected: String },
    #[error("cannot resolve import `{0}`")]
    UnresolvedImport(String),
    #[error("duplicate declaration of `{name}` (first declared at {first})")]
    Duplicate { name: String, first: String },
    #[error("reference to undeclared name `{0}`")]
    Undeclared(String),
    #[error("ambiguous name `{name}` (candidates: {candidates})")]
    Ambiguous { name: String, candidates: String },
    #[error("cyclic group definition involving `{0}`")]
    Cycle(String),
    #[error("{0}")]
    Invalid(String),
}

/// An error located in a policy source file.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{}", self.to_diagnostic())]
pub struct PolicyError {
    pub file: String,
    pub pos: Option<Pos>,
    pub kind: PolicyErrorKind,
}

impl PolicyError {
    pub fn new(pos: Option<Pos>, kind: PolicyErrorKind) -> Self {
        PolicyError {
            file: String::new(),
            pos,
            kind,
        }
    }

    pub(crate) fn lex(pos: Pos, msg: impl Into<String>) -> Self {
        PolicyError::new(Some(pos), PolicyErrorKind::Lex(msg.into()))
    }

    pub(crate) fn parse(pos: Pos, found: impl Into<String>, expected: impl Into<String>) -> Self {
        PolicyError::new(
            Some(pos),
            PolicyErrorKind::Parse {
                found: found.into(),
                expected: expected.into(),
            },
        )
    }

    pub(crate) fn at(file: &str, pos: Pos, kind: PolicyErrorKind) -> Self {
        PolicyError {
            file: file.to_string(),
            pos: Some(pos),
            kind,
        }
    }

    pub fn with_file(mut self, file: &str) -> Self {
        if self.file.is_empty() {
            self.file = file.to_string();
        }
        self
    }

    pub fn pos(&self) -> Option<Pos> {
        self.pos
    }

    pub fn to_diagnostic(&self) -> Diagnostic {
        let file = if self.file.is_empty() {
            "<input>"
        } else {
            &self.file
        };
        Diagnostic::error(file, self.pos.unwrap_or_default(), self.kind.to_string())
    }
}

/// Known protocol keywords and their IANA numbers. `ip` stands for every
/// protocol and is only useful to spell out a (prohibited) generic service.
pub const PROTOCOL_NAMES: &[(&str, u8)] = &[
    ("ip", 0),
    ("icmp", PROTO_ICMP),
    ("igmp", 2),
    ("tcp", PROTO_TCP),
    ("udp", PROTO_UDP),
    ("gre", 47),
    ("esp", 50),
    ("ah", 51),
    ("ospf", PROTO_OSPF),
    ("sctp", 132),
];

pub const ALL_PROTOCOLS: u8 = 0;

pub fn protocol_number(name: &str) -> Option<u8> {
    PROTOCOL_NAMES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, v)| *v)
}

pub fn protocol_name(num: u8) -> Option<&'static str> {
    PROTOCOL_NAMES
        .iter()
        .find(|(_, v)| *v == num)
        .map(|(n, _)| *n)
}

/// A service `(Pr, PrA, PrV)`: a protocol plus attribute constraints.
///
/// Ports are stored unchecked so that out-of-range values written in a
/// policy survive until validation reports them.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Service {
    pub name: String,
    pub protocol: u8,
    pub source_ports: IntervalSet,
    pub dest_ports: IntervalSet,
    pub icmp_types: IntervalSet,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub comment: String,
}

/// The value of a service with its name and comment stripped.
pub type ServiceKey = (u8, IntervalSet, IntervalSet, IntervalSet);

impl Service {
    /// A service with the attribute defaults of its protocol.
    pub fn new(name: impl Into<String>, protocol: u8) -> Self {
        let (source_ports, dest_ports) = if has_ports(protocol) {
            (IntervalSet::full(MAX_PORT), IntervalSet::full(MAX_PORT))
        } else {
            (IntervalSet::empty(), IntervalSet::empty())
        };
        let icmp_types = if protocol == PROTO_ICMP {
            IntervalSet::full(MAX_ICMP)
        } else {
            IntervalSet::empty()
        };
        Service {
            name: name.into(),
            protocol,
            source_ports,
            dest_ports,
            icmp_types,
            comment: String::new(),
        }
    }

    pub fn tcp(name: impl Into<String>, dest: Interval) -> Self {
        Service {
            dest_ports: IntervalSet::from_interval(dest),
            ..Service::new(name, PROTO_TCP)
        }
    }

    pub fn udp(name: impl Into<String>, dest: Interval) -> Self {
        Service {
            dest_ports: IntervalSet::from_interval(dest),
            ..Service::new(name, PROTO_UDP)
        }
    }

    pub fn icmp(name: impl Into<String>, icmp_type: u32) -> Self {
        Service {
            icmp_types: IntervalSet::single(icmp_type),
            ..Service::new(name, PROTO_ICMP)
        }
    }

    pub fn with_comment(mut self, comment: impl Into<String>) -> Self {
        self.comment = comment.into();
        self
    }

    pub fn key(&self) -> ServiceKey {
        (
            self.protocol,
            self.source_ports.clone(),
            self.dest_ports.clone(),
            self.icmp_types.clone(),
        )
    }

    /// Last segment of a possibly namespaced name.
    pub fn short_name(&self) -> &str {
        self.name.rsplit('.').next().unwrap_or(&self.name)
    }

    /// The header-space region of the service over all addresses.
    pub fn predicate(&self) -> Predicate {
        if self.protocol == ALL_PROTOCOLS {
            return Predicate::full();
        }
        Predicate::for_protocol(
            self.protocol,
            self.source_ports.clone(),
            self.dest_ports.clone(),
            self.icmp_types.clone(),
        )
    }

    /// Which generic-service class this service falls into, if any.
    pub fn generic_class(&self) -> Option<&'static str> {
        let full = |s: &IntervalSet| s.is_full(MAX_PORT);
        match self.protocol {
            ALL_PROTOCOLS => Some("all-IP"),
            PROTO_TCP if full(&self.source_ports) && full(&self.dest_ports) => Some("all-TCP"),
            PROTO_UDP if full(&self.source_ports) && full(&self.dest_ports) => Some("all-UDP"),
            _ => None,
        }
    }
}

impl fmt::Display for Service {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.name, self.predicate())
    }
}

/// A set of services, deduplicated by value and kept in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ServiceSet {
    members: Vec<Service>,
}

impl ServiceSet {
    pub fn new() -> Self {
        ServiceSet::default()
    }

    pub fn insert(&mut self, s: Service) -> bool {
        if self.contains(&s) {
            return false;
        }
        self.members.push(s);
        true
    }

    /// Membership by value; names and comments are ignored.
    pub fn contains(&self, s: &Service) -> bool {
        let key = s.key();
        self.members.iter().any(|m| m.key() == key)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Service> {
        self.members.iter()
    }

    pub fn union(&self, other: &ServiceSet) -> ServiceSet {
        let mut out = self.clone();
        for s in &other.members {
            out.insert(s.clone());
        }
        out
    }

    pub fn intersect(&self, other: &ServiceSet) -> ServiceSet {
        self.members
            .iter()
            .filter(|s| other.contains(s))
            .cloned()
            .collect()
    }

    pub fn difference(&self, other: &ServiceSet) -> ServiceSet {
        self.members
            .iter()
            .filter(|s| !other.contains(s))
            .cloned()
            .collect()
    }

    pub fn keys(&self) -> BTreeSet<ServiceKey> {
        self.members.iter().map(Service::key).collect()
    }
}

impl FromIterator<Service> for ServiceSet {
    fn from_iter<T: IntoIterator<Item = Service>>(iter: T) -> Self {
        let mut out = ServiceSet::new();
        for s in iter {
            out.insert(s);
        }
        out
    }
}

impl<'a> IntoIterator for &'a ServiceSet {
    type Item = &'a Service;
    type IntoIter = std::slice::Iter<'a, Service>;

    fn into_iter(self) -> Self::IntoIter {
        self.members.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceGroup {
    pub name: String,
    pub expr: SetExpr,
    pub members: ServiceSet,
    pub namespace: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortGroup {
    pub name: String,
    pub expr: SetExpr,
    pub ports: IntervalSet,
    pub namespace: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneGroup {
    pub name: String,
    pub expr: SetExpr,
    pub zones: BTreeSet<String>,
    pub namespace: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HighLevelRule {
    pub name: String,
    pub left: String,
    pub op: Operator,
    pub right: String,
    pub service_expr: SetExpr,
    pub services: ServiceSet,
    pub namespace: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleGroup {
    pub name: String,
    /// Members as written (rules or nested rule groups).
    pub members: Vec<String>,
    /// Flattened policy-rule names in order.
    pub rules: Vec<String>,
    pub namespace: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum UseCase {
    Verification,
    Other(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportingRule {
    pub name: String,
    pub use_case: Option<UseCase>,
    pub attrs: Vec<Attr>,
    /// `granularity.<dimension>` values keyed by dimension.
    pub granularity: BTreeMap<String, Value>,
    pub namespace: Option<String>,
}

impl ReportingRule {
    /// Names listed under `granularity.policy={rule_or_group={...}}`.
    pub fn policy_targets(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(Value::Block(attrs)) = self.granularity.get("policy") {
            for a in attrs.iter().filter(|a| a.key == "rule_or_group") {
                for v in a.value.items() {
                    if let Value::Name(n) = v {
                        out.push(n.clone());
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalPolicy {
    pub name: String,
    pub security: String,
    pub reporting: String,
}

/// Where declarations came from. Ignored by equality so that a spec and
/// its pretty-printed re-parse compare equal.
#[derive(Debug, Clone, Default)]
pub struct SourceMap {
    pub file: String,
    pub positions: HashMap<String, (String, Pos)>,
    /// Non-blank, non-comment lines of the main file.
    pub loc: usize,
}

impl PartialEq for SourceMap {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Eq for SourceMap {}

impl SourceMap {
    pub fn locate(&self, name: &str) -> (String, Pos) {
        self.positions
            .get(name)
            .cloned()
            .unwrap_or_else(|| (self.file.clone(), Pos::default()))
    }
}

/// The intermediate-level policy: every group resolved, every name bound.
///
/// Imported declarations are keyed by `<namespace>.<name>`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PolicySpec {
    pub imports: Vec<String>,
    pub declared_model: Option<String>,
    pub services: IndexMap<String, Service>,
    pub service_groups: IndexMap<String, ServiceGroup>,
    pub port_groups: IndexMap<String, PortGroup>,
    pub zone_groups: IndexMap<String, ZoneGroup>,
    pub rules: IndexMap<String, HighLevelRule>,
    pub rule_groups: IndexMap<String, RuleGroup>,
    pub reporting_rules: IndexMap<String, ReportingRule>,
    pub global_policy: Option<GlobalPolicy>,
    pub source: SourceMap,
}

impl PolicySpec {
    /// Zones a zone-or-group reference stands for. Names that are not zone
    /// groups are taken to be zones of the model.
    pub fn zones_of(&self, reference: &str) -> BTreeSet<String> {
        match self.zone_groups.get(reference) {
            Some(g) => g.zones.clone(),
            None => BTreeSet::from([reference.to_string()]),
        }
    }

    /// Rules of the security rule group named by the global policy.
    pub fn active_rules(&self) -> Vec<&HighLevelRule> {
        let Some(gp) = &self.global_policy else {
            return Vec::new();
        };
        self.rule_groups
            .get(&gp.security)
            .map(|g| g.rules.iter().filter_map(|r| self.rules.get(r)).collect())
            .unwrap_or_default()
    }

    /// Policy rules whose flows carry the log flag: those covered by a
    /// verification reporting rule attached to the global policy.
    pub fn logged_rules(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let Some(gp) = &self.global_policy else {
            return out;
        };
        let Some(rep) = self.reporting_rules.get(&gp.reporting) else {
            return out;
        };
        if rep.use_case != Some(UseCase::Verification) {
            return out;
        }
        for target in rep.policy_targets() {
            if let Some(g) = self.rule_groups.get(&target) {
                out.extend(g.rules.iter().cloned());
            } else if self.rules.contains_key(&target) {
                out.insert(target);
            }
        }
        out
    }

    /// Every zone name reachable from rules and zone groups.
    pub fn referenced_zones(&self) -> BTreeSet<String> {
        let mut out: BTreeSet<String> = self
            .zone_groups
            .values()
            .flat_map(|g| g.zones.iter().cloned())
            .collect();
        for r in self.rules.values() {
            out.extend(self.zones_of(&r.left));
            out.extend(self.zones_of(&r.right));
        }
        out
    }
}

/// An expanded inter-zone permit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FlowRule {
    pub rule_name: String,
    pub src_zone: String,
    pub dst_zone: String,
    pub service: Service,
}

impl fmt::Display for FlowRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} -> {} : {}",
            self.rule_name, self.src_zone, self.dst_zone, self.service.name
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn http() -> Service {
        Service::tcp("http", Interval::single(80))
    }

    fn https() -> Service {
        Service::tcp("https", Interval::single(443))
    }

    #[test]
    fn service_defaults() {
        let s = Service::new("x", PROTO_TCP);
        assert!(s.source_ports.is_full(MAX_PORT));
        assert!(s.icmp_types.is_empty());
        let i = Service::new("i", PROTO_ICMP);
        assert!(i.source_ports.is_empty() && i.icmp_types.is_full(MAX_ICMP));
    }

    #[test]
    fn union_with_overlap() {
        let a: ServiceSet = [http()].into_iter().collect();
        let b: ServiceSet = [http(), https()].into_iter().collect();
        assert_eq!(
            a.union(&b).keys(),
            [http().key(), https().key()].into_iter().collect()
        );
    }

    #[test]
    fn dedup_ignores_names() {
        let mut set = ServiceSet::new();
        assert!(set.insert(http()));
        assert!(!set.insert(Service::tcp("www", Interval::single(80))));
        assert_eq!(set.len(), 1);
    }

    #[test]
    fn self_difference_is_empty() {
        let g: ServiceSet = [http(), https()].into_iter().collect();
        assert!(g.difference(&g).is_empty());
    }

    #[test]
    fn generic_classes() {
        assert_eq!(
            Service::new("t", PROTO_TCP).generic_class(),
            Some("all-TCP")
        );
        assert_eq!(
            Service::new("u", PROTO_UDP).generic_class(),
            Some("all-UDP")
        );
        assert_eq!(
            Service::new("ip", ALL_PROTOCOLS).generic_class(),
            Some("all-IP")
        );
        assert_eq!(http().generic_class(), None);
        assert_eq!(Service::new("ospf", PROTO_OSPF).generic_class(), None);
    }
}
