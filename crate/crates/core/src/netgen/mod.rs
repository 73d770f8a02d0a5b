//! Compilation of a resolved policy onto a zone-conduit model: path
//! selection, translation to network-level ACL rules, supplementary
//! rules and ACL placement on firewall interfaces.

mod compile;
mod paths;
mod translate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use ipnet::Ipv4Net;
use serde::{Deserialize, Serialize};

use crate::header_space::{
    has_ports, IntervalSet, Predicate, MAX_ICMP, MAX_PORT, MAX_PROTO, PROTO_ICMP,
};
use crate::policy_lang::FlowRule;
use crate::topo_model::{cidr_interval, ZoneConduitModel};

pub use compile::{compile, CompileError, CompileOptions};
pub use paths::{enumerate_paths, realize, Hop, PathError};
pub use translate::{
    add_supplementary_rules, translate_rule, FlowContext, TranslateError, OSPF_GROUPS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Permit,
    Deny,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Permit => "permit",
            Action::Deny => "deny",
        })
    }
}

/// Connection-state match. Neither flag set means the rule is stateless.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct State {
    pub new: bool,
    pub established: bool,
}

impl State {
    pub const STATELESS: State = State {
        new: false,
        established: false,
    };
    pub const NEW_ESTABLISHED: State = State {
        new: true,
        established: true,
    };
    pub const ESTABLISHED: State = State {
        new: false,
        established: true,
    };

    /// States matched, as a set over {0 = NEW, 1 = ESTABLISHED}.
    pub fn matched(self) -> IntervalSet {
        if self == State::STATELESS {
            return IntervalSet::from_interval(crate::header_space::Interval::new(0, 1));
        }
        let mut v = Vec::new();
        if self.new {
            v.push(crate::header_space::Interval::single(0));
        }
        if self.established {
            v.push(crate::header_space::Interval::single(1));
        }
        IntervalSet::from_intervals(v)
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.new, self.established) {
            (true, true) => f.write_str("NEW,ESTABLISHED"),
            (true, false) => f.write_str("NEW"),
            (false, true) => f.write_str("ESTABLISHED"),
            (false, false) => Ok(()),
        }
    }
}

pub const ANY: Ipv4Net = match Ipv4Net::new(std::net::Ipv4Addr::UNSPECIFIED, 0) {
    Ok(n) => n,
    Err(_) => panic!("valid prefix"),
};

/// A vendor-neutral network-level rule. `protocol: None` is the `ip`
/// wildcard, used only by the terminal deny.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AclRule {
    pub action: Action,
    pub protocol: Option<u8>,
    pub src: Ipv4Net,
    pub dst: Ipv4Net,
    pub sport: IntervalSet,
    pub dport: IntervalSet,
    pub icmp: IntervalSet,
    pub state: State,
    pub log: bool,
    pub comment: String,
}

impl AclRule {
    pub fn terminal_deny() -> Self {
        AclRule {
            action: Action::Deny,
            protocol: None,
            src: ANY,
            dst: ANY,
            sport: IntervalSet::empty(),
            dport: IntervalSet::empty(),
            icmp: IntervalSet::empty(),
            state: State::STATELESS,
            log: false,
            comment: String::new(),
        }
    }

    pub fn is_terminal_deny(&self) -> bool {
        self.action == Action::Deny && self.protocol.is_none() && self.src == ANY && self.dst == ANY
    }

    /// Header region matched, ignoring state.
    pub fn predicate(&self) -> Predicate {
        let addrs = (
            IntervalSet::from_interval(cidr_interval(&self.src)),
            IntervalSet::from_interval(cidr_interval(&self.dst)),
        );
        match self.protocol {
            None => Predicate {
                src: addrs.0,
                dst: addrs.1,
                protocol: IntervalSet::full(MAX_PROTO),
                sport: IntervalSet::full(MAX_PORT),
                dport: IntervalSet::full(MAX_PORT),
                icmp: IntervalSet::full(MAX_ICMP),
            },
            Some(p) => Predicate::for_protocol(
                p,
                self.sport.clone(),
                self.dport.clone(),
                self.icmp.clone(),
            )
            .with_addresses(addrs.0, addrs.1),
        }
    }

    /// A permit that admits a whole protocol (or every protocol) without
    /// any port restriction.
    pub fn is_generic_permit(&self) -> bool {
        self.action == Action::Permit
            && match self.protocol {
                None => true,
                Some(p) if has_ports(p) => {
                    self.sport.is_full(MAX_PORT) && self.dport.is_full(MAX_PORT)
                }
                Some(p) if p == PROTO_ICMP => self.icmp.is_full(MAX_ICMP),
                Some(_) => false,
            }
    }

    /// Same match and action, whatever the comment.
    pub fn same_match(&self, other: &AclRule) -> bool {
        AclRule {
            comment: String::new(),
            ..self.clone()
        } == AclRule {
            comment: String::new(),
            ..other.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Acl {
    pub name: String,
    pub rules: Vec<AclRule>,
}

impl Acl {
    /// Rules before the terminal deny.
    pub fn permits(&self) -> &[AclRule] {
        match self.rules.last() {
            Some(r) if r.is_terminal_deny() => &self.rules[..self.rules.len() - 1],
            _ => &self.rules,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Traffic entering the firewall through the interface, forwarded or
    /// addressed to the firewall.
    Inbound,
    /// Traffic the firewall itself sends out through the interface.
    Outbound,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Inbound => "inbound",
            Direction::Outbound => "outbound",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InterfaceAssignment {
    pub firewall: String,
    pub interface: String,
    pub direction: Direction,
    pub acl: String,
}

/// Flows a conduit carries in one direction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConduitPolicy {
    pub from: String,
    pub to: String,
    pub flows: Vec<FlowRule>,
}

/// The compiled policy: model, per-conduit policies, ACLs per firewall and
/// their interface bindings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkPolicy {
    pub model: ZoneConduitModel,
    pub flows: Vec<FlowRule>,
    pub conduit_policies: Vec<ConduitPolicy>,
    pub acls: BTreeMap<String, Vec<Acl>>,
    pub assignments: Vec<InterfaceAssignment>,
    /// Remark text to the rules (and service comments) it came from.
    pub origins: BTreeMap<String, BTreeSet<String>>,
}

impl NetworkPolicy {
    pub fn acl(&self, firewall: &str, name: &str) -> Option<&Acl> {
        self.acls.get(firewall)?.iter().find(|a| a.name == name)
    }

    pub fn assignment(
        &self,
        firewall: &str,
        interface: &str,
        direction: Direction,
    ) -> Option<&InterfaceAssignment> {
        self.assignments.iter().find(|a| {
            a.firewall == firewall && a.interface == interface && a.direction == direction
        })
    }

    pub fn all_rules(&self) -> impl Iterator<Item = &AclRule> {
        self.acls.values().flatten().flat_map(|a| a.rules.iter())
    }

    pub fn generic_permit_count(&self) -> usize {
        self.all_rules().filter(|r| r.is_generic_permit()).count()
    }

    /// ACLs with no interface binding.
    pub fn unassigned_acls(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (fw, acls) in &self.acls {
            for a in acls {
                if !self
                    .assignments
                    .iter()
                    .any(|x| &x.firewall == fw && x.acl == a.name)
                {
                    out.push((fw.clone(), a.name.clone()));
                }
            }
        }
        out
    }

    /// Flows a directed conduit carries.
    pub fn conduit_policy(&self, from: &str, to: &str) -> Option<&ConduitPolicy> {
        self.conduit_policies
            .iter()
            .find(|c| c.from == from && c.to == to)
    }
}
