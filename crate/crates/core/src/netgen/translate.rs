//! Rule translation t: flow rules over zones to ACL rules over addresses.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use ipnet::Ipv4Net;
use thiserror::Error;

use super::{AclRule, Action, State, ANY};
use crate::header_space::{IntervalSet, PROTO_ICMP, PROTO_OSPF, PROTO_TCP, PROTO_UDP};
use crate::policy_lang::FlowRule;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TranslateError {
    #[error("zone `{zone}` used by rule `{rule}` has no addresses")]
    NoAddresses { rule: String, zone: String },
}

/// OSPF AllSPFRouters and AllDRouters.
pub const OSPF_GROUPS: [Ipv4Addr; 2] = [Ipv4Addr::new(224, 0, 0, 5), Ipv4Addr::new(224, 0, 0, 6)];

/// What a flow's remarks and log flags are derived from: the rule's end
/// references in flow direction and its service label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowContext {
    pub left: String,
    pub right: String,
    pub label: String,
    pub log: bool,
}

impl FlowContext {
    pub fn plain(f: &FlowRule) -> Self {
        FlowContext {
            left: f.src_zone.clone(),
            right: f.dst_zone.clone(),
            label: f.service.short_name().to_uppercase(),
            log: false,
        }
    }

    pub fn forward_remark(&self) -> String {
        format!(
            "enable {} to {} {} traffic (forward path)",
            self.left, self.right, self.label
        )
    }

    pub fn return_remark(&self) -> String {
        format!(
            "enable {} to {} {} traffic (return path)",
            self.left, self.right, self.label
        )
    }
}

/// One stateless permit per (source CIDR, destination CIDR) pair.
pub fn translate_rule(
    f: &FlowRule,
    zone_cidrs: &BTreeMap<String, Vec<Ipv4Net>>,
    ctx: &FlowContext,
) -> Result<Vec<AclRule>, TranslateError> {
    let cidrs = |zone: &str| {
        zone_cidrs
            .get(zone)
            .filter(|c| !c.is_empty())
            .ok_or_else(|| TranslateError::NoAddresses {
                rule: f.rule_name.clone(),
                zone: zone.to_string(),
            })
    };
    let src = cidrs(&f.src_zone)?;
    let dst = cidrs(&f.dst_zone)?;
    let s = &f.service;
    let ported = matches!(s.protocol, PROTO_TCP | PROTO_UDP);
    let mut out = Vec::with_capacity(src.len() * dst.len());
    for a in src {
        for b in dst {
            out.push(AclRule {
                action: Action::Permit,
                protocol: Some(s.protocol),
                src: *a,
                dst: *b,
                sport: if ported {
                    s.source_ports.clone()
                } else {
                    IntervalSet::empty()
                },
                dport: if ported {
                    s.dest_ports.clone()
                } else {
                    IntervalSet::empty()
                },
                icmp: if s.protocol == PROTO_ICMP {
                    s.icmp_types.clone()
                } else {
                    IntervalSet::empty()
                },
                state: State::STATELESS,
                log: ctx.log,
                comment: ctx.forward_remark(),
            });
        }
    }
    Ok(out)
}

/// The forward form of a translated rule: TCP tracks state.
pub(super) fn forward_rule(r: &AclRule) -> AclRule {
    let mut r = r.clone();
    if r.protocol == Some(PROTO_TCP) {
        r.state = State::NEW_ESTABLISHED;
    }
    r
}

/// Mirrored reply rule, for TCP (established only) and UDP (stateless).
pub(super) fn return_rule(r: &AclRule, ctx: &FlowContext) -> Option<AclRule> {
    let state = match r.protocol {
        Some(PROTO_TCP) => State::ESTABLISHED,
        Some(PROTO_UDP) => State::STATELESS,
        _ => return None,
    };
    Some(AclRule {
        src: r.dst,
        dst: r.src,
        sport: r.dport.clone(),
        dport: r.sport.clone(),
        state,
        comment: ctx.return_remark(),
        ..r.clone()
    })
}

/// Forward rules with their state, followed by the synthesized return
/// rules. ICMP and other protocols get no return rule.
pub fn add_supplementary_rules(rules: &[AclRule], ctx: &FlowContext) -> Vec<AclRule> {
    let mut out: Vec<AclRule> = rules.iter().map(forward_rule).collect();
    out.extend(rules.iter().filter_map(|r| return_rule(r, ctx)));
    out
}

pub(super) fn ospf_rules(log: bool) -> Vec<AclRule> {
    OSPF_GROUPS
        .iter()
        .map(|g| AclRule {
            action: Action::Permit,
            protocol: Some(PROTO_OSPF),
            src: ANY,
            dst: Ipv4Net::from(*g),
            sport: IntervalSet::empty(),
            dport: IntervalSet::empty(),
            icmp: IntervalSet::empty(),
            state: State::STATELESS,
            log,
            comment: "enable OSPF neighbour traffic".into(),
        })
        .collect()
}
