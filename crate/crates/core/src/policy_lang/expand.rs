//! Expansion of high-level rules into per-zone-pair, per-service flows.

use thiserror::Error;

use super::{FlowRule, Operator, PolicySpec};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExpandError {
    #[error("rule `{rule}`: zone reference `{reference}` is empty")]
    EmptyZones { rule: String, reference: String },
    #[error("rule `{rule}`: service set is empty")]
    EmptyServices { rule: String },
    #[error("rule `{rule}`: flow from zone `{zone}` to itself")]
    SameZone { rule: String, zone: String },
    #[error("no global policy declared")]
    NoPolicy,
}

/// Expands every rule of the active security rule group. Rules are taken
/// in group order; within a rule, zones in lexicographic order and
/// services in declaration order. A `<->` rule yields its forward flows
/// followed by the reverse ones. Duplicate flows are dropped.
pub fn expand_rules(spec: &PolicySpec) -> Result<Vec<FlowRule>, ExpandError> {
    if spec.global_policy.is_none() {
        return Err(ExpandError::NoPolicy);
    }
    let mut out: Vec<FlowRule> = Vec::new();
    for rule in spec.active_rules() {
        let left = spec.zones_of(&rule.left);
        let right = spec.zones_of(&rule.right);
        for (set, reference) in [(&left, &rule.left), (&right, &rule.right)] {
            if set.is_empty() {
                return Err(ExpandError::EmptyZones {
                    rule: rule.name.clone(),
                    reference: reference.clone(),
                });
            }
        }
        if rule.services.is_empty() {
            return Err(ExpandError::EmptyServices {
                rule: rule.name.clone(),
            });
        }
        let mut dirs = vec![(&left, &right)];
        if rule.op == Operator::Bidirectional {
            dirs.push((&right, &left));
        }
        for (from, to) in dirs {
            for src in from {
                for dst in to {
                    if src == dst {
                        return Err(ExpandError::SameZone {
                            rule: rule.name.clone(),
                            zone: src.clone(),
                        });
                    }
                    for svc in &rule.services {
                        let flow = FlowRule {
                            rule_name: rule.name.clone(),
                            src_zone: src.clone(),
                            dst_zone: dst.clone(),
                            service: svc.clone(),
                        };
                        if !out.contains(&flow) {
                            out.push(flow);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::{parse_policy, BuiltinLibrary};
    use super::*;

    const HEAD: &str = "import system.services.iana_services;\nimport system.services.iana_icmp;\n\
        reporting_rule rep { use_case=none; }\n";

    fn flows(body: &str) -> Result<Vec<FlowRule>, ExpandError> {
        let spec = parse_policy(&format!("{HEAD}{body}"), &BuiltinLibrary).unwrap();
        expand_rules(&spec)
    }

    #[test]
    fn bidirectional_ping_gives_four() {
        let f = flows(
            "service_group ping { icmp_echo, icmp_echo_reply }
             policy_rule ping_rule { corp_zone <-> scada_zone : ping }
             rule_group g { ping_rule } policy p { g; rep }",
        )
        .unwrap();
        assert_eq!(f.len(), 4);
        assert_eq!(
            (f[0].src_zone.as_str(), f[3].src_zone.as_str()),
            ("corp_zone", "scada_zone")
        );
    }

    #[test]
    fn singleton_expansion() {
        let f = flows("zone_group z { a } policy_rule r { z -> b : http } rule_group g { r } policy p { g; rep }")
            .unwrap();
        assert_eq!(f.len(), 1);
    }

    #[test]
    fn web_rule_shares_name() {
        let f = flows(
            "service_group web { http, https }
             policy_rule web_rule { scada_zone -> corp_zone : web }
             rule_group g { web_rule } policy p { g; rep }",
        )
        .unwrap();
        assert_eq!(f.len(), 2);
        assert!(f.iter().all(|x| x.rule_name == "web_rule"));
    }

    #[test]
    fn empty_zone_group_rejected() {
        let e = flows(
            "zone_group a { x } zone_group e { a \\ a }
             policy_rule r { e -> b : http } rule_group g { r } policy p { g; rep }",
        )
        .unwrap_err();
        assert!(matches!(e, ExpandError::EmptyZones { .. }));
    }

    #[test]
    fn empty_service_set_rejected() {
        let e = flows(
            "service_group w { http } policy_rule r { a -> b : w \\ w } rule_group g { r } policy p { g; rep }",
        )
        .unwrap_err();
        assert_eq!(e, ExpandError::EmptyServices { rule: "r".into() });
    }

    #[test]
    fn only_rules_in_group_expand() {
        let f = flows(
            "policy_rule r { a -> b : http } policy_rule unused { b -> a : ssh }
             rule_group g { r } policy p { g; rep }",
        )
        .unwrap();
        assert!(f.iter().all(|x| x.rule_name == "r"));
    }
}
