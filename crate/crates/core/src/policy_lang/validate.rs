//! Semantic checks on a resolved policy.

use std::collections::BTreeSet;

use crate::diag::Diagnostic;
use crate::header_space::{IntervalSet, MAX_ICMP, MAX_PORT};

use super::PolicySpec;

/// Reports generic services, duplicate zone groups, out-of-range values
/// and rules whose ends overlap. An empty result means the spec is valid.
pub fn validate_spec(spec: &PolicySpec) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let at = |name: &str| spec.source.locate(name);

    for s in spec.services.values() {
        let (file, pos) = at(&s.name);
        if let Some(class) = s.generic_class() {
            out.push(Diagnostic::error(
                file.clone(),
                pos,
                format!("generic service {class} prohibited"),
            ));
        }
        let bad_port = |set: &IntervalSet| set.max_value().is_some_and(|m| m > MAX_PORT);
        if bad_port(&s.source_ports) || bad_port(&s.dest_ports) {
            out.push(Diagnostic::error(
                file.clone(),
                pos,
                format!("service `{}` has a port outside 0-{MAX_PORT}", s.name),
            ));
        }
        if s.icmp_types.max_value().is_some_and(|m| m > MAX_ICMP) {
            out.push(Diagnostic::error(
                file.clone(),
                pos,
                format!("service `{}` has an ICMP type outside 0-{MAX_ICMP}", s.name),
            ));
        }
    }

    for g in spec.port_groups.values() {
        if g.ports.max_value().is_some_and(|m| m > MAX_PORT) {
            let (file, pos) = at(&g.name);
            out.push(Diagnostic::error(
                file,
                pos,
                format!("port group `{}` has a port outside 0-{MAX_PORT}", g.name),
            ));
        }
    }

    let groups: Vec<_> = spec.zone_groups.values().collect();
    for (i, g) in groups.iter().enumerate() {
        if let Some(prev) = groups[..i].iter().find(|p| p.zones == g.zones) {
            let (file, pos) = at(&g.name);
            out.push(Diagnostic::warning(
                file,
                pos,
                format!(
                    "zone group `{}` duplicates the members of `{}`",
                    g.name, prev.name
                ),
            ));
        }
    }

    for r in spec.rules.values() {
        let left = spec.zones_of(&r.left);
        let right = spec.zones_of(&r.right);
        let common: Vec<&String> = left.intersection(&right).collect();
        if !common.is_empty() {
            let (file, pos) = at(&r.name);
            let names: Vec<&str> = common.iter().map(|s| s.as_str()).collect();
            out.push(Diagnostic::error(
                file,
                pos,
                format!(
                    "rule `{}` has overlapping ends (common zones: {})",
                    r.name,
                    names.join(", ")
                ),
            ));
        }
    }
    out
}

/// Reports zone names referenced by the policy that the model lacks.
pub fn validate_zone_refs(spec: &PolicySpec, zones: &BTreeSet<String>) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    let mut check = |owner: &str, zone: &str, out: &mut Vec<Diagnostic>| {
        if !zones.contains(zone) && seen.insert(zone.to_string()) {
            let (file, pos) = spec.source.locate(owner);
            out.push(Diagnostic::error(
                file,
                pos,
                format!("zone `{zone}` is not in the zone-conduit model"),
            ));
        }
    };
    for g in spec.zone_groups.values() {
        for z in &g.zones {
            check(&g.name, z, &mut out);
        }
    }
    for r in spec.rules.values() {
        for z in spec
            .zones_of(&r.left)
            .iter()
            .chain(spec.zones_of(&r.right).iter())
        {
            check(&r.name, z, &mut out);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::{parse_policy, BuiltinLibrary};
    use super::*;
    use crate::diag::Severity;

    fn check(src: &str) -> Vec<Diagnostic> {
        validate_spec(&parse_policy(src, &BuiltinLibrary).unwrap())
    }

    #[test]
    fn all_tcp_is_generic() {
        let d = check("service any_tcp { protocol=tcp; }");
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].message, "generic service all-TCP prohibited");
        assert_eq!(d[0].severity, Severity::Error);
    }

    #[test]
    fn all_ip_and_udp_are_generic() {
        let d = check("service a { protocol=ip; }\nservice b { protocol=udp; }");
        let msgs: Vec<&str> = d.iter().map(|d| d.message.as_str()).collect();
        assert_eq!(
            msgs,
            [
                "generic service all-IP prohibited",
                "generic service all-UDP prohibited"
            ]
        );
    }

    #[test]
    fn duplicate_zone_groups_warn() {
        let d = check("zone_group a { x, y }\nzone_group b { y, x }");
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].severity, Severity::Warning);
        assert_eq!(d[0].pos.line, 2);
    }

    #[test]
    fn port_out_of_range() {
        let d = check("service big { protocol=tcp; tcp.dest_port=70000; }");
        assert!(
            d.iter()
                .any(|d| d.is_error() && d.message.contains("outside 0-65535")),
            "{d:?}"
        );
    }

    #[test]
    fn overlapping_rule_ends() {
        let d = check(
            "import system.services.iana_services;\nzone_group g { a, b }\npolicy_rule r { g -> a : http }",
        );
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("common zones: a"));
    }

    #[test]
    fn clean_policy_has_no_diagnostics() {
        let d =
            check("import system.services.iana_services;\npolicy_rule r { a -> b : http, https }");
        assert!(d.is_empty(), "{d:?}");
    }

    #[test]
    fn unknown_zone_reported_once() {
        let spec = parse_policy(
            "import system.services.iana_services;\npolicy_rule r { a -> b : http }\npolicy_rule s { b -> a : ssh }",
            &BuiltinLibrary,
        )
        .unwrap();
        let zones = BTreeSet::from(["a".to_string()]);
        let d = validate_zone_refs(&spec, &zones);
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("`b`"));
    }
}
