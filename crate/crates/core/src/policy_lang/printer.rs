//! Canonical source rendering of a resolved [`PolicySpec`].

use std::fmt::Write;

use crate::header_space::{IntervalSet, PROTO_ICMP, PROTO_TCP, PROTO_UDP};

use super::ast::{Attr, SetExpr, Term, Value};
use super::{protocol_name, PolicySpec, Service};

/// Renders the main-file part of `spec` as policy source. Imported
/// declarations are referenced through their `import` lines only.
pub fn pretty_print(spec: &PolicySpec) -> String {
    let mut out = String::new();
    for i in &spec.imports {
        let _ = writeln!(out, "import {i};");
    }
    if let Some(m) = &spec.declared_model {
        let _ = writeln!(out, "load_zone_conduit_model \"{m}\";");
    }
    if !out.is_empty() {
        out.push('\n');
    }
    let local = |ns: &Option<String>| ns.is_none();
    for g in spec.port_groups.values().filter(|g| local(&g.namespace)) {
        let _ = writeln!(out, "port_group {} {{ {} }}", g.name, expr(&g.expr));
    }
    for s in spec.services.values().filter(|s| !s.name.contains('.')) {
        let _ = writeln!(out, "service {} {{ {} }}", s.name, service_attrs(s));
    }
    for g in spec.service_groups.values().filter(|g| local(&g.namespace)) {
        let _ = writeln!(out, "service_group {} {{ {} }}", g.name, expr(&g.expr));
    }
    for g in spec.zone_groups.values().filter(|g| local(&g.namespace)) {
        let _ = writeln!(out, "zone_group {} {{ {} }}", g.name, expr(&g.expr));
    }
    for r in spec.rules.values().filter(|r| local(&r.namespace)) {
        let _ = writeln!(
            out,
            "policy_rule {} {{ {} {} {} : {} }}",
            r.name,
            r.left,
            r.op.symbol(),
            r.right,
            expr(&r.service_expr)
        );
    }
    for g in spec.rule_groups.values().filter(|g| local(&g.namespace)) {
        let _ = writeln!(out, "rule_group {} {{ {} }}", g.name, g.members.join(", "));
    }
    for r in spec
        .reporting_rules
        .values()
        .filter(|r| local(&r.namespace))
    {
        let _ = writeln!(out, "reporting_rule {} {{ {} }}", r.name, attrs(&r.attrs));
    }
    if let Some(p) = &spec.global_policy {
        let _ = writeln!(
            out,
            "policy {} {{ {}; {}; }}",
            p.name, p.security, p.reporting
        );
    }
    out
}

fn service_attrs(s: &Service) -> String {
    let mut parts = vec![match protocol_name(s.protocol) {
        Some(n) => format!("protocol={n};"),
        None => format!("protocol={};", s.protocol),
    }];
    let prefix = match s.protocol {
        PROTO_TCP => Some("tcp"),
        PROTO_UDP => Some("udp"),
        _ => None,
    };
    if let Some(p) = prefix {
        if !s.source_ports.is_empty() {
            parts.push(format!("{p}.source_port={};", set(&s.source_ports)));
        }
        if !s.dest_ports.is_empty() {
            parts.push(format!("{p}.dest_port={};", set(&s.dest_ports)));
        }
    }
    if s.protocol == PROTO_ICMP && !s.icmp_types.is_empty() {
        parts.push(format!("icmp.type={};", set(&s.icmp_types)));
    }
    if !s.comment.is_empty() {
        parts.push(format!("comment={};", quote(&s.comment)));
    }
    parts.join(" ")
}

fn set(s: &IntervalSet) -> String {
    s.intervals()
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

fn quote(s: &str) -> String {
    format!("\"{s}\"")
}

fn term(t: &Term) -> String {
    match t {
        Term::Name(r) => r.name.clone(),
        Term::Range { lo, hi } if lo == hi => lo.to_string(),
        Term::Range { lo, hi } => format!("{lo}-{hi}"),
    }
}

fn expr(e: &SetExpr) -> String {
    e.chains
        .iter()
        .map(|c| {
            let mut s = term(&c.first);
            for (op, t) in &c.rest {
                let _ = write!(s, " {} {}", op.symbol(), term(t));
            }
            s
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn attrs(list: &[Attr]) -> String {
    list.iter()
        .map(|a| format!("{}={};", a.key, value(&a.value)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn value(v: &Value) -> String {
    match v {
        Value::Int(n) => n.to_string(),
        Value::Range(lo, hi) => format!("{lo}-{hi}"),
        Value::Str(s) => quote(s),
        Value::Name(n) => n.clone(),
        Value::List(items) => items.iter().map(value).collect::<Vec<_>>().join(", "),
        Value::Block(a) => format!("{{ {} }}", attrs(a)),
        Value::Set(items) => format!(
            "{{ {} }}",
            items.iter().map(value).collect::<Vec<_>>().join(", ")
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::super::{parse_policy, BuiltinLibrary};
    use super::*;

    #[test]
    fn round_trip_small_policy() {
        let src = r#"import system.services.iana_services;
load_zone_conduit_model "zones.graphml";
port_group data { 24500-24600, 30000 }
service ftp_data { protocol=tcp; tcp.dest_port=data; comment="FTP data"; }
service_group ftp { ftp_data, iana_services.ftp_control }
service_group web { http, https \ ftp ^ http }
zone_group inside { corp, scada }
policy_rule r1 { inside -> dmz : web, ftp }
policy_rule r2 { corp <-> scada : https }
rule_group sec { r1, r2 }
reporting_rule rep { use_case=verification; granularity.policy={ rule_or_group={ sec } }; }
policy p { sec; rep }
"#;
        let spec = parse_policy(src, &BuiltinLibrary).unwrap();
        let printed = pretty_print(&spec);
        let again = parse_policy(&printed, &BuiltinLibrary).unwrap();
        assert_eq!(spec, again, "{printed}");
        assert_eq!(printed, pretty_print(&again));
    }
}
