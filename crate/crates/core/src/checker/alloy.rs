//! Alloy model of the high-level policy, for users who want to run the
//! overlap assertion in the Alloy analyzer themselves.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::header_space::IntervalSet;
use crate::policy_lang::{Operator, PolicySpec, Service};

const PRELUDE: &str = "abstract sig Service {
   ip_protocol: some Int,
   source_port: set String,
   dest_port: set String,
   icmp_type: set Int }

abstract sig PolicyRule {
   zone1: one String,
   zone2: one String,
   operator: some Int,
   service: one Service }

// Policy definition
one sig SecurityPolicy { rules: some PolicyRule }

// List of global constraints
fact {

 // All defined rules are in the policy to check
 all r: PolicyRule | r in SecurityPolicy.rules

 // Policy rules make up universe of PolicyRule
 SecurityPolicy.rules = PolicyRule

 // A service belongs to at least one PolicyRule
 all s: Service | some r: PolicyRule | s in r.service}
";

fn ident(prefix: &str, name: &str) -> String {
    let body: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    format!("{prefix}_{body}")
}

fn strings(s: &IntervalSet) -> String {
    if s.is_empty() {
        return "none".into();
    }
    let parts: Vec<String> = s.intervals().iter().map(|iv| format!("\"{iv}\"")).collect();
    parts.join(" + ")
}

fn ints(s: &IntervalSet) -> String {
    if s.is_empty() {
        return "none".into();
    }
    let mut parts = Vec::new();
    for iv in s.intervals() {
        if iv.hi - iv.lo > 16 {
            parts.push(format!("{{i: Int | i >= {} and i <= {}}}", iv.lo, iv.hi));
        } else {
            parts.extend((iv.lo..=iv.hi).map(|v| v.to_string()));
        }
    }
    parts.join(" + ")
}

fn service_sig(s: &Service) -> String {
    format!(
        "one sig {} extends Service {{}} {{\n   ip_protocol = {}\n   source_port = {}\n   dest_port = {}\n   icmp_type = {} }}\n",
        ident("S", &s.name),
        s.protocol,
        strings(&s.source_ports),
        strings(&s.dest_ports),
        ints(&s.icmp_types)
    )
}

/// The policy's active rules as Alloy signatures plus the overlap
/// assertion. Output is stable across runs.
pub fn export_alloy(spec: &PolicySpec) -> String {
    let mut out = format!(
        "module {}\n\n{PRELUDE}",
        ident(
            "policy",
            spec.global_policy.as_ref().map_or("", |g| &g.name)
        )
    );
    let rules = spec.active_rules();
    let mut services: BTreeMap<&str, &Service> = BTreeMap::new();
    for r in &rules {
        for s in &r.services {
            services.entry(&s.name).or_insert(s);
        }
    }
    out.push_str("\n// Services\n");
    for s in services.values() {
        out.push_str(&service_sig(s));
    }
    out.push_str("\n// Policy rules\n");
    for r in &rules {
        let op = match r.op {
            Operator::Unidirectional => 0,
            Operator::Bidirectional => 1,
        };
        for (i, s) in r.services.iter().enumerate() {
            let _ = writeln!(
                out,
                "one sig {} extends PolicyRule {{}} {{\n   zone1 = \"{}\"\n   zone2 = \"{}\"\n   operator = {op}\n   service = {} }}",
                ident("R", &format!("{}_{}", r.name, i + 1)),
                r.left,
                r.right,
                ident("S", &s.name)
            );
        }
    }
    out.push_str(
        "
assert no_rule_overlaps {
 all disj r1, r2: PolicyRule |
  (r1.zone1 = r2.zone1 and r1.zone2 = r2.zone2) implies
   (no (r1.service.ip_protocol & r2.service.ip_protocol) or
    no (r1.service.dest_port & r2.service.dest_port) or
    no (r1.service.source_port & r2.service.source_port))
}

check no_rule_overlaps
",
    );
    out
}
