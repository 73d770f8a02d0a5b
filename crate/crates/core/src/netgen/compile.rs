//! The compile pipeline: verification gates, then ACL construction.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use ipnet::Ipv4Net;

use super::translate::{forward_rule, ospf_rules, return_rule};
use super::{
    enumerate_paths, realize, translate_rule, Acl, AclRule, ConduitPolicy, Direction, FlowContext,
    InterfaceAssignment, NetworkPolicy,
};
use crate::canonical::{check_best_practice, BestPractice};
use crate::checker::find_rule_overlaps;
use crate::diag::{Diagnostic, Pos};
use crate::policy_lang::{
    expand_rules, validate_spec, validate_zone_refs, ExpandError, FlowRule, HighLevelRule,
    PolicySpec,
};
use crate::topo_model::{crosscheck_model, zone_conduit_model, Topology, ZoneConduitModel};

#[derive(Debug, Clone, Default)]
pub struct CompileOptions {
    /// Permit OSPF multicast on every ACL.
    pub ospf: bool,
    /// The model named by `load_zone_conduit_model`, already loaded.
    pub declared_model: Option<ZoneConduitModel>,
    pub best_practice: Option<BestPractice>,
    /// File name used in topology diagnostics.
    pub topology_file: String,
}

/// Every finding that stopped compilation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompileError {
    pub diagnostics: Vec<Diagnostic>,
}

impl fmt::Display for CompileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.diagnostics.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for CompileError {}

fn fail(diagnostics: Vec<Diagnostic>) -> Result<NetworkPolicy, CompileError> {
    Err(CompileError { diagnostics })
}

/// Service label of a rule for remarks: the names of its service
/// expression, namespace stripped, upper case.
fn service_label(r: &HighLevelRule) -> String {
    let mut seen = BTreeSet::new();
    let names: Vec<String> = r
        .service_expr
        .names()
        .map(|n| n.name.rsplit('.').next().unwrap_or(&n.name).to_uppercase())
        .filter(|n| seen.insert(n.clone()))
        .collect();
    names.join(", ")
}

fn flow_context(spec: &PolicySpec, f: &FlowRule, logged: &BTreeSet<String>) -> FlowContext {
    let Some(r) = spec.rules.get(&f.rule_name) else {
        return FlowContext::plain(f);
    };
    let forward = spec.zones_of(&r.left).contains(&f.src_zone)
        && spec.zones_of(&r.right).contains(&f.dst_zone);
    let (left, right) = if forward {
        (&r.left, &r.right)
    } else {
        (&r.right, &r.left)
    };
    let short = |s: &str| s.rsplit('.').next().unwrap_or(s).to_string();
    FlowContext {
        left: short(left),
        right: short(right),
        label: service_label(r),
        log: logged.contains(&r.name),
    }
}

struct AclBuilder {
    name: String,
    rules: Vec<AclRule>,
}

impl AclBuilder {
    fn push(&mut self, r: AclRule) {
        if !self.rules.iter().any(|x| x.same_match(&r)) {
            self.rules.push(r);
        }
    }
}

/// Compiles a policy onto a topology. Every verification stage is a gate:
/// any error-level finding stops compilation and all findings are returned.
pub fn compile(
    spec: &PolicySpec,
    t: &Topology,
    options: &CompileOptions,
) -> Result<NetworkPolicy, CompileError> {
    let topo_file = if options.topology_file.is_empty() {
        "topology"
    } else {
        options.topology_file.as_str()
    };
    let topo_diag = |msg: String| Diagnostic::error(topo_file, Pos::new(1, 1), msg);

    let mut diags: Vec<Diagnostic> = validate_spec(spec)
        .into_iter()
        .filter(Diagnostic::is_error)
        .collect();
    let model = match zone_conduit_model(t) {
        Ok(m) => m,
        Err(e) => {
            diags.push(topo_diag(e.to_string()));
            return fail(diags);
        }
    };
    if let Some(declared) = &options.declared_model {
        if let Err(mismatch) = crosscheck_model(&model, declared) {
            let file = spec
                .declared_model
                .clone()
                .unwrap_or_else(|| spec.source.file.clone());
            diags.push(Diagnostic::error(
                file,
                Pos::new(1, 1),
                format!("declared zone-conduit model differs: {mismatch}"),
            ));
        }
    }
    diags.extend(validate_zone_refs(spec, &model.zone_names()));
    if !diags.is_empty() {
        return fail(diags);
    }
    let flows = match expand_rules(spec) {
        Ok(f) => f,
        Err(e) => {
            let rule = match &e {
                ExpandError::EmptyZones { rule, .. }
                | ExpandError::EmptyServices { rule }
                | ExpandError::SameZone { rule, .. } => rule.as_str(),
                ExpandError::NoPolicy => "",
            };
            let (file, pos) = spec.source.locate(rule);
            return fail(vec![Diagnostic::error(file, pos, e.to_string())]);
        }
    };
    diags.extend(
        find_rule_overlaps(&flows)
            .iter()
            .map(|r| r.to_diagnostic(spec)),
    );
    if let Some(bp) = &options.best_practice {
        match check_best_practice(&flows, &model, bp) {
            Ok(v) => diags.extend(v.iter().map(|v| v.to_diagnostic(spec))),
            Err(e) => diags.push(Diagnostic::error(
                bp.file.clone(),
                Pos::new(1, 1),
                e.to_string(),
            )),
        }
    }
    if !diags.is_empty() {
        return fail(diags);
    }
    build(spec, model, flows, options)
}

fn build(
    spec: &PolicySpec,
    model: ZoneConduitModel,
    flows: Vec<FlowRule>,
    options: &CompileOptions,
) -> Result<NetworkPolicy, CompileError> {
    let mut acls: BTreeMap<String, Vec<AclBuilder>> = BTreeMap::new();
    // (firewall, interface, direction) -> index into the firewall's ACLs
    let mut slots: BTreeMap<(String, String, Direction), usize> = BTreeMap::new();
    let mut assignments = Vec::new();
    let mut fw_names: Vec<&str> = model.firewalls.iter().map(|f| f.name.as_str()).collect();
    fw_names.sort_unstable();
    for fw in fw_names {
        let ifaces: Vec<String> = model
            .interfaces(fw)
            .iter()
            .map(|p| p.interface.clone())
            .collect();
        let k = ifaces.len();
        let list = acls.entry(fw.to_string()).or_default();
        for (d, dir) in [Direction::Inbound, Direction::Outbound]
            .into_iter()
            .enumerate()
        {
            for (i, iface) in ifaces.iter().enumerate() {
                let name = format!("acl_{}", d * k + i + 1);
                slots.insert((fw.to_string(), iface.clone(), dir), list.len());
                list.push(AclBuilder {
                    name: name.clone(),
                    rules: Vec::new(),
                });
                assignments.push(InterfaceAssignment {
                    firewall: fw.to_string(),
                    interface: iface.clone(),
                    direction: dir,
                    acl: name,
                });
            }
        }
    }

    let zone_cidrs: BTreeMap<String, Vec<Ipv4Net>> = model
        .zones
        .iter()
        .map(|z| (z.name.clone(), z.cidrs.clone()))
        .collect();
    let logged = spec.logged_rules();
    let mut diags = Vec::new();
    let mut origins: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut carried: BTreeMap<(String, String), Vec<FlowRule>> = BTreeMap::new();
    for c in &model.conduits {
        carried.insert((c.a.clone(), c.b.clone()), Vec::new());
        carried.insert((c.b.clone(), c.a.clone()), Vec::new());
    }

    for f in &flows {
        let (file, pos) = spec.source.locate(&f.rule_name);
        let paths = match enumerate_paths(&model, &f.src_zone, &f.dst_zone) {
            Ok(p) => p,
            Err(e) => {
                diags.push(Diagnostic::error(
                    file,
                    pos,
                    format!("rule `{}`: {e}", f.rule_name),
                ));
                continue;
            }
        };
        let ctx = flow_context(spec, f, &logged);
        let translated = match translate_rule(f, &zone_cidrs, &ctx) {
            Ok(r) => r,
            Err(e) => {
                diags.push(Diagnostic::error(file, pos, e.to_string()));
                continue;
            }
        };
        let provenance = if f.service.comment.is_empty() {
            f.rule_name.clone()
        } else {
            format!("{}: {}", f.rule_name, f.service.comment)
        };
        let forward: Vec<AclRule> = translated.iter().map(forward_rule).collect();
        let returns: Vec<AclRule> = translated
            .iter()
            .filter_map(|r| return_rule(r, &ctx))
            .collect();
        origins
            .entry(ctx.forward_remark())
            .or_default()
            .insert(provenance.clone());
        if !returns.is_empty() {
            origins
                .entry(ctx.return_remark())
                .or_default()
                .insert(provenance.clone());
        }
        for path in &paths {
            for w in path.windows(2) {
                let list = carried.entry((w[0].clone(), w[1].clone())).or_default();
                if !list.contains(f) {
                    list.push(f.clone());
                }
            }
            for hops in realize(&model, path) {
                for h in &hops {
                    let fwd_slot = match (&h.ingress, &h.egress) {
                        (Some(i), _) => (i, Direction::Inbound),
                        (None, Some(e)) => (e, Direction::Outbound),
                        (None, None) => continue,
                    };
                    let ret_slot = match (&h.egress, &h.ingress) {
                        (Some(e), _) => (e, Direction::Inbound),
                        (None, Some(i)) => (i, Direction::Outbound),
                        (None, None) => continue,
                    };
                    let list = acls.get_mut(&h.firewall).expect("firewall has ACLs");
                    let fi = slots[&(h.firewall.clone(), fwd_slot.0.clone(), fwd_slot.1)];
                    for r in &forward {
                        list[fi].push(r.clone());
                    }
                    let ri = slots[&(h.firewall.clone(), ret_slot.0.clone(), ret_slot.1)];
                    for r in &returns {
                        list[ri].push(r.clone());
                    }
                }
            }
        }
    }
    if !diags.is_empty() {
        return fail(diags);
    }

    let logged_any = !logged.is_empty();
    let acls: BTreeMap<String, Vec<Acl>> = acls
        .into_iter()
        .map(|(fw, list)| {
            let list = list
                .into_iter()
                .map(|mut b| {
                    if options.ospf {
                        for r in ospf_rules(logged_any) {
                            b.push(r);
                        }
                    }
                    b.rules.push(AclRule::terminal_deny());
                    Acl {
                        name: b.name,
                        rules: b.rules,
                    }
                })
                .collect();
            (fw, list)
        })
        .collect();
    if options.ospf {
        for r in ospf_rules(logged_any) {
            origins
                .entry(r.comment)
                .or_default()
                .insert("ospf option".into());
        }
    }
    let conduit_policies = carried
        .into_iter()
        .map(|((from, to), flows)| ConduitPolicy { from, to, flows })
        .collect();
    Ok(NetworkPolicy {
        model,
        flows,
        conduit_policies,
        acls,
        assignments,
        origins,
    })
}
