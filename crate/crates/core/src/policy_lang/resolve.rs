//! Import loading and name resolution: [`SourceFile`]s to a [`PolicySpec`].

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use crate::diag::Pos;
use crate::header_space::{Interval, IntervalSet, PROTO_ICMP, PROTO_TCP, PROTO_UDP};

use super::ast::{Attr, Decl, DeclBody, Item, Ref, SetExpr, SetOp, Term, Value};
use super::parser::parse_source;
use super::*;

struct Entry {
    qualified: String,
    ns: Option<String>,
    file: String,
    decl: Decl,
}

trait SetLike: Clone {
    fn union(&self, other: &Self) -> Self;
    fn intersect(&self, other: &Self) -> Self;
    fn difference(&self, other: &Self) -> Self;
}

impl SetLike for ServiceSet {
    fn union(&self, other: &Self) -> Self {
        ServiceSet::union(self, other)
    }
    fn intersect(&self, other: &Self) -> Self {
        ServiceSet::intersect(self, other)
    }
    fn difference(&self, other: &Self) -> Self {
        ServiceSet::difference(self, other)
    }
}

impl SetLike for IntervalSet {
    fn union(&self, other: &Self) -> Self {
        IntervalSet::union(self, other)
    }
    fn intersect(&self, other: &Self) -> Self {
        IntervalSet::intersect(self, other)
    }
    fn difference(&self, other: &Self) -> Self {
        IntervalSet::difference(self, other)
    }
}

impl SetLike for BTreeSet<String> {
    fn union(&self, other: &Self) -> Self {
        self | other
    }
    fn intersect(&self, other: &Self) -> Self {
        self & other
    }
    fn difference(&self, other: &Self) -> Self {
        self - other
    }
}

/// Evaluates `,` (union) over chains of `^`/`\` applied left to right.
fn eval_expr<T, F>(expr: &SetExpr, mut term: F) -> Result<T, PolicyError>
where
    T: SetLike,
    F: FnMut(&Term) -> Result<T, PolicyError>,
{
    let mut acc: Option<T> = None;
    for chain in &expr.chains {
        let mut val = term(&chain.first)?;
        for (op, t) in &chain.rest {
            let rhs = term(t)?;
            val = match op {
                SetOp::Intersect => val.intersect(&rhs),
                SetOp::Difference => val.difference(&rhs),
            };
        }
        acc = Some(match acc {
            None => val,
            Some(a) => a.union(&val),
        });
    }
    acc.ok_or_else(|| {
        PolicyError::new(
            None,
            PolicyErrorKind::Invalid("empty set expression".into()),
        )
    })
}

fn count_loc(text: &str) -> usize {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with("//"))
        .count()
}

/// Parses `text` with imports resolved through `importer`.
pub fn parse_policy(text: &str, importer: &dyn Importer) -> Result<PolicySpec, PolicyError> {
    parse_policy_file("<input>", text, importer)
}

/// As [`parse_policy`], naming `file` in diagnostics.
pub fn parse_policy_file(
    file: &str,
    text: &str,
    importer: &dyn Importer,
) -> Result<PolicySpec, PolicyError> {
    let source = parse_source(text).map_err(|e| e.with_file(file))?;
    let mut r = Resolver::default();
    let mut imported = HashSet::new();
    let mut spec = PolicySpec::default();
    for item in source.items {
        match item {
            Item::Import { path, pos } => {
                r.load_import(&path, pos, file, importer, &mut imported)?;
                spec.imports.push(path);
            }
            Item::Load { path, pos } => {
                if spec.declared_model.is_some() {
                    return Err(PolicyError::at(
                        file,
                        pos,
                        PolicyErrorKind::Invalid("zone-conduit model loaded twice".into()),
                    ));
                }
                spec.declared_model = Some(path);
            }
            Item::Decl(d) => r.register(d, None, file)?,
        }
    }
    r.build(spec, file, count_loc(text))
}

#[derive(Default)]
struct Resolver {
    entries: Vec<Entry>,
    index: HashMap<String, usize>,
    services: HashMap<usize, ServiceSet>,
    ports: HashMap<usize, IntervalSet>,
    zones: HashMap<usize, BTreeSet<String>>,
    rules: HashMap<usize, Vec<String>>,
    visiting: HashSet<usize>,
}

impl Resolver {
    fn load_import(
        &mut self,
        path: &str,
        pos: Pos,
        from_file: &str,
        importer: &dyn Importer,
        seen: &mut HashSet<String>,
    ) -> Result<(), PolicyError> {
        if !seen.insert(path.to_string()) {
            return Ok(());
        }
        let text = importer.resolve(path).ok_or_else(|| {
            PolicyError::at(
                from_file,
                pos,
                PolicyErrorKind::UnresolvedImport(path.into()),
            )
        })?;
        let lib_file = format!("<{path}>");
        let source = parse_source(&text).map_err(|e| e.with_file(&lib_file))?;
        let ns = path.rsplit('.').next().unwrap_or(path).to_string();
        for item in source.items {
            match item {
                Item::Import { path, pos } => {
                    self.load_import(&path, pos, &lib_file, importer, seen)?
                }
                // libraries carry definitions only
                Item::Load { .. } => {}
                Item::Decl(d) => self.register(d, Some(ns.clone()), &lib_file)?,
            }
        }
        Ok(())
    }

    fn register(&mut self, decl: Decl, ns: Option<String>, file: &str) -> Result<(), PolicyError> {
        let qualified = match &ns {
            Some(ns) => format!("{ns}.{}", decl.name),
            None => decl.name.clone(),
        };
        if let Some(&prev) = self.index.get(&qualified) {
            let p = &self.entries[prev];
            return Err(PolicyError::at(
                file,
                decl.pos,
                PolicyErrorKind::Duplicate {
                    name: qualified,
                    first: format!("{}:{}", p.file, p.decl.pos),
                },
            ));
        }
        self.index.insert(qualified.clone(), self.entries.len());
        self.entries.push(Entry {
            qualified,
            ns,
            file: file.to_string(),
            decl,
        });
        Ok(())
    }

    /// Finds the declaration a name refers to from within namespace `from`:
    /// the namespace's own name first, then the exact name, then a unique
    /// imported declaration with that unqualified name.
    fn lookup(
        &self,
        name: &str,
        from: &Option<String>,
        file: &str,
        pos: Pos,
    ) -> Result<Option<usize>, PolicyError> {
        if let Some(ns) = from {
            if let Some(&i) = self.index.get(&format!("{ns}.{name}")) {
                return Ok(Some(i));
            }
        }
        if let Some(&i) = self.index.get(name) {
            return Ok(Some(i));
        }
        let hits: Vec<usize> = self
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.ns.is_some() && e.decl.name == name)
            .map(|(i, _)| i)
            .collect();
        match hits.as_slice() {
            [] => Ok(None),
            [one] => Ok(Some(*one)),
            many => Err(PolicyError::at(
                file,
                pos,
                PolicyErrorKind::Ambiguous {
                    name: name.into(),
                    candidates: many
                        .iter()
                        .map(|&i| self.entries[i].qualified.as_str())
                        .collect::<Vec<_>>()
                        .join(", "),
                },
            )),
        }
    }

    fn require(&self, r: &Ref, from: &Option<String>, file: &str) -> Result<usize, PolicyError> {
        self.lookup(&r.name, from, file, r.pos())?.ok_or_else(|| {
            PolicyError::at(file, r.pos(), PolicyErrorKind::Undeclared(r.name.clone()))
        })
    }

    fn wrong_kind(&self, idx: usize, file: &str, pos: Pos, wanted: &str) -> PolicyError {
        let e = &self.entries[idx];
        PolicyError::at(
            file,
            pos,
            PolicyErrorKind::Invalid(format!(
                "`{}` is a {}, expected {wanted}",
                e.qualified,
                e.decl.body.keyword()
            )),
        )
    }

    fn enter(&mut self, idx: usize) -> Result<(), PolicyError> {
        if !self.visiting.insert(idx) {
            let e = &self.entries[idx];
            return Err(PolicyError::at(
                &e.file,
                e.decl.pos,
                PolicyErrorKind::Cycle(e.qualified.clone()),
            ));
        }
        Ok(())
    }

    fn services_of(&mut self, idx: usize) -> Result<ServiceSet, PolicyError> {
        if let Some(s) = self.services.get(&idx) {
            return Ok(s.clone());
        }
        self.enter(idx)?;
        let (file, ns) = (self.entries[idx].file.clone(), self.entries[idx].ns.clone());
        let set = match self.entries[idx].decl.body.clone() {
            DeclBody::Service(attrs) => {
                let name = self.entries[idx].qualified.clone();
                let pos = self.entries[idx].decl.pos;
                [self.build_service(name, pos, &attrs, &ns, &file)?]
                    .into_iter()
                    .collect()
            }
            DeclBody::ServiceGroup(expr) => self.service_expr(&expr, &ns, &file)?,
            _ => unreachable!("services_of called on non-service"),
        };
        self.visiting.remove(&idx);
        self.services.insert(idx, set.clone());
        Ok(set)
    }

    fn service_expr(
        &mut self,
        expr: &SetExpr,
        ns: &Option<String>,
        file: &str,
    ) -> Result<ServiceSet, PolicyError> {
        eval_expr(expr, |t| match t {
            Term::Name(r) => {
                let idx = self.require(r, ns, file)?;
                match self.entries[idx].decl.body {
                    DeclBody::Service(_) | DeclBody::ServiceGroup(_) => self.services_of(idx),
                    _ => Err(self.wrong_kind(idx, file, r.pos(), "service or service group")),
                }
            }
            Term::Range { .. } => Err(PolicyError::at(
                file,
                expr_pos(expr),
                PolicyErrorKind::Invalid("port ranges are not services".into()),
            )),
        })
    }

    fn ports_of(&mut self, idx: usize) -> Result<IntervalSet, PolicyError> {
        if let Some(s) = self.ports.get(&idx) {
            return Ok(s.clone());
        }
        self.enter(idx)?;
        let (file, ns) = (self.entries[idx].file.clone(), self.entries[idx].ns.clone());
        let DeclBody::PortGroup(expr) = self.entries[idx].decl.body.clone() else {
            unreachable!("ports_of called on non-port-group")
        };
        let set = eval_expr(&expr, |t| match t {
            Term::Range { lo, hi } => range_set(*lo, *hi, &file, expr_pos(&expr)),
            Term::Name(r) => {
                let j = self.require(r, &ns, &file)?;
                match self.entries[j].decl.body {
                    DeclBody::PortGroup(_) => self.ports_of(j),
                    _ => Err(self.wrong_kind(j, &file, r.pos(), "port group")),
                }
            }
        })?;
        self.visiting.remove(&idx);
        self.ports.insert(idx, set.clone());
        Ok(set)
    }

    fn zones_of(&mut self, idx: usize) -> Result<BTreeSet<String>, PolicyError> {
        if let Some(s) = self.zones.get(&idx) {
            return Ok(s.clone());
        }
        self.enter(idx)?;
        let (file, ns) = (self.entries[idx].file.clone(), self.entries[idx].ns.clone());
        let DeclBody::ZoneGroup(expr) = self.entries[idx].decl.body.clone() else {
            unreachable!("zones_of called on non-zone-group")
        };
        let set = eval_expr(&expr, |t| match t {
            Term::Name(r) => self.zone_ref(r, &ns, &file).map(|(_, z)| z),
            Term::Range { .. } => Err(PolicyError::at(
                &file,
                expr_pos(&expr),
                PolicyErrorKind::Invalid("port ranges are not zones".into()),
            )),
        })?;
        self.visiting.remove(&idx);
        self.zones.insert(idx, set.clone());
        Ok(set)
    }

    /// A zone-or-group reference: declared zone groups resolve to their
    /// members, anything undeclared is a zone of the model.
    fn zone_ref(
        &mut self,
        r: &Ref,
        ns: &Option<String>,
        file: &str,
    ) -> Result<(String, BTreeSet<String>), PolicyError> {
        match self.lookup(&r.name, ns, file, r.pos())? {
            None => Ok((r.name.clone(), BTreeSet::from([r.name.clone()]))),
            Some(idx) => match self.entries[idx].decl.body {
                DeclBody::ZoneGroup(_) => {
                    Ok((self.entries[idx].qualified.clone(), self.zones_of(idx)?))
                }
                _ => Err(self.wrong_kind(idx, file, r.pos(), "zone or zone group")),
            },
        }
    }

    fn rules_of(&mut self, idx: usize) -> Result<Vec<String>, PolicyError> {
        if let Some(s) = self.rules.get(&idx) {
            return Ok(s.clone());
        }
        self.enter(idx)?;
        let (file, ns) = (self.entries[idx].file.clone(), self.entries[idx].ns.clone());
        let out = match self.entries[idx].decl.body.clone() {
            DeclBody::PolicyRule { .. } => vec![self.entries[idx].qualified.clone()],
            DeclBody::RuleGroup(refs) => {
                let mut out: Vec<String> = Vec::new();
                for r in &refs {
                    let j = self.require(r, &ns, &file)?;
                    match self.entries[j].decl.body {
                        DeclBody::PolicyRule { .. } | DeclBody::RuleGroup(_) => {
                            for name in self.rules_of(j)? {
                                if !out.contains(&name) {
                                    out.push(name);
                                }
                            }
                        }
                        _ => {
                            return Err(self.wrong_kind(
                                j,
                                &file,
                                r.pos(),
                                "policy rule or rule group",
                            ))
                        }
                    }
                }
                out
            }
            _ => unreachable!("rules_of called on non-rule"),
        };
        self.visiting.remove(&idx);
        self.rules.insert(idx, out.clone());
        Ok(out)
    }

    fn port_value(
        &mut self,
        v: &Value,
        ns: &Option<String>,
        file: &str,
        pos: Pos,
    ) -> Result<IntervalSet, PolicyError> {
        let mut acc = IntervalSet::empty();
        for item in v.items() {
            let part = match item {
                Value::Int(p) => range_set(*p, *p, file, pos)?,
                Value::Range(lo, hi) => range_set(*lo, *hi, file, pos)?,
                Value::Name(n) => {
                    let r = Ref::new(n.clone(), pos);
                    let idx = self.require(&r, ns, file)?;
                    match self.entries[idx].decl.body {
                        DeclBody::PortGroup(_) => self.ports_of(idx)?,
                        _ => return Err(self.wrong_kind(idx, file, pos, "port group")),
                    }
                }
                other => {
                    return Err(PolicyError::at(
                        file,
                        pos,
                        PolicyErrorKind::Invalid(format!(
                            "expected port, range or port group, found {other:?}"
                        )),
                    ))
                }
            };
            acc = acc.union(&part);
        }
        Ok(acc)
    }

    fn build_service(
        &mut self,
        name: String,
        pos: Pos,
        attrs: &[Attr],
        ns: &Option<String>,
        file: &str,
    ) -> Result<Service, PolicyError> {
        let invalid =
            |pos: Pos, msg: String| PolicyError::at(file, pos, PolicyErrorKind::Invalid(msg));
        let proto_attr = attrs
            .iter()
            .find(|a| a.key == "protocol")
            .ok_or_else(|| invalid(pos, format!("service `{name}` has no protocol")))?;
        let protocol = match &proto_attr.value {
            Value::Name(n) => protocol_number(n)
                .ok_or_else(|| invalid(proto_attr.span.0, format!("unknown protocol `{n}`")))?,
            Value::Int(v) => u8::try_from(*v).map_err(|_| {
                invalid(
                    proto_attr.span.0,
                    format!("protocol number {v} outside 0-255"),
                )
            })?,
            other => {
                return Err(invalid(
                    proto_attr.span.0,
                    format!("bad protocol value {other:?}"),
                ))
            }
        };
        let mut svc = Service::new(name, protocol);
        let mut seen = HashSet::new();
        for a in attrs {
            let apos = a.span.0;
            if !seen.insert(a.key.as_str()) {
                return Err(invalid(apos, format!("attribute `{}` given twice", a.key)));
            }
            let (prefix, field) = a.key.split_once('.').unwrap_or(("", a.key.as_str()));
            match (prefix, field) {
                ("", "protocol") => {}
                ("", "comment") => match &a.value {
                    Value::Str(s) => svc.comment = s.clone(),
                    _ => return Err(invalid(apos, "comment must be a string".into())),
                },
                ("tcp" | "udp", "source_port" | "dest_port") => {
                    let want = if prefix == "tcp" {
                        PROTO_TCP
                    } else {
                        PROTO_UDP
                    };
                    if protocol != want {
                        return Err(invalid(
                            apos,
                            format!("`{}` requires protocol={prefix}", a.key),
                        ));
                    }
                    let ports = self.port_value(&a.value, ns, file, apos)?;
                    if field == "source_port" {
                        svc.source_ports = ports;
                    } else {
                        svc.dest_ports = ports;
                    }
                }
                ("icmp", "type" | "icmp_type") => {
                    if protocol != PROTO_ICMP {
                        return Err(invalid(apos, format!("`{}` requires protocol=icmp", a.key)));
                    }
                    svc.icmp_types = self.port_value(&a.value, ns, file, apos)?;
                }
                _ => {
                    return Err(invalid(
                        apos,
                        format!("unknown service attribute `{}`", a.key),
                    ))
                }
            }
        }
        Ok(svc)
    }

    fn check_granularity(
        &mut self,
        v: &Value,
        ns: &Option<String>,
        file: &str,
    ) -> Result<(), PolicyError> {
        let Value::Block(attrs) = v else {
            return Ok(());
        };
        for a in attrs {
            for item in a.value.items() {
                match (a.key.as_str(), item) {
                    ("zone_or_group", Value::Name(n)) => {
                        self.zone_ref(&Ref::new(n.clone(), a.span.0), ns, file)?;
                    }
                    ("rule_or_group", Value::Name(n)) => {
                        let idx = self.require(&Ref::new(n.clone(), a.span.0), ns, file)?;
                        match self.entries[idx].decl.body {
                            DeclBody::PolicyRule { .. } | DeclBody::RuleGroup(_) => {}
                            _ => {
                                return Err(self.wrong_kind(
                                    idx,
                                    file,
                                    a.span.0,
                                    "policy rule or rule group",
                                ))
                            }
                        }
                    }
                    (_, nested @ Value::Block(_)) => self.check_granularity(nested, ns, file)?,
                    _ => {}
                }
            }
        }
        Ok(())
    }

    fn build(
        mut self,
        mut spec: PolicySpec,
        main_file: &str,
        loc: usize,
    ) -> Result<PolicySpec, PolicyError> {
        let mut policies = Vec::new();
        for idx in 0..self.entries.len() {
            let (q, ns, file, pos) = {
                let e = &self.entries[idx];
                (
                    e.qualified.clone(),
                    e.ns.clone(),
                    e.file.clone(),
                    e.decl.pos,
                )
            };
            spec.source.positions.insert(q.clone(), (file.clone(), pos));
            match self.entries[idx].decl.body.clone() {
                DeclBody::Service(_) => {
                    let set = self.services_of(idx)?;
                    let svc = set
                        .iter()
                        .next()
                        .cloned()
                        .expect("service resolves to itself");
                    spec.services.insert(q, svc);
                }
                DeclBody::ServiceGroup(expr) => {
                    let members = self.services_of(idx)?;
                    spec.service_groups.insert(
                        q.clone(),
                        ServiceGroup {
                            name: q,
                            expr,
                            members,
                            namespace: ns,
                        },
                    );
                }
                DeclBody::PortGroup(expr) => {
                    let ports = self.ports_of(idx)?;
                    spec.port_groups.insert(
                        q.clone(),
                        PortGroup {
                            name: q,
                            expr,
                            ports,
                            namespace: ns,
                        },
                    );
                }
                DeclBody::ZoneGroup(expr) => {
                    let zones = self.zones_of(idx)?;
                    spec.zone_groups.insert(
                        q.clone(),
                        ZoneGroup {
                            name: q,
                            expr,
                            zones,
                            namespace: ns,
                        },
                    );
                }
                DeclBody::PolicyRule {
                    left,
                    op,
                    right,
                    service,
                } => {
                    let (left, _) = self.zone_ref(&left, &ns, &file)?;
                    let (right, _) = self.zone_ref(&right, &ns, &file)?;
                    let services = self.service_expr(&service, &ns, &file)?;
                    spec.rules.insert(
                        q.clone(),
                        HighLevelRule {
                            name: q,
                            left,
                            op,
                            right,
                            service_expr: service,
                            services,
                            namespace: ns,
                        },
                    );
                }
                DeclBody::RuleGroup(refs) => {
                    let rules = self.rules_of(idx)?;
                    let members = refs.iter().map(|r| r.name.clone()).collect();
                    spec.rule_groups.insert(
                        q.clone(),
                        RuleGroup {
                            name: q,
                            members,
                            rules,
                            namespace: ns,
                        },
                    );
                }
                DeclBody::ReportingRule(attrs) => {
                    let mut use_case = None;
                    let mut granularity = BTreeMap::new();
                    for a in &attrs {
                        if a.key == "use_case" {
                            use_case = Some(match &a.value {
                                Value::Name(n) if n == "verification" => UseCase::Verification,
                                Value::Name(n) | Value::Str(n) => UseCase::Other(n.clone()),
                                other => {
                                    return Err(PolicyError::at(
                                        &file,
                                        a.span.0,
                                        PolicyErrorKind::Invalid(format!("bad use_case {other:?}")),
                                    ))
                                }
                            });
                        } else if let Some(dim) = a.key.strip_prefix("granularity.") {
                            self.check_granularity(&a.value, &ns, &file)?;
                            granularity.insert(dim.to_string(), a.value.clone());
                        }
                    }
                    spec.reporting_rules.insert(
                        q.clone(),
                        ReportingRule {
                            name: q,
                            use_case,
                            attrs,
                            granularity,
                            namespace: ns,
                        },
                    );
                }
                DeclBody::Policy {
                    security,
                    reporting,
                } => {
                    if ns.is_some() {
                        continue;
                    }
                    let s = self.require(&security, &ns, &file)?;
                    if !matches!(self.entries[s].decl.body, DeclBody::RuleGroup(_)) {
                        return Err(self.wrong_kind(s, &file, security.pos(), "rule group"));
                    }
                    let r = self.require(&reporting, &ns, &file)?;
                    if !matches!(self.entries[r].decl.body, DeclBody::ReportingRule(_)) {
                        return Err(self.wrong_kind(r, &file, reporting.pos(), "reporting rule"));
                    }
                    policies.push((
                        pos,
                        GlobalPolicy {
                            name: q,
                            security: self.entries[s].qualified.clone(),
                            reporting: self.entries[r].qualified.clone(),
                        },
                    ));
                }
            }
        }
        if policies.len() > 1 {
            return Err(PolicyError::at(
                main_file,
                policies[1].0,
                PolicyErrorKind::Invalid("more than one global policy".into()),
            ));
        }
        spec.global_policy = policies.pop().map(|(_, p)| p);
        spec.source.file = main_file.to_string();
        spec.source.loc = loc;
        Ok(spec)
    }
}

fn expr_pos(expr: &SetExpr) -> Pos {
    expr.names().next().map(Ref::pos).unwrap_or_default()
}

fn range_set(lo: u64, hi: u64, file: &str, pos: Pos) -> Result<IntervalSet, PolicyError> {
    if lo > hi {
        return Err(PolicyError::at(
            file,
            pos,
            PolicyErrorKind::Invalid(format!("empty range {lo}-{hi}")),
        ));
    }
    let clamp = |v: u64| u32::try_from(v).unwrap_or(u32::MAX);
    Ok(IntervalSet::from_interval(Interval::new(
        clamp(lo),
        clamp(hi),
    )))
}

/// Evaluates a service set expression against an already resolved spec.
pub fn resolve_service_expr(expr: &SetExpr, env: &PolicySpec) -> Result<ServiceSet, PolicyError> {
    eval_expr(expr, |t| match t {
        Term::Name(r) => lookup_services(&r.name, env).ok_or_else(|| {
            PolicyError::at(
                &env.source.file,
                r.pos(),
                PolicyErrorKind::Undeclared(r.name.clone()),
            )
        }),
        Term::Range { .. } => Err(PolicyError::new(
            None,
            PolicyErrorKind::Invalid("port ranges are not services".into()),
        )),
    })
}

fn lookup_services(name: &str, env: &PolicySpec) -> Option<ServiceSet> {
    let direct = |n: &str| {
        env.services
            .get(n)
            .map(|s| [s.clone()].into_iter().collect::<ServiceSet>())
            .or_else(|| env.service_groups.get(n).map(|g| g.members.clone()))
    };
    if let Some(s) = direct(name) {
        return Some(s);
    }
    let suffix = format!(".{name}");
    let mut hits = env
        .services
        .keys()
        .chain(env.service_groups.keys())
        .filter(|k| k.ends_with(&suffix) && !k[..k.len() - suffix.len()].contains('.'));
    match (hits.next(), hits.next()) {
        (Some(k), None) => direct(k),
        _ => None,
    }
}
