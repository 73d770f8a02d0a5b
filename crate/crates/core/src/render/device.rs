//! Device-level renderings through section templates.
//!
//! A template is a list of sections, each introduced by a line `%% name`.
//! Sections are `header`, `chain`, `binding_inbound`, `binding_outbound`,
//! `remark`, `provenance`, `log`, `permit`, `deny` and `footer`. Slots
//! written `{{slot}}` are filled with `firewall`, `acl`, `interface`,
//! `text`, `origin`, `match` and `log`.

use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv4Addr;
use std::path::Path;
use std::str::FromStr;

use ipnet::Ipv4Net;

use super::RenderError;
use crate::header_space::{
    Interval, IntervalSet, MAX_ICMP, MAX_PORT, PROTO_ICMP, PROTO_TCP, PROTO_UDP,
};
use crate::netgen::{
    Acl, AclRule, Action, Direction, InterfaceAssignment, NetworkPolicy, State, ANY,
};
use crate::policy_lang::{protocol_name, protocol_number, ALL_PROTOCOLS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Vendor {
    Neutral,
    IptablesLike,
    AsaLike,
}

impl Vendor {
    pub const ALL: [Vendor; 3] = [Vendor::Neutral, Vendor::IptablesLike, Vendor::AsaLike];

    pub fn id(self) -> &'static str {
        match self {
            Vendor::Neutral => "neutral",
            Vendor::IptablesLike => "iptables_like",
            Vendor::AsaLike => "asa_like",
        }
    }

    /// Output file suffix, after `<firewall>.`.
    pub fn file_suffix(self) -> &'static str {
        match self {
            Vendor::Neutral => "neutral.acl",
            Vendor::IptablesLike => "iptables.txt",
            Vendor::AsaLike => "asa.txt",
        }
    }
}

impl fmt::Display for Vendor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Vendor {
    type Err = RenderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Vendor::ALL
            .into_iter()
            .find(|v| v.id() == s)
            .ok_or_else(|| RenderError::UnknownVendor(s.to_string()))
    }
}

const SECTIONS: [&str; 10] = [
    "header",
    "chain",
    "binding_inbound",
    "binding_outbound",
    "remark",
    "provenance",
    "log",
    "permit",
    "deny",
    "footer",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceTemplate {
    pub vendor: Vendor,
    sections: BTreeMap<String, String>,
}

impl DeviceTemplate {
    pub fn parse(vendor: Vendor, text: &str) -> Result<Self, RenderError> {
        let mut sections: BTreeMap<String, String> = BTreeMap::new();
        let mut current: Option<String> = None;
        for line in text.lines() {
            if let Some(name) = line.strip_prefix("%% ") {
                let name = name.trim();
                if !SECTIONS.contains(&name) {
                    return Err(RenderError::Template(format!("unknown section `{name}`")));
                }
                sections.insert(name.to_string(), String::new());
                current = Some(name.to_string());
            } else if let Some(sec) = &current {
                let body = sections.get_mut(sec).expect("section exists");
                body.push_str(line);
                body.push('\n');
            } else if !line.trim().is_empty() {
                return Err(RenderError::Template(
                    "text before the first section".into(),
                ));
            }
        }
        Ok(DeviceTemplate { vendor, sections })
    }

    /// The template shipped with the crate.
    pub fn builtin(vendor: Vendor) -> Result<Self, RenderError> {
        let text = match vendor {
            Vendor::Neutral => {
                return Err(RenderError::Template(
                    "the neutral format has no template".into(),
                ))
            }
            Vendor::IptablesLike => include_str!("../../templates/iptables_like.tmpl"),
            Vendor::AsaLike => include_str!("../../templates/asa_like.tmpl"),
        };
        Self::parse(vendor, text)
    }

    /// `<dir>/<vendor>.tmpl`, or the built-in template when absent.
    pub fn load(dir: &Path, vendor: Vendor) -> Result<Self, RenderError> {
        let path = dir.join(format!("{}.tmpl", vendor.id()));
        match std::fs::read_to_string(&path) {
            Ok(text) => Self::parse(vendor, &text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Self::builtin(vendor),
            Err(e) => Err(RenderError::Io(format!("{}: {e}", path.display()))),
        }
    }

    fn emit(&self, out: &mut String, section: &str, slots: &[(&str, &str)]) {
        let Some(body) = self.sections.get(section) else {
            return;
        };
        let mut text = body.clone();
        for (k, v) in slots {
            text = text.replace(&format!("{{{{{k}}}}}"), v);
        }
        out.push_str(&text);
    }
}

fn ipt_ports(flag: &str, s: &IntervalSet) -> String {
    if s.is_full(MAX_PORT) {
        return String::new();
    }
    let parts: Vec<String> = s
        .intervals()
        .iter()
        .map(|iv| {
            if iv.lo == iv.hi {
                iv.lo.to_string()
            } else {
                format!("{}:{}", iv.lo, iv.hi)
            }
        })
        .collect();
    format!(" -m multiport --{flag} {}", parts.join(","))
}

fn proto_word(p: u8) -> String {
    match p {
        ALL_PROTOCOLS => "0".into(),
        n => protocol_name(n).map_or_else(|| n.to_string(), str::to_string),
    }
}

/// iptables match clauses for a rule; ICMP rules with several types give
/// one clause per type.
fn ipt_matches(r: &AclRule) -> Vec<String> {
    let mut base = String::new();
    if let Some(p) = r.protocol {
        base.push_str(&format!(" -p {}", proto_word(p)));
    }
    if r.src != ANY {
        base.push_str(&format!(" -s {}", r.src));
    }
    if r.dst != ANY {
        base.push_str(&format!(" -d {}", r.dst));
    }
    let mut variants = vec![base];
    match r.protocol {
        Some(PROTO_TCP | PROTO_UDP) => {
            variants[0].push_str(&ipt_ports("sports", &r.sport));
            variants[0].push_str(&ipt_ports("dports", &r.dport));
        }
        Some(PROTO_ICMP) if !r.icmp.is_full(MAX_ICMP) => {
            let base = variants.pop().expect("one variant");
            for iv in r.icmp.intervals() {
                for t in iv.lo..=iv.hi {
                    variants.push(format!("{base} --icmp-type {t}"));
                }
            }
        }
        _ => {}
    }
    if r.state != State::STATELESS {
        for v in &mut variants {
            v.push_str(&format!(" -m conntrack --ctstate {}", r.state));
        }
    }
    variants
}

fn mask(prefix: u8) -> Ipv4Addr {
    Ipv4Addr::from(if prefix == 0 {
        0
    } else {
        u32::MAX << (32 - u32::from(prefix))
    })
}

fn asa_addr(n: &Ipv4Net) -> String {
    match n.prefix_len() {
        0 => "any".into(),
        32 => format!("host {}", n.addr()),
        p => format!("{} {}", n.network(), mask(p)),
    }
}

fn asa_port(iv: &Interval) -> String {
    if iv.lo == iv.hi {
        format!(" eq {}", iv.lo)
    } else {
        format!(" range {} {}", iv.lo, iv.hi)
    }
}

fn asa_port_options(s: &IntervalSet) -> Vec<String> {
    if s.is_full(MAX_PORT) {
        vec![String::new()]
    } else {
        s.intervals().iter().map(asa_port).collect()
    }
}

fn asa_matches(r: &AclRule) -> Vec<String> {
    let proto = r.protocol.map_or_else(|| "ip".to_string(), proto_word);
    let head = format!(" {proto} {}", asa_addr(&r.src));
    let dst = format!(" {}", asa_addr(&r.dst));
    let mut out = Vec::new();
    match r.protocol {
        Some(PROTO_TCP | PROTO_UDP) => {
            for sp in asa_port_options(&r.sport) {
                for dp in asa_port_options(&r.dport) {
                    out.push(format!("{head}{sp}{dst}{dp}"));
                }
            }
        }
        Some(PROTO_ICMP) if !r.icmp.is_full(MAX_ICMP) => {
            for iv in r.icmp.intervals() {
                for t in iv.lo..=iv.hi {
                    out.push(format!("{head}{dst} {t}"));
                }
            }
        }
        _ => out.push(format!("{head}{dst}")),
    }
    if r.state == State::ESTABLISHED && r.protocol == Some(PROTO_TCP) {
        for m in &mut out {
            m.push_str(" established");
        }
    }
    out
}

/// Renders one firewall with a template.
pub fn render_device_with(
    policy: &NetworkPolicy,
    firewall: &str,
    t: &DeviceTemplate,
) -> Result<String, RenderError> {
    let acls = policy
        .acls
        .get(firewall)
        .ok_or_else(|| RenderError::UnknownFirewall(firewall.to_string()))?;
    let mut out = String::new();
    t.emit(&mut out, "header", &[("firewall", firewall)]);
    for a in acls {
        t.emit(
            &mut out,
            "chain",
            &[("firewall", firewall), ("acl", &a.name)],
        );
    }
    for asg in policy.assignments.iter().filter(|a| a.firewall == firewall) {
        let section = match asg.direction {
            Direction::Inbound => "binding_inbound",
            Direction::Outbound => "binding_outbound",
        };
        t.emit(
            &mut out,
            section,
            &[
                ("firewall", firewall),
                ("acl", &asg.acl),
                ("interface", &asg.interface),
            ],
        );
    }
    for a in acls {
        let mut current: Option<&str> = None;
        for r in &a.rules {
            if !r.comment.is_empty() && current != Some(r.comment.as_str()) {
                t.emit(
                    &mut out,
                    "remark",
                    &[("acl", &a.name), ("text", &r.comment)],
                );
                for origin in policy.origins.get(&r.comment).into_iter().flatten() {
                    t.emit(
                        &mut out,
                        "provenance",
                        &[("acl", &a.name), ("origin", origin)],
                    );
                }
                current = Some(&r.comment);
            }
            let matches = match t.vendor {
                Vendor::AsaLike => asa_matches(r),
                _ => ipt_matches(r),
            };
            let log = if r.log { " log" } else { "" };
            for m in &matches {
                let slots = [
                    ("acl", a.name.as_str()),
                    ("match", m.as_str()),
                    ("log", log),
                ];
                if r.log {
                    t.emit(&mut out, "log", &slots);
                }
                let section = match r.action {
                    Action::Permit => "permit",
                    Action::Deny => "deny",
                };
                t.emit(&mut out, section, &slots);
            }
        }
    }
    t.emit(&mut out, "footer", &[("firewall", firewall)]);
    Ok(out)
}

/// Renders one firewall in the given dialect with the built-in templates.
pub fn render_device(
    policy: &NetworkPolicy,
    firewall: &str,
    vendor: Vendor,
) -> Result<String, RenderError> {
    match vendor {
        Vendor::Neutral => {
            let acls = policy
                .acls
                .get(firewall)
                .ok_or_else(|| RenderError::UnknownFirewall(firewall.to_string()))?;
            Ok(super::render_acls(acls))
        }
        v => render_device_with(policy, firewall, &DeviceTemplate::builtin(v)?),
    }
}

/// ACLs and bindings read back from an iptables_like rendering.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IptablesRuleset {
    pub acls: Vec<Acl>,
    pub assignments: Vec<InterfaceAssignment>,
}

fn parse_ipt_ports(s: &str) -> Result<IntervalSet, String> {
    let mut ivs = Vec::new();
    for part in s.split(',') {
        let num = |x: &str| x.parse::<u32>().map_err(|_| format!("bad port `{x}`"));
        ivs.push(match part.split_once(':') {
            Some((lo, hi)) => Interval::new(num(lo)?, num(hi)?),
            None => Interval::single(num(part)?),
        });
    }
    Ok(IntervalSet::from_intervals(ivs))
}

fn parse_ipt_rule(words: &[&str]) -> Result<(AclRule, String), String> {
    let mut r = AclRule::terminal_deny();
    r.sport = IntervalSet::full(MAX_PORT);
    r.dport = IntervalSet::full(MAX_PORT);
    r.icmp = IntervalSet::full(MAX_ICMP);
    let mut target = String::new();
    let mut i = 0;
    let next = |i: usize| {
        words
            .get(i + 1)
            .copied()
            .ok_or_else(|| format!("missing value after `{}`", words[i]))
    };
    while i < words.len() {
        match words[i] {
            "-p" => {
                let p = next(i)?;
                r.protocol = Some(
                    protocol_number(p)
                        .or_else(|| p.parse().ok())
                        .ok_or_else(|| format!("bad protocol `{p}`"))?,
                );
                i += 2;
            }
            "-s" | "-d" => {
                let n = next(i)?;
                let net = n
                    .parse::<Ipv4Net>()
                    .or_else(|_| n.parse::<Ipv4Addr>().map(Ipv4Net::from))
                    .map_err(|_| format!("bad address `{n}`"))?;
                if words[i] == "-s" {
                    r.src = net;
                } else {
                    r.dst = net;
                }
                i += 2;
            }
            "--sports" => {
                r.sport = parse_ipt_ports(next(i)?)?;
                i += 2;
            }
            "--dports" => {
                r.dport = parse_ipt_ports(next(i)?)?;
                i += 2;
            }
            "--icmp-type" => {
                let t = next(i)?;
                r.icmp =
                    IntervalSet::single(t.parse().map_err(|_| format!("bad icmp type `{t}`"))?);
                i += 2;
            }
            "--ctstate" => {
                for flag in next(i)?.split(',') {
                    match flag {
                        "NEW" => r.state.new = true,
                        "ESTABLISHED" => r.state.established = true,
                        other => return Err(format!("unknown state `{other}`")),
                    }
                }
                i += 2;
            }
            "-m" => i += 2,
            "-j" => {
                target = next(i)?.to_string();
                i += 2;
            }
            "--log-prefix" => {
                // prefix may be quoted and contain spaces
                i += 1;
                while i < words.len() && !words[i].starts_with('-') {
                    i += 1;
                }
            }
            other => return Err(format!("unexpected `{other}`")),
        }
    }
    match r.protocol {
        Some(PROTO_TCP | PROTO_UDP) => r.icmp = IntervalSet::empty(),
        Some(PROTO_ICMP) => {
            r.sport = IntervalSet::empty();
            r.dport = IntervalSet::empty();
        }
        _ => {
            r.sport = IntervalSet::empty();
            r.dport = IntervalSet::empty();
            r.icmp = IntervalSet::empty();
        }
    }
    r.action = if target == "ACCEPT" {
        Action::Permit
    } else {
        Action::Deny
    };
    Ok((r, target))
}

/// Reads an iptables_like rendering back into ACLs and bindings. Comments
/// are dropped; LOG lines set the log flag of the rule that follows.
pub fn load_iptables(firewall: &str, text: &str) -> Result<IptablesRuleset, RenderError> {
    let mut set = IptablesRuleset::default();
    let mut pending_log = false;
    for (n, raw) in text.lines().enumerate() {
        let err = |m: String| RenderError::Load {
            line: n + 1,
            message: m,
        };
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('*') || line == "COMMIT" {
            continue;
        }
        if let Some(decl) = line.strip_prefix(':') {
            let name = decl.split_whitespace().next().unwrap_or_default();
            if !matches!(name, "INPUT" | "FORWARD" | "OUTPUT") {
                set.acls.push(Acl {
                    name: name.to_string(),
                    rules: Vec::new(),
                });
            }
            continue;
        }
        let words: Vec<&str> = line.split_whitespace().collect();
        if words.len() < 2 || words[0] != "-A" {
            return Err(err(format!("unrecognised line `{line}`")));
        }
        let chain = words[1];
        if matches!(chain, "INPUT" | "FORWARD" | "OUTPUT") {
            let get = |flag: &str| {
                words
                    .iter()
                    .position(|w| *w == flag)
                    .and_then(|i| words.get(i + 1))
                    .copied()
            };
            let acl = get("-j").ok_or_else(|| err("binding without target".into()))?;
            let (iface, direction) = match chain {
                "OUTPUT" => (get("-o"), Direction::Outbound),
                _ => (get("-i"), Direction::Inbound),
            };
            let iface = iface.ok_or_else(|| err("binding without interface".into()))?;
            let a = InterfaceAssignment {
                firewall: firewall.to_string(),
                interface: iface.to_string(),
                direction,
                acl: acl.to_string(),
            };
            if !set.assignments.contains(&a) {
                set.assignments.push(a);
            }
            continue;
        }
        let (mut rule, target) = parse_ipt_rule(&words[2..]).map_err(err)?;
        let acl = set
            .acls
            .iter_mut()
            .find(|a| a.name == chain)
            .ok_or_else(|| err(format!("rule for undeclared chain `{chain}`")))?;
        match target.as_str() {
            "LOG" => pending_log = true,
            "ACCEPT" | "DROP" => {
                rule.log = std::mem::take(&mut pending_log);
                acl.rules.push(rule);
            }
            other => return Err(err(format!("unknown target `{other}`"))),
        }
    }
    Ok(set)
}
