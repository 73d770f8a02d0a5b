//! The vendor-neutral ACL text format and its parser.
//!
//! ```text
//! INFO Vendor neutral network-level ruleset for ACL: acl_2
//!   remark~enable scada_zone to corp_zone WEB traffic (forward path)
//!   permit~tcp~from~10.0.0.16/29~to~10.0.0.0/29~sport~['0-65535']~dport~[443]~state~NEW,ESTABLISHED~log
//!   deny~ip~from~any~to~any~sport~~dport~~state~
//! ```

use std::fmt::Write;

use ipnet::Ipv4Net;
use thiserror::Error;

use crate::header_space::{Interval, IntervalSet, PROTO_ICMP, PROTO_TCP, PROTO_UDP};
use crate::netgen::{Acl, AclRule, Action, State, ANY};
use crate::policy_lang::{protocol_name, protocol_number, ALL_PROTOCOLS};

pub const HEADER: &str = "INFO Vendor neutral network-level ruleset for ACL: ";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct NeutralParseError {
    pub line: usize,
    pub message: String,
}

fn proto_text(p: Option<u8>) -> String {
    match p {
        None => "ip".into(),
        Some(ALL_PROTOCOLS) => "0".into(),
        Some(n) => protocol_name(n).map_or_else(|| n.to_string(), str::to_string),
    }
}

fn addr_text(n: &Ipv4Net) -> String {
    if n.prefix_len() == 0 {
        "any".into()
    } else {
        n.to_string()
    }
}

fn list_text(s: &IntervalSet) -> String {
    let parts: Vec<String> = s
        .intervals()
        .iter()
        .map(|iv| {
            if iv.lo == iv.hi {
                iv.lo.to_string()
            } else {
                format!("'{}-{}'", iv.lo, iv.hi)
            }
        })
        .collect();
    format!("[{}]", parts.join(", "))
}

/// One rule line, without indentation.
pub fn rule_line(r: &AclRule) -> String {
    let mut s = format!(
        "{}~{}~from~{}~to~{}~",
        r.action,
        proto_text(r.protocol),
        addr_text(&r.src),
        addr_text(&r.dst)
    );
    match r.protocol {
        Some(PROTO_TCP | PROTO_UDP) => {
            let _ = write!(
                s,
                "sport~{}~dport~{}",
                list_text(&r.sport),
                list_text(&r.dport)
            );
        }
        Some(PROTO_ICMP) => {
            let _ = write!(s, "type~{}", list_text(&r.icmp));
        }
        _ => s.push_str("sport~~dport~"),
    }
    let _ = write!(s, "~state~{}", r.state);
    if r.log {
        s.push_str("~log");
    }
    s
}

/// Renders one ACL. A remark line precedes every change of comment; the
/// terminal deny-all carries none.
pub fn render_neutral(acl: &Acl) -> String {
    let mut out = format!("{HEADER}{}\n", acl.name);
    let mut current: Option<&str> = None;
    for r in &acl.rules {
        let terminal = r.is_terminal_deny() && r.comment.is_empty();
        if !terminal && current != Some(r.comment.as_str()) {
            let _ = writeln!(out, "  remark~{}", r.comment);
            current = Some(&r.comment);
        }
        let _ = writeln!(out, "  {}", rule_line(r));
    }
    out
}

/// Every ACL of a firewall, separated by blank lines.
pub fn render_acls(acls: &[Acl]) -> String {
    acls.iter()
        .map(render_neutral)
        .collect::<Vec<_>>()
        .join("\n")
}

fn parse_list(text: &str) -> Result<IntervalSet, String> {
    let inner = text
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .ok_or_else(|| format!("expected a bracketed list, found `{text}`"))?;
    let mut ivs = Vec::new();
    for item in inner.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let item = item.trim_matches(|c| c == '\'' || c == '`');
        let num = |s: &str| {
            s.trim()
                .parse::<u32>()
                .map_err(|_| format!("bad number `{s}`"))
        };
        let iv = match item.split_once('-') {
            Some((lo, hi)) => Interval::new(num(lo)?, num(hi)?),
            None => Interval::single(num(item)?),
        };
        if iv.lo > iv.hi {
            return Err(format!("empty range `{item}`"));
        }
        ivs.push(iv);
    }
    Ok(IntervalSet::from_intervals(ivs))
}

fn parse_addr(text: &str) -> Result<Ipv4Net, String> {
    if text == "any" {
        return Ok(ANY);
    }
    text.parse::<Ipv4Net>()
        .or_else(|_| text.parse::<std::net::Ipv4Addr>().map(Ipv4Net::from))
        .map_err(|_| format!("bad address `{text}`"))
}

fn parse_state(text: &str) -> Result<State, String> {
    let mut st = State::STATELESS;
    for flag in text.split(',').filter(|s| !s.is_empty()) {
        match flag {
            "NEW" => st.new = true,
            "ESTABLISHED" => st.established = true,
            other => return Err(format!("unknown state `{other}`")),
        }
    }
    Ok(st)
}

/// Parses one rule line; `comment` becomes the rule's comment.
pub fn parse_rule_line(line: &str, comment: &str) -> Result<AclRule, String> {
    let f: Vec<&str> = line.trim().split('~').collect();
    let get = |i: usize| {
        f.get(i)
            .copied()
            .ok_or_else(|| format!("truncated rule `{}`", line.trim()))
    };
    let expect = |i: usize, word: &str| -> Result<(), String> {
        if get(i)? == word {
            Ok(())
        } else {
            Err(format!("expected `{word}` in field {}", i + 1))
        }
    };
    let action = match get(0)? {
        "permit" => Action::Permit,
        "deny" => Action::Deny,
        other => return Err(format!("unknown action `{other}`")),
    };
    let protocol = match get(1)? {
        "ip" => None,
        p => Some(
            protocol_number(p)
                .filter(|&n| n != ALL_PROTOCOLS)
                .or_else(|| p.parse().ok())
                .ok_or_else(|| format!("unknown protocol `{p}`"))?,
        ),
    };
    expect(2, "from")?;
    let src = parse_addr(get(3)?)?;
    expect(4, "to")?;
    let dst = parse_addr(get(5)?)?;
    let (mut sport, mut dport, mut icmp) = (
        IntervalSet::empty(),
        IntervalSet::empty(),
        IntervalSet::empty(),
    );
    let mut i = 6;
    if get(i)? == "type" {
        icmp = parse_list(get(i + 1)?)?;
        i += 2;
    } else {
        expect(i, "sport")?;
        expect(i + 2, "dport")?;
        let (s, d) = (get(i + 1)?, get(i + 3)?);
        if !s.is_empty() {
            sport = parse_list(s)?;
        }
        if !d.is_empty() {
            dport = parse_list(d)?;
        }
        i += 4;
    }
    expect(i, "state")?;
    let state = parse_state(get(i + 1)?)?;
    let log = match f.get(i + 2) {
        None => false,
        Some(&"log") if f.len() == i + 3 => true,
        Some(other) => return Err(format!("unexpected field `{other}`")),
    };
    Ok(AclRule {
        action,
        protocol,
        src,
        dst,
        sport,
        dport,
        icmp,
        state,
        log,
        comment: comment.to_string(),
    })
}

/// Parses text holding one or more neutral ACLs.
pub fn parse_neutral(text: &str) -> Result<Vec<Acl>, NeutralParseError> {
    let mut acls: Vec<Acl> = Vec::new();
    let mut comment = String::new();
    for (n, raw) in text.lines().enumerate() {
        let err = |message: String| NeutralParseError {
            line: n + 1,
            message,
        };
        let line = raw.trim_start();
        if line.trim_end().is_empty() {
            continue;
        }
        if let Some(name) = line.trim_end().strip_prefix(HEADER) {
            acls.push(Acl {
                name: name.trim().to_string(),
                rules: Vec::new(),
            });
            comment.clear();
            continue;
        }
        let Some(acl) = acls.last_mut() else {
            return Err(err("rule before any ACL header".into()));
        };
        if let Some(text) = line.strip_prefix("remark~") {
            comment = text.to_string();
            continue;
        }
        let mut rule = parse_rule_line(line, &comment).map_err(err)?;
        if rule.is_terminal_deny() {
            rule.comment.clear();
        }
        acl.rules.push(rule);
    }
    Ok(acls)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(s: &str) -> Ipv4Net {
        s.parse().unwrap()
    }

    fn https_forward() -> AclRule {
        AclRule {
            action: Action::Permit,
            protocol: Some(PROTO_TCP),
            src: net("10.0.0.16/29"),
            dst: net("10.0.0.0/29"),
            sport: IntervalSet::full(65_535),
            dport: IntervalSet::single(443),
            icmp: IntervalSet::empty(),
            state: State::NEW_ESTABLISHED,
            log: true,
            comment: "enable scada_zone to corp_zone WEB traffic (forward path)".into(),
        }
    }

    #[test]
    fn forward_line_shape() {
        assert_eq!(
            rule_line(&https_forward()),
            "permit~tcp~from~10.0.0.16/29~to~10.0.0.0/29~sport~['0-65535']~dport~[443]~state~NEW,ESTABLISHED~log"
        );
    }

    #[test]
    fn terminal_deny_line() {
        assert_eq!(
            rule_line(&AclRule::terminal_deny()),
            "deny~ip~from~any~to~any~sport~~dport~~state~"
        );
    }

    #[test]
    fn empty_acl() {
        let acl = Acl {
            name: "acl_1".into(),
            rules: vec![AclRule::terminal_deny()],
        };
        assert_eq!(
            render_neutral(&acl),
            "INFO Vendor neutral network-level ruleset for ACL: acl_1\n  deny~ip~from~any~to~any~sport~~dport~~state~\n"
        );
    }

    #[test]
    fn round_trip() {
        let mut icmp = https_forward();
        icmp.protocol = Some(PROTO_ICMP);
        icmp.sport = IntervalSet::empty();
        icmp.dport = IntervalSet::empty();
        icmp.icmp = IntervalSet::from_intervals([Interval::single(0), Interval::single(8)]);
        icmp.state = State::STATELESS;
        icmp.comment = "enable ping".into();
        let mut udp = https_forward();
        udp.protocol = Some(PROTO_UDP);
        udp.dport = IntervalSet::from_intervals([Interval::single(53), Interval::new(1000, 2000)]);
        udp.state = State::STATELESS;
        udp.log = false;
        udp.comment = String::new();
        let acl = Acl {
            name: "acl_7".into(),
            rules: vec![https_forward(), icmp, udp, AclRule::terminal_deny()],
        };
        let text = render_neutral(&acl);
        assert_eq!(parse_neutral(&text).unwrap(), vec![acl]);
    }

    #[test]
    fn backtick_quotes_accepted() {
        let r = parse_rule_line(
            "permit~tcp~from~10.0.0.16/29~to~10.0.0.0/29~sport~[443]~dport~[`0-65535']~state~ESTABLISHED~log",
            "",
        )
        .unwrap();
        assert!(r.dport.is_full(65_535));
        assert_eq!(r.state, State::ESTABLISHED);
    }

    #[test]
    fn errors_carry_line() {
        let e = parse_neutral(
            "INFO Vendor neutral network-level ruleset for ACL: a\n  permit~tcp~to\n",
        )
        .unwrap_err();
        assert_eq!(e.line, 2);
        assert!(parse_neutral("permit~ip~from~any~to~any~sport~~dport~~state~").is_err());
    }
}
