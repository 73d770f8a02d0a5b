//! Text renderings of a compiled policy.

mod device;
mod neutral;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netgen::NetworkPolicy;
use crate::policy_lang::PolicySpec;

pub use device::{
    load_iptables, render_device, render_device_with, DeviceTemplate, IptablesRuleset, Vendor,
};
pub use neutral::{
    parse_neutral, parse_rule_line, render_acls, render_neutral, rule_line, NeutralParseError,
    HEADER,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RenderError {
    #[error("unknown vendor `{0}` (expected neutral, iptables_like or asa_like)")]
    UnknownVendor(String),
    #[error("unknown firewall `{0}`")]
    UnknownFirewall(String),
    #[error("template: {0}")]
    Template(String),
    #[error("{0}")]
    Io(String),
    #[error("line {line}: {message}")]
    Load { line: usize, message: String },
}

/// Vendor a firewall is rendered for when the topology does not say.
pub const DEFAULT_VENDOR: Vendor = Vendor::IptablesLike;

/// The device dialect of a firewall, from its `vendor` topology key.
pub fn firewall_vendor(policy: &NetworkPolicy, firewall: &str) -> Vendor {
    policy
        .model
        .firewall(firewall)
        .and_then(|f| f.vendor.as_deref())
        .and_then(|v| v.parse().ok())
        .filter(|v| *v != Vendor::Neutral)
        .unwrap_or(DEFAULT_VENDOR)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocMetrics {
    pub high_level_loc: usize,
    pub device_loc: usize,
    pub ratio: f64,
}

fn is_code(line: &str) -> bool {
    let t = line.trim();
    !(t.is_empty() || t.starts_with('#') || t.starts_with('!') || t.contains(" remark "))
}

/// Non-blank, non-comment lines of the policy source against those of the
/// device configurations, each firewall in its own dialect.
pub fn loc_metrics(spec: &PolicySpec, policy: &NetworkPolicy) -> LocMetrics {
    let high_level_loc = spec.source.loc.max(1);
    let device_loc = policy
        .acls
        .keys()
        .filter_map(|fw| render_device(policy, fw, firewall_vendor(policy, fw)).ok())
        .map(|text| text.lines().filter(|l| is_code(l)).count())
        .sum();
    LocMetrics {
        high_level_loc,
        device_loc,
        ratio: device_loc as f64 / high_level_loc as f64,
    }
}
