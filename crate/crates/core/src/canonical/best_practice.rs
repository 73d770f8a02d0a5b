//! Best-practice compliance: every conduit direction touching a protected
//! zone must be included in the upper bound the best-practice file gives.
//!
//! A best-practice file is an ordinary policy file. Its zone group
//! `protected_zones` lists the protected zones; rules into that group
//! give the inbound bound, rules out of it the outbound bound. The other
//! end of each rule is the reserved zone `any_zone`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use super::{canonicalize_services, CanonicalPolicy};
use crate::diag::Diagnostic;
use crate::netgen::enumerate_paths;
use crate::policy_lang::{
    parse_policy_file, FlowRule, Importer, PolicyError, PolicySpec, ServiceSet,
};
use crate::topo_model::ZoneConduitModel;

pub const PROTECTED_GROUP: &str = "protected_zones";
pub const ANY_ZONE: &str = "any_zone";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BestPracticeError {
    #[error(transparent)]
    Parse(#[from] PolicyError),
    #[error("best-practice file declares no `{PROTECTED_GROUP}` zone group")]
    NoProtectedZones,
    #[error("best-practice zone `{0}` is not in the zone-conduit model")]
    UnknownZone(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BestPractice {
    pub file: String,
    pub protected: BTreeSet<String>,
    pub inbound: ServiceSet,
    pub outbound: ServiceSet,
}

impl BestPractice {
    pub fn parse(
        file: &str,
        text: &str,
        importer: &dyn Importer,
    ) -> Result<Self, BestPracticeError> {
        let spec = parse_policy_file(file, text, importer)?;
        Self::from_spec(file, &spec)
    }

    pub fn from_spec(file: &str, spec: &PolicySpec) -> Result<Self, BestPracticeError> {
        let protected = spec
            .zone_groups
            .get(PROTECTED_GROUP)
            .ok_or(BestPracticeError::NoProtectedZones)?
            .zones
            .clone();
        let mut bp = BestPractice {
            file: file.to_string(),
            protected,
            ..Default::default()
        };
        for r in spec.rules.values() {
            if r.right == PROTECTED_GROUP {
                bp.inbound = bp.inbound.union(&r.services);
            }
            if r.left == PROTECTED_GROUP {
                bp.outbound = bp.outbound.union(&r.services);
            }
        }
        Ok(bp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Bound {
    Inbound,
    Outbound,
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bound::Inbound => "inbound",
            Bound::Outbound => "outbound",
        })
    }
}

/// A conduit direction admitting more than the best practice allows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub from: String,
    pub to: String,
    pub direction: Bound,
    /// Canonical strips admitted beyond the bound.
    pub excess: CanonicalPolicy,
    /// Rules whose services reach into the excess.
    pub rules: Vec<String>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "conduit {} -> {} ({}) exceeds best practice: {} (rules: {})",
            self.from,
            self.to,
            self.direction,
            self.excess,
            self.rules.join(", ")
        )
    }
}

impl Violation {
    pub fn to_diagnostic(&self, spec: &PolicySpec) -> Diagnostic {
        let (file, pos) = spec
            .source
            .locate(self.rules.first().map_or("", String::as_str));
        Diagnostic::error(file, pos, self.to_string())
    }
}

/// Flows each directed conduit carries, following every valid path of
/// every flow. Flows without a path are skipped.
pub fn conduit_policies(
    flows: &[FlowRule],
    model: &ZoneConduitModel,
) -> BTreeMap<(String, String), Vec<FlowRule>> {
    let mut out: BTreeMap<(String, String), Vec<FlowRule>> = BTreeMap::new();
    for f in flows {
        let Ok(paths) = enumerate_paths(model, &f.src_zone, &f.dst_zone) else {
            continue;
        };
        for p in paths {
            for w in p.windows(2) {
                let list = out.entry((w[0].clone(), w[1].clone())).or_default();
                if !list.contains(f) {
                    list.push(f.clone());
                }
            }
        }
    }
    out
}

/// Checks `p^conduit ⊆ p^BestPractice` for every conduit direction entering
/// or leaving a protected zone.
pub fn check_best_practice(
    flows: &[FlowRule],
    model: &ZoneConduitModel,
    bp: &BestPractice,
) -> Result<Vec<Violation>, BestPracticeError> {
    if let Some(z) = bp.protected.iter().find(|z| model.zone(z).is_none()) {
        return Err(BestPracticeError::UnknownZone(z.clone()));
    }
    let inbound = canonicalize_services(bp.inbound.iter());
    let outbound = canonicalize_services(bp.outbound.iter());
    let mut out = Vec::new();
    for ((from, to), carried) in conduit_policies(flows, model) {
        let mut checks = Vec::new();
        if bp.protected.contains(&to) {
            checks.push((Bound::Inbound, &inbound));
        }
        if bp.protected.contains(&from) {
            checks.push((Bound::Outbound, &outbound));
        }
        for (direction, bound) in checks {
            let actual = canonicalize_services(carried.iter().map(|f| &f.service));
            if actual.is_included_in(bound) {
                continue;
            }
            let excess = actual.difference(bound);
            let mut rules: Vec<String> = carried
                .iter()
                .filter(|f| !canonicalize_services([&f.service]).is_included_in(bound))
                .map(|f| f.rule_name.clone())
                .collect();
            rules.sort();
            rules.dedup();
            out.push(Violation {
                from: from.clone(),
                to: to.clone(),
                direction,
                excess,
                rules,
            });
        }
    }
    Ok(out)
}
