//! Valid zone paths and their realization through firewalls.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topo_model::{ZoneConduitModel, ZoneKind};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PathError {
    #[error("unknown zone `{0}`")]
    UnknownZone(String),
    #[error("flow from `{0}` to itself")]
    SameZone(String),
    #[error("no valid path from `{src}` to `{dst}`")]
    NoPath { src: String, dst: String },
}

/// One firewall crossing. `ingress` is `None` for traffic the firewall
/// originates, `egress` is `None` for traffic addressed to it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Hop {
    pub firewall: String,
    pub from_zone: String,
    pub to_zone: String,
    pub ingress: Option<String>,
    pub egress: Option<String>,
}

fn is_fw_zone(m: &ZoneConduitModel, z: &str) -> bool {
    m.zone(z).is_some_and(|z| z.kind == ZoneKind::Firewall)
}

/// Every way of crossing the conduits of `path`, one firewall per conduit.
/// Realizations that use a firewall interface twice are dropped.
pub fn realize(m: &ZoneConduitModel, path: &[String]) -> Vec<Vec<Hop>> {
    let mut out: Vec<Vec<Hop>> = vec![Vec::new()];
    for w in path.windows(2) {
        let (x, y) = (&w[0], &w[1]);
        let Some(c) = m.conduit(x, y) else {
            return Vec::new();
        };
        let mut next = Vec::new();
        for prefix in &out {
            for fw in &c.firewalls {
                let Some(info) = m.firewall(fw) else { continue };
                let ingress = if info.zone == *x {
                    None
                } else {
                    m.interface(fw, x).map(str::to_string)
                };
                let egress = if info.zone == *y {
                    None
                } else {
                    m.interface(fw, y).map(str::to_string)
                };
                if (info.zone != *x && ingress.is_none()) || (info.zone != *y && egress.is_none()) {
                    continue;
                }
                let mut p = prefix.clone();
                p.push(Hop {
                    firewall: fw.clone(),
                    from_zone: x.clone(),
                    to_zone: y.clone(),
                    ingress,
                    egress,
                });
                next.push(p);
            }
        }
        out = next;
    }
    out.retain(|hops| {
        let mut seen = HashSet::new();
        hops.iter().all(|h| {
            [&h.ingress, &h.egress]
                .into_iter()
                .flatten()
                .all(|i| seen.insert((h.firewall.as_str(), i.as_str())))
        })
    });
    out
}

/// All simple zone paths from `src` to `dst` that
/// (i) never pass through a Firewall-Zone,
/// (ii) have a realization crossing no firewall interface twice, and
/// (iii) when ending at a Firewall-Zone, arrive from a non-firewall zone
/// adjacent to that firewall (and symmetrically when starting at one).
/// Paths are returned in lexicographic order.
pub fn enumerate_paths(
    m: &ZoneConduitModel,
    src: &str,
    dst: &str,
) -> Result<Vec<Vec<String>>, PathError> {
    for z in [src, dst] {
        if m.zone(z).is_none() {
            return Err(PathError::UnknownZone(z.to_string()));
        }
    }
    if src == dst {
        return Err(PathError::SameZone(src.to_string()));
    }
    let mut found = Vec::new();
    let mut stack = vec![src.to_string()];
    walk(m, dst, &mut stack, &mut found);
    found.retain(|p: &Vec<String>| valid_ends(m, p) && !realize(m, p).is_empty());
    found.sort();
    if found.is_empty() {
        return Err(PathError::NoPath {
            src: src.into(),
            dst: dst.into(),
        });
    }
    Ok(found)
}

fn walk(m: &ZoneConduitModel, dst: &str, stack: &mut Vec<String>, found: &mut Vec<Vec<String>>) {
    let here = stack.last().expect("non-empty").clone();
    for (next, _) in m.neighbours(&here) {
        if stack.iter().any(|z| z == next) {
            continue;
        }
        if next == dst {
            let mut p = stack.clone();
            p.push(next.to_string());
            found.push(p);
            continue;
        }
        if is_fw_zone(m, next) {
            continue;
        }
        stack.push(next.to_string());
        walk(m, dst, stack, found);
        stack.pop();
    }
}

fn valid_ends(m: &ZoneConduitModel, p: &[String]) -> bool {
    let n = p.len();
    let end_ok = |fw_zone: &str, peer: &str| {
        !is_fw_zone(m, peer)
            && m.firewall_of_zone(fw_zone)
                .is_some_and(|f| m.interface(&f.name, peer).is_some())
    };
    (!is_fw_zone(m, &p[0]) || end_ok(&p[0], &p[1]))
        && (!is_fw_zone(m, &p[n - 1]) || end_ok(&p[n - 1], &p[n - 2]))
}
