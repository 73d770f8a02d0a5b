//! Topologies, the zone-firewall model and the zone-conduit graph.

mod dot;
mod graphml;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use ipnet::Ipv4Net;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::header_space::{Interval, IntervalSet};

pub use dot::{export_graph, GraphFlavor};
pub use graphml::{load_declared_model, load_topology};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TopologyError {
    #[error("malformed GraphML: {0}")]
    Malformed(String),
    #[error("device `{device}` has unknown kind `{kind}`")]
    UnknownKind { device: String, kind: String },
    #[error("interface `{interface}` used twice on device `{device}`")]
    DuplicateInterface { device: String, interface: String },
    #[error("duplicate device `{0}`")]
    DuplicateDevice(String),
    #[error("link references unknown device `{0}`")]
    UnknownDevice(String),
    #[error("firewall `{0}` carries a zone label")]
    LabeledFirewall(String),
    #[error("{kind} `{device}` has no address")]
    MissingCidr { device: String, kind: &'static str },
    #[error("firewall `{0}` has a link without interface name")]
    MissingInterface(String),
    #[error("cannot classify `{0}`: unlabeled and not between two firewalls")]
    Unclassifiable(String),
    #[error("segment of `{device}` mixes zones {labels}")]
    MixedSegment { device: String, labels: String },
    #[error("zones `{a}` and `{b}` have overlapping addresses")]
    OverlappingZones { a: String, b: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceKind {
    Host,
    Subnet,
    Firewall,
}

impl DeviceKind {
    fn label(self) -> &'static str {
        match self {
            DeviceKind::Host => "host",
            DeviceKind::Subnet => "subnet",
            DeviceKind::Firewall => "firewall",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Device {
    pub name: String,
    pub kind: DeviceKind,
    pub zone_label: Option<String>,
    pub cidrs: Vec<Ipv4Net>,
    /// Marks an external transit segment.
    #[serde(default)]
    pub carrier: bool,
    /// Device template for firewalls.
    #[serde(default)]
    pub vendor: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub device_a: String,
    pub interface_a: String,
    pub device_b: String,
    pub interface_b: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub devices: Vec<Device>,
    pub links: Vec<Link>,
}

impl Topology {
    pub fn device(&self, name: &str) -> Option<&Device> {
        self.devices.iter().find(|d| d.name == name)
    }

    pub fn firewalls(&self) -> impl Iterator<Item = &Device> {
        self.devices
            .iter()
            .filter(|d| d.kind == DeviceKind::Firewall)
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        let mut names = HashSet::new();
        for d in &self.devices {
            if !names.insert(d.name.as_str()) {
                return Err(TopologyError::DuplicateDevice(d.name.clone()));
            }
            match d.kind {
                DeviceKind::Firewall if d.zone_label.is_some() => {
                    return Err(TopologyError::LabeledFirewall(d.name.clone()))
                }
                DeviceKind::Host | DeviceKind::Subnet if d.cidrs.is_empty() => {
                    return Err(TopologyError::MissingCidr {
                        device: d.name.clone(),
                        kind: d.kind.label(),
                    })
                }
                _ => {}
            }
        }
        let mut used = HashSet::new();
        for l in &self.links {
            for (dev, ifname) in [(&l.device_a, &l.interface_a), (&l.device_b, &l.interface_b)] {
                let d = self
                    .device(dev)
                    .ok_or_else(|| TopologyError::UnknownDevice(dev.clone()))?;
                if ifname.is_empty() {
                    if d.kind == DeviceKind::Firewall {
                        return Err(TopologyError::MissingInterface(dev.clone()));
                    }
                    continue;
                }
                if !used.insert((dev.as_str(), ifname.as_str())) {
                    return Err(TopologyError::DuplicateInterface {
                        device: dev.clone(),
                        interface: ifname.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZoneKind {
    Regular,
    Firewall,
    Abstract,
    Carrier,
}

impl fmt::Display for ZoneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ZoneKind::Regular => "regular",
            ZoneKind::Firewall => "firewall",
            ZoneKind::Abstract => "abstract",
            ZoneKind::Carrier => "carrier",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Zone {
    pub name: String,
    pub kind: ZoneKind,
    pub members: BTreeSet<String>,
    pub cidrs: Vec<Ipv4Net>,
}

impl Zone {
    pub fn contains_addr(&self, addr: u32) -> bool {
        self.cidrs.iter().any(|c| cidr_interval(c).contains(addr))
    }

    pub fn addresses(&self) -> IntervalSet {
        IntervalSet::from_intervals(self.cidrs.iter().map(cidr_interval))
    }
}

pub fn cidr_interval(c: &Ipv4Net) -> Interval {
    Interval::new(u32::from(c.network()), u32::from(c.broadcast()))
}

/// A firewall interface and the zone behind it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FirewallPort {
    pub firewall: String,
    pub interface: String,
    pub zone: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FirewallInfo {
    pub name: String,
    pub zone: String,
    pub vendor: Option<String>,
}

/// Zones plus the firewall interfaces joining them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneFirewallModel {
    pub zones: Vec<Zone>,
    pub firewalls: Vec<FirewallInfo>,
    pub ports: Vec<FirewallPort>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conduit {
    /// Endpoints in lexicographic order.
    pub a: String,
    pub b: String,
    pub firewalls: BTreeSet<String>,
}

impl Conduit {
    pub fn endpoints(&self) -> (&str, &str) {
        (&self.a, &self.b)
    }

    pub fn joins(&self, x: &str, y: &str) -> bool {
        (self.a == x && self.b == y) || (self.a == y && self.b == x)
    }
}

/// The graph `G = (Z, C)` with the firewall realization of each conduit.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneConduitModel {
    pub zones: Vec<Zone>,
    pub conduits: Vec<Conduit>,
    pub firewalls: Vec<FirewallInfo>,
    pub ports: Vec<FirewallPort>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ZoneConduitModel {
    pub fn zone(&self, name: &str) -> Option<&Zone> {
        self.zones.iter().find(|z| z.name == name)
    }

    pub fn zone_names(&self) -> BTreeSet<String> {
        self.zones.iter().map(|z| z.name.clone()).collect()
    }

    pub fn conduit(&self, x: &str, y: &str) -> Option<&Conduit> {
        self.conduits.iter().find(|c| c.joins(x, y))
    }

    pub fn conduit_endpoints(&self) -> BTreeSet<(String, String)> {
        self.conduits
            .iter()
            .map(|c| (c.a.clone(), c.b.clone()))
            .collect()
    }

    fn add_conduit(&mut self, x: &str, y: &str, fw: Option<&str>) {
        let (a, b) = if x <= y { (x, y) } else { (y, x) };
        if let Some(c) = self.conduits.iter_mut().find(|c| c.a == a && c.b == b) {
            c.firewalls.extend(fw.map(str::to_string));
            return;
        }
        self.conduits.push(Conduit {
            a: a.to_string(),
            b: b.to_string(),
            firewalls: fw.map(str::to_string).into_iter().collect(),
        });
    }

    /// Zones reachable over one conduit, with the realizing firewalls.
    pub fn neighbours(&self, zone: &str) -> Vec<(&str, &Conduit)> {
        let mut out: Vec<(&str, &Conduit)> = self
            .conduits
            .iter()
            .filter_map(|c| {
                if c.a == zone {
                    Some((c.b.as_str(), c))
                } else if c.b == zone {
                    Some((c.a.as_str(), c))
                } else {
                    None
                }
            })
            .collect();
        out.sort_by(|x, y| x.0.cmp(y.0));
        out
    }

    pub fn firewall(&self, name: &str) -> Option<&FirewallInfo> {
        self.firewalls.iter().find(|f| f.name == name)
    }

    /// The firewall owning a Firewall-Zone.
    pub fn firewall_of_zone(&self, zone: &str) -> Option<&FirewallInfo> {
        self.firewalls.iter().find(|f| f.zone == zone)
    }

    /// Interface of `fw` facing `zone`.
    pub fn interface(&self, fw: &str, zone: &str) -> Option<&str> {
        self.ports
            .iter()
            .find(|p| p.firewall == fw && p.zone == zone)
            .map(|p| p.interface.as_str())
    }

    /// Interfaces of `fw` in name order.
    pub fn interfaces(&self, fw: &str) -> Vec<&FirewallPort> {
        let mut v: Vec<&FirewallPort> = self.ports.iter().filter(|p| p.firewall == fw).collect();
        v.sort_by(|a, b| a.interface.cmp(&b.interface));
        v
    }

    /// Zone whose addresses contain `addr`. Firewall zones win over the
    /// regular zones they may sit in.
    pub fn zone_of_addr(&self, addr: u32) -> Option<&Zone> {
        self.zones
            .iter()
            .filter(|z| z.contains_addr(addr))
            .min_by_key(|z| (z.kind != ZoneKind::Firewall, z.name.clone()))
    }
}

struct Segments {
    parent: Vec<usize>,
}

impl Segments {
    fn find(&mut self, i: usize) -> usize {
        let p = self.parent[i];
        if p == i {
            return i;
        }
        let r = self.find(p);
        self.parent[i] = r;
        r
    }

    fn join(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Groups devices into zones. Labeled segments become regular zones, every
/// firewall its own Firewall-Zone (`fwzN`), unlabeled segments between two
/// or more firewalls Abstract-Zones (`azN`) and segments marked as carrier
/// transit Carrier-Zones (`czN`). Numbering follows document order.
pub fn build_zone_firewall_model(t: &Topology) -> Result<ZoneFirewallModel, TopologyError> {
    t.validate()?;
    let index: HashMap<&str, usize> = t
        .devices
        .iter()
        .enumerate()
        .map(|(i, d)| (d.name.as_str(), i))
        .collect();
    let is_fw = |i: usize| t.devices[i].kind == DeviceKind::Firewall;
    let mut seg = Segments {
        parent: (0..t.devices.len()).collect(),
    };
    let mut fw_links: Vec<(usize, String, usize)> = Vec::new();
    for l in &t.links {
        let (a, b) = (index[l.device_a.as_str()], index[l.device_b.as_str()]);
        match (is_fw(a), is_fw(b)) {
            (false, false) => seg.join(a, b),
            (true, false) => fw_links.push((a, l.interface_a.clone(), b)),
            (false, true) => fw_links.push((b, l.interface_b.clone(), a)),
            (true, true) => {
                return Err(TopologyError::Unclassifiable(format!(
                    "{}-{}",
                    l.device_a, l.device_b
                )))
            }
        }
    }

    let mut roots: Vec<usize> = Vec::new();
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in (0..t.devices.len()).filter(|&i| !is_fw(i)) {
        let r = seg.find(i);
        if !members.contains_key(&r) {
            roots.push(r);
        }
        members.entry(r).or_default().push(i);
    }
    let mut seg_fws: HashMap<usize, BTreeSet<usize>> = HashMap::new();
    for (fw, _, dev) in &fw_links {
        let r = seg.find(*dev);
        seg_fws.entry(r).or_default().insert(*fw);
    }

    let mut zones: Vec<Zone> = Vec::new();
    let mut seg_zone: HashMap<usize, String> = HashMap::new();
    let (mut n_abstract, mut n_carrier) = (0, 0);
    for r in &roots {
        let devs = &members[r];
        let labels: BTreeSet<&str> = devs
            .iter()
            .filter_map(|&i| t.devices[i].zone_label.as_deref())
            .collect();
        let carrier = devs.iter().any(|&i| t.devices[i].carrier);
        let first = &t.devices[devs[0]].name;
        let (name, kind) = match labels.len() {
            0 if carrier => {
                n_carrier += 1;
                (format!("cz{n_carrier}"), ZoneKind::Carrier)
            }
            0 if seg_fws.get(r).map_or(0, BTreeSet::len) >= 2 => {
                n_abstract += 1;
                (format!("az{n_abstract}"), ZoneKind::Abstract)
            }
            0 => return Err(TopologyError::Unclassifiable(first.clone())),
            1 => {
                let l = labels.iter().next().unwrap().to_string();
                (
                    l,
                    if carrier {
                        ZoneKind::Carrier
                    } else {
                        ZoneKind::Regular
                    },
                )
            }
            _ => {
                return Err(TopologyError::MixedSegment {
                    device: first.clone(),
                    labels: labels.into_iter().collect::<Vec<_>>().join(", "),
                })
            }
        };
        let names: BTreeSet<String> = devs.iter().map(|&i| t.devices[i].name.clone()).collect();
        let cidrs: Vec<Ipv4Net> = devs
            .iter()
            .flat_map(|&i| t.devices[i].cidrs.iter().copied())
            .collect();
        if let Some(z) = zones.iter_mut().find(|z| z.name == name) {
            z.members.extend(names);
            z.cidrs.extend(cidrs);
        } else {
            zones.push(Zone {
                name: name.clone(),
                kind,
                members: names,
                cidrs,
            });
        }
        seg_zone.insert(*r, name);
    }

    let mut firewalls = Vec::new();
    for (n, d) in t.firewalls().enumerate() {
        let zone = format!("fwz{}", n + 1);
        zones.push(Zone {
            name: zone.clone(),
            kind: ZoneKind::Firewall,
            members: BTreeSet::from([d.name.clone()]),
            cidrs: d.cidrs.clone(),
        });
        firewalls.push(FirewallInfo {
            name: d.name.clone(),
            zone,
            vendor: d.vendor.clone(),
        });
    }

    let non_fw: Vec<&Zone> = zones
        .iter()
        .filter(|z| z.kind != ZoneKind::Firewall)
        .collect();
    for (i, a) in non_fw.iter().enumerate() {
        for b in &non_fw[i + 1..] {
            if a.addresses().overlaps(&b.addresses()) {
                return Err(TopologyError::OverlappingZones {
                    a: a.name.clone(),
                    b: b.name.clone(),
                });
            }
        }
    }

    let mut ports: Vec<FirewallPort> = fw_links
        .iter()
        .map(|(fw, ifname, dev)| FirewallPort {
            firewall: t.devices[*fw].name.clone(),
            interface: ifname.clone(),
            zone: seg_zone[&seg.find(*dev)].clone(),
        })
        .collect();
    ports.sort();
    Ok(ZoneFirewallModel {
        zones,
        firewalls,
        ports,
    })
}

/// Conduits join every pair of zones facing the same firewall, including
/// that firewall's own zone.
pub fn derive_zone_conduit(m: &ZoneFirewallModel) -> ZoneConduitModel {
    let mut out = ZoneConduitModel {
        zones: m.zones.clone(),
        conduits: Vec::new(),
        firewalls: m.firewalls.clone(),
        ports: m.ports.clone(),
        warnings: Vec::new(),
    };
    for fw in &m.firewalls {
        let mut facing: Vec<&str> = Vec::new();
        for p in m.ports.iter().filter(|p| p.firewall == fw.name) {
            if !facing.contains(&p.zone.as_str()) {
                facing.push(&p.zone);
            }
        }
        if facing.is_empty() {
            out.warnings.push(format!(
                "firewall `{}` has no links and realizes no conduit",
                fw.name
            ));
            continue;
        }
        facing.push(&fw.zone);
        for (i, x) in facing.iter().enumerate() {
            for y in &facing[i + 1..] {
                out.add_conduit(x, y, Some(&fw.name));
            }
        }
    }
    out.conduits
        .sort_by(|x, y| x.endpoints().cmp(&y.endpoints()));
    out
}

/// Differences between the derived and the declared model.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMismatch {
    /// Zones derived from the topology but absent from the declaration.
    pub missing_zones: Vec<String>,
    /// Zones declared but not derived.
    pub extra_zones: Vec<String>,
    pub missing_conduits: Vec<(String, String)>,
    pub extra_conduits: Vec<(String, String)>,
}

impl fmt::Display for ModelMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pairs = |v: &[(String, String)]| {
            v.iter()
                .map(|(a, b)| format!("{a}--{b}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        let mut parts = Vec::new();
        if !self.missing_zones.is_empty() {
            parts.push(format!(
                "zones missing from declared model: {}",
                self.missing_zones.join(", ")
            ));
        }
        if !self.extra_zones.is_empty() {
            parts.push(format!(
                "declared zones not in topology: {}",
                self.extra_zones.join(", ")
            ));
        }
        if !self.missing_conduits.is_empty() {
            parts.push(format!(
                "conduits missing from declared model: {}",
                pairs(&self.missing_conduits)
            ));
        }
        if !self.extra_conduits.is_empty() {
            parts.push(format!(
                "declared conduits not realized by any firewall: {}",
                pairs(&self.extra_conduits)
            ));
        }
        f.write_str(&parts.join("; "))
    }
}

pub fn crosscheck_model(
    derived: &ZoneConduitModel,
    declared: &ZoneConduitModel,
) -> Result<(), ModelMismatch> {
    let (dz, cz) = (derived.zone_names(), declared.zone_names());
    let (dc, cc) = (derived.conduit_endpoints(), declared.conduit_endpoints());
    let m = ModelMismatch {
        missing_zones: dz.difference(&cz).cloned().collect(),
        extra_zones: cz.difference(&dz).cloned().collect(),
        missing_conduits: dc.difference(&cc).cloned().collect(),
        extra_conduits: cc.difference(&dc).cloned().collect(),
    };
    if m == ModelMismatch::default() {
        Ok(())
    } else {
        Err(m)
    }
}

/// Topology to zone-conduit model in one step.
pub fn zone_conduit_model(t: &Topology) -> Result<ZoneConduitModel, TopologyError> {
    Ok(derive_zone_conduit(&build_zone_firewall_model(t)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CHAIN: &str = r#"<?xml version="1.0"?>
<graphml xmlns="http://graphml.graphdrawing.org/xmlns">
  <key id="k" for="node" attr.name="kind" attr.type="string"/>
  <key id="z" for="node" attr.name="zone" attr.type="string"/>
  <key id="c" for="node" attr.name="cidr" attr.type="string"/>
  <key id="ia" for="edge" attr.name="if_a" attr.type="string"/>
  <key id="ib" for="edge" attr.name="if_b" attr.type="string"/>
  <graph edgedefault="undirected">
    <node id="h1"><data key="k">host</data><data key="z">z1</data><data key="c">10.0.0.1</data></node>
    <node id="fw"><data key="k">firewall</data></node>
    <node id="h3"><data key="k">host</data><data key="z">z3</data><data key="c">10.0.1.1/32</data></node>
    <edge source="fw" target="h1"><data key="ia">eth0</data></edge>
    <edge source="fw" target="h3"><data key="ia">eth1</data></edge>
  </graph>
</graphml>"#;

    #[test]
    fn minimal_chain() {
        let t = load_topology(CHAIN).unwrap();
        assert_eq!(t.firewalls().count(), 1);
        assert_eq!(
            t.devices.iter().filter(|d| d.zone_label.is_some()).count(),
            2
        );
        let m = zone_conduit_model(&t).unwrap();
        let names: Vec<&str> = m.zones.iter().map(|z| z.name.as_str()).collect();
        assert_eq!(names, ["z1", "z3", "fwz1"]);
        let ends: Vec<(&str, &str)> = m.conduits.iter().map(Conduit::endpoints).collect();
        assert_eq!(ends, [("fwz1", "z1"), ("fwz1", "z3"), ("z1", "z3")]);
        assert_eq!(m.interface("fw", "z3"), Some("eth1"));
    }

    #[test]
    fn duplicate_interface_rejected() {
        let doc = CHAIN.replace(
            "<data key=\"ia\">eth1</data>",
            "<data key=\"ia\">eth0</data>",
        );
        assert!(matches!(
            load_topology(&doc),
            Err(TopologyError::DuplicateInterface { .. })
        ));
    }

    #[test]
    fn labeled_firewall_rejected() {
        let doc = CHAIN.replace(
            "<node id=\"fw\"><data key=\"k\">firewall</data>",
            "<node id=\"fw\"><data key=\"k\">firewall</data><data key=\"z\">z9</data>",
        );
        assert_eq!(
            load_topology(&doc),
            Err(TopologyError::LabeledFirewall("fw".into()))
        );
    }

    #[test]
    fn unknown_kind_rejected() {
        let doc = CHAIN.replace(">host<", ">router<");
        assert!(matches!(
            load_topology(&doc),
            Err(TopologyError::UnknownKind { .. })
        ));
    }

    #[test]
    fn malformed_xml() {
        assert!(matches!(
            load_topology("<graphml><graph>"),
            Err(TopologyError::Malformed(_))
        ));
    }

    #[test]
    fn unlabeled_stub_cannot_be_classified() {
        let doc = CHAIN.replace("<data key=\"z\">z3</data>", "");
        assert_eq!(
            zone_conduit_model(&load_topology(&doc).unwrap()),
            Err(TopologyError::Unclassifiable("h3".into()))
        );
    }

    #[test]
    fn crosscheck_self_is_ok() {
        let m = zone_conduit_model(&load_topology(CHAIN).unwrap()).unwrap();
        assert_eq!(crosscheck_model(&m, &m), Ok(()));
        let mut declared = m.clone();
        declared.conduits.retain(|c| c.a != "fwz1");
        declared.zones.retain(|z| z.name != "fwz1");
        let e = crosscheck_model(&m, &declared).unwrap_err();
        assert_eq!(e.missing_zones, ["fwz1"]);
        assert_eq!(e.missing_conduits.len(), 2);
    }

    #[test]
    fn isolated_firewall_warns() {
        let doc = CHAIN.replace(
            "<node id=\"h3\">",
            "<node id=\"lonely\"><data key=\"k\">firewall</data></node>\n    <node id=\"h3\">",
        );
        let m = zone_conduit_model(&load_topology(&doc).unwrap()).unwrap();
        assert_eq!(m.warnings.len(), 1);
        assert!(m.zone("fwz2").is_some());
    }
}
