//! GraphML reading for topologies and declared zone-conduit models.

use std::collections::HashMap;
use std::net::Ipv4Addr;

use ipnet::Ipv4Net;
use roxmltree::{Document, Node};

use super::{
    Conduit, Device, DeviceKind, Link, Topology, TopologyError, Zone, ZoneConduitModel, ZoneKind,
};

const NS: &str = "http://graphml.graphdrawing.org/xmlns";

struct Graph<'a, 'i> {
    graph: Node<'a, 'i>,
    /// key id -> attribute name
    keys: HashMap<String, String>,
}

fn is(node: &Node, name: &str) -> bool {
    node.is_element()
        && node.tag_name().name() == name
        && matches!(node.tag_name().namespace(), None | Some(NS))
}

fn open<'a, 'i>(doc: &'a Document<'i>) -> Result<Graph<'a, 'i>, TopologyError> {
    let root = doc.root_element();
    if !is(&root, "graphml") {
        return Err(TopologyError::Malformed(
            "root element is not <graphml>".into(),
        ));
    }
    let mut keys = HashMap::new();
    for k in root.children().filter(|n| is(n, "key")) {
        let id = k
            .attribute("id")
            .ok_or_else(|| TopologyError::Malformed("<key> without id".into()))?;
        let name = k.attribute("attr.name").unwrap_or(id);
        keys.insert(id.to_string(), name.to_string());
    }
    let graph = root
        .children()
        .find(|n| is(n, "graph"))
        .ok_or_else(|| TopologyError::Malformed("no <graph> element".into()))?;
    Ok(Graph { graph, keys })
}

impl Graph<'_, '_> {
    fn data(&self, node: &Node) -> HashMap<String, String> {
        node.children()
            .filter(|n| is(n, "data"))
            .filter_map(|d| {
                let key = d.attribute("key")?;
                let name = self
                    .keys
                    .get(key)
                    .cloned()
                    .unwrap_or_else(|| key.to_string());
                Some((name, d.text().unwrap_or("").trim().to_string()))
            })
            .collect()
    }

    fn nodes(&self) -> impl Iterator<Item = Node<'_, '_>> + '_ {
        self.graph.children().filter(|n| is(n, "node"))
    }

    fn edges(&self) -> impl Iterator<Item = Node<'_, '_>> + '_ {
        self.graph.children().filter(|n| is(n, "edge"))
    }
}

fn attr<'a>(node: &'a Node, name: &str) -> Result<&'a str, TopologyError> {
    node.attribute(name).ok_or_else(|| {
        TopologyError::Malformed(format!("<{}> without `{name}`", node.tag_name().name()))
    })
}

pub(super) fn parse_cidr(text: &str) -> Result<Ipv4Net, TopologyError> {
    let t = text.trim();
    t.parse::<Ipv4Net>()
        .map(|n| n.trunc())
        .or_else(|_| t.parse::<Ipv4Addr>().map(Ipv4Net::from))
        .map_err(|_| TopologyError::Malformed(format!("bad address `{t}`")))
}

fn parse_cidrs(text: Option<&String>) -> Result<Vec<Ipv4Net>, TopologyError> {
    match text {
        None => Ok(Vec::new()),
        Some(t) => t
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(parse_cidr)
            .collect(),
    }
}

fn flag(v: Option<&String>) -> bool {
    v.is_some_and(|s| matches!(s.as_str(), "true" | "1" | "yes"))
}

/// Reads a network topology. Node keys: `kind` (host, subnet, firewall),
/// `zone`, `cidr` (comma separated), `carrier`, `vendor`. Edge keys:
/// `if_a` (interface on the source) and `if_b` (on the target).
pub fn load_topology(text: &str) -> Result<Topology, TopologyError> {
    let doc = Document::parse(text).map_err(|e| TopologyError::Malformed(e.to_string()))?;
    let g = open(&doc)?;
    let mut t = Topology::default();
    for n in g.nodes() {
        let name = attr(&n, "id")?.to_string();
        let data = g.data(&n);
        let kind = match data.get("kind").map(String::as_str) {
            Some("host") => DeviceKind::Host,
            Some("subnet") => DeviceKind::Subnet,
            Some("firewall") => DeviceKind::Firewall,
            Some(other) => {
                return Err(TopologyError::UnknownKind {
                    device: name,
                    kind: other.into(),
                })
            }
            None => {
                return Err(TopologyError::UnknownKind {
                    device: name,
                    kind: String::new(),
                })
            }
        };
        let zone_label = data.get("zone").filter(|z| !z.is_empty()).cloned();
        t.devices.push(Device {
            name,
            kind,
            zone_label,
            cidrs: parse_cidrs(data.get("cidr"))?,
            carrier: flag(data.get("carrier")),
            vendor: data.get("vendor").filter(|v| !v.is_empty()).cloned(),
        });
    }
    for e in g.edges() {
        let data = g.data(&e);
        t.links.push(Link {
            device_a: attr(&e, "source")?.to_string(),
            interface_a: data.get("if_a").cloned().unwrap_or_default(),
            device_b: attr(&e, "target")?.to_string(),
            interface_b: data.get("if_b").cloned().unwrap_or_default(),
        });
    }
    t.validate()?;
    Ok(t)
}

/// Reads a declared zone-conduit model: nodes are zones with a `kind`
/// (regular, firewall, abstract, carrier), edges are conduits.
pub fn load_declared_model(text: &str) -> Result<ZoneConduitModel, TopologyError> {
    let doc = Document::parse(text).map_err(|e| TopologyError::Malformed(e.to_string()))?;
    let g = open(&doc)?;
    let mut m = ZoneConduitModel::default();
    for n in g.nodes() {
        let name = attr(&n, "id")?.to_string();
        let data = g.data(&n);
        let kind = match data.get("kind").map(String::as_str) {
            Some("regular") | None => ZoneKind::Regular,
            Some("firewall") => ZoneKind::Firewall,
            Some("abstract") => ZoneKind::Abstract,
            Some("carrier") => ZoneKind::Carrier,
            Some(other) => {
                return Err(TopologyError::UnknownKind {
                    device: name,
                    kind: other.into(),
                })
            }
        };
        m.zones.push(Zone {
            name,
            kind,
            members: Default::default(),
            cidrs: parse_cidrs(data.get("cidr"))?,
        });
    }
    for e in g.edges() {
        let a = attr(&e, "source")?;
        let b = attr(&e, "target")?;
        for z in [a, b] {
            if m.zone(z).is_none() {
                return Err(TopologyError::Malformed(format!(
                    "conduit references unknown zone `{z}`"
                )));
            }
        }
        m.add_conduit(a, b, None);
    }
    m.conduits
        .sort_by(|x: &Conduit, y| x.endpoints().cmp(&y.endpoints()));
    Ok(m)
}
