use std::fmt::Write;

use super::{ZoneConduitModel, ZoneKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphFlavor {
    ZoneFirewall,
    ZoneConduit,
}

impl GraphFlavor {
    pub fn name(self) -> &'static str {
        match self {
            GraphFlavor::ZoneFirewall => "zone_firewall",
            GraphFlavor::ZoneConduit => "zone_conduit",
        }
    }
}

fn shape(kind: ZoneKind) -> &'static str {
    match kind {
        ZoneKind::Regular => "ellipse",
        ZoneKind::Firewall => "doublecircle",
        ZoneKind::Abstract => "diamond",
        ZoneKind::Carrier => "hexagon",
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Graphviz text for the model, nodes and edges in name order.
pub fn export_graph(m: &ZoneConduitModel, flavor: GraphFlavor) -> String {
    let mut out = format!("graph {} {{\n", flavor.name());
    let mut zones: Vec<_> = m.zones.iter().collect();
    zones.sort_by(|a, b| a.name.cmp(&b.name));
    for z in &zones {
        let cidrs: Vec<String> = z.cidrs.iter().map(ToString::to_string).collect();
        let _ = writeln!(
            out,
            "  {} [kind={}, shape={}, cidrs={}];",
            quote(&z.name),
            quote(&z.kind.to_string()),
            shape(z.kind),
            quote(&cidrs.join(","))
        );
    }
    match flavor {
        GraphFlavor::ZoneFirewall => {
            let mut fws: Vec<_> = m.firewalls.iter().collect();
            fws.sort_by(|a, b| a.name.cmp(&b.name));
            for f in &fws {
                let _ = writeln!(
                    out,
                    "  {} [kind=\"device\", shape=box];",
                    quote(&format!("fw:{}", f.name))
                );
            }
            let mut ports = m.ports.clone();
            ports.sort();
            for p in &ports {
                let _ = writeln!(
                    out,
                    "  {} -- {} [interface={}];",
                    quote(&format!("fw:{}", p.firewall)),
                    quote(&p.zone),
                    quote(&p.interface)
                );
            }
            for f in &fws {
                let _ = writeln!(
                    out,
                    "  {} -- {} [style=dashed];",
                    quote(&format!("fw:{}", f.name)),
                    quote(&f.zone)
                );
            }
        }
        GraphFlavor::ZoneConduit => {
            let mut conduits: Vec<_> = m.conduits.iter().collect();
            conduits.sort_by(|a, b| a.endpoints().cmp(&b.endpoints()));
            for c in conduits {
                let fws: Vec<&str> = c.firewalls.iter().map(String::as_str).collect();
                let _ = writeln!(
                    out,
                    "  {} -- {} [firewalls={}];",
                    quote(&c.a),
                    quote(&c.b),
                    quote(&fws.join(","))
                );
            }
        }
    }
    out.push_str("}\n");
    out
}
