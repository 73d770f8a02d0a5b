use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use forestfw_core::checker::export_alloy;
use forestfw_core::diag::{Diagnostic, Pos};
use forestfw_core::header_space::{
    Interval, IntervalSet, MAX_PORT, PROTO_ICMP, PROTO_TCP, PROTO_UDP,
};
use forestfw_core::netgen::{compile as compile_policy, InterfaceAssignment, NetworkPolicy};
use forestfw_core::policy_lang::{validate_spec, FlowRule};
use forestfw_core::render::{
    firewall_vendor, loc_metrics, parse_neutral, render_acls, render_device_with, DeviceTemplate,
    LocMetrics, Vendor,
};
use forestfw_core::sim::{vet_negative, vet_positive, ScanSpec, SimNetwork};
use forestfw_core::topo_model::{export_graph, zone_conduit_model, GraphFlavor, ZoneConduitModel};
use serde::{Deserialize, Serialize};

use crate::inputs::{load, load_topology_file, read, Failure, Loaded};
use crate::PolicyInputs;

pub const MANIFEST: &str = "manifest.json";

/// What `simulate` needs from a compile run, besides the neutral ACL files.
#[derive(Serialize, Deserialize)]
struct Manifest {
    /// Firewall name to the dialect its deployment uses.
    firewalls: BTreeMap<String, String>,
    model: ZoneConduitModel,
    flows: Vec<FlowRule>,
    assignments: Vec<InterfaceAssignment>,
    loc: LocMetrics,
}

fn write_alloy(l: &Loaded, inputs: &PolicyInputs) -> Result<(), Failure> {
    if let Some(path) = &inputs.emit_alloy {
        std::fs::write(path, export_alloy(&l.spec))
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

fn warn(l: &Loaded) {
    for d in validate_spec(&l.spec).iter().filter(|d| !d.is_error()) {
        eprintln!("{d}");
    }
}

fn run_compile(l: &Loaded) -> Result<NetworkPolicy, Failure> {
    compile_policy(&l.spec, &l.topology, &l.options).map_err(|e| Failure::Findings(e.to_string()))
}

pub fn check(inputs: &PolicyInputs) -> Result<(), Failure> {
    let l = load(inputs)?;
    write_alloy(&l, inputs)?;
    warn(&l);
    let p = run_compile(&l)?;
    println!(
        "ok: {} flow rules over {} firewalls, {} ACLs",
        p.flows.len(),
        p.acls.len(),
        p.acls.values().map(Vec::len).sum::<usize>()
    );
    Ok(())
}

fn render_tree(
    l: &Loaded,
    p: &NetworkPolicy,
    templates: Option<&Path>,
) -> Result<BTreeMap<String, String>, Failure> {
    let mut files = BTreeMap::new();
    let mut tmpl = BTreeMap::new();
    for v in [Vendor::IptablesLike, Vendor::AsaLike] {
        let t = match templates {
            Some(dir) => DeviceTemplate::load(dir, v),
            None => DeviceTemplate::builtin(v),
        };
        tmpl.insert(v.id(), t.map_err(|e| anyhow!("template {}: {e}", v.id()))?);
    }
    let mut firewalls = BTreeMap::new();
    for (fw, acls) in &p.acls {
        files.insert(
            format!("{fw}.{}", Vendor::Neutral.file_suffix()),
            render_acls(acls),
        );
        for v in [Vendor::IptablesLike, Vendor::AsaLike] {
            let text =
                render_device_with(p, fw, &tmpl[v.id()]).map_err(|e| anyhow!("{fw}: {e}"))?;
            files.insert(format!("{fw}.{}", v.file_suffix()), text);
        }
        firewalls.insert(fw.clone(), firewall_vendor(p, fw).id().to_string());
    }
    for flavor in [GraphFlavor::ZoneFirewall, GraphFlavor::ZoneConduit] {
        files.insert(
            format!("{}.dot", flavor.name()),
            export_graph(&p.model, flavor),
        );
    }
    let loc = loc_metrics(&l.spec, p);
    let manifest = Manifest {
        firewalls,
        model: p.model.clone(),
        flows: p.flows.clone(),
        assignments: p.assignments.clone(),
        loc,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| anyhow!("manifest: {e}"))?;
    files.insert(MANIFEST.into(), json + "\n");
    Ok(files)
}

/// Writes into a sibling directory first, then swaps it into place.
fn write_tree(out: &Path, files: &BTreeMap<String, String>) -> anyhow::Result<()> {
    let name = out
        .file_name()
        .ok_or_else(|| anyhow!("bad output path {}", out.display()))?;
    let parent = out
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    std::fs::create_dir_all(&parent)
        .with_context(|| format!("cannot create {}", parent.display()))?;
    let tmp = parent.join(format!(
        ".{}.tmp-{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    if tmp.exists() {
        std::fs::remove_dir_all(&tmp)?;
    }
    std::fs::create_dir(&tmp).with_context(|| format!("cannot create {}", tmp.display()))?;
    for (file, text) in files {
        std::fs::write(tmp.join(file), text).with_context(|| format!("cannot write {file}"))?;
    }
    if out.exists() {
        std::fs::remove_dir_all(out)
            .with_context(|| format!("cannot replace {}", out.display()))?;
    }
    std::fs::rename(&tmp, out)
        .with_context(|| format!("cannot move output into {}", out.display()))?;
    Ok(())
}

pub fn compile(
    inputs: &PolicyInputs,
    out: &Path,
    ospf: bool,
    templates: Option<&Path>,
) -> Result<(), Failure> {
    let mut l = load(inputs)?;
    l.options.ospf = ospf;
    warn(&l);
    let p = run_compile(&l)?;
    let files = render_tree(&l, &p, templates)?;
    write_tree(out, &files)?;
    write_alloy(&l, inputs)?;
    let loc = loc_metrics(&l.spec, &p);
    println!(
        "compiled {} firewalls into {} ({} policy lines, {} device lines, ratio {:.1})",
        p.acls.len(),
        out.display(),
        loc.high_level_loc,
        loc.device_loc,
        loc.ratio
    );
    Ok(())
}

pub fn parse_ports(text: &str) -> anyhow::Result<IntervalSet> {
    let mut ivs = Vec::new();
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (lo, hi) = part.split_once('-').unwrap_or((part, part));
        let num = |s: &str| -> anyhow::Result<u32> {
            let n: u32 = s
                .trim()
                .parse()
                .with_context(|| format!("bad port `{s}`"))?;
            if n > MAX_PORT {
                return Err(anyhow!("port {n} out of range"));
            }
            Ok(n)
        };
        let (lo, hi) = (num(lo)?, num(hi)?);
        if lo > hi {
            return Err(anyhow!("empty port range `{part}`"));
        }
        ivs.push(Interval::new(lo, hi));
    }
    Ok(IntervalSet::from_intervals(ivs))
}

pub fn simulate(dir: &Path, scan_ports: Option<&str>) -> Result<(), Failure> {
    let text = read(&dir.join(MANIFEST))?;
    let m: Manifest = serde_json::from_str(&text)
        .map_err(|e| anyhow!("{}: {e}", dir.join(MANIFEST).display()))?;
    let mut acls = BTreeMap::new();
    for fw in m.firewalls.keys() {
        let path = dir.join(format!("{fw}.{}", Vendor::Neutral.file_suffix()));
        let parsed =
            parse_neutral(&read(&path)?).map_err(|e| anyhow!("{}: {e}", path.display()))?;
        acls.insert(fw.clone(), parsed);
    }
    let scan = match scan_ports.map(str::trim) {
        None => ScanSpec::default_for(&m.flows),
        Some("" | "none") => ScanSpec::empty(),
        Some(spec) => ScanSpec::new(vec![PROTO_ICMP, PROTO_TCP, PROTO_UDP], parse_ports(spec)?),
    };
    let net = SimNetwork::new(m.model, m.flows, acls, &m.assignments);
    let results = vet_positive(&net);
    for r in &results {
        println!("{r}");
    }
    let leaks = vet_negative(&net, &scan);
    for l in &leaks {
        println!("{l}");
    }
    let failed = results.iter().filter(|r| r.outcome == 0).count();
    let summary = format!(
        "{} rules vetted, {failed} failed, {} leaks",
        results.len(),
        leaks.len()
    );
    if failed > 0 || !leaks.is_empty() {
        return Err(Failure::Findings(summary));
    }
    println!("{summary}");
    Ok(())
}

pub fn graph(topology: &Path, out: &Path) -> Result<(), Failure> {
    let t = load_topology_file(topology)?;
    let m = zone_conduit_model(&t).map_err(|e| {
        Failure::Findings(
            Diagnostic::error(
                topology.display().to_string(),
                Pos::new(1, 1),
                e.to_string(),
            )
            .to_string(),
        )
    })?;
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    for flavor in [GraphFlavor::ZoneFirewall, GraphFlavor::ZoneConduit] {
        let path = out.join(format!("{}.dot", flavor.name()));
        std::fs::write(&path, export_graph(&m, flavor))
            .with_context(|| format!("cannot write {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
