#![allow(dead_code)]

use std::path::PathBuf;

use forestfw_core::canonical::BestPractice;
use forestfw_core::netgen::{compile, CompileOptions, NetworkPolicy};
use forestfw_core::policy_lang::{parse_policy_file, BuiltinLibrary, PolicySpec};
use forestfw_core::topo_model::{load_declared_model, load_topology, Topology, ZoneConduitModel};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

pub fn read(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

pub fn spec(name: &str) -> PolicySpec {
    parse_policy_file(name, &read(name), &BuiltinLibrary).unwrap()
}

pub fn spec_text(text: &str) -> PolicySpec {
    parse_policy_file("policy.policyml", text, &BuiltinLibrary).unwrap()
}

pub fn topology() -> Topology {
    load_topology(&read("topology.graphml")).unwrap()
}

pub fn declared() -> ZoneConduitModel {
    load_declared_model(&read("zone_conduit.graphml")).unwrap()
}

pub fn best_practice() -> BestPractice {
    BestPractice::parse(
        "bestpractice/scada.policyml",
        &read("bestpractice/scada.policyml"),
        &BuiltinLibrary,
    )
    .unwrap()
}

pub fn options() -> CompileOptions {
    CompileOptions {
        ospf: true,
        declared_model: Some(declared()),
        best_practice: Some(best_practice()),
        topology_file: "topology.graphml".into(),
    }
}

pub fn compiled() -> NetworkPolicy {
    compile(&spec("policy.policyml"), &topology(), &options()).unwrap_or_else(|e| panic!("{e}"))
}
