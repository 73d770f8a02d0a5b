//! Import resolution: dotted library names to policy source text.

use std::path::{Path, PathBuf};

/// Resolves a dotted library name such as `system.services.iana_services`.
pub trait Importer {
    fn resolve(&self, dotted: &str) -> Option<String>;
}

impl<F> Importer for F
where
    F: Fn(&str) -> Option<String>,
{
    fn resolve(&self, dotted: &str) -> Option<String> {
        self(dotted)
    }
}

const BUILTIN: &[(&str, &str)] = &[
    (
        "system.services.iana_services",
        include_str!("../../library/system/services/iana_services.policyml"),
    ),
    (
        "system.services.iana_icmp",
        include_str!("../../library/system/services/iana_icmp.policyml"),
    ),
];

/// The libraries shipped with the compiler.
#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinLibrary;

impl BuiltinLibrary {
    pub fn names() -> impl Iterator<Item = &'static str> {
        BUILTIN.iter().map(|(n, _)| *n)
    }
}

impl Importer for BuiltinLibrary {
    fn resolve(&self, dotted: &str) -> Option<String> {
        BUILTIN
            .iter()
            .find(|(n, _)| *n == dotted)
            .map(|(_, src)| src.to_string())
    }
}

/// Looks up `a.b.c` as `<root>/a/b/c.policyml`.
#[derive(Debug, Clone)]
pub struct DirImporter {
    root: PathBuf,
}

impl DirImporter {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DirImporter { root: root.into() }
    }

    pub fn path_for(&self, dotted: &str) -> PathBuf {
        let mut p = self.root.clone();
        for seg in dotted.split('.') {
            p.push(seg);
        }
        p.set_extension("policyml");
        p
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

impl Importer for DirImporter {
    fn resolve(&self, dotted: &str) -> Option<String> {
        std::fs::read_to_string(self.path_for(dotted)).ok()
    }
}

/// Tries each importer in order.
#[derive(Default)]
pub struct ChainImporter {
    parts: Vec<Box<dyn Importer>>,
}

impl ChainImporter {
    pub fn new() -> Self {
        ChainImporter::default()
    }

    pub fn with(mut self, importer: impl Importer + 'static) -> Self {
        self.parts.push(Box::new(importer));
        self
    }
}

impl Importer for ChainImporter {
    fn resolve(&self, dotted: &str) -> Option<String> {
        self.parts.iter().find_map(|i| i.resolve(dotted))
    }
}
