use std::fmt;
use std::path::{Path, PathBuf};

use forestfw_core::canonical::{BestPractice, BestPracticeError};
use forestfw_core::diag::{Diagnostic, Pos};
use forestfw_core::netgen::CompileOptions;
use forestfw_core::policy_lang::{
    parse_policy_file, BuiltinLibrary, ChainImporter, DirImporter, PolicySpec,
};
use forestfw_core::topo_model::{load_declared_model, load_topology, Topology};

use crate::PolicyInputs;

/// Why a command did not succeed.
#[derive(Debug)]
pub enum Failure {
    /// Validation, overlap, best-practice or vetting findings.
    Findings(String),
    /// Bad arguments or unreadable files.
    Usage(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Findings(_) => 1,
            Failure::Usage(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Findings(s) => f.write_str(s),
            Failure::Usage(e) => write!(f, "error: {e:#}"),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

pub fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(anyhow::anyhow!("cannot read {}: {e}", path.display())))
}

fn finding(file: &Path, message: impl fmt::Display) -> Failure {
    Failure::Findings(
        Diagnostic::error(
            file.display().to_string(),
            Pos::new(1, 1),
            message.to_string(),
        )
        .to_string(),
    )
}

fn dir_of(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn importer_for(path: &Path) -> ChainImporter {
    ChainImporter::new()
        .with(BuiltinLibrary)
        .with(DirImporter::new(dir_of(path)))
}

pub fn load_policy(path: &Path) -> Result<PolicySpec, Failure> {
    let text = read(path)?;
    parse_policy_file(&path.display().to_string(), &text, &importer_for(path))
        .map_err(|e| Failure::Findings(e.to_diagnostic().to_string()))
}

pub fn load_topology_file(path: &Path) -> Result<Topology, Failure> {
    load_topology(&read(path)?).map_err(|e| finding(path, e))
}

pub struct Loaded {
    pub spec: PolicySpec,
    pub topology: Topology,
    pub options: CompileOptions,
}

pub fn load(inputs: &PolicyInputs) -> Result<Loaded, Failure> {
    let spec = load_policy(&inputs.policy)?;
    let topology = load_topology_file(&inputs.topology)?;
    let mut options = CompileOptions {
        topology_file: inputs.topology.display().to_string(),
        ..Default::default()
    };
    if let Some(name) = &spec.declared_model {
        let path = dir_of(&inputs.policy).join(name);
        options.declared_model =
            Some(load_declared_model(&read(&path)?).map_err(|e| finding(&path, e))?);
    }
    if let Some(path) = &inputs.best_practice {
        let text = read(path)?;
        let bp = BestPractice::parse(&path.display().to_string(), &text, &importer_for(path))
            .map_err(|e| match e {
                BestPracticeError::Parse(pe) => Failure::Findings(pe.to_diagnostic().to_string()),
                other => finding(path, other),
            })?;
        options.best_practice = Some(bp);
    }
    Ok(Loaded {
        spec,
        topology,
        options,
    })
}
