mod commands;
mod inputs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "forestfw",
    version,
    about = "Compile and verify zone-based firewall policies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, validate and cross-check a policy without writing configurations.
    Check(CheckArgs),
    /// Compile a policy into per-firewall configurations.
    Compile(CompileArgs),
    /// Vet a compiled output directory in the packet-filter simulator.
    Simulate(SimulateArgs),
    /// Export the zone-firewall and zone-conduit graphs of a topology.
    Graph(GraphArgs),
}

#[derive(Args)]
struct PolicyInputs {
    #[arg(long)]
    policy: PathBuf,
    #[arg(long)]
    topology: PathBuf,
    #[arg(long = "best-practice")]
    best_practice: Option<PathBuf>,
    /// Write the Alloy model of the policy to this file.
    #[arg(long = "emit-alloy")]
    emit_alloy: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    inputs: PolicyInputs,
}

#[derive(Args)]
struct CompileArgs {
    #[command(flatten)]
    inputs: PolicyInputs,
    #[arg(long)]
    out: PathBuf,
    /// Permit OSPF neighbour traffic on every ACL.
    #[arg(long)]
    ospf: bool,
    /// Directory holding `<vendor>.tmpl` overrides.
    #[arg(long)]
    templates: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Output directory of a previous `compile`.
    #[arg(long, alias = "compiled")]
    out: PathBuf,
    /// TCP/UDP destination ports to scan, e.g. `0-1023,8080`; `none` skips the scan.
    #[arg(long = "scan-ports")]
    scan_ports: Option<String>,
}

#[derive(Args)]
struct GraphArgs {
    #[arg(long)]
    topology: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Check(a) => commands::check(&a.inputs),
        Command::Compile(a) => commands::compile(&a.inputs, &a.out, a.ospf, a.templates.as_deref()),
        Command::Simulate(a) => commands::simulate(&a.out, a.scan_ports.as_deref()),
        Command::Graph(a) => commands::graph(&a.topology, &a.out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}
