//! Operator command-line for the drone blockchain: run scenarios, audit
//! persisted chains, export trust graphs, compare reports.
//!
//! Exit codes: 0 success, 1 reports differ (`report-diff` only),
//! 2 scenario schema error, 3 runtime error, 4 chain integrity failure.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use dronechain_core::crypto::{provider_by_name, PublicKey};
use dronechain_core::ledger::{read_chain_file, verify_chain_integrity, ParsedChain};
use dronechain_core::simnet::{run_scenario_outcome, MetricsReport, Scenario};
use dronechain_core::state::LedgerState;
use dronechain_core::trust_graph::{relevant_subgraph, TrustGraph};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DIFF: i32 = 1;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_INTEGRITY: i32 = 4;

#[derive(Parser)]
#[command(
    name = "dronechain",
    about = "Tamper-proof storage and authentication services for drone networks, with a deterministic network simulator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write the metrics report.
    Run(RunArgs),
    /// Verify a persisted chain file and print its tip (or one height).
    Inspect(InspectArgs),
    /// Export the trust graph recorded in a chain file.
    Graph(GraphArgs),
    /// Compare two metrics reports, ignoring wall-clock time.
    ReportDiff(ReportDiffArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Override the scenario's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Metrics report output path (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Also write an event trace (JSON lines).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Also write a CSV summary.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Also write each ground station's chain file into this directory.
    #[arg(long)]
    chains_dir: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    /// Persisted chain file.
    #[arg(long)]
    chain: PathBuf,
    /// Inspect this height instead of the tip.
    #[arg(long)]
    height: Option<u64>,
}

#[derive(Args)]
struct GraphArgs {
    /// Persisted chain file.
    #[arg(long)]
    chain: PathBuf,
    /// Output format.
    #[arg(long, value_parser = ["dot", "json"], default_value = "dot")]
    format: String,
    /// Comma-separated hex account keys; restricts output to the
    /// subgraph relevant to these anchors.
    #[arg(long)]
    anchors: Option<String>,
    /// Path-length cap used with --anchors.
    #[arg(long, default_value_t = 6)]
    global_cap: u8,
}

#[derive(Args)]
struct ReportDiffArgs {
    /// First report.
    #[arg(long)]
    a: PathBuf,
    /// Second report.
    #[arg(long)]
    b: PathBuf,
}

/// Parses and executes; returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version through this path too
            let _ = e.print();
            return if e.use_stderr() { EXIT_RUNTIME } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Inspect(args) => cmd_inspect(&args),
        Command::Graph(args) => cmd_graph(&args),
        Command::ReportDiff(args) => cmd_report_diff(&args),
    }
}

fn fail(code: i32, message: &str) -> i32 {
    eprintln!("error: {message}");
    code
}

fn cmd_run(args: &RunArgs) -> i32 {
    let text = match fs::read_to_string(&args.scenario) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_RUNTIME, &format!("{}: {e}", args.scenario.display())),
    };
    let mut scenario = match Scenario::from_json(&text) {
        Ok(s) => s,
        Err(e) => return fail(EXIT_SCHEMA, &format!("scenario schema: {e}")),
    };
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if let Ok(provider) = std::env::var("DRONECHAIN_PROVIDER") {
        if !provider.is_empty() {
            scenario.genesis.provider = provider;
            if let Err(e) = scenario.validate() {
                return fail(EXIT_SCHEMA, &format!("scenario schema: {e}"));
            }
        }
    }

    let mut trace_file = match &args.trace {
        Some(path) => match fs::File::create(path) {
            Ok(f) => Some(f),
            Err(e) => return fail(EXIT_RUNTIME, &format!("{}: {e}", path.display())),
        },
        None => None,
    };
    let mut trace_error = None;
    let outcome = {
        let mut sink = |line: &str| {
            if let Some(f) = trace_file.as_mut() {
                if let Err(e) = writeln!(f, "{line}") {
                    trace_error.get_or_insert(e.to_string());
                }
            }
        };
        let trace = args.trace.as_ref().map(|_| &mut sink as &mut dyn FnMut(&str));
        match run_scenario_outcome(&scenario, trace) {
            Ok(o) => o,
            Err(e) => return fail(EXIT_SCHEMA, &format!("scenario schema: {e}")),
        }
    };
    if let Some(e) = trace_error {
        return fail(EXIT_RUNTIME, &format!("writing trace: {e}"));
    }

    let report = &outcome.report;
    if let Err(e) = fs::write(&args.out, report.to_json()) {
        return fail(EXIT_RUNTIME, &format!("{}: {e}", args.out.display()));
    }
    if let Some(csv) = &args.csv {
        if let Err(e) = fs::write(csv, report.to_csv()) {
            return fail(EXIT_RUNTIME, &format!("{}: {e}", csv.display()));
        }
    }
    if let Some(dir) = &args.chains_dir {
        if let Err(e) = fs::create_dir_all(dir) {
            return fail(EXIT_RUNTIME, &format!("{}: {e}", dir.display()));
        }
        for (name, bytes) in &outcome.chain_files {
            let path = dir.join(format!("{name}.chain"));
            if let Err(e) = fs::write(&path, bytes) {
                return fail(EXIT_RUNTIME, &format!("{}: {e}", path.display()));
            }
        }
    }

    let prob = report
        .auth
        .probability_of_authentication
        .map(|p| format!("{p:.3}"))
        .unwrap_or_else(|| "n/a".into());
    let max_height = report.per_node.values().map(|n| n.height).max().unwrap_or(0);
    println!(
        "scenario {}: auth {}/{} (P={prob}), {} tx committed, tip height {max_height}, {} messages, report {}",
        scenario.name.as_deref().unwrap_or("unnamed"),
        report.auth.accepted,
        report.auth.attempts,
        report.tx.committed,
        report.network.messages_sent,
        args.out.display()
    );
    EXIT_OK
}

fn load_verified_chain(path: &Path) -> Result<ParsedChain, (i32, String)> {
    let bytes =
        fs::read(path).map_err(|e| (EXIT_RUNTIME, format!("{}: {e}", path.display())))?;
    let parsed = read_chain_file(&bytes)
        .map_err(|e| (EXIT_INTEGRITY, format!("chain integrity: {e}")))?;
    let provider = provider_by_name(&parsed.provider_name)
        .map_err(|e| (EXIT_INTEGRITY, format!("chain integrity: {e}")))?;
    verify_chain_integrity(provider.as_ref(), &parsed.blocks)
        .map_err(|e| (EXIT_INTEGRITY, format!("chain integrity: {e}")))?;
    Ok(parsed)
}

fn cmd_inspect(args: &InspectArgs) -> i32 {
    let parsed = match load_verified_chain(&args.chain) {
        Ok(p) => p,
        Err((code, msg)) => return fail(code, &msg),
    };
    let provider = provider_by_name(&parsed.provider_name).expect("verified above");
    let tip_height = (parsed.blocks.len() - 1) as u64;
    let height = args.height.unwrap_or(tip_height);
    if height > tip_height {
        return fail(
            EXIT_RUNTIME,
            &format!("height {height} beyond tip {tip_height}"),
        );
    }
    let state = match LedgerState::replay_chain(
        provider.as_ref(),
        &parsed.blocks[..=height as usize],
        &parsed.fee_params,
    ) {
        Ok(s) => s,
        Err(e) => return fail(EXIT_INTEGRITY, &format!("chain integrity: replay: {e}")),
    };
    let block = &parsed.blocks[height as usize];
    println!("provider:       {}", parsed.provider_name);
    println!("tip height:     {tip_height}");
    println!("height:         {height}");
    println!("header digest:  {}", block.header.header_digest);
    println!("parent digest:  {}", block.header.parent_digest);
    println!("tx commitment:  {}", block.header.tx_commitment);
    println!("timestamp:      {}", block.header.timestamp);
    println!("proposer:       {}", block.header.proposer.to_hex());
    println!("quorum signers: {}", block.header.quorum_cert.len());
    println!("tx count:       {}", block.transactions.len());
    println!("state digest:   {}", state.digest(provider.as_ref()));
    EXIT_OK
}

/// Stable JSON rendering of a trust graph.
fn graph_to_json(graph: &TrustGraph) -> String {
    let nodes: Vec<serde_json::Value> = graph
        .nodes()
        .map(|r| {
            serde_json::json!({
                "account": r.account.to_hex(),
                "auth_public_key": hex::encode(&r.auth_public_key),
                "identity_name": r.identity_name,
                "entity_type": r.entity_type.as_str(),
            })
        })
        .collect();
    let edges: Vec<serde_json::Value> = graph
        .edges()
        .map(|(f, t, l)| {
            serde_json::json!({
                "from": f.to_hex(),
                "to": t.to_hex(),
                "max_path_len": l,
            })
        })
        .collect();
    let mut out = serde_json::to_string_pretty(&serde_json::json!({
        "nodes": nodes,
        "edges": edges,
    }))
    .expect("graph serializes");
    out.push('\n');
    out
}

fn cmd_graph(args: &GraphArgs) -> i32 {
    let parsed = match load_verified_chain(&args.chain) {
        Ok(p) => p,
        Err((code, msg)) => return fail(code, &msg),
    };
    let provider = provider_by_name(&parsed.provider_name).expect("verified above");
    let state = match LedgerState::replay_chain(provider.as_ref(), &parsed.blocks, &parsed.fee_params)
    {
        Ok(s) => s,
        Err(e) => return fail(EXIT_INTEGRITY, &format!("chain integrity: replay: {e}")),
    };
    let graph = match &args.anchors {
        None => state.graph.clone(),
        Some(list) => {
            let mut anchors = BTreeSet::new();
            for part in list.split(',').filter(|p| !p.is_empty()) {
                let key = match PublicKey::from_hex(part.trim()) {
                    Ok(k) => k,
                    Err(_) => {
                        return fail(EXIT_RUNTIME, &format!("anchor `{part}` is not valid hex"))
                    }
                };
                if !state.graph.contains_node(&key) {
                    return fail(
                        EXIT_RUNTIME,
                        &format!("anchor `{part}` is not a registered entity"),
                    );
                }
                anchors.insert(key);
            }
            relevant_subgraph(&state.graph, &anchors, args.global_cap)
        }
    };
    match args.format.as_str() {
        "dot" => print!("{}", graph.to_dot()),
        "json" => print!("{}", graph_to_json(&graph)),
        _ => unreachable!("clap restricts the value"),
    }
    EXIT_OK
}

fn cmd_report_diff(args: &ReportDiffArgs) -> i32 {
    let load = |path: &Path| -> Result<MetricsReport, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        MetricsReport::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
    };
    let a = match load(&args.a) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_RUNTIME, &e),
    };
    let b = match load(&args.b) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_RUNTIME, &e),
    };
    let ka = a.determinism_key();
    let kb = b.determinism_key();
    if ka == kb {
        println!("reports match (wall clock ignored)");
        return EXIT_OK;
    }
    println!("reports differ (wall clock ignored):");
    for (la, lb) in ka.lines().zip(kb.lines()) {
        if la != lb {
            println!("- {la}");
            println!("+ {lb}");
        }
    }
    let (a_len, b_len) = (ka.lines().count(), kb.lines().count());
    if a_len != b_len {
        println!("(line counts differ: {a_len} vs {b_len})");
    }
    EXIT_DIFF
}
