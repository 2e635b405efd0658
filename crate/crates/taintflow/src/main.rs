//! Command-line front end: analyze, oracle, gen, check.
//!
//! Exit codes: 0 when the run succeeds with no findings, 1 when findings
//! are reported, 2 on usage, parse, SSA or spec errors. Reports go to
//! stdout; diagnostics go to stderr.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use taintflow::access_path::{Interner, KConfig};
use taintflow::callgraph;
use taintflow::gen::{generate_program, GenLimits};
use taintflow::ir::{pretty, Program};
use taintflow::oracle::{oracle_analyze, OracleConfig};
use taintflow::parser::parse_program;
use taintflow::solver::{ExternalModel, SolverConfig};
use taintflow::ssa::prepare_program;
use taintflow::taint::{self, load_spec};

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (default k=5)");

#[derive(Parser)]
#[command(name = "taintflow", version = VERSION)]
#[command(about = "Demand-driven backward taint analysis for a small three-address IR")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the backward taint analysis and report findings.
    Analyze(AnalyzeArgs),
    /// Run the exhaustive forward reference analysis for diffing.
    Oracle(OracleArgs),
    /// Emit a deterministic pseudo-random test program.
    Gen(GenArgs),
    /// Parse a program and validate or construct SSA form.
    Check(CheckArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ExternalModelArg {
    TaintThrough,
    Opaque,
}

impl From<ExternalModelArg> for ExternalModel {
    fn from(v: ExternalModelArg) -> ExternalModel {
        match v {
            ExternalModelArg::TaintThrough => ExternalModel::TaintThrough,
            ExternalModelArg::Opaque => ExternalModel::Opaque,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Input IR file.
    input: PathBuf,
    /// Taint specification (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Access-path length bound.
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, value_enum, default_value = "taint-through")]
    external_model: ExternalModelArg,
    /// Worklist step budget per query.
    #[arg(long, default_value_t = 10_000_000)]
    budget: u64,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Disable the identity-chain skipping optimization.
    #[arg(long)]
    no_skip_identity: bool,
    /// Print computed summaries before the report.
    #[arg(long)]
    dump_summaries: bool,
    /// Print resolved call edges before the report.
    #[arg(long)]
    dump_callgraph: bool,
    /// Log each flow-function application to stderr.
    #[arg(long)]
    trace_flows: bool,
    /// Parallel solver instances for independent queries.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct OracleArgs {
    input: PathBuf,
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, value_enum, default_value = "taint-through")]
    external_model: ExternalModelArg,
    #[arg(long, default_value_t = 10_000_000)]
    budget: u64,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 6)]
    methods: usize,
    #[arg(long, default_value_t = 4)]
    blocks: usize,
    #[arg(long, default_value_t = 3)]
    fields: usize,
    #[arg(long, default_value_t = 6)]
    stmts: usize,
    /// Generate only loop-free control flow.
    #[arg(long)]
    no_loops: bool,
}

#[derive(Args)]
struct CheckArgs {
    input: PathBuf,
    /// Print the canonical SSA form after checking.
    #[arg(long)]
    print: bool,
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run() -> Result<ExitCode, String> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Analyze(args) => analyze_cmd(args),
        Cmd::Oracle(args) => oracle_cmd(args),
        Cmd::Gen(args) => {
            let limits = GenLimits {
                methods: args.methods,
                blocks: args.blocks,
                fields: args.fields,
                stmts: args.stmts,
                allow_loops: !args.no_loops,
            };
            print!("{}", generate_program(args.seed, &limits));
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Check(args) => {
            let program = load_program(&args.input)?;
            if args.print {
                print!("{}", pretty(&program));
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn load_program(path: &PathBuf) -> Result<Program, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut program = parse_program(&text).map_err(|e| e.to_string())?;
    prepare_program(&mut program).map_err(|e| e.to_string())?;
    Ok(program)
}

fn analyze_cmd(args: AnalyzeArgs) -> Result<ExitCode, String> {
    let k = KConfig::new(args.k).ok_or("k must be at least 1")?;
    if args.budget == 0 {
        return Err("budget must be at least 1".into());
    }
    if args.jobs == 0 {
        return Err("jobs must be at least 1".into());
    }
    let program = load_program(&args.input)?;
    let spec = load_spec(&args.spec).map_err(|e| e.to_string())?;
    let cg = callgraph::build_callgraph(&program);
    if args.dump_callgraph {
        print!("{}", callgraph::dump(&program, &cg));
    }
    let config = SolverConfig {
        k,
        external: args.external_model.into(),
        skip_identity: !args.no_skip_identity,
        budget: args.budget,
        log_events: args.trace_flows,
    };
    let interner = Interner::new();
    let report = taint::analyze(&program, &cg, &interner, &spec, &config, args.jobs);
    for line in &report.flow_log {
        eprintln!("{line}");
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if args.dump_summaries {
        for line in &report.summary_lines {
            println!("{line}");
        }
    }
    match args.format {
        Format::Json => print!("{}", taint::render_json(&report.findings)),
        Format::Text => print!("{}", taint::render_text(&program, &report.findings)),
    }
    Ok(if report.findings.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn oracle_cmd(args: OracleArgs) -> Result<ExitCode, String> {
    let k = KConfig::new(args.k).ok_or("k must be at least 1")?;
    let program = load_program(&args.input)?;
    let spec = load_spec(&args.spec).map_err(|e| e.to_string())?;
    let cg = callgraph::build_callgraph(&program);
    let cfg = OracleConfig { k, external: args.external_model.into(), budget: args.budget };
    let found = oracle_analyze(&program, &cg, &spec, &cfg).map_err(|e| e.to_string())?;

    // Group per (sink, arg, source) so the JSON matches the analyze report
    // shape; oracle findings carry no traces.
    let mut grouped: BTreeMap<(u32, usize, u32), BTreeSet<String>> = BTreeMap::new();
    for f in &found {
        grouped
            .entry((f.sink_stmt.0, f.sink_arg, f.source_stmt.0))
            .or_default()
            .insert(f.label.clone());
    }
    let findings: Vec<taint::Finding> = grouped
        .into_iter()
        .map(|((sink, arg, src), labels)| taint::Finding {
            sink_stmt: taintflow::ir::StmtId(sink),
            sink_arg: arg,
            source_stmt: taintflow::ir::StmtId(src),
            labels,
            trace: Vec::new(),
        })
        .collect();
    print!("{}", taint::render_json(&findings));
    Ok(if findings.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
