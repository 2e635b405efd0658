//! Taint client: loads the source/sink/sanitizer specification, issues one
//! backward query per sink-argument occurrence and label, and assembles
//! findings with interprocedural traces from the solver's path edges.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::access_path::{Fact, Interner};
use crate::callgraph::CallGraph;
use crate::ir::{MethodId, Program, StmtId, StmtKind};
use crate::solver::{
    self, LabelEnv, Link, NfId, Point, Query, ReachabilityResult, SolveError, SolverConfig,
};

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("cannot read taint spec: {0}")]
    Io(#[from] std::io::Error),
    #[error("taint spec line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("taint spec: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Deserialize, Serialize, Default, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct TaintSpec {
    #[serde(default)]
    pub sources: Vec<SourceSpec>,
    #[serde(default)]
    pub sinks: Vec<SinkSpec>,
    #[serde(default)]
    pub sanitizers: Vec<SanitizerSpec>,
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub method: String,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct SinkSpec {
    pub method: String,
    pub arg: usize,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct SanitizerSpec {
    pub method: String,
    pub labels: Vec<String>,
}

impl TaintSpec {
    pub fn from_json(text: &str) -> Result<TaintSpec, SpecError> {
        let spec: TaintSpec = serde_json::from_str(text).map_err(|e| SpecError::Parse {
            line: e.line(),
            col: e.column(),
            msg: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), SpecError> {
        let all_labels = self
            .sources
            .iter()
            .map(|s| &s.labels)
            .chain(self.sinks.iter().map(|s| &s.labels))
            .chain(self.sanitizers.iter().map(|s| &s.labels));
        for labels in all_labels {
            if labels.iter().any(|l| l.is_empty()) {
                return Err(SpecError::Invalid("labels must be nonempty strings".into()));
            }
        }
        Ok(())
    }

    /// The classification sets the solver needs for one label.
    pub fn label_env(&self, label: &str) -> LabelEnv {
        LabelEnv {
            sources: self
                .sources
                .iter()
                .filter(|s| s.labels.iter().any(|l| l == label))
                .map(|s| s.method.clone())
                .collect(),
            sanitizers: self
                .sanitizers
                .iter()
                .filter(|s| s.labels.iter().any(|l| l == label))
                .map(|s| s.method.clone())
                .collect(),
            sinks: self.sinks.iter().map(|s| s.method.clone()).collect(),
        }
    }
}

/// Loads and validates a taint specification file.
pub fn load_spec(path: &std::path::Path) -> Result<TaintSpec, SpecError> {
    let text = std::fs::read_to_string(path)?;
    TaintSpec::from_json(&text)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    #[error("trace reconstruction walked a corrupt predecessor chain")]
    TraceCorrupt,
}

/// One reported source-to-sink flow with its statement-level trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub sink_stmt: StmtId,
    pub sink_arg: usize,
    pub source_stmt: StmtId,
    pub labels: BTreeSet<String>,
    /// Sink-first, source-last; entries are (statement, fact rendering).
    pub trace: Vec<(StmtId, String)>,
}

/// Aggregate result of analyzing a program against a taint spec.
#[derive(Debug, Default)]
pub struct AnalysisReport {
    pub findings: Vec<Finding>,
    /// Queries that hit the step budget; analysis continued without them.
    pub warnings: Vec<String>,
    /// Canonically rendered summaries, union over all queries, sorted.
    pub summary_lines: BTreeSet<String>,
    /// Methods visited by any query.
    pub visited_methods: BTreeSet<String>,
    pub max_flow_fanout: usize,
    pub edges_materialized: u64,
    pub pops: u64,
    /// One line per flow-function application, in query order; only
    /// populated when the solver logs events.
    pub flow_log: Vec<String>,
}

/// Issues every (sink statement, argument, label) query and merges the
/// per-query source hits into deduplicated, sorted findings.
pub fn analyze(
    program: &Program,
    cg: &CallGraph,
    interner: &Interner,
    spec: &TaintSpec,
    config: &SolverConfig,
    jobs: usize,
) -> AnalysisReport {
    let mut queries: Vec<(StmtId, usize, crate::access_path::NameId, String)> = Vec::new();
    let mut seen = BTreeSet::new();
    for method in &program.methods {
        for block in &method.blocks {
            for stmt in &block.stmts {
                if !stmt.kind.is_call() || !cg.is_external(stmt.id) {
                    continue;
                }
                let target = match &stmt.kind {
                    StmtKind::Call { callee, .. } => callee.clone(),
                    StmtKind::VCall { method: m, .. } => program.names.resolve(*m).to_string(),
                    _ => unreachable!(),
                };
                let args = match &stmt.kind {
                    StmtKind::Call { args, .. } | StmtKind::VCall { args, .. } => args,
                    _ => unreachable!(),
                };
                for sink in &spec.sinks {
                    if !solver::name_matches(&sink.method, &target) {
                        continue;
                    }
                    if sink.arg >= args.len() {
                        continue;
                    }
                    let mut labels: Vec<&String> = sink.labels.iter().collect();
                    labels.sort();
                    for label in labels {
                        if seen.insert((stmt.id, sink.arg, label.clone())) {
                            queries.push((stmt.id, sink.arg, args[sink.arg], label.clone()));
                        }
                    }
                }
            }
        }
    }
    queries.sort_by(|a, b| (a.0, a.1, &a.3).cmp(&(b.0, b.1, &b.3)));

    let results: Vec<Result<ReachabilityResult, SolveError>> = if jobs <= 1 {
        queries
            .iter()
            .map(|(sink, _, base, label)| {
                let env = spec.label_env(label);
                let q = Query { sink_stmt: *sink, base: *base, label: label.clone() };
                solver::solve(program, cg, interner, config, &env, &q)
            })
            .collect()
    } else {
        let stride = queries.len().div_ceil(jobs).max(1);
        let mut slots: Vec<Option<Result<ReachabilityResult, SolveError>>> =
            (0..queries.len()).map(|_| None).collect();
        std::thread::scope(|scope| {
            for (w, chunk) in slots.chunks_mut(stride).enumerate() {
                let queries = &queries;
                scope.spawn(move || {
                    for (i, slot) in chunk.iter_mut().enumerate() {
                        let (sink, _, base, label) = &queries[w * stride + i];
                        let env = spec.label_env(label);
                        let q = Query { sink_stmt: *sink, base: *base, label: label.clone() };
                        *slot = Some(solver::solve(program, cg, interner, config, &env, &q));
                    }
                });
            }
        });
        slots.into_iter().map(|s| s.expect("worker filled slot")).collect()
    };

    let mut report = AnalysisReport::default();
    type Grouped = BTreeMap<(StmtId, usize, StmtId), (BTreeSet<String>, Vec<(StmtId, String)>)>;
    let mut grouped: Grouped = BTreeMap::new();
    for ((sink, arg, _base, label), result) in queries.iter().zip(results) {
        match result {
            Err(e) => {
                report
                    .warnings
                    .push(format!("query (stmt {}, arg {arg}, label {label}): {e}", sink.0));
            }
            Ok(r) => {
                report.max_flow_fanout = report.max_flow_fanout.max(r.stats.max_flow_fanout);
                report.edges_materialized += r.stats.edges_materialized;
                report.pops += r.stats.pops;
                for ev in &r.events {
                    if let solver::SolveEvent::Flow { stmt, incoming, case, out } = ev {
                        report.flow_log.push(format!(
                            "stmt={} in={} case={} out=[{}]",
                            stmt.0,
                            incoming,
                            case,
                            out.join(", ")
                        ));
                    }
                }
                for m in r.stats.visits.keys() {
                    report.visited_methods.insert(program.method(*m).qname.clone());
                }
                for (m, exit, entries) in &r.summaries {
                    report.summary_lines.insert(render_summary_line(
                        program, interner, *m, *exit, entries,
                    ));
                }
                for &src in &r.sources {
                    let entry = grouped.entry((*sink, *arg, src)).or_default();
                    entry.0.insert(label.clone());
                    if entry.1.is_empty() {
                        let trace = build_trace(&r, program, interner, src)
                            .expect("witness chain is complete");
                        entry.1 = trace;
                    }
                }
            }
        }
    }
    report.findings = grouped
        .into_iter()
        .map(|((sink_stmt, sink_arg, source_stmt), (labels, trace))| Finding {
            sink_stmt,
            sink_arg,
            source_stmt,
            labels,
            trace,
        })
        .collect();
    report.findings.sort_by_key(|f| {
        (f.sink_stmt, f.source_stmt, f.sink_arg, f.labels.iter().cloned().collect::<Vec<_>>())
    });
    report
}

/// Walks the first-witness predecessor chain from a reached source back to
/// the query seed, descending into callee path edges at applied summaries.
/// The returned trace is sink-first.
pub fn build_trace(
    result: &ReachabilityResult,
    program: &Program,
    interner: &Interner,
    source_stmt: StmtId,
) -> Result<Vec<(StmtId, String)>, TraceError> {
    let start = *result.source_witness.get(&source_stmt).ok_or(TraceError::TraceCorrupt)?;
    let mut out = Vec::new();
    emit_chain(result, program, interner, start, true, &mut out, 0)?;
    out.reverse();
    Ok(out)
}

fn nf_stmt(result: &ReachabilityResult, program: &Program, nf: NfId) -> Option<StmtId> {
    let node = result.nf(nf);
    match node.point {
        Point::Stmt(b, s) => {
            let m = program.method(result.region(node.region).method);
            Some(m.blocks[b].stmts[s].id)
        }
        Point::Exit => None,
    }
}

fn emit_chain(
    result: &ReachabilityResult,
    program: &Program,
    interner: &Interner,
    start: NfId,
    follow_demander: bool,
    out: &mut Vec<(StmtId, String)>,
    depth: usize,
) -> Result<(), TraceError> {
    if depth > result.nfs.len() {
        return Err(TraceError::TraceCorrupt);
    }
    let mut cur = start;
    let mut steps = 0usize;
    loop {
        steps += 1;
        if steps > result.nfs.len() + 1 {
            return Err(TraceError::TraceCorrupt);
        }
        let node = result.nf(cur);
        let push = |out: &mut Vec<(StmtId, String)>| -> Result<(), TraceError> {
            let stmt = nf_stmt(result, program, cur).ok_or(TraceError::TraceCorrupt)?;
            out.push((stmt, interner.render_fact(node.fact, &program.names)));
            Ok(())
        };
        match &node.link {
            Link::ZeroAt { parent } => {
                push(out)?;
                cur = *parent;
            }
            Link::Step { parent, changed } => {
                if *changed {
                    push(out)?;
                }
                cur = *parent;
            }
            Link::ViaSummary { resume, callee_entry } => {
                push(out)?;
                emit_chain(result, program, interner, *callee_entry, false, out, depth + 1)?;
                cur = *resume;
            }
            Link::AscendSeed { from_entry } => {
                push(out)?;
                cur = *from_entry;
            }
            Link::QuerySeed => {
                push(out)?;
                return Ok(());
            }
            Link::Demanded { demander } => {
                if follow_demander {
                    cur = *demander;
                } else {
                    return Ok(());
                }
            }
        }
    }
}

/// Canonical summary rendering used by `--dump-summaries`: the receiver of
/// an instance method prints as `this`, the i-th remaining parameter as
/// `arg{i}`, the return pseudo-variable as `<ret>`.
pub fn render_summary_line(
    program: &Program,
    interner: &Interner,
    method: MethodId,
    exit: Fact,
    entries: &[Fact],
) -> String {
    let m = program.method(method);
    let canon = |f: Fact| -> String {
        match f {
            Fact::Zero => "0".to_string(),
            Fact::Ap(ap) => {
                let (base, fields) = interner.parts(ap);
                let mut s = if base == program.names.ret() {
                    "<ret>".to_string()
                } else if let Some(i) = m.param_index(base) {
                    if m.is_instance() {
                        if i == 0 {
                            "this".to_string()
                        } else {
                            format!("arg{}", i - 1)
                        }
                    } else {
                        format!("arg{i}")
                    }
                } else {
                    program.names.resolve(base).to_string()
                };
                for f in &fields {
                    s.push('.');
                    s.push_str(program.names.resolve(*f));
                }
                s
            }
        }
    };
    let mut rendered: Vec<String> = entries.iter().map(|e| canon(*e)).collect();
    rendered.sort();
    format!("{}: {} <- {{{}}}", m.qname, canon(exit), rendered.join(", "))
}

#[derive(Serialize)]
struct JsonTraceEntry {
    stmt: u32,
    fact: String,
}

#[derive(Serialize)]
struct JsonFinding {
    sink_stmt: u32,
    sink_arg: usize,
    source_stmt: u32,
    labels: Vec<String>,
    trace: Vec<JsonTraceEntry>,
}

/// Stable JSON report: an array of findings.
pub fn render_json(findings: &[Finding]) -> String {
    let out: Vec<JsonFinding> = findings
        .iter()
        .map(|f| JsonFinding {
            sink_stmt: f.sink_stmt.0,
            sink_arg: f.sink_arg,
            source_stmt: f.source_stmt.0,
            labels: f.labels.iter().cloned().collect(),
            trace: f
                .trace
                .iter()
                .map(|(s, fact)| JsonTraceEntry { stmt: s.0, fact: fact.clone() })
                .collect(),
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&out).expect("report serializes");
    s.push('\n');
    s
}

/// Human-readable report: one finding per paragraph with an indented trace.
pub fn render_text(program: &Program, findings: &[Finding]) -> String {
    if findings.is_empty() {
        return "no findings\n".to_string();
    }
    let mut out = String::new();
    for f in findings {
        let labels: Vec<&str> = f.labels.iter().map(|s| s.as_str()).collect();
        let _ = writeln!(
            out,
            "finding: sink stmt {} arg {} <- source stmt {} labels [{}]",
            f.sink_stmt.0,
            f.sink_arg,
            f.source_stmt.0,
            labels.join(", ")
        );
        for (stmt, fact) in &f.trace {
            let (mid, _, _) = program.locate(*stmt).expect("trace statements exist");
            let m = program.method(mid);
            let text = program.render_stmt(program.stmt(*stmt), m);
            let _ = writeln!(out, "    #{} {}  [{}]", stmt.0, text, fact);
        }
        out.push('\n');
    }
    out
}
