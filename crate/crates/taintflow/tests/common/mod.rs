//! Shared helpers for the integration suites: pipeline wiring, finding-set
//! comparison, a path-enumerating concrete interpreter used as a second-tier
//! oracle on small loop-free programs, and a symbolic evaluator for checking
//! SSA semantics preservation.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use taintflow::access_path::{Interner, NameId};
use taintflow::callgraph::{build_callgraph, CallGraph};
use taintflow::ir::{BlockIdx, Method, MethodId, Program, StmtKind};
use taintflow::oracle::{oracle_analyze, OracleConfig, OracleFinding};
use taintflow::parser::parse_program;
use taintflow::solver::{name_matches, SolverConfig};
use taintflow::ssa::prepare_program;
use taintflow::taint::{analyze, AnalysisReport, TaintSpec};

pub const DEFAULT_SPEC: &str = r#"{
  "sources":[{"method":"getTainted","labels":["XSS"]},
             {"method":"getSqli","labels":["SQLI"]}],
  "sinks":[{"method":"sink","arg":0,"labels":["XSS","SQLI"]}],
  "sanitizers":[{"method":"clean","labels":["XSS"]}] }"#;

pub fn default_spec() -> TaintSpec {
    TaintSpec::from_json(DEFAULT_SPEC).unwrap()
}

pub fn build(src: &str) -> (Program, CallGraph) {
    let mut p = parse_program(src).unwrap_or_else(|e| panic!("parse: {e}\n{src}"));
    prepare_program(&mut p).unwrap_or_else(|e| panic!("ssa: {e}\n{src}"));
    let cg = build_callgraph(&p);
    (p, cg)
}

pub fn run_analyze(
    p: &Program,
    cg: &CallGraph,
    spec: &TaintSpec,
    config: &SolverConfig,
) -> AnalysisReport {
    let interner = Interner::new();
    analyze(p, cg, &interner, spec, config, 1)
}

/// Flattened finding set used for engine comparison: one entry per
/// (sink, arg, source, label).
pub type FindingSet = BTreeSet<(u32, usize, u32, String)>;

pub fn backward_set(report: &AnalysisReport) -> FindingSet {
    let mut out = FindingSet::new();
    for f in &report.findings {
        for l in &f.labels {
            out.insert((f.sink_stmt.0, f.sink_arg, f.source_stmt.0, l.clone()));
        }
    }
    out
}

pub fn forward_set(findings: &BTreeSet<OracleFinding>) -> FindingSet {
    findings
        .iter()
        .map(|f| (f.sink_stmt.0, f.sink_arg, f.source_stmt.0, f.label.clone()))
        .collect()
}

pub fn run_oracle(p: &Program, cg: &CallGraph, spec: &TaintSpec) -> FindingSet {
    let cfg = OracleConfig::default();
    forward_set(&oracle_analyze(p, cg, spec, &cfg).unwrap())
}

pub fn has_loops(p: &Program) -> bool {
    for m in &p.methods {
        let n = m.blocks.len();
        for start in 0..n {
            let mut seen = vec![false; n];
            let mut stack: Vec<BlockIdx> = m.blocks[start].successors();
            while let Some(b) = stack.pop() {
                if b == start {
                    return true;
                }
                if !seen[b] {
                    seen[b] = true;
                    stack.extend(m.blocks[b].successors());
                }
            }
        }
    }
    false
}

// ---------------------------------------------------------------------------
// Concrete path-enumerating interpreter (second-tier oracle).
// ---------------------------------------------------------------------------

type Vid = usize;

#[derive(Clone, Copy, PartialEq, Eq)]
enum VKind {
    /// Allocation of a program class, or an opaque root parameter.
    Obj,
    /// Source return: unstored field loads inherit the taint.
    SourceRet,
    /// Constants, binop results, sanitized values: fields default clean.
    Prim,
    /// Unknown-external return mirroring its arguments field-wise.
    Mirror,
}

#[derive(Clone)]
struct Value {
    kind: VKind,
    taint: BTreeSet<u32>,
    class: Option<NameId>,
    mirror_of: Vec<Vid>,
}

#[derive(Clone)]
struct Frame {
    method: MethodId,
    block: BlockIdx,
    pos: usize,
    came_from: Option<BlockIdx>,
    env: HashMap<NameId, Vid>,
    ret_dst: Option<NameId>,
}

#[derive(Clone)]
struct Machine {
    frames: Vec<Frame>,
    values: Vec<Value>,
    heap: BTreeMap<(Vid, NameId), Vid>,
    default_loads: BTreeMap<(Vid, NameId), Vid>,
}

impl Machine {
    fn new_value(
        &mut self,
        kind: VKind,
        taint: BTreeSet<u32>,
        class: Option<NameId>,
        mirror_of: Vec<Vid>,
    ) -> Vid {
        self.values.push(Value { kind, taint, class, mirror_of });
        self.values.len() - 1
    }

    fn load(&mut self, base: Vid, field: NameId) -> Vid {
        if let Some(&v) = self.heap.get(&(base, field)) {
            return v;
        }
        if let Some(&v) = self.default_loads.get(&(base, field)) {
            return v;
        }
        let v = match self.values[base].kind {
            VKind::SourceRet => {
                let taint = self.values[base].taint.clone();
                self.new_value(VKind::SourceRet, taint, None, vec![])
            }
            VKind::Mirror => {
                let args = self.values[base].mirror_of.clone();
                let loaded: Vec<Vid> = args.iter().map(|a| self.load(*a, field)).collect();
                let mut taint = BTreeSet::new();
                for l in &loaded {
                    taint.extend(self.values[*l].taint.iter().copied());
                }
                self.new_value(VKind::Mirror, taint, None, loaded)
            }
            _ => self.new_value(VKind::Prim, BTreeSet::new(), None, vec![]),
        };
        self.default_loads.insert((base, field), v);
        v
    }
}

pub struct Interp<'a> {
    program: &'a Program,
    cg: &'a CallGraph,
    sources: Vec<String>,
    sanitizers: Vec<String>,
    sinks: Vec<(String, usize)>,
    step_cap: usize,
    pub dispatch_violation: Option<String>,
}

pub struct InterpResult {
    /// (sink statement, arg index, source statement).
    pub findings: BTreeSet<(u32, usize, u32)>,
    pub truncated: bool,
}

impl<'a> Interp<'a> {
    pub fn new(
        program: &'a Program,
        cg: &'a CallGraph,
        spec: &TaintSpec,
        label: &str,
    ) -> Interp<'a> {
        Interp {
            program,
            cg,
            sources: spec
                .sources
                .iter()
                .filter(|s| s.labels.iter().any(|l| l == label))
                .map(|s| s.method.clone())
                .collect(),
            sanitizers: spec
                .sanitizers
                .iter()
                .filter(|s| s.labels.iter().any(|l| l == label))
                .map(|s| s.method.clone())
                .collect(),
            sinks: spec
                .sinks
                .iter()
                .filter(|s| s.labels.iter().any(|l| l == label))
                .map(|s| (s.method.clone(), s.arg))
                .collect(),
            step_cap: 500_000,
            dispatch_violation: None,
        }
    }

    /// Enumerates every execution path of every method run as a root with
    /// fresh untainted parameters. Requires loop-free bodies and an acyclic
    /// call graph.
    pub fn run(&mut self) -> InterpResult {
        let mut findings = BTreeSet::new();
        let mut truncated = false;
        let mut steps = 0usize;
        for i in 0..self.program.methods.len() {
            let mid = MethodId(i as u32);
            let m = self.program.method(mid);
            let mut machine = Machine {
                frames: Vec::new(),
                values: Vec::new(),
                heap: BTreeMap::new(),
                default_loads: BTreeMap::new(),
            };
            let mut env = HashMap::new();
            for p in &m.params {
                let v = machine.new_value(VKind::Obj, BTreeSet::new(), None, vec![]);
                env.insert(*p, v);
            }
            machine.frames.push(Frame {
                method: mid,
                block: 0,
                pos: 0,
                came_from: None,
                env,
                ret_dst: None,
            });
            let mut pending = vec![machine];
            while let Some(mut mach) = pending.pop() {
                loop {
                    steps += 1;
                    if steps > self.step_cap || mach.frames.len() > 64 {
                        truncated = true;
                        break;
                    }
                    match self.step(&mut mach, &mut findings) {
                        StepOut::Continue => {}
                        StepOut::Fork(other) => pending.push(other),
                        StepOut::Done => break,
                    }
                }
            }
        }
        InterpResult { findings, truncated }
    }

    fn step(&mut self, mach: &mut Machine, findings: &mut BTreeSet<(u32, usize, u32)>) -> StepOut {
        let frame = mach.frames.last().expect("machine has a frame");
        let (mid, b, pos, came_from) = (frame.method, frame.block, frame.pos, frame.came_from);
        let m = self.program.method(mid);
        let top = mach.frames.len() - 1;
        // The phi bank executes in parallel: read every operand before
        // writing any target.
        if pos == 0 {
            let block = &m.blocks[b];
            let head = block.first_non_phi();
            if head > 0 {
                let from = came_from.expect("phi never in entry block");
                let mut writes = Vec::new();
                for s in &block.stmts[..head] {
                    let StmtKind::Phi { dst, incomings } = &s.kind else { unreachable!() };
                    let (_, v) = incomings.iter().find(|(p, _)| *p == from).unwrap();
                    writes.push((*dst, mach.frames[top].env[v]));
                }
                for (d, v) in writes {
                    mach.frames[top].env.insert(d, v);
                }
                mach.frames[top].pos = head;
                return StepOut::Continue;
            }
        }
        let stmt = m.blocks[b].stmts[pos].clone();
        match &stmt.kind {
            StmtKind::Phi { .. } => unreachable!("phi banks are handled at block entry"),
            StmtKind::Alloc { dst, class } => {
                let v = mach.new_value(VKind::Obj, BTreeSet::new(), Some(*class), vec![]);
                mach.frames[top].env.insert(*dst, v);
            }
            StmtKind::Const { dst, .. } => {
                let v = mach.new_value(VKind::Prim, BTreeSet::new(), None, vec![]);
                mach.frames[top].env.insert(*dst, v);
            }
            StmtKind::Assign { dst, src } => {
                let val = mach.frames[top].env[src];
                mach.frames[top].env.insert(*dst, val);
            }
            StmtKind::Load { dst, base, field } => {
                let bval = mach.frames[top].env[base];
                let v = mach.load(bval, *field);
                mach.frames[top].env.insert(*dst, v);
            }
            StmtKind::Store { base, field, src } => {
                let bval = mach.frames[top].env[base];
                let sval = mach.frames[top].env[src];
                mach.heap.insert((bval, *field), sval);
            }
            StmtKind::BinOp { dst, lhs, rhs } => {
                let mut taint = mach.values[mach.frames[top].env[lhs]].taint.clone();
                taint.extend(mach.values[mach.frames[top].env[rhs]].taint.iter().copied());
                let v = mach.new_value(VKind::Prim, taint, None, vec![]);
                mach.frames[top].env.insert(*dst, v);
            }
            StmtKind::Call { .. } | StmtKind::VCall { .. } => {
                return self.step_call(mach, &stmt.kind, stmt.id.0, findings);
            }
            StmtKind::Return { value } => {
                let ret = value.map(|v| mach.frames[top].env[&v]);
                let finished = mach.frames.pop().expect("frame");
                if let Some(caller) = mach.frames.last_mut() {
                    if let Some(d) = finished.ret_dst {
                        let v = ret.unwrap_or_else(|| {
                            mach.values.push(Value {
                                kind: VKind::Prim,
                                taint: BTreeSet::new(),
                                class: None,
                                mirror_of: vec![],
                            });
                            mach.values.len() - 1
                        });
                        caller.env.insert(d, v);
                    }
                    caller.pos += 1;
                    return StepOut::Continue;
                }
                return StepOut::Done;
            }
            StmtKind::Goto { target } => {
                let f = &mut mach.frames[top];
                f.came_from = Some(b);
                f.block = *target;
                f.pos = 0;
                return StepOut::Continue;
            }
            StmtKind::If { then_target, else_target, .. } => {
                if then_target == else_target {
                    let f = &mut mach.frames[top];
                    f.came_from = Some(b);
                    f.block = *then_target;
                    f.pos = 0;
                    return StepOut::Continue;
                }
                let mut other = mach.clone();
                {
                    let f = other.frames.last_mut().unwrap();
                    f.came_from = Some(b);
                    f.block = *else_target;
                    f.pos = 0;
                }
                let f = &mut mach.frames[top];
                f.came_from = Some(b);
                f.block = *then_target;
                f.pos = 0;
                return StepOut::Fork(other);
            }
        }
        mach.frames[top].pos += 1;
        StepOut::Continue
    }

    fn step_call(
        &mut self,
        mach: &mut Machine,
        kind: &StmtKind,
        site: u32,
        findings: &mut BTreeSet<(u32, usize, u32)>,
    ) -> StepOut {
        let top = mach.frames.len() - 1;
        let actuals: Vec<Vid> =
            kind.actuals().iter().map(|a| mach.frames[top].env[a]).collect();
        let plain_args: Vec<Vid> = match kind {
            StmtKind::Call { .. } => actuals.clone(),
            StmtKind::VCall { .. } => actuals[1..].to_vec(),
            _ => unreachable!(),
        };
        let site_id = taintflow::ir::StmtId(site);

        if !self.cg.is_external(site_id) {
            let resolved = self.cg.callees(site_id);
            let callee = match kind {
                StmtKind::VCall { method, .. } => {
                    let recv = actuals[0];
                    match mach.values[recv].class {
                        Some(class) => {
                            match self.program.dispatch(class, *method, actuals.len()) {
                                Some(t) => {
                                    if !resolved.contains(&t) {
                                        self.dispatch_violation = Some(format!(
                                            "dispatch target {} not in resolved set",
                                            self.program.method(t).qname
                                        ));
                                    }
                                    t
                                }
                                None => resolved[0],
                            }
                        }
                        None => resolved[0],
                    }
                }
                _ => resolved[0],
            };
            let callee_m = self.program.method(callee);
            let mut env = HashMap::new();
            for (p, v) in callee_m.params.iter().zip(&actuals) {
                env.insert(*p, *v);
            }
            let ret_dst = kind.def();
            mach.frames.push(Frame {
                method: callee,
                block: 0,
                pos: 0,
                came_from: None,
                env,
                ret_dst,
            });
            return StepOut::Continue;
        }

        let target = match kind {
            StmtKind::Call { callee, .. } => callee.clone(),
            StmtKind::VCall { method, .. } => self.program.names.resolve(*method).to_string(),
            _ => unreachable!(),
        };
        for (sname, arg) in &self.sinks {
            if name_matches(sname, &target) && *arg < plain_args.len() {
                let v = plain_args[*arg];
                for src in mach.values[v].taint.clone() {
                    findings.insert((site, *arg, src));
                }
            }
        }
        let is_source = self.sources.iter().any(|s| name_matches(s, &target));
        let is_san = self.sanitizers.iter().any(|s| name_matches(s, &target));
        let is_sink = self.sinks.iter().any(|(s, _)| name_matches(s, &target));
        let ret = if is_source {
            let mut taint = BTreeSet::new();
            taint.insert(site);
            mach.new_value(VKind::SourceRet, taint, None, vec![])
        } else if is_san || is_sink {
            mach.new_value(VKind::Prim, BTreeSet::new(), None, vec![])
        } else {
            let mut taint = BTreeSet::new();
            for a in &actuals {
                taint.extend(mach.values[*a].taint.iter().copied());
            }
            mach.new_value(VKind::Mirror, taint, None, actuals)
        };
        if let Some(d) = kind.def() {
            mach.frames[top].env.insert(d, ret);
        }
        mach.frames[top].pos += 1;
        StepOut::Continue
    }
}

enum StepOut {
    Continue,
    Fork(Machine),
    Done,
}

// ---------------------------------------------------------------------------
// Symbolic evaluator for SSA semantics preservation.
// ---------------------------------------------------------------------------

/// Path-indexed symbolic value; identity derives from execution order so it
/// is stable under variable renaming.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Sym {
    Param(String),
    Alloc(usize),
    Lit(String),
    Bin(usize, Box<Sym>, Box<Sym>),
    CallRet(usize),
    Initial(Box<Sym>, String),
}

/// Observable effects of one execution path: calls made, heap stores, and
/// the returned value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct PathEffects {
    pub calls: Vec<(String, Vec<Sym>)>,
    pub stores: Vec<(Sym, String, Sym)>,
    pub ret: Option<Sym>,
}

/// Symbolically evaluates every path of a loop-free method. Calls are
/// opaque effects; heap state is path-local.
pub fn symbolic_paths(program: &Program, method: &Method, cap: usize) -> Option<Vec<PathEffects>> {
    #[derive(Clone)]
    struct Fr {
        block: BlockIdx,
        came_from: Option<BlockIdx>,
        env: BTreeMap<String, Sym>,
        heap: BTreeMap<(Sym, String), Sym>,
        effects: PathEffects,
        allocs: usize,
        calls: usize,
        bins: usize,
    }
    let name = |id: NameId| program.names.resolve(id).to_string();
    let mut done: Vec<PathEffects> = Vec::new();
    let mut stack = vec![Fr {
        block: 0,
        came_from: None,
        env: method.params.iter().map(|p| (name(*p), Sym::Param(name(*p)))).collect(),
        heap: BTreeMap::new(),
        effects: PathEffects::default(),
        allocs: 0,
        calls: 0,
        bins: 0,
    }];
    while let Some(mut fr) = stack.pop() {
        if done.len() + stack.len() > cap {
            return None;
        }
        let block = &method.blocks[fr.block];
        let head = block.first_non_phi();
        if head > 0 {
            let from = fr.came_from.expect("phi not in entry");
            let mut writes = Vec::new();
            for stmt in &block.stmts[..head] {
                let StmtKind::Phi { dst, incomings } = &stmt.kind else { unreachable!() };
                let (_, v) = incomings.iter().find(|(p, _)| *p == from).unwrap();
                writes.push((name(*dst), fr.env[&name(*v)].clone()));
            }
            for (d, v) in writes {
                fr.env.insert(d, v);
            }
        }
        let mut jumped = false;
        for stmt in &block.stmts[head..] {
            match &stmt.kind {
                StmtKind::Phi { .. } => unreachable!("phi banks handled at block entry"),
                StmtKind::Alloc { dst, .. } => {
                    let v = Sym::Alloc(fr.allocs);
                    fr.allocs += 1;
                    fr.env.insert(name(*dst), v);
                }
                StmtKind::Const { dst, value } => {
                    fr.env.insert(name(*dst), Sym::Lit(value.clone()));
                }
                StmtKind::Assign { dst, src } => {
                    let v = fr.env[&name(*src)].clone();
                    fr.env.insert(name(*dst), v);
                }
                StmtKind::Load { dst, base, field } => {
                    let b = fr.env[&name(*base)].clone();
                    let key = (b.clone(), name(*field));
                    let v = fr
                        .heap
                        .get(&key)
                        .cloned()
                        .unwrap_or_else(|| Sym::Initial(Box::new(b), name(*field)));
                    fr.env.insert(name(*dst), v);
                }
                StmtKind::Store { base, field, src } => {
                    let b = fr.env[&name(*base)].clone();
                    let v = fr.env[&name(*src)].clone();
                    fr.heap.insert((b.clone(), name(*field)), v.clone());
                    fr.effects.stores.push((b, name(*field), v));
                }
                StmtKind::BinOp { dst, lhs, rhs } => {
                    let l = fr.env[&name(*lhs)].clone();
                    let r = fr.env[&name(*rhs)].clone();
                    let v = Sym::Bin(fr.bins, Box::new(l), Box::new(r));
                    fr.bins += 1;
                    fr.env.insert(name(*dst), v);
                }
                StmtKind::Call { dst, callee, args } => {
                    let vals: Vec<Sym> = args.iter().map(|a| fr.env[&name(*a)].clone()).collect();
                    fr.effects.calls.push((callee.clone(), vals));
                    if let Some(d) = dst {
                        let v = Sym::CallRet(fr.calls);
                        fr.calls += 1;
                        fr.env.insert(name(*d), v);
                    }
                }
                StmtKind::VCall { dst, recv, method: m, args } => {
                    let mut vals = vec![fr.env[&name(*recv)].clone()];
                    vals.extend(args.iter().map(|a| fr.env[&name(*a)].clone()));
                    fr.effects.calls.push((name(*m), vals));
                    if let Some(d) = dst {
                        let v = Sym::CallRet(fr.calls);
                        fr.calls += 1;
                        fr.env.insert(name(*d), v);
                    }
                }
                StmtKind::Return { value } => {
                    fr.effects.ret = value.map(|v| fr.env[&name(v)].clone());
                    done.push(fr.effects.clone());
                    jumped = true;
                    break;
                }
                StmtKind::Goto { target } => {
                    let mut next = fr.clone();
                    next.came_from = Some(fr.block);
                    next.block = *target;
                    stack.push(next);
                    jumped = true;
                    break;
                }
                StmtKind::If { then_target, else_target, .. } => {
                    for t in if then_target == else_target {
                        vec![*then_target]
                    } else {
                        vec![*then_target, *else_target]
                    } {
                        let mut next = fr.clone();
                        next.came_from = Some(fr.block);
                        next.block = t;
                        stack.push(next);
                    }
                    jumped = true;
                    break;
                }
            }
        }
        assert!(jumped, "blocks end in terminators");
    }
    done.sort();
    Some(done)
}
