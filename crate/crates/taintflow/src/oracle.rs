//! Independent forward reference analysis.
//!
//! Exhaustive, context-sensitive forward taint propagation with the same
//! k-limiting, external model, phi edge-sensitivity and sanitizer kills as
//! the backward engine, but implemented as the forward dual with its own
//! transfer rules. Equivalence between the two engines is the main
//! correctness check of the artifact.
//!
//! Because a source taints its whole return value, forward facts come in
//! two flavors: an exact access path, or a "suffix-closed" path that stands
//! for the path plus every k-bounded field extension of it. Strong updates
//! split suffix-closed facts along the overwritten path, keeping the
//! representation exact over the program's declared fields.

use std::collections::{BTreeSet, HashMap, VecDeque};

use thiserror::Error;

use crate::access_path::{KConfig, NameId};
use crate::callgraph::CallGraph;
use crate::ir::{BlockIdx, MethodId, Program, StmtId, StmtKind};
use crate::solver::{name_matches, ExternalModel};
use crate::taint::TaintSpec;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("forward propagation budget exceeded after {steps} block visits")]
    BudgetExceeded { steps: u64 },
}

#[derive(Debug, Clone)]
pub struct OracleConfig {
    pub k: KConfig,
    pub external: ExternalModel,
    pub budget: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { k: KConfig::default(), external: ExternalModel::TaintThrough, budget: 10_000_000 }
    }
}

/// A tainted sink-argument occurrence attributed to one source statement.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct OracleFinding {
    pub sink_stmt: StmtId,
    pub sink_arg: usize,
    pub source_stmt: StmtId,
    pub label: String,
}

/// Forward fact: an access path, optionally suffix-closed (`star`), meaning
/// the path and all of its k-bounded extensions are tainted.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fct {
    pub base: NameId,
    pub fields: Vec<NameId>,
    pub star: bool,
}

impl Fct {
    fn exact(base: NameId, fields: Vec<NameId>) -> Fct {
        Fct { base, fields, star: false }
    }

    fn star(base: NameId, fields: Vec<NameId>, k: usize) -> Fct {
        // A suffix-closed path at full length has no extensions left.
        let star = fields.len() < k;
        Fct { base, fields, star }
    }

    fn rebase(&self, base: NameId) -> Fct {
        Fct { base, fields: self.fields.clone(), star: self.star }
    }

    /// Does this fact cover the bare variable itself?
    fn is_bare(&self) -> bool {
        self.fields.is_empty()
    }
}

type FactSet = BTreeSet<Fct>;

fn starts_with(fields: &[NameId], prefix: &[NameId]) -> bool {
    fields.len() >= prefix.len() && &fields[..prefix.len()] == prefix
}

/// Splits a suffix-closed fact so that every covered path extending
/// `avoid` is removed, enumerating sibling fields from the declared-field
/// universe. `fct.fields` must be a proper prefix of `avoid`.
fn split_star(fct: &Fct, avoid: &[NameId], universe: &[NameId], k: usize, out: &mut FactSet) {
    let mut prefix = fct.fields.clone();
    loop {
        out.insert(Fct::exact(fct.base, prefix.clone()));
        let next = avoid[prefix.len()];
        if prefix.len() < k {
            for &f in universe {
                if f != next {
                    let mut p = prefix.clone();
                    p.push(f);
                    out.insert(Fct::star(fct.base, p, k));
                }
            }
        }
        prefix.push(next);
        if prefix == avoid {
            return;
        }
        if prefix.len() >= k {
            // Nothing beyond k is covered, so nothing more to preserve.
            return;
        }
    }
}

struct Run<'a> {
    program: &'a Program,
    cg: &'a CallGraph,
    k: usize,
    external: ExternalModel,
    budget: u64,
    /// Source statement whose taint is being traced in this run.
    active_source: StmtId,
    sources_for_label: Vec<String>,
    sanitizers_for_label: Vec<String>,
    sink_names: Vec<String>,
    universe: Vec<NameId>,
    def_maps: Vec<HashMap<NameId, (BlockIdx, usize)>>,
    contexts: Vec<Ctx>,
    ctx_index: HashMap<(MethodId, Option<Fct>), usize>,
    worklist: VecDeque<(usize, BlockIdx)>,
    queued: BTreeSet<(usize, BlockIdx)>,
    steps: u64,
}

struct Ctx {
    method: MethodId,
    block_in: Vec<FactSet>,
    /// Blocks reached by control flow; propagation is independent of
    /// whether any fact reaches them.
    reached: Vec<bool>,
    point_facts: Vec<Vec<FactSet>>,
    exit_facts: FactSet,
    dependents: BTreeSet<(usize, BlockIdx)>,
}

impl<'a> Run<'a> {
    fn classify(&self, target: &str) -> Class {
        if self.sources_for_label.iter().any(|s| name_matches(s, target)) {
            return Class::Source;
        }
        if self.sanitizers_for_label.iter().any(|s| name_matches(s, target)) {
            return Class::Sanitizer;
        }
        if self.sink_names.iter().any(|s| name_matches(s, target)) {
            return Class::Sink;
        }
        Class::Unknown
    }

    fn ctx_id(&mut self, method: MethodId, entry: Option<Fct>) -> usize {
        if let Some(&id) = self.ctx_index.get(&(method, entry.clone())) {
            return id;
        }
        let m = self.program.method(method);
        let mut ctx = Ctx {
            method,
            block_in: vec![FactSet::new(); m.blocks.len()],
            reached: vec![false; m.blocks.len()],
            point_facts: m.blocks.iter().map(|b| vec![FactSet::new(); b.stmts.len()]).collect(),
            exit_facts: FactSet::new(),
            dependents: BTreeSet::new(),
        };
        ctx.reached[0] = true;
        if let Some(e) = &entry {
            ctx.block_in[0].insert(e.clone());
        }
        let id = self.contexts.len();
        self.contexts.push(ctx);
        self.ctx_index.insert((method, entry), id);
        self.enqueue(id, 0);
        id
    }

    fn enqueue(&mut self, ctx: usize, b: BlockIdx) {
        if self.queued.insert((ctx, b)) {
            self.worklist.push_back((ctx, b));
        }
    }

    fn reify(&self, method: MethodId, var: NameId, field: NameId) -> (NameId, Vec<NameId>) {
        let defs = &self.def_maps[method.0 as usize];
        let m = self.program.method(method);
        let mut fields = vec![field];
        let mut base = var;
        let mut seen = BTreeSet::new();
        while seen.insert(base) {
            match defs.get(&base).map(|&(bi, si)| &m.blocks[bi].stmts[si].kind) {
                Some(StmtKind::Load { base: y, field: g, .. }) => {
                    fields.insert(0, *g);
                    base = *y;
                }
                _ => break,
            }
        }
        (base, fields)
    }

    fn solve(&mut self) -> Result<(), OracleError> {
        while let Some((ctx, b)) = self.worklist.pop_front() {
            self.queued.remove(&(ctx, b));
            self.steps += 1;
            if self.steps > self.budget {
                return Err(OracleError::BudgetExceeded { steps: self.steps });
            }
            self.process_block(ctx, b);
        }
        Ok(())
    }

    fn process_block(&mut self, ctx: usize, b: BlockIdx) {
        let method_id = self.contexts[ctx].method;
        let method = self.program.method(method_id);
        let zero_ctx = self
            .ctx_index
            .get(&(method_id, None))
            .map(|&id| id == ctx)
            .unwrap_or(false);
        let block = &method.blocks[b];
        let head = block.first_non_phi();
        let mut facts = self.contexts[ctx].block_in[b].clone();

        for i in head..block.stmts.len() {
            {
                let stored = &mut self.contexts[ctx].point_facts[b][i];
                for f in &facts {
                    stored.insert(f.clone());
                }
            }
            let stmt = &block.stmts[i];
            facts = self.transfer(ctx, method_id, zero_ctx, &stmt.kind, stmt.id, facts);
            if let StmtKind::Return { value } = &stmt.kind {
                self.export_exit(ctx, method_id, *value, &facts);
            }
        }

        let out = facts;
        for s in block.successors() {
            let edge = phi_edge(self.program, method, b, s, &out, self.k);
            let c = &mut self.contexts[ctx];
            let target_in = &mut c.block_in[s];
            let before = target_in.len();
            for f in edge {
                target_in.insert(f);
            }
            let newly_reached = !c.reached[s];
            c.reached[s] = true;
            if target_in.len() != before || newly_reached {
                self.enqueue(ctx, s);
            }
        }
    }

    fn export_exit(&mut self, ctx: usize, method_id: MethodId, value: Option<NameId>, facts: &FactSet) {
        let m = self.program.method(method_id);
        let ret = self.program.names.ret();
        let mut grew = false;
        for f in facts {
            // A returned parameter exits twice: once on <ret> and once on
            // the parameter itself, since the argument stays tainted in the
            // caller.
            if Some(f.base) == value {
                grew |= self.contexts[ctx].exit_facts.insert(f.rebase(ret));
            }
            if m.param_index(f.base).is_some() {
                grew |= self.contexts[ctx].exit_facts.insert(f.clone());
            }
        }
        if grew {
            let deps: Vec<(usize, BlockIdx)> =
                self.contexts[ctx].dependents.iter().copied().collect();
            for (c, b) in deps {
                self.enqueue(c, b);
            }
        }
    }

    fn transfer(
        &mut self,
        ctx: usize,
        method_id: MethodId,
        zero_ctx: bool,
        kind: &StmtKind,
        stmt_id: StmtId,
        mut facts: FactSet,
    ) -> FactSet {
        match kind {
            StmtKind::Alloc { dst, .. } | StmtKind::Const { dst, .. } => {
                facts.retain(|f| f.base != *dst);
                facts
            }
            StmtKind::Assign { dst, src } => {
                let mut out: FactSet =
                    facts.iter().filter(|f| f.base != *dst).cloned().collect();
                for f in &facts {
                    if f.base == *src {
                        out.insert(f.rebase(*dst));
                    }
                }
                out
            }
            StmtKind::BinOp { dst, lhs, rhs } => {
                let mut out: FactSet =
                    facts.iter().filter(|f| f.base != *dst).cloned().collect();
                if facts.iter().any(|f| (f.base == *lhs || f.base == *rhs) && f.is_bare()) {
                    out.insert(Fct::exact(*dst, Vec::new()));
                }
                out
            }
            StmtKind::Load { dst, base, field } => {
                let (z, gs) = self.reify(method_id, *base, *field);
                let mut out: FactSet =
                    facts.iter().filter(|f| f.base != *dst).cloned().collect();
                for f in &facts {
                    if f.base != z {
                        continue;
                    }
                    if f.star && starts_with(&gs, &f.fields) {
                        out.insert(Fct::star(*dst, Vec::new(), self.k));
                    } else if starts_with(&f.fields, &gs) {
                        let rest = f.fields[gs.len()..].to_vec();
                        if f.star {
                            out.insert(Fct::star(*dst, rest, self.k));
                        } else {
                            out.insert(Fct::exact(*dst, rest));
                        }
                    }
                }
                out
            }
            StmtKind::Store { base, field, src } => {
                let (z, gs) = self.reify(method_id, *base, *field);
                let arrayed = gs.iter().any(|g| self.program.is_array_field(*g));
                let mut out = FactSet::new();
                for f in &facts {
                    if arrayed || f.base != z {
                        out.insert(f.clone());
                        continue;
                    }
                    // Strong update: drop every covered path that reads
                    // through the stored location.
                    if !f.star {
                        if !starts_with(&f.fields, &gs) {
                            out.insert(f.clone());
                        }
                    } else if f.fields == gs || starts_with(&f.fields, &gs) {
                        // The whole closure reads through the store.
                    } else if starts_with(&gs, &f.fields) && gs.len() <= self.k {
                        split_star(f, &gs, &self.universe.clone(), self.k, &mut out);
                    } else {
                        out.insert(f.clone());
                    }
                }
                for f in &facts {
                    if f.base == *src {
                        let mut combined = gs.clone();
                        combined.extend_from_slice(&f.fields);
                        if combined.len() <= self.k {
                            if f.star {
                                out.insert(Fct::star(z, combined, self.k));
                            } else {
                                out.insert(Fct::exact(z, combined));
                            }
                        }
                    }
                }
                out
            }
            StmtKind::Call { .. } | StmtKind::VCall { .. } => {
                self.transfer_call(ctx, zero_ctx, kind, stmt_id, facts)
            }
            StmtKind::Phi { .. } => facts,
            StmtKind::Return { .. } | StmtKind::Goto { .. } | StmtKind::If { .. } => facts,
        }
    }

    fn transfer_call(
        &mut self,
        ctx: usize,
        zero_ctx: bool,
        kind: &StmtKind,
        stmt_id: StmtId,
        facts: FactSet,
    ) -> FactSet {
        let dst = kind.def();
        let actuals = kind.actuals();

        if !self.cg.is_external(stmt_id) {
            let callees: Vec<MethodId> = self.cg.callees(stmt_id).to_vec();
            let mut out: FactSet = facts
                .iter()
                .filter(|f| Some(f.base) != dst && !actuals.contains(&f.base))
                .cloned()
                .collect();
            for callee in callees {
                let callee_m = self.program.method(callee);
                // Entry contexts demanded at this call: the zero row plus
                // every argument-rooted fact mapped onto its parameter.
                let mut entries: Vec<Option<Fct>> = Vec::new();
                if zero_ctx {
                    entries.push(None);
                } else {
                    // The zero row exists in every reachable method; its
                    // exit facts apply at every call site, so demand it
                    // here as well.
                    entries.push(None);
                }
                for f in &facts {
                    for (i, a) in actuals.iter().enumerate() {
                        if f.base == *a && i < callee_m.params.len() {
                            let e = f.rebase(callee_m.params[i]);
                            if !entries.contains(&Some(e.clone())) {
                                entries.push(Some(e));
                            }
                        }
                    }
                }
                for entry in entries {
                    let cid = self.ctx_id(callee, entry);
                    let caller_block = self.current_block(ctx, stmt_id);
                    self.contexts[cid].dependents.insert((ctx, caller_block));
                    let exits: Vec<Fct> =
                        self.contexts[cid].exit_facts.iter().cloned().collect();
                    let ret = self.program.names.ret();
                    for e in exits {
                        if e.base == ret {
                            if let Some(d) = dst {
                                out.insert(e.rebase(d));
                            }
                        } else if let Some(i) = callee_m.param_index(e.base) {
                            if i < actuals.len() {
                                out.insert(e.rebase(actuals[i]));
                            }
                        }
                    }
                }
            }
            return out;
        }

        let target = match kind {
            StmtKind::Call { callee, .. } => callee.clone(),
            StmtKind::VCall { method, .. } => self.program.names.resolve(*method).to_string(),
            _ => unreachable!(),
        };
        match self.classify(&target) {
            Class::Source => {
                let mut out: FactSet =
                    facts.iter().filter(|f| Some(f.base) != dst).cloned().collect();
                if zero_ctx && stmt_id == self.active_source {
                    if let Some(d) = dst {
                        out.insert(Fct::star(d, Vec::new(), self.k));
                    }
                }
                out
            }
            Class::Sanitizer | Class::Sink => {
                facts.iter().filter(|f| Some(f.base) != dst).cloned().collect()
            }
            Class::Unknown => {
                let mut out: FactSet =
                    facts.iter().filter(|f| Some(f.base) != dst).cloned().collect();
                if self.external == ExternalModel::TaintThrough {
                    if let Some(d) = dst {
                        for f in &facts {
                            if actuals.contains(&f.base) {
                                out.insert(f.rebase(d));
                            }
                        }
                    }
                }
                out
            }
        }
    }

    fn current_block(&self, ctx: usize, stmt_id: StmtId) -> BlockIdx {
        let _ = ctx;
        self.program.locate(stmt_id).expect("statement exists").1
    }
}

#[derive(Debug, PartialEq, Eq)]
enum Class {
    Source,
    Sanitizer,
    Sink,
    Unknown,
}

/// Checks one summary edge against the forward semantics: does the exact
/// entry fact (or, with `active_source`, the zero row) flow to the given
/// exit fact of `method`? Used by the summary-soundness corpus test.
#[allow(clippy::too_many_arguments)]
pub fn forward_reaches_exit(
    program: &Program,
    cg: &CallGraph,
    spec: &TaintSpec,
    label: &str,
    cfg: &OracleConfig,
    method: MethodId,
    entry: Option<(NameId, Vec<NameId>)>,
    active_source: Option<StmtId>,
    exit_base: NameId,
    exit_fields: &[NameId],
) -> Result<bool, OracleError> {
    let sources_for_label: Vec<String> = spec
        .sources
        .iter()
        .filter(|s| s.labels.iter().any(|l| l == label))
        .map(|s| s.method.clone())
        .collect();
    let sanitizers_for_label: Vec<String> = spec
        .sanitizers
        .iter()
        .filter(|s| s.labels.iter().any(|l| l == label))
        .map(|s| s.method.clone())
        .collect();
    let sink_names: Vec<String> = spec.sinks.iter().map(|s| s.method.clone()).collect();
    let mut universe: Vec<NameId> = program
        .classes
        .iter()
        .flat_map(|c| c.fields.iter().map(|(f, _)| *f))
        .collect();
    universe.sort_unstable();
    universe.dedup();

    let mut run = Run {
        program,
        cg,
        k: cfg.k.k(),
        external: cfg.external,
        budget: cfg.budget,
        active_source: active_source.unwrap_or(StmtId(u32::MAX)),
        sources_for_label,
        sanitizers_for_label,
        sink_names,
        universe,
        def_maps: program.methods.iter().map(|m| m.def_map()).collect(),
        contexts: Vec::new(),
        ctx_index: HashMap::new(),
        worklist: VecDeque::new(),
        queued: BTreeSet::new(),
        steps: 0,
    };
    for i in 0..program.methods.len() {
        run.ctx_id(MethodId(i as u32), None);
    }
    let entry_fct = entry.map(|(b, fs)| Fct::exact(b, fs));
    let probe = run.ctx_id(method, entry_fct);
    run.solve()?;
    Ok(run.contexts[probe].exit_facts.iter().any(|f| {
        f.base == exit_base
            && if f.star {
                starts_with(exit_fields, &f.fields)
            } else {
                f.fields == exit_fields
            }
    }))
}

/// Forward phi handling along one CFG edge: operand-rooted facts transfer
/// to the phi target, target-rooted facts are killed, everything else
/// crosses unchanged.
fn phi_edge(
    program: &Program,
    method: &crate::ir::Method,
    from: BlockIdx,
    to: BlockIdx,
    out: &FactSet,
    k: usize,
) -> FactSet {
    let _ = program;
    let _ = k;
    let to_block = &method.blocks[to];
    let mut phis: Vec<(NameId, NameId)> = Vec::new();
    for s in &to_block.stmts {
        match &s.kind {
            StmtKind::Phi { dst, incomings } => {
                if let Some((_, v)) = incomings.iter().find(|(p, _)| *p == from) {
                    phis.push((*dst, *v));
                }
            }
            _ => break,
        }
    }
    if phis.is_empty() {
        return out.clone();
    }
    let targets: BTreeSet<NameId> = phis.iter().map(|(d, _)| *d).collect();
    let mut edge: FactSet = out.iter().filter(|f| !targets.contains(&f.base)).cloned().collect();
    for (dst, operand) in phis {
        for f in out {
            if f.base == operand {
                edge.insert(f.rebase(dst));
            }
        }
    }
    edge
}

/// Runs the forward analysis once per (source occurrence, label) and
/// collects every tainted sink-argument occurrence.
pub fn oracle_analyze(
    program: &Program,
    cg: &CallGraph,
    spec: &TaintSpec,
    cfg: &OracleConfig,
) -> Result<BTreeSet<OracleFinding>, OracleError> {
    let mut findings = BTreeSet::new();
    let mut labels: BTreeSet<String> = BTreeSet::new();
    for s in &spec.sinks {
        labels.extend(s.labels.iter().cloned());
    }

    let mut universe: Vec<NameId> = program
        .classes
        .iter()
        .flat_map(|c| c.fields.iter().map(|(f, _)| *f))
        .collect();
    universe.sort_unstable();
    universe.dedup();

    // All external call sites, classified later per label.
    let mut call_sites: Vec<(StmtId, String, Vec<NameId>)> = Vec::new();
    for m in &program.methods {
        for b in &m.blocks {
            for s in &b.stmts {
                if s.kind.is_call() && cg.is_external(s.id) {
                    let target = match &s.kind {
                        StmtKind::Call { callee, .. } => callee.clone(),
                        StmtKind::VCall { method, .. } => {
                            program.names.resolve(*method).to_string()
                        }
                        _ => unreachable!(),
                    };
                    let args = match &s.kind {
                        StmtKind::Call { args, .. } | StmtKind::VCall { args, .. } => args.clone(),
                        _ => unreachable!(),
                    };
                    call_sites.push((s.id, target, args));
                }
            }
        }
    }

    for label in &labels {
        let sources_for_label: Vec<String> = spec
            .sources
            .iter()
            .filter(|s| s.labels.iter().any(|l| l == label))
            .map(|s| s.method.clone())
            .collect();
        let sanitizers_for_label: Vec<String> = spec
            .sanitizers
            .iter()
            .filter(|s| s.labels.iter().any(|l| l == label))
            .map(|s| s.method.clone())
            .collect();
        let sink_names: Vec<String> = spec.sinks.iter().map(|s| s.method.clone()).collect();

        let source_sites: Vec<StmtId> = call_sites
            .iter()
            .filter(|(_, target, _)| {
                sources_for_label.iter().any(|s| name_matches(s, target))
            })
            .map(|(id, _, _)| *id)
            .collect();

        for &active in &source_sites {
            let mut run = Run {
                program,
                cg,
                k: cfg.k.k(),
                external: cfg.external,
                budget: cfg.budget,
                active_source: active,
                sources_for_label: sources_for_label.clone(),
                sanitizers_for_label: sanitizers_for_label.clone(),
                sink_names: sink_names.clone(),
                universe: universe.clone(),
                def_maps: program.methods.iter().map(|m| m.def_map()).collect(),
                contexts: Vec::new(),
                ctx_index: HashMap::new(),
                worklist: VecDeque::new(),
                queued: BTreeSet::new(),
                steps: 0,
            };
            // Every method is a potential entry point: seed its zero row.
            for i in 0..program.methods.len() {
                run.ctx_id(MethodId(i as u32), None);
            }
            run.solve()?;

            // Check every configured sink argument in every context.
            for (site, target, args) in &call_sites {
                for sink in &spec.sinks {
                    if !name_matches(&sink.method, target)
                        || !sink.labels.iter().any(|l| l == label)
                        || sink.arg >= args.len()
                    {
                        continue;
                    }
                    let q = args[sink.arg];
                    let (mid, b, pos) = program.locate(*site).expect("call site exists");
                    let tainted = run.contexts.iter().any(|c| {
                        c.method == mid
                            && c.point_facts[b][pos]
                                .iter()
                                .any(|f| f.base == q && f.is_bare())
                    });
                    if tainted {
                        findings.insert(OracleFinding {
                            sink_stmt: *site,
                            sink_arg: sink.arg,
                            source_stmt: active,
                            label: label.clone(),
                        });
                    }
                }
            }
        }
    }
    Ok(findings)
}
