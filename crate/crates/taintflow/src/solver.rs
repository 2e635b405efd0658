//! Demand-driven backward tabulation over the exploded supergraph.
//!
//! A query names a fact at a sink statement; the solver propagates it
//! backward, materializing exploded-supergraph edges only as the worklist
//! demands them. Calls are mediated by per-callee summaries that map an
//! exit-side fact to the entry-side facts it backward-reaches; a fact that
//! survives to a method entry rooted at a parameter continues into every
//! caller. Reaching the null fact at a source statement proves the query
//! fact tainted. Path edges record one first-witness predecessor per
//! node-fact for trace reconstruction.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use thiserror::Error;

use crate::access_path::{ApId, Fact, Interner, KConfig, NameId};
use crate::callgraph::CallGraph;
use crate::flow::{self, FlowCtx};
use crate::ir::{BlockIdx, Method, MethodId, Program, Statement, StmtId, StmtKind};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SolveError {
    #[error("worklist budget exceeded after {pops} steps")]
    BudgetExceeded { pops: u64 },
    #[error("summary entry fact is neither a parameter nor the null fact")]
    InvalidSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExternalModel {
    /// Return values of unknown externals are tainted by any argument
    /// carrying the same field suffix.
    TaintThrough,
    /// Return values of unknown externals are never tainted.
    Opaque,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub k: KConfig,
    pub external: ExternalModel,
    pub skip_identity: bool,
    pub budget: u64,
    pub log_events: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            k: KConfig::default(),
            external: ExternalModel::TaintThrough,
            skip_identity: true,
            budget: 10_000_000,
            log_events: false,
        }
    }
}

/// One backward query: is the access path rooted at `base` (with no fields)
/// tainted with `label` immediately before the sink statement?
#[derive(Debug, Clone)]
pub struct Query {
    pub sink_stmt: StmtId,
    pub base: NameId,
    pub label: String,
}

/// Name sets that classify external call sites for one label.
#[derive(Debug, Clone, Default)]
pub struct LabelEnv {
    /// Sources for the active label.
    pub sources: Vec<String>,
    /// Sanitizers for the active label.
    pub sanitizers: Vec<String>,
    /// All sink method names, independent of label.
    pub sinks: Vec<String>,
}

/// Spec names match call targets exactly, with a bare-name fallback against
/// the last segment of qualified targets.
pub fn name_matches(spec_name: &str, call_target: &str) -> bool {
    spec_name == call_target
        || (!spec_name.contains('.') && call_target.rsplit('.').next() == Some(spec_name))
}

impl LabelEnv {
    fn is_source(&self, target: &str) -> bool {
        self.sources.iter().any(|s| name_matches(s, target))
    }
    fn is_sanitizer(&self, target: &str) -> bool {
        self.sanitizers.iter().any(|s| name_matches(s, target))
    }
    fn is_sink(&self, target: &str) -> bool {
        self.sinks.iter().any(|s| name_matches(s, target))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RegionId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NfId(pub u32);

/// A program point: the fact holds immediately before the statement at
/// `pos`, or at the method exit for summary-region origins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Point {
    Stmt(BlockIdx, usize),
    Exit,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegionKind {
    /// The root region seeded at the sink statement.
    Query,
    /// On-demand summarization of a callee for one exit fact.
    Summary { exit: Fact },
    /// Continuation in a caller after a query-side fact reached a method
    /// entry rooted at a parameter.
    Ascend,
}

#[derive(Debug, Clone)]
pub struct Region {
    pub method: MethodId,
    pub kind: RegionKind,
}

/// First-witness predecessor link of a node-fact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Link {
    /// The query seed itself.
    QuerySeed,
    /// Summary-region origin: recorded once with the first demander.
    Demanded { demander: NfId },
    /// Ascend-region origin at a caller call site.
    AscendSeed { from_entry: NfId },
    /// One backward step; `changed` is false for identity steps.
    Step { parent: NfId, changed: bool },
    /// Caller-side fact produced by applying a summary at a call site.
    ViaSummary { resume: NfId, callee_entry: NfId },
    /// The null fact recorded at a source statement.
    ZeroAt { parent: NfId },
}

#[derive(Debug, Clone)]
pub struct NodeFact {
    pub region: RegionId,
    pub point: Point,
    pub fact: Fact,
    pub link: Link,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveEvent {
    Pop { stmt: StmtId, fact: String },
    Demand { call: StmtId, callee: MethodId, exit: String },
    ExitSeed { callee: MethodId, exit: String },
    SummaryEntry { callee: MethodId, exit: String, entry: String },
    Reuse { call: StmtId, callee: MethodId, exit: String },
    SourceReached { stmt: StmtId },
    Flow { stmt: StmtId, incoming: String, case: &'static str, out: Vec<String> },
}

#[derive(Debug, Default, Clone)]
pub struct SolveStats {
    pub pops: u64,
    /// Node-facts registered; with identity skipping enabled the skipped
    /// chain nodes are never materialized, so this strictly shrinks.
    pub edges_materialized: u64,
    /// Largest fan-out observed from a statement-level flow function.
    pub max_flow_fanout: usize,
    /// Per-method visit counters; a method appears only if it was demanded.
    pub visits: BTreeMap<MethodId, u64>,
}

/// Everything a query run produces, including the path-edge store needed to
/// rebuild traces.
#[derive(Debug)]
pub struct ReachabilityResult {
    pub reachable: bool,
    /// Source statements whose null fact is backward-reachable.
    pub sources: BTreeSet<StmtId>,
    /// First-witness zero node per source statement.
    pub source_witness: BTreeMap<StmtId, NfId>,
    /// Computed summaries: (method, exit fact, entry facts in insertion
    /// order).
    pub summaries: Vec<(MethodId, Fact, Vec<Fact>)>,
    pub nfs: Vec<NodeFact>,
    pub regions: Vec<Region>,
    pub stats: SolveStats,
    pub events: Vec<SolveEvent>,
}

impl ReachabilityResult {
    pub fn nf(&self, id: NfId) -> &NodeFact {
        &self.nfs[id.0 as usize]
    }

    pub fn region(&self, id: RegionId) -> &Region {
        &self.regions[id.0 as usize]
    }
}

struct Demander {
    nf: NfId,
    call: StmtId,
}

struct SummaryState {
    entries: Vec<Fact>,
    entry_nfs: HashMap<Fact, NfId>,
    demanders: Vec<Demander>,
}

struct Env<'a> {
    program: &'a Program,
    cg: &'a CallGraph,
    interner: &'a Interner,
    config: &'a SolverConfig,
    label: &'a LabelEnv,
    def_maps: Vec<HashMap<NameId, (BlockIdx, usize)>>,
    preds: Vec<Vec<Vec<BlockIdx>>>,
}

impl<'a> Env<'a> {
    fn method(&self, id: MethodId) -> &'a Method {
        self.program.method(id)
    }

    fn ctx(&self, m: MethodId) -> FlowCtx<'_> {
        FlowCtx::new(
            self.program,
            self.method(m),
            &self.def_maps[m.0 as usize],
            self.interner,
            self.config.k,
        )
    }

    fn call_target_name(&self, stmt: &Statement) -> String {
        match &stmt.kind {
            StmtKind::Call { callee, .. } => callee.clone(),
            StmtKind::VCall { method, .. } => self.program.names.resolve(*method).to_string(),
            _ => unreachable!("not a call"),
        }
    }

    fn render(&self, fact: Fact) -> String {
        self.interner.render_fact(fact, &self.program.names)
    }
}

struct Tab {
    regions: Vec<Region>,
    nfs: Vec<NodeFact>,
    registry: HashMap<(RegionId, Point, Fact), NfId>,
    worklist: VecDeque<NfId>,
    summaries: HashMap<(MethodId, Fact), SummaryState>,
    ascends: HashMap<(StmtId, Fact), NfId>,
    sources: BTreeSet<StmtId>,
    source_witness: BTreeMap<StmtId, NfId>,
    stats: SolveStats,
    events: Vec<SolveEvent>,
}

impl Tab {
    fn event(&mut self, enabled: bool, f: impl FnOnce() -> SolveEvent) {
        if enabled {
            self.events.push(f());
        }
    }

    fn new_region(&mut self, method: MethodId, kind: RegionKind) -> RegionId {
        let id = RegionId(self.regions.len() as u32);
        self.regions.push(Region { method, kind });
        self.stats.visits.entry(method).or_insert(0);
        id
    }

    /// Registers a node-fact if it is new. Non-zero facts at real points
    /// are enqueued for processing. Returns `None` when already present.
    fn add(&mut self, region: RegionId, point: Point, fact: Fact, link: Link) -> Option<NfId> {
        if self.registry.contains_key(&(region, point, fact)) {
            return None;
        }
        let id = NfId(self.nfs.len() as u32);
        self.nfs.push(NodeFact { region, point, fact, link });
        self.registry.insert((region, point, fact), id);
        self.stats.edges_materialized += 1;
        if !fact.is_zero() && point != Point::Exit {
            self.worklist.push_back(id);
        }
        Some(id)
    }
}

/// The caller-side to callee-side fact map at a call site: a fact rooted at
/// the return variable becomes an exit fact on the `<ret>` pseudo-variable;
/// a fact rooted at an actual argument becomes an exit fact on each
/// corresponding parameter; anything else is not relevant to the callee.
pub fn map_to_callee(
    call: &StmtKind,
    caller_base: NameId,
    caller_fields: &[NameId],
    callee: &Method,
    interner: &Interner,
    ret: NameId,
    k: KConfig,
) -> Vec<ApId> {
    let mut out = Vec::new();
    if call.def() == Some(caller_base) {
        out.push(interner.make(ret, caller_fields, k).expect("length preserved"));
        return out;
    }
    for (i, a) in call.actuals().iter().enumerate() {
        if *a == caller_base && i < callee.params.len() {
            let ap = interner.make(callee.params[i], caller_fields, k).expect("length preserved");
            if !out.contains(&ap) {
                out.push(ap);
            }
        }
    }
    out
}

/// The callee-side to caller-side map for a summary entry fact: parameters
/// substitute the actual argument, the null fact passes through.
pub fn map_to_caller(
    call: &StmtKind,
    entry: Fact,
    callee: &Method,
    interner: &Interner,
    k: KConfig,
) -> Result<Fact, SolveError> {
    match entry {
        Fact::Zero => Ok(Fact::Zero),
        Fact::Ap(ap) => {
            let (base, fields) = interner.parts(ap);
            let Some(i) = callee.param_index(base) else {
                return Err(SolveError::InvalidSummary);
            };
            let actuals = call.actuals();
            if i >= actuals.len() {
                return Err(SolveError::InvalidSummary);
            }
            let mapped = interner.make(actuals[i], &fields, k).expect("length preserved");
            Ok(Fact::Ap(mapped))
        }
    }
}

/// Default model for unknown external calls: a fact rooted at the return
/// variable transfers to the same path on every argument; argument-rooted
/// facts pass through unchanged.
pub fn handle_external(
    call: &StmtKind,
    incoming: ApId,
    interner: &Interner,
    model: ExternalModel,
    k: KConfig,
) -> Vec<Fact> {
    let (base, fields) = interner.parts(incoming);
    if call.def() == Some(base) {
        match model {
            ExternalModel::Opaque => Vec::new(),
            ExternalModel::TaintThrough => {
                let mut out = Vec::new();
                for a in call.actuals() {
                    if let Ok(ap) = interner.make(a, &fields, k) {
                        let f = Fact::Ap(ap);
                        if !out.contains(&f) {
                            out.push(f);
                        }
                    }
                }
                out
            }
        }
    } else {
        vec![Fact::Ap(incoming)]
    }
}

/// Runs one backward query to completion.
pub fn solve(
    program: &Program,
    cg: &CallGraph,
    interner: &Interner,
    config: &SolverConfig,
    label_env: &LabelEnv,
    query: &Query,
) -> Result<ReachabilityResult, SolveError> {
    let def_maps: Vec<HashMap<NameId, (BlockIdx, usize)>> =
        program.methods.iter().map(|m| m.def_map()).collect();
    let preds: Vec<Vec<Vec<BlockIdx>>> =
        program.methods.iter().map(|m| m.predecessors()).collect();
    let env = Env { program, cg, interner, config, label: label_env, def_maps, preds };
    let mut tab = Tab {
        regions: Vec::new(),
        nfs: Vec::new(),
        registry: HashMap::new(),
        worklist: VecDeque::new(),
        summaries: HashMap::new(),
        ascends: HashMap::new(),
        sources: BTreeSet::new(),
        source_witness: BTreeMap::new(),
        stats: SolveStats::default(),
        events: Vec::new(),
    };

    let (qm, qb, qpos) = program.locate(query.sink_stmt).expect("sink statement exists");
    let qregion = tab.new_region(qm, RegionKind::Query);
    let qfact = Fact::Ap(interner.var(query.base));
    tab.add(qregion, Point::Stmt(qb, qpos), qfact, Link::QuerySeed);

    while let Some(nf) = tab.worklist.pop_front() {
        tab.stats.pops += 1;
        if tab.stats.pops > config.budget {
            return Err(SolveError::BudgetExceeded { pops: tab.stats.pops });
        }
        let node = tab.nfs[nf.0 as usize].clone();
        let method_id = tab.regions[node.region.0 as usize].method;
        *tab.stats.visits.entry(method_id).or_insert(0) += 1;
        if config.log_events {
            let stmt_id = point_stmt(env.method(method_id), node.point);
            let fact = env.render(node.fact);
            tab.event(true, || SolveEvent::Pop { stmt: stmt_id, fact });
        }
        process(&env, &mut tab, nf, &node, method_id);
    }

    let mut summaries: Vec<(MethodId, Fact, Vec<Fact>)> = tab
        .summaries
        .iter()
        .map(|((m, e), st)| (*m, *e, st.entries.clone()))
        .collect();
    summaries.sort_by(|a, b| {
        let qa = (&program.method(a.0).qname, env.render(a.1));
        let qb = (&program.method(b.0).qname, env.render(b.1));
        qa.cmp(&qb)
    });

    Ok(ReachabilityResult {
        reachable: !tab.sources.is_empty(),
        sources: tab.sources,
        source_witness: tab.source_witness,
        summaries,
        nfs: tab.nfs,
        regions: tab.regions,
        stats: tab.stats,
        events: tab.events,
    })
}

fn point_stmt(method: &Method, point: Point) -> StmtId {
    match point {
        Point::Stmt(b, s) => method.blocks[b].stmts[s].id,
        Point::Exit => StmtId(u32::MAX),
    }
}

fn process(env: &Env, tab: &mut Tab, nf: NfId, node: &NodeFact, method_id: MethodId) {
    let method = env.method(method_id);
    let Point::Stmt(mut b, mut pos) = node.point else { return };
    let Fact::Ap(ap) = node.fact else { return };
    let base = env.interner.base(ap);

    // With identity skipping, walk backward through single-predecessor
    // points whose transfer function is provably the identity for this
    // fact; the skipped nodes are never materialized.
    if env.config.skip_identity {
        loop {
            let block = &method.blocks[b];
            let head = block.first_non_phi();
            if pos > head {
                let stmt = &block.stmts[pos - 1];
                if stmt_is_identity(env, method_id, stmt, base) {
                    pos -= 1;
                    continue;
                }
                break;
            }
            if b == 0 {
                break;
            }
            let preds = &env.preds[method_id.0 as usize][b];
            if preds.len() != 1 {
                break;
            }
            let phi_matches = block.stmts[..head]
                .iter()
                .any(|s| matches!(s.kind, StmtKind::Phi { dst, .. } if dst == base));
            if phi_matches {
                break;
            }
            let p = preds[0];
            b = p;
            pos = method.blocks[p].stmts.len() - 1;
        }
    }

    let block = &method.blocks[b];
    let head = block.first_non_phi();
    if pos > head {
        let prev = pos - 1;
        step_through_stmt(env, tab, nf, node, method_id, b, prev, ap);
        return;
    }

    // Block-head point: at the entry block this is the method entry.
    if b == 0 {
        entry_handling(env, tab, nf, node, method_id, ap);
    }
    let preds = env.preds[method_id.0 as usize][b].clone();
    for p in preds {
        let mut fact = Fact::Ap(ap);
        // The phi bank executes in parallel: a fact is substituted against
        // at most one phi, never re-matched against the others.
        for s in &block.stmts[..head] {
            let Fact::Ap(cur) = fact else { break };
            if matches!(s.kind, StmtKind::Phi { dst, .. } if dst == env.interner.base(cur)) {
                let r = {
                    let ctx = env.ctx(method_id);
                    flow::flow_phi(s, cur, p, &ctx).expect("validated phi edge")
                };
                tab.stats.max_flow_fanout = tab.stats.max_flow_fanout.max(r.facts.len());
                log_flow(env, tab, s, cur, r.case.code(), &r.facts);
                fact = match r.facts.first() {
                    Some(f) => *f,
                    None => return,
                };
                break;
            }
        }
        let Fact::Ap(out_ap) = fact else { continue };
        let term = method.blocks[p].stmts.len() - 1;
        let changed = out_ap != ap;
        tab.add(
            node.region,
            Point::Stmt(p, term),
            Fact::Ap(out_ap),
            Link::Step { parent: nf, changed },
        );
    }
}

/// Applies the backward effect of the statement at `(b, p)` to a fact that
/// holds immediately after it.
#[allow(clippy::too_many_arguments)]
fn step_through_stmt(
    env: &Env,
    tab: &mut Tab,
    nf: NfId,
    node: &NodeFact,
    method_id: MethodId,
    b: BlockIdx,
    p: usize,
    ap: ApId,
) {
    let method = env.method(method_id);
    let stmt = &method.blocks[b].stmts[p];
    let point = Point::Stmt(b, p);

    if stmt.kind.is_call() {
        if !env.cg.is_external(stmt.id) {
            call_handling(env, tab, nf, node, stmt, point, ap);
            return;
        }
        let target = env.call_target_name(stmt);
        let facts: Vec<Fact> = if env.label.is_source(&target) {
            let r = {
                let ctx = env.ctx(method_id);
                flow::flow(stmt, ap, &ctx, true).expect("source call")
            };
            tab.stats.max_flow_fanout = tab.stats.max_flow_fanout.max(r.facts.len());
            log_flow(env, tab, stmt, ap, r.case.code(), &r.facts);
            r.facts.into_vec()
        } else if env.label.is_sanitizer(&target) {
            let r = {
                let ctx = env.ctx(method_id);
                flow::flow_sanitizer(stmt, ap, &ctx)
            };
            log_flow(env, tab, stmt, ap, r.case.code(), &r.facts);
            r.facts.into_vec()
        } else if env.label.is_sink(&target) {
            // Sink calls are modeled opaque: a fact rooted at their return
            // variable is not traced through them.
            let facts = if stmt.kind.def() == Some(env.interner.base(ap)) {
                Vec::new()
            } else {
                vec![Fact::Ap(ap)]
            };
            log_flow(env, tab, stmt, ap, "ext", &facts);
            facts
        } else {
            let facts =
                handle_external(&stmt.kind, ap, env.interner, env.config.external, env.config.k);
            log_flow(env, tab, stmt, ap, "ext", &facts);
            facts
        };
        for f in facts {
            emit_fact(env, tab, nf, node, stmt, point, ap, f);
        }
        return;
    }

    let r = {
        let ctx = env.ctx(method_id);
        flow::flow(stmt, ap, &ctx, false).expect("intra-procedural statement")
    };
    tab.stats.max_flow_fanout = tab.stats.max_flow_fanout.max(r.facts.len());
    log_flow(env, tab, stmt, ap, r.case.code(), &r.facts);
    for f in r.facts {
        emit_fact(env, tab, nf, node, stmt, point, ap, f);
    }
}

fn log_flow(
    env: &Env,
    tab: &mut Tab,
    stmt: &Statement,
    incoming: ApId,
    case: &'static str,
    facts: &[Fact],
) {
    if env.config.log_events {
        let out: Vec<String> = facts.iter().map(|f| env.render(*f)).collect();
        let incoming = env.render(Fact::Ap(incoming));
        tab.event(true, || SolveEvent::Flow { stmt: stmt.id, incoming, case, out });
    }
}

#[allow(clippy::too_many_arguments)]
fn emit_fact(
    env: &Env,
    tab: &mut Tab,
    nf: NfId,
    node: &NodeFact,
    stmt: &Statement,
    point: Point,
    incoming: ApId,
    fact: Fact,
) {
    match fact {
        Fact::Zero => record_source(env, tab, nf, node, stmt.id, point),
        Fact::Ap(out) => {
            let changed = out != incoming;
            tab.add(node.region, point, fact, Link::Step { parent: nf, changed });
        }
    }
}

fn record_source(env: &Env, tab: &mut Tab, nf: NfId, node: &NodeFact, stmt: StmtId, point: Point) {
    let enabled = env.config.log_events;
    if let Some(zero_nf) = tab.add(node.region, point, Fact::Zero, Link::ZeroAt { parent: nf }) {
        tab.sources.insert(stmt);
        tab.source_witness.entry(stmt).or_insert(zero_nf);
        tab.event(enabled, || SolveEvent::SourceReached { stmt });
        // A source inside a summarized callee means the exit fact is
        // unconditionally tainted: record the null fact as a summary entry.
        let region = tab.regions[node.region.0 as usize].clone();
        if let RegionKind::Summary { exit } = region.kind {
            let st = tab.summaries.get_mut(&(region.method, exit)).expect("region has state");
            if !st.entries.contains(&Fact::Zero) {
                st.entries.push(Fact::Zero);
                st.entry_nfs.insert(Fact::Zero, zero_nf);
                let exit_s = env.render(exit);
                tab.event(enabled, || SolveEvent::SummaryEntry {
                    callee: region.method,
                    exit: exit_s,
                    entry: "0".to_string(),
                });
            }
        }
    } else {
        tab.sources.insert(stmt);
    }
}

fn call_handling(
    env: &Env,
    tab: &mut Tab,
    nf: NfId,
    node: &NodeFact,
    stmt: &Statement,
    point: Point,
    ap: ApId,
) {
    let (base, fields) = env.interner.parts(ap);
    let related = stmt.kind.def() == Some(base) || stmt.kind.actuals().contains(&base);
    if !related {
        tab.add(node.region, point, Fact::Ap(ap), Link::Step { parent: nf, changed: false });
        return;
    }
    let callees: Vec<MethodId> = env.cg.callees(stmt.id).to_vec();
    for callee in callees {
        let exits = map_to_callee(
            &stmt.kind,
            base,
            &fields,
            env.method(callee),
            env.interner,
            env.program.names.ret(),
            env.config.k,
        );
        for e in exits {
            demand_summary(env, tab, nf, stmt, callee, Fact::Ap(e));
        }
    }
}

fn demand_summary(
    env: &Env,
    tab: &mut Tab,
    demander: NfId,
    call_stmt: &Statement,
    callee: MethodId,
    exit: Fact,
) {
    let enabled = env.config.log_events;
    let key = (callee, exit);
    if tab.summaries.contains_key(&key) {
        let exit_s = env.render(exit);
        tab.event(enabled, || SolveEvent::Reuse { call: call_stmt.id, callee, exit: exit_s });
        let entries: Vec<Fact> = tab.summaries[&key].entries.clone();
        tab.summaries
            .get_mut(&key)
            .unwrap()
            .demanders
            .push(Demander { nf: demander, call: call_stmt.id });
        for entry in entries {
            apply_summary_entry(env, tab, demander, call_stmt, callee, exit, entry);
        }
        return;
    }

    let exit_s = env.render(exit);
    tab.event(enabled, || SolveEvent::Demand { call: call_stmt.id, callee, exit: exit_s });
    let region = tab.new_region(callee, RegionKind::Summary { exit });
    let origin = tab
        .add(region, Point::Exit, exit, Link::Demanded { demander })
        .expect("fresh region origin");
    let exit_s = env.render(exit);
    tab.event(enabled, || SolveEvent::ExitSeed { callee, exit: exit_s });
    tab.summaries.insert(
        key,
        SummaryState {
            entries: Vec::new(),
            entry_nfs: HashMap::new(),
            demanders: vec![Demander { nf: demander, call: call_stmt.id }],
        },
    );

    // Seed every return statement with the exit fact pulled backward over
    // the return: <ret>-rooted facts move to the returned variable,
    // parameter-rooted facts pass unchanged.
    let callee_m = env.method(callee);
    let ret = env.program.names.ret();
    let Fact::Ap(eap) = exit else { return };
    let (ebase, efields) = env.interner.parts(eap);
    for (bi, si) in callee_m.return_stmts() {
        let StmtKind::Return { value } = &callee_m.blocks[bi].stmts[si].kind else {
            continue;
        };
        let seeded = if ebase == ret {
            match value {
                Some(v) => {
                    let ap =
                        env.interner.make(*v, &efields, env.config.k).expect("length preserved");
                    Some(Fact::Ap(ap))
                }
                None => None,
            }
        } else {
            Some(exit)
        };
        if let Some(f) = seeded {
            let changed = f != exit;
            tab.add(region, Point::Stmt(bi, si), f, Link::Step { parent: origin, changed });
        }
    }
}

fn apply_summary_entry(
    env: &Env,
    tab: &mut Tab,
    demander: NfId,
    call_stmt: &Statement,
    callee: MethodId,
    exit: Fact,
    entry: Fact,
) {
    if entry.is_zero() {
        // The source witness inside the callee already records the flow.
        return;
    }
    let mapped =
        map_to_caller(&call_stmt.kind, entry, env.method(callee), env.interner, env.config.k)
            .expect("summary entries are parameter-rooted");
    let Fact::Ap(mapped_ap) = mapped else { return };
    let (_, cb, cp) = env.program.locate(call_stmt.id).expect("call site exists");
    let entry_nf = tab.summaries[&(callee, exit)].entry_nfs[&entry];
    let region = tab.nfs[demander.0 as usize].region;
    tab.add(
        region,
        Point::Stmt(cb, cp),
        Fact::Ap(mapped_ap),
        Link::ViaSummary { resume: demander, callee_entry: entry_nf },
    );
}

fn entry_handling(
    env: &Env,
    tab: &mut Tab,
    nf: NfId,
    node: &NodeFact,
    method_id: MethodId,
    ap: ApId,
) {
    let enabled = env.config.log_events;
    let method = env.method(method_id);
    let (base, fields) = env.interner.parts(ap);
    let Some(param_idx) = method.param_index(base) else {
        // Facts rooted at locals cannot hold before any definition.
        return;
    };
    let region = tab.regions[node.region.0 as usize].clone();
    match region.kind {
        RegionKind::Summary { exit } => {
            let key = (method_id, exit);
            let fact = Fact::Ap(ap);
            let st = tab.summaries.get_mut(&key).expect("region has state");
            if st.entries.contains(&fact) {
                return;
            }
            st.entries.push(fact);
            st.entry_nfs.insert(fact, nf);
            let demanders: Vec<(NfId, StmtId)> =
                st.demanders.iter().map(|d| (d.nf, d.call)).collect();
            let exit_s = env.render(exit);
            let entry_s = env.render(fact);
            tab.event(enabled, || SolveEvent::SummaryEntry {
                callee: method_id,
                exit: exit_s,
                entry: entry_s,
            });
            for (dnf, call) in demanders {
                let call_stmt = env.program.stmt(call).clone();
                apply_summary_entry(env, tab, dnf, &call_stmt, method_id, exit, fact);
            }
        }
        RegionKind::Query | RegionKind::Ascend => {
            // Continue into every caller, substituting the actual argument.
            for &cs in env.cg.callers_of(method_id) {
                let call_stmt = env.program.stmt(cs);
                let actuals = call_stmt.kind.actuals();
                if param_idx >= actuals.len() {
                    continue;
                }
                let mapped = env
                    .interner
                    .make(actuals[param_idx], &fields, env.config.k)
                    .expect("length preserved");
                let key = (cs, Fact::Ap(mapped));
                if tab.ascends.contains_key(&key) {
                    continue;
                }
                let (cm, cb, cp) = env.program.locate(cs).expect("call site exists");
                let aregion = tab.new_region(cm, RegionKind::Ascend);
                if let Some(anf) = tab.add(
                    aregion,
                    Point::Stmt(cb, cp),
                    Fact::Ap(mapped),
                    Link::AscendSeed { from_entry: nf },
                ) {
                    tab.ascends.insert(key, anf);
                }
            }
        }
    }
}

fn stmt_is_identity(env: &Env, method_id: MethodId, stmt: &Statement, base: NameId) -> bool {
    if stmt.kind.is_call() {
        let dst_related = stmt.kind.def() == Some(base);
        if env.cg.is_external(stmt.id) {
            return !dst_related;
        }
        return !dst_related && !stmt.kind.actuals().contains(&base);
    }
    if stmt.kind.is_phi() || matches!(stmt.kind, StmtKind::Return { .. }) {
        return false;
    }
    let ctx = env.ctx(method_id);
    flow::is_identity_for(stmt, base, &ctx)
}
