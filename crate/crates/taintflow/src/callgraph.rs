//! Call-site resolution: direct calls by qualified name, virtual calls by
//! class hierarchy analysis with a single intra-procedural allocation-type
//! refinement on the receiver's SSA definition chain.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use crate::access_path::NameId;
use crate::ir::{Method, MethodId, Program, StmtId, StmtKind};

#[derive(Debug, Default)]
pub struct CallGraph {
    /// Resolved callees per call site, ordered by callee qualified name.
    pub edges: BTreeMap<StmtId, Vec<MethodId>>,
    /// Call sites with no resolvable body.
    pub externals: BTreeSet<StmtId>,
    /// Reverse map: method to the call sites that may invoke it, sorted.
    pub callers: HashMap<MethodId, Vec<StmtId>>,
}

impl CallGraph {
    pub fn callees(&self, call: StmtId) -> &[MethodId] {
        self.edges.get(&call).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn is_external(&self, call: StmtId) -> bool {
        self.externals.contains(&call)
    }

    pub fn callers_of(&self, m: MethodId) -> &[StmtId] {
        self.callers.get(&m).map(|v| v.as_slice()).unwrap_or(&[])
    }
}

/// Receiver allocation inference: follow the SSA definition chain through
/// copies and phis; succeeds only when every reached definition is a unique
/// `new T`.
fn alloc_types(method: &Method, var: NameId) -> Option<BTreeSet<NameId>> {
    let defs = method.def_map();
    let mut seen: HashSet<NameId> = HashSet::new();
    let mut work = vec![var];
    let mut classes = BTreeSet::new();
    while let Some(v) = work.pop() {
        if !seen.insert(v) {
            continue;
        }
        let Some(&(bi, si)) = defs.get(&v) else {
            // Parameters and anything else without a local definition defeat
            // the refinement.
            return None;
        };
        match &method.blocks[bi].stmts[si].kind {
            StmtKind::Alloc { class, .. } => {
                classes.insert(*class);
            }
            StmtKind::Assign { src, .. } => work.push(*src),
            StmtKind::Phi { incomings, .. } => work.extend(incomings.iter().map(|(_, v)| *v)),
            _ => return None,
        }
    }
    Some(classes)
}

/// Builds the interprocedural call edges. Every call statement lands either
/// in `edges` or in `externals`.
pub fn build_callgraph(program: &Program) -> CallGraph {
    let mut cg = CallGraph::default();
    for method in &program.methods {
        for block in &method.blocks {
            for stmt in &block.stmts {
                match &stmt.kind {
                    StmtKind::Call { callee, args, .. } => {
                        match program.method_by_qname(callee) {
                            Some(id) if program.method(id).params.len() == args.len() => {
                                cg.edges.insert(stmt.id, vec![id]);
                            }
                            _ => {
                                cg.externals.insert(stmt.id);
                            }
                        }
                    }
                    StmtKind::VCall { recv, method: mname, args, .. } => {
                        let arity = args.len() + 1;
                        let targets = resolve_vcall(program, method, *recv, *mname, arity);
                        if targets.is_empty() {
                            cg.externals.insert(stmt.id);
                        } else {
                            cg.edges.insert(stmt.id, targets);
                        }
                    }
                    _ => {}
                }
            }
        }
    }
    for (&site, targets) in &cg.edges {
        for &t in targets {
            cg.callers.entry(t).or_default().push(site);
        }
    }
    for sites in cg.callers.values_mut() {
        sites.sort_unstable();
        sites.dedup();
    }
    cg
}

fn resolve_vcall(
    program: &Program,
    method: &Method,
    recv: NameId,
    mname: NameId,
    arity: usize,
) -> Vec<MethodId> {
    if let Some(classes) = alloc_types(method, recv) {
        if classes.len() == 1 {
            let class = *classes.iter().next().unwrap();
            return program.dispatch(class, mname, arity).into_iter().collect();
        }
    }
    // CHA fallback: every declared method with this name and arity.
    let mut out: Vec<(String, MethodId)> = Vec::new();
    for (i, m) in program.methods.iter().enumerate() {
        if m.class.is_some() && m.name == mname && m.params.len() == arity {
            out.push((m.qname.clone(), MethodId(i as u32)));
        }
    }
    out.sort();
    out.into_iter().map(|(_, id)| id).collect()
}

/// `--dump-callgraph` rendering: `caller_stmt_id -> callee_qname`, sorted.
pub fn dump(program: &Program, cg: &CallGraph) -> String {
    let mut out = String::new();
    for (site, targets) in &cg.edges {
        for t in targets {
            out.push_str(&format!("{} -> {}\n", site.0, program.method(*t).qname));
        }
    }
    out
}
