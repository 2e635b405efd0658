//! SSA construction and validation.
//!
//! Construction uses pruned SSA: phi nodes are placed at the iterated
//! dominance frontier of each multiply-defined variable, restricted to
//! blocks where the variable is live-in, then uses are renamed with version
//! suffixes along the dominator tree. Inputs that already satisfy the SSA
//! properties are returned unchanged.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::access_path::{NameId, NameTable};
use crate::ir::{BasicBlock, BlockIdx, Method, Program, Statement, StmtId, StmtKind};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SsaError {
    #[error("method `{method}`: variable `{var}` has multiple definitions")]
    MultipleDefs { method: String, var: String },
    #[error("method `{method}`: variable `{var}` may be used before definition")]
    UseBeforeDef { method: String, var: String },
    #[error("method `{method}`: use of `{var}` is not dominated by its definition")]
    UseNotDominated { method: String, var: String },
    #[error("method `{method}`: phi in block `{block}` does not match its predecessors")]
    PhiLabelMismatch { method: String, block: String },
    #[error("method `{method}`: block `{block}` is unreachable from the entry block")]
    UnreachableBlock { method: String, block: String },
}

/// Dominator information over the (fully reachable) CFG of one method.
struct DomInfo {
    children: Vec<Vec<BlockIdx>>,
    frontier: Vec<Vec<BlockIdx>>,
    pre: Vec<u32>,
    post: Vec<u32>,
}

impl DomInfo {
    fn dominates(&self, a: BlockIdx, b: BlockIdx) -> bool {
        self.pre[a] <= self.pre[b] && self.post[b] <= self.post[a]
    }
}

fn reverse_postorder(method: &Method) -> Vec<BlockIdx> {
    let n = method.blocks.len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    // Iterative DFS; successors pushed in reverse so lower-index targets are
    // visited first, keeping the order deterministic.
    let mut stack: Vec<(BlockIdx, usize)> = vec![(0, 0)];
    visited[0] = true;
    while let Some(&mut (b, ref mut i)) = stack.last_mut() {
        let succs = method.blocks[b].successors();
        if *i < succs.len() {
            let s = succs[*i];
            *i += 1;
            if !visited[s] {
                visited[s] = true;
                stack.push((s, 0));
            }
        } else {
            order.push(b);
            stack.pop();
        }
    }
    order.reverse();
    order
}

fn check_reachability(method: &Method, names: &NameTable) -> Result<Vec<BlockIdx>, SsaError> {
    let rpo = reverse_postorder(method);
    if rpo.len() != method.blocks.len() {
        let reached: HashSet<BlockIdx> = rpo.iter().copied().collect();
        let missing = (0..method.blocks.len()).find(|b| !reached.contains(b)).unwrap();
        return Err(SsaError::UnreachableBlock {
            method: method.qname.clone(),
            block: names.resolve(method.blocks[missing].label).to_string(),
        });
    }
    Ok(rpo)
}

/// Cooper-Harvey-Kennedy iterative dominators plus dominance frontiers.
fn compute_dominators(method: &Method, rpo: &[BlockIdx]) -> DomInfo {
    let n = method.blocks.len();
    let preds = method.predecessors();
    let mut rpo_num = vec![0usize; n];
    for (i, &b) in rpo.iter().enumerate() {
        rpo_num[b] = i;
    }
    let mut idom: Vec<Option<BlockIdx>> = vec![None; n];
    idom[0] = Some(0);
    let intersect = |idom: &[Option<BlockIdx>], mut a: BlockIdx, mut b: BlockIdx| {
        while a != b {
            while rpo_num[a] > rpo_num[b] {
                a = idom[a].unwrap();
            }
            while rpo_num[b] > rpo_num[a] {
                b = idom[b].unwrap();
            }
        }
        a
    };
    let mut changed = true;
    while changed {
        changed = false;
        for &b in rpo.iter().skip(1) {
            let mut new_idom = None;
            for &p in &preds[b] {
                if idom[p].is_some() {
                    new_idom = Some(match new_idom {
                        None => p,
                        Some(cur) => intersect(&idom, p, cur),
                    });
                }
            }
            if idom[b] != new_idom {
                idom[b] = new_idom;
                changed = true;
            }
        }
    }
    let idom: Vec<BlockIdx> = idom.into_iter().map(|d| d.unwrap()).collect();

    let mut frontier = vec![Vec::new(); n];
    for b in 0..n {
        if preds[b].len() >= 2 {
            for &p in &preds[b] {
                let mut runner = p;
                while runner != idom[b] {
                    if !frontier[runner].contains(&b) {
                        frontier[runner].push(b);
                    }
                    runner = idom[runner];
                }
            }
        }
    }
    for f in &mut frontier {
        f.sort_unstable();
    }

    let mut children = vec![Vec::new(); n];
    for b in 1..n {
        children[idom[b]].push(b);
    }
    for c in &mut children {
        c.sort_unstable();
    }

    // Pre/post numbering of the dominator tree for O(1) dominance queries.
    let mut pre = vec![0u32; n];
    let mut post = vec![0u32; n];
    let mut clock = 0u32;
    let mut stack: Vec<(BlockIdx, usize)> = vec![(0, 0)];
    pre[0] = clock;
    clock += 1;
    while let Some(&mut (b, ref mut i)) = stack.last_mut() {
        if *i < children[b].len() {
            let c = children[b][*i];
            *i += 1;
            pre[c] = clock;
            clock += 1;
            stack.push((c, 0));
        } else {
            post[b] = clock;
            clock += 1;
            stack.pop();
        }
    }

    DomInfo { children, frontier, pre, post }
}

struct UseDef {
    /// Non-phi variable uses per block, position-ordered.
    block_uses: Vec<Vec<(usize, NameId)>>,
    /// Definitions per block as (position, var); phi targets included.
    block_defs: Vec<Vec<(usize, NameId)>>,
    /// Phi operands per block: (phi position, pred block, operand var).
    phi_uses: Vec<Vec<(usize, BlockIdx, NameId)>>,
    /// Total defining sites per variable, parameters counting as one.
    def_count: HashMap<NameId, usize>,
    def_blocks: HashMap<NameId, Vec<BlockIdx>>,
}

fn collect_use_def(method: &Method) -> UseDef {
    let n = method.blocks.len();
    let mut ud = UseDef {
        block_uses: vec![Vec::new(); n],
        block_defs: vec![Vec::new(); n],
        phi_uses: vec![Vec::new(); n],
        def_count: HashMap::new(),
        def_blocks: HashMap::new(),
    };
    for &p in &method.params {
        *ud.def_count.entry(p).or_insert(0) += 1;
        ud.def_blocks.entry(p).or_default().push(0);
    }
    for (bi, b) in method.blocks.iter().enumerate() {
        for (si, s) in b.stmts.iter().enumerate() {
            if let StmtKind::Phi { dst, incomings } = &s.kind {
                for (pb, v) in incomings {
                    ud.phi_uses[bi].push((si, *pb, *v));
                }
                ud.block_defs[bi].push((si, *dst));
                *ud.def_count.entry(*dst).or_insert(0) += 1;
                ud.def_blocks.entry(*dst).or_default().push(bi);
            } else {
                for u in s.kind.uses() {
                    ud.block_uses[bi].push((si, u));
                }
                if let Some(d) = s.kind.def() {
                    ud.block_defs[bi].push((si, d));
                    *ud.def_count.entry(d).or_insert(0) += 1;
                    ud.def_blocks.entry(d).or_default().push(bi);
                }
            }
        }
    }
    ud
}

/// Per-block live-in sets for the original variables. Phi operands count as
/// uses at the end of the corresponding predecessor.
fn liveness(method: &Method, ud: &UseDef) -> Vec<HashSet<NameId>> {
    let n = method.blocks.len();
    let mut gen = vec![HashSet::new(); n];
    let mut kill = vec![HashSet::new(); n];
    for bi in 0..n {
        let mut defined: HashSet<NameId> = HashSet::new();
        let mut events: Vec<(usize, bool, NameId)> = Vec::new();
        for &(si, u) in &ud.block_uses[bi] {
            events.push((si, false, u));
        }
        for &(si, d) in &ud.block_defs[bi] {
            events.push((si, true, d));
        }
        events.sort_by_key(|&(si, is_def, _)| (si, is_def));
        for (_, is_def, v) in events {
            if is_def {
                defined.insert(v);
            } else if !defined.contains(&v) {
                gen[bi].insert(v);
            }
        }
        kill[bi] = defined;
    }
    let mut live_in: Vec<HashSet<NameId>> = vec![HashSet::new(); n];
    let mut changed = true;
    while changed {
        changed = false;
        for bi in (0..n).rev() {
            let mut out: HashSet<NameId> = HashSet::new();
            for s in method.blocks[bi].successors() {
                out.extend(live_in[s].iter().copied());
                for &(_, pb, v) in &ud.phi_uses[s] {
                    if pb == bi {
                        out.insert(v);
                    }
                }
                // Phi targets are defined at the head of the successor.
                for &(si, d) in &ud.block_defs[s] {
                    if method.blocks[s].stmts[si].kind.is_phi() {
                        out.remove(&d);
                    }
                }
            }
            let mut new_in = gen[bi].clone();
            for v in out.difference(&kill[bi]) {
                new_in.insert(*v);
            }
            if new_in != live_in[bi] {
                live_in[bi] = new_in;
                changed = true;
            }
        }
    }
    live_in
}

/// Forward definite-assignment check: every use must be preceded by a
/// definition on all paths from entry. Phi operands are checked at the exit
/// of their predecessor block.
fn check_definite_assignment(method: &Method, names: &NameTable) -> Result<(), SsaError> {
    let n = method.blocks.len();
    let preds = method.predecessors();
    let all_vars: HashSet<NameId> = {
        let mut s: HashSet<NameId> = method.params.iter().copied().collect();
        for b in &method.blocks {
            for st in &b.stmts {
                s.extend(st.kind.uses());
                if let Some(d) = st.kind.def() {
                    s.insert(d);
                }
                if let StmtKind::Phi { incomings, .. } = &st.kind {
                    s.extend(incomings.iter().map(|(_, v)| *v));
                }
            }
        }
        s
    };
    let entry_in: HashSet<NameId> = method.params.iter().copied().collect();
    let mut out: Vec<HashSet<NameId>> = vec![all_vars.clone(); n];
    let block_defs: Vec<HashSet<NameId>> = method
        .blocks
        .iter()
        .map(|b| b.stmts.iter().filter_map(|s| s.kind.def()).collect())
        .collect();
    let mut changed = true;
    while changed {
        changed = false;
        for bi in 0..n {
            let mut inn = if bi == 0 {
                entry_in.clone()
            } else {
                let mut acc: Option<HashSet<NameId>> = None;
                for &p in &preds[bi] {
                    acc = Some(match acc {
                        None => out[p].clone(),
                        Some(a) => a.intersection(&out[p]).copied().collect(),
                    });
                }
                acc.unwrap_or_else(|| all_vars.clone())
            };
            // A loop back into the entry block still starts with the params.
            if bi == 0 && !preds[0].is_empty() {
                for &p in &preds[0] {
                    inn = inn.intersection(&out[p]).copied().collect();
                }
                inn.extend(method.params.iter().copied());
            }
            let mut new_out = inn;
            new_out.extend(block_defs[bi].iter().copied());
            if new_out != out[bi] {
                out[bi] = new_out;
                changed = true;
            }
        }
    }
    // Re-derive block-entry sets and scan statements in order.
    for bi in 0..n {
        let mut avail = if bi == 0 {
            entry_in.clone()
        } else {
            let mut acc: Option<HashSet<NameId>> = None;
            for &p in &preds[bi] {
                acc = Some(match acc {
                    None => out[p].clone(),
                    Some(a) => a.intersection(&out[p]).copied().collect(),
                });
            }
            acc.unwrap()
        };
        if bi == 0 && !preds[0].is_empty() {
            avail.extend(method.params.iter().copied());
        }
        for s in &method.blocks[bi].stmts {
            if let StmtKind::Phi { dst, incomings } = &s.kind {
                for (pb, v) in incomings {
                    if !out[*pb].contains(v) {
                        return Err(SsaError::UseBeforeDef {
                            method: method.qname.clone(),
                            var: names.resolve(*v).to_string(),
                        });
                    }
                }
                avail.insert(*dst);
            } else {
                for u in s.kind.uses() {
                    if !avail.contains(&u) {
                        return Err(SsaError::UseBeforeDef {
                            method: method.qname.clone(),
                            var: names.resolve(u).to_string(),
                        });
                    }
                }
                if let Some(d) = s.kind.def() {
                    avail.insert(d);
                }
            }
        }
    }
    Ok(())
}

/// Checks the SSA properties: single definition per variable, phi nodes at
/// block heads whose labels exactly match the predecessors, and every use
/// dominated by its definition.
pub fn validate_ssa(method: &Method, names: &NameTable) -> Result<(), SsaError> {
    let rpo = check_reachability(method, names)?;
    let ud = collect_use_def(method);
    for (v, count) in ud.def_count.iter() {
        if *count > 1 {
            let mut vars: Vec<&NameId> =
                ud.def_count.iter().filter(|(_, c)| **c > 1).map(|(v, _)| v).collect();
            vars.sort();
            let _ = v;
            return Err(SsaError::MultipleDefs {
                method: method.qname.clone(),
                var: names.resolve(**vars.first().unwrap()).to_string(),
            });
        }
    }
    let preds = method.predecessors();
    for (bi, b) in method.blocks.iter().enumerate() {
        let mut seen_non_phi = false;
        for s in &b.stmts {
            if let StmtKind::Phi { incomings, .. } = &s.kind {
                if seen_non_phi {
                    return Err(SsaError::PhiLabelMismatch {
                        method: method.qname.clone(),
                        block: names.resolve(b.label).to_string(),
                    });
                }
                let mut labels: Vec<BlockIdx> = incomings.iter().map(|(p, _)| *p).collect();
                labels.sort_unstable();
                let has_dup = labels.windows(2).any(|w| w[0] == w[1]);
                if has_dup || labels != preds[bi] {
                    return Err(SsaError::PhiLabelMismatch {
                        method: method.qname.clone(),
                        block: names.resolve(b.label).to_string(),
                    });
                }
            } else {
                seen_non_phi = true;
            }
        }
    }

    let dom = compute_dominators(method, &rpo);
    let def_site: HashMap<NameId, (BlockIdx, usize)> = method.def_map();
    let is_param: HashSet<NameId> = method.params.iter().copied().collect();
    let check_use = |v: NameId, at: (BlockIdx, usize), at_pred_exit: Option<BlockIdx>| {
        if is_param.contains(&v) {
            return Ok(());
        }
        match def_site.get(&v) {
            None => Err(SsaError::UseBeforeDef {
                method: method.qname.clone(),
                var: names.resolve(v).to_string(),
            }),
            Some(&(db, ds)) => {
                let ok = match at_pred_exit {
                    // Use at the exit of block `p` (phi operand).
                    Some(p) => db == p || dom.dominates(db, p),
                    None => {
                        if db == at.0 {
                            ds < at.1
                        } else {
                            dom.dominates(db, at.0)
                        }
                    }
                };
                if ok {
                    Ok(())
                } else {
                    Err(SsaError::UseNotDominated {
                        method: method.qname.clone(),
                        var: names.resolve(v).to_string(),
                    })
                }
            }
        }
    };
    for (bi, b) in method.blocks.iter().enumerate() {
        for (si, s) in b.stmts.iter().enumerate() {
            if let StmtKind::Phi { incomings, .. } = &s.kind {
                for (pb, v) in incomings {
                    check_use(*v, (bi, si), Some(*pb))?;
                }
            } else {
                for u in s.kind.uses() {
                    check_use(u, (bi, si), None)?;
                }
            }
        }
    }
    Ok(())
}

/// Brings a method into SSA form. Methods that already validate are
/// returned unchanged.
pub fn construct_ssa(method: &Method, names: &mut NameTable) -> Result<Method, SsaError> {
    if validate_ssa(method, names).is_ok() {
        return Ok(method.clone());
    }
    let mut m = method.clone();
    check_reachability(&m, names)?;
    check_definite_assignment(&m, names)?;

    // Existing phis must already be shaped per-edge or renaming cannot
    // assign operands.
    let preds0 = m.predecessors();
    for (bi, b) in m.blocks.iter().enumerate() {
        for s in &b.stmts {
            if let StmtKind::Phi { incomings, .. } = &s.kind {
                let mut labels: Vec<BlockIdx> = incomings.iter().map(|(p, _)| *p).collect();
                labels.sort_unstable();
                if labels != preds0[bi] {
                    return Err(SsaError::PhiLabelMismatch {
                        method: m.qname.clone(),
                        block: names.resolve(b.label).to_string(),
                    });
                }
            }
        }
    }

    // The entry block must have no predecessors so that parameter versions
    // reach loop headers through an explicit edge.
    if !preds0[0].is_empty() {
        let mut label = String::from("Lentry");
        let taken: HashSet<String> =
            m.blocks.iter().map(|b| names.resolve(b.label).to_string()).collect();
        let mut i = 0;
        while taken.contains(&label) {
            i += 1;
            label = format!("Lentry{i}");
        }
        let label = names.intern(&label);
        let goto = Statement { id: StmtId(u32::MAX), kind: StmtKind::Goto { target: 0 } };
        m.blocks.insert(0, BasicBlock { label, stmts: vec![goto] });
        for b in m.blocks.iter_mut().skip(1) {
            for s in &mut b.stmts {
                match &mut s.kind {
                    StmtKind::Goto { target } => *target += 1,
                    StmtKind::If { then_target, else_target, .. } => {
                        *then_target += 1;
                        *else_target += 1;
                    }
                    StmtKind::Phi { incomings, .. } => {
                        for (p, _) in incomings {
                            *p += 1;
                        }
                    }
                    _ => {}
                }
            }
        }
        // The old entry is now block 1; re-point the synthetic goto.
        m.blocks[0].stmts[0].kind = StmtKind::Goto { target: 1 };
    }

    let rpo = check_reachability(&m, names)?;
    let dom = compute_dominators(&m, &rpo);
    let ud = collect_use_def(&m);
    let live_in = liveness(&m, &ud);

    let mut rename_set: Vec<NameId> =
        ud.def_count.iter().filter(|(_, c)| **c > 1).map(|(v, _)| *v).collect();
    rename_set.sort_unstable();

    // Phi insertion at the iterated dominance frontier, pruned by liveness.
    let preds = m.predecessors();
    for &v in &rename_set {
        let def_blocks = ud.def_blocks.get(&v).cloned().unwrap_or_default();
        let mut work: Vec<BlockIdx> = def_blocks.clone();
        let mut in_frontier: HashSet<BlockIdx> = HashSet::new();
        while let Some(x) = work.pop() {
            for &y in &dom.frontier[x] {
                if in_frontier.insert(y) {
                    work.push(y);
                    let already = m.blocks[y].stmts.iter().any(
                        |s| matches!(s.kind, StmtKind::Phi { dst, .. } if dst == v),
                    );
                    if !already && live_in[y].contains(&v) {
                        let incomings = preds[y].iter().map(|&p| (p, v)).collect();
                        let phi = Statement {
                            id: StmtId(u32::MAX),
                            kind: StmtKind::Phi { dst: v, incomings },
                        };
                        m.blocks[y].stmts.insert(0, phi);
                    }
                }
            }
        }
    }

    // Renaming along the dominator tree.
    let mut taken: HashSet<String> = HashSet::new();
    for b in &m.blocks {
        for s in &b.stmts {
            for u in s.kind.uses() {
                taken.insert(names.resolve(u).to_string());
            }
            if let Some(d) = s.kind.def() {
                taken.insert(names.resolve(d).to_string());
            }
            if let StmtKind::Phi { incomings, .. } = &s.kind {
                for (_, v) in incomings {
                    taken.insert(names.resolve(*v).to_string());
                }
            }
        }
    }
    taken.extend(m.params.iter().map(|p| names.resolve(*p).to_string()));

    struct Renamer<'a> {
        names: &'a mut NameTable,
        taken: HashSet<String>,
        counters: HashMap<NameId, u32>,
        stacks: HashMap<NameId, Vec<NameId>>,
        rename: HashSet<NameId>,
    }
    impl Renamer<'_> {
        fn fresh(&mut self, v: NameId) -> NameId {
            let base = self.names.resolve(v).to_string();
            let c = self.counters.entry(v).or_insert(0);
            loop {
                *c += 1;
                let candidate = format!("{base}_{c}");
                if !self.taken.contains(&candidate) {
                    self.taken.insert(candidate.clone());
                    let id = self.names.intern(&candidate);
                    self.stacks.entry(v).or_default().push(id);
                    return id;
                }
            }
        }
        fn top(&self, v: NameId) -> NameId {
            *self
                .stacks
                .get(&v)
                .and_then(|s| s.last())
                .expect("definite assignment guarantees a reaching version")
        }
        fn subst(&self, v: &mut NameId) {
            if self.rename.contains(v) {
                *v = self.top(*v);
            }
        }
    }

    let mut r = Renamer {
        names,
        taken,
        counters: HashMap::new(),
        stacks: HashMap::new(),
        rename: rename_set.iter().copied().collect(),
    };
    // Parameters are the entry definitions; renamed parameters keep their
    // position but take version 1.
    for p in &mut m.params {
        if r.rename.contains(p) {
            let orig = *p;
            let fresh = r.fresh(orig);
            *p = fresh;
        }
    }

    fn rename_block(m: &mut Method, b: BlockIdx, dom: &DomInfo, r: &mut Renamer<'_>) {
        let mut pushed: Vec<NameId> = Vec::new();
        let nstmts = m.blocks[b].stmts.len();
        for si in 0..nstmts {
            let kind = &mut m.blocks[b].stmts[si].kind;
            match kind {
                StmtKind::Phi { dst, .. } => {
                    if r.rename.contains(dst) {
                        let orig = *dst;
                        *dst = r.fresh(orig);
                        pushed.push(orig);
                    }
                }
                StmtKind::Assign { dst, src } => {
                    r.subst(src);
                    rename_def(dst, r, &mut pushed);
                }
                StmtKind::Alloc { dst, .. } | StmtKind::Const { dst, .. } => {
                    rename_def(dst, r, &mut pushed);
                }
                StmtKind::Load { dst, base, .. } => {
                    r.subst(base);
                    rename_def(dst, r, &mut pushed);
                }
                StmtKind::Store { base, src, .. } => {
                    r.subst(base);
                    r.subst(src);
                }
                StmtKind::BinOp { dst, lhs, rhs } => {
                    r.subst(lhs);
                    r.subst(rhs);
                    rename_def(dst, r, &mut pushed);
                }
                StmtKind::Call { dst, args, .. } => {
                    for a in args.iter_mut() {
                        r.subst(a);
                    }
                    if let Some(d) = dst {
                        rename_def(d, r, &mut pushed);
                    }
                }
                StmtKind::VCall { dst, recv, args, .. } => {
                    r.subst(recv);
                    for a in args.iter_mut() {
                        r.subst(a);
                    }
                    if let Some(d) = dst {
                        rename_def(d, r, &mut pushed);
                    }
                }
                StmtKind::Return { value } => {
                    if let Some(v) = value {
                        r.subst(v);
                    }
                }
                StmtKind::If { cond, .. } => r.subst(cond),
                StmtKind::Goto { .. } => {}
            }
        }
        // Fill phi operands of successors for the edges leaving this block.
        for s in m.blocks[b].successors() {
            let nphis = m.blocks[s].stmts.len();
            for si in 0..nphis {
                if let StmtKind::Phi { incomings, .. } = &mut m.blocks[s].stmts[si].kind {
                    for (p, v) in incomings.iter_mut() {
                        if *p == b {
                            r.subst(v);
                        }
                    }
                } else {
                    break;
                }
            }
        }
        for c in dom.children[b].clone() {
            rename_block(m, c, dom, r);
        }
        for orig in pushed.into_iter().rev() {
            r.stacks.get_mut(&orig).unwrap().pop();
        }
    }

    fn rename_def(dst: &mut NameId, r: &mut Renamer<'_>, pushed: &mut Vec<NameId>) {
        if r.rename.contains(dst) {
            let orig = *dst;
            *dst = r.fresh(orig);
            pushed.push(orig);
        }
    }

    rename_block(&mut m, 0, &dom, &mut r);

    validate_ssa(&m, r.names)?;
    Ok(m)
}

/// Runs the SSA stage over a whole program: validate-only when the source
/// declared `#ssa`, construct otherwise. Statement ids are renumbered after
/// construction so they stay dense and source-ordered.
pub fn prepare_program(program: &mut Program) -> Result<(), SsaError> {
    if program.ssa_declared {
        for m in &program.methods {
            validate_ssa(m, &program.names)?;
        }
    } else {
        for i in 0..program.methods.len() {
            let m = program.methods[i].clone();
            program.methods[i] = construct_ssa(&m, &mut program.names)?;
        }
        program.ssa_declared = true;
        program.renumber_stmts();
    }
    program.rebuild_indexes();
    Ok(())
}
