//! Backward intra-procedural flow functions over access paths, including
//! the on-demand reification of load chains.
//!
//! Every function maps one incoming access path to at most two outgoing
//! facts; the solver drives these per statement while tabulating.

use std::collections::{HashMap, HashSet};

use smallvec::SmallVec;
use thiserror::Error;

use crate::access_path::{ApId, Fact, FieldSeq, Interner, KConfig, NameId};
use crate::ir::{BlockIdx, Method, Program, Statement, StmtKind};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FlowError {
    #[error("statement is handled by the solver, not the transfer function")]
    UnreachableCase,
    #[error("block is not a predecessor of this phi")]
    UnknownPredecessor,
}

/// Which transfer rule produced a result; the numbered ones are the
/// alloc/assign/source/load/store cases, the rest are artifact rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowCase {
    Alloc,
    Assign,
    Source,
    Load,
    Store,
    ConstLit,
    BinOp,
    PhiEdge,
    Sanitize,
    Identity,
}

impl FlowCase {
    pub fn code(&self) -> &'static str {
        match self {
            FlowCase::Alloc => "1",
            FlowCase::Assign => "2",
            FlowCase::Source => "3",
            FlowCase::Load => "4",
            FlowCase::Store => "5",
            FlowCase::ConstLit => "const",
            FlowCase::BinOp => "binop",
            FlowCase::PhiEdge => "phi",
            FlowCase::Sanitize => "san",
            FlowCase::Identity => "id",
        }
    }
}

/// Outgoing facts plus the rule that produced them; at most two facts for
/// the statement-level cases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowResult {
    pub facts: SmallVec<[Fact; 2]>,
    pub case: FlowCase,
}

impl FlowResult {
    fn empty(case: FlowCase) -> FlowResult {
        FlowResult { facts: SmallVec::new(), case }
    }

    fn one(f: Fact, case: FlowCase) -> FlowResult {
        let mut facts = SmallVec::new();
        facts.push(f);
        FlowResult { facts, case }
    }

    fn identity(incoming: ApId) -> FlowResult {
        FlowResult::one(Fact::Ap(incoming), FlowCase::Identity)
    }
}

/// Shared inputs for the transfer functions of one method.
pub struct FlowCtx<'a> {
    pub program: &'a Program,
    pub method: &'a Method,
    pub defs: &'a HashMap<NameId, (BlockIdx, usize)>,
    pub interner: &'a Interner,
    pub k: KConfig,
}

impl<'a> FlowCtx<'a> {
    pub fn new(
        program: &'a Program,
        method: &'a Method,
        defs: &'a HashMap<NameId, (BlockIdx, usize)>,
        interner: &'a Interner,
        k: KConfig,
    ) -> Self {
        FlowCtx { program, method, defs, interner, k }
    }

    fn def_kind(&self, var: NameId) -> Option<&StmtKind> {
        self.defs.get(&var).map(|&(b, s)| &self.method.blocks[b].stmts[s].kind)
    }
}

/// Recovers the full access path touched by a load or store: while the base
/// variable is itself defined by a load, substitute the loaded path and keep
/// following definitions. Parameters, phis and every other definition stop
/// the recursion. The result is not k-checked; callers apply the bound.
pub fn reify(var: NameId, field: NameId, ctx: &FlowCtx) -> (NameId, FieldSeq) {
    let mut fields: FieldSeq = SmallVec::new();
    fields.push(field);
    let mut base = var;
    let mut seen: HashSet<NameId> = HashSet::new();
    while seen.insert(base) {
        match ctx.def_kind(base) {
            Some(StmtKind::Load { base: y, field: g, .. }) => {
                fields.insert(0, *g);
                base = *y;
            }
            _ => break,
        }
    }
    (base, fields)
}

/// The statement-level backward transfer function. `is_source_call` marks a
/// call site designated as a taint source for the active label; other calls
/// and returns are interprocedural and belong to the solver.
pub fn flow(
    stmt: &Statement,
    incoming: ApId,
    ctx: &FlowCtx,
    is_source_call: bool,
) -> Result<FlowResult, FlowError> {
    let (b, fields) = ctx.interner.parts(incoming);
    let result = match &stmt.kind {
        StmtKind::Alloc { dst, .. } => {
            if *dst == b {
                FlowResult::empty(FlowCase::Alloc)
            } else {
                FlowResult::identity(incoming)
            }
        }
        StmtKind::Assign { dst, src } => {
            if *dst == b {
                let ap = ctx.interner.make(*src, &fields, ctx.k).expect("length preserved");
                FlowResult::one(Fact::Ap(ap), FlowCase::Assign)
            } else {
                FlowResult::identity(incoming)
            }
        }
        StmtKind::Const { dst, .. } => {
            if *dst == b {
                FlowResult::empty(FlowCase::ConstLit)
            } else {
                FlowResult::identity(incoming)
            }
        }
        StmtKind::Load { dst, base, field } => {
            if *dst == b {
                let (z, loaded) = reify(*base, *field, ctx);
                match ctx.interner.prepend(incoming, z, &loaded, ctx.k) {
                    Ok(ap) => FlowResult::one(Fact::Ap(ap), FlowCase::Load),
                    Err(_) => FlowResult::empty(FlowCase::Load),
                }
            } else {
                FlowResult::identity(incoming)
            }
        }
        StmtKind::Store { base, field, src } => {
            let (z, stored) = reify(*base, *field, ctx);
            if z == b {
                if let Some(suffix) = ctx.interner.strip_prefix(incoming, &stored) {
                    let transferred =
                        ctx.interner.make(*src, &suffix, ctx.k).expect("suffix is shorter");
                    let arrayed = stored.iter().any(|g| ctx.program.is_array_field(*g));
                    let mut facts: SmallVec<[Fact; 2]> = SmallVec::new();
                    facts.push(Fact::Ap(transferred));
                    if arrayed {
                        // Array-insensitive: the store may hit a different
                        // cell, so the incoming path survives as well.
                        facts.push(Fact::Ap(incoming));
                    }
                    FlowResult { facts, case: FlowCase::Store }
                } else {
                    FlowResult::identity(incoming)
                }
            } else {
                FlowResult::identity(incoming)
            }
        }
        StmtKind::BinOp { dst, lhs, rhs } => {
            if *dst == b {
                if fields.is_empty() {
                    let mut facts: SmallVec<[Fact; 2]> = SmallVec::new();
                    facts.push(Fact::Ap(ctx.interner.var(*lhs)));
                    let r = Fact::Ap(ctx.interner.var(*rhs));
                    if facts[0] != r {
                        facts.push(r);
                    }
                    FlowResult { facts, case: FlowCase::BinOp }
                } else {
                    // Primitive results carry no fields.
                    FlowResult::empty(FlowCase::BinOp)
                }
            } else {
                FlowResult::identity(incoming)
            }
        }
        StmtKind::Call { dst, .. } | StmtKind::VCall { dst, .. } => {
            if !is_source_call {
                return Err(FlowError::UnreachableCase);
            }
            if *dst == Some(b) {
                // The source taints the whole returned value, fields
                // included, so any path rooted at it maps to the null fact.
                FlowResult::one(Fact::Zero, FlowCase::Source)
            } else {
                FlowResult::identity(incoming)
            }
        }
        StmtKind::Goto { .. } | StmtKind::If { .. } => FlowResult::identity(incoming),
        StmtKind::Phi { .. } | StmtKind::Return { .. } => return Err(FlowError::UnreachableCase),
    };
    debug_assert!(result.facts.len() <= 2);
    Ok(result)
}

/// Edge-sensitive backward flow through a phi: the target's fact moves to
/// the operand of the given predecessor edge, so flows are not merged until
/// after the phi has been processed.
pub fn flow_phi(
    stmt: &Statement,
    incoming: ApId,
    pred_block: BlockIdx,
    ctx: &FlowCtx,
) -> Result<FlowResult, FlowError> {
    let StmtKind::Phi { dst, incomings } = &stmt.kind else {
        return Err(FlowError::UnreachableCase);
    };
    let Some((_, operand)) = incomings.iter().find(|(p, _)| *p == pred_block) else {
        return Err(FlowError::UnknownPredecessor);
    };
    let (b, fields) = ctx.interner.parts(incoming);
    if *dst == b {
        let ap = ctx.interner.make(*operand, &fields, ctx.k).expect("length preserved");
        Ok(FlowResult::one(Fact::Ap(ap), FlowCase::PhiEdge))
    } else {
        Ok(FlowResult::identity(incoming))
    }
}

/// Kill for a configured sanitizer call: facts rooted at the sanitized
/// return value die, fields included; everything else passes through.
pub fn flow_sanitizer(stmt: &Statement, incoming: ApId, ctx: &FlowCtx) -> FlowResult {
    let dst = match &stmt.kind {
        StmtKind::Call { dst, .. } | StmtKind::VCall { dst, .. } => *dst,
        _ => None,
    };
    let b = ctx.interner.base(incoming);
    if dst == Some(b) {
        FlowResult::empty(FlowCase::Sanitize)
    } else {
        FlowResult::identity(incoming)
    }
}

/// True when `stmt` provably applies the identity function to facts rooted
/// at `base`: no definition or reified store target matches. Calls and
/// returns are never claimed identity here; the solver decides those.
pub fn is_identity_for(stmt: &Statement, base: NameId, ctx: &FlowCtx) -> bool {
    match &stmt.kind {
        StmtKind::Alloc { dst, .. }
        | StmtKind::Assign { dst, .. }
        | StmtKind::Const { dst, .. }
        | StmtKind::Load { dst, .. }
        | StmtKind::BinOp { dst, .. } => *dst != base,
        StmtKind::Store { base: x, field, .. } => reify(*x, *field, ctx).0 != base,
        StmtKind::Goto { .. } | StmtKind::If { .. } => true,
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::Program;
    use crate::parser::parse_program;
    use proptest::prelude::*;
    use proptest::test_runner::TestCaseError;

    struct Harness {
        program: Program,
        interner: Interner,
    }

    impl Harness {
        fn new(src: &str) -> Harness {
            let mut program = parse_program(src).unwrap();
            crate::ssa::prepare_program(&mut program).unwrap();
            Harness { program, interner: Interner::new() }
        }

        fn with_ctx<R>(&self, qname: &str, f: impl FnOnce(&FlowCtx<'_>) -> R) -> R {
            let m = self.program.method(self.program.method_by_qname(qname).unwrap());
            let defs = m.def_map();
            let ctx = FlowCtx::new(&self.program, m, &defs, &self.interner, KConfig::default());
            f(&ctx)
        }

        fn ap(&self, path: &str) -> ApId {
            let mut parts = path.split('.');
            let base = self.program.names.get(parts.next().unwrap()).unwrap();
            let fields: Vec<NameId> = parts.map(|f| self.program.names.get(f).unwrap()).collect();
            self.interner.make(base, &fields, KConfig::default()).unwrap()
        }

        fn stmt(&self, qname: &str, pos: usize) -> &Statement {
            let m = self.program.method(self.program.method_by_qname(qname).unwrap());
            &m.blocks[0].stmts[pos]
        }

        fn render(&self, facts: &[Fact]) -> Vec<String> {
            let mut v: Vec<String> = facts
                .iter()
                .map(|f| self.interner.render_fact(*f, &self.program.names))
                .collect();
            v.sort();
            v
        }
    }

    const METHOD: &str = r#"
type T { field f; field g; field h; field arr[]; }
method m(this, y, z, v) {
L0:
  x = new T;
  a = y;
  c = "lit";
  l = y.g;
  y.g = z;
  r = binop(y, z);
  s = call getTainted();
  tmp1 = y.f;
  tmp2 = tmp1.g;
  tmp2.h = v;
  q = tmp2.h;
  return;
}
"#;

    #[test]
    fn alloc_kills_matching_base() {
        let h = Harness::new(METHOD);
        h.with_ctx("m", |ctx| {
            let out = flow(h.stmt("m", 0), h.ap("x.f"), ctx, false).unwrap();
            assert_eq!(out.case, FlowCase::Alloc);
            assert!(out.facts.is_empty());
            let id = flow(h.stmt("m", 0), h.ap("z.f"), ctx, false).unwrap();
            assert_eq!(h.render(&id.facts), vec!["z.f"]);
        });
    }

    #[test]
    fn assign_replaces_base() {
        let h = Harness::new(METHOD);
        h.with_ctx("m", |ctx| {
            let out = flow(h.stmt("m", 1), h.ap("a.f.g"), ctx, false).unwrap();
            assert_eq!(h.render(&out.facts), vec!["y.f.g"]);
            let id = flow(h.stmt("m", 1), h.ap("z.f"), ctx, false).unwrap();
            assert_eq!(h.render(&id.facts), vec!["z.f"]);
            assert_eq!(id.case, FlowCase::Identity);
        });
    }

    #[test]
    fn const_is_untainted() {
        let h = Harness::new(METHOD);
        h.with_ctx("m", |ctx| {
            let out = flow(h.stmt("m", 2), h.ap("c"), ctx, false).unwrap();
            assert!(out.facts.is_empty());
        });
    }

    #[test]
    fn load_prepends_reified_path() {
        let h = Harness::new(METHOD);
        h.with_ctx("m", |ctx| {
            let out = flow(h.stmt("m", 3), h.ap("l"), ctx, false).unwrap();
            assert_eq!(h.render(&out.facts), vec!["y.g"]);
        });
    }

    #[test]
    fn load_overflowing_k_drops_fact() {
        let src = r#"
type T { field f1; field f2; field f3; field f4; field f5; field f6; }
method m(y) {
L0:
  t1 = y.f1;
  t2 = t1.f2;
  t3 = t2.f3;
  t4 = t3.f4;
  t5 = t4.f5;
  t6 = t5.f6;
  return;
}
"#;
        let h = Harness::new(src);
        h.with_ctx("m", |ctx| {
            // Reified length is 6; with n=0 and k=5 the fact dies.
            let out = flow(h.stmt("m", 5), h.ap("t6"), ctx, false).unwrap();
            assert_eq!(out.case, FlowCase::Load);
            assert!(out.facts.is_empty());
        });
    }

    #[test]
    fn store_transfers_and_strips_prefix() {
        let h = Harness::new(METHOD);
        h.with_ctx("m", |ctx| {
            let out = flow(h.stmt("m", 4), h.ap("y.g"), ctx, false).unwrap();
            assert_eq!(h.render(&out.facts), vec!["z"]);
            let deeper = flow(h.stmt("m", 4), h.ap("y.g.h"), ctx, false).unwrap();
            assert_eq!(h.render(&deeper.facts), vec!["z.h"]);
            let unrelated = flow(h.stmt("m", 4), h.ap("y.f"), ctx, false).unwrap();
            assert_eq!(h.render(&unrelated.facts), vec!["y.f"]);
            assert_eq!(unrelated.case, FlowCase::Identity);
        });
    }

    #[test]
    fn array_store_preserves_incoming() {
        let src = r#"
type T { field f; field arr[]; }
method m(a, y) {
L0:
  a.arr = y;
  return;
}
"#;
        let h = Harness::new(src);
        h.with_ctx("m", |ctx| {
            let out = flow(h.stmt("m", 0), h.ap("a.arr.f"), ctx, false).unwrap();
            assert_eq!(out.facts.len(), 2);
            assert_eq!(h.render(&out.facts), vec!["a.arr.f", "y.f"]);
        });
    }

    #[test]
    fn binop_taints_both_operands() {
        let h = Harness::new(METHOD);
        h.with_ctx("m", |ctx| {
            let out = flow(h.stmt("m", 5), h.ap("r"), ctx, false).unwrap();
            assert_eq!(h.render(&out.facts), vec!["y", "z"]);
            // Field-extended facts on a primitive result die.
            let fielded = flow(h.stmt("m", 5), h.ap("r.f"), ctx, false).unwrap();
            assert!(fielded.facts.is_empty());
        });
    }

    #[test]
    fn source_call_maps_to_zero() {
        let h = Harness::new(METHOD);
        h.with_ctx("m", |ctx| {
            let out = flow(h.stmt("m", 6), h.ap("s"), ctx, true).unwrap();
            assert_eq!(out.facts.as_slice(), &[Fact::Zero]);
            let fielded = flow(h.stmt("m", 6), h.ap("s.f"), ctx, true).unwrap();
            assert_eq!(fielded.facts.as_slice(), &[Fact::Zero]);
            let other = flow(h.stmt("m", 6), h.ap("y.f"), ctx, true).unwrap();
            assert_eq!(h.render(&other.facts), vec!["y.f"]);
        });
    }

    #[test]
    fn non_source_call_is_unreachable_case() {
        let h = Harness::new(METHOD);
        h.with_ctx("m", |ctx| {
            let err = flow(h.stmt("m", 6), h.ap("s"), ctx, false).unwrap_err();
            assert_eq!(err, FlowError::UnreachableCase);
        });
    }

    #[test]
    fn reify_follows_load_chains() {
        let h = Harness::new(METHOD);
        h.with_ctx("m", |ctx| {
            // tmp2.h with tmp2 = tmp1.g, tmp1 = y.f reifies to y.f.g.h.
            let tmp2 = h.program.names.get("tmp2").unwrap();
            let hh = h.program.names.get("h").unwrap();
            let (base, fields) = reify(tmp2, hh, ctx);
            assert_eq!(h.program.names.resolve(base), "y");
            let fnames: Vec<&str> = fields.iter().map(|f| h.program.names.resolve(*f)).collect();
            assert_eq!(fnames, vec!["f", "g", "h"]);

            // A parameter stops reification immediately.
            let v = h.program.names.get("v").unwrap();
            let g = h.program.names.get("g").unwrap();
            let (base, fields) = reify(v, g, ctx);
            assert_eq!(base, v);
            assert_eq!(fields.len(), 1);

            // Reified results are fixpoints: the base is not load-defined.
            assert!(!matches!(ctx.def_kind(base), Some(StmtKind::Load { .. })));
        });
    }

    #[test]
    fn reify_stops_at_phi() {
        let src = r#"
type T { field f; field h; }
method m(a, b, c) {
L0:
  if c goto L1 else L2;
L1:
  w = a.f;
  goto L3;
L2:
  w = b.f;
  goto L3;
L3:
  q = w.h;
  return;
}
"#;
        // After SSA, w is a phi at L3; reification must stop there.
        let h = Harness::new(src);
        h.with_ctx("m", |ctx| {
            let m = ctx.method;
            let phi_dst = m
                .blocks
                .iter()
                .flat_map(|b| b.stmts.iter())
                .find_map(|s| match &s.kind {
                    StmtKind::Phi { dst, .. } => Some(*dst),
                    _ => None,
                })
                .expect("ssa construction inserted a phi");
            let hh = h.program.names.get("h").unwrap();
            let (base, fields) = reify(phi_dst, hh, ctx);
            assert_eq!(base, phi_dst);
            assert_eq!(fields.as_slice(), &[hh]);
        });
    }

    #[test]
    fn phi_selects_operand_per_edge() {
        let src = r#"
method m(a, b, c) {
L0:
  if c goto L1 else L2;
L1:
  x = a;
  goto L3;
L2:
  x = b;
  goto L3;
L3:
  y = x;
  return y;
}
"#;
        let h = Harness::new(src);
        h.with_ctx("m", |ctx| {
            let m = ctx.method;
            let (bi, phi) = m
                .blocks
                .iter()
                .enumerate()
                .find_map(|(i, b)| b.stmts.first().filter(|s| s.kind.is_phi()).map(|s| (i, s)))
                .unwrap();
            let preds = m.predecessors();
            let dst = phi.kind.def().unwrap();
            let fact = h.interner.var(dst);

            let out = flow_phi(phi, fact, preds[bi][0], ctx).unwrap();
            assert_eq!(out.facts.len(), 1);
            assert_eq!(out.case, FlowCase::PhiEdge);
            let out2 = flow_phi(phi, fact, preds[bi][1], ctx).unwrap();
            assert_ne!(out.facts, out2.facts, "operands differ per edge");

            // Unrelated facts pass unchanged.
            let other = h.ap("b");
            let id = flow_phi(phi, other, preds[bi][0], ctx).unwrap();
            assert_eq!(id.facts.as_slice(), &[Fact::Ap(other)]);

            // A non-predecessor label is rejected.
            let err = flow_phi(phi, fact, 99, ctx).unwrap_err();
            assert_eq!(err, FlowError::UnknownPredecessor);
        });
    }

    #[test]
    fn sanitizer_kills_whole_value() {
        let src = "method m(y) { L0: x = call clean(y); return; }";
        let h = Harness::new(src);
        h.with_ctx("m", |ctx| {
            let s = h.stmt("m", 0);
            assert!(flow_sanitizer(s, h.ap("x"), ctx).facts.is_empty());
            let id = flow_sanitizer(s, h.ap("y"), ctx);
            assert_eq!(h.render(&id.facts), vec!["y"]);
        });
    }

    proptest! {
        /// Facts whose reified base does not match the statement's defined
        /// or stored base always pass through unchanged.
        #[test]
        fn identity_dominance(stmt_pick in 0usize..6, base_pick in 0usize..3,
                              nfields in 0usize..3) {
            let h = Harness::new(METHOD);
            h.with_ctx("m", |ctx| -> Result<(), TestCaseError> {
                let bases = ["y", "z", "v"];
                let base = h.program.names.get(bases[base_pick]).unwrap();
                let fnames = ["f", "g", "h"];
                let fields: Vec<NameId> = (0..nfields)
                    .map(|i| h.program.names.get(fnames[i]).unwrap())
                    .collect();
                let ap = h.interner.make(base, &fields, KConfig::default()).unwrap();
                let stmt = h.stmt("m", stmt_pick);
                let related = match &stmt.kind {
                    StmtKind::Store { base: x, field: g, .. } => reify(*x, *g, ctx).0 == base,
                    k => k.def() == Some(base),
                };
                prop_assume!(!related);
                let out = flow(stmt, ap, ctx, false).unwrap();
                prop_assert_eq!(out.facts.as_slice(), &[Fact::Ap(ap)]);
                prop_assert!(is_identity_for(stmt, base, ctx));
                Ok(())
            })?;
        }

        /// Applying a transfer function fact-by-fact and unioning equals any
        /// batched application: distributivity over union.
        #[test]
        fn flow_is_distributive(pa in 0usize..3, pb in 0usize..3, s in 0usize..6) {
            let h = Harness::new(METHOD);
            h.with_ctx("m", |ctx| -> Result<(), TestCaseError> {
                let bases = ["y", "z", "x"];
                let a = h.ap(bases[pa]);
                let b = h.ap(bases[pb]);
                let stmt = h.stmt("m", s);
                let mut set_apply: Vec<Fact> = Vec::new();
                for f in [a, b] {
                    set_apply.extend(flow(stmt, f, ctx, false).unwrap().facts);
                }
                set_apply.sort();
                set_apply.dedup();
                let mut pairwise: Vec<Fact> = flow(stmt, a, ctx, false)
                    .unwrap()
                    .facts
                    .into_iter()
                    .chain(flow(stmt, b, ctx, false).unwrap().facts)
                    .collect();
                pairwise.sort();
                pairwise.dedup();
                prop_assert_eq!(set_apply, pairwise);
                Ok(())
            })?;
        }

        /// Statement-level flows never exceed two facts.
        #[test]
        fn h_sparse_bound(s in 0usize..11, base_pick in 0usize..4, nfields in 0usize..2) {
            let h = Harness::new(METHOD);
            h.with_ctx("m", |ctx| -> Result<(), TestCaseError> {
                let bases = ["y", "z", "x", "tmp2"];
                let base = h.program.names.get(bases[base_pick]).unwrap();
                let fields: Vec<NameId> =
                    (0..nfields).map(|_| h.program.names.get("f").unwrap()).collect();
                let ap = h.interner.make(base, &fields, KConfig::default()).unwrap();
                let stmt = h.stmt("m", s);
                if let Ok(out) = flow(stmt, ap, ctx, true) {
                    prop_assert!(out.facts.len() <= 2);
                }
                Ok(())
            })?;
        }
    }
}
