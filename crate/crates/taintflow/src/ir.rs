//! Program model: classes, methods, basic blocks and three-address
//! statements, immutable once built.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::access_path::{NameId, NameTable};

/// Globally unique statement id, assigned in source order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StmtId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MethodId(pub u32);

/// Block index within its method; block 0 is the entry block.
pub type BlockIdx = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StmtKind {
    /// `x = new T;`
    Alloc { dst: NameId, class: NameId },
    /// `x = y;`
    Assign { dst: NameId, src: NameId },
    /// `x = "lit";`
    Const { dst: NameId, value: String },
    /// `x = y.g;`
    Load { dst: NameId, base: NameId, field: NameId },
    /// `x.g = y;`
    Store { base: NameId, field: NameId, src: NameId },
    /// `x = binop(y, z);`
    BinOp { dst: NameId, lhs: NameId, rhs: NameId },
    /// `[x =] call m(args);` — direct call by qualified name.
    Call { dst: Option<NameId>, callee: String, args: Vec<NameId> },
    /// `[x =] vcall y.m(args);` — virtual dispatch on the receiver.
    VCall { dst: Option<NameId>, recv: NameId, method: NameId, args: Vec<NameId> },
    /// `x = phi(L1: v1, ...);` — operands keyed by predecessor block.
    Phi { dst: NameId, incomings: Vec<(BlockIdx, NameId)> },
    /// `return [x];`
    Return { value: Option<NameId> },
    /// `goto L;`
    Goto { target: BlockIdx },
    /// `if c goto L1 else L2;`
    If { cond: NameId, then_target: BlockIdx, else_target: BlockIdx },
}

impl StmtKind {
    /// The variable this statement defines, if any.
    pub fn def(&self) -> Option<NameId> {
        match *self {
            StmtKind::Alloc { dst, .. }
            | StmtKind::Assign { dst, .. }
            | StmtKind::Const { dst, .. }
            | StmtKind::Load { dst, .. }
            | StmtKind::BinOp { dst, .. }
            | StmtKind::Phi { dst, .. } => Some(dst),
            StmtKind::Call { dst, .. } | StmtKind::VCall { dst, .. } => dst,
            _ => None,
        }
    }

    pub fn is_terminator(&self) -> bool {
        matches!(
            self,
            StmtKind::Return { .. } | StmtKind::Goto { .. } | StmtKind::If { .. }
        )
    }

    pub fn is_phi(&self) -> bool {
        matches!(self, StmtKind::Phi { .. })
    }

    pub fn is_call(&self) -> bool {
        matches!(self, StmtKind::Call { .. } | StmtKind::VCall { .. })
    }

    /// Call arguments in callee-parameter order: the receiver of a `vcall`
    /// is the first actual.
    pub fn actuals(&self) -> Vec<NameId> {
        match self {
            StmtKind::Call { args, .. } => args.clone(),
            StmtKind::VCall { recv, args, .. } => {
                let mut v = vec![*recv];
                v.extend_from_slice(args);
                v
            }
            _ => Vec::new(),
        }
    }

    /// Variables this statement reads. Phi operands are excluded; they are
    /// uses on the incoming edges, not in the block itself.
    pub fn uses(&self) -> Vec<NameId> {
        match self {
            StmtKind::Assign { src, .. } => vec![*src],
            StmtKind::Load { base, .. } => vec![*base],
            StmtKind::Store { base, src, .. } => vec![*base, *src],
            StmtKind::BinOp { lhs, rhs, .. } => vec![*lhs, *rhs],
            StmtKind::Call { args, .. } => args.clone(),
            StmtKind::VCall { recv, args, .. } => {
                let mut v = vec![*recv];
                v.extend_from_slice(args);
                v
            }
            StmtKind::Return { value } => value.iter().copied().collect(),
            StmtKind::If { cond, .. } => vec![*cond],
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Statement {
    pub id: StmtId,
    pub kind: StmtKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasicBlock {
    pub label: NameId,
    /// Statements in order; the last one is the block's terminator.
    pub stmts: Vec<Statement>,
}

impl BasicBlock {
    pub fn terminator(&self) -> &Statement {
        self.stmts.last().expect("block has a terminator")
    }

    /// Index of the first non-phi statement.
    pub fn first_non_phi(&self) -> usize {
        self.stmts.iter().position(|s| !s.kind.is_phi()).unwrap_or(0)
    }

    pub fn successors(&self) -> Vec<BlockIdx> {
        match self.terminator().kind {
            StmtKind::Goto { target } => vec![target],
            StmtKind::If { then_target, else_target, .. } => {
                if then_target == else_target {
                    vec![then_target]
                } else {
                    vec![then_target, else_target]
                }
            }
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Method {
    pub qname: String,
    /// Declaring class for `Type.name` methods; bare names are static.
    pub class: Option<NameId>,
    pub name: NameId,
    pub params: Vec<NameId>,
    pub blocks: Vec<BasicBlock>,
}

impl Method {
    pub fn is_instance(&self) -> bool {
        self.class.is_some()
    }

    pub fn param_index(&self, var: NameId) -> Option<usize> {
        self.params.iter().position(|&p| p == var)
    }

    /// Predecessor blocks, sorted, one entry per predecessor even when a
    /// conditional branches to the same target twice.
    pub fn predecessors(&self) -> Vec<Vec<BlockIdx>> {
        let mut preds = vec![Vec::new(); self.blocks.len()];
        for (i, b) in self.blocks.iter().enumerate() {
            for s in b.successors() {
                if !preds[s].contains(&i) {
                    preds[s].push(i);
                }
            }
        }
        for p in &mut preds {
            p.sort_unstable();
        }
        preds
    }

    pub fn return_stmts(&self) -> Vec<(BlockIdx, usize)> {
        let mut out = Vec::new();
        for (bi, b) in self.blocks.iter().enumerate() {
            for (si, s) in b.stmts.iter().enumerate() {
                if matches!(s.kind, StmtKind::Return { .. }) {
                    out.push((bi, si));
                }
            }
        }
        out
    }

    /// Map from variable to its defining (block, position). Parameters have
    /// no defining statement and are absent.
    pub fn def_map(&self) -> HashMap<NameId, (BlockIdx, usize)> {
        let mut map = HashMap::new();
        for (bi, b) in self.blocks.iter().enumerate() {
            for (si, s) in b.stmts.iter().enumerate() {
                if let Some(d) = s.kind.def() {
                    map.insert(d, (bi, si));
                }
            }
        }
        map
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassDecl {
    pub name: NameId,
    pub superclass: Option<NameId>,
    pub fields: Vec<(NameId, bool)>,
}

#[derive(Debug)]
pub struct Program {
    pub names: NameTable,
    /// Classes in declaration order.
    pub classes: Vec<ClassDecl>,
    pub methods: Vec<Method>,
    /// True when the source carried a `#ssa` directive.
    pub ssa_declared: bool,
    class_index: HashMap<NameId, usize>,
    method_index: HashMap<String, MethodId>,
    stmt_index: HashMap<StmtId, (MethodId, BlockIdx, usize)>,
    array_fields: Vec<NameId>,
}

impl Program {
    pub fn new(
        names: NameTable,
        classes: Vec<ClassDecl>,
        methods: Vec<Method>,
        ssa_declared: bool,
    ) -> Program {
        let mut p = Program {
            names,
            classes,
            methods,
            ssa_declared,
            class_index: HashMap::new(),
            method_index: HashMap::new(),
            stmt_index: HashMap::new(),
            array_fields: Vec::new(),
        };
        p.rebuild_indexes();
        p
    }

    /// Rebuilds lookup tables; call after any structural change.
    pub fn rebuild_indexes(&mut self) {
        self.class_index = self
            .classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.name, i))
            .collect();
        self.method_index = self
            .methods
            .iter()
            .enumerate()
            .map(|(i, m)| (m.qname.clone(), MethodId(i as u32)))
            .collect();
        self.stmt_index.clear();
        for (mi, m) in self.methods.iter().enumerate() {
            for (bi, b) in m.blocks.iter().enumerate() {
                for (si, s) in b.stmts.iter().enumerate() {
                    self.stmt_index.insert(s.id, (MethodId(mi as u32), bi, si));
                }
            }
        }
        self.array_fields = self
            .classes
            .iter()
            .flat_map(|c| c.fields.iter().filter(|f| f.1).map(|f| f.0))
            .collect();
        self.array_fields.sort_unstable();
        self.array_fields.dedup();
    }

    /// Renumbers all statement ids in (method, block, position) order.
    pub fn renumber_stmts(&mut self) {
        let mut next = 0u32;
        for m in &mut self.methods {
            for b in &mut m.blocks {
                for s in &mut b.stmts {
                    s.id = StmtId(next);
                    next += 1;
                }
            }
        }
        self.rebuild_indexes();
    }

    pub fn class(&self, name: NameId) -> Option<&ClassDecl> {
        self.class_index.get(&name).map(|&i| &self.classes[i])
    }

    pub fn method(&self, id: MethodId) -> &Method {
        &self.methods[id.0 as usize]
    }

    pub fn method_by_qname(&self, qname: &str) -> Option<MethodId> {
        self.method_index.get(qname).copied()
    }

    pub fn locate(&self, id: StmtId) -> Option<(MethodId, BlockIdx, usize)> {
        self.stmt_index.get(&id).copied()
    }

    pub fn stmt(&self, id: StmtId) -> &Statement {
        let (m, b, s) = self.locate(id).expect("known statement id");
        &self.methods[m.0 as usize].blocks[b].stmts[s]
    }

    /// Field identity is class-erased; a field counts as an array if any
    /// class declares it with `[]`.
    pub fn is_array_field(&self, field: NameId) -> bool {
        self.array_fields.binary_search(&field).is_ok()
    }

    /// Whether any class in the hierarchy declares `field`.
    pub fn field_declared(&self, field: NameId) -> bool {
        self.classes
            .iter()
            .any(|c| c.fields.iter().any(|(f, _)| *f == field))
    }

    /// Nearest declaration of method `name` starting at class `class` and
    /// walking up the superclass chain.
    pub fn dispatch(&self, class: NameId, name: NameId, arity: usize) -> Option<MethodId> {
        let mut cur = Some(class);
        while let Some(c) = cur {
            let cname = self.names.resolve(c);
            let mname = self.names.resolve(name);
            let qname = format!("{cname}.{mname}");
            if let Some(id) = self.method_by_qname(&qname) {
                if self.method(id).params.len() == arity {
                    return Some(id);
                }
            }
            cur = self.class(c).and_then(|cd| cd.superclass);
        }
        None
    }

    pub fn render_stmt(&self, s: &Statement, method: &Method) -> String {
        render_stmt_kind(&s.kind, &self.names, method)
    }
}

fn render_stmt_kind(kind: &StmtKind, names: &NameTable, method: &Method) -> String {
    let n = |id: NameId| names.resolve(id).to_string();
    match kind {
        StmtKind::Alloc { dst, class } => format!("{} = new {};", n(*dst), n(*class)),
        StmtKind::Assign { dst, src } => format!("{} = {};", n(*dst), n(*src)),
        StmtKind::Const { dst, value } => format!("{} = \"{}\";", n(*dst), value),
        StmtKind::Load { dst, base, field } => {
            format!("{} = {}.{};", n(*dst), n(*base), n(*field))
        }
        StmtKind::Store { base, field, src } => {
            format!("{}.{} = {};", n(*base), n(*field), n(*src))
        }
        StmtKind::BinOp { dst, lhs, rhs } => {
            format!("{} = binop({}, {});", n(*dst), n(*lhs), n(*rhs))
        }
        StmtKind::Call { dst, callee, args } => {
            let args = args.iter().map(|a| n(*a)).collect::<Vec<_>>().join(", ");
            match dst {
                Some(d) => format!("{} = call {}({});", n(*d), callee, args),
                None => format!("call {}({});", callee, args),
            }
        }
        StmtKind::VCall { dst, recv, method: m, args } => {
            let args = args.iter().map(|a| n(*a)).collect::<Vec<_>>().join(", ");
            match dst {
                Some(d) => format!("{} = vcall {}.{}({});", n(*d), n(*recv), n(*m), args),
                None => format!("vcall {}.{}({});", n(*recv), n(*m), args),
            }
        }
        StmtKind::Phi { dst, incomings } => {
            let ops = incomings
                .iter()
                .map(|(b, v)| format!("{}: {}", n(method.blocks[*b].label), n(*v)))
                .collect::<Vec<_>>()
                .join(", ");
            format!("{} = phi({});", n(*dst), ops)
        }
        StmtKind::Return { value } => match value {
            Some(v) => format!("return {};", n(*v)),
            None => "return;".to_string(),
        },
        StmtKind::Goto { target } => format!("goto {};", n(method.blocks[*target].label)),
        StmtKind::If { cond, then_target, else_target } => format!(
            "if {} goto {} else {};",
            n(*cond),
            n(method.blocks[*then_target].label),
            n(method.blocks[*else_target].label)
        ),
    }
}

/// Renders a program back to the textual IR in canonical form.
pub fn pretty(program: &Program) -> String {
    let mut out = String::new();
    if program.ssa_declared {
        out.push_str("#ssa\n\n");
    }
    for c in &program.classes {
        let name = program.names.resolve(c.name);
        match c.superclass {
            Some(s) => {
                let _ = writeln!(out, "type {} extends {} {{", name, program.names.resolve(s));
            }
            None => {
                let _ = writeln!(out, "type {} {{", name);
            }
        }
        for (f, is_array) in &c.fields {
            let suffix = if *is_array { "[]" } else { "" };
            let _ = writeln!(out, "  field {}{};", program.names.resolve(*f), suffix);
        }
        out.push_str("}\n\n");
    }
    for m in &program.methods {
        let params = m
            .params
            .iter()
            .map(|p| program.names.resolve(*p))
            .collect::<Vec<_>>()
            .join(", ");
        let _ = writeln!(out, "method {}({}) {{", m.qname, params);
        for b in &m.blocks {
            let _ = writeln!(out, "{}:", program.names.resolve(b.label));
            for s in &b.stmts {
                let _ = writeln!(out, "  {}", render_stmt_kind(&s.kind, &program.names, m));
            }
        }
        out.push_str("}\n\n");
    }
    out
}
