//! Recursive-descent parser for the textual three-address IR.
//!
//! Grammar (newline-insensitive, `//` comments):
//!
//! ```text
//! program   := decl*
//! decl      := typedecl | methdecl | "#ssa"
//! typedecl  := "type" NAME ("extends" NAME)? "{" ("field" NAME "[]"? ";")* "}"
//! methdecl  := "method" QNAME "(" (VAR ("," VAR)*)? ")" "{" block+ "}"
//! block     := LABEL ":" stmt* term
//! term      := "goto" LABEL ";" | "if" VAR "goto" LABEL "else" LABEL ";" | "return" VAR? ";"
//! ```

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::access_path::{NameId, NameTable};
use crate::ir::{BasicBlock, ClassDecl, Method, Program, Statement, StmtId, StmtKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Loc {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("{loc}: {msg}")]
    Syntax { loc: Loc, msg: String },
    #[error("{loc}: {msg}")]
    Resolve { loc: Loc, msg: String },
}

impl ParseError {
    fn syntax(loc: Loc, msg: impl Into<String>) -> ParseError {
        ParseError::Syntax { loc, msg: msg.into() }
    }

    fn resolve(loc: Loc, msg: impl Into<String>) -> ParseError {
        ParseError::Resolve { loc, msg: msg.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Str(String),
    Punct(char),
    Brackets, // "[]"
    SsaDirective,
    Eof,
}

const KEYWORDS: &[&str] = &[
    "type", "extends", "field", "method", "new", "binop", "call", "vcall", "phi", "goto", "if",
    "else", "return",
];

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src: src.as_bytes(), pos: 0, line: 1, col: 1 }
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.src.get(self.pos).copied()?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn peek2(&self) -> Option<u8> {
        self.src.get(self.pos + 1).copied()
    }

    fn loc(&self) -> Loc {
        Loc { line: self.line, col: self.col }
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.peek() {
                Some(c) if c.is_ascii_whitespace() => {
                    self.bump();
                }
                Some(b'/') if self.peek2() == Some(b'/') => {
                    while let Some(c) = self.peek() {
                        if c == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                _ => return,
            }
        }
    }

    fn next_token(&mut self) -> Result<(Tok, Loc), ParseError> {
        self.skip_trivia();
        let loc = self.loc();
        let Some(c) = self.peek() else {
            return Ok((Tok::Eof, loc));
        };
        match c {
            b'#' => {
                self.bump();
                let word = self.take_ident();
                if word == "ssa" {
                    Ok((Tok::SsaDirective, loc))
                } else {
                    Err(ParseError::syntax(loc, format!("unknown directive #{word}")))
                }
            }
            b'"' => {
                self.bump();
                let mut s = String::new();
                loop {
                    match self.bump() {
                        Some(b'"') => break,
                        Some(b'\n') | None => {
                            return Err(ParseError::syntax(loc, "unterminated string literal"))
                        }
                        Some(ch) => s.push(ch as char),
                    }
                }
                Ok((Tok::Str(s), loc))
            }
            b'[' => {
                self.bump();
                if self.peek() == Some(b']') {
                    self.bump();
                    Ok((Tok::Brackets, loc))
                } else {
                    Err(ParseError::syntax(loc, "expected `]`"))
                }
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let word = self.take_ident();
                Ok((Tok::Ident(word), loc))
            }
            b'{' | b'}' | b'(' | b')' | b',' | b';' | b':' | b'.' | b'=' => {
                self.bump();
                Ok((Tok::Punct(c as char), loc))
            }
            other => Err(ParseError::syntax(
                loc,
                format!("unexpected character `{}`", other as char),
            )),
        }
    }

    fn take_ident(&mut self) -> String {
        let mut s = String::new();
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == b'_' {
                s.push(c as char);
                self.bump();
            } else {
                break;
            }
        }
        s
    }
}

struct Parser {
    toks: Vec<(Tok, Loc)>,
    pos: usize,
    names: NameTable,
}

/// Parses source text into a resolved, index-built [`Program`]. Statement
/// ids are assigned in source order.
pub fn parse_program(source: &str) -> Result<Program, ParseError> {
    let mut lexer = Lexer::new(source);
    let mut toks = Vec::new();
    loop {
        let (t, l) = lexer.next_token()?;
        let done = t == Tok::Eof;
        toks.push((t, l));
        if done {
            break;
        }
    }
    let mut p = Parser { toks, pos: 0, names: NameTable::new() };
    let program = p.program()?;
    resolve(&program)?;
    Ok(program)
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn loc(&self) -> Loc {
        self.toks[self.pos].1.clone()
    }

    fn bump(&mut self) -> (Tok, Loc) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect_punct(&mut self, c: char) -> Result<(), ParseError> {
        match self.bump() {
            (Tok::Punct(p), _) if p == c => Ok(()),
            (t, loc) => Err(ParseError::syntax(loc, format!("expected `{c}`, found {t:?}"))),
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Loc), ParseError> {
        match self.bump() {
            (Tok::Ident(s), loc) => {
                if KEYWORDS.contains(&s.as_str()) {
                    Err(ParseError::syntax(loc, format!("keyword `{s}` cannot be used as {what}")))
                } else {
                    Ok((s, loc))
                }
            }
            (t, loc) => Err(ParseError::syntax(loc, format!("expected {what}, found {t:?}"))),
        }
    }

    fn keyword(&mut self) -> Option<String> {
        if let Tok::Ident(s) = self.peek() {
            if KEYWORDS.contains(&s.as_str()) {
                let s = s.clone();
                self.bump();
                return Some(s);
            }
        }
        None
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn program(&mut self) -> Result<Program, ParseError> {
        let mut classes: Vec<ClassDecl> = Vec::new();
        let mut methods: Vec<Method> = Vec::new();
        let mut ssa_declared = false;
        let mut next_stmt = 0u32;
        loop {
            match self.peek() {
                Tok::Eof => break,
                Tok::SsaDirective => {
                    ssa_declared = true;
                    self.bump();
                }
                Tok::Ident(s) if s == "type" => {
                    let c = self.typedecl()?;
                    if classes.iter().any(|x| x.name == c.name) {
                        return Err(ParseError::syntax(
                            self.loc(),
                            format!("duplicate class `{}`", self.names.resolve(c.name)),
                        ));
                    }
                    classes.push(c);
                }
                Tok::Ident(s) if s == "method" => {
                    let m = self.methdecl(&mut next_stmt)?;
                    if methods.iter().any(|x| x.qname == m.qname) {
                        return Err(ParseError::syntax(
                            self.loc(),
                            format!("duplicate method `{}`", m.qname),
                        ));
                    }
                    methods.push(m);
                }
                t => {
                    return Err(ParseError::syntax(
                        self.loc(),
                        format!("expected `type`, `method` or `#ssa`, found {t:?}"),
                    ))
                }
            }
        }
        let names = std::mem::take(&mut self.names);
        Ok(Program::new(names, classes, methods, ssa_declared))
    }

    fn typedecl(&mut self) -> Result<ClassDecl, ParseError> {
        self.bump(); // "type"
        let (name, _) = self.ident("class name")?;
        let name = self.names.intern(&name);
        let superclass = if self.at_keyword("extends") {
            self.bump();
            let (s, _) = self.ident("superclass name")?;
            Some(self.names.intern(&s))
        } else {
            None
        };
        self.expect_punct('{')?;
        let mut fields = Vec::new();
        while self.at_keyword("field") {
            self.bump();
            let (f, floc) = self.ident("field name")?;
            let fid = self.names.intern(&f);
            if fields.iter().any(|(x, _)| *x == fid) {
                return Err(ParseError::syntax(floc, format!("duplicate field `{f}`")));
            }
            let is_array = if *self.peek() == Tok::Brackets {
                self.bump();
                true
            } else {
                false
            };
            self.expect_punct(';')?;
            fields.push((fid, is_array));
        }
        self.expect_punct('}')?;
        Ok(ClassDecl { name, superclass, fields })
    }

    fn qname(&mut self) -> Result<(String, Option<String>, String), ParseError> {
        let (first, _) = self.ident("method name")?;
        if *self.peek() == Tok::Punct('.') {
            self.bump();
            let (second, _) = self.ident("method name")?;
            Ok((format!("{first}.{second}"), Some(first), second))
        } else {
            Ok((first.clone(), None, first))
        }
    }

    fn methdecl(&mut self, next_stmt: &mut u32) -> Result<Method, ParseError> {
        self.bump(); // "method"
        let (qname, class, name) = self.qname()?;
        let class = class.map(|c| self.names.intern(&c));
        let name = self.names.intern(&name);
        self.expect_punct('(')?;
        let mut params = Vec::new();
        if *self.peek() != Tok::Punct(')') {
            loop {
                let (p, ploc) = self.ident("parameter")?;
                let pid = self.names.intern(&p);
                if params.contains(&pid) {
                    return Err(ParseError::syntax(ploc, format!("duplicate parameter `{p}`")));
                }
                params.push(pid);
                if *self.peek() == Tok::Punct(',') {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect_punct(')')?;
        self.expect_punct('{')?;

        // First pass collects raw blocks with label strings; goto targets
        // and phi labels resolve to block indexes afterwards.
        let mut raw_blocks: Vec<(NameId, Vec<(RawStmt, Loc)>)> = Vec::new();
        let mut label_index: HashMap<NameId, usize> = HashMap::new();
        while *self.peek() != Tok::Punct('}') {
            let (label, lloc) = self.ident("block label")?;
            let label = self.names.intern(&label);
            self.expect_punct(':')?;
            if label_index.contains_key(&label) {
                return Err(ParseError::syntax(
                    lloc,
                    format!("duplicate block label `{}`", self.names.resolve(label)),
                ));
            }
            label_index.insert(label, raw_blocks.len());
            let stmts = self.block_stmts()?;
            raw_blocks.push((label, stmts));
        }
        self.expect_punct('}')?;
        if raw_blocks.is_empty() {
            return Err(ParseError::syntax(self.loc(), format!("method `{qname}` has no blocks")));
        }

        let resolve_label = |l: NameId, loc: &Loc, names: &NameTable| {
            label_index.get(&l).copied().ok_or_else(|| {
                ParseError::syntax(loc.clone(), format!("undefined label `{}`", names.resolve(l)))
            })
        };

        let mut blocks = Vec::new();
        for (label, raw) in raw_blocks {
            let mut stmts = Vec::new();
            let mut seen_non_phi = false;
            for (rs, loc) in raw {
                let kind = match rs {
                    RawStmt::Plain(k) => {
                        seen_non_phi = true;
                        k
                    }
                    RawStmt::Phi { dst, incomings } => {
                        if seen_non_phi {
                            return Err(ParseError::syntax(
                                loc,
                                "phi statements must appear at the block head",
                            ));
                        }
                        let mut resolved = Vec::new();
                        for (l, v) in incomings {
                            resolved.push((resolve_label(l, &loc, &self.names)?, v));
                        }
                        StmtKind::Phi { dst, incomings: resolved }
                    }
                    RawStmt::Goto(l) => StmtKind::Goto { target: resolve_label(l, &loc, &self.names)? },
                    RawStmt::If { cond, then_l, else_l } => StmtKind::If {
                        cond,
                        then_target: resolve_label(then_l, &loc, &self.names)?,
                        else_target: resolve_label(else_l, &loc, &self.names)?,
                    },
                };
                stmts.push(Statement { id: StmtId(*next_stmt), kind });
                *next_stmt += 1;
            }
            blocks.push(BasicBlock { label, stmts });
        }
        Ok(Method { qname, class, name, params, blocks })
    }

    /// Parses statements up to and including the block terminator.
    fn block_stmts(&mut self) -> Result<Vec<(RawStmt, Loc)>, ParseError> {
        let mut out = Vec::new();
        loop {
            let loc = self.loc();
            if let Some(kw) = self.keyword() {
                match kw.as_str() {
                    "goto" => {
                        let (l, _) = self.ident("label")?;
                        let l = self.names.intern(&l);
                        self.expect_punct(';')?;
                        out.push((RawStmt::Goto(l), loc));
                        return Ok(out);
                    }
                    "if" => {
                        let (c, _) = self.ident("variable")?;
                        let cond = self.names.intern(&c);
                        self.expect_kw("goto")?;
                        let (t, _) = self.ident("label")?;
                        let then_l = self.names.intern(&t);
                        self.expect_kw("else")?;
                        let (e, _) = self.ident("label")?;
                        let else_l = self.names.intern(&e);
                        self.expect_punct(';')?;
                        out.push((RawStmt::If { cond, then_l, else_l }, loc));
                        return Ok(out);
                    }
                    "return" => {
                        let value = if *self.peek() == Tok::Punct(';') {
                            None
                        } else {
                            let (v, _) = self.ident("variable")?;
                            Some(self.names.intern(&v))
                        };
                        self.expect_punct(';')?;
                        out.push((RawStmt::Plain(StmtKind::Return { value }), loc));
                        return Ok(out);
                    }
                    "call" => {
                        let k = self.call_tail(None)?;
                        out.push((RawStmt::Plain(k), loc));
                    }
                    "vcall" => {
                        let k = self.vcall_tail(None)?;
                        out.push((RawStmt::Plain(k), loc));
                    }
                    other => {
                        return Err(ParseError::syntax(
                            loc,
                            format!("unexpected keyword `{other}` in block"),
                        ))
                    }
                }
                continue;
            }
            // Assignment family or store: IDENT `=` ... | IDENT `.` NAME `=` VAR
            let (first, floc) = self.ident("variable")?;
            let first = self.names.intern(&first);
            match self.bump() {
                (Tok::Punct('.'), _) => {
                    let (field, _) = self.ident("field name")?;
                    let field = self.names.intern(&field);
                    self.expect_punct('=')?;
                    let (src, _) = self.ident("variable")?;
                    let src = self.names.intern(&src);
                    self.expect_punct(';')?;
                    out.push((RawStmt::Plain(StmtKind::Store { base: first, field, src }), floc));
                }
                (Tok::Punct('='), _) => {
                    let rs = self.assign_rhs(first)?;
                    out.push((rs, floc));
                }
                (t, loc) => {
                    return Err(ParseError::syntax(
                        loc,
                        format!("expected `=` or `.` after variable, found {t:?}"),
                    ))
                }
            }
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), ParseError> {
        let loc = self.loc();
        match self.keyword() {
            Some(k) if k == kw => Ok(()),
            other => Err(ParseError::syntax(loc, format!("expected `{kw}`, found {other:?}"))),
        }
    }

    fn assign_rhs(&mut self, dst: NameId) -> Result<RawStmt, ParseError> {
        let loc = self.loc();
        if let Some(kw) = self.keyword() {
            return match kw.as_str() {
                "new" => {
                    let (c, _) = self.ident("class name")?;
                    let class = self.names.intern(&c);
                    self.expect_punct(';')?;
                    Ok(RawStmt::Plain(StmtKind::Alloc { dst, class }))
                }
                "binop" => {
                    self.expect_punct('(')?;
                    let (l, _) = self.ident("variable")?;
                    let lhs = self.names.intern(&l);
                    self.expect_punct(',')?;
                    let (r, _) = self.ident("variable")?;
                    let rhs = self.names.intern(&r);
                    self.expect_punct(')')?;
                    self.expect_punct(';')?;
                    Ok(RawStmt::Plain(StmtKind::BinOp { dst, lhs, rhs }))
                }
                "call" => Ok(RawStmt::Plain(self.call_tail(Some(dst))?)),
                "vcall" => Ok(RawStmt::Plain(self.vcall_tail(Some(dst))?)),
                "phi" => {
                    self.expect_punct('(')?;
                    let mut incomings = Vec::new();
                    loop {
                        let (l, _) = self.ident("label")?;
                        let l = self.names.intern(&l);
                        self.expect_punct(':')?;
                        let (v, _) = self.ident("variable")?;
                        incomings.push((l, self.names.intern(&v)));
                        if *self.peek() == Tok::Punct(',') {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    self.expect_punct(')')?;
                    self.expect_punct(';')?;
                    Ok(RawStmt::Phi { dst, incomings })
                }
                other => Err(ParseError::syntax(
                    loc,
                    format!("unexpected keyword `{other}` after `=`"),
                )),
            };
        }
        match self.bump() {
            (Tok::Str(value), _) => {
                self.expect_punct(';')?;
                Ok(RawStmt::Plain(StmtKind::Const { dst, value }))
            }
            (Tok::Ident(src), _) => {
                let src = self.names.intern(&src);
                if *self.peek() == Tok::Punct('.') {
                    self.bump();
                    let (f, _) = self.ident("field name")?;
                    let field = self.names.intern(&f);
                    self.expect_punct(';')?;
                    Ok(RawStmt::Plain(StmtKind::Load { dst, base: src, field }))
                } else {
                    self.expect_punct(';')?;
                    Ok(RawStmt::Plain(StmtKind::Assign { dst, src }))
                }
            }
            (t, loc) => Err(ParseError::syntax(loc, format!("bad assignment right side: {t:?}"))),
        }
    }

    fn call_tail(&mut self, dst: Option<NameId>) -> Result<StmtKind, ParseError> {
        let (callee, _, _) = self.qname()?;
        let args = self.arg_list()?;
        Ok(StmtKind::Call { dst, callee, args })
    }

    fn vcall_tail(&mut self, dst: Option<NameId>) -> Result<StmtKind, ParseError> {
        let (r, _) = self.ident("receiver")?;
        let recv = self.names.intern(&r);
        self.expect_punct('.')?;
        let (m, _) = self.ident("method name")?;
        let method = self.names.intern(&m);
        let args = self.arg_list()?;
        Ok(StmtKind::VCall { dst, recv, method, args })
    }

    fn arg_list(&mut self) -> Result<Vec<NameId>, ParseError> {
        self.expect_punct('(')?;
        let mut args = Vec::new();
        if *self.peek() != Tok::Punct(')') {
            loop {
                let (a, _) = self.ident("argument")?;
                args.push(self.names.intern(&a));
                if *self.peek() == Tok::Punct(',') {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect_punct(')')?;
        self.expect_punct(';')?;
        Ok(args)
    }
}

enum RawStmt {
    Plain(StmtKind),
    Phi { dst: NameId, incomings: Vec<(NameId, NameId)> },
    Goto(NameId),
    If { cond: NameId, then_l: NameId, else_l: NameId },
}

/// Declaration-level checks: allocated classes exist, superclass chains are
/// acyclic, and every loaded or stored field is declared in some class.
fn resolve(program: &Program) -> Result<(), ParseError> {
    let no_loc = Loc { line: 0, col: 0 };
    for c in &program.classes {
        let mut seen = HashSet::new();
        seen.insert(c.name);
        let mut cur = c.superclass;
        while let Some(s) = cur {
            let Some(decl) = program.class(s) else {
                return Err(ParseError::resolve(
                    no_loc.clone(),
                    format!(
                        "class `{}` extends undeclared `{}`",
                        program.names.resolve(c.name),
                        program.names.resolve(s)
                    ),
                ));
            };
            if !seen.insert(s) {
                return Err(ParseError::resolve(
                    no_loc.clone(),
                    format!("superclass cycle through `{}`", program.names.resolve(s)),
                ));
            }
            cur = decl.superclass;
        }
    }
    for m in &program.methods {
        for b in &m.blocks {
            for s in &b.stmts {
                match &s.kind {
                    StmtKind::Alloc { class, .. } => {
                        if program.class(*class).is_none() {
                            return Err(ParseError::resolve(
                                no_loc.clone(),
                                format!(
                                    "allocation of undeclared class `{}` in `{}`",
                                    program.names.resolve(*class),
                                    m.qname
                                ),
                            ));
                        }
                    }
                    StmtKind::Load { field, .. } | StmtKind::Store { field, .. }
                        if !program.field_declared(*field) =>
                    {
                        return Err(ParseError::resolve(
                            no_loc.clone(),
                            format!(
                                "undeclared field `{}` in `{}`",
                                program.names.resolve(*field),
                                m.qname
                            ),
                        ));
                    }
                    _ => {}
                }
            }
        }
    }
    Ok(())
}
