//! Seeded generator for well-formed, non-SSA test programs.
//!
//! Output is deterministic per seed, always parses, and always survives SSA
//! construction: uses draw only from parameters, entry-block definitions and
//! earlier definitions in the same block, so every use is defined on all
//! paths. Each generated program contains at least one source and one sink
//! call.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;

#[derive(Debug, Clone)]
pub struct GenLimits {
    pub methods: usize,
    pub blocks: usize,
    pub fields: usize,
    pub stmts: usize,
    pub allow_loops: bool,
}

impl Default for GenLimits {
    fn default() -> Self {
        GenLimits { methods: 6, blocks: 4, fields: 3, stmts: 6, allow_loops: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    /// Allocated object; usable as receiver and load/store base.
    Obj,
    /// Anything else: strings, source returns, call results.
    Val,
}

#[derive(Debug, Clone)]
struct Sig {
    qname: String,
    /// Bare name used at vcall sites for instance methods.
    call_name: String,
    instance: bool,
    params: Vec<Kind>,
}

struct Gen {
    rng: ChaCha8Rng,
    limits: GenLimits,
    fields: Vec<(String, bool)>,
    out: String,
}

/// Block-local generation state: the variable pool visible at the current
/// statement, split by kind.
#[derive(Clone, Default)]
struct Pool {
    objs: Vec<String>,
    vals: Vec<String>,
}

impl Pool {
    fn add(&mut self, name: &str, kind: Kind) {
        match kind {
            Kind::Obj => self.objs.push(name.to_string()),
            Kind::Val => self.vals.push(name.to_string()),
        }
    }

    fn any(&self) -> Vec<&String> {
        self.objs.iter().chain(self.vals.iter()).collect()
    }
}

/// Renders a deterministic pseudo-random program for `seed`.
pub fn generate_program(seed: u64, limits: &GenLimits) -> String {
    let mut limits = limits.clone();
    limits.methods = limits.methods.max(1);
    if limits.methods == 1 {
        limits.blocks = 1;
    }
    limits.blocks = limits.blocks.max(1);
    limits.fields = limits.fields.clamp(1, 3);
    limits.stmts = limits.stmts.max(2);

    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        fields: Vec::new(),
        limits,
        out: String::new(),
    };
    g.emit();
    g.out
}

impl Gen {
    fn emit(&mut self) {
        for i in 0..self.limits.fields {
            // The last field is an array half the time, exercising the
            // weak-update branch of the store rule.
            let is_array = i + 1 == self.limits.fields && self.rng.random_bool(0.5);
            self.fields.push((format!("f{i}"), is_array));
        }
        let _ = writeln!(self.out, "type A {{");
        let fields = self.fields.clone();
        for (f, arr) in &fields {
            let suffix = if *arr { "[]" } else { "" };
            let _ = writeln!(self.out, "  field {f}{suffix};");
        }
        let _ = writeln!(self.out, "}}");
        let _ = writeln!(self.out, "type B extends A {{}}");
        self.out.push('\n');

        // Method signatures first so call sites can reference later methods.
        let n_methods = if self.limits.methods == 1 {
            1
        } else {
            self.rng.random_range(2..=self.limits.methods)
        };
        let mut sigs: Vec<Sig> = Vec::new();
        for i in 0..n_methods {
            if i == 0 {
                sigs.push(Sig {
                    qname: "main".into(),
                    call_name: "main".into(),
                    instance: false,
                    params: Vec::new(),
                });
                continue;
            }
            let instance = self.rng.random_bool(0.4);
            let mut params = Vec::new();
            if instance {
                params.push(Kind::Obj);
            }
            let extra = self.rng.random_range(1..=2);
            for _ in 0..extra {
                params.push(if self.rng.random_bool(0.3) { Kind::Obj } else { Kind::Val });
            }
            let (qname, call_name) = if instance {
                (format!("A.im{i}"), format!("im{i}"))
            } else {
                (format!("m{i}"), format!("m{i}"))
            };
            sigs.push(Sig { qname, call_name, instance, params });
        }

        for i in 0..n_methods {
            let callables: Vec<Sig> = sigs[i + 1..].to_vec();
            let sig = sigs[i].clone();
            self.emit_method(&sig, &callables, i == 0);
        }
    }

    fn emit_method(&mut self, sig: &Sig, callables: &[Sig], is_root: bool) {
        let mut pool = Pool::default();
        let params: Vec<String> = sig
            .params
            .iter()
            .enumerate()
            .map(|(i, k)| {
                let name = if sig.instance && i == 0 { "this".to_string() } else { format!("p{i}") };
                pool.add(&name, *k);
                name
            })
            .collect();
        let _ = writeln!(self.out, "method {}({}) {{", sig.qname, params.join(", "));

        let shape = self.pick_shape();
        let mut var = 0usize;

        match shape {
            Shape::Line(n) => {
                let mut entry_pool = Pool::default();
                for b in 0..n {
                    let _ = writeln!(self.out, "L{b}:");
                    if b == 0 {
                        self.emit_stmts(&mut pool, callables, &mut var, is_root, true);
                        entry_pool = pool.clone();
                    } else {
                        let mut local = entry_pool.clone();
                        self.emit_stmts(&mut local, callables, &mut var, false, false);
                        pool = local;
                    }
                    if b + 1 < n {
                        let _ = writeln!(self.out, "  goto L{};", b + 1);
                    } else {
                        self.emit_tail(&pool, sig, is_root);
                    }
                }
            }
            Shape::Diamond => {
                let _ = writeln!(self.out, "L0:");
                self.emit_stmts(&mut pool, callables, &mut var, is_root, true);
                let entry_pool = pool.clone();
                let cond = self.pick_any(&entry_pool);
                let _ = writeln!(self.out, "  if {cond} goto L1 else L2;");
                // Reassign one entry value variable in both arms so the join
                // needs a phi.
                let reassign = entry_pool.vals.last().cloned();
                for b in [1, 2] {
                    let _ = writeln!(self.out, "L{b}:");
                    let mut local = entry_pool.clone();
                    if let Some(v) = &reassign {
                        let src = self.pick_any(&local);
                        let _ = writeln!(self.out, "  {v} = {src};");
                    }
                    self.emit_stmts(&mut local, callables, &mut var, false, false);
                    let _ = writeln!(self.out, "  goto L3;");
                }
                let _ = writeln!(self.out, "L3:");
                pool = entry_pool;
                self.emit_stmts(&mut pool.clone(), callables, &mut var, false, false);
                self.emit_tail(&pool, sig, is_root);
            }
            Shape::Loop => {
                let _ = writeln!(self.out, "L0:");
                self.emit_stmts(&mut pool, callables, &mut var, is_root, true);
                let entry_pool = pool.clone();
                let _ = writeln!(self.out, "  goto L1;");
                let _ = writeln!(self.out, "L1:");
                let mut local = entry_pool.clone();
                if let Some(v) = entry_pool.vals.last() {
                    let src = self.pick_any(&local);
                    let _ = writeln!(self.out, "  {v} = {src};");
                }
                self.emit_stmts(&mut local, callables, &mut var, false, false);
                let cond = self.pick_any(&entry_pool);
                let _ = writeln!(self.out, "  if {cond} goto L1 else L2;");
                let _ = writeln!(self.out, "L2:");
                pool = entry_pool;
                self.emit_tail(&pool, sig, is_root);
            }
        }
        let _ = writeln!(self.out, "}}");
        self.out.push('\n');
    }

    fn pick_shape(&mut self) -> Shape {
        if self.limits.blocks == 1 {
            return Shape::Line(1);
        }
        let mut options = vec![Shape::Line(1), Shape::Line(self.limits.blocks.min(2))];
        if self.limits.blocks >= 4 {
            options.push(Shape::Diamond);
        }
        if self.limits.blocks >= 3 && self.limits.allow_loops {
            options.push(Shape::Loop);
        }
        let i = self.rng.random_range(0..options.len());
        options[i]
    }

    /// Emits a run of simple statements, growing the pool. The entry block
    /// of the root method always gains a tainted value.
    fn emit_stmts(
        &mut self,
        pool: &mut Pool,
        callables: &[Sig],
        var: &mut usize,
        root_entry: bool,
        is_entry: bool,
    ) {
        let n = self.rng.random_range(2..=self.limits.stmts);
        if is_entry {
            // Guarantee a usable object and value before anything else.
            let v = fresh(var);
            let class = if self.rng.random_bool(0.3) { "B" } else { "A" };
            let _ = writeln!(self.out, "  {v} = new {class};");
            pool.add(&v, Kind::Obj);
            let v = fresh(var);
            let _ = writeln!(self.out, "  {v} = \"lit\";");
            pool.add(&v, Kind::Val);
        }
        if root_entry {
            let v = fresh(var);
            let source = if self.rng.random_bool(0.7) { "getTainted" } else { "getSqli" };
            let _ = writeln!(self.out, "  {v} = call {source}();");
            pool.add(&v, Kind::Val);
        }
        for _ in 0..n {
            self.emit_one(pool, callables, var);
        }
    }

    fn emit_one(&mut self, pool: &mut Pool, callables: &[Sig], var: &mut usize) {
        let choice = self.rng.random_range(0..100);
        match choice {
            0..=11 => {
                let v = fresh(var);
                let class = if self.rng.random_bool(0.3) { "B" } else { "A" };
                let _ = writeln!(self.out, "  {v} = new {class};");
                pool.add(&v, Kind::Obj);
            }
            12..=21 => {
                let v = fresh(var);
                let _ = writeln!(self.out, "  {v} = \"s\";");
                pool.add(&v, Kind::Val);
            }
            22..=33 => {
                let v = fresh(var);
                let src = self.pick_any(pool);
                let _ = writeln!(self.out, "  {v} = {src};");
                pool.add(&v, Kind::Val);
            }
            34..=47 => {
                // Load; occasionally off a non-object value to exercise
                // whole-value source taint.
                let v = fresh(var);
                let base = if self.rng.random_bool(0.85) || pool.objs.is_empty() {
                    match pool.objs.last() {
                        Some(o) => o.clone(),
                        None => self.pick_any(pool),
                    }
                } else {
                    self.pick_any(pool)
                };
                let f = self.pick_field();
                let _ = writeln!(self.out, "  {v} = {base}.{f};");
                pool.add(&v, Kind::Val);
            }
            48..=61 => {
                let base = match pool.objs.first() {
                    Some(o) => o.clone(),
                    None => self.pick_any(pool),
                };
                let f = self.pick_field();
                let src = self.pick_any(pool);
                let _ = writeln!(self.out, "  {base}.{f} = {src};");
            }
            62..=70 => {
                let v = fresh(var);
                let a = self.pick_any(pool);
                let b = self.pick_any(pool);
                let _ = writeln!(self.out, "  {v} = binop({a}, {b});");
                pool.add(&v, Kind::Val);
            }
            71..=76 => {
                let v = fresh(var);
                let a = self.pick_any(pool);
                let _ = writeln!(self.out, "  {v} = call ext({a});");
                pool.add(&v, Kind::Val);
            }
            77..=80 => {
                let v = fresh(var);
                let a = self.pick_any(pool);
                let _ = writeln!(self.out, "  {v} = call clean({a});");
                pool.add(&v, Kind::Val);
            }
            81..=84 => {
                let v = fresh(var);
                let source = if self.rng.random_bool(0.7) { "getTainted" } else { "getSqli" };
                let _ = writeln!(self.out, "  {v} = call {source}();");
                pool.add(&v, Kind::Val);
            }
            85..=90 => {
                let a = self.pick_any(pool);
                let _ = writeln!(self.out, "  call sink({a});");
            }
            _ => {
                if callables.is_empty() {
                    let v = fresh(var);
                    let a = self.pick_any(pool);
                    let _ = writeln!(self.out, "  {v} = call ext({a});");
                    pool.add(&v, Kind::Val);
                    return;
                }
                let idx = self.rng.random_range(0..callables.len());
                let sig = callables[idx].clone();
                let mut args: Vec<String> = Vec::new();
                let mut ok = true;
                for k in &sig.params {
                    match k {
                        Kind::Obj => match pool.objs.first() {
                            Some(o) => args.push(o.clone()),
                            None => {
                                ok = false;
                                break;
                            }
                        },
                        Kind::Val => args.push(self.pick_any(pool)),
                    }
                }
                if !ok {
                    return;
                }
                let v = fresh(var);
                if sig.instance {
                    let recv = args.remove(0);
                    let rest = args.join(", ");
                    let _ =
                        writeln!(self.out, "  {v} = vcall {recv}.{}({rest});", sig.call_name);
                } else {
                    let rest = args.join(", ");
                    let _ = writeln!(self.out, "  {v} = call {}({rest});", sig.qname);
                }
                pool.add(&v, Kind::Val);
            }
        }
    }

    /// Final sink and return of a method's last block.
    fn emit_tail(&mut self, pool: &Pool, sig: &Sig, is_root: bool) {
        if is_root {
            let a = self.pick_any(pool);
            let _ = writeln!(self.out, "  call sink({a});");
            let _ = writeln!(self.out, "  return;");
            return;
        }
        if self.rng.random_bool(0.2) {
            let a = self.pick_any(pool);
            let _ = writeln!(self.out, "  call sink({a});");
        }
        if sig.instance && self.rng.random_bool(0.3) {
            let _ = writeln!(self.out, "  return;");
        } else {
            let v = self.pick_any(pool);
            let _ = writeln!(self.out, "  return {v};");
        }
    }

    fn pick_any(&mut self, pool: &Pool) -> String {
        let all = pool.any();
        assert!(!all.is_empty(), "pool is never empty after the entry prelude");
        let i = self.rng.random_range(0..all.len());
        all[i].clone()
    }

    fn pick_field(&mut self) -> String {
        let i = self.rng.random_range(0..self.fields.len());
        self.fields[i].0.clone()
    }
}

fn fresh(var: &mut usize) -> String {
    let v = format!("v{var}");
    *var += 1;
    v
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Line(usize),
    Diamond,
    Loop,
}
