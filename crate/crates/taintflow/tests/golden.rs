//! Golden-example integration tests beyond the acceptance criteria: trace
//! contents, summary internals, oracle agreement on the fixture programs,
//! and summary soundness against the forward semantics.

mod common;

use std::collections::BTreeSet;

use common::*;
use taintflow::access_path::Fact;
use taintflow::gen::{generate_program, GenLimits};
use taintflow::ir::StmtId;
use taintflow::oracle::{forward_reaches_exit, OracleConfig};
use taintflow::solver::SolverConfig;
use taintflow::taint::TaintSpec;

fn fixture(name: &str) -> String {
    let path = format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(path).expect("fixture exists")
}

fn golden_spec() -> TaintSpec {
    TaintSpec::from_json(&fixture("default.json")).unwrap()
}

#[test]
fn box_copy_trace_visits_put_store_and_get_load() {
    let (p, cg) = build(&fixture("box_copy.ir"));
    let report = run_analyze(&p, &cg, &golden_spec(), &SolverConfig::default());
    assert_eq!(report.findings.len(), 1);
    let f = &report.findings[0];
    let stmts: BTreeSet<u32> = f.trace.iter().map(|(s, _)| s.0).collect();
    assert!(stmts.contains(&0), "trace visits the store in Box.put");
    assert!(stmts.contains(&2), "trace visits the load in Box.get");
    assert_eq!(f.trace[0].0, StmtId(13), "trace starts at the sink");
    assert_eq!(f.trace.last().unwrap().0, StmtId(8), "trace ends at the source");
}

#[test]
fn box_copy_with_constant_source_is_clean() {
    let src = fixture("box_copy.ir").replace("tainted = call getTainted();", "tainted = \"lit\";");
    let (p, cg) = build(&src);
    let report = run_analyze(&p, &cg, &golden_spec(), &SolverConfig::default());
    assert!(report.findings.is_empty());
}

#[test]
fn concat_summary_maps_ret_to_both_operands() {
    let (p, cg) = build(&fixture("concat.ir"));
    let report = run_analyze(&p, &cg, &golden_spec(), &SolverConfig::default());
    assert!(report
        .summary_lines
        .contains("cat: <ret> <- {arg0, arg1}"), "summaries: {:?}", report.summary_lines);
}

#[test]
fn recursive_callee_reaches_fixpoint() {
    let src = r#"
method rec(p, c) {
L0:
  if c goto L1 else L2;
L1:
  x = call rec(p, c);
  return x;
L2:
  return p;
}
method m() {
L0:
  t = call getTainted();
  c = "b";
  y = call rec(t, c);
  call sink(y);
  return;
}
"#;
    let (p, cg) = build(src);
    let spec = golden_spec();
    let back = backward_set(&run_analyze(&p, &cg, &spec, &SolverConfig::default()));
    assert_eq!(back.len(), 1, "taint flows through the recursive identity");
    assert_eq!(back, run_oracle(&p, &cg, &spec));
}

#[test]
fn oracle_agrees_on_fixture_programs() {
    let spec = golden_spec();
    for name in ["concat.ir", "concat_literal.ir", "box_copy.ir", "array.ir", "array_strong.ir"] {
        let (p, cg) = build(&fixture(name));
        let back = backward_set(&run_analyze(&p, &cg, &spec, &SolverConfig::default()));
        let fwd = run_oracle(&p, &cg, &spec);
        assert_eq!(back, fwd, "{name}");
    }
}

#[test]
fn klimit_agrees_at_both_bounds() {
    let spec = golden_spec();
    let (p, cg) = build(&fixture("klimit.ir"));
    for k in [5usize, 6] {
        let kc = taintflow::access_path::KConfig::new(k).unwrap();
        let back = backward_set(&run_analyze(
            &p,
            &cg,
            &spec,
            &SolverConfig { k: kc, ..SolverConfig::default() },
        ));
        let fwd = {
            let cfg = OracleConfig { k: kc, ..OracleConfig::default() };
            forward_set(&taintflow::oracle::oracle_analyze(&p, &cg, &spec, &cfg).unwrap())
        };
        assert_eq!(back, fwd, "k={k}");
        assert_eq!(back.len(), if k == 5 { 0 } else { 1 });
    }
}

/// Every backward summary edge is confirmed by the forward semantics: each
/// recorded entry fact reaches the exit fact, and plausible non-entries do
/// not.
#[test]
fn summaries_are_sound_and_tight_on_corpus() {
    let limits = GenLimits { methods: 4, blocks: 3, ..GenLimits::default() };
    let spec = default_spec();
    let cfg = OracleConfig::default();
    let mut checked = 0usize;
    for seed in 0..25u64 {
        let text = generate_program(seed, &limits);
        let (p, cg) = build(&text);
        let interner = taintflow::access_path::Interner::new();
        // Collect per-label summaries straight from the solver.
        for label in ["XSS", "SQLI"] {
            let env = spec.label_env(label);
            let sinks = collect_sinks(&p, &cg);
            for (sink_stmt, base) in sinks {
                let q = taintflow::solver::Query { sink_stmt, base, label: label.into() };
                let Ok(r) = taintflow::solver::solve(
                    &p,
                    &cg,
                    &interner,
                    &SolverConfig::default(),
                    &env,
                    &q,
                ) else {
                    continue;
                };
                for (m, exit, entries) in &r.summaries {
                    let Fact::Ap(eap) = exit else { continue };
                    let (ebase, efields) = interner.parts(*eap);
                    let method = p.method(*m);
                    for entry in entries {
                        match entry {
                            Fact::Zero => {
                                // Some source run must reach this exit from
                                // the zero row.
                                let any = spec_source_sites(&p, &cg, &spec, label)
                                    .into_iter()
                                    .any(|s| {
                                        forward_reaches_exit(
                                            &p, &cg, &spec, label, &cfg, *m, None,
                                            Some(s), ebase, &efields,
                                        )
                                        .unwrap()
                                    });
                                assert!(any, "seed {seed}: zero entry unconfirmed\n{text}");
                            }
                            Fact::Ap(a) => {
                                let (abase, afields) = interner.parts(*a);
                                let ok = forward_reaches_exit(
                                    &p,
                                    &cg,
                                    &spec,
                                    label,
                                    &cfg,
                                    *m,
                                    Some((abase, afields.to_vec())),
                                    None,
                                    ebase,
                                    &efields,
                                )
                                .unwrap();
                                assert!(ok, "seed {seed}: entry unconfirmed\n{text}");
                                checked += 1;
                            }
                        }
                    }
                    // Tightness: a parameter-rooted candidate with the same
                    // fields that is not in the entry set must not reach
                    // the exit.
                    for (i, param) in method.params.iter().enumerate() {
                        let _ = i;
                        let cand = interner
                            .make(*param, &efields, taintflow::access_path::KConfig::default())
                            .unwrap();
                        if entries.contains(&Fact::Ap(cand)) {
                            continue;
                        }
                        let reaches = forward_reaches_exit(
                            &p,
                            &cg,
                            &spec,
                            label,
                            &cfg,
                            *m,
                            Some((*param, efields.to_vec())),
                            None,
                            ebase,
                            &efields,
                        )
                        .unwrap();
                        assert!(
                            !reaches,
                            "seed {seed}: {} should not reach the exit\n{text}",
                            p.names.resolve(*param)
                        );
                    }
                }
            }
        }
    }
    assert!(checked > 10, "corpus produced summaries to check: {checked}");
}

fn collect_sinks(
    p: &taintflow::ir::Program,
    cg: &taintflow::callgraph::CallGraph,
) -> Vec<(StmtId, taintflow::access_path::NameId)> {
    let mut out = Vec::new();
    for m in &p.methods {
        for b in &m.blocks {
            for s in &b.stmts {
                if let taintflow::ir::StmtKind::Call { callee, args, .. } = &s.kind {
                    if callee == "sink" && cg.is_external(s.id) && !args.is_empty() {
                        out.push((s.id, args[0]));
                    }
                }
            }
        }
    }
    out
}

fn spec_source_sites(
    p: &taintflow::ir::Program,
    cg: &taintflow::callgraph::CallGraph,
    spec: &TaintSpec,
    label: &str,
) -> Vec<StmtId> {
    let names: Vec<&String> = spec
        .sources
        .iter()
        .filter(|s| s.labels.iter().any(|l| l == label))
        .map(|s| &s.method)
        .collect();
    let mut out = Vec::new();
    for m in &p.methods {
        for b in &m.blocks {
            for s in &b.stmts {
                if let taintflow::ir::StmtKind::Call { callee, .. } = &s.kind {
                    if cg.is_external(s.id) && names.contains(&callee) {
                        out.push(s.id);
                    }
                }
            }
        }
    }
    out
}
