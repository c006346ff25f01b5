//! Cross-validation of consistency, the pebble game, the oracles, and
//! obstruction extraction on one instance at a time.

use serde::Serialize;

use crate::consistency::{establish_lk_consistency, materialize_canonical_program, DEFAULT_RULE_BUDGET};
use crate::datalog::{evaluate, Atom, DatalogProgram, Rule};
use crate::error::Result;
use crate::homomorphism::is_homomorphism;
use crate::pebble::{duplicator_wins, replay_spoiler_line, verify_strategy};
use crate::programs::{TC_PROGRAM, TRIANGLE_PROGRAM};
use crate::structure::{Signature, Structure, Symbol};
use crate::template::{TemplateHandle, TemplateKind};
use crate::treewidth::{obstruction_from_trace, verify_decomposition};

/// Schema tag carried by every JSON report.
pub const SCHEMA: &str = "csplab/1";

/// Renames EDB `from` to `to` throughout a program.
pub fn rename_edb(p: &DatalogProgram, from: &str, to: &str) -> Result<DatalogProgram> {
    let edbs = Signature::new(
        p.edbs()
            .symbols()
            .iter()
            .map(|s| Symbol::new(if s.name == from { to } else { &s.name }, s.arity))
            .collect(),
    )?;
    let swap = |a: &Atom| Atom {
        symbol: if a.symbol == from { to.to_string() } else { a.symbol.clone() },
        args: a.args.clone(),
    };
    let rules = p
        .rules()
        .iter()
        .map(|r| Rule {
            head: swap(&r.head),
            body: r.body.iter().map(swap).collect(),
            line: r.line,
        })
        .collect();
    DatalogProgram::new(edbs, p.idbs().clone(), rules)
}

/// A sound Datalog program for the template, used to extract obstructions:
/// transitive closure for the order, the triangle rules for the Henson graph,
/// and the materialized canonical (1,2)-program for small finite templates.
pub fn sound_program(t: &TemplateHandle) -> Option<DatalogProgram> {
    let symbol = t.signature().symbols().first()?.name.clone();
    match t.kind() {
        TemplateKind::QOrder => rename_edb(&DatalogProgram::parse(TC_PROGRAM).ok()?, "edge", &symbol).ok(),
        TemplateKind::Henson => rename_edb(&DatalogProgram::parse(TRIANGLE_PROGRAM).ok()?, "E", &symbol).ok(),
        TemplateKind::Finite(s) if s.size() <= 4 && t.signature().max_arity() <= 2 => {
            materialize_canonical_program(t, 1, 2, DEFAULT_RULE_BUDGET).ok()
        }
        TemplateKind::Finite(_) => None,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct XCheckRecord {
    pub index: usize,
    pub accepted: bool,
    pub duplicator_wins: bool,
    pub satisfiable: bool,
    /// Obstruction size when one was extracted.
    pub obstruction: Option<usize>,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct XCheckReport {
    pub schema: &'static str,
    pub template: String,
    pub l: usize,
    pub k: usize,
    pub records: Vec<XCheckRecord>,
    pub violations: Vec<(usize, String)>,
}

impl XCheckReport {
    pub fn new(t: &TemplateHandle, l: usize, k: usize, records: Vec<XCheckRecord>) -> Self {
        let violations = records
            .iter()
            .flat_map(|r| r.violations.iter().map(|v| (r.index, v.clone())))
            .collect();
        XCheckReport {
            schema: SCHEMA,
            template: t.name().to_string(),
            l,
            k,
            records,
            violations,
        }
    }

    /// Instances where consistency accepts but the oracle refuses.
    pub fn incomplete(&self) -> usize {
        self.records.iter().filter(|r| r.accepted && !r.satisfiable).count()
    }
}

/// Runs every check on one instance; disagreements are recorded, not raised.
pub fn xcheck_instance(
    index: usize,
    instance: &Structure,
    t: &TemplateHandle,
    l: usize,
    k: usize,
    program: Option<&DatalogProgram>,
) -> Result<XCheckRecord> {
    let store = establish_lk_consistency(instance, t, l, k)?;
    let accepted = store.accepted();
    let game = duplicator_wins(instance, t, l, k)?;
    let satisfiable = t.decide_csp(instance)?.satisfiable;
    let mut violations = Vec::new();
    if accepted != game.wins {
        violations.push(format!("consistency accepted={accepted} but duplicator wins={}", game.wins));
    }
    if !accepted && satisfiable {
        violations.push("consistency refuted a satisfiable instance".into());
    }
    if let Some(f) = &game.strategy {
        if !verify_strategy(f, instance, t) {
            violations.push("strategy family fails verification".into());
        }
    }
    if let Some(line) = &game.line {
        if !replay_spoiler_line(line, instance, t) {
            violations.push("spoiler line fails replay".into());
        }
    }
    let mut obstruction = None;
    if !accepted {
        if let Some(p) = program {
            let ev = evaluate(p, instance)?;
            if ev.derived_false() {
                let ob = obstruction_from_trace(&ev.trace, p, instance)?;
                let maps = is_homomorphism(&ob.structure, instance, &ob.homomorphism);
                let decomposes = verify_decomposition(&ob.decomposition, &ob.structure);
                let rederives = evaluate(p, &ob.structure)?.derived_false();
                let refuted = !t.decide_csp(&ob.structure)?.satisfiable;
                if !(maps && decomposes && rederives && refuted) {
                    violations.push(format!(
                        "obstruction checks: maps={maps} decomposes={decomposes} rederives={rederives} refuted={refuted}"
                    ));
                }
                obstruction = Some(ob.structure.size());
            }
        }
    }
    Ok(XCheckRecord {
        index,
        accepted,
        duplicator_wins: game.wins,
        satisfiable,
        obstruction,
        violations,
    })
}

/// Sequential run over a corpus.
pub fn run_xcheck(instances: &[Structure], t: &TemplateHandle, l: usize, k: usize) -> Result<XCheckReport> {
    let program = sound_program(t);
    let records = instances
        .iter()
        .enumerate()
        .map(|(i, s)| xcheck_instance(i, s, t, l, k, program.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    Ok(XCheckReport::new(t, l, k, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{digraphs_up_to, graphs_up_to};

    #[test]
    fn qorder_small_corpus() {
        let t = TemplateHandle::qorder();
        let corpus = digraphs_up_to("<", 3, true);
        let r = run_xcheck(&corpus, &t, 2, 3).unwrap();
        assert!(r.violations.is_empty(), "{:?}", r.violations);
        assert_eq!(r.incomplete(), 0);
        assert!(r.records.iter().any(|x| x.obstruction.is_some()));
    }

    #[test]
    fn henson_small_corpus() {
        let t = TemplateHandle::henson();
        let r = run_xcheck(&graphs_up_to("E", 4, true), &t, 2, 3).unwrap();
        assert!(r.violations.is_empty(), "{:?}", r.violations);
        assert_eq!(r.incomplete(), 0);
    }

    #[test]
    fn k3_incomplete_on_k4() {
        let t = TemplateHandle::finite(Structure::clique("E", 3)).unwrap();
        let r = run_xcheck(&[Structure::clique("E", 4)], &t, 2, 3).unwrap();
        assert!(r.violations.is_empty());
        assert!(r.records[0].accepted && !r.records[0].satisfiable);
        assert_eq!(r.incomplete(), 1);
    }

    #[test]
    fn renamed_program() {
        let p = rename_edb(&DatalogProgram::parse(TC_PROGRAM).unwrap(), "edge", "<").unwrap();
        assert_eq!(p.edbs().name(0), "<");
        let c = Structure::directed_cycle("<", 3);
        assert!(evaluate(&p, &c).unwrap().derived_false());
    }
}
