use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::structure::{Signature, Structure};

use super::{DatalogProgram, FALSE};

/// A ground fact; `symbol` indexes the program's full signature (EDBs then IDBs).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Fact {
    pub symbol: usize,
    pub tuple: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DerivationStep {
    pub fact: Fact,
    pub rule: usize,
    pub body: Vec<Fact>,
    /// Values of the rule's variables, aligned with [`super::Rule::variables`].
    pub assignment: Vec<usize>,
}

/// First derivation of every derived fact, in derivation order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DerivationTrace {
    pub steps: Vec<DerivationStep>,
}

impl DerivationTrace {
    pub fn step_for(&self, fact: &Fact) -> Option<&DerivationStep> {
        self.steps.iter().find(|s| &s.fact == fact)
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    /// Instance facts plus derived facts, over the full signature.
    pub facts: Structure,
    pub trace: DerivationTrace,
    pub rounds: usize,
}

impl Evaluation {
    pub fn derived_false(&self) -> bool {
        self.facts
            .relation_named(FALSE)
            .is_some_and(|r| !r.is_empty())
    }
}

struct CompiledAtom {
    symbol: usize,
    vars: Vec<usize>,
    idb: bool,
}

struct CompiledRule {
    head: CompiledAtom,
    body: Vec<CompiledAtom>,
    nvars: usize,
}

fn compile(p: &DatalogProgram, sig: &Signature) -> Vec<CompiledRule> {
    p.rules()
        .iter()
        .map(|r| {
            let vars = r.variables();
            let atom = |a: &super::Atom| CompiledAtom {
                symbol: sig.index_of(&a.symbol).expect("validated"),
                vars: a
                    .args
                    .iter()
                    .map(|v| vars.iter().position(|w| w == v).expect("collected"))
                    .collect(),
                idb: !p.is_edb(&a.symbol),
            };
            CompiledRule {
                head: atom(&r.head),
                body: r.body.iter().map(atom).collect(),
                nvars: vars.len(),
            }
        })
        .collect()
}

/// Which facts a body atom may match during a join.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Source {
    /// Facts stamped before round `r`.
    Before(usize),
    /// Facts stamped exactly `r`.
    At(usize),
    Any,
}

/// Facts per symbol, each stamped with the round that produced it (0 = instance).
struct Db {
    rels: Vec<BTreeMap<Vec<usize>, usize>>,
}

impl Db {
    fn admits(src: Source, stamp: usize) -> bool {
        match src {
            Source::Before(r) => stamp < r,
            Source::At(r) => stamp == r,
            Source::Any => true,
        }
    }

    fn contains(&self, f: &Fact) -> bool {
        self.rels[f.symbol].contains_key(&f.tuple)
    }
}

/// Enumerates body matches in textual order; calls `emit` with the binding.
fn join(
    db: &Db,
    rule: &CompiledRule,
    sources: &[Source],
    idx: usize,
    binding: &mut Vec<Option<usize>>,
    emit: &mut dyn FnMut(&[Option<usize>]),
) {
    if idx == rule.body.len() {
        emit(binding);
        return;
    }
    let atom = &rule.body[idx];
    let rel = &db.rels[atom.symbol];
    let candidates: Box<dyn Iterator<Item = (&Vec<usize>, &usize)>> = match atom.vars.first() {
        Some(&v0) => match binding[v0] {
            Some(val) => Box::new(rel.range(vec![val]..vec![val + 1])),
            None => Box::new(rel.iter()),
        },
        None => Box::new(rel.iter()),
    };
    for (tuple, &stamp) in candidates {
        if !Db::admits(sources[idx], stamp) {
            continue;
        }
        let mut bound_here = Vec::new();
        let mut ok = true;
        for (&v, &val) in atom.vars.iter().zip(tuple) {
            match binding[v] {
                Some(b) if b != val => {
                    ok = false;
                    break;
                }
                Some(_) => {}
                None => {
                    binding[v] = Some(val);
                    bound_here.push(v);
                }
            }
        }
        if ok {
            join(db, rule, sources, idx + 1, binding, emit);
        }
        for v in bound_here {
            binding[v] = None;
        }
    }
}

fn check_instance(p: &DatalogProgram, instance: &Structure) -> Result<()> {
    if instance.signature() != p.edbs() {
        return Err(Error::SignatureMismatch(
            "instance signature must equal the program's EDBs".into(),
        ));
    }
    Ok(())
}

fn initial_db(sig: &Signature, instance: &Structure) -> Db {
    let mut rels = vec![BTreeMap::new(); sig.len()];
    for (s, t) in instance.facts() {
        rels[s].insert(t.clone(), 0);
    }
    Db { rels }
}

/// Applies `rule` under the given sources and records new facts.
fn fire(
    db: &Db,
    ri: usize,
    rule: &CompiledRule,
    sources: &[Source],
    fresh: &mut BTreeMap<Fact, DerivationStep>,
    order: &mut Vec<Fact>,
) {
    let mut binding = vec![None; rule.nvars];
    join(db, rule, sources, 0, &mut binding, &mut |b| {
        let fact = Fact {
            symbol: rule.head.symbol,
            tuple: rule.head.vars.iter().map(|&v| b[v].expect("range restricted")).collect(),
        };
        if db.contains(&fact) || fresh.contains_key(&fact) {
            return;
        }
        let body = rule
            .body
            .iter()
            .map(|a| Fact {
                symbol: a.symbol,
                tuple: a.vars.iter().map(|&v| b[v].expect("bound")).collect(),
            })
            .collect();
        let assignment = b.iter().map(|x| x.expect("bound")).collect();
        order.push(fact.clone());
        fresh.insert(
            fact.clone(),
            DerivationStep {
                fact,
                rule: ri,
                body,
                assignment,
            },
        );
    });
}

fn finish(sig: Signature, instance: &Structure, db: Db, trace: DerivationTrace, rounds: usize) -> Evaluation {
    let mut facts = Structure::with_domain(sig, instance.domain());
    for (s, rel) in db.rels.iter().enumerate() {
        for t in rel.keys() {
            facts.insert(s, t.clone());
        }
    }
    Evaluation {
        facts,
        trace,
        rounds,
    }
}

/// Semi-naive bottom-up evaluation to the least fixpoint.
pub fn evaluate(p: &DatalogProgram, instance: &Structure) -> Result<Evaluation> {
    check_instance(p, instance)?;
    let sig = p.full_signature();
    let rules = compile(p, &sig);
    let mut db = initial_db(&sig, instance);
    let mut trace = DerivationTrace::default();
    let mut round = 1;
    loop {
        let mut fresh = BTreeMap::new();
        let mut order = Vec::new();
        for (ri, rule) in rules.iter().enumerate() {
            if round == 1 {
                let sources = vec![Source::Any; rule.body.len()];
                fire(&db, ri, rule, &sources, &mut fresh, &mut order);
                continue;
            }
            let last = round - 1;
            for (i, atom) in rule.body.iter().enumerate() {
                if !atom.idb {
                    continue;
                }
                let sources: Vec<Source> = (0..rule.body.len())
                    .map(|j| match j.cmp(&i) {
                        std::cmp::Ordering::Less => Source::Before(last),
                        std::cmp::Ordering::Equal => Source::At(last),
                        std::cmp::Ordering::Greater => Source::Any,
                    })
                    .collect();
                fire(&db, ri, rule, &sources, &mut fresh, &mut order);
            }
        }
        if order.is_empty() {
            return Ok(finish(sig, instance, db, trace, round));
        }
        for f in order {
            let step = fresh.remove(&f).expect("recorded");
            db.rels[f.symbol].insert(f.tuple.clone(), round);
            trace.steps.push(step);
        }
        round += 1;
    }
}

/// Naive evaluation: every rule over all facts each round. Used as a reference.
pub fn evaluate_naive(p: &DatalogProgram, instance: &Structure) -> Result<Evaluation> {
    check_instance(p, instance)?;
    let sig = p.full_signature();
    let rules = compile(p, &sig);
    let mut db = initial_db(&sig, instance);
    let mut trace = DerivationTrace::default();
    let mut round = 1;
    loop {
        let mut fresh = BTreeMap::new();
        let mut order = Vec::new();
        for (ri, rule) in rules.iter().enumerate() {
            let sources = vec![Source::Any; rule.body.len()];
            fire(&db, ri, rule, &sources, &mut fresh, &mut order);
        }
        if order.is_empty() {
            return Ok(finish(sig, instance, db, trace, round));
        }
        for f in order {
            let step = fresh.remove(&f).expect("recorded");
            db.rels[f.symbol].insert(f.tuple.clone(), round);
            trace.steps.push(step);
        }
        round += 1;
    }
}

/// Whether the least fixpoint contains `false`.
pub fn derives_false(p: &DatalogProgram, instance: &Structure) -> Result<bool> {
    Ok(evaluate(p, instance)?.derived_false())
}

/// Re-checks every step of a trace against the program and instance and
/// returns the set of facts it derives.
pub fn replay_trace(
    p: &DatalogProgram,
    instance: &Structure,
    trace: &DerivationTrace,
) -> Result<BTreeSet<Fact>> {
    check_instance(p, instance)?;
    let sig = p.full_signature();
    let mut known: BTreeSet<Fact> = instance
        .facts()
        .map(|(s, t)| Fact {
            symbol: s,
            tuple: t.clone(),
        })
        .collect();
    let mut derived = BTreeSet::new();
    let bad = |i: usize, m: &str| Error::Precondition(format!("trace step {i}: {m}"));
    for (i, step) in trace.steps.iter().enumerate() {
        let rule = p.rules().get(step.rule).ok_or_else(|| bad(i, "unknown rule"))?;
        let vars = rule.variables();
        if step.assignment.len() != vars.len() || step.assignment.iter().any(|&e| e >= instance.size()) {
            return Err(bad(i, "malformed assignment"));
        }
        let ground = |a: &super::Atom| Fact {
            symbol: sig.index_of(&a.symbol).expect("validated"),
            tuple: a
                .args
                .iter()
                .map(|v| step.assignment[vars.iter().position(|w| w == v).expect("collected")])
                .collect(),
        };
        let body: Vec<Fact> = rule.body.iter().map(ground).collect();
        if body != step.body {
            return Err(bad(i, "body facts do not match the assignment"));
        }
        if let Some(f) = body.iter().find(|f| !known.contains(f)) {
            return Err(bad(i, &format!("body fact {f:?} not yet available")));
        }
        if ground(&rule.head) != step.fact {
            return Err(bad(i, "head does not match the assignment"));
        }
        known.insert(step.fact.clone());
        derived.insert(step.fact.clone());
    }
    Ok(derived)
}
