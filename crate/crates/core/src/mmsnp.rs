//! Monotone monadic SNP sentences without inequality.
//!
//! File format:
//!
//! ```text
//! input E 2
//! monadic P
//! deny E(x,y), E(y,z), E(z,x), P(x), P(y), P(z)
//! deny E(x,y), E(y,z), E(z,x), !P(x), !P(y), !P(z)
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::error::{Error, MmsnpRule, Result};
use crate::homomorphism::hom_exists;
use crate::structure::{disjoint_union, is_connected, Signature, Structure, Symbol};

/// Largest number of monadic bits (elements times predicates) model checking enumerates.
pub const DEFAULT_EXPANSION_BITS: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputAtom {
    pub symbol: String,
    pub args: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MonadicLiteral {
    pub predicate: String,
    pub var: String,
    pub positive: bool,
}

/// One negated conjunction `¬(inputs ∧ monadic literals)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Clause {
    pub inputs: Vec<InputAtom>,
    pub monadic: Vec<MonadicLiteral>,
    pub line: usize,
}

impl Clause {
    /// Variables in order of first occurrence.
    pub fn variables(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let names = self
            .inputs
            .iter()
            .flat_map(|a| a.args.iter())
            .chain(self.monadic.iter().map(|m| &m.var));
        for v in names {
            if !out.contains(v) {
                out.push(v.clone());
            }
        }
        out
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = self
            .inputs
            .iter()
            .map(|a| format!("{}({})", a.symbol, a.args.join(",")))
            .collect();
        parts.extend(
            self.monadic
                .iter()
                .map(|m| format!("{}{}({})", if m.positive { "" } else { "!" }, m.predicate, m.var)),
        );
        write!(f, "deny {}", parts.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MmsnpSentence {
    pub input_signature: Signature,
    pub monadic: Vec<String>,
    pub clauses: Vec<Clause>,
}

impl MmsnpSentence {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in self.input_signature.symbols() {
            out.push_str(&format!("input {} {}\n", s.name, s.arity));
        }
        for p in &self.monadic {
            out.push_str(&format!("monadic {p}\n"));
        }
        for c in &self.clauses {
            out.push_str(&format!("{c}\n"));
        }
        out
    }

    /// Input symbols, the monadic predicates, then their primed copies.
    pub fn expanded_signature(&self) -> Signature {
        let mut sig = self.input_signature.clone();
        for p in &self.monadic {
            sig.push(Symbol::new(p.clone(), 1)).expect("names checked at parse time");
        }
        for p in &self.monadic {
            sig.push(Symbol::new(format!("{p}'"), 1)).expect("names checked at parse time");
        }
        sig
    }
}

fn syntax(line: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        message: message.into(),
    }
}

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '\'')
}

/// Splits `Name(a,b)` into its parts.
fn split_atom(text: &str, line: usize) -> Result<(String, Vec<String>)> {
    let open = text.find('(').ok_or_else(|| syntax(line, format!("expected an atom, got `{text}`")))?;
    if !text.ends_with(')') {
        return Err(syntax(line, format!("unclosed atom `{text}`")));
    }
    let name = text[..open].trim().to_string();
    let inner = text[open + 1..text.len() - 1].trim();
    let args: Vec<String> = if inner.is_empty() {
        Vec::new()
    } else {
        inner.split(',').map(|a| a.trim().to_string()).collect()
    };
    if !is_ident(&name) || args.iter().any(|a| !is_ident(a)) {
        return Err(syntax(line, format!("malformed atom `{text}`")));
    }
    Ok((name, args))
}

/// Splits a clause body at top-level commas.
fn split_literals(body: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for ch in body.chars() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            _ => {}
        }
        if ch == ',' && depth == 0 {
            out.push(cur.trim().to_string());
            cur.clear();
        } else {
            cur.push(ch);
        }
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

pub fn parse_mmsnp(text: &str) -> Result<MmsnpSentence> {
    let mut inputs = Signature::default();
    let mut monadic: Vec<String> = Vec::new();
    let mut clauses = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split(['%', '#']).next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (keyword, rest) = content.split_once(char::is_whitespace).unwrap_or((content, ""));
        let rest = rest.trim();
        match keyword {
            "input" => {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                let [name, arity] = parts[..] else {
                    return Err(syntax(line, "expected `input NAME ARITY`"));
                };
                let arity: usize = arity.parse().map_err(|_| syntax(line, "arity must be a number"))?;
                if !is_ident(name) || monadic.iter().any(|m| m == name) {
                    return Err(syntax(line, format!("bad or duplicate symbol `{name}`")));
                }
                inputs
                    .push(Symbol::new(name, arity))
                    .map_err(|_| syntax(line, format!("duplicate symbol `{name}`")))?;
            }
            "monadic" => {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                let name = match parts[..] {
                    [name] | [name, "1"] => name,
                    [name, _] => {
                        return Err(Error::NotMmsnp {
                            line,
                            rule: MmsnpRule::Monadic,
                            message: format!("existential predicate `{name}` is not unary"),
                        })
                    }
                    _ => return Err(syntax(line, "expected `monadic NAME`")),
                };
                if !is_ident(name) || name.ends_with('\'') {
                    return Err(syntax(line, format!("bad predicate name `{name}`")));
                }
                if inputs.index_of(name).is_some() || monadic.iter().any(|m| m == name) {
                    return Err(syntax(line, format!("duplicate symbol `{name}`")));
                }
                monadic.push(name.to_string());
            }
            "deny" => {
                let mut clause = Clause {
                    inputs: Vec::new(),
                    monadic: Vec::new(),
                    line,
                };
                let literals = split_literals(rest);
                if literals.is_empty() {
                    return Err(syntax(line, "empty clause"));
                }
                for lit in literals {
                    if lit.contains("!=") || lit.contains('≠') {
                        return Err(Error::NotMmsnp {
                            line,
                            rule: MmsnpRule::NoInequality,
                            message: format!("inequality `{lit}`"),
                        });
                    }
                    let (negated, atom) = match lit.strip_prefix('!') {
                        Some(a) => (true, a.trim()),
                        None => (false, lit.as_str()),
                    };
                    let (name, args) = split_atom(atom, line)?;
                    if let Some(s) = inputs.index_of(&name) {
                        if negated {
                            return Err(Error::NotMmsnp {
                                line,
                                rule: MmsnpRule::Monotone,
                                message: format!("input `{name}` occurs negated in a clause body"),
                            });
                        }
                        if args.len() != inputs.arity(s) {
                            return Err(Error::ArityMismatch {
                                line,
                                symbol: name,
                                expected: inputs.arity(s),
                                found: args.len(),
                            });
                        }
                        clause.inputs.push(InputAtom { symbol: name, args });
                    } else if monadic.contains(&name) {
                        let [var] = &args[..] else {
                            return Err(Error::ArityMismatch {
                                line,
                                symbol: name,
                                expected: 1,
                                found: args.len(),
                            });
                        };
                        clause.monadic.push(MonadicLiteral {
                            predicate: name.clone(),
                            var: var.clone(),
                            positive: !negated,
                        });
                    } else {
                        return Err(Error::UndeclaredSymbol { line, symbol: name });
                    }
                }
                clauses.push(clause);
            }
            other => return Err(syntax(line, format!("unknown directive `{other}`"))),
        }
    }
    Ok(MmsnpSentence {
        input_signature: inputs,
        monadic,
        clauses,
    })
}

/// A clause body matched in a structure: the monadic literals it then needs,
/// as (element, predicate index, polarity).
type Trigger = Vec<(usize, usize, bool)>;

fn clause_triggers(phi: &MmsnpSentence, clause: &Clause, s: &Structure) -> Vec<Trigger> {
    let vars = clause.variables();
    let pos = |v: &String| vars.iter().position(|w| w == v).expect("clause variable");
    let atoms: Vec<(usize, Vec<usize>)> = clause
        .inputs
        .iter()
        .map(|a| {
            (
                s.signature().index_of(&a.symbol).expect("checked signature"),
                a.args.iter().map(pos).collect(),
            )
        })
        .collect();
    let mut out = Vec::new();
    let mut assignment = vec![usize::MAX; vars.len()];
    fn assign(
        i: usize,
        assignment: &mut Vec<usize>,
        atoms: &[(usize, Vec<usize>)],
        s: &Structure,
        visit: &mut dyn FnMut(&[usize]),
    ) {
        // prune with atoms fully assigned among the first i variables
        for (sym, args) in atoms {
            if args.iter().all(|&a| a < i) {
                let t: Vec<usize> = args.iter().map(|&a| assignment[a]).collect();
                if !s.holds(*sym, &t) {
                    return;
                }
            }
        }
        if i == assignment.len() {
            visit(assignment);
            return;
        }
        for v in 0..s.size() {
            assignment[i] = v;
            assign(i + 1, assignment, atoms, s, visit);
        }
        assignment[i] = usize::MAX;
    }
    assign(0, &mut assignment, &atoms, s, &mut |a| {
        let mut need: BTreeMap<(usize, usize), bool> = BTreeMap::new();
        let mut contradictory = false;
        for lit in &clause.monadic {
            let p = phi.monadic.iter().position(|m| *m == lit.predicate).expect("declared");
            let key = (a[pos(&lit.var)], p);
            if *need.entry(key).or_insert(lit.positive) != lit.positive {
                contradictory = true;
            }
        }
        if !contradictory {
            out.push(need.into_iter().map(|((e, p), b)| (e, p, b)).collect());
        }
    });
    out
}

/// A monadic expansion (bitmask of predicates per element) avoiding every clause.
pub fn find_expansion(phi: &MmsnpSentence, s: &Structure, max_bits: usize) -> Result<Option<Vec<u32>>> {
    if s.signature() != &phi.input_signature {
        return Err(Error::SignatureMismatch("structure must use the sentence's input signature".into()));
    }
    let p = phi.monadic.len();
    if s.size() * p > max_bits || p > 31 {
        return Err(Error::BudgetExceeded(1u64 << max_bits.min(63)));
    }
    // triggers grouped by the largest element they mention
    let mut by_last: Vec<Vec<Trigger>> = vec![Vec::new(); s.size()];
    for clause in &phi.clauses {
        for trig in clause_triggers(phi, clause, s) {
            match trig.iter().map(|t| t.0).max() {
                Some(last) => by_last[last].push(trig),
                // a match needing no monadic literal always fires
                None => return Ok(None),
            }
        }
    }
    let mut masks = vec![0u32; s.size()];
    fn fires(trig: &Trigger, masks: &[u32]) -> bool {
        trig.iter().all(|&(e, p, b)| (masks[e] >> p & 1 == 1) == b)
    }
    fn go(v: usize, p: usize, masks: &mut Vec<u32>, by_last: &[Vec<Trigger>]) -> bool {
        if v == masks.len() {
            return true;
        }
        for m in 0..1u32 << p {
            masks[v] = m;
            if !by_last[v].iter().any(|t| fires(t, masks)) && go(v + 1, p, masks, by_last) {
                return true;
            }
        }
        false
    }
    Ok(go(0, p, &mut masks, &by_last).then_some(masks))
}

/// Whether `s` satisfies `phi`.
pub fn model_check(phi: &MmsnpSentence, s: &Structure) -> Result<bool> {
    Ok(find_expansion(phi, s, DEFAULT_EXPANSION_BITS)?.is_some())
}

/// Canonical databases of the clause bodies over inputs plus `P` and `P'`.
#[derive(Debug, Clone)]
pub struct ObstructionSet {
    pub structures: Vec<Structure>,
}

pub fn obstruction_structures(phi: &MmsnpSentence) -> ObstructionSet {
    let sig = phi.expanded_signature();
    let structures = phi
        .clauses
        .iter()
        .map(|c| {
            let mut s = Structure::with_domain(sig.clone(), &c.variables());
            for a in &c.inputs {
                let args: Vec<&str> = a.args.iter().map(String::as_str).collect();
                s.add_fact(&a.symbol, &args).expect("validated clause");
            }
            for m in &c.monadic {
                let name = if m.positive {
                    m.predicate.clone()
                } else {
                    format!("{}'", m.predicate)
                };
                s.add_fact(&name, &[m.var.as_str()]).expect("validated clause");
            }
            s
        })
        .collect();
    ObstructionSet { structures }
}

/// Gaifman connectivity of each obstruction.
pub fn connectivity_report(obs: &ObstructionSet) -> Vec<bool> {
    obs.structures.iter().map(is_connected).collect()
}

/// Accepts iff no obstruction maps into the instance.
pub fn decide_by_obstructions(n: &[Structure], instance: &Structure) -> Result<bool> {
    for o in n {
        if o.signature() != instance.signature() {
            return Err(Error::SignatureMismatch("obstruction and instance signatures differ".into()));
        }
        if hom_exists(o, instance)? {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ClosureReport {
    pub pairs_checked: usize,
    /// Indices of pairs whose members are models but whose union is not.
    pub violations: Vec<usize>,
}

/// Looks for pairs of models whose disjoint union is not a model.
pub fn disjoint_union_closure_probe(phi: &MmsnpSentence, samples: &[(Structure, Structure)]) -> Result<ClosureReport> {
    let mut report = ClosureReport::default();
    for (i, (a, b)) in samples.iter().enumerate() {
        report.pairs_checked += 1;
        if model_check(phi, a)? && model_check(phi, b)? && !model_check(phi, &disjoint_union(a, b)?)? {
            report.violations.push(i);
        }
    }
    Ok(report)
}

/// The triangle-free two-partition problem on symmetric graphs over `E`.
pub const TRIANGLE_PARTITION: &str = "\
input E 2
monadic P
deny E(x,y), E(y,z), E(z,x), P(x), P(y), P(z)
deny E(x,y), E(y,z), E(z,x), !P(x), !P(y), !P(z)
";

/// Distinct clause atoms in a set form, for round-trip comparisons.
pub fn clause_atoms(c: &Clause) -> BTreeSet<(String, Vec<String>)> {
    let mut out: BTreeSet<(String, Vec<String>)> =
        c.inputs.iter().map(|a| (a.symbol.clone(), a.args.clone())).collect();
    for m in &c.monadic {
        let name = if m.positive {
            m.predicate.clone()
        } else {
            format!("{}'", m.predicate)
        };
        out.insert((name, vec![m.var.clone()]));
    }
    out
}
