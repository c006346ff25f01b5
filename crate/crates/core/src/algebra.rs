//! Powers of finite templates, polymorphism search, and the global
//! consistency probe used as strict-width evidence.

use std::collections::{BTreeSet, HashSet};

use serde::Serialize;

use crate::consistency::{establish_lk_consistency, ConstraintStore};
use crate::error::{Error, Result};
use crate::structure::Structure;
use crate::template::{AssignmentClass, TemplateHandle};

/// Largest power structure built by default.
pub const DEFAULT_POWER_BUDGET: usize = 4096;
/// Search steps allowed to the polymorphism search by default.
pub const DEFAULT_STEP_BUDGET: u64 = 50_000_000;
/// Largest instance the probe handles.
pub const PROBE_CAP: usize = 7;

fn finite(t: &TemplateHandle) -> Result<&Structure> {
    t.as_finite()
        .ok_or_else(|| Error::Unsupported("operation needs a finite template".into()))
}

/// Mixed-radix code of a tuple, first coordinate most significant.
fn encode(tuple: &[usize], d: usize) -> usize {
    tuple.iter().fold(0, |acc, &x| acc * d + x)
}

fn decode(mut code: usize, d: usize, m: usize) -> Vec<usize> {
    let mut out = vec![0; m];
    for slot in out.iter_mut().rev() {
        *slot = code % d;
        code /= d;
    }
    out
}

/// The m-th categorical power: m-tuples related coordinatewise.
pub fn power_structure_alg(t: &TemplateHandle, m: usize) -> Result<Structure> {
    power_structure_alg_budget(t, m, DEFAULT_POWER_BUDGET)
}

pub fn power_structure_alg_budget(t: &TemplateHandle, m: usize, budget: usize) -> Result<Structure> {
    let g = finite(t)?;
    let d = g.size();
    let size = d
        .checked_pow(m as u32)
        .filter(|&s| s <= budget)
        .ok_or(Error::BudgetExceeded(budget as u64))?;
    let mut p = Structure::new(g.signature().clone());
    for code in 0..size {
        let names: Vec<&str> = decode(code, d, m).iter().map(|&x| g.element(x)).collect();
        p.add_element(&format!("({})", names.join(",")));
    }
    for s in 0..g.signature().len() {
        for fact in power_facts(g, s, m) {
            p.insert(s, fact);
        }
    }
    Ok(p)
}

/// Facts of symbol `s` in the m-th power, as tuples of element codes.
fn power_facts(g: &Structure, s: usize, m: usize) -> Vec<Vec<usize>> {
    let rel: Vec<&Vec<usize>> = g.relation(s).iter().collect();
    let arity = g.signature().arity(s);
    let d = g.size();
    if rel.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    // one template tuple per coordinate
    let total = rel.len().pow(m as u32);
    for code in 0..total {
        let pick = decode(code, rel.len(), m);
        let fact: Vec<usize> = (0..arity)
            .map(|i| encode(&pick.iter().map(|&r| rel[r][i]).collect::<Vec<_>>(), d))
            .collect();
        out.push(fact);
    }
    out
}

/// A total m-ary operation on a finite domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OperationTable {
    pub arity: usize,
    pub domain_size: usize,
    /// Values indexed by the mixed-radix code of the arguments.
    pub table: Vec<usize>,
}

impl OperationTable {
    pub fn projection(arity: usize, domain_size: usize, coordinate: usize) -> Self {
        let table = (0..domain_size.pow(arity as u32))
            .map(|c| decode(c, domain_size, arity)[coordinate])
            .collect();
        OperationTable {
            arity,
            domain_size,
            table,
        }
    }

    pub fn apply(&self, args: &[usize]) -> usize {
        self.table[encode(args, self.domain_size)]
    }

    /// Whether f(x,..,x,y,x,..,x) = x for all x, y in `on`.
    pub fn is_near_unanimity_on(&self, on: &[usize]) -> bool {
        for &x in on {
            for &y in on {
                for pos in 0..self.arity {
                    let mut args = vec![x; self.arity];
                    args[pos] = y;
                    if self.apply(&args) != x {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Rows `x1,...,xm,f` with template element names.
    pub fn to_csv(&self, t: &Structure) -> String {
        let mut out = String::new();
        for (code, &v) in self.table.iter().enumerate() {
            let mut row: Vec<&str> = decode(code, self.domain_size, self.arity)
                .iter()
                .map(|&x| t.element(x))
                .collect();
            row.push(t.element(v));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, t: &Structure) -> Result<Self> {
        let d = t.size();
        let mut arity = None;
        let mut table: Vec<Option<usize>> = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            let m = cells.len() - 1;
            if *arity.get_or_insert(m) != m {
                return Err(Error::Syntax {
                    line: i + 1,
                    message: "rows differ in length".into(),
                });
            }
            if table.is_empty() {
                table = vec![None; d.pow(m as u32)];
            }
            let idx: Option<Vec<usize>> = cells.iter().map(|c| t.element_index(c)).collect();
            let idx = idx.ok_or_else(|| Error::Syntax {
                line: i + 1,
                message: "unknown template element".into(),
            })?;
            table[encode(&idx[..m], d)] = Some(idx[m]);
        }
        let arity = arity.ok_or_else(|| Error::Syntax {
            line: 0,
            message: "empty table".into(),
        })?;
        let table: Option<Vec<usize>> = table.into_iter().collect();
        let table = table.ok_or_else(|| Error::Syntax {
            line: 0,
            message: "table is not total".into(),
        })?;
        Ok(OperationTable {
            arity,
            domain_size: d,
            table,
        })
    }
}

/// Whether `f` preserves every relation of the finite template.
pub fn verify_polymorphism(f: &OperationTable, t: &TemplateHandle) -> bool {
    let Some(g) = t.as_finite() else {
        return false;
    };
    let d = g.size();
    if f.domain_size != d || f.table.len() != d.pow(f.arity as u32) || f.table.iter().any(|&v| v >= d) {
        return false;
    }
    for s in 0..g.signature().len() {
        let rel: Vec<&Vec<usize>> = g.relation(s).iter().collect();
        let arity = g.signature().arity(s);
        if rel.is_empty() {
            continue;
        }
        // all f.arity-long sequences of relation tuples
        for code in 0..rel.len().pow(f.arity as u32) {
            let pick = decode(code, rel.len(), f.arity);
            let image: Vec<usize> = (0..arity)
                .map(|i| f.apply(&pick.iter().map(|&r| rel[r][i]).collect::<Vec<_>>()))
                .collect();
            if !g.holds(s, &image) {
                return false;
            }
        }
    }
    true
}

struct PolySearch<'a> {
    d: usize,
    /// constraints: (symbol, entry codes)
    facts: Vec<(usize, Vec<usize>)>,
    by_entry: Vec<Vec<usize>>,
    g: &'a Structure,
    steps: u64,
    budget: u64,
}

impl PolySearch<'_> {
    fn fact_ok(&self, fact: usize, table: &[Option<usize>]) -> bool {
        let (s, entries) = &self.facts[fact];
        let values: Option<Vec<usize>> = entries.iter().map(|&e| table[e]).collect();
        match values {
            Some(v) => self.g.holds(*s, &v),
            None => {
                // some template tuple must still fit the assigned coordinates
                self.g.relation(*s).iter().any(|r| {
                    entries
                        .iter()
                        .zip(r)
                        .all(|(&e, &x)| table[e].is_none_or(|v| v == x))
                        && entries
                            .iter()
                            .enumerate()
                            .all(|(i, &e)| entries.iter().enumerate().all(|(j, &e2)| e != e2 || r[i] == r[j]))
                })
            }
        }
    }

    fn run(&mut self, table: &mut Vec<Option<usize>>, order: &[usize], at: usize) -> Result<bool> {
        if at == order.len() {
            return Ok(true);
        }
        let entry = order[at];
        if table[entry].is_some() {
            return self.run(table, order, at + 1);
        }
        for v in 0..self.d {
            self.steps += 1;
            if self.steps > self.budget {
                return Err(Error::BudgetExceeded(self.budget));
            }
            table[entry] = Some(v);
            if self.by_entry[entry].iter().all(|&f| self.fact_ok(f, table)) && self.run(table, order, at + 1)? {
                return Ok(true);
            }
        }
        table[entry] = None;
        Ok(false)
    }
}

/// Backtracking search for an m-ary polymorphism that is near-unanimous on `on`.
pub fn find_nu_polymorphism(t: &TemplateHandle, m: usize, on: &[usize]) -> Result<Option<OperationTable>> {
    find_nu_polymorphism_budget(t, m, on, DEFAULT_STEP_BUDGET)
}

pub fn find_nu_polymorphism_budget(
    t: &TemplateHandle,
    m: usize,
    on: &[usize],
    budget: u64,
) -> Result<Option<OperationTable>> {
    let g = finite(t)?;
    if m < 3 {
        return Err(Error::Precondition("near-unanimity needs arity at least 3".into()));
    }
    let d = g.size();
    if on.iter().any(|&a| a >= d) {
        return Err(Error::Precondition("subset names a non-element".into()));
    }
    let entries = d
        .checked_pow(m as u32)
        .filter(|&s| s as u64 <= budget)
        .ok_or(Error::BudgetExceeded(budget))?;
    let mut table: Vec<Option<usize>> = vec![None; entries];
    let on_set: BTreeSet<usize> = on.iter().copied().collect();
    for &x in &on_set {
        for &y in &on_set {
            for pos in 0..m {
                let mut args = vec![x; m];
                args[pos] = y;
                table[encode(&args, d)] = Some(x);
            }
        }
    }
    let mut facts = Vec::new();
    let mut by_entry = vec![Vec::new(); entries];
    for s in 0..g.signature().len() {
        for fact in power_facts(g, s, m) {
            let id = facts.len();
            for &e in fact.iter().collect::<BTreeSet<_>>() {
                by_entry[e].push(id);
            }
            facts.push((s, fact));
        }
    }
    // the zero-ary and unary constraints on seeded entries must hold already
    let mut search = PolySearch {
        d,
        facts,
        by_entry,
        g,
        steps: 0,
        budget,
    };
    if !(0..search.facts.len()).all(|f| search.fact_ok(f, &table)) {
        return Ok(None);
    }
    // most constrained entries first
    let mut order: Vec<usize> = (0..entries).filter(|&e| table[e].is_none()).collect();
    order.sort_by_key(|&e| std::cmp::Reverse(search.by_entry[e].len()));
    if !search.run(&mut table, &order, 0)? {
        return Ok(None);
    }
    Ok(Some(OperationTable {
        arity: m,
        domain_size: d,
        table: table.into_iter().map(|v| v.expect("assigned")).collect(),
    }))
}

/// A partial solution on sorted variables that satisfies the store but has no
/// extension to a full solution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PartialAssignment {
    pub variables: Vec<usize>,
    pub class: AssignmentClass,
}

#[derive(Debug, Clone, Serialize)]
pub struct GlobalConsistencyReport {
    pub instance_id: String,
    #[serde(skip)]
    pub store: ConstraintStore,
    pub counterexample: Option<PartialAssignment>,
    /// Partial assignments examined.
    pub checked: usize,
    /// Counterexample cross-checked against all full solutions.
    pub verified: bool,
    /// The probe covers one bounded instance: evidence, not proof.
    pub label: &'static str,
}

struct Probe<'a> {
    instance: &'a Structure,
    t: &'a TemplateHandle,
    store: &'a ConstraintStore,
    facts: Vec<(usize, Vec<usize>)>,
}

impl Probe<'_> {
    /// Facts inside `vars` (listed in class position order) that mention `new`.
    fn facts_hold(&self, vars: &[usize], c: &AssignmentClass, new: usize) -> bool {
        self.facts.iter().all(|(s, tuple)| {
            if !tuple.contains(&new) {
                return true;
            }
            let pos: Option<Vec<usize>> = tuple.iter().map(|v| vars.iter().position(|w| w == v)).collect();
            pos.is_none_or(|p| self.t.holds_at(*s, c, &p))
        })
    }

    fn extends(&self, vars: &mut Vec<usize>, c: &AssignmentClass) -> bool {
        let Some(next) = (0..self.instance.size()).find(|v| !vars.contains(v)) else {
            return true;
        };
        vars.push(next);
        let found = self
            .t
            .extend(c)
            .into_iter()
            .any(|c2| self.facts_hold(vars, &c2, next) && self.extends(vars, &c2));
        vars.pop();
        found
    }

    /// Level by level, so the smallest counterexample is reported.
    fn search(&self, checked: &mut usize) -> Option<PartialAssignment> {
        let mut level: Vec<(Vec<usize>, AssignmentClass)> = vec![(Vec::new(), self.t.empty_class())];
        while !level.is_empty() {
            for (vars, c) in &level {
                *checked += 1;
                if !self.extends(&mut vars.clone(), c) {
                    return Some(PartialAssignment {
                        variables: vars.clone(),
                        class: c.clone(),
                    });
                }
            }
            let mut next = Vec::new();
            for (vars, c) in &level {
                let start = vars.last().map_or(0, |v| v + 1);
                for v in start..self.instance.size() {
                    let mut grown = vars.clone();
                    grown.push(v);
                    let mask = grown.iter().fold(0u32, |m, &x| m | 1 << x);
                    for c2 in self.t.extend(c) {
                        if self.facts_hold(&grown, &c2, v) && self.store.admits(mask, &c2) {
                            next.push((grown.clone(), c2));
                        }
                    }
                }
            }
            level = next;
        }
        None
    }
}

/// Projections of every full solution onto `vars`.
fn solution_projections(instance: &Structure, t: &TemplateHandle, vars: &[usize]) -> HashSet<AssignmentClass> {
    let n = instance.size();
    let mut level = vec![t.empty_class()];
    for v in 0..n {
        let mut next = Vec::new();
        for c in &level {
            for c2 in t.extend(c) {
                let ok = instance.facts().all(|(s, tuple)| {
                    !tuple.contains(&v) || tuple.iter().any(|&x| x > v) || t.holds_at(s, &c2, tuple)
                });
                if ok {
                    next.push(c2);
                }
            }
        }
        level = next;
    }
    level.iter().map(|c| c.restrict(vars)).collect()
}

/// Establishes (l,k)-consistency and searches for a store-consistent partial
/// assignment that does not extend to a solution.
pub fn global_consistency_probe(
    instance: &Structure,
    t: &TemplateHandle,
    l: usize,
    k: usize,
) -> Result<GlobalConsistencyReport> {
    if instance.size() > PROBE_CAP {
        return Err(Error::CapExceeded(format!(
            "probe handles at most {PROBE_CAP} variables, got {}",
            instance.size()
        )));
    }
    let store = establish_lk_consistency(instance, t, l, k)?;
    if store.failed() {
        return Err(Error::Precondition("consistency failed on this instance".into()));
    }
    let probe = Probe {
        instance,
        t,
        store: &store,
        facts: instance.facts().map(|(s, tu)| (s, tu.clone())).collect(),
    };
    let mut checked = 0;
    let counterexample = probe.search(&mut checked);
    let verified = match &counterexample {
        Some(p) => !solution_projections(instance, t, &p.variables).contains(&p.class),
        None => true,
    };
    Ok(GlobalConsistencyReport {
        instance_id: instance_id(instance),
        store,
        counterexample,
        checked,
        verified,
        label: "evidence",
    })
}

fn instance_id(s: &Structure) -> String {
    let facts: Vec<String> = s
        .facts()
        .map(|(sym, t)| {
            let args: Vec<&str> = t.iter().map(|&v| s.element(v)).collect();
            format!("{}({})", s.signature().name(sym), args.join(","))
        })
        .collect();
    format!("n{}:{}", s.size(), facts.join(";"))
}

/// Elements named in `names`, as indices.
pub fn element_subset(t: &Structure, names: &[&str]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|n| {
            t.element_index(n)
                .ok_or_else(|| Error::Precondition(format!("unknown template element {n}")))
        })
        .collect()
}
