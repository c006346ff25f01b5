//! (l,k)-consistency: the canonical (l,k)-Datalog program evaluated over
//! assignment classes, plus arc consistency and power structures.

mod arc;
mod canonical;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::structure::Structure;
use crate::template::{AssignmentClass, ClassSpace, TemplateHandle};

pub use arc::{ac_solves, arc_consistency, power_structure, ArcResult, DEFAULT_POWER_CAP};
pub use canonical::{materialize_canonical_program, DEFAULT_RULE_BUDGET};

/// Largest instance the subset-indexed engines accept.
pub const MAX_VARIABLES: usize = 24;

/// Order in which revision units are processed. The fixpoint does not depend on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    /// Worklist of units, re-queued when an entry they read shrinks.
    #[default]
    Fifo,
    /// Repeated passes over all units until nothing changes.
    Sweep,
}

/// Which variable sets are revised together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scope {
    /// Every set of `min(k, n)` variables, with all facts inside it.
    #[default]
    Windows,
    /// The variables of one fact, with only that fact (one EDB atom per rule).
    PerFact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConsistencyOptions {
    pub schedule: Schedule,
    pub scope: Scope,
}

/// Allowed classes for every set of at most `l` variables.
///
/// Keys are variable sets as bitmasks; a class on a set lists its variables in
/// increasing index order. [`ConstraintStore::allowed`] answers for arbitrary
/// ordered tuples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintStore {
    variables: usize,
    l: usize,
    k: usize,
    entries: BTreeMap<u32, BTreeSet<AssignmentClass>>,
    failed: bool,
    iterations: usize,
}

pub(crate) fn members(mask: u32) -> Vec<usize> {
    (0..32).filter(|&i| mask >> i & 1 == 1).collect()
}

/// All subsets of `0..n` with exactly `size` elements, in colexicographic order.
pub(crate) fn subsets_of_size(n: usize, size: usize) -> Vec<u32> {
    (0u32..1 << n).filter(|m| m.count_ones() as usize == size).collect()
}

/// All submasks of `mask` with at most `l` bits.
pub(crate) fn small_submasks(mask: u32, l: usize) -> Vec<u32> {
    let mut out = Vec::new();
    let mut sub = mask;
    loop {
        if sub.count_ones() as usize <= l {
            out.push(sub);
        }
        if sub == 0 {
            break;
        }
        sub = (sub - 1) & mask;
    }
    out.sort_unstable();
    out
}

/// Local mask of `sub` inside `unit`: bit j set when the j-th member of `unit` is in `sub`.
pub(crate) fn local_mask(unit: u32, sub: u32) -> u32 {
    let mut out = 0;
    for (j, v) in members(unit).into_iter().enumerate() {
        if sub >> v & 1 == 1 {
            out |= 1 << j;
        }
    }
    out
}

impl ConstraintStore {
    pub fn failed(&self) -> bool {
        self.failed
    }

    pub fn accepted(&self) -> bool {
        !self.failed
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn width(&self) -> (usize, usize) {
        (self.l, self.k)
    }

    pub fn variables(&self) -> usize {
        self.variables
    }

    /// Entries keyed by variable set.
    pub fn entries(&self) -> &BTreeMap<u32, BTreeSet<AssignmentClass>> {
        &self.entries
    }

    /// The entry for a set of variables (at most `l` of them).
    pub fn entry(&self, vars: &[usize]) -> Option<&BTreeSet<AssignmentClass>> {
        let mask = vars.iter().fold(0u32, |m, &v| m | 1 << v);
        self.entries.get(&mask)
    }

    /// Allowed classes for an ordered tuple of variables (repeats allowed),
    /// obtained from the entry on its set of distinct variables.
    pub fn allowed(&self, tuple: &[usize]) -> Option<BTreeSet<AssignmentClass>> {
        let mut sorted: Vec<usize> = tuple.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let positions: Vec<usize> = tuple
            .iter()
            .map(|v| sorted.binary_search(v).expect("present"))
            .collect();
        Some(
            self.entry(&sorted)?
                .iter()
                .map(|c| c.restrict(&positions))
                .collect(),
        )
    }

    /// Whether class `c` on the sorted variable set `mask` respects every entry
    /// on its subsets of at most `l` variables.
    pub fn admits(&self, mask: u32, c: &AssignmentClass) -> bool {
        if self.failed {
            return false;
        }
        for sub in small_submasks(mask, self.l) {
            let positions: Vec<usize> = members(local_mask(mask, sub)).into_iter().collect();
            match self.entries.get(&sub) {
                Some(entry) if entry.contains(&c.restrict(&positions)) => {}
                _ => return false,
            }
        }
        true
    }

    /// Restrictions of every stored class to every smaller key are stored too.
    pub fn is_downward_closed(&self) -> bool {
        self.entries.iter().all(|(&mask, classes)| {
            classes.iter().all(|c| {
                small_submasks(mask, self.l).into_iter().all(|sub| {
                    let positions = members(local_mask(mask, sub));
                    self.entries
                        .get(&sub)
                        .is_some_and(|e| e.contains(&c.restrict(&positions)))
                })
            })
        })
    }

    /// JSON report: `{accepted, entries: [{vars, classes}], iterations}`.
    pub fn to_json(&self, instance: &Structure, t: &TemplateHandle) -> serde_json::Value {
        #[derive(Serialize)]
        struct Entry {
            vars: Vec<String>,
            classes: Vec<String>,
        }
        let entries: Vec<Entry> = self
            .entries
            .iter()
            .filter(|(&m, _)| m != 0)
            .map(|(&m, cs)| Entry {
                vars: members(m).into_iter().map(|v| instance.element(v).to_string()).collect(),
                classes: cs.iter().map(|c| t.describe(c)).collect(),
            })
            .collect();
        serde_json::json!({
            "accepted": self.accepted(),
            "entries": entries,
            "iterations": self.iterations,
        })
    }
}

fn check_params(instance: &Structure, t: &TemplateHandle, l: usize, k: usize) -> Result<()> {
    if instance.signature() != t.signature() {
        return Err(Error::SignatureMismatch(
            "instance and template signatures differ".into(),
        ));
    }
    if l < 1 || l >= k {
        return Err(Error::Precondition(format!("need 1 <= l < k, got l={l}, k={k}")));
    }
    if k < t.signature().max_arity() {
        return Err(Error::Precondition(format!(
            "k={k} is below the template's maximal arity {}",
            t.signature().max_arity()
        )));
    }
    if k > t.class_cap() {
        return Err(Error::CapExceeded(format!(
            "k={k} exceeds the class cap {}",
            t.class_cap()
        )));
    }
    if instance.size() > MAX_VARIABLES {
        return Err(Error::CapExceeded(format!(
            "instance has {} elements, at most {MAX_VARIABLES} supported",
            instance.size()
        )));
    }
    Ok(())
}

/// A revision unit: a variable set and the facts checked inside it.
struct Unit {
    mask: u32,
    /// (symbol, positions within the unit)
    facts: Vec<(usize, Vec<usize>)>,
    /// (global key, local mask) for every key of at most `l` variables inside the unit.
    keys: Vec<(u32, u32)>,
}

fn fact_positions(mask: u32, tuple: &[usize]) -> Vec<usize> {
    let vars = members(mask);
    tuple
        .iter()
        .map(|v| vars.iter().position(|w| w == v).expect("inside unit"))
        .collect()
}

fn build_units(instance: &Structure, k: usize, l: usize, scope: Scope) -> Vec<Unit> {
    let n = instance.size();
    let fact_mask = |t: &[usize]| t.iter().fold(0u32, |m, &v| m | 1 << v);
    let masks: Vec<(u32, Option<(usize, Vec<usize>)>)> = match scope {
        Scope::Windows => subsets_of_size(n, k.min(n)).into_iter().map(|m| (m, None)).collect(),
        Scope::PerFact => instance
            .facts()
            .map(|(s, t)| (fact_mask(t), Some((s, t.clone()))))
            .collect(),
    };
    masks
        .into_iter()
        .map(|(mask, only)| {
            let facts = match only {
                Some((s, t)) => vec![(s, fact_positions(mask, &t))],
                None => instance
                    .facts()
                    .filter(|(_, t)| fact_mask(t) & !mask == 0)
                    .map(|(s, t)| (s, fact_positions(mask, t)))
                    .collect(),
            };
            let keys = small_submasks(mask, l)
                .into_iter()
                .map(|sub| (sub, local_mask(mask, sub)))
                .collect();
            Unit { mask, facts, keys }
        })
        .collect()
}

/// Greatest (l,k)-consistent store, i.e. the fixpoint of the canonical
/// (l,k)-Datalog program; `failed` iff that program derives `false`.
pub fn establish_lk_consistency(
    instance: &Structure,
    t: &TemplateHandle,
    l: usize,
    k: usize,
) -> Result<ConstraintStore> {
    establish_with(instance, t, l, k, ConsistencyOptions::default())
}

pub fn establish_with(
    instance: &Structure,
    t: &TemplateHandle,
    l: usize,
    k: usize,
    options: ConsistencyOptions,
) -> Result<ConstraintStore> {
    check_params(instance, t, l, k)?;
    let mut space = ClassSpace::new(t, k)?;
    let n = instance.size();
    let units = build_units(instance, k, l, options.scope);

    // working entries as bit vectors over class indices
    let mut work: BTreeMap<u32, Vec<bool>> = BTreeMap::new();
    for size in 0..=l.min(n) {
        for mask in subsets_of_size(n, size) {
            work.insert(mask, vec![true; space.count(size)]);
        }
    }
    let mut readers: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (ui, u) in units.iter().enumerate() {
        for &(key, _) in &u.keys {
            readers.entry(key).or_default().push(ui);
        }
    }

    let mut iterations = 0;
    let mut failed = false;
    // a 0-ary fact that fails in the template refutes immediately
    for (s, tuple) in instance.facts() {
        if tuple.is_empty() && !t.class_holds(s, &t.empty_class()) {
            failed = true;
        }
    }

    let revise = |ui: usize, work: &mut BTreeMap<u32, Vec<bool>>, space: &mut ClassSpace| -> (bool, Vec<u32>) {
        let u = &units[ui];
        let m = u.mask.count_ones() as usize;
        let count = space.count(m);
        let mut sol = vec![true; count];
        for (s, pos) in &u.facts {
            let table = space.holds_table(m, *s, pos);
            for (x, h) in sol.iter_mut().zip(table.iter()) {
                *x &= *h;
            }
        }
        for &(key, local) in &u.keys {
            let entry = &work[&key];
            let r = space.restriction(m, local);
            for (c, x) in sol.iter_mut().enumerate() {
                if *x && !entry[r[c] as usize] {
                    *x = false;
                }
            }
        }
        if !sol.iter().any(|&x| x) {
            return (true, Vec::new());
        }
        let mut changed = Vec::new();
        for &(key, local) in &u.keys {
            let r = space.restriction(m, local);
            let size = local.count_ones() as usize;
            let mut proj = vec![false; space.count(size)];
            for (c, &x) in sol.iter().enumerate() {
                if x {
                    proj[r[c] as usize] = true;
                }
            }
            let entry = work.get_mut(&key).expect("key present");
            let mut shrunk = false;
            for (e, p) in entry.iter_mut().zip(&proj) {
                if *e && !*p {
                    *e = false;
                    shrunk = true;
                }
            }
            if shrunk {
                changed.push(key);
            }
        }
        (false, changed)
    };

    if !failed {
        match options.schedule {
            Schedule::Fifo => {
                let mut queue: VecDeque<usize> = (0..units.len()).collect();
                let mut queued = vec![true; units.len()];
                while let Some(ui) = queue.pop_front() {
                    queued[ui] = false;
                    iterations += 1;
                    let (dead, changed) = revise(ui, &mut work, &mut space);
                    if dead {
                        failed = true;
                        break;
                    }
                    for key in changed {
                        for &other in &readers[&key] {
                            if !queued[other] {
                                queued[other] = true;
                                queue.push_back(other);
                            }
                        }
                    }
                }
            }
            Schedule::Sweep => 'sweep: loop {
                let mut any = false;
                for ui in 0..units.len() {
                    iterations += 1;
                    let (dead, changed) = revise(ui, &mut work, &mut space);
                    if dead {
                        failed = true;
                        break 'sweep;
                    }
                    any |= !changed.is_empty();
                }
                if !any {
                    break;
                }
            },
        }
    }

    let entries = if failed {
        work.keys().map(|&m| (m, BTreeSet::new())).collect()
    } else {
        work.into_iter()
            .map(|(mask, bits)| {
                let m = mask.count_ones() as usize;
                let set = bits
                    .iter()
                    .enumerate()
                    .filter(|(_, &b)| b)
                    .map(|(i, _)| space.class(m, i as u32).clone())
                    .collect();
                (mask, set)
            })
            .collect()
    };
    Ok(ConstraintStore {
        variables: n,
        l,
        k,
        entries,
        failed,
        iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SolveReport {
    pub accepted: bool,
    pub satisfiable: bool,
    pub agrees_with_oracle: bool,
}

/// Runs consistency and the oracle side by side.
pub fn solves_on(instance: &Structure, t: &TemplateHandle, l: usize, k: usize) -> Result<SolveReport> {
    let accepted = establish_lk_consistency(instance, t, l, k)?.accepted();
    let satisfiable = t.decide_csp(instance)?.satisfiable;
    Ok(SolveReport {
        accepted,
        satisfiable,
        agrees_with_oracle: accepted == satisfiable,
    })
}
