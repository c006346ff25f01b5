//! Explicit canonical (l,k)-Datalog programs for small finite templates.
//!
//! IDB `r{m}_{bits}` stands for the m-ary relation whose member tuples are the
//! set bits (tuples of template elements in lexicographic code order). Only
//! relations reachable from the instance relations by k-variable inferences
//! are introduced.

use std::collections::BTreeSet;

use crate::datalog::{Atom, DatalogProgram, Rule, FALSE};
use crate::error::{Error, Result};
use crate::structure::{Signature, Symbol};
use crate::template::TemplateHandle;

/// Default bound on the number of rule bodies examined.
pub const DEFAULT_RULE_BUDGET: u64 = 5_000_000;

/// A relation on `D^m` as a bitmask over tuple codes.
type Rel = u64;

fn idb_name(m: usize, rel: Rel, codes: usize) -> String {
    let bits: String = (0..codes).map(|c| if rel >> c & 1 == 1 { '1' } else { '0' }).collect();
    format!("r{m}_{bits}")
}

fn var(i: usize) -> String {
    format!("x{i}")
}

struct Closure<'a> {
    t: &'a TemplateHandle,
    d: usize,
    l: usize,
    k: usize,
    /// reachable relations per arity (never the full relation)
    reachable: Vec<BTreeSet<Rel>>,
    budget: u64,
    spent: u64,
}

impl Closure<'_> {
    fn codes(&self, m: usize) -> usize {
        self.d.pow(m as u32)
    }

    fn full(&self, m: usize) -> Rel {
        let c = self.codes(m);
        if c == 64 {
            u64::MAX
        } else {
            (1u64 << c) - 1
        }
    }

    fn code_of(&self, tuple: impl Iterator<Item = usize>) -> usize {
        tuple.fold(0, |acc, v| acc * self.d + v)
    }

    /// Runs every inference once; returns the rules and any new relations.
    fn pass(&mut self) -> Result<(Vec<Rule>, Vec<(usize, Rel)>)> {
        let sig = self.t.signature().clone();
        let template = self.t.as_finite().expect("finite");
        let mut rules = Vec::new();
        let mut found = Vec::new();
        for w in 1..=self.k {
            // every EDB atom over w variables
            let mut atoms: Vec<(usize, Vec<usize>)> = Vec::new();
            for s in 0..sig.len() {
                let a = sig.arity(s);
                if a == 0 {
                    continue;
                }
                for mut code in 0..w.pow(a as u32) {
                    let mut args = vec![0; a];
                    for slot in args.iter_mut().rev() {
                        *slot = code % w;
                        code /= w;
                    }
                    atoms.push((s, args));
                }
            }
            if atoms.len() > 40 {
                return Err(Error::BudgetExceeded(self.budget));
            }
            // every nonempty sorted sub-tuple of at most l variables
            let subs: Vec<Vec<usize>> = (1u32..1 << w)
                .filter(|m| m.count_ones() as usize <= self.l)
                .map(|m| (0..w).filter(|&i| m >> i & 1 == 1).collect())
                .collect();
            let choices: Vec<Vec<Option<Rel>>> = subs
                .iter()
                .map(|s| {
                    std::iter::once(None)
                        .chain(self.reachable[s.len()].iter().map(|&r| Some(r)))
                        .collect()
                })
                .collect();
            let combos: u64 = choices.iter().map(|c| c.len() as u64).product::<u64>() << atoms.len();
            self.spent = self.spent.saturating_add(combos);
            if self.spent > self.budget {
                return Err(Error::BudgetExceeded(self.budget));
            }
            let assignments = self.codes(w);
            for pattern in 0u64..1 << atoms.len() {
                let chosen_atoms: Vec<&(usize, Vec<usize>)> = atoms
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| pattern >> i & 1 == 1)
                    .map(|(_, a)| a)
                    .collect();
                let mut pick = vec![0usize; subs.len()];
                loop {
                    let rels: Vec<Option<Rel>> =
                        pick.iter().enumerate().map(|(i, &p)| choices[i][p]).collect();
                    let mut used = vec![false; w];
                    for (_, args) in &chosen_atoms {
                        for &a in args {
                            used[a] = true;
                        }
                    }
                    for (s, r) in subs.iter().zip(&rels) {
                        if r.is_some() {
                            for &v in s {
                                used[v] = true;
                            }
                        }
                    }
                    if used.iter().all(|&u| u) {
                        self.infer(w, &chosen_atoms, &subs, &rels, assignments, template, &sig, &mut rules, &mut found);
                    }
                    // odometer over relation choices
                    let mut i = 0;
                    while i < pick.len() {
                        pick[i] += 1;
                        if pick[i] < choices[i].len() {
                            break;
                        }
                        pick[i] = 0;
                        i += 1;
                    }
                    if i == pick.len() {
                        break;
                    }
                }
            }
        }
        Ok((rules, found))
    }

    #[allow(clippy::too_many_arguments)]
    fn infer(
        &self,
        w: usize,
        atoms: &[&(usize, Vec<usize>)],
        subs: &[Vec<usize>],
        rels: &[Option<Rel>],
        assignments: usize,
        template: &crate::structure::Structure,
        sig: &Signature,
        rules: &mut Vec<Rule>,
        found: &mut Vec<(usize, Rel)>,
    ) {
        let mut sol: Vec<Vec<usize>> = Vec::new();
        for mut code in 0..assignments {
            let mut a = vec![0usize; w];
            for slot in a.iter_mut().rev() {
                *slot = code % self.d;
                code /= self.d;
            }
            let ok_atoms = atoms.iter().all(|(s, args)| {
                let img: Vec<usize> = args.iter().map(|&v| a[v]).collect();
                template.holds(*s, &img)
            });
            let ok_rels = subs.iter().zip(rels).all(|(s, r)| match r {
                Some(r) => r >> self.code_of(s.iter().map(|&v| a[v])) & 1 == 1,
                None => true,
            });
            if ok_atoms && ok_rels {
                sol.push(a);
            }
        }
        let mut body: Vec<Atom> = atoms
            .iter()
            .map(|(s, args)| Atom {
                symbol: sig.name(*s).to_string(),
                args: args.iter().map(|&v| var(v)).collect(),
            })
            .collect();
        for (s, r) in subs.iter().zip(rels) {
            if let Some(r) = r {
                body.push(Atom {
                    symbol: idb_name(s.len(), *r, self.codes(s.len())),
                    args: s.iter().map(|&v| var(v)).collect(),
                });
            }
        }
        if sol.is_empty() {
            rules.push(Rule::new(Atom::new(FALSE, &[]), body));
            return;
        }
        for (s, r) in subs.iter().zip(rels) {
            let m = s.len();
            let proj: Rel = sol
                .iter()
                .fold(0, |acc, a| acc | 1 << self.code_of(s.iter().map(|&v| a[v])));
            let current = r.unwrap_or(self.full(m));
            if proj != current && proj & !current == 0 {
                rules.push(Rule::new(
                    Atom {
                        symbol: idb_name(m, proj, self.codes(m)),
                        args: s.iter().map(|&v| var(v)).collect(),
                    },
                    body.clone(),
                ));
                found.push((m, proj));
            }
        }
    }

    /// Adds intersections until the reachable sets are closed; returns whether anything was added.
    fn close_under_intersection(&mut self) -> bool {
        let mut grew = false;
        for m in 1..=self.l {
            loop {
                let current: Vec<Rel> = self.reachable[m].iter().copied().collect();
                let mut added = false;
                for (i, &a) in current.iter().enumerate() {
                    for &b in &current[i + 1..] {
                        let c = a & b;
                        if c != 0 && self.reachable[m].insert(c) {
                            added = true;
                        }
                    }
                }
                if !added {
                    break;
                }
                grew = true;
            }
        }
        grew
    }
}

/// The canonical (l,k)-Datalog program of a finite template, restricted to
/// the relations its own rules can reach.
pub fn materialize_canonical_program(
    t: &TemplateHandle,
    l: usize,
    k: usize,
    budget: u64,
) -> Result<DatalogProgram> {
    let template = t
        .as_finite()
        .ok_or_else(|| Error::Unsupported("canonical programs are materialized for finite templates only".into()))?;
    if l < 1 || l >= k {
        return Err(Error::Precondition(format!("need 1 <= l < k, got l={l}, k={k}")));
    }
    let d = template.size();
    if d.pow(l as u32) > 64 {
        return Err(Error::CapExceeded(format!("|D|^l = {} exceeds 64", d.pow(l as u32))));
    }
    let mut c = Closure {
        t,
        d,
        l,
        k,
        reachable: vec![BTreeSet::new(); l + 1],
        budget,
        spent: 0,
    };
    let rules = loop {
        let (rules, found) = c.pass()?;
        let mut grew = false;
        for (m, r) in found {
            grew |= c.reachable[m].insert(r);
        }
        grew |= c.close_under_intersection();
        if !grew {
            break rules;
        }
    };

    let mut idbs = Signature::default();
    for m in 1..=l {
        for &r in &c.reachable[m] {
            idbs.push(Symbol::new(idb_name(m, r, c.codes(m)), m))?;
        }
    }
    let mut all_rules = rules;
    for (s, sym) in t.signature().symbols().iter().enumerate() {
        if sym.arity == 0 && !template.holds(s, &[]) {
            all_rules.push(Rule::new(Atom::new(FALSE, &[]), vec![Atom::new(sym.name.clone(), &[])]));
        }
    }
    // intersections
    for m in 1..=l {
        let rels: Vec<Rel> = c.reachable[m].iter().copied().collect();
        let args: Vec<String> = (0..m).map(var).collect();
        let args_ref: Vec<&str> = args.iter().map(String::as_str).collect();
        for (i, &a) in rels.iter().enumerate() {
            for &b in &rels[i + 1..] {
                let x = a & b;
                if x == a || x == b {
                    continue;
                }
                let body = vec![
                    Atom::new(idb_name(m, a, c.codes(m)), &args_ref),
                    Atom::new(idb_name(m, b, c.codes(m)), &args_ref),
                ];
                let head = if x == 0 {
                    Atom::new(FALSE, &[])
                } else {
                    Atom::new(idb_name(m, x, c.codes(m)), &args_ref)
                };
                all_rules.push(Rule::new(head, body));
            }
        }
    }
    let mut seen = BTreeSet::new();
    all_rules.retain(|r| seen.insert(r.to_string()));
    DatalogProgram::new(t.signature().clone(), idbs, all_rules)
}
