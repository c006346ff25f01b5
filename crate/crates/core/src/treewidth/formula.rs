use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;

use super::{verify_decomposition, TreeDecomposition};
use crate::error::{Error, Result};
use crate::structure::Structure;

/// Existential-positive formula over the variable pool `x1..xk` (stored 0-based).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Formula {
    True,
    Atom { symbol: String, vars: Vec<usize> },
    And { conjuncts: Vec<Formula> },
    Exists { vars: Vec<usize>, body: Box<Formula> },
}

impl Formula {
    pub fn free_variables(&self) -> BTreeSet<usize> {
        match self {
            Formula::True => BTreeSet::new(),
            Formula::Atom { vars, .. } => vars.iter().copied().collect(),
            Formula::And { conjuncts } => conjuncts.iter().flat_map(|c| c.free_variables()).collect(),
            Formula::Exists { vars, body } => {
                let mut f = body.free_variables();
                for v in vars {
                    f.remove(v);
                }
                f
            }
        }
    }

    pub fn is_quantifier_free(&self) -> bool {
        match self {
            Formula::True | Formula::Atom { .. } => true,
            Formula::And { conjuncts } => conjuncts.iter().all(Formula::is_quantifier_free),
            Formula::Exists { .. } => false,
        }
    }

    fn variables(&self, out: &mut BTreeSet<usize>) {
        match self {
            Formula::True => {}
            Formula::Atom { vars, .. } => out.extend(vars.iter().copied()),
            Formula::And { conjuncts } => conjuncts.iter().for_each(|c| c.variables(out)),
            Formula::Exists { vars, body } => {
                out.extend(vars.iter().copied());
                body.variables(out);
            }
        }
    }

    fn l_bounded(&self, l: usize) -> bool {
        match self {
            Formula::True | Formula::Atom { .. } => true,
            Formula::And { conjuncts } => conjuncts
                .iter()
                .all(|c| (c.is_quantifier_free() || c.free_variables().len() <= l) && c.l_bounded(l)),
            Formula::Exists { body, .. } => body.l_bounded(l),
        }
    }
}

fn var_name(v: usize) -> String {
    format!("x{}", v + 1)
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::Atom { symbol, vars } => {
                let names: Vec<String> = vars.iter().map(|&v| var_name(v)).collect();
                write!(f, "{symbol}({})", names.join(","))
            }
            Formula::And { conjuncts } => {
                let parts: Vec<String> = conjuncts.iter().map(|c| c.to_string()).collect();
                write!(f, "({})", parts.join(" ∧ "))
            }
            Formula::Exists { vars, body } => {
                let names: Vec<String> = vars.iter().map(|&v| var_name(v)).collect();
                write!(f, "∃{}. {body}", names.join(","))
            }
        }
    }
}

/// A formula with its variable budget `k` and free-variable budget `l`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LkFormula {
    pub l: usize,
    pub k: usize,
    pub formula: Formula,
}

impl LkFormula {
    /// At most `k` variable names, and every conjunction is `l`-bounded.
    pub fn within_budget(&self) -> bool {
        let mut vars = BTreeSet::new();
        self.formula.variables(&mut vars);
        vars.len() <= self.k && vars.iter().all(|&v| v < self.k) && self.formula.l_bounded(self.l)
    }

    /// Indented rendering, one connective per line.
    pub fn to_text(&self) -> String {
        fn walk(f: &Formula, depth: usize, out: &mut String) {
            let pad = "  ".repeat(depth);
            match f {
                Formula::And { conjuncts } => {
                    out.push_str(&format!("{pad}and\n"));
                    for c in conjuncts {
                        walk(c, depth + 1, out);
                    }
                }
                Formula::Exists { vars, body } => {
                    let names: Vec<String> = vars.iter().map(|&v| var_name(v)).collect();
                    out.push_str(&format!("{pad}exists {}\n", names.join(",")));
                    walk(body, depth + 1, out);
                }
                other => out.push_str(&format!("{pad}{other}\n")),
            }
        }
        let mut out = String::new();
        walk(&self.formula, 0, &mut out);
        out
    }
}

impl fmt::Display for LkFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.formula)
    }
}

fn conjunction(mut parts: Vec<Formula>) -> Formula {
    match parts.len() {
        0 => Formula::True,
        1 => parts.pop().expect("one"),
        _ => Formula::And { conjuncts: parts },
    }
}

struct Builder<'a> {
    s: &'a Structure,
    d: &'a TreeDecomposition,
    /// facts assigned to the first bag (in storage order) holding them
    facts_at: Vec<Vec<(usize, Vec<usize>)>>,
}

impl Builder<'_> {
    fn build(&self, bag: usize, env: &HashMap<usize, usize>) -> Formula {
        let mut parts: Vec<Formula> = self.facts_at[bag]
            .iter()
            .map(|(sym, tuple)| Formula::Atom {
                symbol: self.s.signature().name(*sym).to_string(),
                vars: tuple.iter().map(|e| env[e]).collect(),
            })
            .collect();
        let here: BTreeSet<usize> = self.d.bags[bag].iter().copied().collect();
        for child in self.d.children(bag) {
            let mut child_env = HashMap::new();
            let mut used = BTreeSet::new();
            for &e in &self.d.bags[child] {
                if here.contains(&e) {
                    child_env.insert(e, env[&e]);
                    used.insert(env[&e]);
                }
            }
            let mut fresh = Vec::new();
            let mut next = 0;
            for &e in &self.d.bags[child] {
                if !here.contains(&e) {
                    while used.contains(&next) {
                        next += 1;
                    }
                    used.insert(next);
                    child_env.insert(e, next);
                    fresh.push(next);
                }
            }
            let body = self.build(child, &child_env);
            if fresh.is_empty() {
                parts.push(body);
            } else {
                fresh.sort_unstable();
                parts.push(Formula::Exists {
                    vars: fresh,
                    body: Box::new(body),
                });
            }
        }
        conjunction(parts)
    }
}

/// Canonical conjunctive query of `s` written along the decomposition `d`,
/// reusing the pool `x1..xk`.
pub fn canonical_query_lk(s: &Structure, d: &TreeDecomposition) -> Result<LkFormula> {
    if !verify_decomposition(d, s) {
        return Err(Error::Precondition("decomposition is not valid for the structure".into()));
    }
    let mut facts_at = vec![Vec::new(); d.bags.len()];
    let mut nullary = Vec::new();
    for (sym, tuple) in s.facts() {
        if tuple.is_empty() {
            nullary.push(Formula::Atom {
                symbol: s.signature().name(sym).to_string(),
                vars: Vec::new(),
            });
            continue;
        }
        let bag = (0..d.bags.len())
            .find(|&b| tuple.iter().all(|e| d.bags[b].contains(e)))
            .ok_or_else(|| Error::Precondition("a fact lies in no bag".into()))?;
        facts_at[bag].push((sym, tuple.clone()));
    }
    let formula = match d.root() {
        None => conjunction(nullary),
        Some(root) => {
            let env: HashMap<usize, usize> = d.bags[root].iter().enumerate().map(|(i, &e)| (e, i)).collect();
            let builder = Builder { s, d, facts_at };
            let body = builder.build(root, &env);
            let vars: Vec<usize> = (0..d.bags[root].len()).collect();
            let main = if vars.is_empty() {
                body
            } else {
                Formula::Exists {
                    vars,
                    body: Box::new(body),
                }
            };
            nullary.push(main);
            conjunction(nullary)
        }
    };
    Ok(LkFormula { l: d.l, k: d.k, formula })
}

fn eval(f: &Formula, b: &Structure, env: &mut Vec<Option<usize>>) -> bool {
    match f {
        Formula::True => true,
        Formula::Atom { symbol, vars } => {
            let Some(sym) = b.signature().index_of(symbol) else {
                return false;
            };
            if b.signature().arity(sym) != vars.len() {
                return false;
            }
            let tuple: Option<Vec<usize>> = vars.iter().map(|&v| env.get(v).copied().flatten()).collect();
            tuple.is_some_and(|t| b.holds(sym, &t))
        }
        Formula::And { conjuncts } => conjuncts.iter().all(|c| eval(c, b, env)),
        Formula::Exists { vars, body } => {
            let needed = vars.iter().copied().max().map_or(0, |m| m + 1);
            if env.len() < needed {
                env.resize(needed, None);
            }
            let saved: Vec<Option<usize>> = vars.iter().map(|&v| env[v]).collect();
            let found = exists(vars, 0, body, b, env);
            for (&v, old) in vars.iter().zip(saved) {
                env[v] = old;
            }
            found
        }
    }
}

fn exists(vars: &[usize], i: usize, body: &Formula, b: &Structure, env: &mut Vec<Option<usize>>) -> bool {
    if i == vars.len() {
        return eval(body, b, env);
    }
    for value in 0..b.size() {
        env[vars[i]] = Some(value);
        if exists(vars, i + 1, body, b, env) {
            return true;
        }
    }
    false
}

/// Tarskian evaluation of a sentence in `b`.
pub fn evaluate_formula(f: &LkFormula, b: &Structure) -> bool {
    let mut env = vec![None; f.k];
    eval(&f.formula, b, &mut env)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homomorphism::hom_exists;
    use crate::structure::Signature;
    use crate::treewidth::find_decomposition;

    #[test]
    fn path_query_reuses_variables() {
        let s = Structure::parse("rel edge 2\nedge a b\nedge b c").unwrap();
        let d = TreeDecomposition {
            l: 1,
            k: 2,
            bags: vec![vec![0, 1], vec![1, 2]],
            parent: vec![None, Some(0)],
        };
        let q = canonical_query_lk(&s, &d).unwrap();
        assert_eq!(q.to_string(), "∃x1,x2. (edge(x1,x2) ∧ ∃x1. edge(x2,x1))");
        assert!(q.within_budget());
        let two_cycle = Structure::parse("rel edge 2\nedge p q\nedge q p").unwrap();
        assert!(evaluate_formula(&q, &two_cycle));
        let one_edge = Structure::parse("rel edge 2\nedge p q").unwrap();
        assert!(!evaluate_formula(&q, &one_edge));
    }

    #[test]
    fn single_vertex_and_trivia() {
        let s = Structure::with_domain(Signature::of(&[("E", 2)]), &["a"]);
        let d = find_decomposition(&s, 1, 2).unwrap().unwrap();
        let q = canonical_query_lk(&s, &d).unwrap();
        assert_eq!(q.to_string(), "∃x1. true");
        let t = LkFormula {
            l: 1,
            k: 1,
            formula: Formula::True,
        };
        assert!(evaluate_formula(&t, &Structure::new(Signature::of(&[("E", 2)]))));
        let atom = LkFormula {
            l: 1,
            k: 2,
            formula: Formula::Exists {
                vars: vec![0, 1],
                body: Box::new(Formula::Atom {
                    symbol: "E".into(),
                    vars: vec![0, 1],
                }),
            },
        };
        assert!(!evaluate_formula(&atom, &Structure::from_edges("E", 3, &[])));
    }

    #[test]
    fn budget_violations_detected() {
        let wide = LkFormula {
            l: 1,
            k: 3,
            formula: Formula::Exists {
                vars: vec![0],
                body: Box::new(Formula::And {
                    conjuncts: vec![
                        Formula::Atom { symbol: "E".into(), vars: vec![0, 1] },
                        Formula::Exists {
                            vars: vec![2],
                            body: Box::new(Formula::Atom { symbol: "E".into(), vars: vec![0, 1] }),
                        },
                    ],
                }),
            },
        };
        assert!(!wide.within_budget());
    }

    #[test]
    fn query_matches_homomorphism_on_small_cases() {
        let s = Structure::undirected("E", 4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        let d = find_decomposition(&s, 2, 3).unwrap().unwrap();
        let q = canonical_query_lk(&s, &d).unwrap();
        assert!(q.within_budget());
        for b in [Structure::clique("E", 2), Structure::clique("E", 3), Structure::directed_cycle("E", 3)] {
            assert_eq!(evaluate_formula(&q, &b), hom_exists(&s, &b).unwrap());
        }
    }
}
