//! Relational signatures and finite structures.
//!
//! A [`Structure`] stores its domain in declaration order and every relation
//! as a sorted set of index tuples, so all enumerations over it are
//! deterministic.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A tuple of element indices.
pub type Tuple = Vec<usize>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Symbol {
    pub name: String,
    pub arity: usize,
}

impl Symbol {
    pub fn new(name: impl Into<String>, arity: usize) -> Self {
        Symbol {
            name: name.into(),
            arity,
        }
    }
}

/// An ordered list of relation symbols with unique names.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signature {
    symbols: Vec<Symbol>,
}

impl Signature {
    pub fn new(symbols: Vec<Symbol>) -> Result<Self> {
        let mut sig = Signature::default();
        for s in symbols {
            sig.push(s)?;
        }
        Ok(sig)
    }

    /// Shorthand for tests and built-in templates; panics on duplicate names.
    pub fn of(symbols: &[(&str, usize)]) -> Self {
        Signature::new(symbols.iter().map(|(n, a)| Symbol::new(*n, *a)).collect())
            .expect("duplicate symbol in signature literal")
    }

    pub fn push(&mut self, symbol: Symbol) -> Result<usize> {
        if self.index_of(&symbol.name).is_some() {
            return Err(Error::SignatureMismatch(format!(
                "symbol `{}` declared twice",
                symbol.name
            )));
        }
        self.symbols.push(symbol);
        Ok(self.symbols.len() - 1)
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s.name == name)
    }

    pub fn arity(&self, index: usize) -> usize {
        self.symbols[index].arity
    }

    pub fn name(&self, index: usize) -> &str {
        &self.symbols[index].name
    }

    pub fn max_arity(&self) -> usize {
        self.symbols.iter().map(|s| s.arity).max().unwrap_or(0)
    }
}

/// A finite relational structure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Structure {
    signature: Signature,
    domain: Vec<String>,
    index: HashMap<String, usize>,
    relations: Vec<BTreeSet<Tuple>>,
}

impl Structure {
    pub fn new(signature: Signature) -> Self {
        let relations = vec![BTreeSet::new(); signature.len()];
        Structure {
            signature,
            domain: Vec::new(),
            index: HashMap::new(),
            relations,
        }
    }

    pub fn with_domain<S: AsRef<str>>(signature: Signature, domain: &[S]) -> Self {
        let mut s = Structure::new(signature);
        for e in domain {
            s.add_element(e.as_ref());
        }
        s
    }

    /// Digraph-style structure over one binary symbol with elements `v0..v{n-1}`.
    pub fn from_edges(symbol: &str, n: usize, edges: &[(usize, usize)]) -> Self {
        let mut s = Structure::new(Signature::of(&[(symbol, 2)]));
        for i in 0..n {
            s.add_element(&format!("v{i}"));
        }
        for &(a, b) in edges {
            s.insert(0, vec![a, b]);
        }
        s
    }

    /// Like [`Structure::from_edges`] but every edge is stored in both directions.
    pub fn undirected(symbol: &str, n: usize, edges: &[(usize, usize)]) -> Self {
        let mut s = Structure::from_edges(symbol, n, edges);
        for &(a, b) in edges {
            s.insert(0, vec![b, a]);
        }
        s
    }

    pub fn clique(symbol: &str, n: usize) -> Self {
        let edges: Vec<_> = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
        Structure::from_edges(symbol, n, &edges)
    }

    pub fn directed_cycle(symbol: &str, n: usize) -> Self {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Structure::from_edges(symbol, n, &edges)
    }

    /// Directed path with `len` edges (so `len + 1` elements).
    pub fn directed_path(symbol: &str, len: usize) -> Self {
        let edges: Vec<_> = (0..len).map(|i| (i, i + 1)).collect();
        Structure::from_edges(symbol, len + 1, &edges)
    }

    pub fn signature(&self) -> &Signature {
        &self.signature
    }

    pub fn size(&self) -> usize {
        self.domain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domain.is_empty()
    }

    pub fn domain(&self) -> &[String] {
        &self.domain
    }

    pub fn element(&self, i: usize) -> &str {
        &self.domain[i]
    }

    pub fn element_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Adds an element if absent and returns its index.
    pub fn add_element(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        self.domain.push(name.to_string());
        self.index.insert(name.to_string(), self.domain.len() - 1);
        self.domain.len() - 1
    }

    /// Adds a fact by symbol and element names, creating missing elements.
    pub fn add_fact(&mut self, symbol: &str, elements: &[&str]) -> Result<()> {
        let sym = self
            .signature
            .index_of(symbol)
            .ok_or_else(|| Error::UndeclaredSymbol {
                line: 0,
                symbol: symbol.to_string(),
            })?;
        let arity = self.signature.arity(sym);
        if arity != elements.len() {
            return Err(Error::ArityMismatch {
                line: 0,
                symbol: symbol.to_string(),
                expected: arity,
                found: elements.len(),
            });
        }
        let tuple = elements.iter().map(|e| self.add_element(e)).collect();
        self.relations[sym].insert(tuple);
        Ok(())
    }

    /// Inserts a tuple of existing element indices. Returns whether it was new.
    ///
    /// Panics if the arity or an index is out of range.
    pub fn insert(&mut self, symbol: usize, tuple: Tuple) -> bool {
        assert_eq!(tuple.len(), self.signature.arity(symbol), "arity mismatch");
        assert!(tuple.iter().all(|&e| e < self.domain.len()), "unknown element");
        self.relations[symbol].insert(tuple)
    }

    pub fn relation(&self, symbol: usize) -> &BTreeSet<Tuple> {
        &self.relations[symbol]
    }

    pub fn relation_named(&self, name: &str) -> Option<&BTreeSet<Tuple>> {
        self.signature.index_of(name).map(|i| &self.relations[i])
    }

    pub fn holds(&self, symbol: usize, tuple: &[usize]) -> bool {
        self.relations[symbol].contains(tuple)
    }

    /// All facts as `(symbol index, tuple)`, symbols in signature order.
    pub fn facts(&self) -> impl Iterator<Item = (usize, &Tuple)> {
        self.relations
            .iter()
            .enumerate()
            .flat_map(|(s, rel)| rel.iter().map(move |t| (s, t)))
    }

    pub fn fact_count(&self) -> usize {
        self.relations.iter().map(BTreeSet::len).sum()
    }

    /// Substructure induced on `elements` (kept in the given order).
    pub fn induced(&self, elements: &[usize]) -> Structure {
        let mut pos = vec![None; self.size()];
        let mut out = Structure::new(self.signature.clone());
        for &e in elements {
            pos[e] = Some(out.add_element(&self.domain[e]));
        }
        for (s, t) in self.facts() {
            if let Some(mapped) = t.iter().map(|&e| pos[e]).collect::<Option<Vec<_>>>() {
                out.relations[s].insert(mapped);
            }
        }
        out
    }

    /// Renames a relation symbol, keeping its position and facts.
    pub fn rename_symbol(&self, from: &str, to: &str) -> Result<Structure> {
        let i = self
            .signature
            .index_of(from)
            .ok_or_else(|| Error::SignatureMismatch(format!("no symbol `{from}`")))?;
        let mut out = self.clone();
        let mut syms = out.signature.symbols.clone();
        syms[i].name = to.to_string();
        out.signature = Signature::new(syms)?;
        Ok(out)
    }

    /// Same elements and facts, read against a (superset) signature by name.
    pub fn expand_to(&self, signature: &Signature) -> Result<Structure> {
        let mut out = Structure::with_domain(signature.clone(), &self.domain);
        for (s, t) in self.facts() {
            let name = self.signature.name(s);
            let j = signature.index_of(name).ok_or_else(|| {
                Error::SignatureMismatch(format!("symbol `{name}` missing from target signature"))
            })?;
            if signature.arity(j) != self.signature.arity(s) {
                return Err(Error::SignatureMismatch(format!("arity of `{name}` differs")));
            }
            out.relations[j].insert(t.clone());
        }
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Structure> {
        let mut s = Structure::new(Signature::default());
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = content.split_whitespace().collect();
            match tokens[0] {
                "rel" => {
                    if tokens.len() != 3 {
                        return Err(Error::Syntax {
                            line,
                            message: "expected `rel NAME ARITY`".into(),
                        });
                    }
                    let arity: usize = tokens[2].parse().map_err(|_| Error::Syntax {
                        line,
                        message: format!("invalid arity `{}`", tokens[2]),
                    })?;
                    s.signature
                        .push(Symbol::new(tokens[1], arity))
                        .map_err(|_| Error::Syntax {
                            line,
                            message: format!("relation `{}` declared twice", tokens[1]),
                        })?;
                    s.relations.push(BTreeSet::new());
                }
                "domain" => {
                    for e in &tokens[1..] {
                        s.add_element(e);
                    }
                }
                name => {
                    let sym = s.signature.index_of(name).ok_or_else(|| Error::UndeclaredSymbol {
                        line,
                        symbol: name.to_string(),
                    })?;
                    let arity = s.signature.arity(sym);
                    if tokens.len() - 1 != arity {
                        return Err(Error::ArityMismatch {
                            line,
                            symbol: name.to_string(),
                            expected: arity,
                            found: tokens.len() - 1,
                        });
                    }
                    let tuple = tokens[1..].iter().map(|e| s.add_element(e)).collect();
                    s.relations[sym].insert(tuple);
                }
            }
        }
        Ok(s)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for sym in self.signature.symbols() {
            out.push_str(&format!("rel {} {}\n", sym.name, sym.arity));
        }
        if !self.domain.is_empty() {
            out.push_str("domain");
            for e in &self.domain {
                out.push(' ');
                out.push_str(e);
            }
            out.push('\n');
        }
        for (s, t) in self.facts() {
            out.push_str(self.signature.name(s));
            for &e in t {
                out.push(' ');
                out.push_str(&self.domain[e]);
            }
            out.push('\n');
        }
        out
    }
}

impl FromStr for Structure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Structure::parse(s)
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Disjoint union; elements of `a` are tagged `#1`, those of `b` `#2`.
pub fn disjoint_union(a: &Structure, b: &Structure) -> Result<Structure> {
    if a.signature != b.signature {
        return Err(Error::SignatureMismatch(
            "disjoint union needs identical signatures".into(),
        ));
    }
    let mut out = Structure::new(a.signature.clone());
    for e in a.domain() {
        out.add_element(&format!("{e}#1"));
    }
    let offset = a.size();
    for e in b.domain() {
        out.add_element(&format!("{e}#2"));
    }
    for (s, t) in a.facts() {
        out.relations[s].insert(t.clone());
    }
    for (s, t) in b.facts() {
        out.relations[s].insert(t.iter().map(|&e| e + offset).collect());
    }
    Ok(out)
}

/// Gaifman graph as a symmetric loop-free structure over one binary symbol `E`.
pub fn gaifman_graph(s: &Structure) -> Structure {
    let mut g = Structure::with_domain(Signature::of(&[("E", 2)]), s.domain());
    for adj in gaifman_adjacency(s).iter().enumerate() {
        for &j in adj.1 {
            g.relations[0].insert(vec![adj.0, j]);
        }
    }
    g
}

/// Gaifman neighbourhoods by element index.
pub fn gaifman_adjacency(s: &Structure) -> Vec<BTreeSet<usize>> {
    let mut adj = vec![BTreeSet::new(); s.size()];
    for (_, t) in s.facts() {
        for &a in t {
            for &b in t {
                if a != b {
                    adj[a].insert(b);
                }
            }
        }
    }
    adj
}

/// Whether the Gaifman graph is connected (the empty structure counts as connected).
pub fn is_connected(s: &Structure) -> bool {
    if s.size() <= 1 {
        return true;
    }
    let adj = gaifman_adjacency(s);
    let mut seen = vec![false; s.size()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen.into_iter().all(|b| b)
}

/// A conjunctive query: existentially quantified variables, atoms, and free variables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedQuery {
    pub variables: Vec<String>,
    pub atoms: Vec<(String, Vec<String>)>,
    pub free: Vec<String>,
}

impl TaggedQuery {
    /// Truth of the sentence (free variables are treated as existential) by
    /// enumerating every assignment of variables into `b`.
    pub fn holds_in(&self, b: &Structure) -> bool {
        let atoms: Option<Vec<(usize, Vec<usize>)>> = self
            .atoms
            .iter()
            .map(|(sym, args)| {
                let s = b.signature().index_of(sym)?;
                let vars = args
                    .iter()
                    .map(|a| self.variables.iter().position(|v| v == a))
                    .collect::<Option<Vec<_>>>()?;
                Some((s, vars))
            })
            .collect();
        let Some(atoms) = atoms else {
            return false;
        };
        let n = self.variables.len();
        if n > 0 && b.is_empty() {
            return false;
        }
        let mut assignment = vec![0usize; n];
        loop {
            let ok = atoms.iter().all(|(s, vars)| {
                let t: Vec<usize> = vars.iter().map(|&v| assignment[v]).collect();
                b.holds(*s, &t)
            });
            if ok {
                return true;
            }
            // odometer step
            let mut i = 0;
            loop {
                if i == n {
                    return false;
                }
                assignment[i] += 1;
                if assignment[i] < b.size() {
                    break;
                }
                assignment[i] = 0;
                i += 1;
            }
        }
    }
}

impl fmt::Display for TaggedQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bound: Vec<&String> = self
            .variables
            .iter()
            .filter(|v| !self.free.contains(v))
            .collect();
        if !bound.is_empty() {
            write!(f, "∃")?;
            for (i, v) in bound.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{v}")?;
            }
            write!(f, ". ")?;
        }
        if self.atoms.is_empty() {
            return write!(f, "true");
        }
        for (i, (sym, args)) in self.atoms.iter().enumerate() {
            if i > 0 {
                write!(f, " ∧ ")?;
            }
            write!(f, "{sym}({})", args.join(","))?;
        }
        Ok(())
    }
}

/// The canonical conjunctive query: one variable `v_<element>` per element, one atom per fact.
pub fn canonical_query(s: &Structure) -> TaggedQuery {
    let var = |e: usize| format!("v_{}", s.element(e));
    TaggedQuery {
        variables: (0..s.size()).map(var).collect(),
        atoms: s
            .facts()
            .map(|(sym, t)| {
                (
                    s.signature().name(sym).to_string(),
                    t.iter().map(|&e| var(e)).collect(),
                )
            })
            .collect(),
        free: Vec::new(),
    }
}
